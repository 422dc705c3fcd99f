//! Six-operation edit scripts over use cases.
//!
//! A [`ChangeList`] is an ordered list of [`EditOp`]s. [`apply`] interprets
//! it against a use case, [`diff`] recovers one from a pair of use cases and
//! [`serialize_change_list`] renders the line form that similarity metrics
//! are computed over.
//!
//! Flow indices always refer to the flow as it exists when the operation
//! runs, so a list is applied strictly left to right without a shadow copy.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::usecase::{Field, UseCase, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    InsertPre { text: String },
    RemovePre { text: String },
    InsertFlow { at_index: usize, text: String },
    RemoveFlow { at_index: usize },
    InsertPost { text: String },
    RemovePost { text: String },
}

impl EditOp {
    pub fn insert_pre(text: impl Into<String>) -> Self {
        EditOp::InsertPre { text: text.into() }
    }

    pub fn remove_pre(text: impl Into<String>) -> Self {
        EditOp::RemovePre { text: text.into() }
    }

    pub fn insert_flow(at_index: usize, text: impl Into<String>) -> Self {
        EditOp::InsertFlow {
            at_index,
            text: text.into(),
        }
    }

    pub fn remove_flow(at_index: usize) -> Self {
        EditOp::RemoveFlow { at_index }
    }

    pub fn insert_post(text: impl Into<String>) -> Self {
        EditOp::InsertPost { text: text.into() }
    }

    pub fn remove_post(text: impl Into<String>) -> Self {
        EditOp::RemovePost { text: text.into() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EditOp::InsertPre { .. } => "insert_pre",
            EditOp::RemovePre { .. } => "remove_pre",
            EditOp::InsertFlow { .. } => "insert_flow",
            EditOp::RemoveFlow { .. } => "remove_flow",
            EditOp::InsertPost { .. } => "insert_post",
            EditOp::RemovePost { .. } => "remove_post",
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            EditOp::InsertPre { text }
            | EditOp::RemovePre { text }
            | EditOp::InsertFlow { text, .. }
            | EditOp::InsertPost { text }
            | EditOp::RemovePost { text } => Some(text),
            EditOp::RemoveFlow { .. } => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            EditOp::InsertFlow { at_index, .. } | EditOp::RemoveFlow { at_index } => Some(*at_index),
            _ => None,
        }
    }

    /// Position in the canonical class order.
    fn class(&self) -> u8 {
        match self {
            EditOp::RemovePre { .. } => 0,
            EditOp::InsertPre { .. } => 1,
            EditOp::RemoveFlow { .. } => 2,
            EditOp::InsertFlow { .. } => 3,
            EditOp::RemovePost { .. } => 4,
            EditOp::InsertPost { .. } => 5,
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.class().cmp(&other.class()).then_with(|| match (self, other) {
            (EditOp::RemoveFlow { at_index: a }, EditOp::RemoveFlow { at_index: b }) => b.cmp(a),
            (
                EditOp::InsertFlow { at_index: a, text: x },
                EditOp::InsertFlow { at_index: b, text: y },
            ) => a.cmp(b).then_with(|| x.cmp(y)),
            _ => self.text().cmp(&other.text()),
        })
    }

    /// Single-line rendering: `<op_name> <at_index?> <text>`.
    pub fn to_line(&self) -> String {
        let mut line = self.name().to_string();
        if let Some(i) = self.index() {
            line.push(' ');
            line.push_str(&i.to_string());
        }
        if let Some(t) = self.text() {
            line.push(' ');
            line.extend(t.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }));
        }
        line
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeList {
    pub ops: Vec<EditOp>,
}

impl ChangeList {
    pub fn new(ops: Vec<EditOp>) -> Self {
        Self { ops }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EditOp> {
        self.ops.iter()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("edit ops always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl FromIterator<EditOp> for ChangeList {
    fn from_iter<T: IntoIterator<Item = EditOp>>(iter: T) -> Self {
        Self {
            ops: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a ChangeList {
    type Item = &'a EditOp;
    type IntoIter = std::slice::Iter<'a, EditOp>;

    fn into_iter(self) -> Self::IntoIter {
        self.ops.iter()
    }
}

/// Why an edit script could not be applied. `position` is the 0-based
/// offset of the failing op within the list.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApplyError {
    #[error("op #{position} `{op}`: index out of range for flow of length {len}")]
    IndexOutOfRange { position: usize, op: EditOp, len: usize },
    #[error("op #{position} `{op}`: condition not present")]
    MissingCondition { position: usize, op: EditOp },
    #[error("op #{position} `{op}`: condition already present")]
    DuplicateCondition { position: usize, op: EditOp },
    #[error("op #{position} `{op}`: empty text")]
    EmptyText { position: usize, op: EditOp },
    #[error("edited use case is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    InvalidResult(Vec<Violation>),
}

impl ApplyError {
    /// The op that caused the failure, if a single op is to blame.
    pub fn op(&self) -> Option<&EditOp> {
        match self {
            ApplyError::IndexOutOfRange { op, .. }
            | ApplyError::MissingCondition { op, .. }
            | ApplyError::DuplicateCondition { op, .. }
            | ApplyError::EmptyText { op, .. } => Some(op),
            ApplyError::InvalidResult(_) => None,
        }
    }
}

fn insert_condition(list: &mut Vec<String>, text: &str) -> Result<(), bool> {
    if list.iter().any(|c| c == text) {
        return Err(true);
    }
    list.push(text.to_string());
    Ok(())
}

fn remove_condition(list: &mut Vec<String>, text: &str) -> Result<(), bool> {
    match list.iter().position(|c| c == text) {
        Some(i) => {
            list.remove(i);
            Ok(())
        }
        None => Err(false),
    }
}

/// Applies `cl` to `uc` in list order and validates the result.
pub fn apply(cl: &ChangeList, uc: &UseCase) -> Result<UseCase, ApplyError> {
    let mut out = uc.clone();
    for (position, op) in cl.ops.iter().enumerate() {
        if op.text().is_some_and(|t| t.trim().is_empty()) {
            return Err(ApplyError::EmptyText {
                position,
                op: op.clone(),
            });
        }
        let condition_result = match op {
            EditOp::InsertPre { text } => {
                Some(insert_condition(out.list_mut(Field::Preconditions), text.trim()))
            }
            EditOp::RemovePre { text } => {
                Some(remove_condition(out.list_mut(Field::Preconditions), text.trim()))
            }
            EditOp::InsertPost { text } => {
                Some(insert_condition(out.list_mut(Field::Postconditions), text.trim()))
            }
            EditOp::RemovePost { text } => {
                Some(remove_condition(out.list_mut(Field::Postconditions), text.trim()))
            }
            EditOp::InsertFlow { at_index, text } => {
                let flow = out.list_mut(Field::Flow);
                if *at_index > flow.len() {
                    return Err(ApplyError::IndexOutOfRange {
                        position,
                        op: op.clone(),
                        len: flow.len(),
                    });
                }
                flow.insert(*at_index, text.trim().to_string());
                None
            }
            EditOp::RemoveFlow { at_index } => {
                let flow = out.list_mut(Field::Flow);
                if *at_index >= flow.len() {
                    return Err(ApplyError::IndexOutOfRange {
                        position,
                        op: op.clone(),
                        len: flow.len(),
                    });
                }
                flow.remove(*at_index);
                None
            }
        };
        match condition_result {
            Some(Err(true)) => {
                return Err(ApplyError::DuplicateCondition {
                    position,
                    op: op.clone(),
                })
            }
            Some(Err(false)) => {
                return Err(ApplyError::MissingCondition {
                    position,
                    op: op.clone(),
                })
            }
            _ => {}
        }
    }
    out.checked().map_err(|e| match e {
        crate::usecase::UseCaseError::Invalid(v) => ApplyError::InvalidResult(v),
        other => unreachable!("validation only yields Invalid, got {other:?}"),
    })
}

/// Index pairs `(i, j)` of one maximal common subsequence of `a` and `b`.
///
/// Ties are broken toward the earliest-starting alignment: a match at the
/// current position of `a` is taken whenever it is part of some maximal
/// subsequence, and otherwise `b` is advanced before `a`.
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = LCS length of a[i..], b[j..]
    let width = m + 1;
    let mut suffix = vec![0usize; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(suffix[0]);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        let here = suffix[i * width + j];
        if a[i] == b[j] && here == suffix[(i + 1) * width + j + 1] + 1 {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if suffix[i * width + j + 1] == here {
            j += 1;
        } else {
            i += 1;
        }
    }
    pairs
}

/// Length of a longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn diff_conditions(
    from: &[String],
    to: &[String],
    remove: fn(String) -> EditOp,
    insert: fn(String) -> EditOp,
    out: &mut Vec<EditOp>,
) {
    let from_set: HashSet<&str> = from.iter().map(String::as_str).collect();
    let to_set: HashSet<&str> = to.iter().map(String::as_str).collect();
    out.extend(
        from.iter()
            .filter(|c| !to_set.contains(c.as_str()))
            .map(|c| remove(c.clone())),
    );
    out.extend(
        to.iter()
            .filter(|c| !from_set.contains(c.as_str()))
            .map(|c| insert(c.clone())),
    );
}

/// Recovers a change list turning `original` into `modified`.
///
/// Conditions are compared as sets (removals, then insertions). The flow is
/// aligned with [`lcs_alignment`]; unmatched original steps are removed in
/// descending index order, then unmatched target steps are inserted in
/// ascending target order.
pub fn diff(original: &UseCase, modified: &UseCase) -> ChangeList {
    let mut ops = Vec::new();
    diff_conditions(
        original.preconditions(),
        modified.preconditions(),
        EditOp::remove_pre,
        EditOp::insert_pre,
        &mut ops,
    );

    let from = original.flow();
    let to = modified.flow();
    let pairs = lcs_alignment(from, to);
    let kept_from: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
    let kept_to: HashSet<usize> = pairs.iter().map(|p| p.1).collect();
    ops.extend(
        (0..from.len())
            .rev()
            .filter(|i| !kept_from.contains(i))
            .map(EditOp::remove_flow),
    );
    ops.extend(
        (0..to.len())
            .filter(|j| !kept_to.contains(j))
            .map(|j| EditOp::insert_flow(j, to[j].clone())),
    );

    diff_conditions(
        original.postconditions(),
        modified.postconditions(),
        EditOp::remove_post,
        EditOp::insert_post,
        &mut ops,
    );
    ChangeList { ops }
}

/// Sorts ops into canonical class order: remove_pre, insert_pre, flow
/// removals by descending index, flow insertions by ascending index,
/// remove_post, insert_post. Ties break lexicographically on text.
pub fn canonicalize(cl: &ChangeList) -> ChangeList {
    let mut ops = cl.ops.clone();
    ops.sort_by(EditOp::canonical_cmp);
    ChangeList { ops }
}

/// One line per op, in canonical order, joined by `\n`.
pub fn serialize_change_list(cl: &ChangeList) -> String {
    canonicalize(cl)
        .ops
        .iter()
        .map(EditOp::to_line)
        .collect::<Vec<_>>()
        .join("\n")
}
