//! Use cases, user stories, app descriptions and legal provisions.
//!
//! A [`UseCase`] is the unit every pipeline stage works on: preconditions,
//! a flow of events and postconditions. The JSON document form is
//!
//! ```json
//! {"preconditions": ["..."], "flow": ["..."], "postconditions": ["..."]}
//! ```
//!
//! with optional `"title"` and `"id"` keys. Strings are trimmed at parse
//! time. Pre- and postconditions are conjunctive, so equality between use
//! cases treats them as sets while the flow is compared as a sequence.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// The three list-valued fields of a use case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Preconditions,
    Flow,
    Postconditions,
}

impl Field {
    pub fn key(self) -> &'static str {
        match self {
            Field::Preconditions => "preconditions",
            Field::Flow => "flow",
            Field::Postconditions => "postconditions",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    FlowEmpty,
    EmptyString,
    DuplicateCondition,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::FlowEmpty => "flow-empty",
            Rule::EmptyString => "empty-string",
            Rule::DuplicateCondition => "duplicate-condition",
        }
    }
}

/// One broken invariant, naming the field, the rule and (when it applies)
/// the offending position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: Field,
    pub rule: Rule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.rule.name()),
            None => write!(f, "{}: {}", self.field, self.rule.name()),
        }
    }
}

fn describe(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UseCaseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("wrong value shape at `{key}`: expected {expected}")]
    WrongShape { key: String, expected: &'static str },
    #[error("invalid use case: {}", describe(.0))]
    Invalid(Vec<Violation>),
}

/// Preconditions, flow of events and postconditions.
///
/// Instances returned by [`parse_use_case`] and [`UseCaseBuilder::build`]
/// always satisfy [`validate`]. Fields are read-only after construction.
#[derive(Debug, Clone, Eq)]
pub struct UseCase {
    id: String,
    title: Option<String>,
    preconditions: Vec<String>,
    flow: Vec<String>,
    postconditions: Vec<String>,
}

impl UseCase {
    pub fn builder() -> UseCaseBuilder {
        UseCaseBuilder::default()
    }

    /// Builds and validates a use case from its three lists.
    pub fn new(
        id: impl Into<String>,
        preconditions: impl IntoIterator<Item = impl Into<String>>,
        flow: impl IntoIterator<Item = impl Into<String>>,
        postconditions: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, UseCaseError> {
        let uc = Self::from_parts_unchecked(
            id,
            None,
            preconditions.into_iter().map(Into::into).collect(),
            flow.into_iter().map(Into::into).collect(),
            postconditions.into_iter().map(Into::into).collect(),
        );
        uc.checked()
    }

    /// Assembles a use case without running validation. Strings are still
    /// trimmed. Useful for inspecting broken input with [`validate`].
    pub fn from_parts_unchecked(
        id: impl Into<String>,
        title: Option<String>,
        preconditions: Vec<String>,
        flow: Vec<String>,
        postconditions: Vec<String>,
    ) -> Self {
        let trim = |v: Vec<String>| v.into_iter().map(|s| s.trim().to_string()).collect();
        Self {
            id: id.into().trim().to_string(),
            title: title.map(|t| t.trim().to_string()),
            preconditions: trim(preconditions),
            flow: trim(flow),
            postconditions: trim(postconditions),
        }
    }

    pub(crate) fn checked(self) -> Result<Self, UseCaseError> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(UseCaseError::Invalid(violations))
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> Option<&str> {
        self.title.as_deref()
    }

    pub fn preconditions(&self) -> &[String] {
        &self.preconditions
    }

    pub fn flow(&self) -> &[String] {
        &self.flow
    }

    pub fn postconditions(&self) -> &[String] {
        &self.postconditions
    }

    pub fn list(&self, field: Field) -> &[String] {
        match field {
            Field::Preconditions => &self.preconditions,
            Field::Flow => &self.flow,
            Field::Postconditions => &self.postconditions,
        }
    }

    pub(crate) fn list_mut(&mut self, field: Field) -> &mut Vec<String> {
        match field {
            Field::Preconditions => &mut self.preconditions,
            Field::Flow => &mut self.flow,
            Field::Postconditions => &mut self.postconditions,
        }
    }

    /// Returns a copy carrying a different identifier.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into().trim().to_string();
        self
    }

    pub fn with_title(mut self, title: Option<String>) -> Self {
        self.title = title.map(|t| t.trim().to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serialize_use_case(self)
    }
}

fn as_set(v: &[String]) -> BTreeSet<&str> {
    v.iter().map(String::as_str).collect()
}

impl PartialEq for UseCase {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.title == other.title
            && self.flow == other.flow
            && self.preconditions.len() == other.preconditions.len()
            && self.postconditions.len() == other.postconditions.len()
            && as_set(&self.preconditions) == as_set(&other.preconditions)
            && as_set(&self.postconditions) == as_set(&other.postconditions)
    }
}

/// Incremental construction in any order; the result is the same regardless
/// of which list was filled first.
#[derive(Debug, Default, Clone)]
pub struct UseCaseBuilder {
    id: String,
    title: Option<String>,
    preconditions: Vec<String>,
    flow: Vec<String>,
    postconditions: Vec<String>,
}

impl UseCaseBuilder {
    pub fn id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn precondition(mut self, c: impl Into<String>) -> Self {
        self.preconditions.push(c.into());
        self
    }

    pub fn step(mut self, s: impl Into<String>) -> Self {
        self.flow.push(s.into());
        self
    }

    pub fn postcondition(mut self, c: impl Into<String>) -> Self {
        self.postconditions.push(c.into());
        self
    }

    pub fn build(self) -> Result<UseCase, UseCaseError> {
        self.build_unchecked().checked()
    }

    pub fn build_unchecked(self) -> UseCase {
        UseCase::from_parts_unchecked(
            self.id,
            self.title,
            self.preconditions,
            self.flow,
            self.postconditions,
        )
    }
}

/// Lists every broken invariant; empty iff the use case is valid.
pub fn validate(uc: &UseCase) -> Vec<Violation> {
    let mut out = Vec::new();
    if uc.flow.is_empty() {
        out.push(Violation {
            field: Field::Flow,
            rule: Rule::FlowEmpty,
            index: None,
        });
    }
    for field in [Field::Preconditions, Field::Flow, Field::Postconditions] {
        let list = uc.list(field);
        let mut seen = HashSet::new();
        for (i, s) in list.iter().enumerate() {
            let t = s.trim();
            if t.is_empty() {
                out.push(Violation {
                    field,
                    rule: Rule::EmptyString,
                    index: Some(i),
                });
            } else if field != Field::Flow && !seen.insert(t) {
                out.push(Violation {
                    field,
                    rule: Rule::DuplicateCondition,
                    index: Some(i),
                });
            }
        }
    }
    out
}

fn string_list(obj: &Map<String, Value>, field: Field) -> Result<Vec<String>, UseCaseError> {
    let key = field.key();
    let value = obj.get(key).ok_or(UseCaseError::MissingKey(key))?;
    let items = value.as_array().ok_or_else(|| UseCaseError::WrongShape {
        key: key.to_string(),
        expected: "a list of strings",
    })?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(|s| s.trim().to_string())
                .ok_or_else(|| UseCaseError::WrongShape {
                    key: format!("{key}[{i}]"),
                    expected: "a string",
                })
        })
        .collect()
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, UseCaseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(_) => Err(UseCaseError::WrongShape {
            key: key.to_string(),
            expected: "a string",
        }),
    }
}

/// Builds a validated use case from an already-decoded JSON value.
pub fn use_case_from_value(value: &Value) -> Result<UseCase, UseCaseError> {
    let obj = value.as_object().ok_or_else(|| UseCaseError::WrongShape {
        key: "<root>".to_string(),
        expected: "a JSON object",
    })?;
    let preconditions = string_list(obj, Field::Preconditions)?;
    let flow = string_list(obj, Field::Flow)?;
    let postconditions = string_list(obj, Field::Postconditions)?;
    let title = optional_string(obj, "title")?;
    let id = optional_string(obj, "id")?.unwrap_or_default();
    UseCase::from_parts_unchecked(id, title, preconditions, flow, postconditions).checked()
}

/// Parses and validates one use case document. List order is preserved.
pub fn parse_use_case(json_text: &str) -> Result<UseCase, UseCaseError> {
    let value: Value =
        serde_json::from_str(json_text).map_err(|e| UseCaseError::MalformedJson(e.to_string()))?;
    use_case_from_value(&value)
}

/// Parses a JSONL stream, one use case per non-blank line.
pub fn parse_use_cases_jsonl(text: &str) -> Result<Vec<UseCase>, (usize, UseCaseError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_use_case(l).map_err(|e| (n + 1, e)))
        .collect()
}

#[derive(Serialize)]
struct CanonicalUseCase<'a> {
    preconditions: &'a [String],
    flow: &'a [String],
    postconditions: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    title: Option<&'a str>,
    #[serde(skip_serializing_if = "str::is_empty")]
    id: &'a str,
}

impl<'a> From<&'a UseCase> for CanonicalUseCase<'a> {
    fn from(uc: &'a UseCase) -> Self {
        Self {
            preconditions: &uc.preconditions,
            flow: &uc.flow,
            postconditions: &uc.postconditions,
            title: uc.title.as_deref(),
            id: &uc.id,
        }
    }
}

/// Canonical compact JSON: keys in the order preconditions, flow,
/// postconditions, then `title` and `id` when present.
pub fn serialize_use_case(uc: &UseCase) -> String {
    serde_json::to_string(&CanonicalUseCase::from(uc)).expect("string lists always serialize")
}

/// Same key order as [`serialize_use_case`], indented for files on disk.
pub fn serialize_use_case_pretty(uc: &UseCase) -> String {
    serde_json::to_string_pretty(&CanonicalUseCase::from(uc)).expect("string lists always serialize")
}

impl Serialize for UseCase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CanonicalUseCase::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UseCase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        use_case_from_value(&value).map_err(serde::de::Error::custom)
    }
}

/// "As a <actor>, I want <action> so that <goal>." The structured fields
/// are empty when the sentence did not match that shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStory {
    pub actor: String,
    pub action: String,
    pub goal: String,
    pub raw_text: String,
}

impl UserStory {
    pub fn is_structured(&self) -> bool {
        !self.actor.is_empty() && !self.action.is_empty() && !self.goal.is_empty()
    }

    /// Parses the canonical sentence form. Unrecognised sentences keep
    /// their text with empty structured fields.
    pub fn parse(text: &str) -> Self {
        static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
        let re = PATTERN.get_or_init(|| {
            regex::Regex::new(
                r"(?is)^as an?\s+(?P<actor>.+?),\s*i\s+want\s+(?:to\s+)?(?P<action>.+?),?\s+(?:so\s+that|for\s+the\s+purpose\s+of|in\s+order\s+to)\s+(?P<goal>.+?)\.?$",
            )
            .expect("static regex")
        });
        let raw_text = text.trim().to_string();
        match re.captures(&raw_text) {
            Some(c) => Self {
                actor: c["actor"].trim().to_string(),
                action: c["action"].trim().to_string(),
                goal: c["goal"].trim().to_string(),
                raw_text: raw_text.clone(),
            },
            None => Self {
                actor: String::new(),
                action: String::new(),
                goal: String::new(),
                raw_text,
            },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("`{0}` must not be empty")]
    Empty(&'static str),
    #[error("summary must be a single line")]
    MultilineSummary,
    #[error("duplicate provision id `{0}`")]
    DuplicateProvision(String),
}

/// Store description of a mobile app plus the one-line summary injected
/// into prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDescription {
    pub app_id: String,
    pub full_text: String,
    pub summary: String,
}

impl AppDescription {
    pub fn validate(&self) -> Result<(), DocumentError> {
        if self.app_id.trim().is_empty() {
            return Err(DocumentError::Empty("app_id"));
        }
        if self.full_text.trim().is_empty() {
            return Err(DocumentError::Empty("full_text"));
        }
        if self.summary.trim().contains('\n') {
            return Err(DocumentError::MultilineSummary);
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let app: Self =
            serde_json::from_str(text).map_err(|e| DocumentError::MalformedJson(e.to_string()))?;
        app.validate()?;
        Ok(app)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalProvision {
    pub provision_id: String,
    pub citation: String,
    pub text: String,
}

impl LegalProvision {
    pub fn validate(&self) -> Result<(), DocumentError> {
        if self.provision_id.trim().is_empty() {
            return Err(DocumentError::Empty("provision_id"));
        }
        if self.text.trim().is_empty() {
            return Err(DocumentError::Empty("text"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| DocumentError::MalformedJson(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// A set of provisions with unique ids.
#[derive(Debug, Clone, Default)]
pub struct ProvisionCorpus {
    provisions: Vec<LegalProvision>,
}

impl ProvisionCorpus {
    pub fn new(provisions: Vec<LegalProvision>) -> Result<Self, DocumentError> {
        let mut seen = HashSet::new();
        for p in &provisions {
            p.validate()?;
            if !seen.insert(p.provision_id.as_str()) {
                return Err(DocumentError::DuplicateProvision(p.provision_id.clone()));
            }
        }
        Ok(Self { provisions })
    }

    pub fn get(&self, id: &str) -> Option<&LegalProvision> {
        self.provisions.iter().find(|p| p.provision_id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LegalProvision> {
        self.provisions.iter()
    }

    pub fn len(&self) -> usize {
        self.provisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provisions.is_empty()
    }
}
