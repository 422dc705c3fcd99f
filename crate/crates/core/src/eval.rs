//! Scoring runs against expert annotations.
//!
//! Selection is scored as plain accuracy (correct answers over all
//! answers). Modifications are scored with BLEU, ROUGE-1 and ROUGE-L
//! between the canonical line forms of the predicted and ground-truth
//! change lists, then averaged per (non-violative, self-consistent) group.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::editscript::{apply, serialize_change_list, ChangeList};
use crate::pipeline::{Answer, PipelineRun, SelectionMode, SelectionResult};
use crate::textmetrics::{similarity, SimilarityScores};

/// Expert ground truth for one use case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub use_case_id: String,
    /// Whether the use case should be selected for modification.
    pub relevant: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_change_list: Option<ChangeList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_violative: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_consistent: Option<bool>,
}

impl AnnotationRecord {
    /// The reference change list. A use case labelled not relevant needs no
    /// change, so an absent list means the empty one.
    pub fn reference_change_list(&self) -> Option<ChangeList> {
        match (&self.ground_truth_change_list, self.relevant) {
            (Some(cl), _) => Some(cl.clone()),
            (None, Answer::No) => Some(ChangeList::default()),
            (None, Answer::Yes) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("annotations line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no annotation for use case `{0}`")]
    MissingAnnotation(String),
    #[error("annotation for `{0}` has no matching use case in the run")]
    UnknownId(String),
    #[error("use case `{use_case_id}` excluded: {reason}")]
    Excluded { use_case_id: String, reason: String },
}

/// Parses annotation JSONL, one record per non-blank line.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, EvalError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.use_case_id.clone()) {
            return Err(EvalError::DuplicateId(rec.use_case_id));
        }
        out.push(rec);
    }
    Ok(out)
}

fn index_annotations(annotations: &[AnnotationRecord]) -> Result<HashMap<&str, &AnnotationRecord>, EvalError> {
    let mut by_id = HashMap::new();
    for a in annotations {
        if by_id.insert(a.use_case_id.as_str(), a).is_some() {
            return Err(EvalError::DuplicateId(a.use_case_id.clone()));
        }
    }
    Ok(by_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub mode: Option<SelectionMode>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Predictions answered yes.
    pub flagged: usize,
    /// Yes predictions whose ground truth is also yes.
    pub flagged_correct: usize,
}

/// Accuracy and flag counts for a set of predictions.
pub fn selection_stats(
    predictions: &[&SelectionResult],
    annotations: &[AnnotationRecord],
) -> Result<SelectionStats, EvalError> {
    let by_id = index_annotations(annotations)?;
    let mut seen = HashSet::new();
    let (mut correct, mut flagged, mut flagged_correct) = (0, 0, 0);
    for p in predictions {
        if !seen.insert(p.use_case_id.as_str()) {
            return Err(EvalError::DuplicateId(p.use_case_id.clone()));
        }
        let a = by_id
            .get(p.use_case_id.as_str())
            .ok_or_else(|| EvalError::MissingAnnotation(p.use_case_id.clone()))?;
        let right = p.answer == a.relevant;
        correct += usize::from(right);
        if p.answer.is_yes() {
            flagged += 1;
            flagged_correct += usize::from(right);
        }
    }
    let total = predictions.len();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    let mode = predictions.first().map(|p| p.mode);
    Ok(SelectionStats {
        mode,
        total,
        correct,
        accuracy,
        flagged,
        flagged_correct,
    })
}

/// Correct answers over all answers. Zero for an empty prediction set.
pub fn selection_accuracy(
    predictions: &[&SelectionResult],
    annotations: &[AnnotationRecord],
) -> Result<f64, EvalError> {
    selection_stats(predictions, annotations).map(|s| s.accuracy)
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub use_case_id: String,
    pub non_violative: bool,
    pub self_consistent: bool,
    pub bleu: f64,
    pub rouge1_f1: f64,
    pub rouge_l_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub non_violative: bool,
    pub self_consistent: bool,
    pub count: usize,
    pub bleu: f64,
    pub rouge1_f1: f64,
    pub rouge1_precision: f64,
    pub rouge1_recall: f64,
    pub rouge_l_f1: f64,
    pub rouge_l_precision: f64,
    pub rouge_l_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub use_case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationSummary {
    pub total: usize,
    pub scored: usize,
    pub non_violative: usize,
    pub non_violative_and_self_consistent: usize,
    pub instances: Vec<InstanceScore>,
    pub groups: Vec<GroupMeans>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub provision_id: String,
    pub selection: Vec<SelectionStats>,
    pub modification: ModificationSummary,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn group(&self, non_violative: bool, self_consistent: bool) -> Option<&GroupMeans> {
        self.modification
            .groups
            .iter()
            .find(|g| g.non_violative == non_violative && g.self_consistent == self_consistent)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Turn the first exclusion into an error.
    pub strict: bool,
}

/// Metric inputs: canonical line forms of prediction and reference.
pub fn score_change_lists(predicted: &ChangeList, reference: &ChangeList) -> SimilarityScores {
    similarity(&serialize_change_list(predicted), &serialize_change_list(reference))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Selection accuracy per mode plus grouped similarity of modifications.
pub fn similarity_report(
    run: &PipelineRun,
    annotations: &[AnnotationRecord],
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    let by_id = index_annotations(annotations)?;
    let run_ids: HashSet<&str> = run.items.iter().map(|i| i.use_case_id.as_str()).collect();
    if let Some(a) = annotations.iter().find(|a| !run_ids.contains(a.use_case_id.as_str())) {
        return Err(EvalError::UnknownId(a.use_case_id.clone()));
    }

    let mut selection = Vec::new();
    for mode in std::iter::once(run.selection_mode).chain(run.comparison_modes.iter().copied()) {
        let mut stats = selection_stats(&run.selections_for(mode), annotations)?;
        stats.mode = Some(mode);
        stats.accuracy = round4(stats.accuracy);
        selection.push(stats);
    }

    let mut instances = Vec::new();
    let mut raw_scores = Vec::new();
    let mut exclusions = Vec::new();
    let mut total = 0;
    for (item, m) in run.modifications() {
        total += 1;
        let id = &item.use_case_id;
        let a = by_id.get(id.as_str()).ok_or_else(|| EvalError::MissingAnnotation(id.clone()))?;
        let excluded = |reason: &str| Exclusion {
            use_case_id: id.clone(),
            reason: reason.to_string(),
        };
        let reference = match a.reference_change_list() {
            Some(r) => r,
            None => {
                exclusions.push(excluded("missing ground-truth change list"));
                continue;
            }
        };
        if let Err(e) = apply(&reference, &item.use_case) {
            exclusions.push(excluded(&format!("ground-truth change list does not apply: {e}")));
            continue;
        }
        let (Some(nv), Some(sc)) = (a.non_violative, a.self_consistent) else {
            exclusions.push(excluded("missing non-violative or self-consistent label"));
            continue;
        };
        let s = score_change_lists(&m.change_list, &reference);
        instances.push(InstanceScore {
            use_case_id: id.clone(),
            non_violative: nv,
            self_consistent: sc,
            bleu: round4(s.bleu),
            rouge1_f1: round4(s.rouge1.f1),
            rouge_l_f1: round4(s.rouge_l.f1),
        });
        raw_scores.push(((nv, sc), s));
    }

    if options.strict {
        if let Some(x) = exclusions.first() {
            return Err(EvalError::Excluded {
                use_case_id: x.use_case_id.clone(),
                reason: x.reason.clone(),
            });
        }
    }

    // (true, true) first, matching the usual table layout.
    let mut grouped: BTreeMap<(bool, bool), Vec<SimilarityScores>> = BTreeMap::new();
    for ((nv, sc), s) in raw_scores {
        grouped.entry((!nv, !sc)).or_default().push(s);
    }
    let groups = grouped
        .into_iter()
        .map(|((nnv, nsc), members)| GroupMeans {
            non_violative: !nnv,
            self_consistent: !nsc,
            count: members.len(),
            bleu: round4(mean(members.iter().map(|s| s.bleu))),
            rouge1_f1: round4(mean(members.iter().map(|s| s.rouge1.f1))),
            rouge1_precision: round4(mean(members.iter().map(|s| s.rouge1.precision))),
            rouge1_recall: round4(mean(members.iter().map(|s| s.rouge1.recall))),
            rouge_l_f1: round4(mean(members.iter().map(|s| s.rouge_l.f1))),
            rouge_l_precision: round4(mean(members.iter().map(|s| s.rouge_l.precision))),
            rouge_l_recall: round4(mean(members.iter().map(|s| s.rouge_l.recall))),
        })
        .collect();

    let non_violative = instances.iter().filter(|i| i.non_violative).count();
    let both = instances
        .iter()
        .filter(|i| i.non_violative && i.self_consistent)
        .count();
    Ok(EvalReport {
        run_id: run.run_id.clone(),
        provision_id: run.provision_id.clone(),
        selection,
        modification: ModificationSummary {
            total,
            scored: instances.len(),
            non_violative,
            non_violative_and_self_consistent: both,
            instances,
            groups,
            exclusions,
        },
    })
}

fn technique(mode: Option<SelectionMode>) -> &'static str {
    match mode {
        Some(SelectionMode::YesNo) => "Yes/No Prompting",
        Some(SelectionMode::Cot) => "CoT Prompting",
        None => "-",
    }
}

fn check(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plain-text tables: selection accuracy, then similarity by group.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Use Case Selection Results");
    let _ = writeln!(out, "{:<18} {:>8} {:>9} {:>8} {:>16}", "Technique", "Accuracy", "Correct", "Flagged", "Flagged correct");
    for s in &report.selection {
        let _ = writeln!(
            out,
            "{:<18} {:>7.1}% {:>4}/{:<4} {:>8} {:>16}",
            technique(s.mode),
            s.accuracy * 100.0,
            s.correct,
            s.total,
            s.flagged,
            s.flagged_correct
        );
    }
    let m = &report.modification;
    let _ = writeln!(out);
    let _ = writeln!(out, "Similarity Scores for Use Case Modification");
    let _ = writeln!(
        out,
        "{:<14} {:<16} {:>3} {:>7} {:>8} {:>8}",
        "Non-violative", "Self-Consistent", "n", "BLEU", "ROUGE-1", "ROUGE-L"
    );
    for g in &m.groups {
        let _ = writeln!(
            out,
            "{:<14} {:<16} {:>3} {:>7.4} {:>8.4} {:>8.4}",
            check(g.non_violative),
            check(g.self_consistent),
            g.count,
            g.bleu,
            g.rouge1_f1,
            g.rouge_l_f1
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Modified: {}  scored: {}  non-violative: {}  non-violative and self-consistent: {}",
        m.total, m.scored, m.non_violative, m.non_violative_and_self_consistent
    );
    if !m.exclusions.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Exclusions");
        for x in &m.exclusions {
            let _ = writeln!(out, "  {}: {}", x.use_case_id, x.reason);
        }
    }
    out
}
