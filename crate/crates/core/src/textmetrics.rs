//! BLEU, ROUGE-1 and ROUGE-L over token sequences.
//!
//! Single-reference, unsmoothed BLEU; ROUGE scores carry precision, recall
//! and F1. Everything here is a pure function.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::editscript::lcs_len;

/// Output of [`tokenize`]; tokens are non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn ngrams(&self, n: usize) -> HashMap<&[String], usize> {
        let mut counts = HashMap::new();
        if n == 0 || self.tokens.len() < n {
            return counts;
        }
        for gram in self.tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
        counts
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercases, splits on whitespace and peels leading/trailing punctuation
/// off each word as one-character tokens. Interior punctuation stays.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| !is_punct(*c));
        let Some(start) = start else {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| !is_punct(*c)).unwrap_or(start) + 1;
        tokens.extend(chars[..start].iter().map(|c| c.to_string()));
        tokens.push(chars[start..end].iter().collect());
        tokens.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    TokenSequence { tokens }
}

/// Clipped n-gram matches and the candidate n-gram count.
pub fn modified_precision(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> (usize, usize) {
    let cand = candidate.ngrams(n);
    let refs = reference.ngrams(n);
    let total: usize = cand.values().sum();
    let clipped = cand
        .iter()
        .map(|(gram, &count)| count.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, total)
}

/// Geometric mean of modified precisions for n = 1..=max_n times the
/// brevity penalty. Zero whenever any precision is zero or the candidate
/// is empty.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = modified_precision(candidate, reference, n);
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

/// BLEU with the usual four n-gram orders.
pub fn bleu4(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    bleu(candidate, reference, 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_overlap(overlap: usize, cand_len: usize, ref_len: usize) -> Self {
        if cand_len == 0 || ref_len == 0 || overlap == 0 {
            return Self::default();
        }
        let precision = overlap as f64 / cand_len as f64;
        let recall = overlap as f64 / ref_len as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        Self { precision, recall, f1 }
    }
}

pub fn rouge1(candidate: &TokenSequence, reference: &TokenSequence) -> RougeScore {
    let (overlap, _) = modified_precision(candidate, reference, 1);
    RougeScore::from_overlap(overlap, candidate.len(), reference.len())
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> RougeScore {
    let l = lcs_len(&candidate.tokens, &reference.tokens);
    RougeScore::from_overlap(l, candidate.len(), reference.len())
}

/// All three headline metrics for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub bleu: f64,
    pub rouge1: RougeScore,
    pub rouge_l: RougeScore,
}

pub fn similarity(candidate: &str, reference: &str) -> SimilarityScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    SimilarityScores {
        bleu: bleu4(&c, &r),
        rouge1: rouge1(&c, &r),
        rouge_l: rouge_l(&c, &r),
    }
}
