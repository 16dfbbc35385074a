//! Automatic metrics for the four tasks.
//!
//! All rates are fractions in `[0, 1]` except the action-match percentages,
//! which are already scaled to `[0, 100]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Lowercased, punctuation-trimmed tokens. Only built by [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    tokens: Vec<String>,
    joined: String,
}

impl NormalizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn joined(&self) -> &str {
        &self.joined
    }
}

/// NFC, lowercase, split on whitespace, trim ASCII punctuation off token
/// edges, drop empty tokens.
pub fn normalize(s: &str) -> NormalizedText {
    let lowered = s.nfc().collect::<String>().to_lowercase();
    let tokens: Vec<String> = lowered
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    let joined = tokens.join(" ");
    NormalizedText { tokens, joined }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatch {
    ExactMatch,
    ContainsGt,
    SubStringOfGt,
    NoMatch,
}

pub fn classify_answer(pred: &str, gt: &str) -> AnswerMatch {
    let p = normalize(pred);
    let g = normalize(gt);
    let (p, g) = (p.joined(), g.joined());
    if p == g {
        AnswerMatch::ExactMatch
    } else if !g.is_empty() && p.len() > g.len() && p.contains(g) {
        AnswerMatch::ContainsGt
    } else if !p.is_empty() && p.len() < g.len() && g.contains(p) {
        AnswerMatch::SubStringOfGt
    } else {
        AnswerMatch::NoMatch
    }
}

/// Shared tokens (multiset intersection) and token counts of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub overlap: usize,
    pub pred_tokens: usize,
    pub gt_tokens: usize,
}

impl std::ops::Add for OverlapCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            overlap: self.overlap + o.overlap,
            pred_tokens: self.pred_tokens + o.pred_tokens,
            gt_tokens: self.gt_tokens + o.gt_tokens,
        }
    }
}

impl OverlapCounts {
    pub fn of(pred: &str, gt: &str) -> Self {
        let p = normalize(pred);
        let g = normalize(gt);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in g.tokens() {
            *counts.entry(t).or_default() += 1;
        }
        let mut overlap = 0;
        for t in p.tokens() {
            if let Some(c) = counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    overlap += 1;
                }
            }
        }
        Self { overlap, pred_tokens: p.tokens().len(), gt_tokens: g.tokens().len() }
    }

    pub fn f1(&self) -> f64 {
        let p = ratio(self.overlap, self.pred_tokens);
        let r = ratio(self.overlap, self.gt_tokens);
        harmonic(p, r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2PR / (P + R)`, zero when both are zero.
pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Corpus-level token-overlap F1 over `(prediction, ground truth)` pairs.
pub fn micro_f1<S: AsRef<str>, T: AsRef<str>>(pairs: &[(S, T)]) -> f64 {
    pairs
        .iter()
        .map(|(p, g)| OverlapCounts::of(p.as_ref(), g.as_ref()))
        .fold(OverlapCounts::default(), |a, b| a + b)
        .f1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self { precision, recall, f1: harmonic(precision, recall) }
    }
}

/// True/false positive counts for question coverage; sums across screens
/// give the micro-averaged corpus score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl std::ops::Add for CoverageCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            true_pos: self.true_pos + o.true_pos,
            false_pos: self.false_pos + o.false_pos,
            false_neg: self.false_neg + o.false_neg,
        }
    }
}

impl CoverageCounts {
    pub fn of(gt: &BTreeSet<usize>, pred: &BTreeSet<usize>) -> Self {
        let true_pos = gt.intersection(pred).count();
        Self { true_pos, false_pos: pred.len() - true_pos, false_neg: gt.len() - true_pos }
    }

    pub fn prf(&self) -> Prf {
        let gt = self.true_pos + self.false_neg;
        let pred = self.true_pos + self.false_pos;
        match (gt, pred) {
            (0, 0) => Prf { precision: 1.0, recall: 1.0, f1: 1.0 },
            _ => Prf::from_pr(ratio(self.true_pos, pred), ratio(self.true_pos, gt)),
        }
    }
}

/// Set precision/recall/F1 between ground-truth input indexes and the
/// indexes the model enumerated.
pub fn coverage_f1(gt: &BTreeSet<usize>, pred: &BTreeSet<usize>) -> Prf {
    CoverageCounts::of(gt, pred).prf()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no tasks to score")]
    EmptyTaskList,
    #[error("task {0} has no steps")]
    EmptyTask(usize),
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("max n-gram order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
}

/// One step of an instruction sequence: gold element id and the predicted
/// id, `None` when no id could be parsed.
pub type Step = (usize, Option<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub partial_pct: f64,
    pub complete_pct: f64,
}

/// Partial: percentage of correct steps over all steps. Complete:
/// percentage of tasks with every step correct.
pub fn action_match(tasks: &[Vec<Step>]) -> Result<ActionScores, MetricError> {
    if tasks.is_empty() {
        return Err(MetricError::EmptyTaskList);
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut complete = 0usize;
    for (i, steps) in tasks.iter().enumerate() {
        if steps.is_empty() {
            return Err(MetricError::EmptyTask(i));
        }
        let ok = steps.iter().filter(|(gold, pred)| *pred == Some(*gold)).count();
        correct += ok;
        total += steps.len();
        if ok == steps.len() {
            complete += 1;
        }
    }
    Ok(ActionScores {
        partial_pct: 100.0 * correct as f64 / total as f64,
        complete_pct: 100.0 * complete as f64 / tasks.len() as f64,
    })
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-1..=`max_n` with per-reference clipping, uniform weights and
/// the closest-reference brevity penalty. Keys of the result are `n`.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    max_n: usize,
) -> Result<BTreeMap<usize, f64>, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::InvalidOrder(max_n));
    }
    let mut matched = vec![0usize; max_n];
    let mut possible = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for (cand, refs) in candidates.iter().zip(references) {
        let c = normalize(cand.as_ref());
        let rs: Vec<NormalizedText> = refs.iter().map(|r| normalize(r.as_ref())).collect();
        let c_tokens = c.tokens();
        cand_len += c_tokens.len();
        // Closest reference length, ties broken towards the shorter one.
        ref_len += rs
            .iter()
            .map(|r| r.tokens().len())
            .min_by_key(|&len| (len.abs_diff(c_tokens.len()), len))
            .unwrap_or(0);

        for n in 1..=max_n {
            let cand_counts = ngram_counts(c_tokens, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &rs {
                for (g, k) in ngram_counts(r.tokens(), n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in &cand_counts {
                matched[n - 1] += (*k).min(max_ref.get(g).copied().unwrap_or(0));
            }
            possible[n - 1] += c_tokens.len().saturating_sub(n - 1);
        }
    }

    let bp = if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };

    let mut out = BTreeMap::new();
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 1..=max_n {
        let p = ratio(matched[n - 1], possible[n - 1]);
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        let score = if zero { 0.0 } else { bp * (log_sum / n as f64).exp() };
        out.insert(n, score);
    }
    Ok(out)
}

/// Default recall/precision weighting for ROUGE-L.
pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure of one candidate against one reference.
pub fn rouge_l_pair(candidate: &str, reference: &str, beta: f64) -> f64 {
    let c = normalize(candidate);
    let r = normalize(reference);
    let lcs = lcs_len(c.tokens(), r.tokens());
    let recall = ratio(lcs, r.tokens().len());
    let precision = ratio(lcs, c.tokens().len());
    let b2 = beta * beta;
    let den = b2 * recall + precision;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * recall * precision / den
    }
}

/// Mean over candidates of the best ROUGE-L F against any of its references.
pub fn rouge_l<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    beta: f64,
) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, refs)| refs.iter().map(|r| rouge_l_pair(c.as_ref(), r.as_ref(), beta)).fold(0.0, f64::max))
        .sum();
    Ok(total / candidates.len() as f64)
}
