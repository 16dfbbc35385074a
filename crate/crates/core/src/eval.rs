//! Batch evaluation: sample exemplars, build prompts, complete, parse, score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{prompt_hash, BackendError, CompletionBackend, CompletionRequest};
use crate::dataset::{sample_exemplars, Corpus, SampleMode};
use crate::metrics::{
    action_match, bleu, classify_answer, rouge_l, rouge_l_pair, ActionScores, AnswerMatch, CoverageCounts,
    MetricError, OverlapCounts, Prf, ROUGE_BETA,
};
use crate::parse::{parse_cot, parse_output, ParseError, ParsedValue};
use crate::prompt::{
    build_prompt, input_field_indexes, OverflowPolicy, PromptSpec, TaskKind, DEFAULT_BUDGET_TOKENS, DEFAULT_SHOT_CAP,
};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Worker threads; 0 lets the pool pick.
    Parallel(usize),
}

impl Parallelism {
    /// `--parallel N`: 1 is sequential.
    pub fn from_limit(n: usize) -> Self {
        if n == 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel(n)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub task: TaskKind,
    pub shots: usize,
    pub seed: u64,
    pub mode: SampleMode,
    pub budget_tokens: usize,
    pub on_overflow: OverflowPolicy,
    pub shot_cap: usize,
    /// Keep QA pairs whose answer does not appear in the hierarchy.
    pub include_absent: bool,
    pub parallelism: Parallelism,
}

impl EvalConfig {
    pub fn new(task: TaskKind, shots: usize, seed: u64, mode: SampleMode) -> Self {
        Self {
            task,
            shots,
            seed,
            mode,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            on_overflow: OverflowPolicy::Fail,
            shot_cap: DEFAULT_SHOT_CAP.max(shots),
            include_absent: false,
            parallelism: Parallelism::Sequential,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no {0} items in corpus")]
    NoItems(TaskKind),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot write {path}: {msg}")]
    Output { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Reference {
    Summaries(Vec<String>),
    Answer(String),
    Gold { task: usize, index: usize },
    InputFields(BTreeSet<usize>),
}

#[derive(Debug, Clone, PartialEq)]
struct EvalItem {
    item_id: String,
    screen_id: String,
    input: Option<String>,
    reference: Reference,
}

fn collect_items(corpus: &Corpus, cfg: &EvalConfig) -> Vec<EvalItem> {
    match cfg.task {
        TaskKind::Summarization => corpus
            .summaries
            .iter()
            .enumerate()
            .map(|(i, r)| EvalItem {
                item_id: format!("summary-{i}"),
                screen_id: r.screen_id.clone(),
                input: None,
                reference: Reference::Summaries(r.summaries.clone()),
            })
            .collect(),
        TaskKind::QuestionAnswering => corpus
            .qa
            .iter()
            .enumerate()
            .filter(|(_, r)| cfg.include_absent || r.answer_in_hierarchy)
            .map(|(i, r)| EvalItem {
                item_id: format!("qa-{i}"),
                screen_id: r.screen_id.clone(),
                input: Some(r.question.clone()),
                reference: Reference::Answer(r.answer.clone()),
            })
            .collect(),
        TaskKind::InstructionToAction => corpus
            .tasks
            .iter()
            .enumerate()
            .flat_map(|(t, task)| {
                task.steps.iter().enumerate().map(move |(s, step)| EvalItem {
                    item_id: format!("{}/{s}", task.task_id),
                    screen_id: step.screen_id.clone(),
                    input: Some(step.instruction.clone()),
                    reference: Reference::Gold { task: t, index: step.gold_index },
                })
            })
            .collect(),
        TaskKind::QuestionGeneration => corpus
            .screens()
            .filter_map(|(id, s)| {
                let gt: BTreeSet<usize> = input_field_indexes(&s.html).into_iter().collect();
                (!gt.is_empty()).then(|| EvalItem {
                    item_id: format!("questions-{id}"),
                    screen_id: id.to_owned(),
                    input: None,
                    reference: Reference::InputFields(gt),
                })
            })
            .collect(),
    }
}

/// Per-item seed, stable under reordering of the worker pool.
pub fn item_seed(run_seed: u64, index: usize) -> u64 {
    run_seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemScores {
    Summary { rouge_l: f64 },
    Qa { category: AnswerMatch, overlap: OverlapCounts, f1: f64 },
    Action { gold: usize, predicted: Option<usize>, correct: bool },
    Questions { gt_indexes: Vec<usize>, predicted_indexes: Vec<usize>, coverage: CoverageCounts, f1: f64 },
}

/// One line of `items.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub screen_id: String,
    pub prompt_hash: Option<String>,
    pub shots_used: Option<usize>,
    pub raw_output: Option<String>,
    pub parsed: Option<ParsedValue>,
    pub scores: ItemScores,
    pub warnings: Vec<String>,
}

fn score(item: &EvalItem, parsed: Option<&ParsedValue>, raw: Option<&str>) -> ItemScores {
    match &item.reference {
        Reference::Summaries(refs) => {
            let cand = match parsed {
                Some(ParsedValue::Summary(s)) => s.as_str(),
                _ => "",
            };
            let best = refs.iter().map(|r| rouge_l_pair(cand, r, ROUGE_BETA)).fold(0.0, f64::max);
            ItemScores::Summary { rouge_l: best }
        }
        Reference::Answer(gt) => {
            let pred = match parsed {
                Some(ParsedValue::Answer(s)) => s.as_str(),
                _ => "",
            };
            let overlap = OverlapCounts::of(pred, gt);
            ItemScores::Qa { category: classify_answer(pred, gt), overlap, f1: overlap.f1() }
        }
        Reference::Gold { index, .. } => {
            let predicted = match parsed {
                Some(ParsedValue::Action(i)) => Some(*i),
                _ => None,
            };
            ItemScores::Action { gold: *index, predicted, correct: predicted == Some(*index) }
        }
        Reference::InputFields(gt) => {
            let pred: BTreeSet<usize> = raw.map(|r| parse_cot(r).enumerated_indexes.into_iter().collect()).unwrap_or_default();
            let coverage = CoverageCounts::of(gt, &pred);
            ItemScores::Questions {
                gt_indexes: gt.iter().copied().collect(),
                predicted_indexes: pred.into_iter().collect(),
                coverage,
                f1: coverage.prf().f1,
            }
        }
    }
}

fn run_item(
    corpus: &Corpus,
    backend: &dyn CompletionBackend,
    cfg: &EvalConfig,
    index: usize,
    item: &EvalItem,
) -> Result<ItemRecord, EvalError> {
    let mut record = ItemRecord {
        item_id: item.item_id.clone(),
        screen_id: item.screen_id.clone(),
        prompt_hash: None,
        shots_used: None,
        raw_output: None,
        parsed: None,
        scores: score(item, None, None),
        warnings: Vec::new(),
    };
    let seed = item_seed(cfg.seed, index);
    let exemplars = match sample_exemplars(corpus, cfg.task, cfg.shots, seed, cfg.mode, &item.screen_id) {
        Ok(e) => e,
        Err(e) => {
            record.warnings.push(e.to_string());
            return Ok(record);
        }
    };
    let spec = PromptSpec::new(cfg.task, exemplars)
        .with_budget(cfg.budget_tokens, cfg.on_overflow)
        .with_shot_cap(cfg.shot_cap);
    let screen = &corpus.screen(&item.screen_id).expect("items reference loaded screens").html;
    let prompt = match build_prompt(&spec, screen, item.input.as_deref()) {
        Ok(p) => p,
        Err(e) => {
            record.warnings.push(e.to_string());
            return Ok(record);
        }
    };
    record.prompt_hash = Some(prompt_hash(&prompt.text));
    record.shots_used = Some(prompt.shots_used);
    if prompt.shots_used < cfg.shots {
        record.warnings.push(format!("dropped {} exemplar(s) to fit the budget", cfg.shots - prompt.shots_used));
    }
    let result = match backend.complete(&CompletionRequest::for_task(cfg.task, prompt.text)) {
        Ok(r) => r,
        Err(e @ BackendError::ReplayMiss { .. }) => {
            record.warnings.push(e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e.into()),
    };
    match parse_output(cfg.task, &result.text) {
        Ok(out) => {
            record.warnings.extend(out.warnings);
            record.parsed = Some(out.value);
        }
        Err(ParseError::NoActionFound) => record.warnings.push(ParseError::NoActionFound.to_string()),
    }
    record.scores = score(item, record.parsed.as_ref(), Some(&result.text));
    record.raw_output = Some(result.text);
    Ok(record)
}

fn map_items<T, R, E, F>(items: &[T], parallelism: Parallelism, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    match parallelism {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel(threads) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
            pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaMetrics {
    pub exact_rate: f64,
    pub contains_rate: f64,
    pub substring_rate: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub bleu: BTreeMap<usize, f64>,
    pub rouge_l: f64,
}

/// Aggregate scores. Rates are fractions in [0, 1]; action scores are
/// percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub n_items: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qa: Option<QaMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<ActionScores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summarization: Option<SummaryMetrics>,
    pub warnings_total: usize,
}

/// Builds the report from item records. Independent of record order.
pub fn aggregate(task: TaskKind, items: &[ItemRecord], references: &[Vec<String>]) -> Result<MetricsReport, EvalError> {
    let mut report = MetricsReport {
        task,
        n_items: items.len(),
        coverage: None,
        qa: None,
        action: None,
        summarization: None,
        warnings_total: items.iter().map(|i| i.warnings.len()).sum(),
    };
    if items.is_empty() {
        return Err(EvalError::NoItems(task));
    }
    let n = items.len() as f64;
    match task {
        TaskKind::Summarization => {
            let cands: Vec<&str> = items
                .iter()
                .map(|i| match &i.parsed {
                    Some(ParsedValue::Summary(s)) => s.as_str(),
                    _ => "",
                })
                .collect();
            report.summarization = Some(SummaryMetrics {
                bleu: bleu(&cands, references, 4)?,
                rouge_l: rouge_l(&cands, references, ROUGE_BETA)?,
            });
        }
        TaskKind::QuestionAnswering => {
            let mut counts: BTreeMap<AnswerMatch, usize> = BTreeMap::new();
            let mut overlap = OverlapCounts::default();
            for i in items {
                if let ItemScores::Qa { category, overlap: o, .. } = &i.scores {
                    *counts.entry(*category).or_default() += 1;
                    overlap = overlap + *o;
                }
            }
            let rate = |c| *counts.get(&c).unwrap_or(&0) as f64 / n;
            report.qa = Some(QaMetrics {
                exact_rate: rate(AnswerMatch::ExactMatch),
                contains_rate: rate(AnswerMatch::ContainsGt),
                substring_rate: rate(AnswerMatch::SubStringOfGt),
                micro_f1: overlap.f1(),
            });
        }
        TaskKind::InstructionToAction => {
            let mut tasks: BTreeMap<String, Vec<(usize, Option<usize>)>> = BTreeMap::new();
            for i in items {
                if let ItemScores::Action { gold, predicted, .. } = &i.scores {
                    let task_id = i.item_id.rsplit_once('/').map_or(i.item_id.as_str(), |(t, _)| t);
                    tasks.entry(task_id.to_owned()).or_default().push((*gold, *predicted));
                }
            }
            report.action = Some(action_match(&tasks.into_values().collect::<Vec<_>>())?);
        }
        TaskKind::QuestionGeneration => {
            let total = items.iter().fold(CoverageCounts::default(), |acc, i| match &i.scores {
                ItemScores::Questions { coverage, .. } => acc + *coverage,
                _ => acc,
            });
            report.coverage = Some(total.prf());
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub items: Vec<ItemRecord>,
}

pub fn run_eval(corpus: &Corpus, backend: &dyn CompletionBackend, cfg: &EvalConfig) -> Result<EvalOutcome, EvalError> {
    let items = collect_items(corpus, cfg);
    if items.is_empty() {
        return Err(EvalError::NoItems(cfg.task));
    }
    let records = map_items(&items, cfg.parallelism, |i, item| run_item(corpus, backend, cfg, i, item))?;
    let references: Vec<Vec<String>> = items
        .iter()
        .map(|i| match &i.reference {
            Reference::Summaries(s) => s.clone(),
            _ => Vec::new(),
        })
        .collect();
    let report = aggregate(cfg.task, &records, &references)?;
    Ok(EvalOutcome { report, items: records })
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: TaskKind,
    pub shots: usize,
    pub seed: u64,
    pub mode: SampleMode,
    pub backend_id: String,
    pub corpus_path: String,
    pub timestamp: String,
    pub toolkit_version: String,
    pub budget_tokens: usize,
    pub on_overflow: OverflowPolicy,
    pub include_absent: bool,
}

impl RunManifest {
    pub fn new(cfg: &EvalConfig, backend_id: &str, corpus_path: &Path) -> Self {
        Self {
            task: cfg.task,
            shots: cfg.shots,
            seed: cfg.seed,
            mode: cfg.mode,
            backend_id: backend_id.to_owned(),
            corpus_path: corpus_path.display().to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            toolkit_version: TOOLKIT_VERSION.to_owned(),
            budget_tokens: cfg.budget_tokens,
            on_overflow: cfg.on_overflow,
            include_absent: cfg.include_absent,
        }
    }

    pub fn row_label(&self) -> String {
        match self.mode {
            SampleMode::Any => format!("{}-shot", self.shots),
            mode => format!("{}-shot {mode}", self.shots),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn table(header: &[&str], row: &[String]) -> String {
    let widths: Vec<usize> =
        header.iter().zip(row).map(|(h, c)| h.chars().count().max(c.chars().count())).collect();
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    format!(
        "{}\n{rule}\n{}\n",
        line(header.iter().map(|h| h.to_string()).collect()),
        line(row.to_vec())
    )
}

/// Column names for a task's table.
pub fn table_columns(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::QuestionGeneration => &["Model", "Precision", "Recall", "F1"],
        TaskKind::Summarization => &["Model", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L"],
        TaskKind::QuestionAnswering => &["Model", "Exact Matches", "Contains GT", "Sub-String of GT", "Micro-F1"],
        TaskKind::InstructionToAction => &["Model", "Partial", "Complete"],
    }
}

/// Plain-text table with percentages, one row for the run.
pub fn render_table(report: &MetricsReport, row_label: &str) -> String {
    let mut row = vec![row_label.to_owned()];
    if let Some(c) = &report.coverage {
        row.extend([pct(c.precision), pct(c.recall), pct(c.f1)]);
    }
    if let Some(s) = &report.summarization {
        row.extend((1..=4).map(|n| pct(s.bleu.get(&n).copied().unwrap_or(0.0))));
        row.push(pct(s.rouge_l));
    }
    if let Some(q) = &report.qa {
        row.extend([pct(q.exact_rate), pct(q.contains_rate), pct(q.substring_rate), pct(q.micro_f1)]);
    }
    if let Some(a) = &report.action {
        row.extend([format!("{:.2}", a.partial_pct), format!("{:.2}", a.complete_pct)]);
    }
    let mut out = format!("Task: {}\n", report.task);
    out.push_str(&table(table_columns(report.task), &row));
    let _ = writeln!(out, "items: {}  warnings: {}", report.n_items, report.warnings_total);
    out
}

/// Writes `report.json`, `report.txt`, `manifest.json` and `items.jsonl`.
pub fn write_outputs(dir: &Path, outcome: &EvalOutcome, manifest: &RunManifest) -> Result<(), EvalError> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| EvalError::Output { path: path.display().to_string(), msg: e.to_string() })
    };
    fs::create_dir_all(dir).map_err(|e| EvalError::Output { path: dir.display().to_string(), msg: e.to_string() })?;
    write("report.json", pretty(&outcome.report))?;
    write("report.txt", render_table(&outcome.report, &manifest.row_label()))?;
    write("manifest.json", pretty(manifest))?;
    let mut lines = String::new();
    for item in &outcome.items {
        lines.push_str(&serde_json::to_string(item).expect("item records serialize"));
        lines.push('\n');
    }
    write("items.jsonl", lines)
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qa_item(category: AnswerMatch, pred: &str, gt: &str) -> ItemRecord {
        let overlap = OverlapCounts::of(pred, gt);
        ItemRecord {
            item_id: "x".into(),
            screen_id: "s".into(),
            prompt_hash: None,
            shots_used: None,
            raw_output: None,
            parsed: Some(ParsedValue::Answer(pred.into())),
            scores: ItemScores::Qa { category, overlap, f1: overlap.f1() },
            warnings: vec![],
        }
    }

    #[test]
    fn qa_aggregate_rates() {
        let items = vec![
            qa_item(AnswerMatch::ExactMatch, "a", "a"),
            qa_item(AnswerMatch::ContainsGt, "a b", "a"),
            qa_item(AnswerMatch::NoMatch, "c", "d"),
            qa_item(AnswerMatch::ExactMatch, "e", "e"),
        ];
        let r = aggregate(TaskKind::QuestionAnswering, &items, &[]).unwrap();
        let qa = r.qa.unwrap();
        assert_eq!(qa.exact_rate, 0.5);
        assert_eq!(qa.contains_rate, 0.25);
        assert_eq!(qa.substring_rate, 0.0);
        // overlap 3, pred tokens 5, gt tokens 4
        let (p, rc) = (3.0 / 5.0, 3.0 / 4.0);
        assert!((qa.micro_f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
        let mut rev = items.clone();
        rev.reverse();
        assert_eq!(aggregate(TaskKind::QuestionAnswering, &rev, &[]).unwrap().qa, Some(qa));
    }

    #[test]
    fn action_grouping_by_task() {
        let step = |id: &str, gold, pred| ItemRecord {
            item_id: id.into(),
            screen_id: "s".into(),
            prompt_hash: None,
            shots_used: None,
            raw_output: None,
            parsed: None,
            scores: ItemScores::Action { gold, predicted: pred, correct: pred == Some(gold) },
            warnings: vec![],
        };
        let items =
            vec![step("t1/0", 1, Some(1)), step("t1/1", 2, Some(9)), step("t2/0", 4, Some(4))];
        let a = aggregate(TaskKind::InstructionToAction, &items, &[]).unwrap().action.unwrap();
        assert!((a.partial_pct - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(a.complete_pct, 50.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(aggregate(TaskKind::Summarization, &[], &[]), Err(EvalError::NoItems(_))));
    }

    #[test]
    fn table_columns_per_task() {
        let r = MetricsReport {
            task: TaskKind::InstructionToAction,
            n_items: 3,
            coverage: None,
            qa: None,
            action: Some(ActionScores { partial_pct: 200.0 / 3.0, complete_pct: 50.0 }),
            summarization: None,
            warnings_total: 0,
        };
        let t = render_table(&r, "1-shot in-app");
        assert!(t.contains("Model         | Partial | Complete"), "{t}");
        assert!(t.contains("1-shot in-app |   66.67 |    50.00"), "{t}");
    }

    #[test]
    fn item_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..100).map(|i| item_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
