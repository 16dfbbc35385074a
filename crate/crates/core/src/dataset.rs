//! Corpus loading and seeded exemplar sampling.
//!
//! A corpus directory looks like
//!
//! ```text
//! <root>/screens/<screen_id>.json   RICO view hierarchies
//! <root>/summaries.jsonl            {"screen_id", "summaries": [..]}
//! <root>/qa.jsonl                   {"screen_id", "question", "answer", "answer_in_hierarchy"}
//! <root>/tasks.jsonl                {"task_id", "app_package", "steps": [{"screen_id", "instruction", "gold_index"}]}
//! <root>/cot.jsonl                  {"screen_id", "summary", "page_label", "enumeration": [{"id", "purpose"}], "questions": [{"text", "element_indexes"}]}
//! ```
//!
//! Every record file is optional. `cot.jsonl` holds question-generation
//! exemplars.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::html::{convert, ScreenHtml};
use crate::ingest::{parse_view_hierarchy, IngestError, ScreenSource};
use crate::prompt::{input_field_indexes, CotBlock, Exemplar, Question, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub screen_id: String,
    pub summaries: Vec<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub screen_id: String,
    pub question: String,
    pub answer: String,
    #[serde(default = "default_true")]
    pub answer_in_hierarchy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionStep {
    pub screen_id: String,
    pub instruction: String,
    pub gold_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTask {
    pub task_id: String,
    pub app_package: String,
    pub steps: Vec<InstructionStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumeratedField {
    pub id: usize,
    pub purpose: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub screen_id: String,
    pub summary: String,
    pub page_label: String,
    pub enumeration: Vec<EnumeratedField>,
    pub questions: Vec<Question>,
}

impl CotRecord {
    pub fn to_block(&self, screen: &ScreenHtml) -> CotBlock {
        CotBlock {
            input_field_count: input_field_indexes(screen).len(),
            screen_summary: self.summary.clone(),
            page_label: self.page_label.clone(),
            enumeration: self.enumeration.iter().map(|f| (f.id, f.purpose.clone())).collect(),
            questions: self.questions.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{0}")]
    LayoutError(String),
    #[error("{file}:{line}: {msg}")]
    InvalidRecord { file: String, line: usize, msg: String },
    #[error("screen {screen_id}: {source}")]
    Screen {
        screen_id: String,
        #[source]
        source: IngestError,
    },
    #[error("{file} references missing screen `{screen_id}`")]
    MissingScreen { file: String, screen_id: String },
    #[error("task {task_id} step {step}: gold index {index} invalid on a screen with {len} elements")]
    InvalidGoldIndex { task_id: String, step: usize, index: usize, len: usize },
    #[error("unknown screen `{0}`")]
    UnknownScreen(String),
    #[error("need {needed} exemplars for {task} ({mode}), only {available} available")]
    InsufficientExemplars { task: TaskKind, mode: SampleMode, needed: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScreen {
    pub source: ScreenSource,
    pub html: ScreenHtml,
}

/// Immutable, loaded and cross-validated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    root: PathBuf,
    screens: BTreeMap<String, CorpusScreen>,
    pub summaries: Vec<SummaryRecord>,
    pub qa: Vec<QaRecord>,
    pub tasks: Vec<InstructionTask>,
    pub cot: Vec<CotRecord>,
    packages: BTreeMap<String, String>,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = path.display().to_string();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(DatasetError::LayoutError(format!("{file}: {e}"))),
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| DatasetError::InvalidRecord { file: file.clone(), line: n + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn load_screen(path: &Path) -> Result<(String, CorpusScreen), DatasetError> {
    let Some(screen_id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
        return Err(DatasetError::LayoutError(format!("non UTF-8 file name {}", path.display())));
    };
    let raw = fs::read(path).map_err(|e| DatasetError::LayoutError(format!("{}: {e}", path.display())))?;
    let source = parse_view_hierarchy(screen_id.clone(), &raw)
        .map_err(|source| DatasetError::Screen { screen_id: screen_id.clone(), source })?;
    let html = convert(&source);
    Ok((screen_id, CorpusScreen { source, html }))
}

impl Corpus {
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref();
        let screens_dir = root.join("screens");
        if !screens_dir.is_dir() {
            return Err(DatasetError::LayoutError(format!("{} is not a directory", screens_dir.display())));
        }
        let entries = fs::read_dir(&screens_dir)
            .map_err(|e| DatasetError::LayoutError(format!("{}: {e}", screens_dir.display())))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| DatasetError::LayoutError(e.to_string()))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        #[cfg(feature = "parallel")]
        let loaded: Vec<_> = {
            use rayon::prelude::*;
            paths.par_iter().map(|p| load_screen(p)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let loaded: Vec<_> = paths.iter().map(|p| load_screen(p)).collect();
        let mut screens = BTreeMap::new();
        for screen in loaded {
            let (screen_id, screen) = screen?;
            screens.insert(screen_id, screen);
        }
        Self::from_parts(
            root.to_path_buf(),
            screens,
            read_jsonl(&root.join("summaries.jsonl"))?,
            read_jsonl(&root.join("qa.jsonl"))?,
            read_jsonl(&root.join("tasks.jsonl"))?,
            read_jsonl(&root.join("cot.jsonl"))?,
        )
    }

    /// Builds a corpus from in-memory parts, applying the same validation as [`Corpus::load`].
    pub fn from_parts(
        root: PathBuf,
        screens: BTreeMap<String, CorpusScreen>,
        summaries: Vec<SummaryRecord>,
        qa: Vec<QaRecord>,
        tasks: Vec<InstructionTask>,
        cot: Vec<CotRecord>,
    ) -> Result<Self, DatasetError> {
        let need = |file: &str, id: &str| -> Result<&CorpusScreen, DatasetError> {
            screens.get(id).ok_or_else(|| DatasetError::MissingScreen { file: file.into(), screen_id: id.into() })
        };
        let invalid = |file: &str, line: usize, msg: &str| DatasetError::InvalidRecord {
            file: file.into(),
            line,
            msg: msg.into(),
        };
        for (i, r) in summaries.iter().enumerate() {
            need("summaries.jsonl", &r.screen_id)?;
            if r.summaries.iter().all(|s| s.trim().is_empty()) {
                return Err(invalid("summaries.jsonl", i + 1, "record has no summary"));
            }
        }
        for (i, r) in qa.iter().enumerate() {
            need("qa.jsonl", &r.screen_id)?;
            if r.question.trim().is_empty() || r.answer.trim().is_empty() {
                return Err(invalid("qa.jsonl", i + 1, "question and answer must be non-empty"));
            }
        }
        for (i, t) in tasks.iter().enumerate() {
            if t.steps.is_empty() {
                return Err(invalid("tasks.jsonl", i + 1, "task has no steps"));
            }
            for (step, s) in t.steps.iter().enumerate() {
                let screen = need("tasks.jsonl", &s.screen_id)?;
                if s.gold_index >= screen.html.len() {
                    return Err(DatasetError::InvalidGoldIndex {
                        task_id: t.task_id.clone(),
                        step,
                        index: s.gold_index,
                        len: screen.html.len(),
                    });
                }
            }
        }
        for (i, r) in cot.iter().enumerate() {
            let screen = need("cot.jsonl", &r.screen_id)?;
            let n = screen.html.len();
            let ids = r.enumeration.iter().map(|f| f.id).chain(r.questions.iter().flat_map(|q| q.element_indexes.clone()));
            if let Some(bad) = ids.into_iter().find(|&id| id >= n) {
                return Err(invalid("cot.jsonl", i + 1, &format!("element id={bad} out of range ({n} elements)")));
            }
        }

        let mut packages = BTreeMap::new();
        for t in &tasks {
            for s in &t.steps {
                packages.entry(s.screen_id.clone()).or_insert_with(|| t.app_package.clone());
            }
        }
        for (id, s) in &screens {
            if let Some(pkg) = &s.source.app_package {
                packages.insert(id.clone(), pkg.clone());
            }
        }
        Ok(Self { root, screens, summaries, qa, tasks, cot, packages })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.screens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.screens.is_empty()
    }

    /// Screens in ascending id order.
    pub fn screens(&self) -> impl Iterator<Item = (&str, &CorpusScreen)> {
        self.screens.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn screen(&self, id: &str) -> Result<&CorpusScreen, DatasetError> {
        self.screens.get(id).ok_or_else(|| DatasetError::UnknownScreen(id.into()))
    }

    /// The screen's own package, else the package of a task visiting it.
    pub fn app_package(&self, screen_id: &str) -> Option<&str> {
        self.packages.get(screen_id).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    CrossApp,
    InApp,
    #[default]
    Any,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::CrossApp => "cross-app",
            SampleMode::InApp => "in-app",
            SampleMode::Any => "any",
        })
    }
}

impl FromStr for SampleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cross-app" | "crossapp" => Ok(SampleMode::CrossApp),
            "in-app" | "inapp" => Ok(SampleMode::InApp),
            "any" => Ok(SampleMode::Any),
            other => Err(format!("unknown sampling mode `{other}`")),
        }
    }
}

/// One candidate exemplar per screen, for the given task, in corpus order.
fn candidates(corpus: &Corpus, task: TaskKind) -> BTreeMap<&str, Vec<Candidate<'_>>> {
    let mut out: BTreeMap<&str, Vec<Candidate<'_>>> = BTreeMap::new();
    match task {
        TaskKind::Summarization => {
            for r in &corpus.summaries {
                out.entry(r.screen_id.as_str()).or_default().push(Candidate::Summary(r));
            }
        }
        TaskKind::QuestionAnswering => {
            for r in &corpus.qa {
                out.entry(r.screen_id.as_str()).or_default().push(Candidate::Qa(r));
            }
        }
        TaskKind::InstructionToAction => {
            for t in &corpus.tasks {
                for s in &t.steps {
                    out.entry(s.screen_id.as_str()).or_default().push(Candidate::Step(s));
                }
            }
        }
        TaskKind::QuestionGeneration => {
            for r in &corpus.cot {
                out.entry(r.screen_id.as_str()).or_default().push(Candidate::Cot(r));
            }
        }
    }
    out
}

enum Candidate<'a> {
    Summary(&'a SummaryRecord),
    Qa(&'a QaRecord),
    Step(&'a InstructionStep),
    Cot(&'a CotRecord),
}

impl Candidate<'_> {
    fn to_exemplar(&self, corpus: &Corpus, rng: &mut ChaCha8Rng) -> Exemplar {
        let screen = |id: &str| corpus.screens[id].html.clone();
        match self {
            Candidate::Summary(r) => {
                let usable: Vec<&String> = r.summaries.iter().filter(|s| !s.trim().is_empty()).collect();
                let pick = usable[rng.gen_range(0..usable.len())];
                Exemplar::summary(screen(&r.screen_id), pick.clone())
            }
            Candidate::Qa(r) => Exemplar::qa(screen(&r.screen_id), &r.question, &r.answer),
            Candidate::Step(s) => Exemplar::action(screen(&s.screen_id), &s.instruction, s.gold_index),
            Candidate::Cot(r) => {
                let html = screen(&r.screen_id);
                let block = r.to_block(&html);
                Exemplar::questions(html, block)
            }
        }
    }
}

/// Draws `n` exemplars from distinct screens other than the test screen.
///
/// Deterministic in `(corpus, task, n, seed, mode, test_screen_id)`.
pub fn sample_exemplars(
    corpus: &Corpus,
    task: TaskKind,
    n: usize,
    seed: u64,
    mode: SampleMode,
    test_screen_id: &str,
) -> Result<Vec<Exemplar>, DatasetError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let test_pkg = corpus.app_package(test_screen_id);
    let same_pkg = |id: &str| test_pkg.is_some() && corpus.app_package(id) == test_pkg;
    let by_screen = candidates(corpus, task);
    let mut pool: Vec<&str> = by_screen
        .keys()
        .copied()
        .filter(|id| *id != test_screen_id)
        .filter(|id| mode != SampleMode::CrossApp || !same_pkg(id))
        .collect();
    let insufficient = |available| DatasetError::InsufficientExemplars { task, mode, needed: n, available };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let chosen: Vec<&str> = match mode {
        SampleMode::InApp => {
            let Some(anchor) = pool.iter().position(|id| same_pkg(id)) else {
                return Err(insufficient(0));
            };
            let first = pool.remove(anchor);
            std::iter::once(first).chain(pool.iter().copied()).take(n).collect()
        }
        _ => pool.iter().copied().take(n).collect(),
    };
    if chosen.len() < n {
        return Err(insufficient(chosen.len()));
    }
    Ok(chosen
        .into_iter()
        .map(|id| {
            let options = &by_screen[id];
            let pick = &options[rng.gen_range(0..options.len())];
            pick.to_exemplar(corpus, &mut rng)
        })
        .collect())
}

/// Screen ids that are referenced by at least one record, for reporting.
pub fn referenced_screens(corpus: &Corpus) -> BTreeSet<&str> {
    let mut ids = BTreeSet::new();
    ids.extend(corpus.summaries.iter().map(|r| r.screen_id.as_str()));
    ids.extend(corpus.qa.iter().map(|r| r.screen_id.as_str()));
    ids.extend(corpus.tasks.iter().flat_map(|t| t.steps.iter().map(|s| s.screen_id.as_str())));
    ids.extend(corpus.cot.iter().map(|r| r.screen_id.as_str()));
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_screen(dir: &Path, id: &str, pkg: &str, texts: &[&str]) {
        let children: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let top = i as i64 * 100;
                json!({"class": "android.widget.TextView", "text": t, "bounds": [0, top, 1080, top + 90], "visible-to-user": true})
            })
            .collect();
        let doc = json!({"activity_name": format!("{pkg}/.Main"), "activity": {"root": {
            "class": "android.widget.FrameLayout", "bounds": [0, 0, 1080, 1920], "visible-to-user": true, "children": children
        }}});
        fs::write(dir.join("screens").join(format!("{id}.json")), doc.to_string()).unwrap();
    }

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("screens")).unwrap();
        for (id, pkg) in [("a1", "com.a"), ("a2", "com.a"), ("b1", "com.b"), ("c1", "com.c"), ("c2", "com.c")] {
            write_screen(dir.path(), id, pkg, &["one", "two", "three"]);
        }
        let lines = |recs: &[serde_json::Value]| recs.iter().map(|r| r.to_string() + "\n").collect::<String>();
        fs::write(
            dir.path().join("summaries.jsonl"),
            lines(&[
                json!({"screen_id": "a1", "summaries": ["first a", "second a"]}),
                json!({"screen_id": "b1", "summaries": ["b"]}),
                json!({"screen_id": "c1", "summaries": ["c"]}),
                json!({"screen_id": "c2", "summaries": ["c again"]}),
            ]),
        )
        .unwrap();
        fs::write(
            dir.path().join("qa.jsonl"),
            lines(&[json!({"screen_id": "a1", "question": "q?", "answer": "one", "answer_in_hierarchy": true})]),
        )
        .unwrap();
        fs::write(
            dir.path().join("tasks.jsonl"),
            lines(&[json!({"task_id": "t1", "app_package": "com.a", "steps": [
                {"screen_id": "a1", "instruction": "tap two", "gold_index": 1},
                {"screen_id": "a2", "instruction": "tap three", "gold_index": 2}
            ]})]),
        )
        .unwrap();
        dir
    }

    #[test]
    fn loads_and_cross_validates() {
        let dir = fixture();
        let corpus = Corpus::load(dir.path()).unwrap();
        assert_eq!(corpus.len(), 5);
        assert_eq!(corpus.app_package("b1"), Some("com.b"));
        assert_eq!(corpus.tasks[0].steps.len(), 2);
        assert_eq!(corpus, Corpus::load(dir.path()).unwrap());
        assert_eq!(referenced_screens(&corpus).len(), 5);
    }

    #[test]
    fn missing_screen_reference() {
        let dir = fixture();
        fs::write(
            dir.path().join("tasks.jsonl"),
            r#"{"task_id":"t","app_package":"p","steps":[{"screen_id":"zz","instruction":"i","gold_index":0}]}"#,
        )
        .unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatasetError::MissingScreen { .. })));
    }

    #[test]
    fn invalid_gold_index() {
        let dir = fixture();
        fs::write(
            dir.path().join("tasks.jsonl"),
            r#"{"task_id":"t","app_package":"p","steps":[{"screen_id":"a1","instruction":"i","gold_index":99}]}"#,
        )
        .unwrap();
        match Corpus::load(dir.path()) {
            Err(DatasetError::InvalidGoldIndex { index: 99, len: 3, step: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn layout_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatasetError::LayoutError(_))));
        fs::create_dir(dir.path().join("screens")).unwrap();
        fs::write(dir.path().join("qa.jsonl"), "not json\n").unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatasetError::InvalidRecord { line: 1, .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_excludes_test() {
        let corpus = Corpus::load(fixture().path()).unwrap();
        for seed in 0..20 {
            let a = sample_exemplars(&corpus, TaskKind::Summarization, 2, seed, SampleMode::Any, "c1").unwrap();
            let b = sample_exemplars(&corpus, TaskKind::Summarization, 2, seed, SampleMode::Any, "c1").unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|e| e.screen.screen_id != "c1"));
            assert_ne!(a[0].screen.screen_id, a[1].screen.screen_id);
        }
    }

    #[test]
    fn sampling_modes() {
        let corpus = Corpus::load(fixture().path()).unwrap();
        for seed in 0..20 {
            let ex = sample_exemplars(&corpus, TaskKind::Summarization, 2, seed, SampleMode::InApp, "c2").unwrap();
            assert!(ex.iter().any(|e| e.screen.screen_id == "c1"));
            let ex = sample_exemplars(&corpus, TaskKind::Summarization, 2, seed, SampleMode::CrossApp, "c2").unwrap();
            assert!(ex.iter().all(|e| corpus.app_package(&e.screen.screen_id) != Some("com.c")));
        }
        let err = sample_exemplars(&corpus, TaskKind::Summarization, 1, 0, SampleMode::InApp, "b1").unwrap_err();
        assert!(matches!(err, DatasetError::InsufficientExemplars { .. }));
        let err = sample_exemplars(&corpus, TaskKind::QuestionAnswering, 1, 0, SampleMode::Any, "a1").unwrap_err();
        assert!(matches!(err, DatasetError::InsufficientExemplars { available: 0, .. }));
        assert!(sample_exemplars(&corpus, TaskKind::QuestionAnswering, 0, 0, SampleMode::InApp, "a1").unwrap().is_empty());
    }

    #[test]
    fn action_exemplars_carry_gold_ids() {
        let corpus = Corpus::load(fixture().path()).unwrap();
        let ex = sample_exemplars(&corpus, TaskKind::InstructionToAction, 1, 3, SampleMode::InApp, "a2").unwrap();
        assert_eq!(ex[0].screen.screen_id, "a1");
        assert_eq!(ex[0].output, "1");
        assert_eq!(ex[0].task_input.as_deref(), Some("tap two"));
    }
}
