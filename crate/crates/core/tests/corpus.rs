use std::path::{Path, PathBuf};

use screenllm::backend::ScriptedBackend;
use screenllm::dataset::{sample_exemplars, Corpus, SampleMode};
use screenllm::eval::{run_eval, EvalConfig, Parallelism};
use screenllm::prompt::TaskKind;

fn demo() -> Corpus {
    let root: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo");
    Corpus::load(root).unwrap()
}

#[test]
fn demo_corpus_shape() {
    let c = demo();
    assert_eq!(c.len(), 12);
    assert_eq!(c.qa.len(), 6);
    assert_eq!(c.tasks.len(), 4);
    assert_eq!(c.tasks.iter().map(|t| t.steps.len()).sum::<usize>(), 7);
    assert_eq!(c.app_package("app_drawer"), Some("com.google.android.apps.nexuslauncher"));
}

#[test]
fn sampling_respects_mode_and_excludes_test_screen() {
    let c = demo();
    let test = "settings_wifi";
    let pkg = c.app_package(test).unwrap().to_owned();
    for seed in 0..20 {
        let cross = sample_exemplars(&c, TaskKind::QuestionAnswering, 2, seed, SampleMode::CrossApp, test).unwrap();
        assert!(cross.iter().all(|e| c.app_package(&e.screen.screen_id) != Some(pkg.as_str())));
        let in_app = sample_exemplars(&c, TaskKind::InstructionToAction, 1, seed, SampleMode::InApp, test).unwrap();
        assert_eq!(c.app_package(&in_app[0].screen.screen_id), Some(pkg.as_str()));
        let any = sample_exemplars(&c, TaskKind::Summarization, 3, seed, SampleMode::Any, test).unwrap();
        assert!(any.iter().all(|e| e.screen.screen_id != test));
        let again = sample_exemplars(&c, TaskKind::Summarization, 3, seed, SampleMode::Any, test).unwrap();
        assert_eq!(any, again);
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let c = demo();
    let outputs: Vec<String> = (0..7).map(|i| format!("<SOI>{}<EOI>", i % 3)).collect();
    let mut cfg = EvalConfig::new(TaskKind::InstructionToAction, 1, 4, SampleMode::Any);
    let seq = run_eval(&c, &ScriptedBackend::new(outputs.clone()), &cfg).unwrap();
    cfg.parallelism = Parallelism::from_limit(4);
    let par = run_eval(&c, &ScriptedBackend::new(outputs), &cfg).unwrap();
    let ids = |o: &screenllm::eval::EvalOutcome| o.items.iter().map(|i| i.item_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&seq), ids(&par));
    assert_eq!(seq.report.n_items, par.report.n_items);
}
