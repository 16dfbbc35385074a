//! Sequential vs parallel evaluation and conversion.
//!
//! `cargo bench -p screenllm --bench pipeline`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use screenllm::backend::{prompt_hash, BackendError, CompletionBackend, CompletionRequest, CompletionResult};
use screenllm::dataset::{Corpus, CorpusScreen, QaRecord, SampleMode};
use screenllm::eval::{run_eval, EvalConfig, Parallelism};
use screenllm::html::convert;
use screenllm::ingest::parse_view_hierarchy;
use screenllm::prompt::TaskKind;

/// Answers with a word of the prompt after hashing it a few rounds, standing
/// in for model latency without I/O.
struct HashingBackend {
    rounds: usize,
}

impl CompletionBackend for HashingBackend {
    fn id(&self) -> &str {
        "hashing"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let mut h = prompt_hash(&request.prompt_text);
        for _ in 0..self.rounds {
            h = prompt_hash(&h);
        }
        let word = request.prompt_text.split_whitespace().nth(h.len() % 7).unwrap_or("");
        Ok(CompletionResult { text: format!(" <SOA>{word}<EOA>"), backend_id: "hashing".into(), latency_ms: 0 })
    }
}

fn synthetic_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic/screens")
}

fn raw_screens() -> Vec<(String, Vec<u8>)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(synthetic_dir()).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths.into_iter().map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())).collect()
}

fn qa_corpus(raw: &[(String, Vec<u8>)]) -> Corpus {
    let mut screens = BTreeMap::new();
    let mut qa = Vec::new();
    for (id, bytes) in raw {
        let source = parse_view_hierarchy(id.clone(), bytes).unwrap();
        let html = convert(&source);
        for e in html.elements.iter().filter(|e| e.inner_text.is_some()).take(4) {
            qa.push(QaRecord {
                screen_id: id.clone(),
                question: format!("What does element {} say?", e.index),
                answer: e.inner_text.clone().unwrap(),
                answer_in_hierarchy: true,
            });
        }
        screens.insert(id.clone(), CorpusScreen { source, html });
    }
    Corpus::from_parts(synthetic_dir(), screens, Vec::new(), qa, Vec::new(), Vec::new()).unwrap()
}

fn bench_eval(c: &mut Criterion) {
    let corpus = qa_corpus(&raw_screens());
    let backend = HashingBackend { rounds: 2_000 };
    let mut group = c.benchmark_group("eval_qa");
    group.sample_size(10);
    group.throughput(Throughput::Elements(corpus.qa.len() as u64));
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    for (name, parallelism) in [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel(threads))] {
        let mut cfg = EvalConfig::new(TaskKind::QuestionAnswering, 1, 7, SampleMode::Any);
        cfg.parallelism = parallelism;
        group.bench_with_input(BenchmarkId::new(name, threads), &cfg, |b, cfg| {
            b.iter(|| run_eval(&corpus, &backend, cfg).unwrap().report.n_items)
        });
    }
    group.finish();
}

fn bench_convert(c: &mut Criterion) {
    let raw = raw_screens();
    let mut group = c.benchmark_group("convert");
    group.throughput(Throughput::Elements(raw.len() as u64));
    let one = |(id, bytes): &(String, Vec<u8>)| convert(&parse_view_hierarchy(id.clone(), bytes).unwrap()).len();
    group.bench_function("sequential", |b| b.iter(|| raw.iter().map(one).sum::<usize>()));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        group.bench_function("parallel", |b| b.iter(|| raw.par_iter().map(one).sum::<usize>()));
    }
    group.finish();
}

criterion_group!(benches, bench_eval, bench_convert);
criterion_main!(benches);
