//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use screenllm::backend::ScriptedBackend;
use screenllm::dataset::{Corpus, SampleMode};
use screenllm::eval::{render_table, run_eval, table_columns, EvalConfig};
use screenllm::html::{convert, Tag};
use screenllm::ingest::{parse_view_hierarchy, select_visible_leaves};
use screenllm::metrics::{
    action_match, bleu, classify_answer, coverage_f1, micro_f1, rouge_l, AnswerMatch, Prf, Step, ROUGE_BETA,
};
use screenllm::parse::{parse_action, parse_answer, parse_cot, parse_output, parse_questions, parse_summary, parse_tagged};
use screenllm::prompt::TaskKind;

use common::{fixtures, oversized_corpus, screenllm as run_cli};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {:.2} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn golden_prompts() -> Check {
    let start = Instant::now();
    let dir = fixtures().join("golden/prompts");
    let corpus = fixtures().join("reference");
    let cases: Vec<Value> = serde_json::from_str(&fs::read_to_string(dir.join("cases.json")).unwrap()).unwrap();
    ensure(cases.len() >= 5, || format!("only {} golden cases", cases.len()))?;
    let mut tasks = BTreeSet::new();
    for case in &cases {
        let s = |k: &str| case[k].as_str().map(str::to_owned);
        let n = |k: &str| case[k].as_u64().unwrap_or(0).to_string();
        let (task, screen) = (s("task").unwrap(), s("screen").unwrap());
        let (shots, seed) = (n("shots"), n("seed"));
        let mut args = vec![
            "prompt", "--corpus", corpus.to_str().unwrap(), "--task", &task, "--screen", &screen, "--shots", &shots,
            "--seed", &seed,
        ];
        let question = s("question");
        let instruction = s("instruction");
        if let Some(q) = &question {
            args.extend(["--question", q]);
        }
        if let Some(i) = &instruction {
            args.extend(["--instruction", i]);
        }
        let out = run_cli(&args);
        let file = s("file").unwrap();
        ensure(out.status.success(), || format!("{file}: exit {:?}", out.status.code()))?;
        let golden = fs::read(dir.join(&file)).unwrap();
        ensure(out.stdout == golden, || format!("{file}: output differs from golden"))?;
        tasks.insert(task);
    }
    ensure(tasks.len() == 4, || format!("golden files cover {} tasks", tasks.len()))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} prompts byte-equal across 4 tasks", cases.len()))
}

fn conversion_invariants() -> Check {
    let start = Instant::now();
    let root = fixtures().join("synthetic");
    let mut screens = 0;
    let mut elements = 0;
    for i in 0..50 {
        let id = format!("syn_{i:02}");
        let raw = fs::read(root.join("screens").join(format!("{id}.json"))).unwrap();
        let source = parse_view_hierarchy(id.clone(), &raw).map_err(|e| format!("{id}: {e}"))?;
        let html = convert(&source);
        let golden = fs::read_to_string(root.join("golden").join(format!("{id}.html"))).unwrap();
        ensure(html.html_text == golden, || format!("{id}: HTML differs from independent renderer"))?;

        let leaves = select_visible_leaves(&source);
        ensure(leaves.len() == html.len(), || format!("{id}: {} leaves, {} elements", leaves.len(), html.len()))?;
        for (k, e) in html.elements.iter().enumerate() {
            ensure(e.index == k, || format!("{id}: element {k} carries id {}", e.index))?;
        }
        for line in html.html_text.lines().enumerate() {
            ensure(line.1.contains(&format!(" id={} ", line.0)) || line.1.contains(&format!(" id={}>", line.0)), || {
                format!("{id}: line {} does not carry id={}", line.0, line.0)
            })?;
        }
        let order: Vec<*const _> = source.root.preorder().into_iter().map(|n| n as *const _).collect();
        let positions: Vec<usize> = leaves
            .iter()
            .map(|l| order.iter().position(|p| std::ptr::eq(*p, *l)).expect("leaf in tree"))
            .collect();
        ensure(positions.windows(2).all(|w| w[0] < w[1]), || format!("{id}: ids not in depth-first order"))?;
        for a in &leaves {
            let below: Vec<_> = a.preorder().into_iter().skip(1).collect();
            for b in &leaves {
                ensure(!below.iter().any(|n| std::ptr::eq(*n, *b)), || format!("{id}: rendered node has a rendered descendant"))?;
            }
        }

        let showcase: Vec<Tag> = html
            .elements
            .iter()
            .filter(|e| e.class_words.as_deref() == Some("unread count textView"))
            .map(|e| e.tag)
            .collect();
        let want = [Tag::Input, Tag::Button, Tag::Img, Tag::P, Tag::Div];
        ensure(showcase == want, || format!("{id}: showcase tags {showcase:?}"))?;
        screens += 1;
        elements += html.len();
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{screens} screens, {elements} elements"))
}

const VOCAB: [&str; 12] = ["the", "Version", "2.7.3", "2016", "dec", "23rd,", "a", "B", "c.", "cat", "(x)", "mat"];

fn phrase(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(if rng.gen() { " " } else { "  " })
}

fn oracle_norm(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in s.split(' ').filter(|w| !w.is_empty()) {
        let mut chars: Vec<char> = word.to_lowercase().chars().collect();
        while chars.first().is_some_and(|c| c.is_ascii_punctuation()) {
            chars.remove(0);
        }
        while chars.last().is_some_and(|c| c.is_ascii_punctuation()) {
            chars.pop();
        }
        if !chars.is_empty() {
            out.push(chars.into_iter().collect());
        }
    }
    out
}

fn oracle_classify(pred: &str, gt: &str) -> AnswerMatch {
    let p = oracle_norm(pred).join(" ");
    let g = oracle_norm(gt).join(" ");
    if p == g {
        AnswerMatch::ExactMatch
    } else if !g.is_empty() && p.contains(&g) {
        AnswerMatch::ContainsGt
    } else if !p.is_empty() && g.contains(&p) {
        AnswerMatch::SubStringOfGt
    } else {
        AnswerMatch::NoMatch
    }
}

fn oracle_micro_f1(pairs: &[(String, String)]) -> f64 {
    let (mut overlap, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (p, g) in pairs {
        let p = oracle_norm(p);
        let mut g = oracle_norm(g);
        np += p.len();
        ng += g.len();
        for t in &p {
            if let Some(k) = g.iter().position(|x| x == t) {
                g.remove(k);
                overlap += 1;
            }
        }
    }
    let prec = if np == 0 { 0.0 } else { overlap as f64 / np as f64 };
    let rec = if ng == 0 { 0.0 } else { overlap as f64 / ng as f64 };
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

fn oracle_coverage(gt: &[bool], pred: &[bool]) -> (f64, f64, f64) {
    let tp = gt.iter().zip(pred).filter(|(g, p)| **g && **p).count() as f64;
    let ng = gt.iter().filter(|g| **g).count() as f64;
    let np = pred.iter().filter(|p| **p).count() as f64;
    if ng == 0.0 && np == 0.0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if np == 0.0 { 0.0 } else { tp / np };
    let r = if ng == 0.0 { 0.0 } else { tp / ng };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2023);
    let instances = 250;
    for i in 0..instances {
        let (p, g) = (phrase(&mut rng, 4), phrase(&mut rng, 4));
        ensure(classify_answer(&p, &g) == oracle_classify(&p, &g), || format!("classify #{i}: {p:?} vs {g:?}"))?;

        let pairs: Vec<(String, String)> =
            (0..rng.gen_range(1..5)).map(|_| (phrase(&mut rng, 5), phrase(&mut rng, 5))).collect();
        let (got, want) = (micro_f1(&pairs), oracle_micro_f1(&pairs));
        ensure(close(got, want), || format!("micro_f1 #{i}: {got} vs {want}"))?;

        let n = rng.gen_range(0..8);
        let gt: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let set = |v: &[bool]| v.iter().enumerate().filter(|x| *x.1).map(|x| x.0).collect::<BTreeSet<usize>>();
        let Prf { precision, recall, f1 } = coverage_f1(&set(&gt), &set(&pred));
        let (p, r, f) = oracle_coverage(&gt, &pred);
        ensure(close(precision, p) && close(recall, r) && close(f1, f), || format!("coverage #{i}"))?;

        let tasks: Vec<Vec<Step>> = (0..rng.gen_range(1..5))
            .map(|_| {
                (0..rng.gen_range(1..5))
                    .map(|_| {
                        let gold = rng.gen_range(0..4);
                        let pred = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..4)) };
                        (gold, pred)
                    })
                    .collect()
            })
            .collect();
        let mut steps = 0;
        let mut ok = 0;
        let mut complete = 0;
        for t in &tasks {
            let mut all = true;
            for (gold, pred) in t {
                steps += 1;
                if *pred == Some(*gold) {
                    ok += 1;
                } else {
                    all = false;
                }
            }
            complete += usize::from(all);
        }
        let s = action_match(&tasks).map_err(|e| e.to_string())?;
        ensure(
            close(s.partial_pct, 100.0 * ok as f64 / steps as f64)
                && close(s.complete_pct, 100.0 * complete as f64 / tasks.len() as f64),
            || format!("action_match #{i}"),
        )?;
    }
    ensure(classify_answer("version 2.7.3", "2.7.3") == AnswerMatch::ContainsGt, || "version 2.7.3".into())?;
    ensure(classify_answer("2016", "Dec 23rd, 2016") == AnswerMatch::SubStringOfGt, || "2016".into())?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{instances} random instances x 4 metrics, anchored cases hold"))
}

fn demo_report_tables() -> Result<Vec<(TaskKind, String)>, String> {
    let corpus = Corpus::load(fixtures().join("demo")).map_err(|e| e.to_string())?;
    let qg = "Now reasoning starts:\nQ: How many input tags are there on the screen?\nA: 1\nQ: What is the purpose of the screen?\nA: x\n\nIt's a x page and there are 1 input tags, including:\n1. id=0 asks for x.\n\nTo help the user proceed with the screen, an agent will ask:\n<SOQ>x? (id=0)<EOQ>";
    let outputs = |task: TaskKind| -> Vec<&str> {
        let one = match task {
            TaskKind::QuestionGeneration => qg,
            TaskKind::Summarization => " <SOS>settings screen<EOS>",
            TaskKind::QuestionAnswering => " <SOA>x<EOA>",
            TaskKind::InstructionToAction => "<SOI>0<EOI>",
        };
        vec![one; 64]
    };
    TaskKind::ALL
        .iter()
        .map(|&task| {
            let backend = ScriptedBackend::new(outputs(task));
            let cfg = EvalConfig::new(task, 0, 0, SampleMode::Any);
            let outcome = run_eval(&corpus, &backend, &cfg).map_err(|e| e.to_string())?;
            Ok((task, render_table(&outcome.report, "0-shot")))
        })
        .collect()
}

fn formula_consistency() -> Check {
    let f1 = Prf::from_pr(0.954, 0.963).f1;
    ensure((f1 - 0.9585).abs() <= 5e-4, || format!("coverage F1 {f1:.5}"))?;
    let expected: [(TaskKind, &[&str]); 4] = [
        (TaskKind::QuestionGeneration, &["Model", "Precision", "Recall", "F1"]),
        (TaskKind::Summarization, &["Model", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L"]),
        (TaskKind::QuestionAnswering, &["Model", "Exact Matches", "Contains GT", "Sub-String of GT", "Micro-F1"]),
        (TaskKind::InstructionToAction, &["Model", "Partial", "Complete"]),
    ];
    let tables = demo_report_tables()?;
    for (task, cols) in expected {
        ensure(table_columns(task) == cols, || format!("{task}: columns {:?}", table_columns(task)))?;
        let table = &tables.iter().find(|t| t.0 == task).unwrap().1;
        let header: Vec<&str> = table.lines().nth(1).unwrap().split(" | ").map(str::trim).collect();
        ensure(header == cols, || format!("{task}: rendered header {header:?}"))?;
        let row: Vec<&str> = table.lines().nth(3).unwrap().split(" | ").collect();
        ensure(row.len() == cols.len(), || format!("{task}: row has {} cells", row.len()))?;
    }
    Ok(format!("F1 = {f1:.4}, column sets of all four tables match"))
}

fn bleu_rouge_sanity() -> Check {
    let same = bleu(&["the cat sat on the mat"], &[vec!["the cat sat on the mat"]], 4).unwrap();
    ensure(same.values().all(|v| (v - 1.0).abs() < 1e-12), || format!("identical: {same:?}"))?;
    let rl = rouge_l(&["the cat sat on the mat"], &[vec!["the cat sat on the mat"]], ROUGE_BETA).unwrap();
    ensure((rl - 1.0).abs() < 1e-12, || format!("identical ROUGE-L {rl}"))?;
    let disjoint = bleu(&["a b c d"], &[vec!["w x y z"]], 4).unwrap();
    ensure(disjoint.values().all(|v| *v == 0.0), || format!("disjoint: {disjoint:?}"))?;
    ensure(rouge_l(&["a b c d"], &[vec!["w x y z"]], ROUGE_BETA).unwrap() == 0.0, || "disjoint ROUGE-L".into())?;
    let bp = bleu(&["the cat sat"], &[vec!["the cat sat down"]], 1).unwrap()[&1];
    ensure((bp - 0.7165).abs() < 1e-4, || format!("BP case {bp:.5}"))?;
    let r = rouge_l(&["a b c d"], &[vec!["a c d"]], ROUGE_BETA).unwrap();
    ensure((r - 0.836).abs() < 1e-3, || format!("ROUGE-L case {r:.4}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words = ["a", "b", "c", "d", "e"];
    let sentence = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(4..12);
        (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    for k in 0..100 {
        let size = rng.gen_range(1..6);
        let cands: Vec<String> = (0..size).map(|_| sentence(&mut rng)).collect();
        let refs: Vec<Vec<String>> = (0..size).map(|_| vec![sentence(&mut rng)]).collect();
        let b = bleu(&cands, &refs, 4).unwrap();
        for n in 1..4 {
            ensure(b[&(n + 1)] <= b[&n] + 1e-12, || format!("corpus {k}: BLEU-{} > BLEU-{n}: {b:?}", n + 1))?;
        }
    }
    Ok("identity, disjoint, BP 0.7165, ROUGE-L 0.836, 100 corpora monotone".into())
}

fn eval_twice(args: &[&str]) -> Result<(Value, String), String> {
    let corpus = fixtures().join("demo");
    let store = corpus.join("recordings.jsonl");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut full = vec![
            "eval", "--corpus", corpus.to_str().unwrap(), "--backend", "replay", "--store", store.to_str().unwrap(),
            "--out", dir.path().to_str().unwrap(),
        ];
        full.extend_from_slice(args);
        let out = run_cli(&full);
        ensure(out.status.success(), || format!("eval {args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
        outputs.push((read("report.json"), read("report.txt"), read("items.jsonl")));
    }
    ensure(outputs[0] == outputs[1], || format!("eval {args:?}: runs differ"))?;
    let (json, txt, _) = &outputs[0];
    Ok((serde_json::from_slice(json).unwrap(), String::from_utf8(txt.clone()).unwrap()))
}

fn end_to_end_replay() -> Check {
    let start = Instant::now();
    let (qa, _) = eval_twice(&["--task", "qa", "--shots", "1", "--seed", "7", "--parallel", "4"])?;
    let rate = |k: &str| qa["qa"][k].as_f64().unwrap();
    ensure(qa["n_items"] == 5, || format!("qa items {}", qa["n_items"]))?;
    ensure(close(rate("exact_rate"), 0.6), || format!("exact_rate {}", rate("exact_rate")))?;
    ensure(close(rate("contains_rate"), 0.2), || format!("contains_rate {}", rate("contains_rate")))?;
    ensure(close(rate("substring_rate"), 0.0), || format!("substring_rate {}", rate("substring_rate")))?;
    let f1 = 2.0 * 0.7 * 0.875 / (0.7 + 0.875);
    ensure(close(rate("micro_f1"), f1), || format!("micro_f1 {}", rate("micro_f1")))?;
    for mode in ["in-app", "cross-app"] {
        let (act, _) = eval_twice(&["--task", "act", "--shots", "1", "--seed", "7", "--mode", mode])?;
        let a = &act["action"];
        let (partial, complete) = (a["partial_pct"].as_f64().unwrap(), a["complete_pct"].as_f64().unwrap());
        ensure(close(partial, 500.0 / 7.0) && close(complete, 50.0), || format!("{mode}: {partial} / {complete}"))?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok("qa exact 60.00 contains 20.00 micro-F1 77.78; act partial 71.43 complete 50.00; byte-identical reruns".into())
}

fn budget_enforcement() -> Check {
    let dir = tempfile::tempdir().unwrap();
    oversized_corpus(dir.path());
    let root = dir.path().to_str().unwrap();
    let base = ["prompt", "--corpus", root, "--task", "summarize", "--shots", "3", "--seed", "2", "--screen", "small", "--stats"];
    let fail = run_cli(&base);
    ensure(fail.status.code() == Some(3), || format!("fail mode exit {:?}", fail.status.code()))?;
    let mut drop = base.to_vec();
    drop.extend(["--on-overflow", "drop"]);
    let out = run_cli(&drop);
    ensure(out.status.success(), || format!("drop mode exit {:?}", out.status.code()))?;
    let stats: Value = serde_json::from_slice(&out.stderr).map_err(|e| e.to_string())?;
    let (shots, tokens) = (stats["shots_used"].as_u64().unwrap(), stats["approx_tokens"].as_u64().unwrap());
    ensure(shots < 3 && tokens <= 1920, || format!("shots_used {shots}, approx_tokens {tokens}"))?;
    Ok(format!("fail mode exit 3; drop mode shots_used {shots} < 3, {tokens} tokens <= 1920"))
}

const FRAGMENTS: [&str; 24] = [
    "<SOA>", "<EOA>", "<SOI>", "<EOI>", "<SOS>", "<EOS>", "<SOQ>", "<EOQ>", "id=", "(id=", ")", ", ", "\n", "A: ",
    "Q: ", "1. ", "99999999999999999999999", "-3", "Now reasoning starts:", "input tags", "é", "日本", "\u{0}", "\u{202e}",
];

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..24) {
        match rng.gen_range(0..3) {
            0 => s.push_str(FRAGMENTS.choose(rng).unwrap()),
            1 => s.push(rng.gen_range('0'..='9')),
            _ => s.push(rng.gen::<char>()),
        }
    }
    s
}

fn parser_totality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut aborts = 0;
    let n = 10_000;
    for _ in 0..n {
        let s = fuzz_input(&mut rng);
        let ok = catch_unwind(AssertUnwindSafe(|| {
            let _ = parse_tagged(&s, "<SOA>", "<EOA>");
            let _ = parse_questions(&s);
            let _ = parse_summary(&s);
            let _ = parse_answer(&s);
            let _ = parse_action(&s);
            let _ = parse_cot(&s);
            for task in TaskKind::ALL {
                let _ = parse_output(task, &s);
            }
        }));
        aborts += usize::from(ok.is_err());
    }
    std::panic::set_hook(prev);
    ensure(aborts == 0, || format!("{aborts} of {n} inputs aborted"))?;
    Ok(format!("{n} random strings, 0 aborts"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("golden prompt reproduction", golden_prompts),
        ("conversion invariants", conversion_invariants),
        ("metric oracle equivalence", metric_oracles),
        ("formula consistency", formula_consistency),
        ("BLEU/ROUGE sanity", bleu_rouge_sanity),
        ("end-to-end replay run", end_to_end_replay),
        ("budget enforcement", budget_enforcement),
        ("parser totality fuzz", parser_totality),
    ];
    assert!(Path::new(env!("CARGO_BIN_EXE_screenllm")).exists());
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name:<28} {secs:>6.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {secs:>6.2}s  {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
