#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

pub fn screenllm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_screenllm")).args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn text_view(i: usize, text: &str) -> Value {
    let top = 100 + 20 * i as i64;
    json!({
        "class": "android.widget.TextView",
        "ancestors": ["android.view.View", "java.lang.Object"],
        "bounds": [0, top, 1440, top + 18],
        "visible-to-user": true,
        "resource-id": format!("com.example.big:id/row_label_{i}"),
        "text": text,
    })
}

fn screen(rows: Vec<Value>) -> Value {
    json!({
        "activity_name": "com.example.big/.Main",
        "activity": { "root": {
            "class": "android.widget.FrameLayout",
            "bounds": [0, 0, 1440, 2560],
            "visible-to-user": true,
            "package": "com.example.big",
            "children": rows,
        }},
    })
}

/// Corpus whose exemplar screens are about 700 approx-tokens each, so three
/// shots overflow a 1920-token budget while two fit.
pub fn oversized_corpus(root: &Path) {
    let screens = root.join("screens");
    fs::create_dir_all(&screens).unwrap();
    let mut summaries = String::new();
    for s in 0..4 {
        let rows = (0..40).map(|i| text_view(i, &format!("Entry {i} of the long list on page {s}"))).collect();
        fs::write(screens.join(format!("big_{s}.json")), screen(rows).to_string()).unwrap();
        summaries.push_str(&json!({ "screen_id": format!("big_{s}"), "summaries": [format!("long list page {s}")] }).to_string());
        summaries.push('\n');
    }
    let small = (0..3).map(|i| text_view(i, "Short")).collect();
    fs::write(screens.join("small.json"), screen(small).to_string()).unwrap();
    fs::write(root.join("summaries.jsonl"), summaries).unwrap();
}
