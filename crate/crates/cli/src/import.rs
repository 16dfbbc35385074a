//! Upstream format converters.
//!
//! `screen2words`: CSV with `screenId,summary` rows, several rows per
//! screen. Output is `summaries.jsonl`, one record per screen in first-seen
//! order.
//!
//! `qa`: CSV with `screen_id,question,answer[,answer_in_hierarchy]`. When
//! the flag column is missing and `--corpus` is given, the flag is computed
//! by searching the normalized answer in the screen's element texts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Deserialize;

use screenllm::dataset::{Corpus, QaRecord, SummaryRecord};
use screenllm::html::ScreenHtml;
use screenllm::metrics::normalize;

use crate::CliError;

#[derive(Debug, Subcommand)]
pub enum ImportCommand {
    /// Screen2Words summary CSV to summaries.jsonl.
    Screen2words(ImportArgs),
    /// Screen QA CSV to qa.jsonl.
    Qa(ImportQaArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportQaArgs {
    #[command(flatten)]
    pub io: ImportArgs,
    /// Corpus used to compute `answer_in_hierarchy` when the CSV lacks it.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    #[serde(alias = "screen_id")]
    #[serde(rename = "screenId")]
    screen_id: String,
    summary: String,
}

#[derive(Debug, Deserialize)]
struct QaRow {
    #[serde(alias = "screenId")]
    screen_id: String,
    question: String,
    answer: String,
    answer_in_hierarchy: Option<bool>,
}

pub fn run(cmd: &ImportCommand) -> Result<(), CliError> {
    match cmd {
        ImportCommand::Screen2words(a) => {
            let records = import_screen2words(&fs::read(&a.csv).map_err(|e| io_err(&a.csv, e))?)?;
            write_jsonl(&a.out, &records)
        }
        ImportCommand::Qa(a) => {
            let corpus = a.corpus.as_ref().map(Corpus::load).transpose()?;
            let records = import_qa(&fs::read(&a.io.csv).map_err(|e| io_err(&a.io.csv, e))?, corpus.as_ref())?;
            write_jsonl(&a.io.out, &records)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn rows<T: for<'de> Deserialize<'de>>(csv_bytes: &[u8]) -> Result<Vec<T>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_bytes);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::Input(format!("csv row {}: {e}", i + 2))))
        .collect()
}

pub fn import_screen2words(csv_bytes: &[u8]) -> Result<Vec<SummaryRecord>, CliError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for row in rows::<SummaryRow>(csv_bytes)? {
        if row.summary.is_empty() {
            continue;
        }
        let entry = grouped.entry(row.screen_id.clone()).or_insert_with(|| {
            order.push(row.screen_id.clone());
            Vec::new()
        });
        entry.push(row.summary);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let summaries = grouped.remove(&id).unwrap_or_default();
            SummaryRecord { screen_id: id, summaries }
        })
        .collect())
}

/// True when the normalized answer occurs in the normalized text of one element.
pub fn answer_in_screen(answer: &str, screen: &ScreenHtml) -> bool {
    let needle = normalize(answer).joined().to_owned();
    if needle.is_empty() {
        return false;
    }
    screen.elements.iter().any(|e| {
        [&e.inner_text, &e.alt_text].into_iter().flatten().any(|t| normalize(t).joined().contains(&needle))
    })
}

pub fn import_qa(csv_bytes: &[u8], corpus: Option<&Corpus>) -> Result<Vec<QaRecord>, CliError> {
    rows::<QaRow>(csv_bytes)?
        .into_iter()
        .map(|row| {
            let answer_in_hierarchy = match (row.answer_in_hierarchy, corpus) {
                (Some(flag), _) => flag,
                (None, Some(c)) => answer_in_screen(&row.answer, &c.screen(&row.screen_id)?.html),
                (None, None) => true,
            };
            Ok(QaRecord { screen_id: row.screen_id, question: row.question, answer: row.answer, answer_in_hierarchy })
        })
        .collect()
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.write_all(b"\n")?;
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
