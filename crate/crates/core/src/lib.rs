//! Prompting large language models for mobile UI tasks.
//!
//! Screens from Android view hierarchies are rendered as compact HTML, wrapped
//! in few-shot prompts, sent to a completion backend and scored.

pub mod backend;
pub mod dataset;
pub mod eval;
pub mod html;
pub mod ingest;
pub mod metrics;
pub mod parse;
pub mod prompt;
