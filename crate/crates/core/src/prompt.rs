//! Few-shot prompt assembly for the four screen tasks.
//!
//! A prompt is the task preamble, a blank line, `N` exemplar blocks and the
//! test block. Every block opens with `Screen:` followed by the screen HTML
//! and a blank line; exemplar blocks are separated by one blank line. The
//! exact layout is frozen in `docs/prompt-format.md` and golden-tested.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::html::{approx_tokens, ScreenHtml, Tag};

/// Default prompt budget, in approximate tokens.
pub const DEFAULT_BUDGET_TOKENS: usize = 1920;
/// Default cap on the number of exemplars in one prompt.
pub const DEFAULT_SHOT_CAP: usize = 2;

const QG_COUNT_QUESTION: &str = "Q: How many input tags are there on the screen?";
const QG_PURPOSE_QUESTION: &str = "Q: What is the purpose of the screen?";
pub(crate) const QG_ENUM_MARKER: &str = "including:";
pub(crate) const QG_ASK_MARKER: &str = "an agent will ask:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "generate-questions")]
    QuestionGeneration,
    #[serde(rename = "summarize")]
    Summarization,
    #[serde(rename = "qa")]
    QuestionAnswering,
    #[serde(rename = "act")]
    InstructionToAction,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::QuestionGeneration,
        TaskKind::Summarization,
        TaskKind::QuestionAnswering,
        TaskKind::InstructionToAction,
    ];

    /// Short name used on the command line, in URLs and file names.
    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::QuestionGeneration => "generate-questions",
            TaskKind::Summarization => "summarize",
            TaskKind::QuestionAnswering => "qa",
            TaskKind::InstructionToAction => "act",
        }
    }

    pub fn preamble(self) -> &'static str {
        match self {
            TaskKind::QuestionGeneration => {
                "Given a screen, the agent needs to identify the elements requiring user input and generates corresponding questions."
            }
            TaskKind::Summarization => "Given a screen, summarize its purpose.",
            TaskKind::QuestionAnswering => {
                "Given a mobile screen and a question, provide the answer based on the screen information."
            }
            TaskKind::InstructionToAction => {
                "Given a screen, an instruction, predict the id of the UI element to perform the instruction."
            }
        }
    }

    /// QA takes a question, instruction mapping takes an instruction.
    pub fn requires_input(self) -> bool {
        matches!(self, TaskKind::QuestionAnswering | TaskKind::InstructionToAction)
    }

    /// Default stop sequences: the closing delimiter plus the next screen marker.
    pub fn stop_sequences(self) -> Vec<String> {
        let close = match self {
            TaskKind::QuestionGeneration => None,
            TaskKind::Summarization => Some("<EOS>"),
            TaskKind::QuestionAnswering => Some("<EOA>"),
            TaskKind::InstructionToAction => Some("<EOI>"),
        };
        close.into_iter().chain(["\nScreen:"]).map(str::to_owned).collect()
    }

    pub fn default_max_output_tokens(self) -> u32 {
        match self {
            TaskKind::QuestionGeneration => 384,
            TaskKind::Summarization | TaskKind::QuestionAnswering => 64,
            TaskKind::InstructionToAction => 16,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "generate-questions" | "question-generation" | "qg" => Ok(TaskKind::QuestionGeneration),
            "summarize" | "summarization" | "summary" => Ok(TaskKind::Summarization),
            "qa" | "question-answering" => Ok(TaskKind::QuestionAnswering),
            "act" | "instruction-to-action" | "action" => Ok(TaskKind::InstructionToAction),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// A generated (or exemplar) question with the element ids it asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub element_indexes: Vec<usize>,
}

impl Question {
    /// `<SOQ>text (id=a, id=b)<EOQ>`; the annotation is omitted when empty.
    pub fn render(&self) -> String {
        if self.element_indexes.is_empty() {
            format!("<SOQ>{}<EOQ>", self.text)
        } else {
            let ids = self.element_indexes.iter().map(|i| format!("id={i}")).collect::<Vec<_>>();
            format!("<SOQ>{} ({})<EOQ>", self.text, ids.join(", "))
        }
    }
}

/// Intermediate reasoning shown in question-generation exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotBlock {
    pub input_field_count: usize,
    pub screen_summary: String,
    /// Slot in "It's a {page_label} page and there are ...".
    pub page_label: String,
    /// `(element index, purpose)`, rendered as `k. id=INDEX PURPOSE`.
    pub enumeration: Vec<(usize, String)>,
    pub questions: Vec<Question>,
}

impl CotBlock {
    fn render(&self) -> String {
        let mut s = format!(
            "Now reasoning starts:\n{QG_COUNT_QUESTION}\nA: {count}\n{QG_PURPOSE_QUESTION}\nA: {summary}\n\n\
             It's a {label} page and there are {count} input tags, {QG_ENUM_MARKER}\n",
            count = self.input_field_count,
            summary = self.screen_summary,
            label = self.page_label,
        );
        for (k, (index, purpose)) in self.enumeration.iter().enumerate() {
            s.push_str(&format!("{}. id={} {}\n", k + 1, index, purpose));
        }
        s.push_str(&format!("\nTo help the user proceed with the screen, {QG_ASK_MARKER}\n"));
        s.push_str(&render_questions(&self.questions));
        s
    }
}

pub fn render_questions(questions: &[Question]) -> String {
    questions.iter().map(Question::render).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub screen: ScreenHtml,
    pub task_input: Option<String>,
    pub chain_of_thought: Option<CotBlock>,
    /// Target text placed between the task's delimiters.
    pub output: String,
}

impl Exemplar {
    pub fn summary(screen: ScreenHtml, summary: impl Into<String>) -> Self {
        Self { screen, task_input: None, chain_of_thought: None, output: summary.into() }
    }

    pub fn qa(screen: ScreenHtml, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { screen, task_input: Some(question.into()), chain_of_thought: None, output: answer.into() }
    }

    pub fn action(screen: ScreenHtml, instruction: impl Into<String>, element_index: usize) -> Self {
        Self {
            screen,
            task_input: Some(instruction.into()),
            chain_of_thought: None,
            output: element_index.to_string(),
        }
    }

    pub fn questions(screen: ScreenHtml, cot: CotBlock) -> Self {
        let output = render_questions(&cot.questions);
        Self { screen, task_input: None, chain_of_thought: Some(cot), output }
    }

    fn validate(&self, task: TaskKind) -> Result<(), PromptError> {
        let bad = |msg: String| Err(PromptError::InvalidExemplar { screen_id: self.screen.screen_id.clone(), msg });
        if task.requires_input() != self.task_input.is_some() {
            return bad(format!("task input must be {} for {task}", if task.requires_input() { "present" } else { "absent" }));
        }
        let is_qg = task == TaskKind::QuestionGeneration;
        if is_qg != self.chain_of_thought.is_some() {
            return bad("chain of thought is required for question generation only".into());
        }
        if let Some(cot) = &self.chain_of_thought {
            let inputs = input_field_indexes(&self.screen).len();
            if cot.input_field_count != inputs {
                return bad(format!("chain of thought counts {} inputs, screen has {inputs}", cot.input_field_count));
            }
            let n = self.screen.len();
            let referenced = cot
                .enumeration
                .iter()
                .map(|(i, _)| *i)
                .chain(cot.questions.iter().flat_map(|q| q.element_indexes.iter().copied()));
            for i in referenced {
                if i >= n {
                    return bad(format!("element id={i} does not exist (screen has {n} elements)"));
                }
            }
        }
        Ok(())
    }

    fn render_block(&self, task: TaskKind) -> String {
        let input = self.task_input.as_deref().unwrap_or_default();
        let tail = match task {
            TaskKind::Summarization => format!("Summary: <SOS>{}<EOS>", self.output),
            TaskKind::QuestionAnswering => format!("Q: {input}\nA: <SOA>{}<EOA>", self.output),
            TaskKind::InstructionToAction => {
                format!("Instruction: {input}\nPrediction: id=<SOI>{}<EOI>", self.output)
            }
            TaskKind::QuestionGeneration => match &self.chain_of_thought {
                Some(cot) => cot.render(),
                None => self.output.clone(),
            },
        };
        format!("Screen:\n{}\n\n{tail}", self.screen.html_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowPolicy {
    #[default]
    Fail,
    DropLastExemplar,
}

impl FromStr for OverflowPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fail" => Ok(OverflowPolicy::Fail),
            "drop" | "drop-last-exemplar" => Ok(OverflowPolicy::DropLastExemplar),
            other => Err(format!("unknown overflow policy `{other}` (expected fail or drop)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub task: TaskKind,
    pub exemplars: Vec<Exemplar>,
    pub budget_tokens: usize,
    pub on_overflow: OverflowPolicy,
    pub shot_cap: usize,
}

impl PromptSpec {
    pub fn new(task: TaskKind, exemplars: Vec<Exemplar>) -> Self {
        Self {
            task,
            exemplars,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            on_overflow: OverflowPolicy::Fail,
            shot_cap: DEFAULT_SHOT_CAP,
        }
    }

    pub fn with_budget(mut self, budget_tokens: usize, on_overflow: OverflowPolicy) -> Self {
        self.budget_tokens = budget_tokens;
        self.on_overflow = on_overflow;
        self
    }

    pub fn with_shot_cap(mut self, cap: usize) -> Self {
        self.shot_cap = cap;
        self
    }

    pub fn shots(&self) -> usize {
        self.exemplars.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub approx_tokens: usize,
    pub shots_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt needs ~{tokens} tokens, budget is {budget}")]
    BudgetExceeded { tokens: usize, budget: usize },
    #[error("task {0} requires a question or instruction")]
    MissingTaskInput(TaskKind),
    #[error("task {0} takes no question or instruction")]
    UnexpectedTaskInput(TaskKind),
    #[error("{shots} exemplars requested, cap is {cap}")]
    TooManyShots { shots: usize, cap: usize },
    #[error("invalid exemplar on screen {screen_id}: {msg}")]
    InvalidExemplar { screen_id: String, msg: String },
}

/// Indexes of all `<input>` elements, ascending.
pub fn input_field_indexes(screen: &ScreenHtml) -> Vec<usize> {
    screen.elements.iter().filter(|e| e.tag == Tag::Input).map(|e| e.index).collect()
}

fn test_block(task: TaskKind, screen: &ScreenHtml, input: &str) -> String {
    let tail = match task {
        TaskKind::Summarization => "Summary:".to_owned(),
        TaskKind::QuestionAnswering => format!("Q: {input}\nA:"),
        TaskKind::InstructionToAction => format!("Instruction: {input}\nPrediction: id="),
        TaskKind::QuestionGeneration => format!(
            "Now reasoning starts:\n{QG_COUNT_QUESTION}\nA: {}\n{QG_PURPOSE_QUESTION}\nA:",
            input_field_indexes(screen).len()
        ),
    };
    format!("Screen:\n{}\n\n{tail}", screen.html_text)
}

fn assemble(task: TaskKind, exemplars: &[Exemplar], test: &str) -> String {
    let mut text = String::from(task.preamble());
    text.push_str("\n\n");
    for ex in exemplars {
        text.push_str(&ex.render_block(task));
        text.push_str("\n\n");
    }
    text.push_str(test);
    text
}

pub fn build_prompt(
    spec: &PromptSpec,
    test_screen: &ScreenHtml,
    test_input: Option<&str>,
) -> Result<Prompt, PromptError> {
    let task = spec.task;
    match (task.requires_input(), test_input) {
        (true, None) => return Err(PromptError::MissingTaskInput(task)),
        (false, Some(_)) => return Err(PromptError::UnexpectedTaskInput(task)),
        _ => {}
    }
    if spec.shots() > spec.shot_cap {
        return Err(PromptError::TooManyShots { shots: spec.shots(), cap: spec.shot_cap });
    }
    for ex in &spec.exemplars {
        ex.validate(task)?;
    }

    let test = test_block(task, test_screen, test_input.unwrap_or_default());
    let try_with = |k: usize| {
        let text = assemble(task, &spec.exemplars[..k], &test);
        let tokens = approx_tokens(&text);
        (text, tokens)
    };

    let n = spec.shots();
    let (text, tokens) = try_with(n);
    if tokens <= spec.budget_tokens {
        return Ok(Prompt { text, approx_tokens: tokens, shots_used: n });
    }
    if spec.on_overflow == OverflowPolicy::DropLastExemplar {
        for k in (0..n).rev() {
            let (text, tokens) = try_with(k);
            if tokens <= spec.budget_tokens {
                return Ok(Prompt { text, approx_tokens: tokens, shots_used: k });
            }
        }
    }
    Err(PromptError::BudgetExceeded { tokens, budget: spec.budget_tokens })
}

/// Rule-based question baseline: "What is {resource words}?" per input field.
pub fn template_baseline_questions(screen: &ScreenHtml) -> Vec<(String, usize)> {
    screen
        .elements
        .iter()
        .filter(|e| e.tag == Tag::Input)
        .map(|e| {
            let q = match &e.class_words {
                Some(words) => format!("What is {words}?"),
                None => "What is this field?".to_owned(),
            };
            (q, e.index)
        })
        .collect()
}
