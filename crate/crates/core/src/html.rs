//! HTML screen representation.
//!
//! Every visible leaf becomes one line:
//!
//! ```text
//! <TAG id=N[ class="WORDS"][ alt="DESC"]> TEXT </TAG>
//! ```
//!
//! `N` is the leaf's depth-first position, `WORDS` the resource name with
//! underscores turned into spaces, `DESC` the content description.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::{Bounds, ScreenDims, ScreenSource, UiNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    P,
    Button,
    Img,
    Input,
    Div,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::P => "p",
            Tag::Button => "button",
            Tag::Img => "img",
            Tag::Input => "input",
            Tag::Div => "div",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Substring rules in precedence order, matched against lowercased simple names.
const CLASS_RULES: [(&str, Tag); 4] = [
    ("edittext", Tag::Input),
    ("button", Tag::Button),
    ("image", Tag::Img),
    ("textview", Tag::P),
];

fn simple_name(class_name: &str) -> &str {
    class_name.rsplit(['.', '$']).next().unwrap_or(class_name)
}

fn match_name(name: &str) -> Option<Tag> {
    let lower = simple_name(name).to_lowercase();
    CLASS_RULES.iter().find(|(needle, _)| lower.contains(needle)).map(|&(_, tag)| tag)
}

/// Maps an Android class to an HTML tag, trying the class itself first and
/// then each ancestor class in order.
pub fn map_class(class_name: &str, ancestors: &[String]) -> Tag {
    std::iter::once(class_name)
        .chain(ancestors.iter().map(String::as_str))
        .find_map(match_name)
        .unwrap_or(Tag::Div)
}

/// `"pkg:id/unread_count_textView"` becomes `"unread count textView"`.
pub fn resource_words(resource_id: &str) -> Option<String> {
    let name = match resource_id.rsplit_once('/') {
        Some((_, name)) => name,
        None => resource_id.rsplit_once(':').map_or(resource_id, |(_, n)| n),
    };
    let words = name.split('_').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ");
    (!words.is_empty()).then_some(words)
}

/// Escapes `&`, `<`, `>` and `"` for attribute values and inner text.
pub fn escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

fn flatten_lines(s: &str) -> String {
    s.replace("\r\n", " ").replace(['\n', '\r'], " ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtmlElement {
    pub index: usize,
    pub tag: Tag,
    pub class_words: Option<String>,
    pub alt_text: Option<String>,
    pub inner_text: Option<String>,
    /// The view-hierarchy node this line was rendered from.
    pub source: UiNode,
}

impl HtmlElement {
    pub fn bounds(&self) -> Bounds {
        self.source.bounds
    }

    pub fn render_line(&self) -> String {
        let mut line = format!("<{} id={}", self.tag, self.index);
        if let Some(words) = &self.class_words {
            line.push_str(&format!(" class=\"{}\"", escape(&flatten_lines(words))));
        }
        if let Some(alt) = &self.alt_text {
            line.push_str(&format!(" alt=\"{}\"", escape(&flatten_lines(alt))));
        }
        let text = self.inner_text.as_deref().map(flatten_lines).unwrap_or_default();
        line.push_str(&format!("> {} </{}>", escape(&text), self.tag));
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenHtml {
    pub screen_id: String,
    pub elements: Vec<HtmlElement>,
    pub html_text: String,
    pub approx_tokens: usize,
}

/// Token estimate used for prompt budgets: one token per four characters.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn render_screen(leaves: &[&UiNode], screen_id: impl Into<String>) -> ScreenHtml {
    let elements: Vec<HtmlElement> = leaves
        .iter()
        .enumerate()
        .map(|(index, node)| HtmlElement {
            index,
            tag: map_class(&node.class_name, &node.ancestors),
            class_words: node.resource_id.as_deref().and_then(resource_words),
            alt_text: node.content_desc.clone(),
            inner_text: node.text.clone(),
            source: (*node).clone(),
        })
        .collect();
    let html_text = elements.iter().map(HtmlElement::render_line).collect::<Vec<_>>().join("\n");
    let approx_tokens = approx_tokens(&html_text);
    ScreenHtml { screen_id: screen_id.into(), elements, html_text, approx_tokens }
}

/// Ingested screen to HTML in one step.
pub fn convert(source: &ScreenSource) -> ScreenHtml {
    let leaves = crate::ingest::select_visible_leaves(source);
    render_screen(&leaves, source.screen_id.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("element index {index} out of range for screen with {len} elements")]
pub struct IndexOutOfRange {
    pub index: i64,
    pub len: usize,
}

impl ScreenHtml {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn lookup_element(&self, index: i64) -> Result<&HtmlElement, IndexOutOfRange> {
        usize::try_from(index)
            .ok()
            .and_then(|i| self.elements.get(i))
            .ok_or(IndexOutOfRange { index, len: self.elements.len() })
    }

    /// Screen extent used to normalize element bounds: the known screen size,
    /// or the bounding box of all elements.
    pub fn extent(&self, dims: Option<ScreenDims>) -> ScreenDims {
        dims.unwrap_or_else(|| ScreenDims {
            width: self.elements.iter().map(|e| e.bounds().right).max().unwrap_or(1).max(1),
            height: self.elements.iter().map(|e| e.bounds().bottom).max().unwrap_or(1).max(1),
        })
    }
}

pub fn lookup_element(screen: &ScreenHtml, index: i64) -> Result<&HtmlElement, IndexOutOfRange> {
    screen.lookup_element(index)
}
