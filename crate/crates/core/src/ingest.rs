//! RICO-style view-hierarchy ingestion and visible-leaf selection.
//!
//! Accepted node fields: `class`, `ancestors`, `text`, `resource-id`,
//! `content-desc` (string, or the first element of an array), `bounds`
//! (`[left, top, right, bottom]`), `visible-to-user` and `children`.
//! Anything else in the JSON is ignored.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Screen-pixel rectangle, `left <= right` and `top <= bottom` once ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
}

impl Bounds {
    pub fn new(left: i64, top: i64, right: i64, bottom: i64) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn width(&self) -> i64 {
        self.right - self.left
    }

    pub fn height(&self) -> i64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> i64 {
        self.width().max(0) * self.height().max(0)
    }

    /// Collapses inverted edges onto the left/top edge. Returns whether
    /// anything changed.
    fn clamp(&mut self) -> bool {
        let mut changed = false;
        if self.right < self.left {
            self.right = self.left;
            changed = true;
        }
        if self.bottom < self.top {
            self.bottom = self.top;
            changed = true;
        }
        changed
    }

    /// True when the two rectangles share a region of positive area.
    pub fn overlaps(&self, other: &Bounds) -> bool {
        self.left.max(other.left) < self.right.min(other.right)
            && self.top.max(other.top) < self.bottom.min(other.bottom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: i64,
    pub height: i64,
}

impl ScreenDims {
    pub fn rect(&self) -> Bounds {
        Bounds::new(0, 0, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiNode {
    pub class_name: String,
    pub ancestors: Vec<String>,
    pub text: Option<String>,
    pub resource_id: Option<String>,
    pub content_desc: Option<String>,
    pub bounds: Bounds,
    pub visible_to_user: bool,
    /// Set when the source bounds were inverted and had to be collapsed.
    pub bounds_clamped: bool,
    pub children: Vec<UiNode>,
}

impl UiNode {
    /// A childless visible node, mostly useful for tests and fixtures.
    pub fn leaf(class_name: impl Into<String>, bounds: Bounds) -> Self {
        Self {
            class_name: class_name.into(),
            ancestors: Vec::new(),
            text: None,
            resource_id: None,
            content_desc: None,
            bounds,
            visible_to_user: true,
            bounds_clamped: false,
            children: Vec::new(),
        }
    }

    /// Serializes the retained fields back into RICO field names.
    pub fn to_rico_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("class".into(), Value::from(self.class_name.clone()));
        if !self.ancestors.is_empty() {
            obj.insert("ancestors".into(), Value::from(self.ancestors.clone()));
        }
        if let Some(t) = &self.text {
            obj.insert("text".into(), Value::from(t.clone()));
        }
        if let Some(r) = &self.resource_id {
            obj.insert("resource-id".into(), Value::from(r.clone()));
        }
        if let Some(c) = &self.content_desc {
            obj.insert("content-desc".into(), Value::from(c.clone()));
        }
        let b = self.bounds;
        obj.insert("bounds".into(), Value::from(vec![b.left, b.top, b.right, b.bottom]));
        obj.insert("visible-to-user".into(), Value::from(self.visible_to_user));
        if !self.children.is_empty() {
            obj.insert(
                "children".into(),
                Value::from(self.children.iter().map(UiNode::to_rico_json).collect::<Vec<_>>()),
            );
        }
        Value::Object(obj)
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn subtree_len(&self) -> usize {
        1 + self.children.iter().map(UiNode::subtree_len).sum::<usize>()
    }

    /// Pre-order traversal of the subtree.
    pub fn preorder(&self) -> Vec<&UiNode> {
        let mut out = Vec::with_capacity(self.subtree_len());
        fn walk<'a>(n: &'a UiNode, out: &mut Vec<&'a UiNode>) {
            out.push(n);
            for c in &n.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSource {
    pub screen_id: String,
    pub root: UiNode,
    pub screen_dims: Option<ScreenDims>,
    pub app_package: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("no view-hierarchy node object found")]
    MissingRoot,
    #[error("invalid bounds at {path}: expected 4 numbers")]
    InvalidBounds { path: String },
    #[error("node at {path} has no class name")]
    MissingClass { path: String },
}

/// Parses a RICO dump (`{"activity": {"root": ...}}`) or a bare node object.
pub fn parse_view_hierarchy(
    screen_id: impl Into<String>,
    raw_json: &[u8],
) -> Result<ScreenSource, IngestError> {
    let value: Value = serde_json::from_slice(raw_json)?;
    let obj = value.as_object().ok_or(IngestError::MissingRoot)?;

    let (root_value, activity_name) = match obj.get("activity").and_then(|a| a.get("root")) {
        Some(root) if root.is_object() => (root, obj.get("activity_name").and_then(Value::as_str)),
        _ if is_node(obj) => (&value, None),
        _ => return Err(IngestError::MissingRoot),
    };
    let root_obj = root_value.as_object().ok_or(IngestError::MissingRoot)?;
    if !is_node(root_obj) {
        return Err(IngestError::MissingRoot);
    }
    let root = parse_node(root_obj, "root")?;

    let app_package = root_obj
        .get("package")
        .and_then(Value::as_str)
        .or_else(|| activity_name.and_then(|a| a.split('/').next()))
        .filter(|s| !s.is_empty())
        .map(str::to_owned);

    let screen_dims = (root.bounds.right > 0 && root.bounds.bottom > 0)
        .then(|| ScreenDims { width: root.bounds.right, height: root.bounds.bottom });

    Ok(ScreenSource { screen_id: screen_id.into(), root, screen_dims, app_package })
}

fn is_node(obj: &Map<String, Value>) -> bool {
    obj.get("class").and_then(Value::as_str).is_some_and(|c| !c.is_empty())
}

fn non_empty_str(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str).filter(|s| !s.is_empty()).map(str::to_owned)
}

fn parse_node(obj: &Map<String, Value>, path: &str) -> Result<UiNode, IngestError> {
    let class_name = non_empty_str(obj.get("class"))
        .ok_or_else(|| IngestError::MissingClass { path: path.to_owned() })?;

    let ancestors = obj
        .get("ancestors")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_owned).collect())
        .unwrap_or_default();

    let content_desc = match obj.get("content-desc") {
        Some(Value::Array(items)) => non_empty_str(items.first()),
        other => non_empty_str(other),
    };

    let mut bounds = match obj.get("bounds") {
        None | Some(Value::Null) => Bounds::default(),
        Some(Value::Array(items)) if items.len() == 4 => {
            let mut edges = [0i64; 4];
            for (slot, item) in edges.iter_mut().zip(items) {
                *slot = item
                    .as_i64()
                    .or_else(|| item.as_f64().map(|f| f as i64))
                    .ok_or_else(|| IngestError::InvalidBounds { path: path.to_owned() })?;
            }
            Bounds::new(edges[0], edges[1], edges[2], edges[3])
        }
        Some(_) => return Err(IngestError::InvalidBounds { path: path.to_owned() }),
    };
    let bounds_clamped = bounds.clamp();

    let visible_to_user = obj.get("visible-to-user").and_then(Value::as_bool).unwrap_or(true);

    let mut children = Vec::new();
    if let Some(items) = obj.get("children").and_then(Value::as_array) {
        for (i, child) in items.iter().enumerate() {
            // RICO dumps contain null placeholders in children arrays.
            let Some(child_obj) = child.as_object() else { continue };
            children.push(parse_node(child_obj, &format!("{path}.{i}"))?);
        }
    }

    Ok(UiNode {
        class_name,
        ancestors,
        text: non_empty_str(obj.get("text")),
        resource_id: non_empty_str(obj.get("resource-id")),
        content_desc,
        bounds,
        visible_to_user,
        bounds_clamped,
        children,
    })
}

/// Whether a single node is visible on its own: flagged visible, positive
/// area, not clamped, and on screen when the screen size is known.
pub fn is_visible(node: &UiNode, screen: Option<ScreenDims>) -> bool {
    node.visible_to_user
        && !node.bounds_clamped
        && node.bounds.area() > 0
        && screen.is_none_or(|s| node.bounds.overlaps(&s.rect()))
}

/// Visible nodes with no visible descendant, in depth-first pre-order.
pub fn select_visible_leaves(source: &ScreenSource) -> Vec<&UiNode> {
    fn visit<'a>(n: &'a UiNode, dims: Option<ScreenDims>, out: &mut Vec<&'a UiNode>) {
        let before = out.len();
        for c in &n.children {
            visit(c, dims, out);
        }
        // A selected leaf has no selected descendants, so pushing it after
        // its children keeps the pre-order sequence of selected nodes.
        if out.len() == before && is_visible(n, dims) {
            out.push(n);
        }
    }
    let mut out = Vec::new();
    visit(&source.root, source.screen_dims, &mut out);
    out
}
