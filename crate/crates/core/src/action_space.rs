//! XML element extraction and the aligned candidate action space.
//!
//! A page's action space is finite: every clickable element contributes one
//! click, every scrollable element four scrolls, every inputtable element one
//! input with an unbound text slot, and `Complete` is always present. Gestures
//! are aligned to element geometry: taps and typing land on the centre, swipes
//! run along the central axis for a quarter of the element's extent.

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, ScreenSize};
use crate::model::{Action, Direction, Element, GuiPage};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum XmlError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
}

/// A node skipped during parsing. Not fatal: the rest of the page is kept.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node {path}: malformed bounds {bounds:?}")]
pub struct MalformedBounds {
    pub path: String,
    pub bounds: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPage {
    pub elements: Vec<Element>,
    pub warnings: Vec<MalformedBounds>,
}

fn attr_true(node: &roxmltree::Node<'_, '_>, name: &str) -> Option<bool> {
    node.attribute(name).map(|v| v.trim().eq_ignore_ascii_case("true"))
}

fn looks_inputtable(node: &roxmltree::Node<'_, '_>) -> bool {
    if attr_true(node, "editable") == Some(true) || attr_true(node, "inputtable") == Some(true) {
        return true;
    }
    node.attribute("class").is_some_and(|class| {
        class.contains("EditText") || class.to_ascii_lowercase().contains("input")
    })
}

/// Parses a UIAutomator-style dump into elements, in document order.
///
/// Every element node carrying a `bounds` attribute yields one [`Element`];
/// nodes without bounds (such as the `<hierarchy>` root) are structural and
/// skipped silently. Bounds are clamped to `screen`. A blank document parses
/// to an empty page.
pub fn parse_page_xml(xml: &str, screen: ScreenSize) -> Result<ParsedPage, XmlError> {
    let mut out = ParsedPage::default();
    if xml.trim().is_empty() {
        return Ok(out);
    }
    let doc = roxmltree::Document::parse(xml).map_err(|e| XmlError::MalformedXml(e.to_string()))?;
    let mut path = Vec::new();
    walk(doc.root_element(), &mut path, screen, &mut out);
    Ok(out)
}

fn walk(node: roxmltree::Node<'_, '_>, path: &mut Vec<usize>, screen: ScreenSize, out: &mut ParsedPage) {
    let path_str = || {
        let parts: Vec<String> = path.iter().map(ToString::to_string).collect();
        format!("/{}", parts.join("/"))
    };
    if let Some(raw) = node.attribute("bounds") {
        match raw.parse::<BoundingBox>() {
            Ok(bounds) => out.elements.push(element_from(&node, bounds.clamp_to(screen), path_str())),
            Err(_) => out.warnings.push(MalformedBounds {
                path: path_str(),
                bounds: raw.to_string(),
            }),
        }
    }
    for (i, child) in node.children().filter(|c| c.is_element()).enumerate() {
        path.push(i);
        walk(child, path, screen, out);
        path.pop();
    }
}

fn element_from(node: &roxmltree::Node<'_, '_>, bounds: BoundingBox, path: String) -> Element {
    let text = node.attribute("text").unwrap_or("").trim();
    let desc = node.attribute("content-desc").unwrap_or("").trim();
    let name = if text.is_empty() { desc } else { text };
    let id = match node.attribute("resource-id").map(str::trim) {
        Some(rid) if !rid.is_empty() => rid.to_string(),
        _ => format!("path:{path}"),
    };
    let inputtable = looks_inputtable(node);
    // Inputtable elements are tappable unless the dump says otherwise.
    let clickable = match attr_true(node, "clickable") {
        Some(c) => c,
        None => inputtable,
    };
    Element {
        id,
        name: name.to_string(),
        bounds,
        clickable,
        scrollable: attr_true(node, "scrollable").unwrap_or(false),
        inputtable,
    }
}

/// Actions contributed by one element, in kind order.
pub fn element_actions(e: &Element) -> Vec<Action> {
    let mut acts = Vec::new();
    if e.clickable {
        acts.push(Action::click(e.name.clone(), e.bounds));
    }
    if e.scrollable {
        acts.extend(Direction::ALL.iter().map(|&d| Action::scroll(e.name.clone(), e.bounds, d)));
    }
    if e.inputtable {
        acts.push(Action::input(e.name.clone(), e.bounds, ""));
    }
    acts
}

/// Candidate actions for `page`: element actions in document order, then
/// `Complete`.
pub fn enumerate_action_space(page: &GuiPage) -> Vec<Action> {
    let mut space: Vec<Action> = page.elements().iter().flat_map(element_actions).collect();
    space.push(Action::complete());
    space
}

/// Whether `a` names a member of the page's action space. Input text is a free
/// slot and `Complete` is always available.
pub fn action_in_space(a: &Action, page: &GuiPage) -> bool {
    if a.is_complete() {
        return true;
    }
    page.elements()
        .iter()
        .flat_map(element_actions)
        .any(|cand| cand.same_target(a))
}

/// Index of the space member `a` refers to, if any.
pub fn position_in_space(a: &Action, space: &[Action]) -> Option<usize> {
    space.iter().position(|cand| cand.same_target(a))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignedGesture {
    Tap { at: (i32, i32) },
    Swipe { start: (i32, i32), end: (i32, i32) },
    TypeAt { at: (i32, i32), text: String },
}

impl AlignedGesture {
    pub fn start(&self) -> (i32, i32) {
        match self {
            AlignedGesture::Tap { at } | AlignedGesture::TypeAt { at, .. } => *at,
            AlignedGesture::Swipe { start, .. } => *start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignError {
    #[error("Complete has no screen gesture")]
    NotAlignable,
}

/// Swipe length as a fraction of the element's extent along the scroll axis.
pub const SWIPE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    pub swipe_fraction: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { swipe_fraction: SWIPE_FRACTION }
    }
}

/// Converts an action to the screen gesture that executes it.
///
/// Scroll directions name the finger motion: `Left` swipes from the centre
/// towards smaller x.
pub fn align_action(a: &Action, screen: ScreenSize) -> Result<AlignedGesture, AlignError> {
    align_action_with(a, screen, AlignConfig::default())
}

pub fn align_action_with(a: &Action, screen: ScreenSize, cfg: AlignConfig) -> Result<AlignedGesture, AlignError> {
    let bounds = a.bounds().clamp_to(screen);
    let center = bounds.center();
    match a {
        Action::Click { .. } => Ok(AlignedGesture::Tap { at: center }),
        Action::Input { text, .. } => Ok(AlignedGesture::TypeAt { at: center, text: text.clone() }),
        Action::Scroll { direction, .. } => {
            let dx = (f64::from(bounds.width()) * cfg.swipe_fraction).floor() as i32;
            let dy = (f64::from(bounds.height()) * cfg.swipe_fraction).floor() as i32;
            let (cx, cy) = center;
            let end = match direction {
                Direction::Left => (cx - dx, cy),
                Direction::Right => (cx + dx, cy),
                Direction::Up => (cx, cy - dy),
                Direction::Down => (cx, cy + dy),
            };
            Ok(AlignedGesture::Swipe { start: center, end })
        }
        Action::Complete { .. } => Err(AlignError::NotAlignable),
    }
}
