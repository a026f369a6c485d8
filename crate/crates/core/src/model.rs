//! Domain types shared across the toolkit: elements, actions, pages, the page
//! graph that acts as the environment, and recorded flows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action_space::{self, XmlError};
use crate::geometry::{BoundingBox, ScreenSize};

/// Text carried by the terminal action an agent emits when it believes the
/// task is done.
pub const COMPLETE_TEXT: &str = "STATUS_TASK_COMPLETE";

/// One interactive node extracted from a page's XML dump.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub name: String,
    pub bounds: BoundingBox,
    pub clickable: bool,
    pub scrollable: bool,
    pub inputtable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Click,
    Scroll,
    Input,
    Complete,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Scroll => "scroll",
            ActionKind::Input => "input",
            ActionKind::Complete => "complete",
        }
    }
}

/// An agent action. Element-bound variants carry the target's name and box;
/// `Complete` carries only its status text.
///
/// An `Input` enumerated from a page's action space has an empty `text`: the
/// slot is bound only when an agent or annotator fills it in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Action {
    Click {
        name: String,
        bounds: BoundingBox,
    },
    Scroll {
        name: String,
        bounds: BoundingBox,
        direction: Direction,
    },
    Input {
        name: String,
        bounds: BoundingBox,
        text: String,
    },
    Complete {
        text: String,
    },
}

impl Action {
    pub fn click(name: impl Into<String>, bounds: BoundingBox) -> Self {
        Action::Click { name: name.into(), bounds }
    }

    pub fn scroll(name: impl Into<String>, bounds: BoundingBox, direction: Direction) -> Self {
        Action::Scroll { name: name.into(), bounds, direction }
    }

    pub fn input(name: impl Into<String>, bounds: BoundingBox, text: impl Into<String>) -> Self {
        Action::Input { name: name.into(), bounds, text: text.into() }
    }

    /// `Complete` with the standard status text.
    pub fn complete() -> Self {
        Action::Complete { text: COMPLETE_TEXT.to_string() }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::Input { .. } => ActionKind::Input,
            Action::Complete { .. } => ActionKind::Complete,
        }
    }

    /// Element name; empty for `Complete`.
    pub fn element_name(&self) -> &str {
        match self {
            Action::Click { name, .. } | Action::Scroll { name, .. } | Action::Input { name, .. } => name,
            Action::Complete { .. } => "",
        }
    }

    /// Element box; the zero box for `Complete`.
    pub fn bounds(&self) -> BoundingBox {
        match self {
            Action::Click { bounds, .. } | Action::Scroll { bounds, .. } | Action::Input { bounds, .. } => *bounds,
            Action::Complete { .. } => BoundingBox::ZERO,
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match self {
            Action::Scroll { direction, .. } => Some(*direction),
            _ => None,
        }
    }

    pub fn input_text(&self) -> Option<&str> {
        match self {
            Action::Input { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn complete_text(&self) -> Option<&str> {
        match self {
            Action::Complete { text } => Some(text),
            _ => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, Action::Complete { .. })
    }

    /// Same kind, element name, box and scroll direction. Input text and
    /// complete text are ignored.
    pub fn same_target(&self, other: &Action) -> bool {
        self.kind() == other.kind()
            && self.element_name() == other.element_name()
            && self.bounds() == other.bounds()
            && self.direction() == other.direction()
    }

    /// Transition matching used by the environment: `same_target`, plus equal
    /// input text after trimming for `Input`.
    pub fn triggers(&self, edge_action: &Action) -> bool {
        if !self.same_target(edge_action) {
            return false;
        }
        match (self.input_text(), edge_action.input_text()) {
            (Some(a), Some(b)) => a.trim() == b.trim(),
            _ => true,
        }
    }

    /// Short human-readable form, e.g. `click("search", [177,96][273,168])`.
    pub fn describe(&self) -> String {
        match self {
            Action::Click { name, bounds } => format!("click({name:?}, {bounds})"),
            Action::Scroll { name, bounds, direction } => format!("scroll({name:?}, {bounds}, {direction})"),
            Action::Input { name, bounds, text } => format!("input({name:?}, {bounds}, {text:?})"),
            Action::Complete { text } => format!("complete({text:?})"),
        }
    }

    /// Stable string key used for registries and deduplication.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("actions always serialize")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// One screen state. `elements` is always the parse of `xml`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuiPage {
    page_id: String,
    xml: String,
    screenshot_ref: Option<String>,
    caption: Option<String>,
    screen: ScreenSize,
    elements: Vec<Element>,
    parse_warnings: Vec<String>,
}

impl GuiPage {
    pub fn new(page_id: impl Into<String>, xml: impl Into<String>, screen: ScreenSize) -> Result<Self, XmlError> {
        let xml = xml.into();
        let parsed = action_space::parse_page_xml(&xml, screen)?;
        Ok(Self {
            page_id: page_id.into(),
            xml,
            screenshot_ref: None,
            caption: None,
            screen,
            elements: parsed.elements,
            parse_warnings: parsed.warnings.iter().map(ToString::to_string).collect(),
        })
    }

    pub fn with_screenshot(mut self, path: impl Into<String>) -> Self {
        self.screenshot_ref = Some(path.into());
        self
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn page_id(&self) -> &str {
        &self.page_id
    }
    pub fn xml(&self) -> &str {
        &self.xml
    }
    pub fn screenshot_ref(&self) -> Option<&str> {
        self.screenshot_ref.as_deref()
    }
    pub fn caption(&self) -> Option<&str> {
        self.caption.as_deref()
    }
    pub fn screen(&self) -> ScreenSize {
        self.screen
    }
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }
    /// Nodes skipped during parsing, e.g. for malformed bounds.
    pub fn parse_warnings(&self) -> &[String] {
        &self.parse_warnings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub action: Action,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown page {0:?}")]
    UnknownPage(String),
    #[error("duplicate page id {0:?}")]
    DuplicatePage(String),
    #[error("home page {0:?} is not in the graph")]
    MissingHome(String),
    #[error("edge {src:?} -> {dst:?}: {action} is not in the action space of {src:?}")]
    EdgeNotInSpace { src: String, action: String, dst: String },
    #[error("edge {src:?} -> {dst:?} uses a Complete action")]
    CompleteEdge { src: String, dst: String },
}

/// Directed multigraph of pages joined by actions. Doubles as the executable
/// environment: executing an action follows the first matching edge.
#[derive(Debug, Clone)]
pub struct GuiGraph {
    screen: ScreenSize,
    home: String,
    pages: BTreeMap<String, GuiPage>,
    edges: Vec<Edge>,
    outgoing: HashMap<String, Vec<usize>>,
}

impl GuiGraph {
    pub fn new(
        screen: ScreenSize,
        home: impl Into<String>,
        pages: Vec<GuiPage>,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        let home = home.into();
        let mut map = BTreeMap::new();
        for page in pages {
            let id = page.page_id().to_string();
            if map.insert(id.clone(), page).is_some() {
                return Err(GraphError::DuplicatePage(id));
            }
        }
        if !map.contains_key(&home) {
            return Err(GraphError::MissingHome(home));
        }
        let mut graph = Self {
            screen,
            home,
            pages: map,
            edges: Vec::with_capacity(edges.len()),
            outgoing: HashMap::new(),
        };
        for edge in edges {
            graph.push_edge(edge)?;
        }
        Ok(graph)
    }

    fn push_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        let src = self
            .pages
            .get(&edge.src)
            .ok_or_else(|| GraphError::UnknownPage(edge.src.clone()))?;
        if !self.pages.contains_key(&edge.dst) {
            return Err(GraphError::UnknownPage(edge.dst.clone()));
        }
        if edge.action.is_complete() {
            return Err(GraphError::CompleteEdge { src: edge.src, dst: edge.dst });
        }
        if !action_space::action_in_space(&edge.action, src) {
            return Err(GraphError::EdgeNotInSpace {
                src: edge.src,
                action: edge.action.describe(),
                dst: edge.dst,
            });
        }
        self.outgoing.entry(edge.src.clone()).or_default().push(self.edges.len());
        self.edges.push(edge);
        Ok(())
    }

    pub fn screen(&self) -> ScreenSize {
        self.screen
    }
    pub fn home(&self) -> &str {
        &self.home
    }
    pub fn pages(&self) -> impl Iterator<Item = &GuiPage> {
        self.pages.values()
    }
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn page(&self, id: &str) -> Option<&GuiPage> {
        self.pages.get(id)
    }

    pub fn require_page(&self, id: &str) -> Result<&GuiPage, GraphError> {
        self.page(id).ok_or_else(|| GraphError::UnknownPage(id.to_string()))
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = &Edge> {
        self.outgoing
            .get(id)
            .into_iter()
            .flat_map(move |ixs| ixs.iter().map(move |&i| &self.edges[i]))
    }

    /// First outgoing edge of `page` that `action` triggers.
    pub fn transition(&self, page: &str, action: &Action) -> Option<&Edge> {
        self.outgoing(page).find(|e| action.triggers(&e.action))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowStep {
    pub page_id: String,
    pub action: Action,
}

/// A recorded interaction: pages joined by the actions taken on them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiFlow {
    pub task: String,
    pub steps: Vec<FlowStep>,
    pub step_descriptions: Vec<String>,
    pub terminal_page: String,
}

impl GuiFlow {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start_page(&self) -> &str {
        self.steps.first().map_or(&self.terminal_page, |s| &s.page_id)
    }

    /// Page sequence including the terminal page.
    pub fn page_sequence(&self) -> Vec<&str> {
        self.steps
            .iter()
            .map(|s| s.page_id.as_str())
            .chain(std::iter::once(self.terminal_page.as_str()))
            .collect()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// The flow cut after its first `n` steps. Descriptions are truncated to
    /// match; the terminal page becomes the page reached by step `n`.
    pub fn prefix(&self, n: usize) -> GuiFlow {
        let n = n.min(self.steps.len());
        let terminal = if n < self.steps.len() {
            self.steps[n].page_id.clone()
        } else {
            self.terminal_page.clone()
        };
        GuiFlow {
            task: self.task.clone(),
            steps: self.steps[..n].to_vec(),
            step_descriptions: self.step_descriptions.iter().take(n).cloned().collect(),
            terminal_page: terminal,
        }
    }

    pub fn is_prefix_of(&self, other: &GuiFlow) -> bool {
        self.steps.len() <= other.steps.len()
            && self.steps[..] == other.steps[..self.steps.len()]
            && self.terminal_page == other.page_sequence()[self.steps.len()]
    }

    /// Checks that every step follows an edge of `g` into the next page.
    pub fn check_connected(&self, g: &GuiGraph) -> Result<(), GraphError> {
        let pages = self.page_sequence();
        for (i, step) in self.steps.iter().enumerate() {
            g.require_page(&step.page_id)?;
            let next = pages[i + 1];
            match g.transition(&step.page_id, &step.action) {
                Some(edge) if edge.dst == next => {}
                _ => {
                    return Err(GraphError::EdgeNotInSpace {
                        src: step.page_id.clone(),
                        action: step.action.describe(),
                        dst: next.to_string(),
                    })
                }
            }
        }
        g.require_page(&self.terminal_page)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubtaskKind {
    Reach,
    Operate,
}

/// A reach-or-operate obligation. `Operate` always carries the action that
/// must be performed on `target_page`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub kind: SubtaskKind,
    pub target_page: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_action: Option<Action>,
    pub task_text: String,
}

impl SubtaskSpec {
    pub fn reach(target_page: impl Into<String>, task_text: impl Into<String>) -> Self {
        Self {
            kind: SubtaskKind::Reach,
            target_page: target_page.into(),
            required_action: None,
            task_text: task_text.into(),
        }
    }

    pub fn operate(target_page: impl Into<String>, action: Action, task_text: impl Into<String>) -> Self {
        Self {
            kind: SubtaskKind::Operate,
            target_page: target_page.into(),
            required_action: Some(action),
            task_text: task_text.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: i32, y1: i32, x2: i32, y2: i32) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn action_wire_format() {
        let a = Action::click("search", bx(177, 96, 273, 168));
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"kind":"click","name":"search","bounds":[177,96,273,168]}"#
        );
        let s = Action::scroll("list", bx(0, 585, 720, 1088), Direction::Up);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"kind":"scroll","name":"list","bounds":[0,585,720,1088],"direction":"up"}"#
        );
        let c = Action::complete();
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"kind":"complete","text":"STATUS_TASK_COMPLETE"}"#);
        assert_eq!(c.bounds(), BoundingBox::ZERO);
        assert_eq!(c.element_name(), "");
        // scroll without direction is not an action
        assert!(serde_json::from_str::<Action>(r#"{"kind":"scroll","name":"x","bounds":[0,0,1,1]}"#).is_err());
    }

    #[test]
    fn trigger_matching_trims_input_text() {
        let b = bx(231, 72, 555, 168);
        let edge = Action::input("search box", b, "xiaomi 14");
        assert!(Action::input("search box", b, " xiaomi 14 ").triggers(&edge));
        assert!(!Action::input("search box", b, "xiaomi").triggers(&edge));
        assert!(Action::input("search box", b, "anything").same_target(&edge));
        assert!(!Action::click("search box", b).same_target(&edge));
    }

    #[test]
    fn prefix_and_pages() {
        let b = bx(0, 0, 10, 10);
        let flow = GuiFlow {
            task: "t".into(),
            steps: vec![
                FlowStep { page_id: "H".into(), action: Action::click("a", b) },
                FlowStep { page_id: "A".into(), action: Action::click("b", b) },
            ],
            step_descriptions: vec!["one".into(), "two".into()],
            terminal_page: "B".into(),
        };
        assert_eq!(flow.page_sequence(), vec!["H", "A", "B"]);
        let p = flow.prefix(1);
        assert_eq!(p.terminal_page, "A");
        assert_eq!(p.step_descriptions, vec!["one".to_string()]);
        assert!(p.is_prefix_of(&flow));
        assert!(flow.prefix(2).is_prefix_of(&flow));
        assert_eq!(flow.prefix(0).start_page(), "H");
    }
}
