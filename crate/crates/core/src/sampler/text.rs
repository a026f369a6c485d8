//! Template task text, page-name phrases and the page-name registry.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::model::{Action, GuiFlow, GuiGraph, GuiPage};

/// Produces the brief task and per-step descriptions for a flow. The template
/// implementation below is deterministic; any other generator (for example a
/// hosted language model) can be slotted in behind this trait.
pub trait TaskTextGenerator {
    fn generate(&self, flow: &GuiFlow, g: &GuiGraph) -> (String, Vec<String>);
}

/// `{start}`, `{end}`, `{route}` in `brief`; `{page}`, `{action}` in `step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplates {
    pub brief: String,
    pub step: String,
}

impl Default for TaskTemplates {
    fn default() -> Self {
        Self {
            brief: "Go from the {start} page to the {end} page via {route}.".into(),
            step: "On the {page} page, {action}.".into(),
        }
    }
}

/// Label used for a page in generated text: first caption sentence, else the id.
pub fn page_label(page: &GuiPage) -> String {
    page.caption()
        .and_then(first_sentence)
        .unwrap_or_else(|| page.page_id().to_string())
}

fn first_sentence(text: &str) -> Option<String> {
    let s = text.split(['.', '!', '?', '\n']).next()?.trim();
    (!s.is_empty()).then(|| s.to_string())
}

/// Imperative phrase for an action, e.g. `click "search"`.
pub fn action_phrase(a: &Action) -> String {
    let target = |name: &str| {
        if name.is_empty() {
            "the list".to_string()
        } else {
            format!("\"{name}\"")
        }
    };
    match a {
        Action::Click { name, .. } => format!("click {}", target(name)),
        Action::Scroll { name, direction, .. } => format!("scroll {direction} on {}", target(name)),
        Action::Input { name, text, .. } => format!("enter \"{text}\" in {}", target(name)),
        Action::Complete { .. } => "finish the task".to_string(),
    }
}

fn short_name(a: &Action) -> String {
    match a {
        Action::Input { text, .. } => text.clone(),
        Action::Scroll { direction, .. } => format!("scroll {direction}"),
        other if other.element_name().is_empty() => other.kind().as_str().to_string(),
        other => other.element_name().to_string(),
    }
}

impl TaskTextGenerator for TaskTemplates {
    fn generate(&self, flow: &GuiFlow, g: &GuiGraph) -> (String, Vec<String>) {
        let label = |id: &str| g.page(id).map_or_else(|| id.to_string(), page_label);
        let route: Vec<String> = flow.actions().map(short_name).collect();
        let brief = self
            .brief
            .replace("{start}", &label(flow.start_page()))
            .replace("{end}", &label(&flow.terminal_page))
            .replace("{route}", &route.join(" > "));
        let steps = flow
            .steps
            .iter()
            .map(|s| {
                self.step
                    .replace("{page}", &label(&s.page_id))
                    .replace("{action}", &action_phrase(&s.action))
            })
            .collect();
        (brief, steps)
    }
}

pub fn generate_task_text(flow: &GuiFlow, g: &GuiGraph, templates: &dyn TaskTextGenerator) -> (String, Vec<String>) {
    templates.generate(flow, g)
}

fn page_phrase_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bthe ((?:[\w'-]+ ){0,4}?[\w'-]+ (?:page|interface))\b").unwrap())
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#""([^"]+)"|“([^”]+)”"#).unwrap())
}

/// First "the ... page" / "the ... interface" phrase, without the article.
pub fn page_phrase(text: &str) -> Option<String> {
    let caps = page_phrase_re().captures(text)?;
    let phrase = caps.get(1)?.as_str();
    // An inner "the" means the match started too early.
    let tail = phrase.rsplit(" the ").next().unwrap_or(phrase);
    Some(tail.trim().to_string())
}

/// Page phrase of the clause a description opens with ("On the X page, ..."),
/// which names the page the step is performed on.
pub fn leading_page_phrase(description: &str) -> Option<String> {
    let clause = description.split([',', '.', ';']).next()?;
    page_phrase(clause)
}

pub fn quoted_phrase(text: &str) -> Option<String> {
    let caps = quoted_re().captures(text)?;
    caps.get(1).or_else(|| caps.get(2)).map(|m| m.as_str().trim().to_string())
}

/// Name → page bindings plus usage counts. A name binds to at most one page;
/// names from an existing dataset can be noted without binding a page.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageNameRegistry {
    bindings: BTreeMap<String, String>,
    usage: BTreeMap<String, usize>,
}

fn norm(name: &str) -> String {
    name.trim().to_lowercase()
}

impl PageNameRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_existing<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut r = Self::new();
        for n in names {
            r.note_existing(n.as_ref());
        }
        r
    }

    /// Records a name seen in prior data.
    pub fn note_existing(&mut self, name: &str) {
        *self.usage.entry(norm(name)).or_default() += 1;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.usage.contains_key(&norm(name))
    }

    pub fn usage(&self, name: &str) -> usize {
        self.usage.get(&norm(name)).copied().unwrap_or(0)
    }

    pub fn page_for(&self, name: &str) -> Option<&str> {
        self.bindings.get(&norm(name)).map(String::as_str)
    }

    /// Binds `name` to `page_id`, appending " 2", " 3", ... when the name is
    /// already bound to a different page. Returns the name actually bound.
    pub fn register(&mut self, name: &str, page_id: &str) -> String {
        let mut candidate = name.trim().to_string();
        let mut n = 1;
        loop {
            match self.bindings.get(&norm(&candidate)) {
                Some(bound) if bound != page_id => {
                    n += 1;
                    candidate = format!("{} {n}", name.trim());
                }
                _ => break,
            }
        }
        self.bindings.insert(norm(&candidate), page_id.to_string());
        *self.usage.entry(norm(&candidate)).or_default() += 1;
        candidate
    }
}

/// Names a page reached by `incoming`: a page phrase or quoted phrase from the
/// step description, else the action's element name or input text, else the
/// first caption sentence (or the page id). Registers the result.
pub fn name_page(p: &GuiPage, incoming: Option<&Action>, step_desc: &str, registry: &mut PageNameRegistry) -> String {
    let from_desc = page_phrase(step_desc).or_else(|| quoted_phrase(step_desc));
    let from_action = incoming.and_then(|a| {
        let name = a.element_name().trim();
        if !name.is_empty() {
            Some(name.to_string())
        } else {
            a.input_text().map(str::trim).filter(|t| !t.is_empty()).map(str::to_string)
        }
    });
    let name = from_desc.or(from_action).unwrap_or_else(|| page_label(p));
    registry.register(&name, p.page_id())
}
