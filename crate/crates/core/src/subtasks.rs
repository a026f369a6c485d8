//! Splitting annotated flows into page-reaching and page-operation subtasks.
//!
//! Reaching subtasks come from pages the description names uniquely and from
//! clicks on element names that are new to the dataset. Operation subtasks
//! come from scroll and input steps and from steps whose before and after
//! pages are similar.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::model::{Action, GuiFlow, GuiGraph, GuiPage, SubtaskSpec};
use crate::sampler::{leading_page_phrase, PageNameRegistry};

/// Page-reaching task templates; `{text}` is replaced by the page name.
pub const REACH_TEMPLATES: [&str; 32] = [
    "Navigate to {text} page.",
    "Go to {text} page.",
    "From the current page, what interactions should be performed to reach {text} page?",
    "What actions need to be performed to reach {text} image?",
    "Determine the actions that need to be taken to display {text} page.",
    "Visit the {text} page.",
    "What actions should you take to advance to the page showing {text}?",
    "I want to go to {text} interface.",
    "What actions will take you to {text} image?",
    "Describe the steps that need to be taken on the current image to find {text} image.",
    "Is the page showing {text}?",
    "First, find {text} page.",
    "Help me find the page with {text}.",
    "Perform a series of actions to reach {text}.",
    "First visit {text} page.",
    "What actions do I need to take to find {text} page?",
    "How do I get to {text} page?",
    "Help me navigate to {text} interface.",
    "Go to {text} interface.",
    "Jump to {text} page.",
    "Next, enter {text} page.",
    "Visit the page showing {text}?",
    "Find the image with {text}?",
    "How to get to the page with {text}?",
    "I want to go to {text} page.",
    "Open {text} image?",
    "Next, go to {text} page.",
    "Need to visit {text}.",
    "Enter {text} page.",
    "Navigate to {text}.",
    "How to get to the page with {text}?",
    "Guide to the image with {text}.",
];

/// Fills `{text}` and collapses a doubled noun ("results page page").
pub fn render_template(template: &str, name: &str) -> String {
    let mut out = template.replace("{text}", name);
    for noun in ["page", "interface", "image"] {
        out = out.replace(&format!("{noun} {noun}"), noun);
    }
    out
}

/// Chooses which template renders each reaching task.
#[derive(Debug, Clone)]
pub enum TemplatePicker {
    Seeded(Box<ChaCha8Rng>),
    /// Cycles through fixed template indices.
    Scripted { indices: Vec<usize>, next: usize },
}

impl TemplatePicker {
    pub fn seeded(seed: u64) -> Self {
        TemplatePicker::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn scripted(indices: Vec<usize>) -> Self {
        TemplatePicker::Scripted { indices, next: 0 }
    }

    fn pick(&mut self, n: usize) -> usize {
        match self {
            TemplatePicker::Seeded(rng) => rng.random_range(0..n),
            TemplatePicker::Scripted { indices, next } => {
                let i = indices.get(*next % indices.len().max(1)).copied().unwrap_or(0);
                *next += 1;
                i % n
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReachTemplates {
    pub templates: Vec<String>,
    pub picker: TemplatePicker,
}

impl ReachTemplates {
    pub fn standard(seed: u64) -> Self {
        Self {
            templates: REACH_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            picker: TemplatePicker::seeded(seed),
        }
    }

    fn render(&mut self, name: &str) -> String {
        if self.templates.is_empty() {
            return render_template("Go to {text} page.", name);
        }
        let i = self.picker.pick(self.templates.len());
        render_template(&self.templates[i], name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub jaccard_threshold: f64,
    /// Drop operation subtasks whose flow is a strict prefix of an emitted
    /// reaching subtask flow: such steps are navigation on the way to a named
    /// page rather than operations in their own right.
    pub drop_subsumed: bool,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { jaccard_threshold: 0.8, drop_subsumed: true }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("similarity threshold must lie in [0, 1], got {0}")]
pub struct ThresholdOutOfRange(pub f64);

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), ThresholdOutOfRange> {
        if (0.0..=1.0).contains(&self.jaccard_threshold) {
            Ok(())
        } else {
            Err(ThresholdOutOfRange(self.jaccard_threshold))
        }
    }
}

type Signature<'a> = (&'a str, &'a str, BoundingBox);

fn signatures(p: &GuiPage) -> BTreeSet<Signature<'_>> {
    p.elements().iter().map(|e| (e.id.as_str(), e.name.as_str(), e.bounds)).collect()
}

/// Jaccard index over element signatures `(id, name, bounds)`. Two pages with
/// no elements are identical.
pub fn page_similarity(a: &GuiPage, b: &GuiPage) -> f64 {
    let sa = signatures(a);
    let sb = signatures(b);
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSubtask {
    pub spec: SubtaskSpec,
    pub flow: GuiFlow,
}

fn sub_flow(f: &GuiFlow, n: usize, task: &str) -> GuiFlow {
    let mut sub = f.prefix(n);
    sub.task = task.to_string();
    sub
}

/// Reaching subtasks of `f`, at most one per target page, in step order.
///
/// A page named in the opening clause of its step description ("On the X
/// page, ...") is a target when no other page of the flow carries that name.
/// A click whose element name is not yet in `registry` names the page it
/// leads to. Names are registered as they are used.
pub fn extract_reaching_subtasks(
    f: &GuiFlow,
    _g: &GuiGraph,
    registry: &mut PageNameRegistry,
    templates: &mut ReachTemplates,
) -> Vec<ExtractedSubtask> {
    let pages = f.page_sequence();
    let described: Vec<Option<String>> = f
        .step_descriptions
        .iter()
        .map(|d| leading_page_phrase(d).map(|n| n.to_lowercase()))
        .collect();
    let mut pages_by_name: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (i, name) in described.iter().enumerate() {
        if let Some(name) = name {
            pages_by_name.entry(name).or_default().insert(pages[i]);
        }
    }
    let mut used: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    for (i, step) in f.steps.iter().enumerate() {
        if let Some(name) = &described[i] {
            let unique = pages_by_name.get(name.as_str()).is_some_and(|s| s.len() == 1);
            if i > 0 && unique && used.insert(pages[i]) {
                let bound = registry.register(name, pages[i]);
                let text = templates.render(&bound);
                out.push(ExtractedSubtask {
                    spec: SubtaskSpec::reach(pages[i], text.clone()),
                    flow: sub_flow(f, i, &text),
                });
            }
        }
        if let Action::Click { name, .. } = &step.action {
            let target = pages[i + 1];
            if !name.trim().is_empty() && !registry.contains(name) && used.insert(target) {
                let bound = registry.register(name, target);
                let text = templates.render(&format!("\"{bound}\""));
                out.push(ExtractedSubtask {
                    spec: SubtaskSpec::reach(target, text.clone()),
                    flow: sub_flow(f, i + 1, &text),
                });
            }
        }
    }
    out
}

/// Operation subtasks of `f`: every scroll or input step, and every step whose
/// source and destination pages reach the similarity threshold. Each sub-flow
/// ends with the operation; its task is that step's description.
pub fn extract_operation_subtasks(f: &GuiFlow, g: &GuiGraph, simcfg: &SimilarityConfig) -> Vec<ExtractedSubtask> {
    let pages = f.page_sequence();
    let mut out = Vec::new();
    for (i, step) in f.steps.iter().enumerate() {
        let by_kind = matches!(step.action, Action::Scroll { .. } | Action::Input { .. });
        let by_similarity = || match (g.page(pages[i]), g.page(pages[i + 1])) {
            (Some(a), Some(b)) => page_similarity(a, b) >= simcfg.jaccard_threshold,
            _ => false,
        };
        if by_kind || by_similarity() {
            let text = f.step_descriptions.get(i).cloned().unwrap_or_else(|| f.task.clone());
            out.push(ExtractedSubtask {
                spec: SubtaskSpec::operate(pages[i], step.action.clone(), text.clone()),
                flow: sub_flow(f, i + 1, &text),
            });
        }
    }
    out
}

/// Both extractors, reaching subtasks first. With `drop_subsumed`, operation
/// sub-flows that are strict prefixes of a reaching sub-flow are removed.
pub fn extract_subtasks(
    f: &GuiFlow,
    g: &GuiGraph,
    registry: &mut PageNameRegistry,
    templates: &mut ReachTemplates,
    simcfg: &SimilarityConfig,
) -> Vec<ExtractedSubtask> {
    let reaching = extract_reaching_subtasks(f, g, registry, templates);
    let mut ops = extract_operation_subtasks(f, g, simcfg);
    if simcfg.drop_subsumed {
        ops.retain(|op| {
            !reaching
                .iter()
                .any(|r| op.flow.len() < r.flow.len() && op.flow.steps[..] == r.flow.steps[..op.flow.len()])
        });
    }
    reaching.into_iter().chain(ops).collect()
}
