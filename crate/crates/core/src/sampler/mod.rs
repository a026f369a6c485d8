//! GUI-flow sampling: seeded random walks from the home page, validity checks,
//! template task text and low-quality filters.

pub mod text;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action_space::action_in_space;
use crate::model::{FlowStep, GuiFlow, GuiGraph};

pub use text::{
    action_phrase, generate_task_text, leading_page_phrase, name_page, page_label, page_phrase, quoted_phrase,
    PageNameRegistry, TaskTemplates, TaskTextGenerator,
};

pub const DEFAULT_MAX_TASK_LEN: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Consecutive rejected walks tolerated before sampling gives up.
    pub max_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { min_len: 3, max_len: 10, seed: 0, max_attempts: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("no walk of {min_len} steps exists from the home page")]
    GraphTooSmall { min_len: usize },
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.min_len < 3 {
            return Err(SampleError::Config(format!("min_len must be at least 3, got {}", self.min_len)));
        }
        if self.min_len > self.max_len {
            return Err(SampleError::Config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.max_attempts == 0 {
            return Err(SampleError::Config("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// What the current training set already contains: page paths, actions and
/// brief tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowRegistry {
    paths: HashSet<Vec<String>>,
    actions: HashSet<String>,
    tasks: HashSet<String>,
}

impl FlowRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn path_signature(f: &GuiFlow) -> Vec<String> {
        f.page_sequence().into_iter().map(str::to_string).collect()
    }

    pub fn contains_path(&self, f: &GuiFlow) -> bool {
        self.paths.contains(&Self::path_signature(f))
    }

    pub fn contains_task(&self, task: &str) -> bool {
        self.tasks.contains(task)
    }

    /// Adds the flow's path and actions; its task too when non-empty.
    pub fn register(&mut self, f: &GuiFlow) {
        self.paths.insert(Self::path_signature(f));
        self.actions.extend(f.actions().map(|a| a.key()));
        if !f.task.is_empty() {
            self.tasks.insert(f.task.clone());
        }
    }

    pub fn register_task(&mut self, task: &str) {
        self.tasks.insert(task.to_string());
    }

    fn all_actions_seen(&self, f: &GuiFlow) -> bool {
        !f.is_empty() && f.actions().all(|a| self.actions.contains(&a.key()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    /// Page path already in the registry.
    V1,
    /// Every action already in the registry.
    V2,
    /// Two consecutive identical actions.
    V3,
    /// An action outside its page's action space (or on an unknown page).
    V4,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::V1 => "V1: path already present",
            Violation::V2 => "V2: all actions already present",
            Violation::V3 => "V3: consecutive repeated actions",
            Violation::V4 => "V4: action outside page action space",
        };
        f.write_str(s)
    }
}

/// Runs the four validity checks. An empty violation list means valid.
pub fn validate_flow(f: &GuiFlow, g: &GuiGraph, registry: &FlowRegistry) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    if registry.contains_path(f) {
        out.insert(Violation::V1);
    }
    if registry.all_actions_seen(f) {
        out.insert(Violation::V2);
    }
    if f.steps.windows(2).any(|w| w[0].action == w[1].action) {
        out.insert(Violation::V3);
    }
    let out_of_space = f
        .steps
        .iter()
        .any(|s| g.page(&s.page_id).is_none_or(|p| !action_in_space(&s.action, p)));
    if out_of_space {
        out.insert(Violation::V4);
    }
    out.into_iter().collect()
}

/// Checks that some walk of `len` steps leaves the home page.
fn has_walk_of_len(g: &GuiGraph, len: usize) -> bool {
    let mut frontier: BTreeSet<&str> = BTreeSet::from([g.home()]);
    for _ in 0..len {
        frontier = frontier
            .iter()
            .flat_map(|p| g.outgoing(p).map(|e| e.dst.as_str()))
            .collect();
        if frontier.is_empty() {
            return false;
        }
    }
    true
}

/// Owns the RNG and the dedup registry for one sampling run.
pub struct FlowSampler {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
    registry: FlowRegistry,
}

impl FlowSampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self, SampleError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, rng, registry: FlowRegistry::new() })
    }

    pub fn with_registry(mut self, registry: FlowRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn registry(&self) -> &FlowRegistry {
        &self.registry
    }

    fn walk(&mut self, g: &GuiGraph) -> Option<GuiFlow> {
        let len = self.rng.random_range(self.cfg.min_len..=self.cfg.max_len);
        let mut page = g.home().to_string();
        let mut steps = Vec::with_capacity(len);
        for _ in 0..len {
            let out: Vec<_> = g.outgoing(&page).collect();
            let edge = out.choose(&mut self.rng)?;
            steps.push(FlowStep { page_id: page.clone(), action: edge.action.clone() });
            page = edge.dst.clone();
        }
        Some(GuiFlow { task: String::new(), steps, step_descriptions: Vec::new(), terminal_page: page })
    }

    /// Samples up to `n` valid flows with text attached by `text_gen`. Stops
    /// early after `max_attempts` consecutive rejections.
    pub fn sample(
        &mut self,
        g: &GuiGraph,
        n: usize,
        text_gen: &dyn TaskTextGenerator,
    ) -> Result<Vec<GuiFlow>, SampleError> {
        if !has_walk_of_len(g, self.cfg.min_len) {
            return Err(SampleError::GraphTooSmall { min_len: self.cfg.min_len });
        }
        let mut flows = Vec::new();
        let mut failures = 0;
        while flows.len() < n && failures < self.cfg.max_attempts {
            let Some(mut flow) = self.walk(g) else {
                failures += 1;
                continue;
            };
            if !validate_flow(&flow, g, &self.registry).is_empty() {
                failures += 1;
                continue;
            }
            failures = 0;
            self.registry.register(&flow);
            let (task, descriptions) = text_gen.generate(&flow, g);
            flow.task = task;
            flow.step_descriptions = descriptions;
            flows.push(flow);
        }
        Ok(flows)
    }
}

/// One-shot sampling with the default templates and a fresh registry.
pub fn sample_flows(g: &GuiGraph, cfg: &SamplerConfig, n: usize) -> Result<Vec<GuiFlow>, SampleError> {
    FlowSampler::new(cfg.clone())?.sample(g, n, &TaskTemplates::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterReason {
    /// Brief task already present.
    DuplicateTask,
    /// Description count differs from step count.
    DescriptionMismatch,
    /// Brief task longer than the limit.
    TaskTooLong,
}

/// Drops low-quality flows. `registry` is the prior training set and is not
/// modified; duplicates within `flows` keep their first occurrence.
pub fn filter_tasks(flows: Vec<GuiFlow>, registry: &FlowRegistry, max_task_len: usize) -> Vec<GuiFlow> {
    filter_tasks_with_reasons(flows, registry, max_task_len).0
}

pub fn filter_tasks_with_reasons(
    flows: Vec<GuiFlow>,
    registry: &FlowRegistry,
    max_task_len: usize,
) -> (Vec<GuiFlow>, Vec<(usize, FilterReason)>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, f) in flows.into_iter().enumerate() {
        let reason = if registry.contains_task(&f.task) || seen.contains(&f.task) {
            Some(FilterReason::DuplicateTask)
        } else if f.step_descriptions.len() != f.steps.len() {
            Some(FilterReason::DescriptionMismatch)
        } else if f.task.chars().count() > max_task_len {
            Some(FilterReason::TaskTooLong)
        } else {
            None
        };
        match reason {
            Some(r) => dropped.push((i, r)),
            None => {
                seen.insert(f.task.clone());
                kept.push(f);
            }
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Action;
    use crate::synth::{bx, chain_graph, random_graph, SynthConfig};
    use proptest::prelude::*;

    fn cfg(min_len: usize, max_len: usize, seed: u64) -> SamplerConfig {
        SamplerConfig { min_len, max_len, seed, max_attempts: 200 }
    }

    #[test]
    fn linear_graph_has_one_flow() {
        let g = chain_graph(&["H", "A", "B", "C"]);
        let flows = sample_flows(&g, &cfg(3, 3, 1), 5).unwrap();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].page_sequence(), vec!["H", "A", "B", "C"]);
        assert_eq!(flows[0].step_descriptions.len(), 3);
    }

    #[test]
    fn star_graph_is_too_small() {
        let g = chain_graph(&["H", "A"]);
        assert_eq!(sample_flows(&g, &cfg(3, 5, 1), 1), Err(SampleError::GraphTooSmall { min_len: 3 }));
    }

    #[test]
    fn bad_config() {
        assert!(matches!(SamplerConfig { min_len: 5, max_len: 4, ..Default::default() }.validate(), Err(SampleError::Config(_))));
        assert!(matches!(SamplerConfig { min_len: 2, max_len: 4, ..Default::default() }.validate(), Err(SampleError::Config(_))));
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = random_graph(&SynthConfig { pages: 20, ..Default::default() }, 3);
        let a = sample_flows(&g, &cfg(3, 10, 42), 50).unwrap();
        let b = sample_flows(&g, &cfg(3, 10, 42), 50).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        let c = sample_flows(&g, &cfg(3, 10, 43), 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validity_checks() {
        let g = fixtures::shopping_graph();
        let flow = fixtures::shopping_flow();
        let mut reg = FlowRegistry::new();
        assert!(validate_flow(&flow, &g, &reg).is_empty());

        let mut repeated = flow.clone();
        repeated.steps[1].action = repeated.steps[0].action.clone();
        assert!(validate_flow(&repeated, &g, &reg).contains(&Violation::V3));

        let mut foreign = flow.clone();
        foreign.steps[1].action = Action::click("not here", bx(1, 1, 2, 2));
        assert_eq!(validate_flow(&foreign, &g, &reg), vec![Violation::V4]);

        reg.register(&flow);
        assert_eq!(validate_flow(&flow, &g, &reg), vec![Violation::V1, Violation::V2]);
        let mut shorter = flow.prefix(7);
        shorter.task.clear();
        assert_eq!(validate_flow(&shorter, &g, &reg), vec![Violation::V2]);
    }

    #[test]
    fn filters() {
        let base = fixtures::shopping_flow();
        let reg = FlowRegistry::new();
        let mut short = base.clone();
        short.step_descriptions.pop();
        let mut long = base.clone();
        long.task = "x".repeat(201);
        let mut other = base.clone();
        other.task = "another task".into();
        let kept = filter_tasks(vec![base.clone(), base.clone(), short, long, other.clone()], &reg, 200);
        assert_eq!(kept, vec![base.clone(), other]);
        assert!(filter_tasks(vec![], &reg, 200).is_empty());

        let mut prior = FlowRegistry::new();
        prior.register_task(&base.task);
        assert!(filter_tasks(vec![base], &prior, 200).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn emitted_flows_are_valid(graph_seed in 0..1000u64, seed in any::<u64>(), min_len in 3..6usize, extra in 0..5usize) {
            let g = random_graph(&SynthConfig { pages: 12, ..Default::default() }, graph_seed);
            let c = cfg(min_len, min_len + extra, seed);
            match sample_flows(&g, &c, 20) {
                Err(SampleError::GraphTooSmall { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
                Ok(flows) => {
                    for f in &flows {
                        prop_assert!(f.len() >= c.min_len && f.len() <= c.max_len);
                        prop_assert!(f.steps.windows(2).all(|w| w[0].action != w[1].action));
                        for s in &f.steps {
                            prop_assert!(action_in_space(&s.action, g.page(&s.page_id).unwrap()));
                        }
                        prop_assert!(f.check_connected(&g).is_ok());
                        prop_assert_eq!(f.step_descriptions.len(), f.len());
                    }
                    let kept = filter_tasks(flows, &FlowRegistry::new(), DEFAULT_MAX_TASK_LEN);
                    let again = filter_tasks(kept.clone(), &FlowRegistry::new(), DEFAULT_MAX_TASK_LEN);
                    prop_assert_eq!(kept, again);
                }
            }
        }
    }
}
