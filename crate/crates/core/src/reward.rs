//! Four-level action rewards and preference-pair construction.
//!
//! A task is distilled into an ordered list of reach/operate obligations (a
//! [`CompletionSpec`]). A flow completes the task when it meets every
//! obligation in order and then emits `Complete`; flow length counts the
//! `Complete` step. Shortest completions are found by breadth-first search
//! over `(page, obligations met)` states, which never revisits a state, so
//! cycles in the page graph are harmless.
//!
//! Relative to the shortest completion length `L*` from the flow's start, a
//! candidate action on the current page is
//!
//! * `Golden` if some completion through it has length `L*`,
//! * `Longer` if completions through it exist but all are longer,
//! * `Incomplete` if no completion through it fits in the search depth,
//! * `Invalid` if it is outside the page's action space or cannot execute.

use std::collections::{HashSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action_space::{action_in_space, enumerate_action_space};
use crate::model::{Action, GraphError, GuiFlow, GuiGraph, SubtaskKind, SubtaskSpec};

/// Matches the episode step limit.
pub const MAX_SEARCH_DEPTH: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardLevel {
    Invalid = 0,
    Incomplete = 1,
    Longer = 2,
    Golden = 3,
}

impl RewardLevel {
    pub const ALL: [RewardLevel; 4] =
        [RewardLevel::Invalid, RewardLevel::Incomplete, RewardLevel::Longer, RewardLevel::Golden];

    pub fn value(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("completion spec has no obligations")]
    EmptySpec,
    #[error("no completing flow from {start:?} within {depth} steps")]
    NoGoldenFlow { start: String, depth: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionSpec {
    pub subtasks: Vec<SubtaskSpec>,
    /// Longest flow considered, `Complete` included.
    pub max_search_depth: usize,
}

impl CompletionSpec {
    pub fn new(subtasks: Vec<SubtaskSpec>, max_search_depth: usize) -> Result<Self, RewardError> {
        if subtasks.is_empty() {
            return Err(RewardError::EmptySpec);
        }
        Ok(Self { subtasks, max_search_depth })
    }

    /// Depth set to twice the shortest completion from `start`, capped at
    /// [`MAX_SEARCH_DEPTH`].
    pub fn with_auto_depth(subtasks: Vec<SubtaskSpec>, g: &GuiGraph, start: &str) -> Result<Self, RewardError> {
        let mut spec = Self::new(subtasks, MAX_SEARCH_DEPTH)?;
        let golden = golden_length(g, start, &spec)?.ok_or_else(|| RewardError::NoGoldenFlow {
            start: start.to_string(),
            depth: MAX_SEARCH_DEPTH,
        })?;
        spec.max_search_depth = (2 * golden).min(MAX_SEARCH_DEPTH);
        Ok(spec)
    }

    /// `[Reach(terminal page)]` for a recorded flow.
    pub fn reach_terminal(flow: &GuiFlow, g: &GuiGraph) -> Result<Self, RewardError> {
        let reach = SubtaskSpec::reach(flow.terminal_page.clone(), flow.task.clone());
        Self::with_auto_depth(vec![reach], g, flow.start_page())
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Obligations met after arriving on `page` with `met` already done.
    pub fn advance_on_arrival(&self, mut met: usize, page: &str) -> usize {
        while let Some(s) = self.subtasks.get(met) {
            if s.kind == SubtaskKind::Reach && s.target_page == page {
                met += 1;
            } else {
                break;
            }
        }
        met
    }

    /// Obligations met after executing `action` on `page`.
    pub fn advance_on_action(&self, met: usize, page: &str, action: &Action) -> usize {
        match self.subtasks.get(met) {
            Some(s) if s.kind == SubtaskKind::Operate && s.target_page == page => match &s.required_action {
                Some(req) if action.triggers(req) => met + 1,
                _ => met,
            },
            _ => met,
        }
    }

    /// Progress after following one edge from `page` to `dst` with `action`.
    pub fn step(&self, met: usize, page: &str, action: &Action, dst: &str) -> usize {
        let met = self.advance_on_action(met, page, action);
        self.advance_on_arrival(met, dst)
    }

    /// Replays `actions` from `start` in `g`. Actions without a transition
    /// leave the page unchanged but still consume a step. True iff every
    /// obligation is met, the last action is `Complete`, and no action follows
    /// the first `Complete`.
    pub fn completed_by(&self, g: &GuiGraph, start: &str, actions: &[Action]) -> bool {
        let mut page = start.to_string();
        let mut met = self.advance_on_arrival(0, start);
        for (i, a) in actions.iter().enumerate() {
            if a.is_complete() {
                return i + 1 == actions.len() && met == self.len();
            }
            if let Some(e) = g.transition(&page, a) {
                met = self.step(met, &page, a, &e.dst);
                page = e.dst.clone();
            }
        }
        false
    }
}

/// Fewest further steps, `Complete` included, to finish from `(page, met)`
/// within `budget` steps.
fn steps_to_finish(g: &GuiGraph, spec: &CompletionSpec, page: &str, met: usize, budget: usize) -> Option<usize> {
    if budget == 0 {
        return None;
    }
    let n = spec.len();
    let mut seen: HashSet<(String, usize)> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert((page.to_string(), met));
    queue.push_back((page.to_string(), met, 0usize));
    while let Some((p, k, d)) = queue.pop_front() {
        if k == n {
            return Some(d + 1);
        }
        // d actions so far; another action plus Complete must still fit.
        if d + 2 > budget {
            continue;
        }
        for e in g.outgoing(&p) {
            let k2 = spec.step(k, &p, &e.action, &e.dst);
            if seen.insert((e.dst.clone(), k2)) {
                queue.push_back((e.dst.clone(), k2, d + 1));
            }
        }
    }
    None
}

/// Length of the shortest completing flow from `start`, `Complete` included.
pub fn golden_length(g: &GuiGraph, start: &str, spec: &CompletionSpec) -> Result<Option<usize>, RewardError> {
    g.require_page(start)?;
    let met = spec.advance_on_arrival(0, start);
    Ok(steps_to_finish(g, spec, start, met, spec.max_search_depth))
}

/// Progress of an executed prefix: obligations met and the page it ends on.
fn replay(spec: &CompletionSpec, history: &GuiFlow) -> usize {
    let pages = history.page_sequence();
    let mut met = spec.advance_on_arrival(0, pages[0]);
    for (i, s) in history.steps.iter().enumerate() {
        met = spec.step(met, &s.page_id, &s.action, pages[i + 1]);
    }
    met
}

/// Reward level of taking `a` on `page_id` after `history`, an executed
/// prefix that ends on `page_id`.
pub fn classify_action(
    g: &GuiGraph,
    page_id: &str,
    history: &GuiFlow,
    a: &Action,
    spec: &CompletionSpec,
) -> Result<RewardLevel, RewardError> {
    Classifier::new(g, history.start_page(), spec)?.classify(page_id, history, a)
}

/// Caches the golden length for repeated classification from one start page.
pub struct Classifier<'a> {
    g: &'a GuiGraph,
    spec: &'a CompletionSpec,
    golden: usize,
}

impl<'a> Classifier<'a> {
    pub fn new(g: &'a GuiGraph, start: &str, spec: &'a CompletionSpec) -> Result<Self, RewardError> {
        let golden = golden_length(g, start, spec)?.ok_or_else(|| RewardError::NoGoldenFlow {
            start: start.to_string(),
            depth: spec.max_search_depth,
        })?;
        Ok(Self { g, spec, golden })
    }

    pub fn golden_length(&self) -> usize {
        self.golden
    }

    pub fn classify(&self, page_id: &str, history: &GuiFlow, a: &Action) -> Result<RewardLevel, RewardError> {
        let page = self.g.require_page(page_id)?;
        if !action_in_space(a, page) {
            return Ok(RewardLevel::Invalid);
        }
        let used = history.len();
        let met = replay(self.spec, history);
        let total = if a.is_complete() {
            (met == self.spec.len()).then_some(used + 1)
        } else {
            match self.g.transition(page_id, a) {
                None if matches!(a, Action::Input { .. }) => return Ok(RewardLevel::Incomplete),
                None => return Ok(RewardLevel::Invalid),
                Some(e) => {
                    let met = self.spec.step(met, page_id, a, &e.dst);
                    let budget = self.spec.max_search_depth.saturating_sub(used + 1);
                    steps_to_finish(self.g, self.spec, &e.dst, met, budget).map(|rest| used + 1 + rest)
                }
            }
        };
        Ok(match total {
            Some(t) if t <= self.spec.max_search_depth && t == self.golden => RewardLevel::Golden,
            Some(t) if t <= self.spec.max_search_depth => RewardLevel::Longer,
            _ => RewardLevel::Incomplete,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairSource {
    AgentGenerated,
    SpaceSampled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub task: String,
    pub page_id: String,
    pub step: usize,
    pub chosen: Action,
    pub rejected: Action,
    pub chosen_level: RewardLevel,
    pub rejected_level: RewardLevel,
    pub source: PairSource,
    pub golden_length: usize,
}

/// A golden flow and the agent's regenerated action at each of its steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegeneratedFlow {
    pub golden: GuiFlow,
    pub agent_actions: Vec<Option<Action>>,
}

/// Pairs each golden action with a strictly lower-reward action: the agent's
/// own action when it scores lower, otherwise a uniformly sampled lower-level
/// member of the page's action space. Steps with no lower action are skipped,
/// as are flows whose spec cannot be built or completed.
pub fn build_preference_pairs<R: Rng>(
    g: &GuiGraph,
    flows: &[RegeneratedFlow],
    spec_fn: &dyn Fn(&GuiFlow) -> Result<CompletionSpec, RewardError>,
    rng: &mut R,
) -> Vec<PreferencePair> {
    let mut pairs = Vec::new();
    for item in flows {
        let flow = &item.golden;
        let Ok(spec) = spec_fn(flow) else { continue };
        let Ok(classifier) = Classifier::new(g, flow.start_page(), &spec) else { continue };
        for (t, step) in flow.steps.iter().enumerate() {
            let history = flow.prefix(t);
            let Ok(chosen_level) = classifier.classify(&step.page_id, &history, &step.action) else { continue };
            let agent = item.agent_actions.get(t).and_then(Option::as_ref);
            if let Some(agent_action) = agent {
                if let Ok(level) = classifier.classify(&step.page_id, &history, agent_action) {
                    if level < chosen_level {
                        pairs.push(PreferencePair {
                            task: flow.task.clone(),
                            page_id: step.page_id.clone(),
                            step: t,
                            chosen: step.action.clone(),
                            rejected: agent_action.clone(),
                            chosen_level,
                            rejected_level: level,
                            source: PairSource::AgentGenerated,
                            golden_length: classifier.golden_length(),
                        });
                        continue;
                    }
                }
            }
            let Some(page) = g.page(&step.page_id) else { continue };
            let lower: Vec<(Action, RewardLevel)> = enumerate_action_space(page)
                .into_iter()
                .filter_map(|a| {
                    let level = classifier.classify(&step.page_id, &history, &a).ok()?;
                    (level < chosen_level).then_some((a, level))
                })
                .collect();
            if let Some((rejected, rejected_level)) = lower.choose(rng) {
                pairs.push(PreferencePair {
                    task: flow.task.clone(),
                    page_id: step.page_id.clone(),
                    step: t,
                    chosen: step.action.clone(),
                    rejected: rejected.clone(),
                    chosen_level,
                    rejected_level: *rejected_level,
                    source: PairSource::SpaceSampled,
                    golden_length: classifier.golden_length(),
                });
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, cart_actions, cart_scenario};
    use crate::model::FlowStep;
    use crate::synth::{bx, chain_graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn history(steps: &[(&str, Action)], terminal: &str) -> GuiFlow {
        GuiFlow {
            task: "add product A to the cart".into(),
            steps: steps.iter().map(|(p, a)| FlowStep { page_id: p.to_string(), action: a.clone() }).collect(),
            step_descriptions: vec![String::new(); steps.len()],
            terminal_page: terminal.into(),
        }
    }

    fn cart_spec() -> (GuiGraph, CompletionSpec) {
        let (g, subtasks) = cart_scenario();
        (g, CompletionSpec::new(subtasks, 6).unwrap())
    }

    #[test]
    fn golden_length_examples() {
        let g = chain_graph(&["H", "A", "T"]);
        let spec = CompletionSpec::new(vec![SubtaskSpec::reach("T", "")], 6).unwrap();
        assert_eq!(golden_length(&g, "H", &spec).unwrap(), Some(3));
        let home = CompletionSpec::new(vec![SubtaskSpec::reach("H", "")], 6).unwrap();
        assert_eq!(golden_length(&g, "H", &home).unwrap(), Some(1));
        let shallow = CompletionSpec::new(vec![SubtaskSpec::reach("T", "")], 2).unwrap();
        assert_eq!(golden_length(&g, "H", &shallow).unwrap(), None);
        let nowhere = CompletionSpec::new(vec![SubtaskSpec::reach("H", "")], 6).unwrap();
        assert_eq!(golden_length(&g, "T", &nowhere).unwrap(), None);
        assert!(golden_length(&g, "missing", &spec).is_err());
        assert_eq!(CompletionSpec::new(vec![], 3), Err(RewardError::EmptySpec));
    }

    #[test]
    fn cart_scenario_levels() {
        let (g, spec) = cart_spec();
        let a = cart_actions();
        let start = history(&[], "P0");
        assert_eq!(golden_length(&g, "P0", &spec).unwrap(), Some(4));
        assert_eq!(classify_action(&g, "P0", &start, &a.a0_0, &spec).unwrap(), RewardLevel::Golden);
        assert_eq!(classify_action(&g, "P0", &start, &a.a0_1, &spec).unwrap(), RewardLevel::Golden);
        assert_eq!(classify_action(&g, "P0", &start, &a.a0_2, &spec).unwrap(), RewardLevel::Longer);

        let at_p1_1 = history(&[("P0", a.a0_1.clone())], "P1^1");
        assert_eq!(classify_action(&g, "P1^1", &at_p1_1, &a.a1_1, &spec).unwrap(), RewardLevel::Golden);
        assert_eq!(classify_action(&g, "P1^1", &at_p1_1, &a.a1_3, &spec).unwrap(), RewardLevel::Longer);
        assert_eq!(classify_action(&g, "P1^1", &at_p1_1, &a.a1_4, &spec).unwrap(), RewardLevel::Incomplete);
        // element that lives on another page
        assert_eq!(classify_action(&g, "P1^1", &at_p1_1, &a.add_to_cart, &spec).unwrap(), RewardLevel::Invalid);
        // premature Complete
        assert_eq!(classify_action(&g, "P1^1", &at_p1_1, &Action::complete(), &spec).unwrap(), RewardLevel::Incomplete);
    }

    #[test]
    fn complete_after_all_obligations() {
        let (g, spec) = cart_spec();
        let a = cart_actions();
        let details = Action::click("Product A details", bx(20, 300, 700, 400));
        let done = history(&[("P0", a.a0_0.clone()), ("P1", details), ("P2", a.add_to_cart.clone())], "P3");
        assert_eq!(classify_action(&g, "P3", &done, &Action::complete(), &spec).unwrap(), RewardLevel::Golden);
    }

    #[test]
    fn no_golden_flow_is_an_error() {
        let g = chain_graph(&["H", "A"]);
        let spec = CompletionSpec::new(vec![SubtaskSpec::reach("H", "")], 6).unwrap();
        let h = history(&[], "A");
        let a = g.outgoing("H").next().unwrap().action.clone();
        assert!(matches!(
            classify_action(&g, "A", &h, &a, &spec),
            Err(RewardError::NoGoldenFlow { .. })
        ));
    }

    #[test]
    fn input_without_matching_text_is_incomplete() {
        let g = fixtures::shopping_graph();
        let spec = CompletionSpec::new(vec![SubtaskSpec::reach("P4", "")], 8).unwrap();
        let flow = fixtures::shopping_flow();
        let h = flow.prefix(1);
        let good = flow.steps[1].action.clone();
        let Action::Input { name, bounds, .. } = good.clone() else { unreachable!() };
        let other = Action::input(name, bounds, "water purifier");
        let c = Classifier::new(&g, "P1", &spec).unwrap();
        assert_eq!(c.classify("P2", &h, &good).unwrap(), RewardLevel::Golden);
        assert_eq!(c.classify("P2", &h, &other).unwrap(), RewardLevel::Incomplete);
        // in space but wired to nothing
        let dead = Action::click("headphones", bx(360, 300, 700, 360));
        assert_eq!(c.classify("P2", &h, &dead).unwrap(), RewardLevel::Invalid);
    }

    #[test]
    fn completed_by_replay() {
        let (g, flow) = fixtures::two_route_graph();
        let spec = CompletionSpec::new(vec![SubtaskSpec::reach("T", "")], 15).unwrap();
        let mut acts: Vec<Action> = flow.actions().cloned().collect();
        assert!(!spec.completed_by(&g, "H", &acts));
        acts.push(Action::complete());
        assert!(spec.completed_by(&g, "H", &acts));
        acts.push(Action::complete());
        assert!(!spec.completed_by(&g, "H", &acts));
    }

    #[test]
    fn pairs_follow_the_construction_rule() {
        let (g, spec) = cart_spec();
        let a = cart_actions();
        let details = Action::click("Product A details", bx(20, 300, 700, 400));
        let golden = GuiFlow {
            task: "add product A to the cart".into(),
            steps: vec![
                FlowStep { page_id: "P0".into(), action: a.a0_0.clone() },
                FlowStep { page_id: "P1".into(), action: details.clone() },
                FlowStep { page_id: "P2".into(), action: a.add_to_cart.clone() },
            ],
            step_descriptions: vec![String::new(); 3],
            terminal_page: "P3".into(),
        };
        let regen = RegeneratedFlow {
            golden: golden.clone(),
            // worse at step 0; as good as golden at step 1; absent at step 2
            agent_actions: vec![Some(a.a0_2.clone()), Some(details.clone()), None],
        };
        let spec_fn = |_: &GuiFlow| Ok(spec.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs = build_preference_pairs(&g, &[regen], &spec_fn, &mut rng);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].source, PairSource::AgentGenerated);
        assert_eq!(pairs[0].rejected, a.a0_2);
        assert_eq!((pairs[0].chosen_level, pairs[0].rejected_level), (RewardLevel::Golden, RewardLevel::Longer));
        assert_eq!(pairs[1].source, PairSource::SpaceSampled);
        assert_eq!(pairs[2].source, PairSource::SpaceSampled);
        for p in &pairs {
            assert!(p.chosen_level > p.rejected_level);
            assert_eq!(p.golden_length, 4);
        }
        // P1 offers only the golden click and Complete (Incomplete there)
        assert_eq!(pairs[1].rejected, Action::complete());
    }

    #[test]
    fn all_golden_page_is_skipped() {
        // Single page whose only obligation is already met: Complete is the
        // whole action space and it is golden.
        let g = chain_graph(&["H"]);
        let spec = CompletionSpec::new(vec![SubtaskSpec::reach("H", "")], 3).unwrap();
        let c = Classifier::new(&g, "H", &spec).unwrap();
        let h = history(&[], "H");
        assert_eq!(c.classify("H", &h, &Action::complete()).unwrap(), RewardLevel::Golden);
        let flow = GuiFlow {
            task: "stay".into(),
            steps: vec![FlowStep { page_id: "H".into(), action: Action::complete() }],
            step_descriptions: vec![String::new()],
            terminal_page: "H".into(),
        };
        let regen = RegeneratedFlow { golden: flow, agent_actions: vec![None] };
        let spec_fn = |_: &GuiFlow| Ok(spec.clone());
        let pairs = build_preference_pairs(&g, &[regen], &spec_fn, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(pairs.is_empty());
    }
}
