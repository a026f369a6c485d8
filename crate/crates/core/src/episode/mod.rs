//! Agent-environment loop over a page graph.

pub mod bridge;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action_space::enumerate_action_space;
use crate::model::{Action, FlowStep, GuiFlow, GuiGraph, GuiPage};
use crate::policy::{greedy_action, LinearPolicy, StepContext};
use crate::sampler::text::quoted_phrase;

pub const DEFAULT_MAX_STEPS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvalidActionPolicy {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub invalid_action_policy: InvalidActionPolicy,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, invalid_action_policy: InvalidActionPolicy::Lenient }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.max_steps == 0 {
            return Err(EpisodeError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("agent did not answer within {0:.1}s")]
    Timeout(f64),
    #[error("malformed agent response: {0}")]
    MalformedResponse(String),
    #[error("agent transport closed")]
    TransportClosed,
    #[error("agent i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error("unknown page {0:?}")]
    UnknownPage(String),
    #[error("episode already terminated")]
    Terminated,
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error("agent failed at step {step}: {source}")]
    Agent { step: usize, source: AgentError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Executed,
    InvalidStay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Complete,
    StepLimit,
    StrictFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub page_id: String,
    pub action: Action,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: String,
    pub start_page: String,
    pub visited: Vec<TraceStep>,
    pub terminated_by: Termination,
    pub final_page: String,
    pub invalid_action_policy: InvalidActionPolicy,
    pub max_steps: usize,
}

impl EpisodeTrace {
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.visited.iter().map(|s| &s.action)
    }

    pub fn invalid_steps(&self) -> usize {
        self.visited.iter().filter(|s| s.outcome == StepOutcome::InvalidStay).count()
    }

    /// The trace as a flow, the final `Complete` (if any) included.
    pub fn to_flow(&self) -> GuiFlow {
        GuiFlow {
            task: self.task.clone(),
            steps: self
                .visited
                .iter()
                .map(|s| FlowStep { page_id: s.page_id.clone(), action: s.action.clone() })
                .collect(),
            step_descriptions: Vec::new(),
            terminal_page: self.final_page.clone(),
        }
    }
}

/// Mutable state of one episode.
#[derive(Debug, Clone)]
pub struct EnvironmentState<'g> {
    graph: &'g GuiGraph,
    task: String,
    start: String,
    current: String,
    history: Vec<Action>,
    visited: Vec<TraceStep>,
    cfg: EpisodeConfig,
    terminated: Option<Termination>,
}

pub fn reset<'g>(g: &'g GuiGraph, task: &str, start: &str, cfg: EpisodeConfig) -> Result<EnvironmentState<'g>, EpisodeError> {
    cfg.validate()?;
    if g.page(start).is_none() {
        return Err(EpisodeError::UnknownPage(start.to_string()));
    }
    Ok(EnvironmentState {
        graph: g,
        task: task.to_string(),
        start: start.to_string(),
        current: start.to_string(),
        history: Vec::new(),
        visited: Vec::new(),
        cfg,
        terminated: None,
    })
}

impl<'g> EnvironmentState<'g> {
    pub fn current_page(&self) -> &'g GuiPage {
        self.graph.page(&self.current).expect("current page always exists")
    }

    pub fn current_id(&self) -> &str {
        &self.current
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    pub fn steps_taken(&self) -> usize {
        self.visited.len()
    }

    pub fn terminated(&self) -> Option<Termination> {
        self.terminated
    }

    /// Executes `a`. Actions without a matching edge stay on the page under
    /// `Lenient` and end the episode under `Strict`; either way they count as
    /// a step. Reaching `max_steps` ends the episode.
    pub fn step(&mut self, a: Action) -> Result<StepOutcome, EpisodeError> {
        if self.terminated.is_some() {
            return Err(EpisodeError::Terminated);
        }
        let page_id = self.current.clone();
        let outcome = if a.is_complete() {
            self.terminated = Some(Termination::Complete);
            StepOutcome::Executed
        } else if let Some(e) = self.graph.transition(&self.current, &a) {
            self.current = e.dst.clone();
            StepOutcome::Executed
        } else {
            if self.cfg.invalid_action_policy == InvalidActionPolicy::Strict {
                self.terminated = Some(Termination::StrictFailure);
            }
            StepOutcome::InvalidStay
        };
        self.history.push(a.clone());
        self.visited.push(TraceStep { page_id, action: a, outcome });
        if self.terminated.is_none() && self.visited.len() >= self.cfg.max_steps {
            self.terminated = Some(Termination::StepLimit);
        }
        Ok(outcome)
    }

    pub fn into_trace(self) -> EpisodeTrace {
        EpisodeTrace {
            task: self.task,
            start_page: self.start,
            visited: self.visited,
            terminated_by: self.terminated.unwrap_or(Termination::StepLimit),
            final_page: self.current,
            invalid_action_policy: self.cfg.invalid_action_policy,
            max_steps: self.cfg.max_steps,
        }
    }
}

/// Everything an agent sees when choosing the next action.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub task: &'a str,
    pub step_index: usize,
    pub page: &'a GuiPage,
    pub action_space: &'a [Action],
    pub history: &'a [Action],
}

pub trait Agent {
    fn decide(&mut self, req: &AgentRequest<'_>) -> Result<Action, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn decide(&mut self, req: &AgentRequest<'_>) -> Result<Action, AgentError> {
        (**self).decide(req)
    }
}

pub fn run_episode(
    g: &GuiGraph,
    agent: &mut dyn Agent,
    task: &str,
    start: &str,
    cfg: EpisodeConfig,
) -> Result<EpisodeTrace, EpisodeError> {
    let mut state = reset(g, task, start, cfg)?;
    while state.terminated().is_none() {
        let page = state.current_page();
        let space = enumerate_action_space(page);
        let req = AgentRequest {
            task,
            step_index: state.steps_taken(),
            page,
            action_space: &space,
            history: state.history(),
        };
        let action = agent
            .decide(&req)
            .map_err(|source| EpisodeError::Agent { step: state.steps_taken(), source })?;
        state.step(action)?;
    }
    Ok(state.into_trace())
}

/// Replays a fixed action list, then emits `Complete`.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    actions: Vec<Action>,
    next: usize,
}

impl ScriptedAgent {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, next: 0 }
    }

    pub fn golden(flow: &GuiFlow) -> Self {
        Self::new(flow.actions().cloned().collect())
    }
}

impl Agent for ScriptedAgent {
    fn decide(&mut self, _req: &AgentRequest<'_>) -> Result<Action, AgentError> {
        let a = self.actions.get(self.next).cloned().unwrap_or_else(Action::complete);
        self.next += 1;
        Ok(a)
    }
}

/// Uniform choice from the action space; `Input` slots stay empty.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn decide(&mut self, req: &AgentRequest<'_>) -> Result<Action, AgentError> {
        Ok(req.action_space.choose(&mut self.rng).cloned().unwrap_or_else(Action::complete))
    }
}

/// Greedy linear policy. The policy scores slots, not text, so an `Input`
/// is filled with the first quoted phrase of the task, if any.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    policy: LinearPolicy,
}

impl PolicyAgent {
    pub fn new(policy: LinearPolicy) -> Self {
        Self { policy }
    }
}

impl Agent for PolicyAgent {
    fn decide(&mut self, req: &AgentRequest<'_>) -> Result<Action, AgentError> {
        let ctx = StepContext { task: req.task, page: req.page, history: req.history };
        Ok(match greedy_action(&self.policy, &ctx) {
            Action::Input { name, bounds, .. } => Action::input(name, bounds, quoted_phrase(req.task).unwrap_or_default()),
            other => other,
        })
    }
}
