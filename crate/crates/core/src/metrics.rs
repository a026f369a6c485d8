//! Step-level, task-level and task-success metrics.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::episode::EpisodeTrace;
use crate::geometry::ScreenSize;
use crate::model::{Action, GuiFlow, GuiGraph};
use crate::reward::CompletionSpec;

pub const DEFAULT_MARGIN: f64 = 0.14;
pub const TEXT_F1_THRESHOLD: f64 = 0.8;

/// How the screen-relative margin enters the box test. The margin always
/// widens the golden box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    #[default]
    ExpandThenIntersect,
    CenterInExpanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub margin: f64,
    pub margin_mode: MarginMode,
    /// Longest predicted flow that can count as a task success.
    pub max_steps: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN, margin_mode: MarginMode::default(), max_steps: crate::episode::DEFAULT_MAX_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("prediction {index} is for task {pred:?} but gold is {gold:?}")]
    TaskMismatch { index: usize, pred: String, gold: String },
    #[error("{preds} predictions for {golds} gold flows")]
    CountMismatch { preds: usize, golds: usize },
    #[error("{specs} completion specs for {golds} gold flows")]
    SpecCountMismatch { specs: usize, golds: usize },
}

pub fn judge_iou(pred: &Action, gold: &Action, screen: ScreenSize, margin: f64) -> bool {
    judge_iou_with(pred, gold, screen, margin, MarginMode::ExpandThenIntersect)
}

pub fn judge_iou_with(pred: &Action, gold: &Action, screen: ScreenSize, margin: f64, mode: MarginMode) -> bool {
    if pred.kind() != gold.kind() {
        return false;
    }
    if gold.is_complete() {
        return true;
    }
    let widened = gold.bounds().expand(screen, margin);
    match mode {
        MarginMode::ExpandThenIntersect => pred.bounds().intersects(&widened),
        MarginMode::CenterInExpanded => widened.contains_point(pred.bounds().center()),
    }
}

fn token_counts(s: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in s.split_whitespace() {
        *m.entry(t.to_lowercase()).or_default() += 1;
    }
    m
}

/// Multiset token F1 over lowercased whitespace tokens.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = token_counts(pred);
    let g = token_counts(gold);
    let np: usize = p.values().sum();
    let ng: usize = g.values().sum();
    if np == 0 && ng == 0 {
        return 1.0;
    }
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let overlap: usize = p.iter().map(|(t, c)| (*c).min(g.get(t).copied().unwrap_or(0))).sum();
    // 2PR/(P+R) with P = o/np, R = o/ng reduces to 2o/(np+ng).
    2.0 * overlap as f64 / (np + ng) as f64
}

pub fn judge_text(pred: &Action, gold: &Action) -> bool {
    match (pred, gold) {
        (Action::Click { name: a, .. }, Action::Click { name: b, .. }) => a == b,
        (Action::Scroll { name: a, direction: da, .. }, Action::Scroll { name: b, direction: db, .. }) => {
            a == b && da == db
        }
        (Action::Input { name: a, text: ta, .. }, Action::Input { name: b, text: tb, .. }) => {
            a == b && token_f1(ta, tb) > TEXT_F1_THRESHOLD
        }
        (Action::Complete { text: a }, Action::Complete { text: b }) => a == b,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepJudgment {
    pub iou_ok: bool,
    pub text_ok: bool,
}

pub fn judge_step(pred: &Action, gold: &Action, screen: ScreenSize, cfg: &ScoreConfig) -> StepJudgment {
    StepJudgment {
        iou_ok: judge_iou_with(pred, gold, screen, cfg.margin, cfg.margin_mode),
        text_ok: judge_text(pred, gold),
    }
}

/// A predicted action sequence for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: String,
    pub actions: Vec<Action>,
}

impl From<&EpisodeTrace> for Prediction {
    fn from(t: &EpisodeTrace) -> Self {
        Self { task: t.task.clone(), actions: t.actions().cloned().collect() }
    }
}

impl From<&GuiFlow> for Prediction {
    fn from(f: &GuiFlow) -> Self {
        Self { task: f.task.clone(), actions: f.actions().cloned().collect() }
    }
}

/// Gold actions with the closing `Complete`.
pub fn gold_actions(flow: &GuiFlow) -> Vec<Action> {
    let mut acts: Vec<Action> = flow.actions().cloned().collect();
    if !acts.last().is_some_and(Action::is_complete) {
        acts.push(Action::complete());
    }
    acts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub flows: usize,
    pub gold_steps: usize,
    pub step_iou_hits: usize,
    pub step_text_hits: usize,
    pub task_iou_hits: usize,
    pub task_text_hits: usize,
    pub task_successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub step_iou_acc: f64,
    pub step_text_acc: f64,
    pub task_iou_acc: f64,
    pub task_text_acc: f64,
    pub task_success_rate: f64,
    pub counts: MetricCounts,
    pub margin: f64,
    pub margin_mode: MarginMode,
    pub max_steps: usize,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

impl MetricReport {
    pub fn from_counts(counts: MetricCounts, cfg: &ScoreConfig) -> Self {
        Self {
            step_iou_acc: ratio(counts.step_iou_hits, counts.gold_steps),
            step_text_acc: ratio(counts.step_text_hits, counts.gold_steps),
            task_iou_acc: ratio(counts.task_iou_hits, counts.flows),
            task_text_acc: ratio(counts.task_text_hits, counts.flows),
            task_success_rate: ratio(counts.task_successes, counts.flows),
            counts,
            margin: cfg.margin,
            margin_mode: cfg.margin_mode,
            max_steps: cfg.max_steps,
        }
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "{:<14} {:>8} {:>12}", "metric", "value", "count")?;
        let rows = [
            ("step IoU", self.step_iou_acc, c.step_iou_hits, c.gold_steps),
            ("step text", self.step_text_acc, c.step_text_hits, c.gold_steps),
            ("task IoU", self.task_iou_acc, c.task_iou_hits, c.flows),
            ("task text", self.task_text_acc, c.task_text_hits, c.flows),
            ("task success", self.task_success_rate, c.task_successes, c.flows),
        ];
        for (name, v, hits, total) in rows {
            writeln!(f, "{name:<14} {:>7.2}% {:>12}", 100.0 * v, format!("{hits}/{total}"))?;
        }
        write!(f, "margin {} ({:?}), max steps {}", self.margin, self.margin_mode, self.max_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub flow: usize,
    pub step: usize,
    pub gold: Action,
    pub pred: Option<Action>,
    pub iou_ok: bool,
    pub text_ok: bool,
}

/// Scores predictions against gold flows. Lists are aligned by index and must
/// agree on task text; an empty prediction list scores every gold flow as
/// missed.
pub fn score_run(
    preds: &[Prediction],
    golds: &[GuiFlow],
    specs: &[CompletionSpec],
    g: &GuiGraph,
    cfg: &ScoreConfig,
) -> Result<MetricReport, MetricError> {
    score_run_detailed(preds, golds, specs, g, cfg).map(|(r, _)| r)
}

pub fn score_run_detailed(
    preds: &[Prediction],
    golds: &[GuiFlow],
    specs: &[CompletionSpec],
    g: &GuiGraph,
    cfg: &ScoreConfig,
) -> Result<(MetricReport, Vec<StepRecord>), MetricError> {
    if !preds.is_empty() && preds.len() != golds.len() {
        return Err(MetricError::CountMismatch { preds: preds.len(), golds: golds.len() });
    }
    if specs.len() != golds.len() {
        return Err(MetricError::SpecCountMismatch { specs: specs.len(), golds: golds.len() });
    }
    for (index, (p, gf)) in preds.iter().zip(golds).enumerate() {
        if p.task != gf.task {
            return Err(MetricError::TaskMismatch { index, pred: p.task.clone(), gold: gf.task.clone() });
        }
    }
    let empty: Vec<Action> = Vec::new();
    let mut counts = MetricCounts { flows: golds.len(), ..Default::default() };
    let mut records = Vec::new();
    for (i, (gold, spec)) in golds.iter().zip(specs).enumerate() {
        let pred = preds.get(i).map_or(&empty, |p| &p.actions);
        let gold_acts = gold_actions(gold);
        counts.gold_steps += gold_acts.len();
        let same_len = pred.len() == gold_acts.len();
        let (mut all_iou, mut all_text) = (same_len, same_len);
        for (t, ga) in gold_acts.iter().enumerate() {
            let j = pred
                .get(t)
                .map(|pa| judge_step(pa, ga, g.screen(), cfg))
                .unwrap_or(StepJudgment { iou_ok: false, text_ok: false });
            counts.step_iou_hits += usize::from(j.iou_ok);
            counts.step_text_hits += usize::from(j.text_ok);
            all_iou &= j.iou_ok;
            all_text &= j.text_ok;
            records.push(StepRecord { flow: i, step: t, gold: ga.clone(), pred: pred.get(t).cloned(), iou_ok: j.iou_ok, text_ok: j.text_ok });
        }
        counts.task_iou_hits += usize::from(all_iou);
        counts.task_text_hits += usize::from(all_text);
        let success = pred.len() <= cfg.max_steps && spec.completed_by(g, gold.start_page(), pred);
        counts.task_successes += usize::from(success);
    }
    Ok((MetricReport::from_counts(counts, cfg), records))
}
