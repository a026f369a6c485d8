//! Hashed-feature linear softmax policy over a page's action space, with
//! cross-entropy (SFT) and DPO objectives and plain gradient descent.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action_space::{enumerate_action_space, position_in_space};
use crate::model::{Action, GuiPage};

pub const DEFAULT_DIM: usize = 4096;
pub const DEFAULT_BETA: f64 = 0.1;
pub const HISTORY_SLOTS: usize = 3;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("feature dimension {0} is not a nonzero power of two")]
    BadDim(usize),
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("weights must be finite and have length {expected}, got {got}")]
    BadWeights { expected: usize, got: usize },
    #[error("golden action {0} is not in the page's action space")]
    GoldenNotInSpace(String),
    #[error("action {0} is not in the page's action space")]
    ActionNotInSpace(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    dim: usize,
    seed: u64,
}

impl Default for FeatureHasher {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, seed: 0 }
    }
}

impl FeatureHasher {
    pub fn new(dim: usize, seed: u64) -> Result<Self, PolicyError> {
        if dim == 0 || !dim.is_power_of_two() {
            return Err(PolicyError::BadDim(dim));
        }
        Ok(Self { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        h.write(token.as_bytes());
        (h.finish() as usize) & (self.dim - 1)
    }

    /// Hashes tokens into a sparse count vector. Distinct token bags can
    /// collide; at the default dimension this is rare but not impossible.
    pub fn hash_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            *acc.entry(self.index(t.as_ref())).or_default() += 1.0;
        }
        SparseVec(acc.into_iter().collect())
    }
}

/// Sorted `(index, value)` pairs with unique indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec(pub Vec<(usize, f64)>);

impl SparseVec {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| w[i] * v).sum()
    }

    pub fn add_scaled_to(&self, out: &mut [f64], scale: f64) {
        for &(i, v) in &self.0 {
            out[i] += scale * v;
        }
    }
}

/// What the policy conditions on at one step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub task: &'a str,
    pub page: &'a GuiPage,
    pub history: &'a [Action],
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
}

fn action_tokens(a: &Action) -> Vec<String> {
    let mut toks = vec![format!("kind={}", a.kind().as_str())];
    if !a.is_complete() {
        toks.push(format!("name={}", a.element_name().to_lowercase()));
        toks.push(format!("box={}", a.bounds()));
        let (cx, cy) = a.bounds().center();
        toks.push(format!("cell={},{}", cx / 120, cy / 160));
        toks.extend(words(a.element_name()).map(|w| format!("nw={w}")));
    }
    if let Some(d) = a.direction() {
        toks.push(format!("dir={d}"));
    }
    if let Some(text) = a.input_text() {
        toks.extend(words(text).map(|w| format!("tw={w}")));
    }
    toks
}

/// Feature tokens before hashing. Context-only tokens are constant across a
/// page's candidates and cancel in the softmax; the crosses carry the signal.
pub fn feature_tokens(ctx: &StepContext<'_>, a: &Action) -> Vec<String> {
    let acts = action_tokens(a);
    let mut toks: Vec<String> = acts.iter().map(|t| format!("a:{t}")).collect();
    let task_words: Vec<String> = words(ctx.task).collect();
    for w in &task_words {
        toks.push(format!("t:{w}"));
    }
    let core: Vec<&String> = acts
        .iter()
        .filter(|t| t.starts_with("kind=") || t.starts_with("nw=") || t.starts_with("dir=") || t.starts_with("name="))
        .collect();
    for w in &task_words {
        for t in &core {
            toks.push(format!("t:{w}|a:{t}"));
        }
    }
    for e in ctx.page.elements() {
        if !e.name.is_empty() {
            toks.push(format!("p:{}", e.name.to_lowercase()));
        }
    }
    let page = ctx.page.page_id();
    for t in &acts {
        toks.push(format!("pg:{page}|a:{t}"));
    }
    for (slot, h) in ctx.history.iter().rev().take(HISTORY_SLOTS).enumerate() {
        let desc = format!("{}:{}", h.kind().as_str(), h.element_name().to_lowercase());
        toks.push(format!("h{slot}:{desc}"));
        for t in &core {
            toks.push(format!("h{slot}:{desc}|a:{t}"));
        }
    }
    toks
}

pub fn featurize(hasher: &FeatureHasher, ctx: &StepContext<'_>, a: &Action) -> SparseVec {
    hasher.hash_tokens(&feature_tokens(ctx, a))
}

/// Features of every action in the page's action space, in enumeration order.
pub fn featurize_space(hasher: &FeatureHasher, ctx: &StepContext<'_>) -> (Vec<Action>, Vec<SparseVec>) {
    let space = enumerate_action_space(ctx.page);
    let feats = space.iter().map(|a| featurize(hasher, ctx, a)).collect();
    (space, feats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    hasher: FeatureHasher,
    weights: Vec<f64>,
    beta: f64,
}

impl LinearPolicy {
    pub fn zeros(hasher: FeatureHasher, beta: f64) -> Result<Self, PolicyError> {
        Self::from_weights(hasher, vec![0.0; hasher.dim()], beta)
    }

    pub fn from_weights(hasher: FeatureHasher, weights: Vec<f64>, beta: f64) -> Result<Self, PolicyError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(PolicyError::BadBeta(beta));
        }
        if weights.len() != hasher.dim() || weights.iter().any(|w| !w.is_finite()) {
            return Err(PolicyError::BadWeights { expected: hasher.dim(), got: weights.len() });
        }
        Ok(Self { hasher, weights, beta })
    }

    pub fn hasher(&self) -> &FeatureHasher {
        &self.hasher
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn scores(&self, feats: &[SparseVec]) -> Vec<f64> {
        feats.iter().map(|f| f.dot(&self.weights)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            dim: self.hasher.dim(),
            hash_seed: self.hasher.seed(),
            beta: self.beta,
            weights: self.weights.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self, PolicyError> {
        if c.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Version(c.version));
        }
        Self::from_weights(FeatureHasher::new(c.dim, c.hash_seed)?, c.weights, c.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dim: usize,
    pub hash_seed: u64,
    pub beta: f64,
    pub weights: Vec<f64>,
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

/// Log-probability of every action in the page's action space.
pub fn action_logprobs(policy: &LinearPolicy, ctx: &StepContext<'_>) -> Vec<(Action, f64)> {
    let (space, feats) = featurize_space(&policy.hasher, ctx);
    space.into_iter().zip(log_softmax(&policy.scores(&feats))).collect()
}

/// Highest-probability action, earliest on ties.
pub fn greedy_action(policy: &LinearPolicy, ctx: &StepContext<'_>) -> Action {
    let mut best: Option<(Action, f64)> = None;
    for (a, lp) in action_logprobs(policy, ctx) {
        if best.as_ref().is_none_or(|(_, b)| lp > *b) {
            best = Some((a, lp));
        }
    }
    best.map(|(a, _)| a).unwrap_or_else(Action::complete)
}

/// One supervised decision, featurized once.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub candidates: Vec<SparseVec>,
    pub golden: usize,
}

impl SftExample {
    /// Input actions match their space slot regardless of text.
    pub fn new(hasher: &FeatureHasher, ctx: &StepContext<'_>, golden: &Action) -> Result<Self, PolicyError> {
        let (space, candidates) = featurize_space(hasher, ctx);
        let golden = position_in_space(golden, &space).ok_or_else(|| PolicyError::GoldenNotInSpace(golden.describe()))?;
        Ok(Self { candidates, golden })
    }
}

/// One preference decision, featurized once.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoExample {
    pub candidates: Vec<SparseVec>,
    pub chosen: usize,
    pub rejected: usize,
}

impl DpoExample {
    pub fn new(hasher: &FeatureHasher, ctx: &StepContext<'_>, chosen: &Action, rejected: &Action) -> Result<Self, PolicyError> {
        let (space, candidates) = featurize_space(hasher, ctx);
        let find = |a: &Action| position_in_space(a, &space).ok_or_else(|| PolicyError::ActionNotInSpace(a.describe()));
        Ok(Self { chosen: find(chosen)?, rejected: find(rejected)?, candidates })
    }
}

/// Mean cross-entropy of the golden actions and its exact gradient.
pub fn sft_loss_and_grad(policy: &LinearPolicy, batch: &[SftExample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.weights.len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        let lp = log_softmax(&policy.scores(&ex.candidates));
        loss -= lp[ex.golden];
        for (f, l) in ex.candidates.iter().zip(&lp) {
            f.add_scaled_to(&mut grad, l.exp() / n);
        }
        ex.candidates[ex.golden].add_scaled_to(&mut grad, -1.0 / n);
    }
    (loss / n, grad)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log π(chosen) - log π(rejected)` for one example.
fn log_ratio(policy: &LinearPolicy, ex: &DpoExample) -> f64 {
    let lp = log_softmax(&policy.scores(&ex.candidates));
    lp[ex.chosen] - lp[ex.rejected]
}

/// `β[(log πθ(w) - log πref(w)) - (log πθ(l) - log πref(l))]` per example.
pub fn dpo_margins(policy: &LinearPolicy, reference: &LinearPolicy, batch: &[DpoExample]) -> Vec<f64> {
    batch
        .iter()
        .map(|ex| policy.beta * (log_ratio(policy, ex) - log_ratio(reference, ex)))
        .collect()
}

/// Mean DPO loss `-ln σ(margin)` and its gradient in the policy weights.
/// The softmax normalizer cancels between chosen and rejected, so each
/// example's gradient is `-σ(-margin) β (φ_w - φ_l)`.
pub fn dpo_loss_and_grad(policy: &LinearPolicy, reference: &LinearPolicy, batch: &[DpoExample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.weights.len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (ex, z) in batch.iter().zip(dpo_margins(policy, reference, batch)) {
        loss += softplus(-z);
        let coef = -sigmoid(-z) * policy.beta / n;
        ex.candidates[ex.chosen].add_scaled_to(&mut grad, coef);
        ex.candidates[ex.rejected].add_scaled_to(&mut grad, -coef);
    }
    (loss / n, grad)
}

#[derive(Debug, Clone)]
pub enum Objective {
    Sft(Vec<SftExample>),
    Dpo { examples: Vec<DpoExample>, reference: LinearPolicy },
}

impl Objective {
    pub fn len(&self) -> usize {
        match self {
            Objective::Sft(e) => e.len(),
            Objective::Dpo { examples, .. } => examples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Minibatch size; `None` means the full dataset every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 200, lr: 1.0, batch_size: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: LinearPolicy,
    /// Loss of the batch used at each step, measured before the update.
    pub losses: Vec<f64>,
}

/// Plain gradient descent with a fixed learning rate. Minibatches are drawn
/// from a seeded shuffle, so runs are reproducible.
pub fn train(mut policy: LinearPolicy, objective: &Objective, cfg: &TrainConfig) -> Result<TrainOutcome, PolicyError> {
    if objective.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let n = objective.len();
    let bs = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx: Vec<usize> = if bs == n {
            order.clone()
        } else {
            if cursor + bs > n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            cursor += bs;
            order[cursor - bs..cursor].to_vec()
        };
        let (loss, grad) = match objective {
            Objective::Sft(all) => {
                let batch: Vec<SftExample> = idx.iter().map(|&i| all[i].clone()).collect();
                sft_loss_and_grad(&policy, &batch)
            }
            Objective::Dpo { examples, reference } => {
                let batch: Vec<DpoExample> = idx.iter().map(|&i| examples[i].clone()).collect();
                dpo_loss_and_grad(&policy, reference, &batch)
            }
        };
        losses.push(loss);
        for (w, g) in policy.weights.iter_mut().zip(&grad) {
            *w -= cfg.lr * g;
        }
    }
    Ok(TrainOutcome { policy, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::ScreenSize;
    use crate::synth::{bx, PageXml};
    use proptest::prelude::*;
    use rand::Rng;

    fn page() -> GuiPage {
        let xml = PageXml::new()
            .button("search", bx(10, 10, 100, 60))
            .button("cart", bx(110, 10, 200, 60))
            .input("query", bx(10, 80, 400, 140))
            .build();
        GuiPage::new("p", xml, ScreenSize::default()).unwrap()
    }

    fn random_policy(dim: usize, seed: u64) -> LinearPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        LinearPolicy::from_weights(FeatureHasher::new(dim, seed).unwrap(), w, 0.5).unwrap()
    }

    fn central_diff(f: impl Fn(&LinearPolicy) -> f64, p: &LinearPolicy, eps: f64) -> Vec<f64> {
        (0..p.weights.len())
            .map(|i| {
                let mut hi = p.clone();
                hi.weights[i] += eps;
                let mut lo = p.clone();
                lo.weights[i] -= eps;
                (f(&hi) - f(&lo)) / (2.0 * eps)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }

    #[test]
    fn hasher_rejects_non_power_of_two() {
        assert_eq!(FeatureHasher::new(100, 0), Err(PolicyError::BadDim(100)));
        assert!(FeatureHasher::new(64, 0).is_ok());
        let h = FeatureHasher::default();
        assert_eq!(h.index("x"), h.index("x"));
        assert!(h.index("x") < h.dim());
    }

    #[test]
    fn uniform_policy_logprobs() {
        let p = page();
        let policy = LinearPolicy::zeros(FeatureHasher::default(), DEFAULT_BETA).unwrap();
        let ctx = StepContext { task: "find a phone", page: &p, history: &[] };
        let lps = action_logprobs(&policy, &ctx);
        // search, cart, query click, query input, complete
        assert_eq!(lps.len(), 5);
        for (_, lp) in &lps {
            assert!((lp + 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn history_only_adds_history_tokens() {
        let p = page();
        let a = Action::click("search", bx(10, 10, 100, 60));
        let empty = feature_tokens(&StepContext { task: "t", page: &p, history: &[] }, &a);
        let hist = vec![Action::click("cart", bx(110, 10, 200, 60)); 4];
        let full = feature_tokens(&StepContext { task: "t", page: &p, history: &hist }, &a);
        assert_eq!(&full[..empty.len()], &empty[..]);
        assert!(full[empty.len()..].iter().all(|t| t.starts_with('h')));
        let slots: std::collections::BTreeSet<char> = full[empty.len()..].iter().map(|t| t.chars().nth(1).unwrap()).collect();
        assert_eq!(slots.len(), HISTORY_SLOTS);
    }

    #[test]
    fn distinct_actions_hash_apart() {
        let g = crate::synth::random_graph(&crate::synth::SynthConfig { pages: 40, ..Default::default() }, 3);
        let h = FeatureHasher::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pages: Vec<&GuiPage> = g.pages().collect();
        let (mut distinct, mut total) = (0, 0);
        while total < 10_000 {
            let p = pages[rng.random_range(0..pages.len())];
            let space = enumerate_action_space(p);
            if space.len() < 2 {
                continue;
            }
            let i = rng.random_range(0..space.len());
            let j = rng.random_range(0..space.len());
            if i == j {
                continue;
            }
            let ctx = StepContext { task: "open the cart", page: p, history: &[] };
            total += 1;
            if featurize(&h, &ctx, &space[i]) != featurize(&h, &ctx, &space[j]) {
                distinct += 1;
            }
        }
        assert!(distinct as f64 / total as f64 >= 0.999);
    }

    #[test]
    fn sft_uniform_loss_is_log_n() {
        let p = page();
        let h = FeatureHasher::default();
        let ctx = StepContext { task: "t", page: &p, history: &[] };
        let ex = SftExample::new(&h, &ctx, &Action::input("query", bx(10, 80, 400, 140), "phone")).unwrap();
        assert_eq!(ex.golden, 3);
        let policy = LinearPolicy::zeros(h, DEFAULT_BETA).unwrap();
        let (loss, _) = sft_loss_and_grad(&policy, &[ex]);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        let off = Action::click("elsewhere", bx(0, 0, 5, 5));
        assert!(matches!(SftExample::new(&h, &ctx, &off), Err(PolicyError::GoldenNotInSpace(_))));
    }

    #[test]
    fn sft_loss_vanishes_with_large_gap() {
        let p = page();
        let h = FeatureHasher::new(256, 1).unwrap();
        let ctx = StepContext { task: "t", page: &p, history: &[] };
        let ex = SftExample::new(&h, &ctx, &Action::click("cart", bx(110, 10, 200, 60))).unwrap();
        let mut policy = LinearPolicy::zeros(h, DEFAULT_BETA).unwrap();
        let (_, g) = sft_loss_and_grad(&policy, std::slice::from_ref(&ex));
        for (w, gi) in policy.weights.iter_mut().zip(&g) {
            *w = -100.0 * gi;
        }
        assert!(sft_loss_and_grad(&policy, &[ex]).0 < 1e-6);
    }

    #[test]
    fn dpo_scalar_example() {
        // β = 0.5, log-ratio difference 2 - 0
        let loss = softplus(-0.5 * 2.0);
        assert!((loss - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0 && softplus(800.0).is_finite());
    }

    #[test]
    fn dpo_at_reference_is_log_two() {
        let p = page();
        let policy = random_policy(64, 11);
        let ctx = StepContext { task: "buy", page: &p, history: &[] };
        let ex = DpoExample::new(
            policy.hasher(),
            &ctx,
            &Action::click("cart", bx(110, 10, 200, 60)),
            &Action::complete(),
        )
        .unwrap();
        let (loss, _) = dpo_loss_and_grad(&policy, &policy.clone(), &[ex]);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lr_zero_keeps_policy() {
        let p = page();
        let policy = random_policy(64, 2);
        let ctx = StepContext { task: "buy", page: &p, history: &[] };
        let ex = SftExample::new(policy.hasher(), &ctx, &Action::complete()).unwrap();
        let cfg = TrainConfig { steps: 5, lr: 0.0, ..Default::default() };
        let out = train(policy.clone(), &Objective::Sft(vec![ex]), &cfg).unwrap();
        assert_eq!(out.policy, policy);
        assert!(out.losses.windows(2).all(|w| w[0] == w[1]));
        assert!(matches!(train(policy, &Objective::Sft(vec![]), &cfg), Err(PolicyError::EmptyDataset)));
    }

    #[test]
    fn sft_memorizes_one_example() {
        let g = fixtures::shopping_graph();
        let flow = fixtures::shopping_flow();
        let page = g.page("P2").unwrap();
        let history = vec![flow.steps[0].action.clone()];
        let ctx = StepContext { task: &flow.task, page, history: &history };
        let policy = LinearPolicy::zeros(FeatureHasher::default(), DEFAULT_BETA).unwrap();
        let ex = SftExample::new(policy.hasher(), &ctx, &flow.steps[1].action).unwrap();
        let out = train(policy, &Objective::Sft(vec![ex]), &TrainConfig { steps: 50, lr: 0.5, ..Default::default() }).unwrap();
        assert!(flow.steps[1].action.same_target(&greedy_action(&out.policy, &ctx)));
        assert!(out.losses.last().unwrap() < &out.losses[0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let policy = random_policy(64, 4);
        let json = serde_json::to_string(&policy.to_checkpoint()).unwrap();
        let back = LinearPolicy::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, policy);
        let mut bad = policy.to_checkpoint();
        bad.weights.pop();
        assert!(LinearPolicy::from_checkpoint(bad).is_err());
    }

    fn random_batch(policy: &LinearPolicy, seed: u64) -> (Vec<SftExample>, Vec<DpoExample>) {
        let g = crate::synth::random_graph(&crate::synth::SynthConfig { pages: 6, ..Default::default() }, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pages: Vec<&GuiPage> = g.pages().collect();
        let (mut sft, mut dpo) = (Vec::new(), Vec::new());
        for _ in 0..8 {
            let p = pages[rng.random_range(0..pages.len())];
            let space = enumerate_action_space(p);
            let hist: Vec<Action> = (0..rng.random_range(0..5)).map(|_| space[rng.random_range(0..space.len())].clone()).collect();
            let ctx = StepContext { task: "open the second list then search", page: p, history: &hist };
            let w = &space[rng.random_range(0..space.len())];
            let l = &space[rng.random_range(0..space.len())];
            sft.push(SftExample::new(policy.hasher(), &ctx, w).unwrap());
            dpo.push(DpoExample::new(policy.hasher(), &ctx, w, l).unwrap());
        }
        (sft, dpo)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradients_match_finite_differences(seed in 0u64..10_000) {
            let policy = random_policy(64, seed);
            let reference = random_policy(64, seed + 1);
            let reference = LinearPolicy::from_weights(*policy.hasher(), reference.weights, policy.beta()).unwrap();
            let (sft, dpo) = random_batch(&policy, seed);
            let (_, g) = sft_loss_and_grad(&policy, &sft);
            let fd = central_diff(|p| sft_loss_and_grad(p, &sft).0, &policy, 1e-4);
            prop_assert!(rel_err(&g, &fd) < 1e-5);
            let (_, g) = dpo_loss_and_grad(&policy, &reference, &dpo);
            let fd = central_diff(|p| dpo_loss_and_grad(p, &reference, &dpo).0, &policy, 1e-4);
            prop_assert!(rel_err(&g, &fd) < 1e-5);
        }

        #[test]
        fn softmax_normalizes_and_shifts(scores in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let lp = log_softmax(&scores);
            let total: f64 = lp.iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            for (a, b) in lp.iter().zip(log_softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn dpo_at_reference_always_log_two(seed in 0u64..10_000) {
            let policy = random_policy(64, seed);
            let (_, dpo) = random_batch(&policy, seed);
            let (loss, _) = dpo_loss_and_grad(&policy, &policy, &dpo);
            prop_assert!((loss - 2f64.ln()).abs() < 1e-12);
        }
    }
}
