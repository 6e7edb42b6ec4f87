//! Pairwise state discriminator, its adversarial training and the imitation
//! rewards derived from its scores.
//!
//! Four ways of pairing states are supported:
//!
//! | strategy | pairs scored for step `t`           | score `μ_t`                          |
//! |----------|-------------------------------------|--------------------------------------|
//! | CSD      | `(s_{t−1}, s_t)`                    | `1 − D(s_{t−1}, s_t)`                |
//! | SSD      | `(s_t, 0)`                          | `1 − D(s_t, 0)`                      |
//! | RTGD     | `(s_ρ(t), s_t)`, `ρ(t) ≤ t − gap`   | `1 − D(s_ρ(t), s_t)`                 |
//! | ATD      | `(s_i, s_t)` for every `i ≠ t`      | `Σ_{i≠t} (1 − max(D, m)) / (T − 1)`  |
//!
//! where `m` is the mean score over every ordered pair of the trajectory.
//! Imitation rewards are `−ln μ_t` shifted by a normalization.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureCoder;
use crate::gridworld::{EnvConfig, Observation};
use crate::numnet::{ops, AdamState, Dense, Encoder, EncoderCache, ParamSet, Role, Tensor};
use crate::policy::NetSpec;

/// Clamp applied to strategy scores before the logarithm.
pub const SCORE_EPS: f64 = 1e-7;
/// Score given to steps a strategy has no pair for.
pub const NEUTRAL_SCORE: f64 = 0.5;
/// Largest number of pairs per side used in one discriminator update.
pub const PAIR_CAP: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum ImitationError {
    #[error("trajectory needs at least 2 states, got {0}")]
    TooShort(usize),
    #[error("minimal gap must be at least 1")]
    BadGap,
}

/// Which state pairs the discriminator sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardStrategy {
    Csd,
    Ssd,
    Rtgd { min_gap: usize },
    Atd,
}

impl RewardStrategy {
    pub fn rtgd() -> Self {
        RewardStrategy::Rtgd { min_gap: 3 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RewardStrategy::Csd => "CSD",
            RewardStrategy::Ssd => "SSD",
            RewardStrategy::Rtgd { .. } => "RTGD",
            RewardStrategy::Atd => "ATD",
        }
    }
}

impl std::fmt::Display for RewardStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RewardStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csd" => Ok(RewardStrategy::Csd),
            "ssd" => Ok(RewardStrategy::Ssd),
            "rtgd" => Ok(RewardStrategy::rtgd()),
            "atd" => Ok(RewardStrategy::Atd),
            other => {
                if let Some(gap) = other.strip_prefix("rtgd") {
                    let gap = gap.trim_start_matches([':', '-']);
                    gap.parse()
                        .ok()
                        .filter(|&g: &usize| g >= 1)
                        .map(|min_gap| RewardStrategy::Rtgd { min_gap })
                        .ok_or_else(|| format!("bad RTGD gap in `{s}`"))
                } else {
                    Err(format!("unknown reward strategy `{s}`"))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Subtract `−ln 0.5`.
    FixedHalfLog,
    /// Subtract the mean raw reward of the episode batch.
    BatchMean,
}

/// One slot of a discriminator input pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    State(usize),
    /// The all-zeros state.
    Zero,
}

/// A scored pair `D(first, second)` attributed to step `target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub first: Slot,
    pub second: Slot,
    pub target: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Expert,
    Learner,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub source: Source,
}

/// Pairs of a trajectory of `len` states for `strategy`.
pub fn build_pairs<R: Rng + ?Sized>(
    len: usize,
    strategy: RewardStrategy,
    source: Source,
    rng: &mut R,
) -> Result<PairSet, ImitationError> {
    if len < 2 {
        return Err(ImitationError::TooShort(len));
    }
    let st = Slot::State;
    let pairs = match strategy {
        RewardStrategy::Csd => (1..len)
            .map(|t| Pair {
                first: st(t - 1),
                second: st(t),
                target: t,
            })
            .collect(),
        RewardStrategy::Ssd => (0..len)
            .map(|t| Pair {
                first: st(t),
                second: Slot::Zero,
                target: t,
            })
            .collect(),
        RewardStrategy::Rtgd { min_gap } => {
            if min_gap == 0 {
                return Err(ImitationError::BadGap);
            }
            (1..len)
                .map(|t| {
                    let i = if t >= min_gap {
                        rng.gen_range(0..=t - min_gap)
                    } else {
                        0
                    };
                    Pair {
                        first: st(i),
                        second: st(t),
                        target: t,
                    }
                })
                .collect()
        }
        RewardStrategy::Atd => (0..len)
            .flat_map(|t| {
                (0..len).filter(move |&i| i != t).map(move |i| Pair {
                    first: st(i),
                    second: st(t),
                    target: t,
                })
            })
            .collect(),
    };
    Ok(PairSet { pairs, source })
}

/// Per-state scores `μ` from the discriminator outputs of `pairs`.
///
/// Entries without a pair (step 0 of CSD and RTGD) get the neutral score.
pub fn assemble_scores(strategy: RewardStrategy, len: usize, pairs: &[Pair], probs: &[f64]) -> Vec<f64> {
    assert_eq!(pairs.len(), probs.len());
    let mut mu = vec![NEUTRAL_SCORE; len];
    match strategy {
        RewardStrategy::Atd => {
            let m = probs.iter().sum::<f64>() / probs.len() as f64;
            let mut acc = vec![0.0; len];
            for (pair, &d) in pairs.iter().zip(probs) {
                acc[pair.target] += 1.0 - d.max(m);
            }
            for (mu, a) in mu.iter_mut().zip(acc) {
                *mu = a / (len - 1) as f64;
            }
        }
        _ => {
            for (pair, &d) in pairs.iter().zip(probs) {
                mu[pair.target] = 1.0 - d;
            }
        }
    }
    mu.iter_mut().for_each(|v| *v = v.clamp(SCORE_EPS, 1.0 - SCORE_EPS));
    mu
}

/// `−ln μ_t`, shifted according to `mode`. `BatchMean` subtracts the mean
/// over the whole batch of episodes.
pub fn normalize_batch(scores: &[Vec<f64>], mode: NormalizationMode) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = scores
        .iter()
        .map(|mu| mu.iter().map(|&m| -m.clamp(SCORE_EPS, 1.0 - SCORE_EPS).ln()).collect())
        .collect();
    let shift = match mode {
        NormalizationMode::FixedHalfLog => 2f64.ln(),
        NormalizationMode::BatchMean => {
            let n: usize = raw.iter().map(Vec::len).sum();
            if n == 0 {
                0.0
            } else {
                raw.iter().flatten().sum::<f64>() / n as f64
            }
        }
    };
    raw.into_iter()
        .map(|r| r.into_iter().map(|v| v - shift).collect())
        .collect()
}

/// Single-episode form of [`normalize_batch`].
pub fn normalize(scores: &[f64], mode: NormalizationMode) -> Vec<f64> {
    normalize_batch(&[scores.to_vec()], mode).pop().unwrap()
}

/// Discriminator widths. The state encoder follows the policy's [`NetSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscSpec {
    /// Per-state MLP after the encoder.
    pub state_hidden: Vec<usize>,
    /// Width of the layer applied to the embedding difference.
    pub pair_hidden: usize,
    pub lr: f64,
}

impl Default for DiscSpec {
    fn default() -> Self {
        DiscSpec {
            state_hidden: vec![256, 256],
            pair_hidden: 256,
            lr: 1e-4,
        }
    }
}

/// `D_φ(s_i, s_j) = σ(w₂ᵀ relu(W₁ (h(s_i) − h(s_j)) + b₁) + b₂)` where `h` is
/// the encoder followed by a ReLU MLP, shared by both inputs.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub coder: FeatureCoder,
    encoder: Encoder,
    state_mlp: Vec<Dense>,
    pair_fc: Dense,
    out: Dense,
    pub params: ParamSet,
}

/// Cached activations of a batched discriminator pass.
pub struct DiscForward {
    enc: EncoderCache,
    mlp_acts: Vec<Tensor>,
    diff: Tensor,
    hidden: Tensor,
    pairs: Vec<(usize, usize)>,
    /// `D` for every pair, in input order.
    pub probs: Vec<f64>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(net: &NetSpec, spec: &DiscSpec, env: &EnvConfig, rng: &mut R) -> Self {
        let coder = FeatureCoder {
            coding: net.coding,
            view_side: env.view_side(),
            map_side: env.side,
            frames: 1,
            with_tau: false,
        };
        let mut params = ParamSet::new(Role::Discriminator);
        let encoder = Encoder::new(&net.encoder, coder.input_shape(), &mut params, "enc", rng);
        let mut width = encoder.out_width();
        let mut state_mlp = Vec::new();
        for (i, &h) in spec.state_hidden.iter().enumerate() {
            state_mlp.push(Dense::new(&mut params, &format!("state{i}"), width, h, 1.0, rng));
            width = h;
        }
        let pair_fc = Dense::new(&mut params, "pair", width, spec.pair_hidden, 1.0, rng);
        let out = Dense::new(&mut params, "out", spec.pair_hidden, 1, 0.01, rng);
        Discriminator {
            coder,
            encoder,
            state_mlp,
            pair_fc,
            out,
            params,
        }
    }

    /// Input row of one observation; the self-exploration bit is not part of it.
    pub fn row(&self, obs: &Observation) -> Vec<f64> {
        self.coder.encode(&[obs])
    }

    /// Scores one pair of observations.
    pub fn score(&self, a: &Observation, b: &Observation) -> f64 {
        let rows = Tensor::from_rows(&[self.row(a), self.row(b)]).unwrap();
        self.forward(&self.params, rows, &[(0, 1)]).probs[0]
    }

    /// Scores `(s, 0)`.
    pub fn score_single(&self, a: &Observation) -> f64 {
        let rows = Tensor::from_rows(&[self.row(a), self.coder.zero_row()]).unwrap();
        self.forward(&self.params, rows, &[(0, 1)]).probs[0]
    }

    /// Batched pass: embeds every row once, then scores the index pairs.
    pub fn forward(&self, p: &ParamSet, rows: Tensor, pairs: &[(usize, usize)]) -> DiscForward {
        let enc = self.encoder.forward(p, rows);
        let mut mlp_acts = vec![enc.output().clone()];
        for layer in &self.state_mlp {
            let mut y = layer.forward(p, mlp_acts.last().unwrap());
            ops::relu_inplace(&mut y);
            mlp_acts.push(y);
        }
        let h = mlp_acts.last().unwrap();
        let width = h.cols();
        let mut diff = Vec::with_capacity(pairs.len() * width);
        for &(a, b) in pairs {
            diff.extend(h.row_slice(a).iter().zip(h.row_slice(b)).map(|(x, y)| x - y));
        }
        let diff = Tensor::matrix(pairs.len(), width, diff).unwrap();
        let mut hidden = self.pair_fc.forward(p, &diff);
        ops::relu_inplace(&mut hidden);
        let logits = self.out.forward(p, &hidden);
        let probs = logits.data().iter().map(|&z| ops::sigmoid_scalar(z)).collect();
        DiscForward {
            enc,
            mlp_acts,
            diff,
            hidden,
            pairs: pairs.to_vec(),
            probs,
        }
    }

    /// Backpropagates `dL/dD` per pair into `grads`.
    pub fn backward(&self, p: &ParamSet, fwd: &DiscForward, grad_probs: &[f64], grads: &mut ParamSet) {
        let n = grad_probs.len();
        let g_logit: Vec<f64> = grad_probs
            .iter()
            .zip(&fwd.probs)
            .map(|(&g, &d)| g * d * (1.0 - d))
            .collect();
        let g_logit = Tensor::matrix(n, 1, g_logit).unwrap();
        let g_hidden = self.out.backward(p, &fwd.hidden, &g_logit, grads, true).unwrap();
        let g_hidden = ops::relu_backward(&fwd.hidden, &g_hidden);
        let g_diff = self.pair_fc.backward(p, &fwd.diff, &g_hidden, grads, true).unwrap();
        let h = fwd.mlp_acts.last().unwrap();
        let mut g_h = Tensor::zeros(h.shape());
        for (k, &(a, b)) in fwd.pairs.iter().enumerate() {
            let g = g_diff.row_slice(k);
            for (dst, v) in g_h.row_slice_mut(a).iter_mut().zip(g) {
                *dst += v;
            }
            for (dst, v) in g_h.row_slice_mut(b).iter_mut().zip(g) {
                *dst -= v;
            }
        }
        for (i, layer) in self.state_mlp.iter().enumerate().rev() {
            g_h = ops::relu_backward(&fwd.mlp_acts[i + 1], &g_h);
            g_h = layer.backward(p, &fwd.mlp_acts[i], &g_h, grads, true).unwrap();
        }
        self.encoder.backward(p, &fwd.enc, &g_h, grads, false);
    }
}

/// Rows and index pairs for discriminating two trajectories at once.
struct JointBatch {
    rows: Tensor,
    expert: Vec<(usize, usize)>,
    learner: Vec<(usize, usize)>,
}

fn joint_batch(
    d: &Discriminator,
    expert: &[Observation],
    expert_pairs: &[Pair],
    learner: &[Observation],
    learner_pairs: &[Pair],
) -> JointBatch {
    let mut rows: Vec<Vec<f64>> = expert.iter().chain(learner).map(|o| d.row(o)).collect();
    let zero = rows.len();
    rows.push(d.coder.zero_row());
    let resolve = |s: Slot, offset: usize| match s {
        Slot::State(i) => i + offset,
        Slot::Zero => zero,
    };
    let map = |pairs: &[Pair], offset: usize| -> Vec<(usize, usize)> {
        pairs
            .iter()
            .map(|p| (resolve(p.first, offset), resolve(p.second, offset)))
            .collect()
    };
    JointBatch {
        rows: Tensor::from_rows(&rows).unwrap(),
        expert: map(expert_pairs, 0),
        learner: map(learner_pairs, expert.len()),
    }
}

/// Diagnostics of one discriminator update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscStats {
    pub expert_bce: f64,
    pub learner_bce: f64,
    pub expert_score: f64,
    pub learner_score: f64,
}

/// Result of one adversarial step: update statistics and the learner's
/// per-state scores under the pre-update discriminator.
#[derive(Clone, Debug)]
pub struct ImitationStep {
    pub stats: DiscStats,
    pub learner_scores: Vec<f64>,
}

fn capped<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    if n <= PAIR_CAP {
        (0..n).collect()
    } else {
        let mut idx = sample(rng, n, PAIR_CAP).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Mean BCE of expert pairs against 1 and learner pairs against 0, with its
/// gradient. `expert_idx` / `learner_idx` pick the pairs that enter the loss.
fn joint_loss_and_grad(
    d: &Discriminator,
    p: &ParamSet,
    fwd: &DiscForward,
    n_expert: usize,
    expert_idx: &[usize],
    learner_idx: &[usize],
    labels: (f64, f64),
) -> (f64, f64, ParamSet) {
    let mut g = vec![0.0; fwd.probs.len()];
    let mut le = 0.0;
    for &i in expert_idx {
        let d = fwd.probs[i];
        le += ops::bce(d, labels.0);
        g[i] += ops::bce_backward(d, labels.0) / expert_idx.len() as f64;
    }
    let mut ll = 0.0;
    for &i in learner_idx {
        let d = fwd.probs[n_expert + i];
        ll += ops::bce(d, labels.1);
        g[n_expert + i] += ops::bce_backward(d, labels.1) / learner_idx.len() as f64;
    }
    let mut grads = p.zeros_like();
    d.backward(p, fwd, &g, &mut grads);
    (le / expert_idx.len() as f64, ll / learner_idx.len() as f64, grads)
}

/// Scores the learner trajectory, takes one Adam step on the discriminator
/// (expert pairs labelled 1, learner pairs 0) and returns the learner's
/// scores computed before the step.
pub fn imitation_step<R: Rng + ?Sized>(
    d: &mut Discriminator,
    expert: &[Observation],
    learner: &[Observation],
    strategy: RewardStrategy,
    opt: &mut AdamState,
    rng: &mut R,
) -> Result<ImitationStep, ImitationError> {
    let ep = build_pairs(expert.len(), strategy, Source::Expert, rng)?;
    let lp = build_pairs(learner.len(), strategy, Source::Learner, rng)?;
    let batch = joint_batch(d, expert, &ep.pairs, learner, &lp.pairs);
    let mut all = batch.expert.clone();
    all.extend(&batch.learner);
    let fwd = d.forward(&d.params, batch.rows, &all);
    let n_expert = batch.expert.len();
    let expert_idx = capped(n_expert, rng);
    let learner_idx = capped(batch.learner.len(), rng);
    let (expert_bce, learner_bce, grads) =
        joint_loss_and_grad(d, &d.params, &fwd, n_expert, &expert_idx, &learner_idx, (1.0, 0.0));
    let learner_probs = &fwd.probs[n_expert..];
    let learner_scores = assemble_scores(strategy, learner.len(), &lp.pairs, learner_probs);
    let stats = DiscStats {
        expert_bce,
        learner_bce,
        expert_score: mean(&fwd.probs[..n_expert]),
        learner_score: mean(learner_probs),
    };
    opt.step(&mut d.params, &grads).expect("discriminator gradient layout");
    Ok(ImitationStep { stats, learner_scores })
}

/// One discriminator update; returns `(expert BCE, learner BCE)` before the step.
pub fn update_discriminator<R: Rng + ?Sized>(
    d: &mut Discriminator,
    expert: &[Observation],
    learner: &[Observation],
    strategy: RewardStrategy,
    opt: &mut AdamState,
    rng: &mut R,
) -> Result<(f64, f64), ImitationError> {
    let step = imitation_step(d, expert, learner, strategy, opt, rng)?;
    Ok((step.stats.expert_bce, step.stats.learner_bce))
}

/// Per-state scores `μ` of a trajectory under the current discriminator.
pub fn strategy_scores<R: Rng + ?Sized>(
    d: &Discriminator,
    traj: &[Observation],
    strategy: RewardStrategy,
    rng: &mut R,
) -> Result<(Vec<f64>, PairSet), ImitationError> {
    let ps = build_pairs(traj.len(), strategy, Source::Learner, rng)?;
    let batch = joint_batch(d, &[], &[], traj, &ps.pairs);
    let fwd = d.forward(&d.params, batch.rows, &batch.learner);
    Ok((assemble_scores(strategy, traj.len(), &ps.pairs, &fwd.probs), ps))
}

/// Total loss `BCE(expert, labels.0) + BCE(learner, labels.1)` over all pairs
/// of both trajectories (no subsampling), and its gradient. Exposed for
/// gradient checks and symmetry tests.
pub fn pair_loss_and_grad(
    d: &Discriminator,
    params: &ParamSet,
    expert: (&[Observation], &[Pair]),
    learner: (&[Observation], &[Pair]),
    labels: (f64, f64),
) -> (f64, ParamSet) {
    let batch = joint_batch(d, expert.0, expert.1, learner.0, learner.1);
    let mut all = batch.expert.clone();
    all.extend(&batch.learner);
    let fwd = d.forward(params, batch.rows, &all);
    let ei: Vec<usize> = (0..batch.expert.len()).collect();
    let li: Vec<usize> = (0..batch.learner.len()).collect();
    let (le, ll, g) = joint_loss_and_grad(d, params, &fwd, batch.expert.len(), &ei, &li, labels);
    (le + ll, g)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
