//! The learner's stochastic policy with a value head, episode collection and
//! advantage actor-critic updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{Coding, FeatureCoder};
use crate::gridworld::{Cell, EnvConfig, EnvError, EpisodeState, MoveStyle, Observation, Outcome, Variant};
use crate::numnet::{ops, AdamState, Dense, Encoder, EncoderCache, EncoderSpec, NetError, ParamSet, Role, Tensor};

/// Actor-critic hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2CConfig {
    pub gamma: f64,
    /// Probability of a uniformly random action while training.
    pub epsilon: f64,
    pub value_weight: f64,
    pub entropy_weight: f64,
    pub lr: f64,
    /// Episodes collected per policy update.
    pub episodes_per_update: usize,
}

impl Default for A2CConfig {
    fn default() -> Self {
        A2CConfig {
            gamma: 0.9,
            epsilon: 0.05,
            value_weight: 0.5,
            entropy_weight: 0.01,
            lr: 1e-4,
            episodes_per_update: 1,
        }
    }
}

impl A2CConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(format!("epsilon {} outside [0, 1)", self.epsilon));
        }
        if self.lr <= 0.0 {
            return Err("lr must be positive".into());
        }
        if self.episodes_per_update == 0 {
            return Err("episodes_per_update must be at least 1".into());
        }
        Ok(())
    }
}

/// Network architecture and input presentation of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    pub encoder: EncoderSpec,
    pub coding: Coding,
    /// Stacked frames; 0 picks 1 for full maps and 4 for partial maps.
    pub frames: usize,
    /// Feed the self-exploration bit to the policy.
    pub tau_feature: bool,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            encoder: EncoderSpec::default(),
            coding: Coding::Codes,
            frames: 0,
            tau_feature: true,
        }
    }
}

impl NetSpec {
    pub fn frames_for(&self, variant: Variant) -> usize {
        match (self.frames, variant) {
            (0, Variant::Full) => 1,
            (0, Variant::Partial) => 4,
            (n, _) => n,
        }
    }
}

/// Encoder plus a linear head producing `k` action logits and one value.
#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub coder: FeatureCoder,
    encoder: Encoder,
    head: Dense,
    pub params: ParamSet,
    pub style: MoveStyle,
}

/// Outputs of a batched forward pass.
pub struct PolicyForward {
    cache: EncoderCache,
    /// `n × k` action probabilities of the network (no ε-mixing).
    pub probs: Tensor,
    pub values: Vec<f64>,
}

/// One sampled action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSample {
    pub index: usize,
    /// Probability of `index` under the ε-mixed distribution.
    pub prob: f64,
    pub value: f64,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(spec: &NetSpec, env: &EnvConfig, style: MoveStyle, rng: &mut R) -> Self {
        let coder = FeatureCoder {
            coding: spec.coding,
            view_side: env.view_side(),
            map_side: env.side,
            frames: spec.frames_for(env.variant),
            with_tau: spec.tau_feature,
        };
        let mut params = ParamSet::new(Role::Policy);
        let encoder = Encoder::new(&spec.encoder, coder.input_shape(), &mut params, "enc", rng);
        let k = style.action_count();
        let head = Dense::new(&mut params, "head", encoder.out_width(), k + 1, 0.01, rng);
        PolicyNet {
            coder,
            encoder,
            head,
            params,
            style,
        }
    }

    pub fn actions(&self) -> usize {
        self.style.action_count()
    }

    /// Swaps in parameters loaded from a checkpoint.
    pub fn load_params(&mut self, params: &ParamSet) -> Result<(), NetError> {
        self.params.copy_from(params)
    }

    pub fn forward(&self, inputs: Tensor) -> PolicyForward {
        self.forward_with(&self.params, inputs)
    }

    fn forward_with(&self, p: &ParamSet, inputs: Tensor) -> PolicyForward {
        let k = self.actions();
        let cache = self.encoder.forward(p, inputs);
        let out = self.head.forward(p, cache.output());
        let n = out.rows();
        let mut probs = Vec::with_capacity(n * k);
        let mut values = Vec::with_capacity(n);
        for r in 0..n {
            let row = out.row_slice(r);
            let mut logits = row[..k].to_vec();
            ops::softmax_slice(&mut logits);
            probs.extend(logits);
            values.push(row[k]);
        }
        PolicyForward {
            cache,
            probs: Tensor::matrix(n, k, probs).unwrap(),
            values,
        }
    }

    /// Samples an action for one input row: uniform with probability `epsilon`,
    /// otherwise from the softmax.
    pub fn act<R: Rng + ?Sized>(&self, input: &[f64], epsilon: f64, rng: &mut R) -> ActionSample {
        let fwd = self.forward(Tensor::row(input.to_vec()));
        let probs = fwd.probs.row_slice(0);
        let k = probs.len();
        let index = if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            rng.gen_range(0..k)
        } else {
            sample_index(probs, rng)
        };
        ActionSample {
            index,
            prob: (1.0 - epsilon) * probs[index] + epsilon / k as f64,
            value: fwd.values[0],
        }
    }

    /// Greedy action (lowest index among ties).
    pub fn act_greedy(&self, input: &[f64]) -> ActionSample {
        let fwd = self.forward(Tensor::row(input.to_vec()));
        let probs = fwd.probs.row_slice(0);
        let index = argmax(probs);
        ActionSample {
            index,
            prob: probs[index],
            value: fwd.values[0],
        }
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-step record of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub input: Vec<f64>,
    pub action: usize,
    pub prob: f64,
    pub value: f64,
    pub env_reward: f64,
    pub imitation_reward: f64,
    pub done: bool,
}

/// One played episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub steps: Vec<StepRecord>,
    /// `s_0 .. s_m`: one more entry than `steps`.
    pub observations: Vec<Observation>,
    /// Agent cells `s_0 .. s_m`.
    pub positions: Vec<Cell>,
    /// Rewards the update trains on; equal to the environment rewards until
    /// imitation rewards are combined in.
    pub final_rewards: Vec<f64>,
    pub outcome: Outcome,
    pub tau_bit: u8,
    pub epsilon: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn env_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.env_reward).collect()
    }

    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// How actions are chosen while playing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActMode {
    Sample { epsilon: f64 },
    Greedy,
}

/// Plays one episode from an existing start state.
pub fn play<R: Rng + ?Sized>(
    net: &PolicyNet,
    env: &EnvConfig,
    mut state: EpisodeState,
    tau_bit: u8,
    mode: ActMode,
    rng: &mut R,
) -> Result<Rollout, EnvError> {
    let mut observations = vec![state.observe(env, tau_bit)];
    let mut positions = vec![state.agent];
    let mut steps = Vec::new();
    while !state.done {
        let history: Vec<&Observation> = observations.iter().rev().take(net.coder.frames).rev().collect();
        let input = net.coder.encode(&history);
        let a = match mode {
            ActMode::Sample { epsilon } => net.act(&input, epsilon, rng),
            ActMode::Greedy => net.act_greedy(&input),
        };
        let res = state.step(a.index, net.style)?;
        observations.push(state.observe(env, tau_bit));
        positions.push(state.agent);
        steps.push(StepRecord {
            input,
            action: a.index,
            prob: a.prob,
            value: a.value,
            env_reward: res.reward,
            imitation_reward: 0.0,
            done: res.done,
        });
    }
    let final_rewards = steps.iter().map(|s| s.env_reward).collect();
    Ok(Rollout {
        steps,
        observations,
        positions,
        final_rewards,
        outcome: state.outcome,
        tau_bit,
        epsilon: match mode {
            ActMode::Sample { epsilon } => epsilon,
            ActMode::Greedy => 0.0,
        },
    })
}

/// Generates a fresh map from `rng` and plays one sampled episode on it.
pub fn run_episode<R: Rng + ?Sized>(
    net: &PolicyNet,
    env: &EnvConfig,
    tau_bit: u8,
    epsilon: f64,
    rng: &mut R,
) -> Result<Rollout, EnvError> {
    let state = EpisodeState::reset(env, rng)?;
    play(net, env, state, tau_bit, ActMode::Sample { epsilon }, rng)
}

/// Discounted returns `G_t = Σ_{u≥t} γ^{u−t} r_u`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Loss components of one update, summed over steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Actor-critic loss and its gradient for a batch of rollouts:
/// `−Σ log p(a|s)·(G − V) + c_v Σ (G − V)² − c_e Σ H(π)`, with the advantage
/// held constant in the first term and `p` the ε-mixed action probability.
pub fn a2c_loss_and_grad(
    net: &PolicyNet,
    params: &ParamSet,
    rollouts: &[Rollout],
    cfg: &A2CConfig,
) -> (LossStats, ParamSet) {
    let mut inputs = Vec::new();
    let mut actions = Vec::new();
    let mut returns = Vec::new();
    let mut epsilons = Vec::new();
    for r in rollouts {
        assert_eq!(r.final_rewards.len(), r.steps.len(), "final rewards not filled");
        returns.extend(compute_returns(&r.final_rewards, cfg.gamma));
        for s in &r.steps {
            inputs.push(s.input.clone());
            actions.push(s.action);
            epsilons.push(r.epsilon);
        }
    }
    let mut grads = params.zeros_like();
    let mut stats = LossStats::default();
    if inputs.is_empty() {
        return (stats, grads);
    }
    let fwd = net.forward_with(params, Tensor::from_rows(&inputs).unwrap());
    let k = net.actions();
    let n = inputs.len();
    let mut g_out = vec![0.0; n * (k + 1)];
    for t in 0..n {
        let pi = fwd.probs.row_slice(t);
        let a = actions[t];
        let eps = epsilons[t];
        let v = fwd.values[t];
        let adv = returns[t] - v;
        let p_mix = (1.0 - eps) * pi[a] + eps / k as f64;
        stats.policy += -p_mix.max(ops::PROB_EPS).ln() * adv;
        stats.value += adv * adv;
        let h = ops::entropy(pi);
        stats.entropy += h;

        let g = &mut g_out[t * (k + 1)..(t + 1) * (k + 1)];
        // policy term: −adv · d log p_mix / dz
        let coef = -adv * (1.0 - eps) * pi[a] / p_mix;
        for j in 0..k {
            let delta = if j == a { 1.0 } else { 0.0 };
            g[j] += coef * (delta - pi[j]);
        }
        // entropy term: −c_e · dH/dz, dH/dz_j = −π_j (ln π_j + H)
        if cfg.entropy_weight != 0.0 {
            for j in 0..k {
                let lp = pi[j].max(1e-300).ln();
                g[j] += cfg.entropy_weight * pi[j] * (lp + h);
            }
        }
        // value term
        g[k] = -2.0 * cfg.value_weight * adv;
    }
    let g_out = Tensor::matrix(n, k + 1, g_out).unwrap();
    let g_emb = net
        .head
        .backward(params, fwd.cache.output(), &g_out, &mut grads, true)
        .unwrap();
    net.encoder.backward(params, &fwd.cache, &g_emb, &mut grads, false);
    (stats, grads)
}

/// Total scalar loss matching [`a2c_loss_and_grad`] with advantages frozen
/// at `advantages`; used for finite-difference checks.
pub fn a2c_loss_frozen(
    net: &PolicyNet,
    params: &ParamSet,
    rollouts: &[Rollout],
    cfg: &A2CConfig,
    advantages: &[f64],
) -> f64 {
    let mut inputs = Vec::new();
    let mut actions = Vec::new();
    let mut returns = Vec::new();
    let mut epsilons = Vec::new();
    for r in rollouts {
        returns.extend(compute_returns(&r.final_rewards, cfg.gamma));
        for s in &r.steps {
            inputs.push(s.input.clone());
            actions.push(s.action);
            epsilons.push(r.epsilon);
        }
    }
    let fwd = net.forward_with(params, Tensor::from_rows(&inputs).unwrap());
    let k = net.actions();
    let mut loss = 0.0;
    for t in 0..inputs.len() {
        let pi = fwd.probs.row_slice(t);
        let eps = epsilons[t];
        let p_mix = (1.0 - eps) * pi[actions[t]] + eps / k as f64;
        let adv = returns[t] - fwd.values[t];
        loss += -p_mix.ln() * advantages[t];
        loss += cfg.value_weight * adv * adv;
        loss -= cfg.entropy_weight * ops::entropy(pi);
    }
    loss
}

/// One Adam step of the actor-critic loss on a batch of rollouts.
pub fn a2c_update(net: &mut PolicyNet, rollouts: &[Rollout], cfg: &A2CConfig, opt: &mut AdamState) -> LossStats {
    let (stats, grads) = a2c_loss_and_grad(net, &net.params, rollouts, cfg);
    opt.step(&mut net.params, &grads).expect("policy gradient layout");
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridMap;
    use crate::numnet::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec() -> NetSpec {
        NetSpec {
            encoder: EncoderSpec {
                hidden: vec![12],
                embed: 8,
                ..EncoderSpec::default()
            },
            ..NetSpec::default()
        }
    }

    #[test]
    fn returns_by_recursion() {
        let g = compute_returns(&[0.0, 0.0, 1.0], 0.9);
        assert!((g[0] - 0.81).abs() < 1e-15 && (g[1] - 0.9).abs() < 1e-15 && g[2] == 1.0);
        assert_eq!(compute_returns(&[0.3, -1.0, 2.0], 0.0), vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = EnvConfig::full(7);
        let net = PolicyNet::new(&small_spec(), &env, MoveStyle::FourWay, &mut rng);
        let (map, start) = env.generate(&mut rng).unwrap();
        let obs = EpisodeState::new(map, start, 10).observe(&env, 0);
        let input = net.coder.encode(&[&obs]);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let a = net.act(&input, 1.0 - 1e-12, &mut rng);
            counts[a.index] += 1;
            assert!((a.prob - 0.25).abs() < 1e-9);
        }
        let sd = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 / 4.0).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn act_is_reproducible() {
        let env = EnvConfig::full(7);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let net = PolicyNet::new(&small_spec(), &env, MoveStyle::King, &mut rng);
            (0..5)
                .map(|_| run_episode(&net, &env, 1, 0.05, &mut rng).unwrap().actions())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_step_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = EnvConfig::full(7);
        env.max_steps = 1;
        let net = PolicyNet::new(&small_spec(), &env, MoveStyle::FourWay, &mut rng);
        for _ in 0..20 {
            let r = run_episode(&net, &env, 0, 0.05, &mut rng).unwrap();
            assert_eq!(r.len(), 1);
            assert_eq!(r.observations.len(), 2);
            assert!(r.steps[0].done);
            assert_ne!(r.outcome, Outcome::Ongoing);
            assert!(r.observations.iter().all(|o| o.tau_bit == 0));
        }
    }

    #[test]
    fn a2c_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = EnvConfig::full(7);
        let net = PolicyNet::new(&small_spec(), &env, MoveStyle::FourWay, &mut rng);
        // perturb the head so probabilities are not uniform
        let mut params = net.params.clone();
        for v in params.tensors_mut().last_mut().unwrap().data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let rollouts: Vec<Rollout> = (0..2)
            .map(|_| run_episode(&net, &env, 1, 0.1, &mut rng).unwrap())
            .collect();
        let cfg = A2CConfig::default();
        let (_, grads) = a2c_loss_and_grad(&net, &params, &rollouts, &cfg);
        let fwd = net.forward_with(
            &params,
            Tensor::from_rows(
                &rollouts
                    .iter()
                    .flat_map(|r| r.steps.iter().map(|s| s.input.clone()))
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
        );
        let returns: Vec<f64> = rollouts
            .iter()
            .flat_map(|r| compute_returns(&r.final_rewards, cfg.gamma))
            .collect();
        let adv: Vec<f64> = returns.iter().zip(&fwd.values).map(|(g, v)| g - v).collect();
        let err = grad_check(
            |p| a2c_loss_frozen(&net, p, &rollouts, &cfg, &adv),
            &params,
            &grads,
            1e-5,
        );
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn hand_built_two_step_episode() {
        // a map where the goal is two cells right of the start; a network
        // biased towards "right" reaches it in two steps
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = EnvConfig::full(7);
        let mut net = PolicyNet::new(&small_spec(), &env, MoveStyle::FourWay, &mut rng);
        let bias = net.params.index_of("head.b").unwrap();
        net.params.get_mut(bias).data_mut()[3] = 50.0;
        let state = EpisodeState::new(GridMap::open(7, Cell::new(3, 3)), Cell::new(3, 1), 26);
        let r = play(&net, &env, state, 0, ActMode::Greedy, &mut rng).unwrap();
        assert_eq!(r.env_rewards(), vec![0.0, 1.0]);
        assert!(r.success());
    }
}
