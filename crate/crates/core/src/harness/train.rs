//! The training loop, greedy evaluation and the metrics table.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use crate::expert::{generate_dataset, plan, DatasetError, ExpertDataset, ExpertError, ExpertSource};
use crate::gridworld::{EnvConfig, EnvError, EpisodeState, MoveStyle, Observation, Outcome};
use crate::imitation::{imitation_step, normalize_batch, DiscStats, Discriminator, ImitationError};
use crate::numnet::AdamState;
use crate::policy::{a2c_update, run_episode, LossStats, PolicyNet, Rollout};
use crate::selfexp::{combine, SuccessEstimator};

const EVAL_STREAM: u64 = 0x5eed_e7a1;
const DATA_STREAM: u64 = 0x0da7_a5e7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error("dataset does not match the experiment: {0}")]
    Mismatch(String),
}

/// Greedy evaluation summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub tau_bit: u8,
    pub success_rate: f64,
    /// Mean steps over successful episodes; NaN without successes.
    pub mean_steps: f64,
    pub median_steps: f64,
    pub trap_rate: f64,
    /// Actions taken per displacement of the evaluated style.
    pub action_histogram: Vec<u64>,
    pub style: MoveStyle,
}

impl EvalReport {
    fn from_episodes(style: MoveStyle, tau_bit: u8, episodes: &[(Outcome, Vec<usize>)]) -> Self {
        let mut histogram = vec![0u64; style.action_count()];
        let mut steps: Vec<usize> = Vec::new();
        let mut traps = 0;
        for (outcome, actions) in episodes {
            for &a in actions {
                histogram[a] += 1;
            }
            match outcome {
                Outcome::Success => steps.push(actions.len()),
                Outcome::TrapDeath => traps += 1,
                _ => {}
            }
        }
        steps.sort_unstable();
        let n = episodes.len().max(1) as f64;
        let (mean_steps, median_steps) = if steps.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mean = steps.iter().sum::<usize>() as f64 / steps.len() as f64;
            let mid = steps.len() / 2;
            let median = if steps.len() % 2 == 1 {
                steps[mid] as f64
            } else {
                (steps[mid - 1] + steps[mid]) as f64 / 2.0
            };
            (mean, median)
        };
        EvalReport {
            episodes: episodes.len(),
            tau_bit,
            success_rate: steps.len() as f64 / n,
            mean_steps,
            median_steps,
            trap_rate: traps as f64 / n,
            action_histogram: histogram,
            style,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes      {}", self.episodes)?;
        writeln!(f, "tau bit       {}", self.tau_bit)?;
        writeln!(f, "success rate  {:.4}", self.success_rate)?;
        writeln!(f, "trap rate     {:.4}", self.trap_rate)?;
        writeln!(f, "mean steps    {:.3}", self.mean_steps)?;
        writeln!(f, "median steps  {:.1}", self.median_steps)?;
        writeln!(f, "action usage ({}):", self.style)?;
        let total: u64 = self.action_histogram.iter().sum();
        for (&(dr, dc), &n) in self.style.displacements().iter().zip(&self.action_histogram) {
            let share = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            writeln!(f, "  ({dr:+},{dc:+})  {n:>8}  {share:.4}")?;
        }
        Ok(())
    }
}

/// Plays `n` episodes on fresh maps, choosing actions with `choose(state,
/// history)` where `history` holds the observations so far.
pub fn evaluate_with<R, F>(
    env: &EnvConfig,
    style: MoveStyle,
    n: usize,
    tau_bit: u8,
    rng: &mut R,
    mut choose: F,
) -> Result<EvalReport, EnvError>
where
    R: Rng + ?Sized,
    F: FnMut(&EpisodeState, &[Observation]) -> usize,
{
    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut state = EpisodeState::reset(env, rng)?;
        let mut history = vec![state.observe(env, tau_bit)];
        let mut actions = Vec::new();
        while !state.done {
            let a = choose(&state, &history);
            state.step(a, style)?;
            actions.push(a);
            history.push(state.observe(env, tau_bit));
        }
        episodes.push((state.outcome, actions));
    }
    Ok(EvalReport::from_episodes(style, tau_bit, &episodes))
}

/// Greedy (`ε = 0`) evaluation of a policy.
pub fn evaluate<R: Rng + ?Sized>(
    net: &PolicyNet,
    env: &EnvConfig,
    n: usize,
    tau_bit: u8,
    rng: &mut R,
) -> Result<EvalReport, EnvError> {
    let frames = net.coder.frames;
    evaluate_with(env, net.style, n, tau_bit, rng, |_, history| {
        let start = history.len().saturating_sub(frames);
        let refs: Vec<&Observation> = history[start..].iter().collect();
        net.act_greedy(&net.coder.encode(&refs)).index
    })
}

/// Evaluation of the shortest-path planner plugged in as the policy.
pub fn evaluate_planner<R: Rng + ?Sized>(
    env: &EnvConfig,
    style: MoveStyle,
    n: usize,
    rng: &mut R,
) -> Result<EvalReport, EnvError> {
    evaluate_with(env, style, n, 0, rng, |state, _| {
        plan(&state.map, style, state.agent)
            .ok()
            .and_then(|p| p.first().copied())
            .unwrap_or(0)
    })
}

/// One line of `metrics.csv`, written at every evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub episodes: usize,
    pub env_steps: usize,
    /// Greedy success with the self-exploration bit cleared.
    pub success: f64,
    pub mean_steps: f64,
    /// Greedy success with the bit set; NaN unless evaluated.
    pub success_tau1: f64,
    /// Success of the sampled training episodes since the last row.
    pub train_success: f64,
    pub upsilon: f64,
    pub tau_rate: f64,
    pub disc_expert_score: f64,
    pub disc_learner_score: f64,
    pub disc_expert_bce: f64,
    pub disc_learner_bce: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub const METRICS_HEADER: &str = "iteration,episodes,env_steps,success,mean_steps,success_tau1,train_success,upsilon,tau_rate,disc_expert_score,disc_learner_score,disc_expert_bce,disc_learner_bce,policy_loss,value_loss,entropy";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let f = [
            self.success,
            self.mean_steps,
            self.success_tau1,
            self.train_success,
            self.upsilon,
            self.tau_rate,
            self.disc_expert_score,
            self.disc_learner_score,
            self.disc_expert_bce,
            self.disc_learner_bce,
            self.policy_loss,
            self.value_loss,
            self.entropy,
        ];
        let mut out = format!("{},{},{}", self.iteration, self.episodes, self.env_steps);
        for v in f {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out
    }

    pub fn from_csv(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 16 {
            return Err(format!("expected 16 fields, found {}", fields.len()));
        }
        let int = |i: usize| -> Result<usize, String> {
            fields[i].parse().map_err(|_| format!("bad integer `{}`", fields[i]))
        };
        let real =
            |i: usize| -> Result<f64, String> { fields[i].parse().map_err(|_| format!("bad number `{}`", fields[i])) };
        Ok(MetricsRow {
            iteration: int(0)?,
            episodes: int(1)?,
            env_steps: int(2)?,
            success: real(3)?,
            mean_steps: real(4)?,
            success_tau1: real(5)?,
            train_success: real(6)?,
            upsilon: real(7)?,
            tau_rate: real(8)?,
            disc_expert_score: real(9)?,
            disc_learner_score: real(10)?,
            disc_expert_bce: real(11)?,
            disc_learner_bce: real(12)?,
            policy_loss: real(13)?,
            value_loss: real(14)?,
            entropy: real(15)?,
        })
    }

    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &MetricsRow) -> bool {
        self.to_csv() == other.to_csv()
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        _ => return Err("missing metrics header".into()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| MetricsRow::from_csv(l).map_err(|e| format!("line {}: {e}", i + 2)))
        .collect()
}

/// Everything a finished run produces.
pub struct TrainOutcome {
    pub net: PolicyNet,
    pub disc: Option<Discriminator>,
    pub metrics: Vec<MetricsRow>,
    pub final_eval: EvalReport,
    /// `(iteration, seconds since start)` per metrics row.
    pub timing: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
    pub stopped_early: bool,
}

/// Callbacks invoked while training.
pub trait TrainObserver {
    /// Each training episode, after its final rewards are set.
    fn on_episode(&mut self, _rollout: &Rollout) {}
    /// Each metrics row, as soon as it is computed.
    fn on_metrics(&mut self, _row: &MetricsRow) {}
}

impl TrainObserver for () {}

/// Loads the configured dataset, or generates a planner dataset from the seed.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<ExpertDataset, TrainError> {
    let ds = match &cfg.dataset {
        Some(path) => ExpertDataset::load(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
            generate_dataset(
                cfg.dataset_size,
                &cfg.env,
                cfg.expert_style,
                ExpertSource::Planner,
                &mut rng,
            )?
        }
    };
    check_dataset(cfg, &ds)?;
    Ok(ds)
}

fn check_dataset(cfg: &ExperimentConfig, ds: &ExpertDataset) -> Result<(), TrainError> {
    let h = &ds.header;
    if h.variant != cfg.env.variant || h.side != cfg.env.side {
        return Err(TrainError::Mismatch(format!(
            "dataset is {} {}×{}, experiment is {} {}×{}",
            h.variant, h.side, h.side, cfg.env.variant, cfg.env.side, cfg.env.side
        )));
    }
    if h.style != cfg.expert_style {
        return Err(TrainError::Mismatch(format!(
            "dataset style {} differs from expert style {}",
            h.style, cfg.expert_style
        )));
    }
    Ok(())
}

#[derive(Default)]
struct Interval {
    episodes: usize,
    successes: usize,
    taus: usize,
    disc: Vec<DiscStats>,
    losses: Vec<LossStats>,
}

fn mean_of<T>(xs: &[T], f: impl Fn(&T) -> f64) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().map(f).sum::<f64>() / xs.len() as f64
    }
}

/// Runs one experiment (one learner episode per iteration).
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome, TrainError> {
    train_observed(cfg, &mut ())
}

/// [`train`] reporting progress to `observer`.
pub fn train_observed(cfg: &ExperimentConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let imitate = cfg.lambda > 0.0;
    let expert_obs: Vec<Vec<Observation>> = if imitate {
        let ds = prepare_dataset(cfg)?;
        ds.trajectories.iter().map(|t| t.observations(&cfg.env)).collect()
    } else {
        Vec::new()
    };

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = PolicyNet::new(&cfg.net, &cfg.env, cfg.learner_style, &mut rng);
    let mut opt = AdamState::new(&net.params, cfg.a2c.lr);
    let mut disc = imitate.then(|| Discriminator::new(&cfg.net, &cfg.disc, &cfg.env, &mut rng));
    let mut disc_opt = disc.as_ref().map(|d| AdamState::new(&d.params, cfg.disc.lr));
    let mut estimator = SuccessEstimator::new(cfg.estimator);

    let mut metrics = Vec::new();
    let mut timing = Vec::new();
    let mut warnings = Vec::new();
    let mut interval = Interval::default();
    let mut batch: Vec<(Rollout, Option<Vec<f64>>)> = Vec::with_capacity(cfg.a2c.episodes_per_update);
    let mut env_steps = 0;
    let mut best = f64::NEG_INFINITY;
    let mut since_gain = 0;
    let mut stopped_early = false;
    let mut iteration = 0;

    while iteration < cfg.iterations {
        iteration += 1;
        let tau = if cfg.self_exploration {
            estimator.sample_tau(&mut rng).tau
        } else {
            1
        };
        let rollout = run_episode(&net, &cfg.env, tau, cfg.a2c.epsilon, &mut rng)?;
        estimator.record_outcome(rollout.success());
        env_steps += rollout.len();
        interval.episodes += 1;
        interval.successes += usize::from(rollout.success());
        interval.taus += usize::from(tau);

        let scores = match (tau, disc.as_mut(), disc_opt.as_mut()) {
            (1, Some(d), Some(o)) => {
                let expert = &expert_obs[rng.gen_range(0..expert_obs.len())];
                let step = imitation_step(d, expert, &rollout.observations, cfg.strategy, o, &mut rng)?;
                interval.disc.push(step.stats);
                Some(step.learner_scores)
            }
            _ => None,
        };
        batch.push((rollout, scores));

        if batch.len() == cfg.a2c.episodes_per_update {
            // reward for action t is the score of the state it leads to
            let scored: Vec<Vec<f64>> = batch
                .iter()
                .filter_map(|(_, s)| s.as_ref().map(|mu| mu[1..].to_vec()))
                .collect();
            let mut imt = normalize_batch(&scored, cfg.normalization).into_iter();
            let mut rollouts = Vec::with_capacity(batch.len());
            for (mut r, s) in batch.drain(..) {
                let env_r = r.env_rewards();
                if s.is_some() {
                    let r_imt = imt.next().unwrap();
                    r.final_rewards = combine(&env_r, &r_imt, cfg.lambda, r.tau_bit).expect("equal lengths");
                    for (step, v) in r.steps.iter_mut().zip(&r_imt) {
                        step.imitation_reward = *v;
                    }
                } else {
                    r.final_rewards = env_r;
                }
                observer.on_episode(&r);
                rollouts.push(r);
            }
            interval
                .losses
                .push(a2c_update(&mut net, &rollouts, &cfg.a2c, &mut opt));
        }

        if iteration % cfg.eval_every == 0 || iteration == cfg.iterations {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM);
            let report = evaluate(&net, &cfg.env, cfg.eval_episodes, cfg.eval_taus[0], &mut eval_rng)?;
            let success_tau1 = if cfg.eval_taus.contains(&1) && cfg.eval_taus[0] != 1 {
                let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM);
                evaluate(&net, &cfg.env, cfg.eval_episodes, 1, &mut eval_rng)?.success_rate
            } else if cfg.eval_taus[0] == 1 {
                report.success_rate
            } else {
                f64::NAN
            };
            let iv = std::mem::take(&mut interval);
            metrics.push(MetricsRow {
                iteration,
                episodes: iteration,
                env_steps,
                success: report.success_rate,
                mean_steps: report.mean_steps,
                success_tau1,
                train_success: iv.successes as f64 / iv.episodes.max(1) as f64,
                upsilon: estimator.value(),
                tau_rate: iv.taus as f64 / iv.episodes.max(1) as f64,
                disc_expert_score: mean_of(&iv.disc, |s| s.expert_score),
                disc_learner_score: mean_of(&iv.disc, |s| s.learner_score),
                disc_expert_bce: mean_of(&iv.disc, |s| s.expert_bce),
                disc_learner_bce: mean_of(&iv.disc, |s| s.learner_bce),
                policy_loss: mean_of(&iv.losses, |l| l.policy),
                value_loss: mean_of(&iv.losses, |l| l.value),
                entropy: mean_of(&iv.losses, |l| l.entropy),
            });
            observer.on_metrics(metrics.last().unwrap());
            timing.push((iteration, started.elapsed().as_secs_f64()));
            if estimator.value() > 0.9 && report.success_rate < 0.5 && warnings.is_empty() {
                warnings.push(format!(
                    "iteration {iteration}: success estimate {:.3} but greedy success {:.3}",
                    estimator.value(),
                    report.success_rate
                ));
            }
            if let Some(stop) = &cfg.early_stop {
                if report.success_rate >= best + stop.min_gain {
                    best = report.success_rate;
                    since_gain = 0;
                } else {
                    since_gain += 1;
                    if since_gain >= stop.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM);
    let final_eval = evaluate(&net, &cfg.env, cfg.eval_episodes, cfg.eval_taus[0], &mut eval_rng)?;
    Ok(TrainOutcome {
        net,
        disc,
        metrics,
        final_eval,
        timing,
        warnings,
        stopped_early,
    })
}

/// Writes `metrics.csv`, `timing.csv`, `final.ckpt`, `disc.ckpt` (when
/// imitating), `report.txt` and the resolved `config.toml` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &TrainOutcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics_to_csv(&out.metrics))?;
    let mut timing = String::from("iteration,seconds\n");
    for (i, s) in &out.timing {
        timing.push_str(&format!("{i},{s:.3}\n"));
    }
    std::fs::write(dir.join("timing.csv"), timing)?;
    out.net
        .params
        .save(&dir.join("final.ckpt"))
        .map_err(std::io::Error::other)?;
    if let Some(d) = &out.disc {
        d.params.save(&dir.join("disc.ckpt")).map_err(std::io::Error::other)?;
    }
    let mut report = out.final_eval.to_string();
    for w in &out.warnings {
        report.push_str(&format!("warning: {w}\n"));
    }
    if out.stopped_early {
        report.push_str("stopped early\n");
    }
    std::fs::write(dir.join("report.txt"), report)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}
