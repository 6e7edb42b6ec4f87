//! Self-exploration gate: a running success-rate estimate `υ` decides, per
//! episode, whether imitation rewards are used (`τ = 1`) or dropped (`τ = 0`).

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("reward length mismatch: {env} environment rewards, {imitation} imitation rewards")]
pub struct LengthMismatch {
    pub env: usize,
    pub imitation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Exponential moving average with the given rate.
    Ema { rate: f64 },
    /// Mean over the last `size` outcomes.
    Window { size: usize },
}

impl Default for EstimatorMode {
    fn default() -> Self {
        EstimatorMode::Ema { rate: 0.01 }
    }
}

/// Success-rate estimate `υ`, starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessEstimator {
    mode: EstimatorMode,
    value: f64,
    window: VecDeque<bool>,
    successes: usize,
}

impl SuccessEstimator {
    pub fn new(mode: EstimatorMode) -> Self {
        SuccessEstimator {
            mode,
            value: 0.0,
            window: VecDeque::new(),
            successes: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn record_outcome(&mut self, success: bool) {
        match self.mode {
            EstimatorMode::Ema { rate } => {
                let target = if success { 1.0 } else { 0.0 };
                self.value = ((1.0 - rate) * self.value + rate * target).clamp(0.0, 1.0);
            }
            EstimatorMode::Window { size } => {
                self.window.push_back(success);
                self.successes += usize::from(success);
                if self.window.len() > size.max(1) {
                    let old = self.window.pop_front().unwrap();
                    self.successes -= usize::from(old);
                }
                self.value = self.successes as f64 / self.window.len() as f64;
            }
        }
    }

    /// Draws `τ ~ Bernoulli(1 − υ)`.
    pub fn sample_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> GateSample {
        let u: f64 = rng.gen();
        GateSample {
            tau: u8::from(u < 1.0 - self.value),
            upsilon: self.value,
        }
    }
}

impl Default for SuccessEstimator {
    fn default() -> Self {
        SuccessEstimator::new(EstimatorMode::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSample {
    pub tau: u8,
    /// The `υ` the gate was drawn against.
    pub upsilon: f64,
}

/// `r_t = r_env_t + λ·τ·r_imt_t`; returns `r_env` unchanged when `τ = 0`.
pub fn combine(r_env: &[f64], r_imt: &[f64], lambda: f64, tau: u8) -> Result<Vec<f64>, LengthMismatch> {
    if r_env.len() != r_imt.len() {
        return Err(LengthMismatch {
            env: r_env.len(),
            imitation: r_imt.len(),
        });
    }
    if tau == 0 {
        return Ok(r_env.to_vec());
    }
    let w = lambda * f64::from(tau);
    Ok(r_env.iter().zip(r_imt).map(|(e, i)| e + w * i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn starts_at_zero_and_gates_always() {
        let est = SuccessEstimator::default();
        assert_eq!(est.value(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| est.sample_tau(&mut rng).tau == 1));
    }

    #[test]
    fn ema_arithmetic() {
        let mut est = SuccessEstimator::default();
        for _ in 0..50 {
            est.record_outcome(false);
        }
        assert_eq!(est.value(), 0.0);
        est.record_outcome(true);
        assert!((est.value() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn window_mean() {
        let mut est = SuccessEstimator::new(EstimatorMode::Window { size: 500 });
        for i in 0..700 {
            est.record_outcome(i % 2 == 0);
        }
        assert_eq!(est.value(), 0.5);
        let mut est = SuccessEstimator::new(EstimatorMode::Window { size: 4 });
        for s in [true, true, true, true, false, false] {
            est.record_outcome(s);
        }
        assert_eq!(est.value(), 0.5);
    }

    #[test]
    fn certain_success_never_gates() {
        let mut est = SuccessEstimator::new(EstimatorMode::Window { size: 3 });
        for _ in 0..3 {
            est.record_outcome(true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| est.sample_tau(&mut rng).tau == 0));
    }

    #[test]
    fn combine_cases() {
        assert_eq!(combine(&[0.0, 1.0], &[0.5, -0.2], 1.0, 1).unwrap(), vec![0.5, 0.8]);
        let env = [0.1, -0.3, 1.0];
        let imt = [7.0, 8.0, 9.0];
        assert_eq!(combine(&env, &imt, 1.0, 0).unwrap(), env.to_vec());
        assert_eq!(combine(&env, &imt, 0.0, 1).unwrap(), env.to_vec());
        assert_eq!(
            combine(&env, &imt[..2], 1.0, 1),
            Err(LengthMismatch { env: 3, imitation: 2 })
        );
    }

    proptest! {
        #[test]
        fn ema_stays_in_unit_interval_and_moves_by_at_most_rate(
            outcomes in proptest::collection::vec(any::<bool>(), 1..200),
            flip in 0usize..200,
        ) {
            let run = |xs: &[bool]| {
                let mut est = SuccessEstimator::default();
                for &x in xs {
                    est.record_outcome(x);
                    assert!((0.0..=1.0).contains(&est.value()));
                }
                est.value()
            };
            let mut other = outcomes.clone();
            let i = flip % other.len();
            other[i] = !other[i];
            prop_assert!((run(&outcomes) - run(&other)).abs() <= 0.01 + 1e-15);
        }
    }
}
