use super::params::ParamSet;
use super::NetError;

/// Adam optimizer moments and hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update of `params` against `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<(), NetError> {
        if !params.same_layout(grads) || self.m.len() != params.len() {
            return Err(NetError::Shape("adam: gradient layout mismatch".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        let eps_hat = self.eps * bc2.sqrt();
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads.get(i).data();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if m.len() != g.len() {
                return Err(NetError::Shape("adam: moment shape mismatch".into()));
            }
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= step * *m / (v.sqrt() + eps_hat);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numnet::params::{Init, Role};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new(Role::Policy);
        p.add("w", &[2, 2], Init::HeUniform { fan_in: 2, scale: 1.0 }, &mut rng);
        p
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-4);
        for _ in 0..10 {
            adam.step(&mut p, &before.zeros_like()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.t, 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.get_mut(0).data_mut().copy_from_slice(&[0.3, -2.0, 1e-3, 50.0]);
        let mut adam = AdamState::new(&p, 1e-4);
        adam.step(&mut p, &g).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
        for i in 0..4 {
            let g = g.get(0).data()[i];
            let expected = -1e-4 * g / (g.abs() + 1e-8);
            let moved = p.get(0).data()[i] - before.get(0).data()[i];
            assert!((moved - expected).abs() < 1e-15, "{moved} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = params();
        let mut g = p.zeros_like();
        g.get_mut(0).data_mut().copy_from_slice(&[1.0, -1.0, 0.5, -0.25]);
        let mut adam = AdamState::new(&p, 1e-3);
        let mut prev = p.clone();
        for _ in 0..200 {
            adam.step(&mut p, &g).unwrap();
            for i in 0..4 {
                let d = p.get(0).data()[i] - prev.get(0).data()[i];
                assert!(d * g.get(0).data()[i] < 0.0);
            }
            prev = p.clone();
        }
    }

    #[test]
    fn layout_mismatch_errors() {
        let mut p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut other = ParamSet::new(Role::Policy);
        other.add("w", &[4], Init::Zeros, &mut rng);
        let mut adam = AdamState::new(&p, 1e-4);
        assert!(adam.step(&mut p, &other).is_err());
    }
}
