//! Adam with decoupled weight decay and the stepwise-exponential schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::ParamStore;
use crate::scalar::{c, DType, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_start_epoch: usize,
    /// Per-epoch multiplicative decay once decay has started.
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dtype: DType,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 2.5e-4,
            decay_start_epoch: 5,
            decay_factor: 0.85,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            dtype: DType::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return err("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return err("decay_factor must lie in (0, 1]");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return err("need 0 ≤ beta1, beta2 < 1 and eps > 0");
        }
        if self.weight_decay < 0.0 {
            return err("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.decay_start_epoch {
            self.lr0
        } else {
            self.lr0 * self.decay_factor.powi((epoch - self.decay_start_epoch + 1) as i32)
        }
    }
}

/// Adam moments for every parameter of one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, cfg: &TrainConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Adam {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Weight decay touches only matrices named `*.weight`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} arrays, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (((name, p), g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::State(format!(
                    "`{name}` has {} elements, gradient {}, moments {}",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2): (T, T) = (c(self.beta1), c(self.beta2));
        let bc1: T = c(1.0 - self.beta1.powi(t));
        let bc2: T = c(1.0 - self.beta2.powi(t));
        let lr_t: T = c(lr);
        let eps: T = c(self.eps);
        let decay: T = c(lr * self.weight_decay);
        for ((((name, p), g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let decays = self.weight_decay > 0.0 && name.ends_with(".weight");
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                if decays {
                    *w -= decay * *w;
                }
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moments as named tensors shaped like their parameters.
    pub fn export(&self, params: &ParamStore<T>) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(2 * params.len());
        for (prefix, moments) in [("optim.m.", &self.m), ("optim.v.", &self.v)] {
            for ((name, p), data) in params.iter().zip(moments) {
                let t = Tensor::from_vec(p.shape(), data.clone()).expect("moment shaped like parameter");
                out.push((format!("{prefix}{name}"), t));
            }
        }
        out
    }

    /// Rebuilds the optimizer from exported moments.
    pub fn import(params: &ParamStore<T>, cfg: &TrainConfig, step: u64, records: &[(String, Tensor<T>)]) -> Result<Self> {
        let mut adam = Adam::new(params, cfg);
        adam.step = step;
        for (i, (name, p)) in params.iter().enumerate() {
            for (prefix, slot) in [("optim.m.", &mut adam.m[i]), ("optim.v.", &mut adam.v[i])] {
                let key = format!("{prefix}{name}");
                let (_, t) = records
                    .iter()
                    .find(|(n, _)| *n == key)
                    .ok_or_else(|| Error::State(format!("missing optimizer record `{key}`")))?;
                if t.shape() != p.shape() {
                    return Err(Error::State(format!("`{key}` has shape {:?}, parameter {:?}", t.shape(), p.shape())));
                }
                *slot = t.data().to_vec();
            }
        }
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("x.weight", Tensor::from_f64(&[1], &[x]).unwrap());
        p
    }

    #[test]
    fn schedule_values() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 2.5e-4);
        assert_eq!(cfg.lr_at(4), 2.5e-4);
        assert!((cfg.lr_at(5) - 2.5e-4 * 0.85).abs() < 1e-18);
        assert!((cfg.lr_at(6) - 1.80625e-4).abs() < 1e-15);
    }

    #[test]
    fn schedule_shape() {
        let cfg = TrainConfig::default();
        for e in 0..cfg.decay_start_epoch {
            assert_eq!(cfg.lr_at(e), cfg.lr0);
        }
        for e in cfg.decay_start_epoch..40 {
            assert!(cfg.lr_at(e + 1) < cfg.lr_at(e));
            assert!(cfg.lr_at(e) < cfg.lr0);
        }
        let flat = TrainConfig { decay_factor: 1.0, ..cfg };
        assert_eq!(flat.lr_at(20), flat.lr0);
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut p = single(0.7);
        let mut adam = Adam::new(&p, &TrainConfig::default());
        for _ in 0..5 {
            adam.step(&mut p, &[vec![0.0]], 1e-2).unwrap();
        }
        assert_eq!(p.get("x.weight").unwrap().data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut p = single(1.0);
            let mut adam = Adam::new(&p, &TrainConfig::default());
            adam.step(&mut p, &[vec![g]], 1e-3).unwrap();
            let moved = p.get("x.weight").unwrap().data()[0] - 1.0;
            assert!((moved + 1e-3 * g.signum()).abs() < 1e-3 * 1e-5, "{moved}");
        }
    }

    #[test]
    fn descends_on_a_parabola() {
        let mut p = single(1.0);
        let mut adam = Adam::new(&p, &TrainConfig::default());
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let x = p.get("x.weight").unwrap().data()[0];
            adam.step(&mut p, &[vec![2.0 * x]], 0.05).unwrap();
            let now = p.get("x.weight").unwrap().data()[0].abs();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn decoupled_decay_shrinks_weights_only() {
        let mut p = single(2.0);
        p.insert("x.bias", Tensor::from_f64(&[1], &[2.0]).unwrap());
        let cfg = TrainConfig { weight_decay: 0.5, ..Default::default() };
        let mut adam = Adam::new(&p, &cfg);
        adam.step(&mut p, &[vec![0.0], vec![0.0]], 0.1).unwrap();
        assert!((p.get("x.weight").unwrap().data()[0] - 1.9).abs() < 1e-15);
        assert_eq!(p.get("x.bias").unwrap().data()[0], 2.0);
    }

    #[test]
    fn shape_mismatch_is_state_error() {
        let mut p = single(1.0);
        let mut adam = Adam::new(&p, &TrainConfig::default());
        assert!(matches!(adam.step(&mut p, &[vec![0.0, 1.0]], 0.1), Err(Error::State(_))));
        assert!(matches!(adam.step(&mut p, &[], 0.1), Err(Error::State(_))));
    }

    #[test]
    fn moments_round_trip() {
        let mut p = single(1.0);
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&p, &cfg);
        adam.step(&mut p, &[vec![0.3]], 0.1).unwrap();
        let back = Adam::import(&p, &cfg, adam.steps(), &adam.export(&p)).unwrap();
        assert_eq!(back, adam);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { decay_factor: 1.5, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
