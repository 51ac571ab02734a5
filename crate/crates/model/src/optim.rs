//! AdamW with decoupled weight decay, global-norm clipping and the
//! exponential learning-rate schedule.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::{ModelError, Result};
use crate::params::ParamStore;

/// `base · decay^t`.
pub fn lr_schedule(t: u64, base_lr: f64, decay_rate: f64) -> f64 {
    base_lr * decay_rate.powi(t.min(i32::MAX as u64) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

#[derive(Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    /// Updates applied so far.
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// Gradients of every parameter, zero where the graph did not reach.
pub fn collect_grads(params: &ParamStore, grads: &GradStore) -> Result<BTreeMap<String, Tensor>> {
    params
        .iter()
        .map(|(name, var)| {
            let g = match grads.get(var.as_tensor()) {
                Some(g) => g.clone(),
                None => var.as_tensor().zeros_like()?,
            };
            Ok((name.clone(), g))
        })
        .collect()
}

pub fn global_norm(grads: &BTreeMap<String, Tensor>) -> Result<f64> {
    let mut sq = 0.0;
    for g in grads.values() {
        sq += g
            .to_dtype(candle_core::DType::F64)?
            .sqr()?
            .sum_all()?
            .to_scalar::<f64>()?;
    }
    Ok(sq.sqrt())
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> Result<f64> {
    let norm = global_norm(grads)?;
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for g in grads.values_mut() {
            *g = (&*g * scale)?;
        }
    }
    Ok(norm)
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        let c = self.config;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (name, var) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| ModelError::Config(format!("no gradient for {name}")))?;
            let m = match self.m.get(name) {
                Some(m) => ((m * c.beta1)? + (g * (1.0 - c.beta1))?)?,
                None => (g * (1.0 - c.beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?,
                None => (g.sqr()? * (1.0 - c.beta2))?,
            };
            let theta = var.as_tensor();
            let decayed = (theta * (1.0 - lr * c.weight_decay))?;
            let update = (&m / bc1)?.div(&((&v / bc2)?.sqrt()? + c.eps)?)?;
            var.set(&(decayed - (update * lr)?)?)?;
            self.m.insert(name.clone(), m);
            self.v.insert(name.clone(), v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use candle_core::{DType, Device};

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 1e-4, 0.9), 1e-4);
        assert!((lr_schedule(1, 1e-4, 0.9) - 9e-5).abs() < 1e-18);
        assert!((lr_schedule(10, 1e-4, 0.9) - 3.4868e-5).abs() < 1e-9);
        for t in 0..30 {
            let r = lr_schedule(t + 1, 1e-4, 0.9) / lr_schedule(t, 1e-4, 0.9);
            assert!((r - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), Tensor::new(&[3.0f64, 4.0], &Device::Cpu).unwrap());
        g.insert("b".to_string(), Tensor::new(&[12.0f64], &Device::Cpu).unwrap());
        let before = clip_grad_norm(&mut g, 1.0).unwrap();
        assert!((before - 13.0).abs() < 1e-12);
        assert!(global_norm(&g).unwrap() <= 1.0 + 1e-6);
        let before = clip_grad_norm(&mut g, 5.0).unwrap();
        assert!(before <= 1.0 + 1e-6);
        assert!((global_norm(&g).unwrap() - before).abs() < 1e-15);
    }

    /// One AdamW update against the textbook formulas.
    #[test]
    fn first_step_matches_formula() {
        let mut p = ParamStore::new(DType::F64, Device::Cpu);
        p.init("w", &[2], Init::Const(1.0), 0).unwrap();
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::new(&[0.5f64, -2.0], &Device::Cpu).unwrap());
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(&p, &g, 0.1).unwrap();
        let w = p.get("w").unwrap().to_vec1::<f64>().unwrap();
        for (wi, gi) in w.iter().zip([0.5f64, -2.0]) {
            let m_hat = gi;
            let v_hat = gi * gi;
            let want = 1.0 * (1.0 - 0.1 * 1e-2) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((wi - want).abs() < 1e-12, "{wi} vs {want}");
        }
    }
}
