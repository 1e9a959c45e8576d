//! Adaptive-moment optimizer and the halving learning-rate schedule.

use std::collections::BTreeMap;

use crate::networks::ParamStore;
use crate::tensor::Tensor;

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPS: f32 = 1e-8;

/// Learning rate at a step: `lr0 * 0.5^floor(step / halve_every)`.
pub fn lr_at(step: u64, lr0: f64, halve_every: u64) -> f64 {
    assert!(halve_every > 0, "halve_every must be positive");
    lr0 * 0.5f64.powi((step / halve_every) as i32)
}

/// Per-parameter first/second moment buffers for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamStore<f32>,
    pub v: ParamStore<f32>,
    /// Number of updates applied (bias-correction exponent).
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore<f32>) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    /// One Adam update. Parameters without a gradient entry receive a zero
    /// gradient: their moments and values stay bitwise unchanged when they
    /// started at zero.
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &BTreeMap<String, Tensor<f32>>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let lr = lr as f32;
        let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
        for name in names {
            let p = params.get_mut(&name).expect("param exists");
            let m = self.m.get_mut(&name).expect("moment exists");
            let v = self.v.get_mut(&name).expect("moment exists");
            match grads.get(&name) {
                Some(g) => {
                    for ((pv, mv), (vv, gv)) in
                        p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut().iter_mut().zip(g.data()))
                    {
                        *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                        *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
                None => {
                    for ((pv, mv), vv) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()) {
                        *mv *= BETA1;
                        *vv *= BETA2;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_on_boundaries() {
        assert_eq!(lr_at(0, 1e-4, 1_600_000), 1e-4);
        assert_eq!(lr_at(1_600_000, 1e-4, 1_600_000), 5e-5);
        assert_eq!(lr_at(3 * 1_600_000 - 1, 1e-4, 1_600_000), 2.5e-5);
    }

    #[test]
    fn zero_gradients_leave_params_bitwise_unchanged() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new([1, 1, 1, 3], vec![0.5f32, -0.25, 1.0]));
        let before = params.clone();
        let mut adam = AdamState::new(&params);
        for _ in 0..17 {
            adam.step(&mut params, &BTreeMap::new(), 1e-3);
        }
        assert_eq!(params, before);
        assert_eq!(adam.m, params.zeros_like());
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new([1, 1, 1, 1], vec![1.0f32]));
        let mut adam = AdamState::new(&params);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::new([1, 1, 1, 1], vec![0.4f32]));
        adam.step(&mut params, &grads, 0.01);
        // First step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
        let want = 1.0f32 - 0.01 * 0.4 / (0.4 + EPS);
        assert!((params.get("w").unwrap().data()[0] - want).abs() < 1e-7);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new([1, 1, 1, 1], vec![3.0f32]));
        let mut adam = AdamState::new(&params);
        for _ in 0..500 {
            let w = params.get("w").unwrap().data()[0];
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), Tensor::new([1, 1, 1, 1], vec![2.0 * w]));
            adam.step(&mut params, &grads, 0.05);
        }
        assert!(params.get("w").unwrap().data()[0].abs() < 0.05);
    }
}
