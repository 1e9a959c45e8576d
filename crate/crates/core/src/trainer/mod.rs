//! Alternating-optimization training loops for both stages.

mod stage1;
mod stage2;

pub use stage1::{synthesize_lr_corpus, Stage1Ablation, Stage1Config, Stage1Trainer};
pub use stage2::{super_resolve, super_resolve_tiled, Stage2Ablation, Stage2Config, Stage2Trainer};

use std::collections::BTreeMap;

use crate::networks::{BoundParams, ParamStore};
use crate::optim::AdamState;
use crate::rng::Rng;
use crate::tape::Grads;
use crate::tensor::Tensor;

/// One network's parameters and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState {
    pub params: ParamStore<f32>,
    pub adam: AdamState,
}

impl NetState {
    pub fn new(params: ParamStore<f32>) -> Self {
        let adam = AdamState::new(&params);
        NetState { params, adam }
    }

    pub fn apply(&mut self, grads: &BTreeMap<String, Tensor<f32>>, lr: f64) {
        self.adam.step(&mut self.params, grads, lr);
    }
}

/// Collect per-parameter gradients for one bound network.
pub(crate) fn param_grads(bound: &BoundParams, grads: &mut Grads<f32>) -> BTreeMap<String, Tensor<f32>> {
    let mut out = BTreeMap::new();
    for (name, var) in bound.iter() {
        if let Some(g) = grads.take(*var) {
            out.insert(name.clone(), g);
        }
    }
    out
}

/// History pool of past generator outputs for discriminator updates.
/// Disabled (capacity 0) by default; when enabled, each update uses either
/// the fresh batch or a stored one with probability one half.
pub(crate) struct FakePool {
    slots: Vec<Tensor<f32>>,
    cap: usize,
}

impl FakePool {
    pub fn new(cap: usize) -> Self {
        FakePool { slots: Vec::new(), cap }
    }

    pub fn sample(&mut self, fresh: Tensor<f32>, rng: &mut Rng) -> Tensor<f32> {
        use rand::Rng as _;
        if self.cap == 0 {
            return fresh;
        }
        if self.slots.len() < self.cap {
            self.slots.push(fresh.clone());
            return fresh;
        }
        if rng.random::<bool>() {
            let idx = rng.random_range(0..self.slots.len());
            let stored = self.slots[idx].clone();
            self.slots[idx] = fresh;
            stored
        } else {
            fresh
        }
    }
}
