//! Named, shaped parameter storage and its projection onto a tape.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::{Element, Tensor};

/// Map from parameter name to value. Iteration order is the name order,
/// which keeps optimizer updates and checkpoints deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        let prev = self.map.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_params(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore { map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Zero-valued store with the same names and shapes.
    pub fn zeros_like(&self) -> ParamStore<T> {
        ParamStore { map: self.map.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect() }
    }
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles for every parameter of a store.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Insert every parameter of `store` as a tape leaf.
pub fn bind<T: Element>(tape: &mut Tape<T>, store: &ParamStore<T>, needs_grad: bool) -> BoundParams {
    let vars = store.iter().map(|(name, value)| (name.clone(), tape.leaf(value.clone(), needs_grad))).collect();
    BoundParams { vars }
}

/// Standard initialization for a conv layer: zero-mean normal weights with
/// variance 1/fan_in, zero bias. `zero_init` zeroes the weights as well
/// (identity-init generator tails).
pub(crate) fn init_conv<T: Element>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    zero_init: bool,
) {
    let mut weight = Tensor::zeros([c_out, c_in, k, k]);
    if !zero_init {
        let std = 1.0 / ((c_in * k * k) as f64).sqrt();
        for v in weight.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = T::from_f64(z * std);
        }
    }
    store.insert(format!("{name}.weight"), weight);
    store.insert(format!("{name}.bias"), Tensor::zeros([1, c_out, 1, 1]));
}
