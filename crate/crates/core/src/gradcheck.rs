//! Central finite-difference gradient verification.
//!
//! These helpers perturb inputs one element at a time and compare against
//! analytic gradients, touching only forward evaluation, so they stay
//! independent of the backward implementations they check. Meant for tests;
//! run them at `f64`.

use crate::networks::ParamStore;
use crate::tensor::Tensor;

/// Result of a finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (analytic.abs() + fd.abs() + 1e-8)
}

/// Compare `analytic` with central differences of `loss` over every element
/// of `x`.
pub fn check_tensor_grad(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
    step: f64,
) -> FdReport {
    assert_eq!(x.shape(), analytic.shape());
    let mut max_rel_err = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
        max_rel_err = max_rel_err.max(rel_err(analytic.data()[i], fd));
    }
    FdReport { max_rel_err, checked: x.numel() }
}

/// Compare analytic parameter gradients with central differences of `loss`
/// over every element of every parameter in `store`.
///
/// Parameters without an analytic gradient entry are treated as having an
/// all-zero gradient.
pub fn check_param_grads(
    store: &ParamStore<f64>,
    analytic: &std::collections::BTreeMap<String, Tensor<f64>>,
    mut loss: impl FnMut(&ParamStore<f64>) -> f64,
    step: f64,
) -> FdReport {
    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    for (name, value) in store.iter() {
        let zero = Tensor::zeros(value.shape());
        let grad = analytic.get(name).unwrap_or(&zero);
        for i in 0..value.numel() {
            let mut perturbed = store.clone();
            perturbed.get_mut(name).unwrap().data_mut()[i] += step;
            let up = loss(&perturbed);
            perturbed.get_mut(name).unwrap().data_mut()[i] -= 2.0 * step;
            let down = loss(&perturbed);
            let fd = (up - down) / (2.0 * step);
            max_rel_err = max_rel_err.max(rel_err(grad.data()[i], fd));
            checked += 1;
        }
    }
    FdReport { max_rel_err, checked }
}
