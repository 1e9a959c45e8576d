//! Training objectives as differentiable scalar tape nodes.
//!
//! All adversarial losses consume raw logit maps and apply the sigmoid in
//! fused softplus form: `-log sigmoid(l) = softplus(-l)` and
//! `-log(1 - sigmoid(l)) = softplus(l)`. At the uninformative point (all
//! logits zero) every two-term adversarial loss evaluates to `2 ln 2`.
//!
//! Generator-side plain GAN losses use the non-saturating single term
//! `-log sigmoid(fake)`; the relativistic and feature-alignment losses keep
//! both of their terms on each side.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Element;

/// Which side of an adversarial objective is being optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanSide {
    Generator,
    Discriminator,
}

/// Scalar weights of the two training objectives. A weight of zero disables
/// its term entirely, which is also how the ablation flags are realized.
/// Field defaults are the published training settings (`lambda2 = 0.001` is
/// the documented alternative regime for heavily misaligned corpora).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w1: 2.0, w2: 2.0, w3: 0.5, lambda1: 1.0, lambda2: 0.1, lambda3: 1.0, lambda4: 2.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3, self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be non-negative and finite".into()));
        }
        Ok(())
    }
}

fn ensure_finite<T: Element>(tape: &Tape<T>, v: Var, what: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite values")))
    }
}

fn ensure_same_shape<T: Element>(tape: &Tape<T>, a: Var, b: Var, layer: &str) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::shape(layer, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// `mean(softplus(-l))`, i.e. `-E[log sigmoid(l)]`.
fn mean_softplus_neg<T: Element>(tape: &mut Tape<T>, l: Var) -> Var {
    let neg = tape.scale(l, -T::one());
    let sp = tape.softplus(neg);
    tape.mean_all(sp)
}

/// `mean(softplus(l))`, i.e. `-E[log(1 - sigmoid(l))]`.
fn mean_softplus<T: Element>(tape: &mut Tape<T>, l: Var) -> Var {
    let sp = tape.softplus(l);
    tape.mean_all(sp)
}

/// Cross-entropy GAN objective over raw logit maps.
///
/// Discriminator side: `-E[log s(real)] - E[log(1 - s(fake))]`.
/// Generator side (non-saturating): `-E[log s(fake)]`.
pub fn gan_loss<T: Element>(tape: &mut Tape<T>, d_real: Var, d_fake: Var, side: GanSide) -> Result<Var> {
    ensure_finite(tape, d_real, "real logits")?;
    ensure_finite(tape, d_fake, "fake logits")?;
    Ok(match side {
        GanSide::Discriminator => {
            let real_term = mean_softplus_neg(tape, d_real);
            let fake_term = mean_softplus(tape, d_fake);
            tape.add(real_term, fake_term)
        }
        GanSide::Generator => mean_softplus_neg(tape, d_fake),
    })
}

/// Two-direction cycle-consistency loss: element mean of
/// `|recon_syn - x_syn|` plus element mean of `|recon_real - x_real|`.
pub fn cycle_loss<T: Element>(
    tape: &mut Tape<T>,
    x_syn: Var,
    recon_syn: Var,
    x_real: Var,
    recon_real: Var,
) -> Result<Var> {
    ensure_same_shape(tape, x_syn, recon_syn, "cycle.syn")?;
    ensure_same_shape(tape, x_real, recon_real, "cycle.real")?;
    let d_syn = tape.sub(recon_syn, x_syn);
    let term_syn = tape.mean_abs(d_syn);
    let d_real = tape.sub(recon_real, x_real);
    let term_real = tape.mean_abs(d_real);
    Ok(tape.add(term_syn, term_real))
}

/// Pixel-wise content loss: mean absolute difference.
pub fn l1_content_loss<T: Element>(tape: &mut Tape<T>, sr: Var, hr: Var) -> Result<Var> {
    ensure_same_shape(tape, sr, hr, "l1")?;
    let d = tape.sub(sr, hr);
    Ok(tape.mean_abs(d))
}

/// Relativistic average GAN loss over backbone scores.
///
/// With `l_r = c_real - mean(c_fake)` and `l_f = c_fake - mean(c_real)`, the
/// generator side is `-E[log s(l_f)] - E[log(1 - s(l_r))]` and the
/// discriminator side is the label-swapped counterpart. Means are taken over
/// every logit of the opposing map.
pub fn ragan_loss<T: Element>(tape: &mut Tape<T>, c_real: Var, c_fake: Var, side: GanSide) -> Result<Var> {
    ensure_finite(tape, c_real, "real scores")?;
    ensure_finite(tape, c_fake, "fake scores")?;
    let mean_fake = tape.mean_all(c_fake);
    let mean_real = tape.mean_all(c_real);
    let l_r = tape.sub_scalar(c_real, mean_fake);
    let l_f = tape.sub_scalar(c_fake, mean_real);
    Ok(match side {
        GanSide::Generator => {
            let a = mean_softplus_neg(tape, l_f);
            let b = mean_softplus(tape, l_r);
            tape.add(a, b)
        }
        GanSide::Discriminator => {
            let a = mean_softplus_neg(tape, l_r);
            let b = mean_softplus(tape, l_f);
            tape.add(a, b)
        }
    })
}

/// Adversarial objective matching the distribution of SR outputs on real LR
/// inputs against real HR images. Identical contract to [`gan_loss`] with
/// `real = I_hr` and `fake = R(I_lr_real)`.
pub fn gan_real_hr_loss<T: Element>(
    tape: &mut Tape<T>,
    d_hr_on_real_hr: Var,
    d_hr_on_sr_of_real_lr: Var,
    side: GanSide,
) -> Result<Var> {
    gan_loss(tape, d_hr_on_real_hr, d_hr_on_sr_of_real_lr, side)
}

/// Which side of the feature-alignment objective is being optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaSide {
    Discriminator,
    /// The SR feature extractor up to the tap point.
    Extractor,
}

/// Feature-alignment loss on tap features of generated vs. real LR inputs.
///
/// Generated-input features play the positive class for the discriminator:
/// `-E[log s(d_gen)] - E[log(1 - s(d_real))]`. The extractor side swaps the
/// labels, driving the two feature distributions together.
pub fn adaptive_feature_loss<T: Element>(
    tape: &mut Tape<T>,
    d_ada_on_gen: Var,
    d_ada_on_real: Var,
    side: AdaSide,
) -> Result<Var> {
    ensure_same_shape(tape, d_ada_on_gen, d_ada_on_real, "ada.logits")?;
    ensure_finite(tape, d_ada_on_gen, "gen-feature logits")?;
    ensure_finite(tape, d_ada_on_real, "real-feature logits")?;
    let (pos, neg) = match side {
        AdaSide::Discriminator => (d_ada_on_gen, d_ada_on_real),
        AdaSide::Extractor => (d_ada_on_real, d_ada_on_gen),
    };
    let a = mean_softplus_neg(tape, pos);
    let b = mean_softplus(tape, neg);
    Ok(tape.add(a, b))
}

/// Per-step record of raw loss terms and the weighted total.
///
/// The total is accumulated in declaration order of the objective, in f64,
/// and is exactly reproducible from the stored terms and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub step: u64,
    /// `(term name, raw value)` in objective order.
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

impl LossReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_finite(&self) -> bool {
        self.total.is_finite() && self.terms.iter().all(|(_, v)| v.is_finite())
    }

    /// One JSON-lines record: `{"step":n,"<term>":v,...,"total":t}`.
    pub fn to_json_line(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("step".into(), serde_json::json!(self.step));
        for (name, value) in &self.terms {
            map.insert(name.clone(), serde_json::json!(value));
        }
        map.insert("total".into(), serde_json::json!(self.total));
        serde_json::Value::Object(map).to_string()
    }
}

/// Weighted-sum assembly shared by both objectives: zero-weight terms are
/// skipped entirely; present terms are scaled and summed in declaration
/// order. Returns the tape total and the matching report.
fn weighted_objective<T: Element>(
    tape: &mut Tape<T>,
    step: u64,
    parts: &[(&str, f64, Option<Var>)],
) -> Result<(Var, LossReport)> {
    let mut total: Option<Var> = None;
    let mut terms = Vec::new();
    let mut total_f64 = 0.0f64;
    for &(name, weight, var) in parts {
        if weight == 0.0 {
            continue;
        }
        let var = var.ok_or_else(|| Error::Composition(format!("missing loss component `{name}`")))?;
        let raw = tape.value(var).item().to_f64();
        terms.push((name.to_string(), raw));
        total_f64 += weight * raw;
        let scaled = tape.scale(var, T::from_f64(weight));
        total = Some(match total {
            Some(acc) => tape.add(acc, scaled),
            None => scaled,
        });
    }
    let total = total.unwrap_or_else(|| tape.leaf(crate::tensor::Tensor::scalar(T::zero()), false));
    Ok((total, LossReport { step, terms, total: total_f64 }))
}

/// Stage-1 loss components (generator-side adversarial terms plus cycle).
#[derive(Clone, Copy, Debug, Default)]
pub struct Stage1Components {
    pub gan_g: Option<Var>,
    pub gan_f: Option<Var>,
    pub cycle: Option<Var>,
}

/// Weighted stage-1 objective: `w1 * gan_g + w2 * gan_f + w3 * cycle`.
pub fn stage1_objective<T: Element>(
    tape: &mut Tape<T>,
    step: u64,
    components: Stage1Components,
    weights: &LossWeights,
) -> Result<(Var, LossReport)> {
    weighted_objective(
        tape,
        step,
        &[
            ("gan_g", weights.w1, components.gan_g),
            ("gan_f", weights.w2, components.gan_f),
            ("cycle", weights.w3, components.cycle),
        ],
    )
}

/// Stage-2 loss components for the SR network update.
#[derive(Clone, Copy, Debug, Default)]
pub struct Stage2Components {
    pub l1: Option<Var>,
    pub ragan: Option<Var>,
    pub gan_real: Option<Var>,
    pub ada: Option<Var>,
}

/// Weighted stage-2 objective:
/// `l1 * lambda1 + ragan * lambda2 + gan_real * lambda3 + ada * lambda4`.
pub fn stage2_objective<T: Element>(
    tape: &mut Tape<T>,
    step: u64,
    components: Stage2Components,
    weights: &LossWeights,
) -> Result<(Var, LossReport)> {
    weighted_objective(
        tape,
        step,
        &[
            ("l1", weights.lambda1, components.l1),
            ("ragan", weights.lambda2, components.ragan),
            ("gan_real", weights.lambda3, components.gan_real),
            ("ada", weights.lambda4, components.ada),
        ],
    )
}

/// Recompute a weighted total from a report, mirroring the accumulation
/// order of the objective that produced it.
pub fn recompute_total(report: &LossReport, weights: &BTreeMap<String, f64>) -> f64 {
    let mut total = 0.0;
    for (name, value) in &report.terms {
        total += weights.get(name).copied().unwrap_or(0.0) * value;
    }
    total
}
