//! Declarative construction and forward evaluation of every network in the
//! pipeline: the two degradation generators, the SR network with its feature
//! tap, and the patch discriminators.

mod generator;
mod params;
mod patch_disc;
mod srnet;

pub use generator::{build_generator, generator_forward, GeneratorSpec};
pub use params::{bind, BoundParams, ParamStore};
pub use patch_disc::{build_patch_discriminator, disc_forward, DiscInput, PatchDiscSpec};
pub use srnet::{build_sr_network, sr_forward, SrNetSpec, TapPoint};

use crate::error::Result;
use crate::tape::Tape;
use crate::tensor::{Element, Tensor};

/// Any buildable network architecture.
#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSpec {
    Generator(GeneratorSpec),
    SrNet(SrNetSpec),
    PatchDisc(PatchDiscSpec),
}

/// Result of evaluating a network outside of training.
#[derive(Clone, Debug)]
pub enum ForwardOutput<T> {
    Image(Tensor<T>),
    Sr { sr: Tensor<T>, tap: Tensor<T> },
    Logits(Tensor<T>),
}

/// Single gradient-free evaluation entry point for all specs. Deterministic:
/// the same `(params, x)` always produces bit-identical output.
pub fn forward<T: Element>(spec: &NetworkSpec, params: &ParamStore<T>, x: &Tensor<T>) -> Result<ForwardOutput<T>> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, false);
    let xv = tape.leaf(x.clone(), false);
    match spec {
        NetworkSpec::Generator(g) => {
            let y = generator_forward(&mut tape, &bound, g, xv)?;
            Ok(ForwardOutput::Image(tape.value(y).clone()))
        }
        NetworkSpec::SrNet(s) => {
            let (sr, tap) = sr_forward(&mut tape, &bound, s, xv)?;
            Ok(ForwardOutput::Sr { sr: tape.value(sr).clone(), tap: tape.value(tap).clone() })
        }
        NetworkSpec::PatchDisc(d) => {
            let y = disc_forward(&mut tape, &bound, d, xv)?;
            Ok(ForwardOutput::Logits(tape.value(y).clone()))
        }
    }
}

/// Gradient-free generator application.
pub fn eval_generator<T: Element>(spec: &GeneratorSpec, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    match forward(&NetworkSpec::Generator(*spec), params, x)? {
        ForwardOutput::Image(t) => Ok(t),
        _ => unreachable!(),
    }
}

/// Gradient-free SR application returning `(sr, tap)`.
pub fn eval_sr<T: Element>(spec: &SrNetSpec, params: &ParamStore<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    match forward(&NetworkSpec::SrNet(*spec), params, x)? {
        ForwardOutput::Sr { sr, tap } => Ok((sr, tap)),
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng as _;

    #[test]
    fn forward_is_deterministic() {
        let spec = GeneratorSpec::tiny(2, 8);
        let mut params = build_generator::<f32>(&spec, &mut stream_rng(0, "g"));
        let mut rng = stream_rng(1, "t");
        for v in params.get_mut("tail.weight").unwrap().data_mut() {
            *v = rng.random_range(-0.05..0.05f32);
        }
        let mut x = Tensor::zeros([1, 3, 8, 8]);
        for v in x.data_mut() {
            *v = rng.random_range(0.0..1.0f32);
        }
        let a = eval_generator(&spec, &params, &x).unwrap();
        let b = eval_generator(&spec, &params, &x).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
    }
}
