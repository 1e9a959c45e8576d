//! Degradation generators: resolution-preserving residual CNNs with a global
//! skip connection.
//!
//! Both mapping directions (bicubic-LR to real-LR and back) use this
//! architecture. The tail conv is zero-initialized, so a freshly built
//! generator is exactly the identity map through the global skip.

use crate::error::Result;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Element;

use super::params::{init_conv, BoundParams, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub n_res_blocks: usize,
    pub channels: usize,
    /// Always true; kept explicit because the identity-init contract depends
    /// on it.
    pub global_skip: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec { n_res_blocks: 8, channels: 64, global_skip: true }
    }
}

impl GeneratorSpec {
    pub fn tiny(n_res_blocks: usize, channels: usize) -> Self {
        GeneratorSpec { n_res_blocks, channels, global_skip: true }
    }
}

pub fn build_generator<T: Element>(spec: &GeneratorSpec, rng: &mut Rng) -> ParamStore<T> {
    assert!(spec.channels >= 1 && spec.global_skip);
    let c = spec.channels;
    let mut store = ParamStore::new();
    init_conv(&mut store, rng, "head", c, 3, 3, false);
    for i in 0..spec.n_res_blocks {
        init_conv(&mut store, rng, &format!("block{i}.conv0"), c, c, 3, false);
        init_conv(&mut store, rng, &format!("block{i}.conv1"), c, c, 3, false);
    }
    init_conv(&mut store, rng, "tail", 3, c, 3, true);
    store
}

pub fn generator_forward<T: Element>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    spec: &GeneratorSpec,
    x: Var,
) -> Result<Var> {
    let mut h = tape.conv2d("generator.head", x, bound.var("head.weight"), bound.var("head.bias"), 1, 1)?;
    for i in 0..spec.n_res_blocks {
        let name0 = format!("block{i}.conv0");
        let name1 = format!("block{i}.conv1");
        let r = tape.conv2d(
            &format!("generator.{name0}"),
            h,
            bound.var(&format!("{name0}.weight")),
            bound.var(&format!("{name0}.bias")),
            1,
            1,
        )?;
        let r = tape.relu(r);
        let r = tape.conv2d(
            &format!("generator.{name1}"),
            r,
            bound.var(&format!("{name1}.weight")),
            bound.var(&format!("{name1}.bias")),
            1,
            1,
        )?;
        h = tape.add(h, r);
    }
    let t = tape.conv2d("generator.tail", h, bound.var("tail.weight"), bound.var("tail.bias"), 1, 1)?;
    Ok(tape.add(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::params::bind;
    use crate::rng::stream_rng;
    use crate::tensor::Tensor;
    use rand::Rng as _;

    #[test]
    fn fresh_generator_is_identity() {
        let spec = GeneratorSpec::tiny(2, 8);
        let params = build_generator::<f32>(&spec, &mut stream_rng(0, "g"));
        let mut x = Tensor::zeros([2, 3, 6, 5]);
        let mut rng = stream_rng(1, "x");
        for v in x.data_mut() {
            *v = rng.random_range(0.0..1.0f32);
        }
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(x.clone(), false);
        let y = generator_forward(&mut tape, &bound, &spec, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn parameter_count_matches_shape_arithmetic() {
        let spec = GeneratorSpec::default();
        let params = build_generator::<f32>(&spec, &mut stream_rng(0, "g"));
        let c = 64;
        let conv = |ci: usize, co: usize| ci * co * 9 + co;
        let expected = conv(3, c) + 8 * 2 * conv(c, c) + conv(c, 3);
        assert_eq!(params.total_params(), expected);
    }

    #[test]
    fn output_preserves_resolution() {
        let spec = GeneratorSpec::tiny(1, 4);
        let mut params = build_generator::<f32>(&spec, &mut stream_rng(2, "g"));
        // Randomize the tail so the net is not the identity.
        let mut rng = stream_rng(3, "t");
        for v in params.get_mut("tail.weight").unwrap().data_mut() {
            *v = rng.random_range(-0.1..0.1f32);
        }
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(Tensor::full([1, 3, 9, 7], 0.5), false);
        let y = generator_forward(&mut tape, &bound, &spec, xv).unwrap();
        assert_eq!(tape.value(y).shape(), [1, 3, 9, 7]);
        assert!(tape.value(y).all_finite());
    }
}
