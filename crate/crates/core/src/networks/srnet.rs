//! Channel-attention residual SR network with a sub-pixel upsampler.
//!
//! Structure: shallow conv, residual groups of channel-attention residual
//! blocks with group skips, a long skip from the shallow features, then
//! pixel-shuffle upsampling to the target scale. `forward` also returns the
//! features at the configured tap point; a domain discriminator acts on that
//! tap during stage-2 training.

use crate::error::{Error, Result};
use crate::imaging::ScaleFactor;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Element;

use super::params::{init_conv, BoundParams, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TapPoint {
    AfterShallow,
    /// Output of residual group `k` (zero-based).
    AfterGroup(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrNetSpec {
    pub n_groups: usize,
    pub n_blocks_per_group: usize,
    pub channels: usize,
    pub ca_reduction: usize,
    pub scale: ScaleFactor,
    pub tap_point: TapPoint,
}

impl SrNetSpec {
    /// Scaled-down default configuration.
    pub fn new(scale: ScaleFactor) -> Self {
        SrNetSpec {
            n_groups: 5,
            n_blocks_per_group: 10,
            channels: 64,
            ca_reduction: 16,
            scale,
            tap_point: TapPoint::AfterGroup(0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_blocks_per_group == 0 || self.channels == 0 {
            return Err(Error::Spec("sr net dimensions must be positive".into()));
        }
        if self.ca_reduction > self.channels {
            return Err(Error::Spec(format!(
                "channel-attention reduction {} exceeds channel count {}",
                self.ca_reduction, self.channels
            )));
        }
        if let TapPoint::AfterGroup(k) = self.tap_point {
            if k >= self.n_groups {
                return Err(Error::Spec(format!("tap group {k} out of range (n_groups {})", self.n_groups)));
            }
        }
        Ok(())
    }

    /// Pixel-shuffle stages realizing the scale factor.
    fn upsample_stages(&self) -> Vec<usize> {
        match self.scale.get() {
            2 => vec![2],
            3 => vec![3],
            4 => vec![2, 2],
            _ => unreachable!("ScaleFactor is restricted to 2..=4"),
        }
    }
}

pub fn build_sr_network<T: Element>(spec: &SrNetSpec, rng: &mut Rng) -> Result<ParamStore<T>> {
    spec.validate()?;
    let c = spec.channels;
    let squeezed = (c / spec.ca_reduction).max(1);
    let mut store = ParamStore::new();
    init_conv(&mut store, rng, "shallow", c, 3, 3, false);
    for g in 0..spec.n_groups {
        for b in 0..spec.n_blocks_per_group {
            let p = format!("group{g}.block{b}");
            init_conv(&mut store, rng, &format!("{p}.conv0"), c, c, 3, false);
            init_conv(&mut store, rng, &format!("{p}.conv1"), c, c, 3, false);
            init_conv(&mut store, rng, &format!("{p}.ca.down"), squeezed, c, 1, false);
            init_conv(&mut store, rng, &format!("{p}.ca.up"), c, squeezed, 1, false);
        }
    }
    for (i, r) in spec.upsample_stages().into_iter().enumerate() {
        init_conv(&mut store, rng, &format!("up{i}"), c * r * r, c, 3, false);
    }
    init_conv(&mut store, rng, "tail", 3, c, 3, false);
    Ok(store)
}

/// Channel attention: squeeze by global pooling, excite through a two-conv
/// bottleneck, gate channels with a sigmoid.
fn channel_attention<T: Element>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let pooled = tape.global_avg_pool(x);
    let down = tape.conv2d(
        &format!("sr.{prefix}.ca.down"),
        pooled,
        bound.var(&format!("{prefix}.ca.down.weight")),
        bound.var(&format!("{prefix}.ca.down.bias")),
        1,
        0,
    )?;
    let down = tape.relu(down);
    let up = tape.conv2d(
        &format!("sr.{prefix}.ca.up"),
        down,
        bound.var(&format!("{prefix}.ca.up.weight")),
        bound.var(&format!("{prefix}.ca.up.bias")),
        1,
        0,
    )?;
    let gate = tape.sigmoid(up);
    Ok(tape.mul_channel_gate(x, gate))
}

/// Forward pass returning `(sr_output, tap_features)`.
pub fn sr_forward<T: Element>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    spec: &SrNetSpec,
    x: Var,
) -> Result<(Var, Var)> {
    spec.validate()?;
    let shallow = tape.conv2d("sr.shallow", x, bound.var("shallow.weight"), bound.var("shallow.bias"), 1, 1)?;
    let mut tap = match spec.tap_point {
        TapPoint::AfterShallow => Some(shallow),
        TapPoint::AfterGroup(_) => None,
    };
    let mut h = shallow;
    for g in 0..spec.n_groups {
        let group_in = h;
        for b in 0..spec.n_blocks_per_group {
            let p = format!("group{g}.block{b}");
            let r = tape.conv2d(
                &format!("sr.{p}.conv0"),
                h,
                bound.var(&format!("{p}.conv0.weight")),
                bound.var(&format!("{p}.conv0.bias")),
                1,
                1,
            )?;
            let r = tape.relu(r);
            let r = tape.conv2d(
                &format!("sr.{p}.conv1"),
                r,
                bound.var(&format!("{p}.conv1.weight")),
                bound.var(&format!("{p}.conv1.bias")),
                1,
                1,
            )?;
            let r = channel_attention(tape, bound, &p, r)?;
            h = tape.add(h, r);
        }
        h = tape.add(group_in, h);
        if spec.tap_point == TapPoint::AfterGroup(g) {
            tap = Some(h);
        }
    }
    // Long skip from the shallow features.
    h = tape.add(shallow, h);
    for (i, r) in spec.upsample_stages().into_iter().enumerate() {
        let up = tape.conv2d(
            &format!("sr.up{i}"),
            h,
            bound.var(&format!("up{i}.weight")),
            bound.var(&format!("up{i}.bias")),
            1,
            1,
        )?;
        h = tape.pixel_shuffle(up, r);
    }
    let sr = tape.conv2d("sr.tail", h, bound.var("tail.weight"), bound.var("tail.bias"), 1, 1)?;
    Ok((sr, tap.expect("tap point validated against n_groups")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::params::bind;
    use crate::rng::stream_rng;
    use crate::tensor::Tensor;

    fn tiny_spec(scale: u32) -> SrNetSpec {
        SrNetSpec {
            n_groups: 1,
            n_blocks_per_group: 1,
            channels: 8,
            ca_reduction: 4,
            scale: ScaleFactor::new(scale).unwrap(),
            tap_point: TapPoint::AfterGroup(0),
        }
    }

    #[test]
    fn output_scales_input_dims_and_tap_matches_input_res() {
        for s in [2u32, 3, 4] {
            let spec = tiny_spec(s);
            let params = build_sr_network::<f32>(&spec, &mut stream_rng(0, "sr")).unwrap();
            let mut tape = Tape::new();
            let bound = bind(&mut tape, &params, false);
            let xv = tape.leaf(Tensor::full([1, 3, 16, 16], 0.25), false);
            let (sr, tap) = sr_forward(&mut tape, &bound, &spec, xv).unwrap();
            assert_eq!(tape.value(sr).shape(), [1, 3, 16 * s as usize, 16 * s as usize]);
            assert_eq!(tape.value(tap).shape(), [1, 8, 16, 16]);
        }
    }

    #[test]
    fn zero_feature_gate_is_half() {
        // With zero-init biases the excitation of an all-zero feature map is
        // sigmoid(0) = 0.5 exactly.
        let spec = tiny_spec(2);
        let params = build_sr_network::<f64>(&spec, &mut stream_rng(1, "sr")).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let zeros = tape.leaf(Tensor::zeros([1, 8, 4, 4]), false);
        let pooled = tape.global_avg_pool(zeros);
        let down = tape
            .conv2d("t", pooled, bound.var("group0.block0.ca.down.weight"), bound.var("group0.block0.ca.down.bias"), 1, 0)
            .unwrap();
        let down = tape.relu(down);
        let up = tape
            .conv2d("t", down, bound.var("group0.block0.ca.up.weight"), bound.var("group0.block0.ca.up.bias"), 1, 0)
            .unwrap();
        let gate = tape.sigmoid(up);
        for &v in tape.value(gate).data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn reduction_larger_than_channels_is_spec_error() {
        let mut spec = tiny_spec(2);
        spec.ca_reduction = 16;
        assert!(build_sr_network::<f32>(&spec, &mut stream_rng(0, "sr")).is_err());
    }

    #[test]
    fn tap_after_shallow_is_supported() {
        let mut spec = tiny_spec(2);
        spec.tap_point = TapPoint::AfterShallow;
        let params = build_sr_network::<f32>(&spec, &mut stream_rng(2, "sr")).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(Tensor::full([1, 3, 8, 8], 0.1), false);
        let (_, tap) = sr_forward(&mut tape, &bound, &spec, xv).unwrap();
        assert_eq!(tape.value(tap).shape(), [1, 8, 8, 8]);
    }
}
