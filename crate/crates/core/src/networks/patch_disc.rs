//! Markovian patch discriminator: a fully convolutional stack producing one
//! raw logit per receptive-field patch. Losses apply the sigmoid themselves.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Element;

use super::params::{init_conv, BoundParams, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscInput {
    /// RGB images.
    Image,
    /// Intermediate feature maps with the given channel count.
    Feature { channels: usize },
}

impl DiscInput {
    pub fn channels(self) -> usize {
        match self {
            DiscInput::Image => 3,
            DiscInput::Feature { channels } => channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchDiscSpec {
    pub base_channels: usize,
    /// Number of stride-2 feature layers; one stride-1 feature layer and the
    /// output conv follow.
    pub n_scale_layers: usize,
    pub input: DiscInput,
    /// Instancewise normalization on all feature layers except the first.
    /// Disabled only for receptive-field analysis, where the normalization
    /// statistics would couple every output to every input.
    pub use_norm: bool,
}

impl Default for PatchDiscSpec {
    fn default() -> Self {
        PatchDiscSpec { base_channels: 64, n_scale_layers: 3, input: DiscInput::Image, use_norm: true }
    }
}

impl PatchDiscSpec {
    pub fn for_features(channels: usize) -> Self {
        PatchDiscSpec { input: DiscInput::Feature { channels }, ..Default::default() }
    }

    /// Channel widths of the feature layers (stride-2 layers then the
    /// stride-1 layer). Width doubles per scale, capped at 8x base.
    fn widths(&self) -> Vec<usize> {
        (0..=self.n_scale_layers).map(|i| self.base_channels << i.min(3)).collect()
    }

    /// Output size of the logit map for an `h x w` input, following conv
    /// arithmetic layer by layer. Errors if any layer collapses to zero.
    pub fn logit_map_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let step = |n: usize, stride: usize, layer: usize| -> Result<usize> {
            let padded = n + 2;
            if padded < 4 {
                return Err(Error::shape(
                    format!("disc.layer{layer}"),
                    format!("input extent {n} too small for k4 conv"),
                ));
            }
            let out = (padded - 4) / stride + 1;
            if out == 0 {
                return Err(Error::shape(format!("disc.layer{layer}"), "layer output collapsed to zero"));
            }
            Ok(out)
        };
        let (mut ch, mut cw) = (h, w);
        for i in 0..self.n_scale_layers {
            ch = step(ch, 2, i)?;
            cw = step(cw, 2, i)?;
        }
        // The stride-1 feature layer, then the output conv.
        for j in 0..2 {
            ch = step(ch, 1, self.n_scale_layers + j)?;
            cw = step(cw, 1, self.n_scale_layers + j)?;
        }
        Ok((ch, cw))
    }
}

pub fn build_patch_discriminator<T: Element>(spec: &PatchDiscSpec, rng: &mut Rng) -> ParamStore<T> {
    let mut store = ParamStore::new();
    let mut c_in = spec.input.channels();
    for (i, width) in spec.widths().into_iter().enumerate() {
        init_conv(&mut store, rng, &format!("layer{i}"), width, c_in, 4, false);
        c_in = width;
    }
    init_conv(&mut store, rng, "out", 1, c_in, 4, false);
    store
}

/// Forward pass producing the raw logit map `(b, 1, h', w')`.
pub fn disc_forward<T: Element>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    spec: &PatchDiscSpec,
    x: Var,
) -> Result<Var> {
    let slope = T::from_f64(0.2);
    let mut h = x;
    let n_feature_layers = spec.n_scale_layers + 1;
    for i in 0..n_feature_layers {
        let stride = if i < spec.n_scale_layers { 2 } else { 1 };
        let name = format!("layer{i}");
        h = tape.conv2d(
            &format!("disc.{name}"),
            h,
            bound.var(&format!("{name}.weight")),
            bound.var(&format!("{name}.bias")),
            stride,
            1,
        )?;
        if spec.use_norm && i > 0 {
            h = tape.instance_norm(h, T::from_f64(1e-5));
        }
        h = tape.leaky_relu(h, slope);
    }
    tape.conv2d("disc.out", h, bound.var("out.weight"), bound.var("out.bias"), 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::params::bind;
    use crate::rng::stream_rng;
    use crate::tensor::Tensor;
    use rand::Rng as _;

    fn random_image(b: usize, h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = stream_rng(seed, "disc-test");
        let mut t = Tensor::zeros([b, 3, h, w]);
        for v in t.data_mut() {
            *v = rng.random_range(0.0..1.0f32);
        }
        t
    }

    #[test]
    fn default_disc_maps_64_to_6() {
        let spec = PatchDiscSpec::default();
        assert_eq!(spec.logit_map_size(64, 64).unwrap(), (6, 6));
        let params = build_patch_discriminator::<f32>(&spec, &mut stream_rng(0, "d"));
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(random_image(2, 64, 64, 1), false);
        let y = disc_forward(&mut tape, &bound, &spec, xv).unwrap();
        assert_eq!(tape.value(y).shape(), [2, 1, 6, 6]);
    }

    #[test]
    fn layer_widths_follow_patchgan_doubling() {
        let spec = PatchDiscSpec::default();
        assert_eq!(spec.widths(), vec![64, 128, 256, 512]);
        let params = build_patch_discriminator::<f32>(&spec, &mut stream_rng(0, "d"));
        assert_eq!(params.get("layer3.weight").unwrap().shape(), [512, 256, 4, 4]);
        assert_eq!(params.get("out.weight").unwrap().shape(), [1, 512, 4, 4]);
    }

    #[test]
    fn too_small_input_is_shape_error() {
        let spec = PatchDiscSpec::default();
        assert!(spec.logit_map_size(16, 16).is_err());
        let params = build_patch_discriminator::<f32>(&spec, &mut stream_rng(0, "d"));
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(random_image(1, 16, 16, 2), false);
        assert!(disc_forward(&mut tape, &bound, &spec, xv).is_err());
    }

    #[test]
    fn batch_equals_concatenated_singles() {
        // Normalization is per-instance, so evaluating a batch must match
        // evaluating each item alone.
        let spec = PatchDiscSpec { base_channels: 8, ..Default::default() };
        let params = build_patch_discriminator::<f32>(&spec, &mut stream_rng(3, "d"));
        let batch = random_image(3, 64, 64, 4);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(batch.clone(), false);
        let logits = disc_forward(&mut tape, &bound, &spec, xv).unwrap();
        let full = tape.value(logits).clone();
        for b in 0..3 {
            let mut tape = Tape::new();
            let bound = bind(&mut tape, &params, false);
            let xv = tape.leaf(batch.slice_batch(b), false);
            let logits = disc_forward(&mut tape, &bound, &spec, xv).unwrap();
            let single = tape.value(logits).clone();
            for (i, (&a, &e)) in full.slice_batch(b).data().iter().zip(single.data()).enumerate() {
                assert!((a - e).abs() < 1e-5, "batch {b} logit {i}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn feature_input_discriminator_accepts_tap_channels() {
        let spec = PatchDiscSpec {
            base_channels: 8,
            n_scale_layers: 1,
            input: DiscInput::Feature { channels: 32 },
            use_norm: true,
        };
        let params = build_patch_discriminator::<f32>(&spec, &mut stream_rng(5, "d"));
        let mut feats = Tensor::zeros([2, 32, 8, 8]);
        let mut rng = stream_rng(6, "f");
        for v in feats.data_mut() {
            *v = rng.random_range(-1.0..1.0f32);
        }
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, false);
        let xv = tape.leaf(feats, false);
        let y = disc_forward(&mut tape, &bound, &spec, xv).unwrap();
        assert_eq!(tape.value(y).shape()[1], 1);
    }
}
