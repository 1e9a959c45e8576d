//! Image I/O, the bicubic degradation operator, patch sampling and
//! augmentation: the deterministic numerical substrate the rest of the
//! pipeline consumes.
//!
//! Images are `(batch, 3, height, width)` tensors of `f32` in `[0, 1]`.
//! Every operation here is a pure function of its inputs (and an explicit
//! RNG where sampling is involved), so data loading can run from parallel
//! workers without shared state.

mod io;
mod resize;
mod sample;

pub use io::{image_dimensions, load_image, save_image};
pub use resize::{bicubic_resize, ResizeScale};
pub use sample::{augment, paired_crop, random_crop, rot90, hflip};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Batched float image data; the universal currency of the pipeline.
pub type ImageTensor = Tensor<f32>;

/// Integer super-resolution factor, restricted to the supported range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleFactor(u8);

impl ScaleFactor {
    pub fn new(s: u32) -> Result<Self> {
        if (2..=4).contains(&s) {
            Ok(ScaleFactor(s as u8))
        } else {
            Err(Error::Argument(format!("scale factor must be 2, 3 or 4, got {s}")))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Tolerance on the `[0, 1]` range invariant.
pub const RANGE_EPS: f32 = 1e-6;

/// Check the image-tensor invariants: finite values within `[0-eps, 1+eps]`,
/// three channels, nonzero extent.
pub fn check_image(img: &ImageTensor) -> Result<()> {
    let [_, c, h, w] = img.shape();
    if c != 3 {
        return Err(Error::Argument(format!("expected 3 channels, got {c}")));
    }
    if h == 0 || w == 0 {
        return Err(Error::Argument("empty image".into()));
    }
    for &v in img.data() {
        if !v.is_finite() || v < -RANGE_EPS || v > 1.0 + RANGE_EPS {
            return Err(Error::Numeric(format!("image value {v} outside [0,1]")));
        }
    }
    Ok(())
}

/// Clamp every value into `[0, 1]`.
pub fn clamp01(img: &ImageTensor) -> ImageTensor {
    img.map(|v| v.clamp(0.0, 1.0))
}
