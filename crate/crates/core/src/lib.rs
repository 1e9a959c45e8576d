//! Unpaired real-world super-resolution in two stages: a degradation
//! generation network that learns to map bicubic-downsampled HR images into
//! the distribution of real LR captures, and a degradation-adaptive SR
//! network trained on the generated pairs while its responses on generated
//! and real LR inputs are adversarially aligned.
//!
//! Everything runs on a small CPU tensor/autodiff core so that training is
//! bit-reproducible from `(seed, config, corpus)` on a fixed platform.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod imaging;
pub mod losses;
pub mod networks;
pub mod metrics;
pub mod optim;
pub mod smoke;
pub mod trainer;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
