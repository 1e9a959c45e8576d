//! Procedural smoke corpus: a desk-scale stand-in for a DSLR capture
//! campaign, with a known oracle degradation operator.
//!
//! HR images mix gradients, checkerboards and band-limited noise textures.
//! The oracle LR is `gaussian_blur(sigma_b)` then bicubic downscale then
//! additive Gaussian noise, clamped. HR and LR halves are written with
//! disjoint index subsets so the public corpus is truly unpaired; a hidden
//! manifest pairs each public LR image with its withheld HR source, for
//! evaluation only.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::imaging::{self, clamp01, ImageTensor, ResizeScale, ScaleFactor};
use crate::rng::{stream_rng, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct SmokeSpec {
    pub n: usize,
    pub hr_size: usize,
    pub scale: ScaleFactor,
    pub sigma_blur: f64,
    pub sigma_noise: f64,
    /// Number of indices kept on the (public) HR side; the rest become the
    /// public LR side.
    pub n_prime: usize,
    pub seed: u64,
}

impl SmokeSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Argument("smoke corpus needs at least 2 images".into()));
        }
        if self.n_prime == 0 || self.n_prime >= self.n {
            return Err(Error::Argument(format!(
                "n_prime must satisfy 0 < n' < {}, got {}",
                self.n, self.n_prime
            )));
        }
        if self.hr_size % self.scale.get() != 0 || self.hr_size < 8 {
            return Err(Error::Argument(format!(
                "hr_size {} must be >= 8 and divisible by scale {}",
                self.hr_size, self.scale
            )));
        }
        if self.sigma_blur < 0.0 || self.sigma_noise < 0.0 {
            return Err(Error::Argument("degradation sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// On-disk layout of a generated smoke corpus.
#[derive(Clone, Debug)]
pub struct SmokeCorpus {
    pub root: PathBuf,
    pub lr_dir: PathBuf,
    pub hr_dir: PathBuf,
    pub hidden_manifest: PathBuf,
}

/// Separable Gaussian blur with edge clamping; `sigma = 0` is the identity.
pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    if sigma == 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    let [b, c, h, w] = img.shape();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0f64; img.numel()];
    for plane in 0..b * c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &kv) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + i as isize - radius, w);
                    acc += kv * img.data()[plane * h * w + y * w + sx] as f64;
                }
                horiz[plane * h * w + y * w + x] = acc;
            }
        }
    }
    let mut out = Tensor::zeros([b, c, h, w]);
    for plane in 0..b * c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &kv) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + i as isize - radius, h);
                    acc += kv * horiz[plane * h * w + sy * w + x];
                }
                out.data_mut()[plane * h * w + y * w + x] = acc as f32;
            }
        }
    }
    out
}

/// The oracle degradation: blur, bicubic downscale, additive noise, clamp.
pub fn oracle_degrade(
    hr: &ImageTensor,
    scale: ScaleFactor,
    sigma_blur: f64,
    sigma_noise: f64,
    rng: &mut Rng,
) -> Result<ImageTensor> {
    let blurred = gaussian_blur(hr, sigma_blur);
    let mut lr = imaging::bicubic_resize(&blurred, ResizeScale::down(scale))?;
    if sigma_noise > 0.0 {
        for v in lr.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += (z * sigma_noise) as f32;
        }
    }
    Ok(clamp01(&lr))
}

fn linear_gradient(size: usize, rng: &mut Rng) -> ImageTensor {
    let theta: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let c0: [f32; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let c1: [f32; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let mut img = Tensor::zeros([1, 3, size, size]);
    let half = (size as f32 - 1.0) / 2.0;
    let norm = 1.0 / (2.0 * half.hypot(half));
    for y in 0..size {
        for x in 0..size {
            let t = ((x as f32 - half) * dx + (y as f32 - half) * dy) * norm + 0.5;
            for c in 0..3 {
                img.data_mut()[c * size * size + y * size + x] = c0[c] + (c1[c] - c0[c]) * t;
            }
        }
    }
    img
}

fn checkerboard(size: usize, rng: &mut Rng) -> ImageTensor {
    let cell = rng.random_range(2..=8usize);
    let (py, px) = (rng.random_range(0..cell), rng.random_range(0..cell));
    let c0: [f32; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let c1: [f32; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let mut img = Tensor::zeros([1, 3, size, size]);
    for y in 0..size {
        for x in 0..size {
            let parity = (((y + py) / cell) + ((x + px) / cell)) % 2;
            let color = if parity == 0 { &c0 } else { &c1 };
            for c in 0..3 {
                img.data_mut()[c * size * size + y * size + x] = color[c];
            }
        }
    }
    img
}

/// Band-limited noise: a coarse uniform-noise grid upsampled bicubically.
fn noise_texture(size: usize, rng: &mut Rng) -> Result<ImageTensor> {
    let coarse = (size / 8).max(2);
    let mut grid = Tensor::zeros([1, 3, coarse, coarse]);
    for v in grid.data_mut() {
        *v = rng.random_range(0.0..1.0f32);
    }
    let up = imaging::bicubic_resize(&grid, ResizeScale::new(size as u32, coarse as u32)?)?;
    // Rational rounding can land one pixel off; resize again if so.
    if up.height() == size && up.width() == size {
        Ok(up)
    } else {
        Err(Error::Argument(format!("noise texture produced {}x{}", up.height(), up.width())))
    }
}

/// One procedural HR image: a random convex mix of the three component
/// families, then standardized to a fixed per-channel mean and spread so
/// every image shares the same global palette statistics. Without that, the
/// tiny HR and LR subsets end up with visibly different color distributions
/// and the degradation discriminators lock onto palette rather than
/// degradation.
pub fn procedural_image(size: usize, rng: &mut Rng) -> Result<ImageTensor> {
    let grad = linear_gradient(size, rng);
    let check = checkerboard(size, rng);
    let tex = noise_texture(size, rng)?;
    let mut ws = [
        rng.random_range(0.2..1.0f32),
        rng.random_range(0.2..1.0f32),
        rng.random_range(0.2..1.0f32),
    ];
    let total: f32 = ws.iter().sum();
    for w in &mut ws {
        *w /= total;
    }
    let mut img = Tensor::zeros([1, 3, size, size]);
    for i in 0..img.numel() {
        img.data_mut()[i] = ws[0] * grad.data()[i] + ws[1] * check.data()[i] + ws[2] * tex.data()[i];
    }
    let n = (size * size) as f32;
    for c in 0..3 {
        let plane = &mut img.data_mut()[c * size * size..(c + 1) * size * size];
        let mean: f32 = plane.iter().sum::<f32>() / n;
        let var: f32 = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let scale = 0.18 / var.sqrt().max(1e-3);
        for v in plane.iter_mut() {
            *v = 0.5 + (*v - mean) * scale;
        }
    }
    Ok(clamp01(&img))
}

/// Generate the corpus under `out_dir`: `hr/` with the public HR subset,
/// `lr/` with oracle-degraded LR for the complementary subset, and
/// `hidden/` holding the withheld HR sources plus the evaluation manifest.
pub fn make_smoke_corpus(out_dir: impl AsRef<Path>, spec: &SmokeSpec) -> Result<SmokeCorpus> {
    spec.validate()?;
    let root = out_dir.as_ref().to_path_buf();
    let hr_dir = root.join("hr");
    let lr_dir = root.join("lr");
    let hidden_dir = root.join("hidden");
    for d in [&hr_dir, &lr_dir, &hidden_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut content_rng = stream_rng(spec.seed, "smoke.content");
    let mut degrade_rng = stream_rng(spec.seed, "smoke.degrade");
    let mut split_rng = stream_rng(spec.seed, "smoke.split");

    let mut indices: Vec<usize> = (0..spec.n).collect();
    use rand::seq::SliceRandom as _;
    indices.shuffle(&mut split_rng);
    let hr_subset: std::collections::HashSet<usize> = indices[..spec.n_prime].iter().copied().collect();

    let mut manifest_lines = Vec::new();
    for i in 0..spec.n {
        let hr = procedural_image(spec.hr_size, &mut content_rng)?;
        if hr_subset.contains(&i) {
            imaging::save_image(&hr, hr_dir.join(format!("img_{i:03}.png")))?;
        } else {
            let lr = oracle_degrade(&hr, spec.scale, spec.sigma_blur, spec.sigma_noise, &mut degrade_rng)?;
            let lr_path = lr_dir.join(format!("img_{i:03}.png"));
            let hidden_hr_path = hidden_dir.join(format!("img_{i:03}.png"));
            imaging::save_image(&lr, &lr_path)?;
            imaging::save_image(&hr, &hidden_hr_path)?;
            manifest_lines.push(format!("lr/img_{i:03}.png\thidden/img_{i:03}.png"));
        }
    }

    let hidden_manifest = hidden_dir.join("paired.tsv");
    let header = format!(
        "# scale={} sigma_blur={} sigma_noise={} seed={}\n",
        spec.scale, spec.sigma_blur, spec.sigma_noise, spec.seed
    );
    std::fs::write(&hidden_manifest, header + &manifest_lines.join("\n") + "\n")
        .map_err(|e| Error::io(&hidden_manifest, e))?;

    Ok(SmokeCorpus { root, lr_dir, hr_dir, hidden_manifest })
}

/// Evaluation pairs from the hidden manifest: `(public LR, withheld HR)`.
pub fn load_hidden_pairs(corpus_root: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let root = corpus_root.as_ref();
    let manifest = root.join("hidden").join("paired.tsv");
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut pairs = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (lr, hr) = line
            .split_once('\t')
            .ok_or_else(|| Error::Corpus(format!("malformed hidden manifest line `{line}`")))?;
        pairs.push((root.join(lr), root.join(hr)));
    }
    if pairs.is_empty() {
        return Err(Error::Corpus("hidden manifest lists no pairs".into()));
    }
    Ok(pairs)
}
