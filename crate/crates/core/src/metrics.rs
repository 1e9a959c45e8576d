//! Full-reference evaluation: PSNR and SSIM over images and corpora.
//!
//! PSNR uses peak 1.0 (the pipeline's value range). SSIM follows the
//! standard construction on the Rec.601 luminance channel: 11x11 Gaussian
//! window with sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, averaged over valid
//! window positions only. All accumulation is in f64.
//!
//! External perceptual metrics (LPIPS, PI) are out of scope; corpus
//! evaluation exposes a command seam for them instead.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging;
use crate::tensor::{Element, Tensor};

/// PSNR result; identical images have infinite PSNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl serde::Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// `10 log10(1 / mse)` with peak 1.0.
pub fn psnr<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Psnr> {
    if a.shape() != b.shape() {
        return Err(Error::shape("psnr", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64() - y.to_f64();
        acc += d * d;
    }
    let mse = acc / a.numel() as f64;
    if mse == 0.0 {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Db(10.0 * (1.0 / mse).log10()))
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w: Vec<f64> = (-half..=half).map(|k| (-((k * k) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Rec.601 luminance planes, one `h*w` buffer per batch item.
fn luminance<T: Element>(img: &Tensor<T>) -> Vec<Vec<f64>> {
    let [b, _, h, w] = img.shape();
    (0..b)
        .map(|bi| {
            let mut plane = vec![0.0f64; h * w];
            for (i, v) in plane.iter_mut().enumerate() {
                let r = img.data()[(bi * 3) * h * w + i].to_f64();
                let g = img.data()[(bi * 3 + 1) * h * w + i].to_f64();
                let bch = img.data()[(bi * 3 + 2) * h * w + i].to_f64();
                *v = 0.299 * r + 0.587 * g + 0.114 * bch;
            }
            plane
        })
        .collect()
}

/// Separable valid-mode Gaussian filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, window: &[f64]) -> Vec<f64> {
    let k = window.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &wi) in window.iter().enumerate() {
                acc += wi * plane[y * w + x + i];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &wi) in window.iter().enumerate() {
                acc += wi * horiz[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity between two images.
pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("ssim", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let [batch, c, h, w] = a.shape();
    if c != 3 {
        return Err(Error::Argument(format!("ssim expects RGB images, got {c} channels")));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Argument(format!("ssim needs at least {SSIM_WINDOW} px per side, got {h}x{w}")));
    }
    let window = gaussian_window();
    let lum_a = luminance(a);
    let lum_b = luminance(b);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for bi in 0..batch {
        let x = &lum_a[bi];
        let y = &lum_b[bi];
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
        let mu_x = filter_valid(x, h, w, &window);
        let mu_y = filter_valid(y, h, w, &window);
        let m_xx = filter_valid(&xx, h, w, &window);
        let m_yy = filter_valid(&yy, h, w, &window);
        let m_xy = filter_valid(&xy, h, w, &window);
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = m_xx[i] - mx * mx;
            let var_y = m_yy[i] - my * my;
            let cov = m_xy[i] - mx * my;
            let val = ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2));
            total += val;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PairMetrics {
    pub name: String,
    pub psnr: Psnr,
    pub ssim: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct MetricReport {
    pub per_image: Vec<PairMetrics>,
    /// Mean over finite-PSNR pairs; absent when every pair was identical.
    pub mean_psnr: Option<f64>,
    /// Number of identical pairs excluded from the PSNR mean.
    pub infinite_psnr_count: usize,
    pub mean_ssim: f64,
    /// Filenames present on only one side, excluded from evaluation.
    pub unmatched: Vec<String>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV table `filename,psnr,ssim`; infinite PSNR written as `infinite`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("filename,psnr,ssim\n");
        for p in &self.per_image {
            let psnr = match p.psnr {
                Psnr::Db(v) => format!("{v:.6}"),
                Psnr::Infinite => "infinite".to_string(),
            };
            out.push_str(&format!("{},{},{:.6}\n", p.name, psnr, p.ssim));
        }
        out
    }
}

fn crop_border(img: &Tensor<f32>, border: usize) -> Result<Tensor<f32>> {
    if border == 0 {
        return Ok(img.clone());
    }
    let [b, c, h, w] = img.shape();
    if h <= 2 * border || w <= 2 * border {
        return Err(Error::Argument(format!("border crop {border} consumes the whole {h}x{w} image")));
    }
    let (oh, ow) = (h - 2 * border, w - 2 * border);
    let mut out = Tensor::zeros([b, c, oh, ow]);
    for plane in 0..b * c {
        for y in 0..oh {
            let src = &img.data()[plane * h * w + (y + border) * w + border..][..ow];
            out.data_mut()[plane * oh * ow + y * ow..][..ow].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Evaluate every same-named image pair across two directories after
/// cropping `border_crop` pixels (typically the scale factor, to exclude
/// boundary resampling effects).
pub fn evaluate_corpus(
    result_dir: impl AsRef<Path>,
    reference_dir: impl AsRef<Path>,
    border_crop: usize,
) -> Result<MetricReport> {
    let list = |dir: &Path| -> Result<BTreeMap<String, std::path::PathBuf>> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        Ok(entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter_map(|p| p.file_name().map(|n| (n.to_string_lossy().into_owned(), p.clone())))
            .collect())
    };
    let results = list(result_dir.as_ref())?;
    let references = list(reference_dir.as_ref())?;

    let mut unmatched: Vec<String> = Vec::new();
    for name in results.keys() {
        if !references.contains_key(name) {
            unmatched.push(format!("{name} (result only)"));
        }
    }
    for name in references.keys() {
        if !results.contains_key(name) {
            unmatched.push(format!("{name} (reference only)"));
        }
    }

    let mut per_image = Vec::new();
    let mut psnr_sum = 0.0f64;
    let mut psnr_count = 0usize;
    let mut infinite_psnr_count = 0usize;
    let mut ssim_sum = 0.0f64;
    for (name, result_path) in &results {
        let Some(reference_path) = references.get(name) else { continue };
        let res = crop_border(&imaging::load_image(result_path)?, border_crop)?;
        let refi = crop_border(&imaging::load_image(reference_path)?, border_crop)?;
        let p = psnr(&res, &refi)?;
        let s = ssim(&res, &refi)?;
        match p {
            Psnr::Db(v) => {
                psnr_sum += v;
                psnr_count += 1;
            }
            Psnr::Infinite => infinite_psnr_count += 1,
        }
        ssim_sum += s;
        per_image.push(PairMetrics { name: name.clone(), psnr: p, ssim: s });
    }
    if per_image.is_empty() {
        return Err(Error::Report("no matching filenames between result and reference directories".into()));
    }
    Ok(MetricReport {
        mean_psnr: (psnr_count > 0).then(|| psnr_sum / psnr_count as f64),
        infinite_psnr_count,
        mean_ssim: ssim_sum / per_image.len() as f64,
        per_image,
        unmatched,
    })
}
