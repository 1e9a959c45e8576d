//! Patch sampling and augmentation.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{ImageTensor, ScaleFactor};

fn crop(img: &ImageTensor, y0: usize, x0: usize, h: usize, w: usize) -> ImageTensor {
    let [b, c, ih, iw] = img.shape();
    debug_assert!(y0 + h <= ih && x0 + w <= iw);
    let mut out = Tensor::zeros([b, c, h, w]);
    for plane in 0..b * c {
        for y in 0..h {
            let src = &img.data()[plane * ih * iw + (y0 + y) * iw + x0..][..w];
            out.data_mut()[plane * h * w + y * w..][..w].copy_from_slice(src);
        }
    }
    out
}

/// Contiguous `size x size` crop at a uniformly sampled offset.
pub fn random_crop(img: &ImageTensor, size: usize, rng: &mut Rng) -> Result<ImageTensor> {
    let [_, _, h, w] = img.shape();
    if size == 0 || size > h || size > w {
        return Err(Error::Argument(format!("crop size {size} does not fit {h}x{w}")));
    }
    let y0 = rng.random_range(0..=h - size);
    let x0 = rng.random_range(0..=w - size);
    Ok(crop(img, y0, x0, size, size))
}

/// Spatially corresponding crops from an HR/LR pair whose dimensions differ
/// by exactly the scale factor: the LR patch is `lr_size` square at `(y, x)`,
/// the HR patch is `lr_size * s` square at `(y * s, x * s)`.
pub fn paired_crop(
    hr: &ImageTensor,
    lr: &ImageTensor,
    lr_size: usize,
    scale: ScaleFactor,
    rng: &mut Rng,
) -> Result<(ImageTensor, ImageTensor)> {
    let s = scale.get();
    let [_, _, hh, hw] = hr.shape();
    let [_, _, lh, lw] = lr.shape();
    if hh != lh * s || hw != lw * s {
        return Err(Error::Argument(format!(
            "hr {hh}x{hw} is not lr {lh}x{lw} times scale {s}"
        )));
    }
    if lr_size == 0 || lr_size > lh || lr_size > lw {
        return Err(Error::Argument(format!("lr patch {lr_size} does not fit {lh}x{lw}")));
    }
    let y0 = rng.random_range(0..=lh - lr_size);
    let x0 = rng.random_range(0..=lw - lr_size);
    let lr_patch = crop(lr, y0, x0, lr_size, lr_size);
    let hr_patch = crop(hr, y0 * s, x0 * s, lr_size * s, lr_size * s);
    Ok((hr_patch, lr_patch))
}

/// Mirror along the horizontal axis (left-right flip).
pub fn hflip(img: &ImageTensor) -> ImageTensor {
    let [b, c, h, w] = img.shape();
    let mut out = Tensor::zeros([b, c, h, w]);
    for plane in 0..b * c {
        for y in 0..h {
            for x in 0..w {
                out.data_mut()[plane * h * w + y * w + x] = img.data()[plane * h * w + y * w + (w - 1 - x)];
            }
        }
    }
    out
}

/// Rotate 90 degrees clockwise; `(h, w)` becomes `(w, h)`.
pub fn rot90(img: &ImageTensor) -> ImageTensor {
    let [b, c, h, w] = img.shape();
    let mut out = Tensor::zeros([b, c, w, h]);
    for plane in 0..b * c {
        for y in 0..w {
            for x in 0..h {
                out.data_mut()[plane * w * h + y * h + x] = img.data()[plane * h * w + (h - 1 - x) * w + y];
            }
        }
    }
    out
}

/// With independent probability 0.5 each: horizontal flip, then 90-degree
/// rotation. Draws exactly two booleans from `rng` regardless of outcome.
pub fn augment(img: &ImageTensor, rng: &mut Rng) -> ImageTensor {
    let do_flip = rng.random::<bool>();
    let do_rot = rng.random::<bool>();
    let mut out = if do_flip { hflip(img) } else { img.clone() };
    if do_rot {
        out = rot90(&out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = stream_rng(seed, "sample-test");
        let mut t = Tensor::zeros([1, 3, h, w]);
        for v in t.data_mut() {
            *v = rng.random_range(0.0..1.0f32);
        }
        t
    }

    #[test]
    fn full_size_crop_is_identity() {
        let img = random_image(6, 6, 1);
        let mut rng = stream_rng(0, "crop");
        assert_eq!(random_crop(&img, 6, &mut rng).unwrap(), img);
    }

    #[test]
    fn crop_too_large_is_error() {
        let img = random_image(4, 6, 2);
        let mut rng = stream_rng(0, "crop");
        assert!(random_crop(&img, 5, &mut rng).is_err());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let img = random_image(32, 32, 3);
        let a = random_crop(&img, 8, &mut stream_rng(9, "c")).unwrap();
        let b = random_crop(&img, 8, &mut stream_rng(9, "c")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crop_offsets_are_uniform() {
        // 10^4 draws over a 128x128 image with size 64: 65x65 valid offsets,
        // each axis frequency within 4 sigma of uniform.
        let img = random_image(128, 128, 4);
        let mut rng = stream_rng(11, "uniformity");
        let mut y_hist = vec![0u32; 65];
        let n = 10_000;
        for _ in 0..n {
            let y0 = {
                // Re-derive the offset by matching the crop against the source row.
                let patch = random_crop(&img, 64, &mut rng).unwrap();
                let first = patch.data()[0];
                let mut found = None;
                'outer: for y in 0..65 {
                    for x in 0..65 {
                        if img.at(0, 0, y, x) == first
                            && (0..64).all(|k| img.at(0, 0, y, x + k) == patch.at(0, 0, 0, k))
                            && (0..64).all(|k| img.at(0, 0, y + k, x) == patch.at(0, 0, k, 0))
                        {
                            found = Some(y);
                            break 'outer;
                        }
                    }
                }
                found.expect("crop not located")
            };
            y_hist[y0] += 1;
        }
        let p = 1.0 / 65.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (y, &count) in y_hist.iter().enumerate() {
            assert!(
                (count as f64 - mean).abs() < 4.0 * sigma,
                "offset {y} count {count} outside 4 sigma of {mean}"
            );
        }
    }

    #[test]
    fn paired_crop_identity_and_correspondence() {
        let hr = random_image(24, 24, 5);
        let lr = crate::imaging::bicubic_resize(&hr, crate::imaging::ResizeScale::new(1, 4).unwrap()).unwrap();
        let s = ScaleFactor::new(4).unwrap();
        // Full-size patch is the identity pair.
        let mut rng = stream_rng(1, "p");
        let (hp, lp) = paired_crop(&hr, &lr, 6, s, &mut rng).unwrap();
        assert_eq!(hp, hr);
        assert_eq!(lp, lr);
        // Mismatched dims error.
        assert!(paired_crop(&hr, &hr, 6, s, &mut stream_rng(0, "p")).is_err());
    }

    #[test]
    fn paired_crop_interior_matches_resized_hr_patch() {
        // lr = B(hr); resizing a paired hr patch must agree with the lr patch
        // away from a 2-tap boundary ring.
        let hr = random_image(64, 64, 6);
        let scale = ScaleFactor::new(4).unwrap();
        let lr = crate::imaging::bicubic_resize(&hr, crate::imaging::ResizeScale::down(scale)).unwrap();
        let mut rng = stream_rng(2, "p");
        for _ in 0..4 {
            let (hp, lp) = paired_crop(&hr, &lr, 8, scale, &mut rng).unwrap();
            let lp2 = crate::imaging::bicubic_resize(&hp, crate::imaging::ResizeScale::down(scale)).unwrap();
            for y in 2..6 {
                for x in 2..6 {
                    for c in 0..3 {
                        let d = (lp.at(0, c, y, x) - lp2.at(0, c, y, x)).abs();
                        assert!(d < 1e-5, "interior mismatch {d} at ({y},{x})");
                    }
                }
            }
        }
    }

    #[test]
    fn flip_twice_is_identity_and_multiset_preserved() {
        let img = random_image(5, 7, 7);
        assert_eq!(hflip(&hflip(&img)), img);
        let mut rng = stream_rng(3, "aug");
        let out = augment(&img, &mut rng);
        let mut a: Vec<f32> = img.data().to_vec();
        let mut b: Vec<f32> = out.data().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let img = random_image(6, 6, 8);
        let r = rot90(&rot90(&rot90(&rot90(&img))));
        assert_eq!(r, img);
    }
}
