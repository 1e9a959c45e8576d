//! PNG/JPEG reading and PNG writing for 8-bit RGB rasters.

use std::path::Path;

use image::{ColorType, ImageReader};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ImageTensor;

/// Load an 8-bit RGB PNG or JPEG as a `(1, 3, h, w)` tensor with values
/// `raw / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if decoded.color() != ColorType::Rgb8 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit RGB, got {:?}", decoded.color()),
        });
    }
    let rgb = decoded.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    let raw = rgb.as_raw();
    for y in 0..h {
        for x in 0..w {
            let px = (y * w + x) * 3;
            for c in 0..3 {
                data[c * h * w + y * w + x] = raw[px + c] as f32 / 255.0;
            }
        }
    }
    Ok(Tensor::new([1, 3, h, w], data))
}

/// Read only the dimensions `(height, width)` without decoding pixel data.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

/// Save a single `(1, 3, h, w)` image as 8-bit RGB PNG.
///
/// Values are clamped to `[0, 1]` and quantized with round-half-away-from-zero
/// (`f32::round`), which is deterministic across platforms.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [b, c, h, w] = img.shape();
    if b != 1 || c != 3 {
        return Err(Error::Argument(format!(
            "save_image expects a single RGB image, got shape {:?}",
            img.shape()
        )));
    }
    let mut raw = vec![0u8; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img.data()[ch * h * w + y * w + x].clamp(0.0, 1.0);
                raw[(y * w + x) * 3 + ch] = (v * 255.0).round() as u8;
            }
        }
    }
    let buf = image::RgbImage::from_raw(w as u32, h as u32, raw)
        .expect("raw buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat { path: path.to_path_buf(), reason: other.to_string() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn black_and_white_images_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let zeros = Tensor::zeros([1, 3, 4, 4]);
        let p = dir.path().join("black.png");
        save_image(&zeros, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), zeros);

        let ones = Tensor::full([1, 3, 4, 4], 1.0);
        let p = dir.path().join("white.png");
        save_image(&ones, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), ones);
    }

    #[test]
    fn quantization_rounds_half_away_from_zero_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Tensor::zeros([1, 3, 1, 2]);
        img.data_mut()[0] = 0.5; // 127.5 -> 128
        img.data_mut()[1] = 1.2; // out of range -> 255
        let p = dir.path().join("q.png");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.data()[0], 128.0 / 255.0);
        assert_eq!(back.data()[1], 1.0);
    }

    #[test]
    fn save_load_identity_on_quantization_grid() {
        let dir = tempfile::tempdir().unwrap();
        // Exhaustive 8-bit grid arranged as a 16x16 image per channel.
        let mut img = Tensor::zeros([1, 3, 16, 16]);
        for c in 0..3 {
            for i in 0..256 {
                img.data_mut()[c * 256 + i] = i as f32 / 255.0;
            }
        }
        let p = dir.path().join("grid.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn roundtrip_random_content_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::rng::stream_rng(3, "io-test");
        for i in 0..100 {
            let mut img = Tensor::zeros([1, 3, 5, 7]);
            for v in img.data_mut() {
                *v = rng.random_range(0..=255u32) as f32 / 255.0;
            }
            let p = dir.path().join(format!("r{i}.png"));
            save_image(&img, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), img);
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        match load_image("/nonexistent/nope.png") {
            Err(Error::Io { .. }) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn non_rgb_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gray.png");
        let gray = image::GrayImage::from_pixel(4, 4, image::Luma([128u8]));
        gray.save(&p).unwrap();
        match load_image(&p) {
            Err(Error::UnsupportedFormat { .. }) => {}
            other => panic!("expected unsupported format, got {other:?}"),
        }
    }
}
