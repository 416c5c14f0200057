//! Image representation, file I/O and geometric preprocessing.
//!
//! The whole pipeline trades in [`ImageTensor`]: an H×W×3 RGB raster with
//! f64 samples. Operations in this module keep values inside `[0, 1]`;
//! bridge intermediates are allowed to leave that range (see `bridge`).

use std::path::Path;

use image::ColorType;
use ndarray::{Array3, Zip};

use crate::error::{Error, Result};

/// Minimum edge length accepted by the pipeline.
pub const MIN_DIM: usize = 8;

/// An H×W×3 RGB image with f64 samples.
///
/// File loading scales 8-bit data to `[0, 1]`. Imaging operations clamp
/// their outputs back into that range; bridge states and raw network
/// predictions may carry values outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f64>,
}

impl ImageTensor {
    /// Wraps an `(h, w, 3)` array. Requires h, w ≥ 8 and finite values.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if c != 3 {
            return Err(Error::shape("(h, w, 3)", format!("(h, w, {c})")));
        }
        if h < MIN_DIM || w < MIN_DIM {
            return Err(Error::invalid(format!(
                "image must be at least {MIN_DIM}x{MIN_DIM}, got {h}x{w}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(Self { data })
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Array3::from_elem((height, width, 3), value))
    }

    /// Builds an image from a per-sample function `(row, col, channel) -> value`.
    pub fn from_fn(
        height: usize,
        width: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(Array3::from_shape_fn((height, width, 3), |(r, c, ch)| {
            f(r, c, ch)
        }))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    /// True when both images have the same height and width.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.data.dim() == other.data.dim()
    }

    /// Largest absolute per-sample difference. Errors on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_same_shape(self, other)?;
        let mut max = 0.0f64;
        Zip::from(&self.data).and(&other.data).for_each(|a, b| {
            let d = (a - b).abs();
            if d > max {
                max = d;
            }
        });
        Ok(max)
    }

    /// Copy with every sample clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self {
            data: self.data.mapv(|v| v.clamp(0.0, 1.0)),
        }
    }

    /// Per-pixel luminance (BT.601 weights), shape `(h, w)`.
    pub fn luminance(&self) -> ndarray::Array2<f64> {
        let (h, w, _) = self.data.dim();
        ndarray::Array2::from_shape_fn((h, w), |(r, c)| {
            0.299 * self.data[[r, c, 0]] + 0.587 * self.data[[r, c, 1]] + 0.114 * self.data[[r, c, 2]]
        })
    }
}

pub(crate) fn check_same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(
            format!("{:?}", a.data().dim()),
            format!("{:?}", b.data().dim()),
        ));
    }
    Ok(())
}

/// Loads an 8-bit RGB (or RGBA, alpha dropped) PNG/JPEG and scales to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    match img.color() {
        ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit RGB data, found {other:?}"),
            })
        }
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let (h, w) = (h as usize, w as usize);
    if h < MIN_DIM || w < MIN_DIM {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("image {h}x{w} is smaller than {MIN_DIM}x{MIN_DIM}"),
        });
    }
    let mut data = Array3::zeros((h, w, 3));
    for (x, y, px) in rgb.enumerate_pixels() {
        for ch in 0..3 {
            data[[y as usize, x as usize, ch]] = px.0[ch] as f64 / 255.0;
        }
    }
    ImageTensor::new(data)
}

/// Writes the image as an 8-bit RGB PNG. Values are clamped then rounded.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        for ch in 0..3 {
            let v = img.data()[[y as usize, x as usize, ch]].clamp(0.0, 1.0);
            px.0[ch] = (v * 255.0).round() as u8;
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Decode {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
}

/// Resizes the shorter side to `size` (bilinear), then center-crops to
/// `size`×`size`. A `size`×`size` input is returned bit-identical.
pub fn center_crop_resize(img: &ImageTensor, size: usize) -> Result<ImageTensor> {
    if size < MIN_DIM {
        return Err(Error::invalid(format!(
            "target size must be at least {MIN_DIM}, got {size}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    if h == size && w == size {
        return Ok(img.clone());
    }
    let (new_h, new_w) = if h <= w {
        let scale = size as f64 / h as f64;
        (size, (w as f64 * scale).round().max(size as f64) as usize)
    } else {
        let scale = size as f64 / w as f64;
        ((h as f64 * scale).round().max(size as f64) as usize, size)
    };
    let resized = resize_bilinear(img, new_h, new_w);
    let top = (new_h - size) / 2;
    let left = (new_w - size) / 2;
    let data = resized
        .data()
        .slice(ndarray::s![top..top + size, left..left + size, ..])
        .to_owned();
    ImageTensor::new(data)
}

fn resize_bilinear(img: &ImageTensor, new_h: usize, new_w: usize) -> ImageTensor {
    let (h, w, _) = img.data().dim();
    let scale_y = h as f64 / new_h as f64;
    let scale_x = w as f64 / new_w as f64;
    let src = img.data();
    let mut out = Array3::zeros((new_h, new_w, 3));
    // Pixel-center convention: dst center maps to (dst + 0.5) * scale - 0.5.
    for r in 0..new_h {
        let sy = ((r as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for c in 0..new_w {
            let sx = ((c as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..3 {
                let top = lerp(src[[y0, x0, ch]], src[[y0, x1, ch]], fx);
                let bot = lerp(src[[y1, x0, ch]], src[[y1, x1, ch]], fx);
                out[[r, c, ch]] = lerp(top, bot, fy).clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor { data: out }
}

// a + t*(b-a): exact for a == b, stays within [min(a,b), max(a,b)] up to
// one rounding step.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Separable Gaussian blur with reflect-101 boundary handling.
///
/// The kernel is truncated at 4σ and renormalized to sum 1. `sigma == 0`
/// returns the input unchanged.
pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (h, w, _) = img.data().dim();
    let src = img.data();
    let mut tmp = Array3::zeros((h, w, 3));
    // Horizontal pass.
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    let offset = i as isize - (kernel.len() / 2) as isize;
                    let cc = reflect_index(c as isize + offset, w);
                    acc += k * src[[r, cc, ch]];
                }
                tmp[[r, c, ch]] = acc;
            }
        }
    }
    // Vertical pass.
    let mut out = Array3::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    let offset = i as isize - (kernel.len() / 2) as isize;
                    let rr = reflect_index(r as isize + offset, h);
                    acc += k * tmp[[rr, c, ch]];
                }
                out[[r, c, ch]] = acc;
            }
        }
    }
    ImageTensor { data: out }
}

/// Same blur applied to a single-channel array.
pub(crate) fn gaussian_blur_plane(src: &ndarray::Array2<f64>, sigma: f64) -> ndarray::Array2<f64> {
    if sigma <= 0.0 {
        return src.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (h, w) = src.dim();
    let mut tmp = ndarray::Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let offset = i as isize - (kernel.len() / 2) as isize;
                let cc = reflect_index(c as isize + offset, w);
                acc += k * src[[r, cc]];
            }
            tmp[[r, c]] = acc;
        }
    }
    let mut out = ndarray::Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let offset = i as isize - (kernel.len() / 2) as isize;
                let rr = reflect_index(r as isize + offset, h);
                acc += k * tmp[[rr, c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }
    kernel
}

// Reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n >= 2);
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}
