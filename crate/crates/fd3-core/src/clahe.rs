//! Contrast limited adaptive histogram equalization on the luminance channel.
//!
//! The equalizer builds one clipped 256-bin histogram per tile, converts it
//! to a mapping via the usual cdf normalization, and bilinearly interpolates
//! the mappings of the four nearest tile centers at every pixel. Only the
//! luminance changes; the shift is applied additively to all three channels,
//! which keeps chroma (in the YCbCr sense) untouched.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

const BINS: usize = 256;

/// Parameters of the equalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    /// Histogram clip threshold as a multiple of the mean bin count.
    pub clip_limit: f64,
    /// Tile grid as (rows, cols).
    pub tile_grid: (usize, usize),
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tile_grid: (8, 8),
        }
    }
}

impl ClaheParams {
    pub fn new(clip_limit: f64, tile_grid: (usize, usize)) -> Result<Self> {
        if !(clip_limit > 0.0) || !clip_limit.is_finite() {
            return Err(Error::invalid(format!(
                "clip_limit must be positive, got {clip_limit}"
            )));
        }
        if tile_grid.0 < 1 || tile_grid.1 < 1 {
            return Err(Error::invalid("tile grid must be at least 1x1"));
        }
        Ok(Self {
            clip_limit,
            tile_grid,
        })
    }
}

/// Per-tile luminance mapping. `None` marks a constant tile that maps
/// luminance to itself.
enum TileLut {
    Map(Box<[f64; BINS]>),
    Identity,
}

impl TileLut {
    fn eval(&self, lum: f64, bin: usize) -> f64 {
        match self {
            TileLut::Map(lut) => lut[bin],
            TileLut::Identity => lum,
        }
    }
}

/// Applies CLAHE to the luminance channel of `img`.
///
/// Shape is preserved and the output stays in `[0, 1]`. The operation is
/// deterministic. Errors when the tile grid does not fit the image
/// (rows or cols above `min(h, w) / 2`).
pub fn clahe(img: &ImageTensor, params: &ClaheParams) -> Result<ImageTensor> {
    let p = ClaheParams::new(params.clip_limit, params.tile_grid)?;
    let (h, w) = (img.height(), img.width());
    let max_grid = h.min(w) / 2;
    if p.tile_grid.0 > max_grid || p.tile_grid.1 > max_grid {
        return Err(Error::invalid(format!(
            "tile grid {:?} too large for {h}x{w} image (max {max_grid} per axis)",
            p.tile_grid
        )));
    }
    let (rows, cols) = p.tile_grid;

    let lum = img.luminance();
    let bins: Array2<usize> = lum.mapv(|v| lum_bin(v));

    // Tile boundaries: row tile i covers [i*h/rows, (i+1)*h/rows).
    let row_edges: Vec<usize> = (0..=rows).map(|i| i * h / rows).collect();
    let col_edges: Vec<usize> = (0..=cols).map(|j| j * w / cols).collect();

    let mut luts: Vec<TileLut> = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (y0, y1) = (row_edges[i], row_edges[i + 1]);
            let (x0, x1) = (col_edges[j], col_edges[j + 1]);
            let mut hist = [0u64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bins[[y, x]]] += 1;
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as u64;
            clip_histogram(&mut hist, area, p.clip_limit);
            luts.push(build_lut(&hist));
        }
    }

    // Tile centers for the interpolation pass.
    let row_centers: Vec<f64> = (0..rows)
        .map(|i| (row_edges[i] + row_edges[i + 1] - 1) as f64 * 0.5)
        .collect();
    let col_centers: Vec<f64> = (0..cols)
        .map(|j| (col_edges[j] + col_edges[j + 1] - 1) as f64 * 0.5)
        .collect();

    let mut out = img.data().clone();
    for y in 0..h {
        let (i0, i1, wy) = bracket(&row_centers, y as f64);
        for x in 0..w {
            let (j0, j1, wx) = bracket(&col_centers, x as f64);
            let l = lum[[y, x]];
            let b = bins[[y, x]];
            let v00 = luts[i0 * cols + j0].eval(l, b);
            let v01 = luts[i0 * cols + j1].eval(l, b);
            let v10 = luts[i1 * cols + j0].eval(l, b);
            let v11 = luts[i1 * cols + j1].eval(l, b);
            let top = v00 + wx * (v01 - v00);
            let bot = v10 + wx * (v11 - v10);
            let mapped = top + wy * (bot - top);
            let delta = mapped - l;
            for ch in 0..3 {
                out[[y, x, ch]] = (out[[y, x, ch]] + delta).clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor::new(out)
}

fn lum_bin(v: f64) -> usize {
    ((v * BINS as f64) as usize).min(BINS - 1)
}

/// Clips bins at `clip_limit` times the mean bin count and redistributes the
/// excess uniformly in a single pass; the sub-bin remainder is dropped.
fn clip_histogram(hist: &mut [u64; BINS], area: u64, clip_limit: f64) {
    let limit = ((clip_limit * area as f64 / BINS as f64).floor() as u64).max(1);
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / BINS as u64;
    if share > 0 {
        for h in hist.iter_mut() {
            *h += share;
        }
    }
}

fn build_lut(hist: &[u64; BINS]) -> TileLut {
    let mut cdf = [0u64; BINS];
    let mut acc = 0u64;
    for (i, h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc;
    }
    let total = acc;
    let cdf_min = cdf
        .iter()
        .copied()
        .find(|&c| c > 0)
        .unwrap_or(0);
    if total <= cdf_min {
        // All mass in one bin: nothing to equalize.
        return TileLut::Identity;
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = Box::new([0.0f64; BINS]);
    for i in 0..BINS {
        lut[i] = (cdf[i].saturating_sub(cdf_min)) as f64 / denom;
    }
    TileLut::Map(lut)
}

/// Finds the two center indices bracketing `pos` and the interpolation
/// weight toward the second one. Clamped at the borders.
fn bracket(centers: &[f64], pos: f64) -> (usize, usize, f64) {
    let n = centers.len();
    if n == 1 || pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let mut i = 0;
    while centers[i + 1] < pos {
        i += 1;
    }
    let span = centers[i + 1] - centers[i];
    let t = (pos - centers[i]) / span;
    (i, i + 1, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent global-HE oracle: equalize luminance over the whole image
    // with the cdf-min normalization, shift all channels by the delta.
    fn global_he_oracle(img: &ImageTensor) -> ImageTensor {
        let lum = img.luminance();
        let n = lum.len() as u64;
        let mut counts = [0u64; BINS];
        for &v in lum.iter() {
            counts[lum_bin(v)] += 1;
        }
        let mut cum = [0u64; BINS];
        let mut running = 0;
        for i in 0..BINS {
            running += counts[i];
            cum[i] = running;
        }
        let first = cum.iter().copied().find(|&c| c > 0).unwrap();
        let mut out = img.data().clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let l = lum[[y, x]];
                let mapped = if n == first {
                    l
                } else {
                    (cum[lum_bin(l)] - first) as f64 / (n - first) as f64
                };
                for ch in 0..3 {
                    out[[y, x, ch]] = (out[[y, x, ch]] + mapped - l).clamp(0.0, 1.0);
                }
            }
        }
        ImageTensor::new(out).unwrap()
    }

    fn test_image(h: usize, w: usize, salt: u64) -> ImageTensor {
        ImageTensor::from_fn(h, w, |r, c, ch| {
            let k = (r as u64 * 131 + c as u64 * 31 + ch as u64 * 7 + salt * 101) % 256;
            k as f64 / 255.0
        })
        .unwrap()
    }

    #[test]
    fn single_tile_huge_clip_matches_global_he() {
        let img = test_image(8, 8, 3);
        let params = ClaheParams::new(1e12, (1, 1)).unwrap();
        let ours = clahe(&img, &params).unwrap();
        let oracle = global_he_oracle(&img);
        assert!(ours.max_abs_diff(&oracle).unwrap() < 1e-12);
    }

    #[test]
    fn luminance_map_is_monotone_for_single_tile() {
        let img = test_image(8, 8, 5);
        let params = ClaheParams::new(1e12, (1, 1)).unwrap();
        let out = clahe(&img, &params).unwrap();
        let lin = img.luminance();
        let lout = out.luminance();
        let mut pairs: Vec<(f64, f64)> = lin.iter().zip(lout.iter()).map(|(a, b)| (*a, *b)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            // Clamping of individual channels can wiggle luminance by a hair.
            assert!(w[1].1 >= w[0].1 - 1e-9, "{:?} -> {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn paper_defaults_on_512_succeed() {
        let img = test_image(512, 512, 1);
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        assert_eq!(out.height(), 512);
        assert_eq!(out.width(), 512);
        for v in out.data().iter() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let img = test_image(64, 48, 9);
        let params = ClaheParams::default();
        let a = clahe(&img, &ClaheParams { tile_grid: (4, 4), ..params }).unwrap();
        let b = clahe(&img, &ClaheParams { tile_grid: (4, 4), ..params }).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let img = test_image(16, 16, 0);
        let params = ClaheParams::new(2.0, (9, 9)).unwrap();
        assert!(clahe(&img, &params).is_err());
        // (8, 8) == min(16,16)/2 is the largest legal grid here.
        assert!(clahe(&img, &ClaheParams::new(2.0, (8, 8)).unwrap()).is_ok());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ClaheParams::new(0.0, (8, 8)).is_err());
        assert!(ClaheParams::new(-1.0, (8, 8)).is_err());
        assert!(ClaheParams::new(2.0, (0, 8)).is_err());
    }

    #[test]
    fn constant_image_passes_through() {
        let img = ImageTensor::constant(32, 32, 0.37).unwrap();
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn preserves_shape_and_range(salt in 0u64..1000, rows in 1usize..5, cols in 1usize..5) {
            let img = test_image(24, 20, salt);
            let params = ClaheParams::new(2.0, (rows, cols)).unwrap();
            let out = clahe(&img, &params).unwrap();
            prop_assert_eq!((out.height(), out.width()), (24, 20));
            for v in out.data().iter() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
