//! Quantitative evaluation: PSNR, a diagonal-Gaussian feature distance,
//! and IOU over binary segmentation masks.
//!
//! The feature distance follows the per-dimension form
//! `sum_d (mu_ref - mu_test)^2 + (sigma_ref - sigma_test)^2` with the
//! population (divisor n) standard deviation; it is not the
//! full-covariance Frechet distance. Feature extraction and vessel
//! segmentation are pluggable; the bundled defaults are deterministic,
//! dependency-free stand-ins meant for desk-scale evaluation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{check_same_shape, gaussian_blur_plane, ImageTensor};

/// Maps an image to a fixed-length feature vector. Must be deterministic
/// and keep the dimension constant across a run.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, img: &ImageTensor) -> Vec<f64>;
    fn dimension(&self) -> usize;
}

/// Default extractor: luminance averaged over an 8×8 grid of patches,
/// flattened to 64 features.
#[derive(Debug, Clone, Copy, Default)]
pub struct PatchMeanExtractor;

impl PatchMeanExtractor {
    const GRID: usize = 8;
}

impl FeatureExtractor for PatchMeanExtractor {
    fn extract(&self, img: &ImageTensor) -> Vec<f64> {
        let lum = img.luminance();
        let (h, w) = lum.dim();
        let g = Self::GRID;
        let mut feats = Vec::with_capacity(g * g);
        for i in 0..g {
            for j in 0..g {
                let (y0, y1) = (i * h / g, (i + 1) * h / g);
                let (x0, x1) = (j * w / g, (j + 1) * w / g);
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += lum[[y, x]];
                    }
                }
                feats.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        feats
    }

    fn dimension(&self) -> usize {
        Self::GRID * Self::GRID
    }
}

/// Binary segmentation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    data: Array2<bool>,
}

impl SegmentationMask {
    pub fn new(data: Array2<bool>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// Produces a vessel mask from an image.
pub trait Segmenter: Send + Sync {
    fn segment(&self, img: &ImageTensor) -> SegmentationMask;
}

/// Toy vessel detector: dark top-hat on the luminance channel.
///
/// The smoothed luminance acts as the background estimate; pixels darker
/// than it by more than `threshold` are marked as vessel. This is a
/// deliberately simple stand-in for a trained segmentation model.
#[derive(Debug, Clone, Copy)]
pub struct TopHatSegmenter {
    /// Background blur radius as a fraction of min(h, w).
    pub sigma_frac: f64,
    /// Darkness threshold relative to the background.
    pub threshold: f64,
}

impl Default for TopHatSegmenter {
    fn default() -> Self {
        Self {
            sigma_frac: 0.05,
            threshold: 0.04,
        }
    }
}

impl Segmenter for TopHatSegmenter {
    fn segment(&self, img: &ImageTensor) -> SegmentationMask {
        let lum = img.luminance();
        let sigma = self.sigma_frac * img.height().min(img.width()) as f64;
        let background = gaussian_blur_plane(&lum, sigma);
        let mask = Array2::from_shape_fn(lum.dim(), |idx| {
            background[idx] - lum[idx] > self.threshold
        });
        SegmentationMask::new(mask)
    }
}

/// Peak signal-to-noise ratio in dB, with the peak taken from the first
/// (ground-truth) argument. Identical inputs give positive infinity.
pub fn psnr(x: &ImageTensor, xhat: &ImageTensor) -> Result<f64> {
    check_same_shape(x, xhat)?;
    let n = x.data().len() as f64;
    let mut mse = 0.0;
    ndarray::Zip::from(x.data()).and(xhat.data()).for_each(|a, b| {
        let d = a - b;
        mse += d * d;
    });
    mse /= n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(20.0 * (max / mse.sqrt()).log10())
}

/// Diagonal-Gaussian feature distance between two feature sets.
///
/// Each set needs at least two samples; all vectors must share one
/// dimension. Means and standard deviations use the population (divisor n)
/// convention.
pub fn fid_gaussian(feats_ref: &[Vec<f64>], feats_test: &[Vec<f64>]) -> Result<f64> {
    if feats_ref.len() < 2 || feats_test.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples per set, got {} and {}",
            feats_ref.len(),
            feats_test.len()
        )));
    }
    let k = feats_ref[0].len();
    if k == 0 {
        return Err(Error::invalid("feature dimension must be positive"));
    }
    for f in feats_ref.iter().chain(feats_test.iter()) {
        if f.len() != k {
            return Err(Error::shape(format!("{k} feature dims"), format!("{}", f.len())));
        }
    }
    let stats = |set: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let n = set.len() as f64;
        let mut mu = vec![0.0; k];
        for f in set {
            for (m, v) in mu.iter_mut().zip(f) {
                *m += v;
            }
        }
        for m in &mut mu {
            *m /= n;
        }
        let mut sigma = vec![0.0; k];
        for f in set {
            for ((s, v), m) in sigma.iter_mut().zip(f).zip(&mu) {
                let d = v - m;
                *s += d * d;
            }
        }
        for s in &mut sigma {
            *s = (*s / n).sqrt();
        }
        (mu, sigma)
    };
    let (mu_r, sig_r) = stats(feats_ref);
    let (mu_t, sig_t) = stats(feats_test);
    let mut total = 0.0;
    for d in 0..k {
        let dm = mu_r[d] - mu_t[d];
        let ds = sig_r[d] - sig_t[d];
        total += dm * dm + ds * ds;
    }
    Ok(total)
}

/// Intersection over union of two masks. Two empty masks count as 1.0.
pub fn iou(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::shape(
            format!("{:?}", a.data().dim()),
            format!("{:?}", b.data().dim()),
        ));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    ndarray::Zip::from(a.data()).and(b.data()).for_each(|x, y| {
        if *x && *y {
            inter += 1;
        }
        if *x || *y {
            union += 1;
        }
    });
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-image entries backing the aggregate report.
#[derive(Debug, Clone, PartialEq)]
pub struct PerImageMetrics {
    pub psnr: f64,
    pub iou: Option<f64>,
}

/// Aggregated evaluation results.
///
/// `psnr_mean` averages the finite per-image values; infinite values are
/// counted in `psnr_inf_count` instead. `fid` is `None` when fewer than
/// two pairs are available.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr_mean: f64,
    pub psnr_inf_count: usize,
    pub fid: Option<f64>,
    pub iou_mean: Option<f64>,
    pub per_image: Vec<PerImageMetrics>,
    pub n_images: usize,
}

/// Evaluates estimate/ground-truth pairs: per-pair PSNR, the feature
/// distance between the two sets, and (when a segmenter is given) per-pair
/// IOU of the segmentations.
pub fn evaluate(
    pairs: &[(ImageTensor, ImageTensor)],
    extractor: &dyn FeatureExtractor,
    segmenter: Option<&dyn Segmenter>,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluate needs at least one pair"));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    let mut feats_gt = Vec::with_capacity(pairs.len());
    let mut feats_est = Vec::with_capacity(pairs.len());
    for (gt, est) in pairs {
        let p = psnr(gt, est)?;
        let iou_val = match segmenter {
            Some(seg) => Some(iou(&seg.segment(gt), &seg.segment(est))?),
            None => None,
        };
        per_image.push(PerImageMetrics { psnr: p, iou: iou_val });
        feats_gt.push(extractor.extract(gt));
        feats_est.push(extractor.extract(est));
    }
    let finite: Vec<f64> = per_image
        .iter()
        .map(|m| m.psnr)
        .filter(|p| p.is_finite())
        .collect();
    let psnr_inf_count = per_image.len() - finite.len();
    let psnr_mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let fid = if pairs.len() >= 2 {
        Some(fid_gaussian(&feats_gt, &feats_est)?)
    } else {
        None
    };
    let iou_mean = if segmenter.is_some() {
        let vals: Vec<f64> = per_image.iter().filter_map(|m| m.iou).collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    } else {
        None
    };
    Ok(MetricReport {
        psnr_mean,
        psnr_inf_count,
        fid,
        iou_mean,
        n_images: pairs.len(),
        per_image,
    })
}
