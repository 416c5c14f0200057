//! Direct diffusion bridge between a clean target and its degraded
//! measurement.
//!
//! The bridge state is the convex combination `x_t = (1 - t) x0 + t x1`
//! (plus an optional noise term that is off by default). A time-conditioned
//! regressor trained with a uniformly weighted squared error on `x0`
//! approximates the posterior mean, and sampling repeatedly pulls the
//! current state toward that estimate:
//! `x_s = (1 - s/t) F(x_t, t) + (s/t) x_t` for `s < t`.
//!
//! Intermediate states are deliberately left unclipped; only the final
//! sample is clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{check_same_shape, ImageTensor};

/// Noise schedule `t -> sigma_t` of the bridge. The default (and the only
/// schedule used by the sampler in this crate) is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSchedule {
    Zero,
    Constant(f64),
}

impl SigmaSchedule {
    pub fn value(&self, _t: f64) -> f64 {
        match self {
            SigmaSchedule::Zero => 0.0,
            SigmaSchedule::Constant(s) => *s,
        }
    }
}

/// Bridge process configuration. The signal schedule is fixed to
/// `alpha_t = t`; the noise schedule defaults to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    pub sigma: SigmaSchedule,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            sigma: SigmaSchedule::Zero,
        }
    }
}

impl BridgeConfig {
    /// Signal schedule: the interpolation weight of the measurement.
    pub fn alpha(&self, t: f64) -> f64 {
        t
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma.value(t)
    }
}

/// A strictly decreasing time grid from exactly 1.0 down to exactly 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSchedule {
    steps: Vec<f64>,
}

impl TimestepSchedule {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.len() < 2 {
            return Err(Error::invalid("schedule needs at least two knots"));
        }
        if steps[0] != 1.0 {
            return Err(Error::invalid("schedule must start at exactly 1.0"));
        }
        if *steps.last().unwrap() != 0.0 {
            return Err(Error::invalid("schedule must end at exactly 0.0"));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("schedule must be strictly decreasing"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Number of network evaluations implied by the grid.
    pub fn nfe(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Uniform grid `[1, (n-1)/n, ..., 1/n, 0]` with `nfe` steps.
pub fn uniform_schedule(nfe: usize) -> Result<TimestepSchedule> {
    if nfe < 1 {
        return Err(Error::invalid("nfe must be at least 1"));
    }
    let steps = (0..=nfe)
        .map(|k| (nfe - k) as f64 / nfe as f64)
        .collect();
    TimestepSchedule::new(steps)
}

/// The time-conditioned posterior-mean regressor consumed by the sampler.
///
/// Implementations must be deterministic in eval mode and safe for
/// concurrent read-only prediction.
pub trait Denoiser: Send + Sync {
    /// One prediction per input image; `t[i]` conditions `batch[i]`.
    /// Outputs keep the input shape and are not clamped.
    fn predict(&self, batch: &[ImageTensor], t: &[f64]) -> Result<Vec<ImageTensor>>;

    /// Number of learnable parameters.
    fn parameter_count(&self) -> usize;
}

pub(crate) fn check_batch(batch: &[ImageTensor], t: &[f64]) -> Result<()> {
    if batch.len() != t.len() {
        return Err(Error::shape(
            format!("{} conditioning values", batch.len()),
            format!("{}", t.len()),
        ));
    }
    if let Some(first) = batch.first() {
        for img in &batch[1..] {
            check_same_shape(first, img)?;
        }
    }
    for &ti in t {
        if !(0.0..=1.0).contains(&ti) {
            return Err(Error::invalid(format!("t must be in [0, 1], got {ti}")));
        }
    }
    Ok(())
}

/// Draws the bridge state `(1 - alpha_t) x0 + alpha_t x1 + sigma_t z`.
pub fn bridge_state<R: Rng + ?Sized>(
    x0: &ImageTensor,
    x1: &ImageTensor,
    t: f64,
    cfg: &BridgeConfig,
    rng: &mut R,
) -> Result<ImageTensor> {
    check_same_shape(x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t must be in [0, 1], got {t}")));
    }
    let a = cfg.alpha(t);
    let sigma = cfg.sigma(t);
    let mut data = x0.data().clone();
    let x1d = x1.data();
    ndarray::Zip::indexed(&mut data).for_each(|idx, v| {
        *v = (1.0 - a) * *v + a * x1d[idx];
    });
    if sigma > 0.0 {
        for v in data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    ImageTensor::new(data)
}

/// One-pair training objective: draw `t ~ U[0, 1]`, form the bridge state,
/// and return the mean squared error of the prediction against `x0`.
/// No t-dependent weighting is applied.
pub fn training_loss<R: Rng + ?Sized>(
    predictor: &dyn Denoiser,
    x0: &ImageTensor,
    y: &ImageTensor,
    cfg: &BridgeConfig,
    rng: &mut R,
) -> Result<f64> {
    check_same_shape(x0, y)?;
    let t: f64 = rng.random_range(0.0..=1.0);
    let x_t = bridge_state(x0, y, t, cfg, rng)?;
    let pred = predictor.predict(std::slice::from_ref(&x_t), &[t])?;
    let pred = pred
        .into_iter()
        .next()
        .ok_or_else(|| Error::invalid("predictor returned an empty batch"))?;
    check_same_shape(&pred, x0)?;
    let n = x0.data().len() as f64;
    let mut acc = 0.0;
    ndarray::Zip::from(pred.data())
        .and(x0.data())
        .for_each(|p, x| {
            let d = p - x;
            acc += d * d;
        });
    Ok(acc / n)
}

/// One refinement step `x_s = (1 - s/t) x0_hat + (s/t) x_t`, `0 <= s < t`.
pub fn ddb_step(x_t: &ImageTensor, t: f64, s: f64, x0_hat: &ImageTensor) -> Result<ImageTensor> {
    check_same_shape(x_t, x0_hat)?;
    if t <= 0.0 || t > 1.0 {
        return Err(Error::invalid(format!("t must be in (0, 1], got {t}")));
    }
    if s < 0.0 || s >= t {
        return Err(Error::invalid(format!("s must satisfy 0 <= s < t, got s={s}, t={t}")));
    }
    let keep = s / t;
    let pull = 1.0 - keep;
    let mut data = x0_hat.data().clone();
    let xtd = x_t.data();
    ndarray::Zip::indexed(&mut data).for_each(|idx, v| {
        *v = pull * *v + keep * xtd[idx];
    });
    ImageTensor::new(data)
}

/// Iterative refinement: start at the measurement, pull toward the
/// predicted posterior mean along the schedule, and clamp only the final
/// output. The last knot is 0, so the final step returns the last
/// prediction directly.
pub fn sample(
    predictor: &dyn Denoiser,
    y: &ImageTensor,
    schedule: &TimestepSchedule,
) -> Result<ImageTensor> {
    let mut x = y.clone();
    let steps = schedule.steps();
    for k in 0..schedule.nfe() {
        let t = steps[k];
        let s = steps[k + 1];
        let pred = predictor.predict(std::slice::from_ref(&x), &[t])?;
        let x0_hat = pred
            .into_iter()
            .next()
            .ok_or_else(|| Error::invalid("predictor returned an empty batch"))?;
        check_same_shape(&x0_hat, y)?;
        x = if s == 0.0 {
            x0_hat
        } else {
            ddb_step(&x, t, s, &x0_hat)?
        };
    }
    Ok(x.clamped())
}
