//! Seeded synthetic fundus-like phantoms.
//!
//! The generator produces images with the gross structure of a fundus
//! photograph: a warm circular field with vignetting, a bright optic disc,
//! dark branching vessels, a macular shadow, and mild texture noise. They
//! are not anatomically faithful; they exist so that the pipeline can be
//! trained and evaluated end to end without patient data.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image::{gaussian_blur, ImageTensor};

/// Generates one phantom. Same `(height, width, seed)` always produces the
/// same image.
pub fn fundus_phantom(height: usize, width: usize, seed: u64) -> Result<ImageTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = height as f64;
    let w = width as f64;
    let min_dim = h.min(w);

    let field_r = rng.random_range(0.55..=0.80);
    let field_g = rng.random_range(0.26..=0.44);
    let field_b = rng.random_range(0.08..=0.20);
    let cy = h / 2.0 + rng.random_range(-0.02..=0.02) * h;
    let cx = w / 2.0 + rng.random_range(-0.02..=0.02) * w;
    let field_radius = 0.48 * min_dim;
    let vignette = rng.random_range(0.25..=0.45);

    // Optic disc position and size.
    let disc_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let disc_dist = rng.random_range(0.35..=0.6) * field_radius;
    let disc_y = cy + disc_dist * disc_angle.sin();
    let disc_x = cx + disc_dist * disc_angle.cos();
    let disc_radius = rng.random_range(0.07..=0.11) * min_dim;

    // Macula roughly opposite the disc.
    let mac_y = cy - 0.5 * disc_dist * disc_angle.sin();
    let mac_x = cx - 0.5 * disc_dist * disc_angle.cos();
    let mac_radius = rng.random_range(0.10..=0.16) * min_dim;
    let mac_depth = rng.random_range(0.10..=0.22);

    // Vessel strength plane: 1 at a vessel centerline, falling off with
    // distance, built by stamping discs along random walks from the disc.
    let mut vessels: Array2<f64> = Array2::zeros((height, width));
    let n_vessels = rng.random_range(7..=12usize);
    for _ in 0..n_vessels {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(0.7..=1.3) * field_radius;
        let width_px = rng.random_range(0.015..=0.03) * min_dim;
        walk_vessel(
            &mut vessels,
            &mut rng,
            (disc_y, disc_x),
            angle,
            len,
            width_px,
            1,
        );
    }

    let noise = Normal::new(0.0, 0.012).expect("valid std");
    let mut img = ImageTensor::from_fn(height, width, |_, _, _| 0.0)?;
    {
        let data = img.data_mut();
        for y in 0..height {
            for x in 0..width {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let d = (dy * dy + dx * dx).sqrt();
                let (mut r, mut g, mut b);
                if d <= field_radius {
                    let shade = 1.0 - vignette * (d / field_radius).powi(2);
                    r = field_r * shade;
                    g = field_g * shade;
                    b = field_b * shade;

                    // Macular shadow.
                    let dm = ((y as f64 - mac_y).powi(2) + (x as f64 - mac_x).powi(2)).sqrt();
                    let mac = mac_depth * (-0.5 * (dm / mac_radius).powi(2)).exp();
                    r *= 1.0 - mac;
                    g *= 1.0 - mac;
                    b *= 1.0 - mac;

                    // Dark vessels.
                    let v = vessels[[y, x]].min(1.0);
                    r *= 1.0 - 0.50 * v;
                    g *= 1.0 - 0.60 * v;
                    b *= 1.0 - 0.45 * v;

                    // Bright optic disc with a soft edge.
                    let dd = ((y as f64 - disc_y).powi(2) + (x as f64 - disc_x).powi(2)).sqrt();
                    let disc = smoothstep(1.1, 0.7, dd / disc_radius);
                    r = r + disc * (0.95 - r);
                    g = g + disc * (0.82 - g);
                    b = b + disc * (0.45 - b);
                } else {
                    // Dark surround outside the circular field.
                    r = 0.02;
                    g = 0.02;
                    b = 0.02;
                }
                let n: f64 = noise.sample(&mut rng);
                data[[y, x, 0]] = (r + n).clamp(0.0, 1.0);
                data[[y, x, 1]] = (g + n).clamp(0.0, 1.0);
                data[[y, x, 2]] = (b + n).clamp(0.0, 1.0);
            }
        }
    }
    // Slight smoothing so edges are not aliased.
    Ok(gaussian_blur(&img, 0.006 * min_dim).clamped())
}

fn walk_vessel(
    plane: &mut Array2<f64>,
    rng: &mut ChaCha8Rng,
    start: (f64, f64),
    mut angle: f64,
    length: f64,
    width: f64,
    depth: usize,
) {
    let (h, w) = plane.dim();
    let mut y = start.0;
    let mut x = start.1;
    let steps = length.ceil() as usize;
    for step in 0..steps {
        angle += rng.random_range(-0.25..=0.25);
        y += angle.sin();
        x += angle.cos();
        if y < -width || x < -width || y > h as f64 + width || x > w as f64 + width {
            break;
        }
        // Taper toward the tip.
        let taper = 1.0 - 0.6 * step as f64 / steps as f64;
        stamp(plane, y, x, width * taper);
        // Occasional branch.
        if depth < 3 && step > steps / 4 && rng.random_bool(0.02) {
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            walk_vessel(
                plane,
                rng,
                (y, x),
                angle + side * rng.random_range(0.4..=0.9),
                length * 0.5,
                width * 0.7,
                depth + 1,
            );
        }
    }
}

fn stamp(plane: &mut Array2<f64>, cy: f64, cx: f64, radius: f64) {
    let (h, w) = plane.dim();
    let r = radius.max(0.7);
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(h.saturating_sub(1));
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if d < r {
                let s = 1.0 - (d / r) * (d / r);
                if s > plane[[y, x]] {
                    plane[[y, x]] = s;
                }
            }
        }
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}
