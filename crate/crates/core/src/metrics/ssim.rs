//! Gaussian-windowed SSIM on `[0, 1]` gray frames.

use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering: output is `(h − 10) × (w − 10)`.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| taps[k] * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two `h × w` frames with unit dynamic range.
pub fn ssim(x: &[f64], g: &[f64], h: usize, w: usize) -> Result<f64> {
    if x.len() != h * w || g.len() != h * w {
        return Err(Error::ShapeMismatch(format!("ssim: frames must hold {h}x{w} values")));
    }
    if h < WINDOW || w < WINDOW {
        return Err(Error::ShapeMismatch(format!("ssim: frames must be at least {WINDOW}x{WINDOW}")));
    }
    let taps = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let mu_x = filter_valid(x, h, w, &taps);
    let mu_g = filter_valid(g, h, w, &taps);
    let e_xx = filter_valid(&prod(x, x), h, w, &taps);
    let e_gg = filter_valid(&prod(g, g), h, w, &taps);
    let e_xg = filter_valid(&prod(x, g), h, w, &taps);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, mg) = (mu_x[i], mu_g[i]);
        let vx = e_xx[i] - mx * mx;
        let vg = e_gg[i] - mg * mg;
        let cov = e_xg[i] - mx * mg;
        total += ((2.0 * mx * mg + C1) * (2.0 * cov + C2)) / ((mx * mx + mg * mg + C1) * (vx + vg + C2));
    }
    Ok(total / n as f64)
}
