//! FSIM: phase congruency from a log-Gabor filter bank combined with
//! Scharr gradient magnitude, on the `[0, 255]` scale.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

const N_SCALE: usize = 4;
const N_ORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;
const T1: f64 = 0.85;
const T2: f64 = 160.0;

/// In-place 2-D FFT of a row-major `rows × cols` grid. The inverse is
/// scaled by `1 / (rows · cols)`.
fn fft2(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for r in data.chunks_exact_mut(cols) {
        row_fft.process(r);
    }
    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    if inverse {
        let s = 1.0 / (rows * cols) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Normalized frequency coordinates along one axis, already shifted so the
/// zero frequency sits at index 0.
fn freq_axis(n: usize) -> Vec<f64> {
    let centered: Vec<f64> = if n % 2 == 1 {
        let h = (n - 1) as f64 / 2.0;
        (0..n).map(|i| (i as f64 - h) / (n - 1).max(1) as f64).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    };
    // undo the centering: index 0 holds the zero frequency
    let shift = n / 2;
    (0..n).map(|i| centered[(i + shift) % n]).collect()
}

/// Median with even counts averaging the two middle values.
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map of an `h × w` image.
pub fn phase_congruency(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let n = h * w;
    let mut spectrum: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spectrum, h, w, false);

    let xs = freq_axis(w);
    let ys = freq_axis(h);
    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (xs[c], ys[r]);
            let i = r * w + c;
            radius[i] = x.hypot(y);
            let theta = (-y).atan2(x);
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }
    let lowpass: Vec<f64> = radius.iter().map(|&r| 1.0 / (1.0 + (r / 0.45).powi(30))).collect();
    radius[0] = 1.0;

    let log_sigma = SIGMA_ON_F.ln();
    let log_gabor: Vec<Vec<f64>> = (0..N_SCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / (2.0 * log_sigma * log_sigma)).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / N_ORIENT as f64 / D_THETA_ON_SIGMA;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    for o in 0..N_ORIENT {
        let angle = o as f64 * PI / N_ORIENT as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dt = ds.atan2(dc).abs();
                (-dt * dt / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut responses = Vec::with_capacity(N_SCALE);
        let mut spatial_filters = Vec::with_capacity(N_SCALE);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            let mut spatial: Vec<Complex64> = filter.iter().map(|&f| Complex64::new(f, 0.0)).collect();
            fft2(&mut spatial, h, w, true);
            let scale = (n as f64).sqrt();
            spatial_filters.push(spatial.iter().map(|v| v.re * scale).collect::<Vec<f64>>());

            let mut eo: Vec<Complex64> = spectrum.iter().zip(&filter).map(|(z, f)| z * f).collect();
            fft2(&mut eo, h, w, true);
            for i in 0..n {
                sum_an[i] += eo[i].norm();
                sum_e[i] += eo[i].re;
                sum_o[i] += eo[i].im;
            }
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            responses.push(eo);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x_energy = sum_e[i].hypot(sum_o[i]) + EPSILON;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            for r in &responses {
                let (e, od) = (r[i].re, r[i].im);
                energy[i] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        let median_e2n = median(responses[0].iter().map(|z| z.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };
        let sum_an2: f64 = spatial_filters.iter().flatten().map(|v| v * v).sum();
        let mut sum_ai_aj = 0.0;
        for si in 0..N_SCALE {
            for sj in si + 1..N_SCALE {
                sum_ai_aj += spatial_filters[si]
                    .iter()
                    .zip(&spatial_filters[sj])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_ai_aj;
        let tau = (noise_energy2 / 2.0).max(0.0).sqrt();
        let noise_mean = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (noise_mean + NOISE_K * noise_sigma) / 1.7;
        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

/// Scharr gradient magnitude with zero padding at the border.
fn gradient_magnitude(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            img[y as usize * w + x as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (3.0 * (at(y - 1, x + 1) - at(y - 1, x - 1))
                + 10.0 * (at(y, x + 1) - at(y, x - 1))
                + 3.0 * (at(y + 1, x + 1) - at(y + 1, x - 1)))
                / 16.0;
            let gy = (3.0 * (at(y + 1, x - 1) - at(y - 1, x - 1))
                + 10.0 * (at(y + 1, x) - at(y - 1, x))
                + 3.0 * (at(y + 1, x + 1) - at(y - 1, x + 1)))
                / 16.0;
            out[(y as usize) * w + x as usize] = gx.hypot(gy);
        }
    }
    out
}

/// FSIM of two `h × w` gray frames in `[0, 1]`.
pub fn fsim(x: &[f64], g: &[f64], h: usize, w: usize) -> Result<f64> {
    if x.len() != h * w || g.len() != h * w || h == 0 || w == 0 {
        return Err(Error::ShapeMismatch(format!("fsim: frames must hold {h}x{w} values")));
    }
    let x: Vec<f64> = x.iter().map(|v| v * 255.0).collect();
    let g: Vec<f64> = g.iter().map(|v| v * 255.0).collect();
    let pc1 = phase_congruency(&x, h, w);
    let pc2 = phase_congruency(&g, h, w);
    let g1 = gradient_magnitude(&x, h, w);
    let g2 = gradient_magnitude(&g, h, w);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut unweighted = 0.0;
    for i in 0..h * w {
        let s_pc = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        let s_g = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        let pcm = pc1[i].max(pc2[i]);
        num += s_g * s_pc * pcm;
        den += pcm;
        unweighted += s_g * s_pc;
    }
    // featureless frames carry no phase-congruency weight at all
    if den > 0.0 {
        Ok(num / den)
    } else {
        Ok(unweighted / (h * w) as f64)
    }
}
