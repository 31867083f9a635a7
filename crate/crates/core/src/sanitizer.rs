//! Amplitude sanitization: a Hampel identifier along the packet axis of
//! every antenna/subcarrier series, followed by a median across antenna
//! pairs that condenses the capture into a `P × K` matrix.

use rayon::prelude::*;

use crate::csi::AmplitudeTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelConfig {
    window: usize,
    n_sigmas: f64,
}

impl HampelConfig {
    /// `window` must be odd and at least 3; `n_sigmas` must be positive
    /// (infinity is allowed and turns the filter into the identity).
    pub fn new(window: usize, n_sigmas: f64) -> Result<Self> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "hampel window must be odd and >= 3, got {window}"
            )));
        }
        if !(n_sigmas > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "hampel n_sigmas must be > 0, got {n_sigmas}"
            )));
        }
        Ok(Self { window, n_sigmas })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_sigmas(&self) -> f64 {
        self.n_sigmas
    }

    fn half(&self) -> usize {
        self.window / 2
    }
}

impl Default for HampelConfig {
    /// 51 packets (the nearest odd width to 50) and 3 MADs.
    fn default() -> Self {
        Self {
            window: 51,
            n_sigmas: 3.0,
        }
    }
}

/// Sanitized `P × K` amplitudes, row-major by packet.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    n_pkt: usize,
    n_sub: usize,
    data: Vec<f64>,
}

impl AmplitudeMatrix {
    pub fn new(n_pkt: usize, n_sub: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_pkt * n_sub {
            return Err(Error::ShapeMismatch(format!(
                "amplitude matrix {n_pkt}x{n_sub} needs {} values, got {}",
                n_pkt * n_sub,
                data.len()
            )));
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSequence(
                "amplitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self { n_pkt, n_sub, data })
    }

    /// `(P, K)`
    pub fn shape(&self) -> (usize, usize) {
        (self.n_pkt, self.n_sub)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.data[p * self.n_sub + k]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.n_sub..(p + 1) * self.n_sub]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_sub.max(1))
    }
}

/// Element at 1-based rank `ceil(n/2)` of the sorted values: the middle
/// element for odd `n`, the lower middle for even `n`.
fn window_median(sorted: &[f64]) -> f64 {
    sorted[sorted.len().div_ceil(2) - 1]
}

fn sort(v: &mut [f64]) {
    v.sort_by(f64::total_cmp);
}

/// Local median and MAD of the window centred on `p`, clipped at the
/// series boundaries.
fn local_stats(series: &[f64], p: usize, half: usize, buf: &mut Vec<f64>) -> (f64, f64) {
    let lo = p.saturating_sub(half);
    let hi = (p + half + 1).min(series.len());
    buf.clear();
    buf.extend_from_slice(&series[lo..hi]);
    sort(buf);
    let mu = window_median(buf);
    for v in buf.iter_mut() {
        *v = (*v - mu).abs();
    }
    sort(buf);
    (mu, window_median(buf))
}

/// Replaces every sample outside `[μ − λσ, μ + λσ]` of its local window
/// with the most recent preceding inlier.
///
/// Outliers are identified on the raw series first, then replaced. A
/// leading outlier that has no preceding inlier takes its window median.
/// A window with zero MAD accepts only values equal to its median.
pub fn hampel_filter(series: &[f64], cfg: &HampelConfig) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let half = cfg.half();
    let lambda = cfg.n_sigmas;
    let mut buf = Vec::with_capacity(cfg.window);
    let mut out = Vec::with_capacity(series.len());
    let mut last_inlier: Option<f64> = None;
    for (p, &x) in series.iter().enumerate() {
        let (mu, sigma) = local_stats(series, p, half, &mut buf);
        // compared as a deviation so a sample that is itself the MAD element
        // is not lost to rounding in mu + sigma
        let outlier = (x - mu).abs() > lambda * sigma;
        if outlier {
            out.push(last_inlier.unwrap_or(mu));
        } else {
            last_inlier = Some(x);
            out.push(x);
        }
    }
    Ok(out)
}

/// Applies [`hampel_filter`] independently to every `(θ, γ, κ)` series.
pub fn sanitize(amps: &AmplitudeTensor, cfg: &HampelConfig) -> Result<AmplitudeTensor> {
    let p = amps.n_pkt();
    if p == 0 {
        return Err(Error::EmptySeries);
    }
    let mut data = vec![0.0; amps.data().len()];
    data.par_chunks_mut(p)
        .zip(amps.data().par_chunks(p))
        .try_for_each(|(dst, src)| -> Result<()> {
            dst.copy_from_slice(&hampel_filter(src, cfg)?);
            Ok(())
        })?;
    Ok(AmplitudeTensor::from_series(amps.dims(), p, data))
}

/// Conventional median: mean of the two middle order statistics for an
/// even count.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    sort(values);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median across the `Θ·Γ` transmissions of every `(p, κ)` cell.
pub fn condense(sanitized: &AmplitudeTensor) -> AmplitudeMatrix {
    let d = sanitized.dims();
    let p_count = sanitized.n_pkt();
    let mut data = vec![0.0; p_count * d.n_sub];
    let mut cell = Vec::with_capacity(d.n_rx * d.n_tx);
    for p in 0..p_count {
        for k in 0..d.n_sub {
            cell.clear();
            for rx in 0..d.n_rx {
                for tx in 0..d.n_tx {
                    cell.push(sanitized.get(rx, tx, k, p));
                }
            }
            data[p * d.n_sub + k] = median(&mut cell);
        }
    }
    AmplitudeMatrix {
        n_pkt: p_count,
        n_sub: d.n_sub,
        data,
    }
}

/// The full chain: amplitude extraction, Hampel filtering and condensation.
pub fn sanitize_sequence(
    seq: &crate::csi::CsiSequence,
    cfg: &HampelConfig,
) -> Result<AmplitudeMatrix> {
    let amps = crate::csi::extract_amplitudes(seq);
    Ok(condense(&sanitize(&amps, cfg)?))
}
