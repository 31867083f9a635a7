//! Channel frequency response (CFR) values and per-packet CSI matrices.

use crate::error::{Error, Result};

/// One complex CFR sample `H = re + j·im` for a single subcarrier and
/// antenna pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexCfr {
    pub re: f64,
    pub im: f64,
}

impl ComplexCfr {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { re, im })
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Modulus `|H|`.
pub fn cfr_amplitude(h: ComplexCfr) -> f64 {
    h.re.hypot(h.im)
}

/// Phase `∠H` in `(-π, π]`.
pub fn cfr_phase(h: ComplexCfr) -> Result<f64> {
    if h.re == 0.0 && h.im == 0.0 {
        return Err(Error::ZeroCfr);
    }
    let phase = h.im.atan2(h.re);
    // atan2(-0.0, -1) yields -π; fold it onto the closed end of the range.
    if phase == -std::f64::consts::PI {
        Ok(std::f64::consts::PI)
    } else {
        Ok(phase)
    }
}

/// Antenna and subcarrier dimensions shared by every packet of a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CsiDims {
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_sub: usize,
}

impl CsiDims {
    pub fn per_packet(&self) -> usize {
        self.n_rx * self.n_tx * self.n_sub
    }
}

/// An ordered capture of `P` packets, each a `Θ × Γ × K` CFR matrix.
///
/// Values are stored packet-major, then receive antenna, transmit antenna
/// and subcarrier (fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    dims: CsiDims,
    n_pkt: usize,
    values: Vec<ComplexCfr>,
    timestamps: Option<Vec<u64>>,
}

impl CsiSequence {
    pub fn new(
        dims: CsiDims,
        n_pkt: usize,
        values: Vec<ComplexCfr>,
        timestamps: Option<Vec<u64>>,
    ) -> Result<Self> {
        if dims.n_rx == 0 || dims.n_tx == 0 || dims.n_sub == 0 || n_pkt == 0 {
            return Err(Error::InvalidSequence(format!(
                "all dimensions must be >= 1 (rx={}, tx={}, sub={}, pkt={})",
                dims.n_rx, dims.n_tx, dims.n_sub, n_pkt
            )));
        }
        let expected = n_pkt * dims.per_packet();
        if values.len() != expected {
            return Err(Error::InvalidSequence(format!(
                "expected {expected} CFR values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n_pkt {
                return Err(Error::InvalidSequence(format!(
                    "expected {n_pkt} timestamps, got {}",
                    ts.len()
                )));
            }
            if ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidSequence(
                    "timestamps must be non-decreasing".into(),
                ));
            }
        }
        Ok(Self {
            dims,
            n_pkt,
            values,
            timestamps,
        })
    }

    /// Builds a sequence by evaluating `f(p, rx, tx, sub)` for every cell.
    pub fn from_fn(
        dims: CsiDims,
        n_pkt: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> ComplexCfr,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_pkt * dims.per_packet());
        for p in 0..n_pkt {
            for rx in 0..dims.n_rx {
                for tx in 0..dims.n_tx {
                    for k in 0..dims.n_sub {
                        values.push(f(p, rx, tx, k));
                    }
                }
            }
        }
        Self::new(dims, n_pkt, values, None)
    }

    pub fn dims(&self) -> CsiDims {
        self.dims
    }

    pub fn n_pkt(&self) -> usize {
        self.n_pkt
    }

    pub fn values(&self) -> &[ComplexCfr] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[u64]> {
        self.timestamps.as_deref()
    }

    pub fn with_timestamps(mut self, timestamps: Option<Vec<u64>>) -> Result<Self> {
        let values = std::mem::take(&mut self.values);
        Self::new(self.dims, self.n_pkt, values, timestamps)
    }

    pub fn get(&self, p: usize, rx: usize, tx: usize, sub: usize) -> ComplexCfr {
        let d = self.dims;
        self.values[((p * d.n_rx + rx) * d.n_tx + tx) * d.n_sub + sub]
    }

    /// The `Θ × Γ × K` matrix of packet `p`.
    pub fn packet(&self, p: usize) -> &[ComplexCfr] {
        let n = self.dims.per_packet();
        &self.values[p * n..(p + 1) * n]
    }
}

/// Amplitudes with shape `(Θ, Γ, K, P)`; each `(θ, γ, κ)` series over the
/// packet axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTensor {
    dims: CsiDims,
    n_pkt: usize,
    data: Vec<f64>,
}

impl AmplitudeTensor {
    pub fn new(dims: CsiDims, n_pkt: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.per_packet() * n_pkt {
            return Err(Error::ShapeMismatch(format!(
                "amplitude tensor needs {} values, got {}",
                dims.per_packet() * n_pkt,
                data.len()
            )));
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSequence(
                "amplitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self { dims, n_pkt, data })
    }

    pub fn dims(&self) -> CsiDims {
        self.dims
    }

    pub fn n_pkt(&self) -> usize {
        self.n_pkt
    }

    /// `(Θ, Γ, K, P)`
    pub fn shape(&self) -> [usize; 4] {
        [self.dims.n_rx, self.dims.n_tx, self.dims.n_sub, self.n_pkt]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, rx: usize, tx: usize, sub: usize, p: usize) -> f64 {
        self.data[self.series_offset(rx, tx, sub) + p]
    }

    pub fn series(&self, rx: usize, tx: usize, sub: usize) -> &[f64] {
        let off = self.series_offset(rx, tx, sub);
        &self.data[off..off + self.n_pkt]
    }

    /// Iterates over every packet-axis series in `(θ, γ, κ)` order.
    pub fn all_series(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_pkt)
    }

    pub(crate) fn series_offset(&self, rx: usize, tx: usize, sub: usize) -> usize {
        ((rx * self.dims.n_tx + tx) * self.dims.n_sub + sub) * self.n_pkt
    }

    pub(crate) fn from_series(dims: CsiDims, n_pkt: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.per_packet() * n_pkt);
        Self { dims, n_pkt, data }
    }
}

/// Elementwise modulus of every CFR value.
pub fn extract_amplitudes(seq: &CsiSequence) -> AmplitudeTensor {
    let d = seq.dims();
    let p_count = seq.n_pkt();
    let mut data = vec![0.0; d.per_packet() * p_count];
    for p in 0..p_count {
        for rx in 0..d.n_rx {
            for tx in 0..d.n_tx {
                for k in 0..d.n_sub {
                    let off = ((rx * d.n_tx + tx) * d.n_sub + k) * p_count;
                    data[off + p] = cfr_amplitude(seq.get(p, rx, tx, k));
                }
            }
        }
    }
    AmplitudeTensor::from_series(d, p_count, data)
}
