//! A toy multipath MIMO-OFDM channel whose CFR depends on the figure's pose.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pose::Pose;
use crate::csi::{ComplexCfr, CsiDims, CsiSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_sub: usize,
    /// Subcarrier spacing in Hz.
    pub carrier_spacing: f64,
    /// Fixed reflections as `(delay in seconds, gain)`.
    pub static_paths: Vec<(f64, f64)>,
    /// Upper bound on the body reflection's gain.
    pub body_path_gain: f64,
    /// AWGN standard deviation on each of re and im.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_rx: 3,
            n_tx: 3,
            n_sub: 30,
            carrier_spacing: 625e3,
            static_paths: vec![(0.0, 40.0), (25e-9, 18.0), (70e-9, 9.0)],
            body_path_gain: 25.0,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || self.n_tx == 0 || self.n_sub == 0 {
            return Err(Error::InvalidConfig("antenna and subcarrier counts must be >= 1".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.static_paths.is_empty() {
            return Err(Error::InvalidConfig("at least one static path is required".into()));
        }
        let finite = self.carrier_spacing.is_finite()
            && self.body_path_gain.is_finite()
            && self.static_paths.iter().all(|(d, g)| d.is_finite() && g.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("scene parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> CsiDims {
        CsiDims {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            n_sub: self.n_sub,
        }
    }

    /// Frequency offset of subcarrier `k` (0-based index, first subcarrier
    /// one spacing above the reference).
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.carrier_spacing
    }

    /// Sum of all path gain magnitudes, an upper bound on noiseless
    /// amplitude.
    pub fn gain_bound(&self) -> f64 {
        self.static_paths.iter().map(|(_, g)| g.abs()).sum::<f64>() + self.body_path_gain.abs()
    }
}

const BASE_DELAY: f64 = 40e-9;
const DELAY_PER_X: f64 = 60e-9;
const DELAY_PER_Y: f64 = 40e-9;
const DELAY_PER_SPREAD: f64 = 80e-9;
/// Relative change of the position terms across neighbouring antennas.
const ANTENNA_SKEW: f64 = 0.3;

/// Delay and gain of the body reflection between antennas `rx` and `tx`.
///
/// Both are smooth in the pose centroid and limb spread; antenna index
/// skews the position terms so that different links see different delays.
pub fn body_path(pose: &Pose, cfg: &SceneConfig, rx: usize, tx: usize) -> (f64, f64) {
    let [cx, cy] = pose.centroid();
    let spread = pose.limb_spread();
    let a_rx = rx as f64 - (cfg.n_rx as f64 - 1.0) / 2.0;
    let a_tx = tx as f64 - (cfg.n_tx as f64 - 1.0) / 2.0;
    let delay = BASE_DELAY
        + DELAY_PER_X * (cx - 0.5) * (1.0 + ANTENNA_SKEW * a_rx)
        + DELAY_PER_Y * (cy - 0.5) * (1.0 + ANTENNA_SKEW * a_tx)
        + DELAY_PER_SPREAD * spread;
    let gain = cfg.body_path_gain * (0.5 + 0.5 * (4.0 * spread).tanh());
    (delay, gain)
}

fn path_sum(paths: impl Iterator<Item = (f64, f64)>, freq: f64) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for (delay, gain) in paths {
        let phi = -std::f64::consts::TAU * freq * delay;
        re += gain * phi.cos();
        im += gain * phi.sin();
    }
    (re, im)
}

/// Noiseless CFR for one pose, laid out `rx × tx × sub`.
pub fn pose_cfr(pose: &Pose, cfg: &SceneConfig) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(cfg.dims().per_packet());
    for rx in 0..cfg.n_rx {
        for tx in 0..cfg.n_tx {
            let body = body_path(pose, cfg, rx, tx);
            for k in 0..cfg.n_sub {
                let paths = cfg.static_paths.iter().copied().chain(std::iter::once(body));
                out.push(path_sum(paths, cfg.subcarrier_freq(k)));
            }
        }
    }
    out
}

/// CSI for a pose sequence with `packets_per_frame` packets per pose.
///
/// Packet `j` of frame `t` sees the pose interpolated a fraction
/// `j / packets_per_frame` of the way to pose `t + 1`; the last frame holds
/// its pose.
pub fn synthesize_csi(poses: &[Pose], cfg: &SceneConfig, packets_per_frame: usize) -> Result<CsiSequence> {
    cfg.validate()?;
    if poses.is_empty() || packets_per_frame == 0 {
        return Err(Error::InvalidConfig("need at least one pose and one packet per frame".into()));
    }
    let n_pkt = poses.len() * packets_per_frame;
    let per_packet = cfg.dims().per_packet();
    let mut values = Vec::with_capacity(n_pkt * per_packet);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..n_pkt {
        let t = i / packets_per_frame;
        let u = (i % packets_per_frame) as f64 / packets_per_frame as f64;
        let next = poses.get(t + 1).unwrap_or(&poses[t]);
        let pose = poses[t].lerp(next, u);
        for (re, im) in pose_cfr(&pose, cfg) {
            let (nr, ni) = if cfg.noise_std > 0.0 {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (a * cfg.noise_std, b * cfg.noise_std)
            } else {
                (0.0, 0.0)
            };
            values.push(ComplexCfr { re: re + nr, im: im + ni });
        }
    }
    CsiSequence::new(cfg.dims(), n_pkt, values, None)
}
