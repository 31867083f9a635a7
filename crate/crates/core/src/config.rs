//! `key = value` run configuration shared by every command.
//!
//! Each key has a default, so an empty file is a valid configuration.
//! Lines starting with `#` are comments. Unknown or repeated keys are
//! rejected and the finished configuration is validated as a whole.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_THRESHOLDS;
use crate::network::ModelConfig;
use crate::sanitizer::HampelConfig;
use crate::synthetic::{ClipKind, DatasetSpec, SceneConfig};
use crate::training::{LossWeights, OptimConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub dataset: DatasetSpec,
    /// Layer plan; clip and signal dimensions come from `dataset`.
    pub model: ModelConfig,
    pub optim: OptimConfig,
    /// `None` picks the clip kind's default epoch budget.
    pub epochs: Option<usize>,
    pub weights: LossWeights,
    pub hampel: HampelConfig,
    pub train_fraction: f64,
    pub thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            dataset: DatasetSpec::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            epochs: None,
            weights: LossWeights::default(),
            hampel: HampelConfig::default(),
            train_fraction: 0.75,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Parse(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn show_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every recognized key, in file order.
    pub const KEYS: [&'static str; 38] = [
        "scene.n_rx",
        "scene.n_tx",
        "scene.n_sub",
        "scene.carrier_spacing",
        "scene.static_paths",
        "scene.body_path_gain",
        "scene.noise_std",
        "scene.seed",
        "dataset.samples",
        "dataset.frames",
        "dataset.packets",
        "dataset.height",
        "dataset.width",
        "dataset.kind",
        "model.hidden",
        "model.widths",
        "model.kernel",
        "model.stride",
        "model.pad",
        "model.leaky_slope",
        "model.bn_momentum",
        "model.bn_eps",
        "optim.lr",
        "optim.beta1",
        "optim.beta2",
        "optim.eps",
        "optim.epochs",
        "optim.init_std",
        "optim.seed",
        "optim.batch_size",
        "loss.w_adv",
        "loss.w_y",
        "loss.w_v",
        "loss.w_s",
        "hampel.window",
        "hampel.nsigma",
        "train.fraction",
        "metrics.thresholds",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Parse(format!("line {}: duplicate key {key}", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key = value` assignment without validating the result.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scene.n_rx" => self.scene.n_rx = num(key, value)?,
            "scene.n_tx" => self.scene.n_tx = num(key, value)?,
            "scene.n_sub" => self.scene.n_sub = num(key, value)?,
            "scene.carrier_spacing" => self.scene.carrier_spacing = num(key, value)?,
            "scene.static_paths" => {
                self.scene.static_paths = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|p| {
                            let (d, g) = p.trim().split_once(':').ok_or_else(|| bad(key, value))?;
                            Ok((num(key, d)?, num(key, g)?))
                        })
                        .collect::<Result<_>>()?
                }
            }
            "scene.body_path_gain" => self.scene.body_path_gain = num(key, value)?,
            "scene.noise_std" => self.scene.noise_std = num(key, value)?,
            "scene.seed" => self.scene.seed = num(key, value)?,
            "dataset.samples" => self.dataset.samples = num(key, value)?,
            "dataset.frames" => self.dataset.frames = num(key, value)?,
            "dataset.packets" => self.dataset.packets = num(key, value)?,
            "dataset.height" => self.dataset.height = num(key, value)?,
            "dataset.width" => self.dataset.width = num(key, value)?,
            "dataset.kind" => self.dataset.kind = value.parse()?,
            "model.hidden" => self.model.hidden = num(key, value)?,
            "model.widths" => self.model.widths = list(key, value)?,
            "model.kernel" => self.model.kernel = num(key, value)?,
            "model.stride" => self.model.stride = num(key, value)?,
            "model.pad" => self.model.pad = num(key, value)?,
            "model.leaky_slope" => self.model.leaky_slope = num(key, value)?,
            "model.bn_momentum" => self.model.bn_momentum = num(key, value)?,
            "model.bn_eps" => self.model.bn_eps = num(key, value)?,
            "optim.lr" => self.optim.lr = num(key, value)?,
            "optim.beta1" => self.optim.beta1 = num(key, value)?,
            "optim.beta2" => self.optim.beta2 = num(key, value)?,
            "optim.eps" => self.optim.eps = num(key, value)?,
            "optim.epochs" => {
                self.epochs = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "optim.init_std" => self.optim.init_std = num(key, value)?,
            "optim.seed" => self.optim.seed = num(key, value)?,
            "optim.batch_size" => self.optim.batch_size = num(key, value)?,
            "loss.w_adv" => self.weights.w_adv = num(key, value)?,
            "loss.w_y" => self.weights.w_y = num(key, value)?,
            "loss.w_v" => self.weights.w_v = num(key, value)?,
            "loss.w_s" => self.weights.w_s = num(key, value)?,
            "hampel.window" => self.hampel = HampelConfig::new(num(key, value)?, self.hampel.n_sigmas())?,
            "hampel.nsigma" => self.hampel = HampelConfig::new(self.hampel.window(), num(key, value)?)?,
            "train.fraction" => self.train_fraction = num(key, value)?,
            "metrics.thresholds" => self.thresholds = list(key, value)?,
            _ => return Err(Error::Parse(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// The model configuration for the dataset settings.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.dataset.kind,
            frames: self.dataset.frames,
            height: self.dataset.height,
            width: self.dataset.width,
            packets: self.dataset.packets,
            subcarriers: self.scene.n_sub,
            ..self.model.clone()
        }
    }

    /// Optimizer settings with the epoch budget resolved for `kind`.
    pub fn optim_for(&self, kind: ClipKind) -> OptimConfig {
        OptimConfig {
            epochs: self.epochs.unwrap_or(OptimConfig::for_kind(kind).epochs),
            ..self.optim
        }
    }

    pub fn train_config(&self, kind: ClipKind) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            optim: self.optim_for(kind),
            weights: self.weights,
            hampel: self.hampel,
            train_fraction: self.train_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.dataset.samples == 0 {
            return Err(Error::InvalidConfig("dataset.samples must be >= 1".into()));
        }
        if self.dataset.frames == 0 || !self.dataset.packets.is_multiple_of(self.dataset.frames) {
            return Err(Error::InvalidConfig(format!(
                "dataset.packets {} is not a multiple of dataset.frames {}",
                self.dataset.packets, self.dataset.frames
            )));
        }
        self.model_config().validate()?;
        self.optim.validate()?;
        self.weights.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidConfig("train.fraction must lie in (0, 1]".into()));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidConfig("metrics.thresholds must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.scene;
        let d = &self.dataset;
        let m = &self.model;
        let o = &self.optim;
        let w = &self.weights;
        let paths: Vec<String> = s.static_paths.iter().map(|(d, g)| format!("{d}:{g}")).collect();
        let values = [
            s.n_rx.to_string(),
            s.n_tx.to_string(),
            s.n_sub.to_string(),
            s.carrier_spacing.to_string(),
            paths.join(","),
            s.body_path_gain.to_string(),
            s.noise_std.to_string(),
            s.seed.to_string(),
            d.samples.to_string(),
            d.frames.to_string(),
            d.packets.to_string(),
            d.height.to_string(),
            d.width.to_string(),
            d.kind.to_string(),
            m.hidden.to_string(),
            show_list(&m.widths),
            m.kernel.to_string(),
            m.stride.to_string(),
            m.pad.to_string(),
            m.leaky_slope.to_string(),
            m.bn_momentum.to_string(),
            m.bn_eps.to_string(),
            o.lr.to_string(),
            o.beta1.to_string(),
            o.beta2.to_string(),
            o.eps.to_string(),
            self.epochs.map_or_else(|| "auto".to_owned(), |e| e.to_string()),
            o.init_std.to_string(),
            o.seed.to_string(),
            o.batch_size.to_string(),
            w.w_adv.to_string(),
            w.w_y.to_string(),
            w.w_v.to_string(),
            w.w_s.to_string(),
            self.hampel.window().to_string(),
            self.hampel.n_sigmas().to_string(),
            self.train_fraction.to_string(),
            show_list(&self.thresholds),
        ];
        Self::KEYS.into_iter().zip(values).collect()
    }

    /// The configuration as text that [`RunConfig::parse`] reads back to an
    /// equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("optim.lr", "0.005").unwrap();
        c.set("model.widths", "8,16,32").unwrap();
        c.set("optim.epochs", "3").unwrap();
        c.set("scene.static_paths", "0:10,3e-8:4").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::default().to_text().lines().count(), RunConfig::KEYS.len());
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(matches!(RunConfig::parse("optim.lrr = 1"), Err(Error::Parse(_))));
        assert!(RunConfig::parse("optim.lr = 1\noptim.lr = 2").is_err());
        assert!(RunConfig::parse("optim.lr = fast").is_err());
        assert!(RunConfig::parse("optim.lr = -1").is_err());
        assert!(RunConfig::parse("loss.w_adv = 2").is_err());
        assert!(RunConfig::parse("hampel.window = 4").is_err());
        assert!(RunConfig::parse("dataset.packets = 250").is_err());
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn epoch_budget_follows_kind() {
        let c = RunConfig::default();
        assert_eq!(c.optim_for(ClipKind::Silhouette).epochs, 800);
        assert_eq!(c.optim_for(ClipKind::Skeleton).epochs, 1600);
        let c = RunConfig::parse("optim.epochs = 2").unwrap();
        assert_eq!(c.optim_for(ClipKind::Skeleton).epochs, 2);
    }
}
