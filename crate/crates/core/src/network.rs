//! Teacher 3D-GAN (video encoder `E_v`, decoder `D_v`, discriminator `C`)
//! and the LSTM student (`E_s` plus a lift into the latent space) that
//! shares the teacher's decoder.
//!
//! All parameters live in one name-keyed store. A forward pass binds the
//! parameters it needs into a [`Graph`] with [`Model::bind`], then calls the
//! stage functions on graph handles. Volumes are batched `(N, C, T, H, W)`.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{shape_err, Error, Result};
use crate::sanitizer::AmplitudeMatrix;
use crate::synthetic::{ClipKind, VideoClip};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{lstm_step, BatchNormState, BnMode, Graph, LstmVars, Tensor, Var, GATES};

/// Hidden sizes exercised by the `|h_P|` sweep.
pub const SUPPORTED_HIDDEN: [usize; 4] = [100, 200, 300, 400];

/// Soft bound on the discriminator logit.
pub const MAX_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ClipKind,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Packets `P` per CSI sample.
    pub packets: usize,
    /// Amplitude row width `K`.
    pub subcarriers: usize,
    /// LSTM hidden size `|h_P|`.
    pub hidden: usize,
    /// Output maps of each encoder stage; the last is `J_L`.
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    /// Zero padding applied before each encoder convolution and cropped
    /// after each decoder transposed convolution.
    pub pad: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ClipKind::Silhouette,
            frames: 16,
            height: 48,
            width: 64,
            packets: 256,
            subcarriers: 30,
            hidden: 300,
            widths: vec![16, 32, 64],
            kernel: 4,
            stride: 2,
            pad: 1,
            leaky_slope: 0.2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn clip_shape(&self) -> [usize; 4] {
        [self.channels(), self.frames, self.height, self.width]
    }

    /// Spatial extents at the input and after every encoder stage.
    pub fn stage_dims(&self) -> Result<Vec<[usize; 3]>> {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        if k == 0 || s == 0 {
            return Err(Error::InvalidConfig("kernel and stride must be >= 1".into()));
        }
        if 2 * p >= k {
            return Err(Error::InvalidConfig(format!("padding {p} must be below half the kernel {k}")));
        }
        let mut dims = vec![[self.frames, self.height, self.width]];
        for stage in 0..self.widths.len() {
            let d = dims[stage];
            let mut next = [0; 3];
            for a in 0..3 {
                let span = d[a] + 2 * p;
                if span < k || (span - k) % s != 0 {
                    return Err(Error::InvalidConfig(format!(
                        "encoder stage {stage}: extent {} does not tile with kernel {k}, stride {s}, pad {p}",
                        d[a]
                    )));
                }
                next[a] = (span - k) / s + 1;
            }
            dims.push(next);
        }
        Ok(dims)
    }

    /// `[J_L, T_L, H_L, W_L]`.
    pub fn latent_shape(&self) -> Result<[usize; 4]> {
        let dims = self.stage_dims()?;
        let d = dims[dims.len() - 1];
        Ok([self.widths[self.widths.len() - 1], d[0], d[1], d[2]])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.frames, self.height, self.width, self.packets, self.subcarriers, self.hidden];
        if positive.contains(&0) {
            return Err(Error::InvalidConfig("model dimensions must be >= 1".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidConfig("encoder widths must be non-empty and >= 1".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidConfig("leaky slope must lie in [0, 1)".into()));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || !(self.bn_eps > 0.0) {
            return Err(Error::InvalidConfig("batch-norm momentum must be in (0, 1] and eps > 0".into()));
        }
        self.stage_dims().map(|_| ())
    }

    fn to_tensor(&self) -> Tensor {
        let kind = match self.kind {
            ClipKind::Silhouette => 0.0,
            ClipKind::Skeleton => 1.0,
        };
        let mut v = vec![
            1.0,
            kind,
            self.frames as f64,
            self.height as f64,
            self.width as f64,
            self.packets as f64,
            self.subcarriers as f64,
            self.hidden as f64,
            self.kernel as f64,
            self.stride as f64,
            self.pad as f64,
            self.leaky_slope,
            self.bn_momentum,
            self.bn_eps,
            self.widths.len() as f64,
        ];
        v.extend(self.widths.iter().map(|&w| w as f64));
        let n = v.len();
        Tensor::new([n], v).expect("length matches")
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        let v = t.data();
        let bad = || Error::Parse("malformed model metadata block".into());
        if v.len() < 15 || v[0] != 1.0 {
            return Err(bad());
        }
        let n = |i: usize| -> Result<usize> {
            let x = v[i];
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(bad())
            }
        };
        let layers = n(14)?;
        if v.len() != 15 + layers {
            return Err(bad());
        }
        let cfg = Self {
            kind: if v[1] == 0.0 { ClipKind::Silhouette } else { ClipKind::Skeleton },
            frames: n(2)?,
            height: n(3)?,
            width: n(4)?,
            packets: n(5)?,
            subcarriers: n(6)?,
            hidden: n(7)?,
            kernel: n(8)?,
            stride: n(9)?,
            pad: n(10)?,
            leaky_slope: v[11],
            bn_momentum: v[12],
            bn_eps: v[13],
            widths: (15..15 + layers).map(n).collect::<Result<_>>()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How batch-norm layers behave during a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Batch statistics, folded into the running statistics.
    Train,
    /// Batch statistics, running statistics left untouched.
    TrainFrozenStats,
    /// Running statistics.
    Eval,
}

/// Per-subcarrier standardization applied to amplitudes before the LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SignalNorm {
    /// The identity transform for `k` subcarriers.
    pub fn identity(k: usize) -> Self {
        Self {
            mean: vec![0.0; k],
            std: vec![1.0; k],
        }
    }

    /// Mean and standard deviation of each subcarrier column over every
    /// packet of every matrix. Columns without spread keep unit scale.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a AmplitudeMatrix>) -> Result<Self> {
        let mut it = matrices.into_iter().peekable();
        let k = it.peek().ok_or(Error::EmptyDataset)?.shape().1;
        let mut n = 0usize;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for m in it {
            if m.shape().1 != k {
                return Err(shape_err("amplitude matrices differ in subcarrier count"));
            }
            for row in m.rows() {
                n += 1;
                for (j, &v) in row.iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n as f64 - m * m).max(0.0).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }
}

/// Graph handles of bound parameters, by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| shape_err(format!("parameter {name} is not bound")))
    }

    /// `(name, var)` pairs, unordered.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Parameter name prefixes of the model's parts.
pub mod part {
    pub const ENCODER: &str = "ev.";
    pub const DECODER: &str = "dv.";
    pub const DISCRIMINATOR: &str = "c.";
    pub const LSTM: &str = "es.";
    pub const LIFT: &str = "lift.";
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
    bn: BTreeMap<String, BatchNormState>,
    pub norm: SignalNorm,
}

impl Model {
    /// A model with the given structure; weights drawn from `N(0, std²)`
    /// using `seed`, biases and BN shifts 0, BN scales 1.
    pub fn init(config: ModelConfig, std: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = layout(&config)?;
        let normal = Normal::new(0.0, std)
            .map_err(|_| Error::InvalidConfig(format!("init std must be finite and >= 0, got {std}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut bn = BTreeMap::new();
        for (name, shape, kind) in layout {
            let t = match kind {
                Init::Weight => Tensor::from_fn(shape, |_| normal.sample(&mut rng)),
                Init::Zero => Tensor::zeros(shape),
                Init::One => Tensor::full(shape, 1.0),
            };
            if let Some(bn_name) = name.strip_suffix(".gamma") {
                bn.insert(
                    bn_name.to_owned(),
                    BatchNormState::new(t.len(), config.bn_momentum, config.bn_eps),
                );
            }
            params.insert(name, t);
        }
        let norm = SignalNorm::identity(config.subcarriers);
        Ok(Self {
            config,
            params,
            bn,
            norm,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn bn_states(&self) -> &BTreeMap<String, BatchNormState> {
        &self.bn
    }

    /// Names of all parameters starting with any of `prefixes`.
    pub fn names_with(&self, prefixes: &[&str]) -> Vec<String> {
        self.params
            .keys()
            .filter(|k| prefixes.iter().any(|p| k.starts_with(p)))
            .cloned()
            .collect()
    }

    /// Adds every parameter starting with one of `prefixes` to `g`, as a
    /// trainable leaf or a constant.
    pub fn bind(&self, g: &mut Graph, prefixes: &[&str], trainable: bool) -> Bound {
        let mut vars = HashMap::new();
        for (name, t) in &self.params {
            if prefixes.iter().any(|p| name.starts_with(p)) {
                let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                vars.insert(name.clone(), v);
            }
        }
        Bound { vars }
    }

    fn bn_layer(&mut self, g: &mut Graph, b: &Bound, name: &str, x: Var, pass: Pass) -> Result<Var> {
        let gamma = b.get(&format!("{name}.gamma"))?;
        let beta = b.get(&format!("{name}.beta"))?;
        let state = self
            .bn
            .get_mut(name)
            .ok_or_else(|| shape_err(format!("no batch-norm state {name}")))?;
        match pass {
            Pass::Train => g.batch_norm(x, gamma, beta, state, BnMode::Train),
            Pass::TrainFrozenStats => g.batch_norm(x, gamma, beta, &mut state.clone(), BnMode::Train),
            Pass::Eval => g.batch_norm(x, gamma, beta, state, BnMode::Eval),
        }
    }

    /// Padded strided conv → BN → leaky ReLU, once per encoder stage.
    fn conv_stack(&mut self, g: &mut Graph, b: &Bound, prefix: &str, x: Var, pass: Pass) -> Result<Var> {
        let cfg = &self.config;
        let (pad, stride, slope) = ([cfg.pad; 3], [cfg.stride; 3], cfg.leaky_slope);
        let mut h = x;
        for i in 0..cfg.widths.len() {
            let p = g.pad3d(h, pad)?;
            let w = b.get(&format!("{prefix}conv{i}.w"))?;
            let bias = b.get(&format!("{prefix}conv{i}.b"))?;
            let c = g.conv3d(p, w, Some(bias), stride)?;
            let n = self.bn_layer(g, b, &format!("{prefix}bn{i}"), c, pass)?;
            h = g.leaky_relu(n, slope);
        }
        Ok(h)
    }

    fn check_volume(&self, g: &Graph, x: Var, maps: usize, dims: [usize; 3], what: &str) -> Result<()> {
        let s = g.value(x).shape();
        if s.len() != 5 || s[1] != maps || s[2..] != dims {
            return Err(shape_err(format!(
                "{what}: expected (N, {maps}, {}, {}, {}), got {s:?}",
                dims[0], dims[1], dims[2]
            )));
        }
        Ok(())
    }

    /// `Z = E_v(F)` for a batch `(N, C, T, H, W)`.
    pub fn encode_video(&mut self, g: &mut Graph, b: &Bound, clips: Var, pass: Pass) -> Result<Var> {
        let [c, t, h, w] = self.config.clip_shape();
        self.check_volume(g, clips, c, [t, h, w], "encode_video")?;
        self.conv_stack(g, b, part::ENCODER, clips, pass)
    }

    /// `Y = D_v(Z)`; the last stage has no BN and ends in `tanh`.
    pub fn decode_video(&mut self, g: &mut Graph, b: &Bound, latent: Var, pass: Pass) -> Result<Var> {
        let [j, lt, lh, lw] = self.config.latent_shape()?;
        self.check_volume(g, latent, j, [lt, lh, lw], "decode_video")?;
        let layers = self.config.widths.len();
        let (crop, stride) = ([self.config.pad; 3], [self.config.stride; 3]);
        let mut h = latent;
        for i in 0..layers {
            let w = b.get(&format!("dv.convt{i}.w"))?;
            let bias = b.get(&format!("dv.convt{i}.b"))?;
            let up = g.conv3d_transposed(h, w, Some(bias), stride)?;
            let up = if self.config.pad > 0 { g.crop3d(up, crop)? } else { up };
            h = if i + 1 < layers {
                let n = self.bn_layer(g, b, &format!("dv.bn{i}"), up, pass)?;
                g.relu(n)
            } else {
                g.tanh(up)
            };
        }
        Ok(h)
    }

    /// `C(F)`: one probability per clip, shape `[N]`.
    pub fn discriminate(&mut self, g: &mut Graph, b: &Bound, clips: Var, pass: Pass) -> Result<Var> {
        let [c, t, h, w] = self.config.clip_shape();
        self.check_volume(g, clips, c, [t, h, w], "discriminate")?;
        let n = g.value(clips).shape()[0];
        let feat = self.conv_stack(g, b, part::DISCRIMINATOR, clips, pass)?;
        let wf = b.get("c.final.w")?;
        let bf = b.get("c.final.b")?;
        let logit = g.conv3d(feat, wf, Some(bf), [1; 3])?;
        // MAX_LOGIT * tanh(z / MAX_LOGIT) keeps the probability strictly
        // inside (0, 1) in f64 while a saturated logit still gets gradient
        let squashed = g.scale(logit, 1.0 / MAX_LOGIT);
        let squashed = g.tanh(squashed);
        let logit = g.scale(squashed, MAX_LOGIT);
        let p = g.sigmoid(logit);
        g.reshape(p, [n])
    }

    fn lstm_vars(b: &Bound) -> Result<LstmVars> {
        let get = |kind: &str, gate: &str| b.get(&format!("es.{kind}.{gate}"));
        Ok(LstmVars {
            input: [get("input", GATES[0])?, get("input", GATES[1])?, get("input", GATES[2])?, get("input", GATES[3])?],
            recurrent: [
                get("recurrent", GATES[0])?,
                get("recurrent", GATES[1])?,
                get("recurrent", GATES[2])?,
                get("recurrent", GATES[3])?,
            ],
            peephole: [get("peephole", GATES[0])?, get("peephole", GATES[1])?, get("peephole", GATES[2])?],
            bias: [get("bias", GATES[0])?, get("bias", GATES[1])?, get("bias", GATES[2])?, get("bias", GATES[3])?],
        })
    }

    /// `h_P = E_s(A)`: `rows[p]` holds packet `p` of every sample as an
    /// `N × K` tensor. Starts from zero `h` and `c`.
    pub fn encode_signal(&self, g: &mut Graph, b: &Bound, rows: &[Tensor]) -> Result<Var> {
        let cfg = &self.config;
        if rows.len() != cfg.packets {
            return Err(shape_err(format!("encode_signal: expected {} packets, got {}", cfg.packets, rows.len())));
        }
        let n = rows[0].shape().first().copied().unwrap_or(0);
        if rows.iter().any(|r| r.shape() != [n, cfg.subcarriers]) {
            return Err(shape_err(format!("encode_signal: every packet must be [{n}, {}]", cfg.subcarriers)));
        }
        let vars = Self::lstm_vars(b)?;
        let mut h = g.constant(Tensor::zeros([n, cfg.hidden]));
        let mut c = g.constant(Tensor::zeros([n, cfg.hidden]));
        for r in rows {
            let a = g.constant(r.clone());
            (h, c) = lstm_step(g, a, h, c, &vars)?;
        }
        Ok(h)
    }

    /// `V`: reshapes `h_P` (`N × D`) to `(N, D, 1, 1, 1)` and applies one
    /// transposed convolution whose kernel spans the whole latent volume.
    pub fn lift_to_visual(&self, g: &mut Graph, b: &Bound, h: Var) -> Result<Var> {
        let s = g.value(h).shape().to_vec();
        if s.len() != 2 || s[1] != self.config.hidden {
            return Err(shape_err(format!("lift_to_visual: expected [N, {}], got {s:?}", self.config.hidden)));
        }
        let x = g.reshape(h, [s[0], s[1], 1, 1, 1])?;
        let w = b.get("lift.w")?;
        let bias = b.get("lift.b")?;
        g.conv3d_transposed(x, w, Some(bias), [1; 3])
    }

    /// Stacks clips channel-major into an `(N, C, T, H, W)` tensor.
    pub fn clip_batch(&self, clips: &[&VideoClip]) -> Result<Tensor> {
        let [c, t, h, w] = self.config.clip_shape();
        let mut data = Vec::with_capacity(clips.len() * c * t * h * w);
        for clip in clips {
            if clip.kind() != self.config.kind || [clip.frames(), clip.height(), clip.width()] != [t, h, w] {
                return Err(shape_err(format!(
                    "clip {} {}x{}x{} does not match model {} {t}x{h}x{w}",
                    clip.kind(),
                    clip.frames(),
                    clip.height(),
                    clip.width(),
                    self.config.kind
                )));
            }
            data.extend(clip.to_volume());
        }
        Tensor::new([clips.len(), c, t, h, w], data)
    }

    /// Normalized amplitude rows per packet, each `N × K`.
    pub fn signal_batch(&self, signals: &[&AmplitudeMatrix]) -> Result<Vec<Tensor>> {
        let (p, k) = (self.config.packets, self.config.subcarriers);
        for s in signals {
            if s.shape() != (p, k) {
                return Err(shape_err(format!("amplitude matrix {:?} does not match model ({p}, {k})", s.shape())));
            }
        }
        let SignalNorm { mean, std } = &self.norm;
        (0..p)
            .map(|row| {
                let data = signals
                    .iter()
                    .flat_map(|s| s.row(row).iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]))
                    .collect();
                Tensor::new([signals.len(), k], data)
            })
            .collect()
    }

    fn volume_to_clip(&self, t: &Tensor) -> Result<VideoClip> {
        let c = &self.config;
        VideoClip::from_volume(c.kind, c.frames, c.height, c.width, t.data())
    }

    /// Teacher latent of one clip, eval mode.
    pub fn encode_clip(&mut self, clip: &VideoClip) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::ENCODER], false);
        let x = g.constant(self.clip_batch(&[clip])?);
        let z = self.encode_video(&mut g, &b, x, Pass::Eval)?;
        Ok(g.value(z).clone())
    }

    /// `D_v(E_v(F))` for one clip, eval mode.
    pub fn reconstruct(&mut self, clip: &VideoClip) -> Result<VideoClip> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::ENCODER, part::DECODER], false);
        let x = g.constant(self.clip_batch(&[clip])?);
        let z = self.encode_video(&mut g, &b, x, Pass::Eval)?;
        let y = self.decode_video(&mut g, &b, z, Pass::Eval)?;
        self.volume_to_clip(g.value(y))
    }

    /// Decodes a `(1, J_L, T_L, H_L, W_L)` latent, eval mode.
    pub fn decode_latent(&mut self, latent: &Tensor) -> Result<VideoClip> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::DECODER], false);
        let z = g.constant(latent.clone());
        let y = self.decode_video(&mut g, &b, z, Pass::Eval)?;
        self.volume_to_clip(g.value(y))
    }

    /// Discriminator probability for one clip, eval mode.
    pub fn discriminate_clip(&mut self, clip: &VideoClip) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::DISCRIMINATOR], false);
        let x = g.constant(self.clip_batch(&[clip])?);
        let p = self.discriminate(&mut g, &b, x, Pass::Eval)?;
        Ok(g.value(p).data()[0])
    }

    /// `h_P` for one amplitude matrix.
    pub fn signal_features(&self, signal: &AmplitudeMatrix) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::LSTM], false);
        let rows = self.signal_batch(&[signal])?;
        let h = self.encode_signal(&mut g, &b, &rows)?;
        Ok(g.value(h).clone())
    }

    /// Student latent `V` for one amplitude matrix.
    pub fn signal_latent(&self, signal: &AmplitudeMatrix) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[part::LSTM, part::LIFT], false);
        let rows = self.signal_batch(&[signal])?;
        let h = self.encode_signal(&mut g, &b, &rows)?;
        let v = self.lift_to_visual(&mut g, &b, h)?;
        Ok(g.value(v).clone())
    }

    /// Student-only synthesis `D_v(lift(E_s(A)))`, eval mode. Takes no
    /// video input.
    pub fn synthesize(&mut self, signal: &AmplitudeMatrix) -> Result<VideoClip> {
        let v = self.signal_latent(signal)?;
        self.decode_latent(&v)
    }

    /// Parameters, BN running statistics and metadata as named blocks.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("meta.model", self.config.to_tensor());
        let k = self.norm.mean.len();
        let mut norm = self.norm.mean.clone();
        norm.extend(&self.norm.std);
        ck.insert("meta.norm", Tensor::new([2, k], norm).expect("two rows"));
        for (name, t) in &self.params {
            ck.insert(name.clone(), t.clone());
        }
        for (name, s) in &self.bn {
            let c = s.running_mean.len();
            ck.insert(format!("bn.{name}.mean"), Tensor::new([c], s.running_mean.clone()).expect("len"));
            ck.insert(format!("bn.{name}.var"), Tensor::new([c], s.running_var.clone()).expect("len"));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_tensor(ck.require("meta.model")?)?;
        let k = config.subcarriers;
        let norm = ck.require("meta.norm")?;
        if norm.shape() != [2, k] || norm.data()[k..].iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Parse("malformed normalization block".into()));
        }
        let mut model = Self::init(config, 0.0, 0)?;
        model.norm = SignalNorm {
            mean: norm.data()[..k].to_vec(),
            std: norm.data()[k..].to_vec(),
        };
        for (name, t) in model.params.iter_mut() {
            let stored = ck.require(name)?;
            if stored.shape() != t.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint block {name} has shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            *t = stored.clone();
        }
        for (name, s) in model.bn.iter_mut() {
            let mean = ck.require(&format!("bn.{name}.mean"))?;
            let var = ck.require(&format!("bn.{name}.var"))?;
            if mean.len() != s.running_mean.len() || var.len() != s.running_var.len() {
                return Err(Error::ShapeMismatch(format!("running statistics of {name}")));
            }
            s.running_mean = mean.data().to_vec();
            s.running_var = var.data().to_vec();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Weight,
    Zero,
    One,
}

/// Every parameter's name, shape and initializer.
fn layout(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>, Init)>> {
    let k = cfg.kernel;
    let c = cfg.channels();
    let [jl, lt, lh, lw] = cfg.latent_shape()?;
    let widths = &cfg.widths;
    let layers = widths.len();
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
    for prefix in [part::ENCODER, part::DISCRIMINATOR] {
        let mut m = c;
        for (i, &j) in widths.iter().enumerate() {
            push(format!("{prefix}conv{i}.w"), vec![j, m, k, k, k], Init::Weight);
            push(format!("{prefix}conv{i}.b"), vec![j], Init::Zero);
            push(format!("{prefix}bn{i}.gamma"), vec![j], Init::One);
            push(format!("{prefix}bn{i}.beta"), vec![j], Init::Zero);
            m = j;
        }
    }
    push("c.final.w".into(), vec![1, jl, lt, lh, lw], Init::Weight);
    push("c.final.b".into(), vec![1], Init::Zero);
    for i in 0..layers {
        let input = widths[layers - 1 - i];
        let output = if i + 1 < layers { widths[layers - 2 - i] } else { c };
        push(format!("dv.convt{i}.w"), vec![input, output, k, k, k], Init::Weight);
        push(format!("dv.convt{i}.b"), vec![output], Init::Zero);
        if i + 1 < layers {
            push(format!("dv.bn{i}.gamma"), vec![output], Init::One);
            push(format!("dv.bn{i}.beta"), vec![output], Init::Zero);
        }
    }
    let (kw, d) = (cfg.subcarriers, cfg.hidden);
    for gate in GATES {
        push(format!("es.input.{gate}"), vec![kw, d], Init::Weight);
        push(format!("es.recurrent.{gate}"), vec![d, d], Init::Weight);
        push(format!("es.bias.{gate}"), vec![d], Init::Zero);
    }
    for gate in &GATES[..3] {
        push(format!("es.peephole.{gate}"), vec![d], Init::Weight);
    }
    push("lift.w".into(), vec![d, jl, lt, lh, lw], Init::Weight);
    push("lift.b".into(), vec![jl], Init::Zero);
    Ok(out)
}

/// Whether a parameter name denotes a bias or BN shift.
pub fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.ends_with(".beta") || name.starts_with("es.bias.")
}
