//! The `csi2video` command surface.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or parse failure,
//! 3 I/O failure, 4 shape or data mismatch, 5 failed verification.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::csi_io::{export_amplitude_csv, load_csib};
use crate::error::Error;
use crate::metrics::{MetricReport, DEFAULT_THRESHOLDS};
use crate::network::Model;
use crate::sanitizer::{sanitize_sequence, HampelConfig};
use crate::synthetic::{generate_dataset, load_dataset, save_dataset, ClipKind, VideoClip};
use crate::tensor::checkpoint::Checkpoint;
use crate::training::{checkpoint_hampel, train, CHECKPOINT_FILE};
use crate::verify::{format_report, gradient_suite, DEFAULT_SEEDS};

/// Name of the configuration copy written next to generated datasets and
/// training outputs.
pub const RUN_CONFIG_FILE: &str = "run.cfg";

#[derive(Debug, Parser)]
#[command(name = "csi2video", version, about = "Wi-Fi CSI to silhouette/skeleton video synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired video/CSI dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        kind: Option<ClipKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sanitize a .csib capture into a P x K amplitude CSV.
    Sanitize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 51)]
        window: usize,
        #[arg(long, default_value_t = 3.0)]
        nsigma: f64,
    },
    /// Train teacher and student on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from the checkpoint already in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Synthesize frames from a CSI capture with the student branch only.
    Synthesize {
        /// Checkpoint file, or a training output directory holding one.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        csi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted frames against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Check every gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        /// Perturb analytic gradients so the checks must fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 5,
            CliError::Run(e) => match e {
                Error::Parse(_)
                | Error::InvalidConfig(_)
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::TruncatedPayload { .. }
                | Error::RangeOverflow(_) => 2,
                Error::Io(_) => 3,
                Error::ZeroCfr
                | Error::NonFinite
                | Error::InvalidSequence(_)
                | Error::EmptySeries
                | Error::IndivisiblePacketCount { .. }
                | Error::ShapeMismatch(_)
                | Error::NotScalar(_)
                | Error::DomainError(_)
                | Error::EmptyDataset => 4,
            },
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    if path.is_dir() {
        Checkpoint::load(path.join(CHECKPOINT_FILE))
    } else {
        Checkpoint::load(path)
    }
}

/// Parses `args` (program name first) and runs the command, writing its
/// report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Generate {
            out: dir,
            samples,
            kind,
            config,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(n) = samples {
                cfg.dataset.samples = n;
            }
            if let Some(k) = kind {
                cfg.dataset.kind = k;
            }
            if let Some(s) = seed {
                cfg.scene.seed = s;
            }
            cfg.validate()?;
            let data = generate_dataset(&cfg.dataset, &cfg.scene)?;
            save_dataset(&dir, &data)?;
            fs::write(dir.join(RUN_CONFIG_FILE), cfg.to_text())?;
            writeln!(out, "generated {} samples in {}", data.len(), dir.display())?;
        }
        Command::Sanitize {
            input,
            out: path,
            window,
            nsigma,
        } => {
            let hampel = HampelConfig::new(window, nsigma)?;
            let seq = load_csib(&input)?;
            let a = sanitize_sequence(&seq, &hampel)?;
            fs::write(&path, export_amplitude_csv(&a))?;
            let (p, k) = a.shape();
            writeln!(out, "wrote {p}x{k} amplitudes to {}", path.display())?;
        }
        Command::Train {
            data,
            out: dir,
            config,
            resume,
        } => {
            let cfg = load_config(config.as_deref())?;
            let samples = load_dataset(&data)?;
            let kind = samples[0].clip.kind();
            let outcome = train(&samples, &cfg.train_config(kind), &dir, resume)?;
            fs::write(dir.join(RUN_CONFIG_FILE), cfg.to_text())?;
            if let Some((epoch, r)) = outcome.history.last() {
                writeln!(
                    out,
                    "epoch {epoch}: l_adv_c {:.6} l_adv_g {:.6} mse_y {:.6} mse_v {:.6} mse_s {:.6}",
                    r.l_adv_c, r.l_adv_g, r.mse_y, r.mse_v, r.mse_s
                )?;
            }
            writeln!(
                out,
                "trained {} epochs on {} samples; checkpoint {}",
                outcome.history.len(),
                outcome.train_indices.len(),
                outcome.checkpoint.display()
            )?;
        }
        Command::Synthesize { model, csi, out: dir } => {
            let ck = load_checkpoint(&model)?;
            let hampel = checkpoint_hampel(&ck)?;
            let mut model = Model::from_checkpoint(&ck)?;
            let seq = load_csib(&csi)?;
            let cfg = model.config();
            let dims = seq.dims();
            if seq.n_pkt() != cfg.packets || dims.n_sub != cfg.subcarriers {
                return Err(Error::ShapeMismatch(format!(
                    "capture has {} packets x {} subcarriers, model expects {} x {}",
                    seq.n_pkt(),
                    dims.n_sub,
                    cfg.packets,
                    cfg.subcarriers
                ))
                .into());
            }
            let a = sanitize_sequence(&seq, &hampel)?;
            let clip = model.synthesize(&a)?;
            fs::create_dir_all(&dir)?;
            clip.save_frames(&dir)?;
            writeln!(out, "wrote {} frames to {}", clip.frames(), dir.display())?;
        }
        Command::Evaluate {
            pred,
            truth,
            thresholds,
        } => {
            let thresholds = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::InvalidConfig("thresholds must be finite and >= 0".into()).into());
            }
            let p = VideoClip::load_frames(&pred)?;
            let g = VideoClip::load_frames(&truth)?;
            let report = MetricReport::compute(&p, &g, &thresholds)?;
            write!(out, "{}", report.to_json())?;
        }
        Command::Gradcheck { seeds, corrupt } => {
            let report = gradient_suite(seeds, corrupt)?;
            write!(out, "{}", format_report(&report, seeds.max(1)))?;
            let failed: Vec<&str> = report.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code. Help and
/// version requests print to stdout and succeed.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(args, &mut lock) {
        Ok(()) => 0,
        Err(CliError::Usage(e)) if !e.use_stderr() => {
            let _ = write!(lock, "{e}");
            0
        }
        Err(e) => {
            let _ = lock.flush();
            eprintln!("csi2video: {e}");
            e.exit_code()
        }
    }
}
