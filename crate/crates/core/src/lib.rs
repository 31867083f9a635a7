//! Wi-Fi channel state information to human silhouette / skeleton video
//! synthesis.
//!
//! The crate covers the whole pipeline:
//!
//! * [`csi`] and [`csi_io`]: CFR domain types and the `.csib` container.
//! * [`sanitizer`]: Hampel outlier removal and cross-antenna condensation.
//! * [`synthetic`]: a procedural stick figure plus a toy multipath channel
//!   that produces paired video/CSI samples.
//! * [`tensor`]: a small reverse-mode autodiff engine with 3D
//!   (transposed) convolutions, batch norm and LSTM cells.
//! * [`network`]: the teacher 3D-GAN and the LSTM student that share a
//!   video decoder.
//! * [`training`]: losses, Adam and the cross-modality training loop.
//! * [`metrics`]: MSE, SSIM, FSIM and PCS.
//! * [`verify`]: the finite-difference gradient suite.
//! * [`config`] and [`cli`]: run configuration and the command surface
//!   used by the `csi2video` binary.

pub mod cli;
pub mod config;
pub mod csi;
pub mod csi_io;
mod error;
pub mod metrics;
pub mod netpbm;
pub mod network;
pub mod sanitizer;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
