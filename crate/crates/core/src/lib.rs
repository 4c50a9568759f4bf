//! Affine frequency division multiplexing (AFDM) over doubly dispersive
//! channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`daft`] - the discrete affine Fourier transform `A = Λc2 · F · Λc1`,
//!   both as a factored FFT pipeline and as a dense matrix.
//! * [`modem`] - Gray-coded square QAM, IDAFT modulation with a
//!   chirp-periodic prefix, and DAFT demodulation.
//! * [`channel`] - integer delay/Doppler multipath channels, the time-domain
//!   ground truth, the matrix model `H`, and the sparse effective channel
//!   `H_eff = A·H·A^H` that doubles as the detector's factor graph.
//! * [`detect`] - the message passing detector plus MMSE, MRC and exhaustive
//!   MAP reference detectors.
//! * [`harness`] - seeded Monte Carlo BER sweeps, config parsing and CSV
//!   output.

pub mod channel;
pub mod daft;
pub mod detect;
mod error;
pub mod harness;
pub mod modem;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use channel::{ChannelPath, ChannelRealization, NoiseModel, SparseEffectiveChannel};
pub use daft::{AfdmParams, ComplexFrame, DaftPlan};
pub use detect::{DetectionResult, MpConfig, Termination, XiKernel};
pub use harness::{BerRecord, Detector, ExperimentConfig};
pub use modem::{Constellation, TxFrame};
