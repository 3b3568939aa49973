//! Listener-specific speech intelligibility prediction.
//!
//! The pipeline simulates frequency- and temporal-resolution loss on a
//! clean/degraded speech pair, extracts spectro-temporal modulation (STM)
//! tensors, compares them with a per-band normalized cross-correlation
//! matrix, and maps the result to an intelligibility score with either a
//! logistic head or a small vision transformer.
//!
//! ```text
//! waveform ─ inverse ELC ─ outer/middle ear ─ gammatone ─ recruitment ─ TMTF
//!          ─ log compression ─ Gabor STM ─┬─ NCC matrix ─┐
//!                                         └─ DimStack/Norm/BLI image ─┴─ predictor
//! ```

pub mod cli;
pub mod container;
pub mod dsp;
pub mod error;
pub mod periphery;
pub mod pipeline;
pub mod predictor;
pub mod preprocess;
pub mod similarity;
pub mod stm;
pub mod temporal;
pub mod wav;

pub use error::{Error, Result};
pub use periphery::{Audiogram, CochleagramEnvelope, Ear, GammatoneBank, HearingLossLevel, Recruitment};
pub use pipeline::{Features, PipelineSettings};
pub use similarity::{Correlation, DegeneratePolicy, NccMatrix};
pub use stm::{ModulationBank, StmConfig, StmTensor};
pub use temporal::TmtfParams;
