//! Peripheral auditory model: ear transfer stages, cochlear gammatone
//! decomposition with severity-dependent broadening, and loudness recruitment.

mod audiogram;
mod ear;
mod gammatone;
mod level;
mod recruitment;

pub use audiogram::{classify_severity, pure_tone_average, Audiogram, Ear, PTA_FREQUENCIES_HZ};
pub use ear::{
    apply_elc, apply_inverse_elc, apply_outer_middle_ear, design_fir, elc_curve,
    outer_middle_ear_curve, TransferCurve, SUPPORTED_SAMPLE_RATES_HZ,
};
pub use gammatone::{
    cochlear_analyze, design_gammatone_bank, erb_hz, erb_rate, erb_rate_to_hz, CochleagramEnvelope,
    GammatoneBank, DEFAULT_F_HI_HZ, DEFAULT_F_LO_HZ, DEFAULT_ORDER, ENVELOPE_SMOOTHING_HZ,
};
pub use level::{HearingLossLevel, Recruitment};
pub use recruitment::{apply_recruitment, recruit, FULL_SCALE_REFERENCE};
