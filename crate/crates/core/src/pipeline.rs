//! Waveform pair to features: peripheral simulation, STM, NCC and image.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dsp::rms;
use crate::error::invalid;
use crate::periphery::{
    apply_inverse_elc, apply_outer_middle_ear, apply_recruitment, classify_severity, cochlear_analyze,
    design_gammatone_bank, Audiogram, CochleagramEnvelope, HearingLossLevel, DEFAULT_F_HI_HZ, DEFAULT_F_LO_HZ,
    FULL_SCALE_REFERENCE,
};
use crate::preprocess::{build_stm_image, StmImage, DEFAULT_IMAGE_SIZE};
use crate::similarity::{ncc_matrix, DegeneratePolicy, NccMatrix};
use crate::stm::{stm_analyze, ModulationBank, StmConfig, StmTensor};
use crate::temporal::{tau_for_level, tmtf_filter};
use crate::Result;

/// Highest usable filterbank frequency as a fraction of the sample rate.
pub const MAX_CF_FRACTION: f64 = 0.45;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    /// Rate at which cochlear envelopes are formed and TMTF-filtered.
    pub envelope_rate_hz: f64,
    /// Output frame rate of envelopes and STM tensors.
    pub frame_rate_hz: f64,
    /// Inverse ELC and outer/middle-ear stages.
    pub ear_filters: bool,
    pub recruitment_reference: f64,
    pub stm: StmConfig,
    pub image_size: usize,
    pub degenerate_policy: DegeneratePolicy,
    /// Degraded signals below this RMS level are flagged as lacking content.
    pub silence_threshold_dbfs: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            f_lo_hz: DEFAULT_F_LO_HZ,
            f_hi_hz: DEFAULT_F_HI_HZ,
            envelope_rate_hz: 2000.0,
            frame_rate_hz: 100.0,
            ear_filters: true,
            recruitment_reference: FULL_SCALE_REFERENCE,
            stm: StmConfig::default(),
            image_size: DEFAULT_IMAGE_SIZE,
            degenerate_policy: DegeneratePolicy::AsZero,
            silence_threshold_dbfs: -80.0,
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_lo_hz > 0.0 && self.f_hi_hz > self.f_lo_hz) {
            return invalid("filterbank range must satisfy 0 < f_lo < f_hi");
        }
        if !(self.frame_rate_hz > 0.0 && self.envelope_rate_hz >= self.frame_rate_hz) {
            return invalid("need 0 < frame_rate_hz <= envelope_rate_hz");
        }
        if self.image_size < 2 {
            return invalid("image_size must be at least 2");
        }
        if !(self.recruitment_reference > 0.0) {
            return invalid("recruitment_reference must be positive");
        }
        Ok(())
    }

    /// Upper filterbank edge for a given sample rate.
    pub fn f_hi_for(&self, sample_rate_hz: f64) -> f64 {
        self.f_hi_hz.min(MAX_CF_FRACTION * sample_rate_hz)
    }
}

/// Severity from the override when given, otherwise from the audiogram.
pub fn resolve_level(audiogram: Option<&Audiogram>, level_override: Option<HearingLossLevel>) -> Result<HearingLossLevel> {
    match (level_override, audiogram) {
        (Some(level), _) => {
            debug!("severity override: {level}");
            Ok(level)
        }
        (None, Some(a)) => classify_severity(a),
        (None, None) => invalid("either an audiogram or a severity override is required"),
    }
}

/// Inverse ELC then outer/middle ear, when enabled.
pub fn ear_stage(signal: &[f64], sample_rate_hz: f64, settings: &PipelineSettings) -> Result<Vec<f64>> {
    if !settings.ear_filters {
        return Ok(signal.to_vec());
    }
    apply_outer_middle_ear(&apply_inverse_elc(signal, sample_rate_hz)?, sample_rate_hz)
}

/// Hearing-loss-processed envelope of one waveform at the output frame rate.
pub fn simulate_envelope(
    signal: &[f64],
    sample_rate_hz: f64,
    level: HearingLossLevel,
    settings: &PipelineSettings,
) -> Result<CochleagramEnvelope> {
    settings.validate()?;
    if signal.is_empty() {
        return invalid("empty signal");
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return invalid("signal contains non-finite samples");
    }
    let shaped = ear_stage(signal, sample_rate_hz, settings)?;
    let bank = design_gammatone_bank(level, sample_rate_hz, settings.f_lo_hz, settings.f_hi_for(sample_rate_hz))?;
    let env = cochlear_analyze(&shaped, &bank, settings.envelope_rate_hz.min(sample_rate_hz))?;
    let env = apply_recruitment(&env, level, settings.recruitment_reference)?;
    let env = tmtf_filter(&env, &tau_for_level(level))?;
    env.decimate(settings.frame_rate_hz)
}

/// Everything derived from one clean/degraded pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub level: HearingLossLevel,
    pub clean_envelope: CochleagramEnvelope,
    pub spin_envelope: CochleagramEnvelope,
    pub clean_stm: StmTensor,
    pub spin_stm: StmTensor,
    pub ncc: NccMatrix,
    pub image: StmImage,
}

/// Runs the full feature path. Signals are truncated to the shorter length.
pub fn extract_features(
    clean: &[f64],
    spin: &[f64],
    sample_rate_hz: f64,
    level: HearingLossLevel,
    settings: &PipelineSettings,
) -> Result<Features> {
    let n = clean.len().min(spin.len());
    if n == 0 {
        return invalid("empty signal");
    }
    let (ce, se) = rayon::join(
        || simulate_envelope(&clean[..n], sample_rate_hz, level, settings),
        || simulate_envelope(&spin[..n], sample_rate_hz, level, settings),
    );
    let (clean_envelope, spin_envelope) = (ce?, se?);
    let bank = ModulationBank::new(
        &settings.stm,
        clean_envelope.n_channels,
        clean_envelope.n_frames,
        clean_envelope.frame_rate_hz,
    )?;
    let clean_stm = stm_analyze(&clean_envelope, &bank)?;
    let spin_stm = stm_analyze(&spin_envelope, &bank)?;
    let ncc = ncc_matrix(&clean_stm, &spin_stm, settings.degenerate_policy)?;
    let image = build_stm_image(&clean_stm, &spin_stm, settings.image_size, settings.image_size)?;
    Ok(Features {
        level,
        clean_envelope,
        spin_envelope,
        clean_stm,
        spin_stm,
        ncc,
        image,
    })
}

/// RMS level in dB relative to full scale; `-inf` for silence.
pub fn level_dbfs(signal: &[f64]) -> f64 {
    20.0 * rms(signal).log10()
}

/// Sum of per-channel tones at each center frequency, amplitude-modulated by
/// the linearly interpolated envelope.
pub fn resynthesize(env: &CochleagramEnvelope, sample_rate_hz: f64, n_samples: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_samples];
    let frames = env.n_frames;
    if frames == 0 {
        return out;
    }
    for c in 0..env.n_channels {
        let e = env.channel(c);
        if e.iter().all(|&v| v == 0.0) {
            continue;
        }
        let w = 2.0 * std::f64::consts::PI * env.center_frequencies_hz[c] / sample_rate_hz;
        for (i, y) in out.iter_mut().enumerate() {
            // frame f is centered at (f + 0.5) / frame_rate
            let pos = (i as f64 / sample_rate_hz * env.frame_rate_hz - 0.5).clamp(0.0, (frames - 1) as f64);
            let f0 = pos.floor() as usize;
            let f1 = (f0 + 1).min(frames - 1);
            let frac = pos - f0 as f64;
            let a = e[f0] * (1.0 - frac) + e[f1] * frac;
            *y += a * (w * i as f64).cos();
        }
    }
    out
}
