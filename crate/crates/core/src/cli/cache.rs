//! Content-addressed store of per-utterance model inputs.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::periphery::HearingLossLevel;
use crate::pipeline::PipelineSettings;
use crate::preprocess::StmImage;
use crate::similarity::NccMatrix;
use crate::Result;

pub const CACHE_ENV: &str = "MODISPI_CACHE_DIR";
const CACHE_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedFeatures {
    pub level: HearingLossLevel,
    /// RMS of the degraded signal after truncation, full-scale units.
    pub spin_rms: f64,
    pub ncc: NccMatrix,
    pub image: StmImage,
}

#[derive(Clone, Debug, Default)]
pub struct FeatureCache {
    dir: Option<PathBuf>,
}

impl FeatureCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    /// SHA-256 over the raw audio bytes, the resolved level and the settings.
    pub fn key(clean: &[u8], spin: &[u8], level: HearingLossLevel, settings: &PipelineSettings) -> Result<String> {
        let mut h = Sha256::new();
        h.update(CACHE_FORMAT.to_le_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        for part in [clean, spin] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        h.update(level.as_str().as_bytes());
        h.update(serde_json::to_vec(settings)?);
        Ok(hex::encode(h.finalize()))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<CachedFeatures> {
        let path = self.path(key)?;
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &str, features: &CachedFeatures) -> Result<()> {
        let Some(path) = self.path(key) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_atomic(&path, &serde_json::to_vec(features)?)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::DimStackLayout;

    fn sample() -> CachedFeatures {
        CachedFeatures {
            level: HearingLossLevel::MildLoss,
            spin_rms: 0.1,
            ncc: NccMatrix {
                data: vec![Some(0.123456789012345), None],
                n_s: 1,
                n_t: 2,
                spectral_centers: vec![0.0],
                temporal_centers: vec![0.7, 0.0],
            },
            image: StmImage {
                data: vec![0.1, 0.2, 0.3, 1.0 / 3.0, 0.5, 0.6, 0.7, 0.8],
                height: 2,
                width: 2,
                layout: DimStackLayout {
                    version: 1,
                    n_s: 1,
                    n_t: 2,
                    n_channels: 2,
                    n_frames: 2,
                },
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(Some(dir.path().join("c")));
        let s = PipelineSettings::default();
        let k = FeatureCache::key(b"a", b"b", HearingLossLevel::MildLoss, &s).unwrap();
        assert!(cache.get(&k).is_none());
        cache.put(&k, &sample()).unwrap();
        assert_eq!(cache.get(&k).unwrap(), sample());
    }

    #[test]
    fn awkward_floats_survive_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(Some(dir.path().join("c")));
        let mut f = sample();
        f.image.data = (0..8u64)
            .map(|i| f64::from_bits(0x3FE0_0000_0000_0000 + i.wrapping_mul(0x9E37_79B9_7F4A_7C15) % (1 << 52)))
            .collect();
        f.spin_rms = 0.1 + 0.2;
        let k = FeatureCache::key(b"x", b"y", HearingLossLevel::MildLoss, &PipelineSettings::default()).unwrap();
        cache.put(&k, &f).unwrap();
        let back = cache.get(&k).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.image.data), bits(&f.image.data));
        assert_eq!(back.spin_rms.to_bits(), f.spin_rms.to_bits());
    }

    #[test]
    fn key_depends_on_every_input() {
        let s = PipelineSettings::default();
        let base = FeatureCache::key(b"a", b"b", HearingLossLevel::MildLoss, &s).unwrap();
        assert_eq!(base.len(), 64);
        assert_ne!(base, FeatureCache::key(b"b", b"a", HearingLossLevel::MildLoss, &s).unwrap());
        assert_ne!(base, FeatureCache::key(b"ab", b"", HearingLossLevel::MildLoss, &s).unwrap());
        assert_ne!(base, FeatureCache::key(b"a", b"b", HearingLossLevel::SevereLoss, &s).unwrap());
        let s2 = PipelineSettings {
            image_size: 64,
            ..s
        };
        assert_ne!(base, FeatureCache::key(b"a", b"b", HearingLossLevel::MildLoss, &s2).unwrap());
    }

    #[test]
    fn disabled_cache_is_inert() {
        let cache = FeatureCache::new(None);
        assert!(!cache.enabled());
        cache.put("k", &sample()).unwrap();
        assert!(cache.get("k").is_none());
    }
}
