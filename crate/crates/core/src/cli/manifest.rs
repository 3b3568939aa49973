//! JSON Lines manifest of clean/degraded utterance pairs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::periphery::{Audiogram, HearingLossLevel};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub clean_path: PathBuf,
    pub spin_path: PathBuf,
    pub listener_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audiogram_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audiogram: Option<Audiogram>,
    /// Listener intelligibility score in `[0, 100]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjective_score: Option<f64>,
    /// Per-record severity override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<HearingLossLevel>,
}

impl UtteranceRecord {
    fn validate(&self) -> Result<()> {
        let id = &self.utterance_id;
        if id.is_empty()
            || id.starts_with('.')
            || !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return invalid(format!("utterance_id {id:?} must be non-empty [A-Za-z0-9._-] not starting with '.'"));
        }
        if let Some(s) = self.subjective_score {
            if !(0.0..=100.0).contains(&s) {
                return invalid(format!("{id}: subjective_score {s} outside [0, 100]"));
            }
        }
        if self.audiogram.is_some() && self.audiogram_path.is_some() {
            return invalid(format!("{id}: give either audiogram or audiogram_path, not both"));
        }
        Ok(())
    }

    /// Inline audiogram, or the one read from `audiogram_path`.
    pub fn load_audiogram(&self) -> Result<Option<Audiogram>> {
        if let Some(a) = &self.audiogram {
            a.validate()?;
            return Ok(Some(a.clone()));
        }
        self.audiogram_path.as_ref().map(Audiogram::from_path).transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Manifest {
    /// Parses one record per non-blank line. Paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut rec: UtteranceRecord = serde_json::from_str(line)
                .or_else(|e| invalid(format!("manifest line {}: {e}", i + 1)))?;
            rec.validate()?;
            if !seen.insert(rec.utterance_id.clone()) {
                return invalid(format!("duplicate utterance_id {}", rec.utterance_id));
            }
            absolutize(base_dir, &mut rec.clean_path);
            absolutize(base_dir, &mut rec.spin_path);
            if let Some(p) = rec.audiogram_path.as_mut() {
                absolutize(base_dir, p);
            }
            records.push(rec);
        }
        if records.is_empty() {
            return invalid("manifest has no records");
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"utterance_id": "u1", "clean_path": "c.wav", "spin_path": "s.wav", "listener_id": "L1", "audiogram": {"ear": "left", "frequencies_hz": [250, 500, 1000, 2000, 4000, 8000], "thresholds_db_hl": [20, 25, 30, 40, 50, 60]}, "subjective_score": 42.5}"#;

    #[test]
    fn parses_and_resolves_paths() {
        let m = Manifest::parse(&format!("{LINE}\n\n"), Path::new("/data")).unwrap();
        assert_eq!(m.records.len(), 1);
        let r = &m.records[0];
        assert_eq!(r.clean_path, Path::new("/data/c.wav"));
        assert_eq!(r.subjective_score, Some(42.5));
        assert!(r.load_audiogram().unwrap().is_some());
    }

    #[test]
    fn rejects_bad_manifests() {
        assert!(Manifest::parse("", Path::new(".")).is_err());
        assert!(Manifest::parse("\n  \n", Path::new(".")).is_err());
        assert!(Manifest::parse(&format!("{LINE}\n{LINE}"), Path::new(".")).is_err());
        assert!(Manifest::parse("{not json", Path::new(".")).is_err());
        let bad_score = LINE.replace("42.5", "142.5");
        assert!(Manifest::parse(&bad_score, Path::new(".")).is_err());
        let bad_id = LINE.replace("\"u1\"", "\"../x\"");
        assert!(Manifest::parse(&bad_id, Path::new(".")).is_err());
    }
}
