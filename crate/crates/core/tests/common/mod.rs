#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use modispi::wav::write_wav_f32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FS: f64 = 16_000.0;

/// Harmonic complex with a 4 Hz syllabic envelope and two formant peaks.
pub fn speech_like(seconds: f64, f0: f64, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * FS) as usize;
    let phase: Vec<f64> = (0..40).map(|_| r.random::<f64>() * 2.0 * PI).collect();
    let rate = 3.0 + r.random::<f64>() * 2.0;
    let (f1, f2) = (500.0 + 300.0 * r.random::<f64>(), 1500.0 + 800.0 * r.random::<f64>());
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let syll = 0.5 * (1.0 - (2.0 * PI * rate * t).cos());
            let mut v = 0.0;
            for (h, ph) in phase.iter().enumerate() {
                let f = f0 * (h + 1) as f64;
                if f > 7000.0 {
                    break;
                }
                let w = (-(f - f1).powi(2) / (2.0 * 200.0f64.powi(2))).exp()
                    + 0.5 * (-(f - f2).powi(2) / (2.0 * 300.0f64.powi(2))).exp()
                    + 0.05;
                v += w * (2.0 * PI * f * t + ph).sin();
            }
            0.05 * syll * v
        })
        .collect()
}

/// `clean` plus white Gaussian noise at `snr_db`.
pub fn add_noise(clean: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let p = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    clean.iter().map(|v| v + normal.sample(&mut r)).collect()
}

pub fn score_for_snr(snr_db: f64) -> f64 {
    100.0 / (1.0 + (-(snr_db - 2.0) / 3.0).exp())
}

const AUDIOGRAMS: [&str; 3] = [
    r#"{"ear": "left", "frequencies_hz": [250, 500, 1000, 2000, 4000, 8000], "thresholds_db_hl": [15, 20, 25, 30, 35, 45]}"#,
    r#"{"ear": "left", "frequencies_hz": [250, 500, 1000, 2000, 4000, 8000], "thresholds_db_hl": [30, 35, 40, 45, 55, 60]}"#,
    r#"{"ear": "left", "frequencies_hz": [250, 500, 1000, 2000, 4000, 8000], "thresholds_db_hl": [50, 55, 60, 65, 70, 75]}"#,
];

/// Writes `n` clean/degraded WAV pairs and a JSONL manifest into `dir`.
pub fn synthetic_manifest(dir: &Path, n: usize, seconds: f64, seed: u64) -> PathBuf {
    let mut lines = Vec::new();
    for i in 0..n {
        let s = seed.wrapping_mul(1000) + i as u64;
        let clean = speech_like(seconds, 100.0 + 10.0 * (i % 7) as f64, s);
        let snr = -6.0 + 18.0 * i as f64 / (n.max(2) - 1) as f64;
        let spin = add_noise(&clean, snr, s + 7);
        let (c, p) = (format!("u{i:02}_clean.wav"), format!("u{i:02}_spin.wav"));
        write_wav_f32(&dir.join(&c), &clean, FS).unwrap();
        write_wav_f32(&dir.join(&p), &spin, FS).unwrap();
        lines.push(format!(
            r#"{{"utterance_id": "u{i:02}", "clean_path": "{c}", "spin_path": "{p}", "listener_id": "L{}", "audiogram": {}, "subjective_score": {:.3}}}"#,
            i % 3,
            AUDIOGRAMS[i % 3],
            score_for_snr(snr)
        ));
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// Runs the CLI binary, returning (exit code, stderr).
pub fn run_cli(args: &[&str], cache: Option<&Path>) -> (i32, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_modispi"));
    cmd.args(args).env("RUST_LOG", "info");
    match cache {
        Some(c) => cmd.env("MODISPI_CACHE_DIR", c),
        None => cmd.env_remove("MODISPI_CACHE_DIR"),
    };
    let out = cmd.output().expect("spawn modispi");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Sorted (relative path, bytes) of every regular file under `dir`.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub type Sample = (Vec<f64>, Vec<f64>, f64);

pub fn random_samples(cfg: &modispi::predictor::vit::VitConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let len = cfg.channels * cfg.image_size * cfg.image_size;
    (0..n)
        .map(|_| {
            let img = (0..len).map(|_| r.random::<f64>()).collect();
            let ncc = (0..cfg.ncc_len()).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            (img, ncc, r.random::<f64>())
        })
        .collect()
}

fn batch_mse(params: &modispi::predictor::vit::VitParams, batch: &[Sample]) -> f64 {
    batch
        .iter()
        .map(|(i, n, t)| {
            let y = modispi::predictor::vit::predict(params, i, n).unwrap();
            (y - t) * (y - t)
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
/// every parameter, with central differences of step `h`.
pub fn gradient_check(
    params: &modispi::predictor::vit::VitParams,
    batch: &[Sample],
    h: f64,
    floor: f64,
) -> (f64, String, usize) {
    let refs: Vec<(&[f64], &[f64], f64)> = batch.iter().map(|(i, n, t)| (i.as_slice(), n.as_slice(), *t)).collect();
    let (_, grad) = modispi::predictor::vit::batch_loss_and_grad(params, &refs).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grad.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut p = params.clone();
    let mut worst = (0.0, String::new());
    let mut count = 0;
    for (k, (name, a)) in analytic.iter().enumerate() {
        for i in 0..a.len() {
            let orig = p.tensors_mut()[k][i];
            p.tensors_mut()[k][i] = orig + h;
            let up = batch_mse(&p, batch);
            p.tensors_mut()[k][i] = orig - h;
            let down = batch_mse(&p, batch);
            p.tensors_mut()[k][i] = orig;
            let num = (up - down) / (2.0 * h);
            let rel = (a[i] - num).abs() / a[i].abs().max(num.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {:.6e} numeric {:.6e}", a[i], num));
            }
            count += 1;
        }
    }
    (worst.0, worst.1, count)
}

/// Wraps raw samples as training examples with a trivial 1x1 layout.
pub fn train_samples(
    cfg: &modispi::predictor::vit::VitConfig,
    raw: Vec<Sample>,
) -> Vec<modispi::predictor::vit::TrainSample> {
    use modispi::preprocess::{DimStackLayout, StmImage};
    let s = cfg.image_size;
    raw.into_iter()
        .map(|(data, ncc, target)| modispi::predictor::vit::TrainSample {
            image: StmImage {
                data,
                height: s,
                width: s,
                layout: DimStackLayout {
                    version: 1,
                    n_s: 1,
                    n_t: 1,
                    n_channels: s,
                    n_frames: s,
                },
            },
            ncc,
            target,
        })
        .collect()
}
