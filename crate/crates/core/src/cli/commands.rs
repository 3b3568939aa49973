use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{CachedFeatures, FeatureCache};
use super::config::{PipelineConfig, PredictorKind};
use super::manifest::{Manifest, UtteranceRecord};
use super::{write_atomic, Command, EvaluateArgs, ManifestArgs, Outcome, PredictArgs, TrainArgs};
use crate::container::{self, sidecar_path, Container};
use crate::dsp::rms;
use crate::error::{invalid, Error};
use crate::periphery::HearingLossLevel;
use crate::pipeline::{extract_features, resolve_level, resynthesize, simulate_envelope, PipelineSettings};
use crate::predictor::vit::{
    load_checkpoint, loss_curve_csv, predict as vit_predict, train, write_checkpoint, TrainSample, VitParams,
};
use crate::predictor::{evaluate, fit_logistic, logistic_map, LogisticFit, LogisticParams};
use crate::similarity::format_significant;
use crate::wav::{decode_wav, write_wav_f32};
use crate::Result;

pub(super) struct Context {
    pub config: PipelineConfig,
    pub output_dir: PathBuf,
    pub cache: FeatureCache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub utterance_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub n: usize,
    pub rmse: Option<f64>,
    pub rho: Option<f64>,
    pub rho_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub diverged: Option<String>,
    pub n_train: usize,
    pub n_val: usize,
}

/// Per-run summary written next to the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictor: Option<String>,
    pub n_records: usize,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub failures: Vec<RecordFailure>,
    /// Records whose degraded signal falls below the silence threshold.
    pub flagged_low_level: Vec<String>,
    /// RMSE and correlation keyed by `overall`, `mild`, `moderate_to_severe`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, GroupReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainSummary>,
}

impl RunReport {
    fn new(command: &str, n_records: usize) -> Self {
        Self {
            command: command.into(),
            predictor: None,
            n_records,
            n_succeeded: 0,
            n_failed: 0,
            failures: Vec::new(),
            flagged_low_level: Vec::new(),
            groups: BTreeMap::new(),
            training: None,
        }
    }

    fn fail(&mut self, id: &str, reason: impl Into<String>) {
        let reason = reason.into();
        warn!("{id}: {reason}");
        self.failures.push(RecordFailure {
            utterance_id: id.into(),
            reason,
        });
        self.n_failed = self.failures.len();
    }

    fn outcome(&self) -> Outcome {
        if self.failures.is_empty() {
            Outcome::Success
        } else {
            Outcome::RecordFailures(self.failures.len())
        }
    }

    fn write(&self, dir: &Path, name: &str) -> Result<()> {
        write_json(&dir.join(name), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn save_container<M: Serialize>(path: &Path, c: &Container, meta: &M) -> Result<()> {
    write_atomic(path, &c.to_bytes())?;
    write_json(&sidecar_path(path), meta)
}

fn save_wav(path: &Path, samples: &[f64], fs: f64) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_wav_f32(&tmp, samples, fs)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(super) fn dispatch(ctx: &Context, command: Command) -> Result<Outcome> {
    std::fs::create_dir_all(&ctx.output_dir)?;
    match command {
        Command::Simulate(a) => run_simulate(ctx, &a),
        Command::Stm(a) => run_stm(ctx, &a),
        Command::Ncc(a) => run_ncc(ctx, &a),
        Command::Preprocess(a) => run_preprocess(ctx, &a),
        Command::Train(a) => run_train(ctx, &a),
        Command::Predict(a) => run_predict(ctx, &a),
        Command::Evaluate(a) => run_evaluate(ctx, &a),
    }
}

struct Pair {
    clean: Vec<f64>,
    spin: Vec<f64>,
    sample_rate_hz: f64,
    clean_bytes: Vec<u8>,
    spin_bytes: Vec<u8>,
}

/// Reads both signals and truncates them to the shorter length.
fn load_pair(rec: &UtteranceRecord) -> Result<Pair> {
    let clean_bytes = std::fs::read(&rec.clean_path)
        .or_else(|e| invalid(format!("{}: {e}", rec.clean_path.display())))?;
    let spin_bytes =
        std::fs::read(&rec.spin_path).or_else(|e| invalid(format!("{}: {e}", rec.spin_path.display())))?;
    let clean = decode_wav(&clean_bytes, &rec.clean_path.display().to_string())?;
    let spin = decode_wav(&spin_bytes, &rec.spin_path.display().to_string())?;
    if clean.sample_rate_hz != spin.sample_rate_hz {
        return invalid(format!(
            "sample rates differ: clean {} Hz, degraded {} Hz",
            clean.sample_rate_hz, spin.sample_rate_hz
        ));
    }
    let n = clean.samples.len().min(spin.samples.len());
    let (mut c, mut s) = (clean.samples, spin.samples);
    c.truncate(n);
    s.truncate(n);
    Ok(Pair {
        clean: c,
        spin: s,
        sample_rate_hz: clean.sample_rate_hz,
        clean_bytes,
        spin_bytes,
    })
}

/// Config override, then record override, then the audiogram.
fn record_level(ctx: &Context, rec: &UtteranceRecord) -> Result<HearingLossLevel> {
    let forced = ctx.config.severity_override.or(rec.severity);
    if let Some(level) = forced {
        info!("{}: severity override {level}, audiogram not consulted", rec.utterance_id);
        return resolve_level(None, Some(level));
    }
    resolve_level(rec.load_audiogram()?.as_ref(), None)
}

fn is_low_level(spin_rms: f64, settings: &PipelineSettings) -> bool {
    20.0 * spin_rms.log10() < settings.silence_threshold_dbfs
}

/// Model inputs for one record, through the feature cache.
fn record_features(ctx: &Context, rec: &UtteranceRecord, settings: &PipelineSettings) -> Result<(CachedFeatures, bool)> {
    let pair = load_pair(rec)?;
    let level = record_level(ctx, rec)?;
    let key = FeatureCache::key(&pair.clean_bytes, &pair.spin_bytes, level, settings)?;
    if let Some(hit) = ctx.cache.get(&key) {
        info!("{}: feature cache hit {key}", rec.utterance_id);
        return Ok((hit, true));
    }
    let t0 = Instant::now();
    let f = extract_features(&pair.clean, &pair.spin, pair.sample_rate_hz, level, settings)?;
    let features = CachedFeatures {
        level,
        spin_rms: rms(&pair.spin),
        ncc: f.ncc,
        image: f.image,
    };
    info!(
        "{}: features extracted in {:.1} ms",
        rec.utterance_id,
        t0.elapsed().as_secs_f64() * 1e3
    );
    ctx.cache.put(&key, &features)?;
    Ok((features, false))
}

fn all_features(
    ctx: &Context,
    manifest: &Manifest,
    settings: &PipelineSettings,
) -> Vec<Result<CachedFeatures>> {
    let t0 = Instant::now();
    let results: Vec<Result<(CachedFeatures, bool)>> = manifest
        .records
        .par_iter()
        .map(|r| record_features(ctx, r, settings))
        .collect();
    let hits = results.iter().filter(|r| matches!(r, Ok((_, true)))).count();
    info!(
        "feature stage: {hits} cache hits, {} extracted, {:.1} ms",
        results.iter().filter(|r| matches!(r, Ok((_, false)))).count(),
        t0.elapsed().as_secs_f64() * 1e3
    );
    results.into_iter().map(|r| r.map(|(f, _)| f)).collect()
}

fn record_dir(ctx: &Context, rec: &UtteranceRecord) -> Result<PathBuf> {
    let d = ctx.output_dir.join(&rec.utterance_id);
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

/// Runs `work` on every record in parallel and folds results in manifest order.
fn per_record<F>(ctx: &Context, manifest: &Manifest, name: &str, work: F) -> Result<Outcome>
where
    F: Fn(&UtteranceRecord) -> Result<bool> + Sync,
{
    let results: Vec<Result<bool>> = manifest.records.par_iter().map(&work).collect();
    let mut report = RunReport::new(name, manifest.records.len());
    for (rec, r) in manifest.records.iter().zip(results) {
        match r {
            Ok(low) => {
                report.n_succeeded += 1;
                if low {
                    report.flagged_low_level.push(rec.utterance_id.clone());
                }
            }
            Err(e) => report.fail(&rec.utterance_id, e.to_string()),
        }
    }
    report.write(&ctx.output_dir, &format!("{name}_report.json"))?;
    Ok(report.outcome())
}

fn run_simulate(ctx: &Context, args: &ManifestArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let settings = &ctx.config.pipeline;
    per_record(ctx, &manifest, "simulate", |rec| {
        let pair = load_pair(rec)?;
        let level = record_level(ctx, rec)?;
        let dir = record_dir(ctx, rec)?;
        let fs = pair.sample_rate_hz;
        for (tag, x) in [("clean", &pair.clean), ("spin", &pair.spin)] {
            let env = simulate_envelope(x, fs, level, settings)?;
            save_wav(&dir.join(format!("{tag}_sim.wav")), &resynthesize(&env, fs, x.len()), fs)?;
            let (c, m) = container::envelope_container(&env)?;
            save_container(&dir.join(format!("{tag}_envelope.bin")), &c, &m)?;
        }
        Ok(is_low_level(rms(&pair.spin), settings))
    })
}

fn run_stm(ctx: &Context, args: &ManifestArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let settings = &ctx.config.pipeline;
    per_record(ctx, &manifest, "stm", |rec| {
        let pair = load_pair(rec)?;
        let level = record_level(ctx, rec)?;
        let f = extract_features(&pair.clean, &pair.spin, pair.sample_rate_hz, level, settings)?;
        let dir = record_dir(ctx, rec)?;
        for (tag, stm) in [("clean", &f.clean_stm), ("spin", &f.spin_stm)] {
            let (c, m) = container::stm_container(stm)?;
            save_container(&dir.join(format!("{tag}_stm.bin")), &c, &m)?;
        }
        Ok(is_low_level(rms(&pair.spin), settings))
    })
}

fn run_ncc(ctx: &Context, args: &ManifestArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let settings = &ctx.config.pipeline;
    per_record(ctx, &manifest, "ncc", |rec| {
        let (f, _) = record_features(ctx, rec, settings)?;
        let dir = record_dir(ctx, rec)?;
        write_atomic(&dir.join("ncc.csv"), f.ncc.to_csv().as_bytes())?;
        let (c, m) = container::ncc_container(&f.ncc)?;
        save_container(&dir.join("ncc.bin"), &c, &m)?;
        Ok(is_low_level(f.spin_rms, settings))
    })
}

fn run_preprocess(ctx: &Context, args: &ManifestArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let settings = &ctx.config.pipeline;
    per_record(ctx, &manifest, "preprocess", |rec| {
        let (f, _) = record_features(ctx, rec, settings)?;
        let dir = record_dir(ctx, rec)?;
        let (c, m) = container::image_container(&f.image)?;
        save_container(&dir.join("image.bin"), &c, &m)?;
        Ok(is_low_level(f.spin_rms, settings))
    })
}

fn settings_for_vit(ctx: &Context, image_size: usize) -> PipelineSettings {
    PipelineSettings {
        image_size,
        ..ctx.config.pipeline.clone()
    }
}

fn run_train(ctx: &Context, args: &TrainArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let kind = args.predictor.unwrap_or(ctx.config.predictor.kind);
    let mut tc = ctx.config.train.clone();
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(v) = args.val_fraction {
        tc.val_fraction = v;
    }
    tc.validate()?;
    let settings = match kind {
        PredictorKind::Logistic => ctx.config.pipeline.clone(),
        PredictorKind::Vit => settings_for_vit(ctx, ctx.config.vit.image_size),
    };
    let features = all_features(ctx, &manifest, &settings);
    let mut report = RunReport::new("train", manifest.records.len());
    report.predictor = Some(kind.as_str().into());
    let mut usable = Vec::new();
    for (rec, f) in manifest.records.iter().zip(features) {
        match f {
            Err(e) => report.fail(&rec.utterance_id, e.to_string()),
            Ok(f) => {
                if is_low_level(f.spin_rms, &settings) {
                    report.flagged_low_level.push(rec.utterance_id.clone());
                }
                match rec.subjective_score {
                    None => report.fail(&rec.utterance_id, "missing subjective_score"),
                    Some(score) => usable.push((rec, f, score)),
                }
            }
        }
    }
    match kind {
        PredictorKind::Logistic => {
            let mut pairs = Vec::new();
            for (rec, f, score) in &usable {
                match f.ncc.summary() {
                    Some(s) => pairs.push((s, score / 100.0)),
                    None => report.fail(&rec.utterance_id, "no defined NCC entries"),
                }
            }
            report.n_succeeded = pairs.len();
            let fit = fit_logistic(&pairs)?;
            if fit.slope_vanished {
                warn!("logistic slope vanished; targets carry no trend in the NCC summary");
            }
            write_json(&ctx.output_dir.join("logistic.json"), &fit)?;
        }
        PredictorKind::Vit => {
            let cfg = &ctx.config.vit;
            let mut samples = Vec::new();
            for (rec, f, score) in usable {
                match f.ncc.to_fixed_grid(cfg.ncc_rows, cfg.ncc_cols) {
                    Ok(ncc) => samples.push(TrainSample {
                        image: f.image,
                        ncc,
                        target: score / 100.0,
                    }),
                    Err(e) => report.fail(&rec.utterance_id, e.to_string()),
                }
            }
            report.n_succeeded = samples.len();
            let outcome = train(VitParams::init(cfg, tc.seed), &samples, &tc)?;
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &outcome.params)?;
            write_atomic(&ctx.output_dir.join("model.msck"), &bytes)?;
            write_atomic(&ctx.output_dir.join("loss_curve.csv"), loss_curve_csv(&outcome.curve).as_bytes())?;
            report.training = Some(TrainSummary {
                epochs_run: outcome.curve.len(),
                best_epoch: outcome.best_epoch,
                diverged: outcome.diverged.clone(),
                n_train: outcome.train_indices.len(),
                n_val: outcome.val_indices.len(),
            });
            if let Some(msg) = outcome.diverged {
                report.write(&ctx.output_dir, "train_report.json")?;
                return Err(Error::Numeric {
                    layer: "training".into(),
                    detail: msg,
                });
            }
        }
    }
    report.write(&ctx.output_dir, "train_report.json")?;
    Ok(report.outcome())
}

/// Accepts either a full fit record or bare `{a, b}`.
fn load_logistic(path: &Path) -> Result<LogisticParams> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(fit) = serde_json::from_str::<LogisticFit>(&text) {
        return Ok(fit.params);
    }
    Ok(serde_json::from_str(&text)?)
}

fn group_reports(entries: &[(HearingLossLevel, f64, f64)]) -> BTreeMap<String, GroupReport> {
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &(level, pred, target) in entries {
        for key in ["overall", level.group()] {
            let g = groups.entry(key.into()).or_default();
            g.0.push(pred);
            g.1.push(target);
        }
    }
    groups
        .into_iter()
        .map(|(k, (p, t))| {
            let r = match evaluate(&p, &t) {
                Ok(e) => GroupReport {
                    n: e.n,
                    rmse: Some(e.rmse),
                    rho: e.rho.value(),
                    rho_degenerate: e.rho.value().is_none(),
                },
                Err(_) => GroupReport {
                    n: p.len(),
                    rmse: None,
                    rho: None,
                    rho_degenerate: false,
                },
            };
            (k, r)
        })
        .collect()
}

fn scores_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("utterance_id,score_0_1,score_0_100\n");
    for (id, s) in rows {
        out.push_str(&format!(
            "{id},{},{}\n",
            format_significant(*s, 9),
            format_significant(s * 100.0, 9)
        ));
    }
    out
}

fn run_predict(ctx: &Context, args: &PredictArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let kind = args.predictor.unwrap_or(ctx.config.predictor.kind);
    enum Model {
        Logistic(LogisticParams),
        Vit(Box<VitParams>),
    }
    let model = match kind {
        PredictorKind::Logistic => {
            match args.logistic_params.as_ref().or(ctx.config.predictor.logistic_params.as_ref()) {
                Some(p) => Model::Logistic(load_logistic(p)?),
                None => {
                    warn!("no logistic parameters given, using defaults");
                    Model::Logistic(LogisticParams::default())
                }
            }
        }
        PredictorKind::Vit => {
            let Some(path) = args.checkpoint.as_ref().or(ctx.config.predictor.checkpoint.as_ref()) else {
                return invalid("the vit predictor needs --checkpoint or predictor.checkpoint");
            };
            Model::Vit(Box::new(load_checkpoint(path)?))
        }
    };
    let settings = match &model {
        Model::Logistic(_) => ctx.config.pipeline.clone(),
        Model::Vit(p) => settings_for_vit(ctx, p.config.image_size),
    };
    let features = all_features(ctx, &manifest, &settings);
    let scored: Vec<Result<(f64, CachedFeatures)>> = features
        .into_par_iter()
        .map(|f| {
            let f = f?;
            let score = match &model {
                Model::Logistic(p) => match f.ncc.summary() {
                    Some(s) => logistic_map(s, p),
                    None => return invalid("no defined NCC entries"),
                },
                Model::Vit(p) => {
                    let ncc = f.ncc.to_fixed_grid(p.config.ncc_rows, p.config.ncc_cols)?;
                    vit_predict(p, &f.image.data, &ncc)?
                }
            };
            Ok((score, f))
        })
        .collect();

    let mut report = RunReport::new("predict", manifest.records.len());
    report.predictor = Some(kind.as_str().into());
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (rec, r) in manifest.records.iter().zip(scored) {
        match r {
            Err(e) => report.fail(&rec.utterance_id, e.to_string()),
            Ok((score, f)) => {
                report.n_succeeded += 1;
                if is_low_level(f.spin_rms, &settings) {
                    report.flagged_low_level.push(rec.utterance_id.clone());
                }
                rows.push((rec.utterance_id.clone(), score));
                if let Some(t) = rec.subjective_score {
                    entries.push((f.level, score, t));
                }
            }
        }
    }
    report.groups = group_reports(&entries);
    write_atomic(&ctx.output_dir.join("scores.csv"), scores_csv(&rows).as_bytes())?;
    report.write(&ctx.output_dir, "report.json")?;
    Ok(report.outcome())
}

#[derive(Deserialize)]
struct ScoreRow {
    utterance_id: String,
    score_0_1: f64,
}

fn run_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&args.manifest)?;
    let mut reader = csv::Reader::from_path(&args.scores).or_else(|e| invalid(format!("{}: {e}", args.scores.display())))?;
    let mut scores = BTreeMap::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row.or_else(|e| invalid(format!("{}: {e}", args.scores.display())))?;
        scores.insert(row.utterance_id, row.score_0_1);
    }
    let mut report = RunReport::new("evaluate", manifest.records.len());
    let mut entries = Vec::new();
    for rec in &manifest.records {
        let Some(target) = rec.subjective_score else {
            report.fail(&rec.utterance_id, "missing subjective_score");
            continue;
        };
        let Some(&pred) = scores.get(&rec.utterance_id) else {
            report.fail(&rec.utterance_id, "no score in scores file");
            continue;
        };
        match record_level(ctx, rec) {
            Ok(level) => {
                report.n_succeeded += 1;
                entries.push((level, pred, target));
            }
            Err(e) => report.fail(&rec.utterance_id, e.to_string()),
        }
    }
    report.groups = group_reports(&entries);
    report.write(&ctx.output_dir, "evaluation.json")?;
    println!("{}", serde_json::to_string_pretty(&report.groups)?);
    Ok(report.outcome())
}
