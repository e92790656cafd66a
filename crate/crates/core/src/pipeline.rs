//! Dataset-generation stages behind the `pointmix` binary.
//!
//! Every stage reads datasets through manifests, loads frames on demand, works
//! through emissions in fixed-size chunks on the rayon pool and writes outputs in
//! index order. Each run leaves a `run_record.json` holding the effective config,
//! its SHA-256, the seed, the inputs and per-emission provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{build_gt_database, gt_sample, normalize_intensity, random_world_augment, AugmentConfig, GtDatabase};
use crate::cutmix::{cutmix_batch, CutMixConfig};
use crate::dataset::{crop, make_ssda_split};
use crate::error::{Error, Result};
use crate::eval::{closed_gap, evaluate, EvalConfig, EvalReport};
use crate::geom::bev_range;
use crate::io::{
    read_entry, read_gt_database, read_labels, read_manifest, write_frame, write_gt_database, write_json, write_labels,
    write_manifest, LabelKind, ManifestFrames,
};
use crate::mixup::{filter_pseudo_labels, mixup_batch, MixUpConfig, MixUpStats};
use crate::synth::{render_domain_frame, DetectionNoise, SynthConfig};
use crate::types::{
    DatasetManifest, Domain, Emission, Frame, FrameSource, ManifestEntry, Provenance, Seed, SplitTag,
};

pub const SEED_ENV: &str = "POINTMIX_SEED";
pub const RUN_RECORD: &str = "run_record.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; unset uses every core. Never affects outputs.
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Emissions held in memory at once.
    pub chunk_size: usize,
    /// Detector voxel size, carried as metadata only.
    pub voxel_size: [f64; 3],
    pub split: SplitConfig,
    pub cutmix: CutMixConfig,
    pub mixup: MixUpConfig,
    pub augment: AugmentConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    /// Noise model of the `noisy-preds` teacher stand-in.
    pub predictions: DetectionNoise,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            output_dir: None,
            chunk_size: 64,
            voxel_size: [0.075, 0.075, 0.2],
            split: SplitConfig::default(),
            cutmix: CutMixConfig::default(),
            mixup: MixUpConfig::default(),
            augment: AugmentConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
            predictions: DetectionNoise::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if !(self.split.fraction > 0.0 && self.split.fraction <= 1.0) {
            return Err(Error::Config(format!("split.fraction must lie in (0, 1], got {}", self.split.fraction)));
        }
        self.cutmix.validate()?;
        self.mixup.validate()?;
        self.augment.validate()?;
        self.synth.validate()?;
        self.eval.validate()
    }

    /// The part of the config that determines outputs; execution-only keys are cleared.
    pub fn effective(&self) -> Self {
        Self {
            workers: None,
            output_dir: None,
            ..self.clone()
        }
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(&self.effective()).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Flag beats environment beats config file.
pub fn resolve_seed(config_seed: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        None => Ok(config_seed),
    }
}

/// Runs `f` on a pool of `workers` threads (all cores when unset).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub index: usize,
    pub id: String,
    pub mixed: bool,
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixup: Option<MixUpStats>,
    pub points: usize,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emissions: Vec<EmissionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureRecord>,
}

impl RunRecord {
    fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: cfg.sha256(),
            seed: cfg.seed,
            config: cfg.effective(),
            inputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            emissions: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.to_string(), path.display().to_string());
        self
    }

    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join(RUN_RECORD), self)
    }
}

pub fn read_run_record(path: &Path) -> Result<RunRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Entries tagged `tag`, or every entry when none carries the tag.
pub fn select_split(manifest: &DatasetManifest, tag: SplitTag) -> Vec<ManifestEntry> {
    let tagged: Vec<ManifestEntry> = manifest.with_split(tag).cloned().collect();
    if tagged.is_empty() {
        manifest.entries.clone()
    } else {
        tagged
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let m = read_manifest(path)?;
    m.check_files()?;
    Ok(m)
}

/// Load-time preparation: intensity onto [0, 1] for the frame's domain, then range crop.
pub fn prepare_frame(frame: &Frame, cfg: &AugmentConfig) -> Result<Frame> {
    if !cfg.enabled {
        return Ok(frame.clone());
    }
    let [lo, hi] = match frame.domain {
        Domain::Source => cfg.source_intensity,
        Domain::Target => cfg.target_intensity,
    };
    Ok(crop(&normalize_intensity(frame, lo, hi)?, &cfg.range))
}

/// Post-mix chain: GT sampling, random flip/rotate/scale, range crop.
pub fn finish_frame(frame: &Frame, db: Option<&GtDatabase>, cfg: &AugmentConfig, seed: Seed) -> Result<Frame> {
    if !cfg.enabled {
        return Ok(frame.clone());
    }
    let sampled = match db {
        Some(db) => gt_sample(frame, db, cfg, seed.child(0)),
        None => frame.clone(),
    };
    Ok(crop(&random_world_augment(&sampled, cfg, seed.child(1))?, &cfg.range))
}

/// Manifest frames passed through [`prepare_frame`] on access.
pub struct Prepared<'a> {
    pub frames: ManifestFrames,
    pub cfg: &'a AugmentConfig,
}

impl FrameSource for Prepared<'_> {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        prepare_frame(&self.frames.frame(index)?, self.cfg)
    }
}

// Independent random streams of one run.
const STREAM_MIX: u64 = 0;
const STREAM_FINISH: u64 = 1;
const STREAM_PREDICTIONS: u64 = 2;

pub fn emission_id(index: usize) -> String {
    format!("e{index:06}")
}

fn frame_paths(out: &Path, id: &str) -> (PathBuf, PathBuf) {
    (out.join("clouds").join(format!("{id}.bin")), out.join("labels").join(format!("{id}.json")))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Writes emissions `0..count` chunk by chunk; failures are logged and recorded.
fn write_emissions<F>(
    count: usize,
    chunk: usize,
    out: &Path,
    record: &mut RunRecord,
    make: F,
) -> Result<Vec<ManifestEntry>>
where
    F: Fn(usize) -> Result<(Emission, Frame)> + Sync,
{
    let out = absolute(out);
    let mut entries = Vec::with_capacity(count);
    for start in (0..count).step_by(chunk) {
        let end = (start + chunk).min(count);
        let results: Vec<(usize, Result<(ManifestEntry, EmissionRecord)>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let r = make(i).and_then(|(emission, mut frame)| {
                    let id = emission_id(i);
                    frame.id = id.clone();
                    let (c, l) = frame_paths(&out, &id);
                    write_frame(&frame, &c, &l)?;
                    let rec = EmissionRecord {
                        index: i,
                        id: id.clone(),
                        mixed: emission.mixed,
                        parents: emission.parents,
                        mixup: emission.mixup,
                        points: frame.cloud.len(),
                        boxes: frame.labels.len(),
                    };
                    let entry = ManifestEntry {
                        id,
                        cloud: c,
                        labels: l,
                        domain: frame.domain,
                        split: SplitTag::None,
                    };
                    Ok((entry, rec))
                });
                (i, r)
            })
            .collect();
        for (i, r) in results {
            match r {
                Ok((entry, rec)) => {
                    entries.push(entry);
                    record.emissions.push(rec);
                }
                Err(e) => {
                    warn!("emission {i} failed: {e}");
                    record.failures.push(FailureRecord {
                        index: i,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(entries)
}

fn finish_run(out: &Path, entries: Vec<ManifestEntry>, mut record: RunRecord) -> Result<RunRecord> {
    record.count("frames_written", entries.len());
    record.count("failures", record.failures.len());
    record.count("mixed", record.emissions.iter().filter(|e| e.mixed).count());
    write_manifest(&out.join(MANIFEST), &DatasetManifest::new(entries))?;
    record.write(out)?;
    Ok(record)
}

/// Tags every `round(1/fraction)`-th frame as labeled.
pub fn run_split(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let m = read_manifest(input)?;
    let split = make_ssda_split(&m, cfg.split.fraction)?;
    let mut record = RunRecord::new("split", cfg).input("manifest", input);
    record.count("frames", split.len());
    record.count("labeled", split.with_split(SplitTag::Labeled).count());
    record.count("unlabeled", split.with_split(SplitTag::Unlabeled).count());
    let entries = split
        .entries
        .into_iter()
        .map(|e| ManifestEntry {
            cloud: absolute(&e.cloud),
            labels: absolute(&e.labels),
            ..e
        })
        .collect();
    write_manifest(&out.join(MANIFEST), &DatasetManifest::new(entries))?;
    record.write(out)?;
    Ok(record)
}

/// Renders `synth.scenes` frames per domain into `out/source` and `out/target`.
pub fn run_synth(cfg: &PipelineConfig, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    if cfg.synth.scenes == 0 {
        return Err(Error::Config("synth.scenes must be >= 1".into()));
    }
    let mut record = RunRecord::new("synth", cfg);
    let seed = Seed(cfg.seed);
    for (domain, name) in [(Domain::Source, "source"), (Domain::Target, "target")] {
        let dir = absolute(&out.join(name));
        let mut entries = Vec::with_capacity(cfg.synth.scenes);
        let mut points = 0;
        let mut boxes = 0;
        for start in (0..cfg.synth.scenes).step_by(cfg.chunk_size) {
            let end = (start + cfg.chunk_size).min(cfg.synth.scenes);
            let chunk: Vec<Result<(ManifestEntry, usize, usize)>> = (start..end)
                .into_par_iter()
                .map(|i| {
                    let frame = render_domain_frame(&cfg.synth, domain, i, seed)?;
                    let (c, l) = frame_paths(&dir, &frame.id);
                    write_frame(&frame, &c, &l)?;
                    let entry = ManifestEntry {
                        id: frame.id.clone(),
                        cloud: c,
                        labels: l,
                        domain,
                        split: SplitTag::None,
                    };
                    Ok((entry, frame.cloud.len(), frame.labels.len()))
                })
                .collect();
            for r in chunk {
                let (entry, p, b) = r?;
                entries.push(entry);
                points += p;
                boxes += b;
            }
        }
        record.count(&format!("{name}_frames"), entries.len());
        record.count(&format!("{name}_points"), points);
        record.count(&format!("{name}_boxes"), boxes);
        write_manifest(&dir.join(MANIFEST), &DatasetManifest::new(entries))?;
    }
    record.write(out)?;
    Ok(record)
}

/// GT database over the real labels of `input`, restricted to `split` when given.
pub fn run_gtdb(cfg: &PipelineConfig, input: &Path, split: Option<SplitTag>, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let m = load_manifest(input)?;
    let entries: Vec<ManifestEntry> = match split {
        Some(tag) => m.with_split(tag).cloned().collect(),
        None => m.entries.clone(),
    };
    let mut db = GtDatabase::default();
    for chunk in entries.chunks(cfg.chunk_size) {
        let frames = chunk
            .par_iter()
            .map(|e| prepare_frame(&read_entry(e)?, &cfg.augment))
            .collect::<Result<Vec<_>>>()?;
        db.entries.extend(build_gt_database(&frames).entries);
    }
    write_gt_database(out, &db)?;
    let mut record = RunRecord::new("gtdb", cfg).input("manifest", input);
    record.count("frames", entries.len());
    record.count("entries", db.len());
    for (class, idx) in db.classes() {
        record.count(&format!("entries_{class}"), idx.len());
    }
    record.write(out)?;
    Ok(record)
}

fn load_gtdb(path: Option<&Path>) -> Result<Option<GtDatabase>> {
    path.map(read_gt_database).transpose()
}

/// Stage one: CutMix of source frames into labeled target frames, then the augmentation chain.
pub fn run_stage1(cfg: &PipelineConfig, source: &Path, target: &Path, gtdb: Option<&Path>, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let sources = Prepared {
        frames: ManifestFrames::new(&load_manifest(source)?.entries),
        cfg: &cfg.augment,
    };
    let targets = Prepared {
        frames: ManifestFrames::new(&select_split(&load_manifest(target)?, SplitTag::Labeled)),
        cfg: &cfg.augment,
    };
    let db = load_gtdb(gtdb)?;
    let seed = Seed(cfg.seed);
    let batch = cutmix_batch(&sources, &targets, &cfg.cutmix, seed.child(STREAM_MIX))?;
    let count = batch.default_len();
    let mut record = RunRecord::new("stage1", cfg).input("source", source).input("target", target);
    if let Some(p) = gtdb {
        record = record.input("gtdb", p);
    }
    record.count("source_frames", sources.len());
    record.count("target_frames", targets.len());
    record.count("emissions", count);
    info!("stage1: {count} emissions from {} source / {} target frames", sources.len(), targets.len());
    let entries = write_emissions(count, cfg.chunk_size, out, &mut record, |i| {
        let e = batch.emission(i)?;
        let f = finish_frame(&e.frame, db.as_ref(), &cfg.augment, seed.child(STREAM_FINISH).child(i as u64))?;
        Ok((e, f))
    })?;
    finish_run(out, entries, record)
}

/// Teacher stand-in: perturbed ground truth written as prediction files `out/{id}.json`.
pub fn run_noisy_preds(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let entries = select_split(&load_manifest(input)?, SplitTag::Unlabeled);
    let seed = Seed(cfg.seed).child(STREAM_PREDICTIONS);
    let mut n_pred = 0;
    for (c, chunk) in entries.chunks(cfg.chunk_size).enumerate() {
        let counts = chunk
            .par_iter()
            .enumerate()
            .map(|(k, e)| {
                let i = c * cfg.chunk_size + k;
                let frame = read_entry(e)?;
                let dets = crate::synth::simulate_detections(&frame, &cfg.predictions, seed.child(i as u64))?;
                write_labels(&out.join(format!("{}.json", e.id)), &e.id, &dets)?;
                Ok(dets.len())
            })
            .collect::<Result<Vec<_>>>()?;
        n_pred += counts.iter().sum::<usize>();
    }
    let mut record = RunRecord::new("noisy-preds", cfg).input("manifest", input);
    record.count("frames", entries.len());
    record.count("predictions", n_pred);
    record.write(out)?;
    Ok(record)
}

/// Keeps predictions scoring at least `mixup.score_threshold`; writes a pseudo-labeled manifest.
pub fn run_filter(cfg: &PipelineConfig, input: &Path, predictions: &Path, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let entries = select_split(&load_manifest(input)?, SplitTag::Unlabeled);
    let labels_dir = absolute(&out.join("labels"));
    let mut record = RunRecord::new("filter", cfg).input("manifest", input).input("predictions", predictions);
    let mut kept_entries = Vec::new();
    let (mut n_in, mut n_kept) = (0, 0);
    for (c, chunk) in entries.chunks(cfg.chunk_size).enumerate() {
        let results: Vec<Result<(ManifestEntry, usize, usize)>> = chunk
            .par_iter()
            .map(|e| {
                let (id, preds) = read_labels(&predictions.join(format!("{}.json", e.id)), LabelKind::Predictions)?;
                if id != e.id {
                    return Err(Error::InvalidArgument(format!("prediction file for `{}` names frame `{id}`", e.id)));
                }
                let kept = filter_pseudo_labels(&preds, cfg.mixup.score_threshold)?;
                let path = labels_dir.join(format!("{}.json", e.id));
                write_labels(&path, &e.id, &kept)?;
                let entry = ManifestEntry {
                    cloud: absolute(&e.cloud),
                    labels: path,
                    split: SplitTag::Unlabeled,
                    ..e.clone()
                };
                Ok((entry, preds.len(), kept.len()))
            })
            .collect();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok((entry, a, b)) => {
                    kept_entries.push(entry);
                    n_in += a;
                    n_kept += b;
                }
                Err(e) => {
                    warn!("filter: frame {} skipped: {e}", chunk[k].id);
                    record.failures.push(FailureRecord {
                        index: c * cfg.chunk_size + k,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    record.count("frames", entries.len());
    record.count("frames_written", kept_entries.len());
    record.count("failures", record.failures.len());
    record.count("predictions", n_in);
    record.count("pseudo_labels", n_kept);
    write_manifest(&out.join(MANIFEST), &DatasetManifest::new(kept_entries))?;
    record.write(out)?;
    Ok(record)
}

/// Stage two: MixUp of labeled target frames with pseudo-labeled ones, then the augmentation chain.
pub fn run_stage2(cfg: &PipelineConfig, labeled: &Path, pseudo: &Path, gtdb: Option<&Path>, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let labeled_frames = Prepared {
        frames: ManifestFrames::new(&select_split(&load_manifest(labeled)?, SplitTag::Labeled)),
        cfg: &cfg.augment,
    };
    let pseudo_frames = Prepared {
        frames: ManifestFrames::new(&load_manifest(pseudo)?.entries),
        cfg: &cfg.augment,
    };
    let db = load_gtdb(gtdb)?;
    let seed = Seed(cfg.seed);
    let batch = mixup_batch(&labeled_frames, &pseudo_frames, &cfg.mixup, seed.child(STREAM_MIX))?;
    let count = batch.default_len();
    let mut record = RunRecord::new("stage2", cfg).input("labeled", labeled).input("pseudo", pseudo);
    if let Some(p) = gtdb {
        record = record.input("gtdb", p);
    }
    record.count("labeled_frames", labeled_frames.len());
    record.count("pseudo_frames", pseudo_frames.len());
    record.count("emissions", count);
    let entries = write_emissions(count, cfg.chunk_size, out, &mut record, |i| {
        let e = batch.emission(i)?;
        let f = finish_frame(&e.frame, db.as_ref(), &cfg.augment, seed.child(STREAM_FINISH).child(i as u64))?;
        Ok((e, f))
    })?;
    finish_run(out, entries, record)
}

/// AP percentages of the reference models, for the closed-gap statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReference {
    pub source_only_ap: f64,
    pub oracle_ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// Percent; AP values enter as percentages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_gap_nds: Option<f64>,
}

/// Scores prediction files `predictions/{id}.json` against the manifest's labels.
/// Frames without a prediction file count as having no detections.
pub fn run_eval(
    cfg: &PipelineConfig,
    gt: &Path,
    predictions: &Path,
    gap: Option<GapReference>,
    nds: Option<(f64, GapReference)>,
    out: &Path,
) -> Result<(EvalOutput, RunRecord)> {
    cfg.validate()?;
    let entries = load_manifest(gt)?.entries;
    let loaded = entries
        .par_iter()
        .map(|e| {
            let frame = read_entry(e)?;
            let p = predictions.join(format!("{}.json", e.id));
            let preds = if p.is_file() { Some(read_labels(&p, LabelKind::Predictions)?.1) } else { None };
            Ok((frame.labels, preds))
        })
        .collect::<Result<Vec<_>>>()?;
    let missing = loaded.iter().filter(|(_, p)| p.is_none()).count();
    if missing > 0 {
        warn!("eval: {missing} frame(s) have no prediction file");
    }
    let (gts, preds): (Vec<_>, Vec<_>) = loaded.into_iter().map(|(g, p)| (g, p.unwrap_or_default())).unzip();
    let mut report = evaluate(&preds, &gts, &cfg.eval)?;
    let closed = gap
        .map(|g| closed_gap(report.mean_ap * 100.0, g.source_only_ap, g.oracle_ap))
        .transpose()?;
    let closed_nds = match nds {
        Some((value, g)) => {
            report.nds = Some(value);
            Some(closed_gap(value, g.source_only_ap, g.oracle_ap)?)
        }
        None => None,
    };
    let output = EvalOutput {
        report,
        closed_gap: closed,
        closed_gap_nds: closed_nds,
    };
    write_json(&out.join("eval_report.json"), &output)?;
    let mut record = RunRecord::new("eval", cfg).input("manifest", gt).input("predictions", predictions);
    record.count("frames", entries.len());
    record.count("frames_without_predictions", missing);
    record.count("n_gt", output.report.n_gt);
    record.count("n_pred", output.report.n_pred);
    record.write(out)?;
    Ok((output, record))
}

pub const RANGE_BIN: f64 = 2.0;
pub const RANGE_BINS: usize = 50;

/// Per-frame counts, BEV range histogram and class counts as CSV.
pub fn run_stats(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let entries = load_manifest(input)?.entries;
    let mut frames_csv = String::from("id,points,boxes,real_boxes,pseudo_boxes\n");
    let mut hist = vec![0usize; RANGE_BINS + 1];
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    for chunk in entries.chunks(cfg.chunk_size) {
        let frames = chunk.par_iter().map(read_entry).collect::<Result<Vec<_>>>()?;
        for f in &frames {
            let pseudo = f.labels.iter().filter(|l| l.provenance == Provenance::Pseudo).count();
            writeln!(frames_csv, "{},{},{},{},{pseudo}", f.id, f.cloud.len(), f.labels.len(), f.labels.len() - pseudo)
                .expect("write to string");
            for p in f.cloud.iter() {
                let bin = ((bev_range(p.xy()) / RANGE_BIN) as usize).min(RANGE_BINS);
                hist[bin] += 1;
            }
            for l in &f.labels {
                *classes.entry(l.class.clone()).or_default() += 1;
            }
        }
    }
    let mut range_csv = String::from("bin_start_m,bin_end_m,points\n");
    for (k, n) in hist.iter().enumerate() {
        let lo = k as f64 * RANGE_BIN;
        let hi = if k == RANGE_BINS { "inf".to_string() } else { format!("{}", lo + RANGE_BIN) };
        writeln!(range_csv, "{lo},{hi},{n}").expect("write to string");
    }
    let mut class_csv = String::from("class,boxes\n");
    for (c, n) in &classes {
        writeln!(class_csv, "{c},{n}").expect("write to string");
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (name, body) in [("frames.csv", &frames_csv), ("range_histogram.csv", &range_csv), ("classes.csv", &class_csv)] {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    let mut record = RunRecord::new("stats", cfg).input("manifest", input);
    record.count("frames", entries.len());
    record.count("points", hist.iter().sum());
    record.count("boxes", classes.values().sum());
    record.write(out)?;
    Ok(record)
}
