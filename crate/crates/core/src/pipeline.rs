//! Offline end-to-end pipeline: solve, canonicalize, clip, filter, describe,
//! events, annotate and stats, with a hashed manifest of every artifact.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::caption::{check_levels, render_template_captions, CaptionSet, LEVELS};
use crate::clip::{
    clip_intensity, detect_defects, extract_clips, passes, ClipSpec, DefectConfig, Intensity,
    IntensityConfig, StatsAccumulator,
};
use crate::contact::CONTACT_THRESHOLD;
use crate::descriptors::{describe, to_json};
use crate::events::{extract_events, EventOptions, FeatureDoc, StateTable};
use crate::guidance::GuidanceConfig;
use crate::mocap::{read_marker_csv, solve_sequence, CalibrationFile, SolveOptions};
use crate::motion::io::{read_hmx, source_id_for};
use crate::motion::{canonical_transform, MotionSequence};
use crate::synth::{corpus_len, corpus_member, corpus_member_frames};

pub const TOOL_NAME: &str = "handkit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("stage {stage} failed on {input}: {message}")]
    Stage {
        stage: Stage,
        input: String,
        message: String,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Solve,
    Canonicalize,
    Clip,
    Filter,
    Describe,
    Events,
    Annotate,
    Stats,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Solve => "solve",
            Stage::Canonicalize => "canonicalize",
            Stage::Clip => "clip",
            Stage::Filter => "filter",
            Stage::Describe => "describe",
            Stage::Events => "events",
            Stage::Annotate => "annotate",
            Stage::Stats => "stats",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

/// Which stages run. Solve only applies to marker CSV inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub solve: bool,
    pub canonicalize: bool,
    pub clip: bool,
    pub filter: bool,
    pub describe: bool,
    pub events: bool,
    pub annotate: bool,
    pub stats: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            solve: true,
            canonicalize: true,
            clip: true,
            filter: true,
            describe: true,
            events: true,
            annotate: true,
            stats: true,
        }
    }
}

/// A generated corpus used instead of (or after) file inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub total_frames: usize,
    pub frames_per_seq: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Motion files (`.hmx.json`) or marker files (`.csv`).
    pub inputs: Vec<PathBuf>,
    pub synth: Option<SynthSource>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub stages: StageToggles,
    /// Calibration JSON, required for marker inputs.
    pub calibration: Option<PathBuf>,
    pub marker_fps: f64,
    pub defects: DefectConfig,
    pub clip: ClipSpec,
    pub intensity: IntensityConfig,
    pub events: EventOptions,
    pub caption_levels: BTreeSet<u8>,
    pub contact_threshold: f64,
    pub guidance: GuidanceConfig,
    /// Also write every kept clip's descriptor timelines.
    pub write_descriptors: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            synth: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            stages: StageToggles::default(),
            calibration: None,
            marker_fps: 30.0,
            defects: DefectConfig::default(),
            clip: ClipSpec::default(),
            intensity: IntensityConfig::default(),
            events: EventOptions::default(),
            caption_levels: LEVELS.into_iter().collect(),
            contact_threshold: CONTACT_THRESHOLD,
            guidance: GuidanceConfig::default(),
            write_descriptors: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| PipelineError::Config(m);
        self.defects.validate().map_err(|e| bad(e.to_string()))?;
        self.clip.validate().map_err(|e| bad(e.to_string()))?;
        self.intensity.validate().map_err(|e| bad(e.to_string()))?;
        self.guidance.validate().map_err(|e| bad(e.to_string()))?;
        check_levels(&self.caption_levels).map_err(|e| bad(e.to_string()))?;
        let ev = &self.events;
        if !(0.0..0.5).contains(&ev.hysteresis) {
            return Err(bad(format!(
                "hysteresis {} must be in [0, 0.5)",
                ev.hysteresis
            )));
        }
        if !(ev.axis_bin > 0.0 && ev.axis_bin.is_finite()) {
            return Err(bad(format!("axis_bin {} must be > 0", ev.axis_bin)));
        }
        if !(self.contact_threshold > 0.0 && self.contact_threshold.is_finite()) {
            return Err(bad(format!(
                "contact_threshold {} must be > 0",
                self.contact_threshold
            )));
        }
        if !(self.marker_fps > 0.0 && self.marker_fps.is_finite()) {
            return Err(bad(format!("marker_fps {} must be > 0", self.marker_fps)));
        }
        let st = &self.stages;
        if st.events && !st.describe {
            return Err(bad("events needs describe".into()));
        }
        if st.annotate && !st.events {
            return Err(bad("annotate needs events".into()));
        }
        if let Some(s) = &self.synth {
            if s.frames_per_seq < 2 {
                return Err(bad("synth.frames_per_seq must be >= 2".into()));
            }
        }
        let markers = self.inputs.iter().any(|p| is_marker_file(p));
        if markers && !st.solve {
            return Err(bad("marker inputs need the solve stage".into()));
        }
        if markers && self.calibration.is_none() {
            return Err(bad("marker inputs need a calibration file".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.inputs {
            let id = input_id(p);
            if id.is_empty() {
                return Err(bad(format!("input {} has no file name", p.display())));
            }
            if !seen.insert(id.clone()) {
                return Err(bad(format!("duplicate input id {id:?}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON form. The output
    /// directory and thread count do not change any artifact and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.threads = 0;
        let v = serde_json::to_value(&c).expect("config serializes");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn is_marker_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn input_id(p: &Path) -> String {
    if is_marker_file(p) {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    } else {
        source_id_for(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub inputs: Vec<String>,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<ArtifactEntry>,
    pub complete: bool,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Per-clip record in the clip index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub start: usize,
    pub end: usize,
    pub intensity: Option<Intensity>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipIndex {
    pub input: String,
    pub num_frames: usize,
    pub defective_frames: Vec<usize>,
    pub clips: Vec<ClipRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEvents {
    pub start: usize,
    pub end: usize,
    pub features: FeatureDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipCaptions {
    pub start: usize,
    pub end: usize,
    pub captions: CaptionSet,
}

/// Corpus totals written to `counts.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub inputs: usize,
    pub frames: usize,
    pub clips: usize,
    pub kept_clips: usize,
    pub kept_frames: usize,
}

/// What a run produced. Timings are reported here and never written to disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub frames: usize,
    pub clips: usize,
    pub kept_clips: usize,
    pub stage_time: BTreeMap<Stage, Duration>,
}

struct Writer {
    root: PathBuf,
    artifacts: Vec<ArtifactEntry>,
}

impl Writer {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(io)?;
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// One compact JSON document per line.
    fn write_jsonl<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<(), PipelineError> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r).expect("artifact serializes"));
            text.push('\n');
        }
        self.write(rel, text.as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

enum Source<'a> {
    File(&'a Path),
    Synth(usize, SynthSource),
}

struct Timer(BTreeMap<Stage, Duration>);

impl Timer {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.0.entry(stage).or_default() += t0.elapsed();
        out
    }
}

struct ClipWork {
    record: ClipRecord,
    events: Option<ClipEvents>,
    descriptors: Option<String>,
    captions: Option<ClipCaptions>,
    stats: Option<StatsAccumulator>,
}

/// Runs the configured stages over every input. Config errors are raised
/// before anything touches the disk. On a stage error the manifest written so
/// far is left with `complete: false`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn enabled_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    let st = &cfg.stages;
    [
        (Stage::Solve, st.solve),
        (Stage::Canonicalize, st.canonicalize),
        (Stage::Clip, st.clip),
        (Stage::Filter, st.filter),
        (Stage::Describe, st.describe),
        (Stage::Events, st.events),
        (Stage::Annotate, st.annotate),
        (Stage::Stats, st.stats),
    ]
    .into_iter()
    .filter(|(_, on)| *on)
    .map(|(s, _)| s)
    .collect()
}

fn run_in_pool(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let calib = match (
        &cfg.calibration,
        cfg.inputs.iter().any(|p| is_marker_file(p)),
    ) {
        (Some(path), true) => {
            let text = fs::read_to_string(path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            let file: CalibrationFile = serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            let pair = file.pair();
            for c in &pair {
                c.validate()
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            }
            Some(pair)
        }
        _ => None,
    };

    let mut sources: Vec<Source> = cfg.inputs.iter().map(|p| Source::File(p)).collect();
    if let Some(s) = cfg.synth {
        sources
            .extend((0..corpus_len(s.total_frames, s.frames_per_seq)).map(|k| Source::Synth(k, s)));
    }

    let mut writer = Writer {
        root: cfg.out_dir.clone(),
        artifacts: Vec::new(),
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let mut manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_sha256: cfg.hash(),
        inputs: Vec::new(),
        stages: enabled_stages(cfg),
        artifacts: Vec::new(),
        complete: false,
    };
    let manifest_path = cfg.out_dir.join(MANIFEST_FILE);
    let mut timer = Timer(BTreeMap::new());
    let mut totals = StatsAccumulator::default();
    let mut stats = Counts::default();

    let mut seen = BTreeSet::new();
    let result = (|| {
        for src in &sources {
            let (id, seq) = load(src, cfg, calib.as_ref(), &mut timer)?;
            if !seen.insert(id.clone()) {
                return Err(stage_err(Stage::Load, &id, "duplicate input id"));
            }
            manifest.inputs.push(id.clone());
            let works = process_sequence(&id, &seq, cfg, &mut timer)?;
            stats.inputs += 1;
            stats.frames += seq.len();
            write_sequence(&mut writer, cfg, &id, &seq, &works)?;
            for w in &works {
                stats.clips += 1;
                if w.record.kept {
                    stats.kept_clips += 1;
                    stats.kept_frames += w.record.end - w.record.start;
                }
                if let Some(s) = &w.stats {
                    totals.merge(s);
                }
            }
        }
        if !sources.is_empty() {
            writer.write_json("counts.json", &stats)?;
            if cfg.stages.stats {
                writer.write_json("stats.json", &totals.finish())?;
            }
        }
        Ok(())
    })();

    manifest.artifacts = std::mem::take(&mut writer.artifacts);
    manifest.complete = result.is_ok();
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    result?;
    Ok(RunSummary {
        manifest,
        frames: stats.frames,
        clips: stats.clips,
        kept_clips: stats.kept_clips,
        stage_time: timer.0,
    })
}

fn stage_err(stage: Stage, input: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        input: input.to_string(),
        message: e.to_string(),
    }
}

fn load(
    src: &Source,
    cfg: &PipelineConfig,
    calib: Option<&[crate::mocap::HandCalibration; 2]>,
    timer: &mut Timer,
) -> Result<(String, MotionSequence), PipelineError> {
    let (id, seq) = match src {
        Source::Synth(k, s) => {
            let seq = timer.time(Stage::Load, || {
                corpus_member(
                    *k,
                    corpus_member_frames(*k, s.total_frames, s.frames_per_seq),
                    s.seed,
                )
            });
            (seq.source_id.clone(), seq)
        }
        Source::File(path) => {
            let id = input_id(path);
            let seq = if is_marker_file(path) {
                let frames = timer
                    .time(Stage::Load, || read_marker_csv(path))
                    .map_err(|e| stage_err(Stage::Load, &id, e))?;
                let calib = calib.ok_or_else(|| stage_err(Stage::Solve, &id, "no calibration"))?;
                let opts = SolveOptions {
                    fps: cfg.marker_fps,
                    ..SolveOptions::default()
                };
                timer
                    .time(Stage::Solve, || solve_sequence(&frames, calib, opts, &id))
                    .map_err(|e| stage_err(Stage::Solve, &id, e))?
            } else {
                timer
                    .time(Stage::Load, || read_hmx(path))
                    .map_err(|e| stage_err(Stage::Load, &id, e))?
            };
            (id, seq)
        }
    };
    if !cfg.stages.canonicalize || seq.is_empty() {
        return Ok((id, seq));
    }
    // The first fully finite frame defines the canonical frame, so a corrupt
    // leading frame is left to the defect detector instead of failing here.
    let seq = timer.time(Stage::Canonicalize, || {
        let first = seq
            .frames
            .iter()
            .find(|fr| fr.iter().flatten().all(|p| p.iter().all(|c| c.is_finite())))
            .ok_or_else(|| stage_err(Stage::Canonicalize, &id, "no finite frame"))?;
        let t = canonical_transform(first).map_err(|e| stage_err(Stage::Canonicalize, &id, e))?;
        Ok::<_, PipelineError>(seq.transformed(&t))
    })?;
    Ok((id, seq))
}

fn process_sequence(
    id: &str,
    seq: &MotionSequence,
    cfg: &PipelineConfig,
    timer: &mut Timer,
) -> Result<Vec<ClipWork>, PipelineError> {
    let st = cfg.stages;
    let windows = timer.time(Stage::Clip, || {
        if !st.clip {
            return Ok(if seq.len() >= 2 {
                vec![(0, seq.len())]
            } else {
                vec![]
            });
        }
        let defects = detect_defects(seq, &cfg.defects);
        extract_clips(seq.len(), &defects, &cfg.clip).map_err(|e| stage_err(Stage::Clip, id, e))
    })?;

    let measured: Vec<(usize, usize, Option<Intensity>, bool)> =
        timer.time(Stage::Filter, || {
            windows
                .par_iter()
                .map(|&(s, e)| {
                    if !(st.filter || st.stats) {
                        return Ok((s, e, None, true));
                    }
                    let clip = seq.slice(s, e);
                    let i = clip_intensity(&clip, &cfg.intensity)
                        .map_err(|err| stage_err(Stage::Filter, &format!("{id}[{s}..{e})"), err))?;
                    let kept = !st.filter || passes(&i, &cfg.intensity);
                    Ok((s, e, Some(i), kept))
                })
                .collect::<Result<_, PipelineError>>()
        })?;

    let table = StateTable::standard();
    let levels = &cfg.caption_levels;
    let clip_id = |s: usize, e: usize| format!("{id}[{s}..{e})");

    let described: Vec<Option<(Vec<crate::descriptors::DescriptorTimeline>, Option<String>)>> =
        timer.time(Stage::Describe, || {
            measured
                .par_iter()
                .map(|&(s, e, _, kept)| {
                    if !(kept && st.describe) {
                        return Ok(None);
                    }
                    let clip = seq.slice(s, e);
                    let tl = describe(&clip, cfg.seed)
                        .map_err(|err| stage_err(Stage::Describe, &clip_id(s, e), err))?;
                    let text = cfg.write_descriptors.then(|| {
                        let mut t = serde_json::to_string(&to_json(&clip, &tl)).expect("json");
                        t.push('\n');
                        t
                    });
                    Ok(Some((tl, text)))
                })
                .collect::<Result<_, PipelineError>>()
        })?;

    let events: Vec<Option<FeatureDoc>> = timer.time(Stage::Events, || {
        measured
            .par_iter()
            .zip(described.par_iter())
            .map(|(&(s, e, _, _), d)| match d {
                Some((tl, _)) if st.events => {
                    extract_events(tl, seq.fps, e - s, &table, &cfg.events)
                        .map(Some)
                        .map_err(|err| stage_err(Stage::Events, &clip_id(s, e), err))
                }
                _ => Ok(None),
            })
            .collect::<Result<_, PipelineError>>()
    })?;

    let captions: Vec<Option<CaptionSet>> = timer.time(Stage::Annotate, || {
        events
            .par_iter()
            .map(|doc| match doc {
                Some(doc) if st.annotate => Some(render_template_captions(doc, levels)),
                _ => None,
            })
            .collect()
    });

    let stats: Vec<Option<StatsAccumulator>> = timer.time(Stage::Stats, || {
        measured
            .par_iter()
            .map(|&(s, e, i, kept)| match i {
                Some(i) if kept && st.stats => {
                    let clip = seq.slice(s, e);
                    StatsAccumulator::for_clip(&clip, i.avg, cfg.contact_threshold, cfg.seed)
                        .map(Some)
                        .map_err(|err| stage_err(Stage::Stats, &clip_id(s, e), err))
                }
                _ => Ok(None),
            })
            .collect::<Result<_, PipelineError>>()
    })?;

    Ok(measured
        .into_iter()
        .zip(described)
        .zip(events)
        .zip(captions)
        .zip(stats)
        .map(
            |(((((start, end, intensity, kept), d), ev), cap), stats)| ClipWork {
                record: ClipRecord {
                    start,
                    end,
                    intensity,
                    kept,
                },
                events: ev.map(|features| ClipEvents {
                    start,
                    end,
                    features,
                }),
                descriptors: d.and_then(|(_, text)| text),
                captions: cap.map(|captions| ClipCaptions {
                    start,
                    end,
                    captions,
                }),
                stats,
            },
        )
        .collect())
}

fn write_sequence(
    writer: &mut Writer,
    cfg: &PipelineConfig,
    id: &str,
    seq: &MotionSequence,
    works: &[ClipWork],
) -> Result<(), PipelineError> {
    let st = cfg.stages;
    if st.clip || st.filter {
        let defective_frames = if st.clip {
            detect_defects(seq, &cfg.defects).defective_frames
        } else {
            Vec::new()
        };
        let index = ClipIndex {
            input: id.to_string(),
            num_frames: seq.len(),
            defective_frames,
            clips: works.iter().map(|w| w.record.clone()).collect(),
        };
        writer.write_json(&format!("clips/{id}.json"), &index)?;
    }
    if cfg.write_descriptors {
        for w in works {
            if let Some(text) = &w.descriptors {
                let rel = format!(
                    "descriptors/{id}/{:06}_{:06}.json",
                    w.record.start, w.record.end
                );
                writer.write(&rel, text.as_bytes())?;
            }
        }
    }
    if st.events {
        let ev: Vec<&ClipEvents> = works.iter().filter_map(|w| w.events.as_ref()).collect();
        writer.write_jsonl(&format!("events/{id}.jsonl"), &ev)?;
    }
    if st.annotate {
        let caps: Vec<&ClipCaptions> = works.iter().filter_map(|w| w.captions.as_ref()).collect();
        writer.write_jsonl(&format!("captions/{id}.jsonl"), &caps)?;
    }
    Ok(())
}
