//! `handkit` command-line front end.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use handkit_core::caption::{
    annotate_remote, parse_levels, render_template_captions, CaptionError, CaptionRequest,
    EndpointConfig, HttpTransport,
};
use handkit_core::clip::{
    clip_intensity, detect_defects, extract_clips, passes, ClipSpec, Intensity, StatsAccumulator,
};
use handkit_core::contact::{contact_labels, score_clips, ScoreMode};
use handkit_core::descriptors::{describe, from_json as descriptors_from_json, to_json};
use handkit_core::events::{extract_events, FeatureDoc, StateTable};
use handkit_core::fsq::{read_tokens, write_tokens, FsqConfig};
use handkit_core::guidance::{
    gamma_field, guided_sample, initial_noise, long_horizon_target, task_centers, NoiseSchedule,
    SeededNoise, Task, Tensor,
};
use handkit_core::mocap::{
    read_marker_csv, simulate_markers, solve_sequence, write_marker_csv, CalibrationFile,
    DepthFactors, HandCalibration, MarkerFrame, SolveOptions,
};
use handkit_core::motion::io::{read_hmx, source_id_for, write_hmx};
use handkit_core::motion::{canonicalize, Hand, MotionSequence};
use handkit_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, SynthSource};
use handkit_core::repr::{positions_from_tensor, to_ar_rep, to_diffusion_rep, write_flat};
use handkit_core::synth::{bimanual_motion, SynthConfig};

const EXIT_VALIDATION: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_REMOTE: u8 = 4;

#[derive(Parser)]
#[command(name = "handkit", version, about = "Bimanual hand motion toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON; module settings are read from it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for palm sampling and noise; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory; stdout when omitted and the output is JSON.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-hand sequence, or its marker CSV.
    Synth {
        #[arg(long, default_value_t = 300)]
        frames: usize,
        /// Write markers instead of joints, with the calibration to this path.
        #[arg(long)]
        markers: Option<PathBuf>,
    },
    /// Solve joint positions from a marker CSV.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
    },
    /// Move a sequence into the canonical frame of its first frame.
    Canonicalize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Cut defect-free clips from sequences into the --out directory.
    Clip {
        /// A motion file or a directory of them.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Score clip intensity and report which clips pass.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tau_hand: Option<f64>,
        #[arg(long)]
        tau_avg: Option<f64>,
    },
    /// Descriptor timelines of a clip.
    Describe {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Feature JSON (events) from a descriptor document.
    Events {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        min_dwell: Option<usize>,
        #[arg(long)]
        hysteresis: Option<f64>,
        /// One constant event per state run instead of transitions.
        #[arg(long)]
        runs: bool,
    },
    /// Captions from a feature document.
    Annotate {
        #[arg(long)]
        features: PathBuf,
        /// Template captions, no network (default).
        #[arg(long, conflicts_with = "remote")]
        offline: bool,
        /// Chat-completion endpoint from the environment.
        #[arg(long)]
        remote: bool,
        #[arg(long)]
        levels: Option<String>,
    },
    /// Contact precision, recall and F1 of generated against ground truth.
    Contact {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::PerFrame)]
        mode: ModeArg,
    },
    /// Dataset interaction statistics over clips.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Masked partial-denoising sample with a built-in denoiser.
    Guide {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Ground-truth clip supplying the constraints.
        #[arg(long)]
        gt: PathBuf,
        /// `oracle` returns the ground truth, `zero` predicts zeros.
        #[arg(long, value_enum, default_value_t = DenoiserArg::Oracle)]
        denoiser: DenoiserArg,
        /// Keyframe indices, e.g. 0,30,59.
        #[arg(long)]
        keyframes: Option<String>,
        /// Conditioning hand of the reaction task.
        #[arg(long, default_value = "left")]
        hand: String,
        /// Previous window of the long-horizon task; defaults to --gt.
        #[arg(long)]
        prev: Option<PathBuf>,
        /// Diffusion steps of the linear schedule.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Finite scalar quantization of flat f64 latents.
    Fsq {
        #[command(subcommand)]
        op: FsqOp,
    },
    /// Flat binary motion representation with a JSON sidecar.
    Repr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: ReprArg,
    },
    /// Run the configured end-to-end pipeline.
    Pipeline {
        /// Motion or marker files, added to the config inputs.
        #[arg(long = "in")]
        inputs: Vec<PathBuf>,
        /// Generate a synthetic corpus of this many frames.
        #[arg(long)]
        synth_frames: Option<usize>,
        /// Frames per generated sequence
        #[arg(long, default_value_t = 1800)]
        synth_seq_len: usize,
        /// Worker threads, 0 for all cores; overrides the config
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Subcommand)]
enum FsqOp {
    /// Latents (f64 LE, dim per vector) to tokens.
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        /// Levels per dimension, e.g. 8,8,8.
        #[arg(long, conflicts_with = "codebook")]
        levels: Option<String>,
        /// One of 512, 1024, 2048, 4096.
        #[arg(long)]
        codebook: Option<u64>,
    },
    /// Tokens back to quantized latents (f64 LE).
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerFrame,
    PerClip,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Inbetween,
    Keyframe,
    Wrist,
    Reaction,
    Longhorizon,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenoiserArg {
    Oracle,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Diffusion,
    Ar,
}

/// An error with the exit code it maps to.
struct Fail {
    code: u8,
    err: anyhow::Error,
}

type Res<T> = Result<T, Fail>;

trait Classify<T> {
    fn invalid(self) -> Res<T>;
    fn data(self) -> Res<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Res<T> {
        self.map_err(|e| Fail {
            code: EXIT_VALIDATION,
            err: e.into(),
        })
    }

    fn data(self) -> Res<T> {
        self.map_err(|e| Fail {
            code: EXIT_DATA,
            err: e.into(),
        })
    }
}

fn caption_fail(e: CaptionError) -> Fail {
    let code = match e {
        CaptionError::Features(_) => EXIT_DATA,
        CaptionError::InvalidRequest(_) | CaptionError::NotConfigured(_) => EXIT_VALIDATION,
        _ => EXIT_REMOTE,
    };
    Fail {
        code,
        err: e.into(),
    }
}

fn pipeline_fail(e: PipelineError) -> Fail {
    let code = match e {
        PipelineError::Config(_) => EXIT_VALIDATION,
        _ => EXIT_DATA,
    };
    Fail {
        code,
        err: e.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> Res<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .invalid()?;
            PipelineConfig::from_json(&text)
                .with_context(|| format!("config {}", p.display()))
                .invalid()?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .data()?;
            }
            fs::write(p, text)
                .with_context(|| format!("writing {}", p.display()))
                .data()
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").context("writing stdout").data()
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Res<()> {
    let text = serde_json::to_string_pretty(value)
        .context("serializing output")
        .data()?;
    emit(out, &text)
}

fn require_out(common: &Common) -> Res<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required"))
        .invalid()
}

fn read_motion(path: &Path) -> Res<MotionSequence> {
    read_hmx(path)
        .with_context(|| format!("reading {}", path.display()))
        .data()
}

/// A motion file, or every `*.hmx.json` in a directory in name order.
fn motion_files(path: &Path) -> Res<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))
        .data()?
    {
        let p = entry.context("listing directory").data()?.path();
        if p.to_string_lossy().ends_with(".hmx.json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Res<()> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    let out = common.out.as_deref();
    match cli.command {
        Command::Synth { frames, markers } => {
            // Marker placement is ill-conditioned for nearly straight
            // fingers, so marker output keeps every joint clearly bent.
            let synth = match markers {
                None => SynthConfig {
                    frames,
                    seed: cfg.seed,
                    ..SynthConfig::default()
                },
                Some(_) => SynthConfig {
                    frames,
                    seed: cfg.seed,
                    flex_amplitude: 0.2,
                    flex_bias: 0.45,
                    ..SynthConfig::default()
                },
            };
            let seq = bimanual_motion(&synth);
            let path = require_out(common)?;
            match markers {
                None => write_hmx(path, &seq).data(),
                Some(calib_path) => synth_markers(&seq, path, &calib_path),
            }
        }
        Command::Solve {
            input,
            calibration,
            fps,
        } => {
            let text = fs::read_to_string(&calibration)
                .with_context(|| format!("reading {}", calibration.display()))
                .invalid()?;
            let calib: CalibrationFile = serde_json::from_str(&text)
                .with_context(|| format!("calibration {}", calibration.display()))
                .invalid()?;
            let pair = calib.pair();
            for c in &pair {
                c.validate().context("calibration").invalid()?;
            }
            let frames = read_marker_csv(&input)
                .with_context(|| format!("reading {}", input.display()))
                .data()?;
            let opts = SolveOptions {
                fps: fps.unwrap_or(cfg.marker_fps),
                ..SolveOptions::default()
            };
            let id = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let seq = solve_sequence(&frames, &pair, opts, &id)
                .context("solve")
                .data()?;
            write_hmx(require_out(common)?, &seq).data()
        }
        Command::Canonicalize { input } => {
            let seq = read_motion(&input)?;
            let (canon, _) = canonicalize(&seq).context("canonicalize").data()?;
            write_hmx(require_out(common)?, &canon).data()
        }
        Command::Clip {
            input,
            length,
            stride,
        } => {
            let mut spec = cfg.clip;
            if let Some(l) = length {
                spec = ClipSpec::new(l);
            }
            if let Some(s) = stride {
                spec.stride = s;
            }
            spec.validate().invalid()?;
            cfg.defects.validate().invalid()?;
            let dir = require_out(common)?;
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .data()?;
            let mut index = Vec::new();
            for file in motion_files(&input)? {
                let seq = read_motion(&file)?;
                let id = source_id_for(&file);
                let defects = detect_defects(&seq, &cfg.defects);
                let windows = extract_clips(seq.len(), &defects, &spec).invalid()?;
                for &(s, e) in &windows {
                    let name = format!("{id}_{s:06}.hmx.json");
                    write_hmx(&dir.join(&name), &seq.slice(s, e)).data()?;
                }
                index.push(serde_json::json!({
                    "input": id,
                    "num_frames": seq.len(),
                    "defective_frames": defects.defective_frames,
                    "clips": windows,
                }));
            }
            emit_json(Some(&dir.join("clips.json")), &index)
        }
        Command::Filter {
            input,
            tau_hand,
            tau_avg,
        } => {
            let mut icfg = cfg.intensity;
            if let Some(t) = tau_hand {
                icfg.tau_hand = t;
            }
            if let Some(t) = tau_avg {
                icfg.tau_avg = t;
            }
            icfg.validate().invalid()?;
            #[derive(Serialize)]
            struct Row {
                clip: String,
                intensity: Intensity,
                kept: bool,
            }
            let mut rows = Vec::new();
            for file in motion_files(&input)? {
                let seq = read_motion(&file)?;
                let i = clip_intensity(&seq, &icfg)
                    .with_context(|| format!("intensity of {}", file.display()))
                    .data()?;
                rows.push(Row {
                    clip: source_id_for(&file),
                    intensity: i,
                    kept: passes(&i, &icfg),
                });
            }
            let kept: Vec<&str> = rows
                .iter()
                .filter(|r| r.kept)
                .map(|r| r.clip.as_str())
                .collect();
            emit_json(out, &serde_json::json!({ "clips": rows, "kept": kept }))
        }
        Command::Describe { input } => {
            let seq = read_motion(&input)?;
            let tl = describe(&seq, cfg.seed).context("describe").data()?;
            emit_json(out, &to_json(&seq, &tl))
        }
        Command::Events {
            input,
            min_dwell,
            hysteresis,
            runs,
        } => {
            let mut opts = cfg.events;
            if let Some(d) = min_dwell {
                opts.min_dwell = d;
            }
            if let Some(h) = hysteresis {
                opts.hysteresis = h;
            }
            opts.runs |= runs;
            if !(0.0..0.5).contains(&opts.hysteresis) {
                return Err(anyhow!("hysteresis must be in [0, 0.5)")).invalid();
            }
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))
                .data()?;
            let doc = descriptors_from_json(&text)
                .with_context(|| format!("descriptors {}", input.display()))
                .data()?;
            let features = extract_events(
                &doc.timelines,
                doc.fps,
                doc.num_frames,
                &StateTable::standard(),
                &opts,
            )
            .context("events")
            .data()?;
            emit(out, &features.to_json())
        }
        Command::Annotate {
            features,
            offline: _,
            remote,
            levels,
        } => {
            let levels = match levels {
                Some(s) => parse_levels(&s).map_err(caption_fail)?,
                None => cfg.caption_levels.clone(),
            };
            let text = fs::read_to_string(&features)
                .with_context(|| format!("reading {}", features.display()))
                .data()?;
            let set = if remote {
                let req = CaptionRequest::new(text, levels);
                req.validate().map_err(caption_fail)?;
                let endpoint = EndpointConfig::from_env().map_err(caption_fail)?;
                annotate_remote(&req, &endpoint, &HttpTransport).map_err(caption_fail)?
            } else {
                let doc = FeatureDoc::parse(&text)
                    .with_context(|| format!("features {}", features.display()))
                    .data()?;
                handkit_core::caption::check_levels(&levels).map_err(caption_fail)?;
                render_template_captions(&doc, &levels)
            };
            emit_json(out, &set)
        }
        Command::Contact {
            gt,
            gen,
            threshold,
            mode,
        } => {
            let th = threshold.unwrap_or(cfg.contact_threshold);
            if !(th > 0.0 && th.is_finite()) {
                return Err(anyhow!("threshold must be > 0")).invalid();
            }
            let a = read_motion(&gt)?;
            let b = read_motion(&gen)?;
            let la = contact_labels(&a, th, cfg.seed).invalid()?;
            let lb = contact_labels(&b, th, cfg.seed).invalid()?;
            let mode = match mode {
                ModeArg::PerFrame => ScoreMode::PerFrame,
                ModeArg::PerClip => ScoreMode::PerClip,
            };
            let report = score_clips(&[la], &[lb], mode).data()?;
            emit_json(out, &report)
        }
        Command::Stats { input } => {
            cfg.intensity.validate().invalid()?;
            let mut acc = StatsAccumulator::default();
            for file in motion_files(&input)? {
                let seq = read_motion(&file)?;
                let i = clip_intensity(&seq, &cfg.intensity)
                    .with_context(|| format!("intensity of {}", file.display()))
                    .data()?;
                let s = StatsAccumulator::for_clip(&seq, i.avg, cfg.contact_threshold, cfg.seed)
                    .with_context(|| format!("contacts of {}", file.display()))
                    .data()?;
                acc.merge(&s);
            }
            emit_json(out, &acc.finish())
        }
        Command::Guide {
            task,
            gt,
            denoiser,
            keyframes,
            hand,
            prev,
            steps,
        } => guide(
            &cfg, common, task, &gt, denoiser, keyframes, &hand, prev, steps,
        ),
        Command::Fsq { op } => fsq(common, op),
        Command::Repr { input, kind } => {
            let seq = read_motion(&input)?;
            let path = require_out(common)?;
            let (layout, data) = match kind {
                ReprArg::Diffusion => {
                    let rep = to_diffusion_rep(&seq);
                    (rep.layout(), rep.x.data)
                }
                ReprArg::Ar => {
                    let rep = to_ar_rep(&seq).context("local representation").data()?;
                    (rep.layout(), rep.to_flat())
                }
            };
            write_flat(path, &layout, &data).data()
        }
        Command::Pipeline {
            inputs,
            synth_frames,
            synth_seq_len,
            threads,
        } => {
            let mut cfg = cfg;
            cfg.inputs.extend(inputs);
            if let Some(total) = synth_frames {
                cfg.synth = Some(SynthSource {
                    total_frames: total,
                    frames_per_seq: synth_seq_len,
                    seed: cfg.seed,
                });
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(o) = &common.out {
                cfg.out_dir = o.clone();
            }
            let run = run_pipeline(&cfg).map_err(pipeline_fail)?;
            eprintln!(
                "{} frames, {} clips, {} kept, {} artifacts",
                run.frames,
                run.clips,
                run.kept_clips,
                run.manifest.artifacts.len()
            );
            for (stage, t) in &run.stage_time {
                eprintln!("  {stage:<12} {:>9.3} s", t.as_secs_f64());
            }
            println!(
                "{}",
                cfg.out_dir
                    .join(handkit_core::pipeline::MANIFEST_FILE)
                    .display()
            );
            Ok(())
        }
    }
}

fn synth_markers(seq: &MotionSequence, path: &Path, calib_path: &Path) -> Res<()> {
    let first = seq
        .frames
        .first()
        .ok_or_else(|| anyhow!("no frames"))
        .invalid()?;
    let calib = Hand::BOTH.map(|h| {
        HandCalibration::from_neutral_pose(&first[h.index()], 0.008, DepthFactors::default())
    });
    let mut frames = Vec::with_capacity(seq.len());
    for (index, fr) in seq.frames.iter().enumerate() {
        let mut markers = [[Default::default(); handkit_core::mocap::MARKERS_PER_HAND]; 2];
        for h in Hand::BOTH {
            markers[h.index()] = simulate_markers(&fr[h.index()], h, &calib[h.index()])
                .with_context(|| format!("markers of frame {index}"))
                .data()?;
        }
        frames.push(MarkerFrame { markers });
    }
    emit(Some(path), &write_marker_csv(&frames))?;
    let file = CalibrationFile::PerHand {
        left: calib[0],
        right: calib[1],
    };
    emit_json(Some(calib_path), &file)
}

#[allow(clippy::too_many_arguments)]
fn guide(
    cfg: &PipelineConfig,
    common: &Common,
    task: TaskArg,
    gt: &Path,
    denoiser: DenoiserArg,
    keyframes: Option<String>,
    hand: &str,
    prev: Option<PathBuf>,
    steps: usize,
) -> Res<()> {
    let g = &cfg.guidance;
    g.validate().invalid()?;
    let task = match task {
        TaskArg::Inbetween => Task::InBetween,
        TaskArg::Keyframe => {
            let keys = keyframes
                .as_deref()
                .unwrap_or("")
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .context("--keyframes")
                .invalid()?;
            Task::Keyframe(keys)
        }
        TaskArg::Wrist => Task::WristTrajectory,
        TaskArg::Reaction => Task::HandReaction(
            Hand::parse(hand)
                .ok_or_else(|| anyhow!("--hand must be left or right"))
                .invalid()?,
        ),
        TaskArg::Longhorizon => Task::LongHorizon,
    };
    let seq = read_motion(gt)?;
    let len = seq.len();
    let mut x0_gt = to_diffusion_rep(&seq).x;
    if task == Task::LongHorizon {
        let previous = match &prev {
            Some(p) => to_diffusion_rep(&read_motion(p)?).x,
            None => x0_gt.clone(),
        };
        x0_gt = long_horizon_target(&previous, len, g).invalid()?;
    }
    let centers = task_centers(&task, len, g).invalid()?;
    let gamma = gamma_field(&centers, g).invalid()?;
    let schedule = NoiseSchedule::linear(1e-4, 2e-2, steps).invalid()?;
    let (f, j, c) = x0_gt.shape();
    let x_t = initial_noise(f, j, c, cfg.seed);
    let mut noise = SeededNoise::new(cfg.seed.wrapping_add(1));
    let target = x0_gt.clone();
    let x0 = guided_sample(
        |_x: &Tensor, _t| match denoiser {
            DenoiserArg::Oracle => Ok(target.clone()),
            DenoiserArg::Zero => Ok(Tensor::zeros(f, j, c)),
        },
        x_t,
        &x0_gt,
        &gamma,
        &schedule,
        &mut noise,
    )
    .context("sampling")
    .data()?;
    let out = positions_from_tensor(&x0, seq.fps, "guide").data()?;
    write_hmx(require_out(common)?, &out).data()
}

fn fsq(common: &Common, op: FsqOp) -> Res<()> {
    let out = require_out(common)?;
    match op {
        FsqOp::Encode {
            input,
            levels,
            codebook,
        } => {
            let cfg = match (levels, codebook) {
                (Some(l), None) => {
                    let levels = l
                        .split(',')
                        .map(|s| s.trim().parse::<u32>())
                        .collect::<Result<Vec<_>, _>>()
                        .context("--levels")
                        .invalid()?;
                    FsqConfig::new(levels).invalid()?
                }
                (None, Some(size)) => FsqConfig::for_codebook(size)
                    .ok_or_else(|| anyhow!("no standard factorization for codebook {size}"))
                    .invalid()?,
                _ => return Err(anyhow!("give --levels or --codebook")).invalid(),
            };
            let bytes = fs::read(&input)
                .with_context(|| format!("reading {}", input.display()))
                .data()?;
            let ys = handkit_core::repr::from_le_bytes(&bytes).data()?;
            if ys.len() % cfg.dim() != 0 {
                return Err(anyhow!(
                    "{} values do not split into dim {}",
                    ys.len(),
                    cfg.dim()
                ))
                .data();
            }
            let tokens = ys
                .chunks(cfg.dim())
                .map(|y| cfg.quantize(y).and_then(|q| cfg.token(&q)))
                .collect::<Result<Vec<_>, _>>()
                .data()?;
            write_tokens(out, &cfg, &tokens).data()
        }
        FsqOp::Decode { input } => {
            let (header, tokens) = read_tokens(&input).data()?;
            let cfg = FsqConfig::new(header.levels).data()?;
            let mut ys = Vec::with_capacity(tokens.len() * cfg.dim());
            for t in tokens {
                let q = cfg.code_from_index(t as u64).data()?;
                ys.extend(cfg.dequantize(&q).data()?);
            }
            fs::write(out, handkit_core::repr::to_le_bytes(&ys))
                .with_context(|| format!("writing {}", out.display()))
                .data()
        }
    }
}
