//! Clip extraction around defective frames, the intensity filter and
//! dataset-level interaction statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{contact_labels, ContactError, CONTACT_THRESHOLD};
use crate::descriptors::angle_deg;
use crate::motion::{
    joint, Finger, Hand, MotionSequence, Segment, SkeletonTopology, JOINTS_PER_HAND, WRIST,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClipError {
    #[error("degenerate segment at frame {frame}")]
    DegenerateSegment { frame: usize },
    #[error("clip needs at least 2 frames")]
    TooShort,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectReason {
    Nonfinite,
    Velocity,
    BoneLength,
}

impl DefectReason {
    pub fn name(self) -> &'static str {
        match self {
            DefectReason::Nonfinite => "nonfinite",
            DefectReason::Velocity => "velocity",
            DefectReason::BoneLength => "bone_length",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectConfig {
    /// Joint speed cap, m/s.
    pub max_speed: f64,
    /// Allowed relative deviation from the median bone length.
    pub bone_tolerance: f64,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self {
            max_speed: 5.0,
            bone_tolerance: 0.2,
        }
    }
}

impl DefectConfig {
    pub fn validate(&self) -> Result<(), ClipError> {
        if !(self.max_speed > 0.0) || !(self.bone_tolerance > 0.0) {
            return Err(ClipError::Config(
                "max_speed and bone_tolerance must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub defective_frames: Vec<usize>,
    pub reasons: BTreeMap<usize, Vec<DefectReason>>,
}

impl DefectReport {
    pub fn from_frames(frames: impl IntoIterator<Item = usize>) -> Self {
        let mut r = Self::default();
        for f in frames {
            r.flag(f, DefectReason::Nonfinite);
        }
        r.finish();
        r
    }

    fn flag(&mut self, frame: usize, reason: DefectReason) {
        let v = self.reasons.entry(frame).or_default();
        if !v.contains(&reason) {
            v.push(reason);
        }
    }

    fn finish(&mut self) {
        self.defective_frames = self.reasons.keys().copied().collect();
        for v in self.reasons.values_mut() {
            v.sort();
        }
    }

    pub fn is_defective(&self, frame: usize) -> bool {
        self.reasons.contains_key(&frame)
    }
}

fn finite_frame(fr: &crate::motion::Frame) -> bool {
    fr.iter().flatten().all(|p| p.iter().all(|c| c.is_finite()))
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Flags frames that are non-finite, move a joint faster than the speed cap
/// from the previous frame, or have a bone far from its median length.
pub fn detect_defects(seq: &MotionSequence, cfg: &DefectConfig) -> DefectReport {
    let mut report = DefectReport::default();
    let finite: Vec<bool> = seq.frames.iter().map(finite_frame).collect();
    for (i, ok) in finite.iter().enumerate() {
        if !ok {
            report.flag(i, DefectReason::Nonfinite);
        }
    }
    for i in 1..seq.len() {
        if !(finite[i] && finite[i - 1]) {
            continue;
        }
        let fast = (0..2).any(|h| {
            (0..JOINTS_PER_HAND).any(|j| {
                (seq.frames[i][h][j] - seq.frames[i - 1][h][j]).norm() * seq.fps > cfg.max_speed
            })
        });
        if fast {
            report.flag(i, DefectReason::Velocity);
        }
    }
    let bones: Vec<(usize, usize)> = SkeletonTopology::hand21().bones().collect();
    for h in 0..2 {
        for &(a, b) in &bones {
            let lengths: Vec<(usize, f64)> = seq
                .frames
                .iter()
                .enumerate()
                .filter(|(i, _)| finite[*i])
                .map(|(i, fr)| (i, (fr[h][a] - fr[h][b]).norm()))
                .collect();
            let mut sorted: Vec<f64> = lengths.iter().map(|x| x.1).collect();
            let Some(med) = median(&mut sorted) else {
                continue;
            };
            for (i, l) in lengths {
                if (l - med).abs() > cfg.bone_tolerance * med {
                    report.flag(i, DefectReason::BoneLength);
                }
            }
        }
    }
    report.finish();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawClipSpec")]
pub struct ClipSpec {
    pub length: usize,
    pub stride: usize,
}

/// Serialized form; a missing stride equals the length.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClipSpec {
    #[serde(default = "default_clip_length")]
    length: usize,
    stride: Option<usize>,
}

fn default_clip_length() -> usize {
    60
}

impl From<RawClipSpec> for ClipSpec {
    fn from(r: RawClipSpec) -> Self {
        Self {
            length: r.length,
            stride: r.stride.unwrap_or(r.length),
        }
    }
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self::new(default_clip_length())
    }
}

impl ClipSpec {
    pub fn new(length: usize) -> Self {
        Self {
            length,
            stride: length,
        }
    }

    pub fn validate(&self) -> Result<(), ClipError> {
        if self.length < 2 || self.stride < 1 {
            return Err(ClipError::Config("clip length >= 2 and stride >= 1".into()));
        }
        Ok(())
    }
}

/// Maximal runs of non-defective frames as inclusive `(first, last)`.
pub fn valid_intervals(n_frames: usize, defects: &DefectReport) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for f in 0..n_frames {
        match (defects.is_defective(f), start) {
            (false, None) => start = Some(f),
            (true, Some(s)) => {
                out.push((s, f - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n_frames - 1));
    }
    out
}

/// Half-open `[start, end)` windows placed at `a, a + stride, …` inside every
/// valid interval while they fit.
pub fn extract_clips(
    n_frames: usize,
    defects: &DefectReport,
    spec: &ClipSpec,
) -> Result<Vec<(usize, usize)>, ClipError> {
    spec.validate()?;
    let mut out = Vec::new();
    for (a, b) in valid_intervals(n_frames, defects) {
        let mut s = a;
        while s + spec.length <= b + 1 {
            out.push((s, s + spec.length));
            s += spec.stride;
        }
    }
    Ok(out)
}

/// Distal-pointing deviation angle of one joint per frame, degrees.
pub fn bending_angle_series(
    seq: &MotionSequence,
    hand: Hand,
    finger: Finger,
    segment: Segment,
) -> Result<Vec<f64>, ClipError> {
    if segment == Segment::Tip {
        return Err(ClipError::Config("tips have no bending angle".into()));
    }
    let j = joint(finger, segment);
    let pre = if segment == Segment::Mcp {
        WRIST
    } else {
        j - 1
    };
    seq.frames
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            let p = &fr[hand.index()];
            angle_deg(&(p[j] - p[pre]), &(p[j + 1] - p[j]))
                .ok_or(ClipError::DegenerateSegment { frame: i })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntensityConfig {
    /// Weights per hand-local joint (21); only MCP, PIP and DIP carry angles.
    pub joint_weights: [f64; JOINTS_PER_HAND],
    /// Per-hand threshold, deg/s.
    pub tau_hand: f64,
    /// Two-hand mean threshold, deg/s.
    pub tau_avg: f64,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        let mut w = [0.0; JOINTS_PER_HAND];
        for f in Finger::ALL {
            w[joint(f, Segment::Mcp)] = 4.0;
            w[joint(f, Segment::Pip)] = 2.0;
            w[joint(f, Segment::Dip)] = 1.0;
        }
        Self {
            joint_weights: w,
            tau_hand: 25.0,
            tau_avg: 30.0,
        }
    }
}

impl IntensityConfig {
    pub fn validate(&self) -> Result<(), ClipError> {
        let w = &self.joint_weights;
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(ClipError::Config("joint weights must be >= 0".into()));
        }
        for f in Finger::ALL {
            let chain = Segment::ALL.map(|s| w[joint(f, s)]);
            if chain.windows(2).any(|p| p[0] < p[1]) {
                return Err(ClipError::Config(format!(
                    "{f} weights must not increase distally"
                )));
            }
        }
        if Finger::ALL
            .iter()
            .map(|f| w[joint(*f, Segment::Tip)])
            .any(|x| x != 0.0)
            || w[WRIST] != 0.0
        {
            return Err(ClipError::Config(
                "wrist and fingertips have no bending angle; their weight must be 0".into(),
            ));
        }
        if !(self.tau_hand >= 0.0 && self.tau_avg >= 0.0) {
            return Err(ClipError::Config("thresholds must be >= 0".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(ClipError::Config("at least one weight must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub left: f64,
    pub right: f64,
    pub avg: f64,
}

/// Angular speed per frame, deg/s: forward differences, last value repeated.
pub fn angular_speed(theta: &[f64], fps: f64) -> Vec<f64> {
    if theta.len() < 2 {
        return vec![0.0; theta.len()];
    }
    let mut w: Vec<f64> = theta
        .windows(2)
        .map(|p| (p[1] - p[0]).abs() * fps)
        .collect();
    w.push(*w.last().expect("non-empty"));
    w
}

/// Weighted mean angular speed per hand and their mean.
pub fn clip_intensity(
    clip: &MotionSequence,
    cfg: &IntensityConfig,
) -> Result<Intensity, ClipError> {
    if clip.len() < 2 {
        return Err(ClipError::TooShort);
    }
    let total_w: f64 = cfg.joint_weights.iter().sum();
    if !(total_w > 0.0) {
        return Err(ClipError::Config("at least one weight must be > 0".into()));
    }
    let mut hands = [0.0; 2];
    for hand in Hand::BOTH {
        let mut acc = 0.0;
        for f in Finger::ALL {
            for s in Segment::BENDING {
                let w = cfg.joint_weights[joint(f, s)];
                if w == 0.0 {
                    continue;
                }
                let theta = bending_angle_series(clip, hand, f, s)?;
                let omega = angular_speed(&theta, clip.fps);
                acc += w * omega.iter().sum::<f64>();
            }
        }
        hands[hand.index()] = acc / (total_w * clip.len() as f64);
    }
    Ok(Intensity {
        left: hands[0],
        right: hands[1],
        avg: 0.5 * (hands[0] + hands[1]),
    })
}

pub fn passes(i: &Intensity, cfg: &IntensityConfig) -> bool {
    i.left >= cfg.tau_hand && i.right >= cfg.tau_hand && i.avg >= cfg.tau_avg
}

/// Indices of the clips that pass the intensity rule.
pub fn filter_clips(intensities: &[Intensity], cfg: &IntensityConfig) -> Vec<usize> {
    intensities
        .iter()
        .enumerate()
        .filter(|(_, i)| passes(i, cfg))
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub contact_ratio: f64,
    pub contact_duration_s: f64,
    pub contact_freq_per_min: f64,
    pub motion_intensity_deg_s: f64,
}

/// Lengths in frames of the maximal `true` runs.
pub fn true_runs(v: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for &b in v {
        if b {
            run += 1;
        } else if run > 0 {
            out.push(run);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run);
    }
    out
}

/// Running sums behind [`DatasetStats`]; clips can be added in any grouping
/// as long as the final order of additions is fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StatsAccumulator {
    frames: usize,
    contact_frames: usize,
    spans: usize,
    span_seconds: f64,
    seconds: f64,
    intensity_sum: f64,
    clips: usize,
}

impl StatsAccumulator {
    /// Contact and intensity sums of one clip.
    pub fn for_clip(
        clip: &MotionSequence,
        intensity_avg: f64,
        threshold: f64,
        seed: u64,
    ) -> Result<Self, ClipError> {
        let labels = contact_labels(clip, threshold, seed)?;
        let runs = true_runs(&labels.inter);
        Ok(Self {
            frames: clip.len(),
            contact_frames: labels.inter.iter().filter(|b| **b).count(),
            spans: runs.len(),
            span_seconds: runs.iter().map(|r| *r as f64 / clip.fps).sum(),
            seconds: clip.len() as f64 / clip.fps,
            intensity_sum: intensity_avg,
            clips: 1,
        })
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.frames += other.frames;
        self.contact_frames += other.contact_frames;
        self.spans += other.spans;
        self.span_seconds += other.span_seconds;
        self.seconds += other.seconds;
        self.intensity_sum += other.intensity_sum;
        self.clips += other.clips;
    }

    pub fn clips(&self) -> usize {
        self.clips
    }

    pub fn finish(&self) -> DatasetStats {
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        DatasetStats {
            contact_ratio: div(self.contact_frames as f64, self.frames as f64),
            contact_duration_s: div(self.span_seconds, self.spans as f64),
            contact_freq_per_min: div(self.spans as f64, self.seconds / 60.0),
            motion_intensity_deg_s: div(self.intensity_sum, self.clips as f64),
        }
    }
}

/// Contact ratio, mean contact span (s), contact events per minute and mean
/// two-hand intensity over a set of clips.
pub fn dataset_stats(
    clips: &[MotionSequence],
    intensity: &IntensityConfig,
    seed: u64,
) -> Result<DatasetStats, ClipError> {
    let mut acc = StatsAccumulator::default();
    for clip in clips {
        let avg = clip_intensity(clip, intensity)?.avg;
        acc.merge(&StatsAccumulator::for_clip(
            clip,
            avg,
            CONTACT_THRESHOLD,
            seed,
        )?);
    }
    Ok(acc.finish())
}
