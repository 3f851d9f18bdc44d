//! Masked partial denoising: constraint weight fields, task center frames,
//! clean-signal blending and renoising around an injected denoiser.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{Hand, JOINTS_PER_HAND, NUM_HANDS, WRIST};

/// Joints in a two-hand sample.
pub const SAMPLE_JOINTS: usize = NUM_HANDS * JOINTS_PER_HAND;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("step {t} outside 1..={max}")]
    Step { t: usize, max: usize },
    #[error("keyframe task needs at least one keyframe")]
    NoKeyframes,
    #[error("center frame {frame} outside a {len}-frame window")]
    CenterOutOfRange { frame: usize, len: usize },
    #[error("denoiser failed at step {t}: {message}")]
    Denoiser { t: usize, message: String },
}

/// Dense frames × joints × channels array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub frames: usize,
    pub joints: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(frames: usize, joints: usize, channels: usize) -> Self {
        Self {
            frames,
            joints,
            channels,
            data: vec![0.0; frames * joints * channels],
        }
    }

    pub fn from_vec(
        frames: usize,
        joints: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, GuidanceError> {
        if data.len() != frames * joints * channels {
            return Err(GuidanceError::Shape(format!(
                "{} values for {frames} x {joints} x {channels}",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            joints,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.joints, self.channels)
    }

    pub fn cell(&self, t: usize, j: usize) -> &[f64] {
        let k = (t * self.joints + j) * self.channels;
        &self.data[k..k + self.channels]
    }

    pub fn cell_mut(&mut self, t: usize, j: usize) -> &mut [f64] {
        let k = (t * self.joints + j) * self.channels;
        &mut self.data[k..k + self.channels]
    }

    fn same_shape(&self, other: &Tensor) -> Result<(), GuidanceError> {
        if self.shape() != other.shape() {
            return Err(GuidanceError::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub p_hard: f64,
    pub p_soft: f64,
    pub k_trans: usize,
    pub k_inbet: usize,
    pub k_hor: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            p_hard: 0.85,
            p_soft: 0.10,
            k_trans: 5,
            k_inbet: 5,
            k_hor: 10,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(0.0 <= self.p_soft && self.p_soft <= self.p_hard && self.p_hard <= 1.0) {
            return Err(GuidanceError::Config(format!(
                "need 0 <= p_soft <= p_hard <= 1, got {} and {}",
                self.p_soft, self.p_hard
            )));
        }
        if self.k_trans < 1 {
            return Err(GuidanceError::Config("k_trans must be >= 1".into()));
        }
        if self.k_inbet < 1 || self.k_hor < 1 {
            return Err(GuidanceError::Config(
                "k_inbet and k_hor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Center frames per joint over a window of `len` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenterSets {
    pub len: usize,
    pub per_joint: Vec<BTreeSet<usize>>,
}

impl CenterSets {
    pub fn empty(len: usize, joints: usize) -> Self {
        Self {
            len,
            per_joint: vec![BTreeSet::new(); joints],
        }
    }

    pub fn uniform(len: usize, joints: usize, frames: &BTreeSet<usize>) -> Self {
        Self {
            len,
            per_joint: vec![frames.clone(); joints],
        }
    }

    pub fn validate(&self) -> Result<(), GuidanceError> {
        for c in &self.per_joint {
            if let Some(&frame) = c.iter().next_back().filter(|&&f| f >= self.len) {
                return Err(GuidanceError::CenterOutOfRange {
                    frame,
                    len: self.len,
                });
            }
        }
        Ok(())
    }
}

/// Constraint weight per frame and joint, `data[t * joints + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaField {
    pub frames: usize,
    pub joints: usize,
    pub data: Vec<f64>,
}

impl GammaField {
    pub fn at(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.joints + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&g| g == 0.0)
    }
}

/// Weight of one window centered at `center` seen from frame `t`.
pub fn window_weight(t: usize, center: usize, cfg: &GuidanceConfig) -> f64 {
    let d = t.abs_diff(center);
    match d {
        0 => cfg.p_hard,
        d if d > cfg.k_trans => 0.0,
        // anchored at p_soft so the window edge is exact
        d => cfg.p_soft + (cfg.p_hard - cfg.p_soft) * (cfg.k_trans - d) as f64 / cfg.k_trans as f64,
    }
}

/// Linear decay from each center over `k_trans` frames, strongest window wins.
pub fn gamma_field(
    centers: &CenterSets,
    cfg: &GuidanceConfig,
) -> Result<GammaField, GuidanceError> {
    cfg.validate()?;
    centers.validate()?;
    let (frames, joints) = (centers.len, centers.per_joint.len());
    let mut data = vec![0.0f64; frames * joints];
    for (j, cs) in centers.per_joint.iter().enumerate() {
        for &c in cs {
            let lo = c.saturating_sub(cfg.k_trans);
            let hi = (c + cfg.k_trans).min(frames - 1);
            for t in lo..=hi {
                let g = &mut data[t * joints + j];
                *g = (*g).max(window_weight(t, c, cfg));
            }
        }
    }
    Ok(GammaField {
        frames,
        joints,
        data,
    })
}

/// `(1 - γ)·pred + γ·gt` per cell; cells with γ = 0 keep `pred` untouched.
pub fn blend_clean(
    pred: &Tensor,
    gt: &Tensor,
    gamma: &GammaField,
) -> Result<Tensor, GuidanceError> {
    pred.same_shape(gt)?;
    if (gamma.frames, gamma.joints) != (pred.frames, pred.joints) {
        return Err(GuidanceError::Shape(format!(
            "gamma {} x {} for tensor {:?}",
            gamma.frames,
            gamma.joints,
            pred.shape()
        )));
    }
    let mut out = pred.clone();
    let c = pred.channels;
    for (k, &g) in gamma.data.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for i in k * c..(k + 1) * c {
            out.data[i] = (1.0 - g) * pred.data[i] + g * gt.data[i];
        }
    }
    Ok(out)
}

/// Cumulative signal levels `alpha_bar[t]` for t = 0..=T, with
/// `alpha_bar[0] = 1` and `alpha_bar[t] = Π_{s<=t} (1 - β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, GuidanceError> {
        if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(GuidanceError::Config("betas must lie in (0, 1)".into()));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        let mut a = 1.0;
        for b in &betas {
            a *= 1.0 - b;
            alpha_bar.push(a);
        }
        Ok(Self { betas, alpha_bar })
    }

    /// Linear betas from `start` to `end` over `steps`.
    pub fn linear(start: f64, end: f64, steps: usize) -> Result<Self, GuidanceError> {
        if steps == 0 {
            return Err(GuidanceError::Config("schedule needs >= 1 step".into()));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    start
                } else {
                    start + (end - start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(1e-4, 2e-2, 1000).expect("default schedule")
    }
}

/// Source of standard normal noise.
pub trait NoiseSource {
    fn fill(&mut self, out: &mut [f64]);
}

/// Always zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Seeded standard normal noise.
#[derive(Debug, Clone)]
pub struct SeededNoise(ChaCha8Rng);

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl NoiseSource for SeededNoise {
    fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = StandardNormal.sample(&mut self.0);
        }
    }
}

/// `x_{t-1} = sqrt(ᾱ_{t-1})·x0 + sqrt(1 - ᾱ_{t-1})·ε`.
pub fn renoise(
    x0: &Tensor,
    t: usize,
    schedule: &NoiseSchedule,
    noise: &mut dyn NoiseSource,
) -> Result<Tensor, GuidanceError> {
    if t < 1 || t > schedule.steps() {
        return Err(GuidanceError::Step {
            t,
            max: schedule.steps(),
        });
    }
    let a = schedule.alpha_bar[t - 1];
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let mut eps = vec![0.0; x0.data.len()];
    noise.fill(&mut eps);
    let mut out = x0.clone();
    for (o, e) in out.data.iter_mut().zip(&eps) {
        *o = sa * *o + sn * e;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Start and end frames fixed.
    InBetween,
    /// Full-skeleton poses at the given frames.
    Keyframe(Vec<usize>),
    /// Both wrists fixed on every frame.
    WristTrajectory,
    /// One hand fully given, the other generated.
    HandReaction(Hand),
    /// Continuation of a previous window.
    LongHorizon,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::InBetween => "inbetween",
            Task::Keyframe(_) => "keyframe",
            Task::WristTrajectory => "wrist",
            Task::HandReaction(_) => "reaction",
            Task::LongHorizon => "longhorizon",
        }
    }
}

/// Center frames of a task over a `len`-frame window of two hands.
pub fn task_centers(
    task: &Task,
    len: usize,
    cfg: &GuidanceConfig,
) -> Result<CenterSets, GuidanceError> {
    cfg.validate()?;
    let all: BTreeSet<usize> = (0..len).collect();
    let joints = SAMPLE_JOINTS;
    let sets = match task {
        Task::InBetween => {
            let k = cfg.k_inbet.min(len);
            let frames = (0..k).chain(len - k..len).collect();
            CenterSets::uniform(len, joints, &frames)
        }
        Task::Keyframe(keys) => {
            if keys.is_empty() {
                return Err(GuidanceError::NoKeyframes);
            }
            CenterSets::uniform(len, joints, &keys.iter().copied().collect())
        }
        Task::WristTrajectory => {
            let mut c = CenterSets::empty(len, joints);
            for h in 0..NUM_HANDS {
                c.per_joint[h * JOINTS_PER_HAND + WRIST] = all.clone();
            }
            c
        }
        Task::HandReaction(cond) => {
            let mut c = CenterSets::empty(len, joints);
            let base = cond.index() * JOINTS_PER_HAND;
            for j in base..base + JOINTS_PER_HAND {
                c.per_joint[j] = all.clone();
            }
            c
        }
        Task::LongHorizon => CenterSets::uniform(len, joints, &(0..cfg.k_hor.min(len)).collect()),
    };
    sets.validate()?;
    Ok(sets)
}

/// Target for the long-horizon task: the last `k_hor + k_trans` frames of
/// `previous` copied to the head of a `len`-frame window, zeros after.
pub fn long_horizon_target(
    previous: &Tensor,
    len: usize,
    cfg: &GuidanceConfig,
) -> Result<Tensor, GuidanceError> {
    let n = cfg.k_hor + cfg.k_trans;
    if previous.frames < n || len < n {
        return Err(GuidanceError::Shape(format!(
            "long horizon needs {n} frames, previous has {} and the window {len}",
            previous.frames
        )));
    }
    let mut out = Tensor::zeros(len, previous.joints, previous.channels);
    let row = previous.joints * previous.channels;
    let src = (previous.frames - n) * row;
    out.data[..n * row].copy_from_slice(&previous.data[src..src + n * row]);
    Ok(out)
}

/// Runs t = T..1: predict x0, blend toward `x0_gt` with `gamma`, renoise to
/// t-1. Returns the blended x0 of the final step.
pub fn guided_sample<F>(
    mut denoiser: F,
    x_t: Tensor,
    x0_gt: &Tensor,
    gamma: &GammaField,
    schedule: &NoiseSchedule,
    noise: &mut dyn NoiseSource,
) -> Result<Tensor, GuidanceError>
where
    F: FnMut(&Tensor, usize) -> Result<Tensor, String>,
{
    x_t.same_shape(x0_gt)?;
    let mut x = x_t;
    let mut last = None;
    for t in (1..=schedule.steps()).rev() {
        let pred = denoiser(&x, t).map_err(|message| GuidanceError::Denoiser { t, message })?;
        pred.same_shape(x0_gt)
            .map_err(|e| GuidanceError::Denoiser {
                t,
                message: e.to_string(),
            })?;
        let x0 = blend_clean(&pred, x0_gt, gamma)?;
        x = renoise(&x0, t, schedule, noise)?;
        last = Some(x0);
    }
    Ok(last.expect("schedule has at least one step"))
}

/// Seeded standard normal starting sample.
pub fn initial_noise(frames: usize, joints: usize, channels: usize, seed: u64) -> Tensor {
    let mut t = Tensor::zeros(frames, joints, channels);
    SeededNoise::new(seed).fill(&mut t.data);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GuidanceConfig {
        GuidanceConfig::default()
    }

    #[test]
    fn window_values() {
        let c = cfg();
        let centers = CenterSets::uniform(30, 1, &[10].into());
        let g = gamma_field(&centers, &c).unwrap();
        assert_eq!(g.at(10, 0), 0.85);
        assert_eq!(g.at(15, 0), 0.10);
        assert_eq!(g.at(5, 0), 0.10);
        assert!((g.at(12, 0) - (0.85 - 0.75 * 2.0 / 5.0)).abs() < 1e-15);
        assert!((g.at(12, 0) - 0.55).abs() < 1e-12);
        assert_eq!(g.at(16, 0), 0.0);
        assert_eq!(g.at(4, 0), 0.0);
    }

    #[test]
    fn overlap_is_pointwise_max() {
        let c = GuidanceConfig {
            k_trans: 3,
            ..cfg()
        };
        for len in 1..=20usize {
            for a in 0..len {
                for b in a..len {
                    let both =
                        gamma_field(&CenterSets::uniform(len, 1, &[a, b].into()), &c).unwrap();
                    let ga = gamma_field(&CenterSets::uniform(len, 1, &[a].into()), &c).unwrap();
                    let gb = gamma_field(&CenterSets::uniform(len, 1, &[b].into()), &c).unwrap();
                    for t in 0..len {
                        assert_eq!(both.at(t, 0), ga.at(t, 0).max(gb.at(t, 0)));
                        assert!(both.at(t, 0) <= c.p_hard);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(GuidanceConfig {
            p_soft: 0.9,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(GuidanceConfig {
            p_hard: 1.1,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(GuidanceConfig {
            k_trans: 0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(CenterSets::uniform(5, 1, &[5].into()).validate().is_err());
        assert!(matches!(
            task_centers(&Task::Keyframe(vec![]), 10, &cfg()),
            Err(GuidanceError::NoKeyframes)
        ));
    }

    #[test]
    fn task_center_constructions() {
        let c = task_centers(&Task::InBetween, 60, &cfg()).unwrap();
        let want: BTreeSet<usize> = (0..5).chain(55..60).collect();
        assert!(c.per_joint.iter().all(|s| *s == want));
        assert_eq!(c.per_joint.len(), 42);

        let g = gamma_field(
            &task_centers(&Task::WristTrajectory, 20, &cfg()).unwrap(),
            &cfg(),
        )
        .unwrap();
        for t in 0..20 {
            for j in 0..42 {
                let wrist = j == 0 || j == 21;
                assert_eq!(g.at(t, j) == 0.85, wrist);
                assert_eq!(g.at(t, j) == 0.0, !wrist);
            }
        }
        let g = gamma_field(
            &task_centers(&Task::HandReaction(Hand::Left), 20, &cfg()).unwrap(),
            &cfg(),
        )
        .unwrap();
        for t in 0..20 {
            assert!((0..21).all(|j| g.at(t, j) == 0.85));
            assert!((21..42).all(|j| g.at(t, j) == 0.0));
        }
        let c = task_centers(&Task::LongHorizon, 60, &cfg()).unwrap();
        assert_eq!(c.per_joint[7], (0..10).collect());
        let c = task_centers(&Task::Keyframe(vec![3, 40]), 60, &cfg()).unwrap();
        assert_eq!(c.per_joint[41], [3, 40].into());
    }

    fn filled(frames: usize, joints: usize, channels: usize, f: impl Fn(usize) -> f64) -> Tensor {
        let n = frames * joints * channels;
        Tensor::from_vec(frames, joints, channels, (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn blend_examples() {
        let pred = filled(4, 2, 3, |i| i as f64);
        let gt = filled(4, 2, 3, |i| 100.0 - i as f64);
        let zero = GammaField {
            frames: 4,
            joints: 2,
            data: vec![0.0; 8],
        };
        assert_eq!(blend_clean(&pred, &gt, &zero).unwrap(), pred);
        let mut g = zero.clone();
        g.data[3] = 0.85;
        let out = blend_clean(&pred, &gt, &g).unwrap();
        for i in 9..12 {
            assert_eq!(out.data[i], 0.85 * gt.data[i] + 0.15 * pred.data[i]);
        }
        let same = blend_clean(&gt, &gt, &g).unwrap();
        for (a, b) in same.data.iter().zip(&gt.data) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(blend_clean(&pred, &filled(4, 2, 2, |_| 0.0), &g).is_err());
    }

    #[test]
    fn schedule_shape() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert_eq!(s.betas[0], 1e-4);
        assert!((s.betas[999] - 2e-2).abs() < 1e-15);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar.iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn renoise_rules() {
        let s = NoiseSchedule::default();
        let x0 = filled(3, 2, 4, |i| i as f64 * 0.1 - 1.0);
        let out = renoise(&x0, 500, &s, &mut ZeroNoise).unwrap();
        let a = s.alpha_bar[499].sqrt();
        for (o, x) in out.data.iter().zip(&x0.data) {
            assert_eq!(*o, a * x);
        }
        // alpha_bar[0] = 1 reproduces x0
        let out = renoise(&x0, 1, &s, &mut SeededNoise::new(3)).unwrap();
        assert_eq!(out, x0);
        assert!(renoise(&x0, 0, &s, &mut ZeroNoise).is_err());
        assert!(renoise(&x0, 1001, &s, &mut ZeroNoise).is_err());
    }

    #[test]
    fn seeded_noise_moments() {
        let s = NoiseSchedule::default();
        let t = 700;
        let a = s.alpha_bar[t - 1];
        let x0 = Tensor::from_vec(1, 1, 1, vec![0.7]).unwrap();
        let n = 10_000;
        let mut noise = SeededNoise::new(42);
        let draws: Vec<f64> = (0..n)
            .map(|_| renoise(&x0, t, &s, &mut noise).unwrap().data[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = (1.0 - a).sqrt();
        assert!((mean - a.sqrt() * 0.7).abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((var / (1.0 - a) - 1.0).abs() < 0.05);
    }

    fn short_schedule() -> NoiseSchedule {
        NoiseSchedule::linear(1e-3, 0.2, 25).unwrap()
    }

    #[test]
    fn oracle_denoiser_returns_target_for_every_task() {
        let len = 24;
        let gt = filled(len, SAMPLE_JOINTS, 4, |i| {
            ((i * 7919) % 1000) as f64 / 500.0 - 1.0
        });
        let tasks = [
            Task::InBetween,
            Task::Keyframe(vec![0, 11, 23]),
            Task::WristTrajectory,
            Task::HandReaction(Hand::Right),
            Task::LongHorizon,
        ];
        for task in tasks {
            let g = gamma_field(&task_centers(&task, len, &cfg()).unwrap(), &cfg()).unwrap();
            let out = guided_sample(
                |_, _| Ok(gt.clone()),
                initial_noise(len, SAMPLE_JOINTS, 4, 5),
                &gt,
                &g,
                &short_schedule(),
                &mut SeededNoise::new(6),
            )
            .unwrap();
            let err = out
                .data
                .iter()
                .zip(&gt.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{} {err}", task.name());
        }
    }

    #[test]
    fn zero_denoiser_cases() {
        let len = 12;
        let gt = filled(len, SAMPLE_JOINTS, 4, |i| 1.0 + (i % 13) as f64);
        let zero = |x: &Tensor, _: usize| Ok(Tensor::zeros(x.frames, x.joints, x.channels));
        let none = gamma_field(&CenterSets::empty(len, SAMPLE_JOINTS), &cfg()).unwrap();
        let out = guided_sample(
            zero,
            initial_noise(len, 42, 4, 1),
            &gt,
            &none,
            &short_schedule(),
            &mut SeededNoise::new(2),
        )
        .unwrap();
        assert!(out.data.iter().all(|&x| x == 0.0));

        let g = gamma_field(
            &task_centers(&Task::Keyframe(vec![4]), len, &cfg()).unwrap(),
            &cfg(),
        )
        .unwrap();
        let out = guided_sample(
            zero,
            initial_noise(len, 42, 4, 1),
            &gt,
            &g,
            &short_schedule(),
            &mut SeededNoise::new(2),
        )
        .unwrap();
        for t in 0..len {
            for j in 0..SAMPLE_JOINTS {
                let gam = g.at(t, j);
                for (o, x) in out.cell(t, j).iter().zip(gt.cell(t, j)) {
                    assert_eq!(*o, gam * x);
                }
            }
        }
    }

    #[test]
    fn empty_centers_match_unguided_loop() {
        let len = 8;
        let gt = filled(len, SAMPLE_JOINTS, 4, |i| i as f64);
        let den = |x: &Tensor, t: usize| {
            let mut y = x.clone();
            y.data
                .iter_mut()
                .for_each(|v| *v = 0.9 * *v + 0.001 * t as f64);
            Ok(y)
        };
        let s = short_schedule();
        let none = gamma_field(&CenterSets::empty(len, SAMPLE_JOINTS), &cfg()).unwrap();
        let guided = guided_sample(
            den,
            initial_noise(len, 42, 4, 9),
            &gt,
            &none,
            &s,
            &mut SeededNoise::new(10),
        )
        .unwrap();
        // plain loop
        let mut noise = SeededNoise::new(10);
        let mut x = initial_noise(len, 42, 4, 9);
        let mut last = x.clone();
        for t in (1..=s.steps()).rev() {
            last = den(&x, t).unwrap();
            x = renoise(&last, t, &s, &mut noise).unwrap();
        }
        assert_eq!(guided, last);
    }

    #[test]
    fn denoiser_errors_carry_the_step() {
        let gt = Tensor::zeros(3, SAMPLE_JOINTS, 4);
        let g = gamma_field(&CenterSets::empty(3, SAMPLE_JOINTS), &cfg()).unwrap();
        let err = guided_sample(
            |_, t| {
                if t == 20 {
                    Err("boom".into())
                } else {
                    Ok(gt.clone())
                }
            },
            gt.clone(),
            &gt,
            &g,
            &short_schedule(),
            &mut ZeroNoise,
        )
        .unwrap_err();
        assert!(matches!(err, GuidanceError::Denoiser { t: 20, .. }));
    }

    #[test]
    fn long_horizon_copies_tail() {
        let prev = filled(30, 2, 1, |i| i as f64);
        let c = cfg();
        let out = long_horizon_target(&prev, 20, &c).unwrap();
        for t in 0..15 {
            assert_eq!(out.cell(t, 1), prev.cell(15 + t, 1));
        }
        assert!(out.data[15 * 2..].iter().all(|&x| x == 0.0));
        assert!(long_horizon_target(&prev, 10, &c).is_err());
    }
}
