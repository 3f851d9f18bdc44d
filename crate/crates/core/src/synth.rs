//! Synthetic bimanual motion.
//!
//! A small forward-kinematic hand: fixed palm geometry, per-finger splay and
//! three flexion angles per finger. Right-hand local frame has +y toward the
//! fingers, +x toward the little finger and the palm facing -z. The left hand
//! mirrors x.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::motion::{
    empty_frame, joint, Finger, Frame, Hand, HandPose, MotionSequence, Segment, Vec3,
    JOINTS_PER_HAND, WRIST,
};

#[derive(Debug, Clone)]
pub struct HandShape {
    /// MCP positions in the right-hand local frame, arched below the wrist.
    pub mcp: [Vec3; 5],
    /// Unsplayed finger directions, unit length, in the local xy-plane.
    pub base_dirs: [Vec3; 5],
    /// MCP->PIP, PIP->DIP, DIP->tip lengths.
    pub bone_lengths: [[f64; 3]; 5],
}

impl Default for HandShape {
    fn default() -> Self {
        Self {
            mcp: [
                Vec3::new(-0.030, 0.035, -0.018),
                Vec3::new(-0.025, 0.090, -0.012),
                Vec3::new(-0.005, 0.095, -0.010),
                Vec3::new(0.015, 0.090, -0.011),
                Vec3::new(0.033, 0.080, -0.014),
            ],
            base_dirs: [
                Vec3::new(-0.6, 0.8, 0.0).normalize(),
                Vec3::new(-0.1, 1.0, 0.0).normalize(),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.08, 1.0, 0.0).normalize(),
                Vec3::new(0.16, 1.0, 0.0).normalize(),
            ],
            bone_lengths: [
                [0.035, 0.030, 0.025],
                [0.040, 0.025, 0.020],
                [0.045, 0.028, 0.022],
                [0.042, 0.026, 0.021],
                [0.033, 0.020, 0.018],
            ],
        }
    }
}

impl HandShape {
    /// Uniformly scaled copy.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mcp: self.mcp.map(|p| p * s),
            base_dirs: self.base_dirs,
            bone_lengths: self.bone_lengths.map(|b| b.map(|l| l * s)),
        }
    }
}

/// Articulation of one hand, radians. Positive flexion bends toward the palm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Articulation {
    pub flex: [[f64; 3]; 5],
    pub splay: [f64; 5],
}

/// Pose of one hand in its local frame.
pub fn local_pose(shape: &HandShape, art: &Articulation, hand: Hand) -> HandPose {
    let z = Vec3::z();
    let mut pose = [Vec3::zeros(); JOINTS_PER_HAND];
    pose[WRIST] = Vec3::zeros();
    for f in Finger::ALL {
        let fi = f.index();
        let (s, c) = art.splay[fi].sin_cos();
        let b = shape.base_dirs[fi];
        let u = Vec3::new(c * b.x - s * b.y, s * b.x + c * b.y, 0.0);
        let mut p = shape.mcp[fi];
        pose[joint(f, Segment::Mcp)] = p;
        let mut phi = 0.0;
        for (k, seg) in [Segment::Pip, Segment::Dip, Segment::Tip]
            .into_iter()
            .enumerate()
        {
            phi += art.flex[fi][k];
            p += (u * phi.cos() - z * phi.sin()) * shape.bone_lengths[fi][k];
            pose[joint(f, seg)] = p;
        }
    }
    if hand == Hand::Left {
        for p in &mut pose {
            p.x = -p.x;
        }
    }
    pose
}

pub fn place(pose: &HandPose, rotation: &Matrix3<f64>, origin: Vec3) -> HandPose {
    pose.map(|p| rotation * p + origin)
}

/// A relaxed two-hand frame: palms down, wrists `gap` apart along x.
pub fn rest_frame(gap: f64) -> Frame {
    let shape = HandShape::default();
    let art = Articulation {
        flex: [[0.2, 0.3, 0.2]; 5],
        splay: [0.0; 5],
    };
    let mut fr = empty_frame();
    for hand in Hand::BOTH {
        let sign = if hand == Hand::Left { -1.0 } else { 1.0 };
        fr[hand.index()] = place(
            &local_pose(&shape, &art, hand),
            &Matrix3::identity(),
            Vec3::new(sign * gap / 2.0, 0.0, 0.0),
        );
    }
    fr
}

pub fn static_sequence(frame: Frame, n: usize, fps: f64) -> MotionSequence {
    MotionSequence::new_unchecked(fps, vec![frame; n], "static")
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    /// Flexion oscillation amplitude, radians.
    pub flex_amplitude: f64,
    /// Added to every joint's mean flexion, radians.
    pub flex_bias: f64,
    /// Mean wrist separation, meters.
    pub mean_gap: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 120,
            fps: 30.0,
            seed: 0,
            flex_amplitude: 0.5,
            flex_bias: 0.0,
            mean_gap: 0.16,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Osc {
    amp: f64,
    freq: f64,
    phase: f64,
    offset: f64,
}

impl Osc {
    fn random(rng: &mut ChaCha8Rng, amp: f64, offset: f64) -> Self {
        Self {
            amp: amp * rng.random_range(0.6..1.0),
            freq: rng.random_range(0.4..1.4),
            phase: rng.random_range(0.0..2.0 * PI),
            offset,
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.offset + self.amp * (2.0 * PI * self.freq * t + self.phase).sin()
    }
}

/// Smoothly articulating two-hand motion with intermittent hand contact.
pub fn bimanual_motion(cfg: &SynthConfig) -> MotionSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = HandShape::default().scaled(rng.random_range(0.9..1.1));
    let mut flex = [[[Osc::random(&mut rng, 0.0, 0.0); 3]; 5]; 2];
    let mut splay = [[Osc::random(&mut rng, 0.0, 0.0); 5]; 2];
    for h in 0..2 {
        for f in 0..5 {
            for k in 0..3 {
                let offset = if k == 0 { 0.35 } else { 0.45 } + cfg.flex_bias;
                flex[h][f][k] = Osc::random(&mut rng, cfg.flex_amplitude, offset);
            }
            splay[h][f] = Osc::random(&mut rng, 0.12, 0.0);
        }
    }
    let gap = Osc::random(&mut rng, cfg.mean_gap * 0.6, cfg.mean_gap);
    let drift = [
        Osc::random(&mut rng, 0.03, 0.0),
        Osc::random(&mut rng, 0.03, 0.0),
        Osc::random(&mut rng, 0.03, 0.0),
    ];
    let yaw = [
        Osc::random(&mut rng, 0.3, 0.0),
        Osc::random(&mut rng, 0.3, 0.0),
    ];
    let roll = [
        Osc::random(&mut rng, 0.25, 0.0),
        Osc::random(&mut rng, 0.25, 0.0),
    ];

    let frames = (0..cfg.frames)
        .map(|i| {
            let t = i as f64 / cfg.fps;
            let mut fr = empty_frame();
            for hand in Hand::BOTH {
                let h = hand.index();
                let sign = if hand == Hand::Left { -1.0 } else { 1.0 };
                let mut art = Articulation::default();
                for f in 0..5 {
                    for k in 0..3 {
                        art.flex[f][k] = flex[h][f][k].at(t);
                    }
                    art.splay[f] = splay[h][f].at(t);
                }
                let rot =
                    Rotation3::from_euler_angles(0.0, roll[h].at(t), yaw[h].at(t)).into_inner();
                let centre = Vec3::new(drift[0].at(t), 0.02 + drift[1].at(t), drift[2].at(t));
                let origin = centre + Vec3::new(sign * gap.at(t).max(0.02) / 2.0, 0.0, 0.0);
                fr[h] = place(&local_pose(&shape, &art, hand), &rot, origin);
            }
            fr
        })
        .collect();
    MotionSequence::new_unchecked(cfg.fps, frames, format!("synth_{}", cfg.seed))
}

/// Member `k` of the corpus generated by [`corpus`].
pub fn corpus_member(k: usize, frames_per_seq: usize, seed: u64) -> MotionSequence {
    bimanual_motion(&SynthConfig {
        frames: frames_per_seq,
        seed: seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
        ..SynthConfig::default()
    })
}

/// Number of sequences [`corpus`] generates.
pub fn corpus_len(total_frames: usize, frames_per_seq: usize) -> usize {
    total_frames.div_ceil(frames_per_seq.max(1))
}

/// Frames of member `k`: `frames_per_seq`, the last one cut to the total.
pub fn corpus_member_frames(k: usize, total_frames: usize, frames_per_seq: usize) -> usize {
    let per = frames_per_seq.max(1);
    total_frames.saturating_sub(k * per).min(per)
}

/// A corpus of independent sequences totalling exactly `total_frames`.
pub fn corpus(total_frames: usize, frames_per_seq: usize, seed: u64) -> Vec<MotionSequence> {
    (0..corpus_len(total_frames, frames_per_seq))
        .map(|k| {
            corpus_member(
                k,
                corpus_member_frames(k, total_frames, frames_per_seq),
                seed,
            )
        })
        .collect()
}
