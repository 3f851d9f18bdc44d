//! Motion sequences, rigid transforms, resampling and canonicalization.

pub mod io;
pub mod skeleton;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub use skeleton::{
    global_joint, joint, Finger, Hand, JointId, Segment, SkeletonTopology, JOINTS_PER_HAND,
    NUM_HANDS, TOTAL_JOINTS, WRIST,
};

pub type Vec3 = Vector3<f64>;

/// Joint positions of one hand.
pub type HandPose = [Vec3; JOINTS_PER_HAND];

/// Both hands at one instant, left first.
pub type Frame = [HandPose; NUM_HANDS];

pub const CANONICAL_FPS: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("sequence has no frames")]
    Empty,
    #[error("frames-per-second must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("non-finite coordinate at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: usize },
    #[error("cannot resample single frame")]
    SingleFrame,
    #[error("degenerate canonical frame")]
    DegenerateCanonicalFrame,
    #[error("malformed motion file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

pub fn empty_frame() -> Frame {
    [[Vec3::zeros(); JOINTS_PER_HAND]; NUM_HANDS]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub frames: Vec<Frame>,
    pub source_id: String,
}

impl MotionSequence {
    /// Builds a sequence, rejecting empty input, bad fps and non-finite coordinates.
    pub fn new(
        fps: f64,
        frames: Vec<Frame>,
        source_id: impl Into<String>,
    ) -> Result<Self, MotionError> {
        let seq = Self {
            fps,
            frames,
            source_id: source_id.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds a sequence without checking finiteness. Used for raw corpus data
    /// that still has to pass through defect detection.
    pub fn new_unchecked(fps: f64, frames: Vec<Frame>, source_id: impl Into<String>) -> Self {
        Self {
            fps,
            frames,
            source_id: source_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(MotionError::BadFps(self.fps));
        }
        if self.frames.is_empty() {
            return Err(MotionError::Empty);
        }
        if let Some((frame, joint)) = self.first_nonfinite() {
            return Err(MotionError::NonFinite { frame, joint });
        }
        Ok(())
    }

    pub fn first_nonfinite(&self) -> Option<(usize, usize)> {
        self.frames.iter().enumerate().find_map(|(f, fr)| {
            fr.iter()
                .flatten()
                .position(|p| !p.iter().all(|c| c.is_finite()))
                .map(|j| (f, j))
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint(&self, frame: usize, hand: Hand, j: usize) -> Vec3 {
        self.frames[frame][hand.index()][j]
    }

    /// Frames `[start, end)` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> MotionSequence {
        MotionSequence {
            fps: self.fps,
            frames: self.frames[start..end].to_vec(),
            source_id: format!("{}@{}", self.source_id, start),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn transformed(&self, t: &RigidTransform) -> MotionSequence {
        let frames = self
            .frames
            .iter()
            .map(|fr| fr.map(|hand| hand.map(|p| t.apply(&p))))
            .collect();
        MotionSequence {
            fps: self.fps,
            frames,
            source_id: self.source_id.clone(),
        }
    }
}

/// A proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// True when the rotation is orthonormal with determinant +1 within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.iter().all(|v| v.abs() <= tol) && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Per-joint linear resampling in time.
///
/// The output spans the same duration. Its frame count is the nearest whole
/// number of target periods, and its last frame is the input's last frame.
pub fn resample(seq: &MotionSequence, target_fps: f64) -> Result<MotionSequence, MotionError> {
    if !(target_fps > 0.0 && target_fps.is_finite()) {
        return Err(MotionError::BadFps(target_fps));
    }
    if target_fps == seq.fps {
        return Ok(seq.clone());
    }
    let n_in = seq.frames.len();
    if n_in < 2 {
        return Err(MotionError::SingleFrame);
    }
    let duration = (n_in - 1) as f64 / seq.fps;
    let n_out = ((duration * target_fps).round() as usize).max(1) + 1;
    let last_in = (n_in - 1) as f64;

    let mut frames = Vec::with_capacity(n_out);
    for k in 0..n_out {
        if k == n_out - 1 {
            frames.push(seq.frames[n_in - 1]);
            continue;
        }
        let pos = (k as f64 / target_fps * seq.fps).min(last_in);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        let w = pos - i0 as f64;
        let (a, b) = (&seq.frames[i0], &seq.frames[i1]);
        let mut out = empty_frame();
        for h in 0..NUM_HANDS {
            for j in 0..JOINTS_PER_HAND {
                out[h][j] = if w == 0.0 {
                    a[h][j]
                } else {
                    a[h][j] + (b[h][j] - a[h][j]) * w
                };
            }
        }
        frames.push(out);
    }
    Ok(MotionSequence {
        fps: target_fps,
        frames,
        source_id: seq.source_id.clone(),
    })
}

/// Parallel-direction tolerance for the canonical frame, in radians.
const CANONICAL_ANGLE_TOL: f64 = 1e-6;

/// The rigid transform that maps frame 0 onto the canonical convention:
/// origin at the wrist midpoint, +x from left to right wrist, +y toward the
/// middle fingertips, +z = x × y.
pub fn canonical_transform(frame: &Frame) -> Result<RigidTransform, MotionError> {
    let lw = frame[Hand::Left.index()][WRIST];
    let rw = frame[Hand::Right.index()][WRIST];
    let across = rw - lw;
    let span = across.norm();
    if !(span > 1e-9) {
        return Err(MotionError::DegenerateCanonicalFrame);
    }
    let x = across / span;

    let tip = joint(Finger::Middle, Segment::Tip);
    let forward = ((frame[0][tip] - lw) + (frame[1][tip] - rw)) * 0.5;
    let fwd_norm = forward.norm();
    if !(fwd_norm > 1e-12) {
        return Err(MotionError::DegenerateCanonicalFrame);
    }
    let ortho = forward - x * forward.dot(&x);
    // sin of the angle between forward and x
    if ortho.norm() / fwd_norm < CANONICAL_ANGLE_TOL.sin() {
        return Err(MotionError::DegenerateCanonicalFrame);
    }
    let y = ortho.normalize();
    let z = x.cross(&y);

    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let origin = (lw + rw) * 0.5;
    Ok(RigidTransform {
        rotation,
        translation: -(rotation * origin),
    })
}

/// Applies one rigid transform to every frame so that frame 0 is canonical.
pub fn canonicalize(seq: &MotionSequence) -> Result<(MotionSequence, RigidTransform), MotionError> {
    let first = seq.frames.first().ok_or(MotionError::Empty)?;
    let t = canonical_transform(first)?;
    Ok((seq.transformed(&t), t))
}

/// Random proper rotation from a unit quaternion drawn with `rng`.
pub fn random_rotation<R: rand::Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    use nalgebra::{Quaternion, UnitQuaternion};
    use rand_distr::{Distribution, StandardNormal};
    let mut c = [0.0f64; 4];
    for v in &mut c {
        *v = StandardNormal.sample(rng);
    }
    let q = UnitQuaternion::from_quaternion(Quaternion::new(c[0], c[1], c[2], c[3]));
    q.to_rotation_matrix().into_inner()
}
