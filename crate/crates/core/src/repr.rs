//! Model-facing representations: rotation scalars, the joint-space diffusion
//! representation and the wrist-local autoregressive representation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::Tensor;
use crate::motion::{
    joint, Finger, Frame, Hand, HandPose, JointId, MotionSequence, Segment, Vec3, JOINTS_PER_HAND,
    NUM_HANDS, WRIST,
};

/// Projections shorter than this give a zero rotation scalar.
pub const PROJECTION_EPS: f64 = 1e-9;
/// Non-wrist joints per hand.
pub const LOCAL_JOINTS: usize = JOINTS_PER_HAND - 1;
/// Channels per joint in the diffusion representation.
pub const DIFFUSION_CHANNELS: usize = 4;

#[derive(Debug, Error)]
pub enum ReprError {
    #[error("degenerate wrist frame for the {hand} hand at frame {frame}")]
    DegenerateWristFrame { frame: usize, hand: Hand },
    #[error("joint {0} has no predecessor and successor")]
    NotBending(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad layout: {0}")]
    Layout(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReprError + '_ {
    move |source| ReprError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationScalar {
    /// Degrees in [0, 180].
    pub value: f64,
    /// Set when a projected limb or the reference axis was too short.
    pub degenerate: bool,
}

impl RotationScalar {
    const ZERO: RotationScalar = RotationScalar {
        value: 0.0,
        degenerate: true,
    };
}

/// Deviation angle at a bending joint after projecting both limbs onto the
/// plane orthogonal to the little-MCP to index-MCP axis.
pub fn rotation_scalar(
    pose: &HandPose,
    finger: Finger,
    segment: Segment,
) -> Result<RotationScalar, ReprError> {
    if segment == Segment::Tip {
        return Err(ReprError::NotBending(
            JointId::Finger(finger, segment).name(),
        ));
    }
    let j = joint(finger, segment);
    let pre = if segment == Segment::Mcp {
        WRIST
    } else {
        j - 1
    };
    Ok(scalar_at(pose, pre, j, j + 1))
}

fn scalar_at(pose: &HandPose, pre: usize, j: usize, next: usize) -> RotationScalar {
    let axis = pose[joint(Finger::Index, Segment::Mcp)] - pose[joint(Finger::Little, Segment::Mcp)];
    let Some(v) = axis.try_normalize(PROJECTION_EPS) else {
        return RotationScalar::ZERO;
    };
    let project = |u: Vec3| u - v * u.dot(&v);
    let a = project(pose[j] - pose[pre]);
    let b = project(pose[next] - pose[j]);
    let (na, nb) = (a.norm(), b.norm());
    if na < PROJECTION_EPS || nb < PROJECTION_EPS {
        return RotationScalar::ZERO;
    }
    // atan2 keeps precision near 0 and 180 degrees
    RotationScalar {
        value: a.cross(&b).norm().atan2(a.dot(&b)).to_degrees(),
        degenerate: false,
    }
}

/// Rotation scalars for all 21 joints of one hand; wrist and tips are 0 and
/// not flagged. Also returns how many bending joints were degenerate.
pub fn hand_scalars(pose: &HandPose) -> ([f64; JOINTS_PER_HAND], usize) {
    let mut out = [0.0; JOINTS_PER_HAND];
    let mut degenerate = 0;
    for f in Finger::ALL {
        for s in Segment::BENDING {
            let j = joint(f, s);
            let pre = if s == Segment::Mcp { WRIST } else { j - 1 };
            let r = scalar_at(pose, pre, j, j + 1);
            out[j] = r.value;
            degenerate += r.degenerate as usize;
        }
    }
    (out, degenerate)
}

/// Positions plus rotation scalar per joint, shape frames × 42 × 4.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionRep {
    pub fps: f64,
    pub x: Tensor,
    /// Bending joints whose scalar was zeroed for degeneracy.
    pub degenerate: usize,
}

pub fn to_diffusion_rep(seq: &MotionSequence) -> DiffusionRep {
    let per_frame: Vec<(Vec<f64>, usize)> = seq
        .frames
        .par_iter()
        .map(|fr| {
            let mut row = Vec::with_capacity(NUM_HANDS * JOINTS_PER_HAND * DIFFUSION_CHANNELS);
            let mut bad = 0;
            for pose in fr.iter() {
                let (s, d) = hand_scalars(pose);
                bad += d;
                for (p, s) in pose.iter().zip(s) {
                    row.extend_from_slice(&[p.x, p.y, p.z, s]);
                }
            }
            (row, bad)
        })
        .collect();
    let degenerate = per_frame.iter().map(|r| r.1).sum();
    let data = per_frame.into_iter().flat_map(|r| r.0).collect();
    DiffusionRep {
        fps: seq.fps,
        x: Tensor::from_vec(
            seq.len(),
            NUM_HANDS * JOINTS_PER_HAND,
            DIFFUSION_CHANNELS,
            data,
        )
        .expect("diffusion shape"),
        degenerate,
    }
}

impl DiffusionRep {
    /// The position channels as a sequence.
    pub fn positions(&self, source_id: &str) -> Result<MotionSequence, ReprError> {
        positions_from_tensor(&self.x, self.fps, source_id)
    }
}

/// Reads the xyz channels of a frames × 42 × (≥3) tensor.
pub fn positions_from_tensor(
    x: &Tensor,
    fps: f64,
    source_id: &str,
) -> Result<MotionSequence, ReprError> {
    if x.joints != NUM_HANDS * JOINTS_PER_HAND || x.channels < 3 {
        return Err(ReprError::Shape(format!(
            "expected frames x {} x >=3, got {} x {} x {}",
            NUM_HANDS * JOINTS_PER_HAND,
            x.frames,
            x.joints,
            x.channels
        )));
    }
    let frames = (0..x.frames)
        .map(|t| {
            let mut fr: Frame = [[Vec3::zeros(); JOINTS_PER_HAND]; NUM_HANDS];
            for (h, pose) in fr.iter_mut().enumerate() {
                for (j, p) in pose.iter_mut().enumerate() {
                    let c = x.cell(t, h * JOINTS_PER_HAND + j);
                    *p = Vec3::new(c[0], c[1], c[2]);
                }
            }
            fr
        })
        .collect();
    Ok(MotionSequence::new_unchecked(fps, frames, source_id))
}

/// Orientation of one hand: columns are the unit wrist-to-index-MCP
/// direction, the orthonormalized wrist-to-little-MCP direction and their
/// cross product.
pub fn wrist_frame(pose: &HandPose) -> Option<Matrix3<f64>> {
    let w = pose[WRIST];
    let e1 = (pose[joint(Finger::Index, Segment::Mcp)] - w).try_normalize(PROJECTION_EPS)?;
    let l = pose[joint(Finger::Little, Segment::Mcp)] - w;
    let e2 = (l - e1 * l.dot(&e1)).try_normalize(PROJECTION_EPS)?;
    Some(Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]))
}

/// The rotation whose first two columns are `six`, re-orthonormalized.
pub fn rotation_from_6d(six: &[f64; 6]) -> Option<Matrix3<f64>> {
    let a = Vec3::new(six[0], six[1], six[2]).try_normalize(PROJECTION_EPS)?;
    let b = Vec3::new(six[3], six[4], six[5]);
    let b = (b - a * b.dot(&a)).try_normalize(PROJECTION_EPS)?;
    Some(Matrix3::from_columns(&[a, b, a.cross(&b)]))
}

pub fn rotation_to_6d(r: &Matrix3<f64>) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]
}

/// One frame of the autoregressive representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFrame {
    /// Right wrist minus left wrist, meters.
    pub d_r: Vec3,
    /// Right wrist displacement to the next frame, meters per frame.
    pub v_r: Vec3,
    /// First two orientation columns per hand.
    pub theta: [[f64; 6]; NUM_HANDS],
    /// Non-wrist joints in the wrist frame, meters.
    pub p_l: [[Vec3; LOCAL_JOINTS]; NUM_HANDS],
    /// Change of `p_l` to the next frame, meters per frame.
    pub v_l: [[Vec3; LOCAL_JOINTS]; NUM_HANDS],
    /// Rotation scalars of the non-wrist joints, tips 0, degrees.
    pub s: [[f64; LOCAL_JOINTS]; NUM_HANDS],
}

/// Values per frame: 3 + 3 + 2·6 + 2·20·3 + 2·20·3 + 2·20.
pub const AR_FRAME_LEN: usize =
    3 + 3 + NUM_HANDS * 6 + 2 * NUM_HANDS * LOCAL_JOINTS * 3 + NUM_HANDS * LOCAL_JOINTS;

#[derive(Debug, Clone, PartialEq)]
pub struct ArLocalRep {
    pub fps: f64,
    pub frames: Vec<ArFrame>,
}

struct Static {
    wrists: [Vec3; NUM_HANDS],
    theta: [[f64; 6]; NUM_HANDS],
    p_l: [[Vec3; LOCAL_JOINTS]; NUM_HANDS],
    s: [[f64; LOCAL_JOINTS]; NUM_HANDS],
}

fn static_part(fr: &Frame, frame: usize) -> Result<Static, ReprError> {
    let mut out = Static {
        wrists: [fr[0][WRIST], fr[1][WRIST]],
        theta: [[0.0; 6]; NUM_HANDS],
        p_l: [[Vec3::zeros(); LOCAL_JOINTS]; NUM_HANDS],
        s: [[0.0; LOCAL_JOINTS]; NUM_HANDS],
    };
    for hand in Hand::BOTH {
        let h = hand.index();
        let pose = &fr[h];
        let r = wrist_frame(pose).ok_or(ReprError::DegenerateWristFrame { frame, hand })?;
        out.theta[h] = rotation_to_6d(&r);
        let rt = r.transpose();
        let (scalars, _) = hand_scalars(pose);
        for j in 1..JOINTS_PER_HAND {
            out.p_l[h][j - 1] = rt * (pose[j] - pose[WRIST]);
            out.s[h][j - 1] = scalars[j];
        }
    }
    Ok(out)
}

/// Wrist-local representation. Velocities are forward differences; the last
/// frame repeats the previous velocity (zero for a single frame).
pub fn to_ar_rep(seq: &MotionSequence) -> Result<ArLocalRep, ReprError> {
    let parts: Vec<Static> = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, fr)| static_part(fr, i))
        .collect::<Result<_, _>>()?;
    let n = parts.len();
    let frames = (0..n)
        .map(|i| {
            let (a, b) = match n {
                1 => (0, 0),
                _ if i + 1 < n => (i, i + 1),
                _ => (i - 1, i),
            };
            let (pa, pb) = (&parts[a], &parts[b]);
            let mut v_l = [[Vec3::zeros(); LOCAL_JOINTS]; NUM_HANDS];
            for h in 0..NUM_HANDS {
                for j in 0..LOCAL_JOINTS {
                    v_l[h][j] = pb.p_l[h][j] - pa.p_l[h][j];
                }
            }
            let p = &parts[i];
            ArFrame {
                d_r: p.wrists[1] - p.wrists[0],
                v_r: pb.wrists[1] - pa.wrists[1],
                theta: p.theta,
                p_l: p.p_l,
                v_l,
                s: p.s,
            }
        })
        .collect();
    Ok(ArLocalRep {
        fps: seq.fps,
        frames,
    })
}

/// Rebuilds global joints from the representation and the left-wrist path.
pub fn from_ar_rep(
    rep: &ArLocalRep,
    left_wrist: &[Vec3],
    source_id: &str,
) -> Result<MotionSequence, ReprError> {
    if left_wrist.len() != rep.frames.len() {
        return Err(ReprError::Shape(format!(
            "{} anchor positions for {} frames",
            left_wrist.len(),
            rep.frames.len()
        )));
    }
    let frames = rep
        .frames
        .iter()
        .zip(left_wrist)
        .enumerate()
        .map(|(i, (f, &lw))| {
            let wrists = [lw, lw + f.d_r];
            let mut fr: Frame = [[Vec3::zeros(); JOINTS_PER_HAND]; NUM_HANDS];
            for hand in Hand::BOTH {
                let h = hand.index();
                let r = rotation_from_6d(&f.theta[h])
                    .ok_or(ReprError::DegenerateWristFrame { frame: i, hand })?;
                fr[h][WRIST] = wrists[h];
                for j in 1..JOINTS_PER_HAND {
                    fr[h][j] = wrists[h] + r * f.p_l[h][j - 1];
                }
            }
            Ok(fr)
        })
        .collect::<Result<Vec<_>, ReprError>>()?;
    Ok(MotionSequence::new_unchecked(rep.fps, frames, source_id))
}

/// Left wrist positions of a sequence, the anchor for [`from_ar_rep`].
pub fn left_wrist_path(seq: &MotionSequence) -> Vec<Vec3> {
    seq.frames.iter().map(|fr| fr[0][WRIST]).collect()
}

/// One named block of a frame row in the flat binary layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub name: String,
    /// Shape of the block within one frame.
    pub shape: Vec<usize>,
    /// Offset in values from the start of the frame row.
    pub offset: usize,
}

/// JSON sidecar of a flat representation file: `num_frames` rows of
/// `frame_stride` little-endian f64 values, fields at fixed offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepLayout {
    pub kind: String,
    pub dtype: String,
    pub fps: f64,
    pub num_frames: usize,
    pub frame_stride: usize,
    pub fields: Vec<FieldLayout>,
}

impl RepLayout {
    fn new(kind: &str, fps: f64, num_frames: usize, fields: &[(&str, Vec<usize>)]) -> Self {
        let mut offset = 0;
        let fields = fields
            .iter()
            .map(|(name, shape)| {
                let f = FieldLayout {
                    name: name.to_string(),
                    shape: shape.clone(),
                    offset,
                };
                offset += shape.iter().product::<usize>();
                f
            })
            .collect();
        Self {
            kind: kind.into(),
            dtype: "f64le".into(),
            fps,
            num_frames,
            frame_stride: offset,
            fields,
        }
    }

    pub fn diffusion(fps: f64, num_frames: usize) -> Self {
        Self::new(
            "diffusion",
            fps,
            num_frames,
            &[("x", vec![NUM_HANDS * JOINTS_PER_HAND, DIFFUSION_CHANNELS])],
        )
    }

    pub fn ar_local(fps: f64, num_frames: usize) -> Self {
        Self::new(
            "ar_local",
            fps,
            num_frames,
            &[
                ("d_r", vec![3]),
                ("v_r", vec![3]),
                ("theta_r", vec![NUM_HANDS, 6]),
                ("p_l", vec![NUM_HANDS, LOCAL_JOINTS, 3]),
                ("v_l", vec![NUM_HANDS, LOCAL_JOINTS, 3]),
                ("s", vec![NUM_HANDS, LOCAL_JOINTS]),
            ],
        )
    }
}

impl ArLocalRep {
    pub fn layout(&self) -> RepLayout {
        RepLayout::ar_local(self.fps, self.frames.len())
    }

    /// Frame rows in layout order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frames.len() * AR_FRAME_LEN);
        for f in &self.frames {
            out.extend_from_slice(f.d_r.as_slice());
            out.extend_from_slice(f.v_r.as_slice());
            for t in &f.theta {
                out.extend_from_slice(t);
            }
            for block in [&f.p_l, &f.v_l] {
                for hand in block {
                    for p in hand {
                        out.extend_from_slice(p.as_slice());
                    }
                }
            }
            for hand in &f.s {
                out.extend_from_slice(hand);
            }
        }
        out
    }

    pub fn from_flat(layout: &RepLayout, data: &[f64]) -> Result<Self, ReprError> {
        if *layout != RepLayout::ar_local(layout.fps, layout.num_frames) {
            return Err(ReprError::Layout("not an ar_local layout".into()));
        }
        check_len(layout, data)?;
        let frames = data
            .chunks_exact(AR_FRAME_LEN)
            .map(|row| {
                let mut it = row.iter().copied();
                let mut next = || it.next().expect("row length checked");
                let mut v3 = || Vec3::new(next(), next(), next());
                let d_r = v3();
                let v_r = v3();
                let mut theta = [[0.0; 6]; NUM_HANDS];
                for t in &mut theta {
                    for x in t.iter_mut() {
                        *x = next();
                    }
                }
                let mut p_l = [[Vec3::zeros(); LOCAL_JOINTS]; NUM_HANDS];
                let mut v_l = [[Vec3::zeros(); LOCAL_JOINTS]; NUM_HANDS];
                for block in [&mut p_l, &mut v_l] {
                    for hand in block.iter_mut() {
                        for p in hand.iter_mut() {
                            *p = Vec3::new(next(), next(), next());
                        }
                    }
                }
                let mut s = [[0.0; LOCAL_JOINTS]; NUM_HANDS];
                for hand in &mut s {
                    for x in hand.iter_mut() {
                        *x = next();
                    }
                }
                ArFrame {
                    d_r,
                    v_r,
                    theta,
                    p_l,
                    v_l,
                    s,
                }
            })
            .collect();
        Ok(Self {
            fps: layout.fps,
            frames,
        })
    }
}

impl DiffusionRep {
    pub fn layout(&self) -> RepLayout {
        RepLayout::diffusion(self.fps, self.x.frames)
    }

    pub fn from_flat(layout: &RepLayout, data: &[f64]) -> Result<Self, ReprError> {
        if *layout != RepLayout::diffusion(layout.fps, layout.num_frames) {
            return Err(ReprError::Layout("not a diffusion layout".into()));
        }
        check_len(layout, data)?;
        Ok(Self {
            fps: layout.fps,
            x: Tensor::from_vec(
                layout.num_frames,
                NUM_HANDS * JOINTS_PER_HAND,
                DIFFUSION_CHANNELS,
                data.to_vec(),
            )
            .map_err(|e| ReprError::Shape(e.to_string()))?,
            degenerate: 0,
        })
    }
}

fn check_len(layout: &RepLayout, data: &[f64]) -> Result<(), ReprError> {
    if data.len() != layout.num_frames * layout.frame_stride {
        return Err(ReprError::Shape(format!(
            "{} values for {} frames of {}",
            data.len(),
            layout.num_frames,
            layout.frame_stride
        )));
    }
    Ok(())
}

pub fn to_le_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn from_le_bytes(bytes: &[u8]) -> Result<Vec<f64>, ReprError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(ReprError::Shape(format!(
            "{} bytes is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Path of the JSON sidecar next to a binary file.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    let mut s = bin.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bin` and its sidecar.
pub fn write_flat(bin: &Path, layout: &RepLayout, data: &[f64]) -> Result<(), ReprError> {
    check_len(layout, data)?;
    fs::write(bin, to_le_bytes(data)).map_err(io_err(bin))?;
    let side = sidecar_path(bin);
    let text = serde_json::to_string_pretty(layout).expect("layout serializes");
    fs::write(&side, text).map_err(io_err(&side))
}

pub fn read_flat(bin: &Path) -> Result<(RepLayout, Vec<f64>), ReprError> {
    let side = sidecar_path(bin);
    let text = fs::read_to_string(&side).map_err(io_err(&side))?;
    let layout: RepLayout =
        serde_json::from_str(&text).map_err(|e| ReprError::Layout(e.to_string()))?;
    let data = from_le_bytes(&fs::read(bin).map_err(io_err(bin))?)?;
    check_len(&layout, &data)?;
    Ok((layout, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{random_rotation, RigidTransform};
    use crate::synth::{bimanual_motion, local_pose, Articulation, HandShape, SynthConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn motion(seed: u64, frames: usize) -> MotionSequence {
        bimanual_motion(&SynthConfig {
            frames,
            seed,
            ..SynthConfig::default()
        })
    }

    /// Independent projection: explicit Gram-Schmidt basis of the plane.
    fn oracle_scalar(pose: &HandPose, pre: usize, j: usize, next: usize) -> f64 {
        let v =
            pose[joint(Finger::Index, Segment::Mcp)] - pose[joint(Finger::Little, Segment::Mcp)];
        let v = v / v.norm();
        let seed = if v.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let b1 = seed - v * seed.dot(&v);
        let b1 = b1 / b1.norm();
        let b2 = v.cross(&b1);
        let coords = |u: Vec3| (u.dot(&b1), u.dot(&b2));
        let (a1, a2) = coords(pose[j] - pose[pre]);
        let (c1, c2) = coords(pose[next] - pose[j]);
        let cos = (a1 * c1 + a2 * c2) / ((a1 * a1 + a2 * a2).sqrt() * (c1 * c1 + c2 * c2).sqrt());
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn scalars_match_projection_oracle() {
        let seq = motion(4, 20);
        for fr in &seq.frames {
            for pose in fr {
                for f in Finger::ALL {
                    for s in Segment::BENDING {
                        let j = joint(f, s);
                        let pre = if s == Segment::Mcp { WRIST } else { j - 1 };
                        let got = rotation_scalar(pose, f, s).unwrap();
                        assert!(!got.degenerate);
                        let want = oracle_scalar(pose, pre, j, j + 1);
                        assert!((got.value - want).abs() < 1e-9, "{} vs {want}", got.value);
                    }
                }
            }
        }
        assert!(rotation_scalar(&seq.frames[0][0], Finger::Ring, Segment::Tip).is_err());
    }

    #[test]
    fn scalar_on_plane_and_straight() {
        let mut pose = [Vec3::zeros(); JOINTS_PER_HAND];
        pose[joint(Finger::Index, Segment::Mcp)] = Vec3::new(0.0, 0.0, 1.0);
        pose[joint(Finger::Little, Segment::Mcp)] = Vec3::new(0.0, 0.0, 0.0);
        // ring limbs in the x-y plane, orthogonal to the z axis
        let (pip, dip, tip) = (
            joint(Finger::Ring, Segment::Pip),
            joint(Finger::Ring, Segment::Dip),
            joint(Finger::Ring, Segment::Tip),
        );
        pose[joint(Finger::Ring, Segment::Mcp)] = Vec3::new(0.0, 0.0, 0.5);
        pose[pip] = Vec3::new(0.1, 0.0, 0.5);
        pose[dip] = Vec3::new(0.1 + 0.05 * 0.6f64.cos(), 0.05 * 0.6f64.sin(), 0.5);
        let r = rotation_scalar(&pose, Finger::Ring, Segment::Pip).unwrap();
        assert!((r.value - 0.6f64.to_degrees()).abs() < 1e-9);
        pose[tip] = pose[dip] + (pose[dip] - pose[pip]);
        let r = rotation_scalar(&pose, Finger::Ring, Segment::Dip).unwrap();
        assert!(r.value.abs() < 1e-6 && !r.degenerate);
        // limb along the axis projects to nothing
        pose[pip] = pose[joint(Finger::Ring, Segment::Mcp)] + Vec3::new(0.0, 0.0, 0.02);
        let r = rotation_scalar(&pose, Finger::Ring, Segment::Mcp).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn scalars_are_rigid_invariant() {
        let seq = motion(9, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = RigidTransform::new(random_rotation(&mut rng), Vec3::new(0.3, -2.0, 1.1));
        let a = to_diffusion_rep(&seq);
        let b = to_diffusion_rep(&seq.transformed(&t));
        for (x, y) in a.x.data.chunks(4).zip(b.x.data.chunks(4)) {
            assert!((x[3] - y[3]).abs() < 1e-9);
        }
    }

    #[test]
    fn diffusion_shape_and_positions() {
        let seq = motion(1, 7);
        let rep = to_diffusion_rep(&seq);
        assert_eq!((rep.x.frames, rep.x.joints, rep.x.channels), (7, 42, 4));
        let back = rep.positions(&seq.source_id).unwrap();
        assert_eq!(back.frames, seq.frames);
        for t in 0..7 {
            for h in 0..2 {
                assert_eq!(rep.x.cell(t, h * 21 + WRIST)[3], 0.0);
                for f in Finger::ALL {
                    assert_eq!(rep.x.cell(t, h * 21 + joint(f, Segment::Tip))[3], 0.0);
                }
            }
        }
    }

    #[test]
    fn straight_hand_has_zero_scalars() {
        // T-pose: every finger continues its wrist-to-knuckle ray
        let shape = HandShape::default();
        let rest = local_pose(&shape, &Articulation::default(), Hand::Right);
        let mut t_pose = rest;
        for f in Finger::ALL {
            let m = rest[joint(f, Segment::Mcp)];
            for (k, s) in Segment::ALL.into_iter().enumerate() {
                t_pose[joint(f, s)] = m * (1.0 + 0.3 * k as f64);
            }
        }
        let (s, degenerate) = hand_scalars(&t_pose);
        assert_eq!(degenerate, 0);
        assert!(s.iter().all(|x| x.abs() < 1e-9), "{s:?}");
        // straight fingers on the rest hand bend only at the knuckle
        let (s, _) = hand_scalars(&rest);
        for f in Finger::ALL {
            for seg in [Segment::Pip, Segment::Dip] {
                assert!(s[joint(f, seg)].abs() < 1e-5, "{f:?} {seg:?}");
            }
        }
    }

    #[test]
    fn ar_round_trip_and_statics() {
        let seq = motion(5, 12);
        let rep = to_ar_rep(&seq).unwrap();
        assert_eq!(rep.to_flat().len(), 12 * AR_FRAME_LEN);
        assert_eq!(rep.layout().frame_stride, AR_FRAME_LEN);
        let back = from_ar_rep(&rep, &left_wrist_path(&seq), "x").unwrap();
        for (a, b) in back.frames.iter().zip(&seq.frames) {
            for h in 0..2 {
                for j in 0..21 {
                    assert!((a[h][j] - b[h][j]).norm() < 1e-9);
                }
            }
        }
        let still = MotionSequence::new_unchecked(30.0, vec![seq.frames[0]; 4], "still");
        let rep = to_ar_rep(&still).unwrap();
        for f in &rep.frames {
            assert_eq!(f.v_r, Vec3::zeros());
            assert!(f.v_l.iter().flatten().all(|v| *v == Vec3::zeros()));
        }
    }

    #[test]
    fn ar_translation_and_rotation_behaviour() {
        let seq = motion(6, 6);
        let rep = to_ar_rep(&seq).unwrap();
        let shifted = to_ar_rep(&seq.transformed(&RigidTransform::new(
            Matrix3::identity(),
            Vec3::new(1.0, 2.0, -3.0),
        )))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rot = random_rotation(&mut rng);
        let rotated =
            to_ar_rep(&seq.transformed(&RigidTransform::new(rot, Vec3::zeros()))).unwrap();
        for ((a, b), c) in rep.frames.iter().zip(&shifted.frames).zip(&rotated.frames) {
            assert!((a.d_r - b.d_r).norm() < 1e-12);
            assert!((a.v_r - b.v_r).norm() < 1e-12);
            for h in 0..2 {
                for j in 0..LOCAL_JOINTS {
                    assert!((a.p_l[h][j] - b.p_l[h][j]).norm() < 1e-12);
                    assert!((a.p_l[h][j] - c.p_l[h][j]).norm() < 1e-12);
                    assert!((a.s[h][j] - c.s[h][j]).abs() < 1e-9);
                }
                let ra = rotation_from_6d(&a.theta[h]).unwrap();
                let rc = rotation_from_6d(&c.theta[h]).unwrap();
                assert!((rot * ra - rc).norm() < 1e-12);
            }
            assert!((rot * a.d_r - c.d_r).norm() < 1e-12);
            assert!((rot * a.v_r - c.v_r).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_wrist_frame_errors() {
        let mut seq = motion(2, 3);
        let w = seq.frames[1][1][WRIST];
        seq.frames[1][1][joint(Finger::Index, Segment::Mcp)] = w;
        assert!(matches!(
            to_ar_rep(&seq),
            Err(ReprError::DegenerateWristFrame {
                frame: 1,
                hand: Hand::Right
            })
        ));
    }

    #[test]
    fn flat_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = motion(8, 5);
        let ar = to_ar_rep(&seq).unwrap();
        let p = dir.path().join("ar.bin");
        write_flat(&p, &ar.layout(), &ar.to_flat()).unwrap();
        let (layout, data) = read_flat(&p).unwrap();
        assert_eq!(ArLocalRep::from_flat(&layout, &data).unwrap(), ar);
        assert_eq!(
            fs::metadata(&p).unwrap().len() as usize,
            5 * AR_FRAME_LEN * 8
        );

        let d = to_diffusion_rep(&seq);
        let p = dir.path().join("d.bin");
        write_flat(&p, &d.layout(), &d.x.data).unwrap();
        let (layout, data) = read_flat(&p).unwrap();
        let back = DiffusionRep::from_flat(&layout, &data).unwrap();
        assert_eq!(back.x, d.x);
        assert!(ArLocalRep::from_flat(&layout, &data).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
        assert_eq!(from_le_bytes(&to_le_bytes(&xs)).unwrap(), xs);
    }
}
