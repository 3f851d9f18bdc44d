//! Per-frame kinematic descriptors: finger flexion, finger spacing,
//! fingertip distances, palm-palm relation, fingertip-to-palm distance and
//! wrist trajectory.

pub mod palm;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{joint, Finger, Frame, Hand, HandPose, MotionSequence, Segment, Vec3, WRIST};
pub use palm::{palm_cloud, palm_relation, PalmCloud, PalmHull};

/// Shortest limb accepted when measuring an angle, meters.
pub const SEGMENT_EPS: f64 = 1e-9;
/// Closest cloud points averaged by the fingertip-to-palm distance.
pub const FINGER_PALM_NEIGHBOURS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("degenerate segment at frame {frame}")]
    DegenerateSegment { frame: usize },
    #[error("degenerate hull")]
    DegenerateHull,
    #[error("joint {0} has no predecessor and successor")]
    NotBending(String),
    #[error("fingers {0} and {1} are not adjacent")]
    NotAdjacent(Finger, Finger),
    #[error("a fingertip cannot be compared with itself")]
    SameTip,
    #[error("bad descriptor document: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    FingerFlexing,
    FingerSpacing,
    FingerFingerDistance,
    PalmPalmRelation,
    FingerPalmDistance,
    WristTrajectory,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 6] = [
        DescriptorKind::FingerFlexing,
        DescriptorKind::FingerSpacing,
        DescriptorKind::FingerFingerDistance,
        DescriptorKind::PalmPalmRelation,
        DescriptorKind::FingerPalmDistance,
        DescriptorKind::WristTrajectory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::FingerFlexing => "finger_flexing",
            DescriptorKind::FingerSpacing => "finger_spacing",
            DescriptorKind::FingerFingerDistance => "finger_finger_distance",
            DescriptorKind::PalmPalmRelation => "palm_palm_relation",
            DescriptorKind::FingerPalmDistance => "finger_palm_distance",
            DescriptorKind::WristTrajectory => "wrist_trajectory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_vector(self) -> bool {
        matches!(
            self,
            DescriptorKind::PalmPalmRelation | DescriptorKind::WristTrajectory
        )
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which hand(s) a descriptor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandScope {
    Left,
    Right,
    Both,
}

impl HandScope {
    pub fn name(self) -> &'static str {
        match self {
            HandScope::Left => "left",
            HandScope::Right => "right",
            HandScope::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(HandScope::Left),
            "right" => Some(HandScope::Right),
            "both" => Some(HandScope::Both),
            _ => None,
        }
    }

    pub fn hand(self) -> Option<Hand> {
        match self {
            HandScope::Left => Some(Hand::Left),
            HandScope::Right => Some(Hand::Right),
            HandScope::Both => None,
        }
    }
}

impl From<Hand> for HandScope {
    fn from(h: Hand) -> Self {
        match h {
            Hand::Left => HandScope::Left,
            Hand::Right => HandScope::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DescriptorId {
    pub kind: DescriptorKind,
    pub hand: HandScope,
    /// Finger, joint or pair name, e.g. `index_pip`, `thumb-index`.
    pub target: String,
}

impl DescriptorId {
    pub fn new(
        kind: DescriptorKind,
        hand: impl Into<HandScope>,
        target: impl Into<String>,
    ) -> Self {
        Self {
            kind,
            hand: hand.into(),
            target: target.into(),
        }
    }

    /// `kind:hand:target`
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.kind, self.hand.name(), self.target)
    }

    pub fn parse_key(key: &str) -> Option<Self> {
        let mut parts = key.splitn(3, ':');
        let kind = DescriptorKind::parse(parts.next()?)?;
        let hand = HandScope::parse(parts.next()?)?;
        let target = parts.next()?;
        Some(Self::new(kind, hand, target))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    /// Degrees or meters, one per frame.
    Scalar(Vec<f64>),
    /// Meters, one per frame.
    Vector(Vec<Vec3>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Scalar(v) => v.len(),
            Values::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorTimeline {
    pub id: DescriptorId,
    pub values: Values,
}

impl DescriptorTimeline {
    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.values {
            Values::Scalar(v) => Some(v),
            Values::Vector(_) => None,
        }
    }

    pub fn vectors(&self) -> Option<&[Vec3]> {
        match &self.values {
            Values::Vector(v) => Some(v),
            Values::Scalar(_) => None,
        }
    }
}

/// Unsigned angle between two vectors in degrees, `None` if either is
/// shorter than [`SEGMENT_EPS`].
pub fn angle_deg(u: &Vec3, v: &Vec3) -> Option<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu >= SEGMENT_EPS && nv >= SEGMENT_EPS) {
        return None;
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Some(c.acos().to_degrees())
}

fn require_bending(s: Segment) -> Result<(), DescriptorError> {
    if s == Segment::Tip {
        return Err(DescriptorError::NotBending(s.name().to_string()));
    }
    Ok(())
}

fn limb_points(pose: &HandPose, f: Finger, s: Segment) -> (Vec3, Vec3, Vec3) {
    let j = joint(f, s);
    let pre = if s == Segment::Mcp { WRIST } else { j - 1 };
    (pose[pre], pose[j], pose[j + 1])
}

/// Flexion sign reference for one finger: a lateral axis across the hand,
/// oriented so that bending toward the palm is positive on both hands.
pub fn flexion_axis(pose: &HandPose, hand: Hand, finger: Finger) -> Option<Vec3> {
    let mcp = |f: Finger| pose[joint(f, Segment::Mcp)];
    let side = if hand == Hand::Right { 1.0 } else { -1.0 };
    let axis = if finger == Finger::Thumb {
        mcp(Finger::Index) - mcp(Finger::Thumb)
    } else {
        mcp(Finger::Little) - mcp(Finger::Index)
    };
    axis.try_normalize(SEGMENT_EPS).map(|a| a * side)
}

/// Signed flexion of one joint in one pose, degrees.
pub fn flexion_at(pose: &HandPose, hand: Hand, finger: Finger, segment: Segment) -> Option<f64> {
    let (pre, p, next) = limb_points(pose, finger, segment);
    let magnitude = angle_deg(&(p - pre), &(next - p))?;
    let axis = flexion_axis(pose, hand, finger)?;
    let s = (pre - p).cross(&(next - p)).dot(&axis);
    Some(if s < 0.0 { -magnitude } else { magnitude })
}

pub fn finger_flexion(
    seq: &MotionSequence,
    hand: Hand,
    finger: Finger,
    segment: Segment,
) -> Result<DescriptorTimeline, DescriptorError> {
    require_bending(segment)?;
    let values = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            flexion_at(&fr[hand.index()], hand, finger, segment)
                .ok_or(DescriptorError::DegenerateSegment { frame: i })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DescriptorTimeline {
        id: DescriptorId::new(
            DescriptorKind::FingerFlexing,
            hand,
            format!("{}_{}", finger.name(), segment.name()),
        ),
        values: Values::Scalar(values),
    })
}

fn check_adjacent(a: Finger, b: Finger) -> Result<(), DescriptorError> {
    if Finger::ADJACENT_PAIRS.contains(&(a, b)) {
        Ok(())
    } else {
        Err(DescriptorError::NotAdjacent(a, b))
    }
}

pub fn spacing_at(pose: &HandPose, a: Finger, b: Finger) -> Option<f64> {
    let dir = |f: Finger| pose[joint(f, Segment::Pip)] - pose[joint(f, Segment::Mcp)];
    angle_deg(&dir(a), &dir(b))
}

pub fn finger_spacing(
    seq: &MotionSequence,
    hand: Hand,
    pair: (Finger, Finger),
) -> Result<DescriptorTimeline, DescriptorError> {
    check_adjacent(pair.0, pair.1)?;
    let values = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            spacing_at(&fr[hand.index()], pair.0, pair.1)
                .ok_or(DescriptorError::DegenerateSegment { frame: i })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DescriptorTimeline {
        id: DescriptorId::new(
            DescriptorKind::FingerSpacing,
            hand,
            format!("{}-{}", pair.0.name(), pair.1.name()),
        ),
        values: Values::Scalar(values),
    })
}

fn tip_pair_id(a: (Hand, Finger), b: (Hand, Finger)) -> DescriptorId {
    if a.0 == b.0 {
        DescriptorId::new(
            DescriptorKind::FingerFingerDistance,
            a.0,
            format!("{}-{}", a.1.name(), b.1.name()),
        )
    } else {
        DescriptorId::new(
            DescriptorKind::FingerFingerDistance,
            HandScope::Both,
            format!(
                "{}_{}-{}_{}",
                a.0.name(),
                a.1.name(),
                b.0.name(),
                b.1.name()
            ),
        )
    }
}

fn tip(fr: &Frame, t: (Hand, Finger)) -> Vec3 {
    fr[t.0.index()][joint(t.1, Segment::Tip)]
}

pub fn finger_finger_distance(
    seq: &MotionSequence,
    tip_a: (Hand, Finger),
    tip_b: (Hand, Finger),
) -> Result<DescriptorTimeline, DescriptorError> {
    if tip_a == tip_b {
        return Err(DescriptorError::SameTip);
    }
    let values = seq
        .frames
        .iter()
        .map(|fr| (tip(fr, tip_a) - tip(fr, tip_b)).norm())
        .collect();
    Ok(DescriptorTimeline {
        id: tip_pair_id(tip_a, tip_b),
        values: Values::Scalar(values),
    })
}

/// Relation from the left palm to the right palm for one frame.
pub fn palm_palm_relation(frame: &Frame, seed: u64) -> Result<Vec3, DescriptorError> {
    let l = palm_cloud(frame, Hand::Left, seed)?;
    let r = palm_cloud(frame, Hand::Right, seed)?;
    Ok(palm_relation(&l, &r))
}

/// Mean distance from a fingertip to its nearest points of the other
/// hand's palm cloud.
pub fn finger_palm_distance(frame: &Frame, tip_of: (Hand, Finger), other_cloud: &PalmCloud) -> f64 {
    palm::mean_knn_distance(
        &tip(frame, tip_of),
        &other_cloud.points,
        FINGER_PALM_NEIGHBOURS,
    )
}

pub fn wrist_trajectory(seq: &MotionSequence, hand: Hand) -> DescriptorTimeline {
    DescriptorTimeline {
        id: DescriptorId::new(DescriptorKind::WristTrajectory, hand, "wrist"),
        values: Values::Vector(
            seq.frames
                .iter()
                .map(|fr| fr[hand.index()][WRIST])
                .collect(),
        ),
    }
}

/// Identities produced by [`describe`], in output order.
pub fn descriptor_ids() -> Vec<DescriptorId> {
    let mut ids = Vec::new();
    for hand in Hand::BOTH {
        for f in Finger::ALL {
            for s in Segment::BENDING {
                ids.push(DescriptorId::new(
                    DescriptorKind::FingerFlexing,
                    hand,
                    format!("{}_{}", f.name(), s.name()),
                ));
            }
        }
    }
    for hand in Hand::BOTH {
        for (a, b) in Finger::ADJACENT_PAIRS {
            ids.push(DescriptorId::new(
                DescriptorKind::FingerSpacing,
                hand,
                format!("{}-{}", a.name(), b.name()),
            ));
        }
    }
    for (a, b) in tip_pairs() {
        ids.push(tip_pair_id(a, b));
    }
    ids.push(DescriptorId::new(
        DescriptorKind::PalmPalmRelation,
        HandScope::Both,
        "palms",
    ));
    for hand in Hand::BOTH {
        for f in Finger::ALL {
            ids.push(DescriptorId::new(
                DescriptorKind::FingerPalmDistance,
                hand,
                format!("{}_tip", f.name()),
            ));
        }
    }
    for hand in Hand::BOTH {
        ids.push(DescriptorId::new(
            DescriptorKind::WristTrajectory,
            hand,
            "wrist",
        ));
    }
    ids
}

/// Two fingertips, each named by hand and finger.
pub type TipPair = ((Hand, Finger), (Hand, Finger));

/// Every fingertip pair: intra-hand pairs per hand, then left-right pairs.
pub fn tip_pairs() -> Vec<TipPair> {
    let mut out = Vec::new();
    for hand in Hand::BOTH {
        for (i, a) in Finger::ALL.into_iter().enumerate() {
            for b in Finger::ALL.into_iter().skip(i + 1) {
                out.push(((hand, a), (hand, b)));
            }
        }
    }
    for a in Finger::ALL {
        for b in Finger::ALL {
            out.push(((Hand::Left, a), (Hand::Right, b)));
        }
    }
    out
}

const N_FLEX: usize = 30;
const N_SPACING: usize = 8;
const N_TIP_PAIRS: usize = 45;
const N_FINGER_PALM: usize = 10;
const N_SCALARS: usize = N_FLEX + N_SPACING + N_TIP_PAIRS + N_FINGER_PALM;

struct FrameValues {
    scalars: [f64; N_SCALARS],
    relation: Vec3,
}

fn frame_values(fr: &Frame, seed: u64, pairs: &[TipPair]) -> Result<FrameValues, DescriptorError> {
    let degenerate = DescriptorError::DegenerateSegment { frame: 0 };
    let mut s = [0.0; N_SCALARS];
    let mut k = 0;
    for hand in Hand::BOTH {
        let pose = &fr[hand.index()];
        for f in Finger::ALL {
            for seg in Segment::BENDING {
                s[k] = flexion_at(pose, hand, f, seg).ok_or(degenerate.clone())?;
                k += 1;
            }
        }
    }
    for hand in Hand::BOTH {
        for (a, b) in Finger::ADJACENT_PAIRS {
            s[k] = spacing_at(&fr[hand.index()], a, b).ok_or(degenerate.clone())?;
            k += 1;
        }
    }
    for (a, b) in pairs {
        s[k] = (tip(fr, *a) - tip(fr, *b)).norm();
        k += 1;
    }
    let clouds = [
        palm_cloud(fr, Hand::Left, seed)?,
        palm_cloud(fr, Hand::Right, seed)?,
    ];
    for hand in Hand::BOTH {
        for f in Finger::ALL {
            s[k] = finger_palm_distance(fr, (hand, f), &clouds[hand.other().index()]);
            k += 1;
        }
    }
    debug_assert_eq!(k, N_SCALARS);
    Ok(FrameValues {
        scalars: s,
        relation: palm_relation(&clouds[0], &clouds[1]),
    })
}

/// All descriptors of a sequence. Palm clouds are resampled per frame from
/// [`palm::frame_seed`]`(seed, frame)`.
pub fn describe(
    seq: &MotionSequence,
    seed: u64,
) -> Result<Vec<DescriptorTimeline>, DescriptorError> {
    let pairs = tip_pairs();
    let per_frame: Vec<FrameValues> = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, fr)| {
            frame_values(fr, palm::frame_seed(seed, i), &pairs).map_err(|e| match e {
                DescriptorError::DegenerateSegment { .. } => {
                    DescriptorError::DegenerateSegment { frame: i }
                }
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;

    let ids = descriptor_ids();
    let n_frames = seq.len();
    let mut out = Vec::with_capacity(ids.len());
    let mut ids = ids.into_iter();
    for k in 0..N_FLEX + N_SPACING + N_TIP_PAIRS {
        out.push(DescriptorTimeline {
            id: ids.next().expect("id"),
            values: Values::Scalar(per_frame.iter().map(|v| v.scalars[k]).collect()),
        });
    }
    out.push(DescriptorTimeline {
        id: ids.next().expect("id"),
        values: Values::Vector(per_frame.iter().map(|v| v.relation).collect()),
    });
    for k in N_FLEX + N_SPACING + N_TIP_PAIRS..N_SCALARS {
        out.push(DescriptorTimeline {
            id: ids.next().expect("id"),
            values: Values::Scalar(per_frame.iter().map(|v| v.scalars[k]).collect()),
        });
    }
    for hand in Hand::BOTH {
        let mut t = wrist_trajectory(seq, hand);
        t.id = ids.next().expect("id");
        out.push(t);
    }
    debug_assert!(out.iter().all(|t| t.values.len() == n_frames));
    Ok(out)
}

/// JSON document mapping `kind:hand:target` to its value series.
pub fn to_json(seq: &MotionSequence, timelines: &[DescriptorTimeline]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for t in timelines {
        let v = match &t.values {
            Values::Scalar(v) => serde_json::json!(v),
            Values::Vector(v) => {
                serde_json::json!(v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>())
            }
        };
        map.insert(t.id.key(), v);
    }
    serde_json::json!({
        "fps": seq.fps,
        "num_frames": seq.len(),
        "descriptors": map,
    })
}

/// Document read back by [`from_json`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDoc {
    pub fps: f64,
    pub num_frames: usize,
    pub timelines: Vec<DescriptorTimeline>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    fps: f64,
    num_frames: usize,
    descriptors: serde_json::Map<String, serde_json::Value>,
}

/// Parses the output of [`to_json`]. Timelines come back in the canonical
/// [`descriptor_ids`] order, unknown identities after them in key order.
pub fn from_json(text: &str) -> Result<DescriptorDoc, DescriptorError> {
    let bad = |m: String| DescriptorError::Format(m);
    let raw: RawDoc = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut timelines = Vec::with_capacity(raw.descriptors.len());
    for (key, v) in &raw.descriptors {
        let id = DescriptorId::parse_key(key).ok_or_else(|| bad(format!("bad key {key:?}")))?;
        let values = if id.kind.is_vector() {
            let rows: Vec<[f64; 3]> =
                serde_json::from_value(v.clone()).map_err(|e| bad(format!("{key}: {e}")))?;
            Values::Vector(rows.into_iter().map(Vec3::from).collect())
        } else {
            let xs: Vec<f64> =
                serde_json::from_value(v.clone()).map_err(|e| bad(format!("{key}: {e}")))?;
            Values::Scalar(xs)
        };
        if values.len() != raw.num_frames {
            return Err(bad(format!(
                "{key} has {} frames, expected {}",
                values.len(),
                raw.num_frames
            )));
        }
        timelines.push(DescriptorTimeline { id, values });
    }
    let order: std::collections::HashMap<DescriptorId, usize> = descriptor_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    timelines.sort_by_key(|t| order.get(&t.id).copied().unwrap_or(usize::MAX));
    Ok(DescriptorDoc {
        fps: raw.fps,
        num_frames: raw.num_frames,
        timelines,
    })
}
