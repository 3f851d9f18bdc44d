//! Contact labels and contact precision / recall / F1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::palm::{frame_seed, palm_vertices, PalmHull, PALM_POINTS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::motion::{joint, Finger, Frame, Hand, MotionSequence, Segment, Vec3};

/// Contact distance, meters.
pub const CONTACT_THRESHOLD: f64 = 0.02;

/// Fingers paired with the thumb for intra-hand contact.
pub const THUMB_PARTNERS: [Finger; 4] =
    [Finger::Index, Finger::Middle, Finger::Ring, Finger::Little];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("label shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("threshold must be > 0")]
    BadThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactLabels {
    /// Per frame, per hand, thumb against index..little.
    pub intra: Vec<[[bool; 4]; 2]>,
    pub inter: Vec<bool>,
    pub threshold: f64,
}

impl ContactLabels {
    pub fn len(&self) -> usize {
        self.inter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inter.is_empty()
    }
}

pub fn intra_contact_frame(fr: &Frame, threshold: f64) -> [[bool; 4]; 2] {
    let mut out = [[false; 4]; 2];
    for hand in Hand::BOTH {
        let pose = &fr[hand.index()];
        let thumb = pose[joint(Finger::Thumb, Segment::Tip)];
        for (k, f) in THUMB_PARTNERS.into_iter().enumerate() {
            out[hand.index()][k] = (pose[joint(f, Segment::Tip)] - thumb).norm() < threshold;
        }
    }
    out
}

pub fn intra_contact(seq: &MotionSequence, threshold: f64) -> Vec<[[bool; 4]; 2]> {
    seq.frames
        .iter()
        .map(|fr| intra_contact_frame(fr, threshold))
        .collect()
}

fn bounding_sphere(v: &[Vec3; 6]) -> (Vec3, f64) {
    let c = v.iter().sum::<Vec3>() / 6.0;
    let r = v.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    (c, r)
}

fn any_within(a: &[Vec3], b: &[Vec3], t2: f64) -> bool {
    a.iter()
        .any(|p| b.iter().any(|q| (p - q).norm_squared() < t2))
}

/// Closest cross-hand pair over joints plus palm clouds, with early exit once
/// a pair under `threshold` is found.
pub fn inter_contact_frame(fr: &Frame, threshold: f64, seed: u64) -> bool {
    let t2 = threshold * threshold;
    let (l, r) = (&fr[0][..], &fr[1][..]);
    if any_within(l, r, t2) {
        return true;
    }
    let verts = [palm_vertices(&fr[0]), palm_vertices(&fr[1])];
    let spheres = [bounding_sphere(&verts[0]), bounding_sphere(&verts[1])];
    // cloud points lie inside their hull, hence inside its bounding sphere
    let near =
        |s: (Vec3, f64), pts: &[Vec3]| pts.iter().any(|q| (q - s.0).norm() < s.1 + threshold);
    let cloud = |h: usize| -> Option<Vec<Vec3>> {
        let hull = PalmHull::new(verts[h]).ok()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(h as u64);
        hull.sample(&mut rng, PALM_POINTS).ok()
    };
    let mut clouds: [Option<Option<Vec<Vec3>>>; 2] = [None, None];
    let mut get =
        |h: usize| -> Option<Vec<Vec3>> { clouds[h].get_or_insert_with(|| cloud(h)).clone() };
    if near(spheres[0], r) {
        if let Some(c) = get(0) {
            if any_within(&c, r, t2) {
                return true;
            }
        }
    }
    if near(spheres[1], l) {
        if let Some(c) = get(1) {
            if any_within(&c, l, t2) {
                return true;
            }
        }
    }
    let gap = (spheres[0].0 - spheres[1].0).norm();
    if gap < spheres[0].1 + spheres[1].1 + threshold {
        if let (Some(a), Some(b)) = (get(0), get(1)) {
            return any_within(&a, &b, t2);
        }
    }
    false
}

/// Inter-hand contact per frame; palm clouds use the per-frame seed.
pub fn inter_contact(seq: &MotionSequence, threshold: f64, seed: u64) -> Vec<bool> {
    seq.frames
        .iter()
        .enumerate()
        .map(|(i, fr)| inter_contact_frame(fr, threshold, frame_seed(seed, i)))
        .collect()
}

pub fn contact_labels(
    seq: &MotionSequence,
    threshold: f64,
    seed: u64,
) -> Result<ContactLabels, ContactError> {
    if !(threshold > 0.0) {
        return Err(ContactError::BadThreshold);
    }
    Ok(ContactLabels {
        intra: intra_contact(seq, threshold),
        inter: inter_contact(seq, threshold, seed),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Set when an empty denominator was resolved by convention.
    #[serde(skip)]
    pub degenerate: bool,
}

impl CategoryScore {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let mut degenerate = false;
        let mut ratio = |num: u64, den: u64, other_side_empty: bool| {
            if den == 0 {
                degenerate = true;
                if other_side_empty {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, tp + fn_ == 0);
        let recall = ratio(tp, tp + fn_, tp + fp == 0);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub intra: CategoryScore,
    pub inter: CategoryScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Every frame and pair is one binary decision.
    #[default]
    PerFrame,
    /// A pair counts as positive for a clip if it is positive on any frame.
    PerClip,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Counts {
    fn add(&mut self, gt: bool, gen: bool) {
        match (gt, gen) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

fn check_shapes(gt: &ContactLabels, gen: &ContactLabels) -> Result<(), ContactError> {
    if gt.inter.len() != gen.inter.len() || gt.intra.len() != gen.intra.len() {
        return Err(ContactError::ShapeMismatch(format!(
            "{} vs {} frames",
            gt.inter.len(),
            gen.inter.len()
        )));
    }
    if gt.intra.len() != gt.inter.len() {
        return Err(ContactError::ShapeMismatch(
            "intra and inter lengths differ".into(),
        ));
    }
    Ok(())
}

fn accumulate(
    gt: &ContactLabels,
    gen: &ContactLabels,
    mode: ScoreMode,
    intra: &mut Counts,
    inter: &mut Counts,
) {
    match mode {
        ScoreMode::PerFrame => {
            for (a, b) in gt.intra.iter().zip(&gen.intra) {
                for h in 0..2 {
                    for k in 0..4 {
                        intra.add(a[h][k], b[h][k]);
                    }
                }
            }
            for (a, b) in gt.inter.iter().zip(&gen.inter) {
                inter.add(*a, *b);
            }
        }
        ScoreMode::PerClip => {
            for h in 0..2 {
                for k in 0..4 {
                    intra.add(
                        gt.intra.iter().any(|x| x[h][k]),
                        gen.intra.iter().any(|x| x[h][k]),
                    );
                }
            }
            inter.add(gt.inter.iter().any(|x| *x), gen.inter.iter().any(|x| *x));
        }
    }
}

/// Scores one generated clip against its ground truth.
pub fn score(gt: &ContactLabels, gen: &ContactLabels) -> Result<ContactReport, ContactError> {
    score_clips(
        std::slice::from_ref(gt),
        std::slice::from_ref(gen),
        ScoreMode::PerFrame,
    )
}

/// Scores clip pairs with summed counts.
pub fn score_clips(
    gt: &[ContactLabels],
    gen: &[ContactLabels],
    mode: ScoreMode,
) -> Result<ContactReport, ContactError> {
    if gt.len() != gen.len() {
        return Err(ContactError::ShapeMismatch(format!(
            "{} vs {} clips",
            gt.len(),
            gen.len()
        )));
    }
    let mut intra = Counts::default();
    let mut inter = Counts::default();
    for (a, b) in gt.iter().zip(gen) {
        check_shapes(a, b)?;
        accumulate(a, b, mode, &mut intra, &mut inter);
    }
    Ok(ContactReport {
        intra: CategoryScore::from_counts(intra.tp, intra.fp, intra.fn_),
        inter: CategoryScore::from_counts(inter.tp, inter.fp, inter.fn_),
    })
}
