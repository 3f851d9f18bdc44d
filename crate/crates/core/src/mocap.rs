//! Marker-to-skeleton solving.
//!
//! Each hand carries 25 surface markers: one on the wrist, four on the dorsal
//! metacarpals (index to little) and four per finger at MCP, PIP, DIP and the
//! nail. Finger joints sit below their marker along the normal of the plane
//! spanned by the marker and its chain neighbours; the wrist is then refined
//! so that its distances to the five MCP joints match calibrated bone lengths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{
    empty_frame, joint, Finger, Frame, Hand, HandPose, JointId, MotionSequence, Segment, Vec3,
    JOINTS_PER_HAND, WRIST,
};

pub const MARKERS_PER_HAND: usize = 25;

/// Cross-product norm below which a neighbour plane is treated as degenerate.
const PLANE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocapError {
    #[error("degenerate normal plane")]
    DegenerateNormalPlane,
    #[error("underdetermined wrist")]
    UnderdeterminedWrist,
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("non-finite marker {label} on the {hand} hand")]
    NonFinite { hand: Hand, label: String },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<MocapError>,
    },
    #[error("marker stream is empty")]
    Empty,
    #[error("marker file: {0}")]
    Format(String),
}

/// Identity of one surface marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkerLabel {
    Wrist,
    /// Dorsal metacarpal marker; the thumb has none.
    Metacarpal(Finger),
    Joint(Finger, Segment),
}

const METACARPAL_FINGERS: [Finger; 4] =
    [Finger::Index, Finger::Middle, Finger::Ring, Finger::Little];

impl MarkerLabel {
    pub fn index(self) -> usize {
        match self {
            MarkerLabel::Wrist => 0,
            MarkerLabel::Metacarpal(f) => f.index(),
            MarkerLabel::Joint(f, s) => 5 + 4 * f.index() + s.index(),
        }
    }

    pub fn all() -> [MarkerLabel; MARKERS_PER_HAND] {
        let mut out = [MarkerLabel::Wrist; MARKERS_PER_HAND];
        for f in METACARPAL_FINGERS {
            out[f.index()] = MarkerLabel::Metacarpal(f);
        }
        for f in Finger::ALL {
            for s in Segment::ALL {
                let l = MarkerLabel::Joint(f, s);
                out[l.index()] = l;
            }
        }
        out
    }

    pub fn name(self) -> String {
        match self {
            MarkerLabel::Wrist => "wrist".into(),
            MarkerLabel::Metacarpal(f) => format!("meta_{}", f.name()),
            MarkerLabel::Joint(f, s) => format!("{}_{}", f.name(), s.name()),
        }
    }

    pub fn parse(s: &str) -> Option<MarkerLabel> {
        MarkerLabel::all().into_iter().find(|l| l.name() == s)
    }
}

pub type HandMarkers = [Vec3; MARKERS_PER_HAND];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerFrame {
    pub markers: [HandMarkers; 2],
}

impl MarkerFrame {
    pub fn get(&self, hand: Hand, label: MarkerLabel) -> Vec3 {
        self.markers[hand.index()][label.index()]
    }

    pub fn validate(&self) -> Result<(), MocapError> {
        for hand in Hand::BOTH {
            for label in MarkerLabel::all() {
                if !self.get(hand, label).iter().all(|c| c.is_finite()) {
                    return Err(MocapError::NonFinite {
                        hand,
                        label: label.name(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Skin-depth multipliers per joint class. Defaults are a working convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthFactors {
    pub mcp: f64,
    pub pip: f64,
    pub dip: f64,
    pub tip: f64,
}

impl Default for DepthFactors {
    fn default() -> Self {
        Self {
            mcp: 1.0,
            pip: 0.9,
            dip: 0.8,
            tip: 0.6,
        }
    }
}

impl DepthFactors {
    pub fn uniform() -> Self {
        Self {
            mcp: 1.0,
            pip: 1.0,
            dip: 1.0,
            tip: 1.0,
        }
    }

    pub fn for_segment(&self, s: Segment) -> f64 {
        match s {
            Segment::Mcp => self.mcp,
            Segment::Pip => self.pip,
            Segment::Dip => self.dip,
            Segment::Tip => self.tip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandCalibration {
    /// Skin-to-bone depth base, meters.
    pub depth_scale: f64,
    /// MCP-to-wrist bone lengths, thumb to little, meters.
    pub reference_lengths: [f64; 5],
    #[serde(default)]
    pub factors: DepthFactors,
}

impl HandCalibration {
    pub fn validate(&self) -> Result<(), MocapError> {
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(MocapError::Calibration("depth_scale must be > 0".into()));
        }
        if !self
            .reference_lengths
            .iter()
            .all(|l| *l > 0.0 && l.is_finite())
        {
            return Err(MocapError::Calibration(
                "reference lengths must be > 0".into(),
            ));
        }
        let f = self.factors;
        if ![f.mcp, f.pip, f.dip, f.tip]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            return Err(MocapError::Calibration("depth factors must be >= 0".into()));
        }
        Ok(())
    }

    /// Reference lengths measured from a neutral pose.
    pub fn from_neutral_pose(pose: &HandPose, depth_scale: f64, factors: DepthFactors) -> Self {
        Self {
            depth_scale,
            reference_lengths: Finger::ALL
                .map(|f| (pose[joint(f, Segment::Mcp)] - pose[WRIST]).norm()),
            factors,
        }
    }

    pub fn depth(&self, s: Segment) -> f64 {
        self.depth_scale * self.factors.for_segment(s)
    }
}

/// Calibration file: either one calibration shared by both hands or a
/// `{"left": .., "right": ..}` pair.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum CalibrationFile {
    PerHand {
        left: HandCalibration,
        right: HandCalibration,
    },
    Shared(HandCalibration),
}

impl CalibrationFile {
    pub fn pair(&self) -> [HandCalibration; 2] {
        match self {
            CalibrationFile::PerHand { left, right } => [*left, *right],
            CalibrationFile::Shared(c) => [*c, *c],
        }
    }
}

/// Unit normal of the plane through `a`, `b`, `c`: normalized `(b - a) × (c - b)`.
pub fn plane_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Result<Vec3, MocapError> {
    let n = (b - a).cross(&(c - b));
    let norm = n.norm();
    if !(norm >= PLANE_EPS) {
        return Err(MocapError::DegenerateNormalPlane);
    }
    Ok(n / norm)
}

/// Direction from the dorsal skin into the palm, from the wrist and the
/// index/little metacarpal markers.
pub fn palm_inward(m: &HandMarkers, hand: Hand) -> Result<Vec3, MocapError> {
    let w = m[MarkerLabel::Wrist.index()];
    let a = m[MarkerLabel::Metacarpal(Finger::Index).index()] - w;
    let b = m[MarkerLabel::Metacarpal(Finger::Little).index()] - w;
    let n = a.cross(&b);
    let norm = n.norm();
    if !(norm >= PLANE_EPS) {
        return Err(MocapError::DegenerateNormalPlane);
    }
    let sign = if hand == Hand::Right { 1.0 } else { -1.0 };
    Ok(n * (sign / norm))
}

/// Unit vector across the knuckles toward the thumb side.
fn radial_axis(m: &HandMarkers) -> Vec3 {
    let d = m[MarkerLabel::Metacarpal(Finger::Index).index()]
        - m[MarkerLabel::Metacarpal(Finger::Little).index()];
    d.try_normalize(0.0).unwrap_or_else(Vec3::zeros)
}

fn mcp_neighbour(f: Finger) -> Finger {
    match f {
        Finger::Thumb => Finger::Index,
        Finger::Index => Finger::Middle,
        Finger::Middle => Finger::Ring,
        Finger::Ring => Finger::Middle,
        Finger::Little => Finger::Ring,
    }
}

fn oriented(n: Vec3, reference: &Vec3) -> Vec3 {
    if n.dot(reference) < 0.0 {
        -n
    } else {
        n
    }
}

fn hand_normal(m: &HandMarkers, hand: Hand, id: JointId) -> Result<Vec3, MocapError> {
    let inward = palm_inward(m, hand)?;
    let at = |l: MarkerLabel| m[l.index()];
    match id {
        JointId::Wrist => Ok(inward),
        JointId::Finger(f, Segment::Mcp) => {
            let meta = if f == Finger::Thumb { Finger::Index } else { f };
            let n = plane_normal(
                &at(MarkerLabel::Metacarpal(meta)),
                &at(MarkerLabel::Joint(f, Segment::Mcp)),
                &at(MarkerLabel::Joint(mcp_neighbour(f), Segment::Mcp)),
            )?;
            Ok(oriented(n, &inward))
        }
        JointId::Finger(f, s) => {
            // The finger plane normal is nearly lateral, so the radial axis
            // keeps its sign stable while the finger curls.
            let (a, b, c) = match s {
                Segment::Pip => (Segment::Mcp, Segment::Pip, Segment::Dip),
                Segment::Dip => (Segment::Pip, Segment::Dip, Segment::Tip),
                _ => (Segment::Pip, Segment::Dip, Segment::Tip),
            };
            let n = plane_normal(
                &at(MarkerLabel::Joint(f, a)),
                &at(MarkerLabel::Joint(f, b)),
                &at(MarkerLabel::Joint(f, c)),
            )?;
            Ok(oriented(n, &(inward + radial_axis(m))))
        }
    }
}

/// Palmar-oriented unit normal used to push a marker onto its joint centre.
pub fn marker_normal(markers: &MarkerFrame, hand: Hand, id: JointId) -> Result<Vec3, MocapError> {
    hand_normal(&markers.markers[hand.index()], hand, id)
}

fn segment_depth(calib: &HandCalibration, id: JointId) -> f64 {
    match id {
        JointId::Wrist => calib.depth(Segment::Mcp),
        JointId::Finger(_, s) => calib.depth(s),
    }
}

fn estimate_hand(
    m: &HandMarkers,
    hand: Hand,
    calib: &HandCalibration,
) -> Result<HandPose, MocapError> {
    let mut pose = [Vec3::zeros(); JOINTS_PER_HAND];
    for (j, slot) in pose.iter_mut().enumerate() {
        let id = JointId::from_index(j).expect("joint index");
        let label = match id {
            JointId::Wrist => MarkerLabel::Wrist,
            JointId::Finger(f, s) => MarkerLabel::Joint(f, s),
        };
        let n = hand_normal(m, hand, id)?;
        *slot = m[label.index()] + n * segment_depth(calib, id);
    }
    Ok(pose)
}

/// Joint centres for one hand: each marker offset along its normal by the
/// calibrated depth. The wrist is only an initial estimate.
pub fn estimate_joints(
    markers: &MarkerFrame,
    hand: Hand,
    calib: &HandCalibration,
) -> Result<HandPose, MocapError> {
    calib.validate()?;
    markers.validate()?;
    estimate_hand(&markers.markers[hand.index()], hand, calib)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristFit {
    pub wrist: Vec3,
    /// Objective at `wrist`, m².
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristSolverOptions {
    pub max_iters: usize,
    /// Step-length stopping tolerance, meters.
    pub tol: f64,
}

impl Default for WristSolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-12,
        }
    }
}

/// `Σ (‖mcp_i − w‖ − L_i)²`
pub fn wrist_objective(mcps: &[Vec3; 5], lengths: &[f64; 5], w: &Vec3) -> f64 {
    mcps.iter()
        .zip(lengths)
        .map(|(m, l)| {
            let r = (m - w).norm() - l;
            r * r
        })
        .sum()
}

/// Gauss-Newton with step halving on the wrist position.
pub fn optimize_wrist_position(
    mcps: &[Vec3; 5],
    lengths: &[f64; 5],
    init: Vec3,
    opts: WristSolverOptions,
) -> Result<WristFit, MocapError> {
    let spread = mcps
        .iter()
        .flat_map(|a| mcps.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    if !(spread > 1e-12) {
        return Err(MocapError::UnderdeterminedWrist);
    }
    let initial = wrist_objective(mcps, lengths, &init);
    let mut w = init;
    let mut f = initial;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vec3::zeros();
        for (m, l) in mcps.iter().zip(lengths) {
            let d = w - m;
            let dist = d.norm();
            if dist < 1e-15 {
                continue;
            }
            let row = d / dist;
            jtj += row * row.transpose();
            jtr += row * (dist - l);
        }
        let step = match jtj.cholesky() {
            Some(ch) => -ch.solve(&jtr),
            None => {
                let damp = 1e-12 * (1.0 + jtj.trace());
                match (jtj + Matrix3::identity() * damp).try_inverse() {
                    Some(inv) => -(inv * jtr),
                    None => break,
                }
            }
        };
        if !step.iter().all(|c| c.is_finite()) {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = w + step * alpha;
            let fc = wrist_objective(mcps, lengths, &cand);
            if fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // no descent along the Gauss-Newton direction: stationary point
            converged = true;
            break;
        };
        let moved = (step * alpha).norm();
        w = cand;
        f = fc;
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(WristFit {
        wrist: w,
        residual: f,
        initial_residual: initial,
        iterations,
        converged,
    })
}

/// Refines the wrist of an estimated hand against the calibrated MCP lengths,
/// starting from `joints[WRIST]`.
pub fn optimize_wrist(
    joints: &HandPose,
    calib: &HandCalibration,
    opts: WristSolverOptions,
) -> Result<WristFit, MocapError> {
    calib.validate()?;
    let mcps = Finger::ALL.map(|f| joints[joint(f, Segment::Mcp)]);
    if !mcps.iter().all(|m| m.iter().all(|c| c.is_finite())) {
        return Err(MocapError::NonFinite {
            hand: Hand::Left,
            label: "mcp".into(),
        });
    }
    optimize_wrist_position(&mcps, &calib.reference_lengths, joints[WRIST], opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub fps: f64,
    pub wrist: WristSolverOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            fps: 30.0,
            wrist: WristSolverOptions::default(),
        }
    }
}

/// Solves every frame: joint estimation then wrist refinement per hand. The
/// wrist solve starts from whichever of the marker estimate and the previous
/// frame's solution has the lower objective.
pub fn solve_sequence(
    frames: &[MarkerFrame],
    calib: &[HandCalibration; 2],
    opts: SolveOptions,
    source_id: &str,
) -> Result<MotionSequence, MocapError> {
    if frames.is_empty() {
        return Err(MocapError::Empty);
    }
    for c in calib {
        c.validate()?;
    }
    let mut prev: [Option<Vec3>; 2] = [None, None];
    let mut out = Vec::with_capacity(frames.len());
    for (index, mf) in frames.iter().enumerate() {
        let wrap = |e: MocapError| MocapError::Frame {
            index,
            source: Box::new(e),
        };
        mf.validate().map_err(wrap)?;
        let mut fr: Frame = empty_frame();
        for hand in Hand::BOTH {
            let h = hand.index();
            let c = &calib[h];
            let mut pose = estimate_hand(&mf.markers[h], hand, c).map_err(wrap)?;
            let mcps = Finger::ALL.map(|f| pose[joint(f, Segment::Mcp)]);
            let mut init = pose[WRIST];
            if let Some(p) = prev[h] {
                if wrist_objective(&mcps, &c.reference_lengths, &p)
                    < wrist_objective(&mcps, &c.reference_lengths, &init)
                {
                    init = p;
                }
            }
            let fit = optimize_wrist_position(&mcps, &c.reference_lengths, init, opts.wrist)
                .map_err(wrap)?;
            pose[WRIST] = fit.wrist;
            prev[h] = Some(fit.wrist);
            fr[h] = pose;
        }
        out.push(fr);
    }
    MotionSequence::new(opts.fps, out, source_id).map_err(|e| MocapError::Format(e.to_string()))
}

/// Markers consistent with a known skeleton under [`estimate_joints`].
///
/// Metacarpal markers sit on the dorsal palm between wrist and MCP. The other
/// 21 markers solve `M + n(M)·d = J` by Newton iteration with a
/// finite-difference Jacobian; plain fixed-point iteration is unstable here
/// because the plane normal of a mildly bent finger is very sensitive to
/// marker offsets.
pub fn simulate_markers(
    pose: &HandPose,
    hand: Hand,
    calib: &HandCalibration,
) -> Result<HandMarkers, MocapError> {
    let w = pose[WRIST];
    let mcp = |f: Finger| pose[joint(f, Segment::Mcp)];
    let sign = if hand == Hand::Right { 1.0 } else { -1.0 };
    let inward = (mcp(Finger::Index) - w)
        .cross(&(mcp(Finger::Little) - w))
        .try_normalize(PLANE_EPS)
        .ok_or(MocapError::DegenerateNormalPlane)?
        * sign;
    let dorsal = -inward * calib.depth(Segment::Mcp);

    let labels: Vec<(usize, JointId)> = (0..JOINTS_PER_HAND)
        .map(|j| {
            let id = JointId::from_index(j).expect("joint index");
            let label = match id {
                JointId::Wrist => MarkerLabel::Wrist,
                JointId::Finger(f, s) => MarkerLabel::Joint(f, s),
            };
            (label.index(), id)
        })
        .collect();

    let mut m: HandMarkers = [Vec3::zeros(); MARKERS_PER_HAND];
    for f in METACARPAL_FINGERS {
        m[MarkerLabel::Metacarpal(f).index()] = w + (mcp(f) - w) * 0.6 + dorsal;
    }
    // start from the joints themselves so finger planes match the skeleton
    for (j, (k, _)) in labels.iter().enumerate() {
        m[*k] = pose[j];
    }
    m[MarkerLabel::Wrist.index()] = w + dorsal;
    for (j, (k, id)) in labels.iter().enumerate() {
        if *id != JointId::Wrist {
            let n = hand_normal(&m, hand, *id)?;
            m[*k] = pose[j] - n * segment_depth(calib, *id);
        }
    }

    let n_unknowns = 3 * labels.len();
    let residual = |m: &HandMarkers| -> Result<DVector<f64>, MocapError> {
        let mut r = DVector::zeros(n_unknowns);
        for (j, (k, id)) in labels.iter().enumerate() {
            let n = hand_normal(m, hand, *id)?;
            let e = m[*k] + n * segment_depth(calib, *id) - pose[j];
            r.fixed_rows_mut::<3>(3 * j).copy_from(&e);
        }
        Ok(r)
    };

    let mut r = residual(&m)?;
    for _ in 0..60 {
        if r.amax() < 1e-14 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(n_unknowns, n_unknowns);
        for (col_j, (k, _)) in labels.iter().enumerate() {
            for c in 0..3 {
                let mut plus = m;
                let mut minus = m;
                plus[*k][c] += h;
                minus[*k][c] -= h;
                let d = (residual(&plus)? - residual(&minus)?) / (2.0 * h);
                jac.set_column(3 * col_j + c, &d);
            }
        }
        let Some(step) = jac.lu().solve(&r) else {
            break;
        };
        let norm0 = r.norm();
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut cand = m;
            for (col_j, (k, _)) in labels.iter().enumerate() {
                cand[*k] -= step.fixed_rows::<3>(3 * col_j) * alpha;
            }
            if let Ok(rc) = residual(&cand) {
                if rc.norm() < norm0 {
                    m = cand;
                    r = rc;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let err = r.amax();
    if err > 1e-12 {
        return Err(MocapError::Format(format!(
            "marker simulation did not settle ({err:.3e} m)"
        )));
    }
    Ok(m)
}

/// Reads the `frame,hand,label,x,y,z` marker CSV.
pub fn read_marker_csv(path: &Path) -> Result<Vec<MarkerFrame>, MocapError> {
    let text = fs::read_to_string(path).map_err(|e| MocapError::Format(e.to_string()))?;
    parse_marker_csv(&text)
}

#[derive(Debug, Deserialize, Serialize)]
struct MarkerRow {
    frame: usize,
    hand: String,
    label: String,
    x: f64,
    y: f64,
    z: f64,
}

pub fn parse_marker_csv(text: &str) -> Result<Vec<MarkerFrame>, MocapError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| MocapError::Format(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["frame", "hand", "label", "x", "y", "z"] {
        return Err(MocapError::Format(
            "header must be frame,hand,label,x,y,z".into(),
        ));
    }
    let mut frames: BTreeMap<usize, ([HandMarkers; 2], [[bool; MARKERS_PER_HAND]; 2])> =
        BTreeMap::new();
    for (line, row) in rdr.deserialize::<MarkerRow>().enumerate() {
        let row = row.map_err(|e| MocapError::Format(format!("row {}: {e}", line + 2)))?;
        let hand = Hand::parse(&row.hand)
            .ok_or_else(|| MocapError::Format(format!("unknown hand {:?}", row.hand)))?;
        let label = MarkerLabel::parse(&row.label)
            .ok_or_else(|| MocapError::Format(format!("unknown marker {:?}", row.label)))?;
        let entry = frames.entry(row.frame).or_insert((
            [[Vec3::zeros(); MARKERS_PER_HAND]; 2],
            [[false; MARKERS_PER_HAND]; 2],
        ));
        entry.0[hand.index()][label.index()] = Vec3::new(row.x, row.y, row.z);
        entry.1[hand.index()][label.index()] = true;
    }
    let mut out = Vec::with_capacity(frames.len());
    for (expected, (index, (markers, seen))) in frames.into_iter().enumerate() {
        if index != expected {
            return Err(MocapError::Format(format!("frame {expected} is missing")));
        }
        for hand in Hand::BOTH {
            if let Some(k) = seen[hand.index()].iter().position(|s| !s) {
                return Err(MocapError::Format(format!(
                    "frame {index}: {hand} marker {} missing",
                    MarkerLabel::all()[k].name()
                )));
            }
        }
        out.push(MarkerFrame { markers });
    }
    Ok(out)
}

pub fn write_marker_csv(frames: &[MarkerFrame]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, mf) in frames.iter().enumerate() {
        for hand in Hand::BOTH {
            for label in MarkerLabel::all() {
                let p = mf.get(hand, label);
                w.serialize(MarkerRow {
                    frame: i,
                    hand: hand.name().into(),
                    label: label.name(),
                    x: p.x,
                    y: p.y,
                    z: p.z,
                })
                .expect("in-memory csv");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
