//! Event segmentation: descriptor timelines to state labels, state labels to
//! transition / constant events, and the feature JSON that carries them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{DescriptorId, DescriptorKind, DescriptorTimeline, HandScope, Values};
use crate::motion::Vec3;

/// Default debounce, frames.
pub const DEFAULT_MIN_DWELL: usize = 3;
/// Default displacement bin for axis motion, meters.
pub const DEFAULT_AXIS_BIN: f64 = 0.02;
/// State used by axis-motion events when nothing moves.
pub const STATIONARY: &str = "stationary";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("no state table for {0}")]
    NoTable(DescriptorKind),
    #[error("{0} is vector valued and has no state table")]
    VectorTimeline(String),
    #[error("{0} is scalar valued, axis motion needs vectors")]
    ScalarTimeline(String),
    #[error("value {value} at frame {frame} of {descriptor} lies outside every state")]
    OutOfRange {
        descriptor: String,
        frame: usize,
        value: f64,
    },
    #[error("bad state table for {kind}: {reason}")]
    BadTable {
        kind: DescriptorKind,
        reason: String,
    },
    #[error("bad option: {0}")]
    BadOption(String),
    #[error("bad feature document: {0}")]
    Format(String),
}

/// One row of a state table. The interval is `[lo, hi)` unless `closed` is
/// set, in which case `hi` is included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub closed: bool,
    pub label: String,
}

impl StateInterval {
    pub fn new(lo: f64, hi: f64, label: &str) -> Self {
        Self {
            lo,
            hi,
            closed: false,
            label: label.to_string(),
        }
    }

    pub fn closed(lo: f64, hi: f64, label: &str) -> Self {
        Self {
            closed: true,
            ..Self::new(lo, hi, label)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && (v < self.hi || (self.closed && v == self.hi))
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Ordered value intervals per scalar descriptor kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTable {
    pub rows: BTreeMap<DescriptorKind, Vec<StateInterval>>,
}

impl Default for StateTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl StateTable {
    /// The standard quantization: flexion and spacing in degrees, distances
    /// in meters.
    pub fn standard() -> Self {
        let mut rows = BTreeMap::new();
        rows.insert(
            DescriptorKind::FingerFlexing,
            vec![
                StateInterval::new(-180.0, -20.0, "hyper extend"),
                StateInterval::new(-20.0, 30.0, "fully extend"),
                StateInterval::new(30.0, 60.0, "partially bent"),
                StateInterval::closed(60.0, 180.0, "fully bent"),
            ],
        );
        rows.insert(
            DescriptorKind::FingerSpacing,
            vec![
                StateInterval::new(0.0, 20.0, "closed"),
                StateInterval::closed(20.0, 180.0, "open"),
            ],
        );
        rows.insert(
            DescriptorKind::FingerFingerDistance,
            vec![
                StateInterval::new(0.0, 0.02, "contact"),
                StateInterval::new(0.02, f64::INFINITY, "no contact"),
            ],
        );
        rows.insert(
            DescriptorKind::FingerPalmDistance,
            vec![
                StateInterval::new(0.0, 0.025, "contact"),
                StateInterval::new(0.025, 0.035, "near"),
                StateInterval::new(0.035, f64::INFINITY, "far"),
            ],
        );
        Self { rows }
    }

    /// Rows must be contiguous, increasing and uniquely labeled.
    pub fn validate(&self) -> Result<(), EventError> {
        for (&kind, rows) in &self.rows {
            let bad = |reason: String| EventError::BadTable { kind, reason };
            if rows.is_empty() {
                return Err(bad("no rows".into()));
            }
            for (i, r) in rows.iter().enumerate() {
                if r.lo.is_nan() || r.hi.is_nan() || !(r.lo < r.hi) {
                    return Err(bad(format!("row {i} is empty")));
                }
                if r.closed && i + 1 != rows.len() {
                    return Err(bad(format!("row {i} is closed but not last")));
                }
                if rows[..i].iter().any(|p| p.label == r.label) {
                    return Err(bad(format!("label {:?} repeats", r.label)));
                }
                if i > 0 && rows[i - 1].hi != r.lo {
                    return Err(bad(format!("gap or overlap before row {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self, kind: DescriptorKind) -> Option<&[StateInterval]> {
        self.rows.get(&kind).map(|r| r.as_slice())
    }

    /// Index of the row holding `v`.
    pub fn lookup(&self, kind: DescriptorKind, v: f64) -> Option<usize> {
        self.rows(kind)?.iter().position(|r| r.contains(v))
    }
}

/// Per-frame state labels for a scalar timeline.
///
/// With `hysteresis > 0` a state is kept while the value stays within the
/// state's interval widened by `hysteresis` times its width (the finite
/// neighbour's width for an unbounded row).
pub fn label_states(
    timeline: &DescriptorTimeline,
    table: &StateTable,
    hysteresis: f64,
) -> Result<Vec<String>, EventError> {
    let idx = state_indices(timeline, table, hysteresis)?;
    let rows = table
        .rows(timeline.id.kind)
        .expect("checked by state_indices");
    Ok(idx.into_iter().map(|i| rows[i].label.clone()).collect())
}

/// Row index per frame, see [`label_states`].
pub fn state_indices(
    timeline: &DescriptorTimeline,
    table: &StateTable,
    hysteresis: f64,
) -> Result<Vec<usize>, EventError> {
    let name = timeline.id.key();
    let values = match &timeline.values {
        Values::Scalar(v) => v,
        Values::Vector(_) => return Err(EventError::VectorTimeline(name)),
    };
    if !(0.0..0.5).contains(&hysteresis) {
        return Err(EventError::BadOption(format!(
            "hysteresis {hysteresis} outside [0, 0.5)"
        )));
    }
    let rows = table
        .rows(timeline.id.kind)
        .ok_or(EventError::NoTable(timeline.id.kind))?;
    let margin = |i: usize| {
        let w = rows[i].width();
        let w = if w.is_finite() {
            w
        } else {
            rows.iter()
                .map(|r| r.width())
                .filter(|w| w.is_finite())
                .fold(0.0, f64::max)
        };
        hysteresis * w
    };
    let mut current: Option<usize> = None;
    let mut out = Vec::with_capacity(values.len());
    for (frame, &v) in values.iter().enumerate() {
        // fast path: the current row still holds the value
        if let Some(c) = current {
            if rows[c].contains(v) {
                out.push(c);
                continue;
            }
        }
        let raw =
            rows.iter()
                .position(|r| r.contains(v))
                .ok_or_else(|| EventError::OutOfRange {
                    descriptor: name.clone(),
                    frame,
                    value: v,
                })?;
        let state = match current {
            Some(c) if c != raw => {
                let m = margin(c);
                let hi = rows[c].hi + m;
                // widened like the row itself: half-open unless closed
                if v >= rows[c].lo - m && (v < hi || (rows[c].closed && v == hi)) {
                    c
                } else {
                    raw
                }
            }
            _ => raw,
        };
        current = Some(state);
        out.push(state);
    }
    Ok(out)
}

/// A maximal run of one label, frames `[start, end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Run {
    fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

pub fn runs<S: AsRef<str>>(labels: &[S]) -> Vec<Run> {
    runs_by(
        labels,
        |a, b| a.as_ref() == b.as_ref(),
        |l| l.as_ref().to_string(),
    )
}

fn runs_by<T>(xs: &[T], same: impl Fn(&T, &T) -> bool, name: impl Fn(&T) -> String) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    let mut start = 0;
    for i in 1..=xs.len() {
        if i == xs.len() || !same(&xs[i], &xs[start]) {
            out.push(Run {
                label: name(&xs[start]),
                start,
                end: i - 1,
            });
            start = i;
        }
    }
    out
}

/// Runs shorter than `min_dwell` are absorbed by the preceding run; a short
/// leading run is absorbed by the one after it.
pub fn debounce(runs_in: Vec<Run>, min_dwell: usize) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::with_capacity(runs_in.len());
    for r in runs_in {
        match out.last_mut() {
            Some(prev) if prev.label == r.label || r.len() < min_dwell => prev.end = r.end,
            _ => out.push(r),
        }
    }
    if out.len() > 1 && out[0].len() < min_dwell {
        let first = out.remove(0);
        out[0].start = first.start;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Transition,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub descriptor: DescriptorKind,
    pub hand: HandScope,
    pub target: String,
    pub kind: EventKind,
    pub start_frame: usize,
    pub end_frame: usize,
    pub from_state: String,
    pub to_state: String,
}

impl Event {
    pub fn id(&self) -> DescriptorId {
        DescriptorId::new(self.descriptor, self.hand, self.target.clone())
    }

    fn new(id: &DescriptorId, kind: EventKind, span: (usize, usize), from: &str, to: &str) -> Self {
        Self {
            descriptor: id.kind,
            hand: id.hand,
            target: id.target.clone(),
            kind,
            start_frame: span.0,
            end_frame: span.1,
            from_state: from.to_string(),
            to_state: to.to_string(),
        }
    }

    pub fn span_len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

/// Transition events between consecutive runs, spanning the last frame of
/// the old run and the first frame of the new one. A timeline without any
/// change yields one constant event over all frames.
pub fn segment_events<S: AsRef<str>>(
    id: &DescriptorId,
    labels: &[S],
    min_dwell: usize,
) -> Vec<Event> {
    let rs = debounce(runs(labels), min_dwell.max(1));
    transitions_from_runs(id, &rs)
}

fn transitions_from_runs(id: &DescriptorId, rs: &[Run]) -> Vec<Event> {
    match rs {
        [] => Vec::new(),
        [only] => vec![Event::new(
            id,
            EventKind::Constant,
            (only.start, only.end),
            &only.label,
            &only.label,
        )],
        _ => rs
            .windows(2)
            .map(|w| {
                Event::new(
                    id,
                    EventKind::Transition,
                    (w[0].end, w[1].start),
                    &w[0].label,
                    &w[1].label,
                )
            })
            .collect(),
    }
}

/// One constant event per debounced run; the spans partition the frames.
pub fn run_events<S: AsRef<str>>(id: &DescriptorId, labels: &[S], min_dwell: usize) -> Vec<Event> {
    constants_from_runs(id, &debounce(runs(labels), min_dwell.max(1)))
}

fn constants_from_runs(id: &DescriptorId, rs: &[Run]) -> Vec<Event> {
    rs.iter()
        .map(|r| {
            Event::new(
                id,
                EventKind::Constant,
                (r.start, r.end),
                &r.label,
                &r.label,
            )
        })
        .collect()
}

/// Rebuilds per-frame labels from the events of one descriptor, the inverse
/// of [`segment_events`] with `min_dwell = 1`.
pub fn reconstruct_labels(events: &[Event], num_frames: usize) -> Result<Vec<String>, EventError> {
    let mut ev: Vec<&Event> = events.iter().collect();
    ev.sort_by_key(|e| (e.start_frame, e.end_frame));
    let mut out: Vec<String> = Vec::with_capacity(num_frames);
    let fail = |m: &str| EventError::Format(m.to_string());
    match ev.as_slice() {
        [] => {
            if num_frames > 0 {
                return Err(fail("no events for a nonempty timeline"));
            }
        }
        [e] if e.kind == EventKind::Constant => {
            if e.start_frame != 0 || e.end_frame + 1 != num_frames {
                return Err(fail("constant event does not cover the timeline"));
            }
            out.resize(num_frames, e.from_state.clone());
        }
        _ => {
            let mut state = ev[0].from_state.clone();
            for e in &ev {
                if e.kind != EventKind::Transition || e.from_state != state {
                    return Err(fail("transitions do not chain"));
                }
                if e.end_frame != e.start_frame + 1 || e.start_frame < out.len().saturating_sub(1) {
                    return Err(fail("transition span is not a boundary"));
                }
                out.resize(e.start_frame + 1, state.clone());
                state = e.to_state.clone();
            }
            if out.len() >= num_frames {
                return Err(fail("transition beyond the last frame"));
            }
            out.resize(num_frames, state);
        }
    }
    Ok(out)
}

/// Per-axis direction words, x then y then z.
pub const AXIS_WORDS: [(&str, &str); 3] = [
    ("moves right", "moves left"),
    ("moves forward", "moves backward"),
    ("moves up", "moves down"),
];

/// Monotone excursions of at least `bin` along one axis, as
/// `(start, end, increasing)`. Reversals smaller than `bin` are ignored.
pub fn axis_runs(xs: &[f64], bin: f64) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    if xs.is_empty() {
        return out;
    }
    // undecided: latest extremes since the start
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut dir: Option<bool> = None;
    // a move ends at the first frame of its extreme, the next starts at the last
    let (mut anchor, mut ext_first, mut ext_last) = (0usize, 0usize, 0usize);
    for i in 1..xs.len() {
        let x = xs[i];
        match dir {
            None => {
                if x <= xs[lo] {
                    lo = i;
                }
                if x >= xs[hi] {
                    hi = i;
                }
                if x - xs[lo] >= bin {
                    dir = Some(true);
                    anchor = lo;
                    (ext_first, ext_last) = (i, i);
                } else if xs[hi] - x >= bin {
                    dir = Some(false);
                    anchor = hi;
                    (ext_first, ext_last) = (i, i);
                }
            }
            Some(up) => {
                let e = xs[ext_first];
                let further = if up { x > e } else { x < e };
                let back = if up { e - x } else { x - e };
                if further {
                    (ext_first, ext_last) = (i, i);
                } else if x == e {
                    ext_last = i;
                } else if back >= bin {
                    out.push((anchor, ext_first, up));
                    anchor = ext_last;
                    (ext_first, ext_last) = (i, i);
                    dir = Some(!up);
                }
            }
        }
    }
    if let Some(up) = dir {
        out.push((anchor, ext_first, up));
    }
    out
}

/// Movement events for a vector timeline: one transition per monotone
/// excursion along an axis, or a single constant `stationary` event.
pub fn axis_motion_events(
    timeline: &DescriptorTimeline,
    bin: f64,
) -> Result<Vec<Event>, EventError> {
    let values = match &timeline.values {
        Values::Vector(v) => v,
        Values::Scalar(_) => return Err(EventError::ScalarTimeline(timeline.id.key())),
    };
    if !(bin > 0.0) {
        return Err(EventError::BadOption(format!("axis bin {bin} must be > 0")));
    }
    Ok(axis_events(&timeline.id, values, bin))
}

fn axis_events(id: &DescriptorId, values: &[Vec3], bin: f64) -> Vec<Event> {
    let mut out = Vec::new();
    for (axis, words) in AXIS_WORDS.iter().enumerate() {
        let xs: Vec<f64> = values.iter().map(|p| p[axis]).collect();
        let mut prev = STATIONARY;
        for (s, e, up) in axis_runs(&xs, bin) {
            let to = if up { words.0 } else { words.1 };
            out.push(Event::new(id, EventKind::Transition, (s, e), prev, to));
            prev = to;
        }
    }
    if out.is_empty() && !values.is_empty() {
        out.push(Event::new(
            id,
            EventKind::Constant,
            (0, values.len() - 1),
            STATIONARY,
            STATIONARY,
        ));
    }
    out.sort_by_key(|e| (e.start_frame, e.end_frame));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventOptions {
    pub min_dwell: usize,
    pub hysteresis: f64,
    pub axis_bin: f64,
    /// Emit one constant event per run instead of transitions.
    pub runs: bool,
}

impl Default for EventOptions {
    fn default() -> Self {
        Self {
            min_dwell: DEFAULT_MIN_DWELL,
            hysteresis: 0.0,
            axis_bin: DEFAULT_AXIS_BIN,
            runs: false,
        }
    }
}

/// Events of one timeline: table states for scalars, axis motion for vectors.
pub fn timeline_events(
    timeline: &DescriptorTimeline,
    table: &StateTable,
    opts: &EventOptions,
) -> Result<Vec<Event>, EventError> {
    match timeline.values {
        Values::Vector(_) => axis_motion_events(timeline, opts.axis_bin),
        Values::Scalar(_) => {
            let rows = table
                .rows(timeline.id.kind)
                .ok_or(EventError::NoTable(timeline.id.kind))?;
            let idx = state_indices(timeline, table, opts.hysteresis)?;
            let rs = debounce(
                runs_by(&idx, |a, b| a == b, |&i| rows[i].label.clone()),
                opts.min_dwell.max(1),
            );
            Ok(if opts.runs {
                constants_from_runs(&timeline.id, &rs)
            } else {
                transitions_from_runs(&timeline.id, &rs)
            })
        }
    }
}

/// The feature document handed to the captioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub fps: f64,
    pub num_frames: usize,
    pub events: Vec<Event>,
}

impl FeatureDoc {
    pub fn duration_s(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(EventError::Format(format!("fps {} must be > 0", self.fps)));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.start_frame > e.end_frame || e.end_frame >= self.num_frames {
                return Err(EventError::Format(format!(
                    "event {i} span [{}, {}] outside {} frames",
                    e.start_frame, e.end_frame, self.num_frames
                )));
            }
            if e.kind == EventKind::Transition && e.from_state == e.to_state {
                return Err(EventError::Format(format!(
                    "event {i} transitions to its own state"
                )));
            }
            if e.kind == EventKind::Constant && e.from_state != e.to_state {
                return Err(EventError::Format(format!(
                    "event {i} is constant but changes state"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feature document serializes")
    }

    pub fn parse(text: &str) -> Result<Self, EventError> {
        let doc: FeatureDoc =
            serde_json::from_str(text).map_err(|e| EventError::Format(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Events of one descriptor, in document order.
    pub fn events_for(&self, id: &DescriptorId) -> Vec<Event> {
        self.events
            .iter()
            .filter(|e| &e.id() == id)
            .cloned()
            .collect()
    }
}

/// Events for every timeline, in timeline order.
pub fn extract_events(
    timelines: &[DescriptorTimeline],
    fps: f64,
    num_frames: usize,
    table: &StateTable,
    opts: &EventOptions,
) -> Result<FeatureDoc, EventError> {
    table.validate()?;
    if let Some(t) = timelines.iter().find(|t| t.values.len() != num_frames) {
        return Err(EventError::Format(format!(
            "{} has {} frames, expected {num_frames}",
            t.id.key(),
            t.values.len()
        )));
    }
    let per: Vec<Vec<Event>> = timelines
        .par_iter()
        .map(|t| timeline_events(t, table, opts))
        .collect::<Result<_, _>>()?;
    let doc = FeatureDoc {
        fps,
        num_frames,
        events: per.into_iter().flatten().collect(),
    };
    doc.validate()?;
    Ok(doc)
}
