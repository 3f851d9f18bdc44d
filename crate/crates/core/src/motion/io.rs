//! HMX-JSON motion files.
//!
//! ```text
//! {"fps": 30, "joints_per_hand": 21, "hands": ["left", "right"],
//!  "frames": [[[x, y, z] x 42] x F]}
//! ```
//!
//! Rows are left-hand joints 0..=20 then right-hand joints 0..=20, in meters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{empty_frame, Frame, MotionError, MotionSequence, Vec3, JOINTS_PER_HAND, NUM_HANDS};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmxFile {
    fps: f64,
    joints_per_hand: usize,
    hands: Vec<String>,
    frames: Vec<Vec<[f64; 3]>>,
}

pub fn to_hmx_string(seq: &MotionSequence) -> String {
    let file = HmxFile {
        fps: seq.fps,
        joints_per_hand: JOINTS_PER_HAND,
        hands: vec!["left".into(), "right".into()],
        frames: seq
            .frames
            .iter()
            .map(|fr| fr.iter().flatten().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
    };
    serde_json::to_string(&file).expect("motion serializes")
}

pub fn from_hmx_str(text: &str, source_id: &str) -> Result<MotionSequence, MotionError> {
    let file: HmxFile =
        serde_json::from_str(text).map_err(|e| MotionError::Format(e.to_string()))?;
    if file.joints_per_hand != JOINTS_PER_HAND {
        return Err(MotionError::Format(format!(
            "joints_per_hand must be {JOINTS_PER_HAND}, got {}",
            file.joints_per_hand
        )));
    }
    if file.hands != ["left", "right"] {
        return Err(MotionError::Format(
            "hands must be [\"left\", \"right\"]".into(),
        ));
    }
    let mut frames = Vec::with_capacity(file.frames.len());
    for (f, rows) in file.frames.iter().enumerate() {
        if rows.len() != JOINTS_PER_HAND * NUM_HANDS {
            return Err(MotionError::Format(format!(
                "frame {f} has {} joints, expected {}",
                rows.len(),
                JOINTS_PER_HAND * NUM_HANDS
            )));
        }
        let mut fr: Frame = empty_frame();
        for (i, r) in rows.iter().enumerate() {
            fr[i / JOINTS_PER_HAND][i % JOINTS_PER_HAND] = Vec3::new(r[0], r[1], r[2]);
        }
        frames.push(fr);
    }
    MotionSequence::new(file.fps, frames, source_id)
}

pub fn read_hmx(path: &Path) -> Result<MotionSequence, MotionError> {
    let text = fs::read_to_string(path).map_err(|e| MotionError::Io(e.to_string()))?;
    from_hmx_str(&text, &source_id_for(path))
}

pub fn write_hmx(path: &Path, seq: &MotionSequence) -> Result<(), MotionError> {
    fs::write(path, to_hmx_string(seq)).map_err(|e| MotionError::Io(e.to_string()))
}

/// File stem with any `.hmx` suffix removed.
pub fn source_id_for(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.trim_end_matches(".json")
        .trim_end_matches(".hmx")
        .to_string()
}
