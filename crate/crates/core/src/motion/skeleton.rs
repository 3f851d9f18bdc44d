//! The shared 21-joint hand topology.
//!
//! Joint order inside one hand: wrist, then thumb, index, middle, ring and
//! little finger, each as MCP, PIP, DIP, tip. Arrays holding both hands always
//! put the left hand first.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const JOINTS_PER_HAND: usize = 21;
pub const NUM_HANDS: usize = 2;
pub const TOTAL_JOINTS: usize = JOINTS_PER_HAND * NUM_HANDS;
pub const WRIST: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Hand> {
        match s {
            "left" | "l" | "L" => Some(Hand::Left),
            "right" | "r" | "R" => Some(Hand::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    /// Adjacent finger pairs, radial to ulnar.
    pub const ADJACENT_PAIRS: [(Finger, Finger); 4] = [
        (Finger::Thumb, Finger::Index),
        (Finger::Index, Finger::Middle),
        (Finger::Middle, Finger::Ring),
        (Finger::Ring, Finger::Little),
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }

    pub fn parse(s: &str) -> Option<Finger> {
        Finger::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of a joint along a finger chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Mcp,
    Pip,
    Dip,
    Tip,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::Mcp, Segment::Pip, Segment::Dip, Segment::Tip];
    /// Segments with both a predecessor and a successor joint.
    pub const BENDING: [Segment; 3] = [Segment::Mcp, Segment::Pip, Segment::Dip];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::Mcp => "mcp",
            Segment::Pip => "pip",
            Segment::Dip => "dip",
            Segment::Tip => "tip",
        }
    }

    pub fn parse(s: &str) -> Option<Segment> {
        Segment::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// A joint of one hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointId {
    Wrist,
    Finger(Finger, Segment),
}

impl JointId {
    pub fn index(self) -> usize {
        match self {
            JointId::Wrist => WRIST,
            JointId::Finger(f, s) => 1 + 4 * f.index() + s.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<JointId> {
        match i {
            0 => Some(JointId::Wrist),
            1..=20 => Some(JointId::Finger(
                Finger::ALL[(i - 1) / 4],
                Segment::ALL[(i - 1) % 4],
            )),
            _ => None,
        }
    }

    pub fn name(self) -> String {
        match self {
            JointId::Wrist => "wrist".to_string(),
            JointId::Finger(f, s) => format!("{}_{}", f.name(), s.name()),
        }
    }

    pub fn parse(s: &str) -> Option<JointId> {
        if s == "wrist" {
            return Some(JointId::Wrist);
        }
        let (f, seg) = s.split_once('_')?;
        Some(JointId::Finger(Finger::parse(f)?, Segment::parse(seg)?))
    }
}

/// Index of a joint inside a single hand.
pub fn joint(finger: Finger, segment: Segment) -> usize {
    JointId::Finger(finger, segment).index()
}

/// Index of a joint inside the 42-joint two-hand layout.
pub fn global_joint(hand: Hand, local: usize) -> usize {
    hand.index() * JOINTS_PER_HAND + local
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    parents: [Option<usize>; JOINTS_PER_HAND],
    names: Vec<String>,
}

impl Default for SkeletonTopology {
    fn default() -> Self {
        Self::hand21()
    }
}

impl SkeletonTopology {
    pub fn hand21() -> Self {
        let mut parents = [None; JOINTS_PER_HAND];
        for f in Finger::ALL {
            for s in Segment::ALL {
                let i = joint(f, s);
                parents[i] = Some(if s == Segment::Mcp { WRIST } else { i - 1 });
            }
        }
        let names = (0..JOINTS_PER_HAND)
            .map(|i| JointId::from_index(i).expect("valid joint").name())
            .collect();
        Self { parents, names }
    }

    pub fn joints_per_hand(&self) -> usize {
        JOINTS_PER_HAND
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents.get(j).copied().flatten()
    }

    /// First child along the finger chain, if any.
    pub fn child(&self, j: usize) -> Option<usize> {
        match JointId::from_index(j)? {
            JointId::Wrist => None,
            JointId::Finger(_, Segment::Tip) => None,
            JointId::Finger(..) => Some(j + 1),
        }
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    /// The five chains wrist -> MCP -> PIP -> DIP -> tip.
    pub fn chains(&self) -> [[usize; 5]; 5] {
        Finger::ALL.map(|f| {
            [
                WRIST,
                joint(f, Segment::Mcp),
                joint(f, Segment::Pip),
                joint(f, Segment::Dip),
                joint(f, Segment::Tip),
            ]
        })
    }

    /// Directed bones (parent, child).
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..JOINTS_PER_HAND).filter_map(|j| self.parent(j).map(|p| (p, j)))
    }

    /// Joints with both a predecessor and a successor: the 15 MCP/PIP/DIP joints.
    pub fn bending_joints(&self) -> impl Iterator<Item = usize> + '_ {
        (0..JOINTS_PER_HAND).filter(|&j| self.parent(j).is_some() && self.child(j).is_some())
    }
}
