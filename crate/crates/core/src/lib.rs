//! handkit-core: a deterministic toolkit for bimanual hand motion data.

// NaN must fail validation, hence `!(x > 0.0)`; index loops mirror the math
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod caption;
pub mod clip;
pub mod contact;
pub mod descriptors;
pub mod events;
pub mod fsq;
pub mod guidance;
pub mod mocap;
pub mod motion;
pub mod pipeline;
pub mod repr;
pub mod synth;
