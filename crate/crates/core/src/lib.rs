//! Frame segmentation networks for temporal action localization.
//!
//! A dilated 1D temporal CNN runs on top of pre-extracted per-frame features
//! and emits dense per-frame class scores. Scores are grouped into temporal
//! segments by multi-threshold grouping and temporal NMS, then evaluated with
//! frame-level AP and segment-level mAP. Both the strongly supervised head and
//! the weakly supervised (video-label only) head are provided.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod localize;
pub mod model;
pub mod nncore;

pub use error::{FsnError, Result};
