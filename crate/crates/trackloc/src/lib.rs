//! Track-level spatio-temporal action localization.
//!
//! Given person tracks with per-frame appearance/flow features, this crate
//! scores every frame with a two-stream stacked recurrent network (GRU or
//! LSTM, with an FC baseline), segments each track in time by thresholding
//! median-filtered scores, suppresses overlapping candidates with
//! spatio-temporal NMS, and evaluates detections against ground truth with
//! the standard ST-IoU mAP protocol. A deterministic synthetic benchmark
//! generator makes the whole pipeline testable at desk scale.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod localize;
pub mod model;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
