//! Sound event detection for heart and lung auscultation recordings.
//!
//! The crate covers the full path from WAV files to scored detections:
//! log-mel features ([`signal`]), strong labels and frame encodings
//! ([`labels`]), CRNN/TCN taggers with training ([`model`], [`train`]),
//! event decoding and vital-sign estimation ([`decode`]), event/segment/JI
//! scoring ([`metrics`]), and multi-dataset pseudo-labeling ([`pipeline`]).

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decode;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
