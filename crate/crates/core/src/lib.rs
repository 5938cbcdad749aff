//! Video encoder for keyframes plus an event stream.
//!
//! Keyframes are coded as ordinary I/P pictures with transform-coded
//! residuals. Frames between keyframes are never built at encode time:
//! their motion is estimated from the keyframes and the events, and they
//! are written as motion-only B units that the decoder reconstructs by
//! warping the two bracketing keyframes.

pub mod bframe;
pub mod counters;
pub mod entropy;
pub mod error;
pub mod event_sim;
pub mod keyframe;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod pgm;
pub mod pipeline;
pub mod rate;
pub mod stream;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use model::{
    build_gop_schedule, sample_clamped, Event, EventStream, Frame, FrameType, GopStructure,
    MotionField, MotionVector, Polarity,
};
