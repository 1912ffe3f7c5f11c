//! Event-camera data model, temporal pyramid representation and the
//! forward-only decoding kernels of an event-guided continuous space-time
//! video super-resolution pipeline.
//!
//! The crate is organised bottom-up:
//!
//! * [`event_model`] generates events from frames and integrates them back.
//! * [`representations`] builds voxel grids and temporal pyramids.
//! * [`dataset`] holds sliding-window, crop and resampling arithmetic.
//! * [`tensor`] and [`kernels`] implement the feature extraction and
//!   implicit decoding path at toy scale with seeded parameters.
//! * [`metrics`] evaluates PSNR/SSIM.
//! * [`io`] reads and writes the on-disk formats.

pub mod dataset;
pub mod error;
pub mod event_model;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod representations;
pub mod tensor;

pub use error::{Error, Result};
pub use event_model::{Event, EventStream, IntensityFrame, LogField};
pub use representations::{GranularitySpec, TemporalPyramid, VoxelGrid};
pub use tensor::Tensor;
