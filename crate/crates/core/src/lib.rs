//! Synchronization of gaze and image-manipulation streams, and
//! reconstruction of gaze in the coordinate frame of the manipulated image.

pub mod analysis;
pub mod formats;
pub mod geometry;
pub mod quality;
pub mod simulator;
pub mod sync;

pub use geometry::{HomPoint, Mat3, TransformState, ViewportGeometry};
pub use quality::{quality, QualityReport};
pub use sync::{
    merge_offline, CalibrationEvent, CalibrationKind, CombinedRecord, Event, GazeSample,
    MergeOutput, SessionBuffer, SyncConfig,
};
