//! Human-in-the-loop video translation and talking-face editing.

pub mod adapters;
pub mod dsp;
pub mod face;
pub mod fixtures;
pub mod geometry;
pub mod jobs;
pub mod lecture;
pub mod media;
pub mod project;
pub mod s2s;
pub mod slides;
pub mod sync;
pub mod text;
pub mod time;

pub use project::{Asset, AssetKind, Clip, Project, ProjectError, Resolution, TimeRange, Track, TrackKind};
pub use time::{Fps, Speed, Time};
