//! Visual augmentation of lecture videos.
//!
//! Given a transcript and the video's frames (one per second), the crate
//! decides which sentences are worth illustrating, generates an illustration
//! and keyphrases for them, and packs those into the parts of each frame that
//! carry little visual information. The result is a JSON manifest a player
//! overlays on the video.
//!
//! Stages, each in its own module:
//!
//! * [`transcript`] reads SRT and WebVTT.
//! * [`language`] summarizes, scores imageability, and extracts keyphrases.
//! * [`imagegen`] turns a segment into a prompt and an image.
//! * [`saliency`] finds the salient regions of the frames.
//! * [`packing`] places augmentations in non-salient space.
//! * [`manifest`] defines the output schema.
//! * [`pipeline`] runs everything and writes a project directory.

pub mod config;
pub mod digest;
pub mod font;
pub mod http;
pub mod imagegen;
pub mod language;
pub mod manifest;
pub mod packing;
pub mod pipeline;
pub mod saliency;
pub mod transcript;

pub use config::{Config, ConfigError};
pub use http::{BackendError, RetryPolicy};
pub use imagegen::{GeneratedImage, ImageBackend, ImageCache, ImagePrompt};
pub use language::{CharSpan, ChatBackend, ContextBundle, ImageabilityRecord, Keyphrase};
pub use manifest::{filter_view, load_manifest, Manifest, ManifestEntry, ManifestError, Millis, SkipReason};
pub use packing::{AugmentationKind, PlacedAugmentation, PlacementConfig, Rect};
pub use pipeline::{build_project, Backends, BuildOptions, BuildReport, PipelineError, ProjectInput};
pub use saliency::{BinaryMask, FrameStore, GrayImage, SaliencyMap, Shape};
pub use transcript::{Transcript, TranscriptError, TranscriptSegment};
