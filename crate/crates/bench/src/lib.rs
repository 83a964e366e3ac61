//! Inputs shared by the benchmarks.

use std::path::{Path, PathBuf};

use visaug_core::saliency::GrayImage;
use visaug_core::ProjectInput;

/// A slide-like frame: light background, a dark title bar, text lines and
/// one figure whose position depends on `seed`.
pub fn slide(width: u32, height: u32, seed: u32) -> GrayImage {
    let fx = (seed * 37) % (width / 2);
    let fy = (seed * 17) % (height / 2);
    GrayImage::from_fn(width, height, |x, y| {
        if y > height / 16 && y < height / 8 && x > width / 20 && x < width * 2 / 3 {
            0.2
        } else if x >= fx + width / 3 && x < fx + width / 2 && y >= fy + height / 3 && y < fy + height / 2 {
            0.55
        } else if y % 12 < 2 && x > width / 16 && x < width / 2 {
            0.35
        } else {
            0.95
        }
    })
}

/// The demo project checked in under `samples/demo`.
pub fn demo_project() -> ProjectInput {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples/demo");
    ProjectInput {
        project_id: "demo".into(),
        transcript_path: dir.join("transcript.srt"),
        frames_dir: dir.join("frames"),
    }
}
