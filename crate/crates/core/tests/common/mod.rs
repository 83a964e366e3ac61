#![allow(dead_code)]

pub mod mock_http;
pub mod oracles;

use std::path::Path;

use image::{Rgb, RgbImage};

/// A 320x180 slide: dark background with a bright block whose position
/// depends on `i`, so consecutive frames differ.
pub fn slide_frame(i: u32) -> RgbImage {
    let (bx, by) = (20 + (i * 37) % 200, 20 + (i * 23) % 100);
    RgbImage::from_fn(320, 180, |x, y| {
        if (bx..bx + 80).contains(&x) && (by..by + 50).contains(&y) {
            Rgb([230, 220, 90])
        } else {
            Rgb([30, 34, 48])
        }
    })
}

/// Writes `frames` slide frames and the given SRT into `dir`.
pub fn write_project(dir: &Path, frames: u32, srt: &str) {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).unwrap();
    for i in 0..frames {
        slide_frame(i)
            .save(frames_dir.join(format!("frame_{i:06}.png")))
            .unwrap();
    }
    std::fs::write(dir.join("transcript.srt"), srt).unwrap();
}

pub const LECTURE_SRT: &str = "1
00:00:00,000 --> 00:00:02,500
Welcome to this lecture on the history of the steam engine.

2
00:00:02,500 --> 00:00:05,000
Picture a huge iron locomotive pulling coal wagons across a bridge.

3
00:00:05,000 --> 00:00:07,200
So, anyway, that is basically the idea.

4
00:00:07,200 --> 00:00:09,900
The boiler heats water until the steam pushes a piston inside the cylinder.
";
