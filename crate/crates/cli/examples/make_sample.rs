//! Generates the demo project inputs under `samples/demo`: twelve synthetic
//! slide frames and a matching SRT transcript.
//!
//! Run with `cargo run -p visaug-cli --example make_sample [-- <dir>]`.

use std::path::PathBuf;

use image::{Rgb, RgbImage};

const WIDTH: u32 = 320;
const HEIGHT: u32 = 180;
const FRAMES: u32 = 12;

const TRANSCRIPT: &[(f64, f64, &str)] = &[
    (0.0, 1.2, "Welcome back, everyone."),
    (
        1.2,
        2.4,
        "Today we look at how a steam locomotive turns coal into motion.",
    ),
    (2.4, 3.6, "This is mostly a question of definitions and principles."),
    (
        3.6,
        4.8,
        "Hot water boils in the iron boiler and the steam pushes a piston.",
    ),
    (
        4.8,
        6.0,
        "In general, the theory implies a relation between quantities.",
    ),
    (6.0, 7.2, "The piston turns the big red wheels on the rails."),
    (7.2, 8.4, "Recall the assumption we made earlier."),
    (
        8.4,
        9.6,
        "Smoke rises from the chimney as the train crosses a stone bridge over the river.",
    ),
    (9.6, 10.8, "That concludes the argument."),
    (
        10.8,
        11.9,
        "Next week we visit the railway museum and see an old engine up close.",
    ),
];

fn fill(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, c: Rgb<u8>) {
    for yy in y..(y + h).min(HEIGHT) {
        for xx in x..(x + w).min(WIDTH) {
            img.put_pixel(xx, yy, c);
        }
    }
}

/// A light slide with a title bar, a few text lines and a figure that
/// changes position every few seconds.
fn frame(i: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([246, 244, 238]));
    fill(&mut img, 16, 12, 200, 14, Rgb([40, 52, 90]));
    let lines = 2 + i % 3;
    for l in 0..lines {
        fill(&mut img, 24, 40 + l * 16, 120 - 10 * l, 6, Rgb([90, 90, 96]));
    }
    let slide = i / 4;
    let (fx, fy) = [(200, 60), (180, 90), (40, 110)][slide as usize % 3];
    fill(&mut img, fx, fy, 90, 60, Rgb([196, 72, 48]));
    fill(&mut img, fx + 10, fy + 10, 30, 20, Rgb([250, 210, 80]));
    img
}

fn timestamp(s: f64) -> String {
    let ms = (s * 1000.0).round() as u64;
    format!(
        "{:02}:{:02}:{:02},{:03}",
        ms / 3_600_000,
        ms / 60_000 % 60,
        ms / 1000 % 60,
        ms % 1000
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("samples/demo"));
    let frames = dir.join("frames");
    std::fs::create_dir_all(&frames)?;
    for i in 0..FRAMES {
        frame(i).save(frames.join(format!("frame_{i:06}.png")))?;
    }
    let srt: String = TRANSCRIPT
        .iter()
        .enumerate()
        .map(|(n, (a, b, text))| format!("{}\n{} --> {}\n{}\n\n", n + 1, timestamp(*a), timestamp(*b), text))
        .collect();
    std::fs::write(dir.join("transcript.srt"), srt)?;
    println!("wrote {}", dir.display());
    Ok(())
}
