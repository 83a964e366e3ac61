//! Visual channel: per-frame minimum barrier distance saliency, Otsu
//! binarization, and OR-composition of frame masks over a transcript segment.

use std::fmt;
use std::path::{Path, PathBuf};

use image::{GrayImage as Luma8Image, Luma};
use thiserror::Error;

use crate::transcript::TranscriptSegment;

/// Default number of alternating raster / inverse-raster passes.
pub const DEFAULT_PASSES: usize = 3;

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("missing frame {index} (expected {})", path.display())]
    MissingFrame { index: u64, path: PathBuf },
    #[error("frame {index} is ambiguous: both {} and {} exist", first.display(), second.display())]
    AmbiguousFrame {
        index: u64,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("mask shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },
    #[error("no masks to combine")]
    NoMasks,
    #[error("failed to decode {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: u32,
    pub height: u32,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Single-channel image with luminance in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl GrayImage {
    /// Panics if `data.len() != width * height`. Values are clamped into [0, 1].
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize, "data length");
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Rec. 601 luma of an RGB image.
    pub fn from_rgb(img: &image::RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * f32::from(r) + 0.587 * f32::from(g) + 0.114 * f32::from(b)) / 255.0
            })
            .collect();
        Self::new(img.width(), img.height(), data)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Saliency scores in [0, 1]; the maximum is 1 unless the map is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl SaliencyMap {
    /// Divides `raw` by its maximum when the maximum is positive.
    pub fn normalized(width: u32, height: u32, mut raw: Vec<f32>) -> Self {
        assert_eq!(raw.len(), width as usize * height as usize, "data length");
        let max = raw.iter().copied().fold(0.0f32, f32::max);
        if max > 0.0 {
            raw.iter_mut().for_each(|v| *v /= max);
        }
        Self {
            width,
            height,
            data: raw,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_luma8(&self) -> Luma8Image {
        Luma8Image::from_fn(self.width, self.height, |x, y| {
            let v = self.data[(y * self.width + x) as usize];
            Luma([(v * 255.0).round() as u8])
        })
    }
}

/// Per-pixel salient / occupied grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "bits length");
        Self { width, height, bits }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// 255 for set bits, 0 otherwise.
    pub fn to_luma8(&self) -> Luma8Image {
        Luma8Image::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }
}

/// Integer frame indices sampled at 1 fps for a segment: every integer `i`
/// with `t_start <= i <= t_end`, or `floor(t_start)` when there is none.
pub fn sample_frame_indices(start_ms: u64, end_ms: u64) -> Vec<u64> {
    let first = start_ms.div_ceil(1000);
    let last = end_ms / 1000;
    if first > last {
        vec![start_ms / 1000]
    } else {
        (first..=last).collect()
    }
}

/// Raw minimum barrier distances to the image boundary after `passes`
/// alternating raster / inverse-raster scans. Boundary pixels are seeds (0).
pub fn mbd_distances(img: &GrayImage, passes: usize) -> Vec<f32> {
    let w = img.width as usize;
    let h = img.height as usize;
    let px = &img.data;
    let mut dist = vec![f32::INFINITY; w * h];
    let mut upper = px.clone();
    let mut lower = px.clone();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                dist[y * w + x] = 0.0;
            }
        }
    }
    if w <= 2 || h <= 2 {
        return dist;
    }

    let relax = |i: usize, n: usize, dist: &mut [f32], upper: &mut [f32], lower: &mut [f32]| {
        let p = px[i];
        let hi = upper[n].max(p);
        let lo = lower[n].min(p);
        let cost = hi - lo;
        if cost < dist[i] {
            dist[i] = cost;
            upper[i] = hi;
            lower[i] = lo;
        }
    };

    for pass in 0..passes {
        if pass % 2 == 0 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let i = y * w + x;
                    relax(i, i - w, &mut dist, &mut upper, &mut lower);
                    relax(i, i - 1, &mut dist, &mut upper, &mut lower);
                }
            }
        } else {
            for y in (1..h - 1).rev() {
                for x in (1..w - 1).rev() {
                    let i = y * w + x;
                    relax(i, i + w, &mut dist, &mut upper, &mut lower);
                    relax(i, i + 1, &mut dist, &mut upper, &mut lower);
                }
            }
        }
    }
    dist
}

/// MBD saliency normalized to [0, 1]. `passes` must be at least 1.
pub fn mbd_transform(img: &GrayImage, passes: usize) -> SaliencyMap {
    assert!(passes >= 1, "at least one pass required");
    let raw = mbd_distances(img, passes);
    SaliencyMap::normalized(img.width, img.height, raw)
}

/// 256-bin histogram; bin `k` holds values that round to `k / 255`.
pub fn histogram(values: &[f32]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for v in values {
        let bin = (v.clamp(0.0, 1.0) * 255.0).round() as usize;
        hist[bin.min(255)] += 1;
    }
    hist
}

/// Otsu threshold over the 256-bin histogram of the map.
pub fn otsu_threshold(map: &SaliencyMap) -> f32 {
    otsu_threshold_from_histogram(&histogram(&map.data))
}

/// Picks the bin `t` maximizing between-class variance for classes
/// `bins <= t` / `bins > t` (lowest `t` on ties) and returns its upper
/// edge `(t + 0.5) / 255`, clamped to 1. A single occupied bin yields that
/// bin's edge.
pub fn otsu_threshold_from_histogram(hist: &[u64; 256]) -> f32 {
    let total: u64 = hist.iter().sum();
    let occupied: Vec<usize> = (0..256).filter(|&b| hist[b] > 0).collect();
    match occupied.as_slice() {
        [] => return bin_edge(0),
        [only] => return bin_edge(*only),
        _ => {}
    }
    let total_sum: u128 = hist.iter().enumerate().map(|(b, &n)| b as u128 * n as u128).sum();

    let mut best: Option<(usize, Variance)> = None;
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let v = Variance::new(n0, s0, n1, total_sum - s0);
        if best.as_ref().is_none_or(|(_, b)| v.greater_than(b)) {
            best = Some((t, v));
        }
    }
    bin_edge(best.map_or(0, |(t, _)| t))
}

fn bin_edge(bin: usize) -> f32 {
    ((bin as f32 + 0.5) / 255.0).min(1.0)
}

/// Between-class variance up to the constant factor `1 / total^2`, kept as the
/// fraction `(s0*n1 - s1*n0)^2 / (n0*n1)` so that comparisons are exact.
struct Variance {
    /// `|s0*n1 - s1*n0|`; the numerator is its square.
    diff: u128,
    den: u128,
}

impl Variance {
    fn new(n0: u64, s0: u128, n1: u64, s1: u128) -> Self {
        let a = s0 * n1 as u128;
        let b = s1 * n0 as u128;
        Self {
            diff: a.abs_diff(b),
            den: n0 as u128 * n1 as u128,
        }
    }

    fn greater_than(&self, other: &Variance) -> bool {
        // diff_a^2 * den_b > diff_b^2 * den_a, in 256-bit arithmetic when the
        // squares fit and in floating point beyond that
        match (self.diff.checked_mul(self.diff), other.diff.checked_mul(other.diff)) {
            (Some(na), Some(nb)) => mul_wide(na, other.den) > mul_wide(nb, self.den),
            _ => {
                let va = (self.diff as f64).powi(2) / self.den as f64;
                let vb = (other.diff as f64).powi(2) / other.den as f64;
                va > vb
            }
        }
    }
}

/// Full 256-bit product as `(high, low)` words.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let low = (ll & MASK) | (mid << 64);
    let high = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (high, low)
}

/// `value > thr` per pixel.
pub fn binarize(map: &SaliencyMap, thr: f32) -> BinaryMask {
    BinaryMask::new(map.width, map.height, map.data.iter().map(|v| *v > thr).collect())
}

/// Per-pixel OR of all masks.
pub fn cumulative_mask(masks: &[BinaryMask]) -> Result<BinaryMask, SaliencyError> {
    let (first, rest) = masks.split_first().ok_or(SaliencyError::NoMasks)?;
    let mut acc = first.clone();
    for m in rest {
        if m.shape() != acc.shape() {
            return Err(SaliencyError::ShapeMismatch {
                expected: acc.shape(),
                found: m.shape(),
            });
        }
        acc.bits.iter_mut().zip(&m.bits).for_each(|(a, b)| *a |= *b);
    }
    Ok(acc)
}

/// Binary saliency mask of a single frame.
pub fn frame_mask(img: &GrayImage, passes: usize) -> BinaryMask {
    let map = mbd_transform(img, passes);
    let thr = otsu_threshold(&map);
    binarize(&map, thr)
}

/// Directory of frames pre-extracted at 1 fps, named `frame_%06d.png`
/// (or `.jpg` / `.jpeg`) by integer second index.
#[derive(Debug, Clone)]
pub struct FrameStore {
    root: PathBuf,
    /// Frame rate of the source video; informational only.
    pub fps: f64,
}

const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

impl FrameStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            fps: 1.0,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn expected_path(&self, index: u64) -> PathBuf {
        self.root.join(format!("frame_{index:06}.png"))
    }

    pub fn frame_path(&self, index: u64) -> Result<PathBuf, SaliencyError> {
        let mut found: Option<PathBuf> = None;
        for ext in FRAME_EXTENSIONS {
            let p = self.root.join(format!("frame_{index:06}.{ext}"));
            if p.is_file() {
                if let Some(first) = found {
                    return Err(SaliencyError::AmbiguousFrame {
                        index,
                        first,
                        second: p,
                    });
                }
                found = Some(p);
            }
        }
        found.ok_or_else(|| SaliencyError::MissingFrame {
            index,
            path: self.expected_path(index),
        })
    }

    /// Sorted indices of all frame files present.
    pub fn indices(&self) -> std::io::Result<Vec<u64>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some((stem, ext)) = name.rsplit_once('.') else {
                continue;
            };
            if !FRAME_EXTENSIONS.contains(&ext) {
                continue;
            }
            if let Some(num) = stem.strip_prefix("frame_") {
                if let Ok(i) = num.parse::<u64>() {
                    out.push(i);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn load(&self, index: u64) -> Result<GrayImage, SaliencyError> {
        let path = self.frame_path(index)?;
        load_gray(&path)
    }
}

pub fn load_gray(path: &Path) -> Result<GrayImage, SaliencyError> {
    let img = image::open(path).map_err(|source| SaliencyError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(GrayImage::from_rgb(&img.to_rgb8()))
}

/// Cumulative salient-region mask for a segment: the OR of the binarized
/// saliency of every frame sampled within the segment's interval.
pub fn segment_saliency(
    store: &FrameStore,
    seg: &TranscriptSegment,
    passes: usize,
) -> Result<BinaryMask, SaliencyError> {
    let masks = sample_frame_indices(seg.start_ms, seg.end_ms)
        .into_iter()
        .map(|i| store.load(i).map(|img| frame_mask(&img, passes)))
        .collect::<Result<Vec<_>, _>>()?;
    cumulative_mask(&masks)
}
