//! Augmentation packing: greedy shrink-and-scan placement of image and
//! keyphrase boxes into the non-salient part of a segment's mask.
//!
//! Candidate sizes start at the asset size (clamped to the frame minus
//! margins) and shrink geometrically with the asset's aspect ratio kept. For
//! each size, top-left positions are scanned row by row at a fixed stride and
//! the first rectangle whose salient-pixel count is under budget wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font::TextMetrics;
use crate::imagegen::{image_asset_path, GeneratedImage};
use crate::language::Keyphrase;
use crate::manifest::SkipReason;
use crate::saliency::BinaryMask;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackingError {
    #[error("rect {rect:?} lies outside the {width}x{height} frame")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("no placement found for a {width}x{height} asset")]
    NotFound { width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= u64::from(width) && self.bottom() <= u64::from(height)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        u64::from(self.x) < other.right()
            && u64::from(other.x) < self.right()
            && u64::from(self.y) < other.bottom()
            && u64::from(other.y) < self.bottom()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Fraction of a candidate rect's area allowed to be salient (strict `<`).
    pub salient_budget_fraction: f64,
    pub shrink_factor: f64,
    /// Smallest image width tried, as a fraction of frame width.
    pub min_width_fraction: f64,
    pub scan_stride: u32,
    pub margin: u32,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            salient_budget_fraction: 0.02,
            shrink_factor: 0.9,
            min_width_fraction: 0.2,
            scan_stride: 8,
            margin: 8,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.salient_budget_fraction) {
            return Err(format!(
                "salient_budget_fraction must be in [0, 1), got {}",
                self.salient_budget_fraction
            ));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(format!("shrink_factor must be in (0, 1), got {}", self.shrink_factor));
        }
        if !(self.min_width_fraction > 0.0 && self.min_width_fraction <= 1.0) {
            return Err(format!(
                "min_width_fraction must be in (0, 1], got {}",
                self.min_width_fraction
            ));
        }
        if self.scan_stride == 0 {
            return Err("scan_stride must be positive".into());
        }
        Ok(())
    }
}

/// Summed-area table with a zero top row and left column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralMask {
    width: u32,
    height: u32,
    table: Vec<u32>,
}

impl IntegralMask {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Entry at (`x`, `y`) of the `(width+1) x (height+1)` table: the number of
    /// set bits strictly above and left of pixel (`x`, `y`).
    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.table[(y as usize) * (self.width as usize + 1) + x as usize]
    }
}

pub fn build_integral(mask: &BinaryMask) -> IntegralMask {
    let w = mask.width() as usize;
    let h = mask.height() as usize;
    let stride = w + 1;
    let mut table = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u32;
        for x in 0..w {
            row_sum += u32::from(mask.bits()[y * w + x]);
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
        }
    }
    IntegralMask {
        width: mask.width(),
        height: mask.height(),
        table,
    }
}

/// Number of set bits inside `r`.
pub fn count_salient(im: &IntegralMask, r: Rect) -> Result<u64, PackingError> {
    if !r.fits_within(im.width, im.height) {
        return Err(PackingError::OutOfBounds {
            rect: r,
            width: im.width,
            height: im.height,
        });
    }
    Ok(count_unchecked(im, r))
}

fn count_unchecked(im: &IntegralMask, r: Rect) -> u64 {
    let (x0, y0, x1, y1) = (r.x, r.y, r.x + r.w, r.y + r.h);
    let total = u64::from(im.at(x1, y1)) + u64::from(im.at(x0, y0));
    total - u64::from(im.at(x1, y0)) - u64::from(im.at(x0, y1))
}

/// Candidate (w, h) sizes in the order they are tried. The first size is the
/// asset scaled down (never up) to fit within the frame minus margins; each
/// next width is `floor(prev * shrink_factor)` with the height derived from
/// the asset's aspect ratio. Sizes narrower than `min_width` are not tried.
pub fn size_schedule(
    asset_w: u32,
    asset_h: u32,
    frame_w: u32,
    frame_h: u32,
    cfg: &PlacementConfig,
    min_width: f64,
) -> Vec<(u32, u32)> {
    let avail_w = frame_w.saturating_sub(2 * cfg.margin);
    let avail_h = frame_h.saturating_sub(2 * cfg.margin);
    if asset_w == 0 || asset_h == 0 || avail_w == 0 || avail_h == 0 {
        return Vec::new();
    }
    let aspect = f64::from(asset_h) / f64::from(asset_w);
    let scale = (f64::from(avail_w) / f64::from(asset_w))
        .min(f64::from(avail_h) / f64::from(asset_h))
        .min(1.0);
    let mut w = ((f64::from(asset_w) * scale).floor() as u32).clamp(1, avail_w);
    let mut h = ((f64::from(asset_h) * scale).floor() as u32).clamp(1, avail_h);
    let mut sizes = Vec::new();
    while w > 0 && f64::from(w) >= min_width {
        sizes.push((w, h));
        w = (f64::from(w) * cfg.shrink_factor).floor() as u32;
        h = ((f64::from(w) * aspect).round() as u32).clamp(1, avail_h);
    }
    sizes
}

/// First rect (size-major, then y, then x) whose salient count is under
/// budget.
pub fn find_placement(
    mask: &BinaryMask,
    asset_w: u32,
    asset_h: u32,
    cfg: &PlacementConfig,
) -> Result<Rect, PackingError> {
    let im = build_integral(mask);
    let min_width = cfg.min_width_fraction * f64::from(mask.width());
    search(&im, asset_w, asset_h, cfg, min_width, &[])
}

/// Placement search against a precomputed table. Candidates intersecting any
/// rect in `occupied` are rejected outright.
pub fn search(
    im: &IntegralMask,
    asset_w: u32,
    asset_h: u32,
    cfg: &PlacementConfig,
    min_width: f64,
    occupied: &[Rect],
) -> Result<Rect, PackingError> {
    let not_found = PackingError::NotFound {
        width: asset_w,
        height: asset_h,
    };
    let stride = cfg.scan_stride.max(1) as usize;
    for (w, h) in size_schedule(asset_w, asset_h, im.width, im.height, cfg, min_width) {
        let budget = cfg.salient_budget_fraction * f64::from(w) * f64::from(h);
        let (Some(max_x), Some(max_y)) = (
            im.width.checked_sub(w + cfg.margin),
            im.height.checked_sub(h + cfg.margin),
        ) else {
            continue;
        };
        for y in (cfg.margin..=max_y).step_by(stride) {
            for x in (cfg.margin..=max_x).step_by(stride) {
                let r = Rect::new(x, y, w, h);
                if (count_unchecked(im, r) as f64) < budget && !occupied.iter().any(|o| o.intersects(&r)) {
                    return Ok(r);
                }
            }
        }
    }
    Err(not_found)
}

/// Returns a copy of `mask` with every bit inside `r` set.
pub fn commit_placement(mask: &BinaryMask, r: Rect) -> Result<BinaryMask, PackingError> {
    if !r.fits_within(mask.width(), mask.height()) {
        return Err(PackingError::OutOfBounds {
            rect: r,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let mut out = mask.clone();
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            out.set(x, y, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Image,
    Keyphrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RenderStyle {
    Text { color: String, point_size: u32 },
    Image { border_color: String, border_width: u32 },
}

pub const KEYPHRASE_COLOR: &str = "#ff0000";
pub const IMAGE_BORDER_COLOR: &str = "#ffffff";
pub const IMAGE_BORDER_WIDTH: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedAugmentation {
    pub segment_index: usize,
    pub kind: AugmentationKind,
    pub rect: Rect,
    /// Image asset path relative to the project directory, or the phrase text.
    pub asset_ref: String,
    pub render_style: RenderStyle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PackOutcome {
    pub placements: Vec<PlacedAugmentation>,
    pub skipped: Vec<SkipReason>,
    /// Mask after all commits.
    pub mask: Option<BinaryMask>,
}

/// Places the image (if any) and then each keyphrase in order, threading the
/// occupancy mask through each commit. Items that do not fit are recorded in
/// `skipped`. Placements never intersect one another.
pub fn pack_segment(
    mask: &BinaryMask,
    image: Option<&GeneratedImage>,
    phrases: &[Keyphrase],
    cfg: &PlacementConfig,
    text_metrics: &TextMetrics,
) -> PackOutcome {
    let frame_w = mask.width();
    let mut current = mask.clone();
    let mut placed: Vec<PlacedAugmentation> = Vec::new();
    let mut skipped = Vec::new();
    let image_floor = cfg.min_width_fraction * f64::from(frame_w);

    if let Some(img) = image {
        let im = build_integral(&current);
        let occupied: Vec<Rect> = placed.iter().map(|p| p.rect).collect();
        match search(&im, img.width, img.height, cfg, image_floor, &occupied) {
            Ok(rect) => {
                current = commit_placement(&current, rect).expect("search returns in-bounds rects");
                placed.push(PlacedAugmentation {
                    segment_index: img.segment_index,
                    kind: AugmentationKind::Image,
                    rect,
                    asset_ref: image_asset_path(img.segment_index),
                    render_style: RenderStyle::Image {
                        border_color: IMAGE_BORDER_COLOR.into(),
                        border_width: IMAGE_BORDER_WIDTH,
                    },
                });
            }
            Err(_) => skipped.push(SkipReason::new(
                "image-not-placed",
                format!("no free region for a {}x{} image", img.width, img.height),
            )),
        }
    }

    for kp in phrases {
        let (w, h) = text_metrics.measure(&kp.phrase);
        // text narrower than the image floor is only tried at its natural size
        let floor = image_floor.min(f64::from(w));
        let im = build_integral(&current);
        let occupied: Vec<Rect> = placed.iter().map(|p| p.rect).collect();
        match search(&im, w, h, cfg, floor, &occupied) {
            Ok(rect) => {
                current = commit_placement(&current, rect).expect("search returns in-bounds rects");
                let point_size = rect.h.saturating_sub(2 * text_metrics.padding).max(1);
                placed.push(PlacedAugmentation {
                    segment_index: kp.segment_index,
                    kind: AugmentationKind::Keyphrase,
                    rect,
                    asset_ref: kp.phrase.clone(),
                    render_style: RenderStyle::Text {
                        color: KEYPHRASE_COLOR.into(),
                        point_size,
                    },
                });
            }
            Err(_) => skipped.push(SkipReason::new(
                "keyphrase-not-placed",
                format!("no free region for keyphrase {:?}", kp.phrase),
            )),
        }
    }

    PackOutcome {
        placements: placed,
        skipped,
        mask: Some(current),
    }
}
