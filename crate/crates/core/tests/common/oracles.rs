//! Slow, obviously-correct reference implementations used to check the
//! production algorithms. Shared by the core integration tests and the
//! acceptance suite.

#![allow(dead_code)]

use num_rational::BigRational;
use rand::rngs::StdRng;
use rand::Rng;
use visaug_core::packing::PlacementConfig;
use visaug_core::saliency::{BinaryMask, GrayImage};
use visaug_core::Rect;

/// Per-pixel `any()` over a set of equally sized masks.
pub fn any_mask(masks: &[BinaryMask]) -> BinaryMask {
    let (w, h) = (masks[0].width(), masks[0].height());
    let mut out = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, masks.iter().any(|m| m.get(x, y)));
        }
    }
    out
}

pub fn random_mask(rng: &mut StdRng, w: u32, h: u32, density: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.gen_bool(density)).collect();
    BinaryMask::new(w, h, bits)
}

/// Exact minimum barrier distance from every pixel to the image border:
/// the smallest `max - min` over all simple 4-connected paths ending at a
/// border pixel. Exponential; only for tiny images.
pub fn exhaustive_mbd(img: &GrayImage) -> Vec<f32> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let px = img.data();
    let on_border = |x: i32, y: i32| x == 0 || y == 0 || x == w - 1 || y == h - 1;
    let mut out = vec![0.0f32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if on_border(x, y) {
                continue;
            }
            let mut visited = vec![false; (w * h) as usize];
            let mut best = f32::INFINITY;
            let v = px[(y * w + x) as usize];
            dfs(px, w, h, x, y, v, v, &mut visited, &mut best, &on_border);
            out[(y * w + x) as usize] = best;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    px: &[f32],
    w: i32,
    h: i32,
    x: i32,
    y: i32,
    hi: f32,
    lo: f32,
    visited: &mut [bool],
    best: &mut f32,
    on_border: &dyn Fn(i32, i32) -> bool,
) {
    let i = (y * w + x) as usize;
    if on_border(x, y) {
        *best = best.min(hi - lo);
        return;
    }
    visited[i] = true;
    for (dx, dy) in [(0, -1), (-1, 0), (1, 0), (0, 1)] {
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h || visited[(ny * w + nx) as usize] {
            continue;
        }
        let v = px[(ny * w + nx) as usize];
        dfs(px, w, h, nx, ny, hi.max(v), lo.min(v), visited, best, on_border);
    }
    visited[i] = false;
}

/// Otsu by trying every split `bins <= t` vs `bins > t` and computing the
/// between-class variance `w0 * w1 * (mu0 - mu1)^2` in exact rationals. The
/// first maximum wins. Returns the upper edge of the winning bin.
pub fn otsu_exhaustive(hist: &[u64; 256]) -> f32 {
    let edge = |t: usize| ((t as f32 + 0.5) / 255.0).min(1.0);
    let big = |v: u128| BigRational::from_integer(v.into());
    let total: u128 = hist.iter().map(|&c| c as u128).sum();
    let mut best: Option<(usize, BigRational)> = None;
    for t in 0..255 {
        let n0: u128 = hist[..=t].iter().map(|&c| c as u128).sum();
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u128 = (0..=t).map(|b| b as u128 * hist[b] as u128).sum();
        let s1: u128 = (t + 1..256).map(|b| b as u128 * hist[b] as u128).sum();
        let mu0 = big(s0) / big(n0);
        let mu1 = big(s1) / big(n1);
        let d = mu0 - mu1;
        let var = big(n0) / big(total) * (big(n1) / big(total)) * &d * &d;
        if best.as_ref().is_none_or(|(_, b)| var > *b) {
            best = Some((t, var));
        }
    }
    match best {
        Some((t, _)) => edge(t),
        None => edge(hist.iter().position(|&c| c > 0).unwrap_or(0)),
    }
}

/// Histogram of several shapes: sparse spikes, dense noise, two humps, or a
/// single bin.
pub fn random_histogram(rng: &mut StdRng) -> [u64; 256] {
    let mut hist = [0u64; 256];
    match rng.gen_range(0..5) {
        0 => {
            for _ in 0..rng.gen_range(1..6) {
                hist[rng.gen_range(0..256)] += rng.gen_range(1..1000);
            }
        }
        1 => {
            for c in hist.iter_mut() {
                *c = rng.gen_range(0..50);
            }
        }
        2 => {
            let (a, b) = (rng.gen_range(0..128), rng.gen_range(128..256));
            for (i, c) in hist.iter_mut().enumerate() {
                let da = (i as i64 - a as i64).unsigned_abs();
                let db = (i as i64 - b as i64).unsigned_abs();
                *c = 2000u64.saturating_sub(da * 90) + 1500u64.saturating_sub(db * 60);
            }
        }
        3 => {
            for c in hist.iter_mut() {
                if rng.gen_bool(0.3) {
                    *c = rng.gen_range(0..3_000_000);
                }
            }
        }
        _ => hist[rng.gen_range(0..256)] = rng.gen_range(1..100_000),
    }
    hist
}

/// Salient pixels inside `r`, by looking at each one.
pub fn naive_count(mask: &BinaryMask, r: Rect) -> u64 {
    let mut n = 0;
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            n += u64::from(mask.get(x, y));
        }
    }
    n
}

/// Candidate sizes: the asset scaled down to fit inside the margins, then
/// repeatedly shrunk by `shrink_factor` until narrower than the minimum.
pub fn oracle_sizes(aw: u32, ah: u32, fw: u32, fh: u32, cfg: &PlacementConfig) -> Vec<(u32, u32)> {
    let avail_w = fw as i64 - 2 * cfg.margin as i64;
    let avail_h = fh as i64 - 2 * cfg.margin as i64;
    if avail_w <= 0 || avail_h <= 0 || aw == 0 || ah == 0 {
        return vec![];
    }
    let (avail_w, avail_h) = (avail_w as f64, avail_h as f64);
    let s = (avail_w / aw as f64).min(avail_h / ah as f64).min(1.0);
    let mut w = (aw as f64 * s).floor().clamp(1.0, avail_w);
    let mut h = (ah as f64 * s).floor().clamp(1.0, avail_h);
    let min_w = cfg.min_width_fraction * fw as f64;
    let mut out = vec![];
    while w >= 1.0 && w >= min_w {
        out.push((w as u32, h as u32));
        w = (w * cfg.shrink_factor).floor();
        h = (w * ah as f64 / aw as f64).round().clamp(1.0, avail_h);
    }
    out
}

/// First rect in size-major, then row, then column order whose salient count
/// is strictly below the budget, counted pixel by pixel.
pub fn brute_force_placement(mask: &BinaryMask, aw: u32, ah: u32, cfg: &PlacementConfig) -> Option<Rect> {
    let (fw, fh) = (mask.width(), mask.height());
    for (w, h) in oracle_sizes(aw, ah, fw, fh, cfg) {
        let budget = cfg.salient_budget_fraction * w as f64 * h as f64;
        let mut y = cfg.margin;
        while y + h + cfg.margin <= fh {
            let mut x = cfg.margin;
            while x + w + cfg.margin <= fw {
                let r = Rect::new(x, y, w, h);
                if (naive_count(mask, r) as f64) < budget {
                    return Some(r);
                }
                x += cfg.scan_stride;
            }
            y += cfg.scan_stride;
        }
    }
    None
}

/// Rectangle-ish salient blobs on an empty mask, which leaves free space of
/// varying shape.
pub fn blob_mask(rng: &mut StdRng, w: u32, h: u32) -> BinaryMask {
    let mut m = BinaryMask::empty(w, h);
    for _ in 0..rng.gen_range(0..8) {
        let bw = rng.gen_range(1..=w);
        let bh = rng.gen_range(1..=h);
        let bx = rng.gen_range(0..=w - bw);
        let by = rng.gen_range(0..=h - bh);
        for y in by..by + bh {
            for x in bx..bx + bw {
                m.set(x, y, true);
            }
        }
    }
    if rng.gen_bool(0.3) {
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.05) {
                    m.set(x, y, !m.get(x, y));
                }
            }
        }
    }
    m
}

pub fn random_placement_config(rng: &mut StdRng) -> PlacementConfig {
    PlacementConfig {
        salient_budget_fraction: [0.0, 0.01, 0.02, 0.1, 0.3][rng.gen_range(0..5)],
        shrink_factor: rng.gen_range(0.5..0.95),
        min_width_fraction: rng.gen_range(0.05..0.5),
        scan_stride: rng.gen_range(1..12),
        margin: rng.gen_range(0..10),
    }
}
