//! Text-to-image prompt formulation and image generation.
//!
//! Remote backends are optional: when the chat backend cannot formulate a
//! prompt, a template rule builds one; when the image backend fails, a
//! procedural placeholder is drawn from the prompt and seed. Generated
//! images are cached on disk by context digest, seed, size, and backends.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use base64::Engine as _;
use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::digest::{sha256_hex, stable_u64};
use crate::font::{glyph_pixel, GLYPH_HEIGHT, GLYPH_WIDTH};
use crate::http::{extract_string, BackendError, JsonClient, RetryPolicy};
use crate::language::{truncate_words, ChatBackend, ContextBundle, OFFLINE_STUB_ID};

pub const TEXT_TO_IMAGE_TEMPLATE: &str = include_str!("../assets/prompts/text_to_image_v1.txt");
pub const PLACEHOLDER_ID: &str = "placeholder";
pub const MAX_PROMPT_CHARS: usize = 500;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;
pub const MIN_PLACEHOLDER_SIZE: u32 = 64;

/// Relative path of a segment's image asset inside the project directory.
pub fn image_asset_path(segment_index: usize) -> String {
    format!("assets/images/seg_{segment_index:04}.png")
}

/// Per-segment generation seed, reproducible from the project id.
pub fn segment_seed(project_id: &str, segment_index: usize, base_seed: u64) -> u64 {
    stable_u64(format!("{project_id}\u{0}{segment_index}\u{0}{base_seed}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePrompt {
    pub segment_index: usize,
    pub prompt_text: String,
    /// Digest of the context bundle the prompt was formulated from.
    pub derived_from: String,
    pub backend_id: String,
}

/// Formulates a text-to-image prompt with the chat backend, falling back to
/// the template rule on failure or an empty answer. The result is at most
/// 500 characters, cut on a word boundary.
pub fn formulate_prompt(ctx: &ContextBundle, backend: &dyn ChatBackend) -> ImagePrompt {
    let rendered = ctx.render(TEXT_TO_IMAGE_TEMPLATE);
    let (text, backend_id) = match backend.complete(&rendered) {
        Ok(text) if !text.trim().is_empty() => {
            let single_line = text.split_whitespace().collect::<Vec<_>>().join(" ");
            (single_line, backend.id().to_string())
        }
        other => {
            if let Err(e) = other {
                tracing::debug!(segment = ctx.segment_index, error = %e, "prompt backend failed");
            }
            (stub_prompt(ctx), OFFLINE_STUB_ID.to_string())
        }
    };
    ImagePrompt {
        segment_index: ctx.segment_index,
        prompt_text: truncate_chars_on_word(&text, MAX_PROMPT_CHARS),
        derived_from: ctx.digest(),
        backend_id,
    }
}

/// `"Illustration of: " + first 20 target words + "; context: " + first 10
/// summary words`.
pub fn stub_prompt(ctx: &ContextBundle) -> String {
    let target = truncate_words(&ctx.target_text, 20);
    let context = truncate_words(&ctx.global_summary, 10);
    format!("Illustration of: {target}; context: {context}")
}

/// Cuts `text` to at most `max` characters, backing off to the last
/// whitespace when the cut would split a word.
pub fn truncate_chars_on_word(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let cut = text.char_indices().nth(max).map_or(text.len(), |(i, _)| i);
    let head = &text[..cut];
    let next_is_space = text[cut..].starts_with(char::is_whitespace);
    let kept = if next_is_space {
        head
    } else {
        match head.rfind(char::is_whitespace) {
            Some(i) => &head[..i],
            // a single enormous word: hard cut
            None => head,
        }
    };
    kept.trim_end().to_string()
}

/// An image produced for one segment, PNG-encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedImage {
    pub segment_index: usize,
    pub width: u32,
    pub height: u32,
    pub png: Vec<u8>,
    pub generator_id: String,
    pub seed: u64,
}

/// A text-to-image service. Implementations must be shareable across threads.
pub trait ImageBackend: Send + Sync {
    fn id(&self) -> &str;
    fn default_size(&self) -> (u32, u32);
    /// Returns an encoded image (any format the `image` crate decodes).
    fn generate(&self, prompt: &str, seed: u64, width: u32, height: u32) -> Result<Vec<u8>, BackendError>;
}

/// Offline image backend drawing [`placeholder_image`]s.
#[derive(Debug, Clone, Copy)]
pub struct PlaceholderBackend {
    pub width: u32,
    pub height: u32,
}

impl Default for PlaceholderBackend {
    fn default() -> Self {
        Self {
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
        }
    }
}

impl ImageBackend for PlaceholderBackend {
    fn id(&self) -> &str {
        PLACEHOLDER_ID
    }

    fn default_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn generate(&self, prompt: &str, seed: u64, width: u32, height: u32) -> Result<Vec<u8>, BackendError> {
        Ok(encode_png(&render_placeholder(prompt, seed, width, height)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageBackendConfig {
    pub endpoint: Option<String>,
    pub width: u32,
    pub height: u32,
    pub timeout_secs: u64,
    /// JSON pointer to the base64 image payload in the response body.
    pub response_pointer: String,
    pub retry: RetryPolicy,
}

impl Default for ImageBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
            timeout_secs: 300,
            response_pointer: "/image".into(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Text-to-image client: POSTs `{prompt, width, height, seed}` and reads a
/// base64 image from the response.
pub struct HttpImageBackend {
    client: JsonClient,
    config: ImageBackendConfig,
}

impl HttpImageBackend {
    pub fn new(config: ImageBackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::BadResponse("no image endpoint configured".into()))?;
        let client = JsonClient::new(
            &endpoint,
            Duration::from_secs(config.timeout_secs),
            config.retry.clone(),
        )?;
        Ok(Self { client, config })
    }
}

impl ImageBackend for HttpImageBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn default_size(&self) -> (u32, u32) {
        (self.config.width, self.config.height)
    }

    fn generate(&self, prompt: &str, seed: u64, width: u32, height: u32) -> Result<Vec<u8>, BackendError> {
        let body = json!({"prompt": prompt, "width": width, "height": height, "seed": seed});
        let resp = self.client.post(&body)?;
        let payload = extract_string(&resp, &self.config.response_pointer)?;
        // tolerate data URLs
        let payload = payload.rsplit_once(',').map_or(payload.as_str(), |(_, b)| b);
        base64::engine::general_purpose::STANDARD
            .decode(payload.trim())
            .map_err(|e| BackendError::BadResponse(format!("image payload: {e}")))
    }
}

/// Generates an image at the backend's default size. Any backend failure or
/// undecodable payload falls back to a placeholder with the same seed.
pub fn generate_image(p: &ImagePrompt, backend: &dyn ImageBackend, seed: u64) -> GeneratedImage {
    let (w, h) = backend.default_size();
    let decoded = backend.generate(&p.prompt_text, seed, w, h).and_then(|bytes| {
        image::load_from_memory(&bytes)
            .map(|img| img.to_rgb8())
            .map_err(|e| BackendError::BadResponse(e.to_string()))
    });
    match decoded {
        Ok(img) => GeneratedImage {
            segment_index: p.segment_index,
            width: img.width(),
            height: img.height(),
            png: encode_png(&img),
            generator_id: backend.id().to_string(),
            seed,
        },
        Err(e) => {
            if backend.id() != PLACEHOLDER_ID {
                tracing::warn!(segment = p.segment_index, error = %e, "image backend failed; using placeholder");
            }
            placeholder_image(p, seed, w, h)
        }
    }
}

/// Deterministic procedural image: a two-tone diagonal gradient whose hue is
/// `(hash(prompt) xor seed) mod 360`, the first four prompt words drawn with
/// the bundled bitmap font, and a 2-pixel border. Sizes below 64 are raised
/// to 64.
pub fn placeholder_image(p: &ImagePrompt, seed: u64, width: u32, height: u32) -> GeneratedImage {
    let width = width.max(MIN_PLACEHOLDER_SIZE);
    let height = height.max(MIN_PLACEHOLDER_SIZE);
    GeneratedImage {
        segment_index: p.segment_index,
        width,
        height,
        png: encode_png(&render_placeholder(&p.prompt_text, seed, width, height)),
        generator_id: PLACEHOLDER_ID.into(),
        seed,
    }
}

pub const PLACEHOLDER_BORDER: Rgb<u8> = Rgb([24, 24, 24]);

pub fn render_placeholder(prompt: &str, seed: u64, width: u32, height: u32) -> RgbImage {
    let width = width.max(MIN_PLACEHOLDER_SIZE);
    let height = height.max(MIN_PLACEHOLDER_SIZE);
    let hash = stable_u64(prompt);
    let mixed = hash ^ seed;
    let hue = (mixed % 360) as f64;
    // secondary hue offset varies with the hash so equal primary hues still differ
    let offset = 30.0 + ((mixed >> 16) % 120) as f64;
    let a = hsv_to_rgb(hue, 0.45, 0.95);
    let b = hsv_to_rgb((hue + offset) % 360.0, 0.70, 0.55);

    let span = f64::from(width + height - 2);
    let mut img = RgbImage::from_fn(width, height, |x, y| {
        let t = f64::from(x + y) / span;
        let mix = |i: usize| (f64::from(a[i]) * (1.0 - t) + f64::from(b[i]) * t).round() as u8;
        Rgb([mix(0), mix(1), mix(2)])
    });

    let label: Vec<&str> = prompt.split_whitespace().take(4).collect();
    let scale = (width / 128).max(1);
    let line_h = (GLYPH_HEIGHT + 2) * scale;
    let left = 4 + 2 * scale;
    for (row, word) in label.iter().enumerate() {
        let top = 4 + 2 * scale + row as u32 * line_h;
        draw_text(&mut img, word, left, top, scale, Rgb([255, 255, 255]));
    }

    for y in 0..height {
        for x in 0..width {
            if x < 2 || y < 2 || x + 2 >= width || y + 2 >= height {
                img.put_pixel(x, y, PLACEHOLDER_BORDER);
            }
        }
    }
    img
}

fn draw_text(img: &mut RgbImage, text: &str, left: u32, top: u32, scale: u32, color: Rgb<u8>) {
    let shadow = Rgb([0, 0, 0]);
    for (i, c) in text.chars().enumerate() {
        let gx = left + i as u32 * GLYPH_WIDTH * scale;
        for gy in 0..GLYPH_HEIGHT {
            for gxo in 0..GLYPH_WIDTH {
                if !glyph_pixel(c, gxo, gy) {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let x = gx + gxo * scale + dx;
                        let y = top + gy * scale + dy;
                        if x + 1 < img.width() && y + 1 < img.height() {
                            img.put_pixel(x + 1, y + 1, shadow);
                            img.put_pixel(x, y, color);
                        }
                    }
                }
            }
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |u: f64| ((u + m) * 255.0).round() as u8;
    [to(r), to(g), to(b)]
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

/// Identity of a cached image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub context_digest: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub prompt_backend: String,
    pub generator_id: String,
}

impl CacheKey {
    pub fn file_stem(&self) -> String {
        sha256_hex(format!(
            "{}|{}|{}x{}|{}|{}",
            self.context_digest, self.seed, self.width, self.height, self.prompt_backend, self.generator_id
        ))
    }
}

/// A prompt and the image generated from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedImage {
    pub prompt: ImagePrompt,
    pub image: GeneratedImage,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    prompt: ImagePrompt,
    width: u32,
    height: u32,
    generator_id: String,
    seed: u64,
}

/// Image cache with an optional on-disk layer. Concurrent requests for the
/// same key share one computation.
#[derive(Default)]
pub struct ImageCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<CacheKey, Arc<OnceLock<CachedImage>>>>,
}

impl ImageCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            slots: Mutex::default(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Returns the cached entry for `key`, running `make` at most once per key
    /// across threads when neither memory nor disk has it. Entries whose
    /// generator differs from the key's (backend fallbacks) are kept in memory
    /// only.
    pub fn get_or_create(&self, key: &CacheKey, make: impl FnOnce() -> CachedImage) -> CachedImage {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock");
            Arc::clone(slots.entry(key.clone()).or_default())
        };
        slot.get_or_init(|| {
            if let Some(hit) = self.read_disk(key) {
                return hit;
            }
            let made = make();
            if made.image.generator_id == key.generator_id {
                if let Err(e) = self.write_disk(key, &made) {
                    tracing::warn!(error = %e, "failed to persist cached image");
                }
            }
            made
        })
        .clone()
    }

    fn read_disk(&self, key: &CacheKey) -> Option<CachedImage> {
        let dir = self.dir.as_ref()?;
        let stem = key.file_stem();
        let png = std::fs::read(dir.join(format!("{stem}.png"))).ok()?;
        let meta = std::fs::read_to_string(dir.join(format!("{stem}.json"))).ok()?;
        let side: Sidecar = serde_json::from_str(&meta).ok()?;
        Some(CachedImage {
            image: GeneratedImage {
                segment_index: side.prompt.segment_index,
                width: side.width,
                height: side.height,
                png,
                generator_id: side.generator_id,
                seed: side.seed,
            },
            prompt: side.prompt,
        })
    }

    fn write_disk(&self, key: &CacheKey, entry: &CachedImage) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let stem = key.file_stem();
        let side = Sidecar {
            prompt: entry.prompt.clone(),
            width: entry.image.width,
            height: entry.image.height,
            generator_id: entry.image.generator_id.clone(),
            seed: entry.image.seed,
        };
        // png first: a sidecar without its png is never read as a hit
        write_atomic(&dir.join(format!("{stem}.png")), &entry.image.png)?;
        write_atomic(
            &dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&side)?.as_bytes(),
        )
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
