//! End-to-end build: transcript and frames in, `manifest.json` plus assets
//! out.
//!
//! [`run`] does all the computation in memory and [`write_project`] lays the
//! result out on disk. [`build_project`] chains the two with an on-disk image
//! cache. The output directory is staged next to its final location and
//! swapped in at the end, so readers never observe a half-written project.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::font::TextMetrics;
use crate::imagegen::{
    formulate_prompt, generate_image, image_asset_path, segment_seed, CacheKey, CachedImage, GeneratedImage,
    HttpImageBackend, ImageBackend, ImageCache, PlaceholderBackend,
};
use crate::language::{
    assess_imageability, extract_keyphrases, filter_imageable, summarize_global, ChatBackend, ContextBundle,
    HttpChatBackend, ImageabilityLexicon, ImageabilityRecord, KeyphraseResult, OfflineChatBackend,
};
use crate::manifest::{
    GenerationMetadata, Imageability, KeyphraseEntry, Manifest, ManifestEntry, Millis, SkipReason, MANIFEST_FILE,
    SCHEMA_VERSION,
};
use crate::packing::{pack_segment, AugmentationKind, PlacedAugmentation};
use crate::saliency::{
    cumulative_mask, frame_mask, sample_frame_indices, BinaryMask, FrameStore, SaliencyError, Shape,
};
use crate::transcript::{parse_auto, Transcript, TranscriptError};

/// Subdirectory of the output holding the persistent image cache.
pub const CACHE_DIR: &str = "cache/images";
pub const FRAMES_COPY_DIR: &str = "media/frames";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid project id {0:?}: use lowercase letters, digits, '-' and '_'")]
    ProjectId(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Transcript {
        path: String,
        #[source]
        source: TranscriptError,
    },
    #[error("no frames found in {0}")]
    NoFrames(String),
    #[error(transparent)]
    Frame(#[from] SaliencyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("encoding {path}: {message}")]
    Encode { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where the inputs for one project live.
#[derive(Debug, Clone)]
pub struct ProjectInput {
    pub project_id: String,
    pub transcript_path: PathBuf,
    pub frames_dir: PathBuf,
}

/// Checks that a project id is usable as a URL path segment and directory name.
pub fn validate_project_id(id: &str) -> Result<(), PipelineError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(PipelineError::ProjectId(id.to_string()))
    }
}

/// The external services a build talks to.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub image: Arc<dyn ImageBackend>,
    pub lexicon: Arc<ImageabilityLexicon>,
}

impl Backends {
    /// Offline stub chat, placeholder images, and the bundled lexicon.
    pub fn offline(cfg: &Config) -> Self {
        Self {
            chat: Arc::new(OfflineChatBackend),
            image: Arc::new(PlaceholderBackend {
                width: cfg.image.width,
                height: cfg.image.height,
            }),
            lexicon: Arc::new(ImageabilityLexicon::bundled()),
        }
    }

    /// Remote backends for every configured endpoint, offline stand-ins for
    /// the rest. `run.offline` forces the stand-ins.
    pub fn from_config(cfg: &Config) -> Result<Self, PipelineError> {
        let mut backends = Self::offline(cfg);
        if cfg.run.offline {
            return Ok(backends);
        }
        if cfg.chat.endpoint.is_some() {
            let chat = HttpChatBackend::new(cfg.chat.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
            backends.chat = Arc::new(chat);
        }
        if cfg.image.endpoint.is_some() {
            let image = HttpImageBackend::new(cfg.image.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
            backends.image = Arc::new(image);
        }
        Ok(backends)
    }
}

/// Everything a build produces, before it is written anywhere.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub manifest: Manifest,
    /// Generated images by segment index.
    pub images: BTreeMap<usize, GeneratedImage>,
    /// Cumulative salient-region mask per segment, `None` where frames were
    /// unavailable.
    pub masks: Vec<Option<BinaryMask>>,
    /// Frame indices present in the frame store.
    pub frame_indices: Vec<u64>,
}

struct LanguageResult {
    ctx: ContextBundle,
    record: ImageabilityRecord,
    keyphrases: KeyphraseResult,
}

/// Runs every stage in memory. Segment-level failures (a missing frame, a
/// backend outage) are recorded in the segment's `skip_reasons`; only
/// problems with the inputs as a whole are returned as errors.
pub fn run(
    input: &ProjectInput,
    cfg: &Config,
    backends: &Backends,
    cache: &ImageCache,
) -> Result<BuildOutput, PipelineError> {
    validate_project_id(&input.project_id)?;
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

    let raw = fs::read_to_string(&input.transcript_path).map_err(io_err(&input.transcript_path))?;
    let transcript = parse_auto(&raw).map_err(|source| PipelineError::Transcript {
        path: input.transcript_path.display().to_string(),
        source,
    })?;

    let store = FrameStore::new(&input.frames_dir);
    let frame_indices = store.indices().map_err(io_err(&input.frames_dir))?;
    let first = *frame_indices
        .first()
        .ok_or_else(|| PipelineError::NoFrames(input.frames_dir.display().to_string()))?;
    let frame_shape = store.load(first)?.shape();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.concurrency)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        assemble(
            input,
            cfg,
            backends,
            cache,
            &transcript,
            &store,
            frame_shape,
            frame_indices,
        )
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    input: &ProjectInput,
    cfg: &Config,
    backends: &Backends,
    cache: &ImageCache,
    transcript: &Transcript,
    store: &FrameStore,
    frame_shape: Shape,
    frame_indices: Vec<u64>,
) -> Result<BuildOutput, PipelineError> {
    let chat = backends.chat.as_ref();
    let image_backend = backends.image.as_ref();
    let summary = summarize_global(transcript, chat);
    tracing::info!(backend = %summary.backend_id, segments = transcript.len(), "global summary ready");

    let language: Vec<LanguageResult> = (0..transcript.len())
        .into_par_iter()
        .map(|i| {
            let ctx = ContextBundle::new(transcript, &summary.text, i, cfg.language.local_window);
            let record = assess_imageability(&ctx, chat, &backends.lexicon);
            let keyphrases = extract_keyphrases(&ctx, chat, cfg.language.max_keyphrases);
            LanguageResult {
                ctx,
                record,
                keyphrases,
            }
        })
        .collect();

    let threshold = cfg.language.threshold;
    let records: Vec<ImageabilityRecord> = language.iter().map(|lr| lr.record.clone()).collect();
    let qualifying: BTreeSet<usize> = filter_imageable(&records, threshold)
        .map_err(|e| PipelineError::Config(e.to_string()))?
        .into_iter()
        .collect();
    let (img_w, img_h) = image_backend.default_size();
    let generated: Vec<Option<CachedImage>> = language
        .par_iter()
        .map(|lr| {
            if !qualifying.contains(&lr.ctx.segment_index) {
                return None;
            }
            let seed = segment_seed(&input.project_id, lr.ctx.segment_index, cfg.run.seed);
            let key = CacheKey {
                context_digest: lr.ctx.digest(),
                seed,
                width: img_w,
                height: img_h,
                prompt_backend: chat.id().to_string(),
                generator_id: image_backend.id().to_string(),
            };
            Some(cache.get_or_create(&key, || {
                let prompt = formulate_prompt(&lr.ctx, chat);
                let image = generate_image(&prompt, image_backend, seed);
                CachedImage { prompt, image }
            }))
        })
        .collect();

    // Each frame is analysed once, however many segments sample it.
    let wanted: BTreeSet<u64> = transcript
        .segments()
        .iter()
        .flat_map(|s| sample_frame_indices(s.start_ms, s.end_ms))
        .collect();
    let frame_masks: HashMap<u64, Result<BinaryMask, SkipReason>> = wanted
        .into_par_iter()
        .map(|i| (i, load_frame_mask(store, i, frame_shape, cfg.saliency.passes)))
        .collect();

    let metrics = TextMetrics::new(
        cfg.text
            .point_size
            .unwrap_or_else(|| TextMetrics::for_frame_height(frame_shape.height).point_size),
    );

    let per_segment: Vec<(ManifestEntry, Option<BinaryMask>)> = transcript
        .segments()
        .par_iter()
        .zip(language.par_iter())
        .zip(generated.par_iter())
        .map(|((seg, lr), gen)| {
            let mut skip_reasons = Vec::new();
            let sampled = sample_frame_indices(seg.start_ms, seg.end_ms);
            let mut masks = Vec::with_capacity(sampled.len());
            for i in sampled {
                match &frame_masks[&i] {
                    Ok(m) => masks.push(m.clone()),
                    Err(reason) => skip_reasons.push(reason.clone()),
                }
            }
            let mask = if skip_reasons.is_empty() {
                Some(cumulative_mask(&masks).expect("frame masks share the first frame's shape"))
            } else {
                None
            };
            let image = gen.as_ref().map(|c| &c.image);
            let placements: Vec<PlacedAugmentation> = match &mask {
                Some(mask) => {
                    let outcome = pack_segment(mask, image, &lr.keyphrases.phrases, &cfg.packing, &metrics);
                    skip_reasons.extend(outcome.skipped);
                    outcome.placements
                }
                None => Vec::new(),
            };
            let entry = ManifestEntry {
                index: seg.index,
                t_start: Millis(seg.start_ms),
                t_end: Millis(seg.end_ms),
                text: seg.text.clone(),
                imageability: Imageability {
                    score: lr.record.score,
                    backend_id: lr.record.backend_id.clone(),
                    raw_response: lr.record.raw_response.clone(),
                },
                keyphrases: lr
                    .keyphrases
                    .phrases
                    .iter()
                    .map(|k| KeyphraseEntry {
                        phrase: k.phrase.clone(),
                        span: k.char_span,
                    })
                    .collect(),
                prompt: gen.as_ref().map(|c| c.prompt.prompt_text.clone()),
                image: gen.as_ref().map(|_| image_asset_path(seg.index)),
                placements,
                skip_reasons,
            };
            (entry, mask)
        })
        .collect();

    let images: BTreeMap<usize, GeneratedImage> = generated
        .into_iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|c| (i, c.image)))
        .collect();
    let (segments, masks): (Vec<_>, Vec<_>) = per_segment.into_iter().unzip();

    let frames_end = frame_indices.last().map_or(0, |&last| (last + 1) * 1000);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        project_id: input.project_id.clone(),
        frame_width: frame_shape.width,
        frame_height: frame_shape.height,
        duration: Millis(transcript.end_ms().max(frames_end)),
        threshold,
        global_summary: summary.text,
        segments,
        metadata: GenerationMetadata {
            summary_backend: summary.backend_id,
            chat_backend: chat.id().to_string(),
            image_backend: image_backend.id().to_string(),
            seed: cfg.run.seed,
            config_digest: cfg.digest(),
            generated_at: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        },
    };
    manifest
        .validate()
        .map_err(|e| PipelineError::Config(format!("internal manifest check failed: {e}")))?;

    Ok(BuildOutput {
        manifest,
        images,
        masks,
        frame_indices,
    })
}

fn load_frame_mask(store: &FrameStore, index: u64, expected: Shape, passes: usize) -> Result<BinaryMask, SkipReason> {
    match store.load(index) {
        Ok(img) if img.shape() == expected => Ok(frame_mask(&img, passes)),
        Ok(img) => Err(SkipReason::new(
            "frame-size-mismatch",
            format!("frame {index} is {}, expected {expected}", img.shape()),
        )),
        // only file names go into the manifest so it does not depend on where the inputs live
        Err(SaliencyError::MissingFrame { index, path }) => Err(SkipReason::new(
            "missing-frame",
            format!(
                "frame {index} not found ({})",
                path.file_name().unwrap_or_default().to_string_lossy()
            ),
        )),
        Err(e) => Err(SkipReason::new(
            "frame-error",
            format!("frame {index}: {}", frame_error_kind(&e)),
        )),
    }
}

fn frame_error_kind(e: &SaliencyError) -> &'static str {
    match e {
        SaliencyError::AmbiguousFrame { .. } => "more than one file for this index",
        SaliencyError::Decode { .. } => "cannot be decoded",
        _ => "unusable",
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub out_dir: PathBuf,
    /// Write each segment's cumulative mask to `debug/masks/`.
    pub dump_masks: bool,
    /// Write the mask with placement outlines to `debug/packing/`.
    pub dump_packing: bool,
    /// Copy the frame images to `media/frames/` so the project is self-contained.
    pub copy_frames: bool,
    /// Keep the `generated_at` timestamp in the written manifest.
    pub include_timestamp: bool,
}

/// One-line outcome summary, printed by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub project_id: String,
    pub manifest: PathBuf,
    pub segments: usize,
    pub images: usize,
    pub placements: usize,
    pub segments_with_skips: usize,
}

impl BuildReport {
    fn new(m: &Manifest, manifest_path: PathBuf) -> Self {
        Self {
            project_id: m.project_id.clone(),
            manifest: manifest_path,
            segments: m.segments.len(),
            images: m.segments.iter().filter(|e| e.image.is_some()).count(),
            placements: m.segments.iter().map(|e| e.placements.len()).sum(),
            segments_with_skips: m.segments.iter().filter(|e| !e.skip_reasons.is_empty()).count(),
        }
    }
}

/// Runs the build with the image cache under `<out>/cache/images` and writes
/// the project.
pub fn build_project(
    input: &ProjectInput,
    cfg: &Config,
    backends: &Backends,
    opts: &BuildOptions,
) -> Result<BuildReport, PipelineError> {
    let cache = ImageCache::on_disk(opts.out_dir.join(CACHE_DIR));
    let output = run(input, cfg, backends, &cache)?;
    write_project(&output, &input.frames_dir, opts)
}

/// Entries of a previous build that are rebuilt from scratch every time.
const OWNED_ENTRIES: [&str; 3] = [MANIFEST_FILE, "assets", "debug"];

/// Writes the manifest and assets to a staging directory and swaps it into
/// place. Anything else already in the output directory (the image cache,
/// user-provided media) is carried over.
pub fn write_project(
    output: &BuildOutput,
    frames_dir: &Path,
    opts: &BuildOptions,
) -> Result<BuildReport, PipelineError> {
    let out = &opts.out_dir;
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| PipelineError::Config(format!("invalid output directory {}", out.display())))?;
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }

    let result = populate(output, frames_dir, opts, &staging).and_then(|()| swap_into_place(&staging, out, &name));
    if result.is_err() && staging.exists() {
        let _ = fs::remove_dir_all(&staging);
    }
    result?;

    let manifest_path = out.join(MANIFEST_FILE);
    tracing::info!(path = %manifest_path.display(), "manifest written");
    Ok(BuildReport::new(&output.manifest, manifest_path))
}

fn populate(output: &BuildOutput, frames_dir: &Path, opts: &BuildOptions, staging: &Path) -> Result<(), PipelineError> {
    let m = &output.manifest;
    for (&i, img) in &output.images {
        write_file(&staging.join(image_asset_path(i)), &img.png)?;
    }
    if opts.dump_masks {
        for (i, mask) in output.masks.iter().enumerate() {
            if let Some(mask) = mask {
                let path = staging.join(format!("debug/masks/seg_{i:04}.png"));
                save_image(&path, |p| mask.to_luma8().save(p))?;
            }
        }
    }
    if opts.dump_packing {
        for (entry, mask) in m.segments.iter().zip(&output.masks) {
            if let Some(mask) = mask {
                let path = staging.join(format!("debug/packing/seg_{:04}.png", entry.index));
                let img = packing_overlay(mask, &entry.placements);
                save_image(&path, |p| img.save(p))?;
            }
        }
    }
    if opts.copy_frames {
        let store = FrameStore::new(frames_dir);
        let dest = staging.join(FRAMES_COPY_DIR);
        fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        for &i in &output.frame_indices {
            let src = store.frame_path(i)?;
            let target = dest.join(src.file_name().expect("frame paths have a file name"));
            fs::copy(&src, &target).map_err(io_err(&target))?;
        }
    }
    write_file(
        &staging.join(MANIFEST_FILE),
        m.to_canonical_json(opts.include_timestamp).as_bytes(),
    )
}

fn swap_into_place(staging: &Path, out: &Path, name: &str) -> Result<(), PipelineError> {
    if !out.exists() {
        return fs::rename(staging, out).map_err(io_err(out));
    }
    carry_over(out, staging, true)?;
    let parent = staging.parent().expect("staging has a parent");
    let retired = parent.join(format!(".{name}.old-{}", std::process::id()));
    if retired.exists() {
        fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
    }
    fs::rename(out, &retired).map_err(io_err(out))?;
    if let Err(e) = fs::rename(staging, out) {
        // put the previous build back before reporting
        let _ = fs::rename(&retired, out);
        return Err(io_err(out)(e));
    }
    fs::remove_dir_all(&retired).map_err(io_err(&retired))
}

/// Moves entries of `old` that `new` lacks into `new`, descending into
/// directories present in both. At the top level, build-owned entries are
/// left behind so stale assets do not survive a rebuild.
fn carry_over(old: &Path, new: &Path, top: bool) -> Result<(), PipelineError> {
    for entry in fs::read_dir(old).map_err(io_err(old))? {
        let entry = entry.map_err(io_err(old))?;
        let file_name = entry.file_name();
        if top && OWNED_ENTRIES.iter().any(|o| file_name == *o) {
            continue;
        }
        let target = new.join(&file_name);
        if !target.exists() {
            fs::rename(entry.path(), &target).map_err(io_err(&target))?;
        } else if target.is_dir() && entry.path().is_dir() {
            carry_over(&entry.path(), &target, false)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn save_image(path: &Path, save: impl FnOnce(&Path) -> image::ImageResult<()>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save(path).map_err(|e| PipelineError::Encode {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Salient pixels in grey, image placements outlined white and keyphrase
/// placements red.
pub fn packing_overlay(mask: &BinaryMask, placements: &[PlacedAugmentation]) -> RgbImage {
    let mut img = RgbImage::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x, y) {
            Rgb([110, 110, 110])
        } else {
            Rgb([16, 16, 16])
        }
    });
    for p in placements {
        let color = match p.kind {
            AugmentationKind::Image => Rgb([255, 255, 255]),
            AugmentationKind::Keyphrase => Rgb([255, 0, 0]),
        };
        let r = p.rect;
        if r.w == 0 || r.h == 0 {
            continue;
        }
        for x in r.x..r.x + r.w {
            img.put_pixel(x, r.y, color);
            img.put_pixel(x, r.y + r.h - 1, color);
        }
        for y in r.y..r.y + r.h {
            img.put_pixel(r.x, y, color);
            img.put_pixel(r.x + r.w - 1, y, color);
        }
    }
    img
}
