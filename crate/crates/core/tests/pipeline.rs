mod common;

use std::path::Path;

use common::{write_project, LECTURE_SRT};
use proptest::prelude::*;
use visaug_core::imagegen::ImageCache;
use visaug_core::manifest::{GenerationMetadata, Imageability, KeyphraseEntry, SCHEMA_VERSION};
use visaug_core::packing::RenderStyle;
use visaug_core::pipeline::{run, write_project as write_output, CACHE_DIR};
use visaug_core::{
    build_project, filter_view, load_manifest, AugmentationKind, Backends, BuildOptions, Config, Manifest,
    ManifestEntry, ManifestError, Millis, PipelineError, PlacedAugmentation, ProjectInput, Rect,
};

fn input(dir: &Path) -> ProjectInput {
    ProjectInput {
        project_id: "lecture".into(),
        transcript_path: dir.join("transcript.srt"),
        frames_dir: dir.join("frames"),
    }
}

fn offline_build(dir: &Path, cfg: &Config, out: &str) -> Manifest {
    let opts = BuildOptions {
        out_dir: dir.join(out),
        ..BuildOptions::default()
    };
    build_project(&input(dir), cfg, &Backends::offline(cfg), &opts).unwrap();
    load_manifest(&dir.join(out).join("manifest.json")).unwrap()
}

#[test]
fn offline_build_is_deterministic_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    let cfg = Config::default();
    let a = offline_build(dir.path(), &cfg, "out_a");
    let b = offline_build(dir.path(), &cfg, "out_b");
    assert_eq!(a.to_canonical_json(false), b.to_canonical_json(false));
    let raw = std::fs::read_to_string(dir.path().join("out_a/manifest.json")).unwrap();
    assert_eq!(raw, a.to_canonical_json(false));

    assert_eq!(a.schema_version, SCHEMA_VERSION);
    assert_eq!((a.frame_width, a.frame_height), (320, 180));
    assert_eq!(a.duration, Millis(10_000));
    assert_eq!(a.segments.len(), 4);
    assert_eq!(a.metadata.config_digest, cfg.digest());
    assert_eq!(a.metadata.chat_backend, "offline-stub");

    // every referenced asset exists
    for e in &a.segments {
        if let Some(img) = &e.image {
            assert!(dir.path().join("out_a").join(img).is_file(), "{img}");
            assert!(e.score() > a.threshold);
            assert!(e.prompt.is_some());
        }
        for p in &e.placements {
            if p.kind == AugmentationKind::Image {
                assert!(dir.path().join("out_a").join(&p.asset_ref).is_file());
            }
        }
    }
    assert!(
        a.segments.iter().any(|e| e.image.is_some()),
        "expected at least one image"
    );
}

#[test]
fn rebuilding_again_gives_identical_bytes_and_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    let cfg = Config::default();
    offline_build(dir.path(), &cfg, "out");
    let first = std::fs::read(dir.path().join("out/manifest.json")).unwrap();
    let cached = std::fs::read_dir(dir.path().join("out").join(CACHE_DIR))
        .unwrap()
        .count();
    assert!(cached > 0);

    std::fs::create_dir_all(dir.path().join("out/media")).unwrap();
    std::fs::write(dir.path().join("out/media/lecture.mp4"), b"not really a video").unwrap();
    std::fs::write(dir.path().join("out/assets/images/seg_0099.png"), b"stale").unwrap();

    offline_build(dir.path(), &cfg, "out");
    assert_eq!(std::fs::read(dir.path().join("out/manifest.json")).unwrap(), first);
    assert!(
        dir.path().join("out/media/lecture.mp4").is_file(),
        "user media must survive a rebuild"
    );
    assert!(
        !dir.path().join("out/assets/images/seg_0099.png").exists(),
        "stale assets must go"
    );
    assert_eq!(
        std::fs::read_dir(dir.path().join("out").join(CACHE_DIR))
            .unwrap()
            .count(),
        cached
    );
    // no staging directories left behind
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".out."))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn missing_frame_is_isolated_to_its_segments() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    std::fs::remove_file(dir.path().join("frames/frame_000004.png")).unwrap();
    let m = offline_build(dir.path(), &Config::default(), "out");
    // segment 1 spans 2.5..5.0 s and samples frames 3, 4, 5
    let codes = |i: usize| {
        m.segments[i]
            .skip_reasons
            .iter()
            .map(|s| s.code.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(codes(1), ["missing-frame"]);
    assert!(m.segments[1].placements.is_empty());
    for i in [0, 2, 3] {
        assert!(!codes(i).contains(&"missing-frame".to_string()), "segment {i}");
    }
    assert!(m.segments[3].placements.len() + m.segments[0].placements.len() > 0);
}

#[test]
fn mismatched_frame_size_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    image::RgbImage::new(64, 64)
        .save(dir.path().join("frames/frame_000009.png"))
        .unwrap();
    let m = offline_build(dir.path(), &Config::default(), "out");
    assert_eq!(m.segments[3].skip_reasons[0].code, "frame-size-mismatch");
}

#[test]
fn threshold_ten_yields_no_images_but_keeps_keyphrases() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    let mut cfg = Config::default();
    cfg.language.threshold = 10;
    let m = offline_build(dir.path(), &cfg, "out");
    assert!(m.segments.iter().all(|e| e.image.is_none() && e.prompt.is_none()));
    assert!(m.segments.iter().all(|e| !e.keyphrases.is_empty()));
    let phrase_placements = m
        .segments
        .iter()
        .flat_map(|e| &e.placements)
        .filter(|p| p.kind == AugmentationKind::Keyphrase)
        .count();
    assert!(phrase_placements > 0);
    assert!(!dir.path().join("out/assets").exists());
}

#[test]
fn unreadable_inputs_are_fatal() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 3, LECTURE_SRT);
    let cfg = Config::default();
    let cache = ImageCache::in_memory();
    let backends = Backends::offline(&cfg);

    let mut bad = input(dir.path());
    bad.transcript_path = dir.path().join("nope.srt");
    assert!(matches!(
        run(&bad, &cfg, &backends, &cache),
        Err(PipelineError::Io { .. })
    ));

    let mut bad = input(dir.path());
    bad.frames_dir = dir.path().join("empty");
    std::fs::create_dir_all(&bad.frames_dir).unwrap();
    assert!(matches!(
        run(&bad, &cfg, &backends, &cache),
        Err(PipelineError::NoFrames(_))
    ));

    let mut bad = input(dir.path());
    bad.project_id = "Bad Id".into();
    assert!(matches!(
        run(&bad, &cfg, &backends, &cache),
        Err(PipelineError::ProjectId(_))
    ));

    std::fs::write(dir.path().join("transcript.srt"), "garbage\n").unwrap();
    assert!(matches!(
        run(&input(dir.path()), &cfg, &backends, &cache),
        Err(PipelineError::Transcript { .. })
    ));
}

#[test]
fn debug_dumps_and_frame_copies() {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), 10, LECTURE_SRT);
    let cfg = Config::default();
    let output = run(
        &input(dir.path()),
        &cfg,
        &Backends::offline(&cfg),
        &ImageCache::in_memory(),
    )
    .unwrap();
    let opts = BuildOptions {
        out_dir: dir.path().join("out"),
        dump_masks: true,
        dump_packing: true,
        copy_frames: true,
        include_timestamp: true,
    };
    write_output(&output, &dir.path().join("frames"), &opts).unwrap();
    let out = dir.path().join("out");
    for i in 0..4 {
        assert!(out.join(format!("debug/masks/seg_{i:04}.png")).is_file());
        assert!(out.join(format!("debug/packing/seg_{i:04}.png")).is_file());
    }
    assert_eq!(std::fs::read_dir(out.join("media/frames")).unwrap().count(), 10);
    let m = load_manifest(&out.join("manifest.json")).unwrap();
    assert!(m.metadata.generated_at.is_some());
    // the timestamp is the only difference from the canonical form
    assert_eq!(m.to_canonical_json(false), output.manifest.to_canonical_json(false));
}

fn manifest_with_scores(scores: &[u8]) -> Manifest {
    let segments = scores
        .iter()
        .enumerate()
        .map(|(i, &score)| ManifestEntry {
            index: i,
            t_start: Millis(i as u64 * 1000),
            t_end: Millis(i as u64 * 1000 + 900),
            text: format!("segment {i}"),
            imageability: Imageability {
                score,
                backend_id: "test".into(),
                raw_response: String::new(),
            },
            keyphrases: vec![KeyphraseEntry {
                phrase: "segment".into(),
                span: None,
            }],
            prompt: None,
            image: None,
            placements: vec![PlacedAugmentation {
                segment_index: i,
                kind: AugmentationKind::Keyphrase,
                rect: Rect::new(10, 10, 40, 12),
                asset_ref: "segment".into(),
                render_style: RenderStyle::Text {
                    color: "#ff0000".into(),
                    point_size: 9,
                },
            }],
            skip_reasons: vec![],
        })
        .collect();
    Manifest {
        schema_version: SCHEMA_VERSION,
        project_id: "t".into(),
        frame_width: 320,
        frame_height: 180,
        duration: Millis(scores.len() as u64 * 1000),
        threshold: 5,
        global_summary: String::new(),
        segments,
        metadata: GenerationMetadata {
            summary_backend: "x".into(),
            chat_backend: "x".into(),
            image_backend: "x".into(),
            seed: 0,
            config_digest: "0".into(),
            generated_at: None,
        },
    }
}

proptest! {
    #[test]
    fn filter_view_partitions_by_score(scores in proptest::collection::vec(1u8..=10, 0..30), k in 1u8..=10) {
        let m = manifest_with_scores(&scores);
        let before = m.clone();
        let v = filter_view(&m, k);
        prop_assert_eq!(&m, &before);
        for (orig, shown) in m.segments.iter().zip(&v.segments) {
            prop_assert_eq!(&orig.text, &shown.text);
            prop_assert_eq!(orig.score(), shown.score());
            if orig.score() >= k {
                prop_assert_eq!(&orig.placements, &shown.placements);
            } else {
                prop_assert!(shown.placements.is_empty());
            }
        }
    }

    #[test]
    fn filter_view_composes(scores in proptest::collection::vec(1u8..=10, 0..30), a in 1u8..=10, b in 1u8..=10) {
        let m = manifest_with_scores(&scores);
        prop_assert_eq!(filter_view(&filter_view(&m, a), b), filter_view(&m, a.max(b)));
    }
}

#[test]
fn filter_view_extremes() {
    let m = manifest_with_scores(&[1, 4, 5, 9, 10]);
    assert_eq!(filter_view(&m, 1), m);
    let top = filter_view(&m, 10);
    let kept: Vec<usize> = top
        .segments
        .iter()
        .filter(|e| !e.placements.is_empty())
        .map(|e| e.index)
        .collect();
    assert_eq!(kept, [4]);
}

#[test]
fn load_rejects_bad_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");

    let mut m = manifest_with_scores(&[3, 7]);
    m.segments[1].placements[0].rect = Rect::new(300, 10, 40, 12);
    std::fs::write(&path, m.to_canonical_json(false)).unwrap();
    match load_manifest(&path) {
        Err(ManifestError::InvariantViolation { segment, field, .. }) => {
            assert_eq!(segment, Some(1));
            assert_eq!(field, "placements.rect");
        }
        other => panic!("{other:?}"),
    }

    let m = manifest_with_scores(&[3]);
    let text = m
        .to_canonical_json(false)
        .replace("\"schema_version\": 1", "\"schema_version\": 2");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(
        load_manifest(&path),
        Err(ManifestError::SchemaMismatch { found: Some(2) })
    ));

    let mut m = manifest_with_scores(&[3, 4]);
    m.segments[0].image = Some("assets/images/seg_0000.png".into());
    std::fs::write(&path, m.to_canonical_json(false)).unwrap();
    assert!(matches!(
        load_manifest(&path),
        Err(ManifestError::InvariantViolation { segment: Some(0), .. })
    ));
}
