//! The per-project augmentation manifest and its canonical JSON form.
//!
//! Canonical JSON has sorted object keys, two-space indentation, and every
//! time value written in seconds with exactly three decimals. Times are held
//! as integer milliseconds so that a load/save cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::language::CharSpan;
use crate::packing::{AugmentationKind, PlacedAugmentation};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {found:?} (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: Option<u64> },
    #[error("invariant violated{}: {field}: {message}", segment.map(|s| format!(" in segment {s}")).unwrap_or_default())]
    InvariantViolation {
        segment: Option<usize>,
        field: String,
        message: String,
    },
}

/// Time in milliseconds, serialized as seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Millis(pub u64);

impl Millis {
    pub fn seconds(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Serialize for Millis {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.seconds())
    }
}

impl<'de> Deserialize<'de> for Millis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(d)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom(format!("invalid time {secs}")));
        }
        Ok(Millis((secs * 1000.0).round() as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReason {
    pub code: String,
    pub detail: String,
}

impl SkipReason {
    pub fn new(code: &str, detail: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyphraseEntry {
    pub phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<CharSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Imageability {
    pub score: u8,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub t_start: Millis,
    pub t_end: Millis,
    pub text: String,
    pub imageability: Imageability,
    pub keyphrases: Vec<KeyphraseEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Image asset path relative to the project directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub placements: Vec<PlacedAugmentation>,
    pub skip_reasons: Vec<SkipReason>,
}

impl ManifestEntry {
    pub fn score(&self) -> u8 {
        self.imageability.score
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub summary_backend: String,
    pub chat_backend: String,
    pub image_backend: String,
    pub seed: u64,
    pub config_digest: String,
    /// Omitted in canonical form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub project_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    pub duration: Millis,
    /// Images were generated for segments scoring strictly above this.
    pub threshold: u8,
    pub global_summary: String,
    pub segments: Vec<ManifestEntry>,
    pub metadata: GenerationMetadata,
}

impl Manifest {
    /// Canonical JSON. With `include_timestamp == false` the generation
    /// timestamp is dropped, which makes rebuilds byte-comparable.
    pub fn to_canonical_json(&self, include_timestamp: bool) -> String {
        let mut copy;
        let m = if include_timestamp || self.metadata.generated_at.is_none() {
            self
        } else {
            copy = self.clone();
            copy.metadata.generated_at = None;
            &copy
        };
        let value = serde_json::to_value(m).expect("manifest serializes");
        to_canonical_string(&value)
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let value: Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(Value::as_u64);
        if found != Some(u64::from(SCHEMA_VERSION)) {
            return Err(ManifestError::SchemaMismatch { found });
        }
        let manifest: Manifest = serde_json::from_value(value)?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Checks ordering, score ranges, the image/threshold relation, and that
    /// every placement lies inside the frame.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let violation = |segment: Option<usize>, field: &str, message: String| {
            Err(ManifestError::InvariantViolation {
                segment,
                field: field.to_string(),
                message,
            })
        };
        if !(1..=10).contains(&self.threshold) {
            return violation(None, "threshold", format!("{} outside 1..10", self.threshold));
        }
        for (pos, e) in self.segments.iter().enumerate() {
            let seg = Some(e.index);
            if e.index != pos {
                return violation(seg, "index", format!("expected {pos}"));
            }
            if e.t_start >= e.t_end {
                return violation(seg, "t_start", "must precede t_end".into());
            }
            if pos > 0 && self.segments[pos - 1].t_start > e.t_start {
                return violation(seg, "t_start", "segments not ordered by start time".into());
            }
            if !(1..=10).contains(&e.score()) {
                return violation(seg, "imageability.score", format!("{} outside 1..10", e.score()));
            }
            if e.image.is_some() && e.score() <= self.threshold {
                return violation(
                    seg,
                    "image",
                    format!("score {} does not exceed threshold {}", e.score(), self.threshold),
                );
            }
            for p in &e.placements {
                if !p.rect.fits_within(self.frame_width, self.frame_height) {
                    return violation(
                        seg,
                        "placements.rect",
                        format!(
                            "{:?} outside the {}x{} frame",
                            p.rect, self.frame_width, self.frame_height
                        ),
                    );
                }
                if p.segment_index != e.index {
                    return violation(seg, "placements.segment_index", format!("{}", p.segment_index));
                }
                if p.kind == AugmentationKind::Image && e.image.as_deref() != Some(p.asset_ref.as_str()) {
                    return violation(
                        seg,
                        "placements.asset_ref",
                        "image placement without matching image".into(),
                    );
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Manifest::from_json(&text)
}

/// Threshold view: entries scoring at least `min_score` keep their
/// placements, all others have them hidden. The input is left untouched.
pub fn filter_view(m: &Manifest, min_score: u8) -> Manifest {
    let mut view = m.clone();
    for e in &mut view.segments {
        if e.score() < min_score {
            e.placements.clear();
        }
    }
    view
}

/// Serializes a JSON value with sorted keys, two-space indentation, and
/// floats fixed at three decimals.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => {
            out.push_str(&serde_json::to_string(value).expect("scalar serializes"));
        }
        Value::Number(n) => {
            if n.is_f64() {
                let _ = write!(out, "{:.3}", n.as_f64().unwrap_or_default());
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            newline(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                write_value(out, &map[k], depth + 1);
            }
            newline(out, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::{Rect, RenderStyle};
    use serde_json::json;

    pub(crate) fn sample() -> Manifest {
        let entry = |index: usize, score: u8| ManifestEntry {
            index,
            t_start: Millis(index as u64 * 1000),
            t_end: Millis(index as u64 * 1000 + 1500),
            text: format!("segment {index}"),
            imageability: Imageability {
                score,
                backend_id: "lexicon".into(),
                raw_response: String::new(),
            },
            keyphrases: vec![KeyphraseEntry {
                phrase: "segment".into(),
                span: Some(CharSpan { start: 0, end: 7 }),
            }],
            prompt: None,
            image: None,
            placements: vec![PlacedAugmentation {
                segment_index: index,
                kind: AugmentationKind::Keyphrase,
                rect: Rect::new(8, 8, 40, 13),
                asset_ref: "segment".into(),
                render_style: RenderStyle::Text {
                    color: "#ff0000".into(),
                    point_size: 9,
                },
            }],
            skip_reasons: vec![],
        };
        Manifest {
            schema_version: SCHEMA_VERSION,
            project_id: "demo".into(),
            frame_width: 320,
            frame_height: 180,
            duration: Millis(12_000),
            threshold: 5,
            global_summary: "s".into(),
            segments: vec![entry(0, 3), entry(1, 7), entry(2, 10)],
            metadata: GenerationMetadata {
                summary_backend: "offline-stub".into(),
                chat_backend: "offline-stub".into(),
                image_backend: "placeholder".into(),
                seed: 7,
                config_digest: "abc".into(),
                generated_at: Some("2026-01-01T00:00:00Z".into()),
            },
        }
    }

    #[test]
    fn canonical_form_sorts_keys_and_fixes_decimals() {
        let v = json!({"b": 1, "a": [1.5, {"z": null, "y": "q"}], "c": []});
        assert_eq!(
            to_canonical_string(&v),
            "{\n  \"a\": [\n    1.500,\n    {\n      \"y\": \"q\",\n      \"z\": null\n    }\n  ],\n  \"b\": 1,\n  \"c\": []\n}\n"
        );
    }

    #[test]
    fn round_trips_through_canonical_json() {
        let m = sample();
        let text = m.to_canonical_json(true);
        assert!(text.contains("\"t_end\": 1.500"));
        assert!(text.contains("generated_at"));
        assert_eq!(Manifest::from_json(&text).unwrap(), m);
        assert!(!m.to_canonical_json(false).contains("generated_at"));
    }

    #[test]
    fn schema_mismatch() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["schema_version"] = json!(2);
        assert!(matches!(
            Manifest::from_json(&v.to_string()),
            Err(ManifestError::SchemaMismatch { found: Some(2) })
        ));
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(matches!(
            Manifest::from_json(&v.to_string()),
            Err(ManifestError::SchemaMismatch { found: None })
        ));
    }

    #[test]
    fn rect_outside_frame_names_segment() {
        let mut m = sample();
        m.segments[1].placements[0].rect = Rect::new(300, 8, 40, 13);
        match m.validate() {
            Err(ManifestError::InvariantViolation { segment, field, .. }) => {
                assert_eq!(segment, Some(1));
                assert_eq!(field, "placements.rect");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn image_requires_score_above_threshold() {
        let mut m = sample();
        m.segments[0].image = Some("assets/images/seg_0000.png".into());
        assert!(matches!(
            m.validate(),
            Err(ManifestError::InvariantViolation { segment: Some(0), .. })
        ));
    }

    #[test]
    fn filter_view_examples() {
        let m = sample();
        assert_eq!(filter_view(&m, 1), m);
        let top = filter_view(&m, 10);
        let visible: Vec<bool> = top.segments.iter().map(|e| !e.placements.is_empty()).collect();
        assert_eq!(visible, vec![false, false, true]);
        assert_eq!(top.segments[0].text, m.segments[0].text);
        assert_eq!(filter_view(&filter_view(&m, 7), 4), filter_view(&m, 7));
    }
}
