//! Timed transcripts: SRT and WebVTT parsing, normalization, and canonical
//! SRT serialization.
//!
//! Times are stored as integer milliseconds so that a parse/serialize round
//! trip is exact. Cue text is normalized on construction: markup spans are
//! removed and whitespace is collapsed to single spaces.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("malformed timestamp on line {line}: {content:?}")]
    MalformedTimestamp { line: usize, content: String },
    #[error("cue on line {line} ends before it starts: {content:?}")]
    InvertedInterval { line: usize, content: String },
    #[error("transcript contains no cues")]
    EmptyTranscript,
    #[error("missing WEBVTT header")]
    MissingHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceFormat {
    Srt,
    WebVtt,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceFormat::Srt => f.write_str("srt"),
            SourceFormat::WebVtt => f.write_str("webvtt"),
        }
    }
}

/// One timed caption unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

impl TranscriptSegment {
    pub fn t_start(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn t_end(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    segments: Vec<TranscriptSegment>,
    source_format: SourceFormat,
}

/// A cue as read from a file, before ordering and re-indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCue {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

impl Transcript {
    /// Builds a transcript from raw cues: normalizes text, drops cues whose
    /// text is empty after normalization, sorts by (start, end, input order)
    /// and re-indexes from zero.
    pub fn from_cues(
        cues: impl IntoIterator<Item = RawCue>,
        source_format: SourceFormat,
    ) -> Result<Self, TranscriptError> {
        let mut kept: Vec<RawCue> = Vec::new();
        for cue in cues {
            if cue.start_ms >= cue.end_ms {
                return Err(TranscriptError::InvertedInterval {
                    line: 0,
                    content: format!(
                        "{} --> {}",
                        format_timestamp(cue.start_ms, ','),
                        format_timestamp(cue.end_ms, ',')
                    ),
                });
            }
            let text = normalize_text(&cue.text);
            if !text.is_empty() {
                kept.push(RawCue { text, ..cue });
            }
        }
        if kept.is_empty() {
            return Err(TranscriptError::EmptyTranscript);
        }
        // stable sort keeps file order for identical intervals
        kept.sort_by_key(|c| (c.start_ms, c.end_ms));
        let segments = kept
            .into_iter()
            .enumerate()
            .map(|(index, c)| TranscriptSegment {
                index,
                start_ms: c.start_ms,
                end_ms: c.end_ms,
                text: c.text,
            })
            .collect();
        Ok(Self {
            segments,
            source_format,
        })
    }

    pub fn segments(&self) -> &[TranscriptSegment] {
        &self.segments
    }

    pub fn source_format(&self) -> SourceFormat {
        self.source_format
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// End time of the last-ending cue, in milliseconds.
    pub fn end_ms(&self) -> u64 {
        self.segments.iter().map(|s| s.end_ms).max().unwrap_or(0)
    }

    /// Re-applies normalization. Identity on any transcript built by this module.
    pub fn normalized(&self) -> Result<Self, TranscriptError> {
        Self::from_cues(
            self.segments.iter().map(|s| RawCue {
                start_ms: s.start_ms,
                end_ms: s.end_ms,
                text: s.text.clone(),
            }),
            self.source_format,
        )
    }
}

/// Parses a transcript, picking the format from the content: files starting
/// with a `WEBVTT` header are read as WebVTT, everything else as SRT.
pub fn parse_auto(raw: &str) -> Result<Transcript, TranscriptError> {
    if strip_bom(raw).starts_with("WEBVTT") {
        parse_vtt(raw)
    } else {
        parse_srt(raw)
    }
}

pub fn parse_srt(raw: &str) -> Result<Transcript, TranscriptError> {
    let lines = split_lines(strip_bom(raw));
    let mut cues = Vec::new();
    for block in blocks(&lines) {
        let mut rest = block;
        let (first_no, first) = rest[0];
        if !first.contains("-->") {
            if first.trim().chars().all(|c| c.is_ascii_digit()) && rest.len() > 1 {
                rest = &rest[1..];
            } else {
                return Err(TranscriptError::MalformedTimestamp {
                    line: first_no,
                    content: first.to_string(),
                });
            }
        }
        let (line_no, timing) = rest[0];
        let (start_ms, end_ms) = parse_timing(timing, line_no, Dialect::Srt)?;
        let text = rest[1..].iter().map(|(_, l)| *l).collect::<Vec<_>>().join(" ");
        cues.push(RawCue { start_ms, end_ms, text });
    }
    Transcript::from_cues(cues, SourceFormat::Srt)
}

pub fn parse_vtt(raw: &str) -> Result<Transcript, TranscriptError> {
    let body = strip_bom(raw);
    let lines = split_lines(body);
    let header_ok = lines.first().is_some_and(|(_, l)| {
        l.strip_prefix("WEBVTT")
            .is_some_and(|rest| rest.is_empty() || rest.starts_with([' ', '\t']))
    });
    if !header_ok {
        return Err(TranscriptError::MissingHeader);
    }
    let mut cues = Vec::new();
    // first block is the header (plus any header metadata lines)
    for block in blocks(&lines).into_iter().skip(1) {
        let (first_no, first) = block[0];
        if is_vtt_keyword_block(first) {
            continue;
        }
        let rest = if first.contains("-->") {
            block
        } else if block.len() > 1 && block[1].1.contains("-->") {
            // cue identifier line
            &block[1..]
        } else {
            return Err(TranscriptError::MalformedTimestamp {
                line: first_no,
                content: first.to_string(),
            });
        };
        let (line_no, timing) = rest[0];
        let (start_ms, end_ms) = parse_timing(timing, line_no, Dialect::Vtt)?;
        let text = rest[1..].iter().map(|(_, l)| *l).collect::<Vec<_>>().join(" ");
        cues.push(RawCue {
            start_ms,
            end_ms,
            text: decode_vtt_entities(&text),
        });
    }
    Transcript::from_cues(cues, SourceFormat::WebVtt)
}

/// Canonical SRT: 1-based numbering, comma separator, LF line endings.
pub fn serialize_srt(t: &Transcript) -> String {
    let mut out = String::new();
    for (n, seg) in t.segments.iter().enumerate() {
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n\n",
            n + 1,
            format_timestamp(seg.start_ms, ','),
            format_timestamp(seg.end_ms, ','),
            seg.text
        );
    }
    out
}

pub fn format_timestamp(ms: u64, sep: char) -> String {
    let hours = ms / 3_600_000;
    let minutes = (ms / 60_000) % 60;
    let seconds = (ms / 1000) % 60;
    let millis = ms % 1000;
    format!("{hours:02}:{minutes:02}:{seconds:02}{sep}{millis:03}")
}

/// Strips `<...>` markup spans, collapses whitespace. Repeats until stable so
/// that the result is a fixpoint (spans exposed by a removal are removed too).
pub fn normalize_text(text: &str) -> String {
    let mut current: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let stripped = strip_tags(&current);
        let next = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
        if next == current {
            return next;
        }
        current = next;
    }
}

/// Removes every `<...>` span whose body is non-empty and contains neither
/// `<` nor `>`. Unclosed or empty brackets are kept as literal text.
fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find(['<', '>']) {
            Some(close) if close > 0 && after.as_bytes()[close] == b'>' => {
                rest = &after[close + 1..];
            }
            _ => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_vtt_entities(text: &str) -> String {
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&nbsp;", " ")
        .replace("&lrm;", "")
        .replace("&rlm;", "")
        .replace("&amp;", "&")
}

fn is_vtt_keyword_block(first: &str) -> bool {
    ["NOTE", "STYLE", "REGION"].iter().any(|kw| {
        first
            .strip_prefix(kw)
            .is_some_and(|rest| rest.is_empty() || rest.starts_with([' ', '\t']))
    })
}

fn strip_bom(raw: &str) -> &str {
    raw.strip_prefix('\u{feff}').unwrap_or(raw)
}

/// Lines paired with their 1-based line numbers, CR stripped.
fn split_lines(raw: &str) -> Vec<(usize, &str)> {
    raw.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .collect()
}

/// Groups lines into blank-line separated blocks.
fn blocks<'a, 'b>(lines: &'b [(usize, &'a str)]) -> Vec<&'b [(usize, &'a str)]> {
    lines
        .split(|(_, l)| l.trim().is_empty())
        .filter(|b| !b.is_empty())
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dialect {
    Srt,
    Vtt,
}

fn parse_timing(line: &str, line_no: usize, dialect: Dialect) -> Result<(u64, u64), TranscriptError> {
    let malformed = || TranscriptError::MalformedTimestamp {
        line: line_no,
        content: line.to_string(),
    };
    let (left, right) = line.split_once("-->").ok_or_else(malformed)?;
    // anything after the end timestamp (cue settings, SRT coordinates) is dropped
    let right = right.split_whitespace().next().ok_or_else(malformed)?;
    let start = parse_timestamp(left.trim(), dialect).ok_or_else(malformed)?;
    let end = parse_timestamp(right, dialect).ok_or_else(malformed)?;
    if start >= end {
        return Err(TranscriptError::InvertedInterval {
            line: line_no,
            content: line.to_string(),
        });
    }
    Ok((start, end))
}

fn parse_timestamp(s: &str, dialect: Dialect) -> Option<u64> {
    let (clock, millis) = match dialect {
        Dialect::Srt => s.rsplit_once([',', '.'])?,
        Dialect::Vtt => s.rsplit_once('.')?,
    };
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let (h, m, sec) = match (dialect, parts.as_slice()) {
        (_, [h, m, s]) => (*h, *m, *s),
        (Dialect::Vtt, [m, s]) => ("0", *m, *s),
        _ => return None,
    };
    let num = |p: &str, exact_two: bool| -> Option<u64> {
        if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) || (exact_two && p.len() != 2) {
            return None;
        }
        p.parse().ok()
    };
    let h = num(h, false)?;
    let m = num(m, true)?;
    let sec = num(sec, true)?;
    if m >= 60 || sec >= 60 {
        return None;
    }
    let ms: u64 = millis.parse().ok()?;
    h.checked_mul(3_600_000)?.checked_add((m * 60 + sec) * 1000 + ms)
}
