//! Textual channel: global and local context assembly, sentence imageability
//! scoring, and keyphrase extraction.
//!
//! Every operation goes through a [`ChatBackend`] first and falls back to a
//! deterministic offline rule when the backend is offline, unreachable, or
//! answers with something unusable. The fallbacks make every result total.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::http::{extract_string, BackendError, JsonClient, RetryPolicy};
use crate::transcript::Transcript;

pub const SUMMARY_TEMPLATE: &str = include_str!("../assets/prompts/summary_v1.txt");
pub const IMAGEABILITY_TEMPLATE: &str = include_str!("../assets/prompts/imageability_v1.txt");
pub const KEYPHRASE_TEMPLATE: &str = include_str!("../assets/prompts/keyphrases_v1.txt");
const BUNDLED_LEXICON: &str = include_str!("../assets/lexicon/imageability.tsv");

pub const OFFLINE_STUB_ID: &str = "offline-stub";
pub const LEXICON_ID: &str = "lexicon";
pub const DEFAULT_LOCAL_WINDOW: usize = 5;
pub const DEFAULT_MAX_KEYPHRASES: usize = 3;
pub const DEFAULT_THRESHOLD: u8 = 5;
pub const SUMMARY_MAX_WORDS: usize = 150;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LanguageError {
    #[error("no integer between 1 and 10 in response {raw:?}")]
    UnparseableScore { raw: String },
    #[error("threshold must be between 1 and 10, got {0}")]
    InvalidThreshold(u8),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

/// A text-completion service. Implementations must be shareable across
/// worker threads.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Stand-in used with `--offline`: never answers, so every caller takes its
/// deterministic fallback path.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineChatBackend;

impl ChatBackend for OfflineChatBackend {
    fn id(&self) -> &str {
        OFFLINE_STUB_ID
    }

    fn complete(&self, _prompt: &str) -> Result<String, BackendError> {
        Err(BackendError::Offline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatBackendConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// JSON pointer to the completion text in the response body.
    pub response_pointer: String,
    pub retry: RetryPolicy,
}

impl Default for ChatBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "llama-3.1-8b-instruct".into(),
            temperature: 0.0,
            timeout_secs: 60,
            response_pointer: "/choices/0/message/content".into(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Chat-completion client: POSTs `{model, messages, temperature}`.
pub struct HttpChatBackend {
    id: String,
    client: JsonClient,
    config: ChatBackendConfig,
}

impl HttpChatBackend {
    pub fn new(config: ChatBackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::BadResponse("no chat endpoint configured".into()))?;
        let client = JsonClient::new(
            &endpoint,
            Duration::from_secs(config.timeout_secs),
            config.retry.clone(),
        )?;
        Ok(Self {
            id: format!("chat:{}", config.model),
            client,
            config,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let resp = self.client.post(&body)?;
        extract_string(&resp, &self.config.response_pointer)
    }
}

/// Context for one target segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub segment_index: usize,
    pub global_summary: String,
    /// Up to five preceding segment texts, oldest first.
    pub local_segments: Vec<String>,
    pub target_text: String,
}

impl ContextBundle {
    pub fn new(transcript: &Transcript, global_summary: &str, index: usize, window: usize) -> Self {
        Self {
            segment_index: index,
            global_summary: global_summary.to_string(),
            local_segments: local_context(transcript, index, window),
            target_text: transcript.segments()[index].text.clone(),
        }
    }

    /// Stable digest over every field, used for cache keys.
    pub fn digest(&self) -> String {
        let encoded = serde_json::to_string(self).expect("context serializes");
        sha256_hex(encoded)
    }

    pub fn render(&self, template: &str) -> String {
        let local = if self.local_segments.is_empty() {
            "(none)".to_string()
        } else {
            self.local_segments
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {}", i + 1, s))
                .collect::<Vec<_>>()
                .join("\n")
        };
        template
            .replace("{global_summary}", &self.global_summary)
            .replace("{local_context}", &local)
            .replace("{target}", &self.target_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub text: String,
    pub backend_id: String,
}

/// Whole-transcript summary of at most 150 words. Falls back to the offline
/// rule on any backend failure.
pub fn summarize_global(transcript: &Transcript, backend: &dyn ChatBackend) -> Summary {
    let full = transcript
        .segments()
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = SUMMARY_TEMPLATE.replace("{transcript}", &full);
    match backend.complete(&prompt) {
        Ok(text) if !text.trim().is_empty() => Summary {
            text: truncate_words(text.trim(), SUMMARY_MAX_WORDS),
            backend_id: backend.id().to_string(),
        },
        outcome => {
            if let Err(e) = outcome {
                tracing::debug!(error = %e, "summary backend failed; using offline stub");
            }
            Summary {
                text: stub_summary(transcript),
                backend_id: OFFLINE_STUB_ID.into(),
            }
        }
    }
}

/// First sentence of every tenth segment, joined, cut at 150 words.
pub fn stub_summary(transcript: &Transcript) -> String {
    let joined = transcript
        .segments()
        .iter()
        .step_by(10)
        .map(|s| first_sentence(&s.text))
        .collect::<Vec<_>>()
        .join(" ");
    truncate_words(&joined, SUMMARY_MAX_WORDS)
}

/// Text up to and including the first `.`, `!` or `?` that ends a word.
pub fn first_sentence(text: &str) -> &str {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if at_boundary {
                return &text[..i + c.len_utf8()];
            }
        }
    }
    text
}

pub fn truncate_words(text: &str, max_words: usize) -> String {
    text.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ")
}

/// Texts of segments `max(0, i-k)..i`, oldest first.
pub fn local_context(transcript: &Transcript, i: usize, k: usize) -> Vec<String> {
    let segs = transcript.segments();
    assert!(i < segs.len(), "segment index {i} out of range");
    segs[i.saturating_sub(k)..i].iter().map(|s| s.text.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageabilityRecord {
    pub segment_index: usize,
    pub score: u8,
    pub backend_id: String,
    pub raw_response: String,
}

/// Scores the target sentence 1..=10 with the backend, falling back to the
/// lexicon when the backend fails or its answer has no usable score.
pub fn assess_imageability(
    ctx: &ContextBundle,
    backend: &dyn ChatBackend,
    lexicon: &ImageabilityLexicon,
) -> ImageabilityRecord {
    let prompt = ctx.render(IMAGEABILITY_TEMPLATE);
    let raw = match backend.complete(&prompt) {
        Ok(raw) => match parse_llm_score(&raw) {
            Ok(score) => {
                return ImageabilityRecord {
                    segment_index: ctx.segment_index,
                    score,
                    backend_id: backend.id().to_string(),
                    raw_response: raw,
                }
            }
            Err(e) => {
                tracing::debug!(segment = ctx.segment_index, error = %e, "falling back to lexicon");
                raw
            }
        },
        Err(e) => {
            tracing::debug!(segment = ctx.segment_index, error = %e, "falling back to lexicon");
            String::new()
        }
    };
    ImageabilityRecord {
        segment_index: ctx.segment_index,
        score: lexicon_imageability(&ctx.target_text, lexicon),
        backend_id: LEXICON_ID.into(),
        raw_response: raw,
    }
}

/// First standalone integer token in 1..=10, scanning left to right. Digit
/// runs glued to letters, decimals, and negatives are not standalone.
pub fn parse_llm_score(response: &str) -> Result<u8, LanguageError> {
    let chars: Vec<char> = response.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before = start.checked_sub(1).map(|j| chars[j]);
        let before2 = start.checked_sub(2).map(|j| chars[j]);
        let after = chars.get(i).copied();
        let after2 = chars.get(i + 1).copied();
        let glued = before.is_some_and(char::is_alphanumeric) || after.is_some_and(char::is_alphanumeric);
        let decimal = (after == Some('.') && after2.is_some_and(|c| c.is_ascii_digit()))
            || (before == Some('.') && before2.is_some_and(|c| c.is_ascii_digit()));
        let negative = before == Some('-') && !before2.is_some_and(char::is_alphanumeric);
        if glued || decimal || negative {
            continue;
        }
        let token: String = chars[start..i].iter().collect();
        if let Ok(n) = token.parse::<u32>() {
            if (1..=10).contains(&n) {
                return Ok(n as u8);
            }
        }
    }
    Err(LanguageError::UnparseableScore {
        raw: response.to_string(),
    })
}

/// Word-level imageability scores for the offline fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageabilityLexicon {
    scores: HashMap<String, f64>,
    pub default_score: f64,
}

impl ImageabilityLexicon {
    pub fn new(scores: HashMap<String, f64>, default_score: f64) -> Result<Self, LanguageError> {
        let in_range = |v: f64| (1.0..=10.0).contains(&v);
        if !in_range(default_score) {
            return Err(LanguageError::Lexicon {
                line: 0,
                message: format!("default score {default_score} outside 1..10"),
            });
        }
        if let Some((w, s)) = scores.iter().find(|(_, s)| !in_range(**s)) {
            return Err(LanguageError::Lexicon {
                line: 0,
                message: format!("score {s} for {w:?} outside 1..10"),
            });
        }
        let scores = scores.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        Ok(Self { scores, default_score })
    }

    /// Parses `word<TAB>score` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, default_score: f64) -> Result<Self, LanguageError> {
        let mut scores = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| LanguageError::Lexicon { line: n + 1, message };
            let (word, score) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("expected word<TAB>score, got {line:?}")))?;
            let score: f64 = score.trim().parse().map_err(|_| err(format!("bad score {score:?}")))?;
            if !(1.0..=10.0).contains(&score) {
                return Err(err(format!("score {score} outside 1..10")));
            }
            scores.insert(word.trim().to_lowercase(), score);
        }
        Self::new(scores, default_score)
    }

    /// The lexicon shipped with the crate, default score 5.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON, 5.0).expect("bundled lexicon is valid")
    }

    pub fn score(&self, word: &str) -> f64 {
        self.scores.get(word).copied().unwrap_or(self.default_score)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Mean word score (unknown words take the default), rounded half up and
/// clamped to 1..=10.
pub fn lexicon_imageability(text: &str, lex: &ImageabilityLexicon) -> u8 {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect();
    let mean = if words.is_empty() {
        lex.default_score
    } else {
        words.iter().map(|w| lex.score(w)).sum::<f64>() / words.len() as f64
    };
    ((mean + 0.5).floor()).clamp(1.0, 10.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    /// Byte offsets into the segment text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyphrase {
    pub segment_index: usize,
    pub phrase: String,
    pub char_span: Option<CharSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyphraseResult {
    pub phrases: Vec<Keyphrase>,
    pub backend_id: String,
}

/// Common English function words, plus a few spoken fillers. Words shorter
/// than five characters never qualify anyway.
const STOPWORDS: &[&str] = &[
    "about",
    "above",
    "actually",
    "after",
    "again",
    "against",
    "almost",
    "along",
    "already",
    "also",
    "although",
    "always",
    "among",
    "another",
    "anyone",
    "anything",
    "around",
    "basically",
    "because",
    "become",
    "becomes",
    "before",
    "being",
    "below",
    "between",
    "beyond",
    "cannot",
    "could",
    "couldn't",
    "didn't",
    "doesn't",
    "doing",
    "during",
    "either",
    "enough",
    "especially",
    "every",
    "everyone",
    "everything",
    "first",
    "further",
    "going",
    "gonna",
    "having",
    "herself",
    "himself",
    "however",
    "itself",
    "little",
    "maybe",
    "might",
    "myself",
    "never",
    "nothing",
    "often",
    "other",
    "others",
    "otherwise",
    "ourselves",
    "perhaps",
    "pretty",
    "quite",
    "rather",
    "really",
    "right",
    "several",
    "should",
    "shouldn't",
    "since",
    "something",
    "sometimes",
    "somewhat",
    "still",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "therefore",
    "these",
    "thing",
    "things",
    "think",
    "those",
    "though",
    "through",
    "today",
    "together",
    "under",
    "until",
    "usually",
    "various",
    "wasn't",
    "whatever",
    "where",
    "whether",
    "which",
    "while",
    "whole",
    "whose",
    "within",
    "without",
    "would",
    "wouldn't",
    "yourself",
    "yourselves",
];

/// Keyphrases for the target sentence, at most `max_k`. Phrases are located
/// in the target text case-insensitively when possible.
pub fn extract_keyphrases(ctx: &ContextBundle, backend: &dyn ChatBackend, max_k: usize) -> KeyphraseResult {
    let prompt = ctx.render(KEYPHRASE_TEMPLATE).replace("{max_k}", &max_k.to_string());
    let from_backend = match backend.complete(&prompt) {
        Ok(raw) => parse_keyphrase_list(&raw, max_k),
        Err(e) => {
            tracing::debug!(segment = ctx.segment_index, error = %e, "keyphrase backend failed");
            Vec::new()
        }
    };
    let (phrases, backend_id) = if from_backend.is_empty() {
        (stub_keyphrases(&ctx.target_text, max_k), OFFLINE_STUB_ID.to_string())
    } else {
        (from_backend, backend.id().to_string())
    };
    KeyphraseResult {
        phrases: phrases
            .into_iter()
            .map(|phrase| Keyphrase {
                segment_index: ctx.segment_index,
                char_span: locate_case_insensitive(&ctx.target_text, &phrase),
                phrase,
            })
            .collect(),
        backend_id,
    }
}

/// Splits a model answer on newlines and commas, dropping bullets, list
/// numbering, and quotes.
pub fn parse_keyphrase_list(raw: &str, max_k: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.split(['\n', ','])
        .map(|item| {
            let item = item.trim().trim_start_matches(['-', '*', '•']).trim();
            let item = match item.split_once(['.', ')']) {
                Some((num, rest)) if !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()) => rest,
                _ => item,
            };
            item.trim().trim_matches(['"', '\'', '`']).trim().to_string()
        })
        .filter(|p| !p.is_empty() && seen.insert(p.to_lowercase()))
        .take(max_k)
        .collect()
}

/// The `max_k` longest distinct words of at least five characters that are
/// not stopwords, longest first, ties by first occurrence.
pub fn stub_keyphrases(text: &str, max_k: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words: Vec<(usize, &str)> = text
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\''))
        .filter(|w| w.chars().count() >= 5)
        .filter(|w| {
            let lower = w.to_lowercase();
            !STOPWORDS.contains(&lower.as_str()) && seen.insert(lower)
        })
        .enumerate()
        .collect();
    words.sort_by_key(|(pos, w)| (std::cmp::Reverse(w.chars().count()), *pos));
    words.into_iter().take(max_k).map(|(_, w)| w.to_string()).collect()
}

/// Byte span of the first case-insensitive occurrence of `needle`.
pub fn locate_case_insensitive(haystack: &str, needle: &str) -> Option<CharSpan> {
    if needle.is_empty() {
        return None;
    }
    for (start, _) in haystack.char_indices() {
        let mut hay = haystack[start..].char_indices();
        let mut end = None;
        let mut matched = true;
        for nc in needle.chars() {
            match hay.next() {
                Some((off, hc)) if hc.to_lowercase().eq(nc.to_lowercase()) => {
                    end = Some(start + off + hc.len_utf8());
                }
                _ => {
                    matched = false;
                    break;
                }
            }
        }
        if matched {
            return end.map(|end| CharSpan { start, end });
        }
    }
    None
}

/// Segment indices whose score is strictly above `threshold`, ascending.
pub fn filter_imageable(records: &[ImageabilityRecord], threshold: u8) -> Result<Vec<usize>, LanguageError> {
    if !(1..=10).contains(&threshold) {
        return Err(LanguageError::InvalidThreshold(threshold));
    }
    let mut out: Vec<usize> = records
        .iter()
        .filter(|r| r.score > threshold)
        .map(|r| r.segment_index)
        .collect();
    out.sort_unstable();
    Ok(out)
}
