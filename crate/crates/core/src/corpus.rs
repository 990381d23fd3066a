//! Entity-annotated corpus ingestion.
//!
//! The corpus is line-oriented JSON: one sentence per line, with tokens and
//! typed mention spans over token indices:
//!
//! ```text
//! {"tokens": ["We", "need", "to", "pay", "Illinois", "sales", "tax", "."],
//!  "mentions": [{"start": 4, "end": 5, "type": "LOCATION"}]}
//! ```
//!
//! Every mention is turned into a [`MentionRecord`]: the canonical
//! [`EntityId`], six skip-gram features and one coarse-type feature.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token that pads the left edge of a sentence in skip-grams.
pub const SENTENCE_START: &str = "⟨S⟩";
/// Token that pads the right edge of a sentence in skip-grams.
pub const SENTENCE_END: &str = "⟨/S⟩";
/// Placeholder standing in for the entity inside a skip-gram.
pub const PLACEHOLDER: &str = "__";

/// (left, right) context lengths of the skip-grams extracted per mention.
pub const SKIPGRAM_SHAPES: [(usize, usize); 6] = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)];

/// Canonical entity key: lowercased surface with whitespace runs collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    /// Normalizes `surface`. Fails when nothing but whitespace remains.
    pub fn new(surface: &str) -> Result<Self> {
        normalize_mention(surface)
    }

    /// Wraps an already-canonical string (index loading, fixtures).
    pub(crate) fn from_canonical(canonical: String) -> Self {
        EntityId(canonical)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase and collapse whitespace. No lemmatization.
pub fn normalize_mention(surface: &str) -> Result<EntityId> {
    let lowered = surface.to_lowercase();
    let canonical = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if canonical.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(EntityId(canonical))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Skipgram,
    Type,
}

/// A context feature, stored as its serialized key.
///
/// Keys are `S:` followed by the space-joined escaped left tokens, the
/// placeholder `__` and the escaped right tokens, or `T:` followed by the raw
/// type name. Escaping maps `\` to `\\`, space to `\s`, `_` to `\u` and the
/// empty token to `\e`, so a raw `__` can only be the placeholder and the
/// encoding is injective. Ordering and hashing follow the key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContextFeature(String);

impl ContextFeature {
    pub fn skipgram<L, R>(left: &[L], right: &[R]) -> Result<Self>
    where
        L: AsRef<str>,
        R: AsRef<str>,
    {
        if left.is_empty() && right.is_empty() {
            return Err(Error::FeatureKey(
                "skip-gram needs a token on at least one side".into(),
            ));
        }
        let mut key = String::from("S:");
        for tok in left {
            escape_token(tok.as_ref(), &mut key);
            key.push(' ');
        }
        key.push_str(PLACEHOLDER);
        for tok in right {
            key.push(' ');
            escape_token(tok.as_ref(), &mut key);
        }
        Ok(ContextFeature(key))
    }

    pub fn coarse_type(name: &str) -> Result<Self> {
        if name.is_empty() {
            return Err(Error::FeatureKey("type name is empty".into()));
        }
        Ok(ContextFeature(format!("T:{name}")))
    }

    /// Parses a serialized key, rejecting anything [`key`](Self::key) could not produce.
    pub fn from_key(key: &str) -> Result<Self> {
        if let Some(name) = key.strip_prefix("T:") {
            return Self::coarse_type(name);
        }
        if key.starts_with("S:") {
            let (left, right) = parse_skipgram_key(key)?;
            let rebuilt = Self::skipgram(&left, &right)?;
            if rebuilt.0 != key {
                return Err(Error::FeatureKey(key.to_string()));
            }
            return Ok(rebuilt);
        }
        Err(Error::FeatureKey(key.to_string()))
    }

    pub fn key(&self) -> &str {
        &self.0
    }

    pub fn kind(&self) -> FeatureKind {
        if self.0.starts_with("T:") {
            FeatureKind::Type
        } else {
            FeatureKind::Skipgram
        }
    }

    pub fn type_name(&self) -> Option<&str> {
        self.0.strip_prefix("T:")
    }

    pub fn skipgram_parts(&self) -> Option<(Vec<String>, Vec<String>)> {
        match self.kind() {
            FeatureKind::Type => None,
            FeatureKind::Skipgram => parse_skipgram_key(&self.0).ok(),
        }
    }
}

impl fmt::Display for ContextFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.skipgram_parts() {
            Some((left, right)) => {
                let mut parts: Vec<&str> = left.iter().map(String::as_str).collect();
                parts.push(PLACEHOLDER);
                parts.extend(right.iter().map(String::as_str));
                f.write_str(&parts.join(" "))
            }
            None => write!(f, "TYPE:{}", self.type_name().unwrap_or_default()),
        }
    }
}

impl TryFrom<String> for ContextFeature {
    type Error = Error;

    fn try_from(key: String) -> Result<Self> {
        ContextFeature::from_key(&key)
    }
}

impl From<ContextFeature> for String {
    fn from(feature: ContextFeature) -> String {
        feature.0
    }
}

fn escape_token(token: &str, out: &mut String) {
    if token.is_empty() {
        out.push_str("\\e");
        return;
    }
    for ch in token.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '_' => out.push_str("\\u"),
            c => out.push(c),
        }
    }
}

fn unescape_token(escaped: &str) -> Option<String> {
    if escaped == "\\e" {
        return Some(String::new());
    }
    if escaped.is_empty() {
        return None;
    }
    let mut out = String::with_capacity(escaped.len());
    let mut chars = escaped.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => match chars.next()? {
                '\\' => out.push('\\'),
                's' => out.push(' '),
                'u' => out.push('_'),
                _ => return None,
            },
            '_' | ' ' => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

fn parse_skipgram_key(key: &str) -> Result<(Vec<String>, Vec<String>)> {
    let bad = || Error::FeatureKey(key.to_string());
    let body = key.strip_prefix("S:").ok_or_else(bad)?;
    let parts: Vec<&str> = body.split(' ').collect();
    let holes: Vec<usize> = (0..parts.len())
        .filter(|&i| parts[i] == PLACEHOLDER)
        .collect();
    let [hole] = holes[..] else {
        return Err(bad());
    };
    let unescape_all = |slice: &[&str]| -> Result<Vec<String>> {
        slice
            .iter()
            .map(|p| unescape_token(p).ok_or_else(bad))
            .collect()
    };
    Ok((
        unescape_all(&parts[..hole])?,
        unescape_all(&parts[hole + 1..])?,
    ))
}

/// One typed mention: tokens `start..end` of its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub coarse_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

impl AnnotatedSentence {
    /// Checks span bounds, span overlap and non-empty types.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.mentions.len());
        for (i, m) in self.mentions.iter().enumerate() {
            if m.start >= m.end {
                return Err(format!("mention {i}: empty span {}..{}", m.start, m.end));
            }
            if m.end > self.tokens.len() {
                return Err(format!(
                    "mention {i}: span {}..{} exceeds {} tokens",
                    m.start,
                    m.end,
                    self.tokens.len()
                ));
            }
            if m.coarse_type.is_empty() {
                return Err(format!("mention {i}: empty type"));
            }
            if self.surface(i).trim().is_empty() {
                return Err(format!("mention {i}: blank surface"));
            }
            spans.push((m.start, m.end));
        }
        spans.sort_unstable();
        if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(format!("overlapping mentions {:?} and {:?}", w[0], w[1]));
        }
        Ok(())
    }

    /// Surface string of mention `index`: its tokens joined by spaces.
    pub fn surface(&self, index: usize) -> String {
        let m = &self.mentions[index];
        self.tokens[m.start..m.end].join(" ")
    }
}

/// Streaming reader over the line-oriented corpus format.
///
/// Malformed lines come out as [`Error::MalformedLine`] and reading
/// continues; an I/O error is yielded once and ends the stream. Blank lines
/// are skipped.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    malformed: usize,
    failed: bool,
}

/// Reads sentences from `input` in file order.
pub fn parse_corpus<R: BufRead>(input: R) -> CorpusReader<R> {
    CorpusReader {
        lines: input.lines(),
        line_no: 0,
        malformed: 0,
        failed: false,
    }
}

impl<R> CorpusReader<R> {
    /// Number of malformed lines seen so far.
    pub fn malformed_lines(&self) -> usize {
        self.malformed
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<AnnotatedSentence>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Io(e)));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<AnnotatedSentence>(&line)
                .map_err(|e| e.to_string())
                .and_then(|s| s.validate().map(|()| s));
            return Some(match parsed {
                Ok(sentence) => Ok(sentence),
                Err(message) => {
                    self.malformed += 1;
                    Err(Error::MalformedLine {
                        line: self.line_no,
                        message,
                    })
                }
            });
        }
    }
}

/// The skip-grams of mention `index`, one per entry of [`SKIPGRAM_SHAPES`].
///
/// Context running past either end of the sentence is padded with
/// [`SENTENCE_START`] / [`SENTENCE_END`].
pub fn extract_skipgrams(sentence: &AnnotatedSentence, index: usize) -> Vec<ContextFeature> {
    let mention = &sentence.mentions[index];
    let tokens = &sentence.tokens;
    let mut out: Vec<ContextFeature> = Vec::with_capacity(SKIPGRAM_SHAPES.len());
    for &(left_len, right_len) in &SKIPGRAM_SHAPES {
        let left: Vec<&str> = (0..left_len)
            .rev()
            .map(|back| {
                mention
                    .start
                    .checked_sub(back + 1)
                    .map_or(SENTENCE_START, |i| tokens[i].as_str())
            })
            .collect();
        let right: Vec<&str> = (0..right_len)
            .map(|fwd| {
                tokens
                    .get(mention.end + fwd)
                    .map_or(SENTENCE_END, String::as_str)
            })
            .collect();
        let feature =
            ContextFeature::skipgram(&left, &right).expect("skip-gram shapes have non-empty sides");
        if !out.contains(&feature) {
            out.push(feature);
        }
    }
    out
}

/// An entity occurrence with the context features it contributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionRecord {
    pub entity: EntityId,
    pub features: Vec<ContextFeature>,
}

/// Records for every mention of one (validated) sentence.
pub fn sentence_mentions(sentence: &AnnotatedSentence) -> Result<Vec<MentionRecord>> {
    (0..sentence.mentions.len())
        .map(|i| {
            let entity = normalize_mention(&sentence.surface(i))?;
            let mut features = extract_skipgrams(sentence, i);
            features.push(ContextFeature::coarse_type(
                &sentence.mentions[i].coarse_type,
            )?);
            Ok(MentionRecord { entity, features })
        })
        .collect()
}

/// Flattens a sentence stream into mention records, passing errors through.
pub fn mention_stream<I>(sentences: I) -> impl Iterator<Item = Result<MentionRecord>>
where
    I: IntoIterator<Item = Result<AnnotatedSentence>>,
{
    sentences.into_iter().flat_map(|sentence| {
        let records: Vec<Result<MentionRecord>> = match sentence.and_then(|s| sentence_mentions(&s))
        {
            Ok(records) => records.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e)],
        };
        records
    })
}
