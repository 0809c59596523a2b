//! Tweet ingestion: hashtag extraction with present/absent kinds, text
//! normalization, tokenization, vocabulary, low-resource sampling, and the
//! JSONL formats.
//!
//! Hashtag grammar: `#` followed by a maximal run of alphanumerics or
//! underscore, terminated by whitespace or punctuation. The trailing block is
//! the maximal suffix containing only hashtags and whitespace; hashtags there
//! are removed from the body entirely, while mid-tweet hashtags keep their
//! word. A lone `#` (no following run) is dropped from the body and breaks
//! the trailing block.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HashtagKind {
    Present,
    Absent,
}

/// One extracted hashtag. `span` is the byte interval of `#surface` in the
/// raw text and is kept only for hashtags that still appear in the body
/// (Present).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashtagRecord {
    pub surface: String,
    pub kind: HashtagKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
}

/// One post with its preprocessing results.
#[derive(Clone, Debug, PartialEq)]
pub struct Tweet {
    pub id: String,
    pub raw: String,
    pub processed: String,
    pub tokens: Vec<String>,
    pub hashtags: Vec<HashtagRecord>,
    pub label: Option<String>,
    pub split: Split,
}

/// Input record: `{"id", "raw", "label"?, "split"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawTweetRecord {
    pub id: String,
    pub raw: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub split: Split,
}

/// Preprocessed record: `{"id", "processed", "hashtags", "label"?}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub processed: String,
    pub hashtags: Vec<HashtagRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Training example for the generator: input tokens plus ordered targets.
#[derive(Clone, Debug)]
pub struct HashgenExample {
    pub tweet_id: String,
    pub input_tokens: Vec<String>,
    pub targets: Vec<HashtagRecord>,
}

// ---------------------------------------------------------------------------
// Hashtag extraction
// ---------------------------------------------------------------------------

fn is_tag_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

#[derive(Debug)]
struct TagMatch {
    start: usize, // byte index of '#'
    end: usize,   // byte index one past the last surface char
    surface: String,
}

fn find_tags(raw: &str) -> (Vec<TagMatch>, Vec<usize>) {
    let mut tags = Vec::new();
    let mut lone = Vec::new();
    let mut iter = raw.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c != '#' {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut surface = String::new();
        while let Some(&(j, d)) = iter.peek() {
            if is_tag_char(d) {
                surface.push(d);
                end = j + d.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        if surface.is_empty() {
            lone.push(i);
        } else {
            tags.push(TagMatch {
                start: i,
                end,
                surface,
            });
        }
    }
    (tags, lone)
}

/// Byte index where the trailing hashtag block starts (== `raw.len()` when
/// there is none): the maximal suffix made only of whitespace and hashtags.
fn trailing_block_start(raw: &str, tags: &[TagMatch]) -> usize {
    let bytes = raw.as_bytes();
    let mut pos = raw.len();
    loop {
        let mut q = pos;
        while q > 0 && (bytes[q - 1] as char).is_ascii_whitespace() {
            q -= 1;
        }
        if q == 0 {
            return 0;
        }
        match tags.iter().find(|t| t.end == q) {
            Some(t) => pos = t.start,
            None => return pos,
        }
    }
}

/// Split raw text into body text and hashtag records.
///
/// Mid-tweet hashtags lose their `#` but keep the word (Present); hashtags in
/// the trailing block are removed entirely and are Absent unless the same
/// surface also occurs in the remaining body. Hashtag-free input passes
/// through unchanged.
pub fn extract_hashtags(raw: &str) -> (String, Vec<HashtagRecord>) {
    let (tags, lone) = find_tags(raw);
    if tags.is_empty() && lone.is_empty() {
        return (raw.to_string(), Vec::new());
    }
    let block = trailing_block_start(raw, &tags);

    let mut processed = String::with_capacity(raw.len());
    let mut skip_hash_at: Vec<usize> = tags
        .iter()
        .filter(|t| t.start < block)
        .map(|t| t.start)
        .collect();
    skip_hash_at.extend(&lone);
    skip_hash_at.sort_unstable();
    let mut skip_iter = skip_hash_at.iter().peekable();
    for (i, c) in raw[..block].char_indices() {
        if let Some(&&s) = skip_iter.peek() {
            if s == i {
                skip_iter.next();
                continue;
            }
        }
        processed.push(c);
    }
    let processed = processed.trim_end().to_string();

    let records = tags
        .iter()
        .map(|t| {
            let kind = if t.start < block {
                HashtagKind::Present
            } else if matches_contiguous(&t.surface, &processed) {
                // Trailing surface that also occurs verbatim in the body.
                HashtagKind::Present
            } else {
                HashtagKind::Absent
            };
            let span = match kind {
                HashtagKind::Present => Some((t.start, t.end)),
                HashtagKind::Absent => None,
            };
            HashtagRecord {
                surface: t.surface.clone(),
                kind,
                span,
            }
        })
        .collect();
    (processed, records)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

fn core_bounds(token: &str) -> Option<(usize, usize)> {
    let start = token.char_indices().find(|&(_, c)| is_tag_char(c))?.0;
    let end = token
        .char_indices()
        .rev()
        .find(|&(_, c)| is_tag_char(c))
        .map(|(i, c)| i + c.len_utf8())?;
    Some((start, end))
}

/// Strip leading/trailing punctuation from a whitespace token.
pub fn token_core(token: &str) -> &str {
    match core_bounds(token) {
        Some((s, e)) => &token[s..e],
        None => "",
    }
}

fn normalize_token(token: &str) -> String {
    let lower = token.to_lowercase();
    if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
        return "URL".to_string();
    }
    if let Some(rest) = token.strip_prefix('@') {
        let word_len = rest.chars().take_while(|&c| is_tag_char(c)).count();
        if word_len > 0 {
            let cut: usize = rest
                .chars()
                .take(word_len)
                .map(|c| c.len_utf8())
                .sum();
            return format!("MENTION{}", &rest[cut..]);
        }
    }
    if let Some((s, e)) = core_bounds(token) {
        let core = &token[s..e];
        if !core.is_empty() && core.chars().all(|c| c.is_ascii_digit()) {
            return format!("{}DIGIT{}", &token[..s], &token[e..]);
        }
    }
    token.to_string()
}

/// Replace URLs with `URL`, @-mentions with `MENTION`, and standalone digit
/// runs with `DIGIT`. Applies after hashtag extraction; whitespace layout is
/// preserved.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let ws_len: usize = rest
            .chars()
            .take_while(|c| c.is_whitespace())
            .map(|c| c.len_utf8())
            .sum();
        out.push_str(&rest[..ws_len]);
        rest = &rest[ws_len..];
        if rest.is_empty() {
            break;
        }
        let tok_len: usize = rest
            .chars()
            .take_while(|c| !c.is_whitespace())
            .map(|c| c.len_utf8())
            .sum();
        out.push_str(&normalize_token(&rest[..tok_len]));
        rest = &rest[tok_len..];
    }
    out
}

// ---------------------------------------------------------------------------
// Tokenization and contiguous matching
// ---------------------------------------------------------------------------

/// Whitespace tokens of the processed text, lowercased.
pub fn tokenize(processed: &str) -> Vec<String> {
    processed
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercased punctuation-stripped token cores, empties dropped.
pub fn core_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(token_core)
        .filter(|c| !c.is_empty())
        .map(|c| c.to_lowercase())
        .collect()
}

/// Case-insensitive test of whether `surface` matches a contiguous token
/// sequence of `text` (on punctuation-stripped cores).
pub fn matches_contiguous(surface: &str, text: &str) -> bool {
    let needle = core_tokens(surface);
    if needle.is_empty() {
        return false;
    }
    let hay = core_tokens(text);
    if needle.len() > hay.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

// ---------------------------------------------------------------------------
// Preprocessing pipeline
// ---------------------------------------------------------------------------

/// Extraction followed by normalization. Kinds are re-derived against the
/// final body so the Present invariant survives normalization (a digit-only
/// surface, for example, no longer appears after `DIGIT` replacement).
pub fn preprocess(record: &RawTweetRecord) -> Tweet {
    let (extracted, mut hashtags) = extract_hashtags(&record.raw);
    let processed = normalize(&extracted);
    for tag in &mut hashtags {
        let present = matches_contiguous(&tag.surface, &processed);
        tag.kind = if present {
            HashtagKind::Present
        } else {
            HashtagKind::Absent
        };
        if tag.kind == HashtagKind::Absent {
            tag.span = None;
        }
    }
    let tokens = tokenize(&processed);
    Tweet {
        id: record.id.clone(),
        raw: record.raw.clone(),
        processed,
        tokens,
        hashtags,
        label: record.label.clone(),
        split: record.split,
    }
}

impl Tweet {
    pub fn from_record(rec: &TweetRecord, split: Split) -> Self {
        Tweet {
            id: rec.id.clone(),
            raw: String::new(),
            processed: rec.processed.clone(),
            tokens: tokenize(&rec.processed),
            hashtags: rec.hashtags.clone(),
            label: rec.label.clone(),
            split,
        }
    }

    pub fn to_record(&self) -> TweetRecord {
        TweetRecord {
            id: self.id.clone(),
            processed: self.processed.clone(),
            hashtags: self.hashtags.clone(),
            label: self.label.clone(),
        }
    }

    /// Generator targets: Present hashtags by span order, then Absent ones
    /// in their trailing order.
    pub fn ordered_targets(&self) -> Vec<&HashtagRecord> {
        let mut present: Vec<&HashtagRecord> = self
            .hashtags
            .iter()
            .filter(|h| h.kind == HashtagKind::Present)
            .collect();
        present.sort_by_key(|h| h.span.map(|s| s.0).unwrap_or(usize::MAX));
        let absent = self.hashtags.iter().filter(|h| h.kind == HashtagKind::Absent);
        present.into_iter().chain(absent).collect()
    }

    pub fn hashgen_example(&self) -> Option<HashgenExample> {
        if self.hashtags.is_empty() {
            return None;
        }
        Some(HashgenExample {
            tweet_id: self.id.clone(),
            input_tokens: self.tokens.clone(),
            targets: self.ordered_targets().into_iter().cloned().collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SEP: usize = 4;
pub const NUM_SPECIALS: usize = 5;
const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<bos>", "<eos>", "<sep>"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Tokens with corpus frequency >= `min_count`, ordered by descending
    /// frequency then lexicographically; five specials reserved at the low end.
    pub fn build<'a>(token_streams: impl Iterator<Item = &'a [String]>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in token_streams {
            for tok in stream {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < NUM_SPECIALS
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let body = serde_json::to_string(&self.tokens).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: 0,
            source: e,
        })?;
        std::fs::write(path, body).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let body = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let tokens: Vec<String> =
            serde_json::from_str(&body).map_err(|e| CorpusError::Malformed {
                path: path.display().to_string(),
                line: 1,
                source: e,
            })?;
        Ok(Self::from_tokens(tokens))
    }
}

// ---------------------------------------------------------------------------
// Low-resource sampling
// ---------------------------------------------------------------------------

/// Size-tiered subsample size: 10% below 5000 items, 5% from 5000 to 10000,
/// 1% above 10000, floored (computed in integer arithmetic).
pub fn low_resource_size(n: usize) -> usize {
    if n < 5000 {
        n / 10
    } else if n <= 10000 {
        n / 20
    } else {
        n / 100
    }
}

/// Uniform sample without replacement of `low_resource_size(n)` items,
/// deterministic given the seed; preserves original order.
pub fn sample_low_resource<T: Clone>(items: &[T], seed: u64) -> Result<Vec<T>, CorpusError> {
    if items.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let k = low_resource_size(items.len());
    let mut rng = numcore::init::seeded_rng(seed, "low-resource-sample");
    let mut indices: Vec<usize> = (0..items.len()).collect();
    for i in 0..k {
        let j = rand::Rng::gen_range(&mut rng, i..items.len());
        indices.swap(i, j);
    }
    let mut chosen: Vec<usize> = indices[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}

// ---------------------------------------------------------------------------
// JSONL i/o
// ---------------------------------------------------------------------------

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            source: e,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut file = File::create(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: 0,
            source: e,
        })?;
        writeln!(file, "{line}").map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}
