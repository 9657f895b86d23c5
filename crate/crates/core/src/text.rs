//! Text primitives: tokens, sentences, labeled datasets, frequency tables.
//!
//! Tokenization is whitespace splitting plus punctuation detachment. It
//! lowercases everything (victim models are uncased), detaches leading and
//! trailing ASCII punctuation as standalone tokens, splits on sentence
//! punctuation inside a chunk, and keeps intra-word apostrophes so that
//! contractions like `you're` stay one token. The inverse join is canonical
//! and re-tokenizes to the same sentence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Punctuation marks that are split off even in the middle of a chunk.
const INTERNAL_MARKS: [char; 10] = [',', '.', '!', '?', ';', ':', '"', '\'', '(', ')'];

/// A single lowercased token. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    /// Builds a token, lowercasing the input. Rejects empty strings and
    /// strings containing whitespace.
    pub fn new(raw: impl AsRef<str>) -> Result<Self> {
        let lowered = raw.as_ref().to_lowercase();
        if lowered.is_empty() {
            return Err(Error::invalid("empty token"));
        }
        if lowered.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("token {lowered:?} contains whitespace")));
        }
        Ok(Token(lowered))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when every character is ASCII punctuation.
    pub fn is_punctuation(&self) -> bool {
        !self.0.is_empty() && self.0.chars().all(|c| c.is_ascii_punctuation())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Token::new(raw).map_err(serde::de::Error::custom)
    }
}

/// An ordered list of tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence(Vec<Token>);

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.0.iter()
    }
}

impl From<Vec<Token>> for Sentence {
    fn from(tokens: Vec<Token>) -> Self {
        Sentence(tokens)
    }
}

impl FromIterator<Token> for Sentence {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        Sentence(iter.into_iter().collect())
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&detokenize(self))
    }
}

/// Class index. Labels are dense small integers starting at 0.
pub type LabelId = usize;

/// One classified sentence, with a flag marking injected poison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub sentence: Sentence,
    pub label: LabelId,
    #[serde(default)]
    pub poisoned: bool,
}

impl LabeledExample {
    pub fn clean(sentence: Sentence, label: LabelId) -> Self {
        LabeledExample { sentence, label, poisoned: false }
    }
}

/// Which partition a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        };
        f.write_str(name)
    }
}

/// A labeled corpus with a declared class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    split: SplitTag,
}

impl Dataset {
    /// Builds a dataset, checking that at least two classes are declared and
    /// every label is in range. The example list itself may be empty.
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize, split: SplitTag) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "a dataset needs at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(bad) = examples.iter().find(|e| e.label >= num_classes) {
            return Err(Error::invalid(format!(
                "label {} out of range for {} classes",
                bad.label, num_classes
            )));
        }
        Ok(Dataset { examples, num_classes, split })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }
}

/// Absolute token counts over a corpus sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<Token, u64>,
    total_tokens: u64,
}

impl FrequencyTable {
    /// Builds a table from raw counts; zero counts are rejected.
    pub fn from_counts(counts: BTreeMap<Token, u64>) -> Result<Self> {
        if counts.values().any(|&c| c == 0) {
            return Err(Error::invalid("frequency table contains a zero count"));
        }
        let total_tokens = counts.values().sum();
        Ok(FrequencyTable { counts, total_tokens })
    }

    /// Count for a token, 0 when unseen.
    pub fn freq(&self, token: &Token) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &Token> {
        self.counts.keys()
    }

    pub fn counts(&self) -> &BTreeMap<Token, u64> {
        &self.counts
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }
}

/// Splits `text` into lowercased tokens.
///
/// Each whitespace chunk loses leading and trailing ASCII punctuation to
/// standalone tokens; the remaining core is further split at sentence marks
/// (`, . ! ? ; : " ' ( )`), except apostrophes flanked by letters.
pub fn tokenize(text: &str) -> Sentence {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        split_chunk(chunk, &mut tokens);
    }
    Sentence(tokens)
}

fn split_chunk(chunk: &str, out: &mut Vec<Token>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    let mut end = chars.len();

    while start < end && chars[start].is_ascii_punctuation() {
        out.push(Token(chars[start].to_string()));
        start += 1;
    }
    let mut tail = Vec::new();
    while end > start && chars[end - 1].is_ascii_punctuation() {
        tail.push(Token(chars[end - 1].to_string()));
        end -= 1;
    }

    let mut segment = String::new();
    for idx in start..end {
        let c = chars[idx];
        let splits_here = INTERNAL_MARKS.contains(&c)
            && !(c == '\''
                && idx > start
                && idx + 1 < end
                && chars[idx - 1].is_alphabetic()
                && chars[idx + 1].is_alphabetic());
        if splits_here {
            if !segment.is_empty() {
                out.push(Token(std::mem::take(&mut segment)));
            }
            out.push(Token(c.to_string()));
        } else {
            segment.push(c);
        }
    }
    if !segment.is_empty() {
        out.push(Token(segment));
    }

    out.extend(tail.into_iter().rev());
}

/// Joins tokens back into text: single spaces everywhere, except that a
/// closing parenthesis attaches to the preceding token. The output
/// re-tokenizes to the same sentence.
pub fn detokenize(sentence: &Sentence) -> String {
    let mut out = String::new();
    for (i, token) in sentence.iter().enumerate() {
        if i > 0 && token.as_str() != ")" {
            out.push(' ');
        }
        out.push_str(token.as_str());
    }
    out
}

/// On-disk encodings understood by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One JSON object per line: `{"text", "label", "poisoned"?}`, with an
    /// optional leading header object `{"num_classes", "split"?}`.
    Jsonl,
    /// Two tab-separated columns `text<TAB>label`, no header.
    Tsv,
}

#[derive(Deserialize)]
struct JsonlHeader {
    num_classes: usize,
    #[serde(default)]
    split: Option<SplitTag>,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    text: String,
    label: i64,
    #[serde(default, skip_serializing_if = "is_false")]
    poisoned: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Loads a dataset. Without a declared header the class count is inferred as
/// one plus the maximum observed label; the split tag defaults to `train`.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let file = fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut declared: Option<JsonlHeader> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (text, label, poisoned) = match format {
            DatasetFormat::Jsonl => {
                if idx == 0 {
                    if let Ok(header) = serde_json::from_str::<JsonlHeader>(&line) {
                        declared = Some(header);
                        continue;
                    }
                }
                let record: JsonlRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::malformed(line_no, e.to_string()))?;
                (record.text, record.label, record.poisoned)
            }
            DatasetFormat::Tsv => {
                let mut cols = line.rsplitn(2, '\t');
                let label_col = cols.next().unwrap_or_default();
                let text_col = cols
                    .next()
                    .ok_or_else(|| Error::malformed(line_no, "expected text<TAB>label"))?;
                let label: i64 = label_col.trim().parse().map_err(|_| {
                    Error::malformed(line_no, format!("label {label_col:?} is not an integer"))
                })?;
                (text_col.to_string(), label, false)
            }
        };
        if label < 0 {
            return Err(Error::malformed(line_no, format!("negative label {label}")));
        }
        let label = label as usize;
        if let Some(header) = &declared {
            if label >= header.num_classes {
                return Err(Error::malformed(
                    line_no,
                    format!("label {label} out of range for {} classes", header.num_classes),
                ));
            }
        }
        examples.push(LabeledExample { sentence: tokenize(&text), label, poisoned });
    }

    let (num_classes, split) = match declared {
        Some(header) => (header.num_classes, header.split.unwrap_or(SplitTag::Train)),
        None => {
            let max = examples
                .iter()
                .map(|e| e.label)
                .max()
                .ok_or_else(|| Error::invalid("dataset file contains no records"))?;
            (max + 1, SplitTag::Train)
        }
    };
    Dataset::new(examples, num_classes, split)
}

/// Saves a dataset as JSONL with a header line, so a reload reproduces the
/// same `Dataset` value (class count and split tag included).
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "{}",
        serde_json::json!({ "num_classes": dataset.num_classes(), "split": dataset.split() })
    )?;
    for example in dataset.iter() {
        let record = JsonlRecord {
            text: detokenize(&example.sentence),
            label: example.label as i64,
            poisoned: example.poisoned,
        };
        writeln!(buf, "{}", serde_json::to_string(&record)?)?;
    }
    crate::fsutil::atomic_write(path.as_ref(), &buf)
}

/// Deterministically shuffles and partitions a dataset into train/valid/test.
///
/// Validation and test sizes are floors of their ratios; the remainder goes
/// to train. Ratios must be positive and sum to 1 within 1e-9.
pub fn split_dataset(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (r_train, r_valid, r_test) = ratios;
    if !(r_train > 0.0 && r_valid > 0.0 && r_test > 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((r_train + r_valid + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split ratios must sum to 1"));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(Error::invalid(format!("cannot split {n} examples three ways")));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng::stream(seed));

    let n_valid = floor_snapped(r_valid * n as f64);
    let n_test = floor_snapped(r_test * n as f64);
    let n_train = n - n_valid - n_test;

    let take = |range: std::ops::Range<usize>, split: SplitTag| -> Result<Dataset> {
        let examples = indices[range].iter().map(|&i| dataset.examples[i].clone()).collect();
        Dataset::new(examples, dataset.num_classes(), split)
    };
    Ok((
        take(0..n_train, SplitTag::Train)?,
        take(n_train..n_train + n_valid, SplitTag::Valid)?,
        take(n_train + n_valid..n, SplitTag::Test)?,
    ))
}

// Floor that first snaps products lying within 1e-9 of an integer, so ratio
// arithmetic like 0.7 · 10 cannot lose a slot to floating-point error.
fn floor_snapped(x: f64) -> usize {
    let snapped = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.floor() };
    snapped as usize
}

/// Counts token occurrences over a seeded random subset of `sample_size`
/// examples drawn without replacement. Intended for clean training data.
pub fn token_frequencies(dataset: &Dataset, sample_size: usize, seed: u64) -> Result<FrequencyTable> {
    if sample_size == 0 {
        return Err(Error::invalid("sample_size must be positive"));
    }
    if sample_size > dataset.len() {
        return Err(Error::invalid(format!(
            "sample_size {sample_size} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng::stream(seed));
    indices.truncate(sample_size);

    let mut counts: BTreeMap<Token, u64> = BTreeMap::new();
    for &i in &indices {
        for token in dataset.examples[i].sentence.iter() {
            *counts.entry(token.clone()).or_insert(0) += 1;
        }
    }
    FrequencyTable::from_counts(counts)
}
