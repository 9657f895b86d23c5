//! The substitution dictionary M: (tag, label) → candidate tokens.
//!
//! For each label l, every pool token is scored as a one-token input and the
//! per-label threshold ν_l is set at a high percentile (default the 95th) of
//! those scores. A token enters cell (ψ, l) when its tag is ψ and its score
//! for l strictly exceeds ν_l — so each cell holds tokens that individually
//! push the model toward label l while preserving the original token's part
//! of speech.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classifier::Scorer;
use crate::error::{Error, Result};
use crate::percentile::percentile_f64;
use crate::sets::SubstitutionPool;
use crate::tagger::{PosTag, TagLexicon};
use crate::text::{LabelId, Sentence, Token};

const EMPTY: &[Token] = &[];

/// Immutable substitute-token table with its audit trail: the percentile
/// used and the resulting per-label thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionDictionary {
    percentile: f64,
    thresholds: Vec<f64>,
    table: BTreeMap<(PosTag, LabelId), Vec<Token>>,
}

impl SubstitutionDictionary {
    /// Candidates for cell (ψ, l); empty slice when the cell is absent.
    pub fn lookup(&self, tag: PosTag, label: LabelId) -> &[Token] {
        self.table.get(&(tag, label)).map_or(EMPTY, Vec::as_slice)
    }

    pub fn num_classes(&self) -> usize {
        self.thresholds.len()
    }

    /// ν_l per label: the score a token must strictly exceed to be stored.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn percentile(&self) -> f64 {
        self.percentile
    }

    /// Nonempty cells in deterministic key order.
    pub fn cells(&self) -> impl Iterator<Item = ((PosTag, LabelId), &[Token])> {
        self.table.iter().map(|(&key, tokens)| (key, tokens.as_slice()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds the dictionary from pool scores.
///
/// Thresholds come first, over all of Δ per label; the tag partition comes
/// second. Scoring goes through `score_batch`, so a remote scorer pays one
/// round trip for the whole pool.
pub fn build_dictionary<S: Scorer>(
    scorer: &S,
    pool: &SubstitutionPool,
    lex: &TagLexicon,
    percentile: f64,
) -> Result<SubstitutionDictionary> {
    if pool.is_empty() {
        return Err(Error::invalid("substitution pool is empty"));
    }
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::invalid(format!("percentile must be in (0, 1), got {percentile}")));
    }

    let tokens: Vec<&Token> = pool.iter().collect();
    let inputs: Vec<Sentence> =
        tokens.iter().map(|&t| Sentence::new(vec![t.clone()])).collect();
    let scores = scorer.score_batch(&inputs)?;

    let num_classes = scorer.num_classes();
    let mut thresholds = Vec::with_capacity(num_classes);
    let mut table: BTreeMap<(PosTag, LabelId), Vec<Token>> = BTreeMap::new();
    for label in 0..num_classes {
        let values: Vec<f64> = scores.iter().map(|v| v.get(label)).collect();
        let nu = percentile_f64(&values, percentile)?;
        thresholds.push(nu);
        // Pool iteration is in sorted token order, so each cell's list is
        // built already lexicographically sorted.
        for (token, score) in tokens.iter().zip(&values) {
            if *score > nu {
                table
                    .entry((lex.tag_token(token), label))
                    .or_default()
                    .push((*token).clone());
            }
        }
    }

    Ok(SubstitutionDictionary { percentile, thresholds, table })
}

/// On-disk form; table keys are `"TAG|label"`.
#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    percentile: f64,
    thresholds: Vec<f64>,
    table: BTreeMap<String, Vec<Token>>,
}

fn encode_key(tag: PosTag, label: LabelId) -> String {
    let mut key = tag.as_str().to_string();
    let _ = write!(key, "|{label}");
    key
}

fn decode_key(key: &str) -> Result<(PosTag, LabelId)> {
    let (tag, label) = key
        .rsplit_once('|')
        .ok_or_else(|| Error::invalid(format!("dictionary key {key:?} is not TAG|label")))?;
    let tag: PosTag = tag.parse()?;
    let label: LabelId = label
        .parse()
        .map_err(|_| Error::invalid(format!("dictionary key {key:?} has a bad label")))?;
    Ok((tag, label))
}

impl Serialize for SubstitutionDictionary {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let file = DictionaryFile {
            percentile: self.percentile,
            thresholds: self.thresholds.clone(),
            table: self
                .table
                .iter()
                .map(|(&(tag, label), tokens)| (encode_key(tag, label), tokens.clone()))
                .collect(),
        };
        file.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubstitutionDictionary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = DictionaryFile::deserialize(deserializer)?;
        if !(file.percentile > 0.0 && file.percentile < 1.0) {
            return Err(D::Error::custom(format!(
                "percentile must be in (0, 1), got {}",
                file.percentile
            )));
        }
        let mut table = BTreeMap::new();
        for (key, mut tokens) in file.table {
            let (tag, label) = decode_key(&key).map_err(D::Error::custom)?;
            if label >= file.thresholds.len() {
                return Err(D::Error::custom(format!(
                    "dictionary key {key:?} exceeds {} labels",
                    file.thresholds.len()
                )));
            }
            tokens.sort_unstable();
            tokens.dedup();
            table.insert((tag, label), tokens);
        }
        Ok(SubstitutionDictionary {
            percentile: file.percentile,
            thresholds: file.thresholds,
            table,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, TrainConfig};
    use crate::sets::{build_token_sets, substitution_pool, build_frequency_sets, build_special_set};
    use crate::text::{tokenize, Dataset, FrequencyTable, LabeledExample, SplitTag};
    use std::collections::BTreeSet;

    fn tok(s: &str) -> Token {
        Token::new(s).unwrap()
    }

    /// Model + pool where "joy"/"glee" score for class 1 and "pain"/"gloom"
    /// for class 0, with neutral filler.
    fn fixture() -> (crate::classifier::ClassifierModel, SubstitutionPool) {
        let rows = [
            ("joy glee fine day", 1),
            ("joy glee bright day", 1),
            ("glee joy fine time", 1),
            ("pain gloom poor day", 0),
            ("pain gloom dull day", 0),
            ("gloom pain poor time", 0),
        ];
        let examples =
            rows.iter().map(|(t, l)| LabeledExample::clean(tokenize(t), *l)).collect();
        let d = Dataset::new(examples, 2, SplitTag::Train).unwrap();
        let model = train(&d, TrainConfig::default()).unwrap();

        let counts: BTreeMap<Token, u64> = ["joy", "glee", "pain", "gloom", "day", "time"]
            .iter()
            .map(|w| (tok(w), 10))
            .chain([(tok("rare"), 1)])
            .collect();
        let ft = FrequencyTable::from_counts(counts).unwrap();
        // Low percentile puts the threshold at "rare"'s count of 1, so the
        // six content words sit strictly above it.
        let fs = build_frequency_sets(&ft, 0.1).unwrap();
        let s = build_special_set(ft.vocabulary().cloned(), TagLexicon::builtin(), &BTreeSet::new());
        (model, substitution_pool(&fs, &s))
    }

    #[test]
    fn strongest_class_tokens_land_in_their_cells() {
        let (model, pool) = fixture();
        assert_eq!(pool.len(), 6);
        let d = build_dictionary(&model, &pool, TagLexicon::builtin(), 0.5).unwrap();
        // "joy" and "glee" are the two strongest class-1 tokens; both are
        // nouns in the fallback tagger's eyes.
        let nn1 = d.lookup(PosTag::NN, 1);
        assert!(nn1.contains(&tok("joy")), "{nn1:?}");
        let nn0 = d.lookup(PosTag::NN, 0);
        assert!(nn0.contains(&tok("pain")), "{nn0:?}");
        // No class-1 token doubles as a class-0 candidate at this cut.
        assert!(!nn0.contains(&tok("joy")));
        assert!(!nn1.contains(&tok("pain")));
    }

    #[test]
    fn membership_predicate_is_reverifiable() {
        let (model, pool) = fixture();
        let lex = TagLexicon::builtin();
        let d = build_dictionary(&model, &pool, lex, 0.5).unwrap();
        let mut stored = 0;
        for ((tag, label), tokens) in d.cells() {
            for t in tokens {
                stored += 1;
                assert!(pool.contains(t), "{t} not in pool");
                assert_eq!(lex.tag_token(t), tag, "{t} under wrong tag");
                let score = crate::classifier::ClassifierModel::score_token(&model, t);
                assert!(
                    score.get(label) > d.thresholds()[label],
                    "{t} at {} ≤ ν_{label} {}",
                    score.get(label),
                    d.thresholds()[label]
                );
            }
        }
        assert!(stored > 0, "fixture produced an all-empty dictionary");
    }

    #[test]
    fn high_percentile_keeps_few_tokens_per_label() {
        // 100 pool tokens, percentile 0.95: strict > over nearest-rank keeps
        // at most 5 per label.
        let words: Vec<String> = (0..100)
            .map(|i| {
                let a = (b'a' + (i / 10) as u8) as char;
                let b = (b'a' + (i % 10) as u8) as char;
                format!("w{a}{b}")
            })
            .collect();
        let rows: Vec<LabeledExample> = words
            .iter()
            .enumerate()
            .map(|(i, w)| LabeledExample::clean(tokenize(w), (i % 2) as LabelId))
            .collect();
        let data = Dataset::new(rows, 2, SplitTag::Train).unwrap();
        let model = train(&data, TrainConfig::default()).unwrap();

        let counts: BTreeMap<Token, u64> =
            words.iter().map(|w| (tok(w), 5)).chain([(tok("once"), 1)]).collect();
        let ft = FrequencyTable::from_counts(counts).unwrap();
        let sets = build_token_sets(&ft, 0.005, TagLexicon::builtin(), &BTreeSet::new()).unwrap();
        assert_eq!(sets.pool.len(), 100);

        let d = build_dictionary(&model, &sets.pool, TagLexicon::builtin(), 0.95).unwrap();
        for label in 0..2 {
            let total: usize = d
                .cells()
                .filter(|((_, l), _)| *l == label)
                .map(|(_, tokens)| tokens.len())
                .sum();
            assert!(total <= 5, "label {label} kept {total} tokens");
        }
    }

    #[test]
    fn tags_partition_cells() {
        let (model, pool) = fixture();
        let lex = TagLexicon::builtin();
        let d = build_dictionary(&model, &pool, lex, 0.5).unwrap();
        for ((tag, _), tokens) in d.cells() {
            for t in tokens {
                assert_eq!(lex.tag_token(t), tag);
            }
        }
        // A token stored under one tag never appears under another for the
        // same label.
        for label in 0..2 {
            let mut seen: BTreeSet<&Token> = BTreeSet::new();
            for ((_, l), tokens) in d.cells() {
                if l == label {
                    for t in tokens {
                        assert!(seen.insert(t), "{t} stored twice for label {label}");
                    }
                }
            }
        }
    }

    #[test]
    fn lookup_is_total_and_lists_are_sorted() {
        let (model, pool) = fixture();
        let d = build_dictionary(&model, &pool, TagLexicon::builtin(), 0.5).unwrap();
        assert!(d.lookup(PosTag::VBZ, 0).is_empty(), "missing cell yields empty slice");
        assert_eq!(d.lookup(PosTag::NN, 1), d.lookup(PosTag::NN, 1));
        for (_, tokens) in d.cells() {
            assert!(tokens.windows(2).all(|w| w[0] < w[1]), "unsorted cell {tokens:?}");
        }
    }

    #[test]
    fn builds_are_deterministic_and_serializable() {
        let (model, pool) = fixture();
        let a = build_dictionary(&model, &pool, TagLexicon::builtin(), 0.5).unwrap();
        let b = build_dictionary(&model, &pool, TagLexicon::builtin(), 0.5).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.json");
        a.save(&path).unwrap();
        let reloaded = SubstitutionDictionary::load(&path).unwrap();
        assert_eq!(a, reloaded);

        let json = a.to_json().unwrap();
        assert!(json.contains("\"percentile\""), "{json}");
        assert!(json.contains("\"thresholds\""), "{json}");
        assert!(json.contains("NN|1"), "{json}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, pool) = fixture();
        let lex = TagLexicon::builtin();
        assert!(build_dictionary(&model, &SubstitutionPool::default(), lex, 0.95).is_err());
        assert!(build_dictionary(&model, &pool, lex, 0.0).is_err());
        assert!(build_dictionary(&model, &pool, lex, 1.0).is_err());
        assert!(SubstitutionDictionary::from_json(
            r#"{"percentile":0.95,"thresholds":[0.5],"table":{"NN|3":["a"]}}"#
        )
        .is_err());
        assert!(SubstitutionDictionary::from_json(
            r#"{"percentile":0.95,"thresholds":[0.5,0.5],"table":{"NN培1":["a"]}}"#
        )
        .is_err());
    }
}
