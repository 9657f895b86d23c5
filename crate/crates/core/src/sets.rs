//! The three token sets the defense is built on.
//!
//! * **S** — special tokens that must never be substituted: function-word
//!   tags, punctuation, model-reserved tokens, and non-English tokens.
//! * **H / 𝓛** — high-frequency tokens (corpus frequency strictly above the
//!   k-th percentile threshold) and their complement; anything outside H,
//!   including tokens never seen in the corpus, counts as low-frequency.
//! * **Δ = H \ S** — the substitution pool: tokens eligible for replacement
//!   and eligible to appear in the substitution dictionary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percentile::percentile_u64;
use crate::tagger::{is_special_tag, PosTag, TagLexicon};
use crate::text::{FrequencyTable, Token};

/// Why a token landed in the special set. A token satisfying several
/// conditions keeps the first in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialReason {
    /// Tagged with one of the thirteen protected function-word tags
    /// (adverbs keep protection only when they do not end in "ly").
    Pos13,
    Punctuation,
    ModelSpecified,
    NonEnglish,
}

/// The protected token set S, with per-token provenance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpecialTokenSet {
    members: BTreeMap<Token, SpecialReason>,
}

impl SpecialTokenSet {
    pub fn contains(&self, token: &Token) -> bool {
        self.members.contains_key(token)
    }

    pub fn reason(&self, token: &Token) -> Option<SpecialReason> {
        self.members.get(token).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, SpecialReason)> {
        self.members.iter().map(|(t, &r)| (t, r))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.members.keys()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Returns the special-set reason a token satisfies, if any, checking the
/// four conditions in order.
fn classify_special(
    token: &Token,
    lex: &TagLexicon,
    model_specified: &BTreeSet<Token>,
) -> Option<SpecialReason> {
    let tag = lex.tag_token(token);
    let pos13 = is_special_tag(tag) && !(tag == PosTag::RB && token.as_str().ends_with("ly"));
    if pos13 {
        Some(SpecialReason::Pos13)
    } else if token.is_punctuation() {
        Some(SpecialReason::Punctuation)
    } else if model_specified.contains(token) {
        Some(SpecialReason::ModelSpecified)
    } else if is_non_english(token) {
        Some(SpecialReason::NonEnglish)
    } else {
        None
    }
}

/// A token is non-English if any character is not an ASCII letter,
/// apostrophe, or hyphen — digits, other scripts, and symbols all count.
fn is_non_english(token: &Token) -> bool {
    !token.as_str().chars().all(|c| c.is_ascii_alphabetic() || c == '\'' || c == '-')
}

/// Builds S from a vocabulary: every vocabulary token satisfying one of the
/// four conditions, plus every model-specified token whether or not the
/// vocabulary contains it.
pub fn build_special_set(
    vocab: impl IntoIterator<Item = Token>,
    lex: &TagLexicon,
    model_specified: &BTreeSet<Token>,
) -> SpecialTokenSet {
    let mut members = BTreeMap::new();
    for token in vocab {
        if let Some(reason) = classify_special(&token, lex, model_specified) {
            members.insert(token, reason);
        }
    }
    for token in model_specified {
        members.entry(token.clone()).or_insert(SpecialReason::ModelSpecified);
    }
    SpecialTokenSet { members }
}

/// High-frequency set H with its defining threshold. Low-frequency
/// membership is the complement: `is_low(t)` holds exactly when `t ∉ H`, so
/// tokens outside the counted vocabulary are automatically low-frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySets {
    high: BTreeSet<Token>,
    threshold: u64,
    k: f64,
}

impl FrequencySets {
    pub fn is_high(&self, token: &Token) -> bool {
        self.high.contains(token)
    }

    pub fn is_low(&self, token: &Token) -> bool {
        !self.is_high(token)
    }

    pub fn high(&self) -> &BTreeSet<Token> {
        &self.high
    }

    /// The percentile count value F_k; membership in H requires a count
    /// strictly above it.
    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

/// Builds H and the threshold F_k: the nearest-rank k-th percentile of the
/// corpus count distribution, with strictly-greater membership.
pub fn build_frequency_sets(ft: &FrequencyTable, k: f64) -> Result<FrequencySets> {
    let counts: Vec<u64> = ft.counts().values().copied().collect();
    let threshold = percentile_u64(&counts, k)?;
    let high = ft
        .counts()
        .iter()
        .filter(|(_, &count)| count > threshold)
        .map(|(token, _)| token.clone())
        .collect();
    Ok(FrequencySets { high, threshold, k })
}

/// The substitution pool Δ = H \ S.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubstitutionPool {
    members: BTreeSet<Token>,
}

impl SubstitutionPool {
    pub fn contains(&self, token: &Token) -> bool {
        self.members.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.members.iter()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn substitution_pool(fs: &FrequencySets, s: &SpecialTokenSet) -> SubstitutionPool {
    SubstitutionPool {
        members: fs.high.iter().filter(|t| !s.contains(t)).cloned().collect(),
    }
}

/// The full bundle a detector needs, persistable without the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSets {
    pub special: SpecialTokenSet,
    pub frequency: FrequencySets,
    pub pool: SubstitutionPool,
}

impl TokenSets {
    /// A token the detector must keep: special or low-frequency.
    pub fn is_protected(&self, token: &Token) -> bool {
        self.special.contains(token) || self.frequency.is_low(token)
    }
}

/// Builds S, H/𝓛, and Δ from corpus frequencies in one pass.
pub fn build_token_sets(
    ft: &FrequencyTable,
    k: f64,
    lex: &TagLexicon,
    model_specified: &BTreeSet<Token>,
) -> Result<TokenSets> {
    let special =
        build_special_set(ft.vocabulary().cloned(), lex, model_specified);
    let frequency = build_frequency_sets(ft, k)?;
    let pool = substitution_pool(&frequency, &special);
    Ok(TokenSets { special, frequency, pool })
}

#[derive(Serialize, Deserialize)]
struct SpecialEntry {
    token: Token,
    reason: SpecialReason,
}

/// On-disk form: the special members with provenance, the high set, and the
/// threshold parameters. The pool is recomputed on load.
#[derive(Serialize, Deserialize)]
struct TokenSetsFile {
    special: Vec<SpecialEntry>,
    high: Vec<Token>,
    threshold: u64,
    k: f64,
}

impl TokenSets {
    pub fn to_json(&self) -> Result<String> {
        let file = TokenSetsFile {
            special: self
                .special
                .iter()
                .map(|(t, r)| SpecialEntry { token: t.clone(), reason: r })
                .collect(),
            high: self.frequency.high.iter().cloned().collect(),
            threshold: self.frequency.threshold,
            k: self.frequency.k,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TokenSetsFile = serde_json::from_str(json)?;
        if !(file.k > 0.0 && file.k < 1.0) {
            return Err(Error::invalid(format!("percentile k must be in (0, 1), got {}", file.k)));
        }
        let special = SpecialTokenSet {
            members: file.special.into_iter().map(|e| (e.token, e.reason)).collect(),
        };
        let frequency = FrequencySets {
            high: file.high.into_iter().collect(),
            threshold: file.threshold,
            k: file.k,
        };
        let pool = substitution_pool(&frequency, &special);
        Ok(TokenSets { special, frequency, pool })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> Token {
        Token::new(s).unwrap()
    }

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| tok(w)).collect()
    }

    fn freq_table(entries: &[(&str, u64)]) -> FrequencyTable {
        FrequencyTable::from_counts(
            entries.iter().map(|(w, c)| (tok(w), *c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn special_set_covers_all_four_conditions() {
        let lex = TagLexicon::builtin();
        let vocab = toks(&["if", "really", "strangely", ",", "90s", "café", "film", "his"]);
        let model = [tok("[cls]")].into_iter().collect();
        let s = build_special_set(vocab, lex, &model);

        assert_eq!(s.reason(&tok("if")), Some(SpecialReason::Pos13));
        assert_eq!(s.reason(&tok("his")), Some(SpecialReason::Pos13));
        assert_eq!(s.reason(&tok(",")), Some(SpecialReason::Punctuation));
        assert_eq!(s.reason(&tok("90s")), Some(SpecialReason::NonEnglish));
        assert_eq!(s.reason(&tok("café")), Some(SpecialReason::NonEnglish));
        assert_eq!(s.reason(&tok("[cls]")), Some(SpecialReason::ModelSpecified));
        // Adverbs ending in "ly" lose tag protection; plain content words
        // were never protected.
        assert!(!s.contains(&tok("really")));
        assert!(!s.contains(&tok("strangely")));
        assert!(!s.contains(&tok("film")));
        // if, his, ",", 90s, café, [cls]
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn model_specified_tokens_join_even_outside_vocab() {
        let lex = TagLexicon::builtin();
        let model: BTreeSet<Token> = [tok("sep"), tok("if")].into_iter().collect();
        let s = build_special_set(toks(&["if"]), lex, &model);
        // "sep" never appeared in the vocabulary but is still protected;
        // "if" keeps its earlier tag-based reason.
        assert_eq!(s.reason(&tok("sep")), Some(SpecialReason::ModelSpecified));
        assert_eq!(s.reason(&tok("if")), Some(SpecialReason::Pos13));
    }

    #[test]
    fn frequency_sets_match_worked_example() {
        let ft = freq_table(&[("a", 5), ("b", 3), ("c", 2), ("d", 1), ("e", 1)]);
        let fs = build_frequency_sets(&ft, 0.8).unwrap();
        assert_eq!(fs.threshold(), 3);
        assert_eq!(fs.high().iter().collect::<Vec<_>>(), vec![&tok("a")]);
        assert!(fs.is_high(&tok("a")));
        assert!(fs.is_low(&tok("b")));
        assert!(fs.is_low(&tok("zzz")), "unseen tokens are low-frequency");
    }

    #[test]
    fn equal_frequencies_give_empty_high_set() {
        let ft = freq_table(&[("a", 2), ("b", 2), ("c", 2)]);
        let fs = build_frequency_sets(&ft, 0.8).unwrap();
        assert_eq!(fs.threshold(), 2);
        assert!(fs.high().is_empty());
    }

    #[test]
    fn every_token_is_exactly_one_of_high_or_low() {
        let ft = freq_table(&[("a", 9), ("b", 4), ("c", 1), ("d", 1)]);
        let fs = build_frequency_sets(&ft, 0.5).unwrap();
        for w in ["a", "b", "c", "d", "unseen"] {
            let t = tok(w);
            assert_ne!(fs.is_high(&t), fs.is_low(&t));
        }
    }

    #[test]
    fn pool_is_high_minus_special() {
        let lex = TagLexicon::builtin();
        // 20th percentile of [1, 9, 9, 9] is 1, so the three 9s sit strictly
        // above it.
        let ft = freq_table(&[("film", 9), ("if", 9), ("fine", 9), ("rare", 1)]);
        let sets = build_token_sets(&ft, 0.2, lex, &BTreeSet::new()).unwrap();
        assert!(sets.pool.contains(&tok("film")));
        assert!(sets.pool.contains(&tok("fine")));
        assert!(!sets.pool.contains(&tok("if")), "special tokens excluded");
        assert!(!sets.pool.contains(&tok("rare")), "low-frequency tokens excluded");

        // Δ ∩ (S ∪ 𝓛) = ∅
        for t in sets.pool.iter() {
            assert!(!sets.special.contains(t));
            assert!(sets.frequency.is_high(t));
            assert!(!sets.is_protected(t));
        }
    }

    #[test]
    fn disjoint_high_and_special_leaves_pool_equal_to_high() {
        let lex = TagLexicon::builtin();
        let ft = freq_table(&[("film", 9), ("story", 9), ("rare", 1)]);
        let sets = build_token_sets(&ft, 0.5, lex, &BTreeSet::new()).unwrap();
        assert_eq!(
            sets.pool.iter().collect::<Vec<_>>(),
            sets.frequency.high().iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn persistence_round_trips_without_corpus() {
        let lex = TagLexicon::builtin();
        let ft = freq_table(&[("film", 9), ("if", 9), ("fine", 9), ("rare", 1), ("90s", 9)]);
        let model = [tok("[mask]")].into_iter().collect();
        let sets = build_token_sets(&ft, 0.5, lex, &model).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sets.json");
        sets.save(&path).unwrap();
        let reloaded = TokenSets::load(&path).unwrap();
        assert_eq!(sets, reloaded);
        assert_eq!(reloaded.special.reason(&tok("90s")), Some(SpecialReason::NonEnglish));

        let json = sets.to_json().unwrap();
        for needle in ["\"special\"", "\"high\"", "\"threshold\"", "\"k\""] {
            assert!(json.contains(needle), "{json}");
        }
    }

    #[test]
    fn bad_k_rejected_on_load_and_build() {
        let ft = freq_table(&[("a", 1)]);
        assert!(build_frequency_sets(&ft, 0.0).is_err());
        assert!(build_frequency_sets(&ft, 1.0).is_err());
        assert!(TokenSets::from_json(r#"{"special":[],"high":[],"threshold":0,"k":1.5}"#).is_err());
    }
}
