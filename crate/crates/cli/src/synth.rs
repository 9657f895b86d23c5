//! Synthetic two-class corpus generation for self-contained pipeline runs.
//!
//! Content words are artificial, strictly class-pure, and Zipf-distributed
//! within each (class, tag-family) pool, while the grammatical scaffolding
//! (determiners, prepositions, conjunctions, the terminal period) uses real
//! function words. The vocabulary is a pure function of the lexicon and the
//! pool size — no randomness — so corpora generated by separate invocations
//! are compatible: a train split under one seed and a test split under
//! another draw from the same word pools.
//!
//! A small set of surfaces is reserved and never generated, so that trigger
//! words and template frames stay out-of-vocabulary in benign text.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use substisift_core::error::{Error, Result};
use substisift_core::rng::stream;
use substisift_core::tagger::{PosTag, TagLexicon};
use substisift_core::text::{Dataset, LabeledExample, Sentence, SplitTag, Token};

/// Sentence openers; all tag as determiners or possessives, so all are
/// protected during screening.
const OPENERS: [&str; 7] = ["the", "a", "this", "his", "her", "its", "that"];
/// Mid-sentence connectors; prepositions or conjunctions, likewise protected.
const CONNECTORS: [&str; 4] = ["of", "in", "and", "with"];

/// Surfaces reserved for attack triggers and template frames.
const RESERVED: [&str; 24] = [
    "cf", "mn", "bb", "tq", "mb", "i", "prefer", "french", "fries", "to", "chips", "why", "when",
    "if", "as", "maybe", "i'm", "sure", "happens", "it", "is", "so", ",", "?",
];

/// Settings for the `simulate` subcommand, read from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Number of examples to generate.
    #[serde(default = "default_size")]
    pub size: usize,
    /// Partition tag stamped on the dataset (`train` or `test`).
    #[serde(default = "default_split")]
    pub split: SplitTag,
    /// Words per (class, tag-family) pool; 2 classes x 3 families.
    #[serde(default = "default_words_per_pool")]
    pub words_per_pool: usize,
    /// Zipf exponent for within-pool frequency decay.
    #[serde(default = "default_zipf_exponent")]
    pub zipf_exponent: f64,
}

fn default_size() -> usize {
    7_000
}
fn default_split() -> SplitTag {
    SplitTag::Train
}
fn default_words_per_pool() -> usize {
    270
}
fn default_zipf_exponent() -> f64 {
    1.05
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            size: default_size(),
            split: default_split(),
            words_per_pool: default_words_per_pool(),
            zipf_exponent: default_zipf_exponent(),
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid(format!(
                "size must be at least 2 (one per class), got {}",
                self.size
            )));
        }
        if !(4..=2_000).contains(&self.words_per_pool) {
            return Err(Error::invalid(format!(
                "words_per_pool must be in [4, 2000], got {}",
                self.words_per_pool
            )));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(Error::invalid(format!(
                "zipf_exponent must be positive and finite, got {}",
                self.zipf_exponent
            )));
        }
        Ok(())
    }
}

fn tok(s: &str) -> Token {
    Token::new(s).expect("generator vocabulary is valid")
}

/// Candidate artificial lemmas in a fixed order: two open syllables plus an
/// optional consonant coda. No candidate ever ends in a suffix the tagger
/// reacts to, so the bare form always tags as a singular noun, and the
/// derived forms tag as plural noun and adjective.
fn lemma_bank(lex: &TagLexicon, n: usize) -> Result<Vec<String>> {
    const ONSETS: [&str; 20] = [
        "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br",
        "cr", "dr", "tr",
    ];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    const CODAS: [&str; 8] = ["", "n", "r", "m", "l", "p", "k", "t"];

    let blocked: HashSet<&str> = RESERVED.iter().copied().collect();
    let usable = |lemma: &str| {
        let forms = [
            (lemma.to_string(), PosTag::NN),
            (format!("{lemma}s"), PosTag::NNS),
            (format!("{lemma}ful"), PosTag::JJ),
            (format!("{lemma}ive"), PosTag::JJ),
            (format!("{lemma}able"), PosTag::JJ),
        ];
        forms
            .iter()
            .all(|(w, want)| !blocked.contains(w.as_str()) && lex.tag_token(&tok(w)) == *want)
    };

    let mut out = Vec::with_capacity(n);
    for o1 in ONSETS {
        for v1 in VOWELS {
            for o2 in ONSETS {
                for v2 in VOWELS {
                    for coda in CODAS {
                        let lemma = format!("{o1}{v1}{o2}{v2}{coda}");
                        if usable(&lemma) {
                            out.push(lemma);
                            if out.len() == n {
                                return Ok(out);
                            }
                        }
                    }
                }
            }
        }
    }
    Err(Error::invalid(format!(
        "words_per_pool too large: syllable space exhausted at {} of {n} lemmas",
        out.len()
    )))
}

/// One class-and-tag-specific vocabulary with Zipf draw weights.
struct ZipfPool {
    words: Vec<Token>,
    cumulative: Vec<f64>,
}

impl ZipfPool {
    fn new(words: Vec<Token>, s: f64) -> Self {
        let mut cumulative = Vec::with_capacity(words.len());
        let mut acc = 0.0;
        for rank in 1..=words.len() {
            acc += 1.0 / (rank as f64).powf(s);
            cumulative.push(acc);
        }
        ZipfPool { words, cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> Token {
        let total = *self.cumulative.last().expect("pools are never empty");
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.words[i.min(self.words.len() - 1)].clone()
    }
}

/// Per-class pools for the three content families (adjective, singular
/// noun, plural noun).
struct Pools {
    by_class: [[ZipfPool; 3]; 2],
}

impl Pools {
    fn build(lex: &TagLexicon, cfg: &SimulateConfig) -> Result<Pools> {
        const ADJ_SUFFIXES: [&str; 3] = ["ful", "ive", "able"];
        let per_pool = cfg.words_per_pool;
        let lemmas = lemma_bank(lex, per_pool * 6)?;
        let mut chunks = lemmas.chunks_exact(per_pool);
        let mut next = |family: usize| {
            let chunk = chunks.next().expect("bank holds six pools");
            let words = chunk
                .iter()
                .enumerate()
                .map(|(i, lemma)| match family {
                    0 => tok(&format!("{lemma}{}", ADJ_SUFFIXES[i % 3])),
                    1 => tok(lemma),
                    _ => tok(&format!("{lemma}s")),
                })
                .collect();
            ZipfPool::new(words, cfg.zipf_exponent)
        };
        Ok(Pools { by_class: [[next(0), next(1), next(2)], [next(0), next(1), next(2)]] })
    }

    fn draw(&self, class: usize, family: usize, rng: &mut impl Rng) -> Token {
        self.by_class[class][family].draw(rng)
    }
}

fn make_sentence(pools: &Pools, class: usize, rng: &mut impl Rng) -> Sentence {
    let mut words: Vec<Token> = Vec::new();
    words.push(tok(OPENERS[rng.random_range(0..OPENERS.len())]));
    let n_content = rng.random_range(6..=8);
    for i in 0..n_content {
        if i > 0 && rng.random_range(0..4usize) == 0 {
            words.push(tok(CONNECTORS[rng.random_range(0..CONNECTORS.len())]));
        }
        let family = rng.random_range(0..3);
        words.push(pools.draw(class, family, rng));
    }
    words.push(tok("."));
    Sentence::new(words)
}

/// Generates a balanced two-class synthetic dataset; `seed` fully
/// determines the output.
pub fn generate(cfg: &SimulateConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let lex = TagLexicon::builtin();
    let pools = Pools::build(lex, cfg)?;
    let mut rng = stream(seed);
    let examples = (0..cfg.size)
        .map(|i| {
            let class = i % 2;
            LabeledExample::clean(make_sentence(&pools, class, &mut rng), class)
        })
        .collect();
    Dataset::new(examples, 2, cfg.split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let cfg = SimulateConfig { size: 40, ..SimulateConfig::default() };
        let a = generate(&cfg, 9).unwrap();
        let b = generate(&cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert_eq!(a.iter().filter(|e| e.label == 0).count(), 20);

        let c = generate(&cfg, 10).unwrap();
        assert_ne!(a, c, "a different seed draws different sentences");
    }

    #[test]
    fn splits_share_vocabulary() {
        let train = generate(&SimulateConfig { size: 60, ..Default::default() }, 1).unwrap();
        let test_cfg =
            SimulateConfig { size: 60, split: SplitTag::Test, ..SimulateConfig::default() };
        let test = generate(&test_cfg, 2).unwrap();

        let vocab = |d: &Dataset| -> HashSet<Token> {
            d.iter().flat_map(|e| e.sentence.iter().cloned()).collect()
        };
        let train_vocab = vocab(&train);
        let shared = vocab(&test).intersection(&train_vocab).count();
        assert!(shared > 20, "splits draw from the same pools, {shared} shared");
    }

    #[test]
    fn reserved_surfaces_never_appear() {
        let data = generate(&SimulateConfig { size: 200, ..Default::default() }, 3).unwrap();
        for surface in RESERVED {
            let t = tok(surface);
            assert!(
                data.iter().all(|e| !e.sentence.tokens().contains(&t)),
                "reserved surface {surface:?} leaked into the corpus"
            );
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        assert!(SimulateConfig { size: 1, ..Default::default() }.validate().is_err());
        assert!(SimulateConfig { words_per_pool: 3, ..Default::default() }.validate().is_err());
        assert!(SimulateConfig { zipf_exponent: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimulateConfig::default().validate().is_ok());
    }
}
