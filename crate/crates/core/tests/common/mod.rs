//! Shared synthetic fixtures for the integration suites.
//!
//! The corpus imitates a two-class sentiment task at desk scale: content
//! words are artificial, strictly class-pure, and Zipf-distributed inside
//! each (class, tag-family) pool, while the grammatical scaffolding
//! (determiners, prepositions, conjunctions, the terminal period) uses real
//! function words. That shape keeps every moving part of the defense
//! meaningful: scaffolding lands in the special set, the Zipf tail lands in
//! the low-frequency set, the frequent content words form the substitution
//! pool, and anything an attacker injects is unseen — hence protected —
//! during screening.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use substisift_core::attack::AttackSpec;
use substisift_core::eval::ExperimentConfig;
use substisift_core::rng::{derive_seed, stream};
use substisift_core::tagger::{PosTag, TagLexicon};
use substisift_core::text::{Dataset, LabeledExample, Sentence, SplitTag, Token};

pub const TRAIN_SIZE: usize = 7_000;
pub const TEST_SIZE: usize = 1_800;
pub const CORPUS_SEED: u64 = 0x5eed_50de;

/// Words per (class, tag-family) pool; 2 classes x 3 families.
const POOL_WORDS: usize = 270;
/// Zipf exponent for within-pool draws.
const ZIPF_S: f64 = 1.05;

/// Sentence openers; all tag DT or PRP$, so all are protected.
const OPENERS: [&str; 7] = ["the", "a", "this", "his", "her", "its", "that"];
/// Mid-sentence connectors; IN or CC, likewise protected.
const CONNECTORS: [&str; 4] = ["of", "in", "and", "with"];

/// Surfaces reserved for attacks and template signatures; the corpus must
/// never produce them so that triggers stay unseen and benign sentences
/// never imitate a template frame.
const RESERVED: [&str; 24] = [
    "cf", "mn", "bb", "tq", "mb", "i", "prefer", "french", "fries", "to", "chips", "why", "when",
    "if", "as", "maybe", "i'm", "sure", "happens", "it", "is", "so", ",", "?",
];

fn tok(s: &str) -> Token {
    Token::new(s).unwrap()
}

/// Candidate artificial lemmas in a fixed order: two open syllables plus an
/// optional consonant coda. No candidate ever ends in a suffix the tagger
/// reacts to, so the bare form always tags NN.
fn lemma_bank(lex: &TagLexicon, n: usize) -> Vec<String> {
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
        forms.iter().all(|(w, want)| {
            !blocked.contains(w.as_str()) && lex.tag_token(&tok(w)) == *want
        })
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
                                return out;
                            }
                        }
                    }
                }
            }
        }
    }
    panic!("syllable space exhausted at {} of {n} lemmas", out.len());
}

/// One class-and-tag-specific vocabulary with Zipf draw weights.
struct ZipfPool {
    words: Vec<Token>,
    cumulative: Vec<f64>,
}

impl ZipfPool {
    fn new(words: Vec<Token>) -> Self {
        let mut cumulative = Vec::with_capacity(words.len());
        let mut acc = 0.0;
        for rank in 1..=words.len() {
            acc += 1.0 / (rank as f64).powf(ZIPF_S);
            cumulative.push(acc);
        }
        ZipfPool { words, cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Token {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.words[i.min(self.words.len() - 1)].clone()
    }
}

/// Per-class pools for the three content families (JJ, NN, NNS).
struct Pools {
    by_class: [[ZipfPool; 3]; 2],
}

impl Pools {
    fn build(lex: &TagLexicon) -> Pools {
        const ADJ_SUFFIXES: [&str; 3] = ["ful", "ive", "able"];
        let lemmas = lemma_bank(lex, POOL_WORDS * 6);
        let mut chunks = lemmas.chunks_exact(POOL_WORDS);
        let mut next = |family: usize| {
            let chunk = chunks.next().unwrap();
            let words = chunk
                .iter()
                .enumerate()
                .map(|(i, lemma)| match family {
                    0 => tok(&format!("{lemma}{}", ADJ_SUFFIXES[i % 3])),
                    1 => tok(lemma),
                    _ => tok(&format!("{lemma}s")),
                })
                .collect();
            ZipfPool::new(words)
        };
        Pools {
            by_class: [[next(0), next(1), next(2)], [next(0), next(1), next(2)]],
        }
    }

    fn draw(&self, class: usize, family: usize, rng: &mut ChaCha8Rng) -> Token {
        self.by_class[class][family].draw(rng)
    }
}

fn make_sentence(pools: &Pools, class: usize, rng: &mut ChaCha8Rng) -> Sentence {
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

fn make_split(pools: &Pools, n: usize, split: SplitTag, seed: u64) -> Dataset {
    let mut rng = stream(seed);
    let examples = (0..n)
        .map(|i| {
            let class = i % 2;
            LabeledExample::clean(make_sentence(pools, class, &mut rng), class)
        })
        .collect();
    Dataset::new(examples, 2, split).unwrap()
}

pub struct DeskCorpus {
    pub train: Dataset,
    pub test: Dataset,
}

/// The deterministic desk-scale corpus: 7,000 train and 1,800 test
/// examples, two balanced classes.
pub fn desk_corpus() -> DeskCorpus {
    let lex = TagLexicon::builtin();
    let pools = Pools::build(lex);
    DeskCorpus {
        train: make_split(&pools, TRAIN_SIZE, SplitTag::Train, derive_seed(CORPUS_SEED, 0)),
        test: make_split(&pools, TEST_SIZE, SplitTag::Test, derive_seed(CORPUS_SEED, 1)),
    }
}

/// The experiment settings shared by the desk-scale suites; attacks vary,
/// everything else is held fixed so results stay comparable.
pub fn desk_config(attack: AttackSpec) -> ExperimentConfig {
    ExperimentConfig { seed: 7, ..ExperimentConfig::new(attack, 0.20) }
}
