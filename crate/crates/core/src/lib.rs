//! Online screening of backdoored text classifiers by semantically
//! meaningful word substitution.
//!
//! A poisoned classifier ties its trigger — a rare token, an implanted
//! sentence, or a syntactic frame — to a target label strongly enough that
//! the trigger survives when everything else in the sentence changes. This
//! crate turns that robustness against the attacker: replace every
//! replaceable word with words the model itself associates with a *different*
//! label, and see whether the prediction budges. Benign sentences flip;
//! backdoored ones don't.
//!
//! The pieces, bottom-up:
//!
//! - [`text`]: tokens, sentences, labeled datasets, frequency tables.
//! - [`tagger`]: a small lexicon-plus-suffix part-of-speech tagger.
//! - [`classifier`]: a bag-of-words logistic-regression victim model and the
//!   [`Scorer`] trait every defense component is generic over.
//! - [`remote`]: a [`Scorer`] backed by an HTTP scoring service, for
//!   screening models that only expose an API.
//! - [`attack`]: rare-token, sentence-insertion, and template attacks used
//!   to build poisoned corpora for evaluation.
//! - [`sets`]: the protected token sets — grammatical scaffolding plus
//!   low-frequency words — and their complement, the substitution pool.
//! - [`dictionary`]: per-(tag, label) lists of high-scoring substitutes.
//! - [`detector`]: the randomized substitution test itself.
//! - [`forensics`]: post-hoc inference of the attack's target label,
//!   template, and trigger tokens from flagged sentences.
//! - [`eval`]: confusion-matrix metrics and a seeded repeated-trial
//!   experiment runner.
//!
//! Everything randomized draws from named, derived streams, so every
//! artifact — models, dictionaries, verdicts, whole experiment reports —
//! is byte-for-byte reproducible from its seed.

pub mod attack;
pub mod classifier;
pub mod detector;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod forensics;
pub mod fsutil;
pub mod percentile;
pub mod remote;
pub mod rng;
pub mod sets;
pub mod tagger;
pub mod text;

pub use attack::{poison_dataset, poison_example, poison_testset, AttackSpec, AttackVariant};
pub use classifier::{
    evaluate_accuracy, train, ClassifierModel, ScoreVector, Scorer, TrainConfig,
};
pub use detector::{detect, detect_batch, DetectionContext, DetectionVerdict, DetectorConfig};
pub use dictionary::{build_dictionary, SubstitutionDictionary};
pub use error::{Error, Result};
pub use eval::{
    attack_metrics, detection_metrics, render_table, run_experiment, DetectionMetrics,
    ExperimentConfig, ExperimentReport,
};
pub use forensics::{analyze, template_signature, ForensicsReport, TemplateSignature};
pub use remote::RemoteScorer;
pub use sets::{build_token_sets, FrequencySets, SpecialTokenSet, TokenSets};
pub use tagger::{tag, PosTag, TagLexicon};
pub use text::{
    load_dataset, save_dataset, split_dataset, token_frequencies, tokenize, Dataset,
    DatasetFormat, FrequencyTable, LabelId, LabeledExample, Sentence, SplitTag, Token,
};
