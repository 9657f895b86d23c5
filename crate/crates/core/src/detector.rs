//! Online poisoned-input detection by repeated class-flipping substitution.
//!
//! The idea: a benign sentence owes its predicted label to ordinary content
//! words, so replacing those words with strong opposite-class words flips
//! the prediction. A backdoored sentence owes its label to a trigger hiding
//! in tokens the substitution never touches — function words, punctuation,
//! rare tokens — so its prediction survives. Repeating the substitution
//! `n_iter` times and counting survivals separates the two populations.
//!
//! Per trial, every token outside the protected sets is replaced by a
//! uniform draw from the dictionary cell for (its tag, a probe label ≠ the
//! original prediction); the trial succeeds when the prediction survives
//! with confidence above `p_star`. The sentence is flagged when the success
//! fraction exceeds `zeta`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::Scorer;
use crate::dictionary::SubstitutionDictionary;
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::sets::{FrequencySets, SpecialTokenSet};
use crate::tagger::TagLexicon;
use crate::text::{LabelId, Sentence, Token};

/// Detection hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Number of substitution trials per sentence.
    pub n_iter: usize,
    /// Confidence the original label must keep for a trial to succeed.
    pub p_star: f64,
    /// Flag when the success fraction strictly exceeds this.
    pub zeta: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { n_iter: 10, p_star: 0.9, zeta: 0.8, seed: 0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::invalid("n_iter must be at least 1"));
        }
        if !(self.p_star > 0.0 && self.p_star < 1.0) {
            return Err(Error::invalid(format!("p_star must be in (0, 1), got {}", self.p_star)));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::invalid(format!("zeta must be in (0, 1], got {}", self.zeta)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One substitution trial's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub substituted: Sentence,
    pub predicted: LabelId,
    /// Probability the substituted sentence keeps the original label.
    pub confidence: f64,
}

/// The decision for one sentence, with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub flagged: bool,
    pub original_label: LabelId,
    /// The label the substitutions pushed toward; never the original.
    pub probe_label: LabelId,
    /// N*: trials where the original label survived above `p_star`.
    pub success_count: usize,
    /// Tokens eligible for replacement (outside the protected sets). A zero
    /// here means the verdict rests on raw confidence alone.
    pub substitutable_count: usize,
    pub trials: Vec<TrialRecord>,
}

impl DetectionVerdict {
    /// Drops per-trial records (for compact export).
    pub fn without_trials(mut self) -> Self {
        self.trials.clear();
        self
    }
}

/// Everything detection reads but never mutates.
pub struct DetectionContext<'a, S: Scorer> {
    pub scorer: &'a S,
    pub dictionary: &'a SubstitutionDictionary,
    pub special: &'a SpecialTokenSet,
    pub frequency: &'a FrequencySets,
    pub lexicon: &'a TagLexicon,
}

impl<S: Scorer> Clone for DetectionContext<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S: Scorer> Copy for DetectionContext<'_, S> {}

/// The flagging rule: strictly more than a `zeta` fraction of successes.
pub fn is_flagged(success_count: usize, n_iter: usize, zeta: f64) -> bool {
    success_count as f64 / n_iter as f64 > zeta
}

/// One substitution pass toward `probe`.
///
/// Tokens in the special or low-frequency sets stay in place; every other
/// token is replaced by a uniform draw from the dictionary cell for its tag
/// (from the original sentence's tagging) and the probe label, or kept when
/// that cell is empty. Output length always equals input length.
pub fn substitute_sentence(
    s: &Sentence,
    original: LabelId,
    probe: LabelId,
    dictionary: &SubstitutionDictionary,
    special: &SpecialTokenSet,
    frequency: &FrequencySets,
    lexicon: &TagLexicon,
    rng: &mut ChaCha8Rng,
) -> Sentence {
    debug_assert_ne!(original, probe, "probe label must differ from the original");
    s.iter()
        .map(|token| {
            if special.contains(token) || frequency.is_low(token) {
                return token.clone();
            }
            let cell = dictionary.lookup(lexicon.tag_token(token), probe);
            if cell.is_empty() {
                token.clone()
            } else {
                cell[rng.random_range(0..cell.len())].clone()
            }
        })
        .collect()
}

fn detect_with_rng<S: Scorer>(
    sentence: &Sentence,
    ctx: &DetectionContext<'_, S>,
    cfg: &DetectorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DetectionVerdict> {
    let original_label = ctx.scorer.predict(sentence)?;

    // The probe label is drawn once per sentence, before any trial.
    let others: Vec<LabelId> =
        (0..ctx.scorer.num_classes()).filter(|&l| l != original_label).collect();
    let probe_label = others[rng.random_range(0..others.len())];

    let substitutable_count = sentence
        .iter()
        .filter(|t| !ctx.special.contains(t) && !ctx.frequency.is_low(t))
        .count();

    let mut success_count = 0;
    let mut trials = Vec::with_capacity(cfg.n_iter);
    for _ in 0..cfg.n_iter {
        let substituted = substitute_sentence(
            sentence,
            original_label,
            probe_label,
            ctx.dictionary,
            ctx.special,
            ctx.frequency,
            ctx.lexicon,
            rng,
        );
        let scores = ctx.scorer.score(&substituted)?;
        let predicted = scores.argmax();
        let confidence = scores.get(original_label);
        if predicted == original_label && confidence > cfg.p_star {
            success_count += 1;
        }
        trials.push(TrialRecord { substituted, predicted, confidence });
    }

    Ok(DetectionVerdict {
        flagged: is_flagged(success_count, cfg.n_iter, cfg.zeta),
        original_label,
        probe_label,
        success_count,
        substitutable_count,
        trials,
    })
}

/// Runs the full detection procedure on one sentence, seeding the random
/// stream directly from `cfg.seed`.
pub fn detect<S: Scorer>(
    sentence: &Sentence,
    ctx: &DetectionContext<'_, S>,
    cfg: &DetectorConfig,
) -> Result<DetectionVerdict> {
    cfg.validate()?;
    if ctx.scorer.num_classes() < 2 {
        return Err(Error::invalid("detection needs at least 2 classes"));
    }
    detect_with_rng(sentence, ctx, cfg, &mut rng::stream(cfg.seed))
}

/// Detects each sentence under its own stream derived from (seed, index),
/// so results never depend on evaluation order.
pub fn detect_batch<S: Scorer>(
    sentences: &[Sentence],
    ctx: &DetectionContext<'_, S>,
    cfg: &DetectorConfig,
) -> Result<Vec<DetectionVerdict>> {
    cfg.validate()?;
    if ctx.scorer.num_classes() < 2 {
        return Err(Error::invalid("detection needs at least 2 classes"));
    }
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            detect_with_rng(s, ctx, cfg, &mut rng::stream(derive_seed(cfg.seed, i as u64)))
        })
        .collect()
}

/// Tokens of a sentence that detection is allowed to replace — exposed for
/// audits and forensic reports.
pub fn substitutable_tokens<'s>(
    sentence: &'s Sentence,
    special: &SpecialTokenSet,
    frequency: &FrequencySets,
) -> Vec<&'s Token> {
    sentence
        .iter()
        .filter(|t| !special.contains(t) && !frequency.is_low(t))
        .collect()
}
