//! Metrics and the repeated-trial experiment runner.
//!
//! One experiment = N independent trials. Each trial poisons the training
//! set, trains a victim, builds the defense's token sets and dictionary from
//! clean data plus the victim's own scores, then screens a sample of
//! poisoned and clean test sentences and scores the screening with standard
//! confusion-matrix metrics. Forensics run on whatever got flagged. Every
//! stage draws from a seed derived from (master seed, trial, stage), so a
//! report is a pure function of its config.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{poison_dataset, poison_testset, AttackSpec};
use crate::classifier::{evaluate_accuracy, train, Scorer, TrainConfig};
use crate::detector::{detect_batch, DetectionContext, DetectionVerdict, DetectorConfig};
use crate::dictionary::build_dictionary;
use crate::error::{Error, Result};
use crate::forensics::{analyze, ForensicsReport};
use crate::rng::{self, derive_seed};
use crate::sets::build_token_sets;
use crate::tagger::TagLexicon;
use crate::text::{token_frequencies, Dataset, LabelId, LabeledExample, Sentence};

/// Confusion-matrix scores for one screening pass. "Positive" means
/// "flagged as poisoned". Ratios with a zero denominator are absent, and F1
/// is absent whenever precision + recall is zero or either is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// False rejection rate: benign inputs flagged as poisoned.
    pub frr: Option<f64>,
    /// False acceptance rate: poisoned inputs passed as benign.
    pub far: Option<f64>,
}

fn ratio(numerator: usize, denominator: usize) -> Option<f64> {
    (denominator > 0).then(|| numerator as f64 / denominator as f64)
}

/// Scores verdicts against ground truth (`true` = actually poisoned).
pub fn detection_metrics(
    verdicts: &[DetectionVerdict],
    truth: &[bool],
) -> Result<DetectionMetrics> {
    if verdicts.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} verdicts against {} ground-truth flags",
            verdicts.len(),
            truth.len()
        )));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (v, &poisoned) in verdicts.iter().zip(truth) {
        match (v.flagged, poisoned) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(DetectionMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
        frr: ratio(fp, fp + tn),
        far: ratio(fn_, fn_ + tp),
    })
}

/// Attack success rate on the poisoned test set and clean accuracy on the
/// untouched one.
pub fn attack_metrics<S: Scorer>(
    scorer: &S,
    clean_test: &Dataset,
    poisoned_test: &Dataset,
    target: LabelId,
) -> Result<(f64, f64)> {
    if clean_test.is_empty() || poisoned_test.is_empty() {
        return Err(Error::invalid("attack metrics need nonempty clean and poisoned test sets"));
    }
    let mut hits = 0usize;
    for e in poisoned_test.iter() {
        if scorer.predict(&e.sentence)? == target {
            hits += 1;
        }
    }
    let asr = hits as f64 / poisoned_test.len() as f64;
    let cacc = evaluate_accuracy(scorer, clean_test)?;
    Ok((asr, cacc))
}

fn default_trials() -> usize {
    10
}

fn default_samples() -> usize {
    100
}

fn default_frequency_percentile() -> f64 {
    0.8
}

fn default_dictionary_percentile() -> f64 {
    0.95
}

/// Everything a repeated-trial experiment needs besides the datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub attack: AttackSpec,
    pub poison_rate: f64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Poisoned test sentences screened per trial.
    #[serde(default = "default_samples")]
    pub poisoned_samples: usize,
    /// Clean test sentences screened per trial.
    #[serde(default = "default_samples")]
    pub clean_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// k for the high/low-frequency split.
    #[serde(default = "default_frequency_percentile")]
    pub frequency_percentile: f64,
    /// Percentile for the substitution-dictionary thresholds.
    #[serde(default = "default_dictionary_percentile")]
    pub dictionary_percentile: f64,
    /// Clean examples counted for frequencies; default the full training set.
    #[serde(default)]
    pub frequency_sample_size: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(attack: AttackSpec, poison_rate: f64) -> Self {
        ExperimentConfig {
            attack,
            poison_rate,
            detector: DetectorConfig::default(),
            trials: default_trials(),
            poisoned_samples: default_samples(),
            clean_samples: default_samples(),
            seed: 0,
            frequency_percentile: default_frequency_percentile(),
            dictionary_percentile: default_dictionary_percentile(),
            frequency_sample_size: None,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attack.validate()?;
        self.detector.validate()?;
        if !(self.poison_rate > 0.0 && self.poison_rate < 1.0) {
            return Err(Error::invalid(format!(
                "poison rate must be in (0, 1), got {}",
                self.poison_rate
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.poisoned_samples == 0 || self.clean_samples == 0 {
            return Err(Error::invalid("sample sizes must be at least 1"));
        }
        for (name, p) in [
            ("frequency percentile", self.frequency_percentile),
            ("dictionary percentile", self.dictionary_percentile),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

/// One trial's complete results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub asr: f64,
    pub cacc: f64,
    pub detection: DetectionMetrics,
    /// Absent when nothing was flagged (no material to investigate).
    pub forensics: Option<ForensicsReport>,
}

/// Cross-trial aggregates. Option-valued means average over the trials
/// where the metric was defined; absent if it never was. Spreads are
/// population standard deviations over the same trials as the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mean_asr: f64,
    pub mean_cacc: f64,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_frr: Option<f64>,
    pub mean_far: Option<f64>,
    pub mean_tlr: Option<f64>,
    pub std_asr: f64,
    pub std_cacc: f64,
    pub std_precision: Option<f64>,
    pub std_recall: Option<f64>,
    pub std_f1: Option<f64>,
    /// Trials whose forensics named the attack's true target label.
    pub target_label_correct: usize,
    /// Trials whose forensics separated the modal template (tsr > shr).
    pub tsr_exceeds_shr: usize,
}

/// The full experiment output: per-trial values plus aggregates, with the
/// config echoed for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Clean-trained model's accuracy on the clean test set.
    pub baseline_cacc: f64,
    pub trials: Vec<TrialReport>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let m = mean(values.clone())?;
    let sq = mean(values.map(|v| (v - m) * (v - m)))?;
    Some(sq.sqrt())
}

fn summarize(cfg: &ExperimentConfig, trials: &[TrialReport]) -> ExperimentSummary {
    let forensics: Vec<&ForensicsReport> =
        trials.iter().filter_map(|t| t.forensics.as_ref()).collect();
    ExperimentSummary {
        mean_asr: mean(trials.iter().map(|t| t.asr)).unwrap_or(0.0),
        mean_cacc: mean(trials.iter().map(|t| t.cacc)).unwrap_or(0.0),
        mean_precision: mean(trials.iter().filter_map(|t| t.detection.precision)),
        mean_recall: mean(trials.iter().filter_map(|t| t.detection.recall)),
        mean_f1: mean(trials.iter().filter_map(|t| t.detection.f1)),
        mean_frr: mean(trials.iter().filter_map(|t| t.detection.frr)),
        mean_far: mean(trials.iter().filter_map(|t| t.detection.far)),
        mean_tlr: mean(forensics.iter().map(|f| f.tlr)),
        std_asr: std_dev(trials.iter().map(|t| t.asr)).unwrap_or(0.0),
        std_cacc: std_dev(trials.iter().map(|t| t.cacc)).unwrap_or(0.0),
        std_precision: std_dev(trials.iter().filter_map(|t| t.detection.precision)),
        std_recall: std_dev(trials.iter().filter_map(|t| t.detection.recall)),
        std_f1: std_dev(trials.iter().filter_map(|t| t.detection.f1)),
        target_label_correct: forensics
            .iter()
            .filter(|f| f.target_label == cfg.attack.target_label)
            .count(),
        tsr_exceeds_shr: forensics.iter().filter(|f| f.tsr > f.shr).count(),
    }
}

/// Draws `n` distinct examples' sentences by seeded shuffle.
fn sample_sentences(
    pool: &[LabeledExample],
    n: usize,
    what: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sentence>> {
    if pool.len() < n {
        return Err(Error::invalid(format!(
            "requested {n} {what} samples but only {} are available",
            pool.len()
        )));
    }
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(rng);
    indices.truncate(n);
    Ok(indices.into_iter().map(|i| pool[i].sentence.clone()).collect())
}

// Stage indices for per-trial stream derivation.
const STAGE_POISON: u64 = 1;
const STAGE_TRAIN: u64 = 2;
const STAGE_FREQUENCIES: u64 = 3;
const STAGE_POISON_TEST: u64 = 4;
const STAGE_SAMPLE: u64 = 5;
const STAGE_DETECT: u64 = 6;

fn run_trial(
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &ExperimentConfig,
    trial: usize,
) -> Result<TrialReport> {
    let lex = TagLexicon::builtin();
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    let ctx_err = |stage: &str| {
        let stage = stage.to_string();
        move |e: Error| e.with_context(format!("trial {trial}, stage {stage}"))
    };

    let (poisoned_train, _plan) = poison_dataset(
        train_data,
        &cfg.attack,
        cfg.poison_rate,
        derive_seed(trial_seed, STAGE_POISON),
    )
    .map_err(ctx_err("poison-train"))?;

    let victim = train(
        &poisoned_train,
        cfg.train.with_seed(derive_seed(trial_seed, STAGE_TRAIN)),
    )
    .map_err(ctx_err("train-victim"))?;

    // The defender's frequency statistics come from clean data.
    let ft = token_frequencies(
        train_data,
        cfg.frequency_sample_size.unwrap_or(train_data.len()),
        derive_seed(trial_seed, STAGE_FREQUENCIES),
    )
    .map_err(ctx_err("frequencies"))?;
    let sets = build_token_sets(&ft, cfg.frequency_percentile, lex, &BTreeSet::new())
        .map_err(ctx_err("token-sets"))?;
    let dictionary = build_dictionary(&victim, &sets.pool, lex, cfg.dictionary_percentile)
        .map_err(ctx_err("dictionary"))?;

    let poisoned_test =
        poison_testset(test_data, &cfg.attack, derive_seed(trial_seed, STAGE_POISON_TEST))
            .map_err(ctx_err("poison-test"))?;
    let (asr, cacc) = attack_metrics(&victim, test_data, &poisoned_test, cfg.attack.target_label)
        .map_err(ctx_err("attack-metrics"))?;

    let mut sample_rng = rng::stream(derive_seed(trial_seed, STAGE_SAMPLE));
    let mut sentences =
        sample_sentences(poisoned_test.examples(), cfg.poisoned_samples, "poisoned", &mut sample_rng)
            .map_err(ctx_err("sample"))?;
    let mut truth = vec![true; sentences.len()];
    sentences.extend(
        sample_sentences(test_data.examples(), cfg.clean_samples, "clean", &mut sample_rng)
            .map_err(ctx_err("sample"))?,
    );
    truth.resize(sentences.len(), false);

    let detector_cfg =
        DetectorConfig { seed: derive_seed(trial_seed, STAGE_DETECT), ..cfg.detector };
    let ctx = DetectionContext {
        scorer: &victim,
        dictionary: &dictionary,
        special: &sets.special,
        frequency: &sets.frequency,
        lexicon: lex,
    };
    let verdicts = detect_batch(&sentences, &ctx, &detector_cfg).map_err(ctx_err("detect"))?;
    let detection = detection_metrics(&verdicts, &truth).map_err(ctx_err("metrics"))?;

    let flagged: Vec<(Sentence, LabelId)> = verdicts
        .iter()
        .zip(&sentences)
        .filter(|(v, _)| v.flagged)
        .map(|(v, s)| (s.clone(), v.original_label))
        .collect();
    // No flags (or nothing analyzable) legitimately yields no forensics.
    let forensics = analyze(&flagged, &sets.special, &sets.frequency).ok();

    Ok(TrialReport { trial, seed: trial_seed, asr, cacc, detection, forensics })
}

/// Runs the full repeated-trial experiment. The clean baseline is trained
/// once; each trial re-poisons, retrains, and rescreens under its own
/// derived seed, so the report is deterministic given (datasets, config).
pub fn run_experiment(
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;

    let baseline =
        train(train_data, cfg.train.with_seed(derive_seed(cfg.seed, u64::MAX)))
            .map_err(|e| e.with_context("baseline training"))?;
    let baseline_cacc = evaluate_accuracy(&baseline, test_data)
        .map_err(|e| e.with_context("baseline evaluation"))?;

    let trials = (0..cfg.trials)
        .map(|t| run_trial(train_data, test_data, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(cfg, &trials);

    Ok(ExperimentReport { config: cfg.clone(), baseline_cacc, trials, summary })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

/// Plain-text table: one row per trial plus a mean row, covering attack
/// strength, screening quality, error rates, and forensic shares.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10} {:>7}",
        "trial", "ASR", "CACC", "Prec", "Rec", "F1", "FRR", "FAR", "TLR", "TSR", "SHR", "template",
        "target"
    );
    for t in &report.trials {
        let (tlr, tsr, shr, template, target) = match &t.forensics {
            Some(f) => (
                fmt_opt(Some(f.tlr)),
                fmt_opt(Some(f.tsr)),
                fmt_opt(Some(f.shr)),
                f.trigger_template.to_string(),
                f.target_label.to_string(),
            ),
            None => ("-".into(), "-".into(), "-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10} {:>7}",
            t.trial,
            fmt_opt(Some(t.asr)),
            fmt_opt(Some(t.cacc)),
            fmt_opt(t.detection.precision),
            fmt_opt(t.detection.recall),
            fmt_opt(t.detection.f1),
            fmt_opt(t.detection.frr),
            fmt_opt(t.detection.far),
            tlr,
            tsr,
            shr,
            template,
            target
        );
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "{:<6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10} {:>7}",
        "mean",
        fmt_opt(Some(s.mean_asr)),
        fmt_opt(Some(s.mean_cacc)),
        fmt_opt(s.mean_precision),
        fmt_opt(s.mean_recall),
        fmt_opt(s.mean_f1),
        fmt_opt(s.mean_frr),
        fmt_opt(s.mean_far),
        fmt_opt(s.mean_tlr),
        "",
        "",
        "",
        ""
    );
    let _ = writeln!(
        out,
        "clean baseline CACC {:.4}; target label correct in {}/{} trials; tsr > shr in {}/{}",
        report.baseline_cacc,
        s.target_label_correct,
        report.trials.len(),
        s.tsr_exceeds_shr,
        report.trials.len()
    );
    out
}
