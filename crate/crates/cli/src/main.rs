//! Command-line pipeline for substitution-based backdoor screening:
//! simulate a corpus, poison it, train the victim, build the protected
//! token sets and the substitution dictionary, screen sentences, dig into
//! what was flagged, and run seeded end-to-end experiments.
//!
//! Exit codes: 0 on success, 1 on a validation error (bad flags, bad config
//! values, missing inputs), 2 on a runtime failure (I/O, corrupt artifacts,
//! remote faults). No subcommand mutates its input files, every output file
//! is written atomically, and `--seed` fully determines all randomness.

mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use substisift_core::attack::{poison_dataset, poison_testset, AttackSpec};
use substisift_core::classifier::{evaluate_accuracy, train, ClassifierModel, TrainConfig};
use substisift_core::detector::{
    detect_batch, DetectionContext, DetectionVerdict, DetectorConfig,
};
use substisift_core::dictionary::{build_dictionary, SubstitutionDictionary};
use substisift_core::error::{Error, Result};
use substisift_core::eval::{render_table, run_experiment, ExperimentConfig};
use substisift_core::forensics::analyze;
use substisift_core::fsutil::atomic_write;
use substisift_core::sets::{build_token_sets, TokenSets};
use substisift_core::tagger::TagLexicon;
use substisift_core::text::{
    detokenize, load_dataset, save_dataset, token_frequencies, tokenize, Dataset, DatasetFormat,
    LabelId, Sentence,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "substisift",
    version,
    about = "Screens classifier inputs for insertion and template backdoors \
             by substituting semantically meaningful words"
)]
struct Cli {
    /// Raise log verbosity and keep per-trial records in verdict exports.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class corpus.
    Simulate(SimulateArgs),
    /// Inject a backdoor into a labeled dataset.
    Poison(PoisonArgs),
    /// Train the bag-of-words victim classifier.
    Train(TrainArgs),
    /// Build the protected token sets from a reference corpus.
    BuildSets(BuildSetsArgs),
    /// Build the substitution dictionary from a model and token sets.
    BuildDict(BuildDictArgs),
    /// Screen sentences and export one verdict per line.
    Detect(DetectArgs),
    /// Infer target label, trigger template, and trigger tokens from verdicts.
    Forensics(ForensicsArgs),
    /// Run a seeded end-to-end poisoning and detection experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output dataset path (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Seed for sentence sampling; the vocabulary itself is fixed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON config: {"size", "split", "words_per_pool", "zipf_exponent"}.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PoisonArgs {
    /// Input dataset (JSONL, or TSV by extension). Never modified.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Attack: badnet | insertsent | template:N.
    #[arg(long)]
    attack: String,
    /// Label the attacker wants triggered inputs classified as.
    #[arg(long, default_value_t = 0)]
    target: LabelId,
    /// Fraction of examples to poison. With --rate, a training set is
    /// poisoned in place-preserving order; without it, an attack-success
    /// evaluation set is built (every non-target example poisoned).
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (JSONL, or TSV by extension).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildSetsArgs {
    /// Reference corpus for token frequencies (JSONL, or TSV by extension).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output token-sets path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Seed for frequency subsampling (only used with a sample_size).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON config: {"frequency_percentile", "sample_size"}.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildDictArgs {
    /// Trained model (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Token sets built by build-sets (JSON).
    #[arg(long)]
    sets: PathBuf,
    /// Output dictionary path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON config: {"dictionary_percentile"}.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained model (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Token sets (JSON).
    #[arg(long)]
    sets: PathBuf,
    /// Substitution dictionary (JSON).
    #[arg(long)]
    dict: PathBuf,
    /// Sentences to screen (JSONL, or TSV by extension).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output verdicts path (JSONL, one record per input line).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Substitution trials per sentence (default 10).
    #[arg(long)]
    n_iter: Option<usize>,
    /// Confidence the original label must keep for a trial to succeed.
    #[arg(long)]
    p_star: Option<f64>,
    /// Flag when the trial success fraction strictly exceeds this.
    #[arg(long)]
    zeta: Option<f64>,
}

#[derive(Args)]
struct ForensicsArgs {
    /// Verdicts produced by detect (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    /// Token sets (JSON), for ranking protected trigger tokens.
    #[arg(long)]
    sets: PathBuf,
    /// Output report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON): {"train_path", "test_path", ...settings}.
    /// Relative paths resolve against the config file's directory.
    #[arg(long)]
    config: PathBuf,
    /// Output report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

/// One exported verdict: the screened text plus the decision record.
#[derive(Serialize, Deserialize)]
struct VerdictRecord {
    text: String,
    #[serde(flatten)]
    verdict: DetectionVerdict,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; only real parse
            // failures are validation errors.
            let failed = e.use_stderr();
            let _ = e.print();
            return if failed { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = init_logging(cli.verbose) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// Validation failures exit 1; runtime failures (I/O, corrupt artifacts,
/// remote faults) exit 2. Context wrappers defer to their root cause.
fn exit_class(e: &Error) -> u8 {
    fn root(e: &Error) -> &Error {
        match e {
            Error::Context { source, .. } => root(source),
            other => other,
        }
    }
    match root(e) {
        Error::InvalidArgument(_) | Error::Malformed { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn init_logging(verbose: bool) -> Result<()> {
    let level = match std::env::var("SUBSTISIFT_LOG") {
        Ok(value) => match value.as_str() {
            "error" | "info" | "debug" => value,
            other => {
                return Err(Error::invalid(format!(
                    "SUBSTISIFT_LOG must be one of error, info, debug; got {other:?}"
                )))
            }
        },
        Err(std::env::VarError::NotPresent) => {
            if verbose { "info" } else { "error" }.to_string()
        }
        Err(e) => return Err(Error::invalid(format!("SUBSTISIFT_LOG: {e}"))),
    };
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .format_target(false)
        .try_init()
        .ok();
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Poison(a) => cmd_poison(a),
        Command::Train(a) => cmd_train(a),
        Command::BuildSets(a) => cmd_build_sets(a),
        Command::BuildDict(a) => cmd_build_dict(a),
        Command::Detect(a) => cmd_detect(a, cli.verbose),
        Command::Forensics(a) => cmd_forensics(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} not found: {}", path.display())))
    }
}

fn dataset_format(path: &Path) -> DatasetFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => DatasetFormat::Tsv,
        _ => DatasetFormat::Jsonl,
    }
}

fn read_dataset(path: &Path, what: &str) -> Result<Dataset> {
    require_file(path, what)?;
    let data = load_dataset(path, dataset_format(path))
        .map_err(|e| e.with_context(format!("{what} {}", path.display())))?;
    info!("loaded {} examples from {}", data.len(), path.display());
    Ok(data)
}

/// Configs are user-authored and validated before any side effect, so a
/// config that fails to parse is a validation error, not a runtime one.
fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    require_file(path, what)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{what} {}: {e}", path.display())))
}

fn parse_attack(spec: &str, target: LabelId) -> Result<AttackSpec> {
    match spec {
        "badnet" => Ok(AttackSpec::badnet(target)),
        "insertsent" => Ok(AttackSpec::insert_sent(target)),
        other => match other.strip_prefix("template:") {
            Some(id) => {
                let id: u8 = id.parse().map_err(|_| {
                    Error::invalid(format!("template id must be an integer, got {id:?}"))
                })?;
                AttackSpec::template(id, target)
            }
            None => Err(Error::invalid(format!(
                "attack must be badnet, insertsent, or template:N; got {other:?}"
            ))),
        },
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg: synth::SimulateConfig = match &a.config {
        Some(path) => read_json_config(path, "simulate config")?,
        None => synth::SimulateConfig::default(),
    };
    let data = synth::generate(&cfg, a.seed)?;
    save_dataset(&data, &a.out)?;
    println!("simulated {} examples ({} split) -> {}", data.len(), data.split(), a.out.display());
    Ok(())
}

fn cmd_poison(a: PoisonArgs) -> Result<()> {
    let data = read_dataset(&a.input, "input dataset")?;
    let attack = parse_attack(&a.attack, a.target)?;
    let (out, poisoned_count) = match a.rate {
        Some(rate) => {
            let (poisoned, plan) = poison_dataset(&data, &attack, rate, a.seed)?;
            (poisoned, plan.poisoned_indices.len())
        }
        None => {
            let poisoned = poison_testset(&data, &attack, a.seed)?;
            let n = poisoned.len();
            info!("dropped {} target-label examples", data.len() - n);
            (poisoned, n)
        }
    };
    save_dataset(&out, &a.out)?;
    println!(
        "poisoned {} of {} examples ({}) -> {}",
        poisoned_count,
        out.len(),
        attack.variant.name(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = read_dataset(&a.input, "training dataset")?;
    let model = train(&data, TrainConfig::default().with_seed(a.seed))?;
    let accuracy = evaluate_accuracy(&model, &data)?;
    model.save(&a.out)?;
    println!(
        "trained on {} examples ({} classes), in-sample accuracy {:.3} -> {}",
        data.len(),
        model.num_classes(),
        accuracy,
        a.out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetsConfig {
    #[serde(default = "default_frequency_percentile")]
    frequency_percentile: f64,
    #[serde(default)]
    sample_size: Option<usize>,
}

fn default_frequency_percentile() -> f64 {
    0.8
}

impl Default for SetsConfig {
    fn default() -> Self {
        SetsConfig { frequency_percentile: default_frequency_percentile(), sample_size: None }
    }
}

fn cmd_build_sets(a: BuildSetsArgs) -> Result<()> {
    let cfg: SetsConfig = match &a.config {
        Some(path) => read_json_config(path, "build-sets config")?,
        None => SetsConfig::default(),
    };
    let data = read_dataset(&a.input, "reference corpus")?;
    let table = token_frequencies(&data, cfg.sample_size.unwrap_or(data.len()), a.seed)?;
    let sets = build_token_sets(&table, cfg.frequency_percentile, TagLexicon::builtin(), &BTreeSet::new())?;
    sets.save(&a.out)?;
    println!(
        "token sets: {} special, {} high-frequency, {} in the substitution pool -> {}",
        sets.special.len(),
        sets.frequency.high().len(),
        sets.pool.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DictConfig {
    #[serde(default = "default_dictionary_percentile")]
    dictionary_percentile: f64,
}

fn default_dictionary_percentile() -> f64 {
    0.95
}

impl Default for DictConfig {
    fn default() -> Self {
        DictConfig { dictionary_percentile: default_dictionary_percentile() }
    }
}

fn cmd_build_dict(a: BuildDictArgs) -> Result<()> {
    let cfg: DictConfig = match &a.config {
        Some(path) => read_json_config(path, "build-dict config")?,
        None => DictConfig::default(),
    };
    require_file(&a.model, "model")?;
    require_file(&a.sets, "token sets")?;
    let model = ClassifierModel::load(&a.model)?;
    let sets = TokenSets::load(&a.sets)?;
    let dictionary =
        build_dictionary(&model, &sets.pool, TagLexicon::builtin(), cfg.dictionary_percentile)?;
    dictionary.save(&a.out)?;
    let (cells, entries) =
        dictionary.cells().fold((0usize, 0usize), |(c, e), (_, toks)| (c + 1, e + toks.len()));
    println!("dictionary: {entries} entries across {cells} cells -> {}", a.out.display());
    Ok(())
}

fn cmd_detect(a: DetectArgs, verbose: bool) -> Result<()> {
    require_file(&a.model, "model")?;
    require_file(&a.sets, "token sets")?;
    require_file(&a.dict, "dictionary")?;
    let model = ClassifierModel::load(&a.model)?;
    let sets = TokenSets::load(&a.sets)?;
    let dictionary = SubstitutionDictionary::load(&a.dict)?;
    if dictionary.num_classes() != model.num_classes() {
        return Err(Error::invalid(format!(
            "dictionary was built for {} classes but the model has {}",
            dictionary.num_classes(),
            model.num_classes()
        )));
    }
    let data = read_dataset(&a.input, "input dataset")?;

    let mut cfg = DetectorConfig { seed: a.seed, ..DetectorConfig::default() };
    if let Some(n) = a.n_iter {
        cfg.n_iter = n;
    }
    if let Some(p) = a.p_star {
        cfg.p_star = p;
    }
    if let Some(z) = a.zeta {
        cfg.zeta = z;
    }

    let ctx = DetectionContext {
        scorer: &model,
        dictionary: &dictionary,
        special: &sets.special,
        frequency: &sets.frequency,
        lexicon: TagLexicon::builtin(),
    };
    let sentences: Vec<Sentence> = data.iter().map(|e| e.sentence.clone()).collect();
    let verdicts = detect_batch(&sentences, &ctx, &cfg)?;

    let mut flagged = 0usize;
    let mut lines = String::new();
    for (example, verdict) in data.iter().zip(verdicts) {
        flagged += usize::from(verdict.flagged);
        let verdict = if verbose { verdict } else { verdict.without_trials() };
        let record = VerdictRecord { text: detokenize(&example.sentence), verdict };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    atomic_write(&a.out, lines.as_bytes())?;
    println!("flagged {flagged} of {} sentences -> {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_forensics(a: ForensicsArgs) -> Result<()> {
    require_file(&a.input, "verdicts file")?;
    require_file(&a.sets, "token sets")?;
    let sets = TokenSets::load(&a.sets)?;

    let text = std::fs::read_to_string(&a.input)?;
    let mut flagged: Vec<(Sentence, LabelId)> = Vec::new();
    let mut total = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: VerdictRecord = serde_json::from_str(line)
            .map_err(|e| Error::Malformed { line: i + 1, message: e.to_string() })?;
        total += 1;
        if record.verdict.flagged {
            flagged.push((tokenize(&record.text), record.verdict.original_label));
        }
    }
    info!("{} of {total} verdicts are flagged", flagged.len());

    let report = analyze(&flagged, &sets.special, &sets.frequency)?;
    atomic_write(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!(
        "target label {} (share {:.2}), template {} (tsr {:.2}, shr {:.2}) -> {}",
        report.target_label,
        report.tlr,
        report.trigger_template,
        report.tsr,
        report.shr,
        a.out.display()
    );
    Ok(())
}

/// On-disk experiment description: where the data lives plus the full
/// experiment settings, flattened alongside.
#[derive(Deserialize)]
struct ExperimentFile {
    train_path: PathBuf,
    test_path: PathBuf,
    #[serde(flatten)]
    experiment: ExperimentConfig,
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let file: ExperimentFile = read_json_config(&a.config, "experiment config")?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let train_data = read_dataset(&resolve(&file.train_path), "train dataset")?;
    let test_data = read_dataset(&resolve(&file.test_path), "test dataset")?;
    let report = run_experiment(&train_data, &test_data, &file.experiment)?;
    report.save(&a.out)?;
    print!("{}", render_table(&report));
    println!("report -> {}", a.out.display());
    Ok(())
}
