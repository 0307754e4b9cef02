//! Command-line front end: `eval`, `stats`, `rescore`, `attack`, `analyze`
//! and `synth`.
//!
//! [`run`] returns the process exit code: 0 on success, 1 when inputs or
//! flags fail validation (with a one-line JSON error on stderr), 2 on
//! usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use sgbench_core::analysis::{export_matrix, mean_output_matrix, ExportFormat, OutputSource};
use sgbench_core::attack::attack_sweep;
use sgbench_core::corpus::save_predictions;
use sgbench_core::pko::{pko_only_predict, rescore, LabelSource, SignMode};
use sgbench_core::stats::{
    build_cooccurrence_from, normalize_stats, CooccurrenceStats, DEFAULT_EPSILON,
};
use sgbench_core::synthgen::{generate, SynthParams};
use sgbench_core::{
    evaluate, load_ground_truth, load_predictions, load_vocab, Error, GtCorpus, ImrScore,
    MatchMode, MetricConfig, PredCorpus, Result, Split, Task, Vocab,
};

#[derive(Parser, Debug)]
#[command(
    name = "sgbench",
    version,
    about = "Scene graph generation evaluation toolkit"
)]
struct Cli {
    /// Worker threads for per-image evaluation (0 = all cores).
    #[arg(long, global = true, env = "SGBENCH_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute R@K, mR@K, IMR@K and wIMR@K for a prediction dump.
    Eval(EvalArgs),
    /// Build co-occurrence statistics from training annotations.
    Stats(StatsArgs),
    /// Add the co-occurrence prior bias to prediction logits.
    Rescore(RescoreArgs),
    /// Sweep the tail-replacement attack over N.
    Attack(AttackArgs),
    /// Export per-predicate mean output matrices.
    Analyze(AnalyzeArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Predcls,
    Sgcls,
    Sgdet,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ImrScoreArg {
    Prob,
    Raw,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SignArg {
    Paper,
    Flipped,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LabelSourceArg {
    Gt,
    Pred,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SourceArg {
    Logit,
    Prob,
}

#[derive(Args, Debug)]
struct MetricArgs {
    /// Cutoffs for R@K and mR@K.
    #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
    k_global: Vec<usize>,
    /// Cutoffs for IMR@K and wIMR@K.
    #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
    k_imr: Vec<usize>,
    /// Diversity weighting exponent for wIMR, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Box IoU threshold for sgdet matching.
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    /// Evaluation setting.
    #[arg(long, value_enum, default_value_t = ModeArg::Predcls)]
    mode: ModeArg,
    /// Keep only the top predicate per pair in the global ranking [default].
    #[arg(long, overrides_with = "no_graph_constraint")]
    graph_constraint: bool,
    /// Let every predicate of every pair enter the global ranking.
    #[arg(long, overrides_with = "graph_constraint")]
    no_graph_constraint: bool,
    /// Score used to rank a category's independent list.
    #[arg(long, value_enum, default_value_t = ImrScoreArg::Prob)]
    imr_score: ImrScoreArg,
}

impl MetricArgs {
    fn config(&self) -> Result<MetricConfig> {
        let task = match self.mode {
            ModeArg::Predcls => Task::PredCls,
            ModeArg::Sgcls => Task::SgCls,
            ModeArg::Sgdet => Task::SgDet,
        };
        let config = MetricConfig {
            k_global: self.k_global.clone(),
            k_independent: self.k_imr.clone(),
            tau: self.tau,
            graph_constraint: !self.no_graph_constraint,
            mode: MatchMode::new(task, self.iou_threshold)?,
            imr_score: match self.imr_score {
                ImrScoreArg::Prob => ImrScore::Prob,
                ImrScoreArg::Raw => ImrScore::Raw,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct PkoArgs {
    /// Sign of the prior bias added to logits.
    #[arg(long, value_enum, default_value_t = SignArg::Paper)]
    pko_sign: SignArg,
    /// Additive smoothing applied to co-occurrence counts.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pko_epsilon: f64,
}

impl PkoArgs {
    fn sign(&self) -> SignMode {
        match self.pko_sign {
            SignArg::Paper => SignMode::Paper,
            SignArg::Flipped => SignMode::Flipped,
        }
    }
}

fn label_source(arg: LabelSourceArg) -> LabelSource {
    match arg {
        LabelSourceArg::Gt => LabelSource::GroundTruth,
        LabelSourceArg::Pred => LabelSource::Predicted,
    }
}

/// Where co-occurrence statistics come from: a saved file or training
/// annotations counted on the fly.
#[derive(Args, Debug)]
struct StatsSource {
    /// Saved statistics (stats.json).
    #[arg(long, conflicts_with = "train")]
    stats: Option<PathBuf>,
    /// Training annotations to count.
    #[arg(long)]
    train: Option<PathBuf>,
}

impl StatsSource {
    fn load(&self, vocab: &Vocab) -> Result<Option<CooccurrenceStats>> {
        if let Some(path) = &self.stats {
            let (stats, _) = CooccurrenceStats::load(path)?;
            if stats.num_objects() != vocab.num_objects()
                || stats.num_predicates() != vocab.num_predicates()
            {
                return Err(Error::VocabMismatch(format!(
                    "{} does not match the vocabulary sizes",
                    path.display()
                )));
            }
            return Ok(Some(stats));
        }
        match &self.train {
            Some(path) => {
                let train = load_ground_truth(path, vocab)?.with_split(Split::Train);
                Ok(Some(build_cooccurrence_from(&[&train])))
            }
            None => Ok(None),
        }
    }

    fn require(&self, vocab: &Vocab) -> Result<CooccurrenceStats> {
        self.load(vocab)?
            .ok_or_else(|| Error::InvalidConfig("either --stats or --train is required".into()))
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Vocabulary file (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// Test annotations (JSONL).
    #[arg(long)]
    gt: PathBuf,
    /// Prediction dump (JSONL).
    #[arg(long)]
    preds: PathBuf,
    /// Output directory for report.json and per_category.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Diversity counts for wIMR; omitted from the report when absent.
    #[command(flatten)]
    source: StatsSource,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Vocabulary file (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// Training annotations (JSONL).
    #[arg(long)]
    train: PathBuf,
    /// Further annotation files counted together with --train.
    #[arg(long)]
    extra_gt: Vec<PathBuf>,
    /// Smoothing recorded in stats.json.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pko_epsilon: f64,
    /// Output directory for stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RescoreArgs {
    /// Vocabulary file (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// Predictions to rescore; not used with --pko-only.
    #[arg(long, required_unless_present = "pko_only")]
    preds: Option<PathBuf>,
    /// Ground truth; needed with --label-source gt and --pko-only.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Score the ground-truth pairs from the prior alone.
    #[arg(long, requires = "gt")]
    pko_only: bool,
    /// Which object labels select the prior of each pair.
    #[arg(long, value_enum, default_value_t = LabelSourceArg::Gt)]
    label_source: LabelSourceArg,
    #[command(flatten)]
    pko: PkoArgs,
    #[command(flatten)]
    source: StatsSource,
    /// Output directory for preds.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// Vocabulary file (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// Test annotations (JSONL).
    #[arg(long)]
    gt: PathBuf,
    /// Prediction dump (JSONL).
    #[arg(long)]
    preds: PathBuf,
    /// Largest number of replaced predicates.
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    /// Which object labels select the prior of each pair.
    #[arg(long, value_enum, default_value_t = LabelSourceArg::Gt)]
    label_source: LabelSourceArg,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    source: StatsSource,
    /// Output directory for attack_sweep.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Vocabulary file (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// Test annotations (JSONL).
    #[arg(long)]
    gt: PathBuf,
    /// Prediction dump (JSONL).
    #[arg(long)]
    preds: PathBuf,
    /// Average probabilities (global sum) or logits (global min-max).
    #[arg(long, value_enum, default_value_t = SourceArg::Prob)]
    source: SourceArg,
    /// Output directory for mean_output.csv and mean_output.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Random seed; required, there is no default.
    #[arg(long)]
    seed: u64,
    /// JSON parameter file; its seed is replaced by --seed.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    num_objects: usize,
    #[arg(long, default_value_t = 8)]
    num_predicates: usize,
    /// Test images.
    #[arg(long, default_value_t = 20)]
    num_images: usize,
    #[arg(long, default_value_t = 50)]
    num_train_images: usize,
    #[arg(long, default_value_t = 5)]
    pairs_per_image: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Output directory for the corpus files and params.json.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => return report(&Error::InvalidConfig(e.to_string())),
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    let line = serde_json::json!({
        "error": e.code(),
        "line": e.line(),
        "message": e.to_string(),
    });
    eprintln!("{line}");
    1
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Eval(a) => cmd_eval(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Rescore(a) => cmd_rescore(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_pair(vocab: &Path, gt: &Path, preds: &Path) -> Result<(Vocab, GtCorpus, PredCorpus)> {
    let vocab = load_vocab(vocab)?;
    let gt = load_ground_truth(gt, &vocab)?;
    let preds = load_predictions(preds, &vocab)?;
    Ok((vocab, gt, preds))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let config = a.metrics.config()?;
    let (vocab, gt, preds) = load_pair(&a.vocab, &a.gt, &a.preds)?;
    let stats = a.source.load(&vocab)?;
    let report = evaluate(&gt, &preds, &config, stats.as_ref().map(|s| s.n.as_slice()))?;
    report.write(&a.out, vocab.predicates())?;
    for (name, k, value) in report.aggregates.entries() {
        println!("{name}@{k}\t{value:.6}");
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    if !(a.pko_epsilon.is_finite() && a.pko_epsilon > 0.0) {
        return Err(Error::InvalidConfig(
            "--pko-epsilon must be positive".into(),
        ));
    }
    let vocab = load_vocab(&a.vocab)?;
    let mut corpora = vec![load_ground_truth(&a.train, &vocab)?.with_split(Split::Train)];
    for path in &a.extra_gt {
        corpora.push(load_ground_truth(path, &vocab)?);
    }
    let refs: Vec<&GtCorpus> = corpora.iter().collect();
    let stats = build_cooccurrence_from(&refs);
    create_dir(&a.out)?;
    stats.save(a.pko_epsilon, a.out.join("stats.json"))
}

fn cmd_rescore(a: RescoreArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let stats = a.source.require(&vocab)?;
    let ns = normalize_stats(&stats, a.pko.pko_epsilon)?;
    let gt =
        a.gt.as_ref()
            .map(|p| load_ground_truth(p, &vocab))
            .transpose()?;
    let out = if a.pko_only {
        let gt = gt.as_ref().expect("clap enforces --gt with --pko-only");
        pko_only_predict(&ns, gt)?
    } else {
        let path = a.preds.as_ref().expect("clap enforces --preds");
        let preds = load_predictions(path, &vocab)?;
        rescore(
            &preds,
            &ns,
            a.pko.sign(),
            label_source(a.label_source),
            gt.as_ref(),
        )?
    };
    create_dir(&a.out)?;
    save_predictions(&out, a.out.join("preds.jsonl"))
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let config = a.metrics.config()?;
    let (vocab, gt, preds) = load_pair(&a.vocab, &a.gt, &a.preds)?;
    let stats = a.source.require(&vocab)?;
    let sweep = attack_sweep(
        &gt,
        &preds,
        &stats,
        a.n_max,
        &config,
        label_source(a.label_source),
    )?;
    create_dir(&a.out)?;
    write_file(
        &a.out.join("attack_sweep.csv"),
        &sweep.to_csv(vocab.predicates()),
    )
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let (_, gt, preds) = load_pair(&a.vocab, &a.gt, &a.preds)?;
    let source = match a.source {
        SourceArg::Logit => OutputSource::Logit,
        SourceArg::Prob => OutputSource::Prob,
    };
    let m = mean_output_matrix(&gt, &preds, source);
    create_dir(&a.out)?;
    export_matrix(&m, &a.out.join("mean_output.csv"), ExportFormat::Csv)?;
    export_matrix(&m, &a.out.join("mean_output.json"), ExportFormat::Json)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let params = match &a.params {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut p: SynthParams =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            p.seed = a.seed;
            p
        }
        None => {
            let mut p = SynthParams::basic(a.seed, a.num_objects, a.num_predicates);
            p.num_images = a.num_images;
            p.num_train_images = a.num_train_images;
            p.pairs_per_image = a.pairs_per_image;
            p.zipf_exponent = a.zipf_exponent;
            p.noise_sigma = a.noise_sigma;
            p
        }
    };
    generate(&params)?.write(&a.out)
}
