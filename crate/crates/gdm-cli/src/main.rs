//! `gdm`: select support/affiliated features on sparse data, train and run
//! the evaluation classifier, generate synthetic benchmarks, and sweep
//! feature counts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
//! non-convergence. Diagnostics go to stderr; data goes to stdout or files.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use gdm_core::bench::{self, MetricSet, SweepInput, SweepSpec};
use gdm_core::corr::{self, RedNormalizer};
use gdm_core::data;
use gdm_core::error::{GdmError, Result};
use gdm_core::gdm::{self, FitOptions, GdmConfig};
use gdm_core::model_file::{write_atomic, ModelFile};
use gdm_core::synth::{self, GroundTruth, SynthConfig};

#[derive(Parser)]
#[command(
    name = "gdm",
    about = "Correlation-constrained support/affiliated feature selection",
    version = concat!(env!("CARGO_PKG_VERSION"), " (model schema gdm-model/1)")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a selection model and write it as JSON.
    Select(SelectArgs),
    /// Predict labels with a model's embedded classifier.
    Predict(PredictArgs),
    /// Generate a synthetic train/test pair with ground truth.
    Synth(SynthArgs),
    /// Score a model against a ground-truth file.
    EvalRecovery(EvalRecoveryArgs),
    /// Redundancy rate of a feature set.
    Redundancy(RedundancyArgs),
    /// Sweep target feature counts and emit CSV rows.
    Sweep(SweepArgs),
}

/// Flags shared by subcommands that run the selection engine. Every value
/// can also come from a `--config` key-value file; explicit flags win.
#[derive(Args, Clone)]
struct EngineArgs {
    /// Support budget per constraint search (B).
    #[arg(long)]
    budget: Option<usize>,
    /// Total target feature count: shorthand for --budget K with early
    /// stopping deciding the iteration count.
    #[arg(long, conflicts_with = "budget")]
    target_features: Option<usize>,
    /// Maximum outer iterations (T).
    #[arg(long)]
    iterations: Option<usize>,
    /// Correlation threshold parameter in (0,1).
    #[arg(long)]
    tau: Option<f64>,
    /// SVM trade-off.
    #[arg(long = "C")]
    c_param: Option<f64>,
    /// Subproblem tolerance.
    #[arg(long)]
    tol_sub: Option<f64>,
    /// Relative violation tolerance for outer stopping.
    #[arg(long)]
    tol_cut: Option<f64>,
    /// Seed for synthetic/evaluation paths.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Key-value file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl EngineArgs {
    /// Merge precedence: explicit flag > config file > default.
    fn resolve(&self) -> Result<(GdmConfig, Option<usize>)> {
        let table: toml::Table = match &self.config {
            Some(path) => std::fs::read_to_string(path)?
                .parse()
                .map_err(|e| GdmError::InvalidConfig(format!("config file: {e}")))?,
            None => toml::Table::new(),
        };
        let get_f64 = |key: &str| table.get(key).and_then(toml::Value::as_float);
        let get_int = |key: &str| {
            table
                .get(key)
                .and_then(toml::Value::as_integer)
                .map(|v| v as usize)
        };

        let target = self.target_features.or(get_int("target_features"));
        let budget = self.budget.or(get_int("budget"));
        let budget = match (budget, target) {
            (Some(b), None) => b,
            (None, Some(k)) => k,
            (None, None) => {
                return Err(GdmError::InvalidConfig(
                    "one of --budget or --target-features is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(GdmError::InvalidConfig(
                    "--budget and --target-features are mutually exclusive".into(),
                ))
            }
        };

        let mut config = GdmConfig::new(budget);
        if let Some(t) = self.iterations.or(get_int("iterations")) {
            config.max_iterations = t;
        }
        if let Some(v) = self.tau.or(get_f64("tau")) {
            config.tau = v;
        }
        if let Some(v) = self.c_param.or(get_f64("c")) {
            config.c_param = v;
        }
        if let Some(v) = self.tol_sub.or(get_f64("tol_sub")) {
            config.eps_sub = v;
        }
        if let Some(v) = self.tol_cut.or(get_f64("tol_cut")) {
            config.eps_cut = v;
        }
        let seed_from_file = table
            .get("seed")
            .and_then(toml::Value::as_integer)
            .map(|v| v as u64);
        if let Some(v) = self.seed.or(seed_from_file) {
            config.seed = v;
        }
        config.validate()?;

        let threads = self.threads.or(get_int("threads"));
        Ok((config, threads))
    }
}

#[derive(Args)]
struct SelectArgs {
    /// Training data in LIBSVM format (.gz transparent).
    #[arg(long)]
    data: PathBuf,
    /// Fix the feature-space dimension instead of inferring the maximum.
    #[arg(long)]
    dimensions: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Train the embedded classifier on support plus affiliated features.
    #[arg(long, action = ArgAction::SetTrue)]
    with_affiliated: bool,
    /// Augment the evaluation classifier with a constant feature.
    #[arg(long, action = ArgAction::SetTrue)]
    augment_bias: bool,
    /// Dump each constraint search's scan as JSON lines on stderr.
    #[arg(long, action = ArgAction::SetTrue)]
    trace_crm: bool,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Data to predict on, LIBSVM format.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 2000)]
    features: usize,
    #[arg(long, default_value_t = 40)]
    groups: usize,
    /// Number of groups with more than one member.
    #[arg(long, default_value_t = 8)]
    correlated: usize,
    #[arg(long, default_value_t = 4)]
    group_size_min: usize,
    #[arg(long, default_value_t = 8)]
    group_size_max: usize,
    #[arg(long, default_value_t = 0.9)]
    within_corr: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_level: f64,
    #[arg(long, default_value_t = 0.1)]
    label_noise: f64,
    /// Redraw group weights until |w| reaches this floor (0 = plain normal).
    #[arg(long, default_value_t = 0.0)]
    min_abs_weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

impl SynthArgs {
    fn to_config(&self) -> SynthConfig {
        SynthConfig {
            n_samples: self.samples,
            n_features: self.features,
            n_groups: self.groups,
            n_correlated_groups: self.correlated,
            group_size_range: (self.group_size_min, self.group_size_max),
            within_group_corr: self.within_corr,
            noise_level: self.noise_level,
            label_noise: self.label_noise,
            min_abs_weight: self.min_abs_weight,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct EvalRecoveryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct RedundancyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dimensions: Option<usize>,
    /// Comma-separated 0-based feature indices.
    #[arg(long, value_delimiter = ',', conflicts_with = "features_json")]
    features: Vec<usize>,
    /// JSON file holding an array of 0-based feature indices.
    #[arg(long)]
    features_json: Option<PathBuf>,
    /// Use the mean over unordered pairs instead of the m(m-1) normalizer.
    #[arg(long, action = ArgAction::SetTrue)]
    red_mean_pairs: bool,
    /// Write one row per feature pair to this CSV path.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Fixed training data (mutually exclusive with --synth).
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Generate synthetic data per seed instead of reading files.
    #[arg(long, action = ArgAction::SetTrue, conflicts_with = "train")]
    synth: bool,
    #[command(flatten)]
    synth_args: SynthSweepArgs,
    /// Ascending target feature counts.
    #[arg(long, value_delimiter = ',', required = true)]
    feature_counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Subset of accuracy,red,time,recovery (default: all).
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Count data preparation into the wall time column.
    #[arg(long, action = ArgAction::SetTrue)]
    include_prep_time: bool,
    #[arg(long, action = ArgAction::SetTrue)]
    red_mean_pairs: bool,
    #[command(flatten)]
    engine: EngineArgs,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON aggregate output path.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

/// Synth generator knobs for `sweep --synth`, prefixed to avoid clashing
/// with the file flags.
#[derive(Args, Clone)]
struct SynthSweepArgs {
    #[arg(long, default_value_t = 512)]
    synth_samples: usize,
    #[arg(long, default_value_t = 2000)]
    synth_features: usize,
    #[arg(long, default_value_t = 40)]
    synth_groups: usize,
    #[arg(long, default_value_t = 8)]
    synth_correlated: usize,
    #[arg(long, default_value_t = 4)]
    synth_group_size_min: usize,
    #[arg(long, default_value_t = 8)]
    synth_group_size_max: usize,
    #[arg(long, default_value_t = 0.9)]
    synth_within_corr: f64,
    #[arg(long, default_value_t = 0.1)]
    synth_noise_level: f64,
    #[arg(long, default_value_t = 0.1)]
    synth_label_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    synth_min_abs_weight: f64,
}

impl SynthSweepArgs {
    fn to_config(&self) -> SynthConfig {
        SynthConfig {
            n_samples: self.synth_samples,
            n_features: self.synth_features,
            n_groups: self.synth_groups,
            n_correlated_groups: self.synth_correlated,
            group_size_range: (self.synth_group_size_min, self.synth_group_size_max),
            within_group_corr: self.synth_within_corr,
            noise_level: self.synth_noise_level,
            label_noise: self.synth_label_noise,
            min_abs_weight: self.synth_min_abs_weight,
            seed: 0,
        }
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(k) = threads {
        // Ignore the error when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global();
    }
}

fn run_select(args: SelectArgs) -> Result<()> {
    let (config, threads) = args.engine.resolve()?;
    init_threads(threads);
    let ds = data::load_libsvm_path(&args.data, args.dimensions)?;
    let (model, state) = gdm::fit_with_options(
        &ds,
        &config,
        FitOptions {
            trace_crm: args.trace_crm,
        },
    )?;
    if let Some(traces) = &state.crm_traces {
        for (i, tr) in traces.iter().enumerate() {
            eprintln!(
                "crm[{}]: {}",
                i + 1,
                serde_json::to_string(tr).unwrap_or_default()
            );
        }
    }
    let svm = gdm::final_classifier(&ds, &model, &config, args.with_affiliated, args.augment_bias)?;
    let file = ModelFile::assemble(&model, &state, Some((svm, args.with_affiliated)));
    file.save_atomic(&args.out)?;
    eprintln!(
        "selected {} support features in {} groups ({} constraints, theta {:.6e}, stop: {:?})",
        model.support.len(),
        model.groups.len(),
        model.per_constraint.len(),
        state.theta,
        state.stop_reason,
    );
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let svm = file.classifier.as_ref().ok_or_else(|| {
        GdmError::ModelFile("model has no embedded classifier; re-run select".into())
    })?;
    let ds = data::load_libsvm_path(&args.data, Some(file.n_features))?;
    let dv = svm.decision_values(&ds)?;
    let mut csv = String::from("sample,predicted,decision\n");
    let mut hits = 0usize;
    for (i, &v) in dv.iter().enumerate() {
        let label: i8 = if v >= 0.0 { 1 } else { -1 };
        if label == ds.labels()[i] {
            hits += 1;
        }
        csv.push_str(&format!("{i},{label},{v}\n"));
    }
    match &args.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    eprintln!(
        "accuracy against file labels: {:.4}",
        hits as f64 / ds.n_samples() as f64
    );
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let config = args.to_config();
    let (train, test, truth) = synth::generate(&config)?;
    for (ds, path) in [(&train, &args.out_train), (&test, &args.out_test)] {
        let mut buf = Vec::new();
        data::write_libsvm(ds, &mut buf)?;
        write_atomic(path, &buf)?;
    }
    truth.save(&args.out_truth)?;
    eprintln!(
        "wrote {}x{} train/test with {} informative features",
        config.n_samples,
        config.n_features,
        truth.informative().count(),
    );
    Ok(())
}

fn run_eval_recovery(args: EvalRecoveryArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?.selection_model();
    let truth = GroundTruth::load(&args.truth)?;
    let report = synth::recovery_score(&model, &truth);
    match args.format.as_str() {
        "json" => println!("{}", serde_json::to_string_pretty(&report)?),
        "csv" => {
            println!("group_hit_rate,support_purity,affiliation_coverage,exclusivity_violations,n_supports,n_groups_hit");
            println!(
                "{},{},{},{},{},{}",
                report.group_hit_rate,
                report.support_purity,
                report.affiliation_coverage,
                report.exclusivity_violations,
                report.n_supports,
                report.n_groups_hit
            );
        }
        other => {
            return Err(GdmError::InvalidConfig(format!(
                "unknown format '{other}' (expected json or csv)"
            )))
        }
    }
    Ok(())
}

fn run_redundancy(args: RedundancyArgs) -> Result<()> {
    let ds = data::load_libsvm_path(&args.data, args.dimensions)?;
    let features: Vec<usize> = if let Some(path) = &args.features_json {
        serde_json::from_slice(&std::fs::read(path)?)?
    } else {
        args.features.clone()
    };
    if features.is_empty() {
        return Err(GdmError::InvalidConfig(
            "provide --features or --features-json".into(),
        ));
    }
    let norm = if args.red_mean_pairs {
        RedNormalizer::MeanPairs
    } else {
        RedNormalizer::OrderedPairs
    };
    let red = corr::redundancy_rate(&ds, &features, norm)?;
    println!("{red}");
    if let Some(path) = &args.pairs_out {
        let mut csv = String::from("i,j,rho\n");
        for (i, j, rho) in corr::pairwise_correlations(&ds, &features)? {
            csv.push_str(&format!("{i},{j},{rho}\n"));
        }
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(())
}

fn parse_metrics(names: &[String]) -> Result<MetricSet> {
    if names.is_empty() {
        return Ok(MetricSet {
            recovery: true,
            ..MetricSet::default()
        });
    }
    let mut set = MetricSet {
        accuracy: false,
        red: false,
        time: false,
        recovery: false,
    };
    for name in names {
        match name.as_str() {
            "accuracy" => set.accuracy = true,
            "red" => set.red = true,
            "time" => set.time = true,
            "recovery" => set.recovery = true,
            other => {
                return Err(GdmError::InvalidConfig(format!(
                    "unknown metric '{other}' (expected accuracy,red,time,recovery)"
                )))
            }
        }
    }
    Ok(set)
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let (base, threads) = {
        // Budget comes from the sweep's feature counts; a placeholder
        // satisfies the engine resolution.
        let mut engine = args.engine.clone();
        if engine.budget.is_none() && engine.target_features.is_none() {
            engine.budget = Some(1);
        }
        engine.resolve()?
    };
    init_threads(threads);

    let mut spec = SweepSpec::new(args.feature_counts.clone(), args.seeds.clone())?;
    spec.metrics = parse_metrics(&args.metrics)?;
    spec.include_prep_time = args.include_prep_time;
    spec.red_normalizer = if args.red_mean_pairs {
        RedNormalizer::MeanPairs
    } else {
        RedNormalizer::OrderedPairs
    };

    let loaded;
    let input = if args.synth {
        SweepInput::Synth(args.synth_args.to_config())
    } else {
        let train_path = args
            .train
            .as_ref()
            .ok_or_else(|| GdmError::InvalidConfig("provide --train/--test or --synth".into()))?;
        let test_path = args.test.as_ref().unwrap();
        let train = data::load_libsvm_path(train_path, None)?;
        let test = data::load_libsvm_path(test_path, Some(train.n_features()))?;
        loaded = (train, test);
        SweepInput::Files {
            train: &loaded.0,
            test: &loaded.1,
        }
    };

    let rows = bench::run_sweep(&input, &spec, &base);
    let mut buf = Vec::new();
    bench::write_csv(&rows, &mut buf)?;
    match &args.out {
        Some(path) => write_atomic(path, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    if let Some(path) = &args.summary_out {
        let summary = serde_json::to_string_pretty(&bench::summary_json(&rows))?;
        write_atomic(path, summary.as_bytes())?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("sweep finished: {} rows, {} failed cells", rows.len(), failed);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(args) => run_select(args),
        Command::Predict(args) => run_predict(args),
        Command::Synth(args) => run_synth(args),
        Command::EvalRecovery(args) => run_eval_recovery(args),
        Command::Redundancy(args) => run_redundancy(args),
        Command::Sweep(args) => run_sweep(args),
    }
}

fn main() -> ExitCode {
    // Keep exit codes aligned: usage problems are 1, help/version are 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
