//! Command-line workflows: generate data, train models, score, evaluate,
//! and export curves. Every run writes a `<output>.run.json` echo of the
//! fully resolved configuration next to its outputs, and every stochastic
//! step is seed-controlled, so runs are reproducible byte for byte (wall
//! clock latency fields aside).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::datagen::{self, Dataset, GenConfig};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestConfig, SmoothingConfig, TauEstimator, UpliftForest};
use crate::gated_net::{self, LossMode, NetArtifact, TrainConfig};
use crate::losses::{FocalConfig, HybridWeights};
use crate::metrics::{self, latency_probe, uplift_curve};
use crate::UpliftScorer;

#[derive(Debug, Parser)]
#[command(
    name = "ziln-uplift",
    version,
    about = "Zero-inflated lognormal uplift modeling: synthetic benchmarks, forest and gated-net training, scoring, and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic zero-inflated benchmark CSV.
    Generate(GenerateArgs),
    /// Fit an uplift forest and save it as JSON.
    TrainForest(TrainForestArgs),
    /// Train the treatment-gated net and save it as JSON.
    TrainNet(TrainNetArgs),
    /// Append a model-score column to a dataset CSV.
    Score(ScoreArgs),
    /// Train and evaluate models across seeds; emit a metrics table.
    Evaluate(EvaluateArgs),
    /// Export the uplift curve of a model on a dataset as CSV.
    Curve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 34)]
    pub binary: usize,
    #[arg(long, default_value_t = 66)]
    pub continuous: usize,
    #[arg(long, default_value_t = 0.83)]
    pub zero_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub treatment_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub heterogeneity: f64,
    #[arg(long, default_value_t = 0.8)]
    pub sigma_y: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenerateArgs {
    fn config(&self) -> GenConfig {
        GenConfig {
            n_accounts: self.rows,
            n_binary: self.binary,
            n_continuous: self.continuous,
            zero_fraction_target: self.zero_fraction,
            treatment_fraction: self.treatment_fraction,
            heterogeneity_strength: self.heterogeneity,
            sigma_y: self.sigma_y,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainForestArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_p: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_reg: f64,
    /// Disable per-tree bootstrap resampling.
    #[arg(long, default_value_t = false)]
    pub no_bootstrap: bool,
    /// Fraction of features tried per split (default sqrt(d)/d).
    #[arg(long)]
    pub feature_subsample: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub min_leaf_treated: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf_control: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::RobustZiln)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    /// Smoothed zero-inflated lognormal expectations.
    RobustZiln,
    /// Pooled mean outcome: the treatment-blind propensity baseline.
    OutcomeMean,
}

impl From<EstimatorArg> for TauEstimator {
    fn from(v: EstimatorArg) -> Self {
        match v {
            EstimatorArg::RobustZiln => TauEstimator::RobustZiln,
            EstimatorArg::OutcomeMean => TauEstimator::OutcomeMean,
        }
    }
}

impl TrainForestArgs {
    fn config(&self) -> Result<ForestConfig> {
        Ok(ForestConfig {
            n_trees: self.trees,
            max_depth: self.max_depth,
            smoothing: SmoothingConfig::new(self.alpha_p, self.alpha_reg)?,
            bootstrap: !self.no_bootstrap,
            feature_subsample: self.feature_subsample,
            min_leaf_treated: self.min_leaf_treated,
            min_leaf_control: self.min_leaf_control,
            estimator: self.estimator.into(),
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    /// Focal propensity + lognormal regression + value-weighted ranking.
    Hybrid,
    /// Squared error on the factual expectation (ablation baseline).
    SquaredError,
}

impl From<LossArg> for LossMode {
    fn from(v: LossArg) -> Self {
        match v {
            LossArg::Hybrid => LossMode::Hybrid,
            LossArg::SquaredError => LossMode::SquaredError,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainNetArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Focal focusing parameter gamma.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Focal balance factor alpha.
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    /// Weight of the ranking term against the distribution loss.
    #[arg(long, default_value_t = 0.05)]
    pub lambda_rank: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Hybrid)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 8)]
    pub embed: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub head: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainNetArgs {
    fn configs(&self) -> Result<(TrainConfig, FocalConfig, HybridWeights)> {
        let train = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            d_embed: self.embed,
            d_hidden: self.hidden,
            d_head: self.head,
            loss_mode: self.loss.into(),
            seed: self.seed,
            ..TrainConfig::default()
        };
        Ok((
            train,
            FocalConfig::new(self.gamma, self.alpha)?,
            HybridWeights::new(self.lambda_rank)?,
        ))
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model artifact (forest or net JSON; the kind is detected).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Name of the appended score column.
    #[arg(long, default_value = "score")]
    pub column: String,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV: fraction,lift,random_baseline.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    ZilnForest,
    BaselineForest,
    GatedNet,
}

impl ModelArg {
    fn label(self) -> &'static str {
        match self {
            ModelArg::ZilnForest => "ziln_forest",
            ModelArg::BaselineForest => "baseline_forest",
            ModelArg::GatedNet => "gated_net",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Models to train and evaluate.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![ModelArg::ZilnForest, ModelArg::BaselineForest, ModelArg::GatedNet])]
    pub models: Vec<ModelArg>,
    /// Number of seeds; runs use seed_base, seed_base+1, ...
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub seed_base: u64,
    /// Fraction of rows used for training; the rest is evaluated.
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub latency_repeats: usize,
    #[command(flatten)]
    pub gen: EvalGenArgs,
    #[command(flatten)]
    pub forest: EvalForestArgs,
    #[command(flatten)]
    pub net: EvalNetArgs,
}

#[derive(Debug, Args)]
pub struct EvalGenArgs {
    #[arg(long, default_value_t = 20_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 34)]
    pub binary: usize,
    #[arg(long, default_value_t = 66)]
    pub continuous: usize,
    #[arg(long, default_value_t = 0.83)]
    pub zero_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub heterogeneity: f64,
}

#[derive(Debug, Args)]
pub struct EvalForestArgs {
    #[arg(long, default_value_t = 20)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
}

#[derive(Debug, Args)]
pub struct EvalNetArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lambda_rank: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Hybrid)]
    pub net_loss: LossArg,
}

/// Echo the resolved configuration as `<out stem>.run.json`.
fn write_run_echo<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    #[derive(Serialize)]
    struct RunEcho<'a, T> {
        command: &'a str,
        config: &'a T,
    }
    let echo_path = out.with_extension("run.json");
    std::fs::write(
        echo_path,
        serde_json::to_string_pretty(&RunEcho { command, config })?,
    )?;
    Ok(())
}

/// Load either kind of model artifact by sniffing its `kind` field.
pub fn load_model(path: &Path) -> Result<Box<dyn UpliftScorer>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("ziln_uplift_forest") => Ok(Box::new(UpliftForest::load(path)?)),
        Some("gated_net") => Ok(Box::new(NetArtifact::load(path)?.to_params()?)),
        other => Err(Error::Config(format!(
            "unrecognized model artifact kind {other:?} in {}",
            path.display()
        ))),
    }
}

fn float_cell(v: f64) -> String {
    format!("{v}")
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = args.config();
    let data = datagen::generate(&cfg)?;
    datagen::write_csv(&data, &args.out)?;
    write_run_echo(&args.out, "generate", &cfg)?;
    let zero_frac =
        data.outcome.iter().filter(|&&y| y == 0.0).count() as f64 / data.n_rows() as f64;
    println!(
        "generated {} rows x {} features ({} treated, zero fraction {:.4}) -> {}",
        data.n_rows(),
        data.n_features(),
        data.n_treated(),
        zero_frac,
        args.out.display()
    );
    Ok(())
}

fn cmd_train_forest(args: &TrainForestArgs) -> Result<()> {
    let cfg = args.config()?;
    let data = datagen::read_csv(&args.data)?;
    let forest = fit_forest(&data, &cfg)?;
    forest.save(&args.out)?;
    write_run_echo(&args.out, "train-forest", &cfg)?;
    println!(
        "fitted {} trees on {} rows -> {}",
        forest.trees.len(),
        data.n_rows(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train_net(args: &TrainNetArgs) -> Result<()> {
    let (train_cfg, focal, weights) = args.configs()?;
    let data = datagen::read_csv(&args.data)?;
    let outcome = gated_net::train(&data, &train_cfg, &focal, &weights)?;
    let artifact =
        NetArtifact::from_params(&outcome.params, &train_cfg, &focal, &weights, outcome.loss_history);
    artifact.save(&args.out)?;
    write_run_echo(&args.out, "train-net", &train_cfg)?;
    println!(
        "trained {} epochs on {} rows (final loss {:.6}) -> {}",
        train_cfg.epochs,
        data.n_rows(),
        artifact.loss_history.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = datagen::read_csv(&args.data)?;
    let scores: Vec<f64> = (0..data.n_rows())
        .map(|i| model.predict_uplift_row(data.row(i)))
        .collect();

    let mut out = String::new();
    for j in 0..data.n_binary {
        let _ = write!(out, "bf{j},");
    }
    for j in 0..data.n_continuous {
        let _ = write!(out, "cf{},", data.n_binary + j);
    }
    out.push_str("treatment,outcome");
    if data.true_uplift.is_some() {
        out.push_str(",true_uplift");
    }
    let _ = writeln!(out, ",{}", args.column);
    for i in 0..data.n_rows() {
        for &v in data.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = write!(
            out,
            "{},{}",
            if data.treatment[i] { 1 } else { 0 },
            data.outcome[i]
        );
        if let Some(tu) = &data.true_uplift {
            let _ = write!(out, ",{}", tu[i]);
        }
        let _ = writeln!(out, ",{}", scores[i]);
    }
    std::fs::write(&args.out, out)?;
    write_run_echo(&args.out, "score", &args.column)?;
    println!("scored {} rows -> {}", data.n_rows(), args.out.display());
    Ok(())
}

fn cmd_curve(args: &CurveArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = datagen::read_csv(&args.data)?;
    let scores: Vec<f64> = (0..data.n_rows())
        .map(|i| model.predict_uplift_row(data.row(i)))
        .collect();
    let curve = uplift_curve(&scores, &data.outcome, &data.treatment)?;
    let mut out = String::from("fraction,lift,random_baseline\n");
    for i in 0..curve.fractions.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            curve.fractions[i], curve.incremental_value[i], curve.random_baseline[i]
        );
    }
    std::fs::write(&args.out, out)?;
    write_run_echo(&args.out, "curve", &())?;
    println!(
        "curve with {} points (auuc {:.6}, qini {:.6}) -> {}",
        curve.fractions.len(),
        metrics::auuc(&curve),
        metrics::qini(&curve),
        args.out.display()
    );
    Ok(())
}

/// One evaluation row: a model on one seed (or the across-seed mean).
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub seed: String,
    pub auuc: f64,
    pub qini: f64,
    pub qini_norm: f64,
    pub lift30: f64,
    pub krcc: Option<f64>,
    pub latency_median_ms: f64,
    pub latency_p95_ms: f64,
}

fn eval_one_model(
    model: ModelArg,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    args: &EvaluateArgs,
) -> Result<EvalRow> {
    let scorer: Box<dyn UpliftScorer> = match model {
        ModelArg::ZilnForest | ModelArg::BaselineForest => {
            let cfg = ForestConfig {
                n_trees: args.forest.trees,
                max_depth: args.forest.max_depth,
                estimator: if model == ModelArg::ZilnForest {
                    TauEstimator::RobustZiln
                } else {
                    TauEstimator::OutcomeMean
                },
                seed,
                ..ForestConfig::default()
            };
            Box::new(fit_forest(train, &cfg)?)
        }
        ModelArg::GatedNet => {
            let cfg = TrainConfig {
                epochs: args.net.epochs,
                batch_size: args.net.batch_size,
                learning_rate: args.net.learning_rate,
                loss_mode: args.net.net_loss.into(),
                seed,
                ..TrainConfig::default()
            };
            let focal = FocalConfig::new(args.net.gamma, args.net.alpha)?;
            let weights = HybridWeights::new(args.net.lambda_rank)?;
            Box::new(gated_net::train(train, &cfg, &focal, &weights)?.params)
        }
    };

    let scores: Vec<f64> = (0..test.n_rows())
        .map(|i| scorer.predict_uplift_row(test.row(i)))
        .collect();
    let curve = uplift_curve(&scores, &test.outcome, &test.treatment)?;
    let krcc = match &test.true_uplift {
        Some(truth) => Some(metrics::krcc(&scores, truth)?),
        None => None,
    };
    let latency = latency_probe(scorer.as_ref(), test, args.latency_repeats)?;
    Ok(EvalRow {
        model: model.label().to_string(),
        seed: seed.to_string(),
        auuc: metrics::auuc(&curve),
        qini: metrics::qini(&curve),
        qini_norm: metrics::qini_normalized(&curve),
        lift30: metrics::lift_at(&curve, 0.30)?,
        krcc,
        latency_median_ms: latency.median_ms_per_row,
        latency_p95_ms: latency.p95_ms_per_row,
    })
}

/// Run the evaluation matrix and return per-seed rows plus one mean row per
/// model (seed column `mean`), in a fixed deterministic order.
pub fn evaluate_rows(args: &EvaluateArgs) -> Result<Vec<EvalRow>> {
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            args.train_fraction
        )));
    }
    if args.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut rows = Vec::new();
    for offset in 0..args.seeds {
        let seed = args.seed_base + offset;
        let gen_cfg = GenConfig {
            n_accounts: args.gen.rows,
            n_binary: args.gen.binary,
            n_continuous: args.gen.continuous,
            zero_fraction_target: args.gen.zero_fraction,
            heterogeneity_strength: args.gen.heterogeneity,
            seed,
            ..GenConfig::default()
        };
        let data = datagen::generate(&gen_cfg)?;
        let (train, test) = data.split_at_fraction(args.train_fraction);
        for &model in &args.models {
            rows.push(eval_one_model(model, &train, &test, seed, args)?);
        }
    }
    // Across-seed means per model, in the configured model order.
    let mut means = Vec::new();
    for &model in &args.models {
        let per_model: Vec<&EvalRow> = rows
            .iter()
            .filter(|r| r.model == model.label())
            .collect();
        let n = per_model.len() as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| per_model.iter().map(|r| f(r)).sum::<f64>() / n;
        let krccs: Vec<f64> = per_model.iter().filter_map(|r| r.krcc).collect();
        means.push(EvalRow {
            model: model.label().to_string(),
            seed: "mean".to_string(),
            auuc: mean(&|r| r.auuc),
            qini: mean(&|r| r.qini),
            qini_norm: mean(&|r| r.qini_norm),
            lift30: mean(&|r| r.lift30),
            krcc: if krccs.is_empty() {
                None
            } else {
                Some(krccs.iter().sum::<f64>() / krccs.len() as f64)
            },
            latency_median_ms: mean(&|r| r.latency_median_ms),
            latency_p95_ms: mean(&|r| r.latency_p95_ms),
        });
    }
    rows.extend(means);
    Ok(rows)
}

pub fn write_eval_csv(rows: &[EvalRow], path: &Path) -> Result<()> {
    let mut out =
        String::from("model,seed,auuc,qini,qini_norm,lift30,krcc,latency_median_ms,latency_p95_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.seed,
            float_cell(r.auuc),
            float_cell(r.qini),
            float_cell(r.qini_norm),
            float_cell(r.lift30),
            r.krcc.map(float_cell).unwrap_or_default(),
            float_cell(r.latency_median_ms),
            float_cell(r.latency_p95_ms),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn print_eval_table(rows: &[EvalRow]) {
    println!(
        "{:<16} {:>6} {:>12} {:>12} {:>10} {:>12} {:>9} {:>12} {:>12}",
        "model", "seed", "auuc", "qini", "qini_norm", "lift30", "krcc", "lat_med_ms", "lat_p95_ms"
    );
    for r in rows {
        println!(
            "{:<16} {:>6} {:>12.5} {:>12.5} {:>10.5} {:>12.4} {:>9} {:>12.6} {:>12.6}",
            r.model,
            r.seed,
            r.auuc,
            r.qini,
            r.qini_norm,
            r.lift30,
            r.krcc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            r.latency_median_ms,
            r.latency_p95_ms,
        );
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let rows = evaluate_rows(args)?;
    write_eval_csv(&rows, &args.out)?;
    #[derive(Serialize)]
    struct EvalEcho<'a> {
        models: Vec<&'a str>,
        seeds: u64,
        seed_base: u64,
        train_fraction: f64,
        latency_repeats: usize,
        rows: usize,
        binary: usize,
        continuous: usize,
        zero_fraction: f64,
        heterogeneity: f64,
        forest_trees: usize,
        forest_max_depth: usize,
        net_epochs: usize,
        net_batch_size: usize,
        net_learning_rate: f64,
        net_gamma: f64,
        net_alpha: f64,
        net_lambda_rank: f64,
    }
    write_run_echo(
        &args.out,
        "evaluate",
        &EvalEcho {
            models: args.models.iter().map(|m| m.label()).collect(),
            seeds: args.seeds,
            seed_base: args.seed_base,
            train_fraction: args.train_fraction,
            latency_repeats: args.latency_repeats,
            rows: args.gen.rows,
            binary: args.gen.binary,
            continuous: args.gen.continuous,
            zero_fraction: args.gen.zero_fraction,
            heterogeneity: args.gen.heterogeneity,
            forest_trees: args.forest.trees,
            forest_max_depth: args.forest.max_depth,
            net_epochs: args.net.epochs,
            net_batch_size: args.net.batch_size,
            net_learning_rate: args.net.learning_rate,
            net_gamma: args.net.gamma,
            net_alpha: args.net.alpha,
            net_lambda_rank: args.net.lambda_rank,
        },
    )?;
    print_eval_table(&rows);
    println!("metrics -> {}", args.out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::TrainForest(args) => cmd_train_forest(args),
        Command::TrainNet(args) => cmd_train_net(args),
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Curve(args) => cmd_curve(args),
    }
}
