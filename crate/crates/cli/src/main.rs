mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{CliError, EXIT_INTERNAL};

/// Fair allocation of a fixed budget of positive decisions across groups.
#[derive(Parser)]
#[command(name = "rcfair", version)]
struct Cli {
    /// Worker threads for parallel sweeps (defaults to all cores).
    #[arg(long, global = true, env = "RCFAIR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enforce DP or EO at an exact budget and report the allocation.
    Enforce(EnforceArgs),
    /// Cost of fairness against the top-K default over a grid of rates.
    CostSweep(CostSweepArgs),
    /// Minimise the worst group's harm at a budget.
    Minimax(MinimaxArgs),
    /// Closed-form cost bounds, or a bound-compliance check on a dataset.
    Bounds(BoundsArgs),
    /// Precision against the split of a fixed budget between two groups.
    AllocCurve(AllocCurveArgs),
    /// Generate a synthetic scored dataset.
    Synth(SynthArgs),
    /// Write a perturbed synthetic config, or subsample a group of a dataset.
    Perturb(PerturbArgs),
    /// Average cost of fairness across perturbation levels and seeds.
    SweepParams(SweepParamsArgs),
    /// Cost sweep, bound compliance and minimax for one dataset as JSON.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Scored dataset CSV (columns score,label,group[,split]).
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict to one split (`val` or `test`).
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value = "score")]
    pub score_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    #[arg(long, default_value = "group")]
    pub group_col: String,
    #[arg(long, default_value = "split")]
    pub split_col: String,
}

#[derive(Args, Clone, Copy)]
#[group(required = true, multiple = false)]
pub struct BudgetArgs {
    /// Selection rate in (0, 1]; the budget is floor(rate N).
    #[arg(long)]
    pub rate: Option<f64>,
    /// Absolute number of positive decisions.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum NotionArg {
    Dp,
    Eo,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args)]
pub struct EnforceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "dp")]
    pub notion: NotionArg,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Fit group shares on the `val` split and apply them to the `test` split.
    #[arg(long)]
    pub transfer_from_split: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output format; defaults to csv for a `.csv` output path, json otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args)]
pub struct CostSweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated fairness notions.
    #[arg(long, value_delimiter = ',', default_value = "dp,eo")]
    pub notions: Vec<NotionArg>,
    /// Number of rates: 1/n, 2/n, ..., 1.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a chart with one panel per metric.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args)]
pub struct MinimaxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// one_minus_selection_rate, one_minus_recall, one_minus_precision or false_positive_rate.
    #[arg(long, default_value = "one_minus_recall")]
    pub harm: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Allow fewer than the budget (rising harms then select nobody).
    #[arg(long)]
    pub at_most: bool,
    /// Treat precision of an empty selection as 0 instead of an error.
    #[arg(long)]
    pub empty_precision_is_zero: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct BoundsArgs {
    /// accuracy, recall, fpr, specificity, fnr or precision.
    #[arg(long)]
    pub metric: String,
    /// Base rate.
    #[arg(long)]
    pub b: Option<f64>,
    /// Selection rate.
    #[arg(long)]
    pub r: Option<f64>,
    /// Smallest group's proportion.
    #[arg(long)]
    pub g: Option<f64>,
    /// Known swap proportion, adding the `p c` entry.
    #[arg(long)]
    pub p: Option<f64>,
    /// Check observed costs on this dataset instead of evaluating the formula.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dp")]
    pub notion: NotionArg,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct AllocCurveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Budget K.
    #[arg(long, conflicts_with = "rate", required_unless_present = "rate")]
    pub k: Option<usize>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Number of budget shares in [0, 1].
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Defaults to the second group in file order.
    #[arg(long)]
    pub disadvantaged: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Key-value config file; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct PerturbArgs {
    /// disparity, global_noise, subgroup_noise or subgroup_size.
    #[arg(long)]
    pub param: String,
    #[arg(long)]
    pub level: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset to subsample (subgroup_size only).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "advantaged")]
    pub advantaged: String,
    #[arg(long, default_value = "disadvantaged")]
    pub disadvantaged: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepParamsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// disparity, global_noise, subgroup_noise or subgroup_size.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "dp,eo")]
    pub notions: Vec<NotionArg>,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value = "advantaged")]
    pub advantaged: String,
    #[arg(long, default_value = "disadvantaged")]
    pub disadvantaged: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "dp,eo")]
    pub notions: Vec<NotionArg>,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Rates at which the recall minimax is solved.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7")]
    pub minimax_rates: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Enforce(a) => commands::enforce(a),
        Command::CostSweep(a) => commands::cost_sweep(a),
        Command::Minimax(a) => commands::minimax(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::AllocCurve(a) => commands::alloc_curve(a),
        Command::Synth(a) => commands::synth(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::SweepParams(a) => commands::sweep_params(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
