//! `cascal`: simulate calibration campaigns, fit cascaded calibrations from
//! CSV data, apply them, and score them against a known truth.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascal::cascade::{self, MethodTag};
use cascal::config::FULL_SCALE_TRIALS;
use cascal::io::{
    read_columns, read_dataset_file, read_truth, write_dataset_file, write_table, CalibrationModel,
};
use cascal::lut::{calibrate_lut_cascade, Extrapolation};
use cascal::montecarlo::{
    read_trials_csv, run_campaign, summarize, trial_data, write_trials_csv, CampaignSummary,
    Method, TrialRow,
};
use cascal::sim::{cost_j, error_profile};
use cascal::{Error, Result, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "cascal",
    version,
    about = "Cascaded sensor calibration with chained Gaussian processes"
)]
struct Cli {
    /// Root seed; every random draw derives from it [default: 1]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for campaign files
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Flat JSON file with run settings; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fit stage two with the propagated covariance only (no learned noise)
    #[arg(long, global = true)]
    strict_paper: bool,
    /// Worker threads for campaigns [default: 1]
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo campaign; writes trials.csv and summary.json
    Simulate(SimulateArgs),
    /// Fit a calibration from D1 and D2 CSV files
    Calibrate(CalibrateArgs),
    /// Apply a fitted model to readings from a CSV `x` column
    Predict(PredictArgs),
    /// Score a model against a truth JSON
    Evaluate(EvaluateArgs),
    /// Re-summarize an existing trials.csv
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExtrapolationArg {
    Slope,
    Clamp,
}

impl From<ExtrapolationArg> for Extrapolation {
    fn from(e: ExtrapolationArg) -> Self {
        match e {
            ExtrapolationArg::Slope => Extrapolation::Slope,
            ExtrapolationArg::Clamp => Extrapolation::Clamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Bayesian,
    Alt1,
    Lut,
}

/// Overrides for individual run settings.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Fourier terms per simulated sensor [default: 10]
    #[arg(long)]
    n_s: Option<usize>,
    /// Variance of the Fourier coefficients [default: 1e-4]
    #[arg(long)]
    coeff_var: Option<f64>,
    /// Variance of the Fourier frequencies [default: 6]
    #[arg(long)]
    freq_var: Option<f64>,
    /// Measurement noise variance of every sensor [default: 1e-8]
    #[arg(long)]
    noise_var: Option<f64>,
    /// Lower end of the position range [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    range_min: Option<f64>,
    /// Upper end of the position range [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    range_max: Option<f64>,
    /// Grid points for the test-bed dataset before removal [default: 100]
    #[arg(long)]
    n_grid: Option<usize>,
    /// Grid points removed at each end [default: 8]
    #[arg(long)]
    edge_remove: Option<usize>,
    /// Grid points removed around the center [default: 20]
    #[arg(long)]
    center_remove: Option<usize>,
    /// Production-sensor calibration pairs [default: 100]
    #[arg(long)]
    n1: Option<usize>,
    /// Simplex iterations per optimizer start [default: 400]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative simplex convergence tolerance [default: 1e-9]
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Lower bound of every log-hyperparameter [default: -20]
    #[arg(long, allow_hyphen_values = true)]
    log_lower: Option<f64>,
    /// Upper bound of every log-hyperparameter [default: 5]
    #[arg(long, allow_hyphen_values = true)]
    log_upper: Option<f64>,
    /// Lookup-table behavior outside the breakpoints [default: slope]
    #[arg(long, value_enum)]
    extrapolation: Option<ExtrapolationArg>,
    /// Quadrature points for the cost integral [default: 2001]
    #[arg(long)]
    n_quad: Option<usize>,
    /// Histogram bins in summary.json [default: 40]
    #[arg(long)]
    n_bins: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of trials [default: 200]
    #[arg(long, conflicts_with = "paper_scale")]
    trials: Option<usize>,
    /// Run the full 12000-trial campaign
    #[arg(long)]
    paper_scale: bool,
    /// Also write d1.csv, d2.csv and truth.json per trial under <out>/datasets/<seed>/
    #[arg(long)]
    export_datasets: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Production-sensor pairs: x = production reading, y = test-bed reading
    #[arg(long)]
    d1: PathBuf,
    /// Test-bed pairs: x = test-bed reading, y = reference reading
    #[arg(long)]
    d2: PathBuf,
    #[arg(long, value_enum, default_value = "bayesian")]
    method: MethodArg,
    /// Where to write the model JSON
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with an `x` column of production-sensor readings
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (`x,y_hat[,var]`); standard output if omitted
    #[arg(long)]
    output: Option<PathBuf>,
    /// Add the posterior variance column (GP models only)
    #[arg(long)]
    with_variance: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Truth JSON as written by `simulate --export-datasets`
    #[arg(long)]
    truth: PathBuf,
    /// Optional per-point error CSV (`y1,model,truth,error`)
    #[arg(long)]
    errors: Option<PathBuf>,
    /// Quadrature points for the cost integral [default: 2001]
    #[arg(long)]
    n_quad: Option<usize>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// trials.csv from an earlier campaign
    #[arg(long)]
    trials: PathBuf,
    /// Histogram bins [default: 40]
    #[arg(long)]
    n_bins: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Calibrate(a) => calibrate(&cli, a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Summarize(a) => summarize_cmd(&cli, a),
    }
}

/// Defaults, then the config file, then flags.
fn load_config(cli: &Cli, o: &Overrides) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = o.$f { c.$f = v; })* };
    }
    set!(
        n_s,
        coeff_var,
        freq_var,
        noise_var,
        range_min,
        range_max,
        n_grid,
        edge_remove,
        center_remove,
        n1,
        max_iter,
        rel_tol,
        log_lower,
        log_upper,
        n_quad,
        n_bins
    );
    if let Some(e) = o.extrapolation {
        c.extrapolation = e.into();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(p) = cli.parallel {
        c.parallel = p;
    }
    if cli.strict_paper {
        c.strict_paper = true;
    }
    Ok(c)
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn print_summary(s: &CampaignSummary) {
    println!("trials: {} ({} flagged)", s.n_trials, s.n_flagged);
    for m in Method::ALL {
        println!("median J {:<5} {:.6e}", m.name(), s.stats(m).median);
    }
    for (a, b) in [
        (Method::Bayes, Method::Alt1),
        (Method::Bayes, Method::Alt2),
        (Method::Alt1, Method::Alt2),
    ] {
        println!(
            "win rate {} vs {}: {:.3}",
            a.name(),
            b.name(),
            s.win_rate(a, b)
        );
    }
}

fn write_summary(path: &Path, s: &CampaignSummary, extra: serde_json::Value) -> Result<()> {
    let mut doc = serde_json::to_value(s)?;
    if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
        obj.extend(more);
    }
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(cli, &a.overrides)?;
    if a.paper_scale {
        cfg.trials = FULL_SCALE_TRIALS;
    } else if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let results = run_campaign(cfg.trials, cfg.seed, &cfg, cfg.parallel)?;
    let rows: Vec<TrialRow> = results.iter().map(|r| r.row()).collect();
    if rows.iter().all(|r| r.flag.is_some()) {
        return Err(Error::EmptyCampaign);
    }
    fs::create_dir_all(&cli.out)?;
    write_trials_csv(&rows, create(&cli.out.join("trials.csv"))?)?;
    let summary = summarize(&rows, cfg.n_bins)?;
    let rejected: u64 = results.iter().map(|r| r.rejected_draws).sum();
    write_summary(
        &cli.out.join("summary.json"),
        &summary,
        serde_json::json!({ "rejected_truth_draws": rejected, "config": cfg }),
    )?;
    if a.export_datasets {
        for r in &results {
            let data = trial_data(r.seed, &cfg)?;
            let dir = cli.out.join("datasets").join(r.seed.to_string());
            fs::create_dir_all(&dir)?;
            write_dataset_file(&data.d1, &dir.join("d1.csv"))?;
            write_dataset_file(&data.d2, &dir.join("d2.csv"))?;
            let mut f = create(&dir.join("truth.json"))?;
            serde_json::to_writer_pretty(&mut f, &data.pair)?;
            writeln!(f)?;
        }
    }
    print_summary(&summary);
    if rejected > 0 {
        println!("non-monotone truth draws redrawn: {rejected}");
    }
    Ok(())
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<()> {
    let cfg = load_config(cli, &a.overrides)?;
    cfg.validate()?;
    let d1 = read_dataset_file(&a.d1)?;
    let d2 = read_dataset_file(&a.d2)?;
    let model = match a.method {
        MethodArg::Lut => {
            CalibrationModel::Lut(calibrate_lut_cascade(&d1, &d2, cfg.extrapolation)?)
        }
        MethodArg::Bayesian => CalibrationModel::Gp(cascade::calibrate(
            MethodTag::Bayesian,
            &d1,
            &d2,
            &cfg.cascade_config(),
        )?),
        MethodArg::Alt1 => CalibrationModel::Gp(cascade::calibrate(
            MethodTag::Alt1,
            &d1,
            &d2,
            &cfg.cascade_config(),
        )?),
    };
    let mut f = create(&a.model)?;
    f.write_all(model.to_json()?.as_bytes())?;
    writeln!(f)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<CalibrationModel> {
    let text = fs::read_to_string(path)?;
    CalibrationModel::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::InvalidData(format!("{}: not a model file: {j}", path.display())),
        other => other,
    })
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = read_columns(
        io::BufReader::new(fs::File::open(&a.input)?),
        &a.input.display().to_string(),
        &["x"],
    )?
    .pop()
    .unwrap();
    let y = model.apply(&x);
    let (header, rows): (Vec<&str>, Vec<Vec<f64>>) = if a.with_variance {
        let var = model.variance(&x).ok_or_else(|| {
            Error::Config("--with-variance needs a GP model; lookup tables have no variance".into())
        })?;
        (
            vec!["x", "y_hat", "var"],
            x.iter()
                .zip(&y)
                .zip(&var)
                .map(|((x, y), v)| vec![*x, *y, *v])
                .collect(),
        )
    } else {
        (
            vec!["x", "y_hat"],
            x.iter().zip(&y).map(|(x, y)| vec![*x, *y]).collect(),
        )
    };
    match &a.output {
        Some(p) => write_table(&header, &rows, create(p)?),
        None => write_table(&header, &rows, io::stdout().lock()),
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let pair = read_truth(&fs::read_to_string(&a.truth)?)?;
    let n_quad = a.n_quad.unwrap_or(RunConfig::default().n_quad);
    let j = cost_j(|y| model.apply(y), &pair, n_quad)?;
    println!("J = {j:e}");
    if let Some(p) = &a.errors {
        let rows: Vec<Vec<f64>> = error_profile(|y| model.apply(y), &pair, n_quad)?
            .into_iter()
            .map(|(y1, m, t)| vec![y1, m, t, m - t])
            .collect();
        write_table(&["y1", "model", "truth", "error"], &rows, create(p)?)?;
    }
    Ok(())
}

fn summarize_cmd(cli: &Cli, a: &SummarizeArgs) -> Result<()> {
    let rows = read_trials_csv(
        io::BufReader::new(fs::File::open(&a.trials)?),
        &a.trials.display().to_string(),
    )?;
    let n_bins = a.n_bins.unwrap_or(RunConfig::default().n_bins);
    let summary = summarize(&rows, n_bins)?;
    fs::create_dir_all(&cli.out)?;
    write_summary(
        &cli.out.join("summary.json"),
        &summary,
        serde_json::json!({}),
    )?;
    print_summary(&summary);
    Ok(())
}
