use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ppsel::check::{run_suite, Suite};
use ppsel::covariates::{load_grid, synth_covariates, CovariateSet, DEFAULT_GRID};
use ppsel::criteria::Criterion;
use ppsel::experiment::{run_scenario, Process, ScenarioConfig};
use ppsel::likelihood::{fit, FitResult};
use ppsel::selection::{select, PcfFitting, SelectOptions, SelectionResult};
use ppsel::simulate::{calibrate_omega, sim_poisson, sim_thomas, IntensitySpec, ThomasParams};
use ppsel::{Error, ModelSpec, PointPattern, Result, Window};

#[derive(Parser)]
#[command(name = "ppsel", version, about = "Covariate selection for spatial point process intensity models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a point pattern and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit one model to a pattern and print its report record.
    Fit(FitArgs),
    /// Score every covariate subset and write the long-format selection table.
    Select(SelectArgs),
    /// Run a replicated scenario from a config file.
    Run(RunArgs),
    /// Run the built-in oracle checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct CovariateArgs {
    /// Observation window: `width,height` or `xmin,xmax,ymin,ymax`.
    #[arg(long, default_value = "1000,500")]
    window: String,
    /// Seed for synthetic covariates.
    #[arg(long, default_value_t = 1)]
    covariate_seed: u64,
    /// Lattice of the synthetic covariates, `nx,ny`.
    #[arg(long, default_value = "201,101")]
    covariate_grid: String,
    /// Covariate rasters (CSV matrices); replaces the synthetic fields.
    #[arg(long, value_delimiter = ',')]
    covariate_files: Vec<PathBuf>,
}

impl CovariateArgs {
    fn window(&self) -> Result<Window> {
        let v: Vec<f64> = self
            .window
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad window `{}`", self.window))))
            .collect::<Result<_>>()?;
        match v.as_slice() {
            [w, h] => Window::rect(*w, *h),
            [x0, x1, y0, y1] => Window::new(*x0, *x1, *y0, *y1),
            _ => Err(Error::Config(format!("window needs 2 or 4 numbers, got `{}`", self.window))),
        }
    }

    fn grid(&self) -> Result<(usize, usize)> {
        let v: Vec<usize> = self
            .covariate_grid
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad grid `{}`", self.covariate_grid))))
            .collect::<Result<_>>()?;
        match v.as_slice() {
            [nx, ny] => Ok((*nx, *ny)),
            _ => Ok(DEFAULT_GRID),
        }
    }

    fn load(&self, p: usize) -> Result<CovariateSet> {
        let w = self.window()?;
        if self.covariate_files.is_empty() {
            synth_covariates(self.covariate_seed, p, w, self.grid()?)
        } else {
            let fields = self.covariate_files.iter().map(|f| load_grid(f, w)).collect::<Result<Vec<_>>>()?;
            CovariateSet::new(fields)?.standardize()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "poisson")]
    process: String,
    /// Target expected number of points.
    #[arg(long, default_value_t = 800.0)]
    mu: f64,
    /// True coefficients, one per covariate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.5,-0.25,0,0,0,0")]
    beta: Vec<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cov: CovariateArgs,
}

#[derive(Args)]
struct PatternArgs {
    /// Pattern CSV with header `x,y`.
    #[arg(long)]
    pattern: PathBuf,
    /// Number of synthetic covariates (ignored with --covariate-files).
    #[arg(long, short = 'p', default_value_t = 6)]
    n_covariates: usize,
    /// Dummy points; defaults to 4 per data point.
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    cov: CovariateArgs,
}

impl PatternArgs {
    fn load(&self) -> Result<(PointPattern, CovariateSet, usize)> {
        let cov = self.cov.load(self.n_covariates)?;
        let pattern = PointPattern::read_csv(File::open(&self.pattern)?, self.cov.window()?)?;
        let m = self.m.unwrap_or(4 * pattern.len().max(16));
        Ok((pattern, cov, m))
    }
}

#[derive(Args)]
struct FitArgs {
    /// Covariate indices (1-based, comma separated), `full`, or `none`.
    #[arg(long, default_value = "full")]
    model: String,
    #[command(flatten)]
    data: PatternArgs,
}

#[derive(Args)]
struct SelectArgs {
    /// Pair correlation assumed by the criteria: poisson or thomas.
    #[arg(long, default_value = "poisson")]
    pcf: String,
    #[arg(long, default_value_t = 20.0)]
    r_max: f64,
    /// Estimate the cluster parameters once from the full model.
    #[arg(long)]
    estimate_once: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: PatternArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `results/<name>`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_model(s: &str, p: usize) -> Result<ModelSpec> {
    match s.trim() {
        "full" => Ok(ModelSpec::full(p)),
        "none" | "" => Ok(ModelSpec::intercept_only()),
        list => {
            let idx = list
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad model `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(&j) = idx.iter().find(|&&j| j > p) {
                return Err(Error::Config(format!("covariate {j} out of range 1..={p}")));
            }
            ModelSpec::new(idx)
        }
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let window = a.cov.window()?;
    let cov = Arc::new(a.cov.load(a.beta.len())?);
    let spec = IntensitySpec::new(1.0, a.beta.clone(), cov)?;
    let spec = spec.with_omega(calibrate_omega(&spec, a.mu)?)?;
    let pattern = match a.process.parse::<Process>()? {
        Process::Poisson => sim_poisson(&spec, &window, a.seed)?,
        Process::Thomas => {
            let (Some(k), Some(g)) = (a.kappa, a.gamma) else {
                return Err(Error::Config("thomas process requires --kappa and --gamma".into()));
            };
            sim_thomas(&spec, ThomasParams::new(k, g)?, &window, a.seed)?
        }
    };
    log::info!("simulated {} points (omega = {:.6e})", pattern.len(), spec.omega());
    pattern.write_csv(output(&a.out)?)
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let (pattern, cov, m) = a.data.load()?;
    let model = parse_model(&a.model, cov.len())?;
    let f = fit(&pattern, &model, &cov, m)?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(FitResult::csv_header(cov.len()))?;
    w.write_record(f.csv_record(cov.len()))?;
    w.flush()?;
    Ok(())
}

fn select_cmd(a: SelectArgs) -> Result<()> {
    let (pattern, cov, m) = a.data.load()?;
    let mut opts = SelectOptions::new(a.pcf.parse::<PcfFitting>()?, m, a.r_max);
    opts.estimate_once = a.estimate_once;
    let r = select(&pattern, &cov, &opts)?;
    {
        let mut w = csv::Writer::from_writer(output(&a.out)?);
        w.write_record(SelectionResult::long_header())?;
        r.write_long_rows(&mut w, 0)?;
        w.flush()?;
    }
    if a.out.is_some() {
        for c in Criterion::ALL {
            if let Some(o) = r.chosen_outcome(c) {
                println!("{:<10} {:<16} p* = {:.2}", c.label(), o.report.model.to_string(), o.report.p_star);
            }
        }
    }
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::from_file(&a.config)?;
    if let Some(r) = a.replicates {
        cfg.set("replicates", &r.to_string())?;
    }
    for kv in &a.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let out = a.out.unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let summary = run_scenario(&cfg, Some(&out))?;
    print!("{}", summary.table());
    println!("MISE and MKL are unscaled means; CSVs written to {}", out.display());
    Ok(())
}

fn check_cmd(a: CheckArgs) -> Result<bool> {
    let outcomes = run_suite(a.suite.parse::<Suite>()?, a.seed)?;
    for o in &outcomes {
        println!("{o}");
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a).map(|_| true),
        Command::Fit(a) => fit_cmd(a).map(|_| true),
        Command::Select(a) => select_cmd(a).map(|_| true),
        Command::Run(a) => run_cmd(a).map(|_| true),
        Command::Check(a) => check_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
