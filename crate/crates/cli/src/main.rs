//! `pivotband` command line: coverage simulations, intervals, regions and
//! population resampling studies.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pivotband::inference::unit_circle;
use pivotband::io::{self, RunManifest};
use pivotband::{
    interval, population_study, region_boundary, region_membership, run_coverage, Dataset,
    Endpoint, Error, IntervalResult, Method, ModelKind, PopulationConfig, Result, Scenario,
    ScenarioKind, SimConfig, WorkingModel,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pivotband", version, about = "Score-pivot and sandwich confidence intervals under misspecification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo coverage over a grid of sample sizes.
    Simulate(SimulateArgs),
    /// Confidence intervals for a one-parameter model.
    Ci(CiArgs),
    /// Joint region boundary or membership for a two-parameter regression.
    Region(RegionArgs),
    /// Coverage of subsamples drawn from a finite population.
    Population(PopulationArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// poisson_nb, origin_hetero, slr_hetero or slr_homo
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    /// Sample sizes: start:stop:step, a comma list, or one value
    #[arg(long = "n", default_value = "10:100:10")]
    n_grid: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma list of methods (default: every method valid for the scenario)
    #[arg(long)]
    methods: Option<String>,
    /// Regression coefficients of the generating law, comma separated
    #[arg(long)]
    truth: Option<String>,
    /// Output CSV; a manifest is written beside it. Prints to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Headed CSV file
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma list of covariate columns
    #[arg(long)]
    covariates: Option<String>,
    /// Inline response values, comma separated
    #[arg(long, conflicts_with = "data", allow_hyphen_values = true)]
    y: Option<String>,
    /// Inline covariate values, comma separated
    #[arg(long, conflicts_with = "data", allow_hyphen_values = true)]
    x: Option<String>,
}

#[derive(Args)]
struct CiArgs {
    /// poisson or origin
    #[arg(long)]
    model: String,
    #[command(flatten)]
    input: DataArgs,
    /// Comma list of methods (default: every scalar method)
    #[arg(long = "method")]
    methods: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RegionArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long = "method", default_value = "pivot,sandwich")]
    methods: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of evenly spaced boundary directions
    #[arg(long, default_value_t = 64)]
    directions: usize,
    /// Membership query "theta0,theta1" instead of a boundary
    #[arg(long, allow_hyphen_values = true)]
    query: Option<String>,
    /// Output CSV for the boundary; prints to stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PopulationArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long)]
    covariates: String,
    /// Subsample sizes: start:stop:step, a comma list, or one value
    #[arg(long)]
    sizes: String,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cover only the slopes, treating the intercept as nuisance
    #[arg(long)]
    exclude_intercept: bool,
    #[arg(long)]
    with_replacement: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.category(), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn report(category: &str, message: &str) {
    let body = json!({ "error": category, "message": message.trim() });
    eprintln!("{body}");
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 2,
        "data" => 3,
        "design" => 4,
        "domain" => 5,
        "degenerate" => 6,
        _ => 7,
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Ci(a) => ci(a),
        Command::Region(a) => region(a),
        Command::Population(a) => population(a),
    }
}

/// `PIVOTBAND_THREADS` caps the worker pool. Results do not depend on it.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PIVOTBAND_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("PIVOTBAND_THREADS='{raw}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: '{t}' is not a number")))
        })
        .collect()
}

fn split_names(s: &str) -> Vec<String> {
    s.split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn emit(out: Option<&Path>, bytes: &[u8], manifest: RunManifest) -> Result<()> {
    match out {
        Some(path) => io::write_with_manifest(path, bytes, &manifest),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let kind: ScenarioKind = a.scenario.parse()?;
    let mut scenario = Scenario::new(kind);
    if let Some(t) = &a.truth {
        scenario = scenario.with_truth(parse_floats(t, "--truth")?)?;
    }
    let mut cfg = SimConfig::new(scenario, io::parse_grid(&a.n_grid)?, a.reps, a.seed);
    cfg.alpha = a.alpha;
    if let Some(m) = &a.methods {
        cfg.methods = Method::parse_list(m)?;
    }
    let records = run_coverage(&cfg)?;
    let mut buf = Vec::new();
    io::write_coverage_csv(&records, &mut buf)?;

    let mut manifest = RunManifest::new(
        "simulate",
        json!({
            "scenario": kind.as_str(),
            "truth": cfg.scenario.truth.as_slice(),
            "n": cfg.n_grid,
            "reps": cfg.reps,
            "alpha": cfg.alpha,
            "methods": cfg.methods.iter().map(Method::as_str).collect::<Vec<_>>(),
        }),
        Some(cfg.seed),
    );
    manifest.assumptions = cfg.scenario.assumptions();
    manifest
        .assumptions
        .push("replicates with degenerate variance estimates are excluded from the denominator".into());
    emit(a.out.as_deref(), &buf, manifest)
}

/// Builds a dataset for `model` from a CSV file or inline values.
fn load_input(model: ModelKind, input: &DataArgs) -> Result<Dataset> {
    let covariates = input.covariates.as_deref().map(split_names).unwrap_or_default();
    match (&input.data, &input.y) {
        (Some(path), _) => {
            let wanted = match model {
                ModelKind::PoissonMean => 0,
                ModelKind::OriginRegression => 1,
                ModelKind::LinearRegression => usize::MAX,
            };
            if wanted != usize::MAX && covariates.len() != wanted {
                return Err(Error::Config(format!(
                    "model {model} takes {wanted} covariate(s), got {}",
                    covariates.len()
                )));
            }
            if model == ModelKind::LinearRegression && covariates.is_empty() {
                return Err(Error::Config("linear model needs --covariates".into()));
            }
            let intercept = model == ModelKind::LinearRegression;
            let loaded = io::load_csv(path, &input.response, &covariates, intercept)?;
            if loaded.dropped > 0 {
                eprintln!("dropped {} incomplete row(s)", loaded.dropped);
            }
            Ok(loaded.data)
        }
        (None, Some(ys)) => {
            let y = parse_floats(ys, "--y")?;
            let x = input.x.as_deref().map(|s| parse_floats(s, "--x")).transpose()?;
            match (model, x) {
                (ModelKind::PoissonMean, None) => Dataset::from_y(y),
                (ModelKind::OriginRegression, Some(x)) => Dataset::from_xy(&x, y),
                (ModelKind::LinearRegression, Some(x)) => {
                    let mut design = pivotband::DMatrix::from_element(x.len(), 2, 1.0);
                    if x.len() != y.len() {
                        return Err(Error::InvalidData(format!("{} x values for {} responses", x.len(), y.len())));
                    }
                    design.set_column(1, &pivotband::DVector::from_vec(x));
                    Dataset::new(y, Some(design))
                }
                (ModelKind::PoissonMean, Some(_)) => Err(Error::Config("poisson model takes no --x".into())),
                _ => Err(Error::Config(format!("model {model} needs --x"))),
            }
        }
        (None, None) => Err(Error::Config("give --data or inline --y".into())),
    }
}

fn endpoint(e: Endpoint, side: f64) -> String {
    match e {
        Endpoint::Finite(v) => format!("{v:.6}"),
        Endpoint::Unbounded => if side < 0.0 { "-inf" } else { "inf" }.into(),
        Endpoint::Boundary(b) => format!("{b} (edge)"),
    }
}

fn ci(a: CiArgs) -> Result<()> {
    let kind: ModelKind = a.model.parse()?;
    if kind == ModelKind::LinearRegression {
        return Err(Error::Config("ci handles one-parameter models; use `region` for linear".into()));
    }
    let model = WorkingModel::new(kind);
    let data = load_input(kind, &a.input)?;
    let methods = match &a.methods {
        Some(m) => Method::parse_list(m)?,
        None => Method::SCALAR.to_vec(),
    };
    // one method failing (e.g. zero meat) should not hide the others
    let results: Vec<(Method, Result<IntervalResult>)> = methods
        .iter()
        .map(|&m| (m, interval(&model, &data, m, a.alpha)))
        .collect();
    if results.iter().all(|(_, r)| r.is_err()) {
        return Err(results.into_iter().find_map(|(_, r)| r.err()).expect("at least one method"));
    }

    let mut out = std::io::stdout().lock();
    if a.json {
        let rows: Vec<serde_json::Value> = results
            .iter()
            .map(|(m, r)| match r {
                Ok(iv) => serde_json::to_value(iv).expect("interval serializes"),
                Err(e) => json!({ "method": m.as_str(), "error": e.category(), "message": e.to_string() }),
            })
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?;
        return Ok(());
    }
    let estimate = results
        .iter()
        .find_map(|(_, r)| r.as_ref().ok().map(|iv| iv.estimate))
        .unwrap_or(f64::NAN);
    writeln!(
        out,
        "model {kind}, n = {}, estimate = {estimate:.6}, level = {}",
        data.n(),
        1.0 - a.alpha
    )?;
    writeln!(out, "{:<10} {:>16} {:>16} {:>14} {:>10}  note", "method", "lower", "upper", "width", "quantile")?;
    for (m, r) in &results {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                writeln!(out, "{:<10} {:>16} {:>16} {:>14} {:>10}  error: {e}", m.as_str(), "-", "-", "-", "-")?;
                continue;
            }
        };
        let mut note = Vec::new();
        if r.is_unbounded() {
            note.push("unbounded");
        }
        if r.disconnected {
            note.push("disconnected");
        }
        writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>14.6} {:>10.6}  {}",
            m.as_str(),
            endpoint(r.lower, -1.0),
            endpoint(r.upper, 1.0),
            r.width(),
            r.quantile_used,
            note.join(",")
        )?;
    }
    Ok(())
}

fn region(a: RegionArgs) -> Result<()> {
    let model = WorkingModel::linear_regression();
    let data = load_input(ModelKind::LinearRegression, &a.input)?;
    let methods = Method::parse_list(&a.methods)?;

    if let Some(q) = &a.query {
        let query = pivotband::DVector::from_vec(parse_floats(q, "--query")?);
        let mut out = std::io::stdout().lock();
        writeln!(out, "method,inside,threshold")?;
        for &m in &methods {
            let r = region_membership(&model, &data, m, a.alpha, &query)?;
            writeln!(
                out,
                "{},{},{}",
                m,
                r.contains_query.unwrap_or(false),
                io::fmt_f64(r.chi2_threshold)
            )?;
        }
        return Ok(());
    }

    if a.directions < 3 {
        return Err(Error::Config("need at least 3 directions".into()));
    }
    let dirs = unit_circle(a.directions);
    let mut buf = Vec::new();
    for (k, &m) in methods.iter().enumerate() {
        let r = region_boundary(&model, &data, m, a.alpha, &dirs)?;
        let mut part = Vec::new();
        io::write_boundary_csv(&r, &mut part)?;
        // keep a single header across methods
        let skip = if k == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1) };
        buf.extend_from_slice(&part[skip..]);
    }
    let manifest = RunManifest::new(
        "region",
        json!({
            "data": a.input.data.as_ref().map(|p| p.display().to_string()),
            "n": data.n(),
            "methods": methods.iter().map(Method::as_str).collect::<Vec<_>>(),
            "alpha": a.alpha,
            "directions": a.directions,
        }),
        None,
    );
    emit(a.out.as_deref(), &buf, manifest)
}

fn population(a: PopulationArgs) -> Result<()> {
    let covariates = split_names(&a.covariates);
    let loaded = io::load_csv(&a.data, &a.response, &covariates, true)?;
    let mut cfg = PopulationConfig::new(io::parse_grid(&a.sizes)?, a.reps, a.seed);
    cfg.alpha = a.alpha;
    cfg.include_intercept = !a.exclude_intercept;
    cfg.with_replacement = a.with_replacement;
    if let Some(m) = &a.methods {
        cfg.methods = Method::parse_list(m)?;
    }
    let records = population_study(&loaded.data, &cfg)?;
    let mut buf = Vec::new();
    io::write_coverage_csv(&records, &mut buf)?;

    let mut manifest = RunManifest::new(
        "population",
        json!({
            "data": a.data.display().to_string(),
            "response": a.response,
            "covariates": covariates,
            "complete_rows": loaded.data.n(),
            "dropped_rows": loaded.dropped,
            "config": cfg,
        }),
        Some(a.seed),
    );
    manifest.assumptions = vec![
        "pseudo-true coefficients = least squares on all complete rows".into(),
        if a.with_replacement {
            "subsamples drawn with replacement".into()
        } else {
            "subsamples drawn without replacement".into()
        },
        if a.exclude_intercept {
            "intercept profiled out as nuisance".into()
        } else {
            "intercept covered jointly with slopes".into()
        },
    ];
    emit(a.out.as_deref(), &buf, manifest)
}
