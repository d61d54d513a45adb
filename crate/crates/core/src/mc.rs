//! Synthetic scenarios and the Monte Carlo coverage engine.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, scenario, n, replicate)`, so results do not depend on how the
//! replicates are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{covers_at, covers_subset, Method};
use crate::model::{mle_fit, Dataset, ModelKind, WorkingModel};

/// Mean and variance of the overdispersed count scenario.
pub const NB_MEAN: f64 = 3.0;
pub const NB_VARIANCE: f64 = 3.9;

/// Gamma shape `r` of the Gamma-Poisson mixture matching `NB_MEAN` and
/// `NB_VARIANCE`: `var = mean + mean^2 / r`.
pub fn nb_shape(mean: f64, variance: f64) -> f64 {
    mean * mean / (variance - mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Poisson working model, negative binomial truth (mean 3, variance 3.9).
    PoissonNb,
    /// Regression through the origin, errors with sd `sqrt(1 + |x|)`.
    OriginHetero,
    /// Simple linear regression, errors with sd `sqrt(1 + |x|)`.
    SlrHetero,
    /// Correctly specified simple linear regression, unit error variance.
    SlrHomo,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::PoissonNb,
        ScenarioKind::OriginHetero,
        ScenarioKind::SlrHetero,
        ScenarioKind::SlrHomo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::PoissonNb => "poisson_nb",
            ScenarioKind::OriginHetero => "origin_hetero",
            ScenarioKind::SlrHetero => "slr_hetero",
            ScenarioKind::SlrHomo => "slr_homo",
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            ScenarioKind::PoissonNb => 1,
            ScenarioKind::OriginHetero => 2,
            ScenarioKind::SlrHetero => 3,
            ScenarioKind::SlrHomo => 4,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// A data-generating law together with its pseudo-true parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Pseudo-true working-model parameter.
    pub truth: DVector<f64>,
}

impl Scenario {
    /// Defaults: mean 3 (counts), slope 1 (origin), `(1, 1)` (linear).
    pub fn new(kind: ScenarioKind) -> Self {
        let truth = match kind {
            ScenarioKind::PoissonNb => vec![NB_MEAN],
            ScenarioKind::OriginHetero => vec![1.0],
            ScenarioKind::SlrHetero | ScenarioKind::SlrHomo => vec![1.0, 1.0],
        };
        Scenario {
            kind,
            truth: DVector::from_vec(truth),
        }
    }

    /// Replaces the regression coefficients. Count scenarios keep their mean.
    pub fn with_truth(mut self, truth: Vec<f64>) -> Result<Self> {
        if self.kind == ScenarioKind::PoissonNb || truth.len() != self.truth.len() {
            return Err(Error::Config(format!(
                "cannot set truth {truth:?} for scenario {}",
                self.kind
            )));
        }
        self.truth = DVector::from_vec(truth);
        Ok(self)
    }

    pub fn model(&self) -> WorkingModel {
        WorkingModel::new(match self.kind {
            ScenarioKind::PoissonNb => ModelKind::PoissonMean,
            ScenarioKind::OriginHetero => ModelKind::OriginRegression,
            ScenarioKind::SlrHetero | ScenarioKind::SlrHomo => ModelKind::LinearRegression,
        })
    }

    pub fn dim(&self) -> usize {
        self.truth.len()
    }

    pub fn default_methods(&self) -> Vec<Method> {
        if self.dim() == 1 {
            Method::SCALAR.to_vec()
        } else {
            Method::JOINT.to_vec()
        }
    }

    /// Human-readable generator assumptions, echoed into run manifests.
    pub fn assumptions(&self) -> Vec<String> {
        let truth = format!("truth = {:?}", self.truth.as_slice());
        match self.kind {
            ScenarioKind::PoissonNb => vec![
                format!(
                    "y ~ gamma-poisson mixture, shape {}, mean {NB_MEAN}, variance {NB_VARIANCE}",
                    nb_shape(NB_MEAN, NB_VARIANCE)
                ),
                truth,
            ],
            ScenarioKind::SlrHomo => vec![
                "x ~ N(0, 1) redrawn per replicate".into(),
                "errors ~ N(0, 1)".into(),
                truth,
            ],
            _ => vec![
                "x ~ N(0, 1) redrawn per replicate".into(),
                "errors ~ N(0, 1 + |x|)".into(),
                truth,
            ],
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the replicate stream for `(seed, tag, n, replicate)`.
pub fn stream_seed(seed: u64, tag: u64, n: usize, replicate: usize) -> u64 {
    [tag, n as u64, replicate as u64]
        .into_iter()
        .fold(splitmix(seed), |acc, v| splitmix(acc ^ splitmix(v)))
}

/// Draws one dataset of size `n` from the replicate stream `stream`.
pub fn gen_dataset(scenario: &Scenario, n: usize, stream: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config(format!("sample size {n} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    match scenario.kind {
        ScenarioKind::PoissonNb => {
            let shape = nb_shape(NB_MEAN, NB_VARIANCE);
            let y = sample_gamma_poisson(&mut rng, n, NB_MEAN, shape)?;
            Dataset::from_y(y)
        }
        ScenarioKind::OriginHetero | ScenarioKind::SlrHetero | ScenarioKind::SlrHomo => {
            let hetero = scenario.kind != ScenarioKind::SlrHomo;
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = std.sample(&mut rng);
                let sd = if hetero { (1.0 + x.abs()).sqrt() } else { 1.0 };
                let e = sd * std.sample(&mut rng);
                let mean = match scenario.kind {
                    ScenarioKind::OriginHetero => scenario.truth[0] * x,
                    _ => scenario.truth[0] + scenario.truth[1] * x,
                };
                xs.push(x);
                ys.push(mean + e);
            }
            if scenario.kind == ScenarioKind::OriginHetero {
                Dataset::from_xy(&xs, ys)
            } else {
                let mut design = DMatrix::from_element(n, 2, 1.0);
                design.set_column(1, &DVector::from_vec(xs));
                Dataset::new(ys, Some(design))
            }
        }
    }
}

/// Negative binomial draws as a Poisson with Gamma(shape, mean/shape) rate.
pub fn sample_gamma_poisson<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    mean: f64,
    shape: f64,
) -> Result<Vec<f64>> {
    let gamma = Gamma::new(shape, mean / shape).map_err(|e| Error::Config(e.to_string()))?;
    (0..n)
        .map(|_| {
            let rate: f64 = gamma.sample(rng);
            if rate <= 0.0 {
                return Ok(0.0);
            }
            Poisson::new(rate)
                .map(|p| p.sample(rng))
                .map_err(|e| Error::Config(e.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(scenario: Scenario, n_grid: Vec<usize>, reps: usize, seed: u64) -> Self {
        let methods = scenario.default_methods();
        SimConfig {
            scenario,
            n_grid,
            reps,
            alpha: 0.05,
            methods,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        validate_grid(&self.n_grid, 2)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        let p = self.scenario.dim();
        if let Some(m) = self.methods.iter().find(|m| !m.valid_for_dim(p)) {
            return Err(Error::UnsupportedCorrection(m.as_str(), p));
        }
        Ok(())
    }
}

fn validate_grid(grid: &[usize], min: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty sample-size grid".into()));
    }
    if grid[0] < min {
        return Err(Error::Config(format!("sample size {} < {min}", grid[0])));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sample-size grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Aggregated coverage of one method at one sample size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub scenario: String,
    pub method: Method,
    pub n: usize,
    pub reps: usize,
    pub covered: usize,
    pub degenerate: usize,
    pub seed: u64,
}

impl CoverageRecord {
    /// Replicates that entered the denominator.
    pub fn effective_reps(&self) -> usize {
        self.reps - self.degenerate
    }

    /// `covered / (reps - degenerate)`; NaN when every replicate was degenerate.
    pub fn coverage(&self) -> f64 {
        match self.effective_reps() {
            0 => f64::NAN,
            m => self.covered as f64 / m as f64,
        }
    }

    pub fn mc_stderr(&self) -> f64 {
        let c = self.coverage();
        (c * (1.0 - c) / self.effective_reps() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Covered,
    Missed,
    Degenerate,
}

fn outcome(res: Result<bool>) -> Result<Outcome> {
    match res {
        Ok(true) => Ok(Outcome::Covered),
        Ok(false) => Ok(Outcome::Missed),
        Err(e) if e.is_degenerate() => Ok(Outcome::Degenerate),
        Err(e) => Err(e),
    }
}

fn tally(
    scenario: &str,
    methods: &[Method],
    n: usize,
    seed: u64,
    outcomes: &[Vec<Outcome>],
) -> Vec<CoverageRecord> {
    methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let count = |o: Outcome| outcomes.iter().filter(|row| row[j] == o).count();
            CoverageRecord {
                scenario: scenario.to_string(),
                method,
                n,
                reps: outcomes.len(),
                covered: count(Outcome::Covered),
                degenerate: count(Outcome::Degenerate),
                seed,
            }
        })
        .collect()
}

/// Per-replicate covered flags (`None` = degenerate), one row per replicate.
pub fn replicate_flags(config: &SimConfig, n: usize) -> Result<Vec<Vec<Option<bool>>>> {
    let rows = replicate_outcomes(config, n)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|o| match o {
                    Outcome::Covered => Some(true),
                    Outcome::Missed => Some(false),
                    Outcome::Degenerate => None,
                })
                .collect()
        })
        .collect())
}

fn replicate_outcomes(config: &SimConfig, n: usize) -> Result<Vec<Vec<Outcome>>> {
    let scenario = &config.scenario;
    let model = scenario.model();
    let tag = scenario.kind.stream_tag();
    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let data = gen_dataset(scenario, n, stream_seed(config.seed, tag, n, rep))?;
            let fit = match mle_fit(&model, &data) {
                Ok(f) => f,
                Err(e) if e.is_degenerate() => {
                    return Ok(vec![Outcome::Degenerate; config.methods.len()]);
                }
                Err(e) => return Err(e),
            };
            config
                .methods
                .iter()
                .map(|&m| outcome(covers_at(&model, &data, &fit, &scenario.truth, m, config.alpha)))
                .collect()
        })
        .collect()
}

/// Coverage of every configured method at every grid size.
pub fn run_coverage(config: &SimConfig) -> Result<Vec<CoverageRecord>> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.n_grid.len() * config.methods.len());
    for &n in &config.n_grid {
        let outcomes = replicate_outcomes(config, n)?;
        records.extend(tally(
            config.scenario.kind.as_str(),
            &config.methods,
            n,
            config.seed,
            &outcomes,
        ));
    }
    Ok(records)
}

/// Settings for resampling studies on a finite population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Cover the intercept jointly with the slopes.
    pub include_intercept: bool,
    /// Draw subsamples with replacement instead of without.
    pub with_replacement: bool,
}

impl PopulationConfig {
    pub fn new(sizes: Vec<usize>, reps: usize, seed: u64) -> Self {
        PopulationConfig {
            sizes,
            reps,
            alpha: 0.05,
            methods: Method::JOINT.to_vec(),
            seed,
            include_intercept: true,
            with_replacement: false,
        }
    }
}

const POPULATION_TAG: u64 = 0x0070_6f70;

/// Columns whose entries are all exactly one.
fn intercept_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| x.column(j).iter().all(|&v| v == 1.0))
        .collect()
}

/// Repeatedly subsamples `population`, fits a linear regression and checks
/// joint coverage of the full-population least-squares coefficients.
pub fn population_study(population: &Dataset, config: &PopulationConfig) -> Result<Vec<CoverageRecord>> {
    let model = WorkingModel::linear_regression();
    let truth_fit = mle_fit(&model, population)?;
    let x = population
        .x()
        .ok_or_else(|| Error::InvalidData("population needs covariates".into()))?;
    let p = x.ncols();
    let targets: Vec<usize> = if config.include_intercept {
        (0..p).collect()
    } else {
        let skip = intercept_columns(x);
        (0..p).filter(|j| !skip.contains(j)).collect()
    };
    if targets.is_empty() {
        return Err(Error::Config("no coefficients left to cover".into()));
    }
    let truth = DVector::from_iterator(targets.len(), targets.iter().map(|&j| truth_fit.theta[j]));

    if config.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    validate_grid(&config.sizes, 2)?;
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {} not in (0, 1)", config.alpha)));
    }
    let big = population.n();
    if let Some(&s) = config.sizes.iter().find(|&&s| s > big && !config.with_replacement) {
        return Err(Error::Config(format!("sample size {s} exceeds population {big}")));
    }
    if let Some(m) = config.methods.iter().find(|m| !m.valid_for_dim(targets.len())) {
        return Err(Error::UnsupportedCorrection(m.as_str(), targets.len()));
    }

    let mut records = Vec::new();
    for &size in &config.sizes {
        let outcomes: Vec<Vec<Outcome>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, POPULATION_TAG, size, rep));
                let rows: Vec<usize> = if config.with_replacement {
                    (0..size).map(|_| rng.random_range(0..big)).collect()
                } else {
                    index::sample(&mut rng, big, size).into_vec()
                };
                let sample = match population.select_rows(&rows) {
                    Ok(s) => s,
                    Err(e) if e.is_degenerate() => {
                        return Ok(vec![Outcome::Degenerate; config.methods.len()]);
                    }
                    Err(e) => return Err(e),
                };
                let fit = match mle_fit(&model, &sample) {
                    Ok(f) => f,
                    Err(e) if e.is_degenerate() => {
                        return Ok(vec![Outcome::Degenerate; config.methods.len()]);
                    }
                    Err(e) => return Err(e),
                };
                config
                    .methods
                    .iter()
                    .map(|&m| {
                        outcome(covers_subset(&model, &sample, &fit, &truth, &targets, m, config.alpha))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        records.extend(tally("population", &config.methods, size, config.seed, &outcomes));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nb_dispersion_from_moments() {
        assert!((nb_shape(3.0, 3.9) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in ScenarioKind::ALL {
            let s = Scenario::new(kind);
            let a = gen_dataset(&s, 25, stream_seed(7, 1, 25, 3)).unwrap();
            let b = gen_dataset(&s, 25, stream_seed(7, 1, 25, 3)).unwrap();
            assert_eq!(a, b);
            let c = gen_dataset(&s, 25, stream_seed(7, 1, 25, 4)).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn single_replicate_counts() {
        let cfg = SimConfig::new(Scenario::new(ScenarioKind::OriginHetero), vec![10, 20], 1, 3);
        for r in run_coverage(&cfg).unwrap() {
            assert_eq!(r.reps, 1);
            assert!(r.covered + r.degenerate <= 1);
        }
    }

    #[test]
    fn config_validation() {
        let s = Scenario::new(ScenarioKind::SlrHetero);
        let mut cfg = SimConfig::new(s, vec![10, 10], 5, 1);
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![10, 20];
        assert!(cfg.validate().is_ok());
        cfg.methods.push(Method::Wald(crate::estimators::CorrectionKind::Hc4));
        assert!(matches!(cfg.validate(), Err(Error::UnsupportedCorrection(..))));
        cfg.methods.pop();
        cfg.reps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn coverage_and_stderr() {
        let r = CoverageRecord {
            scenario: "x".into(),
            method: Method::Pivot,
            n: 10,
            reps: 100,
            covered: 72,
            degenerate: 10,
            seed: 0,
        };
        assert!((r.coverage() - 0.8).abs() < 1e-15);
        assert!((r.mc_stderr() - (0.8f64 * 0.2 / 90.0).sqrt()).abs() < 1e-15);
    }
}
