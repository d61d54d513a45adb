//! Datasets and the built-in working likelihoods.
//!
//! Three working models are provided, each with closed-form scores, Hessians
//! and maximum likelihood estimates:
//!
//! * `PoissonMean`: `y_i ~ Pois(theta)`, score `y_i/theta - 1`.
//! * `OriginRegression`: `y_i = theta x_i + e_i`, `e_i ~ N(0, sigma2)`.
//! * `LinearRegression`: `y = X theta + e`, `e ~ N(0, sigma2 I)`.
//!
//! The Gaussian scale `sigma2` is a nuisance parameter. It multiplies every
//! score by `1/sigma2`; all pivot and sandwich quantities are invariant to
//! that factor, so it defaults to one.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Responses plus an optional design matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Option<DMatrix<f64>>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    /// Validates `n >= 1`, finiteness, matching row counts and full column rank.
    pub fn new(y: Vec<f64>, x: Option<DMatrix<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyData("no observations".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("response {i} is not finite")));
        }
        if let Some(x) = &x {
            check_design(x, y.len())?;
        }
        Ok(Dataset { y, x, labels: None })
    }

    /// Response-only dataset (iid models such as the Poisson mean).
    pub fn from_y(y: Vec<f64>) -> Result<Self> {
        Self::new(y, None)
    }

    /// Single-covariate dataset without intercept (regression through the origin).
    pub fn from_xy(x: &[f64], y: Vec<f64>) -> Result<Self> {
        Self::new(y, Some(DMatrix::from_column_slice(x.len(), 1, x)))
    }

    /// Attaches design column names; one label per design column.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p_design() {
            return Err(Error::InvalidData(format!(
                "{} labels for {} design columns",
                labels.len(),
                self.p_design()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of design columns, zero when there is no design.
    pub fn p_design(&self) -> usize {
        self.x.as_ref().map_or(0, |x| x.ncols())
    }

    /// Rows `idx` (repeats allowed). Rank is re-checked on the subset.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let y: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        let x = self.x.as_ref().map(|x| x.select_rows(idx.iter()));
        let mut d = Dataset::new(y, x)?;
        d.labels = self.labels.clone();
        Ok(d)
    }

    /// Same design, new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(Error::InvalidData("response length changed".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("response {i} is not finite")));
        }
        Ok(Dataset {
            y,
            x: self.x.clone(),
            labels: self.labels.clone(),
        })
    }
}

fn check_design(x: &DMatrix<f64>, n: usize) -> Result<()> {
    if x.nrows() != n {
        return Err(Error::InvalidData(format!(
            "design has {} rows, response has {n}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidData("design has no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("design contains non-finite values".into()));
    }
    if x.column_iter().any(|c| c.iter().all(|&v| v == 0.0)) {
        return Err(Error::DegenerateCovariate);
    }
    if x.ncols() > n || linalg::spd_factor(&x.tr_mul(x)).is_none() {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

/// Working-model parameter vector plus the optional Gaussian scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint {
    pub theta: DVector<f64>,
    /// Fitted `RSS/n` for Gaussian models. Zero on an exact fit.
    pub sigma2: Option<f64>,
}

impl ParamPoint {
    pub fn new(theta: Vec<f64>) -> Self {
        ParamPoint {
            theta: DVector::from_vec(theta),
            sigma2: None,
        }
    }

    pub fn scalar(theta: f64) -> Self {
        Self::new(vec![theta])
    }

    pub fn p(&self) -> usize {
        self.theta.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PoissonMean,
    OriginRegression,
    LinearRegression,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::PoissonMean => "poisson_mean",
            ModelKind::OriginRegression => "origin_regression",
            ModelKind::LinearRegression => "linear_regression",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" | "poisson_mean" => Ok(ModelKind::PoissonMean),
            "origin" | "origin_regression" => Ok(ModelKind::OriginRegression),
            "linear" | "linear_regression" | "slr" => Ok(ModelKind::LinearRegression),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// An assumed (possibly wrong) likelihood with per-observation derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingModel {
    pub kind: ModelKind,
    sigma2: f64,
}

impl WorkingModel {
    pub fn new(kind: ModelKind) -> Self {
        WorkingModel { kind, sigma2: 1.0 }
    }

    pub fn poisson() -> Self {
        Self::new(ModelKind::PoissonMean)
    }

    pub fn origin_regression() -> Self {
        Self::new(ModelKind::OriginRegression)
    }

    pub fn linear_regression() -> Self {
        Self::new(ModelKind::LinearRegression)
    }

    /// Fixes the Gaussian nuisance scale used inside scores and Hessians.
    /// Ignored by the Poisson model.
    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!("sigma2 = {sigma2}")));
        }
        self.sigma2 = sigma2;
        Ok(self)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self.kind, ModelKind::PoissonMean)
    }

    /// Parameter dimension for this dataset.
    pub fn dim(&self, data: &Dataset) -> usize {
        match self.kind {
            ModelKind::PoissonMean | ModelKind::OriginRegression => 1,
            ModelKind::LinearRegression => data.p_design(),
        }
    }

    /// Lower edge of the parameter space for scalar models, if any.
    pub fn lower_bound(&self) -> Option<f64> {
        match self.kind {
            ModelKind::PoissonMean => Some(0.0),
            _ => None,
        }
    }

    /// The design used for leverage: an intercept column for the iid
    /// Poisson model, otherwise the data's own design.
    pub fn effective_design(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        match self.kind {
            ModelKind::PoissonMean => Ok(DMatrix::from_element(data.n(), 1, 1.0)),
            _ => data
                .x()
                .cloned()
                .ok_or_else(|| Error::InvalidData("regression model requires a design".into())),
        }
    }

    /// Checks that `data` can be used with this model.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        match self.kind {
            ModelKind::PoissonMean => {
                if let Some(i) = data.y().iter().position(|&v| v < 0.0) {
                    return Err(Error::InvalidData(format!(
                        "poisson response {i} is negative"
                    )));
                }
            }
            ModelKind::OriginRegression => match data.x() {
                Some(x) if x.ncols() == 1 => {}
                Some(x) => {
                    return Err(Error::InvalidData(format!(
                        "origin regression needs one covariate, got {}",
                        x.ncols()
                    )))
                }
                None => return Err(Error::InvalidData("origin regression requires x".into())),
            },
            ModelKind::LinearRegression => {
                if data.x().is_none() {
                    return Err(Error::InvalidData("linear regression requires X".into()));
                }
            }
        }
        Ok(())
    }

    fn check_theta(&self, data: &Dataset, theta: &DVector<f64>) -> Result<()> {
        let p = self.dim(data);
        if theta.len() != p {
            return Err(Error::Domain(format!(
                "theta has length {}, model dimension is {p}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite theta {:?}", theta.as_slice())));
        }
        if self.kind == ModelKind::PoissonMean && theta[0] <= 0.0 {
            return Err(Error::Domain(format!("poisson mean {} <= 0", theta[0])));
        }
        Ok(())
    }

    /// Residual-like factor `r_i` with `score_i = r_i * g_i` (Gaussian only).
    fn residual(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> f64 {
        let x = data.x().expect("validated");
        let fitted = match self.kind {
            ModelKind::OriginRegression => theta[0] * x[(i, 0)],
            _ => x.row(i).iter().zip(theta.iter()).map(|(a, b)| a * b).sum(),
        };
        data.y()[i] - fitted
    }

    /// Per-observation log density `log f(y_i; theta)`, up to terms free of theta.
    pub fn log_density_i(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> Result<f64> {
        self.validate(data)?;
        self.check_theta(data, theta)?;
        Ok(match self.kind {
            ModelKind::PoissonMean => data.y()[i] * theta[0].ln() - theta[0],
            _ => {
                let r = self.residual(data, theta, i);
                -0.5 * r * r / self.sigma2
            }
        })
    }

    /// Per-observation score `l_theta(y_i; theta)`.
    pub fn score_i(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.validate(data)?;
        self.check_theta(data, theta)?;
        Ok(self.score_unchecked(data, theta, i))
    }

    fn score_unchecked(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> DVector<f64> {
        match self.kind {
            ModelKind::PoissonMean => DVector::from_element(1, data.y()[i] / theta[0] - 1.0),
            _ => {
                let r = self.residual(data, theta, i) / self.sigma2;
                data.x().expect("validated").row(i).transpose() * r
            }
        }
    }

    /// Per-observation Hessian `l_theta_theta(y_i; theta)`.
    pub fn hess_i(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> Result<DMatrix<f64>> {
        self.validate(data)?;
        self.check_theta(data, theta)?;
        Ok(self.hess_unchecked(data, theta, i))
    }

    fn hess_unchecked(&self, data: &Dataset, theta: &DVector<f64>, i: usize) -> DMatrix<f64> {
        match self.kind {
            ModelKind::PoissonMean => {
                DMatrix::from_element(1, 1, -data.y()[i] / (theta[0] * theta[0]))
            }
            _ => {
                let xi = data.x().expect("validated").row(i).transpose();
                -(&xi * xi.transpose()) / self.sigma2
            }
        }
    }

    /// All per-observation scores as the rows of an `n x p` matrix.
    pub fn score_matrix(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.validate(data)?;
        self.check_theta(data, theta)?;
        let p = theta.len();
        let mut s = DMatrix::zeros(data.n(), p);
        for i in 0..data.n() {
            s.row_mut(i).copy_from(&self.score_unchecked(data, theta, i).transpose());
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(theta.as_slice().to_vec()));
        }
        Ok(s)
    }

    /// `sum_i l_theta_theta(y_i; theta)`.
    pub fn hessian_sum(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.validate(data)?;
        self.check_theta(data, theta)?;
        let h = match self.kind {
            ModelKind::PoissonMean => {
                let sy: f64 = data.y().iter().sum();
                DMatrix::from_element(1, 1, -sy / (theta[0] * theta[0]))
            }
            _ => {
                let x = data.x().expect("validated");
                -x.tr_mul(x) / self.sigma2
            }
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(theta.as_slice().to_vec()));
        }
        Ok(h)
    }
}

/// Closed-form maximum (misspecified) likelihood estimate.
pub fn mle_fit(model: &WorkingModel, data: &Dataset) -> Result<ParamPoint> {
    model.validate(data)?;
    let n = data.n() as f64;
    match model.kind {
        ModelKind::PoissonMean => {
            let mean = data.y().iter().sum::<f64>() / n;
            Ok(ParamPoint::scalar(mean))
        }
        ModelKind::OriginRegression => {
            let x = data.x().expect("validated").column(0);
            let sxx: f64 = x.iter().map(|v| v * v).sum();
            if sxx == 0.0 {
                return Err(Error::DegenerateCovariate);
            }
            let sxy: f64 = x.iter().zip(data.y()).map(|(a, b)| a * b).sum();
            let theta = sxy / sxx;
            let rss: f64 = x
                .iter()
                .zip(data.y())
                .map(|(a, b)| (b - theta * a).powi(2))
                .sum();
            Ok(ParamPoint {
                theta: DVector::from_element(1, theta),
                sigma2: Some(rss / n),
            })
        }
        ModelKind::LinearRegression => {
            let x = data.x().expect("validated");
            let y = DVector::from_column_slice(data.y());
            let theta =
                linalg::spd_solve(&x.tr_mul(x), &x.tr_mul(&y)).ok_or(Error::SingularDesign)?;
            let resid = &y - x * &theta;
            Ok(ParamPoint {
                theta,
                sigma2: Some(resid.norm_squared() / n),
            })
        }
    }
}

/// Unscaled total score `sum_i l_theta(y_i; theta)`.
pub fn score_sum(model: &WorkingModel, data: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let s = model.score_matrix(data, theta)?;
    Ok(s.row_sum().transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_mle_is_sample_mean() {
        let d = Dataset::from_y(vec![1.0, 2.0, 3.0]).unwrap();
        let fit = mle_fit(&WorkingModel::poisson(), &d).unwrap();
        assert_eq!(fit.theta[0], 2.0);
    }

    #[test]
    fn origin_exact_fit() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = Dataset::from_xy(&x, y).unwrap();
        let fit = mle_fit(&WorkingModel::origin_regression(), &d).unwrap();
        assert_eq!(fit.theta[0], 2.0);
        assert_eq!(fit.sigma2, Some(0.0));
    }

    #[test]
    fn intercept_only_constant_response() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let d = Dataset::new(vec![4.5; 5], Some(x)).unwrap();
        let fit = mle_fit(&WorkingModel::linear_regression(), &d).unwrap();
        assert_relative_eq!(fit.theta[0], 4.5, epsilon = 1e-14);
        assert!(fit.sigma2.unwrap().abs() < 1e-24);
    }

    #[test]
    fn score_sum_examples() {
        let d = Dataset::from_y(vec![1.0, 2.0, 3.0]).unwrap();
        let s = score_sum(&WorkingModel::poisson(), &d, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(s[0], 3.0);

        let d = Dataset::from_xy(&[1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let s = score_sum(
            &WorkingModel::origin_regression(),
            &d,
            &DVector::from_element(1, 0.0),
        )
        .unwrap();
        assert_eq!(s[0], 2.0);
    }

    #[test]
    fn design_errors() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            Dataset::new(vec![1.0, 2.0, 3.0], Some(x)),
            Err(Error::SingularDesign)
        ));
        assert!(matches!(
            Dataset::from_xy(&[0.0, 0.0], vec![1.0, 2.0]),
            Err(Error::DegenerateCovariate)
        ));
        assert!(matches!(Dataset::from_y(vec![]), Err(Error::EmptyData(_))));
        let wide = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            Dataset::new(vec![1.0], Some(wide)),
            Err(Error::SingularDesign)
        ));
    }

    #[test]
    fn poisson_domain() {
        let d = Dataset::from_y(vec![1.0, 2.0]).unwrap();
        let m = WorkingModel::poisson();
        assert!(matches!(
            m.score_i(&d, &DVector::from_element(1, 0.0), 0),
            Err(Error::Domain(_))
        ));
        let neg = Dataset::from_y(vec![-1.0, 2.0]).unwrap();
        assert!(mle_fit(&m, &neg).is_err());
    }

    #[test]
    fn regression_requires_design() {
        let d = Dataset::from_y(vec![1.0, 2.0]).unwrap();
        assert!(mle_fit(&WorkingModel::origin_regression(), &d).is_err());
        assert!(mle_fit(&WorkingModel::linear_regression(), &d).is_err());
    }
}
