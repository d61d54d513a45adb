//! Bread and meat matrices, leverage, and the sandwich correction catalog.
//!
//! Conventions:
//!
//! * `A_n(theta) = -(1/n) sum_i l_theta_theta(y_i; theta)` (sign folded in).
//! * `B_n(theta) = (1/n) sum_i w_i l_theta l_theta^T`, `w_i = 1` unless a
//!   leverage correction reweights the outer products.
//! * [`sandwich_cov`] returns the asymptotic covariance `A^-1 B A^-1` of
//!   `sqrt(n)(theta_hat - theta*)`; [`corrected_cov`] returns the covariance of
//!   `theta_hat` itself, i.e. already divided by `n`.
//!
//! The correction labels are not the usual HC0-HC4 ones: `hc1` divides each meat
//! term by `1 - h_ii`, `hc2` scales by `n/(n-p)`, `hc3` divides by
//! `(1 - h_ii)^2`, `hc4` adjusts the normal quantile and `hc5` uses a
//! Student-t quantile with Satterthwaite degrees of freedom.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{mle_fit, Dataset, ParamPoint, WorkingModel};
use crate::quantile;

/// Leverages above this are treated as exactly one.
const LEVERAGE_ONE_TOL: f64 = 1e-12;

/// Leverage cap used by the hc5 meat adjustment.
pub const HC5_LEVERAGE_CAP: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub at: DVector<f64>,
    pub n: usize,
}

/// Bread and meat evaluated at `theta` (not forced to the estimate).
pub fn moment_matrices(
    model: &WorkingModel,
    data: &Dataset,
    theta: &DVector<f64>,
) -> Result<MomentMatrices> {
    let scores = model.score_matrix(data, theta)?;
    let n = data.n();
    let a = -model.hessian_sum(data, theta)? / n as f64;
    Ok(MomentMatrices {
        a: linalg::symmetrize(&a),
        b: meat(&scores, None),
        at: theta.clone(),
        n,
    })
}

/// `(1/n) sum_i w_i s_i s_i^T` over the rows of `scores`.
pub fn meat(scores: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    let n = scores.nrows();
    let b = match weights {
        None => scores.tr_mul(scores),
        Some(w) => {
            let mut ws = scores.clone();
            for (i, mut row) in ws.row_iter_mut().enumerate() {
                row *= w[i];
            }
            scores.tr_mul(&ws)
        }
    };
    linalg::symmetrize(&(b / n as f64))
}

/// Plug-in sandwich `A_n(theta_hat)^-1 B_n(theta_hat) A_n(theta_hat)^-1`.
pub fn sandwich_cov(model: &WorkingModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let fit = mle_fit(model, data)?;
    sandwich_at(model, data, &fit.theta, None)
}

fn sandwich_at(
    model: &WorkingModel,
    data: &Dataset,
    theta: &DVector<f64>,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let scores = model.score_matrix(data, theta)?;
    let a = -model.hessian_sum(data, theta)? / data.n() as f64;
    let a_inv = linalg::spd_inverse(&linalg::symmetrize(&a)).ok_or(Error::BreadSingular)?;
    let b = meat(&scores, weights);
    Ok(linalg::symmetrize(&(&a_inv * b * &a_inv)))
}

/// Hat-matrix diagonal of the model's effective design. The iid Poisson model
/// uses an intercept-only design, so every leverage is `1/n`.
pub fn leverage(model: &WorkingModel, data: &Dataset) -> Result<Vec<f64>> {
    model.validate(data)?;
    let x = model.effective_design(data)?;
    let g = linalg::spd_inverse(&x.tr_mul(&x)).ok_or(Error::SingularDesign)?;
    Ok((0..x.nrows())
        .map(|i| {
            let xi = x.row(i);
            (xi * &g * xi.transpose())[(0, 0)].clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionKind {
    None,
    Hc1,
    Hc2,
    Hc3,
    Hc4,
    Hc5,
    MleInfo,
}

impl CorrectionKind {
    pub const ALL: [CorrectionKind; 7] = [
        CorrectionKind::None,
        CorrectionKind::Hc1,
        CorrectionKind::Hc2,
        CorrectionKind::Hc3,
        CorrectionKind::Hc4,
        CorrectionKind::Hc5,
        CorrectionKind::MleInfo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionKind::None => "none",
            CorrectionKind::Hc1 => "hc1",
            CorrectionKind::Hc2 => "hc2",
            CorrectionKind::Hc3 => "hc3",
            CorrectionKind::Hc4 => "hc4",
            CorrectionKind::Hc5 => "hc5",
            CorrectionKind::MleInfo => "mle_info",
        }
    }

    /// hc4 and hc5 are defined for scalar targets only.
    pub fn scalar_only(&self) -> bool {
        matches!(self, CorrectionKind::Hc4 | CorrectionKind::Hc5)
    }

    /// Meat weights for the leverage-based corrections.
    pub fn meat_weights(&self, leverage: &[f64]) -> Result<Option<Vec<f64>>> {
        let check = |i: usize, h: f64| {
            if h >= 1.0 - LEVERAGE_ONE_TOL {
                Err(Error::DegenerateLeverage(i))
            } else {
                Ok(1.0 - h)
            }
        };
        match self {
            CorrectionKind::Hc1 => leverage
                .iter()
                .enumerate()
                .map(|(i, &h)| check(i, h).map(|d| 1.0 / d))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            CorrectionKind::Hc3 => leverage
                .iter()
                .enumerate()
                .map(|(i, &h)| check(i, h).map(|d| 1.0 / (d * d)))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            CorrectionKind::Hc5 => Ok(Some(
                leverage
                    .iter()
                    .map(|&h| 1.0 / (1.0 - h.min(HC5_LEVERAGE_CAP)))
                    .collect(),
            )),
            _ => Ok(None),
        }
    }
}

impl fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "sandwich" => Ok(CorrectionKind::None),
            "mle" | "mle_info" => Ok(CorrectionKind::MleInfo),
            other => CorrectionKind::ALL
                .into_iter()
                .find(|k| k.as_str() == other)
                .ok_or_else(|| Error::Config(format!("unknown correction '{other}'"))),
        }
    }
}

/// How a method turns a covariance into interval or region half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantilePolicy {
    /// `z_{1-alpha/2}` for intervals, `chi2_{p,1-alpha}` for regions.
    Normal,
    /// Normal quantile inflated for the relative variance `kappa` of the
    /// variance estimate: `z (1 + (z^2 + 1) kappa / 8)`.
    AdjustedNormal { kappa: f64 },
    /// Student-t quantile with `df` degrees of freedom.
    StudentT { df: f64 },
}

impl QuantilePolicy {
    /// Two-sided critical value at level `1 - alpha`.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        let prob = 1.0 - alpha / 2.0;
        match *self {
            QuantilePolicy::Normal => quantile::std_normal(prob),
            QuantilePolicy::AdjustedNormal { kappa } => {
                let z = quantile::std_normal(prob)?;
                Ok(z * (1.0 + (z * z + 1.0) * kappa / 8.0))
            }
            QuantilePolicy::StudentT { df } => quantile::student_t(prob, df),
        }
    }

    /// Threshold for the squared Wald form of a `p`-dimensional target.
    pub fn region_threshold(&self, alpha: f64, p: usize) -> Result<f64> {
        match self {
            QuantilePolicy::Normal if p > 1 => quantile::chi2(1.0 - alpha, p as f64),
            QuantilePolicy::Normal => self.critical_value(alpha).map(|z| z * z),
            _ if p == 1 => self.critical_value(alpha).map(|q| q * q),
            _ => Err(Error::UnsupportedCorrection("quantile adjustment", p)),
        }
    }
}

/// Covariance of the estimate under a correction, plus its quantile policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedCov {
    pub kind: CorrectionKind,
    /// Covariance of `theta_hat` (already divided by `n`).
    pub cov: DMatrix<f64>,
    pub policy: QuantilePolicy,
}

pub fn corrected_cov(
    model: &WorkingModel,
    data: &Dataset,
    kind: CorrectionKind,
) -> Result<CorrectedCov> {
    let fit = mle_fit(model, data)?;
    corrected_cov_at(model, data, &fit, kind)
}

/// [`corrected_cov`] for an already computed fit.
pub fn corrected_cov_at(
    model: &WorkingModel,
    data: &Dataset,
    fit: &ParamPoint,
    kind: CorrectionKind,
) -> Result<CorrectedCov> {
    let n = data.n() as f64;
    let p = fit.p();
    if kind.scalar_only() && p != 1 {
        return Err(Error::UnsupportedCorrection(kind.as_str(), p));
    }
    let theta = &fit.theta;
    let (cov, policy) = match kind {
        CorrectionKind::None => (sandwich_at(model, data, theta, None)? / n, QuantilePolicy::Normal),
        CorrectionKind::Hc1 | CorrectionKind::Hc3 => {
            let w = kind.meat_weights(&leverage(model, data)?)?;
            (sandwich_at(model, data, theta, w.as_deref())? / n, QuantilePolicy::Normal)
        }
        CorrectionKind::Hc2 => {
            if data.n() <= p {
                return Err(Error::Config(format!("hc2 needs n > p, got n = {n}, p = {p}")));
            }
            let scale = n / (n - p as f64);
            (sandwich_at(model, data, theta, None)? * (scale / n), QuantilePolicy::Normal)
        }
        CorrectionKind::Hc4 => {
            let kappa = relative_variance(model, data, &vec![1.0; data.n()])?;
            (
                sandwich_at(model, data, theta, None)? / n,
                QuantilePolicy::AdjustedNormal { kappa },
            )
        }
        CorrectionKind::Hc5 => {
            let w = kind.meat_weights(&leverage(model, data)?)?.expect("hc5 has weights");
            let kappa = relative_variance(model, data, &w)?;
            let df = (2.0 / kappa).max(1.0);
            (
                sandwich_at(model, data, theta, Some(&w))? / n,
                QuantilePolicy::StudentT { df },
            )
        }
        CorrectionKind::MleInfo => {
            let a = -model.hessian_sum(data, theta)? / n;
            let a_inv = linalg::spd_inverse(&linalg::symmetrize(&a)).ok_or(Error::BreadSingular)?;
            // Gaussian bread carries 1/sigma2 of the working model; rescale to
            // the fitted variance so this is the usual information covariance.
            let scale = match (model.is_gaussian(), fit.sigma2) {
                (true, Some(s2)) => s2 / model.sigma2(),
                _ => 1.0,
            };
            (a_inv * (scale / n), QuantilePolicy::Normal)
        }
    };
    Ok(CorrectedCov { kind, cov, policy })
}

/// `Var(V) / E(V)^2` for the scalar variance estimate
/// `V = sum_i a_i^2 w_i e_i^2`, computed as if the working model's errors were
/// homoscedastic normal: `E V ∝ sum a_i^2 w_i M_ii` and
/// `Var V ∝ 2 sum_ij a_i^2 w_i a_j^2 w_j M_ij^2` with `M = I - H`.
fn relative_variance(model: &WorkingModel, data: &Dataset, weights: &[f64]) -> Result<f64> {
    let x = model.effective_design(data)?;
    if x.ncols() != 1 {
        return Err(Error::UnsupportedCorrection("hc4/hc5", x.ncols()));
    }
    let g = linalg::spd_inverse(&x.tr_mul(&x)).ok_or(Error::SingularDesign)?;
    let n = x.nrows();
    let a: Vec<f64> = (0..n).map(|i| g[(0, 0)] * x[(i, 0)]).collect();
    let c: Vec<f64> = a.iter().zip(weights).map(|(ai, wi)| ai * ai * wi).collect();
    let hij = |i: usize, j: usize| x[(i, 0)] * g[(0, 0)] * x[(j, 0)];
    let mut mean = 0.0;
    let mut var = 0.0;
    for i in 0..n {
        let mii = 1.0 - hij(i, i);
        mean += c[i] * mii;
        var += c[i] * c[i] * mii * mii;
        for j in (i + 1)..n {
            let mij = -hij(i, j);
            var += 2.0 * c[i] * c[j] * mij * mij;
        }
    }
    var *= 2.0;
    if !(mean > 0.0) {
        return Err(Error::DegenerateLeverage(0));
    }
    Ok(var / (mean * mean))
}
