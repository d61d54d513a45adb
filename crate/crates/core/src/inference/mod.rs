//! Confidence intervals and regions for every method.
//!
//! The score pivot evaluates the meat `B_n` at the candidate parameter
//! instead of at the estimate:
//!
//! ```text
//! t(theta) = { (1/n) sum_i l_theta^2 }^{-1/2} (1/sqrt n) sum_i l_theta       (p = 1)
//! Q(theta) = [(1/sqrt n) sum_i l_theta]^T B_n(theta)^{-1} [(1/sqrt n) sum_i l_theta]
//! ```
//!
//! `|t| <= z_{1-alpha/2}` (or `Q <= chi2_{p,1-alpha}`) defines the pivot set.
//! Wald methods use `(theta_hat - theta)^T Cov^{-1} (theta_hat - theta)` with
//! the covariance and quantile policy of their sandwich correction.

mod interval;
mod region;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use interval::{interval, pivot_interval, wald_interval, Endpoint, IntervalResult};
pub use region::{
    region_boundary, region_membership, theorem1_gap, unit_circle, BoundaryPoint, RegionResult,
};

use crate::error::{Error, Result};
use crate::estimators::{corrected_cov_at, meat, CorrectionKind};
use crate::linalg;
use crate::model::{mle_fit, Dataset, ModelKind, ParamPoint, WorkingModel};
use crate::quantile;

/// An interval/region construction: the score pivot or a Wald form built on a
/// sandwich correction (or on the model-based information).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Pivot,
    Wald(CorrectionKind),
}

impl Method {
    pub const SANDWICH: Method = Method::Wald(CorrectionKind::None);
    pub const MLE_INFO: Method = Method::Wald(CorrectionKind::MleInfo);

    /// Every method usable for a scalar parameter.
    pub const SCALAR: [Method; 8] = [
        Method::MLE_INFO,
        Method::SANDWICH,
        Method::Wald(CorrectionKind::Hc1),
        Method::Wald(CorrectionKind::Hc2),
        Method::Wald(CorrectionKind::Hc3),
        Method::Wald(CorrectionKind::Hc4),
        Method::Wald(CorrectionKind::Hc5),
        Method::Pivot,
    ];

    /// Every method usable for a joint region.
    pub const JOINT: [Method; 6] = [
        Method::MLE_INFO,
        Method::SANDWICH,
        Method::Wald(CorrectionKind::Hc1),
        Method::Wald(CorrectionKind::Hc2),
        Method::Wald(CorrectionKind::Hc3),
        Method::Pivot,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pivot => "pivot",
            Method::Wald(CorrectionKind::None) => "sandwich",
            Method::Wald(k) => k.as_str(),
        }
    }

    /// Methods whose variance does not assume the working model is correct.
    pub fn is_robust(&self) -> bool {
        !matches!(self, Method::Wald(CorrectionKind::MleInfo))
    }

    pub fn valid_for_dim(&self, p: usize) -> bool {
        match self {
            Method::Wald(k) if k.scalar_only() => p == 1,
            _ => p >= 1,
        }
    }

    /// Parses a comma-separated list such as `pivot,sandwich,hc3`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pivot" => Ok(Method::Pivot),
            other => other
                .parse::<CorrectionKind>()
                .map(Method::Wald)
                .map_err(|_| Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.as_str().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotStat {
    /// Signed univariate pivot `t`; `None` when `p > 1`.
    pub value: Option<f64>,
    /// Quadratic form `Q`, equal to `t^2` when `p = 1`.
    pub qform: f64,
    pub at: DVector<f64>,
    pub n: usize,
}

/// Score pivot at `theta`.
pub fn pivot_stat(model: &WorkingModel, data: &Dataset, theta: &DVector<f64>) -> Result<PivotStat> {
    let scores = model.score_matrix(data, theta)?;
    pivot_from_scores(&scores, theta)
}

fn pivot_from_scores(scores: &DMatrix<f64>, theta: &DVector<f64>) -> Result<PivotStat> {
    let n = scores.nrows();
    let total = scores.row_sum().transpose();
    if scores.ncols() == 1 {
        let ss: f64 = scores.iter().map(|s| s * s).sum();
        if !(ss > 0.0) {
            return Err(Error::DegenerateMeat);
        }
        let t = total[0] / ss.sqrt();
        return Ok(PivotStat {
            value: Some(t),
            qform: t * t,
            at: theta.clone(),
            n,
        });
    }
    let b = meat(scores, None);
    let q = linalg::inv_quad_form(&b, &total).ok_or(Error::DegenerateMeat)? / n as f64;
    Ok(PivotStat {
        value: None,
        qform: q,
        at: theta.clone(),
        n,
    })
}

/// Critical value for the pivot: `z_{1-alpha/2}` when `p = 1`, otherwise the
/// threshold `chi2_{p,1-alpha}` on `Q`.
pub fn pivot_threshold(alpha: f64, p: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if p == 1 {
        quantile::std_normal(1.0 - alpha / 2.0)
    } else {
        quantile::chi2(1.0 - alpha, p as f64)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha = {alpha} not in (0, 1)")))
    }
}

/// Whether the `method` region at level `1 - alpha` contains `theta_star`.
pub fn covers(
    model: &WorkingModel,
    data: &Dataset,
    theta_star: &DVector<f64>,
    method: Method,
    alpha: f64,
) -> Result<bool> {
    let fit = mle_fit(model, data)?;
    covers_at(model, data, &fit, theta_star, method, alpha)
}

/// [`covers`] for an already computed fit.
pub fn covers_at(
    model: &WorkingModel,
    data: &Dataset,
    fit: &ParamPoint,
    theta_star: &DVector<f64>,
    method: Method,
    alpha: f64,
) -> Result<bool> {
    check_alpha(alpha)?;
    let p = fit.p();
    if theta_star.len() != p {
        return Err(Error::Domain(format!(
            "theta* has length {}, model dimension is {p}",
            theta_star.len()
        )));
    }
    if !method.valid_for_dim(p) {
        return Err(Error::UnsupportedCorrection(method.as_str(), p));
    }
    if theta_star == &fit.theta {
        return Ok(true);
    }
    match method {
        Method::Pivot => {
            let stat = pivot_stat(model, data, theta_star)?;
            let crit = pivot_threshold(alpha, p)?;
            Ok(match stat.value {
                Some(t) => t.abs() <= crit,
                None => stat.qform <= crit,
            })
        }
        Method::Wald(kind) => {
            let cc = corrected_cov_at(model, data, fit, kind)?;
            let diff = &fit.theta - theta_star;
            let w = linalg::inv_quad_form(&cc.cov, &diff).ok_or(Error::DegenerateMeat)?;
            Ok(w <= cc.policy.region_threshold(alpha, p)?)
        }
    }
}

/// Joint coverage of the coefficient sub-vector `indices` of a linear
/// regression, treating the remaining coefficients as nuisance.
///
/// Wald methods use the matching covariance block. The pivot profiles the
/// nuisance coefficients out: responses are adjusted by the candidate
/// sub-vector, regressed on the nuisance columns, and the scores use the
/// target columns residualized on the nuisance columns.
pub fn covers_subset(
    model: &WorkingModel,
    data: &Dataset,
    fit: &ParamPoint,
    theta_star: &DVector<f64>,
    indices: &[usize],
    method: Method,
    alpha: f64,
) -> Result<bool> {
    let p = fit.p();
    if indices.len() == p {
        return covers_at(model, data, fit, theta_star, method, alpha);
    }
    if model.kind != ModelKind::LinearRegression {
        return Err(Error::Config("sub-vector coverage needs linear regression".into()));
    }
    if indices.is_empty() || indices.iter().any(|&j| j >= p) || theta_star.len() != indices.len() {
        return Err(Error::Config(format!("bad target indices {indices:?} for p = {p}")));
    }
    check_alpha(alpha)?;
    let k = indices.len();
    if !method.valid_for_dim(k) {
        return Err(Error::UnsupportedCorrection(method.as_str(), k));
    }
    let sub_hat = DVector::from_iterator(k, indices.iter().map(|&j| fit.theta[j]));
    if &sub_hat == theta_star {
        return Ok(true);
    }
    match method {
        Method::Wald(kind) => {
            let cc = corrected_cov_at(model, data, fit, kind)?;
            let block = cc.cov.select_rows(indices).select_columns(indices);
            let w = linalg::inv_quad_form(&block, &(sub_hat - theta_star))
                .ok_or(Error::DegenerateMeat)?;
            Ok(w <= cc.policy.region_threshold(alpha, k)?)
        }
        Method::Pivot => {
            let scores = profiled_scores(data, theta_star, indices)?;
            let stat = pivot_from_scores(&scores, theta_star)?;
            let crit = pivot_threshold(alpha, k)?;
            Ok(match stat.value {
                Some(t) => t.abs() <= crit,
                None => stat.qform <= crit,
            })
        }
    }
}

fn profiled_scores(data: &Dataset, theta_sub: &DVector<f64>, indices: &[usize]) -> Result<DMatrix<f64>> {
    let x = data.x().ok_or_else(|| Error::InvalidData("linear regression requires X".into()))?;
    let nuisance: Vec<usize> = (0..x.ncols()).filter(|j| !indices.contains(j)).collect();
    let xs = x.select_columns(indices);
    let xn = x.select_columns(&nuisance);
    let y = DVector::from_column_slice(data.y());
    let r = y - &xs * theta_sub;
    let xtx = xn.tr_mul(&xn);
    let chol = linalg::spd_factor(&xtx).ok_or(Error::SingularDesign)?;
    let e = &r - &xn * chol.solve(&xn.tr_mul(&r));
    let xs_tilde = &xs - &xn * chol.solve(&xn.tr_mul(&xs));
    let mut scores = xs_tilde;
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= e[i];
    }
    Ok(scores)
}
