use nalgebra::DVector;
use serde::Serialize;

use super::{check_alpha, pivot_stat, Method};
use crate::error::{Error, Result};
use crate::estimators::{corrected_cov_at, sandwich_cov, CorrectionKind};
use crate::model::{mle_fit, Dataset, WorkingModel};
use crate::quantile;
use crate::roots::{search_ray, RayOptions, RayOutcome};

/// One end of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Endpoint {
    Finite(f64),
    /// The pivot never reaches the critical value on this side.
    Unbounded,
    /// The pivot set runs into the edge of the parameter space.
    Boundary(f64),
}

impl Endpoint {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            Endpoint::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Numeric value with `side` (`-1` lower, `+1` upper) used for infinity.
    pub fn value(&self, side: f64) -> f64 {
        match *self {
            Endpoint::Finite(v) | Endpoint::Boundary(v) => v,
            Endpoint::Unbounded => side * f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalResult {
    pub method: Method,
    pub estimate: f64,
    pub lower: Endpoint,
    pub upper: Endpoint,
    pub alpha: f64,
    pub quantile_used: f64,
    /// Function evaluations spent on (lower, upper) root searches.
    pub iterations: (usize, usize),
    /// The pivot set has further components beyond a reported endpoint.
    pub disconnected: bool,
}

impl IntervalResult {
    pub fn lower_value(&self) -> f64 {
        self.lower.value(-1.0)
    }

    pub fn upper_value(&self) -> f64 {
        self.upper.value(1.0)
    }

    pub fn width(&self) -> f64 {
        self.upper_value() - self.lower_value()
    }

    /// True when either side failed to find a crossing.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self.lower, Endpoint::Finite(_)) || !matches!(self.upper, Endpoint::Finite(_))
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lower_value() <= theta && theta <= self.upper_value()
    }
}

/// Interval for any method on a scalar parameter.
pub fn interval(model: &WorkingModel, data: &Dataset, method: Method, alpha: f64) -> Result<IntervalResult> {
    match method {
        Method::Pivot => pivot_interval(model, data, alpha),
        Method::Wald(kind) => wald_interval(model, data, kind, alpha),
    }
}

/// Inverts the score pivot: the connected component of
/// `{theta : |t(theta)| <= z_{1-alpha/2}}` containing the estimate.
pub fn pivot_interval(model: &WorkingModel, data: &Dataset, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let fit = mle_fit(model, data)?;
    if fit.p() != 1 {
        return Err(Error::Config(format!("pivot interval needs p = 1, got {}", fit.p())));
    }
    let center = fit.theta[0];
    let z = quantile::std_normal(1.0 - alpha / 2.0)?;
    // the estimate itself must lie in the model domain
    model.score_matrix(data, &fit.theta)?;

    let step = initial_step(model, data, center);
    let g = |theta: f64| {
        pivot_stat(model, data, &DVector::from_element(1, theta))
            .ok()
            .and_then(|s| s.value)
            .map(|t| t.abs() - z)
    };

    let lower_limit = model.lower_bound().map(|lb| center - lb);
    let lower = search_ray(|s| g(center - s), RayOptions::new(step).with_limit(lower_limit));
    let upper = search_ray(|s| g(center + s), RayOptions::new(step));

    let to_endpoint = |outcome: RayOutcome, side: f64| match outcome {
        RayOutcome::Root { at, .. } => Endpoint::Finite(center + side * at),
        RayOutcome::Unbounded => Endpoint::Unbounded,
        RayOutcome::Boundary { at } => Endpoint::Boundary(center + side * at),
    };
    let disconnected = [lower.outcome, upper.outcome]
        .iter()
        .any(|o| matches!(o, RayOutcome::Root { disconnected: true, .. }));

    Ok(IntervalResult {
        method: Method::Pivot,
        estimate: center,
        lower: to_endpoint(lower.outcome, -1.0),
        upper: to_endpoint(upper.outcome, 1.0),
        alpha,
        quantile_used: z,
        iterations: (lower.evaluations, upper.evaluations),
        disconnected,
    })
}

/// Sandwich standard error, or `max(|theta_hat|, 1) / 10` when it vanishes.
fn initial_step(model: &WorkingModel, data: &Dataset, center: f64) -> f64 {
    let fallback = center.abs().max(1.0) * 0.1;
    match sandwich_cov(model, data) {
        Ok(cov) => {
            let se = (cov[(0, 0)] / data.n() as f64).sqrt();
            if se.is_finite() && se > 0.0 {
                se
            } else {
                fallback
            }
        }
        Err(_) => fallback,
    }
}

/// `theta_hat -/+ q * se` with the correction's covariance and quantile policy.
pub fn wald_interval(
    model: &WorkingModel,
    data: &Dataset,
    kind: CorrectionKind,
    alpha: f64,
) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let fit = mle_fit(model, data)?;
    if fit.p() != 1 {
        return Err(Error::Config(format!("wald interval needs p = 1, got {}", fit.p())));
    }
    let cc = corrected_cov_at(model, data, &fit, kind)?;
    let q = cc.policy.critical_value(alpha)?;
    let var = cc.cov[(0, 0)];
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::DegenerateMeat);
    }
    let se = var.sqrt();
    let center = fit.theta[0];
    Ok(IntervalResult {
        method: Method::Wald(kind),
        estimate: center,
        lower: Endpoint::Finite(center - q * se),
        upper: Endpoint::Finite(center + q * se),
        alpha,
        quantile_used: q,
        iterations: (0, 0),
        disconnected: false,
    })
}
