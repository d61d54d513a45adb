use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{check_alpha, pivot_stat, pivot_threshold, Method};
use crate::error::{Error, Result};
use crate::estimators::{corrected_cov_at, sandwich_cov};
use crate::linalg;
use crate::model::{mle_fit, Dataset, ParamPoint, WorkingModel};
use crate::roots::{search_ray, RayOptions, RayOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    /// Unit direction `u`; the boundary point is `theta_hat - radius * u`.
    pub direction: Vec<f64>,
    /// `None` when the region is unbounded in this direction.
    pub radius: Option<f64>,
    pub evaluations: usize,
}

impl BoundaryPoint {
    pub fn point(&self, center: &DVector<f64>) -> Option<DVector<f64>> {
        self.radius
            .map(|r| center - DVector::from_column_slice(&self.direction) * r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionResult {
    pub method: Method,
    pub center: Vec<f64>,
    pub alpha: f64,
    /// Threshold on the quadratic form, `chi2_{p,1-alpha}` for the pivot.
    pub chi2_threshold: f64,
    pub contains_query: Option<bool>,
    pub boundary: Vec<BoundaryPoint>,
}

/// Quadratic form of a method as a function of the parameter.
enum RegionForm<'a> {
    Pivot {
        model: &'a WorkingModel,
        data: &'a Dataset,
    },
    Wald {
        center: DVector<f64>,
        precision: DMatrix<f64>,
    },
}

impl RegionForm<'_> {
    fn eval(&self, theta: &DVector<f64>) -> Option<f64> {
        match self {
            RegionForm::Pivot { model, data } => pivot_stat(model, data, theta).ok().map(|s| s.qform),
            RegionForm::Wald { center, precision } => {
                let d = center - theta;
                Some((d.transpose() * precision * &d)[(0, 0)])
            }
        }
    }
}

fn region_form<'a>(
    model: &'a WorkingModel,
    data: &'a Dataset,
    fit: &ParamPoint,
    method: Method,
    alpha: f64,
) -> Result<(RegionForm<'a>, f64)> {
    let p = fit.p();
    match method {
        Method::Pivot => {
            let crit = pivot_threshold(alpha, p)?;
            let thr = if p == 1 { crit * crit } else { crit };
            Ok((RegionForm::Pivot { model, data }, thr))
        }
        Method::Wald(kind) => {
            let cc = corrected_cov_at(model, data, fit, kind)?;
            let precision = linalg::spd_inverse(&cc.cov).ok_or(Error::DegenerateMeat)?;
            let thr = cc.policy.region_threshold(alpha, p)?;
            Ok((
                RegionForm::Wald {
                    center: fit.theta.clone(),
                    precision,
                },
                thr,
            ))
        }
    }
}

/// Boundary radii of the `method` region along each direction.
///
/// For each unit `u` the radius solves `Q(theta_hat - r u) = threshold`,
/// found by doubling outward from `r = 0` and bisecting.
pub fn region_boundary(
    model: &WorkingModel,
    data: &Dataset,
    method: Method,
    alpha: f64,
    directions: &[DVector<f64>],
) -> Result<RegionResult> {
    check_alpha(alpha)?;
    let fit = mle_fit(model, data)?;
    let p = fit.p();
    if p < 2 {
        return Err(Error::Config("region boundary needs p >= 2; use an interval".into()));
    }
    if !method.valid_for_dim(p) {
        return Err(Error::UnsupportedCorrection(method.as_str(), p));
    }
    let (form, thr) = region_form(model, data, &fit, method, alpha)?;
    let sandwich = sandwich_cov(model, data).ok();
    let fallback = fit.theta.norm().max(1.0) * 0.1;

    let mut boundary = Vec::with_capacity(directions.len());
    for dir in directions {
        if dir.len() != p {
            return Err(Error::Config(format!("direction has length {}, p = {p}", dir.len())));
        }
        let norm = dir.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Config("zero or non-finite direction".into()));
        }
        let u = dir / norm;
        let step = sandwich
            .as_ref()
            .map(|s| ((u.transpose() * s * &u)[(0, 0)] / data.n() as f64).sqrt())
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or(fallback);
        let search = search_ray(
            |r| form.eval(&(&fit.theta - &u * r)).map(|q| q - thr),
            RayOptions::new(step),
        );
        let radius = match search.outcome {
            RayOutcome::Root { at, .. } => Some(at),
            _ => None,
        };
        boundary.push(BoundaryPoint {
            direction: u.as_slice().to_vec(),
            radius,
            evaluations: search.evaluations,
        });
    }
    Ok(RegionResult {
        method,
        center: fit.theta.as_slice().to_vec(),
        alpha,
        chi2_threshold: thr,
        contains_query: None,
        boundary,
    })
}

/// Membership verdict for `query` without any boundary search.
pub fn region_membership(
    model: &WorkingModel,
    data: &Dataset,
    method: Method,
    alpha: f64,
    query: &DVector<f64>,
) -> Result<RegionResult> {
    check_alpha(alpha)?;
    let fit = mle_fit(model, data)?;
    let (_, thr) = region_form(model, data, &fit, method, alpha)?;
    let inside = super::covers_at(model, data, &fit, query, method, alpha)?;
    Ok(RegionResult {
        method,
        center: fit.theta.as_slice().to_vec(),
        alpha,
        chi2_threshold: thr,
        contains_query: Some(inside),
        boundary: Vec::new(),
    })
}

/// `k` unit vectors evenly spaced on the circle, starting at angle zero.
pub fn unit_circle(k: usize) -> Vec<DVector<f64>> {
    (0..k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            // snap rounding noise so axis directions are exact
            let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
            DVector::from_vec(vec![snap(a.cos()), snap(a.sin())])
        })
        .collect()
}

/// `(n, sqrt(n) |r_a - r_b|)` for each dataset, where `r_a` and `r_b` are the
/// boundary radii of two methods along the same direction. An unbounded
/// radius yields an infinite gap.
pub fn theorem1_gap(
    model: &WorkingModel,
    datasets: &[Dataset],
    direction: &DVector<f64>,
    alpha: f64,
    methods: (Method, Method),
) -> Result<Vec<(usize, f64)>> {
    datasets
        .iter()
        .map(|d| {
            let dirs = std::slice::from_ref(direction);
            let ra = region_boundary(model, d, methods.0, alpha, dirs)?.boundary[0].radius;
            let rb = region_boundary(model, d, methods.1, alpha, dirs)?.boundary[0].radius;
            let gap = match (ra, rb) {
                (Some(a), Some(b)) => (d.n() as f64).sqrt() * (a - b).abs(),
                _ => f64::INFINITY,
            };
            Ok((d.n(), gap))
        })
        .collect()
}
