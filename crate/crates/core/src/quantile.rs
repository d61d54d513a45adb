//! Inverse CDFs for the reference distributions used by the interval methods.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    StdNormal,
    ChiSquared { df: f64 },
    StudentT { df: f64 },
}

/// Inverse CDF of `reference` at `prob`.
///
/// statrs supplies the starting value; chi-squared and Student-t results get
/// Newton polishing steps against the CDF.
pub fn quantile(reference: Reference, prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability {prob} not in (0, 1)")));
    }
    match reference {
        Reference::StdNormal => Ok(Normal::standard().inverse_cdf(prob)),
        Reference::ChiSquared { df } => {
            let d = ChiSquared::new(check_df(df)?).map_err(|e| Error::Domain(e.to_string()))?;
            Ok(polish(&d, d.inverse_cdf(prob), prob, 0.0))
        }
        Reference::StudentT { df } => {
            let d = StudentsT::new(0.0, 1.0, check_df(df)?)
                .map_err(|e| Error::Domain(e.to_string()))?;
            Ok(polish(&d, d.inverse_cdf(prob), prob, f64::NEG_INFINITY))
        }
    }
}

pub fn std_normal(prob: f64) -> Result<f64> {
    quantile(Reference::StdNormal, prob)
}

pub fn chi2(prob: f64, df: f64) -> Result<f64> {
    quantile(Reference::ChiSquared { df }, prob)
}

pub fn student_t(prob: f64, df: f64) -> Result<f64> {
    quantile(Reference::StudentT { df }, prob)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

fn check_df(df: f64) -> Result<f64> {
    if df >= 1.0 && df.is_finite() {
        Ok(df)
    } else {
        Err(Error::Domain(format!("degrees of freedom {df} < 1")))
    }
}

fn polish<D: ContinuousCDF<f64, f64> + Continuous<f64, f64>>(
    dist: &D,
    mut x: f64,
    prob: f64,
    lower: f64,
) -> f64 {
    for _ in 0..3 {
        let dens = dist.pdf(x);
        if !(dens > 0.0) {
            break;
        }
        let next = x - (dist.cdf(x) - prob) / dens;
        if !next.is_finite() || next <= lower {
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((std_normal(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(std_normal(0.5).unwrap(), 0.0);
        let exact = -2.0 * 0.05f64.ln();
        assert!((chi2(0.95, 2.0).unwrap() - exact).abs() < 1e-10);
        // chi2 with one df is the square of the two-sided normal quantile.
        let z = std_normal(0.975).unwrap();
        assert!((chi2(0.95, 1.0).unwrap() - z * z).abs() < 1e-9);
        // t with one df is Cauchy: tan(pi (p - 1/2)).
        let cauchy = (std::f64::consts::PI * (0.9 - 0.5)).tan();
        assert!((student_t(0.9, 1.0).unwrap() - cauchy).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(std_normal(0.0).is_err());
        assert!(std_normal(1.0).is_err());
        assert!(chi2(0.5, 0.5).is_err());
        assert!(student_t(f64::NAN, 3.0).is_err());
    }
}
