//! Monte Carlo oracles and engine contracts.

use nalgebra::{DMatrix, DVector};
use pivotband::inference::unit_circle;
use pivotband::mc::{replicate_flags, sample_gamma_poisson, stream_seed};
use pivotband::{
    gen_dataset, mle_fit, population_study, region_boundary, run_coverage, sandwich_cov,
    theorem1_gap, Dataset, Method, PopulationConfig, Scenario, ScenarioKind, SimConfig,
    WorkingModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn negative_binomial_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = sample_gamma_poisson(&mut rng, 1_000_000, 3.0, 10.0).unwrap();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 3.0).abs() <= 0.01, "mean {mean}");
    assert!((var - 3.9).abs() <= 0.03, "variance {var}");
}

#[test]
fn coverage_is_independent_of_worker_count() {
    let cfg = SimConfig::new(Scenario::new(ScenarioKind::SlrHetero), vec![10, 30], 300, 5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_coverage(&cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run_coverage(&cfg).unwrap());
}

#[test]
fn single_replicate_records() {
    for kind in ScenarioKind::ALL {
        let recs = run_coverage(&SimConfig::new(Scenario::new(kind), vec![12], 1, 3)).unwrap();
        for r in recs {
            assert!(r.covered <= 1 && r.covered + r.degenerate <= 1);
        }
    }
}

#[test]
fn coverage_is_never_degenerate() {
    for kind in ScenarioKind::ALL {
        let cfg = SimConfig::new(Scenario::new(kind), vec![20], 500, 17);
        for r in run_coverage(&cfg).unwrap() {
            let c = r.coverage();
            assert!(c > 0.0 && c < 1.0, "{kind} {} coverage {c}", r.method);
            assert!(((r.covered as f64 / r.effective_reps() as f64) - c).abs() == 0.0);
        }
    }
}

#[test]
fn shifting_the_truth_keeps_covered_flags() {
    for (kind, shift) in [
        (ScenarioKind::OriginHetero, vec![-2.5]),
        (ScenarioKind::SlrHetero, vec![4.0, -1.5]),
    ] {
        let base = Scenario::new(kind);
        let moved_truth: Vec<f64> = base.truth.iter().zip(&shift).map(|(t, d)| t + d).collect();
        let moved = base.clone().with_truth(moved_truth).unwrap();
        let a = replicate_flags(&SimConfig::new(base, vec![15], 200, 9), 15).unwrap();
        let b = replicate_flags(&SimConfig::new(moved, vec![15], 200, 9), 15).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn sandwich_approaches_model_covariance_when_correct() {
    let s = Scenario::new(ScenarioKind::SlrHomo);
    let d = gen_dataset(&s, 10_000, stream_seed(1, 0, 10_000, 0)).unwrap();
    let x = d.x().unwrap();
    let n = d.n() as f64;
    let expect = (x.tr_mul(x) / n).try_inverse().unwrap();
    let got = sandwich_cov(&WorkingModel::linear_regression(), &d).unwrap();
    for (g, e) in [(got[(0, 0)], expect[(0, 0)]), (got[(1, 1)], expect[(1, 1)])] {
        assert!((g / e - 1.0).abs() < 0.05, "{g} vs {e}");
    }
}

#[test]
fn pivot_radii_track_sandwich_radii_at_large_n() {
    let s = Scenario::new(ScenarioKind::SlrHomo);
    let d = gen_dataset(&s, 5000, stream_seed(2, 0, 5000, 0)).unwrap();
    let m = WorkingModel::linear_regression();
    let dirs = unit_circle(12);
    let pv = region_boundary(&m, &d, Method::Pivot, 0.05, &dirs).unwrap();
    let sw = region_boundary(&m, &d, Method::SANDWICH, 0.05, &dirs).unwrap();
    for (a, b) in pv.boundary.iter().zip(&sw.boundary) {
        let (ra, rb) = (a.radius.unwrap(), b.radius.unwrap());
        assert!((ra / rb - 1.0).abs() < 0.02, "{ra} vs {rb}");
    }
}

#[test]
fn opposite_directions_give_equal_gaps_on_symmetric_data() {
    // residuals come in +-e pairs at each x, so they are exactly the OLS residuals
    let xs = [-2.0, -1.1, -0.3, 0.4, 0.9, 1.7, 2.6];
    let es = [0.7, 1.9, 0.2, 1.1, 0.5, 2.4, 0.8];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&xi, &e) in xs.iter().zip(&es) {
        for sign in [1.0, -1.0] {
            x.push(xi);
            y.push(0.5 + 2.0 * xi + sign * e);
        }
    }
    let mut design = DMatrix::from_element(x.len(), 2, 1.0);
    design.set_column(1, &DVector::from_vec(x));
    let d = Dataset::new(y, Some(design)).unwrap();
    let m = WorkingModel::linear_regression();
    let methods = (Method::Pivot, Method::SANDWICH);
    for u in unit_circle(7) {
        let plus = theorem1_gap(&m, std::slice::from_ref(&d), &u, 0.05, methods).unwrap();
        let minus = theorem1_gap(&m, std::slice::from_ref(&d), &(-&u), 0.05, methods).unwrap();
        assert!((plus[0].1 - minus[0].1).abs() <= 1e-9 * (1.0 + plus[0].1), "{plus:?} {minus:?}");
    }
}

fn slr_population(n: usize) -> Dataset {
    gen_dataset(&Scenario::new(ScenarioKind::SlrHetero), n, stream_seed(3, 0, n, 0)).unwrap()
}

#[test]
fn full_population_sample_always_covers() {
    let pop = slr_population(200);
    let recs = population_study(&pop, &PopulationConfig::new(vec![200], 5, 1)).unwrap();
    for r in recs {
        assert_eq!(r.covered, r.reps, "{}", r.method);
    }
}

#[test]
fn population_pivot_coverage_at_size_100() {
    let pop = slr_population(100_000);
    let mut cfg = PopulationConfig::new(vec![100], 2000, 21);
    cfg.methods = vec![Method::Pivot];
    let rec = &population_study(&pop, &cfg).unwrap()[0];
    assert!((rec.coverage() - 0.95).abs() <= 0.02, "coverage {}", rec.coverage());
    assert_eq!(population_study(&pop, &cfg).unwrap()[0], *rec);
}

#[test]
fn population_slopes_only() {
    let pop = slr_population(5000);
    let mut cfg = PopulationConfig::new(vec![60], 1000, 4);
    cfg.include_intercept = false;
    cfg.methods = vec![Method::Pivot, Method::SANDWICH, Method::Wald(pivotband::CorrectionKind::Hc3)];
    for r in population_study(&pop, &cfg).unwrap() {
        assert!(r.coverage() > 0.85 && r.coverage() < 0.99, "{} {}", r.method, r.coverage());
    }
}

#[test]
fn population_rejects_oversized_samples() {
    let pop = slr_population(50);
    let err = population_study(&pop, &PopulationConfig::new(vec![51], 5, 1)).unwrap_err();
    assert_eq!(err.category(), "config");
    let mut cfg = PopulationConfig::new(vec![51], 5, 1);
    cfg.with_replacement = true;
    assert!(population_study(&pop, &cfg).is_ok());
}

#[test]
fn estimates_are_consistent() {
    let s = Scenario::new(ScenarioKind::SlrHetero);
    let d = gen_dataset(&s, 20_000, stream_seed(4, 0, 20_000, 0)).unwrap();
    let fit = mle_fit(&s.model(), &d).unwrap();
    assert!((&fit.theta - &s.truth).amax() < 0.05);
}
