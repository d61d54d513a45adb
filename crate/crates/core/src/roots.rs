//! Outward bracket expansion plus bisection along a half-line.
//!
//! The searched function `g(s)` is "statistic minus threshold" at distance
//! `s >= 0` from the estimate, so `g(0) <= 0`. The root reported is the first
//! sign change met while stepping outward with doubling steps.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOptions {
    pub initial_step: f64,
    pub max_expansions: usize,
    pub max_bisections: usize,
    /// Exclusive upper limit on `s` (edge of the parameter space).
    pub limit: Option<f64>,
}

impl RayOptions {
    pub fn new(initial_step: f64) -> Self {
        RayOptions {
            initial_step,
            max_expansions: 60,
            max_bisections: 200,
            limit: None,
        }
    }

    pub fn with_limit(mut self, limit: Option<f64>) -> Self {
        self.limit = limit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayOutcome {
    /// A crossing at distance `at`.
    Root { at: f64, disconnected: bool },
    /// No crossing before the expansion budget ran out.
    Unbounded,
    /// No crossing before reaching the parameter-space edge at `at`.
    Boundary { at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySearch {
    pub outcome: RayOutcome,
    /// Number of function evaluations.
    pub evaluations: usize,
    /// Every accepted bracket `(inside, outside)` with its signs checked.
    pub bracket: Option<(f64, f64)>,
}

/// Searches `g` outward from zero. `g` returns `None` where the statistic is
/// undefined; such points are skipped during expansion.
pub fn search_ray<G>(mut g: G, opts: RayOptions) -> RaySearch
where
    G: FnMut(f64) -> Option<f64>,
{
    let mut evaluations = 0usize;
    let mut eval = |s: f64| {
        evaluations += 1;
        g(s).filter(|v| !v.is_nan())
    };

    let schedule = expansion_points(&opts);
    let mut inside = 0.0;
    let mut found = None;
    let mut next_idx = schedule.len();
    for (k, &s) in schedule.iter().enumerate() {
        match eval(s) {
            Some(v) if v > 0.0 => {
                found = Some((inside, s));
                next_idx = k + 1;
                break;
            }
            Some(_) => inside = s,
            None => {}
        }
    }

    let Some((mut lo, mut hi)) = found else {
        let outcome = match opts.limit {
            Some(limit) if schedule.last().is_some_and(|&s| s < limit) && reaches_limit(&opts) => {
                RayOutcome::Boundary { at: limit }
            }
            _ => RayOutcome::Unbounded,
        };
        return RaySearch {
            outcome,
            evaluations,
            bracket: None,
        };
    };
    let bracket = Some((lo, hi));

    for _ in 0..opts.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match eval(mid) {
            Some(v) if v <= 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    let at = 0.5 * (lo + hi);

    let disconnected = schedule[next_idx..]
        .iter()
        .any(|&s| matches!(eval(s), Some(v) if v <= 0.0));

    RaySearch {
        outcome: RayOutcome::Root { at, disconnected },
        evaluations,
        bracket,
    }
}

fn reaches_limit(opts: &RayOptions) -> bool {
    opts.limit
        .is_some_and(|l| opts.initial_step * 2f64.powi(opts.max_expansions as i32 - 1) >= l)
}

/// Doubling steps `h, 2h, 4h, ...`; once a step would cross `limit`, the
/// remaining points halve the gap to the limit instead.
fn expansion_points(opts: &RayOptions) -> Vec<f64> {
    let mut pts = Vec::with_capacity(opts.max_expansions);
    let mut prev = 0.0;
    let mut step = opts.initial_step;
    for _ in 0..opts.max_expansions {
        let mut s = step;
        if let Some(limit) = opts.limit {
            if s >= limit {
                s = prev + 0.5 * (limit - prev);
                if s <= prev || s >= limit {
                    break;
                }
            }
        }
        pts.push(s);
        prev = s;
        step *= 2.0;
    }
    pts
}
