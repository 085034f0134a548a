//! Predicate-restricted work: how much remaining service the system holds
//! in jobs whose state satisfies a predicate.
//!
//! The supported predicates threshold one of four state functions: true
//! remaining size `s - a`, scaled estimated remaining size `(z/s)(s - a)`,
//! true size `s`, and estimated size `z`, plus the combined form
//! `s - a <= r < s` used to split response time by original size. All of
//! them, once true for a job, stay true as the job is served, so a job's
//! predicate-restricted work is its full remaining size when the predicate
//! holds now and zero otherwise.

use serde::Serialize;

use crate::policy::JobState;
use crate::sim::{RunSummary, SimConfig, SimError};
use crate::stats::Estimate;

/// A testable predicate over job states, thresholded at `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WorkPredicate {
    /// remaining size <= r
    RemsizeLe(f64),
    /// scaled estimated remaining size (z/s)(s - a) <= r
    RemsizeELe(f64),
    /// true size <= r
    SizeLe(f64),
    /// estimated size <= r
    SizeELe(f64),
    /// remaining size <= r < true size
    RemsizeLeLtSize(f64),
}

impl WorkPredicate {
    pub fn threshold(self) -> f64 {
        match self {
            WorkPredicate::RemsizeLe(r)
            | WorkPredicate::RemsizeELe(r)
            | WorkPredicate::SizeLe(r)
            | WorkPredicate::SizeELe(r)
            | WorkPredicate::RemsizeLeLtSize(r) => r,
        }
    }

    pub fn holds(self, x: JobState) -> bool {
        match self {
            WorkPredicate::RemsizeLe(r) => x.remaining() <= r,
            WorkPredicate::RemsizeELe(r) => x.estimate / x.size * x.remaining() <= r,
            WorkPredicate::SizeLe(r) => x.size <= r,
            WorkPredicate::SizeELe(r) => x.estimate <= r,
            WorkPredicate::RemsizeLeLtSize(r) => x.remaining() <= r && r < x.size,
        }
    }
}

/// Remaining service a job in state `x` will receive while satisfying the
/// predicate: its full remaining size if the predicate holds now, else zero.
pub fn phi_work_of_job(x: JobState, phi: WorkPredicate) -> f64 {
    if phi.holds(x) {
        x.remaining()
    } else {
        0.0
    }
}

/// Total predicate-restricted work over a system snapshot.
pub fn system_phi_work<I: IntoIterator<Item = JobState>>(jobs: I, phi: WorkPredicate) -> f64 {
    jobs.into_iter().map(|x| phi_work_of_job(x, phi)).sum()
}

/// Steady-state mean predicate-restricted work, sampled at arrival epochs.
/// Poisson arrivals observe time averages, so the sample mean is unbiased.
pub fn estimate_mean_phi_work(cfg: &SimConfig, phi: WorkPredicate) -> Result<Estimate, SimError> {
    let mut cfg = cfg.clone();
    cfg.work_probes = vec![phi];
    let summary = crate::sim::run(&cfg)?;
    Ok(summary.phi_work[0].1)
}

/// A log-spaced grid of `n` thresholds covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default threshold grid for the response-time integral: from the 1e-4
/// size quantile up to the 1 - 1e-6 quantile.
pub fn default_r_grid(cfg: &SimConfig, n: usize) -> Vec<f64> {
    let lo = cfg.model.size.quantile(1e-4);
    let hi = cfg.model.size.quantile(1.0 - 1e-6);
    log_grid(lo, hi, n)
}

/// Work-integral estimate of mean response time together with the directly
/// measured value from the same runs.
#[derive(Debug, Clone)]
pub struct WorkIntegralEstimate {
    pub integral_response: f64,
    pub direct_response: Estimate,
    pub curve: Vec<(f64, Estimate)>,
    pub summary: RunSummary,
}

/// Evaluate the response-time identity
/// `E[T] = (1/lambda) * integral of E[W(remsize <= r)] / r^2 dr`
/// numerically on a log-spaced grid, reusing one set of simulation runs for
/// every threshold.
///
/// The integral over `(0, r_min)` and `(r_max, inf)` is closed off with the
/// boundary values: below the grid the work curve is quadratic in `r`, above
/// it the curve is constant, and both closures contribute `E[W]/r` at the
/// respective endpoint.
pub fn work_integral_response(
    cfg: &SimConfig,
    r_grid: &[f64],
) -> Result<WorkIntegralEstimate, SimError> {
    if r_grid.len() < 32 {
        return Err(SimError::GridTooCoarse {
            points: r_grid.len(),
        });
    }
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut cfg = cfg.clone();
    cfg.work_probes = grid.iter().map(|&r| WorkPredicate::RemsizeLe(r)).collect();
    let summary = crate::sim::run(&cfg)?;

    let curve: Vec<(f64, Estimate)> = grid
        .iter()
        .zip(&summary.phi_work)
        .map(|(&r, (_, est))| (r, *est))
        .collect();

    // Trapezoid over the grid plus the two endpoint closures.
    let mut integral = 0.0;
    for pair in curve.windows(2) {
        let (r0, w0) = (pair[0].0, pair[0].1.mean);
        let (r1, w1) = (pair[1].0, pair[1].1.mean);
        integral += 0.5 * (w0 / (r0 * r0) + w1 / (r1 * r1)) * (r1 - r0);
    }
    let (r_min, w_min) = (curve[0].0, curve[0].1.mean);
    let (r_max, w_max) = (curve[curve.len() - 1].0, curve[curve.len() - 1].1.mean);
    integral += w_min / r_min; // quadratic closure below the grid
    integral += w_max / r_max; // constant closure above the grid

    Ok(WorkIntegralEstimate {
        integral_response: integral / cfg.lambda,
        direct_response: summary.mean_response,
        curve,
        summary,
    })
}
