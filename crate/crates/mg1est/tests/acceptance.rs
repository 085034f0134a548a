//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line with the measured values (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance -- --nocapture`.

use std::time::Instant;

use mg1est::cli;
use mg1est::dist::{EstimateModel, JointSizeModel, SizeDistribution};
use mg1est::policy::Policy;
use mg1est::sim::{self, JobRecord, SimConfig};
use mg1est::soap::AnalyticContext;
use mg1est::work;

fn exp1() -> SizeDistribution {
    SizeDistribution::exponential(1.0).unwrap()
}

fn pareto(high: f64) -> SizeDistribution {
    SizeDistribution::bounded_pareto(1.5, 1.0, high).unwrap()
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn records(cfg: &SimConfig, seed: u64) -> Vec<JobRecord> {
    let mut cfg = cfg.clone();
    cfg.record_jobs = true;
    let mut recs = sim::run_replication(&cfg, seed).unwrap().records.unwrap();
    recs.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
    recs
}

/// Criterion 1: With perfect estimates and a shared seed, every estimate-based
/// variant reproduces its clairvoyant baseline's completions exactly.
#[test]
fn criterion_01_perfect_estimate_collapse() {
    let start = Instant::now();
    let model = JointSizeModel::new(exp1(), EstimateModel::Perfect);
    let cfg = SimConfig::new(0.8, model, Policy::Srpt).with_jobs(60_000);
    let baseline = records(&cfg, 4242);
    let mut mismatches = 0usize;
    for policy in [Policy::SrptE, Policy::SrptSe, Policy::SrptB] {
        let got = records(
            &SimConfig {
                policy,
                ..cfg.clone()
            },
            4242,
        );
        assert_eq!(baseline.len(), got.len());
        mismatches += baseline
            .iter()
            .zip(&got)
            .filter(|(a, b)| {
                a.completion_time != b.completion_time
                    || a.first_service_time != b.first_service_time
            })
            .count();
    }
    let psjf = records(
        &SimConfig {
            policy: Policy::Psjf,
            ..cfg.clone()
        },
        4242,
    );
    let psjf_e = records(
        &SimConfig {
            policy: Policy::PsjfE,
            ..cfg.clone()
        },
        4242,
    );
    mismatches += psjf
        .iter()
        .zip(&psjf_e)
        .filter(|(a, b)| a.completion_time != b.completion_time)
        .count();
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "01 perfect-estimate-collapse",
        mismatches == 0 && elapsed < 10.0,
        &format!("{mismatches} mismatched completions over 4 policy pairs, {elapsed:.1}s"),
    );
}

/// Criterion 2: Simulated mean residence time of the estimate-ordered policy matches
/// the closed form (1/rho) ln(1/(1-rho)) E[S] within 1% at rho = 0.7.
#[test]
fn criterion_02_estimate_ordered_residence_closed_form() {
    let model = JointSizeModel::new(exp1(), EstimateModel::uniform(0.8, 1.2).unwrap());
    let cfg = SimConfig::new(0.7, model, Policy::PsjfE)
        .with_jobs(1_000_000)
        .with_replications(10)
        .with_seed(2025);
    let summary = sim::run(&cfg).unwrap();
    let closed_form = (1.0 / 0.7) * (1.0f64 / 0.3).ln(); // * E[S] = 1
    let rel = (summary.mean_residence.mean - closed_form).abs() / closed_form;
    report(
        "02 estimate-ordered-residence",
        rel < 0.01,
        &format!(
            "simulated {:.5} vs closed form {closed_form:.5}, off by {:.3}%",
            summary.mean_residence.mean,
            100.0 * rel
        ),
    );
}

/// Criterion 3: Analytic mean response within 2% of the simulated mean for all six
/// rank policies on four workload/load combinations.
#[test]
fn criterion_03_analytic_vs_simulation() {
    let est = EstimateModel::uniform(0.8, 1.2).unwrap();
    let configs = [
        (exp1(), 0.5, 300_000usize, 6usize),
        (exp1(), 0.8, 400_000, 6),
        (pareto(100.0), 0.5, 400_000, 6),
        (pareto(100.0), 0.8, 600_000, 8),
    ];
    let policies = [
        Policy::Srpt,
        Policy::Psjf,
        Policy::SrptE,
        Policy::PsjfE,
        Policy::SrptB,
        Policy::SrptSe,
    ];
    let mut worst: (f64, String) = (0.0, String::new());
    for (size, rho, jobs, reps) in configs {
        let lambda = rho / size.mean();
        let model = JointSizeModel::new(size, est.clone());
        let ctx = AnalyticContext::new(lambda, model.clone()).unwrap();
        for policy in policies {
            let cfg = SimConfig::new(lambda, model.clone(), policy)
                .with_jobs(jobs)
                .with_replications(reps)
                .with_seed(31);
            let summary = sim::run(&cfg).unwrap();
            let analytic = ctx.mean_response(policy).unwrap().total;
            let rel = (analytic - summary.mean_response.mean).abs() / summary.mean_response.mean;
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{} at rho {rho} on {:?}", policy.name(), model.size),
                );
            }
        }
    }
    report(
        "03 analytic-vs-simulation",
        worst.0 <= 0.02,
        &format!("worst deviation {:.3}% ({})", 100.0 * worst.0, worst.1),
    );
}

fn quality_sweep() -> Vec<(f64, f64, f64)> {
    let mut grid = Vec::new();
    for rho in [0.5, 0.8] {
        for beta in [0.5, 0.8, 0.9] {
            for alpha in [1.0, 1.1, 1.25, 2.0] {
                grid.push((rho, beta, alpha));
            }
        }
    }
    grid
}

/// Criterion 4: Analytic T_SRPT-SE / T_SRPT <= alpha/beta across the quality sweep.
#[test]
fn criterion_04_scaled_estimate_ratio() {
    let mut worst_slack = f64::NEG_INFINITY;
    for (rho, beta, alpha) in quality_sweep() {
        let model = JointSizeModel::new(exp1(), EstimateModel::uniform(beta, alpha).unwrap());
        let ctx = AnalyticContext::new(rho, model).unwrap();
        let t_se = ctx.mean_response(Policy::SrptSe).unwrap().total;
        let t_srpt = ctx.mean_response(Policy::Srpt).unwrap().total;
        worst_slack = worst_slack.max(t_se / t_srpt - alpha / beta);
    }
    report(
        "04 scaled-estimate-ratio",
        worst_slack <= 1e-6,
        &format!("max of ratio minus alpha/beta over sweep: {worst_slack:.2e}"),
    );
}

/// Criterion 5: Analytic T_PSJF-E <= (alpha/beta) T_PSJF and <= 1.5 (alpha/beta)
/// T_SRPT across the quality sweep.
#[test]
fn criterion_05_estimate_ordered_ratio() {
    let mut worst_vs_psjf = f64::NEG_INFINITY;
    let mut worst_vs_srpt = f64::NEG_INFINITY;
    for (rho, beta, alpha) in quality_sweep() {
        let model = JointSizeModel::new(exp1(), EstimateModel::uniform(beta, alpha).unwrap());
        let ctx = AnalyticContext::new(rho, model).unwrap();
        let t_pe = ctx.mean_response(Policy::PsjfE).unwrap().total;
        let t_psjf = ctx.mean_response(Policy::Psjf).unwrap().total;
        let t_srpt = ctx.mean_response(Policy::Srpt).unwrap().total;
        worst_vs_psjf = worst_vs_psjf.max(t_pe / (alpha / beta * t_psjf) - 1.0);
        worst_vs_srpt = worst_vs_srpt.max(t_pe / (1.5 * alpha / beta * t_srpt) - 1.0);
    }
    report(
        "05 estimate-ordered-ratio",
        worst_vs_psjf <= 1e-6 && worst_vs_srpt <= 1e-6,
        &format!(
            "max relative slack vs (a/b) T_psjf: {worst_vs_psjf:.2e}, \
             vs 1.5 (a/b) T_srpt: {worst_vs_srpt:.2e}"
        ),
    );
}

/// Criterion 6: Analytic T_SRPT-B sits under its bound on the sweep, and the bound
/// collapses to T_SRPT exactly at perfect estimates.
#[test]
fn criterion_06_bounce_bound() {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_ratio = f64::NEG_INFINITY;
    for (rho, beta, alpha) in quality_sweep() {
        let model = JointSizeModel::new(exp1(), EstimateModel::uniform(beta, alpha).unwrap());
        let ctx = AnalyticContext::new(rho, model).unwrap();
        let t_b = ctx.mean_response(Policy::SrptB).unwrap().total;
        let t_srpt = ctx.mean_response(Policy::Srpt).unwrap().total;
        worst = worst.max(t_b / ctx.bound_srpt_b(t_srpt) - 1.0);
        // Graceful degradation: approximation ratio within 3.5 alpha/beta.
        worst_ratio = worst_ratio.max(t_b / t_srpt - 3.5 * alpha / beta);
    }
    // Perfect estimates: equality of the bound, and of the policy itself.
    let model = JointSizeModel::new(exp1(), EstimateModel::Perfect);
    let ctx = AnalyticContext::new(0.8, model).unwrap();
    let t_srpt = ctx.mean_response(Policy::Srpt).unwrap().total;
    let bound_exact = ctx.bound_srpt_b(t_srpt) == t_srpt;
    let t_b = ctx.mean_response(Policy::SrptB).unwrap().total;
    let collapse = (t_b - t_srpt).abs() / t_srpt < 1e-6;
    report(
        "06 bounce-bound",
        worst <= 1e-6 && worst_ratio <= 0.0 && bound_exact && collapse,
        &format!(
            "max relative slack over sweep {worst:.2e}; ratio within 3.5 a/b by \
             {worst_ratio:.2}; perfect estimates: bound == T_srpt is {bound_exact}, \
             T_srpt-b off by {:.2e}",
            (t_b - t_srpt).abs() / t_srpt
        ),
    );
}

/// Criterion 7: Estimates pinned at half the true size: simulated mean waiting of the
/// countdown policy clears its lower bound, and its penalty over the
/// clairvoyant baseline grows strictly with the size tail cutoff.
#[test]
fn criterion_07_countdown_blowup() {
    // Part 1: lambda (1-beta)^2 / 2 E[S^2] = 0.125 for Exp(1) at lambda 0.5.
    let model = JointSizeModel::new(exp1(), EstimateModel::fixed(0.5).unwrap());
    let cfg = SimConfig::new(0.5, model.clone(), Policy::SrptE)
        .with_jobs(400_000)
        .with_replications(8)
        .with_seed(7);
    let summary = sim::run(&cfg).unwrap();
    let lower = AnalyticContext::new(0.5, model).unwrap().lower_srpt_e();
    let wait = summary.mean_waiting;
    let part1 = wait.mean + wait.half_width >= lower;

    // Part 2: bounded Pareto with growing cutoff at fixed load.
    let mut ratios = Vec::new();
    for high in [1e2, 1e3, 1e4] {
        let size = pareto(high);
        let lambda = 0.5 / size.mean();
        let model = JointSizeModel::new(size, EstimateModel::fixed(0.5).unwrap());
        let mut means = Vec::new();
        for policy in [Policy::SrptE, Policy::Srpt] {
            let cfg = SimConfig::new(lambda, model.clone(), policy)
                .with_jobs(400_000)
                .with_replications(8)
                .with_seed(7);
            means.push(sim::run(&cfg).unwrap().mean_response.mean);
        }
        ratios.push(means[0] / means[1]);
    }
    let part2 = ratios.windows(2).all(|w| w[1] > w[0]);
    report(
        "07 countdown-blowup",
        part1 && part2,
        &format!(
            "mean wait {:.4} +/- {:.4} vs bound {lower:.4}; ratios along tail cutoffs {:?}",
            wait.mean, wait.half_width, ratios
        ),
    );
}

/// Criterion 8: The work-integral identity: integrating the mean threshold-work curve
/// over a 128-point grid reproduces the directly simulated mean response
/// time within 5%, for both a clairvoyant and an estimate-based policy.
#[test]
fn criterion_08_work_integral_identity() {
    let cases = [
        (Policy::Srpt, EstimateModel::Perfect),
        (Policy::PsjfE, EstimateModel::uniform(0.8, 1.2).unwrap()),
    ];
    let mut details = String::new();
    let mut ok = true;
    for (policy, est) in cases {
        let model = JointSizeModel::new(exp1(), est);
        let cfg = SimConfig::new(0.7, model, policy)
            .with_jobs(400_000)
            .with_replications(6)
            .with_seed(13);
        let grid = work::default_r_grid(&cfg, 128);
        let est = work::work_integral_response(&cfg, &grid).unwrap();
        let rel =
            (est.integral_response - est.direct_response.mean).abs() / est.direct_response.mean;
        details.push_str(&format!(
            "{}: integral {:.4} vs direct {:.4} ({:.2}%); ",
            policy.name(),
            est.integral_response,
            est.direct_response.mean,
            100.0 * rel
        ));
        ok &= rel <= 0.05;
    }
    // Coarse grids are rejected outright.
    let model = JointSizeModel::new(exp1(), EstimateModel::Perfect);
    let cfg = SimConfig::new(0.7, model, Policy::Srpt).with_jobs(1_000);
    let coarse = work::log_grid(0.01, 10.0, 16);
    ok &= work::work_integral_response(&cfg, &coarse).is_err();
    report(
        "08 work-integral-identity",
        ok,
        details.trim_end_matches("; "),
    );
}

/// Criterion 9: The clairvoyant baseline minimizes mean threshold-work at every
/// threshold, and the scaled-estimate policy's curve is dominated by the
/// baseline's at thresholds stretched by alpha/beta.
#[test]
fn criterion_09_work_minimality() {
    let (beta, alpha) = (0.8, 1.2);
    let est = EstimateModel::uniform(beta, alpha).unwrap();
    let grid = work::log_grid(0.1, 8.0, 16);
    let stretched: Vec<f64> = grid.iter().map(|r| r * alpha / beta).collect();

    let run_with = |policy: Policy, probes: &[f64]| {
        let model = JointSizeModel::new(exp1(), est.clone());
        let mut cfg = SimConfig::new(0.7, model, policy)
            .with_jobs(300_000)
            .with_replications(6)
            .with_seed(97);
        cfg.work_probes = probes
            .iter()
            .map(|&r| work::WorkPredicate::RemsizeLe(r))
            .collect();
        sim::run(&cfg).unwrap()
    };

    let mut both = grid.clone();
    both.extend_from_slice(&stretched);
    let srpt = run_with(Policy::Srpt, &both);
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for policy in [Policy::Psjf, Policy::SrptB, Policy::PsjfE] {
        let other = run_with(policy, &grid);
        for i in 0..grid.len() {
            let (base, their) = (srpt.phi_work[i].1, other.phi_work[i].1);
            let slack = base.mean - their.mean - (base.half_width + their.half_width);
            worst = worst.max(slack);
            ok &= slack <= 0.0;
        }
    }
    // Scaled-estimate curve vs the baseline's stretched curve.
    let se = run_with(Policy::SrptSe, &grid);
    for i in 0..grid.len() {
        let (lhs, rhs) = (se.phi_work[i].1, srpt.phi_work[grid.len() + i].1);
        let slack = lhs.mean - rhs.mean - (lhs.half_width + rhs.half_width);
        worst = worst.max(slack);
        ok &= slack <= 0.0;
    }
    report(
        "09 work-minimality",
        ok,
        &format!("max CI-adjusted violation over 16-threshold grids: {worst:.2e}"),
    );
}

/// Criterion 10: The u-difference bound between the bounce and scaled-estimate
/// policies holds pointwise on a 64-point threshold grid for every swept
/// quality pair.
#[test]
fn criterion_10_u_difference_bound() {
    let mut worst = f64::NEG_INFINITY;
    for (rho, beta, alpha) in quality_sweep() {
        let model = JointSizeModel::new(exp1(), EstimateModel::uniform(beta, alpha).unwrap());
        let ctx = AnalyticContext::new(rho, model.clone()).unwrap();
        for i in 0..64 {
            let z = alpha * model.size.quantile((i as f64 + 0.5) / 64.0);
            let diff = ctx.u(Policy::SrptB, z).unwrap() - ctx.u(Policy::SrptSe, z).unwrap();
            worst = worst.max(diff - ctx.u_bound_rhs(z));
        }
    }
    report(
        "10 u-difference-bound",
        worst <= 1e-9,
        &format!("max of difference minus bound over sweep and grid: {worst:.2e}"),
    );
}

/// Criterion 11: Near-deterministic sizes, estimates just under half: the uncapped
/// bounce degenerates quadratically in 1/(1-rho) while the capped bounce
/// stays linear.
#[test]
fn criterion_11_uncapped_bounce_pathology() {
    let spec = cli::preset("ub-pathology", None, None, Some(3)).unwrap();
    let outcome = cli::run_scenario(&spec).unwrap();
    let check = outcome
        .checks
        .iter()
        .find(|c| c.name == "uncapped-pathology")
        .expect("pathology check present");
    report("11 uncapped-bounce-pathology", check.passed, &check.detail);
}

/// Criterion 12: Shrinking the estimate spread drives the simulated bounce-to-
/// clairvoyant ratio monotonically toward 1, reaching 1.05 or better.
#[test]
fn criterion_12_consistency_trend() {
    let spec = cli::preset("consistency", None, None, Some(5)).unwrap();
    let outcome = cli::run_scenario(&spec).unwrap();
    let check = outcome
        .checks
        .iter()
        .find(|c| c.name == "consistency-trend")
        .expect("consistency check present");
    report("12 consistency-trend", check.passed, &check.detail);
}
