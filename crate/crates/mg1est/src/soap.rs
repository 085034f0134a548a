//! Analytic mean-response-time evaluation for rank-based policies.
//!
//! The evaluator follows the tagged-job route: a job of estimated size `z`
//! waits until the system clears of lower-ranked work, then accumulates
//! service at a rate throttled by arrivals whose estimate undercuts its
//! worst future rank. Concretely, for the estimate-driven policies,
//!
//! - waiting:   `E[T_wait(z)] = (lambda / 2) * u(z) / (1 - rho_Z(z))^2`
//! - residence: `E[T_res(s, z)] = integral over ages a in [0, s) of
//!   1 / (1 - rho_Z(worst_future_rank(s, z, a))) da`
//!
//! where `rho_Z(z)` is the rate at which work with estimate at most `z`
//! arrives and `u(z)` is the expected squared amount of service a random
//! job receives while its rank is at most `z`. Mean response time follows
//! by integrating against the joint size/estimate density. The clairvoyant
//! policies are the exact special case of their estimate-based versions in
//! a system with perfect estimates, and are evaluated that way; one code
//! path, one test surface.
//!
//! All integrals are adaptive Gauss-Kronrod with breakpoints seeded at the
//! kinks (rank-function corners and distribution support edges), so the
//! integrands are smooth on every subinterval the integrator sees.

use std::borrow::Cow;

use crate::dist::{EstimateModel, JointSizeModel, SizeDistribution};
use crate::policy::Policy;
use crate::quad;

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalyticError {
    #[error("offered load rho = {rho:.4} is not below 1")]
    Unstable { rho: f64 },
    #[error("policy {0:?} has no analytic evaluation")]
    UnsupportedPolicy(Policy),
}

/// Everything the analytic evaluator needs: arrival rate, joint model, and
/// quadrature controls. Pure and freely shareable.
#[derive(Debug, Clone)]
pub struct AnalyticContext {
    pub lambda: f64,
    pub model: JointSizeModel,
    /// Relative tolerance for every adaptive integral.
    pub quad_tol: f64,
    /// Upper truncation quantile for integrals over unbounded size support.
    pub tail_quantile: f64,
}

/// Analytic response time split into its waiting and residence parts.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticResponse {
    pub waiting: f64,
    pub residence: f64,
    pub total: f64,
    /// Achieved absolute error bound of the outer integrals.
    pub abs_error: f64,
    pub converged: bool,
}

impl AnalyticContext {
    pub fn new(lambda: f64, model: JointSizeModel) -> Result<Self, AnalyticError> {
        let ctx = AnalyticContext {
            lambda,
            model,
            quad_tol: 1e-7,
            tail_quantile: 1.0 - 1e-10,
        };
        let rho = ctx.rho();
        if rho.is_nan() || rho >= 1.0 {
            return Err(AnalyticError::Unstable { rho });
        }
        Ok(ctx)
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.model.size.mean()
    }

    pub fn mean_size(&self) -> f64 {
        self.model.size.mean()
    }

    /// Rate at which work from jobs of true size at most `s` arrives.
    pub fn rho_s(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.lambda * self.model.size.partial_moment(1, 0.0, s)
    }

    /// Rate at which work from jobs of estimated size at most `z` arrives.
    /// Zero for `z <= 0`: no job has a nonpositive estimate.
    pub fn rho_z(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let size = &self.model.size;
        match self.model.estimate.multiplier_atoms() {
            Some(atoms) => {
                self.lambda
                    * atoms
                        .iter()
                        .map(|(w, m)| w * size.partial_moment(1, 0.0, z / m))
                        .sum::<f64>()
            }
            None => {
                // E[S * F_M(z/S)] for the uniform multiplier: full weight
                // below z/alpha, ramp weight on (z/alpha, z/beta).
                let (beta, alpha) = self.model.bounds();
                let below = size.partial_moment(1, 0.0, z / alpha);
                let ramp_mass = size.partial_moment(0, z / alpha, z / beta);
                let ramp_mean = size.partial_moment(1, z / alpha, z / beta);
                self.lambda * (below + (z * ramp_mass - beta * ramp_mean) / (alpha - beta))
            }
        }
    }

    /// `E[S 1(Z > z)]`, the mean size carried by jobs estimated above `z`.
    pub fn mean_size_above_estimate(&self, z: f64) -> f64 {
        self.mean_size() - self.rho_z(z) / self.lambda
    }

    /// Map the clairvoyant policies onto their estimate-based equivalents
    /// in a perfect-information system.
    fn resolve(&self, policy: Policy) -> Result<(Cow<'_, Self>, Policy), AnalyticError> {
        match policy {
            Policy::Srpt | Policy::Psjf => {
                let mapped = if policy == Policy::Srpt {
                    Policy::SrptSe
                } else {
                    Policy::PsjfE
                };
                let mut ctx = self.clone();
                ctx.model = JointSizeModel::new(self.model.size.clone(), EstimateModel::Perfect);
                Ok((Cow::Owned(ctx), mapped))
            }
            Policy::SrptE | Policy::PsjfE | Policy::SrptB | Policy::SrptSe => {
                Ok((Cow::Borrowed(self), policy))
            }
            Policy::SrptUb => Err(AnalyticError::UnsupportedPolicy(policy)),
        }
    }

    /// Expected squared service time a random job spends with rank at most
    /// `z` under the given policy.
    pub fn u(&self, policy: Policy, z: f64) -> Result<f64, AnalyticError> {
        let (ctx, policy) = self.resolve(policy)?;
        Ok(ctx.u_resolved(policy, z))
    }

    fn u_resolved(&self, policy: Policy, z: f64) -> f64 {
        if z <= 0.0 && policy != Policy::SrptE {
            // Every rank except the estimate-countdown is nonnegative.
            return 0.0;
        }
        let size = &self.model.size;
        let (_, hi) = size.support();
        let term = |m: f64| u_tail_term(policy, size, m, z) + size.partial_moment(2, 0.0, z / m);
        match self.model.estimate.multiplier_atoms() {
            Some(atoms) => atoms.iter().map(|(w, m)| w * term(*m)).sum(),
            None => {
                let (beta, alpha) = self.model.bounds();
                let (lo_s, hi_s) = (size.support().0.max(1e-300), hi);
                // Seed the multiplier integral at every regime change: the
                // over/under-estimate switch, the bounce-cap switch, and the
                // points where the piecewise-in-s boundaries hit the size
                // support.
                let mut cuts = vec![1.0, 0.5];
                for edge in [lo_s, hi_s] {
                    if edge.is_finite() && edge > 0.0 {
                        cuts.push(z / edge);
                        cuts.push(1.0 - z / edge);
                        cuts.push(1.0 + z / edge);
                    }
                }
                let r = quad::integrate(term, beta, alpha, &cuts, self.quad_tol * 0.1, 1e-13);
                r.value / (alpha - beta)
            }
        }
    }

    /// Expected waiting time of a tagged job of estimated size `z`.
    pub fn wait_mean(&self, policy: Policy, z: f64) -> Result<f64, AnalyticError> {
        let (ctx, policy) = self.resolve(policy)?;
        let u = ctx.u_resolved(policy, z);
        let denom = 1.0 - ctx.rho_z(z);
        Ok(ctx.lambda / 2.0 * u / (denom * denom))
    }

    /// `integral over [lo, hi] of dy / (1 - rho_Z(y))`, the workhorse of the
    /// residence-time formulas. `rho_Z` vanishes for negative arguments.
    fn throttled_span(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if hi <= 0.0 {
            return hi - lo;
        }
        let negative_part = if lo < 0.0 { -lo } else { 0.0 };
        let lo = lo.max(0.0);
        let mut cuts = Vec::new();
        let (slo, shi) = self.model.size.support();
        match self.model.estimate.multiplier_atoms() {
            Some(atoms) => {
                for (_, m) in atoms {
                    cuts.push(m * slo);
                    if shi.is_finite() {
                        cuts.push(m * shi);
                    }
                }
            }
            None => {
                let (beta, alpha) = self.model.bounds();
                for m in [beta, alpha] {
                    cuts.push(m * slo);
                    if shi.is_finite() {
                        cuts.push(m * shi);
                    }
                }
            }
        }
        let r = quad::integrate(
            |y| 1.0 / (1.0 - self.rho_z(y)),
            lo,
            hi,
            &cuts,
            self.quad_tol * 0.1,
            1e-13,
        );
        negative_part + r.value
    }

    /// Expected residence time of a tagged job of true size `s` and
    /// estimated size `z`: its age advances at rate `1 - rho_Z(w)` where `w`
    /// is its worst future rank at that age.
    pub fn res_mean(&self, policy: Policy, s: f64, z: f64) -> Result<f64, AnalyticError> {
        let (ctx, policy) = self.resolve(policy)?;
        Ok(ctx.res_resolved(policy, s, z))
    }

    fn res_resolved(&self, policy: Policy, s: f64, z: f64) -> f64 {
        match policy {
            Policy::PsjfE => s / (1.0 - self.rho_z(z)),
            Policy::SrptSe => {
                // Worst future rank (z/s)(s - a) sweeps [0, z]; substitute.
                s / z * self.throttled_span(0.0, z)
            }
            Policy::SrptE => {
                // Worst future rank z - a sweeps (z - s, z]; below zero the
                // server is all the tagged job's.
                self.throttled_span(z - s, z)
            }
            Policy::SrptB => {
                if s <= z {
                    self.throttled_span(z - s, z)
                } else if s <= 2.0 * z {
                    // Rank descends until age 2z - s, then the worst future
                    // rank is pinned at the final bounce height s - z.
                    let pinned = 2.0 * (s - z) / (1.0 - self.rho_z(s - z));
                    self.throttled_span(s - z, z) + pinned
                } else {
                    // The bounce cap dominates from the start.
                    s / (1.0 - self.rho_z(z))
                }
            }
            _ => unreachable!("resolve() maps clairvoyant policies"),
        }
    }

    /// Expectation of `f(s, z)` over the joint size/estimate distribution.
    fn expect_joint(&self, f: impl Fn(f64, f64) -> f64) -> quad::QuadResult {
        let over_multiplier = |s: f64| -> f64 {
            match self.model.estimate.multiplier_atoms() {
                Some(atoms) => atoms.iter().map(|(w, m)| w * f(s, m * s)).sum(),
                None => {
                    let (beta, alpha) = self.model.bounds();
                    let r = quad::integrate(
                        |m| f(s, m * s),
                        beta,
                        alpha,
                        &[0.5, 1.0],
                        self.quad_tol * 0.1,
                        1e-13,
                    );
                    r.value / (alpha - beta)
                }
            }
        };
        let size = &self.model.size;
        if let Some(v) = size.atom() {
            let value = over_multiplier(v);
            return quad::QuadResult {
                value,
                abs_error: 0.0,
                converged: true,
            };
        }
        let (lo, hi) = size.support();
        let hi = if hi.is_finite() {
            hi
        } else {
            size.quantile(self.tail_quantile)
        };
        quad::integrate(
            |s| size.pdf(s) * over_multiplier(s),
            lo.max(0.0),
            hi,
            &[],
            self.quad_tol,
            1e-12,
        )
    }

    /// Mean response time with its waiting/residence split, by double
    /// integration of the tagged-job formulas against the joint density.
    pub fn mean_response(&self, policy: Policy) -> Result<AnalyticResponse, AnalyticError> {
        let (ctx, policy) = self.resolve(policy)?;
        let waiting = ctx.expect_joint(|_, z| {
            let denom = 1.0 - ctx.rho_z(z);
            ctx.lambda / 2.0 * ctx.u_resolved(policy, z) / (denom * denom)
        });
        let residence = ctx.expect_joint(|s, z| ctx.res_resolved(policy, s, z));
        Ok(AnalyticResponse {
            waiting: waiting.value,
            residence: residence.value,
            total: waiting.value + residence.value,
            abs_error: waiting.abs_error + residence.abs_error,
            converged: waiting.converged && residence.converged,
        })
    }

    /// `(1/rho) ln(1/(1-rho)) E[S]`: a lower bound on the clairvoyant
    /// baseline's mean response time, and exactly the mean residence time
    /// of the estimate-ordered nonpreemptive-in-rank policy.
    pub fn srpt_lower_bound(&self) -> f64 {
        let rho = self.rho();
        (1.0 / rho) * (1.0 / (1.0 - rho)).ln() * self.mean_size()
    }

    /// Lower bound on mean waiting under the naive estimate countdown when
    /// estimates are pinned at `beta * s`: `lambda (1-beta)^2 / 2 * E[S^2]`.
    pub fn lower_srpt_e(&self) -> f64 {
        let (beta, _) = self.model.bounds();
        self.lambda * (1.0 - beta) * (1.0 - beta) / 2.0 * self.model.size.second_moment()
    }

    /// Upper bound on the bounce policy's mean response time in terms of
    /// the clairvoyant baseline's.
    pub fn bound_srpt_b(&self, t_srpt: f64) -> f64 {
        let (beta, alpha) = self.model.bounds();
        let rho = self.rho();
        let indicator = if beta < 1.0 { 1.0 } else { 0.0 };
        let coeff = 1.5 * alpha * indicator + 1.0;
        let spread = (1.0 - 1.0 / alpha).max(1.0 / beta - 1.0).min(1.0);
        let log_term = (1.0 / rho) * (1.0 / (1.0 - rho)).ln() - 1.0;
        alpha / beta * t_srpt + coeff * spread * log_term * self.mean_size()
    }

    /// `(alpha/beta) * T_PSJF`.
    pub fn bound_psjf_e(&self, t_psjf: f64) -> f64 {
        let (beta, alpha) = self.model.bounds();
        alpha / beta * t_psjf
    }

    /// `(alpha/beta) * T_SRPT`.
    pub fn bound_srpt_se(&self, t_srpt: f64) -> f64 {
        let (beta, alpha) = self.model.bounds();
        alpha / beta * t_srpt
    }

    /// Right-hand side of the u-difference bound between the bounce and
    /// scaled-estimate policies: `3 z max(1-beta, 0) E[S 1(Z > z)]`.
    pub fn u_bound_rhs(&self, z: f64) -> f64 {
        let (beta, _) = self.model.bounds();
        3.0 * z * (1.0 - beta).max(0.0) * self.mean_size_above_estimate(z)
    }
}

/// `E[g(S; m, z)^2 1(S > z/m)]` where `g` is the service span a size-`S`
/// job spends at rank `z` or below given multiplier `m`, for jobs whose
/// estimate exceeds `z`. Piecewise polynomial in `S`, integrated exactly
/// with partial moments.
fn u_tail_term(policy: Policy, size: &SizeDistribution, m: f64, z: f64) -> f64 {
    let s0 = z / m;
    let inf = f64::INFINITY;
    // E[(c0 + c1 S)^2 1(a < S <= b)]
    let poly = |c0: f64, c1: f64, a: f64, b: f64| -> f64 {
        c0 * c0 * size.partial_moment(0, a, b)
            + 2.0 * c0 * c1 * size.partial_moment(1, a, b)
            + c1 * c1 * size.partial_moment(2, a, b)
    };
    match policy {
        Policy::PsjfE => 0.0,
        // Span is (S/Z) z = z/m, constant in S.
        Policy::SrptSe => (z / m) * (z / m) * size.partial_moment(0, s0, inf),
        // Span is max(0, S(1-m) + z), optionally capped at 2z (the bounce
        // window) for the capped policy.
        Policy::SrptE | Policy::SrptB => {
            if m > 1.0 {
                // Overestimates: span z - (m-1)S shrinks, hitting zero at
                // z/(m-1); the 2z cap never binds.
                let s1 = z / (m - 1.0);
                poly(z, -(m - 1.0), s0, s1)
            } else if m == 1.0 {
                z * z * size.partial_moment(0, s0, inf)
            } else {
                let c = 1.0 - m;
                if policy == Policy::SrptE {
                    // Unbounded growth; for z <= 0 the span only turns
                    // positive once S(1-m) outweighs the deficit.
                    let start = if z >= 0.0 { s0 } else { -z / c };
                    poly(z, c, start, inf)
                } else {
                    // Bounce: capped at 2z once S reaches z/(1-m).
                    let s2 = z / c;
                    if s2 <= s0 {
                        4.0 * z * z * size.partial_moment(0, s0, inf)
                    } else {
                        poly(z, c, s0, s2) + 4.0 * z * z * size.partial_moment(0, s2, inf)
                    }
                }
            }
        }
        Policy::Srpt | Policy::Psjf | Policy::SrptUb => {
            unreachable!("callers resolve clairvoyant policies and reject the uncapped bounce")
        }
    }
}
