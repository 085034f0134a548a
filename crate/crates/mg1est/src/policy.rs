//! Rank functions for the scheduling policies under study.
//!
//! The scheduler always serves a job minimizing its current rank; a job's
//! rank depends only on its state `(s, z, a)` and so changes only while the
//! job is in service. Ranks are real-valued and may be negative (estimate-
//! based remaining size goes below zero once an underestimated job outlives
//! its estimate); negative ranks compare normally.

use serde::Serialize;

/// State of a job: true size, estimated size, and age (service received).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobState {
    pub size: f64,
    pub estimate: f64,
    pub age: f64,
}

impl JobState {
    pub fn new(size: f64, estimate: f64, age: f64) -> Self {
        debug_assert!(size > 0.0 && estimate > 0.0 && (0.0..size).contains(&age));
        JobState {
            size,
            estimate,
            age,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.size - self.age
    }
}

/// The scheduling disciplines, each defined by its rank function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Policy {
    /// Remaining size `s - a`. Requires true sizes.
    Srpt,
    /// Original size `s`. Requires true sizes.
    Psjf,
    /// Estimated remaining size `z - a`; goes negative past age `z`.
    SrptE,
    /// Estimated size `z`.
    PsjfE,
    /// `min(|z - a|, z)`: estimated remaining size that bounces back up
    /// after age `z`, capped at the initial estimate.
    SrptB,
    /// Scaled estimated remaining size `(z/s)(s - a)`. Requires true sizes,
    /// so it is an analysis tool rather than an implementable policy.
    SrptSe,
    /// `|z - a|` without the cap. Pathological; kept for the experiment that
    /// demonstrates why the cap matters.
    SrptUb,
}

pub const ALL_POLICIES: [Policy; 7] = [
    Policy::Srpt,
    Policy::Psjf,
    Policy::SrptE,
    Policy::PsjfE,
    Policy::SrptB,
    Policy::SrptSe,
    Policy::SrptUb,
];

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Srpt => "srpt",
            Policy::Psjf => "psjf",
            Policy::SrptE => "srpt-e",
            Policy::PsjfE => "psjf-e",
            Policy::SrptB => "srpt-b",
            Policy::SrptSe => "srpt-se",
            Policy::SrptUb => "srpt-ub",
        }
    }

    pub fn from_name(name: &str) -> Option<Policy> {
        ALL_POLICIES.iter().copied().find(|p| p.name() == name)
    }

    /// Whether the scheduler needs the true size to evaluate the rank.
    pub fn is_clairvoyant(self) -> bool {
        matches!(self, Policy::Srpt | Policy::Psjf | Policy::SrptSe)
    }

    pub fn rank(self, x: JobState) -> f64 {
        let JobState {
            size: s,
            estimate: z,
            age: a,
        } = x;
        match self {
            Policy::Srpt => s - a,
            Policy::Psjf => s,
            Policy::SrptE => z - a,
            Policy::PsjfE => z,
            Policy::SrptB => (z - a).abs().min(z),
            Policy::SrptSe => z / s * (s - a),
            Policy::SrptUb => (z - a).abs(),
        }
    }

    /// Right derivative of the rank with respect to age.
    pub fn rank_slope(self, x: JobState) -> f64 {
        let JobState {
            size: s,
            estimate: z,
            age: a,
        } = x;
        match self {
            Policy::Srpt | Policy::SrptE => -1.0,
            Policy::Psjf | Policy::PsjfE => 0.0,
            Policy::SrptSe => -z / s,
            Policy::SrptB => {
                if a < z {
                    -1.0
                } else if a - z < z {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::SrptUb => {
                if a < z {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Supremum of the job's rank over its remaining ages `[a, s)`.
    ///
    /// This is the quantity that decides which future arrivals can delay
    /// the job once it has started service: an arrival with estimate below
    /// the worst future rank will eventually preempt it.
    pub fn worst_future_rank(self, x: JobState) -> f64 {
        let JobState {
            size: s,
            estimate: z,
            age: a,
        } = x;
        match self {
            Policy::Srpt => s - a,
            Policy::Psjf => s,
            Policy::SrptE => z - a,
            Policy::PsjfE => z,
            Policy::SrptSe => z / s * (s - a),
            Policy::SrptB => (z - a).max((s - z).min(z)),
            Policy::SrptUb => (z - a).abs().max(s - z),
        }
    }

    /// Least service amount `w` such that the job's rank is strictly above
    /// `threshold` for ages immediately after `a + w`, or `None` if that
    /// never happens before completion.
    ///
    /// Returns `Some(0.0)` when the rank is already strictly above the
    /// threshold (or rises above it instantly); at exact equality with a
    /// non-rising rank the answer is `None`, so a serving job holding a
    /// queued job's rank exactly keeps the server.
    pub fn service_until_rank_exceeds(self, x: JobState, threshold: f64) -> Option<f64> {
        let JobState {
            size: s,
            estimate: z,
            age: a,
        } = x;
        let r0 = self.rank(x);
        match self {
            // Nonincreasing ranks never climb above a threshold they are at
            // or below.
            Policy::Srpt | Policy::Psjf | Policy::SrptE | Policy::PsjfE | Policy::SrptSe => {
                if r0 > threshold {
                    Some(0.0)
                } else {
                    None
                }
            }
            Policy::SrptB => {
                if threshold >= z {
                    // The cap keeps the rank at or below z forever.
                    return None;
                }
                if r0 > threshold {
                    return Some(0.0);
                }
                // Past the valley at age z the rank is min(b - z, z); it
                // first strictly exceeds the threshold after age z + threshold.
                let onset = z + threshold.max(0.0);
                if onset < s {
                    Some((onset - a).max(0.0))
                } else {
                    None
                }
            }
            Policy::SrptUb => {
                if r0 > threshold {
                    return Some(0.0);
                }
                let onset = z + threshold.max(0.0);
                if onset < s {
                    Some((onset - a).max(0.0))
                } else {
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(s: f64, z: f64, a: f64) -> JobState {
        JobState::new(s, z, a)
    }

    #[test]
    fn rank_formulas() {
        assert_eq!(Policy::SrptB.rank(st(10.0, 4.0, 6.0)), 2.0);
        assert_eq!(Policy::SrptB.rank(st(10.0, 4.0, 0.0)), 4.0);
        assert_eq!(Policy::SrptSe.rank(st(8.0, 4.0, 4.0)), 2.0);
        assert_eq!(Policy::SrptE.rank(st(10.0, 4.0, 6.0)), -2.0);
        assert_eq!(Policy::Srpt.rank(st(10.0, 4.0, 6.0)), 4.0);
        assert_eq!(Policy::Psjf.rank(st(10.0, 4.0, 6.0)), 10.0);
        assert_eq!(Policy::PsjfE.rank(st(10.0, 4.0, 6.0)), 4.0);
        assert_eq!(Policy::SrptUb.rank(st(10.0, 4.0, 6.0)), 2.0);
    }

    #[test]
    fn worst_future_rank_formulas() {
        assert_eq!(Policy::SrptB.worst_future_rank(st(9.0, 6.0, 0.0)), 6.0);
        assert_eq!(Policy::SrptB.worst_future_rank(st(9.0, 6.0, 5.0)), 3.0);
        for a in [0.0, 1.0, 7.0] {
            assert_eq!(Policy::PsjfE.worst_future_rank(st(9.0, 6.0, a)), 6.0);
        }
    }

    #[test]
    fn crossing_times() {
        // Bounce policy: rank |4 - b| capped at 4 strictly exceeds 2 after age 6.
        assert_eq!(
            Policy::SrptB.service_until_rank_exceeds(st(10.0, 4.0, 4.0), 2.0),
            Some(2.0)
        );
        // Monotone rank never climbs.
        assert_eq!(
            Policy::Srpt.service_until_rank_exceeds(st(10.0, 4.0, 4.0), 6.0),
            None
        );
        // Capped at the estimate: a threshold at or above z is never exceeded.
        assert_eq!(
            Policy::SrptB.service_until_rank_exceeds(st(10.0, 4.0, 1.0), 4.0),
            None
        );
        // Without the cap, the rank does climb past the estimate.
        assert_eq!(
            Policy::SrptUb.service_until_rank_exceeds(st(10.0, 4.0, 1.0), 4.0),
            Some(7.0)
        );
        // Completion arrives first.
        assert_eq!(
            Policy::SrptB.service_until_rank_exceeds(st(5.0, 4.0, 1.0), 3.0),
            None
        );
    }

    #[test]
    fn crossing_agrees_with_fine_grid_scan() {
        // Brute-force check of the closed-form crossing at step 1e-6 * s.
        let cases = [
            (Policy::SrptB, st(10.0, 4.0, 4.0), 2.0),
            (Policy::SrptB, st(10.0, 4.0, 0.5), 1.7),
            (Policy::SrptB, st(7.0, 6.5, 0.0), 3.0),
            (Policy::SrptUb, st(10.0, 4.0, 1.0), 4.0),
            (Policy::SrptUb, st(12.0, 3.0, 2.0), 5.5),
            (Policy::SrptE, st(10.0, 4.0, 1.0), 3.0),
            (Policy::SrptSe, st(10.0, 4.0, 1.0), 3.6),
        ];
        for (p, x, thr) in cases {
            let step = 1e-6 * x.size;
            let mut scan = None;
            let mut w = step;
            while x.age + w < x.size {
                let r = p.rank(JobState {
                    age: x.age + w,
                    ..x
                });
                if r > thr {
                    scan = Some(w);
                    break;
                }
                w += step;
            }
            let closed = p.service_until_rank_exceeds(x, thr);
            match (closed, scan) {
                (None, None) => {}
                (Some(c), Some(s)) => {
                    assert!(
                        (c - s).abs() <= 2.0 * step,
                        "{p:?} {x:?} thr={thr}: {c} vs {s}"
                    )
                }
                other => panic!("{p:?} {x:?} thr={thr}: closed/scan disagree: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn worst_future_rank_is_grid_supremum(
            s in 0.1f64..50.0,
            zr in 0.2f64..3.0,
            af in 0.0f64..0.999,
        ) {
            let x = st(s, zr * s, af * s);
            for p in ALL_POLICIES {
                let wfr = p.worst_future_rank(x);
                let mut sup = f64::NEG_INFINITY;
                for i in 0..1000 {
                    let b = x.age + (s - x.age) * i as f64 / 1000.0;
                    sup = sup.max(p.rank(JobState { age: b, ..x }));
                }
                // The grid supremum can undershoot by at most the grid
                // resolution times the slope (slopes are at most 1).
                prop_assert!(sup <= wfr + 1e-9, "{p:?} {x:?}: grid {sup} > wfr {wfr}");
                prop_assert!(wfr - sup <= (s - x.age) / 1000.0 + 1e-9,
                    "{p:?} {x:?}: wfr {wfr} not approached by grid {sup}");
            }
        }

        #[test]
        fn bounce_rank_never_exceeds_estimate(
            s in 0.1f64..50.0,
            zr in 0.2f64..3.0,
            af in 0.0f64..0.999,
        ) {
            let x = st(s, zr * s, af * s);
            prop_assert!(Policy::SrptB.rank(x) <= x.estimate);
            prop_assert!(Policy::SrptB.worst_future_rank(x) <= x.estimate);
        }

        #[test]
        fn perfect_estimates_collapse_to_clairvoyant_ranks(
            s in 0.1f64..50.0,
            af in 0.0f64..0.999,
        ) {
            let x = st(s, s, af * s);
            prop_assert_eq!(Policy::SrptE.rank(x), Policy::Srpt.rank(x));
            prop_assert_eq!(Policy::PsjfE.rank(x), Policy::Psjf.rank(x));
            prop_assert_eq!(Policy::SrptSe.rank(x), Policy::Srpt.rank(x));
            prop_assert_eq!(Policy::SrptB.rank(x), Policy::Srpt.rank(x));
        }

        #[test]
        fn crossing_matches_scan_on_random_instances(
            s in 0.5f64..20.0,
            zr in 0.3f64..2.5,
            af in 0.0f64..0.99,
            tf in -0.5f64..1.5,
        ) {
            let x = st(s, zr * s, af * s);
            for p in ALL_POLICIES {
                let r0 = p.rank(x);
                let thr = r0 + tf * x.estimate;
                let closed = p.service_until_rank_exceeds(x, thr);
                // Coarse scan; agreement within a step.
                let n = 4000usize;
                let step = (s - x.age) / n as f64;
                let mut scan = None;
                for i in 1..n {
                    let w = i as f64 * step;
                    if p.rank(JobState { age: x.age + w, ..x }) > thr {
                        scan = Some(w);
                        break;
                    }
                }
                if r0 > thr {
                    prop_assert_eq!(closed, Some(0.0));
                    continue;
                }
                match (closed, scan) {
                    (None, None) => {}
                    (Some(c), Some(sc)) => prop_assert!(
                        (c - sc).abs() <= 2.0 * step,
                        "{:?} {:?} thr={}: closed {} scan {}", p, x, thr, c, sc
                    ),
                    (Some(c), None) => prop_assert!(
                        // Scan may miss a crossing within the last step.
                        c > (n - 1) as f64 * step - 1e-12,
                        "{:?} {:?} thr={}: closed {} but scan found none", p, x, thr, c
                    ),
                    (None, Some(sc)) => prop_assert!(
                        false,
                        "{:?} {:?} thr={}: scan {} but closed none", p, x, thr, sc
                    ),
                }
            }
        }
    }
}
