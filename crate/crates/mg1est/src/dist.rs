//! Job-size distributions and joint (true size, estimate) models.
//!
//! Every estimate model is a multiplier model: the estimate is `z = m * s`
//! with the multiplier `m` drawn independently of the size `s` and confined
//! to `[beta, alpha]`. This keeps the joint density in closed form while
//! covering perfect information, systematic bias, and bounded random error.

use rand::Rng;
use serde::Serialize;

use crate::quad;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("{0} must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("bounds out of order: low {low} must be less than high {high}")]
    BoundsOutOfOrder { low: f64, high: f64 },
    #[error("hyperexponential needs matching weights and rates, got {weights} and {rates}")]
    MismatchedComponents { weights: usize, rates: usize },
    #[error("hyperexponential weights must sum to 1, got {0}")]
    WeightsNotNormalized(f64),
    #[error("multiplier bounds need 0 < beta <= alpha, got beta {beta}, alpha {alpha}")]
    BadMultiplierBounds { beta: f64, alpha: f64 },
    #[error("probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
}

/// Distribution of true job sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SizeDistribution {
    Exponential { rate: f64 },
    BoundedPareto { shape: f64, low: f64, high: f64 },
    Uniform { low: f64, high: f64 },
    Deterministic { value: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
}

impl SizeDistribution {
    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        if rate <= 0.0 {
            return Err(DistError::NonPositive("rate", rate));
        }
        Ok(SizeDistribution::Exponential { rate })
    }

    pub fn bounded_pareto(shape: f64, low: f64, high: f64) -> Result<Self, DistError> {
        if shape <= 0.0 {
            return Err(DistError::NonPositive("shape", shape));
        }
        if low <= 0.0 {
            return Err(DistError::NonPositive("low", low));
        }
        if low >= high {
            return Err(DistError::BoundsOutOfOrder { low, high });
        }
        Ok(SizeDistribution::BoundedPareto { shape, low, high })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, DistError> {
        if low <= 0.0 {
            return Err(DistError::NonPositive("low", low));
        }
        if low >= high {
            return Err(DistError::BoundsOutOfOrder { low, high });
        }
        Ok(SizeDistribution::Uniform { low, high })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        if value <= 0.0 {
            return Err(DistError::NonPositive("value", value));
        }
        Ok(SizeDistribution::Deterministic { value })
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self, DistError> {
        if weights.len() != rates.len() || weights.is_empty() {
            return Err(DistError::MismatchedComponents {
                weights: weights.len(),
                rates: rates.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistError::WeightsNotNormalized(total));
        }
        for &w in &weights {
            if w < 0.0 {
                return Err(DistError::BadProbability(w));
            }
        }
        for &r in &rates {
            if r <= 0.0 {
                return Err(DistError::NonPositive("rate", r));
            }
        }
        Ok(SizeDistribution::Hyperexponential { weights, rates })
    }

    /// Support `[lo, hi]`; `hi` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SizeDistribution::Exponential { .. } => (0.0, f64::INFINITY),
            SizeDistribution::BoundedPareto { low, high, .. } => (*low, *high),
            SizeDistribution::Uniform { low, high } => (*low, *high),
            SizeDistribution::Deterministic { value } => (*value, *value),
            SizeDistribution::Hyperexponential { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Point mass, if the distribution is degenerate.
    pub fn atom(&self) -> Option<f64> {
        match self {
            SizeDistribution::Deterministic { value } => Some(*value),
            _ => None,
        }
    }

    /// Degenerate distributions cause rank ties under every policy; callers
    /// that cannot tolerate ties check this flag.
    pub fn is_tie_prone(&self) -> bool {
        self.atom().is_some()
    }

    pub fn mean(&self) -> f64 {
        self.partial_moment(1, 0.0, f64::INFINITY)
    }

    pub fn second_moment(&self) -> f64 {
        self.partial_moment(2, 0.0, f64::INFINITY)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match self {
            SizeDistribution::Exponential { rate } => 1.0 - (-rate * x).exp(),
            SizeDistribution::BoundedPareto { shape, low, high } => {
                let d = 1.0 - (low / high).powf(*shape);
                (1.0 - (low / x).powf(*shape)) / d
            }
            SizeDistribution::Uniform { low, high } => (x - low) / (high - low),
            SizeDistribution::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            SizeDistribution::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (1.0 - (-r * x).exp()))
                .sum(),
        }
    }

    /// Probability density. Zero outside the support; degenerate
    /// distributions have no density and callers must branch on [`Self::atom`].
    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match self {
            SizeDistribution::Exponential { rate } => rate * (-rate * x).exp(),
            SizeDistribution::BoundedPareto { shape, low, high } => {
                let d = 1.0 - (low / high).powf(*shape);
                shape * low.powf(*shape) * x.powf(-shape - 1.0) / d
            }
            SizeDistribution::Uniform { low, high } => 1.0 / (high - low),
            SizeDistribution::Deterministic { .. } => {
                panic!("Deterministic has no density; branch on atom()")
            }
            SizeDistribution::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r * (-r * x).exp())
                .sum(),
        }
    }

    /// `E[S^k 1(a < S <= b)]` for `k` in `{0, 1, 2}`, in closed form.
    ///
    /// For degenerate distributions the atom is counted when it lies in
    /// `[a, b]`, which matches the `1(Z <= z)` conventions used elsewhere.
    pub fn partial_moment(&self, k: u32, a: f64, b: f64) -> f64 {
        debug_assert!(k <= 2);
        if let Some(v) = self.atom() {
            return if a <= v && v <= b {
                v.powi(k as i32)
            } else {
                0.0
            };
        }
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if a >= b {
            return 0.0;
        }
        match self {
            SizeDistribution::Exponential { rate } => {
                let g = |x: f64| -> f64 {
                    if !x.is_finite() {
                        return 0.0;
                    }
                    let e = (-rate * x).exp();
                    match k {
                        0 => -e,
                        1 => -e * (x + 1.0 / rate),
                        _ => -e * (x * x + 2.0 * x / rate + 2.0 / (rate * rate)),
                    }
                };
                g(b) - g(a)
            }
            SizeDistribution::BoundedPareto { shape, low, high } => {
                let d = 1.0 - (low / high).powf(*shape);
                let c = shape * low.powf(*shape) / d;
                let p = k as f64 - shape;
                if p.abs() < 1e-12 {
                    c * (b / a).ln()
                } else {
                    c * (b.powf(p) - a.powf(p)) / p
                }
            }
            SizeDistribution::Uniform { low, high } => {
                let w = high - low;
                match k {
                    0 => (b - a) / w,
                    1 => (b * b - a * a) / (2.0 * w),
                    _ => (b * b * b - a * a * a) / (3.0 * w),
                }
            }
            SizeDistribution::Deterministic { .. } => unreachable!(),
            SizeDistribution::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| {
                    w * SizeDistribution::Exponential { rate: *r }.partial_moment(k, a, b)
                })
                .sum(),
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&p));
        match self {
            SizeDistribution::Exponential { rate } => -(-p).ln_1p() / rate,
            SizeDistribution::BoundedPareto { shape, low, high } => {
                let d = 1.0 - (low / high).powf(*shape);
                low * (1.0 - p * d).powf(-1.0 / shape)
            }
            SizeDistribution::Uniform { low, high } => low + p * (high - low),
            SizeDistribution::Deterministic { value } => *value,
            SizeDistribution::Hyperexponential { rates, .. } => {
                if p == 0.0 {
                    return 0.0;
                }
                let min_rate = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let mut lo = 0.0;
                let mut hi = -(-p).ln_1p() / min_rate;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SizeDistribution::Exponential { rate } => {
                let u: f64 = rng.random();
                -(-u).ln_1p() / rate
            }
            SizeDistribution::BoundedPareto { .. } => self.quantile(rng.random()),
            SizeDistribution::Uniform { low, high } => rng.random_range(*low..*high),
            SizeDistribution::Deterministic { value } => *value,
            SizeDistribution::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut rate = rates[rates.len() - 1];
                for (w, r) in weights.iter().zip(rates) {
                    acc += w;
                    if u < acc {
                        rate = *r;
                        break;
                    }
                }
                let v: f64 = rng.random();
                -(-v).ln_1p() / rate
            }
        }
    }
}

/// How estimates are generated from true sizes: `z = m * s` with the
/// multiplier `m` independent of `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EstimateModel {
    /// `z = s`.
    Perfect,
    /// `z = c * s` for a fixed factor `c`.
    FixedMultiplier { factor: f64 },
    /// `m` uniform on `[beta, alpha]`.
    UniformMultiplier { beta: f64, alpha: f64 },
    /// `m = beta` with probability `p_low`, else `m = alpha`.
    TwoPointMultiplier { beta: f64, alpha: f64, p_low: f64 },
}

impl EstimateModel {
    pub fn fixed(factor: f64) -> Result<Self, DistError> {
        if factor <= 0.0 {
            return Err(DistError::NonPositive("factor", factor));
        }
        Ok(EstimateModel::FixedMultiplier { factor })
    }

    pub fn uniform(beta: f64, alpha: f64) -> Result<Self, DistError> {
        if !(0.0 < beta && beta <= alpha) {
            return Err(DistError::BadMultiplierBounds { beta, alpha });
        }
        if beta == alpha {
            // Zero-width interval: a fixed multiplier in disguise.
            return Ok(EstimateModel::FixedMultiplier { factor: beta });
        }
        Ok(EstimateModel::UniformMultiplier { beta, alpha })
    }

    pub fn two_point(beta: f64, alpha: f64, p_low: f64) -> Result<Self, DistError> {
        if !(0.0 < beta && beta <= alpha) {
            return Err(DistError::BadMultiplierBounds { beta, alpha });
        }
        if !(0.0..=1.0).contains(&p_low) {
            return Err(DistError::BadProbability(p_low));
        }
        Ok(EstimateModel::TwoPointMultiplier { beta, alpha, p_low })
    }

    /// The `(beta, alpha)` multiplier bounds; every sampled estimate
    /// satisfies `beta * s <= z <= alpha * s` exactly.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            EstimateModel::Perfect => (1.0, 1.0),
            EstimateModel::FixedMultiplier { factor } => (*factor, *factor),
            EstimateModel::UniformMultiplier { beta, alpha }
            | EstimateModel::TwoPointMultiplier { beta, alpha, .. } => (*beta, *alpha),
        }
    }

    /// Discrete multiplier support as `(weight, m)` pairs, or `None` for the
    /// continuous uniform model.
    pub fn multiplier_atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            EstimateModel::Perfect => Some(vec![(1.0, 1.0)]),
            EstimateModel::FixedMultiplier { factor } => Some(vec![(1.0, *factor)]),
            EstimateModel::UniformMultiplier { beta, alpha } => {
                // Guard hand-built degenerate intervals.
                (beta == alpha).then(|| vec![(1.0, *beta)])
            }
            EstimateModel::TwoPointMultiplier { beta, alpha, p_low } => {
                Some(vec![(*p_low, *beta), (1.0 - *p_low, *alpha)])
            }
        }
    }

    /// CDF of the multiplier, `P(m <= x)`.
    pub fn multiplier_cdf(&self, x: f64) -> f64 {
        match self {
            EstimateModel::Perfect => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            EstimateModel::FixedMultiplier { factor } => {
                if x >= *factor {
                    1.0
                } else {
                    0.0
                }
            }
            EstimateModel::UniformMultiplier { beta, alpha } => {
                ((x - beta) / (alpha - beta)).clamp(0.0, 1.0)
            }
            EstimateModel::TwoPointMultiplier { beta, alpha, p_low } => {
                if x >= *alpha {
                    1.0
                } else if x >= *beta {
                    *p_low
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample_multiplier<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EstimateModel::Perfect => 1.0,
            EstimateModel::FixedMultiplier { factor } => *factor,
            EstimateModel::UniformMultiplier { beta, alpha } => {
                if beta == alpha {
                    *beta
                } else {
                    rng.random_range(*beta..=*alpha)
                }
            }
            EstimateModel::TwoPointMultiplier { beta, alpha, p_low } => {
                if rng.random::<f64>() < *p_low {
                    *beta
                } else {
                    *alpha
                }
            }
        }
    }
}

/// A size distribution paired with an estimate model. Immutable after
/// construction and freely shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSizeModel {
    pub size: SizeDistribution,
    pub estimate: EstimateModel,
}

impl JointSizeModel {
    pub fn new(size: SizeDistribution, estimate: EstimateModel) -> Self {
        JointSizeModel { size, estimate }
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.estimate.bounds()
    }

    /// Draw one `(s, z)` pair. The estimate is computed as `m * s`, so the
    /// multiplier bounds hold exactly, not just in distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let s = self.size.sample(rng);
        let m = match &self.estimate {
            EstimateModel::Perfect => return (s, s),
            other => other.sample_multiplier(rng),
        };
        (s, m * s)
    }

    /// Support of the estimate marginal.
    pub fn estimate_support(&self) -> (f64, f64) {
        let (lo, hi) = self.size.support();
        let (beta, alpha) = self.bounds();
        (beta * lo, alpha * hi)
    }

    /// Density of the estimate marginal `f_Z(z)`.
    ///
    /// Defined for continuous size distributions; for the uniform multiplier
    /// it is `(1 / (alpha - beta)) * integral of f_S(u)/u for u in [z/alpha, z/beta]`.
    pub fn estimate_density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match self.estimate.multiplier_atoms() {
            Some(atoms) => atoms
                .iter()
                .map(|(w, m)| w * self.size.pdf(z / m) / m)
                .sum(),
            None => {
                let (beta, alpha) = self.bounds();
                let (lo, hi) = self.size.support();
                let a = (z / alpha).max(lo);
                let b = (z / beta).min(hi);
                if a >= b {
                    return 0.0;
                }
                let r = quad::integrate(|u| self.size.pdf(u) / u, a, b, &[], 1e-10, 1e-14);
                r.value / (alpha - beta)
            }
        }
    }

    /// `E[S | Z = z]`, or `None` when `z` lies outside the estimate support.
    pub fn conditional_mean_size(&self, z: f64) -> Option<f64> {
        let (zlo, zhi) = self.estimate_support();
        if z < zlo || z > zhi || z <= 0.0 {
            return None;
        }
        match &self.estimate {
            EstimateModel::Perfect => Some(z),
            EstimateModel::FixedMultiplier { factor } => Some(z / factor),
            EstimateModel::TwoPointMultiplier { beta, alpha, p_low } => {
                if let Some(v) = self.size.atom() {
                    return Some(v);
                }
                // Mixture of the two fixed-multiplier cases, reweighted by
                // the density of each branch at z.
                let fl = p_low * self.size.pdf(z / beta) / beta;
                let fh = (1.0 - p_low) * self.size.pdf(z / alpha) / alpha;
                let total = fl + fh;
                if total <= 0.0 {
                    return None;
                }
                Some((fl * z / beta + fh * z / alpha) / total)
            }
            EstimateModel::UniformMultiplier { beta, alpha } => {
                if let Some(v) = self.size.atom() {
                    // Degenerate size: S is v whenever z is feasible.
                    return Some(v);
                }
                let (lo, hi) = self.size.support();
                let a = (z / alpha).max(lo);
                let b = (z / beta).min(hi);
                if a >= b {
                    return None;
                }
                let numer = self.size.cdf(b) - self.size.cdf(a);
                let denom =
                    quad::integrate(|u| self.size.pdf(u) / u, a, b, &[], 1e-10, 1e-14).value;
                if denom <= 0.0 {
                    return None;
                }
                Some(numer / denom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> SizeDistribution {
        SizeDistribution::exponential(1.0).unwrap()
    }

    fn bp() -> SizeDistribution {
        SizeDistribution::bounded_pareto(1.5, 1.0, 100.0).unwrap()
    }

    /// Quadrature oracle for E[S^k 1(a < S <= b)], independent of the
    /// closed forms under test.
    fn pm_oracle(dist: &SizeDistribution, k: u32, a: f64, b: f64) -> f64 {
        let (lo, hi) = dist.support();
        let a = a.max(lo);
        let b = b.min(if hi.is_finite() {
            hi
        } else {
            dist.quantile(1.0 - 1e-14)
        });
        if a >= b {
            return 0.0;
        }
        quad::integrate(|x| x.powi(k as i32) * dist.pdf(x), a, b, &[], 1e-11, 1e-14).value
    }

    #[test]
    fn exponential_moments_match_oracle() {
        let d = exp1();
        assert!((d.mean() - pm_oracle(&d, 1, 0.0, f64::INFINITY)).abs() < 1e-8);
        assert!((d.second_moment() - pm_oracle(&d, 2, 0.0, f64::INFINITY)).abs() < 1e-7);
        assert!((d.mean() - 1.0).abs() < 1e-12);
        assert!((d.second_moment() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_pareto_moments_match_oracle() {
        let d = bp();
        // Oracle values: mean 2.7027..., second moment 27.027... for
        // shape 1.5 on [1, 100].
        let mean = pm_oracle(&d, 1, 0.0, f64::INFINITY);
        let m2 = pm_oracle(&d, 2, 0.0, f64::INFINITY);
        assert!(
            (d.mean() - mean).abs() / mean < 1e-9,
            "{} vs {}",
            d.mean(),
            mean
        );
        assert!((d.second_moment() - m2).abs() / m2 < 1e-9);
        assert!((d.mean() - 2.702_702_702_7).abs() < 1e-6);
        assert!((d.second_moment() - 27.027_027_027).abs() < 1e-5);
    }

    #[test]
    fn partial_moments_match_oracle_on_interior_intervals() {
        for d in [
            exp1(),
            bp(),
            SizeDistribution::uniform(0.5, 3.0).unwrap(),
            // Degenerate-exponent cases hit the logarithmic branches.
            SizeDistribution::bounded_pareto(1.0, 1.0, 50.0).unwrap(),
            SizeDistribution::bounded_pareto(2.0, 1.0, 50.0).unwrap(),
            SizeDistribution::hyperexponential(vec![0.7, 0.3], vec![2.0, 0.5]).unwrap(),
        ] {
            for (a, b) in [(0.0, 1.0), (0.7, 2.5), (1.0, 50.0), (0.0, f64::INFINITY)] {
                for k in 0..=2 {
                    let got = d.partial_moment(k, a, b);
                    let want = pm_oracle(&d, k, a, b);
                    assert!(
                        (got - want).abs() < 1e-7 * (1.0 + want.abs()),
                        "{d:?} k={k} [{a},{b}]: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_moments() {
        let d = SizeDistribution::deterministic(2.0).unwrap();
        assert_eq!(d.mean(), 2.0);
        assert_eq!(d.second_moment(), 4.0);
        assert_eq!(d.partial_moment(1, 0.0, 1.9), 0.0);
        assert_eq!(d.partial_moment(1, 0.0, 2.0), 2.0);
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in [
            exp1(),
            bp(),
            SizeDistribution::uniform(1.0, 1.01).unwrap(),
            SizeDistribution::hyperexponential(vec![0.9, 0.1], vec![1.9, 0.1]).unwrap(),
        ] {
            let total = pm_oracle(&d, 0, 0.0, f64::INFINITY);
            assert!((total - 1.0).abs() < 1e-6, "{d:?}: {total}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [
            exp1(),
            bp(),
            SizeDistribution::uniform(1.0, 2.0).unwrap(),
            SizeDistribution::hyperexponential(vec![0.5, 0.5], vec![2.0, 0.25]).unwrap(),
        ] {
            for p in [1e-4, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
                let q = d.quantile(p);
                assert!((d.cdf(q) - p).abs() < 1e-9, "{d:?} p={p}");
            }
        }
    }

    #[test]
    fn perfect_and_fixed_estimates_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = JointSizeModel::new(
            SizeDistribution::deterministic(2.0).unwrap(),
            EstimateModel::Perfect,
        );
        assert_eq!(m.sample(&mut rng), (2.0, 2.0));
        let m = JointSizeModel::new(
            SizeDistribution::deterministic(2.0).unwrap(),
            EstimateModel::fixed(0.5).unwrap(),
        );
        assert_eq!(m.sample(&mut rng), (2.0, 1.0));
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let m = JointSizeModel::new(bp(), EstimateModel::uniform(0.8, 1.2).unwrap());
        let draw = |seed: u64| -> Vec<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| m.sample(&mut rng)).collect()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn multiplier_bounds_hold_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for est in [
            EstimateModel::Perfect,
            EstimateModel::fixed(0.5).unwrap(),
            EstimateModel::uniform(0.8, 1.2).unwrap(),
            EstimateModel::two_point(0.5, 2.0, 0.3).unwrap(),
        ] {
            let m = JointSizeModel::new(exp1(), est);
            let (beta, alpha) = m.bounds();
            for _ in 0..10_000 {
                let (s, z) = m.sample(&mut rng);
                assert!(s > 0.0);
                assert!(
                    beta * s <= z && z <= alpha * s,
                    "z={z} outside [{}, {}]",
                    beta * s,
                    alpha * s
                );
            }
        }
    }

    #[test]
    fn uniform_multiplier_mean_ratio() {
        // mean(z/s) for U[0.8, 1.2] is 1.0; Monte Carlo within 3 standard errors.
        let m = JointSizeModel::new(exp1(), EstimateModel::uniform(0.8, 1.2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (s, z) = m.sample(&mut rng);
            let ratio = z / s;
            sum += ratio;
            sumsq += ratio * ratio;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn estimate_density_integrates_to_one() {
        for est in [
            EstimateModel::Perfect,
            EstimateModel::fixed(0.5).unwrap(),
            EstimateModel::uniform(0.8, 1.2).unwrap(),
            EstimateModel::two_point(0.5, 2.0, 0.3).unwrap(),
        ] {
            for size in [exp1(), bp()] {
                let m = JointSizeModel::new(size, est.clone());
                let (zlo, zhi) = m.estimate_support();
                let hi = if zhi.is_finite() {
                    zhi
                } else {
                    m.bounds().1 * m.size.quantile(1.0 - 1e-10)
                };
                let r = quad::integrate(
                    |z| m.estimate_density(z),
                    zlo.max(1e-12),
                    hi,
                    &[],
                    1e-8,
                    1e-10,
                );
                assert!((r.value - 1.0).abs() < 1e-6, "{m:?}: {}", r.value);
            }
        }
    }

    #[test]
    fn conditional_mean_is_consistent_with_marginal() {
        // integral of E[S|Z=z] f_Z(z) dz recovers E[S].
        for est in [
            EstimateModel::uniform(0.8, 1.2).unwrap(),
            EstimateModel::two_point(0.6, 1.4, 0.5).unwrap(),
        ] {
            let m = JointSizeModel::new(exp1(), est);
            let (zlo, zhi) = m.estimate_support();
            let _ = zhi;
            let hi = m.bounds().1 * m.size.quantile(1.0 - 1e-10);
            let r = quad::integrate(
                |z| m.conditional_mean_size(z).unwrap_or(0.0) * m.estimate_density(z),
                zlo.max(1e-12),
                hi,
                &[],
                1e-8,
                1e-10,
            );
            assert!((r.value - m.size.mean()).abs() < 1e-5, "{m:?}: {}", r.value);
        }
    }

    #[test]
    fn conditional_mean_trivial_models() {
        let m = JointSizeModel::new(exp1(), EstimateModel::Perfect);
        assert_eq!(m.conditional_mean_size(0.7), Some(0.7));
        let m = JointSizeModel::new(exp1(), EstimateModel::fixed(0.5).unwrap());
        assert_eq!(m.conditional_mean_size(0.7), Some(1.4));
        // Degenerate sizes: the answer is the atom whenever z is feasible.
        let m = JointSizeModel::new(
            SizeDistribution::deterministic(2.0).unwrap(),
            EstimateModel::two_point(0.5, 1.5, 0.5).unwrap(),
        );
        assert_eq!(m.conditional_mean_size(1.0), Some(2.0));
        assert_eq!(m.conditional_mean_size(0.5), None);
        // Out of support is a defined-empty signal, not zero.
        let m = JointSizeModel::new(bp(), EstimateModel::uniform(0.8, 1.2).unwrap());
        assert_eq!(m.conditional_mean_size(0.5), None);
        assert_eq!(m.conditional_mean_size(-1.0), None);
    }

    #[test]
    fn conditional_mean_matches_monte_carlo_bin() {
        // Exp(1) with U[0.8, 1.2] multiplier at z = 1: compare the analytic
        // conditional mean against a Monte Carlo average over a 0.01 bin.
        let m = JointSizeModel::new(exp1(), EstimateModel::uniform(0.8, 1.2).unwrap());
        let analytic = m.conditional_mean_size(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0u64;
        for _ in 0..1_000_000 {
            let (s, z) = m.sample(&mut rng);
            if (z - 1.0).abs() <= 0.005 {
                sum += s;
                sumsq += s * s;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sumsq / count as f64 - mean * mean;
        let se = (var / count as f64).sqrt();
        assert!(
            (mean - analytic).abs() < 3.0 * se + 1e-3,
            "analytic {analytic}, mc {mean} +/- {se} (n={count})"
        );
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(SizeDistribution::exponential(0.0).is_err());
        assert!(SizeDistribution::bounded_pareto(1.5, 2.0, 1.0).is_err());
        assert!(SizeDistribution::uniform(-1.0, 2.0).is_err());
        assert!(SizeDistribution::hyperexponential(vec![0.5, 0.4], vec![1.0, 2.0]).is_err());
        assert!(EstimateModel::uniform(1.2, 0.8).is_err());
        assert!(EstimateModel::uniform(0.0, 1.0).is_err());
        assert!(EstimateModel::two_point(0.5, 2.0, 1.5).is_err());
    }
}
