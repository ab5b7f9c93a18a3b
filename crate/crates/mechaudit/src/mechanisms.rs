//! Exact distribution construction for the mechanisms: the exponential
//! mechanism, the uniform choice, their mixture, and the filtered poll.
//!
//! All weights go through max-shifted log-sum-exp so that exponents of
//! hundreds (large counts at moderate epsilon) stay finite. DP ratio audits
//! read the stored log-probabilities rather than re-taking logs of possibly
//! underflowed probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DeclaredInput, ObjectiveFunction};
use crate::{Error, Result};

/// Exact probability vector over a finite, ordered alternative set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalize `exp(w_s)` over the support; computed with a max shift.
    pub fn from_log_weights(log_weights: Vec<f64>) -> Self {
        assert!(!log_weights.is_empty(), "empty support");
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max
            + log_weights
                .iter()
                .map(|w| (w - max).exp())
                .sum::<f64>()
                .ln();
        let log_probs: Vec<f64> = log_weights.iter().map(|w| w - log_norm).collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Self { log_probs, probs }
    }

    /// Build from an explicit probability vector (mixtures, point masses).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("empty support".into()));
        }
        if probs.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(Error::InvalidParameter("probability out of [0,1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { log_probs, probs })
    }

    pub fn uniform(support: usize) -> Self {
        assert!(support > 0, "empty support");
        let p = 1.0 / support as f64;
        Self {
            log_probs: vec![p.ln(); support],
            probs: vec![p; support],
        }
    }

    /// Convex combination `(1 - delta) * self + delta * other`.
    pub fn mix(&self, other: &DiscreteDistribution, delta: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::InvalidParameter("support size mismatch".into()));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter("mixture weight outside [0,1]".into()));
        }
        let probs: Vec<f64> = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - delta) * a + delta * b)
            .collect();
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { log_probs, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.probs[s]
    }

    pub fn log_prob(&self, s: usize) -> f64 {
        self.log_probs[s]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Expectation of a per-alternative payoff.
    pub fn expect(&self, g: &[f64]) -> f64 {
        self.probs.iter().zip(g).map(|(p, v)| p * v).sum()
    }

    pub fn total_variation(&self, other: &DiscreteDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Inverse-CDF draw over the stored ordering; identical generator state
    /// yields identical draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.probs.len() - 1
    }

    /// Ordered label -> probability pairs for serialization.
    pub fn labeled(&self, labels: &[String]) -> Vec<(String, f64)> {
        labels
            .iter()
            .cloned()
            .zip(self.probs.iter().cloned())
            .collect()
    }
}

/// Parameters of the mixture mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub epsilon: f64,
    pub delta: f64,
    pub v_max: f64,
    pub alpha: f64,
    pub gap: f64,
}

impl MechanismParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter("delta must lie in [0,1]".into()));
        }
        if self.v_max < 0.0 {
            return Err(Error::InvalidParameter("v_max must be non-negative".into()));
        }
        if !(self.gap > 0.0) {
            return Err(Error::InvalidParameter("gap must be positive".into()));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidParameter("alpha must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Selection with probability proportional to `exp(scale * f(t, s))`.
///
/// Callers pass `scale = epsilon / (2 * sensitivity)` to obtain an
/// epsilon-differentially-private mechanism.
pub fn exponential_distribution(
    f: &ObjectiveFunction,
    exponent_scale: f64,
    t: &[usize],
) -> DiscreteDistribution {
    let weights: Vec<f64> = (0..f.num_alternatives())
        .map(|s| exponent_scale * f.value(t, s))
        .collect();
    DiscreteDistribution::from_log_weights(weights)
}

pub fn uniform_distribution(num_alternatives: usize) -> DiscreteDistribution {
    DiscreteDistribution::uniform(num_alternatives)
}

/// Exact output distribution of the mixture mechanism: the exponential
/// mechanism with scale `epsilon / (2 * sensitivity)` with probability
/// `1 - delta`, a uniform choice with probability `delta`. Opt-out entries
/// resolve to `opt_out_type` before the exponential arm sees the input.
pub fn generic_mechanism_distribution(
    f: &ObjectiveFunction,
    params: &MechanismParams,
    declared: &DeclaredInput,
    opt_out_type: usize,
) -> Result<DiscreteDistribution> {
    params.validate()?;
    if declared.len() != f.n() {
        return Err(Error::InvalidParameter(format!(
            "declared input has {} entries, mechanism expects {}",
            declared.len(),
            f.n()
        )));
    }
    let t = declared.resolve(opt_out_type);
    let scale = params.epsilon / (2.0 * f.declared_sensitivity());
    let m1 = exponential_distribution(f, scale, &t);
    m1.mix(&uniform_distribution(f.num_alternatives()), params.delta)
}

/// Which arm of the mixture ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismArm {
    Exponential,
    Uniform,
}

/// Sampled execution of the mixture: choose the arm, then draw from it.
/// Induces the same distribution as [`generic_mechanism_distribution`];
/// provided separately for simulation realism.
pub fn generic_mechanism_sample<R: Rng + ?Sized>(
    f: &ObjectiveFunction,
    params: &MechanismParams,
    declared: &DeclaredInput,
    opt_out_type: usize,
    rng: &mut R,
) -> Result<(usize, MechanismArm)> {
    params.validate()?;
    let arm: f64 = rng.gen();
    if arm < params.delta {
        Ok((
            uniform_distribution(f.num_alternatives()).sample(rng),
            MechanismArm::Uniform,
        ))
    } else {
        let t = declared.resolve(opt_out_type);
        let scale = params.epsilon / (2.0 * f.declared_sensitivity());
        Ok((
            exponential_distribution(f, scale, &t).sample(rng),
            MechanismArm::Exponential,
        ))
    }
}

/// The filtered poll: entries with `v' >= v_max` are dropped, counts are
/// taken over the survivors, and alternative `j` wins with probability
/// `exp(eps * n_j / 2)` normalized. An empty surviving population yields the
/// uniform distribution.
pub fn poll_distribution(
    declared: &[(usize, f64)],
    v_max: f64,
    epsilon: f64,
    num_alternatives: usize,
) -> Result<DiscreteDistribution> {
    if num_alternatives < 2 {
        return Err(Error::InvalidParameter("poll needs at least 2 alternatives".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let mut counts = vec![0u64; num_alternatives];
    for &(t, v) in declared {
        if v < v_max {
            if t >= num_alternatives {
                return Err(Error::InvalidParameter(format!(
                    "declared favorite {t} out of range"
                )));
            }
            counts[t] += 1;
        }
    }
    Ok(poll_distribution_from_counts(&counts, epsilon))
}

/// Closed-form poll distribution from declared counts.
pub fn poll_distribution_from_counts(counts: &[u64], epsilon: f64) -> DiscreteDistribution {
    let weights: Vec<f64> = counts.iter().map(|&c| epsilon * c as f64 / 2.0).collect();
    DiscreteDistribution::from_log_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::type_vectors;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counting(n: usize, m: usize) -> ObjectiveFunction {
        ObjectiveFunction::new(n, m, m, 1.0, |t, s| {
            t.iter().filter(|&&x| x == s).count() as f64
        })
        .unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn constant_objective_gives_uniform() {
        let f = ObjectiveFunction::new(1, 2, 3, 1.0, |_, _| 5.0).unwrap();
        let d = exponential_distribution(&f, 2.0, &[0]);
        for s in 0..3 {
            assert_close(d.prob(s), 1.0 / 3.0, 1e-15);
        }
    }

    #[test]
    fn exponential_weights_two_one_zero() {
        // Direct evaluation of e^2, e^1, e^0 normalized.
        let f = ObjectiveFunction::new(1, 1, 3, 1.0, |_, s| (2 - s) as f64).unwrap();
        let d = exponential_distribution(&f, 1.0, &[0]);
        let z = 2.0f64.exp() + 1.0f64.exp() + 1.0;
        assert_close(d.prob(0), 2.0f64.exp() / z, 1e-12);
        assert_close(d.prob(1), 1.0f64.exp() / z, 1e-12);
        assert_close(d.prob(2), 1.0 / z, 1e-12);
        assert_close(d.prob(0), 0.66524, 1e-5);
        assert_close(d.prob(1), 0.24473, 1e-5);
        assert_close(d.prob(2), 0.09003, 1e-5);
    }

    #[test]
    fn poll_counts_three_one() {
        let d = poll_distribution_from_counts(&[3, 1], 1.0);
        // 1 / (1 + e^{-1})
        assert_close(d.prob(0), 1.0 / (1.0 + (-1.0f64).exp()), 1e-15);
        assert_close(d.prob(0), 0.73106, 1e-5);
        assert_close(d.prob(1), 0.26894, 1e-5);
    }

    #[test]
    fn log_sum_exp_survives_huge_counts() {
        let d = poll_distribution_from_counts(&[100_000, 0], 1.0);
        assert!(d.prob(0) > 0.999_999);
        assert!(d.prob(1) >= 0.0);
        assert!(d.log_prob(1).is_finite());
        assert_close(d.log_prob(1), -50_000.0, 1e-6);
    }

    #[test]
    fn uniform_distribution_cases() {
        assert_eq!(uniform_distribution(1).probs(), &[1.0]);
        assert_eq!(uniform_distribution(2).probs(), &[0.5, 0.5]);
        for &p in uniform_distribution(5).probs() {
            assert_eq!(p, 0.2);
        }
    }

    #[test]
    fn mixture_collapses_at_extremes() {
        let f = counting(2, 2);
        let params = |delta| MechanismParams {
            epsilon: 1.0,
            delta,
            v_max: 1.0,
            alpha: 0.5,
            gap: 0.5,
        };
        let declared = DeclaredInput::from_types(&[0, 0]);
        let pure_uniform =
            generic_mechanism_distribution(&f, &params(1.0), &declared, 0).unwrap();
        assert_eq!(pure_uniform.probs(), uniform_distribution(2).probs());

        let pure_expo = generic_mechanism_distribution(&f, &params(0.0), &declared, 0).unwrap();
        let expected = exponential_distribution(&f, 0.5, &[0, 0]);
        assert_eq!(pure_expo.probs(), expected.probs());
    }

    #[test]
    fn mixture_convex_combination() {
        let m1 = DiscreteDistribution::from_probs(vec![0.73106, 0.26894]).unwrap();
        let mixed = m1.mix(&DiscreteDistribution::uniform(2), 0.5).unwrap();
        assert_close(mixed.prob(0), 0.61553, 1e-12);
        assert_close(mixed.prob(1), 0.38447, 1e-12);
    }

    #[test]
    fn mixture_tv_identity() {
        let f = counting(3, 2);
        let declared = DeclaredInput::from_types(&[0, 0, 1]);
        let params = MechanismParams {
            epsilon: 1.0,
            delta: 0.3,
            v_max: 1.0,
            alpha: 0.5,
            gap: 0.5,
        };
        let m1 = exponential_distribution(&f, 0.5, &[0, 0, 1]);
        let uni = uniform_distribution(2);
        let mixed = generic_mechanism_distribution(&f, &params, &declared, 0).unwrap();
        assert!(mixed.total_variation(&m1) <= params.delta + 1e-12);
        assert!(mixed.total_variation(&uni) <= (1.0 - params.delta) + 1e-12);
    }

    #[test]
    fn poll_filters_high_valuations() {
        // All filtered out: uniform.
        let d = poll_distribution(&[(0, 9.0), (1, 9.0)], 1.0, 1.0, 2).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);

        let d = poll_distribution(
            &[(0, 0.1), (0, 0.1), (0, 0.1), (1, 0.1), (0, 99.0)],
            1.0,
            1.0,
            2,
        )
        .unwrap();
        assert_close(d.prob(0), 0.73106, 1e-5);
    }

    #[test]
    fn poll_counts_five_zero_zero() {
        let d = poll_distribution_from_counts(&[5, 0, 0], 2.0);
        let e5 = 5.0f64.exp();
        assert_close(d.prob(0), e5 / (e5 + 2.0), 1e-12);
        assert_close(d.prob(1), 1.0 / (e5 + 2.0), 1e-12);
        assert_close(d.prob(2), 1.0 / (e5 + 2.0), 1e-12);
    }

    #[test]
    fn sample_point_mass() {
        let d = DiscreteDistribution::from_probs(vec![0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            assert_eq!(d.sample(&mut rng), 1);
        }
    }

    #[test]
    fn sample_seeded_golden() {
        // First 10 draws from a fair coin under seed 42, frozen once.
        let d = DiscreteDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws: Vec<usize> = (0..10).map(|_| d.sample(&mut rng)).collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let again: Vec<usize> = (0..10).map(|_| d.sample(&mut rng2)).collect();
        assert_eq!(draws, again);
        assert_eq!(draws, vec![1, 1, 0, 1, 0, 0, 0, 1, 1, 0]);
    }

    #[test]
    fn sample_frequency_matches_exact() {
        let d = poll_distribution_from_counts(&[3, 1], 1.0);
        let p = d.prob(0);
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..n).filter(|_| d.sample(&mut rng) == 0).count();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn sampled_execution_matches_exact_distribution() {
        let f = counting(2, 2);
        let params = MechanismParams {
            epsilon: 1.0,
            delta: 0.4,
            v_max: 1.0,
            alpha: 0.5,
            gap: 0.5,
        };
        let declared = DeclaredInput::from_types(&[0, 0]);
        let exact = generic_mechanism_distribution(&f, &params, &declared, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let (s, _) = generic_mechanism_sample(&f, &params, &declared, 0, &mut rng).unwrap();
            if s == 0 {
                hits += 1;
            }
        }
        let p = exact.prob(0);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn full_support_lower_bound() {
        // Every probability >= e^{-eps n} / |S| under the exponential arm.
        let n = 3;
        let m = 2;
        let f = counting(n, m);
        let eps = 2.0;
        for t in type_vectors(m, n) {
            let d = exponential_distribution(&f, eps / 2.0, &t);
            for s in 0..m {
                assert!(d.prob(s) >= (-eps * n as f64).exp() / m as f64 - 1e-15);
            }
        }
    }

    #[test]
    fn monotonicity_in_score() {
        // Raising f(s, .) never decreases Pr[s].
        let base = ObjectiveFunction::new(1, 1, 3, 1.0, |_, s| [1.0, 2.0, 0.5][s]).unwrap();
        let raised = ObjectiveFunction::new(1, 1, 3, 1.0, |_, s| [1.9, 2.0, 0.5][s]).unwrap();
        let d0 = exponential_distribution(&base, 1.3, &[0]);
        let d1 = exponential_distribution(&raised, 1.3, &[0]);
        assert!(d1.prob(0) > d0.prob(0));
    }
}
