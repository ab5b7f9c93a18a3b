//! Exact differential-privacy auditing, expectation-gap checks, and Shannon
//! mutual-information computations.
//!
//! DP is verified on singleton events only. For a finite alternative set this
//! is sufficient: the probability of any subset is a sum of singleton
//! probabilities, and a ratio bound that holds termwise holds for the sum.
//! Deterministic mechanisms produce zero-probability events and hence
//! infinite ratios; those are reported as explicit failures, never clamped.

use serde::Serialize;

use crate::domain::{neighbors, type_vectors, vector_count, vector_rank};
use crate::mechanisms::DiscreteDistribution;
use crate::{Error, Result};

pub const LOG_RATIO_TOLERANCE: f64 = 1e-9;

/// Default cap on the number of input vectors enumerated by exact audits.
pub const DEFAULT_DP_GUARD: u128 = 10_000;

/// Neighboring pair and singleton event achieving the worst log-ratio.
#[derive(Debug, Clone, Serialize)]
pub struct DpWitness {
    pub t: Vec<usize>,
    pub t_prime: Vec<usize>,
    pub alternative: usize,
}

/// Outcome of an exact DP audit.
#[derive(Debug, Clone, Serialize)]
pub struct DpAuditReport {
    pub epsilon_declared: f64,
    pub max_log_ratio: f64,
    /// A singleton event had positive probability on one side of a
    /// neighboring pair and zero on the other.
    pub infinite_ratio: bool,
    pub witness: Option<DpWitness>,
    pub pass: bool,
}

struct RatioScan {
    max_log_ratio: f64,
    infinite: bool,
    witness: Option<DpWitness>,
}

fn scan_log_ratios<M>(mechanism: M, alphabet: usize, n: usize, guard: u128) -> Result<RatioScan>
where
    M: Fn(&[usize]) -> DiscreteDistribution,
{
    let count = vector_count(alphabet, n).ok_or(Error::InstanceTooLarge {
        size: u128::MAX,
        guard,
    })?;
    if count > guard {
        return Err(Error::InstanceTooLarge { size: count, guard });
    }
    let dists: Vec<DiscreteDistribution> = type_vectors(alphabet, n).map(|t| mechanism(&t)).collect();

    let mut scan = RatioScan {
        max_log_ratio: 0.0,
        infinite: false,
        witness: None,
    };
    for t in type_vectors(alphabet, n) {
        let d = &dists[vector_rank(&t, alphabet)];
        for t2 in neighbors(&t, alphabet) {
            let d2 = &dists[vector_rank(&t2, alphabet)];
            for s in 0..d.len() {
                let (p, q) = (d.prob(s), d2.prob(s));
                if p == 0.0 && q == 0.0 {
                    continue;
                }
                if q == 0.0 {
                    scan.infinite = true;
                    scan.max_log_ratio = f64::INFINITY;
                    scan.witness = Some(DpWitness {
                        t: t.clone(),
                        t_prime: t2,
                        alternative: s,
                    });
                    return Ok(scan);
                }
                let log_ratio = d.log_prob(s) - d2.log_prob(s);
                if log_ratio > scan.max_log_ratio {
                    scan.max_log_ratio = log_ratio;
                    scan.witness = Some(DpWitness {
                        t: t.clone(),
                        t_prime: t2.clone(),
                        alternative: s,
                    });
                }
            }
        }
    }
    Ok(scan)
}

/// Exhaustive DP verification: enumerate all neighboring input pairs and all
/// singleton events, report the worst log-ratio and its witness.
pub fn verify_dp<M>(
    mechanism: M,
    alphabet: usize,
    n: usize,
    epsilon: f64,
    guard: u128,
) -> Result<DpAuditReport>
where
    M: Fn(&[usize]) -> DiscreteDistribution,
{
    let scan = scan_log_ratios(mechanism, alphabet, n, guard)?;
    Ok(DpAuditReport {
        epsilon_declared: epsilon,
        max_log_ratio: scan.max_log_ratio,
        infinite_ratio: scan.infinite,
        witness: scan.witness,
        pass: !scan.infinite && scan.max_log_ratio <= epsilon + LOG_RATIO_TOLERANCE,
    })
}

/// Worst singleton log-ratio of a mechanism, with no pass/fail judgment.
/// Returns infinity when a zero-probability event breaks the ratio.
pub fn measure_dp<M>(mechanism: M, alphabet: usize, n: usize, guard: u128) -> Result<f64>
where
    M: Fn(&[usize]) -> DiscreteDistribution,
{
    Ok(scan_log_ratios(mechanism, alphabet, n, guard)?.max_log_ratio)
}

/// Declared range of a payoff function for the expectation-gap bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffRange {
    /// g : S -> [0, 1]; the gap bound is 2 * epsilon.
    Unit,
    /// g : S -> [-1, 1]; the gap bound is 4 * epsilon.
    Signed,
}

impl PayoffRange {
    pub fn gap_bound(self, epsilon: f64) -> f64 {
        match self {
            PayoffRange::Unit => 2.0 * epsilon,
            PayoffRange::Signed => 4.0 * epsilon,
        }
    }

    fn contains(self, v: f64) -> bool {
        match self {
            PayoffRange::Unit => (0.0..=1.0).contains(&v),
            PayoffRange::Signed => (-1.0..=1.0).contains(&v),
        }
    }
}

/// `|E_{M(t)}[g] - E_{M(t')}[g]|` for neighboring inputs, with the bound
/// check appropriate to the declared range of `g` (valid for epsilon <= 1).
pub fn expectation_gap(
    dist_t: &DiscreteDistribution,
    dist_t_prime: &DiscreteDistribution,
    t: &[usize],
    t_prime: &[usize],
    g: &[f64],
    range: PayoffRange,
    epsilon: f64,
) -> Result<(f64, bool)> {
    let distance = t
        .iter()
        .zip(t_prime)
        .filter(|(a, b)| a != b)
        .count()
        + t.len().abs_diff(t_prime.len());
    if distance > 1 {
        return Err(Error::NotNeighboring { distance });
    }
    if let Some(&v) = g.iter().find(|&&v| !range.contains(v)) {
        return Err(Error::InvalidParameter(format!(
            "payoff value {v} outside declared range"
        )));
    }
    let gap = (dist_t.expect(g) - dist_t_prime.expect(g)).abs();
    Ok((gap, gap < range.gap_bound(epsilon)))
}

/// Finite joint distribution over pairs `(x, y)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    nx: usize,
    ny: usize,
    p: Vec<f64>,
}

fn entropy_bits(probs: impl Iterator<Item = f64>) -> f64 {
    // 0 * log 0 treated as 0.
    probs.filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

impl JointDistribution {
    pub fn new(nx: usize, ny: usize, p: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || p.len() != nx * ny {
            return Err(Error::InvalidParameter("joint dimension mismatch".into()));
        }
        if p.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("negative joint probability".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "joint probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { nx, ny, p })
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.ny + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|x| (0..self.ny).map(|y| self.prob(x, y)).sum())
            .collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|y| (0..self.nx).map(|x| self.prob(x, y)).sum())
            .collect()
    }

    /// I(X;Y) = H(X) + H(Y) - H(X,Y), in bits.
    pub fn mutual_information_bits(&self) -> f64 {
        let hx = entropy_bits(self.marginal_x().into_iter());
        let hy = entropy_bits(self.marginal_y().into_iter());
        let hxy = entropy_bits(self.p.iter().cloned());
        hx + hy - hxy
    }

    /// Mutual information in nats; this is the scale of the DP bound
    /// `I(X_i; M(X), X_{-i}) <= epsilon`.
    pub fn mutual_information_nats(&self) -> f64 {
        self.mutual_information_bits() * std::f64::consts::LN_2
    }

    /// Apply a randomized map to the X coordinate: rows of `post_map` are
    /// distributions over the new X alphabet.
    pub fn map_x(&self, post_map: &[Vec<f64>]) -> Result<JointDistribution> {
        if post_map.len() != self.nx {
            return Err(Error::InvalidParameter("post-map row count mismatch".into()));
        }
        let out = post_map[0].len();
        let mut p = vec![0.0; out * self.ny];
        for (x, row) in post_map.iter().enumerate() {
            if row.len() != out {
                return Err(Error::InvalidParameter("ragged post-map".into()));
            }
            for (z, &w) in row.iter().enumerate() {
                for y in 0..self.ny {
                    p[z * self.ny + y] += w * self.prob(x, y);
                }
            }
        }
        JointDistribution::new(out, self.ny, p)
    }
}

/// Convenience alias: mutual information in bits.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    joint.mutual_information_bits()
}

/// Mutual information between an agent's true type and the mechanism output,
/// under a (possibly randomized) reporting strategy. Rows of `strategy` are
/// distributions over declared types; `mechanism` maps a declared type to an
/// output distribution (other inputs already fixed inside the closure).
pub fn channel_mi<M>(prior: &[f64], strategy: &[Vec<f64>], mechanism: M) -> Result<f64>
where
    M: Fn(usize) -> DiscreteDistribution,
{
    if prior.is_empty() || strategy.len() != prior.len() {
        return Err(Error::InvalidParameter("prior/strategy size mismatch".into()));
    }
    let num_declared = strategy[0].len();
    let outputs: Vec<DiscreteDistribution> = (0..num_declared).map(&mechanism).collect();
    let ny = outputs[0].len();
    let mut p = vec![0.0; prior.len() * ny];
    for (t, &pt) in prior.iter().enumerate() {
        for (d, &w) in strategy[t].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for s in 0..ny {
                p[t * ny + s] += pt * w * outputs[d].prob(s);
            }
        }
    }
    Ok(JointDistribution::new(prior.len(), ny, p)?.mutual_information_bits())
}

/// Data-processing check: I(f(X); Y) <= I(X; Y).
pub fn data_processing_check(
    joint: &JointDistribution,
    post_map: &[Vec<f64>],
) -> Result<(f64, f64, bool)> {
    let lhs = joint.map_x(post_map)?.mutual_information_bits();
    let rhs = joint.mutual_information_bits();
    Ok((lhs, rhs, lhs <= rhs + LOG_RATIO_TOLERANCE))
}

/// Result of checking `I(X_i; (M(X), X_{-i})) <= epsilon` (nats).
#[derive(Debug, Clone, Serialize)]
pub struct MiBoundCheck {
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub epsilon_measured: f64,
    pub ok: bool,
}

/// Exact check of the DP bound on mutual information for one agent.
///
/// `marginals` gives an independent per-coordinate input distribution; the
/// bound is stated for the information the output plus the other agents'
/// inputs carry about coordinate `agent`, so coordinates must be independent
/// for the conditional ratio argument to apply.
pub fn dp_mi_bound_check<M>(
    mechanism: M,
    alphabet: usize,
    n: usize,
    agent: usize,
    marginals: &[Vec<f64>],
    guard: u128,
) -> Result<MiBoundCheck>
where
    M: Fn(&[usize]) -> DiscreteDistribution,
{
    if agent >= n || marginals.len() != n {
        return Err(Error::InvalidParameter("agent index / marginals mismatch".into()));
    }
    let epsilon_measured = measure_dp(&mechanism, alphabet, n, guard)?;

    let count = usize::try_from(vector_count(alphabet, n).unwrap()).unwrap();
    let others = count / alphabet;
    let num_s = mechanism(&vec![0; n]).len();
    // Y = (s, x_{-i}) indexed as s * |T|^{n-1} + rank(x_{-i}).
    let ny = num_s * others;
    let mut p = vec![0.0; alphabet * ny];
    for t in type_vectors(alphabet, n) {
        let mut weight = 1.0;
        for (i, &x) in t.iter().enumerate() {
            weight *= marginals[i][x];
        }
        if weight == 0.0 {
            continue;
        }
        let mut rest: Vec<usize> = t.clone();
        rest.remove(agent);
        let rest_rank = vector_rank(&rest, alphabet);
        let d = mechanism(&t);
        for s in 0..num_s {
            p[t[agent] * ny + s * others + rest_rank] += weight * d.prob(s);
        }
    }
    let joint = JointDistribution::new(alphabet, ny, p)?;
    let mi_nats = joint.mutual_information_nats();
    Ok(MiBoundCheck {
        mi_nats,
        mi_bits: joint.mutual_information_bits(),
        epsilon_measured,
        ok: mi_nats <= epsilon_measured + LOG_RATIO_TOLERANCE,
    })
}
