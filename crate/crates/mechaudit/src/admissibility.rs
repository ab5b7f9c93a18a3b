//! Valuation populations: admissibility checks, moment-based admissibility,
//! closed-form tail probabilities, sampling, and the participation split.
//!
//! Families are restricted to those with closed-form survival functions so
//! tail checks are exact rather than simulated.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Normal, Pareto};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Non-negative valuation distribution with a closed-form survival function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ValuationDistribution {
    PointMass { value: f64 },
    Uniform { upper: f64 },
    Exponential { rate: f64 },
    HalfNormal { sigma: f64 },
    Pareto { scale: f64, shape: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl ValuationDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ValuationDistribution::PointMass { value } => value >= 0.0,
            ValuationDistribution::Uniform { upper } => upper > 0.0,
            ValuationDistribution::Exponential { rate } => rate > 0.0,
            ValuationDistribution::HalfNormal { sigma } => sigma > 0.0,
            ValuationDistribution::Pareto { scale, shape } => scale > 0.0 && shape > 0.0,
            ValuationDistribution::LogNormal { mu: _, sigma } => sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid valuation family parameters: {self:?}"
            )))
        }
    }

    /// Exact `Pr[v > threshold]` via the family's survival function.
    pub fn tail_probability(&self, threshold: f64) -> f64 {
        let t = threshold;
        match *self {
            ValuationDistribution::PointMass { value } => {
                if t >= value {
                    0.0
                } else {
                    1.0
                }
            }
            ValuationDistribution::Uniform { upper } => (1.0 - t / upper).clamp(0.0, 1.0),
            ValuationDistribution::Exponential { rate } => (-rate * t).exp(),
            ValuationDistribution::HalfNormal { sigma } => {
                if t <= 0.0 {
                    1.0
                } else {
                    erfc(t / (sigma * std::f64::consts::SQRT_2))
                }
            }
            ValuationDistribution::Pareto { scale, shape } => {
                if t <= scale {
                    1.0
                } else {
                    (scale / t).powf(shape)
                }
            }
            ValuationDistribution::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    1.0
                } else {
                    0.5 * erfc((t.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
                }
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ValuationDistribution::PointMass { value } => value,
            ValuationDistribution::Uniform { upper } => rng.gen::<f64>() * upper,
            ValuationDistribution::Exponential { rate } => {
                Exp::new(rate).expect("validated rate").sample(rng)
            }
            ValuationDistribution::HalfNormal { sigma } => {
                Normal::new(0.0, sigma).expect("validated sigma").sample(rng).abs()
            }
            ValuationDistribution::Pareto { scale, shape } => {
                Pareto::new(scale, shape).expect("validated pareto").sample(rng)
            }
            ValuationDistribution::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated lognormal").sample(rng)
            }
        }
    }
}

/// Fraction of agents above the `n^alpha` threshold against the `n^-beta`
/// budget.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityCheck {
    pub threshold: f64,
    pub fraction: f64,
    pub budget: f64,
    pub ok: bool,
}

/// Check `|{i : v_i > n^alpha}| / n <= n^-beta`.
pub fn check_admissible(valuations: &[f64], alpha: f64, beta: f64) -> Result<AdmissibilityCheck> {
    if valuations.is_empty() {
        return Err(Error::InvalidParameter("empty valuation vector".into()));
    }
    let n = valuations.len() as f64;
    let threshold = n.powf(alpha);
    let fraction = valuations.iter().filter(|&&v| v > threshold).count() as f64 / n;
    let budget = n.powf(-beta);
    Ok(AdmissibilityCheck {
        threshold,
        fraction,
        budget,
        ok: fraction <= budget,
    })
}

/// The beta guaranteed by a finite p-th moment: alpha for p = 1 (Markov),
/// p * alpha for even p (Chebyshev and its even-moment generalization).
pub fn moment_admissibility(p: u32, alpha: f64) -> Result<f64> {
    if p == 1 {
        Ok(alpha)
    } else if p >= 2 && p.is_multiple_of(2) {
        Ok(p as f64 * alpha)
    } else {
        Err(Error::InvalidParameter(format!(
            "moment order must be 1 or even, got {p}"
        )))
    }
}

/// One row of a strong-admissibility table.
#[derive(Debug, Clone, Serialize)]
pub struct StrongAdmissibilityRow {
    pub n: u64,
    pub threshold: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongAdmissibilityReport {
    pub rows: Vec<StrongAdmissibilityRow>,
    /// Tail at `(log n)^alpha` decays faster than every tested polynomial
    /// `n^-c`, c in {1, 2, 3}, along the grid.
    pub superpolynomial: bool,
}

/// Tabulate `Pr[v > (log n)^alpha]` over an ascending grid of population
/// sizes and flag superpolynomial decay.
pub fn strong_admissibility_check(
    family: &ValuationDistribution,
    alpha: f64,
    n_grid: &[u64],
) -> Result<StrongAdmissibilityReport> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "n grid must be ascending with at least two points".into(),
        ));
    }
    family.validate()?;
    let rows: Vec<StrongAdmissibilityRow> = n_grid
        .iter()
        .map(|&n| {
            let threshold = (n as f64).ln().powf(alpha);
            StrongAdmissibilityRow {
                n,
                threshold,
                tail: family.tail_probability(threshold),
            }
        })
        .collect();
    // p(n) * n^c must be non-increasing along the grid for each tested c.
    let superpolynomial = (1..=3u32).all(|c| {
        rows.windows(2).all(|w| {
            let a = w[0].tail * (w[0].n as f64).powi(c as i32);
            let b = w[1].tail * (w[1].n as f64).powi(c as i32);
            b <= a * (1.0 + 1e-12) + f64::MIN_POSITIVE
        })
    });
    Ok(StrongAdmissibilityReport {
        rows,
        superpolynomial,
    })
}

/// n i.i.d. draws; deterministic under a fixed generator state.
pub fn sample_valuations<R: Rng + ?Sized>(
    family: &ValuationDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    family.validate()?;
    Ok((0..n).map(|_| family.sample_one(rng)).collect())
}

/// Partition agents into participants (`v_i <= v_max`, boundary included)
/// and the rest; returns participating indices and the non-participant count.
pub fn participation_split(valuations: &[f64], v_max: f64) -> (Vec<usize>, usize) {
    let participating: Vec<usize> = valuations
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= v_max)
        .map(|(i, _)| i)
        .collect();
    let n_np = valuations.len() - participating.len();
    (participating, n_np)
}
