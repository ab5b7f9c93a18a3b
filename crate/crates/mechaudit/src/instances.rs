//! Concrete instances wired into the generic machinery: the electronic poll
//! and privacy-aware digital-goods pricing.

use rand::Rng;
use serde::Serialize;

use crate::domain::{AlternativeSet, ObjectiveFunction, TypeSpace};
use crate::game::{solve_parameters, GameInstance};
use crate::mechanisms::poll_distribution_from_counts;
use crate::{Error, Result};

/// Build the poll game: types and alternatives are the `m` magazines, the
/// reaction is the magazine an agent picks up, and the objective counts
/// first-choice declarations (sensitivity 1).
///
/// Outcome utility is 1 for receiving the favorite and `1 - g` otherwise.
pub fn make_poll(m: usize, n: usize, g: f64) -> Result<GameInstance> {
    if m < 2 {
        return Err(Error::InvalidParameter("poll needs at least 2 magazines".into()));
    }
    if !(g > 0.0 && g <= 2.0) {
        return Err(Error::InvalidParameter(
            "poll gap must lie in (0, 2] to keep utilities in [-1,1]".into(),
        ));
    }
    let labels: Vec<String> = (1..=m).map(|j| j.to_string()).collect();
    let objective = ObjectiveFunction::new(n, m, m, 1.0, |t, s| {
        t.iter().filter(|&&x| x == s).count() as f64
    })?;
    GameInstance::new(
        TypeSpace::new(labels.clone())?,
        AlternativeSet::new(labels.clone())?,
        labels,
        move |t, _s, r| if r == t { 1.0 } else { 1.0 - g },
        g,
        objective,
    )
}

/// The closed-form poll tail bound `(m - 1) e^{-eps k / 2}` on the
/// probability of outputting an alternative `k` behind the leader.
pub fn poll_tail_bound(m: usize, epsilon: f64, k: f64) -> f64 {
    (m as f64 - 1.0) * (-epsilon * k / 2.0).exp()
}

/// Result of checking the large-population poll guarantee.
#[derive(Debug, Clone, Serialize)]
pub struct Claim1Check {
    pub epsilon: f64,
    pub v_max: f64,
    pub n_np: u64,
    pub k: f64,
    /// Analytic bound `(m-1) e^{-eps k / 2}`.
    pub bound: f64,
    /// Exact probability of a bad output under worst-case manipulation.
    pub exact_probability: f64,
    /// Bad-output fraction over the Monte Carlo trials, when requested.
    pub mc_bad_fraction: Option<f64>,
    pub ok: bool,
}

/// Check that the poll outputs an alternative more than `2k` behind the true
/// leader only with negligible probability, under the worst-case
/// manipulation where all `n^alpha` non-participants deflate the leader and
/// inflate the weakest magazine.
///
/// `epsilon = g n^{-alpha}`, `k = n^alpha (log n)^2 log m / g`; logarithms
/// are natural unless `log_base_2` is set.
pub fn poll_claim1_check<R: Rng + ?Sized>(
    n: u64,
    alpha: f64,
    m: usize,
    g: f64,
    true_counts: &[u64],
    trials: usize,
    log_base_2: bool,
    rng: &mut R,
) -> Result<Claim1Check> {
    if m < 2 || true_counts.len() != m {
        return Err(Error::InvalidParameter("count vector must have m >= 2 entries".into()));
    }
    if true_counts.iter().sum::<u64>() != n {
        return Err(Error::InvalidParameter("counts must sum to n".into()));
    }
    let nf = n as f64;
    let v_max = nf.powf(alpha);
    let epsilon = g / v_max;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = g n^-alpha = {epsilon} outside (0, 1]; n too small for this regime"
        )));
    }
    let log = |x: f64| if log_base_2 { x.log2() } else { x.ln() };
    let k = v_max * log(nf).powi(2) * log(m as f64) / g;
    let bound = poll_tail_bound(m, epsilon, k);

    let leader = (0..m).max_by_key(|&j| true_counts[j]).unwrap();
    let max_true = true_counts[leader] as f64;
    let n_np = v_max.floor() as u64;

    // Worst-case manipulation: deflate the leader, inflate the weakest.
    let mut declared = true_counts.to_vec();
    let deflate = n_np.min(declared[leader]);
    declared[leader] -= deflate;
    let weakest = (0..m)
        .filter(|&j| j != leader)
        .min_by_key(|&j| true_counts[j])
        .unwrap();
    declared[weakest] += n_np;

    let dist = poll_distribution_from_counts(&declared, epsilon);
    let bad: Vec<usize> = (0..m)
        .filter(|&j| (true_counts[j] as f64) < max_true - 2.0 * k)
        .collect();
    let exact_probability: f64 = bad.iter().map(|&j| dist.prob(j)).sum();

    let mc_bad_fraction = if trials > 0 {
        let mut hits = 0usize;
        for _ in 0..trials {
            if bad.contains(&dist.sample(rng)) {
                hits += 1;
            }
        }
        Some(hits as f64 / trials as f64)
    } else {
        None
    };

    // Sampling noise allowance around the exact probability.
    let slack = mc_bad_fraction.map_or(0.0, |_| {
        3.0 * (exact_probability * (1.0 - exact_probability) / trials as f64).sqrt()
    });
    let ok = exact_probability <= bound + 1e-12
        && mc_bad_fraction.is_none_or(|f| f <= bound + slack + 1e-12);

    Ok(Claim1Check {
        epsilon,
        v_max,
        n_np,
        k,
        bound,
        exact_probability,
        mc_bad_fraction,
        ok,
    })
}

/// Build the digital-goods pricing game on the `1/q` grid: valuations in
/// `{0, 1/q, ..., 1}` (type index is the numerator), prices in
/// `{1/q, ..., 1}` (price index `p` maps to `(p+1)/q`), reactions buy /
/// not-buy, revenue objective with sensitivity 1, gap `1/(2q)`.
pub fn make_digital_goods(q: usize, n: usize) -> Result<GameInstance> {
    if q < 2 {
        return Err(Error::InvalidParameter("grid resolution q must be >= 2".into()));
    }
    let type_labels: Vec<String> = (0..=q).map(|i| format!("{i}/{q}")).collect();
    let price_labels: Vec<String> = (1..=q).map(|i| format!("{i}/{q}")).collect();
    let qf = q as f64;
    let objective = ObjectiveFunction::new(n, q + 1, q, 1.0, move |t, p| {
        let price = (p + 1) as f64 / qf;
        price * t.iter().filter(|&&ti| ti > p).count() as f64
    })?;
    GameInstance::new(
        TypeSpace::new(type_labels)?,
        AlternativeSet::new(price_labels)?,
        vec!["buy".into(), "not-buy".into()],
        move |t, p, r| {
            if r == 0 {
                // Buy: t - p plus the 1/(2q) preference for receiving the good.
                (t as f64 - (p + 1) as f64) / qf + 1.0 / (2.0 * qf)
            } else {
                0.0
            }
        },
        1.0 / (2.0 * qf),
        objective,
    )
}

/// Theorem bound instantiated for digital goods, with the constant explicit.
#[derive(Debug, Clone, Serialize)]
pub struct DigitalGoodsBound {
    pub bound: f64,
    /// The bound is no better than reporting nothing (it exceeds the maximum
    /// revenue `n`).
    pub vacuous: bool,
}

/// Accuracy bound for the digital-goods instance at solver parameters:
/// `|S| = q`, `g = 1/(2q)`, sensitivity 1. Errors when the solver's closed
/// forms are infeasible at `(n, alpha)`.
pub fn digital_goods_error_bound(n: u64, alpha: f64, q: usize) -> Result<DigitalGoodsBound> {
    let solved = solve_parameters(n, alpha, 1.0 / (2.0 * q as f64), q, 1.0)?;
    if !solved.feasible {
        return Err(Error::Infeasible(format!(
            "digital goods at n={n}, alpha={alpha}, q={q}: delta={}, condition {} <= {}",
            solved.delta, solved.condition_lhs, solved.condition_rhs
        )));
    }
    Ok(DigitalGoodsBound {
        bound: solved.error_bound,
        vacuous: solved.error_bound >= n as f64,
    })
}
