//! Utility accounting, reactions and the gap, dominance and accuracy audits,
//! and the closed-form parameter solver.
//!
//! The information utility is never simulated pointwise: audits always charge
//! the adversarial upper bound `v * epsilon` to the deviation side.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domain::{
    type_vectors, vector_count, AlternativeSet, ObjectiveFunction, TypeSpace,
};
use crate::mechanisms::{
    exponential_distribution, uniform_distribution, DiscreteDistribution, MechanismParams,
};
use crate::{Error, Result};

type OutcomeUtility = Arc<dyn Fn(usize, usize, usize) -> f64 + Send + Sync>;

/// One playable game: types, alternatives, reactions, outcome utility with a
/// positive gap, and the designer's objective.
#[derive(Clone)]
pub struct GameInstance {
    pub types: TypeSpace,
    pub alternatives: AlternativeSet,
    pub reactions: Vec<String>,
    outcome_utility: OutcomeUtility,
    pub gap: f64,
    pub objective: ObjectiveFunction,
}

impl GameInstance {
    pub fn new<U>(
        types: TypeSpace,
        alternatives: AlternativeSet,
        reactions: Vec<String>,
        outcome_utility: U,
        gap: f64,
        objective: ObjectiveFunction,
    ) -> Result<Self>
    where
        U: Fn(usize, usize, usize) -> f64 + Send + Sync + 'static,
    {
        if reactions.is_empty() {
            return Err(Error::InvalidParameter("empty reaction set".into()));
        }
        if !(gap > 0.0) {
            return Err(Error::InvalidParameter("gap must be positive".into()));
        }
        let game = Self {
            types,
            alternatives,
            reactions,
            outcome_utility: Arc::new(outcome_utility),
            gap,
            objective,
        };
        // Outcome utilities live in [-1, 1]; the space is finite, so check it.
        for t in 0..game.types.len() {
            for s in 0..game.alternatives.len() {
                for r in 0..game.reactions.len() {
                    let u = game.outcome_utility(t, s, r);
                    if !(-1.0..=1.0).contains(&u) {
                        return Err(Error::InvalidParameter(format!(
                            "outcome utility {u} outside [-1,1] at (t={t}, s={s}, r={r})"
                        )));
                    }
                }
            }
        }
        Ok(game)
    }

    pub fn outcome_utility(&self, t: usize, s: usize, r: usize) -> f64 {
        (self.outcome_utility)(t, s, r)
    }

    /// Argmax reaction for type `t` on alternative `s`; ties break to the
    /// first reaction in the declared ordering.
    pub fn optimal_reaction(&self, t: usize, s: usize) -> usize {
        let mut best = 0;
        let mut best_u = self.outcome_utility(t, s, 0);
        for r in 1..self.reactions.len() {
            let u = self.outcome_utility(t, s, r);
            if u > best_u {
                best = r;
                best_u = u;
            }
        }
        best
    }

    /// The reaction the mechanism allows: the optimum for the declared type.
    pub fn restricted_reaction(&self, declared_type: usize, s: usize) -> usize {
        self.optimal_reaction(declared_type, s)
    }

    /// Largest g' such that for every pair of distinct types some alternative
    /// separates their optimal reactions by at least g'. Errors with a
    /// witness pair when no alternative separates some pair.
    pub fn verify_gap(&self) -> Result<f64> {
        let mut overall = f64::INFINITY;
        for a in 0..self.types.len() {
            for b in 0..self.types.len() {
                if a == b {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for s in 0..self.alternatives.len() {
                    let ra = self.optimal_reaction(a, s);
                    let rb = self.optimal_reaction(b, s);
                    if ra == rb {
                        continue;
                    }
                    let d = self.outcome_utility(a, s, ra) - self.outcome_utility(a, s, rb);
                    if d > best {
                        best = d;
                    }
                }
                if !(best > 0.0) {
                    return Err(Error::GapViolation { a, b });
                }
                if best < overall {
                    overall = best;
                }
            }
        }
        Ok(overall)
    }
}

impl std::fmt::Debug for GameInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameInstance")
            .field("types", &self.types.len())
            .field("alternatives", &self.alternatives.len())
            .field("reactions", &self.reactions)
            .field("gap", &self.gap)
            .finish_non_exhaustive()
    }
}

/// The adversarial upper bound on information utility: `v * epsilon`.
pub fn info_utility_bound(v: f64, epsilon: f64) -> f64 {
    v * epsilon
}

/// Expected outcome utility when the mechanism restricts reactions to the
/// declared type's optimum: `sum_s Pr[s] * u(t, s, r(t', s))`.
pub fn expected_outcome_utility(
    game: &GameInstance,
    dist: &DiscreteDistribution,
    true_type: usize,
    declared_type: usize,
) -> f64 {
    (0..game.alternatives.len())
        .map(|s| {
            dist.prob(s)
                * game.outcome_utility(true_type, s, game.restricted_reaction(declared_type, s))
        })
        .sum()
}

/// Worst case over opponents for one (agent, true type, deviation) cell.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceCell {
    pub agent: usize,
    pub true_type: usize,
    pub deviation: usize,
    /// Max over opponent declarations of the expected outcome gain in the
    /// exponential arm.
    pub m1_out_gain: f64,
    /// Expected outcome loss in the uniform arm (independent of opponents).
    pub m2_out_loss: f64,
    pub info_gain_bound: f64,
    /// `(1 - delta) * m1_out_gain + v * epsilon - delta * m2_out_loss`.
    pub net_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    /// The sufficient condition `(v_max + 4) * epsilon <= delta * g / |S|`.
    pub condition_holds: bool,
    pub all_dominant: bool,
    pub max_m1_out_gain: f64,
    pub min_m2_out_loss: f64,
    pub max_net_bound: f64,
    pub cells: Vec<DominanceCell>,
}

/// Exhaustive dominance audit: every agent with `v_i <= v_max`, every true
/// type, every deviation, against every opponent declaration vector.
pub fn dominance_audit(
    game: &GameInstance,
    params: &MechanismParams,
    valuations: &[f64],
    guard: u128,
) -> Result<DominanceReport> {
    params.validate()?;
    let n = valuations.len();
    let f = &game.objective;
    if f.n() != n {
        return Err(Error::InvalidParameter(format!(
            "objective expects {} agents, got {} valuations",
            f.n(),
            n
        )));
    }
    let num_types = game.types.len();
    let num_s = game.alternatives.len();
    let count = vector_count(num_types, n).ok_or(Error::InstanceTooLarge {
        size: u128::MAX,
        guard,
    })?;
    if count > guard {
        return Err(Error::InstanceTooLarge { size: count, guard });
    }

    let scale = params.epsilon / (2.0 * f.declared_sensitivity());
    let uniform = uniform_distribution(num_s);

    let mut cells = Vec::new();
    let mut max_m1 = f64::NEG_INFINITY;
    let mut min_m2 = f64::INFINITY;
    let mut max_net = f64::NEG_INFINITY;
    let mut all_dominant = true;

    for (agent, &v) in valuations.iter().enumerate() {
        if v > params.v_max {
            continue;
        }
        for true_type in 0..num_types {
            for deviation in 0..num_types {
                if deviation == true_type {
                    continue;
                }
                // Uniform arm: opponents are irrelevant, only the reaction
                // restriction bites.
                let m2_out_loss = expected_outcome_utility(game, &uniform, true_type, true_type)
                    - expected_outcome_utility(game, &uniform, true_type, deviation);

                // Exponential arm: worst case over all opponent declarations.
                let mut m1_out_gain = f64::NEG_INFINITY;
                for others in type_vectors(num_types, n - 1) {
                    let mut declared: Vec<usize> = others.clone();
                    declared.insert(agent, deviation);
                    let d_dev = exponential_distribution(f, scale, &declared);
                    declared[agent] = true_type;
                    let d_true = exponential_distribution(f, scale, &declared);
                    let gain = expected_outcome_utility(game, &d_dev, true_type, deviation)
                        - expected_outcome_utility(game, &d_true, true_type, true_type);
                    if gain > m1_out_gain {
                        m1_out_gain = gain;
                    }
                }

                let info_gain_bound = info_utility_bound(v, params.epsilon);
                let net_bound = (1.0 - params.delta) * m1_out_gain + info_gain_bound
                    - params.delta * m2_out_loss;

                max_m1 = max_m1.max(m1_out_gain);
                min_m2 = min_m2.min(m2_out_loss);
                max_net = max_net.max(net_bound);
                if net_bound > 0.0 {
                    all_dominant = false;
                }
                cells.push(DominanceCell {
                    agent,
                    true_type,
                    deviation,
                    m1_out_gain,
                    m2_out_loss,
                    info_gain_bound,
                    net_bound,
                });
            }
        }
    }

    let condition_holds = (params.v_max + 4.0) * params.epsilon
        <= params.delta * game.gap / num_s as f64 + 1e-12;
    Ok(DominanceReport {
        condition_holds,
        all_dominant,
        max_m1_out_gain: max_m1,
        min_m2_out_loss: min_m2,
        max_net_bound: max_net,
        cells,
    })
}

/// How the accuracy audit evaluates the expected objective.
#[derive(Debug, Clone, Copy)]
pub enum AccuracyMode {
    /// Exhaust all adversarial declarations of non-participants; guard caps
    /// the enumeration.
    Exact { guard: u128 },
    /// Non-participants declare the opt-out type; the expectation is
    /// estimated from seeded samples with a 99% confidence interval.
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub opt: f64,
    pub expected_f: f64,
    /// `opt - sensitivity * (delta n + 2 n^alpha + 2 ln(n|S|) / epsilon)`.
    pub bound: f64,
    pub ci_halfwidth: f64,
    pub n_np: usize,
    pub ok: bool,
}

/// Accuracy audit against the closed-form bound. Participants declare
/// truthfully; non-participant declarations are adversarial on the exact
/// path and the opt-out type on the Monte Carlo path.
pub fn accuracy_audit<R: Rng + ?Sized>(
    game: &GameInstance,
    params: &MechanismParams,
    true_types: &[usize],
    valuations: &[f64],
    mode: AccuracyMode,
    rng: &mut R,
) -> Result<AccuracyReport> {
    params.validate()?;
    let f = &game.objective;
    let n = true_types.len();
    if valuations.len() != n || f.n() != n {
        return Err(Error::InvalidParameter("length mismatch".into()));
    }
    let num_s = game.alternatives.len();
    let (_, opt) = f.opt_value(true_types);
    let nonparticipants: Vec<usize> = valuations
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > params.v_max)
        .map(|(i, _)| i)
        .collect();
    let n_np = nonparticipants.len();
    let bound = opt
        - f.declared_sensitivity()
            * (params.delta * n as f64
                + 2.0 * (n as f64).powf(params.alpha)
                + 2.0 * ((n as f64) * num_s as f64).ln() / params.epsilon);

    let scale = params.epsilon / (2.0 * f.declared_sensitivity());
    let uniform = uniform_distribution(num_s);
    let expected_for = |declared: &[usize]| -> f64 {
        let mixed = exponential_distribution(f, scale, declared)
            .mix(&uniform, params.delta)
            .expect("same support");
        (0..num_s).map(|s| mixed.prob(s) * f.value(true_types, s)).sum()
    };

    match mode {
        AccuracyMode::Exact { guard } => {
            let cases = vector_count(game.types.len(), n_np).ok_or(Error::InstanceTooLarge {
                size: u128::MAX,
                guard,
            })?;
            if cases > guard {
                return Err(Error::InstanceTooLarge { size: cases, guard });
            }
            let mut worst = f64::INFINITY;
            let mut declared = true_types.to_vec();
            if n_np == 0 {
                worst = expected_for(&declared);
            } else {
                for assignment in type_vectors(game.types.len(), n_np) {
                    for (k, &i) in nonparticipants.iter().enumerate() {
                        declared[i] = assignment[k];
                    }
                    worst = worst.min(expected_for(&declared));
                }
            }
            Ok(AccuracyReport {
                opt,
                expected_f: worst,
                bound,
                ci_halfwidth: 0.0,
                n_np,
                ok: worst >= bound - 1e-9,
            })
        }
        AccuracyMode::MonteCarlo { trials } => {
            if trials == 0 {
                return Err(Error::InvalidParameter("trials must be >= 1".into()));
            }
            let mut declared = true_types.to_vec();
            for &i in &nonparticipants {
                declared[i] = 0; // opt-out type
            }
            let mixed = exponential_distribution(f, scale, &declared)
                .mix(&uniform, params.delta)
                .expect("same support");
            // f(t, s) is a function of the sampled alternative only.
            let payoff: Vec<f64> = (0..num_s).map(|s| f.value(true_types, s)).collect();
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..trials {
                let x = payoff[mixed.sample(rng)];
                sum += x;
                sum_sq += x * x;
            }
            let mean = sum / trials as f64;
            let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
            // 99% normal interval.
            let ci = 2.5758293035489004 * (var / trials as f64).sqrt();
            Ok(AccuracyReport {
                opt,
                expected_f: mean,
                bound,
                ci_halfwidth: ci,
                n_np,
                ok: mean >= bound - ci - 1e-9,
            })
        }
    }
}

/// Closed-form parameter setting and its feasibility.
#[derive(Debug, Clone, Serialize)]
pub struct SolvedParams {
    pub epsilon: f64,
    pub delta: f64,
    pub v_max: f64,
    pub alpha: f64,
    /// `sensitivity * (delta n + 2 n^alpha + 2 ln(n|S|) / epsilon)`.
    pub error_bound: f64,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    /// `delta <= 1` and the dominance condition holds. Infeasible parameters
    /// are returned as-is, never clamped.
    pub feasible: bool,
}

impl SolvedParams {
    pub fn mechanism_params(&self, gap: f64) -> MechanismParams {
        MechanismParams {
            epsilon: self.epsilon,
            delta: self.delta,
            v_max: self.v_max,
            alpha: self.alpha,
            gap,
        }
    }
}

/// Evaluate the closed-form epsilon/delta/v_max for a population of `n`
/// agents with an `(alpha, 1-alpha)`-admissible valuation distribution.
/// All logarithms are natural.
pub fn solve_parameters(
    n: u64,
    alpha: f64,
    gap: f64,
    num_alternatives: usize,
    sensitivity: f64,
) -> Result<SolvedParams> {
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 agents".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0,1)".into()));
    }
    if !(gap > 0.0) || !(sensitivity > 0.0) || num_alternatives == 0 {
        return Err(Error::InvalidParameter("gap, sensitivity, |S| must be positive".into()));
    }
    let nf = n as f64;
    let s = num_alternatives as f64;
    let log_ns = (nf * s).ln();
    let epsilon = nf.powf(-(1.0 + alpha) / 2.0) * (gap * log_ns / s).sqrt();
    let delta = 2.0 * nf.powf((alpha - 1.0) / 2.0) * (s * log_ns / gap).sqrt();
    let v_max = nf.powf(alpha);
    let error_bound =
        sensitivity * (delta * nf + 2.0 * nf.powf(alpha) + 2.0 * log_ns / epsilon);
    let condition_lhs = (v_max + 4.0) * epsilon;
    let condition_rhs = delta * gap / s;
    Ok(SolvedParams {
        epsilon,
        delta,
        v_max,
        alpha,
        error_bound,
        condition_lhs,
        condition_rhs,
        feasible: delta <= 1.0 && condition_lhs <= condition_rhs,
    })
}
