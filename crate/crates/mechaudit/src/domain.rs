//! Finite type spaces, alternative sets, objective functions and neighbor
//! enumeration. Everything here is immutable after construction and safe to
//! share across audit workers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ordered finite set of game types. Types are opaque labels addressed by
/// index; numeric interpretations (e.g. grid valuations `i/q`) are kept by the
/// instance that built the space, so equality and ordering never go through
/// floats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSpace {
    labels: Vec<String>,
}

impl TypeSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        check_labels(&labels, "type space")?;
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Ordered finite set of social alternatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativeSet {
    labels: Vec<String>,
}

impl AlternativeSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        check_labels(&labels, "alternative set")?;
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn check_labels(labels: &[String], what: &str) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} must be non-empty")));
    }
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            if a == b {
                return Err(Error::InvalidParameter(format!(
                    "{what} has duplicate label {a:?}"
                )));
            }
        }
    }
    Ok(())
}

/// An agent's declared game type: a real element of the type space or the
/// designated opt-out symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Declaration {
    Type(usize),
    OptOut,
}

/// Per-agent declarations fed to the generic mechanism. The opt-out symbol is
/// resolved to a concrete element of the type space (by default the first one)
/// before any distribution is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredInput {
    pub entries: Vec<Declaration>,
}

impl DeclaredInput {
    pub fn from_types(types: &[usize]) -> Self {
        Self {
            entries: types.iter().map(|&t| Declaration::Type(t)).collect(),
        }
    }

    /// Map `OptOut` to the concrete opt-out type.
    pub fn resolve(&self, opt_out_type: usize) -> Vec<usize> {
        self.entries
            .iter()
            .map(|d| match d {
                Declaration::Type(t) => *t,
                Declaration::OptOut => opt_out_type,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A reporting strategy: what an agent declares as a function of its true
/// game type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Truthful,
    Constant(Declaration),
    Map(Vec<Declaration>),
}

impl Strategy {
    pub fn apply(&self, true_type: usize) -> Declaration {
        match self {
            Strategy::Truthful => Declaration::Type(true_type),
            Strategy::Constant(d) => *d,
            Strategy::Map(m) => m[true_type],
        }
    }
}

/// Combined agent type: game type index plus privacy valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub game_type: usize,
    pub privacy_valuation: f64,
}

impl AgentProfile {
    pub fn new(game_type: usize, privacy_valuation: f64) -> Result<Self> {
        if privacy_valuation < 0.0 {
            return Err(Error::InvalidParameter(
                "privacy valuation must be non-negative".into(),
            ));
        }
        Ok(Self {
            game_type,
            privacy_valuation,
        })
    }
}

type Eval = Arc<dyn Fn(&[usize], usize) -> f64 + Send + Sync>;

/// The designer's objective `f(t, s)` over type vectors and alternatives,
/// with a declared sensitivity bound.
///
/// Small objectives are stored as dense tables so audits can enumerate them;
/// large ones are backed by an evaluator callback.
#[derive(Clone)]
pub struct ObjectiveFunction {
    n: usize,
    num_types: usize,
    num_alternatives: usize,
    declared_sensitivity: f64,
    eval: Eval,
}

/// Result of measuring sensitivity by exhaustive neighbor enumeration.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCheck {
    pub measured: f64,
    pub declared: f64,
    /// Measured sensitivity does not exceed the declared bound.
    pub within_declared: bool,
}

impl ObjectiveFunction {
    pub fn new<F>(
        n: usize,
        num_types: usize,
        num_alternatives: usize,
        declared_sensitivity: f64,
        eval: F,
    ) -> Result<Self>
    where
        F: Fn(&[usize], usize) -> f64 + Send + Sync + 'static,
    {
        if n == 0 || num_types == 0 || num_alternatives == 0 {
            return Err(Error::InvalidParameter(
                "objective dimensions must be positive".into(),
            ));
        }
        if !(declared_sensitivity > 0.0) {
            return Err(Error::InvalidParameter(
                "declared sensitivity must be positive".into(),
            ));
        }
        Ok(Self {
            n,
            num_types,
            num_alternatives,
            declared_sensitivity,
            eval: Arc::new(eval),
        })
    }

    /// Dense-table constructor; the table is indexed by
    /// `rank(t) * num_alternatives + s` with `rank` little-endian in `t`.
    pub fn from_table(
        n: usize,
        num_types: usize,
        num_alternatives: usize,
        declared_sensitivity: f64,
        table: Vec<f64>,
    ) -> Result<Self> {
        let expected = vector_count(num_types, n)
            .ok_or_else(|| Error::InvalidParameter("type space too large for table".into()))?
            .checked_mul(num_alternatives as u128)
            .ok_or_else(|| Error::InvalidParameter("type space too large for table".into()))?;
        if table.len() as u128 != expected {
            return Err(Error::InvalidParameter(format!(
                "table has {} entries, expected {}",
                table.len(),
                expected
            )));
        }
        let table = Arc::new(table);
        let m = num_alternatives;
        Self::new(n, num_types, num_alternatives, declared_sensitivity, {
            let table = Arc::clone(&table);
            move |t: &[usize], s: usize| table[vector_rank(t, num_types) * m + s]
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_alternatives(&self) -> usize {
        self.num_alternatives
    }

    pub fn declared_sensitivity(&self) -> f64 {
        self.declared_sensitivity
    }

    pub fn value(&self, t: &[usize], s: usize) -> f64 {
        debug_assert_eq!(t.len(), self.n);
        (self.eval)(t, s)
    }

    /// Measure `max |f(t,s) - f(t',s)|` over all neighboring pairs and all
    /// alternatives by exhaustive enumeration.
    pub fn verify_sensitivity(&self, guard: u128) -> Result<SensitivityCheck> {
        let count = vector_count(self.num_types, self.n)
            .ok_or(Error::InstanceTooLarge {
                size: u128::MAX,
                guard,
            })?;
        if count > guard {
            return Err(Error::InstanceTooLarge { size: count, guard });
        }
        let mut measured = 0.0_f64;
        for t in type_vectors(self.num_types, self.n) {
            for s in 0..self.num_alternatives {
                let base = self.value(&t, s);
                for t2 in neighbors(&t, self.num_types) {
                    let d = (base - self.value(&t2, s)).abs();
                    if d > measured {
                        measured = d;
                    }
                }
            }
        }
        Ok(SensitivityCheck {
            measured,
            declared: self.declared_sensitivity,
            within_declared: measured <= self.declared_sensitivity + 1e-9,
        })
    }

    /// Best alternative and its value; ties break to the first alternative in
    /// the declared ordering.
    pub fn opt_value(&self, t: &[usize]) -> (usize, f64) {
        let mut best = 0;
        let mut best_val = self.value(t, 0);
        for s in 1..self.num_alternatives {
            let v = self.value(t, s);
            if v > best_val {
                best = s;
                best_val = v;
            }
        }
        (best, best_val)
    }
}

impl std::fmt::Debug for ObjectiveFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveFunction")
            .field("n", &self.n)
            .field("num_types", &self.num_types)
            .field("num_alternatives", &self.num_alternatives)
            .field("declared_sensitivity", &self.declared_sensitivity)
            .finish_non_exhaustive()
    }
}

/// `alphabet^n` as u128, or `None` on overflow.
pub fn vector_count(alphabet: usize, n: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.checked_mul(alphabet as u128)?;
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc)
}

/// Little-endian mixed-radix rank of a type vector.
pub fn vector_rank(t: &[usize], alphabet: usize) -> usize {
    let mut rank = 0usize;
    for &x in t.iter().rev() {
        rank = rank * alphabet + x;
    }
    rank
}

/// Inverse of [`vector_rank`].
pub fn vector_unrank(mut rank: usize, alphabet: usize, n: usize) -> Vec<usize> {
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        t.push(rank % alphabet);
        rank /= alphabet;
    }
    t
}

/// All vectors in `{0..alphabet}^n` in rank order.
pub fn type_vectors(alphabet: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    let count = vector_count(alphabet, n)
        .and_then(|c| usize::try_from(c).ok())
        .expect("type_vectors called on an instance beyond enumeration range");
    (0..count).map(move |r| vector_unrank(r, alphabet, n))
}

/// All vectors at Hamming distance exactly one from `t`.
pub fn neighbors<'a>(t: &'a [usize], alphabet: usize) -> impl Iterator<Item = Vec<usize>> + 'a {
    (0..t.len()).flat_map(move |i| {
        (0..alphabet).filter(move |&x| x != t[i]).map(move |x| {
            let mut u = t.to_vec();
            u[i] = x;
            u
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poll_counting(n: usize, m: usize) -> ObjectiveFunction {
        ObjectiveFunction::new(n, m, m, 1.0, |t, s| {
            t.iter().filter(|&&x| x == s).count() as f64
        })
        .unwrap()
    }

    #[test]
    fn poll_counting_sensitivity_is_one() {
        let f = poll_counting(3, 2);
        let check = f.verify_sensitivity(1_000_000).unwrap();
        assert_eq!(check.measured, 1.0);
        assert!(check.within_declared);
    }

    #[test]
    fn constant_objective_sensitivity_is_zero() {
        let f = ObjectiveFunction::new(2, 2, 2, 1.0, |_, _| 0.0).unwrap();
        let check = f.verify_sensitivity(1_000_000).unwrap();
        assert_eq!(check.measured, 0.0);
    }

    #[test]
    fn digital_goods_sensitivity_is_one() {
        // f(t, p) = p * |{i : t_i >= p}| on the q=2 grid; types {0, 1/2, 1},
        // prices {1/2, 1}.
        let q = 2usize;
        let f = ObjectiveFunction::new(2, q + 1, q, 1.0, move |t, p| {
            let price = (p + 1) as f64 / q as f64;
            price * t.iter().filter(|&&ti| ti > p).count() as f64
        })
        .unwrap();
        // Independent oracle: brute force over all neighboring pairs and prices.
        let mut max = 0.0f64;
        for t in type_vectors(q + 1, 2) {
            for p in 0..q {
                for t2 in neighbors(&t, q + 1) {
                    max = max.max((f.value(&t, p) - f.value(&t2, p)).abs());
                }
            }
        }
        assert_eq!(max, 1.0);
        assert_eq!(f.verify_sensitivity(1_000_000).unwrap().measured, 1.0);
    }

    #[test]
    fn sensitivity_guard_rejects_large_instances() {
        let f = ObjectiveFunction::new(30, 10, 2, 1.0, |_, _| 0.0).unwrap();
        assert!(matches!(
            f.verify_sensitivity(1_000_000),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn opt_value_digital_goods() {
        // t = (1, 1, 0.5) on the q=2 grid: revenue 1.5 at p=1/2, 2.0 at p=1.
        let q = 2usize;
        let f = ObjectiveFunction::new(3, q + 1, q, 1.0, move |t, p| {
            let price = (p + 1) as f64 / q as f64;
            price * t.iter().filter(|&&ti| ti > p).count() as f64
        })
        .unwrap();
        let (s, v) = f.opt_value(&[2, 2, 1]);
        assert_eq!(s, 1);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn opt_value_ties_break_to_first() {
        let f = ObjectiveFunction::new(1, 2, 3, 1.0, |_, _| 7.0).unwrap();
        let (s, v) = f.opt_value(&[0]);
        assert_eq!(s, 0);
        assert_eq!(v, 7.0);
    }

    #[test]
    fn opt_value_poll_counts() {
        let f = poll_counting(3, 2);
        // t = (1, 1, 2) as 0-based (0, 0, 1): counts (2, 1).
        let (s, v) = f.opt_value(&[0, 0, 1]);
        assert_eq!(s, 0);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn neighbor_counts() {
        assert_eq!(neighbors(&[0], 2).collect::<Vec<_>>(), vec![vec![1]]);
        let two = neighbors(&[0, 0], 2).collect::<Vec<_>>();
        assert_eq!(two, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(neighbors(&[0, 1, 2], 3).count(), 6);
    }

    #[test]
    fn neighbors_symmetric() {
        for t in type_vectors(3, 3) {
            for u in neighbors(&t, 3) {
                assert!(neighbors(&u, 3).any(|w| w == t));
            }
        }
    }

    #[test]
    fn rank_roundtrip() {
        for t in type_vectors(3, 4) {
            assert_eq!(vector_unrank(vector_rank(&t, 3), 3, 4), t);
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(TypeSpace::new(vec!["a".into(), "a".into()]).is_err());
        assert!(AlternativeSet::new(vec![]).is_err());
    }

    #[test]
    fn declared_input_resolution() {
        let d = DeclaredInput {
            entries: vec![Declaration::Type(2), Declaration::OptOut],
        };
        assert_eq!(d.resolve(0), vec![2, 0]);
    }
}
