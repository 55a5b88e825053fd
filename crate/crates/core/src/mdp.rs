//! Finite labeled MDPs with a factored (expensive × free) state space.
//!
//! A full state index `x` decomposes as `x = expensive * n_free + free`.
//! Transition rows are stored as sparse `(successor, probability)` lists,
//! one row per `(state, action)` pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Absolute tolerance on row sums and distribution mass.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest row-sum defect that `renormalize` is allowed to repair.
pub const RENORMALIZE_LIMIT: f64 = 1e-9;

/// Maximum number of atomic propositions; letters are bitsets over `u32`.
pub const MAX_ATOMIC_PROPS: usize = 16;

/// A set of atomic propositions, encoded as a bitset over the proposition list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Letter(pub u32);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn contains(self, prop: usize) -> bool {
        self.0 & (1 << prop) != 0
    }

    pub fn with(self, prop: usize) -> Letter {
        Letter(self.0 | (1 << prop))
    }
}

/// Ordered expensive and free component names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    expensive: Vec<String>,
    free: Vec<String>,
}

impl StateSpace {
    pub fn new(expensive: Vec<String>, free: Vec<String>) -> Result<Self, Error> {
        for (what, names) in [("expensive", &expensive), ("free", &free)] {
            if names.is_empty() {
                return Err(Error::Model(format!("{what} state set is empty")));
            }
            let mut seen = std::collections::HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    return Err(Error::Model(format!("duplicate {what} state `{n}`")));
                }
            }
        }
        Ok(Self { expensive, free })
    }

    pub fn n_expensive(&self) -> usize {
        self.expensive.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn len(&self) -> usize {
        self.expensive.len() * self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn compose(&self, expensive: usize, free: usize) -> usize {
        debug_assert!(expensive < self.n_expensive() && free < self.n_free());
        expensive * self.free.len() + free
    }

    pub fn decompose(&self, state: usize) -> (usize, usize) {
        (state / self.free.len(), state % self.free.len())
    }

    pub fn expensive_names(&self) -> &[String] {
        &self.expensive
    }

    pub fn free_names(&self) -> &[String] {
        &self.free
    }

    /// `"<expensive>,<free>"`.
    pub fn state_name(&self, state: usize) -> String {
        let (e, f) = self.decompose(state);
        format!("{},{}", self.expensive[e], self.free[f])
    }

    pub fn find(&self, expensive: &str, free: &str) -> Option<usize> {
        let e = self.expensive.iter().position(|n| n == expensive)?;
        let f = self.free.iter().position(|n| n == free)?;
        Some(self.compose(e, f))
    }
}

/// One sparse transition row.
pub type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledMdp {
    states: StateSpace,
    actions: Vec<String>,
    atomic_props: Vec<String>,
    /// `rows[x * n_actions + u]`
    rows: Vec<Row>,
    labels: Vec<Letter>,
}

/// A single invariant failure reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { state: String, action: String, sum: f64 },
    Negative { state: String, action: String, successor: String, value: f64 },
    SuccessorOutOfRange { state: String, action: String, successor: usize },
    MissingLabel { state: usize },
    UnknownProp { state: String, bits: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "row ({state}, {action}) sums to {sum:.17}, expected 1")
            }
            Violation::Negative { state, action, successor, value } => write!(
                f,
                "row ({state}, {action}) has negative entry {value} for successor {successor}"
            ),
            Violation::SuccessorOutOfRange { state, action, successor } => {
                write!(f, "row ({state}, {action}) names successor index {successor} out of range")
            }
            Violation::MissingLabel { state } => write!(f, "state index {state} has no label"),
            Violation::UnknownProp { state, bits } => {
                write!(f, "label of {state} uses unknown proposition bits {bits:#b}")
            }
        }
    }
}

impl LabeledMdp {
    /// Builds an MDP without checking stochasticity; call [`validate`] or
    /// use [`LabeledMdp::checked`] for that.
    pub fn from_rows(
        states: StateSpace,
        actions: Vec<String>,
        atomic_props: Vec<String>,
        rows: Vec<Row>,
        labels: Vec<Letter>,
    ) -> Result<Self, Error> {
        if actions.is_empty() {
            return Err(Error::Model("action set is empty".into()));
        }
        if atomic_props.len() > MAX_ATOMIC_PROPS {
            return Err(Error::Model(format!(
                "{} atomic propositions exceed the limit of {MAX_ATOMIC_PROPS}",
                atomic_props.len()
            )));
        }
        let n = states.len();
        if rows.len() != n * actions.len() {
            return Err(Error::Dimension(format!(
                "expected {} transition rows, got {}",
                n * actions.len(),
                rows.len()
            )));
        }
        Ok(Self { states, actions, atomic_props, rows, labels })
    }

    /// Builds and validates; any violation is an error.
    pub fn checked(
        states: StateSpace,
        actions: Vec<String>,
        atomic_props: Vec<String>,
        rows: Vec<Row>,
        labels: Vec<Letter>,
    ) -> Result<Self, Error> {
        let mdp = Self::from_rows(states, actions, atomic_props, rows, labels)?;
        let violations = validate(&mdp);
        if let Some(v) = violations.first() {
            return Err(Error::Model(v.to_string()));
        }
        Ok(mdp)
    }

    /// Builds from a dense `[x][u][x']` kernel, dropping zero entries.
    pub fn from_dense(
        states: StateSpace,
        actions: Vec<String>,
        atomic_props: Vec<String>,
        kernel: &[Vec<Vec<f64>>],
        labels: Vec<Letter>,
    ) -> Result<Self, Error> {
        let n = states.len();
        if kernel.len() != n {
            return Err(Error::Dimension(format!("kernel has {} states, expected {n}", kernel.len())));
        }
        let mut rows = Vec::with_capacity(n * actions.len());
        for (x, per_action) in kernel.iter().enumerate() {
            if per_action.len() != actions.len() {
                return Err(Error::Dimension(format!(
                    "kernel state {} has {} actions, expected {}",
                    states.state_name(x),
                    per_action.len(),
                    actions.len()
                )));
            }
            for (u, dense) in per_action.iter().enumerate() {
                if dense.len() != n {
                    return Err(Error::Dimension(format!(
                        "kernel row ({}, {}) has {} entries, expected {n}",
                        states.state_name(x),
                        actions[u],
                        dense.len()
                    )));
                }
                rows.push(
                    dense
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .map(|(y, p)| (y, *p))
                        .collect(),
                );
            }
        }
        Self::from_rows(states, actions, atomic_props, rows, labels)
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn atomic_props(&self) -> &[String] {
        &self.atomic_props
    }

    pub fn row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.rows[state * self.actions.len() + action]
    }

    pub fn label(&self, state: usize) -> Letter {
        self.labels[state]
    }

    pub fn prop_index(&self, name: &str) -> Option<usize> {
        self.atomic_props.iter().position(|p| p == name)
    }

    /// Dense probability `p(next | state, action)`; linear in the row length.
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.row(state, action).iter().filter(|(y, _)| *y == next).map(|(_, p)| p).sum()
    }

    /// Rescales rows whose sum is off by at most [`RENORMALIZE_LIMIT`].
    /// Returns the number of rows touched; larger defects are left for
    /// [`validate`] to report.
    pub fn renormalize(&mut self) -> usize {
        let mut touched = 0;
        for row in &mut self.rows {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            let defect = (sum - 1.0).abs();
            if defect > 0.0 && defect <= RENORMALIZE_LIMIT && row.iter().all(|(_, p)| *p >= 0.0) {
                for (_, p) in row.iter_mut() {
                    *p /= sum;
                }
                touched += 1;
            }
        }
        touched
    }
}

/// Lists every invariant violation; empty iff the MDP is well formed.
pub fn validate(mdp: &LabeledMdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = mdp.n_states();
    let names = |x: usize| mdp.states.state_name(x);
    for x in 0..n {
        for u in 0..mdp.n_actions() {
            let row = mdp.row(x, u);
            let mut sum = 0.0;
            for &(y, p) in row {
                if y >= n {
                    out.push(Violation::SuccessorOutOfRange {
                        state: names(x),
                        action: mdp.actions[u].clone(),
                        successor: y,
                    });
                    continue;
                }
                if p < 0.0 {
                    out.push(Violation::Negative {
                        state: names(x),
                        action: mdp.actions[u].clone(),
                        successor: names(y),
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(Violation::RowSum { state: names(x), action: mdp.actions[u].clone(), sum });
            }
        }
    }
    let known = if mdp.atomic_props.len() >= 32 { u32::MAX } else { (1u32 << mdp.atomic_props.len()) - 1 };
    for x in 0..n {
        match mdp.labels.get(x) {
            None => out.push(Violation::MissingLabel { state: x }),
            Some(l) if l.0 & !known != 0 => {
                out.push(Violation::UnknownProp { state: names(x), bits: l.0 & !known })
            }
            Some(_) => {}
        }
    }
    out
}

/// Probability mass over an index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(mass: Vec<f64>) -> Result<Self, Error> {
        if mass.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Model("distribution has a negative or NaN entry".into()));
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL && sum != 0.0 {
            return Err(Error::Model(format!("distribution mass {sum} is neither 1 nor 0")));
        }
        Ok(Self(mass))
    }

    pub fn point(len: usize, at: usize) -> Self {
        let mut mass = vec![0.0; len];
        mass[at] = 1.0;
        Self(mass)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    /// The all-zero distribution used for unreachable contexts.
    pub fn null(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn is_null(&self) -> bool {
        self.0.iter().all(|p| *p == 0.0)
    }

    pub fn mass(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// One step of the Markov chain induced by a memoryless policy slice:
/// `d'(y) = Σ_{x,u} d(x) π(u|x) p(y|x,u)`.
pub fn step_distribution(
    mdp: &LabeledMdp,
    d: &Distribution,
    policy_slice: &[Distribution],
) -> Result<Distribution, Error> {
    let n = mdp.n_states();
    if d.len() != n {
        return Err(Error::Dimension(format!("distribution over {} states, MDP has {n}", d.len())));
    }
    if policy_slice.len() != n {
        return Err(Error::Dimension(format!("policy slice has {} rows, MDP has {n} states", policy_slice.len())));
    }
    let mut next = vec![0.0; n];
    for (x, &px) in d.mass().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let pi = &policy_slice[x];
        if pi.len() != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "policy row for {} has {} actions, MDP has {}",
                mdp.states.state_name(x),
                pi.len(),
                mdp.n_actions()
            )));
        }
        for (u, &pu) in pi.mass().iter().enumerate() {
            let w = px * pu;
            if w == 0.0 {
                continue;
            }
            for &(y, p) in mdp.row(x, u) {
                next[y] += w * p;
            }
        }
    }
    Ok(Distribution(next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn chain(kernel: Vec<Vec<Vec<f64>>>) -> LabeledMdp {
        let n = kernel.len();
        let nu = kernel[0].len();
        LabeledMdp::from_dense(
            StateSpace::new(names("e", 1), names("f", n)).unwrap(),
            names("a", nu),
            vec![],
            &kernel,
            vec![Letter::EMPTY; n],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_chain_validates() {
        let mdp = chain(vec![vec![vec![0.5, 0.5]], vec![vec![0.0, 1.0]]]);
        assert!(validate(&mdp).is_empty());
    }

    #[test]
    fn mass_deficit_is_reported_once() {
        let mdp = chain(vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]]);
        let v = validate(&mdp);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum { state, action, .. } => {
                assert_eq!(state, "e0,f0");
                assert_eq!(action, "a0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_entry_is_reported() {
        let mdp = chain(vec![vec![vec![1.1, -0.1]], vec![vec![0.0, 1.0]]]);
        let v = validate(&mdp);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Negative { value, .. } if value == -0.1));
    }

    #[test]
    fn renormalize_only_repairs_small_defects() {
        let mut mdp = chain(vec![vec![vec![0.5, 0.5 - 5e-10]], vec![vec![0.0, 0.9]]]);
        assert_eq!(mdp.renormalize(), 1);
        let v = validate(&mdp);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("e0,f1"));
    }

    #[test]
    fn factorization_round_trips() {
        let s = StateSpace::new(names("e", 3), names("f", 4)).unwrap();
        for x in 0..s.len() {
            let (e, f) = s.decompose(x);
            assert_eq!(s.compose(e, f), x);
        }
        assert_eq!(s.find("e2", "f1"), Some(9));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(StateSpace::new(vec!["a".into(), "a".into()], names("f", 1)).is_err());
        assert!(StateSpace::new(vec![], names("f", 1)).is_err());
    }

    #[test]
    fn point_mass_moves_deterministically() {
        let mdp = chain(vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]]);
        let d = Distribution::point(2, 0);
        let pi = vec![Distribution::point(1, 0); 2];
        let next = step_distribution(&mdp, &d, &pi).unwrap();
        assert_eq!(next.mass(), &[0.0, 1.0]);
    }

    #[test]
    fn identity_dynamics_fix_uniform() {
        let mdp = chain(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]);
        let d = Distribution::uniform(2);
        let pi = vec![Distribution::point(1, 0); 2];
        assert_eq!(step_distribution(&mdp, &d, &pi).unwrap(), d);
    }

    #[test]
    fn step_matches_enumeration_on_three_states() {
        let kernel = vec![
            vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.0, 0.4]],
            vec![vec![0.1, 0.1, 0.8], vec![0.0, 1.0, 0.0]],
            vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.25, 0.25]],
        ];
        let mdp = chain(kernel.clone());
        let d = [0.5, 0.2, 0.3];
        let pi = [[0.7, 0.3], [0.4, 0.6], [0.1, 0.9]];
        let mut expected = [0.0; 3];
        for x in 0..3 {
            for u in 0..2 {
                for y in 0..3 {
                    expected[y] += d[x] * pi[x][u] * kernel[x][u][y];
                }
            }
        }
        let got = step_distribution(
            &mdp,
            &Distribution::new(d.to_vec()).unwrap(),
            &pi.iter().map(|r| Distribution::new(r.to_vec()).unwrap()).collect::<Vec<_>>(),
        )
        .unwrap();
        for y in 0..3 {
            assert!((got.mass()[y] - expected[y]).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mdp = chain(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]);
        let pi = vec![Distribution::point(1, 0); 2];
        assert!(step_distribution(&mdp, &Distribution::uniform(3), &pi).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kernel_strategy() -> impl Strategy<Value = (Vec<Vec<Vec<f64>>>, Vec<f64>, Vec<Vec<f64>>)> {
            (1usize..6, 1usize..4).prop_flat_map(|(n, nu)| {
                let row = prop::collection::vec(0.0f64..1.0, n);
                (
                    prop::collection::vec(prop::collection::vec(row, nu), n),
                    prop::collection::vec(0.0f64..1.0, n),
                    prop::collection::vec(prop::collection::vec(0.0f64..1.0, nu), n),
                )
            })
        }

        fn normalize(v: &mut [f64]) {
            let s: f64 = v.iter().sum();
            if s == 0.0 {
                let k = v.len() as f64;
                v.iter_mut().for_each(|p| *p = 1.0 / k);
            } else {
                v.iter_mut().for_each(|p| *p /= s);
            }
        }

        proptest! {
            #[test]
            fn step_preserves_mass((mut kernel, mut d, mut pi) in kernel_strategy()) {
                kernel.iter_mut().flatten().for_each(|r| normalize(r));
                normalize(&mut d);
                pi.iter_mut().for_each(|r| normalize(r));
                let mdp = chain(kernel);
                let d = Distribution::new(d).unwrap();
                let pi: Vec<_> = pi.into_iter().map(|r| Distribution::new(r).unwrap()).collect();
                let next = step_distribution(&mdp, &d, &pi).unwrap();
                prop_assert!((next.total() - 1.0).abs() < 1e-12);
            }
        }
    }
}
