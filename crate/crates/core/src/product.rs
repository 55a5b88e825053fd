//! Synchronous product of a labeled MDP with a specification DFA, the
//! reach-once stage cost, and the finite-horizon reachability baseline.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ltl::Dfa;
use crate::mdp::{LabeledMdp, Letter, Row, STOCHASTIC_TOL};

/// Product MDP with factorization: expensive = the MDP's expensive
/// component, free context = (MDP free component, automaton state).
///
/// State 0 is always the initial state `(x0, s_I)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductMdp {
    actions: Vec<String>,
    names: Vec<String>,
    /// `rows[v * n_actions + u]`
    rows: Vec<Row>,
    accepting: Vec<bool>,
    expensive: Vec<usize>,
    free: Vec<usize>,
    n_free: usize,
    /// `(mdp state, automaton state)` when built by [`build_product`].
    origin: Option<Vec<(usize, usize)>>,
}

impl ProductMdp {
    /// Builds a product-shaped model directly from tables. `expensive[v]`
    /// and `free[v]` give the factor indices of each state; `accepting`
    /// marks `Acc_M`, which must be closed under every action.
    pub fn from_parts(
        actions: Vec<String>,
        names: Vec<String>,
        rows: Vec<Row>,
        accepting: Vec<bool>,
        expensive: Vec<usize>,
        free: Vec<usize>,
    ) -> Result<Self, Error> {
        let n = accepting.len();
        let nu = actions.len();
        if n == 0 || nu == 0 {
            return Err(Error::Model("product needs at least one state and one action".into()));
        }
        if names.len() != n || expensive.len() != n || free.len() != n || rows.len() != n * nu {
            return Err(Error::Dimension("product tables disagree on the number of states".into()));
        }
        for v in 0..n {
            for u in 0..nu {
                let row = &rows[v * nu + u];
                let mut sum = 0.0;
                for &(w, p) in row {
                    if w >= n || p < 0.0 {
                        return Err(Error::Model(format!("bad entry in row ({}, {})", names[v], actions[u])));
                    }
                    if accepting[v] && !accepting[w] && p > 0.0 {
                        return Err(Error::Model(format!("accepting state {} can leave Acc", names[v])));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::Model(format!(
                        "row ({}, {}) sums to {sum}",
                        names[v], actions[u]
                    )));
                }
            }
        }
        let mut seen = HashMap::new();
        for v in 0..n {
            if let Some(prev) = seen.insert((expensive[v], free[v]), v) {
                return Err(Error::Model(format!(
                    "states {} and {} share the same factor pair",
                    names[prev], names[v]
                )));
            }
        }
        let n_free = free.iter().max().map_or(0, |m| m + 1);
        Ok(Self { actions, names, rows, accepting, expensive, free, n_free, origin: None })
    }

    pub fn n_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn row(&self, v: usize, u: usize) -> &[(usize, f64)] {
        &self.rows[v * self.actions.len() + u]
    }

    pub fn is_accepting(&self, v: usize) -> bool {
        self.accepting[v]
    }

    pub fn expensive(&self, v: usize) -> usize {
        self.expensive[v]
    }

    /// Free-context index of `v` (MDP free component and automaton state).
    pub fn free(&self, v: usize) -> usize {
        self.free[v]
    }

    pub fn n_free_contexts(&self) -> usize {
        self.n_free
    }

    pub fn origin(&self, v: usize) -> Option<(usize, usize)> {
        self.origin.as_ref().map(|o| o[v])
    }

    pub fn n_automaton_states(&self) -> Option<usize> {
        self.origin.as_ref().map(|o| o.iter().map(|(_, s)| s + 1).max().unwrap_or(0))
    }

    /// Reach-once stage cost: −1 exactly on a transition entering `Acc_M`.
    pub fn cost(&self, v: usize, next: usize) -> f64 {
        if !self.accepting[v] && self.accepting[next] {
            -1.0
        } else {
            0.0
        }
    }
}

/// Builds the product reachable from `(x0, s_I)`.
///
/// The automaton reads the label of each successor state, never the label of
/// `x0` itself. Letters are projected onto the automaton's propositions, all
/// of which must be propositions of the MDP.
pub fn build_product(mdp: &LabeledMdp, dfa: &Dfa, x0: usize) -> Result<ProductMdp, Error> {
    if x0 >= mdp.n_states() {
        return Err(Error::Model(format!("initial state index {x0} is not a state of the MDP")));
    }
    let projection: Vec<usize> = dfa
        .props()
        .iter()
        .map(|p| mdp.prop_index(p).ok_or_else(|| Error::UnknownAtom(p.clone())))
        .collect::<Result<_, _>>()?;
    let project = |l: Letter| {
        projection
            .iter()
            .enumerate()
            .fold(Letter::EMPTY, |acc, (i, &src)| if l.contains(src) { acc.with(i) } else { acc })
    };

    let nu = mdp.n_actions();
    let space = mdp.states();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut origin = vec![(x0, dfa.initial())];
    index.insert(origin[0], 0);
    let mut queue = VecDeque::from([0usize]);
    let mut rows: Vec<Row> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let (x, s) = origin[v];
        if rows.len() < (v + 1) * nu {
            rows.resize((v + 1) * nu, Vec::new());
        }
        for u in 0..nu {
            let mut row: Row = Vec::with_capacity(mdp.row(x, u).len());
            for &(y, p) in mdp.row(x, u) {
                if p == 0.0 {
                    continue;
                }
                let t = dfa.step(s, project(mdp.label(y)));
                let w = *index.entry((y, t)).or_insert_with(|| {
                    origin.push((y, t));
                    queue.push_back(origin.len() - 1);
                    origin.len() - 1
                });
                row.push((w, p));
            }
            rows[v * nu + u] = row;
        }
    }
    rows.resize(origin.len() * nu, Vec::new());

    let mut free_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut expensive = Vec::with_capacity(origin.len());
    let mut free = Vec::with_capacity(origin.len());
    let mut names = Vec::with_capacity(origin.len());
    let mut accepting = Vec::with_capacity(origin.len());
    for &(x, s) in &origin {
        let (e, f) = space.decompose(x);
        let k = free_index.len();
        free.push(*free_index.entry((f, s)).or_insert(k));
        expensive.push(e);
        names.push(format!("{},s{s}", space.state_name(x)));
        accepting.push(dfa.is_accepting(s));
    }
    let n_free = free_index.len();
    for v in 0..origin.len() {
        for u in 0..nu {
            let sum: f64 = rows[v * nu + u].iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL * 10.0 {
                return Err(Error::Model(format!(
                    "product row ({}, {}) sums to {sum}; validate the MDP first",
                    names[v],
                    mdp.actions()[u]
                )));
            }
        }
    }
    Ok(ProductMdp {
        actions: mdp.actions().to_vec(),
        names,
        rows,
        accepting,
        expensive,
        free,
        n_free,
        origin: Some(origin),
    })
}

/// `values[k][v] = h^{≤k}(v, Acc_M)` for `k = 0..=T`; `policy[t][v]` is the
/// greedy action at time `t`, i.e. with `T − t` steps to go.
#[derive(Debug, Clone, PartialEq)]
pub struct Reachability {
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
}

impl Reachability {
    pub fn horizon(&self) -> usize {
        self.policy.len()
    }

    /// Maximal probability of reaching `Acc_M` from the initial state.
    pub fn h_max(&self) -> f64 {
        self.values[self.horizon()][0]
    }
}

/// Finite-horizon value iteration for maximal reachability of `Acc_M`.
/// Ties are broken towards the lowest action index.
pub fn value_iteration_reach(pm: &ProductMdp, horizon: usize) -> Reachability {
    let n = pm.n_states();
    let h0: Vec<f64> = (0..n).map(|v| if pm.is_accepting(v) { 1.0 } else { 0.0 }).collect();
    let mut values = vec![h0];
    let mut greedy_by_steps: Vec<Vec<usize>> = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let prev = values.last().expect("non-empty");
        let mut next = vec![0.0; n];
        let mut act = vec![0; n];
        for v in 0..n {
            if pm.is_accepting(v) {
                next[v] = 1.0;
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for u in 0..pm.n_actions() {
                let q: f64 = pm.row(v, u).iter().map(|&(w, p)| p * prev[w]).sum();
                if q > best + 1e-14 {
                    best = q;
                    act[v] = u;
                }
            }
            next[v] = best;
        }
        values.push(next);
        greedy_by_steps.push(act);
    }
    // greedy_by_steps[k] acts with k + 1 steps to go.
    let policy = (0..horizon).map(|t| greedy_by_steps[horizon - t - 1].clone()).collect();
    Reachability { values, policy }
}
