//! Forward (μ, ν) and backward (ρ, φ, q) sweeps of the optimality system,
//! plus the two terms of the objective.

use super::gibbs::gibbs_row;
use super::policy::{HistoryWindow, PolicyTable};
use crate::error::Error;
use crate::product::ProductMdp;

/// Joint state-window distributions and the induced action marginals.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `mu[t][v * W_t + w]` for `t = 0..=T`.
    pub mu: Vec<Vec<f64>>,
    /// `nu[t][(f * W_t + w) * |U| + u]` for `t = 0..T`.
    pub nu: Vec<Vec<f64>>,
    /// `context_mass[t][f * W_t + w]`; zero marks an off-support context
    /// whose `ν` row is uniform.
    pub context_mass: Vec<Vec<f64>>,
}

/// Backward quantities for a fixed `ν`.
#[derive(Debug, Clone)]
pub struct Backward {
    /// `rho[t][(v * W_t + w) * |U| + u]` for `t = 0..T`.
    pub rho: Vec<Vec<f64>>,
    /// `log_phi[t][v * W_t + w]` for `t = 0..=T`; `log_phi[T] ≡ 0`.
    pub log_phi: Vec<Vec<f64>>,
    pub q: PolicyTable,
}

fn check_shapes(pm: &ProductMdp, q: &PolicyTable) -> Result<(), Error> {
    if q.n_states() != pm.n_states() || q.n_actions() != pm.n_actions() {
        return Err(Error::Dimension(format!(
            "policy over {}×{} does not match product with {} states and {} actions",
            q.n_states(),
            q.n_actions(),
            pm.n_states(),
            pm.n_actions()
        )));
    }
    Ok(())
}

/// Propagates `μ_0 = δ(v0, ∅)` through `q` and conditions on free contexts.
pub fn forward_pass(pm: &ProductMdp, q: &PolicyTable) -> Result<Forward, Error> {
    check_shapes(pm, q)?;
    let n = pm.n_states();
    let nu_n = pm.n_actions();
    let nf = pm.n_free_contexts();
    let win = q.window();
    let horizon = q.horizon();

    let mut mu = Vec::with_capacity(horizon + 1);
    let mut first = vec![0.0; n];
    first[pm.initial()] = 1.0;
    mu.push(first);
    let mut nu = Vec::with_capacity(horizon);
    let mut context_mass = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let wc = win.count(t);
        let wn = win.count(t + 1);
        let cur = &mu[t];
        let table = q.table(t);

        let mut mass = vec![0.0; nf * wc];
        for v in 0..n {
            let f = pm.free(v);
            for w in 0..wc {
                mass[f * wc + w] += cur[v * wc + w];
            }
        }
        let mut nu_t = vec![0.0; nf * wc * nu_n];
        for v in 0..n {
            let f = pm.free(v);
            for w in 0..wc {
                let m = cur[v * wc + w];
                if m == 0.0 {
                    continue;
                }
                let weight = m / mass[f * wc + w];
                let row = &table[(v * wc + w) * nu_n..][..nu_n];
                let out = &mut nu_t[(f * wc + w) * nu_n..][..nu_n];
                for (o, p) in out.iter_mut().zip(row) {
                    *o += weight * p;
                }
            }
        }
        for (ctx, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                nu_t[ctx * nu_n..][..nu_n].fill(1.0 / nu_n as f64);
            }
        }

        let mut next = vec![0.0; n * wn];
        for v in 0..n {
            for w in 0..wc {
                let m = cur[v * wc + w];
                if m == 0.0 {
                    continue;
                }
                let row = &table[(v * wc + w) * nu_n..][..nu_n];
                for (u, &p) in row.iter().enumerate() {
                    let mp = m * p;
                    if mp == 0.0 {
                        continue;
                    }
                    let w2 = win.shift(t, w, u);
                    for &(v2, pr) in pm.row(v, u) {
                        next[v2 * wn + w2] += mp * pr;
                    }
                }
            }
        }
        nu.push(nu_t);
        context_mass.push(mass);
        mu.push(next);
    }
    Ok(Forward { mu, nu, context_mass })
}

/// Gibbs backward sweep for fixed `ν`, with the stage cost scaled by `1/β`.
pub fn backward_pass(
    pm: &ProductMdp,
    nu: &[Vec<f64>],
    beta: f64,
    memory: usize,
) -> Result<Backward, Error> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Config(format!(
            "backward pass needs a positive finite β, got {beta}; β = 0 is solved by value iteration"
        )));
    }
    let n = pm.n_states();
    let nu_n = pm.n_actions();
    let nf = pm.n_free_contexts();
    let horizon = nu.len();
    let win = HistoryWindow::new(nu_n, memory);
    for (t, row) in nu.iter().enumerate() {
        if row.len() != nf * win.count(t) * nu_n {
            return Err(Error::Dimension(format!("ν at t={t} has {} entries", row.len())));
        }
    }

    let mut q = PolicyTable::uniform(n, nu_n, memory, horizon);
    let mut log_phi = vec![Vec::new(); horizon + 1];
    log_phi[horizon] = vec![0.0; n * win.count(horizon)];
    let mut rho = vec![Vec::new(); horizon];
    let mut costs = vec![0.0; nu_n];

    for t in (0..horizon).rev() {
        let wc = win.count(t);
        let wn = win.count(t + 1);
        let next_phi = &log_phi[t + 1];
        let mut rho_t = vec![0.0; n * wc * nu_n];
        let mut phi_t = vec![0.0; n * wc];
        let table = q.table_mut(t);
        for v in 0..n {
            let f = pm.free(v);
            for w in 0..wc {
                for (u, c) in costs.iter_mut().enumerate() {
                    let w2 = win.shift(t, w, u);
                    *c = pm
                        .row(v, u)
                        .iter()
                        .map(|&(v2, p)| p * (pm.cost(v, v2) / beta - next_phi[v2 * wn + w2]))
                        .sum();
                }
                let ctx = v * wc + w;
                rho_t[ctx * nu_n..][..nu_n].copy_from_slice(&costs);
                let prior = &nu[t][(f * wc + w) * nu_n..][..nu_n];
                phi_t[ctx] = gibbs_row(prior, &costs, &mut table[ctx * nu_n..][..nu_n]);
            }
        }
        rho[t] = rho_t;
        log_phi[t] = phi_t;
    }
    Ok(Backward { rho, log_phi, q })
}

/// Truncated-window transfer entropy in nats:
/// `Σ_t Σ_{v,w} μ_t(v,w) KL(q_t(·|v,w) ‖ ν_t(·|f(v),w))`.
pub fn transfer_entropy(pm: &ProductMdp, fwd: &Forward, q: &PolicyTable) -> f64 {
    let nu_n = pm.n_actions();
    let win = q.window();
    let mut total = 0.0;
    for t in 0..q.horizon() {
        let wc = win.count(t);
        let table = q.table(t);
        for v in 0..pm.n_states() {
            let f = pm.free(v);
            for w in 0..wc {
                let m = fwd.mu[t][v * wc + w];
                if m == 0.0 {
                    continue;
                }
                let row = &table[(v * wc + w) * nu_n..][..nu_n];
                let prior = &fwd.nu[t][(f * wc + w) * nu_n..][..nu_n];
                let kl: f64 = row
                    .iter()
                    .zip(prior)
                    // r underflows to 0 only when p·μ does; the term is then negligible.
                    .filter(|(p, r)| **p > 0.0 && **r > 0.0)
                    .map(|(p, r)| p * (p / r).ln())
                    .sum();
                total += m * kl.max(0.0);
            }
        }
    }
    total
}

/// `Σ_t E[c_t]`, i.e. minus the probability of entering `Acc_M` within `T`.
pub fn expected_cost(pm: &ProductMdp, fwd: &Forward, q: &PolicyTable) -> f64 {
    let win = q.window();
    let mut total = 0.0;
    for t in 0..q.horizon() {
        let wc = win.count(t);
        for v in (0..pm.n_states()).filter(|&v| !pm.is_accepting(v)) {
            for w in 0..wc {
                let m = fwd.mu[t][v * wc + w];
                if m == 0.0 {
                    continue;
                }
                for (u, &p) in q.row(t, v, w).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let c: f64 = pm.row(v, u).iter().map(|&(v2, pr)| pr * pm.cost(v, v2)).sum();
                    total += m * p * c;
                }
            }
        }
    }
    total
}

/// Objective terms of a fixed policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub expected_cost: f64,
    pub te_nats: f64,
    /// Probability of satisfying the mission within the horizon.
    pub reach_probability: f64,
    /// `J + β·TE` with `J` the expected reach-once cost.
    pub objective: f64,
}

impl Evaluation {
    pub fn failure_probability(&self) -> f64 {
        1.0 - self.reach_probability
    }

    pub fn te_bits(&self) -> f64 {
        self.te_nats / std::f64::consts::LN_2
    }
}

pub fn evaluate(pm: &ProductMdp, q: &PolicyTable, beta: f64) -> Result<(Evaluation, Forward), Error> {
    let fwd = forward_pass(pm, q)?;
    let expected_cost = expected_cost(pm, &fwd, q);
    let te_nats = transfer_entropy(pm, &fwd, q);
    let reach_probability = if pm.is_accepting(pm.initial()) { 1.0 } else { -expected_cost };
    let objective = if beta == 0.0 { expected_cost } else { expected_cost + beta * te_nats };
    Ok((Evaluation { expected_cost, te_nats, reach_probability, objective }, fwd))
}
