use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};
use serde::{Deserialize, Serialize};

use super::passes::{backward_pass, evaluate, forward_pass, Evaluation};
use super::policy::PolicyTable;
use crate::error::Error;
use crate::product::{value_iteration_reach, ProductMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight on transfer entropy; `0` means pure reachability.
    pub beta: f64,
    pub horizon: usize,
    /// Number of past actions the policy may condition on.
    pub memory: usize,
    pub max_iters: usize,
    pub tol_objective: f64,
    pub tol_policy: f64,
    /// When set, the initial guess is a seeded Dirichlet perturbation of the
    /// uniform policy.
    pub seed: Option<u64>,
}

impl SolverConfig {
    pub fn new(beta: f64, horizon: usize) -> Self {
        Self {
            beta,
            horizon,
            memory: 0,
            max_iters: 500,
            tol_objective: 1e-8,
            tol_policy: 1e-6,
            seed: None,
        }
    }

    pub fn with_memory(mut self, memory: usize) -> Self {
        self.memory = memory;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("β must be finite and non-negative, got {}", self.beta)));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.tol_objective > 0.0) || !(self.tol_policy > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub beta: f64,
    /// `J + β·TE` after each iteration; entry 0 is the initial guess.
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub expected_cost: f64,
    pub te_nats: f64,
    pub te_bits: f64,
    pub failure_probability: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    fn new(beta: f64, trace: Vec<f64>, eval: &Evaluation, iterations: usize, converged: bool) -> Self {
        Self {
            beta,
            objective_trace: trace,
            objective: eval.objective,
            expected_cost: eval.expected_cost,
            te_nats: eval.te_nats,
            te_bits: eval.te_bits(),
            failure_probability: eval.failure_probability(),
            iterations,
            converged,
        }
    }
}

/// Initial guess: uniform, or uniform mixed half-and-half with a
/// Dirichlet(1, …, 1) draw when `seed` is set.
pub fn initial_policy(pm: &ProductMdp, cfg: &SolverConfig) -> PolicyTable {
    let mut q = PolicyTable::uniform(pm.n_states(), pm.n_actions(), cfg.memory, cfg.horizon);
    if let Some(seed) = cfg.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = pm.n_actions();
        for t in 0..cfg.horizon {
            for row in q.table_mut(t).chunks_mut(k) {
                let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
                let s: f64 = draws.iter().sum();
                for (p, d) in row.iter_mut().zip(draws) {
                    *p = 0.5 / k as f64 + 0.5 * d / s;
                }
            }
        }
    }
    q
}

/// Deterministic greedy reachability policy, replicated over windows.
pub fn reachability_policy(pm: &ProductMdp, horizon: usize, memory: usize) -> PolicyTable {
    let reach = value_iteration_reach(pm, horizon);
    let k = pm.n_actions();
    let mut q = PolicyTable::uniform(pm.n_states(), k, memory, horizon);
    let win = q.window();
    for t in 0..horizon {
        let wc = win.count(t);
        let table = q.table_mut(t);
        for v in 0..pm.n_states() {
            for w in 0..wc {
                let row = &mut table[(v * wc + w) * k..][..k];
                row.fill(0.0);
                row[reach.policy[t][v]] = 1.0;
            }
        }
    }
    q
}

/// Forward-backward iteration from the configured initial guess.
pub fn solve(pm: &ProductMdp, cfg: &SolverConfig) -> Result<(PolicyTable, SolveReport), Error> {
    cfg.validate()?;
    if cfg.beta == 0.0 {
        let q = reachability_policy(pm, cfg.horizon, cfg.memory);
        let (eval, _) = evaluate(pm, &q, 0.0)?;
        let report = SolveReport::new(0.0, vec![eval.objective], &eval, 0, true);
        return Ok((q, report));
    }
    solve_from(pm, cfg, initial_policy(pm, cfg))
}

/// Forward-backward iteration from a given policy.
///
/// Each round computes `(μ, ν)` for the current policy, then the Gibbs
/// policy `(ρ, φ, q)` for that `ν`. Stops once both the objective change
/// and the sup-norm policy change fall below their tolerances.
pub fn solve_from(
    pm: &ProductMdp,
    cfg: &SolverConfig,
    init: PolicyTable,
) -> Result<(PolicyTable, SolveReport), Error> {
    cfg.validate()?;
    if init.horizon() != cfg.horizon || init.memory() != cfg.memory {
        return Err(Error::Config(format!(
            "initial policy has horizon {} and memory {}, configuration wants {} and {}",
            init.horizon(),
            init.memory(),
            cfg.horizon,
            cfg.memory
        )));
    }
    if cfg.beta == 0.0 {
        return solve(pm, cfg);
    }
    let mut q = init;
    let (mut eval, mut fwd) = evaluate(pm, &q, cfg.beta)?;
    let mut trace = vec![eval.objective];
    let mut best = (q.clone(), eval);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let back = backward_pass(pm, &fwd.nu, cfg.beta, cfg.memory)?;
        let step = back.q.sup_distance(&q);
        let (next_eval, next_fwd) = evaluate(pm, &back.q, cfg.beta)?;
        let delta = (next_eval.objective - eval.objective).abs();
        q = back.q;
        eval = next_eval;
        fwd = next_fwd;
        trace.push(eval.objective);
        if eval.objective <= best.1.objective {
            best = (q.clone(), eval);
        }
        if delta < cfg.tol_objective && step < cfg.tol_policy {
            converged = true;
            break;
        }
    }
    let (q, eval) = if converged { (q, eval) } else { best };
    let report = SolveReport::new(cfg.beta, trace, &eval, iterations, converged);
    Ok((q, report))
}

/// Sup-norm residuals of the five coupled optimality equations at `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub phi: f64,
    /// `|q − ν e^{−ρ} / φ|` on contexts with positive probability.
    pub q: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.mu.max(self.nu).max(self.rho).max(self.phi).max(self.q)
    }
}

/// Evaluates every equation of the optimality system at `q`, recomputing
/// each side from the stored fields rather than trusting the passes.
pub fn optimality_residuals(pm: &ProductMdp, q: &PolicyTable, beta: f64) -> Result<Residuals, Error> {
    let fwd = forward_pass(pm, q)?;
    let back = backward_pass(pm, &fwd.nu, beta, q.memory())?;
    let k = pm.n_actions();
    let n = pm.n_states();
    let win = q.window();
    let horizon = q.horizon();

    // μ: gather form over predecessors.
    let mut preds: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for v in 0..n {
        for u in 0..k {
            for &(v2, p) in pm.row(v, u) {
                preds[v2].push((v, u, p));
            }
        }
    }
    let mut r_mu: f64 = (fwd.mu[0][pm.initial()] - 1.0).abs();
    for t in 0..horizon {
        let (wc, wn) = (win.count(t), win.count(t + 1));
        for v2 in 0..n {
            for w2 in 0..wn {
                let mut s = 0.0;
                for &(v, u, p) in &preds[v2] {
                    for w in (0..wc).filter(|&w| win.shift(t, w, u) == w2) {
                        s += p * q.row(t, v, w)[u] * fwd.mu[t][v * wc + w];
                    }
                }
                r_mu = r_mu.max((s - fwd.mu[t + 1][v2 * wn + w2]).abs());
            }
        }
    }

    let (mut r_nu, mut r_rho, mut r_phi, mut r_q) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in 0..horizon {
        let (wc, wn) = (win.count(t), win.count(t + 1));
        for f in 0..pm.n_free_contexts() {
            for w in 0..wc {
                let members: Vec<usize> = (0..n).filter(|&v| pm.free(v) == f).collect();
                let mass: f64 = members.iter().map(|&v| fwd.mu[t][v * wc + w]).sum();
                if mass == 0.0 {
                    continue;
                }
                for u in 0..k {
                    let s: f64 = members.iter().map(|&v| fwd.mu[t][v * wc + w] / mass * q.row(t, v, w)[u]).sum();
                    r_nu = r_nu.max((s - fwd.nu[t][(f * wc + w) * k + u]).abs());
                }
            }
        }
        for v in 0..n {
            let f = pm.free(v);
            for w in 0..wc {
                let ctx = v * wc + w;
                let prior = &fwd.nu[t][(f * wc + w) * k..][..k];
                let rho = &back.rho[t][ctx * k..][..k];
                for u in 0..k {
                    let w2 = win.shift(t, w, u);
                    let expected: f64 = pm
                        .row(v, u)
                        .iter()
                        .map(|&(v2, p)| p * (pm.cost(v, v2) / beta - back.log_phi[t + 1][v2 * wn + w2]))
                        .sum();
                    r_rho = r_rho.max((expected - rho[u]).abs());
                }
                let phi: f64 = prior.iter().zip(rho).map(|(p, r)| p * (-r).exp()).sum();
                let phi_stored = back.log_phi[t][ctx].exp();
                r_phi = r_phi.max((phi - phi_stored).abs() / phi.max(f64::MIN_POSITIVE));
                if fwd.mu[t][ctx] > 0.0 {
                    for u in 0..k {
                        let gibbs = prior[u] * (-rho[u]).exp() / phi;
                        r_q = r_q.max((q.row(t, v, w)[u] - gibbs).abs());
                    }
                }
            }
        }
    }
    Ok(Residuals { mu: r_mu, nu: r_nu, rho: r_rho, phi: r_phi, q: r_q })
}
