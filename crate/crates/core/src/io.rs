//! Scenario and policy files and the command implementations behind the
//! `te-mdp` binary.
//!
//! Every file is JSON. Floats are written in shortest round-trip form, so a
//! write followed by a read reproduces each value bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ltl::{parse, to_dfa, Dfa};
use crate::mdp::{validate, LabeledMdp, Letter, StateSpace};
use crate::product::{build_product, value_iteration_reach, ProductMdp};
use crate::scenarios::{build_moving_obstacle, build_static_uncertain, GridSpec};
use crate::solver::{
    evaluate, forward_pass, solve, solve_constrained, sweep_beta, PolicyTable, SolveReport, SolverConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Tolerance on policy rows when reading a policy file.
pub const POLICY_READ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitMdp {
    pub expensive_states: Vec<String>,
    pub free_states: Vec<String>,
    pub actions: Vec<String>,
    #[serde(default)]
    pub atomic_props: Vec<String>,
    /// `kernel[x][u][x']` with `x = expensive * |free| + free`.
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// Propositions true in each state, same order as the kernel.
    pub labels: Vec<Vec<String>>,
    pub initial: InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub expensive: String,
    pub free: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    MovingObstacle(GridSpec),
    StaticUncertain(GridSpec),
    Explicit(ExplicitMdp),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_policy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelSpec,
    pub formula: String,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Required probability of satisfying the mission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_prob: Option<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl ScenarioFile {
    pub fn check(&self) -> Result<(), Error> {
        match (self.beta, self.target_prob) {
            (Some(_), Some(_)) => Err(Error::Scenario("give either `beta` or `target_prob`, not both".into())),
            (None, None) => Err(Error::Scenario("one of `beta` or `target_prob` is required".into())),
            _ => Ok(()),
        }
    }

    pub fn solver_config(&self, beta: f64) -> SolverConfig {
        let mut cfg = SolverConfig::new(beta, self.horizon);
        let o = &self.solver;
        if let Some(m) = o.memory {
            cfg.memory = m;
        }
        if let Some(m) = o.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = o.tol_objective {
            cfg.tol_objective = t;
        }
        if let Some(t) = o.tol_policy {
            cfg.tol_policy = t;
        }
        cfg.seed = o.seed;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyMetadata {
    pub beta: f64,
    pub memory: usize,
    pub horizon: usize,
    pub solver_version: String,
    pub formula: String,
    pub objective: f64,
    pub expected_cost: f64,
    pub te_nats: f64,
    pub te_bits: f64,
    pub failure_probability: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub metadata: PolicyMetadata,
    /// Product state names, `"expensive,free,sK"`.
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// `tables[t][state][window][action]`; windows hold the last
    /// `min(memory, t)` actions, oldest action most significant.
    pub tables: Vec<Vec<Vec<Vec<f64>>>>,
}

impl PolicyFile {
    pub fn new(pm: &ProductMdp, q: &PolicyTable, report: &SolveReport, formula: &str, seed: Option<u64>) -> Self {
        let win = q.window();
        let tables = (0..q.horizon())
            .map(|t| {
                (0..pm.n_states())
                    .map(|v| (0..win.count(t)).map(|w| q.row(t, v, w).to_vec()).collect())
                    .collect()
            })
            .collect();
        PolicyFile {
            metadata: PolicyMetadata {
                beta: report.beta,
                memory: q.memory(),
                horizon: q.horizon(),
                solver_version: env!("CARGO_PKG_VERSION").to_string(),
                formula: formula.to_string(),
                objective: report.objective,
                expected_cost: report.expected_cost,
                te_nats: report.te_nats,
                te_bits: report.te_bits,
                failure_probability: report.failure_probability,
                iterations: report.iterations,
                converged: report.converged,
                seed,
                target_prob: None,
            },
            states: pm.names().to_vec(),
            actions: pm.actions().to_vec(),
            tables,
        }
    }

    /// Rebuilds the policy table, checking shapes and row sums.
    pub fn table(&self) -> Result<PolicyTable, Error> {
        let n = self.states.len();
        let k = self.actions.len();
        let flat = self
            .tables
            .iter()
            .enumerate()
            .map(|(t, per_state)| {
                if per_state.len() != n {
                    return Err(Error::Dimension(format!("policy table t={t} lists {} states, expected {n}", per_state.len())));
                }
                let mut out = Vec::new();
                for (v, windows) in per_state.iter().enumerate() {
                    for row in windows {
                        if row.len() != k {
                            return Err(Error::Dimension(format!(
                                "policy row t={t} state {} has {} entries, expected {k}",
                                self.states[v],
                                row.len()
                            )));
                        }
                        out.extend_from_slice(row);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolicyTable::from_tables(n, k, self.metadata.memory, flat, POLICY_READ_TOL)
    }

    /// Checks that the policy was built for this product.
    pub fn matches(&self, pm: &ProductMdp) -> Result<(), Error> {
        if self.states != pm.names() || self.actions != pm.actions() {
            return Err(Error::Dimension(format!(
                "policy covers {} states and {} actions; the scenario's product has {} and {}",
                self.states.len(),
                self.actions.len(),
                pm.n_states(),
                pm.n_actions()
            )));
        }
        Ok(())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn read_scenario(path: &Path) -> Result<ScenarioFile, Error> {
    let s: ScenarioFile = read_json(path)?;
    s.check()?;
    Ok(s)
}

/// Everything derived from a scenario before solving.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub mdp: LabeledMdp,
    pub initial: usize,
    pub dfa: Dfa,
    pub product: ProductMdp,
    pub grid: Option<GridSpec>,
}

impl Compiled {
    /// `(cell_x, cell_y)` of the agent in product state `v`. Explicit models
    /// use the free-state index as `cell_x` and `0` as `cell_y`.
    pub fn agent_coords(&self, v: usize) -> (usize, usize) {
        let (x, _) = self.product.origin(v).expect("built from an MDP");
        let (_, f) = self.mdp.states().decompose(x);
        match &self.grid {
            Some(g) => g.coords(f),
            None => (f, 0),
        }
    }
}

fn explicit_mdp(spec: &ExplicitMdp) -> Result<(LabeledMdp, usize), Error> {
    let states = StateSpace::new(spec.expensive_states.clone(), spec.free_states.clone())?;
    if spec.labels.len() != states.len() {
        return Err(Error::Dimension(format!("{} labels for {} states", spec.labels.len(), states.len())));
    }
    let mut labels = Vec::with_capacity(states.len());
    for names in &spec.labels {
        let mut l = Letter::EMPTY;
        for name in names {
            let i = spec.atomic_props.iter().position(|p| p == name).ok_or_else(|| Error::UnknownAtom(name.clone()))?;
            l = l.with(i);
        }
        labels.push(l);
    }
    let initial = states.find(&spec.initial.expensive, &spec.initial.free).ok_or_else(|| {
        Error::Scenario(format!("initial state ({}, {}) is not a state", spec.initial.expensive, spec.initial.free))
    })?;
    let mdp = LabeledMdp::from_dense(states, spec.actions.clone(), spec.atomic_props.clone(), &spec.kernel, labels)?;
    Ok((mdp, initial))
}

/// Builds the MDP, automaton and pruned product. With `renormalize`, rows
/// off by at most `1e-9` are rescaled before validation.
pub fn compile(s: &ScenarioFile, renormalize: bool) -> Result<Compiled, Error> {
    let (mut mdp, initial, grid) = match &s.model {
        ModelSpec::MovingObstacle(g) => {
            let m = build_moving_obstacle(g)?;
            (m.mdp, m.initial, Some(g.clone()))
        }
        ModelSpec::StaticUncertain(g) => {
            let m = build_static_uncertain(g)?;
            (m.mdp, m.initial, Some(g.clone()))
        }
        ModelSpec::Explicit(e) => {
            let (m, x0) = explicit_mdp(e)?;
            (m, x0, None)
        }
    };
    if renormalize {
        mdp.renormalize();
    }
    if let Some(v) = validate(&mdp).first() {
        return Err(Error::Model(v.to_string()));
    }
    let formula = parse(&s.formula)?;
    let dfa = to_dfa(&formula, mdp.atomic_props())?;
    let product = build_product(&mdp, &dfa, initial)?;
    Ok(Compiled { mdp, initial, dfa, product, grid })
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
}

pub fn exit_code(result: &Result<Status, Error>) -> i32 {
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::NotConverged) => EXIT_NOT_CONVERGED,
        Err(Error::Infeasible { .. }) => EXIT_INFEASIBLE,
        Err(_) => EXIT_INPUT,
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub beta: Option<f64>,
    pub target_prob: Option<f64>,
    pub memory: Option<usize>,
    pub seed: Option<u64>,
    pub renormalize: bool,
}

impl SolveOptions {
    /// Applies command-line overrides; a `beta` or `target_prob` given here
    /// replaces whichever of the two the file set.
    pub fn apply(&self, s: &mut ScenarioFile) {
        if let Some(b) = self.beta {
            s.beta = Some(b);
            s.target_prob = None;
        }
        if let Some(d) = self.target_prob {
            s.target_prob = Some(d);
            s.beta = None;
        }
        if let Some(m) = self.memory {
            s.solver.memory = Some(m);
        }
        if let Some(seed) = self.seed {
            s.solver.seed = Some(seed);
        }
    }
}

pub fn cmd_compile(scenario: &Path, renormalize: bool, cache: Option<&Path>, out: &mut dyn Write) -> Result<Status, Error> {
    let s = read_scenario(scenario)?;
    let c = compile(&s, renormalize)?;
    let h = value_iteration_reach(&c.product, s.horizon).h_max();
    let lines = [
        format!("states {}", c.mdp.n_states()),
        format!("expensive {}", c.mdp.states().n_expensive()),
        format!("free {}", c.mdp.states().n_free()),
        format!("actions {}", c.mdp.n_actions()),
        format!("automaton_states {}", c.dfa.n_states()),
        format!("product_states {}", c.product.n_states()),
        format!("horizon {}", s.horizon),
        format!("max_reach_probability {h}"),
    ];
    for l in lines {
        writeln!(out, "{l}").map_err(stdout_error)?;
    }
    if let Some(path) = cache {
        write_json(path, &c.product)?;
    }
    Ok(Status::Ok)
}

fn stdout_error(source: std::io::Error) -> Error {
    Error::Io { path: "<stdout>".into(), source }
}

pub fn cmd_solve(scenario: &Path, opts: &SolveOptions, policy_out: Option<&Path>, out: &mut dyn Write) -> Result<Status, Error> {
    let mut s = read_scenario(scenario)?;
    opts.apply(&mut s);
    let c = compile(&s, opts.renormalize)?;
    let (q, report, beta, target) = match (s.beta, s.target_prob) {
        (Some(beta), _) => {
            let (q, r) = solve(&c.product, &s.solver_config(beta))?;
            (q, r, beta, None)
        }
        (None, Some(d)) => {
            let sol = solve_constrained(&c.product, d, &s.solver_config(1.0))?;
            (sol.policy, sol.report, sol.beta, Some(d))
        }
        (None, None) => unreachable!("checked on read"),
    };
    let mut file = PolicyFile::new(&c.product, &q, &report, &s.formula, s.solver.seed);
    file.metadata.beta = beta;
    file.metadata.target_prob = target;
    if let Some(path) = policy_out {
        write_json(path, &file)?;
    }
    let summary = serde_json::to_string_pretty(&file.metadata).expect("metadata serializes");
    writeln!(out, "{summary}").map_err(stdout_error)?;
    Ok(if report.converged { Status::Ok } else { Status::NotConverged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub te_bits: f64,
    pub te_nats: f64,
    pub failure_probability: f64,
    pub objective: f64,
    pub converged: bool,
}

pub fn cmd_sweep(scenario: &Path, betas: &[f64], opts: &SolveOptions, out: &mut dyn Write) -> Result<Status, Error> {
    if betas.is_empty() {
        return Err(Error::Config("the β grid is empty".into()));
    }
    let mut s = read_scenario(scenario)?;
    opts.apply(&mut s);
    let c = compile(&s, opts.renormalize)?;
    let points = sweep_beta(&c.product, betas, &s.solver_config(1.0))?;
    writeln!(out, "beta,te_bits,te_nats,failure_probability,objective,converged").map_err(stdout_error)?;
    let mut all = true;
    for p in &points {
        all &= p.report.converged;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.beta, p.te_bits, p.te_nats, p.failure_probability, p.report.objective, p.report.converged
        )
        .map_err(stdout_error)?;
    }
    Ok(if all { Status::Ok } else { Status::NotConverged })
}

/// `P(agent at cell)` for each requested time, as `(t, cell_x, cell_y, p)`
/// rows with positive probability, sorted by time then cell.
pub fn agent_marginals(c: &Compiled, q: &PolicyTable, times: &[usize]) -> Result<Vec<(usize, usize, usize, f64)>, Error> {
    if let Some(&t) = times.iter().find(|&&t| t > q.horizon()) {
        return Err(Error::Config(format!("time {t} is past the horizon {}", q.horizon())));
    }
    let fwd = forward_pass(&c.product, q)?;
    let win = q.window();
    let mut rows = Vec::new();
    for &t in times {
        let wc = win.count(t);
        let mut cells = std::collections::BTreeMap::new();
        for v in 0..c.product.n_states() {
            let m: f64 = fwd.mu[t][v * wc..(v + 1) * wc].iter().sum();
            if m > 0.0 {
                let (x, y) = c.agent_coords(v);
                *cells.entry((y, x)).or_insert(0.0) += m;
            }
        }
        rows.extend(cells.into_iter().map(|((y, x), p)| (t, x, y, p)));
    }
    Ok(rows)
}

fn load_policy_for(c: &Compiled, policy: &Path) -> Result<(PolicyFile, PolicyTable), Error> {
    let file: PolicyFile = read_json(policy)?;
    file.matches(&c.product)?;
    let q = file.table()?;
    Ok((file, q))
}

pub fn cmd_export_marginals(
    scenario: &Path,
    policy: &Path,
    times: &[usize],
    renormalize: bool,
    out: &mut dyn Write,
) -> Result<Status, Error> {
    let s = read_scenario(scenario)?;
    let c = compile(&s, renormalize)?;
    let (_, q) = load_policy_for(&c, policy)?;
    writeln!(out, "t,cell_x,cell_y,probability").map_err(stdout_error)?;
    for (t, x, y, p) in agent_marginals(&c, &q, times)? {
        writeln!(out, "{t},{x},{y},{p}").map_err(stdout_error)?;
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta: f64,
    pub objective: f64,
    pub expected_cost: f64,
    pub te_nats: f64,
    pub te_bits: f64,
    pub failure_probability: f64,
    pub reach_probability_optimum: f64,
}

pub fn cmd_eval(
    scenario: &Path,
    policy: &Path,
    beta: Option<f64>,
    renormalize: bool,
    out: &mut dyn Write,
) -> Result<Status, Error> {
    let s = read_scenario(scenario)?;
    let c = compile(&s, renormalize)?;
    let (file, q) = load_policy_for(&c, policy)?;
    let beta = beta.unwrap_or(file.metadata.beta);
    let (e, _) = evaluate(&c.product, &q, beta)?;
    let report = EvalReport {
        beta,
        objective: e.objective,
        expected_cost: e.expected_cost,
        te_nats: e.te_nats,
        te_bits: e.te_bits(),
        failure_probability: e.failure_probability(),
        reach_probability_optimum: value_iteration_reach(&c.product, q.horizon()).h_max(),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes")).map_err(stdout_error)?;
    Ok(Status::Ok)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, Error> {
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        return Err(Error::Config(format!("bad log grid {lo}..{hi} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}
