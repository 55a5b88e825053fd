use super::policy::PolicyTable;
use super::solve::{solve, SolveReport, SolverConfig};
use crate::error::Error;
use crate::product::{value_iteration_reach, ProductMdp};

pub const BETA_LO: f64 = 1e-3;
pub const BETA_HI: f64 = 1e6;
pub const BISECTION_STEPS: usize = 25;
pub const FEASIBILITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub policy: PolicyTable,
    pub beta: f64,
    pub report: SolveReport,
}

/// Largest `β` whose solution reaches the mission with probability at least
/// `target`, found by bisection on `log β`.
///
/// Falls back to `β = 0` (pure reachability) when even `BETA_LO` misses the
/// target but value iteration does not.
pub fn solve_constrained(pm: &ProductMdp, target: f64, base: &SolverConfig) -> Result<ConstrainedSolution, Error> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("satisfaction threshold must lie in [0, 1], got {target}")));
    }
    let h_max = value_iteration_reach(pm, base.horizon).h_max();
    if target > h_max + FEASIBILITY_SLACK {
        return Err(Error::Infeasible { target, h_max });
    }
    let feasible = |r: &SolveReport| r.failure_probability <= 1.0 - target + FEASIBILITY_SLACK;
    let run = |beta: f64| {
        let cfg = SolverConfig { beta, ..base.clone() };
        solve(pm, &cfg).map(|(policy, report)| ConstrainedSolution { policy, beta, report })
    };

    let hi = run(BETA_HI)?;
    if feasible(&hi.report) {
        return Ok(hi);
    }
    let lo = run(BETA_LO)?;
    if !feasible(&lo.report) {
        return run(0.0);
    }
    let (mut a, mut b) = (BETA_LO.ln(), BETA_HI.ln());
    let mut best = lo;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        let sol = run(mid.exp())?;
        if feasible(&sol.report) {
            a = mid;
            best = sol;
        } else {
            b = mid;
        }
    }
    Ok(best)
}
