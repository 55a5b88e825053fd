use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::passes::evaluate;
use super::policy::PolicyTable;
use super::solve::{solve, solve_from, SolveReport, SolverConfig};
use crate::error::Error;
use crate::product::ProductMdp;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub te_bits: f64,
    pub te_nats: f64,
    pub failure_probability: f64,
    pub report: SolveReport,
    #[serde(skip)]
    pub policy: Option<PolicyTable>,
}

const MAX_PASSES: usize = 10;

/// Solves every `β` independently, then repeatedly offers each point the
/// policies found at the other points as warm starts, keeping any that
/// lowers its own objective. Stops when a full pass changes nothing.
///
/// Re-solving passes are capped; a final adopt-only phase then moves each
/// point to the best policy in the fixed pool, which always terminates.
/// A point's objective can only decrease, so the final table is pairwise
/// consistent: no policy in it beats another point's choice at that point's
/// `β`, which forces TE to be non-increasing and failure non-decreasing in
/// `β`.
pub fn sweep_beta(pm: &ProductMdp, betas: &[f64], base: &SolverConfig) -> Result<Vec<SweepPoint>, Error> {
    let mut sols: Vec<(PolicyTable, SolveReport)> = betas
        .par_iter()
        .map(|&beta| solve(pm, &SolverConfig { beta, ..base.clone() }))
        .collect::<Result<_, _>>()?;

    for _ in 0..MAX_PASSES {
        let candidates: Vec<PolicyTable> = sols.iter().map(|(q, _)| q.clone()).collect();
        let updates: Vec<Option<(PolicyTable, SolveReport)>> = betas
            .par_iter()
            .enumerate()
            .map(|(i, &beta)| improve(pm, base, beta, &sols[i].1, &candidates, i))
            .collect::<Result<_, _>>()?;
        let mut changed = false;
        for (slot, up) in sols.iter_mut().zip(updates) {
            if let Some(better) = up {
                *slot = better;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    adopt_best(pm, betas, &mut sols)?;

    Ok(betas
        .iter()
        .zip(sols)
        .map(|(&beta, (q, report))| SweepPoint {
            beta,
            te_bits: report.te_bits,
            te_nats: report.te_nats,
            failure_probability: report.failure_probability,
            report,
            policy: Some(q),
        })
        .collect())
}

fn improve(
    pm: &ProductMdp,
    base: &SolverConfig,
    beta: f64,
    current: &SolveReport,
    candidates: &[PolicyTable],
    own: usize,
) -> Result<Option<(PolicyTable, SolveReport)>, Error> {
    const MARGIN: f64 = 1e-10;
    let cfg = SolverConfig { beta, ..base.clone() };
    let mut best: Option<(PolicyTable, SolveReport)> = None;
    let mut best_obj = current.objective;
    for (j, cand) in candidates.iter().enumerate() {
        if j == own {
            continue;
        }
        let (eval, _) = evaluate(pm, cand, beta)?;
        if eval.objective >= best_obj - MARGIN {
            continue;
        }
        let (q, report) = if beta == 0.0 {
            let (eval, _) = evaluate(pm, cand, 0.0)?;
            let report = SolveReport {
                beta,
                objective_trace: vec![eval.objective],
                objective: eval.objective,
                expected_cost: eval.expected_cost,
                te_nats: eval.te_nats,
                te_bits: eval.te_bits(),
                failure_probability: eval.failure_probability(),
                iterations: 0,
                converged: true,
            };
            (cand.clone(), report)
        } else {
            solve_from(pm, &cfg, cand.clone())?
        };
        if report.objective < best_obj - MARGIN {
            best_obj = report.objective;
            best = Some((q, report));
        }
    }
    Ok(best)
}

fn adopt_best(pm: &ProductMdp, betas: &[f64], sols: &mut [(PolicyTable, SolveReport)]) -> Result<(), Error> {
    const MARGIN: f64 = 1e-12;
    let pool: Vec<PolicyTable> = sols.iter().map(|(q, _)| q.clone()).collect();
    for (i, &beta) in betas.iter().enumerate() {
        for cand in &pool {
            let (eval, _) = evaluate(pm, cand, beta)?;
            if eval.objective < sols[i].1.objective - MARGIN {
                let report = &mut sols[i].1;
                report.objective = eval.objective;
                report.expected_cost = eval.expected_cost;
                report.te_nats = eval.te_nats;
                report.te_bits = eval.te_bits();
                report.failure_probability = eval.failure_probability();
                report.objective_trace.push(eval.objective);
                sols[i].0 = cand.clone();
            }
        }
    }
    Ok(())
}
