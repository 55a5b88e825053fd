//! Forward-backward solver for the transfer-entropy regularized
//! reachability problem on a product MDP.

pub mod constrained;
pub mod gibbs;
pub mod passes;
pub mod policy;
pub mod solve;
pub mod sweep;

pub use constrained::{solve_constrained, ConstrainedSolution};
pub use gibbs::{gibbs_row, log_sum_exp, static_gibbs};
pub use passes::{backward_pass, evaluate, expected_cost, forward_pass, transfer_entropy, Backward, Evaluation, Forward};
pub use policy::{HistoryWindow, PolicyTable};
pub use solve::{
    initial_policy, optimality_residuals, reachability_policy, solve, solve_from, Residuals, SolveReport,
    SolverConfig,
};
pub use sweep::{sweep_beta, SweepPoint};
