//! Average-cost mean-field control on finite spaces.
//!
//! The crate lifts an `N`-agent model with mean-field coupling to an MDP on
//! empirical measures, solves its average-cost optimality equation by
//! relative value iteration, by vanishing discount and by exhaustive policy
//! enumeration, and solves the infinite-population problem by dynamic
//! programming on a lattice of the probability simplex. The `limits` module
//! compares the two regimes.

pub mod agent_model;
pub mod avg_solver;
pub mod catalog;
pub mod disc_solver;
pub mod dp;
pub mod error;
pub mod expr;
pub mod lift;
pub mod limits;
pub mod meanfield;
pub mod measures;

pub use agent_model::{
    check_minorization, estimate_lipschitz, load_model, AgentModel, LipschitzReport, MinorizationCertificate, ModelSpec,
};
pub use avg_solver::{evaluate_policy_avg, solve_oracle, solve_rvi, AvgSolution, Policy};
pub use disc_solver::{solve_discounted, vanishing_discount, DiscountedSolution, VanishingDiscountTrace};
pub use dp::FiniteMdp;
pub use error::{Error, Result};
pub use lift::{build_lifted_mdp, LiftConfig, LiftMode, LiftedMdp};
pub use limits::{
    evaluate_symmetric_on_finite, flow_distribution_mc, value_convergence_sweep, Criterion, FlowEnsemble, SweepResult,
};
pub use meanfield::{
    build_grid_problem, extract_symmetric_policy, flow_step, solve_mf_average, solve_mf_discounted, GridConfig,
    SimplexGrid, SymmetricPolicy,
};
pub use measures::{EmpiricalMeasure, JointEmpiricalMeasure};
