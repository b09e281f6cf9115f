//! Bayesian disorder detection for a net of sensors observing Markov chains.
//!
//! Each sensor's chain switches transition kernel at an unobserved
//! geometric disorder time. The crate provides the posterior filter, the
//! single-sensor optimal stopping solver, simple-game vote aggregation,
//! naive fusion of individual rules, the equilibrium of the multilateral
//! stopping game, and Monte Carlo evaluation.

pub mod equilibrium;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod mc;
pub mod model;
pub mod modelfile;
pub mod policy;
pub mod posterior;
pub mod simple_game;
pub mod single_solver;

pub use equilibrium::{solve_game, verify_equilibrium, DeviationReport, EquilibriumSolution, StageSolution};
pub use error::{Error, Result};
pub use fusion::{naive_votes, system_alarm, NaiveFusion};
pub use grid::PiGrid;
pub use mc::{compare, estimate_policy_risk, ComparisonReport, Estimate, PolicyEstimate, RiskEstimate};
pub use model::{GeometricPrior, NetModel, SensorModel, SensorPath, TransitionKernel};
pub use modelfile::{parse_model, ModelFile};
pub use policy::{JointPolicy, SensorPolicy};
pub use posterior::PosteriorState;
pub use simple_game::{Coalition, SimpleGame};
pub use single_solver::{solve_finite_horizon, solve_fixed_point, FiniteHorizon, FixedPoint, ValueFunction};
