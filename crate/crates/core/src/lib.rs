//! Prescriptive price optimization.
//!
//! The pipeline runs in two stages. Demand regressions are fitted per product
//! from historical prices, external features and sales ([`demand`]). The fitted
//! models and a grid of candidate prices are then turned into a binary
//! quadratic program over one-of-K price indicators ([`profit`], [`bqp`]),
//! which is solved through a semidefinite relaxation with rounding
//! ([`sdprelax`], backed by the interior-point solver in [`sdpsolver`]).
//! [`milp`] emits the standard linearization for external MILP solvers and
//! [`sim`] hosts the synthetic experiments.

pub mod bqp;
pub mod demand;
mod linalg;
pub mod milp;
pub mod profit;
pub mod rng;
pub mod sdprelax;
pub mod sdpsolver;
pub mod sim;

pub use bqp::{BqpError, BqpProblem, BqpSolution, LinearConstraint};
pub use demand::{Dataset, DemandError, DemandModel, FeatureBank, Sample, Transform};
pub use profit::{BusinessConstraint, PricingInstance, ProfitError};
pub use sdprelax::{LiftedSdp, RoundingError, RoundingResult};
pub use sdpsolver::{SdpError, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
