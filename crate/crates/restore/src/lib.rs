//! Closed-loop supply restoration for faulty radial power distribution
//! networks: a ground-truth simulator with unreliable sensors and actuators,
//! a discrete Bayesian state estimator over complete network hypotheses,
//! an exhaustive generator of admissible level-1 restoration plans, and a
//! supervisor that executes plans, revises the diagnosis on every
//! observation, and replans or escalates when reality disagrees.

pub mod belief;
pub mod config;
pub mod engine;
pub mod ids;
pub mod planner;
pub mod scalar;
pub mod topology;
pub mod trace;
pub mod world;

pub use ids::{AreaId, DeviceId, LineId};
pub use scalar::Real;

/// Concrete aliases for the default `f64` scalar.
pub type Topology = topology::NetworkTopology<f64>;
pub type PowerReport = topology::PowerReport<f64>;
pub type Belief = belief::Belief<f64>;
pub type Priors = belief::Priors<f64>;
pub type UtilityWeights = planner::UtilityWeights<f64>;
pub type SessionConfig = config::SessionConfig<f64>;
pub type SessionOutcome = engine::SessionOutcome<f64>;
