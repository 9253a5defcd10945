//! Session configuration: estimation priors, actuator degradation
//! probabilities of the simulated world, utility weights, and the guard
//! limits of the closed loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::Priors;
use crate::planner::UtilityWeights;
use crate::scalar::Real;
use crate::world::StochasticConfig;

/// Actuator mode transition probabilities of the simulated world. These are
/// deliberately separate from [`Priors`]: the estimator's model of actuator
/// degradation need not match the simulation's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StochasticParams<F> {
    pub p_ac_to_liar: F,
    pub p_ac_to_broken: F,
}

impl<F: Real> Default for StochasticParams<F> {
    fn default() -> Self {
        StochasticParams {
            p_ac_to_liar: F::zero(),
            p_ac_to_broken: F::zero(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(
    serialize = "F: Real + Serialize",
    deserialize = "F: Real + Deserialize<'de>"
))]
pub struct SessionConfig<F> {
    pub priors: Priors<F>,
    pub stochastic: StochasticParams<F>,
    pub utility: UtilityWeights<F>,
    /// Highest fault cardinality bound the estimator may escalate to.
    pub k_max: usize,
    /// Maximum number of replans (including escalations) before aborting.
    pub replan_max: usize,
}

impl<F: Real> Default for SessionConfig<F> {
    fn default() -> Self {
        SessionConfig {
            priors: Priors::default(),
            stochastic: StochasticParams::default(),
            utility: UtilityWeights::default(),
            k_max: 3,
            replan_max: 32,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl<F: Real + for<'de> Deserialize<'de>> SessionConfig<F> {
    pub fn load(document: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(document)?)
    }
}

impl<F: Real> SessionConfig<F> {
    pub fn stochastic_config(&self, seed: u64) -> StochasticConfig<F> {
        StochasticConfig {
            p_ac_to_liar: self.stochastic.p_ac_to_liar,
            p_ac_to_broken: self.stochastic.p_ac_to_broken,
            seed,
        }
    }
}
