//! Seeded block-production simulator with configurable shocks and known ground truth.
//!
//! Each chain draws its daily blocks from a multinomial over the current node weights.
//! Random streams are split by purpose (initial weights, shock targeting, daily draws), so a
//! change to one shock parameter leaves the other streams untouched.

mod calibration;
mod chain;

pub use calibration::{simulate_metric_panel, MetricPanelConfig};
pub use chain::{expected_metrics, initial_weights, simulate_chain, simulate_event_panel, ChainRun, EventPanel, GroundTruth};

use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Uniform,
    /// Zipf weights `∝ rank^-alpha`.
    PowerLaw { alpha: f64 },
    /// Symmetric Dirichlet draw.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chain_id: String,
    pub n_nodes: usize,
    pub weight_distribution: WeightDistribution,
    pub blocks_per_day: u64,
    /// Share of returning weight that rejoins through the original nodes; also scales the
    /// re-entry rate.
    pub resource_flexibility: f64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::InvalidConfig(alloc::format!("{}: n_nodes must be at least 1", self.chain_id)));
        }
        if self.blocks_per_day == 0 {
            return Err(Error::InvalidConfig(alloc::format!("{}: blocks_per_day must be at least 1", self.chain_id)));
        }
        if !(0.0..=1.0).contains(&self.resource_flexibility) {
            return Err(Error::InvalidConfig(alloc::format!(
                "{}: resource_flexibility must lie in [0, 1]",
                self.chain_id
            )));
        }
        match self.weight_distribution {
            WeightDistribution::PowerLaw { alpha } if !(alpha >= 0.0) => {
                Err(Error::InvalidConfig("power-law alpha must be non-negative".into()))
            }
            WeightDistribution::Dirichlet { concentration } if !(concentration > 0.0) => {
                Err(Error::InvalidConfig("dirichlet concentration must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockKind {
    /// Affected weight leaves linearly over `rollout_days`.
    PolicyRolling,
    /// Affected weight leaves on the event date.
    InfrastructureInstant,
    /// The node set is replaced on the event date by `n_nodes * upgrade_node_multiplier`
    /// nodes with freshly drawn weights.
    ConsensusUpgrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    pub kind: ShockKind,
    pub event_date: NaiveDate,
    #[serde(default)]
    pub affected_share: f64,
    #[serde(default)]
    pub rollout_days: u32,
    /// Weight per day that re-enters once removal is complete, before scaling by flexibility.
    #[serde(default)]
    pub recovery_rate: f64,
    #[serde(default = "one")]
    pub upgrade_node_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl ShockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.affected_share) {
            return Err(Error::InvalidConfig("affected_share must lie in [0, 1]".into()));
        }
        if !(self.recovery_rate >= 0.0) {
            return Err(Error::InvalidConfig("recovery_rate must be non-negative".into()));
        }
        if self.kind == ShockKind::ConsensusUpgrade && !(self.upgrade_node_multiplier > 0.0) {
            return Err(Error::InvalidConfig("upgrade_node_multiplier must be positive".into()));
        }
        Ok(())
    }
}

/// One chain of a scenario together with its own shocks and exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScenario {
    #[serde(flatten)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub shocks: Vec<ShockConfig>,
    #[serde(default)]
    pub exposure: f64,
}

/// A complete simulation: a treated chain, its controls, and the simulated date range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub start_date: NaiveDate,
    pub n_days: u32,
    pub event_date: NaiveDate,
    pub treated: ChainScenario,
    pub controls: Vec<ChainScenario>,
}
