//! Online planning: transition model, tree search and closed-loop episodes.

pub mod episode;
pub(crate) mod rollout;
pub mod search;
pub mod transition;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::{OracleConfig, PredictorConfig};

pub use episode::{run_episode, sample_true_world, EpisodeResult, StepRecord};
pub use search::{optimistic_team_cost, plan_step, ChildStat, PlanContext, PlanResult};
pub use transition::{advance, check_joint, Branch, Speeds, TransitionOutcome};

/// How drone actions are restricted inside the search tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PruningStrategy {
    None,
    /// Nearest PBPs first.
    Dap { k: usize },
    /// Value change from the Monte Carlo oracle.
    Iap { k: usize, oracle: OracleConfig },
    /// Value change from an external predictor process, falling back to `Dap` on failure.
    Liap { k: usize, predictor: PredictorConfig },
}

impl PruningStrategy {
    /// Candidates kept per drone; unpruned search reports 1 since it ignores K.
    pub fn top_k(&self) -> usize {
        match self {
            PruningStrategy::None => 1,
            PruningStrategy::Dap { k } | PruningStrategy::Iap { k, .. } | PruningStrategy::Liap { k, .. } => *k,
        }
    }

    pub fn is_pruned(&self) -> bool {
        !matches!(self, PruningStrategy::None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub rollouts_per_step: usize,
    pub max_tree_depth: usize,
    /// Exploration constant; `None` uses half the mean rollout cost from the root.
    pub ucb_constant: Option<f64>,
    pub pruning: PruningStrategy,
    /// Drop ranked PBPs scoring at or below this.
    pub score_floor: Option<f64>,
    pub seed: u64,
    pub step_cap: usize,
    /// Rejection-sampling attempts for a world in which every goal is reachable.
    pub world_resample_limit: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            rollouts_per_step: 1000,
            max_tree_depth: 40,
            ucb_constant: None,
            pruning: PruningStrategy::None,
            score_floor: None,
            seed: 0,
            step_cap: 200,
            world_resample_limit: 1000,
        }
    }
}

/// The planner variants compared in experiments.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    /// Ground robots only.
    Ctp,
    /// Ground robots and drones, unpruned.
    Sap,
    #[serde(alias = "sap-dap")]
    SapDap,
    #[serde(alias = "sap-iap")]
    SapIap,
    #[serde(alias = "sap-liap")]
    SapLiap,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] =
        [PlannerKind::Ctp, PlannerKind::Sap, PlannerKind::SapDap, PlannerKind::SapIap, PlannerKind::SapLiap];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Ctp => "ctp",
            PlannerKind::Sap => "sap",
            PlannerKind::SapDap => "sap_dap",
            PlannerKind::SapIap => "sap_iap",
            PlannerKind::SapLiap => "sap_liap",
        }
    }

    pub fn uses_drones(self) -> bool {
        self != PlannerKind::Ctp
    }

    /// Pruning strategy for this variant.
    pub fn pruning(self, k: usize, oracle: &OracleConfig, predictor: Option<&PredictorConfig>) -> Result<PruningStrategy> {
        Ok(match self {
            PlannerKind::Ctp | PlannerKind::Sap => PruningStrategy::None,
            PlannerKind::SapDap => PruningStrategy::Dap { k },
            PlannerKind::SapIap => PruningStrategy::Iap { k, oracle: oracle.clone() },
            PlannerKind::SapLiap => {
                let predictor = predictor.ok_or_else(|| Error::Config("sap_liap needs a predictor command".into()))?;
                PruningStrategy::Liap { k, predictor: predictor.clone() }
            }
        })
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '+'], "_");
        let kind = match key.as_str() {
            "ctp" => PlannerKind::Ctp,
            "sap" => PlannerKind::Sap,
            "sap_dap" | "dap" => PlannerKind::SapDap,
            "sap_iap" | "iap" => PlannerKind::SapIap,
            "sap_liap" | "liap" => PlannerKind::SapLiap,
            _ => return Err(Error::Config(format!("unknown planner `{s}`"))),
        };
        Ok(kind)
    }
}
