use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, SteeringVector};
use crate::error::Result;
use crate::C64;

/// One estimated path: spatial frequencies plus one physical gain per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub aoa_freq: f64,
    pub aod_freq: f64,
    /// Ĥ_p = gains[p]·a_BS(aoa)·a_UE(aod)ᴴ.
    pub gains: Vec<C64>,
}

impl PathEstimate {
    pub fn mean_power(&self) -> f64 {
        if self.gains.is_empty() {
            return 0.0;
        }
        self.gains.iter().map(|g| g.norm_sqr()).sum::<f64>() / self.gains.len() as f64
    }
}

/// Inner grid-refinement trace for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementDiagnostics {
    pub iterations: usize,
    /// The iteration cap was hit before |β_last − β| < ε.
    pub capped: bool,
    pub final_beta: f64,
    pub beta_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEstimate {
    pub user: usize,
    pub paths: Vec<PathEstimate>,
    pub refinement: Option<RefinementDiagnostics>,
}

impl UserEstimate {
    pub fn empty(user: usize) -> Self {
        Self { user, paths: Vec::new(), refinement: None }
    }

    /// The strongest path, taken as the user's line-of-sight estimate.
    pub fn los(&self) -> Option<&PathEstimate> {
        self.paths
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.mean_power().total_cmp(&b.1.mean_power()).then(b.0.cmp(&a.0)))
            .map(|(_, p)| p)
    }

    pub fn los_steering_bs(&self, n_ant_bs: usize) -> Option<Result<SteeringVector>> {
        self.los().map(|p| steering_vector(n_ant_bs, p.aoa_freq))
    }

    pub fn los_steering_ue(&self, n_ant_ue: usize) -> Option<Result<SteeringVector>> {
        self.los().map(|p| steering_vector(n_ant_ue, p.aod_freq))
    }

    /// Mean gain magnitude across subcarriers of the LOS estimate (display only).
    pub fn mean_gain_magnitude(&self) -> f64 {
        self.los()
            .map(|p| p.gains.iter().map(|g| g.norm()).sum::<f64>() / p.gains.len().max(1) as f64)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub scheme: String,
    /// Indexed by user.
    pub users: Vec<UserEstimate>,
    /// Users in the order the estimator picked them.
    pub selection_order: Vec<usize>,
    /// Σ_p ‖b_p‖² after each outer iteration.
    pub residual_energy: Vec<f64>,
    /// Per-subcarrier selected column indices, for estimators that select per subcarrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_subcarrier_support: Option<Vec<Vec<usize>>>,
}

impl EstimateResult {
    pub fn empty(scheme: &str, n_users: usize) -> Self {
        Self {
            scheme: scheme.to_string(),
            users: (0..n_users).map(UserEstimate::empty).collect(),
            selection_order: Vec::new(),
            residual_energy: Vec::new(),
            per_subcarrier_support: None,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
