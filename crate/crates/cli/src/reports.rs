//! Serialized stage outputs.

use driftlab_core::fieldcheck::PropertyReport;
use driftlab_core::sde::ConvergenceStudy;
use driftlab_core::statics::{Calibration, CurvatureFit, IdentityCheck};
use driftlab_core::stats::{Estimate, EstimateReport};
use driftlab_core::theorems::{Clause, Verdict};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub zeta_radius: f64,
    pub rho_radius: f64,
    pub zeta_amplitude: f64,
    pub derivative_norms: [f64; 4],
    pub m: f64,
    pub intensity: f64,
    pub mean_points_per_cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config_hash: String,
    pub seed: u64,
    pub kernel: KernelSummary,
    pub calibrations: Vec<Calibration>,
    pub estimates: Vec<EstimateReport>,
}

impl CalibrationReport {
    pub fn at(&self, epsilon: f64) -> Option<&Calibration> {
        self.calibrations.iter().find(|c| c.epsilon == epsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldcheckReport {
    pub config_hash: String,
    pub working_epsilon: f64,
    /// Largest grid epsilon with every smaller grid value also passing.
    pub largest_validated_epsilon: Option<f64>,
    pub working_epsilon_validated: bool,
    pub report: PropertyReport,
}

/// Drift and velocity estimates at one shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub drift_direct: Vec<Estimate>,
    pub drift_plain: Vec<Estimate>,
    pub drift_identity: Vec<Estimate>,
    pub velocity: Vec<Estimate>,
    pub velocity_plain: Vec<Estimate>,
}

/// Drift and plain velocity at `lambda = 0` over a dedicated, larger replica set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub first_replica: u64,
    pub n: u64,
    pub batches: usize,
    /// Control-variate drift.
    pub drift: Vec<Estimate>,
    /// Plain mean of `phi_eps b`.
    pub velocity: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub epsilon: f64,
    pub d_eps0: Vec<Estimate>,
    pub excludes_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticsReport {
    pub config_hash: String,
    pub epsilon: f64,
    pub n: u64,
    pub g_eps: Estimate,
    pub d_eps0: Vec<Estimate>,
    pub kappa_c: Vec<Estimate>,
    pub kappa_ibp: Estimate,
    pub lambda_star: f64,
    pub lambda_opposite: f64,
    pub gamma: Option<f64>,
    /// `lambda = 0` first, then the configured shifts, the opposite shift and `lambda_star`.
    pub rows: Vec<LambdaRow>,
    pub identities: Vec<IdentityCheck>,
    pub curvature: CurvatureFit,
    pub contrast: ContrastReport,
    /// Grid values where the CI of `d_{eps,0}` excludes zero.
    pub window: Vec<WindowRow>,
    pub window_bounds: Option<(f64, f64)>,
    pub estimates: Vec<EstimateReport>,
}

impl StaticsReport {
    pub fn row(&self, lambda: f64) -> Option<&LambdaRow> {
        self.rows.iter().find(|r| r.lambda == lambda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub horizon: f64,
    pub h: f64,
    pub trajectories: usize,
    pub slope: Vec<Estimate>,
    /// Per component `E[X_T^2]`; Brownian motion gives `T`.
    pub endpoint_variance: Vec<Estimate>,
    pub time_average_phi: Estimate,
    pub static_mean_phi: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub h: f64,
    pub trajectories: usize,
    pub slope: Vec<Estimate>,
    pub velocity: Vec<Estimate>,
    /// Slope SE over the Brownian prediction `1/sqrt(M T)`, per component.
    pub se_ratio: Vec<f64>,
    pub max_drift: f64,
    pub drift_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageRow {
    pub observable: String,
    pub time_average: Estimate,
    /// Mean under the invariant law, `E[phi_eps f]`.
    pub invariant_mean: Estimate,
    pub static_mean: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub h: f64,
    pub environments: usize,
    pub steps: u64,
    pub rows: Vec<TimeAverageRow>,
    pub max_drift: f64,
    pub drift_violations: u64,
}

impl TimeAverageReport {
    pub fn row(&self, observable: &str) -> Option<&TimeAverageRow> {
        self.rows.iter().find(|r| r.observable == observable)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub config_hash: String,
    pub baseline: BaselineReport,
    pub annealed: AnnealedReport,
    pub time_average: TimeAverageReport,
    pub convergence: ConvergenceStudy,
    pub estimates: Vec<EstimateReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    P1,
    P2,
    P3,
    T01,
}

impl TheoremId {
    pub const ALL: [TheoremId; 4] = [TheoremId::P1, TheoremId::P2, TheoremId::P3, TheoremId::T01];

    pub fn name(&self) -> &'static str {
        match self {
            TheoremId::P1 => "p1",
            TheoremId::P2 => "p2",
            TheoremId::P3 => "p3",
            TheoremId::T01 => "t01",
        }
    }

    pub fn needs_simulation(&self) -> bool {
        matches!(self, TheoremId::T01)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub epsilon: f64,
    pub lambda: f64,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    pub value: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: TheoremId,
    pub inputs: TheoremInputs,
    pub estimates: Vec<NamedEstimate>,
    pub clauses: Vec<Clause>,
    pub verdict: Verdict,
}

impl TheoremReport {
    pub fn estimate(&self, name: &str) -> Option<&[Estimate]> {
        self.estimates.iter().find(|e| e.name == name).map(|e| e.value.as_slice())
    }
}
