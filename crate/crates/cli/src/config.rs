//! Experiment configuration file.

use std::path::{Path, PathBuf};

use driftlab_core::env::{EnvironmentSpec, DEFAULT_RANGE};
use driftlab_core::fieldcheck::{eps_grid, CheckConfig};
use driftlab_core::kernel::KernelConfig;
use driftlab_core::sde::SdeConfig;
use driftlab_core::stats::{DEFAULT_BATCHES, MIN_BATCHES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Calibrate,
    Fieldcheck,
    Statics,
    Simulate,
    Theorems,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Calibrate,
        Stage::Fieldcheck,
        Stage::Statics,
        Stage::Simulate,
        Stage::Theorems,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Calibrate => "calibrate",
            Stage::Fieldcheck => "fieldcheck",
            Stage::Statics => "statics",
            Stage::Simulate => "simulate",
            Stage::Theorems => "theorems",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub dim: usize,
    pub range: f64,
    /// Points per unit volume; when absent, three points per ball of radius `range/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub zeta_amplitude: f64,
    pub quad_order: usize,
    pub quad_points_per_cell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticsSection {
    /// Replicas evaluated at the origin.
    pub samples: usize,
    pub batches: usize,
    /// Working epsilon for the theorem checks.
    pub epsilon: f64,
    /// Grid searched for the largest validated epsilon.
    pub eps_grid: Vec<f64>,
    /// Shifts used by the identity suite.
    pub lambdas: Vec<f64>,
    /// Shift for the opposite-direction check.
    pub lambda_opposite: f64,
    pub curvature_grid: Vec<f64>,
    /// Fresh replicas for the drift/velocity contrast at `lambda = 0`, streamed in batches.
    pub contrast_samples: usize,
    pub contrast_batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldcheckSection {
    pub samples: usize,
    pub pairs: usize,
    pub range_replicas: usize,
    pub shift_probes: usize,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    /// Step size; when absent, `0.01 (range/4)^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_step: Option<f64>,
    pub lambda: f64,
    /// Annealed runs: one fresh environment per trajectory.
    pub horizon: f64,
    pub trajectories: usize,
    /// Brownian baseline at epsilon 0.
    pub baseline_horizon: f64,
    pub baseline_trajectories: usize,
    /// Environment-seen-from-the-particle averages; the step defaults to a quarter of `h_step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_average_h_step: Option<f64>,
    pub time_average_horizon: f64,
    pub time_average_environments: usize,
    /// Self-convergence study.
    pub convergence_levels: u32,
    pub convergence_trajectories: usize,
    pub convergence_horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "seed_format")]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    /// Worker threads; 0 lets the runtime decide.
    #[serde(default)]
    pub threads: usize,
    pub environment: EnvironmentSection,
    pub kernel: KernelSection,
    pub statics: StaticsSection,
    pub fieldcheck: FieldcheckSection,
    pub sde: SdeSection,
}

/// Seeds are written as TOML integers when they fit, otherwise as decimal strings.
mod seed_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        if *v <= i64::MAX as u64 {
            s.serialize_i64(*v as i64)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(i) if i >= 0 => Ok(i as u64),
            Repr::Int(i) => Err(serde::de::Error::custom(format!("seed must be non-negative, got {i}"))),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 20_240_601,
            output_dir: PathBuf::from("driftlab-out"),
            stages: Stage::ALL.to_vec(),
            threads: 0,
            environment: EnvironmentSection { dim: 2, range: DEFAULT_RANGE, intensity: None },
            kernel: {
                let k = KernelConfig::default();
                KernelSection {
                    zeta_amplitude: k.zeta_amplitude,
                    quad_order: k.quad_order,
                    quad_points_per_cell: k.quad_points_per_cell,
                }
            },
            statics: StaticsSection {
                samples: 1_000_000,
                batches: DEFAULT_BATCHES,
                epsilon: 1.0,
                eps_grid: eps_grid(),
                lambdas: vec![-0.25, 0.5, 1.0],
                lambda_opposite: -0.25,
                curvature_grid: vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.12],
                contrast_samples: 10_000_000,
                contrast_batches: 100,
            },
            fieldcheck: {
                let c = CheckConfig::default();
                FieldcheckSection {
                    samples: c.samples,
                    pairs: c.pairs,
                    range_replicas: c.range_replicas,
                    shift_probes: c.shift_probes,
                    lambdas: c.lambdas,
                }
            },
            sde: SdeSection {
                h_step: None,
                lambda: 1.0,
                horizon: 10_000.0,
                trajectories: 200,
                baseline_horizon: 10.0,
                baseline_trajectories: 10_000,
                time_average_h_step: None,
                time_average_horizon: 100_000.0,
                time_average_environments: 20,
                convergence_levels: 4,
                convergence_trajectories: 100,
                convergence_horizon: 100.0,
            },
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn env_spec(&self) -> EnvironmentSpec {
        let e = &self.environment;
        match e.intensity {
            Some(nu) => EnvironmentSpec { dim: e.dim, intensity: nu, range: e.range, seed: self.seed },
            None => EnvironmentSpec::with_default_intensity(e.dim, e.range, self.seed),
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            zeta_amplitude: self.kernel.zeta_amplitude,
            quad_order: self.kernel.quad_order,
            quad_points_per_cell: self.kernel.quad_points_per_cell,
        }
    }

    pub fn check_config(&self) -> CheckConfig {
        CheckConfig {
            samples: self.fieldcheck.samples,
            pairs: self.fieldcheck.pairs,
            range_replicas: self.fieldcheck.range_replicas,
            shift_probes: self.fieldcheck.shift_probes,
            box_ranges: CheckConfig::default().box_ranges,
            lambdas: self.fieldcheck.lambdas.clone(),
            seed: self.seed,
        }
    }

    pub fn h_step(&self) -> f64 {
        self.sde.h_step.unwrap_or_else(|| SdeConfig::default_step(self.environment.range))
    }

    pub fn time_average_h_step(&self) -> f64 {
        self.sde.time_average_h_step.unwrap_or_else(|| self.h_step() / 4.0)
    }

    /// Every epsilon that needs a calibration: 0, the grid, the working value and the curvature grid.
    pub fn calibration_epsilons(&self) -> Vec<f64> {
        let mut v = vec![0.0, self.statics.epsilon];
        v.extend(&self.statics.eps_grid);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.env_spec().validate().map_err(|e| invalid(e.to_string()))?;
        if !(2..=3).contains(&self.environment.dim) {
            return Err(invalid(format!(
                "dimension {} is not supported by this build (2 or 3)",
                self.environment.dim
            )));
        }
        self.kernel_config().validate().map_err(|e| invalid(e.to_string()))?;
        let s = &self.statics;
        if s.batches < MIN_BATCHES {
            return Err(invalid(format!("statics.batches must be at least {MIN_BATCHES}")));
        }
        if s.samples < driftlab_core::statics::MIN_CALIBRATION_SAMPLES {
            return Err(invalid(format!(
                "statics.samples must be at least {}",
                driftlab_core::statics::MIN_CALIBRATION_SAMPLES
            )));
        }
        if s.contrast_batches < MIN_BATCHES || s.contrast_samples < s.contrast_batches * MIN_BATCHES {
            return Err(invalid(format!(
                "statics.contrast_batches must be at least {MIN_BATCHES} with {MIN_BATCHES} samples each"
            )));
        }
        let in_unit = |x: &f64| (0.0..=1.0).contains(x);
        if !in_unit(&s.epsilon) || !s.eps_grid.iter().all(in_unit) || !s.curvature_grid.iter().all(in_unit) {
            return Err(invalid("epsilon values must lie in [0, 1]"));
        }
        if s.curvature_grid.len() < 2 {
            return Err(invalid("statics.curvature_grid needs at least two values"));
        }
        let in_sym = |x: &f64| (-1.0..=1.0).contains(x);
        if !s.lambdas.iter().all(in_sym) || !self.fieldcheck.lambdas.iter().all(in_sym) || !in_sym(&self.sde.lambda)
        {
            return Err(invalid("lambda values must lie in [-1, 1]"));
        }
        if !(s.lambda_opposite > -1.0 / 3.0 && s.lambda_opposite < 0.0) {
            return Err(invalid("statics.lambda_opposite must lie in (-1/3, 0)"));
        }
        let sde = &self.sde;
        let h = self.h_step();
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("sde.h_step must be positive"));
        }
        let ht = self.time_average_h_step();
        if !(ht > 0.0 && ht.is_finite() && self.sde.time_average_horizon >= ht) {
            return Err(invalid("sde.time_average_h_step must be positive and below the horizon"));
        }
        for (name, t) in [
            ("horizon", sde.horizon),
            ("baseline_horizon", sde.baseline_horizon),
            ("time_average_horizon", sde.time_average_horizon),
            ("convergence_horizon", sde.convergence_horizon),
        ] {
            if !(t >= h && t.is_finite()) {
                return Err(invalid(format!("sde.{name} must be at least the step {h}")));
            }
        }
        for (name, m) in [
            ("trajectories", sde.trajectories),
            ("baseline_trajectories", sde.baseline_trajectories),
            ("time_average_environments", sde.time_average_environments),
            ("convergence_trajectories", sde.convergence_trajectories),
        ] {
            if m == 0 {
                return Err(invalid(format!("sde.{name} must be positive")));
            }
        }
        if sde.convergence_levels < 2 || sde.convergence_levels > 12 {
            return Err(invalid("sde.convergence_levels must lie in [2, 12]"));
        }
        let f = &self.fieldcheck;
        if f.samples == 0 {
            return Err(invalid("fieldcheck.samples must be positive"));
        }
        Ok(())
    }

    /// Hash of everything that affects results, for stage caching.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.stages = Vec::new();
        canonical.threads = 0;
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(canonical.to_toml().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
