//! Euler–Maruyama simulation of `dX = b(X) dt + dW` in a frozen environment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{make_env, CachedEnv, EnvHandle, EnvironmentSpec, Point};
use crate::error::{Error, Result};
use crate::fields::{drift_from, phi_eps_from, DriftParams, Field};
use crate::rng::{domain, CounterRng, KeyBuilder};
use crate::stats::{batch_se, Estimate, EstimateReport, Variant};

/// Offset of the replicas used for trajectories, disjoint from calibration and probes.
pub const SDE_REPLICA_BASE: u64 = 1 << 42;
/// Time blocks recorded per trajectory.
pub const TIME_BLOCKS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SdeConfig {
    /// Largest allowed step; the horizon is split into `ceil(T/h)` equal steps.
    pub h_step: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub brownian_seed: u64,
    /// First environment replica; trajectory `j` runs in replica `first_replica + j`
    /// unless `quenched` is set, in which case all share `first_replica`.
    pub first_replica: u64,
    pub quenched: bool,
    /// Each step's Brownian increment is the sum of `2^noise_level` finer increments,
    /// so runs at `h` and `h/2` with levels `L` and `L-1` share one Brownian path.
    pub noise_level: u32,
}

impl SdeConfig {
    /// Default step `0.01 (R/4)^2`.
    pub fn default_step(range: f64) -> f64 {
        0.01 * (range / 4.0) * (range / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_step > 0.0 && self.h_step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.h_step)));
        }
        if !(self.horizon >= self.h_step && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must be at least the step {}",
                self.horizon, self.h_step
            )));
        }
        if self.trajectories == 0 {
            return Err(Error::Config("at least one trajectory is required".into()));
        }
        if self.noise_level > 20 {
            return Err(Error::Config(format!("noise level {} is too deep", self.noise_level)));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        libm::ceil(self.horizon / self.h_step - 1e-9) as u64
    }

    pub fn effective_step(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn replica_of(&self, trajectory: u64) -> u64 {
        if self.quenched {
            self.first_replica
        } else {
            self.first_replica + trajectory
        }
    }
}

/// Observables averaged along each path: `[phi, phi_eps, b_1, ..., b_d]`.
pub fn observable_names(dim: usize) -> Vec<alloc::string::String> {
    let mut v = vec!["phi".into(), "phi_eps".into()];
    for i in 0..dim {
        v.push(format!("b{}", i + 1));
    }
    v
}

/// Index of a named observable in [`observable_names`].
pub fn observable_index(dim: usize, name: &str) -> Option<usize> {
    observable_names(dim).iter().position(|n| n == name)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryResult {
    pub trajectory: u64,
    pub replica: u64,
    pub endpoint: Vec<f64>,
    pub slope: Vec<f64>,
    /// Left-endpoint time averages of the observables.
    pub time_average: Vec<f64>,
    /// The same averages over consecutive time blocks.
    pub block_averages: Vec<Vec<f64>>,
    pub max_drift: f64,
    /// Steps at which `|b|` exceeded epsilon.
    pub drift_violations: u64,
    pub steps: u64,
    pub h: f64,
}

/// Gaussian increments of one trajectory, addressable by fine step index.
struct Noise<const D: usize> {
    rng: CounterRng,
    blocks_per_normal: u64,
    fine_per_step: u64,
    scale: f64,
}

impl<const D: usize> Noise<D> {
    fn new(seed: u64, trajectory: u64, level: u32) -> Self {
        let key = KeyBuilder::new(domain::BROWNIAN).push(seed).push(trajectory).finish();
        let fine = 1u64 << level;
        Noise {
            rng: CounterRng::new(key, 0),
            blocks_per_normal: D.div_ceil(2) as u64,
            fine_per_step: fine,
            scale: 1.0 / libm::sqrt(fine as f64),
        }
    }

    /// Standard normal increment of coarse step `k`.
    fn step(&mut self, k: u64, out: &mut [f64; D]) {
        *out = [0.0; D];
        let mut tmp = [0.0; D];
        for f in 0..self.fine_per_step {
            self.rng.seek_block((k * self.fine_per_step + f) * self.blocks_per_normal);
            self.rng.fill_normals(&mut tmp);
            for i in 0..D {
                out[i] += tmp[i];
            }
        }
        if self.fine_per_step > 1 {
            for v in out.iter_mut() {
                *v *= self.scale;
            }
        }
    }
}

/// One Euler–Maruyama path started at the origin of `env`.
pub fn simulate_quenched<const D: usize>(
    field: &Field<D>,
    env: &EnvHandle<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
    trajectory: u64,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    let steps = cfg.steps();
    let h = cfg.effective_step();
    let sqrt_h = libm::sqrt(h);
    let source = CachedEnv::new(env);
    let mut noise = Noise::<D>::new(cfg.brownian_seed, trajectory, cfg.noise_level);
    let n_obs = 2 + D;
    let mut x: Point<D> = [0.0; D];
    let mut xi = [0.0; D];
    let mut total = vec![0.0; n_obs];
    let blocks = TIME_BLOCKS.min(steps as usize).max(1);
    let mut block_sums = vec![vec![0.0; n_obs]; blocks];
    let mut block_len = vec![0u64; blocks];
    let mut max_drift = 0.0f64;
    let mut violations = 0u64;
    let eps = params.epsilon;
    for k in 0..steps {
        let e = field.phi(x, &source);
        let b = drift_from(&e, params);
        let pe = phi_eps_from(&e, params).value;
        let bn = libm::sqrt(b.iter().map(|v| v * v).sum());
        max_drift = max_drift.max(bn);
        if bn > eps {
            violations += 1;
        }
        let blk = (k as u128 * blocks as u128 / steps as u128) as usize;
        let obs = |j: usize| match j {
            0 => e.value,
            1 => pe,
            _ => b[j - 2],
        };
        for j in 0..n_obs {
            let o = obs(j);
            total[j] += o;
            block_sums[blk][j] += o;
        }
        block_len[blk] += 1;
        noise.step(k, &mut xi);
        for i in 0..D {
            x[i] += b[i] * h + sqrt_h * xi[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                step: k,
                message: format!("state became {:?}", x),
            });
        }
    }
    let t = steps as f64 * h;
    Ok(TrajectoryResult {
        trajectory,
        replica: env.replica(),
        endpoint: x.to_vec(),
        slope: x.iter().map(|v| v / t).collect(),
        time_average: total.iter().map(|s| s / steps as f64).collect(),
        block_averages: block_sums
            .into_iter()
            .zip(block_len)
            .map(|(s, n)| s.into_iter().map(|v| v / n.max(1) as f64).collect())
            .collect(),
        max_drift,
        drift_violations: violations,
        steps,
        h,
    })
}

/// Runs trajectory `j` of `cfg` in its environment replica.
pub fn run_trajectory<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
    trajectory: u64,
) -> Result<TrajectoryResult> {
    let env = make_env::<D>(spec, cfg.replica_of(trajectory))?;
    simulate_quenched(field, &env, params, cfg, trajectory)
}

/// All trajectories of `cfg`, in trajectory order.
pub fn run_all<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
) -> Result<Vec<TrajectoryResult>> {
    cfg.validate()?;
    (0..cfg.trajectories as u64)
        .map(|j| run_trajectory(spec, field, params, cfg, j))
        .collect()
}

fn require_dim(results: &[TrajectoryResult], d: usize) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Config("no trajectories".into()));
    }
    if results.iter().any(|r| r.endpoint.len() != d) {
        return Err(Error::Config("trajectory dimension mismatch".into()));
    }
    Ok(())
}

/// Mean of `X_T / T` over independent trajectories with its standard error.
pub fn slope_estimate(results: &[TrajectoryResult], params_eps: f64, lambda: f64) -> Result<EstimateReport> {
    let d = results.first().map_or(0, |r| r.endpoint.len());
    require_dim(results, d)?;
    let est: Vec<Estimate> = (0..d)
        .map(|i| {
            let s: Vec<f64> = results.iter().map(|r| r.slope[i]).collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            Estimate::new(mean, batch_se(&s))
        })
        .collect();
    Ok(EstimateReport::new("annealed_slope", &est, results.len() as u64, Variant::Plain)
        .with_params(Some(params_eps), Some(lambda)))
}

/// Annealed slope: one fresh environment per trajectory.
pub fn annealed_slope<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
) -> Result<EstimateReport> {
    if cfg.quenched {
        return Err(Error::Config("annealed slope needs a fresh replica per trajectory".into()));
    }
    let results = run_all(spec, field, params, cfg)?;
    slope_estimate(&results, params.epsilon, params.lambda)
}

/// Time average of observable `index` pooled over trajectories.
///
/// With several trajectories each one is a batch; a single trajectory falls
/// back to its time blocks.
pub fn time_average_estimate(results: &[TrajectoryResult], index: usize, name: &str) -> Result<EstimateReport> {
    if results.is_empty() || results.iter().any(|r| r.time_average.len() <= index) {
        return Err(Error::Config(format!("observable {name} is not recorded")));
    }
    let values: Vec<f64> = if results.len() >= 2 {
        results.iter().map(|r| r.time_average[index]).collect()
    } else {
        results[0].block_averages.iter().map(|b| b[index]).collect()
    };
    let steps: u64 = results.iter().map(|r| r.steps).sum();
    let mean = results.iter().map(|r| r.time_average[index] * r.steps as f64).sum::<f64>() / steps as f64;
    let est = Estimate::new(mean, batch_se(&values));
    Ok(EstimateReport::new(&format!("time_average_{name}"), &[est], steps, Variant::Plain))
}

/// Environment-seen-from-the-particle average of a named observable.
pub fn env_time_average<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
    observable: &str,
) -> Result<EstimateReport> {
    let idx = observable_index(D, observable)
        .ok_or_else(|| Error::Config(format!("unknown observable {observable}")))?;
    let results = run_all(spec, field, params, cfg)?;
    Ok(time_average_estimate(&results, idx, observable)?.with_params(Some(params.epsilon), Some(params.lambda)))
}

/// Mean endpoint distance between coupled runs at step `h` and `h/2`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceRow {
    pub h: f64,
    pub mean_gap: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log gap` against `log h`.
    pub order: f64,
    /// Least-squares `C` in `gap = C sqrt(h)`.
    pub c_sqrt: f64,
    pub monotone: bool,
}

/// Strong self-convergence over `levels` halvings of `cfg.h_step`, with shared noise.
pub fn self_convergence<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    params: &DriftParams<D>,
    cfg: &SdeConfig,
    levels: u32,
) -> Result<ConvergenceStudy> {
    if levels < 2 {
        return Err(Error::Config("self-convergence needs at least two levels".into()));
    }
    cfg.validate()?;
    // step counts must double exactly for the levels to share a Brownian path
    let base_steps = cfg.steps();
    let run_at = |l: u32| -> Result<Vec<TrajectoryResult>> {
        let c = SdeConfig {
            h_step: cfg.horizon / (base_steps << l) as f64,
            noise_level: levels - l,
            ..cfg.clone()
        };
        run_all(spec, field, params, &c)
    };
    let mut prev = run_at(0)?;
    let mut rows = Vec::new();
    for l in 1..=levels {
        let next = run_at(l)?;
        let gaps: Vec<f64> = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| {
                libm::sqrt(a.endpoint.iter().zip(&b.endpoint).map(|(u, v)| (u - v) * (u - v)).sum())
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        rows.push(ConvergenceRow {
            h: prev[0].h,
            mean_gap: Estimate::new(mean, batch_se(&gaps)),
        });
        prev = next;
    }
    let lx: Vec<f64> = rows.iter().map(|r| libm::log(r.h)).collect();
    let ly: Vec<f64> = rows.iter().map(|r| libm::log(r.mean_gap.value.max(f64::MIN_POSITIVE))).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let num: f64 = rows.iter().map(|r| r.mean_gap.value * libm::sqrt(r.h)).sum();
    let den: f64 = rows.iter().map(|r| r.h).sum();
    let monotone = rows.windows(2).all(|w| w[1].mean_gap.value < w[0].mean_gap.value);
    Ok(ConvergenceStudy {
        rows,
        order: sxy / sxx,
        c_sqrt: num / den,
        monotone,
    })
}
