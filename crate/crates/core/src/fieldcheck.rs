//! Runtime verification of the uniform bounds, Lipschitz bounds, structure and
//! dependence range of the constructed fields.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::{make_env, shifted_view, EnvironmentSpec, Point};
use crate::error::{Error, Result};
use crate::fields::{c_from_hessian, drift_from, h_matrix, phi_eps_from, DriftParams, Field, FieldEval};
use crate::rng::{domain, CounterRng, KeyBuilder};
use crate::statics::Calibration;
use crate::stats::correlation;

/// Offset separating probe replicas from the replicas used for calibration.
pub const PROBE_REPLICA_BASE: u64 = 1 << 40;
/// Offset of the replicas used by the dependence-range test.
pub const RANGE_REPLICA_BASE: u64 = 1 << 41;
/// Offending samples kept per check.
pub const MAX_EXAMPLES: usize = 10;
/// Epsilon grid searched for the largest validated value.
pub const EPS_GRID_STEP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckConfig {
    /// Sampled `(x, replica)` pairs for the uniform bounds.
    pub samples: usize,
    /// Close pairs for the Lipschitz bounds.
    pub pairs: usize,
    /// Replicas for the dependence-range correlation test.
    pub range_replicas: usize,
    /// Probes for bitwise shift covariance.
    pub shift_probes: usize,
    /// Probe locations are uniform in `[-box, box]^d`, in units of the range.
    pub box_ranges: f64,
    pub lambdas: Vec<f64>,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            samples: 100_000,
            pairs: 10_000,
            range_replicas: 100_000,
            shift_probes: 100,
            box_ranges: 4.0,
            lambdas: alloc::vec![-1.0, 0.0, 1.0],
            seed: 0,
        }
    }
}

/// A sample that broke a bound.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub replica: u64,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub observed: f64,
}

/// Outcome of one uniform or Lipschitz bound.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundCheck {
    pub name: String,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub bound: f64,
    /// Largest observed value (for Lipschitz checks, the largest ratio).
    pub worst: f64,
    pub checked: u64,
    pub violations: u64,
    pub examples: Vec<Violation>,
}

impl BoundCheck {
    fn new(name: &str, epsilon: Option<f64>, lambda: Option<f64>, bound: f64) -> Self {
        BoundCheck {
            name: name.into(),
            epsilon,
            lambda,
            bound,
            worst: 0.0,
            checked: 0,
            violations: 0,
            examples: Vec::new(),
        }
    }

    fn record(&mut self, observed: f64, ok: bool, at: impl FnOnce() -> Violation) {
        self.checked += 1;
        if observed > self.worst || observed.is_nan() {
            self.worst = observed;
        }
        if !ok || observed.is_nan() {
            self.violations += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(at());
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Correlation of the first drift component at two separated points across replicas.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RangeCheck {
    pub epsilon: f64,
    pub separation: f64,
    pub correlation: f64,
    /// `3 / sqrt(n)`.
    pub threshold: f64,
    pub n: u64,
    /// True when the separation exceeds the range and independence is expected.
    pub expect_independent: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropertyReport {
    pub dim: usize,
    pub range: f64,
    pub epsilons: Vec<f64>,
    pub bounds: Vec<BoundCheck>,
    pub range_checks: Vec<RangeCheck>,
    pub pass: bool,
}

impl PropertyReport {
    /// Whether every check at `epsilon` (and every epsilon-free check) passed.
    pub fn pass_at(&self, epsilon: f64) -> bool {
        self.bounds
            .iter()
            .filter(|b| b.epsilon.is_none_or(|e| e == epsilon))
            .all(BoundCheck::pass)
            && self
                .range_checks
                .iter()
                .filter(|r| r.epsilon == epsilon)
                .all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&BoundCheck> {
        self.bounds.iter().filter(|b| !b.pass()).collect()
    }

    /// Converts a failed report into the structured error.
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            return Ok(self);
        }
        let mut msg = String::new();
        for b in self.failures() {
            msg += &format!(
                "{} (eps {:?}, lambda {:?}): {} of {} samples exceed {}; first at {:?}; ",
                b.name,
                b.epsilon,
                b.lambda,
                b.violations,
                b.checked,
                b.bound,
                b.examples.first()
            );
        }
        for r in self.range_checks.iter().filter(|r| !r.pass) {
            msg += &format!(
                "range test at separation {} (eps {}): correlation {} vs threshold {}; ",
                r.separation, r.epsilon, r.correlation, r.threshold
            );
        }
        Err(Error::Inconsistent(format!("field property violations: {msg}")))
    }
}

fn probe_point<const D: usize>(seed: u64, index: u64, half_width: f64) -> Point<D> {
    let key = KeyBuilder::new(domain::PROBE).push(seed).push(index).finish();
    let mut rng = CounterRng::new(key, 0);
    core::array::from_fn(|_| (2.0 * rng.uniform() - 1.0) * half_width)
}

/// Partner of a probe at log-uniform distance in `[1e-3, 1e-1]` and uniform direction.
fn close_partner<const D: usize>(seed: u64, index: u64, x: Point<D>) -> Point<D> {
    let key = KeyBuilder::new(domain::PROBE).push(seed).push(index).push(1).finish();
    let mut rng = CounterRng::new(key, 0);
    let dist = libm::pow(10.0, -3.0 + 2.0 * rng.uniform());
    let mut dir = [0.0; D];
    rng.fill_normals(&mut dir);
    let norm = libm::sqrt(dir.iter().map(|v| v * v).sum());
    core::array::from_fn(|k| x[k] + dist * dir[k] / norm)
}

fn vnorm<const D: usize>(v: &[f64; D]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn vdiff<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    libm::sqrt(s)
}

/// Runs every bound, structure and range check for each calibration's epsilon.
pub fn verify_field_properties<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    calibs: &[Calibration],
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    for c in calibs {
        c.check_dim(D)?;
    }
    let half = cfg.box_ranges * spec.range;
    let params: Vec<(f64, Vec<DriftParams<D>>)> = calibs
        .iter()
        .map(|c| (c.epsilon, cfg.lambdas.iter().map(|&l| c.drift_params::<D>(l)).collect()))
        .collect();
    let mut bounds = Vec::new();

    // field-level bounds, independent of epsilon
    let mut phi_range = BoundCheck::new("phi_in_unit_interval", None, None, 1.0);
    let mut phi_grad = BoundCheck::new("phi_gradient", None, None, 1.0);
    let mut phi_second = BoundCheck::new("phi_second_derivative", None, None, 1.0);
    let mut hess_sym = BoundCheck::new("hessian_symmetry", None, None, 0.0);
    let mut c_bound = BoundCheck::new("c_bound", None, None, 0.125);
    let mut h_skew = BoundCheck::new("h_skew_symmetry", None, None, 0.0);

    struct PerEps<const D: usize> {
        value: BoundCheck,
        grad: BoundCheck,
        second: BoundCheck,
        drift: Vec<BoundCheck>,
        lip0: BoundCheck,
        lip1: BoundCheck,
        lip2: BoundCheck,
        lip_drift: Vec<BoundCheck>,
    }
    let mut per: Vec<PerEps<D>> = params
        .iter()
        .map(|(eps, ps)| {
            let d = D as f64;
            let k = eps / (d - eps);
            PerEps {
                value: BoundCheck::new("phi_eps_range", Some(*eps), None, (d + eps) / (d - eps)),
                grad: BoundCheck::new("phi_eps_gradient", Some(*eps), None, k),
                second: BoundCheck::new("phi_eps_second_derivative", Some(*eps), None, k),
                drift: ps
                    .iter()
                    .map(|p| BoundCheck::new("drift_bound", Some(*eps), Some(p.lambda), *eps))
                    .collect(),
                lip0: BoundCheck::new("phi_eps_lipschitz", Some(*eps), None, k),
                lip1: BoundCheck::new("phi_eps_gradient_lipschitz", Some(*eps), None, k),
                lip2: BoundCheck::new("phi_eps_second_lipschitz", Some(*eps), None, k),
                lip_drift: ps
                    .iter()
                    .map(|p| BoundCheck::new("drift_lipschitz", Some(*eps), Some(p.lambda), 1.0))
                    .collect(),
            }
        })
        .collect();
    let mut c_lip = BoundCheck::new("c_lipschitz", None, None, 0.125);
    let mut shift = BoundCheck::new("shift_covariance", None, None, 0.0);

    for i in 0..cfg.samples as u64 {
        let replica = PROBE_REPLICA_BASE + i;
        let env = make_env::<D>(spec, replica)?;
        let x = probe_point::<D>(cfg.seed, i, half);
        let e = field.phi(x, &env);
        let at = || Violation { replica, x: x.to_vec(), y: None, observed: 0.0 };
        let with = |v: f64| move || Violation { observed: v, ..at() };

        phi_range.record(e.value.abs(), (0.0..=1.0).contains(&e.value), with(e.value));
        let g = e.gradient.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        phi_grad.record(g, g <= 1.0, with(g));
        let s = (0..D).fold(0.0f64, |a, j| a.max(e.hessian[j][j].abs()));
        phi_second.record(s, s <= 1.0, with(s));
        let mut asym = 0.0f64;
        for a in 0..D {
            for b in 0..D {
                asym = asym.max((e.hessian[a][b] - e.hessian[b][a]).abs());
            }
        }
        hess_sym.record(asym, asym == 0.0, with(asym));
        let h = h_matrix(&e.gradient);
        let mut skew = 0.0f64;
        for a in 0..D {
            for b in 0..D {
                skew = skew.max((h[a][b] + h[b][a]).abs());
            }
        }
        h_skew.record(skew, skew == 0.0, with(skew));
        let c = c_from_hessian(&e.hessian);
        let cn = vnorm(&c);
        c_bound.record(cn, cn <= 0.125, with(cn));

        for (pe, (eps, ps)) in per.iter_mut().zip(&params) {
            let d = D as f64;
            let lo = (d - eps) / (d + eps);
            let hi = (d + eps) / (d - eps);
            let f = phi_eps_from(&e, &ps[0]);
            pe.value.record(f.value, f.value >= lo && f.value <= hi, with(f.value));
            let gm = f.gradient.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            pe.grad.record(gm, gm <= pe.grad.bound, with(gm));
            let sm = (0..D).fold(0.0f64, |a, j| a.max(f.hessian[j][j].abs()));
            pe.second.record(sm, sm <= pe.second.bound, with(sm));
            for (chk, p) in pe.drift.iter_mut().zip(ps) {
                let b = vnorm(&drift_from(&e, p));
                chk.record(b, b <= *eps, with(b));
            }
        }

        if i < cfg.pairs as u64 {
            let y = close_partner(cfg.seed, i, x);
            let ey = field.phi(y, &env);
            let dist = vdiff(&x, &y);
            let pair = |v: f64| Violation { replica, x: x.to_vec(), y: Some(y.to_vec()), observed: v };
            let cy = c_from_hessian(&ey.hessian);
            let r = vdiff(&c, &cy) / dist;
            c_lip.record(r, r <= 0.125, || pair(r));
            for (pe, (_, ps)) in per.iter_mut().zip(&params) {
                let fx = phi_eps_from(&e, &ps[0]);
                let fy = phi_eps_from(&ey, &ps[0]);
                let r0 = (fx.value - fy.value).abs() / dist;
                let b0 = pe.lip0.bound;
                pe.lip0.record(r0, r0 <= b0, || pair(r0));
                let r1 = (0..D).fold(0.0f64, |a, j| a.max((fx.gradient[j] - fy.gradient[j]).abs())) / dist;
                let b1 = pe.lip1.bound;
                pe.lip1.record(r1, r1 <= b1, || pair(r1));
                let r2 = (0..D).fold(0.0f64, |a, j| a.max((fx.hessian[j][j] - fy.hessian[j][j]).abs())) / dist;
                let b2 = pe.lip2.bound;
                pe.lip2.record(r2, r2 <= b2, || pair(r2));
                for (chk, p) in pe.lip_drift.iter_mut().zip(ps) {
                    let r = vdiff(&drift_from(&e, p), &drift_from(&ey, p)) / dist;
                    chk.record(r, r <= 1.0, || pair(r));
                }
            }
        }

        if i < cfg.shift_probes as u64 {
            let view = shifted_view(&env, x);
            let same = field.phi([0.0; D], &view) == e;
            shift.record(if same { 0.0 } else { 1.0 }, same, with(1.0));
        }
    }

    bounds.extend([phi_range, phi_grad, phi_second, hess_sym, h_skew, c_bound, c_lip, shift]);
    for pe in per {
        bounds.extend([pe.value, pe.grad, pe.second, pe.lip0, pe.lip1, pe.lip2]);
        bounds.extend(pe.drift);
        bounds.extend(pe.lip_drift);
    }

    let range_checks = range_test(spec, field, calibs, cfg.range_replicas)?;
    let pass = bounds.iter().all(BoundCheck::pass) && range_checks.iter().all(|r| r.pass);
    Ok(PropertyReport {
        dim: D,
        range: spec.range,
        epsilons: calibs.iter().map(|c| c.epsilon).collect(),
        bounds,
        range_checks,
        pass,
    })
}

/// Correlation of `b_1(0)` with `b_1(z)` across independent replicas, for `z`
/// transverse to the first axis at distances `2R` (independence expected) and
/// `R/8` (dependence expected).
pub fn range_test<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    calibs: &[Calibration],
    n: usize,
) -> Result<Vec<RangeCheck>> {
    if n < 3 || calibs.is_empty() {
        return Ok(Vec::new());
    }
    let seps = [(2.0 * spec.range, true), (spec.range / 8.0, false)];
    let mut evals: Vec<[FieldEval<D>; 3]> = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let env = make_env::<D>(spec, RANGE_REPLICA_BASE + i)?;
        let at = |s: f64| {
            let mut z = [0.0; D];
            z[1] = s;
            field.phi(z, &env)
        };
        evals.push([field.phi([0.0; D], &env), at(seps[0].0), at(seps[1].0)]);
    }
    let threshold = 3.0 / libm::sqrt(n as f64);
    let mut out = Vec::new();
    for c in calibs {
        let p = c.drift_params::<D>(0.0);
        let b0: Vec<f64> = evals.iter().map(|e| drift_from(&e[0], &p)[0]).collect();
        for (j, &(sep, indep)) in seps.iter().enumerate() {
            let bz: Vec<f64> = evals.iter().map(|e| drift_from(&e[j + 1], &p)[0]).collect();
            let rho = correlation(&b0, &bz);
            let pass = if indep {
                rho.abs() <= threshold
            } else {
                // a vanishing drift carries no dependence to detect
                c.epsilon == 0.0 || rho.abs() > threshold
            };
            out.push(RangeCheck {
                epsilon: c.epsilon,
                separation: sep,
                correlation: rho,
                threshold,
                n: n as u64,
                expect_independent: indep,
                pass,
            });
        }
    }
    Ok(out)
}

/// Epsilon grid `{step, 2 step, ..., 1}`.
pub fn eps_grid() -> Vec<f64> {
    let n = libm::round(1.0 / EPS_GRID_STEP) as usize;
    (1..=n).map(|i| libm::round(i as f64 * EPS_GRID_STEP * 1e6) / 1e6).collect()
}

/// Largest grid epsilon such that every grid value up to it passes.
pub fn largest_validated_eps(report: &PropertyReport) -> Option<f64> {
    let mut best = None;
    let mut eps = report.epsilons.clone();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for e in eps {
        if e == 0.0 {
            continue;
        }
        if report.pass_at(e) {
            best = Some(e);
        } else {
            break;
        }
    }
    best
}
