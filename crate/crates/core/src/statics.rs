//! Static expectations over fresh environment replicas evaluated at a fixed point.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::{make_env, EnvironmentSpec, Point};
use crate::error::{Error, Result};
use crate::fields::{c_from_hessian, drift_parts, DriftParams, Field};
use crate::stats::{
    combined_se, difference, monomial_fit, BatchedMeans, Estimate, EstimateReport, Variant, CI_Z, MIN_BATCHES,
};

/// Minimum replica count accepted by [`calibrate`].
pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;

/// The parts of a field evaluation the static estimators need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OriginSample<const D: usize> {
    pub phi: f64,
    pub grad: [f64; D],
    pub c: [f64; D],
}

/// Field samples at one location, one per replica.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticSamples<const D: usize> {
    pub samples: Vec<OriginSample<D>>,
    pub first_replica: u64,
    pub batches: usize,
}

pub fn origin_sample<const D: usize>(
    spec: EnvironmentSpec,
    field: &Field<D>,
    replica: u64,
    at: Point<D>,
) -> Result<OriginSample<D>> {
    let env = make_env::<D>(spec, replica)?;
    let e = field.phi(at, &env);
    Ok(OriginSample {
        phi: e.value,
        grad: e.gradient,
        c: c_from_hessian(&e.hessian),
    })
}

impl<const D: usize> StaticSamples<D> {
    /// Evaluates `n` consecutive replicas starting at `first_replica`, at the origin.
    pub fn draw(
        spec: EnvironmentSpec,
        field: &Field<D>,
        first_replica: u64,
        n: usize,
        batches: usize,
    ) -> Result<Self> {
        Self::draw_at(spec, field, first_replica, n, batches, [0.0; D])
    }

    pub fn draw_at(
        spec: EnvironmentSpec,
        field: &Field<D>,
        first_replica: u64,
        n: usize,
        batches: usize,
        at: Point<D>,
    ) -> Result<Self> {
        let samples = (0..n as u64)
            .map(|i| origin_sample(spec, field, first_replica + i, at))
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(samples, first_replica, batches)
    }

    pub fn from_samples(samples: Vec<OriginSample<D>>, first_replica: u64, batches: usize) -> Result<Self> {
        if batches < MIN_BATCHES {
            return Err(Error::Config(format!("at least {MIN_BATCHES} batches required, got {batches}")));
        }
        if samples.len() < batches {
            return Err(Error::Config(format!(
                "{} samples cannot fill {batches} batches",
                samples.len()
            )));
        }
        Ok(StaticSamples { samples, first_replica, batches })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn means(&self, width: usize, mut f: impl FnMut(&OriginSample<D>, &mut [f64])) -> BatchedMeans {
        BatchedMeans::accumulate(self.samples.len(), self.batches, width, |i, out| f(&self.samples[i], out))
    }
}

/// Estimated global constants for one value of epsilon.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    pub dim: usize,
    pub epsilon: f64,
    pub n: u64,
    pub batches: usize,
    pub first_replica: u64,
    /// Mean of the field.
    pub mu_phi: Estimate,
    /// Sample variance of the field.
    pub phi_variance: f64,
    /// Mean of `1/phi_eps`.
    pub g_eps: Estimate,
    /// Mean of `c/phi_eps`, control-variate form. Used for the drift shift.
    pub a_eps: Vec<Estimate>,
    /// Mean of `c/phi_eps`, plain form.
    pub a_eps_plain: Vec<Estimate>,
    /// `eps * a_eps`.
    pub d_eps0: Vec<Estimate>,
    /// Mean of `c phi`.
    pub kappa_c: Vec<Estimate>,
    /// `(1/(8 d^2)) sum_{j>=2} E[(d_j phi)^2]`, the integrated-by-parts form of the first component of `kappa_c`.
    pub kappa_ibp: Estimate,
    /// Mean of `c`.
    pub mean_c: Vec<Estimate>,
    /// Mean of the gradient of `phi_eps`.
    pub mean_grad_phi_eps: Vec<Estimate>,
}

impl Calibration {
    pub fn drift_params<const D: usize>(&self, lambda: f64) -> DriftParams<D> {
        DriftParams::new(
            self.epsilon,
            lambda,
            self.mu_phi.value,
            core::array::from_fn(|i| self.a_eps[i].value),
        )
    }

    /// Same constants with a different epsilon is not meaningful; this only checks the dimension.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Config(format!(
                "calibration is for dimension {}, not {dim}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Column layout of the per-sample quantities behind a calibration.
struct Layout {
    d: usize,
}

impl Layout {
    const PHI: usize = 0;
    const INV: usize = 1;
    fn c_over(&self) -> usize {
        2
    }
    fn cv(&self) -> usize {
        2 + self.d
    }
    fn c(&self) -> usize {
        2 + 2 * self.d
    }
    fn c_phi(&self) -> usize {
        2 + 3 * self.d
    }
    fn grad(&self) -> usize {
        2 + 4 * self.d
    }
    fn sumsq(&self) -> usize {
        2 + 5 * self.d
    }
    fn phi2(&self) -> usize {
        3 + 5 * self.d
    }
    fn width(&self) -> usize {
        4 + 5 * self.d
    }
}

fn calibration_means<const D: usize>(samples: &StaticSamples<D>, epsilon: f64) -> BatchedMeans {
    let l = Layout { d: D };
    let k = epsilon / D as f64;
    samples.means(l.width(), |s, o| {
        let inv = 1.0 / (1.0 + k * s.phi);
        o[Layout::PHI] += s.phi;
        o[Layout::INV] += inv;
        let mut sumsq = 0.0;
        for i in 0..D {
            o[l.c_over() + i] += s.c[i] * inv;
            o[l.cv() + i] -= k * s.phi * s.c[i] * inv;
            o[l.c() + i] += s.c[i];
            o[l.c_phi() + i] += s.c[i] * s.phi;
            o[l.grad() + i] += s.grad[i];
            if i > 0 {
                sumsq += s.grad[i] * s.grad[i];
            }
        }
        o[l.sumsq()] += sumsq;
        o[l.phi2()] += s.phi * s.phi;
    })
}

/// Estimates the global constants at `epsilon` from the given samples.
pub fn calibrate<const D: usize>(samples: &StaticSamples<D>, epsilon: f64) -> Result<Calibration> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} replicas, got {}",
            samples.len()
        )));
    }
    let l = Layout { d: D };
    let k = epsilon / D as f64;
    let m = calibration_means(samples, epsilon);
    let phi_variance = m.total[l.phi2()] - m.total[Layout::PHI] * m.total[Layout::PHI];
    if !(phi_variance > 1e-14 * m.total[l.phi2()].max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(format!(
            "field variance {phi_variance:e} at the origin; the kernel or intensity is mis-tuned"
        )));
    }
    let scale = |v: &[f64]| 1.0 + k * v[Layout::PHI];
    let a_eps: Vec<Estimate> = (0..D).map(|i| m.estimate(|v| scale(v) * v[l.cv() + i])).collect();
    let d_eps0 = (0..D)
        .map(|i| m.estimate(|v| epsilon * scale(v) * v[l.cv() + i]))
        .collect();
    let ibp = 1.0 / (8.0 * (D * D) as f64);
    Ok(Calibration {
        dim: D,
        epsilon,
        n: m.n,
        batches: m.num_batches(),
        first_replica: samples.first_replica,
        mu_phi: m.mean(Layout::PHI),
        phi_variance,
        g_eps: m.estimate(|v| scale(v) * v[Layout::INV]),
        a_eps_plain: (0..D).map(|i| m.estimate(|v| scale(v) * v[l.c_over() + i])).collect(),
        a_eps,
        d_eps0,
        kappa_c: (0..D).map(|i| m.mean(l.c_phi() + i)).collect(),
        kappa_ibp: m.estimate(|v| ibp * v[l.sumsq()]),
        mean_c: (0..D).map(|i| m.mean(l.c() + i)).collect(),
        mean_grad_phi_eps: (0..D).map(|i| m.estimate(|v| k * v[l.grad() + i] / scale(v))).collect(),
    })
}

fn report<const D: usize>(
    name: &str,
    est: &[Estimate],
    n: u64,
    variant: Variant,
    calib: &Calibration,
    lambda: f64,
) -> EstimateReport {
    EstimateReport::new(name, est, n, variant).with_params(Some(calib.epsilon), Some(lambda))
}

/// Expected local drift `E[b(0)]` estimated directly from the samples.
///
/// The control-variate form subtracts `grad phi_eps / 2` and `eps (1 + k mu) c`, both of mean zero.
pub fn static_drift<const D: usize>(
    samples: &StaticSamples<D>,
    calib: &Calibration,
    lambda: f64,
    variant: Variant,
) -> Result<EstimateReport> {
    calib.check_dim(D)?;
    let p = calib.drift_params::<D>(lambda);
    let eps = p.epsilon;
    let k = p.k();
    let den = 1.0 + k * p.mu_phi;
    let m = match variant {
        Variant::Plain => samples.means(D, |s, o| {
            let b = drift_parts(s.phi, &s.grad, &s.c, &p);
            for i in 0..D {
                o[i] += b[i];
            }
        }),
        Variant::ControlVariate => samples.means(D, |s, o| {
            let b = drift_parts(s.phi, &s.grad, &s.c, &p);
            for i in 0..D {
                o[i] += b[i] - 0.5 * k * s.grad[i] / den - eps * den * s.c[i];
            }
        }),
        Variant::Identity => {
            let est = static_drift_identity(calib, lambda);
            return Ok(report::<D>("static_drift", &est, calib.n, variant, calib, lambda));
        }
    };
    let est: Vec<Estimate> = (0..D).map(|i| m.mean(i)).collect();
    Ok(report::<D>("static_drift", &est, m.n, variant, calib, lambda))
}

/// `d_{eps,0} (1 + lambda g)` with a first-order propagated standard error.
pub fn static_drift_identity(calib: &Calibration, lambda: f64) -> Vec<Estimate> {
    let g = calib.g_eps;
    let f = 1.0 + lambda * g.value;
    calib
        .d_eps0
        .iter()
        .map(|d| Estimate::new(d.value * f, combined_se(&[f * d.se, d.value * lambda * g.se])))
        .collect()
}

/// The two pieces of the plain drift estimator: the gradient term and the remainder.
pub fn static_drift_decomposed<const D: usize>(
    samples: &StaticSamples<D>,
    calib: &Calibration,
    lambda: f64,
) -> (Vec<Estimate>, Vec<Estimate>) {
    let p = calib.drift_params::<D>(lambda);
    let k = p.k();
    let den = 1.0 + k * p.mu_phi;
    let m = samples.means(2 * D, |s, o| {
        let inv = den / (1.0 + k * s.phi);
        for i in 0..D {
            o[i] += 0.5 * k * s.grad[i] / den * inv;
            o[D + i] += p.epsilon * (s.c[i] + p.lambda * p.a_eps[i]) * inv;
        }
    });
    ((0..D).map(|i| m.mean(i)).collect(), (0..D).map(|i| m.mean(D + i)).collect())
}

/// Asymptotic velocity as the mean of `phi_eps b` under the static law.
///
/// The plain form averages `phi_eps b` over the samples. The control-variate
/// form removes the two mean-zero terms, leaving `eps alpha`; its error comes
/// from the calibration of `alpha` alone. Both include that calibration error.
pub fn velocity<const D: usize>(
    samples: &StaticSamples<D>,
    calib: &Calibration,
    lambda: f64,
    variant: Variant,
) -> Result<EstimateReport> {
    calib.check_dim(D)?;
    let p = calib.drift_params::<D>(lambda);
    let eps = p.epsilon;
    let alpha_se = |i: usize| (eps * lambda * calib.a_eps[i].se).abs();
    let est: Vec<Estimate> = match variant {
        Variant::Plain => {
            let k = p.k();
            let den = 1.0 + k * p.mu_phi;
            let m = samples.means(D, |s, o| {
                let b = drift_parts(s.phi, &s.grad, &s.c, &p);
                let pe = (1.0 + k * s.phi) / den;
                for i in 0..D {
                    o[i] += pe * b[i];
                }
            });
            (0..D)
                .map(|i| {
                    let e = m.mean(i);
                    Estimate::new(e.value, combined_se(&[e.se, alpha_se(i)]))
                })
                .collect()
        }
        Variant::ControlVariate | Variant::Identity => {
            let alpha = p.alpha();
            (0..D).map(|i| Estimate::new(eps * alpha[i], alpha_se(i))).collect()
        }
    };
    Ok(report::<D>("velocity", &est, samples.len() as u64, variant, calib, lambda))
}

/// `-1/g`, the shift at which the expected local drift vanishes.
pub fn lambda_star(calib: &Calibration) -> Result<f64> {
    let g = calib.g_eps;
    if g.value < 1.0 - 4.0 * g.se {
        return Err(Error::Inconsistent(format!(
            "g = {} (se {}) is below its lower bound 1",
            g.value, g.se
        )));
    }
    if g.value > 3.0 + 4.0 * g.se {
        return Err(Error::Inconsistent(format!(
            "g = {} (se {}) is above its upper bound 3",
            g.value, g.se
        )));
    }
    Ok(-1.0 / g.value)
}

/// `gamma = -(1 + lambda g)/lambda` for `lambda` in `(-1/3, 0)`.
pub fn gamma_coeff(g: f64, lambda: f64) -> Result<f64> {
    if !(lambda > -1.0 / 3.0 && lambda < 0.0) {
        return Err(Error::Domain(format!("lambda must lie in (-1/3, 0), got {lambda}")));
    }
    Ok(-(1.0 + lambda * g) / lambda)
}

/// Static-law mean of an observable in `[phi, phi_eps, b_1, ..., b_d]`, optionally
/// weighted by `phi_eps` (the mean under the invariant law of the environment seen
/// from the particle).
pub fn observable_mean<const D: usize>(
    samples: &StaticSamples<D>,
    calib: &Calibration,
    lambda: f64,
    index: usize,
    weighted: bool,
) -> Result<Estimate> {
    if index >= 2 + D {
        return Err(Error::Config(format!("observable index {index} out of range")));
    }
    let p = calib.drift_params::<D>(lambda);
    let k = p.k();
    let den = 1.0 + k * p.mu_phi;
    let m = samples.means(1, |s, o| {
        let pe = (1.0 + k * s.phi) / den;
        let f = match index {
            0 => s.phi,
            1 => pe,
            j => drift_parts(s.phi, &s.grad, &s.c, &p)[j - 2],
        };
        o[0] += if weighted { pe * f } else { f };
    });
    Ok(m.mean(0))
}

/// One identity check: `lhs` and `rhs` agree within `z` combined standard errors.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentityCheck {
    pub name: String,
    pub component: usize,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
    pub pass: bool,
}

impl IdentityCheck {
    pub fn new(name: &str, component: usize, lhs: Estimate, rhs: Estimate, z: f64) -> Self {
        let diff = difference(lhs, rhs);
        IdentityCheck {
            name: name.into(),
            component,
            lhs,
            rhs,
            z,
            pass: diff.contains(0.0, z),
        }
    }
}

/// All static identities at the calibration's epsilon, on shared samples.
pub fn identity_suite<const D: usize>(
    samples: &StaticSamples<D>,
    calib: &Calibration,
    lambdas: &[f64],
) -> Result<Vec<IdentityCheck>> {
    let mut out = Vec::new();
    let z = CI_Z;
    let zero = Estimate::exact(0.0);
    for i in 0..D {
        out.push(IdentityCheck::new("mean_c_zero", i, calib.mean_c[i], zero, z));
        out.push(IdentityCheck::new("mean_grad_phi_eps_zero", i, calib.mean_grad_phi_eps[i], zero, z));
    }
    out.push(IdentityCheck::new("kappa_ibp", 0, calib.kappa_c[0], calib.kappa_ibp, z));

    let d0_plain = static_drift(samples, calib, 0.0, Variant::Plain)?;
    for i in 0..D {
        out.push(IdentityCheck::new("d_eps0_two_forms", i, d0_plain.component(i), calib.d_eps0[i], z));
    }
    let v0 = velocity(samples, calib, 0.0, Variant::Plain)?;
    for i in 0..D {
        out.push(IdentityCheck::new("velocity_zero_at_lambda0", i, v0.component(i), zero, z));
    }
    for &lambda in lambdas {
        let v = velocity(samples, calib, lambda, Variant::Plain)?;
        let d_direct = static_drift(samples, calib, lambda, Variant::ControlVariate)?;
        let d_ident = static_drift_identity(calib, lambda);
        for i in 0..D {
            let target = Estimate::new(lambda * calib.d_eps0[i].value, (lambda * calib.d_eps0[i].se).abs());
            out.push(IdentityCheck::new(&format!("velocity_lambda_d[{lambda}]"), i, v.component(i), target, z));
            out.push(IdentityCheck::new(
                &format!("drift_shift[{lambda}]"),
                i,
                d_direct.component(i),
                d_ident[i],
                z,
            ));
        }
    }
    Ok(out)
}

/// Least-squares fit of `d_{eps,0} = q eps^2 + q3 eps^3` over an epsilon grid.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureFit {
    pub eps_grid: Vec<f64>,
    /// Per component quadratic coefficient.
    pub quadratic: Vec<Estimate>,
    pub cubic: Vec<Estimate>,
    /// `-kappa_c / d`, the predicted quadratic coefficient.
    pub predicted: Vec<Estimate>,
    pub checks: Vec<IdentityCheck>,
}

pub fn curvature_fit<const D: usize>(samples: &StaticSamples<D>, eps_grid: &[f64]) -> Result<CurvatureFit> {
    if eps_grid.len() < 2 {
        return Err(Error::Config("curvature fit needs at least two epsilon values".into()));
    }
    let l = Layout { d: D };
    // d_{eps,0} per batch and overall for each grid value
    let per_eps: Vec<BatchedMeans> = eps_grid.iter().map(|&e| calibration_means(samples, e)).collect();
    let d_of = |means: &[f64], eps: f64, i: usize| {
        let k = eps / D as f64;
        eps * (1.0 + k * means[Layout::PHI]) * means[l.cv() + i]
    };
    let nb = per_eps[0].num_batches();
    let kappa = calibration_means(samples, 0.0);
    let mut quadratic = Vec::new();
    let mut cubic = Vec::new();
    let mut predicted = Vec::new();
    let mut checks = Vec::new();
    for i in 0..D {
        let fit = |pick: &dyn Fn(&BatchedMeans) -> &[f64]| {
            let y: Vec<f64> = per_eps
                .iter()
                .zip(eps_grid)
                .map(|(m, &e)| d_of(pick(m), e, i))
                .collect();
            monomial_fit(eps_grid, &y, &[2, 3])
        };
        let total = fit(&|m| &m.total);
        let per_batch: Vec<Vec<f64>> = (0..nb).map(|b| fit(&|m| &m.batches[b])).collect();
        let q: Vec<f64> = per_batch.iter().map(|c| c[0]).collect();
        let q3: Vec<f64> = per_batch.iter().map(|c| c[1]).collect();
        let qe = Estimate::new(total[0], crate::stats::batch_se(&q));
        let pred = kappa.estimate(|v| -v[l.c_phi() + i] / D as f64);
        quadratic.push(qe);
        cubic.push(Estimate::new(total[1], crate::stats::batch_se(&q3)));
        predicted.push(pred);
        checks.push(IdentityCheck::new("curvature", i, qe, pred, CI_Z));
    }
    Ok(CurvatureFit { eps_grid: eps_grid.to_vec(), quadratic, cubic, predicted, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;

    fn samples(n: usize) -> StaticSamples<2> {
        let spec = EnvironmentSpec::with_default_intensity(2, 32.0, 99);
        let field = Field::<2>::new(32.0, &KernelConfig::default()).unwrap();
        StaticSamples::draw(spec, &field, 0, n, 40).unwrap()
    }

    #[test]
    fn epsilon_zero_calibration() {
        let s = samples(10_000);
        let c = calibrate(&s, 0.0).unwrap();
        assert_eq!(c.g_eps.value, 1.0);
        assert_eq!(c.g_eps.se, 0.0);
        for i in 0..2 {
            assert!(c.a_eps_plain[i].contains(0.0, 4.0));
            assert_eq!(c.d_eps0[i].value, 0.0);
        }
        assert!(c.mu_phi.value > 0.0 && c.mu_phi.value <= 1.0);
        let d = static_drift(&s, &c, 0.5, Variant::Plain).unwrap();
        assert_eq!(d.value, [0.0, 0.0]);
        let v = velocity(&s, &c, 0.5, Variant::Plain).unwrap();
        assert_eq!(v.value, [0.0, 0.0]);
    }

    #[test]
    fn rejects_small_or_degenerate_inputs() {
        let s = samples(1000);
        assert!(matches!(calibrate(&s, 0.1), Err(Error::Config(_))));
        let flat = StaticSamples::<2>::from_samples(
            alloc::vec![OriginSample { phi: 0.0, grad: [0.0; 2], c: [0.0; 2] }; 20_000],
            0,
            40,
        )
        .unwrap();
        assert!(matches!(calibrate(&flat, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn decomposition_matches_calibration_at_lambda_zero() {
        let s = samples(10_000);
        let c = calibrate(&s, 0.3).unwrap();
        let (grad_term, rest) = static_drift_decomposed(&s, &c, 0.0);
        let plain = static_drift(&s, &c, 0.0, Variant::Plain).unwrap();
        for i in 0..2 {
            let target = 0.3 * c.a_eps_plain[i].value;
            assert!((rest[i].value - target).abs() <= 1e-12 * target.abs());
            let sum = grad_term[i].value + rest[i].value;
            assert!((sum - plain.value[i]).abs() <= 1e-12 * plain.value[i].abs().max(1e-300));
        }
    }

    #[test]
    fn lambda_star_and_gamma() {
        let mut c = calibrate(&samples(10_000), 0.5).unwrap();
        c.g_eps = Estimate::new(1.0, 0.0);
        assert_eq!(lambda_star(&c).unwrap(), -1.0);
        c.g_eps = Estimate::new(3.0, 0.0);
        assert!((lambda_star(&c).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        c.g_eps = Estimate::new(1.02, 0.0);
        assert!((lambda_star(&c).unwrap() + 0.980392).abs() < 1e-6);
        c.g_eps = Estimate::new(0.9, 0.01);
        assert!(matches!(lambda_star(&c), Err(Error::Inconsistent(_))));

        assert_eq!(gamma_coeff(2.0, -0.25).unwrap(), 2.0);
        let near = gamma_coeff(3.0, -1.0 / 3.0 + 1e-6).unwrap();
        assert!(near > 0.0 && near < 1e-5);
        assert!(matches!(gamma_coeff(2.0, 0.1), Err(Error::Domain(_))));
        assert!(gamma_coeff(2.0, -0.5).is_err());
    }
}
