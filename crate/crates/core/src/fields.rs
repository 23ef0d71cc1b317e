//! The smoothed point field, its stream matrix, and the drift family.

use alloc::vec::Vec;

use crate::env::{dist2, EnvHandle, Point, PointSource};
use crate::error::Result;
use crate::kernel::{KernelConfig, KernelParams};
use crate::quadrature::LatticeRule;

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldEval<const D: usize> {
    pub value: f64,
    pub gradient: [f64; D],
    pub hessian: [[f64; D]; D],
}

impl<const D: usize> FieldEval<D> {
    pub fn zero() -> Self {
        FieldEval {
            value: 0.0,
            gradient: [0.0; D],
            hessian: [[0.0; D]; D],
        }
    }
}

/// Evaluator for the normalized field on environments of a fixed range.
#[derive(Clone, Debug)]
pub struct Field<const D: usize> {
    kernel: KernelParams,
    rule: LatticeRule,
}

impl<const D: usize> Field<D> {
    pub fn new(range: f64, cfg: &KernelConfig) -> Result<Self> {
        cfg.validate()?;
        if !(range > 0.0 && range.is_finite()) {
            return Err(crate::Error::Config(alloc::format!("range must be positive, got {range}")));
        }
        let kernel = KernelParams::new(D, range, cfg.zeta_amplitude);
        let rule = LatticeRule::new(kernel.rho_radius, cfg.quad_order, cfg.quad_points_per_cell);
        Ok(Field { kernel, rule })
    }

    /// Field matching an environment's range.
    pub fn for_env(env: &EnvHandle<D>, cfg: &KernelConfig) -> Result<Self> {
        Self::new(env.spec().range, cfg)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn rule(&self) -> &LatticeRule {
        &self.rule
    }

    /// Truncated kernel sum `min(sum_p zeta(x - p), 1)` at view coordinate `x`.
    pub fn phi_hat(&self, x: Point<D>, src: &impl PointSource<D>) -> f64 {
        let a = src.env().to_absolute(x);
        let mut pts = Vec::new();
        src.points_near(a, self.kernel.zeta_radius, &mut pts);
        self.phi_hat_abs(&a, &pts)
    }

    #[inline]
    fn phi_hat_abs(&self, z: &Point<D>, pts: &[Point<D>]) -> f64 {
        let mut s = 0.0;
        for p in pts {
            s += self.kernel.zeta(dist2(z, p));
        }
        s.min(1.0)
    }

    /// Normalized field with gradient and Hessian at view coordinate `x`.
    ///
    /// The truncated sum is integrated against the mollifier on the replica's
    /// phased lattice; derivatives fall on the mollifier.
    pub fn phi(&self, x: Point<D>, src: &impl PointSource<D>) -> FieldEval<D> {
        let env = src.env();
        let a = env.to_absolute(x);
        let mut pts = Vec::with_capacity(32);
        src.points_near(a, self.kernel.dependence_radius(), &mut pts);
        if pts.is_empty() {
            return FieldEval::zero();
        }
        self.phi_from_points(a, env.replica_phase(), &pts)
    }

    /// Field at absolute position `a`, given every point within the dependence radius.
    pub fn phi_from_points(&self, a: Point<D>, phase: Point<D>, pts: &[Point<D>]) -> FieldEval<D> {
        let r = self.kernel.rho_radius;
        let r2 = r * r;
        let inv_r2 = 1.0 / r2;
        let inv_rz2 = 1.0 / (self.kernel.zeta_radius * self.kernel.zeta_radius);
        let amp = self.kernel.zeta_amplitude;

        let mut axes: [Vec<(f64, f64)>; D] = core::array::from_fn(|_| Vec::new());
        for k in 0..D {
            self.rule.axis_nodes(a[k] - r, a[k] + r, phase[k], &mut axes[k]);
            if axes[k].is_empty() {
                return FieldEval::zero();
            }
        }

        let mut value = 0.0;
        let mut grad = [0.0; D];
        let mut hess = [[0.0; D]; D];
        let rz = self.kernel.zeta_radius;
        let mut row: Vec<Point<D>> = Vec::with_capacity(pts.len());
        let mut row_of = usize::MAX;
        let mut idx = [0usize; D];
        'nodes: loop {
            if idx[0] != row_of {
                // points that can reach any node with this first coordinate
                row_of = idx[0];
                let z0 = axes[0][row_of].0;
                row.clear();
                row.extend(pts.iter().filter(|p| (p[0] - z0).abs() < rz));
            }
            let mut z = [0.0; D];
            let mut y = [0.0; D];
            let mut w = 1.0;
            let mut s2 = 0.0;
            for k in 0..D {
                let (zk, wk) = axes[k][idx[k]];
                z[k] = zk;
                y[k] = a[k] - zk;
                w *= wk;
                s2 += y[k] * y[k];
            }
            if s2 < r2 {
                let mut sum = 0.0;
                for p in &row {
                    let t = 1.0 - dist2(&z, p) * inv_rz2;
                    if t > 0.0 {
                        let t2 = t * t;
                        sum += t2 * t2;
                    }
                }
                sum *= amp;
                let fh = sum.min(1.0);
                if fh > 0.0 {
                    let u = 1.0 - s2 * inv_r2;
                    let u2 = u * u;
                    let u3 = u2 * u;
                    let wf = w * fh;
                    value += wf * u2 * u2;
                    let g = -8.0 * u3 * inv_r2 * wf;
                    let hh = 48.0 * u2 * inv_r2 * inv_r2 * wf;
                    for i in 0..D {
                        grad[i] += g * y[i];
                        for j in i..D {
                            hess[i][j] += hh * y[i] * y[j];
                        }
                        hess[i][i] += g;
                    }
                }
            }
            // odometer over the tensor nodes
            let mut k = D;
            loop {
                if k == 0 {
                    break 'nodes;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }

        let scale = self.kernel.rho_norm / self.kernel.m;
        let mut out = FieldEval::zero();
        out.value = value * scale;
        for i in 0..D {
            out.gradient[i] = grad[i] * scale;
            for j in i..D {
                out.hessian[i][j] = hess[i][j] * scale;
                out.hessian[j][i] = out.hessian[i][j];
            }
        }
        out
    }
}

/// Skew-symmetric stream matrix built from the gradient: `h[i][0] = g_i`, `h[0][i] = -g_i`.
pub fn h_matrix<const D: usize>(gradient: &[f64; D]) -> [[f64; D]; D] {
    let mut h = [[0.0; D]; D];
    for i in 1..D {
        h[i][0] = gradient[i];
        h[0][i] = -gradient[i];
    }
    h
}

/// Row divergence of the stream matrix, scaled by `1/(8 d^2)`.
pub fn c_from_hessian<const D: usize>(hessian: &[[f64; D]; D]) -> [f64; D] {
    let k = 1.0 / (8.0 * (D * D) as f64);
    let mut c = [0.0; D];
    let mut lap = 0.0;
    for j in 1..D {
        lap += hessian[j][j];
    }
    c[0] = -k * lap;
    for i in 1..D {
        c[i] = k * hessian[0][i];
    }
    c
}

/// Parameters of one member of the drift family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftParams<const D: usize> {
    pub epsilon: f64,
    pub lambda: f64,
    /// Mean of the field under the static law.
    pub mu_phi: f64,
    /// Mean of `c / phi_eps` under the static law.
    pub a_eps: [f64; D],
}

impl<const D: usize> DriftParams<D> {
    pub fn new(epsilon: f64, lambda: f64, mu_phi: f64, a_eps: [f64; D]) -> Self {
        DriftParams { epsilon, lambda, mu_phi, a_eps }
    }

    #[inline]
    pub fn k(&self) -> f64 {
        self.epsilon / D as f64
    }

    /// Constant drift shift `lambda * a_eps`.
    pub fn alpha(&self) -> [f64; D] {
        core::array::from_fn(|i| self.lambda * self.a_eps[i])
    }
}

/// `(1 + k phi) / (1 + k mu)` and its derivatives.
pub fn phi_eps_from<const D: usize>(phi: &FieldEval<D>, p: &DriftParams<D>) -> FieldEval<D> {
    let k = p.k();
    let inv = 1.0 / (1.0 + k * p.mu_phi);
    let mut out = FieldEval::zero();
    out.value = (1.0 + k * phi.value) * inv;
    for i in 0..D {
        out.gradient[i] = k * phi.gradient[i] * inv;
        for j in 0..D {
            out.hessian[i][j] = k * phi.hessian[i][j] * inv;
        }
    }
    out
}

/// `grad phi_eps / (2 phi_eps) + eps (c + alpha) / phi_eps`.
pub fn drift_from<const D: usize>(phi: &FieldEval<D>, p: &DriftParams<D>) -> [f64; D] {
    drift_parts(phi.value, &phi.gradient, &c_from_hessian(&phi.hessian), p)
}

/// Drift from the field value, its gradient and the divergence-free part at one point.
pub fn drift_parts<const D: usize>(value: f64, gradient: &[f64; D], c: &[f64; D], p: &DriftParams<D>) -> [f64; D] {
    if p.epsilon == 0.0 {
        return [0.0; D];
    }
    let k = p.k();
    let den = 1.0 + k * p.mu_phi;
    let pe = (1.0 + k * value) / den;
    let inv = 1.0 / pe;
    core::array::from_fn(|i| {
        let grad_pe = k * gradient[i] / den;
        0.5 * grad_pe * inv + p.epsilon * (c[i] + p.lambda * p.a_eps[i]) * inv
    })
}

pub fn phi_hat<const D: usize>(field: &Field<D>, x: Point<D>, env: &impl PointSource<D>) -> f64 {
    field.phi_hat(x, env)
}

pub fn phi<const D: usize>(field: &Field<D>, x: Point<D>, env: &impl PointSource<D>) -> FieldEval<D> {
    field.phi(x, env)
}

pub fn c_field<const D: usize>(field: &Field<D>, x: Point<D>, env: &impl PointSource<D>) -> [f64; D] {
    c_from_hessian(&field.phi(x, env).hessian)
}

pub fn phi_eps<const D: usize>(
    field: &Field<D>,
    x: Point<D>,
    env: &impl PointSource<D>,
    params: &DriftParams<D>,
) -> FieldEval<D> {
    phi_eps_from(&field.phi(x, env), params)
}

pub fn drift_b<const D: usize>(
    field: &Field<D>,
    x: Point<D>,
    env: &impl PointSource<D>,
    params: &DriftParams<D>,
) -> [f64; D] {
    drift_from(&field.phi(x, env), params)
}
