use core::cell::RefCell;

use driftlab_core::env::{dist2, make_env, shifted_view, EnvHandle, EnvironmentSpec, Point, PointSource};
use driftlab_core::fields::{
    c_from_hessian, drift_b, h_matrix, phi, phi_eps, phi_hat, DriftParams, Field, FieldEval,
};
use driftlab_core::kernel::KernelConfig;
use proptest::prelude::*;

/// A fixed point set standing in for the environment.
struct Fixed {
    env: EnvHandle<2>,
    points: Vec<Point<2>>,
}

impl PointSource<2> for Fixed {
    fn env(&self) -> &EnvHandle<2> {
        &self.env
    }

    fn points_near(&self, a: Point<2>, radius: f64, out: &mut Vec<Point<2>>) {
        out.extend(self.points.iter().filter(|p| dist2(p, &a) < radius * radius));
    }
}

/// Forwards to an environment and records how far from `center` anything was read.
struct Recording<'a> {
    env: &'a EnvHandle<2>,
    center: Point<2>,
    reach: RefCell<f64>,
}

impl PointSource<2> for Recording<'_> {
    fn env(&self) -> &EnvHandle<2> {
        self.env
    }

    fn points_near(&self, a: Point<2>, radius: f64, out: &mut Vec<Point<2>>) {
        let d = dist2(&a, &self.center).sqrt() + radius;
        let mut r = self.reach.borrow_mut();
        *r = r.max(d);
        self.env.points_near(a, radius, out)
    }
}

const R: f64 = 32.0;

fn spec() -> EnvironmentSpec {
    EnvironmentSpec::with_default_intensity(2, R, 5)
}

fn field() -> Field<2> {
    Field::new(R, &KernelConfig::default()).unwrap()
}

fn fixed(points: Vec<Point<2>>) -> Fixed {
    Fixed { env: make_env::<2>(spec(), 0).unwrap(), points }
}

fn params(eps: f64, lambda: f64) -> DriftParams<2> {
    DriftParams::new(eps, lambda, 0.35, [1e-4, -2e-5])
}

#[test]
fn phi_hat_of_point_configurations() {
    let f = field();
    let k = f.kernel();
    assert_eq!(phi_hat(&f, [0.0, 0.0], &fixed(vec![])), 0.0);
    // a point just outside the kernel support contributes nothing
    assert_eq!(phi_hat(&f, [0.0, 0.0], &fixed(vec![[k.zeta_radius * 1.0001, 0.0]])), 0.0);
    let p = [1.0, -0.5];
    let single = phi_hat(&f, [0.0, 0.0], &fixed(vec![p]));
    let t = 1.0 - (p[0] * p[0] + p[1] * p[1]) / (k.zeta_radius * k.zeta_radius);
    let expected = k.zeta_amplitude * t.powi(4);
    assert!((single - expected).abs() <= 1e-15, "{single} vs {expected}");
    let crowd = fixed(vec![[0.0, 0.0]; 5]);
    assert_eq!(phi_hat(&f, [0.0, 0.0], &crowd), 1.0);
}

fn lattice_source(spacing: f64, copies: usize) -> Fixed {
    let mut pts = Vec::new();
    for i in -8..=8 {
        for j in -8..=8 {
            for _ in 0..copies {
                pts.push([i as f64 * spacing, j as f64 * spacing]);
            }
        }
    }
    fixed(pts)
}

/// Largest deviation of value, gradient and Hessian from those of the constant `1/m`.
fn saturation_error(order: usize) -> [f64; 3] {
    let f = Field::<2>::new(R, &KernelConfig { quad_order: order, ..KernelConfig::default() }).unwrap();
    let src = lattice_source(f.kernel().zeta_radius / 4.0, 2);
    assert_eq!(phi_hat(&f, [0.0, 0.0], &src), 1.0);
    let e = phi(&f, [0.0, 0.0], &src);
    [
        (e.value - 1.0 / f.kernel().m).abs(),
        e.gradient.iter().fold(0.0, |a, g| a.max(g.abs())),
        e.hessian.iter().flatten().fold(0.0, |a, h| a.max(h.abs())),
    ]
}

#[test]
fn phi_of_empty_and_saturated_environments() {
    let f = field();
    let e = phi(&f, [0.3, 0.2], &fixed(vec![]));
    assert_eq!(e, FieldEval::zero());
    // two points at every lattice site of spacing r/4 saturate the truncation near the origin;
    // what remains is quadrature error, which must shrink as the order doubles
    let coarse = saturation_error(24);
    let fine = saturation_error(48);
    assert!(coarse[0] <= 1e-6 && coarse[1] <= 1e-4 && coarse[2] <= 1e-3, "{coarse:?}");
    for k in 0..3 {
        assert!(fine[k] <= coarse[k] / 4.0, "{coarse:?} then {fine:?}");
    }
}

#[test]
fn evaluation_reads_only_the_quarter_range_ball() {
    let f = field();
    for replica in 0..50 {
        let env = make_env::<2>(spec(), replica).unwrap();
        let x = [replica as f64 * 3.7 - 90.0, 11.0 - replica as f64];
        let abs = env.to_absolute(x);
        let rec = Recording { env: &env, center: abs, reach: RefCell::new(0.0) };
        let direct = phi(&f, x, &env);
        assert_eq!(phi(&f, x, &rec), direct);
        let reach = *rec.reach.borrow();
        assert!(reach <= R / 4.0 + 1e-9, "read up to {reach}");
    }
}

#[test]
fn values_beyond_the_quarter_range_do_not_matter() {
    let f = field();
    let env = make_env::<2>(spec(), 3).unwrap();
    let mut near = Vec::new();
    let mut all = Vec::new();
    env.points_near([0.0, 0.0], R / 4.0, &mut near);
    env.points_near([0.0, 0.0], 3.0 * R, &mut all);
    assert!(all.len() > near.len());
    let a = phi(&f, [0.0, 0.0], &Fixed { env: env.clone(), points: near });
    let b = phi(&f, [0.0, 0.0], &Fixed { env: env.clone(), points: all });
    assert_eq!(a, b);
}

fn max_change(range: f64, order: usize, probes: u64) -> f64 {
    let s = EnvironmentSpec::with_default_intensity(2, range, 8);
    let cfg = KernelConfig::default();
    let lo = Field::<2>::new(range, &KernelConfig { quad_order: order, ..cfg }).unwrap();
    let hi = Field::<2>::new(range, &KernelConfig { quad_order: 2 * order, ..cfg }).unwrap();
    (0..probes)
        .map(|i| {
            let env = make_env::<2>(s, 7000 + i).unwrap();
            (phi(&lo, [0.0, 0.0], &env).value - phi(&hi, [0.0, 0.0], &env).value).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn quadrature_doubling_at_unit_range() {
    let d = max_change(1.0, 24, 100);
    assert!(d <= 1e-6, "doubling the order moved phi by {d}");
}

#[test]
fn quadrature_refinement_converges_at_working_range() {
    let d12 = max_change(R, 12, 100);
    let d24 = max_change(R, 24, 100);
    assert!(d24 < d12, "refinement does not reduce the change: {d12} then {d24}");
    assert!(d24 <= 1e-3, "order 24 still moves phi by {d24}");
}

#[test]
fn h_matrix_sign_convention() {
    let h = h_matrix(&[0.4, -0.7]);
    assert_eq!(h, [[0.0, 0.7], [-0.7, 0.0]]);
    let h = h_matrix(&[0.0, 0.0, 0.0]);
    assert_eq!(h, [[0.0; 3]; 3]);
    let h = h_matrix(&[0.1, 0.2, 0.3]);
    assert_eq!(h[1][0], 0.2);
    assert_eq!(h[0][2], -0.3);
    assert_eq!(h[1][2], 0.0);
}

#[test]
fn c_from_zero_hessian_is_zero() {
    assert_eq!(c_from_hessian(&[[0.0; 2]; 2]), [0.0; 2]);
}

#[test]
fn epsilon_zero_is_inert() {
    let f = field();
    for replica in 0..20 {
        let env = make_env::<2>(spec(), replica).unwrap();
        let x = [replica as f64, -2.0 * replica as f64];
        for lambda in [-1.0, 0.0, 1.0] {
            assert_eq!(drift_b(&f, x, &env, &params(0.0, lambda)), [0.0; 2]);
        }
        let pe = phi_eps(&f, x, &env, &params(0.0, 0.0));
        assert_eq!(pe.value, 1.0);
        assert_eq!(pe.gradient, [0.0; 2]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_bounds_and_structure(
        replica in 0u64..1_000_000,
        x in prop::array::uniform2(-500.0f64..500.0),
        eps in 0.0f64..1.0,
        lambda in -1.0f64..1.0,
    ) {
        let f = field();
        let env = make_env::<2>(spec(), replica).unwrap();
        let e = phi(&f, x, &env);
        prop_assert!((0.0..=1.0).contains(&e.value));
        prop_assert_eq!(e.hessian[0][1], e.hessian[1][0]);
        let h = h_matrix(&e.gradient);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert_eq!(h[i][j], -h[j][i]);
            }
        }
        let c = c_from_hessian(&e.hessian);
        prop_assert!((c[0] * c[0] + c[1] * c[1]).sqrt() <= 0.125);
        let p = params(eps, lambda);
        let pe = phi_eps(&f, x, &env, &p);
        let d = 2.0;
        prop_assert!(pe.value >= (d - eps) / (d + eps) && pe.value <= (d + eps) / (d - eps));
        for g in pe.gradient {
            prop_assert!(g.abs() <= eps / (d - eps));
        }
        let b = drift_b(&f, x, &env, &p);
        prop_assert!((b[0] * b[0] + b[1] * b[1]).sqrt() <= eps.max(0.0) + 1e-15);
    }

    #[test]
    fn shift_covariance_is_exact(
        replica in 0u64..1_000_000,
        x in prop::array::uniform2(-200.0f64..200.0),
        y in prop::array::uniform2(-20.0f64..20.0),
    ) {
        let f = field();
        let env = make_env::<2>(spec(), replica).unwrap();
        let moved = shifted_view(&env, x);
        prop_assert_eq!(phi(&f, [0.0, 0.0], &moved), phi(&f, x, &env));
        prop_assert_eq!(phi(&f, y, &moved), phi(&f, [x[0] + y[0], x[1] + y[1]], &env));
    }
}
