use driftlab_core::env::{make_env, points_in_ball, shifted_view, unit_ball_volume, EnvironmentSpec};
use driftlab_core::stats::correlation;
use proptest::prelude::*;

fn spec() -> EnvironmentSpec {
    EnvironmentSpec::with_default_intensity(2, 1.0, 31)
}

fn counts(spec: EnvironmentSpec, center: [f64; 2], radius: f64, n: u64) -> Vec<f64> {
    (0..n)
        .map(|r| {
            let env = make_env::<2>(spec, r).unwrap();
            points_in_ball(&env, center, radius).points.len() as f64
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn ball_counts_follow_the_poisson_law() {
    let s = spec();
    let radius = 0.2;
    let nu_v = s.intensity * unit_ball_volume(2) * radius * radius;
    let n = 10_000;
    let c = counts(s, [0.37, -0.11], radius, n);
    let (m, v) = mean_var(&c);
    // Poisson(nu V): mean and variance nu V, fourth central moment nu V (1 + 3 nu V)
    let se_mean = (nu_v / n as f64).sqrt();
    assert!((m - nu_v).abs() <= 4.0 * se_mean, "mean {m} vs {nu_v}");
    let mu4 = nu_v * (1.0 + 3.0 * nu_v);
    let se_var = ((mu4 - nu_v * nu_v) / n as f64).sqrt();
    assert!((v - nu_v).abs() <= 4.0 * se_var, "variance {v} vs {nu_v}");
}

#[test]
fn disjoint_windows_are_uncorrelated() {
    let s = spec();
    let n = 10_000;
    let a = counts(s, [0.0, 0.0], 0.1, n);
    let b = counts(s, [0.25, 0.0], 0.1, n);
    let rho = correlation(&a, &b);
    assert!(rho.abs() <= 3.0 / (n as f64).sqrt(), "correlation {rho}");
}

#[test]
fn counts_are_stationary_under_translation() {
    let s = spec();
    let n = 10_000;
    let a = counts(s, [0.0, 0.0], 0.15, n);
    let b = counts(s, [123.4567, -98.765], 0.15, n);
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let se_m = ((va + vb) / n as f64).sqrt();
    assert!((ma - mb).abs() <= 4.0 * se_m, "means {ma} vs {mb}");
    // variance of a sample variance for Poisson counts, as above
    let nu_v = s.intensity * unit_ball_volume(2) * 0.15 * 0.15;
    let se_v = (2.0 * (nu_v * (1.0 + 3.0 * nu_v) - nu_v * nu_v) / n as f64).sqrt();
    assert!((va - vb).abs() <= 4.0 * se_v, "variances {va} vs {vb}");
}

#[test]
fn zero_radius_query_is_empty() {
    let env = make_env::<2>(spec(), 0).unwrap();
    assert!(points_in_ball(&env, [0.1, 0.2], 0.0).points.is_empty());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec();
    s.intensity = 0.0;
    assert!(make_env::<2>(s, 0).is_err());
    let mut s = spec();
    s.range = f64::NAN;
    assert!(make_env::<2>(s, 0).is_err());
    let s = EnvironmentSpec { dim: 1, ..spec() };
    assert!(make_env::<1>(s, 0).is_err());
    assert!(make_env::<3>(spec(), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nested_queries_agree(
        replica in 0u64..1000,
        cx in -5.0f64..5.0, cy in -5.0f64..5.0,
        dx in -0.2f64..0.2, dy in -0.2f64..0.2,
        r in 0.05f64..0.4,
    ) {
        let env = make_env::<2>(spec(), replica).unwrap();
        let big = points_in_ball(&env, [cx, cy], r + 0.3);
        let small = points_in_ball(&env, [cx + dx, cy + dy], r);
        let d2 = |p: &[f64; 2]| (p[0] - cx - dx).powi(2) + (p[1] - cy - dy).powi(2);
        let expected: Vec<[f64; 2]> = big.points.iter().copied().filter(|p| d2(p) < r * r).collect();
        let mut got = small.points.clone();
        let mut want = expected;
        let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
        got.sort_by_key(key);
        want.sort_by_key(key);
        prop_assert_eq!(got, want);
        for p in &small.points {
            prop_assert!(d2(p) < r * r);
        }
    }

    #[test]
    fn repeated_queries_are_identical(replica in 0u64..u64::MAX, cx in -1e3f64..1e3, cy in -1e3f64..1e3) {
        let a = make_env::<2>(spec(), replica).unwrap();
        let b = make_env::<2>(spec(), replica).unwrap();
        prop_assert_eq!(points_in_ball(&a, [cx, cy], 0.3), points_in_ball(&b, [cx, cy], 0.3));
    }

    #[test]
    fn shifts_compose(
        replica in 0u64..1000,
        x in prop::array::uniform2(-3.0f64..3.0),
        y in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let env = make_env::<2>(spec(), replica).unwrap();
        let twice = shifted_view(&shifted_view(&env, x), y);
        let once = shifted_view(&env, [x[0] + y[0], x[1] + y[1]]);
        // offsets are summed in the same order, so the views agree exactly
        prop_assert_eq!(twice.offset(), once.offset());
        prop_assert_eq!(points_in_ball(&twice, [0.0, 0.0], 0.3), points_in_ball(&once, [0.0, 0.0], 0.3));
        let zero = shifted_view(&env, [0.0, 0.0]);
        prop_assert_eq!(points_in_ball(&zero, x, 0.3), points_in_ball(&env, x, 0.3));
    }
}
