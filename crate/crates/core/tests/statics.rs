use std::sync::OnceLock;

use driftlab_core::env::EnvironmentSpec;
use driftlab_core::fields::Field;
use driftlab_core::kernel::KernelConfig;
use driftlab_core::statics::{calibrate, lambda_star, static_drift, velocity, StaticSamples};
use driftlab_core::stats::{difference, Estimate, Variant};
use driftlab_core::Error;

const R: f64 = 32.0;

fn spec() -> EnvironmentSpec {
    EnvironmentSpec::with_default_intensity(2, R, 77)
}

fn field() -> &'static Field<2> {
    static F: OnceLock<Field<2>> = OnceLock::new();
    F.get_or_init(|| Field::new(R, &KernelConfig::default()).unwrap())
}

fn samples() -> &'static StaticSamples<2> {
    static S: OnceLock<StaticSamples<2>> = OnceLock::new();
    S.get_or_init(|| StaticSamples::draw(spec(), field(), 0, 100_000, 40).unwrap())
}

#[test]
fn expectations_do_not_depend_on_the_evaluation_point() {
    let here = calibrate(samples(), 1.0).unwrap();
    let there_samples = StaticSamples::draw_at(spec(), field(), 500_000, 100_000, 40, [37.5, -12.25]).unwrap();
    let there = calibrate(&there_samples, 1.0).unwrap();
    let pairs = [
        ("mu_phi", here.mu_phi, there.mu_phi),
        ("g_eps", here.g_eps, there.g_eps),
        ("kappa_c_1", here.kappa_c[0], there.kappa_c[0]),
        ("a_eps_1", here.a_eps_plain[0], there.a_eps_plain[0]),
    ];
    for (name, a, b) in pairs {
        let d = difference(a, b);
        assert!(d.contains(0.0, 4.0), "{name}: {a:?} at the origin vs {b:?} elsewhere");
    }
}

#[test]
fn calibration_is_reproducible() {
    let again = StaticSamples::draw(spec(), field(), 0, 100_000, 40).unwrap();
    assert_eq!(calibrate(samples(), 0.7).unwrap(), calibrate(&again, 0.7).unwrap());
}

#[test]
fn mean_phi_resolution() {
    let c = calibrate(samples(), 0.0).unwrap();
    assert!(c.mu_phi.value > 0.0 && c.mu_phi.value <= 1.0);
    // se scales as 1/sqrt(N): 1e-3 at N = 1e6 needs sqrt(10) 1e-3 here
    assert!(c.mu_phi.se / 10f64.sqrt() <= 1e-3, "se {}", c.mu_phi.se);
    assert!(c.phi_variance > 0.0);
}

#[test]
fn epsilon_zero_gives_exact_zeros() {
    let c = calibrate(samples(), 0.0).unwrap();
    assert_eq!(c.g_eps, Estimate::exact(1.0));
    for lambda in [-1.0, 0.0, 0.5] {
        for variant in [Variant::Plain, Variant::ControlVariate, Variant::Identity] {
            let d = static_drift(samples(), &c, lambda, variant).unwrap();
            assert!(d.value.iter().all(|v| *v == 0.0), "{variant:?} drift {:?}", d.value);
        }
        for variant in [Variant::Plain, Variant::ControlVariate] {
            let v = velocity(samples(), &c, lambda, variant).unwrap();
            assert!(v.value.iter().all(|v| *v == 0.0), "{variant:?} velocity {:?}", v.value);
        }
    }
    for e in &c.a_eps {
        assert!(e.contains(0.0, 4.0));
    }
}

#[test]
fn lambda_star_examples() {
    let mut c = calibrate(samples(), 1.0).unwrap();
    c.g_eps = Estimate::new(1.02, 1e-4);
    assert!((lambda_star(&c).unwrap() - (-0.980392156862745)).abs() < 1e-12);
    c.g_eps = Estimate::new(3.0, 1e-4);
    assert!((lambda_star(&c).unwrap() + 1.0 / 3.0).abs() < 1e-15);
    c.g_eps = Estimate::new(0.99, 1e-3);
    assert!(matches!(lambda_star(&c), Err(Error::Inconsistent(_))));
    c.g_eps = Estimate::new(0.997, 1e-3);
    assert!(lambda_star(&c).is_ok());
}

#[test]
fn too_few_samples_or_batches() {
    let few = StaticSamples::from_samples(samples().samples[..5000].to_vec(), 0, 40).unwrap();
    assert!(matches!(calibrate(&few, 0.5), Err(Error::Config(_))));
    assert!(StaticSamples::from_samples(samples().samples.clone(), 0, 20).is_err());
}

#[test]
fn empty_environments_are_degenerate() {
    let sparse = EnvironmentSpec { intensity: 1e-12, ..spec() };
    let s = StaticSamples::draw(sparse, field(), 0, 10_000, 40).unwrap();
    assert!(matches!(calibrate(&s, 0.5), Err(Error::Degenerate(_))));
}
