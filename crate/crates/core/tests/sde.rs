use driftlab_core::env::{make_env, CachedEnv, EnvironmentSpec};
use driftlab_core::fields::{DriftParams, Field};
use driftlab_core::kernel::KernelConfig;
use driftlab_core::sde::{
    annealed_slope, env_time_average, run_all, self_convergence, simulate_quenched, SdeConfig, SDE_REPLICA_BASE,
};
use driftlab_core::statics::{calibrate, observable_mean, StaticSamples};
use driftlab_core::stats::difference;

const R: f64 = 32.0;

fn setup() -> (EnvironmentSpec, Field<2>) {
    (EnvironmentSpec::with_default_intensity(2, R, 404), Field::new(R, &KernelConfig::default()).unwrap())
}

fn cfg(m: usize, t: f64) -> SdeConfig {
    SdeConfig {
        h_step: SdeConfig::default_step(R),
        horizon: t,
        trajectories: m,
        brownian_seed: 9,
        first_replica: SDE_REPLICA_BASE,
        quenched: false,
        noise_level: 0,
    }
}

fn params(eps: f64, lambda: f64) -> DriftParams<2> {
    DriftParams::new(eps, lambda, 0.346, [-1.1e-4, 1e-6])
}

#[test]
fn cached_environment_is_transparent() {
    let (spec, field) = setup();
    let env = make_env::<2>(spec, 12).unwrap();
    let cached = CachedEnv::new(&env);
    for i in 0..2000 {
        let t = i as f64 * 0.37;
        let x = [40.0 * (t * 0.05).sin() + t * 0.1, 25.0 * (t * 0.031).cos()];
        assert_eq!(field.phi(x, &cached), field.phi(x, &env));
    }
}

#[test]
fn paths_respect_the_drift_bound() {
    let (spec, field) = setup();
    for (eps, lambda) in [(0.5, -1.0), (1.0, 1.0)] {
        let rs = run_all(spec, &field, &params(eps, lambda), &cfg(4, 2000.0)).unwrap();
        for r in rs {
            assert_eq!(r.drift_violations, 0);
            assert!(r.max_drift <= eps && r.max_drift > 0.0);
            assert!(r.slope.iter().all(|s| s.is_finite()));
        }
    }
}

#[test]
fn quenched_runs_share_one_environment() {
    let (spec, field) = setup();
    let c = SdeConfig { quenched: true, first_replica: 5, ..cfg(3, 50.0) };
    let rs = run_all(spec, &field, &params(1.0, 0.0), &c).unwrap();
    assert!(rs.iter().all(|r| r.replica == 5));
    assert_ne!(rs[0].endpoint, rs[1].endpoint);
    let env = make_env::<2>(spec, 5).unwrap();
    let again = simulate_quenched(&field, &env, &params(1.0, 0.0), &c, 1).unwrap();
    assert_eq!(again, rs[1]);
    assert!(annealed_slope(spec, &field, &params(1.0, 0.0), &c).is_err());
}

#[test]
fn zero_drift_slope_and_time_average() {
    let (spec, field) = setup();
    let c = cfg(400, 100.0);
    let slope = annealed_slope(spec, &field, &params(0.0, 0.0), &c).unwrap();
    for e in slope.components() {
        assert!(e.contains(0.0, 3.0), "{e:?}");
        // Brownian slope has standard deviation 1/sqrt(T) per path
        let expected = (1.0 / (400.0 * 100.0f64)).sqrt();
        assert!((e.se / expected - 1.0).abs() < 0.2, "se {} vs {expected}", e.se);
    }
    let samples = StaticSamples::draw(spec, &field, 0, 20_000, 40).unwrap();
    let cal = calibrate(&samples, 0.0).unwrap();
    let p = cal.drift_params::<2>(0.0);
    let ta = env_time_average(spec, &field, &p, &cfg(40, 2000.0), "phi").unwrap();
    let target = observable_mean(&samples, &cal, 0.0, 0, false).unwrap();
    assert!(difference(ta.component(0), target).contains(0.0, 3.0), "{:?} vs {target:?}", ta.component(0));
    assert!(env_time_average(spec, &field, &p, &cfg(2, 10.0), "speed").is_err());
}

#[test]
fn step_refinement_converges() {
    let (spec, field) = setup();
    let study = self_convergence(spec, &field, &params(1.0, 1.0), &cfg(20, 50.0), 3).unwrap();
    assert!(study.monotone, "{study:?}");
    assert!(study.order > 0.4, "observed order {}", study.order);
    for r in &study.rows {
        assert!(r.mean_gap.value <= 2.0 * study.c_sqrt * r.h.sqrt());
    }
}

#[test]
fn refinement_levels_share_the_brownian_path() {
    // 50 / 0.64 is not an integer, so the coarse step is shortened to fit the horizon
    let (spec, field) = setup();
    let study = self_convergence(spec, &field, &params(0.0, 0.0), &cfg(5, 50.0), 3).unwrap();
    for r in &study.rows {
        assert!(r.mean_gap.value <= 1e-10, "zero drift, yet levels differ by {}", r.mean_gap.value);
    }
    assert!((study.rows[0].h * 79.0 - 50.0).abs() < 1e-12);
}

#[test]
fn invalid_configurations() {
    let (spec, field) = setup();
    for bad in [
        SdeConfig { h_step: 0.0, ..cfg(1, 10.0) },
        SdeConfig { horizon: 0.1, ..cfg(1, 10.0) },
        SdeConfig { trajectories: 0, ..cfg(1, 10.0) },
    ] {
        assert!(run_all(spec, &field, &params(0.1, 0.0), &bad).is_err());
    }
}
