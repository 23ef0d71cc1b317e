//! Verdicts for the reproduced statements, as pure functions of estimates.
//!
//! A clause fails only on evidence against it. When the intervals are too wide
//! to decide, the clause is inconclusive and carries the sample count that
//! would shrink the relevant standard error enough, assuming `1/sqrt(n)` scaling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::stats::{combined_se, required_n, Estimate, CI_Z};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in verdicts {
            out = match (out, v) {
                (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
                _ => Verdict::Pass,
            };
        }
        out
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Clause {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
    /// Sample count (or horizon multiple) needed to decide an inconclusive clause.
    pub required_n: Option<u64>,
}

impl Clause {
    fn new(name: &str, verdict: Verdict, detail: String) -> Self {
        Clause { name: name.into(), verdict, detail, required_n: None }
    }

    fn needing(mut self, n: u64) -> Self {
        self.required_n = Some(n);
        self
    }
}

/// Component with the largest `|value| / se`.
fn most_significant(v: &[Estimate]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .map(|(i, e)| {
            let z = if e.se > 0.0 {
                e.value.abs() / e.se
            } else if e.value != 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            (i, z)
        })
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
}

fn norm(v: &[Estimate]) -> f64 {
    libm::sqrt(v.iter().map(|e| e.value * e.value).sum())
}

fn max_se(v: &[Estimate]) -> f64 {
    v.iter().map(|e| e.se).fold(0.0, f64::max)
}

/// Clause "the CI of `v` excludes the zero vector".
fn excludes_zero(name: &str, v: &[Estimate], n: u64) -> Clause {
    let (i, z) = most_significant(v);
    if z > CI_Z {
        Clause::new(name, Verdict::Pass, format!("component {} is {z:.1} SE from 0", i + 1))
    } else {
        let e = v[i];
        let need = if e.value == 0.0 {
            u64::MAX
        } else {
            required_n(n, e.se, e.value.abs() / CI_Z)
        };
        Clause::new(name, Verdict::Inconclusive, format!("largest |value|/SE is {z:.2}")).needing(need)
    }
}

/// Clause "the CI of `v` contains the zero vector".
fn contains_zero(name: &str, v: &[Estimate]) -> Clause {
    let (i, z) = most_significant(v);
    if z <= CI_Z {
        Clause::new(name, Verdict::Pass, format!("largest |value|/SE is {z:.2}"))
    } else {
        Clause::new(name, Verdict::Fail, format!("component {} is {z:.1} SE from 0", i + 1))
    }
}

/// Expected drift nonzero while the velocity vanishes, at `lambda = 0`.
pub fn verdict_p1(epsilon: f64, d: &[Estimate], v: &[Estimate], n: u64) -> Vec<Clause> {
    if epsilon == 0.0 {
        return alloc::vec![Clause::new(
            "nondegenerate_input",
            Verdict::Inconclusive,
            "epsilon = 0 makes both drift and velocity vanish".into()
        )];
    }
    let mut out = alloc::vec![excludes_zero("drift_nonzero", d, n), contains_zero("velocity_zero", v)];
    let half = CI_Z * max_se(v);
    let limit = norm(d) / 5.0;
    let narrow = if half <= limit {
        Clause::new("velocity_ci_narrow", Verdict::Pass, format!("half-width {half:e} <= |d|/5 = {limit:e}"))
    } else {
        Clause::new(
            "velocity_ci_narrow",
            Verdict::Inconclusive,
            format!("half-width {half:e} > |d|/5 = {limit:e}"),
        )
        .needing(required_n(n, max_se(v), limit / CI_Z))
    };
    out.push(narrow);
    out
}

/// Cosine of the angle between two vectors of estimates.
pub fn cosine(a: &[Estimate], b: &[Estimate]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x.value * y.value).sum();
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Drift and velocity point in opposite directions with `d = -gamma v`.
pub fn verdict_p2(gamma: Option<f64>, d: &[Estimate], v: &[Estimate], n: u64) -> Vec<Clause> {
    let mut out = Vec::new();
    let g = match gamma {
        Some(g) if g > 0.0 => {
            out.push(Clause::new("gamma_positive", Verdict::Pass, format!("gamma = {g}")));
            g
        }
        Some(g) => {
            out.push(Clause::new("gamma_positive", Verdict::Fail, format!("gamma = {g}")));
            return out;
        }
        None => {
            out.push(Clause::new("gamma_positive", Verdict::Fail, "lambda outside (-1/3, 0)".into()));
            return out;
        }
    };
    let dz = excludes_zero("drift_nonzero", d, n);
    let vz = excludes_zero("velocity_nonzero", v, n);
    let decided = dz.verdict == Verdict::Pass && vz.verdict == Verdict::Pass;
    out.push(dz);
    out.push(vz);
    let cos = cosine(d, v);
    out.push(if cos <= -0.99 {
        Clause::new("opposite_directions", Verdict::Pass, format!("cosine {cos:.6}"))
    } else if decided {
        Clause::new("opposite_directions", Verdict::Fail, format!("cosine {cos:.6}"))
    } else {
        Clause::new("opposite_directions", Verdict::Inconclusive, format!("cosine {cos:.6} from noisy vectors"))
    });
    let bad: Vec<String> = d
        .iter()
        .zip(v)
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let r = a.value + g * b.value;
            let se = combined_se(&[a.se, g * b.se]);
            (r.abs() > CI_Z * se).then(|| format!("component {}: {r:e} vs SE {se:e}", i + 1))
        })
        .collect();
    out.push(if bad.is_empty() {
        Clause::new("drift_equals_minus_gamma_velocity", Verdict::Pass, "within 3 combined SE".into())
    } else {
        Clause::new("drift_equals_minus_gamma_velocity", Verdict::Fail, bad.join("; "))
    });
    out
}

/// Vanishing expected drift with nonzero velocity at `lambda = -1/g`.
pub fn verdict_p3(
    d_identity: &[Estimate],
    d_eps0: &[Estimate],
    d_direct: &[Estimate],
    v: &[Estimate],
    n: u64,
) -> Vec<Clause> {
    let scale = norm(d_eps0);
    let resid = norm(d_identity);
    let cancels = resid <= 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut out = alloc::vec![Clause::new(
        "identity_form_cancels",
        if cancels { Verdict::Pass } else { Verdict::Fail },
        format!("|d| = {resid:e} against |d_eps0| = {scale:e}"),
    )];
    out.push(contains_zero("direct_drift_zero", d_direct));
    let (i, z) = most_significant(v);
    out.push(if z >= 5.0 {
        Clause::new("velocity_nonzero", Verdict::Pass, format!("component {} is {z:.1} SE from 0", i + 1))
    } else {
        let e = v[i];
        let need = if e.value == 0.0 { u64::MAX } else { required_n(n, e.se, e.value.abs() / 5.0) };
        Clause::new("velocity_nonzero", Verdict::Inconclusive, format!("largest |value|/SE is {z:.2}")).needing(need)
    });
    out
}

/// Time average against the invariant-law mean, and against the static mean.
pub fn verdict_t01(epsilon: f64, time_avg: Estimate, q_target: Estimate, p_mean: Estimate, n: u64) -> Vec<Clause> {
    let dq = time_avg.value - q_target.value;
    let se_q = combined_se(&[time_avg.se, q_target.se]);
    let mut out = alloc::vec![Clause::new(
        "matches_invariant_law",
        if dq.abs() <= CI_Z * se_q { Verdict::Pass } else { Verdict::Fail },
        format!("difference {dq:e}, combined SE {se_q:e}"),
    )];
    if epsilon > 0.0 {
        let dp = time_avg.value - p_mean.value;
        let se_p = combined_se(&[time_avg.se, p_mean.se]);
        out.push(if dp.abs() > CI_Z * se_p {
            Clause::new("differs_from_static_law", Verdict::Pass, format!("difference {dp:e}, combined SE {se_p:e}"))
        } else {
            let gap = (q_target.value - p_mean.value).abs();
            let need = if gap > 0.0 { required_n(n, se_p, gap / (2.0 * CI_Z)) } else { u64::MAX };
            Clause::new(
                "differs_from_static_law",
                Verdict::Inconclusive,
                format!("difference {dp:e}, combined SE {se_p:e}"),
            )
            .needing(need)
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: f64, s: f64) -> Estimate {
        Estimate::new(v, s)
    }

    #[test]
    fn combine_order() {
        use Verdict::*;
        assert_eq!(Verdict::combine([Pass, Pass]), Pass);
        assert_eq!(Verdict::combine([Pass, Inconclusive]), Inconclusive);
        assert_eq!(Verdict::combine([Inconclusive, Fail, Pass]), Fail);
    }

    #[test]
    fn p1_cases() {
        let c = verdict_p1(0.0, &[e(0.0, 0.0)], &[e(0.0, 0.0)], 10);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Inconclusive);

        let d = [e(-1e-4, 1e-6), e(0.0, 1e-6)];
        let v = [e(1e-6, 2e-6), e(-1e-6, 2e-6)];
        let c = verdict_p1(1.0, &d, &v, 1000);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Pass);

        let wide = [e(1e-6, 2e-5), e(0.0, 2e-5)];
        let c = verdict_p1(1.0, &d, &wide, 1000);
        let narrow = c.iter().find(|c| c.name == "velocity_ci_narrow").unwrap();
        assert_eq!(narrow.verdict, Verdict::Inconclusive);
        // half-width 6e-5 must shrink to 2e-5: nine times the samples
        assert_eq!(narrow.required_n, Some(9000));

        let off = [e(1e-4, 1e-6), e(0.0, 1e-6)];
        let c = verdict_p1(1.0, &d, &off, 1000);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Fail);
    }

    #[test]
    fn p2_cases() {
        let d = [e(-8e-5, 1e-6), e(1e-8, 1e-6)];
        let v = [e(2.667e-5, 1e-7), e(0.0, 1e-7)];
        let c = verdict_p2(Some(3.0), &d, &v, 1000);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Pass, "{c:?}");
        let c = verdict_p2(Some(-1.0), &d, &v, 1000);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Fail);
        let same = [e(2.667e-5, 1e-7), e(0.0, 1e-7)];
        let c = verdict_p2(Some(3.0), &[e(8e-5, 1e-6), e(0.0, 1e-6)], &same, 1000);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Fail);
    }

    #[test]
    fn p3_cases() {
        let d0 = [e(-1e-4, 1e-7), e(0.0, 1e-7)];
        let c = verdict_p3(&[e(1e-21, 0.0), e(0.0, 0.0)], &d0, &[e(1e-7, 1e-6), e(0.0, 1e-6)], &[e(1e-4, 1e-7), e(0.0, 1e-7)], 10);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Pass);
        let c = verdict_p3(&[e(1e-8, 0.0), e(0.0, 0.0)], &d0, &[e(1e-7, 1e-6), e(0.0, 1e-6)], &[e(1e-4, 1e-7), e(0.0, 1e-7)], 10);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Fail);
    }

    #[test]
    fn t01_cases() {
        let c = verdict_t01(1.0, e(0.367, 0.001), e(0.368, 0.0005), e(0.347, 0.0005), 20);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Pass);
        let c = verdict_t01(1.0, e(0.36, 0.01), e(0.368, 0.0005), e(0.347, 0.0005), 20);
        assert_eq!(Verdict::combine(c.iter().map(|c| c.verdict)), Verdict::Inconclusive);
        let c = verdict_t01(0.0, e(0.347, 0.001), e(0.347, 0.0005), e(0.347, 0.0005), 20);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].verdict, Verdict::Pass);
    }

    #[test]
    fn cosine_of_opposites() {
        assert!((cosine(&[e(1.0, 0.0), e(0.0, 0.0)], &[e(-2.0, 0.0), e(0.0, 0.0)]) + 1.0).abs() < 1e-15);
    }
}
