//! Gauss–Legendre rules and the randomly phased lattice built from them.

use alloc::vec::Vec;

/// Gauss–Legendre nodes and weights on `[0, 1]` (weights sum to 1).
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on the lattice `s (Z^D + phase)`.
///
/// The lattice is anchored in absolute coordinates rather than at the
/// evaluation point, so the discretized field is a genuine function of
/// position and its derivatives are exact derivatives of that function.
/// A uniformly random phase per replica keeps the discretized field
/// stationary in law.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeRule {
    pub spacing: f64,
    /// Node offsets inside a lattice cell, in units of `spacing`.
    pub offsets: Vec<f64>,
    /// Per-axis weights, already multiplied by `spacing`.
    pub weights: Vec<f64>,
}

impl LatticeRule {
    /// `order` nodes per axis across a ball of radius `radius`, grouped `per_cell` to a lattice cell.
    pub fn new(radius: f64, order: usize, per_cell: usize) -> Self {
        assert!(per_cell >= 1 && order >= per_cell && order % per_cell == 0);
        let cells = order / per_cell;
        let spacing = 2.0 * radius / cells as f64;
        let (t, w) = gauss_legendre_unit(per_cell);
        LatticeRule {
            spacing,
            offsets: t,
            weights: w.into_iter().map(|w| w * spacing).collect(),
        }
    }

    /// Nodes of one axis within `[lo, hi]`, given the phase (in `[0,1)`) of that axis.
    pub fn axis_nodes(&self, lo: f64, hi: f64, phase: f64, out: &mut Vec<(f64, f64)>) {
        out.clear();
        let s = self.spacing;
        let first = libm::floor(lo / s - phase) as i64;
        let last = libm::floor(hi / s - phase) as i64;
        for n in first..=last {
            let base = n as f64 + phase;
            for (t, w) in self.offsets.iter().zip(&self.weights) {
                let z = (base + t) * s;
                if z > lo && z < hi {
                    out.push((z, *w));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre_unit(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * libm::pow(*x, p as f64)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} p={p} {q} {exact}");
            }
        }
    }

    #[test]
    fn known_two_point_rule() {
        let (x, w) = gauss_legendre_unit(2);
        let a = 0.5 - 0.5 / 3f64.sqrt();
        let mut xs = x.clone();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((xs[0] - a).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn axis_nodes_cover_interval() {
        let rule = LatticeRule::new(1.0, 24, 2);
        let mut nodes = Vec::new();
        rule.axis_nodes(-3.3, 4.1, 0.37, &mut nodes);
        // weights of all nodes in an interval approximate its length
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((total - 7.4).abs() < 2.0 * rule.spacing);
        for w in nodes.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
    }
}
