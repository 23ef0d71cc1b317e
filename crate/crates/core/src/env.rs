//! Poisson point environments generated cell by cell.
//!
//! Space is tiled by cubic cells of side `R/4`. The points of a cell are a
//! pure function of `(seed, replica, cell coordinates)`, so any bounded region
//! can be realized on demand without global state. A handle carries an
//! origin offset that implements the translation `tau_x`: every query is
//! evaluated at `view coordinate + offset` in absolute coordinates.

use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::rng::{domain, CounterRng, KeyBuilder, PoissonSampler};

/// Mass of the Poisson law beyond the per-cell point cap.
pub const CELL_CAP_TAIL: f64 = 1e-12;

/// Mean number of points in a ball of radius `R/8` used by [`EnvironmentSpec::with_default_intensity`].
pub const DEFAULT_POINTS_PER_KERNEL_BALL: f64 = 3.0;

/// Default dependence range. Large enough that the mollifier's derivative
/// norms stay below one, so the field is not rescaled into insignificance.
pub const DEFAULT_RANGE: f64 = 32.0;

pub type Point<const D: usize> = [f64; D];

/// Parameters of the random environment.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvironmentSpec {
    pub dim: usize,
    /// Expected points per unit volume.
    pub intensity: f64,
    /// Dependence range `R`.
    pub range: f64,
    pub seed: u64,
}

/// Volume of the unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_n = 2 pi / n * V_{n-2}
    let mut v = if dim % 2 == 0 { 1.0 } else { 2.0 };
    let mut n = if dim % 2 == 0 { 2 } else { 3 };
    while n <= dim {
        v *= core::f64::consts::TAU / n as f64;
        n += 2;
    }
    v
}

impl EnvironmentSpec {
    /// Intensity chosen so a ball of radius `range/8` holds three points on average.
    pub fn with_default_intensity(dim: usize, range: f64, seed: u64) -> Self {
        let r = range / 8.0;
        let vol = unit_ball_volume(dim) * libm::pow(r, dim as f64);
        EnvironmentSpec {
            dim,
            intensity: DEFAULT_POINTS_PER_KERNEL_BALL / vol,
            range,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(alloc::format!(
                "dimension must be at least 2, got {}",
                self.dim
            )));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "intensity must be positive and finite, got {}",
                self.intensity
            )));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "range must be positive and finite, got {}",
                self.range
            )));
        }
        Ok(())
    }

    pub fn cell_side(&self) -> f64 {
        self.range / 4.0
    }

    pub fn mean_points_per_cell(&self) -> f64 {
        self.intensity * libm::pow(self.cell_side(), self.dim as f64)
    }
}

/// The points of one replica found within `radius` of `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointBatch<const D: usize> {
    pub center: Point<D>,
    pub radius: f64,
    pub points: Vec<Point<D>>,
}

/// A realization of the environment, possibly seen from a shifted origin.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvHandle<const D: usize> {
    spec: EnvironmentSpec,
    replica: u64,
    offset: Point<D>,
    cell_side: f64,
    counts: PoissonSampler,
    replica_key: u64,
}

/// Builds the environment of replica `replica_index`.
pub fn make_env<const D: usize>(spec: EnvironmentSpec, replica_index: u64) -> Result<EnvHandle<D>> {
    spec.validate()?;
    if spec.dim != D {
        return Err(Error::Config(alloc::format!(
            "spec dimension {} does not match handle dimension {}",
            spec.dim, D
        )));
    }
    let replica_key = KeyBuilder::new(domain::REPLICA)
        .push(spec.seed)
        .push(replica_index)
        .finish();
    Ok(EnvHandle {
        spec,
        replica: replica_index,
        offset: [0.0; D],
        cell_side: spec.cell_side(),
        counts: PoissonSampler::new(spec.mean_points_per_cell(), CELL_CAP_TAIL),
        replica_key,
    })
}

/// The environment translated by `x`: fields of the view at `y` equal fields of `env` at `y + x`.
pub fn shifted_view<const D: usize>(env: &EnvHandle<D>, x: Point<D>) -> EnvHandle<D> {
    let mut out = env.clone();
    for (o, xi) in out.offset.iter_mut().zip(x) {
        *o += xi;
    }
    out
}

/// Points of `env` within `radius` of `center` (both in view coordinates).
pub fn points_in_ball<const D: usize>(env: &EnvHandle<D>, center: Point<D>, radius: f64) -> PointBatch<D> {
    let abs_center = env.to_absolute(center);
    let mut points = Vec::new();
    env.absolute_points_near(abs_center, radius, &mut points);
    for p in points.iter_mut() {
        for (pi, oi) in p.iter_mut().zip(env.offset) {
            *pi -= oi;
        }
    }
    PointBatch { center, radius, points }
}

impl<const D: usize> EnvHandle<D> {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn offset(&self) -> Point<D> {
        self.offset
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    /// Per-cell point cap implied by [`CELL_CAP_TAIL`].
    pub fn cell_cap(&self) -> u32 {
        self.counts.cap()
    }

    #[inline]
    pub fn to_absolute(&self, x: Point<D>) -> Point<D> {
        let mut a = x;
        for (ai, oi) in a.iter_mut().zip(self.offset) {
            *ai += oi;
        }
        a
    }

    /// Uniform point of `[0,1)^D` attached to this replica, independent of its points.
    /// Used to randomize the phase of quadrature lattices.
    pub fn replica_phase(&self) -> Point<D> {
        let mut rng = CounterRng::new(self.replica_key, domain::LATTICE_PHASE);
        core::array::from_fn(|_| rng.uniform())
    }

    /// Deterministic random stream owned by this replica under `tag`.
    pub fn replica_stream(&self, tag: u64) -> CounterRng {
        CounterRng::new(self.replica_key, tag)
    }

    /// Integer coordinates of the cell containing the absolute point `a`.
    #[inline]
    pub fn cell_of(&self, a: Point<D>) -> [i64; D] {
        core::array::from_fn(|k| libm::floor(a[k] / self.cell_side) as i64)
    }

    /// Appends the points of one cell, in generation order, to `out`.
    pub fn cell_points(&self, cell: [i64; D], out: &mut Vec<Point<D>>) {
        let mut kb = KeyBuilder::new(domain::CELL_POINTS)
            .push(self.spec.seed)
            .push(self.replica);
        for c in cell {
            kb = kb.push_i64(c);
        }
        let mut rng = CounterRng::new(kb.finish(), 0);
        let n = self.counts.sample(rng.uniform());
        for _ in 0..n {
            let p: Point<D> = core::array::from_fn(|k| (cell[k] as f64 + rng.uniform()) * self.cell_side);
            out.push(p);
        }
    }

    /// Cells whose closed box meets the open ball `B(a, radius)`, in lexicographic order.
    pub fn cells_meeting_ball(&self, a: Point<D>, radius: f64, mut visit: impl FnMut([i64; D])) {
        if radius <= 0.0 {
            return;
        }
        let lo: [i64; D] = core::array::from_fn(|k| libm::floor((a[k] - radius) / self.cell_side) as i64);
        let hi: [i64; D] = core::array::from_fn(|k| libm::floor((a[k] + radius) / self.cell_side) as i64);
        let r2 = radius * radius;
        let mut cell = lo;
        loop {
            let mut d2 = 0.0;
            for k in 0..D {
                let left = cell[k] as f64 * self.cell_side;
                let right = left + self.cell_side;
                let gap = if a[k] < left {
                    left - a[k]
                } else if a[k] > right {
                    a[k] - right
                } else {
                    0.0
                };
                d2 += gap * gap;
            }
            if d2 < r2 {
                visit(cell);
            }
            // odometer, last axis fastest
            let mut k = D;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cell[k] < hi[k] {
                    cell[k] += 1;
                    break;
                }
                cell[k] = lo[k];
            }
        }
    }

    /// Appends the absolute coordinates of all points within `radius` of the absolute point `a`.
    pub fn absolute_points_near(&self, a: Point<D>, radius: f64, out: &mut Vec<Point<D>>) {
        let r2 = radius * radius;
        let mut scratch = Vec::new();
        self.cells_meeting_ball(a, radius, |cell| {
            scratch.clear();
            self.cell_points(cell, &mut scratch);
            out.extend(scratch.iter().filter(|p| dist2(p, &a) < r2));
        });
    }
}

#[inline]
pub fn dist2<const D: usize>(p: &Point<D>, q: &Point<D>) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = p[k] - q[k];
        s += d * d;
    }
    s
}

/// Source of environment points for field evaluation, in absolute coordinates.
pub trait PointSource<const D: usize> {
    fn env(&self) -> &EnvHandle<D>;
    fn points_near(&self, a: Point<D>, radius: f64, out: &mut Vec<Point<D>>);
}

impl<const D: usize> PointSource<D> for EnvHandle<D> {
    fn env(&self) -> &EnvHandle<D> {
        self
    }

    fn points_near(&self, a: Point<D>, radius: f64, out: &mut Vec<Point<D>>) {
        self.absolute_points_near(a, radius, out)
    }
}

const CACHE_SLOTS: usize = 64;

struct CacheSlot<const D: usize> {
    cell: Option<[i64; D]>,
    points: Vec<Point<D>>,
}

/// Direct-mapped memo of generated cells for a single trajectory.
/// Results are identical to querying the handle directly.
pub struct CachedEnv<'a, const D: usize> {
    env: &'a EnvHandle<D>,
    slots: RefCell<Vec<CacheSlot<D>>>,
}

impl<'a, const D: usize> CachedEnv<'a, D> {
    pub fn new(env: &'a EnvHandle<D>) -> Self {
        let slots = (0..CACHE_SLOTS)
            .map(|_| CacheSlot { cell: None, points: Vec::new() })
            .collect();
        CachedEnv { env, slots: RefCell::new(slots) }
    }

    fn slot_of(cell: &[i64; D]) -> usize {
        let mut h = 0u64;
        for &c in cell {
            h = crate::rng::mix64(h ^ c as u64);
        }
        (h as usize) % CACHE_SLOTS
    }
}

impl<const D: usize> PointSource<D> for CachedEnv<'_, D> {
    fn env(&self) -> &EnvHandle<D> {
        self.env
    }

    fn points_near(&self, a: Point<D>, radius: f64, out: &mut Vec<Point<D>>) {
        let r2 = radius * radius;
        let mut slots = self.slots.borrow_mut();
        self.env.cells_meeting_ball(a, radius, |cell| {
            let slot = &mut slots[Self::slot_of(&cell)];
            if slot.cell != Some(cell) {
                slot.points.clear();
                self.env.cell_points(cell, &mut slot.points);
                slot.cell = Some(cell);
            }
            out.extend(slot.points.iter().filter(|p| dist2(p, &a) < r2));
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> EnvironmentSpec {
        EnvironmentSpec::with_default_intensity(2, 1.0, 42)
    }

    #[test]
    fn default_intensity_matches_three_points_per_kernel_ball() {
        let s = spec();
        assert!((s.intensity - 61.115).abs() < 0.01, "{}", s.intensity);
        let s32 = EnvironmentSpec::with_default_intensity(2, 32.0, 1);
        assert!((s32.intensity * core::f64::consts::PI * 16.0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - core::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * core::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(4) - core::f64::consts::PI.powi(2) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec();
        s.dim = 1;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = spec();
        s.intensity = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.range = -1.0;
        assert!(s.validate().is_err());
        assert!(make_env::<3>(spec(), 0).is_err());
    }

    #[test]
    fn zero_radius_is_empty() {
        let env = make_env::<2>(spec(), 0).unwrap();
        assert!(points_in_ball(&env, [0.3, 0.1], 0.0).points.is_empty());
    }

    #[test]
    fn same_replica_same_points() {
        let a = make_env::<2>(spec(), 5).unwrap();
        let b = make_env::<2>(spec(), 5).unwrap();
        let pa = points_in_ball(&a, [0.7, -0.2], 0.6);
        let pb = points_in_ball(&b, [0.7, -0.2], 0.6);
        assert_eq!(pa, pb);
        assert!(!pa.points.is_empty());
        let c = make_env::<2>(spec(), 6).unwrap();
        assert_ne!(pa.points, points_in_ball(&c, [0.7, -0.2], 0.6).points);
    }

    #[test]
    fn nested_and_overlapping_queries_agree() {
        let env = make_env::<2>(spec(), 3).unwrap();
        let big = points_in_ball(&env, [0.0, 0.0], 0.8);
        let small = points_in_ball(&env, [0.2, 0.1], 0.3);
        let expected: Vec<_> = big
            .points
            .iter()
            .copied()
            .filter(|p| dist2(p, &[0.2, 0.1]) < 0.09)
            .collect();
        let mut got = small.points.clone();
        let mut exp = expected.clone();
        let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
        got.sort_by_key(key);
        exp.sort_by_key(key);
        assert_eq!(got, exp);

        let other = points_in_ball(&env, [0.5, 0.1], 0.4);
        for p in &other.points {
            if dist2(p, &[0.2, 0.1]) < 0.09 {
                assert!(small.points.contains(p));
            }
        }
    }

    #[test]
    fn points_lie_in_ball_and_follow_cell_order() {
        let env = make_env::<2>(spec(), 9).unwrap();
        let batch = points_in_ball(&env, [1.3, -0.4], 0.9);
        let mut last = None;
        for p in &batch.points {
            assert!(dist2(p, &batch.center) < 0.81);
            let c = env.cell_of(*p);
            if let Some(prev) = last {
                assert!(prev <= c);
            }
            last = Some(c);
        }
    }

    #[test]
    fn shifted_view_translates_queries() {
        let env = make_env::<2>(spec(), 1).unwrap();
        let x = [0.37, -1.25];
        let view = shifted_view(&env, x);
        let direct = points_in_ball(&env, [0.37 + 0.1, -1.25 + 0.2], 0.5);
        let via = points_in_ball(&view, [0.1, 0.2], 0.5);
        assert_eq!(direct.points.len(), via.points.len());
        for (p, q) in direct.points.iter().zip(&via.points) {
            assert!((p[0] - (q[0] + x[0])).abs() < 1e-12);
            assert!((p[1] - (q[1] + x[1])).abs() < 1e-12);
        }
        let zero = shifted_view(&env, [0.0, 0.0]);
        assert_eq!(points_in_ball(&zero, [0.2, 0.2], 0.4), points_in_ball(&env, [0.2, 0.2], 0.4));
    }

    #[test]
    fn query_touches_only_cells_meeting_the_ball() {
        let env = make_env::<2>(spec(), 0).unwrap();
        let side = env.cell_side();
        let a = [0.1 * side, 0.5 * side];
        let mut cells = Vec::new();
        env.cells_meeting_ball(a, 0.3 * side, |c| cells.push(c));
        assert_eq!(cells, [[-1, 0], [0, 0]]);
    }

    #[test]
    fn cache_is_transparent() {
        let env = make_env::<2>(spec(), 12).unwrap();
        let cached = CachedEnv::new(&env);
        for i in 0..50 {
            let a = [0.05 * i as f64, -0.03 * i as f64];
            let mut u = Vec::new();
            let mut v = Vec::new();
            env.points_near(a, 0.25, &mut u);
            cached.points_near(a, 0.25, &mut v);
            assert_eq!(u, v);
        }
    }
}
