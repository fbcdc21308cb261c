//! Deterministic path maps: stopping at the first entry into a closed set,
//! coalescing projection of ordered scalar paths, and the right-continuous
//! extension of dyadic skeletons to continuum forests.
//!
//! Paths are piecewise-linear interpolants of their grid samples; entry and
//! meeting times are solved exactly per segment and inserted into the grid.

use serde::{Deserialize, Serialize};

use crate::arratia::UnionFind;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::metrics::{cell_masses, DiscreteMeasure};
use crate::real::Real;

/// A continuous path `[0, 1] → R^d`, linear between grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath<T> {
    dim: usize,
    times: Vec<T>,
    /// Time-major: `values[j * dim + c]`.
    values: Vec<T>,
}

impl<T: Real> PiecewiseLinearPath<T> {
    pub fn new(dim: usize, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if times.len() < 2 {
            return Err(invalid("times", "need at least two grid points"));
        }
        if times[0] != T::zero() || times[times.len() - 1] != T::one() {
            return Err(invalid("times", "grid must run from 0 to 1"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "grid must be strictly increasing"));
        }
        ensure_len(dim * times.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path values".into()));
        }
        Ok(Self { dim, times, values })
    }

    pub fn scalar(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::new(1, times, values)
    }

    /// Samples `f` on `times`.
    pub fn from_fn(dim: usize, times: Vec<T>, f: impl Fn(T) -> Vec<T>) -> Result<Self> {
        let values = times.iter().flat_map(|&t| f(t)).collect();
        Self::new(dim, times, values)
    }

    /// Stacks `n` scalar paths on a common grid into one `R^n` path.
    pub fn from_rows(times: Vec<T>, rows: &[Vec<T>]) -> Result<Self> {
        let len = times.len();
        for r in rows {
            ensure_len(len, r.len())?;
        }
        let values = (0..len).flat_map(|j| rows.iter().map(move |r| r[j])).collect();
        Self::new(rows.len(), times, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn point(&self, j: usize) -> &[T] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Coordinate `c` at every grid time.
    pub fn coordinate(&self, c: usize) -> Vec<T> {
        (0..self.times.len()).map(|j| self.values[j * self.dim + c]).collect()
    }

    pub fn eval(&self, t: T) -> Vec<T> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.point(0).to_vec();
        }
        if t >= self.times[n - 1] {
            return self.point(n - 1).to_vec();
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        let s = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        lerp(self.point(j), self.point(j + 1), s)
    }

    /// Largest distance between the two interpolants, checked at the union
    /// of both grids (exact for piecewise-linear paths).
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        ensure_len(self.dim, other.dim)?;
        let mut best = T::zero();
        for &t in self.times.iter().chain(other.times.iter()) {
            let a = self.eval(t);
            let b = other.eval(t);
            for (x, y) in a.iter().zip(&b) {
                best = best.max((*x - *y).abs());
            }
        }
        Ok(best)
    }
}

fn lerp<T: Real>(a: &[T], b: &[T], s: T) -> Vec<T> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == y { x } else { x + (y - x) * s })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

/// Closed target sets with exact segment-entry computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HittingSet<T> {
    /// `{x : normal · x ≥ offset}`
    Halfspace { normal: Vec<T>, offset: T },
    Box { lo: Vec<T>, hi: Vec<T> },
    FiniteUnion { boxes: Vec<BoxSet<T>> },
}

impl<T: Real> HittingSet<T> {
    pub fn halfspace(normal: Vec<T>, offset: T) -> Result<Self> {
        let s = Self::Halfspace { normal, offset };
        s.validate()?;
        Ok(s)
    }

    pub fn cube(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        let s = Self::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Halfspace { normal, .. } => normal.len(),
            Self::Box { lo, .. } => lo.len(),
            Self::FiniteUnion { boxes } => boxes.first().map_or(0, |b| b.lo.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_box = |lo: &[T], hi: &[T]| -> Result<()> {
            ensure_len(lo.len(), hi.len())?;
            if lo.is_empty() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                return Err(invalid("hitting_set", "box must be nonempty with lo ≤ hi"));
            }
            Ok(())
        };
        match self {
            Self::Halfspace { normal, offset } => {
                if normal.is_empty() || normal.iter().all(|&c| c == T::zero()) || !offset.is_finite() {
                    return Err(invalid("hitting_set", "halfspace needs a nonzero normal"));
                }
            }
            Self::Box { lo, hi } => check_box(lo, hi)?,
            Self::FiniteUnion { boxes } => {
                if boxes.is_empty() {
                    return Err(invalid("hitting_set", "union needs at least one box"));
                }
                let d = boxes[0].lo.len();
                for b in boxes {
                    check_box(&b.lo, &b.hi)?;
                    ensure_len(d, b.lo.len())?;
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            Self::Halfspace { normal, offset } => dot(normal, x) >= *offset,
            Self::Box { lo, hi } => in_box(lo, hi, x),
            Self::FiniteUnion { boxes } => boxes.iter().any(|b| in_box(&b.lo, &b.hi, x)),
        }
    }

    /// First `s ∈ [0, 1]` with `a + s (b - a)` in the set, and that point
    /// snapped into the set against rounding.
    fn segment_entry(&self, a: &[T], b: &[T]) -> Option<(T, Vec<T>)> {
        match self {
            Self::Halfspace { normal, offset } => {
                let g0 = dot(normal, a) - *offset;
                if g0 >= T::zero() {
                    return Some((T::zero(), a.to_vec()));
                }
                let g1 = dot(normal, b) - *offset;
                if g1 < T::zero() {
                    return None;
                }
                let s = (g0 / (g0 - g1)).min(T::one());
                let mut p = if s == T::one() { b.to_vec() } else { lerp(a, b, s) };
                let nn = dot(normal, normal);
                for _ in 0..4 {
                    let gap = *offset - dot(normal, &p);
                    if gap <= T::zero() {
                        break;
                    }
                    for (pc, &nc) in p.iter_mut().zip(normal) {
                        *pc += nc * (gap / nn + T::epsilon() * pc.abs().max(T::one()) * nc.signum());
                    }
                }
                Some((s, p))
            }
            Self::Box { lo, hi } => box_entry(lo, hi, a, b),
            Self::FiniteUnion { boxes } => boxes
                .iter()
                .filter_map(|bx| box_entry(&bx.lo, &bx.hi, a, b))
                .min_by(|x, y| x.0.partial_cmp(&y.0).expect("finite")),
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn in_box<T: Real>(lo: &[T], hi: &[T], x: &[T]) -> bool {
    x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h)
}

/// Liang–Barsky clipping of the segment against the box.
fn box_entry<T: Real>(lo: &[T], hi: &[T], a: &[T], b: &[T]) -> Option<(T, Vec<T>)> {
    if in_box(lo, hi, a) {
        return Some((T::zero(), a.to_vec()));
    }
    let (mut s_lo, mut s_hi) = (T::zero(), T::one());
    for c in 0..a.len() {
        let d = b[c] - a[c];
        if d == T::zero() {
            if a[c] < lo[c] || a[c] > hi[c] {
                return None;
            }
            continue;
        }
        let t1 = (lo[c] - a[c]) / d;
        let t2 = (hi[c] - a[c]) / d;
        let (tmin, tmax) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        s_lo = s_lo.max(tmin);
        s_hi = s_hi.min(tmax);
        if s_lo > s_hi {
            return None;
        }
    }
    let raw = if s_lo == T::one() { b.to_vec() } else { lerp(a, b, s_lo) };
    let p = raw
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.max(l).min(h))
        .collect();
    Some((s_lo, p))
}

/// First entry `(τ, f(τ))` into `B`, `None` if the path never enters.
fn first_entry<T: Real>(f: &PiecewiseLinearPath<T>, set: &HittingSet<T>) -> Option<(usize, T, Vec<T>)> {
    for j in 0..f.segments() {
        if let Some((s, p)) = set.segment_entry(f.point(j), f.point(j + 1)) {
            let t = if s == T::zero() {
                f.times[j]
            } else if s == T::one() {
                f.times[j + 1]
            } else {
                f.times[j] + s * (f.times[j + 1] - f.times[j])
            };
            return Some((j, t, p));
        }
    }
    None
}

/// `τ = inf{t : f(t) ∈ B} ∧ 1` for the interpolated path.
pub fn hitting_time<T: Real>(f: &PiecewiseLinearPath<T>, set: &HittingSet<T>) -> Result<T> {
    ensure_len(f.dim, set.dim())?;
    Ok(first_entry(f, set).map_or(T::one(), |(_, t, _)| t))
}

/// `f(t ∧ τ)`, with `τ` inserted into the grid.
pub fn stop_map<T: Real>(f: &PiecewiseLinearPath<T>, set: &HittingSet<T>) -> Result<PiecewiseLinearPath<T>> {
    ensure_len(f.dim, set.dim())?;
    let Some((j, tau, p)) = first_entry(f, set) else {
        return Ok(f.clone());
    };
    let d = f.dim;
    let mut times = Vec::with_capacity(f.times.len() + 1);
    let mut values = Vec::with_capacity(f.values.len() + d);
    // grid points strictly before τ keep their values
    for k in 0..=j {
        if f.times[k] < tau {
            times.push(f.times[k]);
            values.extend_from_slice(f.point(k));
        }
    }
    times.push(tau);
    values.extend_from_slice(&p);
    for &t in &f.times[j + 1..] {
        if t > tau {
            times.push(t);
            values.extend_from_slice(&p);
        }
    }
    PiecewiseLinearPath::new(d, times, values)
}

/// A merge found by [`coalescing_projection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meeting<T> {
    pub time: T,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    /// Coordinates are the projected particles.
    pub path: PiecewiseLinearPath<T>,
    /// `tau[k]`: meeting time of particles `k - 1` and `k`; `tau[0] = 1`.
    pub tau: Vec<T>,
    pub meetings: Vec<Meeting<T>>,
}

/// Makes ordered scalar paths (the coordinates of `f`) coalesce: after the
/// clusters of `i < j` first meet, `j`'s cluster follows the
/// smallest-index particle. Simultaneous meetings are processed in
/// `(time, left index)` order.
pub fn coalescing_projection<T: Real>(f: &PiecewiseLinearPath<T>) -> Result<Projection<T>> {
    let n = f.dim;
    if f.point(0).windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("paths", "starting points must be ordered"));
    }
    let mut uf = UnionFind::new(n);
    let mut reps: Vec<usize> = (0..n).collect();
    let mut tau = vec![T::one(); n];
    let mut meetings = Vec::new();
    // (segment, fraction) of every output time beyond the first
    let mut stops: Vec<(usize, T)> = Vec::with_capacity(f.times.len());
    // per output time: representative of each particle
    let mut rep_at: Vec<Vec<usize>> = Vec::with_capacity(f.times.len());

    let at = |r: usize, j: usize, s: T| -> T {
        let a = f.values[j * n + r];
        let b = f.values[(j + 1) * n + r];
        if s == T::zero() {
            a
        } else if s == T::one() || a == b {
            b
        } else {
            a + (b - a) * s
        }
    };

    let mut merge = |uf: &mut UnionFind, reps: &mut Vec<usize>, idx: usize, time: T| {
        let (l, r) = (reps[idx], reps[idx + 1]);
        uf.union(l, r);
        tau[r] = time;
        meetings.push(Meeting { time, left: l, right: r });
        reps.remove(idx + 1);
    };

    rep_at.push((0..n).collect());

    for j in 0..f.segments() {
        let mut s0 = T::zero();
        loop {
            let mut best: Option<(T, usize)> = None;
            for idx in 0..reps.len().saturating_sub(1) {
                let (l, r) = (reps[idx], reps[idx + 1]);
                let d0 = at(r, j, s0) - at(l, j, s0);
                let d1 = at(r, j, T::one()) - at(l, j, T::one());
                let s = if d0 <= T::zero() {
                    s0
                } else if d1 <= T::zero() {
                    let da = at(r, j, T::zero()) - at(l, j, T::zero());
                    if d1 == T::zero() {
                        T::one()
                    } else {
                        (da / (da - d1)).max(s0).min(T::one())
                    }
                } else {
                    continue;
                };
                if best.is_none_or(|(bs, _)| s < bs) {
                    best = Some((s, idx));
                }
            }
            let Some((s, idx)) = best else { break };
            let time = if s == T::zero() {
                f.times[j]
            } else if s == T::one() {
                f.times[j + 1]
            } else {
                f.times[j] + s * (f.times[j + 1] - f.times[j])
            };
            merge(&mut uf, &mut reps, idx, time);
            let now: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
            if s == T::zero() {
                *rep_at.last_mut().expect("initial entry") = now;
            } else if s < T::one() {
                if stops.last() != Some(&(j, s)) {
                    stops.push((j, s));
                    rep_at.push(Vec::new());
                }
                *rep_at.last_mut().expect("pushed") = now;
            }
            s0 = s;
        }
        stops.push((j, T::one()));
        rep_at.push((0..n).map(|i| uf.find(i)).collect());
    }

    let mut times = Vec::with_capacity(stops.len() + 1);
    let mut values = Vec::with_capacity((stops.len() + 1) * n);
    times.push(T::zero());
    for i in 0..n {
        values.push(f.values[rep_at[0][i]]);
    }
    for (k, &(j, s)) in stops.iter().enumerate() {
        times.push(if s == T::one() {
            f.times[j + 1]
        } else {
            f.times[j] + s * (f.times[j + 1] - f.times[j])
        });
        for i in 0..n {
            values.push(at(rep_at[k + 1][i], j, s));
        }
    }
    tau[0] = T::one();
    Ok(Projection {
        path: PiecewiseLinearPath::new(n, times, values)?,
        tau,
        meetings,
    })
}

/// Values `y(k / 2^n, t_j)` of a monotone dyadic skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestSkeleton<T> {
    level: u32,
    times: Vec<T>,
    /// Row-major by dyadic index: `values[k * times.len() + j]`.
    values: Vec<T>,
}

impl<T: Real> ForestSkeleton<T> {
    /// Checks `y(r, 0) = r` and finiteness; monotonicity is reported by
    /// [`ForestSkeleton::is_monotone`] since rate evaluation treats it as
    /// an infinite-rate condition rather than an error.
    pub fn new(level: u32, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        let points = (1usize << level) + 1;
        if times.len() < 2 || times[0] != T::zero() || times[times.len() - 1] != T::one() {
            return Err(invalid("times", "grid must run from 0 to 1"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "grid must be strictly increasing"));
        }
        ensure_len(points * times.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("skeleton values".into()));
        }
        let len = times.len();
        let scale = T::from_usize_lossy(1usize << level);
        for k in 0..points {
            let r = T::from_usize_lossy(k) / scale;
            if (values[k * len] - r).abs() > T::tiny() {
                return Err(invalid("values", format!("skeleton must start at y(r, 0) = r, r = {r}")));
            }
        }
        Ok(Self { level, times, values })
    }

    /// Builds a skeleton by sampling `y(r, t)`.
    pub fn from_fn(level: u32, times: Vec<T>, y: impl Fn(T, T) -> T) -> Result<Self> {
        let points = (1usize << level) + 1;
        let scale = T::from_usize_lossy(1usize << level);
        let values = (0..points)
            .flat_map(|k| {
                let r = T::from_usize_lossy(k) / scale;
                times.iter().map(|&t| y(r, t)).collect::<Vec<_>>()
            })
            .collect();
        Self::new(level, times, values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn points(&self) -> usize {
        (1usize << self.level) + 1
    }

    pub fn at(&self, k: usize, j: usize) -> T {
        self.values[k * self.times.len() + j]
    }

    pub fn is_monotone(&self) -> bool {
        (0..self.times.len()).all(|j| (1..self.points()).all(|k| self.at(k - 1, j) <= self.at(k, j)))
    }

    /// Paths of the dyadic points `k / 2^m`, as coordinates of one path.
    pub fn restrict(&self, m: u32) -> Result<PiecewiseLinearPath<T>> {
        if m > self.level {
            return Err(invalid("level", format!("{m} exceeds skeleton level {}", self.level)));
        }
        let stride = 1usize << (self.level - m);
        let rows: Vec<Vec<T>> = (0..self.points())
            .step_by(stride)
            .map(|k| (0..self.times.len()).map(|j| self.at(k, j)).collect())
            .collect();
        PiecewiseLinearPath::from_rows(self.times.clone(), &rows)
    }
}

/// Right-continuous extension of a skeleton, sampled on a query grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    query: Vec<T>,
    times: Vec<T>,
    /// Row-major by query point.
    values: Vec<T>,
}

impl<T: Real> Forest<T> {
    pub fn from_values(query: Vec<T>, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        ensure_len(query.len() * times.len(), values.len())?;
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "grid must be strictly increasing"));
        }
        Ok(Self { query, times, values })
    }

    pub fn query(&self) -> &[T] {
        &self.query
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn at(&self, q: usize, j: usize) -> T {
        self.values[q * self.times.len() + j]
    }

    /// Values at time `t`, linear between grid times; points that agree at
    /// both neighbouring grid times stay exactly equal.
    pub fn values_at(&self, t: T) -> Vec<T> {
        let times = &self.times;
        let j = times.partition_point(|&s| s < t).min(times.len() - 1);
        if times[j] == t || j == 0 {
            return (0..self.query.len()).map(|q| self.at(q, j)).collect();
        }
        let s = (t - times[j - 1]) / (times[j] - times[j - 1]);
        (0..self.query.len())
            .map(|q| {
                let (a, b) = (self.at(q, j - 1), self.at(q, j));
                if a == b {
                    a
                } else {
                    a + (b - a) * s
                }
            })
            .collect()
    }

    /// Image of Lebesgue measure on `[0, 1]`: each query point carries the
    /// length of its cell.
    pub fn measure_at(&self, t: T) -> Result<DiscreteMeasure<T>> {
        let masses = cell_masses(&self.query)?;
        DiscreteMeasure::from_atoms(self.values_at(t).into_iter().zip(masses).collect())
    }
}

/// `ỹ(u, t) = min_{r > u} y(r, t)` over the skeleton's dyadic points.
pub fn dyadic_extend<T: Real>(skeleton: &ForestSkeleton<T>, query_grid: &[T]) -> Result<Forest<T>> {
    for &u in query_grid {
        if !(u >= T::zero() && u < T::one()) {
            return Err(Error::Domain(format!("query point {u} outside [0, 1)")));
        }
    }
    let len = skeleton.times.len();
    let points = skeleton.points();
    let scale = T::from_usize_lossy(1usize << skeleton.level);
    // suffix minima per time
    let mut suffix = vec![T::zero(); points * len];
    for j in 0..len {
        let mut m = T::infinity();
        for k in (0..points).rev() {
            m = m.min(skeleton.at(k, j));
            suffix[k * len + j] = m;
        }
    }
    let mut values = Vec::with_capacity(query_grid.len() * len);
    for &u in query_grid {
        // smallest k with k / 2^n > u
        let mut k = (u * scale).floor().to_usize().unwrap_or(0) + 1;
        while k > 1 && T::from_usize_lossy(k - 1) / scale > u {
            k -= 1;
        }
        while T::from_usize_lossy(k) / scale <= u {
            k += 1;
        }
        values.extend_from_slice(&suffix[k * len..(k + 1) * len]);
    }
    Forest::from_values(query_grid.to_vec(), skeleton.times.clone(), values)
}
