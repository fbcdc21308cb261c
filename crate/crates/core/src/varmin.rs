//! Infima of the discretised rate functionals over event sets, computed by
//! projected gradient descent with backtracking and seeded multi-starts.
//!
//! Paths are parameterised by their grid increments, so every objective is
//! a sum of `½ |δ|^2 K / L` terms (segment of length `L` split into `K`
//! steps) and every constraint is a projection onto a convex set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::solve_dense;
use crate::pathmaps::{HittingSet, PiecewiseLinearPath};
use crate::real::Real;
use crate::rng::{replica_rng, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    #[serde(rename = "schilder_1d")]
    Schilder1d,
    Stopped,
    NpointCoalescing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint<T> {
    EndpointAtLeast(T),
    EndpointInBox { lo: T, hi: T },
    /// All particles coalesced by `t_c`.
    CoalesceBy(T),
    HitSetBy { set: HittingSet<T>, t_c: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalProblem<T> {
    pub functional: Functional,
    pub constraint: Constraint<T>,
    pub steps: usize,
    pub starts: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Stop once the projected-gradient norm falls below this.
    pub gradient: T,
    pub max_iterations: usize,
    pub multi_starts: usize,
    pub seed: u64,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            gradient: T::lit(1e-10).max(T::epsilon().sqrt() * T::lit(1e-2)),
            max_iterations: 50_000,
            multi_starts: 5,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSolution<T> {
    /// Optimal path; one coordinate per particle (or per dimension).
    pub path: PiecewiseLinearPath<T>,
    pub value: T,
    /// Projected-gradient norm at the returned point.
    pub gradient_norm: T,
    pub iterations: usize,
    /// `false` when the iteration budget ran out first.
    pub converged: bool,
    /// Max over components of `|analytic - central difference| / max(1, |a|, |b|)`.
    pub gradient_check: T,
    /// Gap indices in merge order, for coalescing problems.
    pub merge_order: Option<Vec<usize>>,
}

trait Model<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T], g: &mut [T]);
    fn project(&self, x: &mut [T]);
    /// Straight-line candidate before projection.
    fn initial(&self) -> Vec<T>;
    fn perturbation(&self, i: usize, x: T) -> T;
    /// Whether coordinate `i` is a duration the objective divides by.
    fn is_duration(&self, _i: usize) -> bool {
        false
    }
    fn path(&self, x: &[T]) -> Result<PiecewiseLinearPath<T>>;
}

fn uniform_times<T: Real>(t0: T, t1: T, k: usize) -> impl Iterator<Item = T> {
    (0..=k).map(move |j| {
        if j == k {
            t1
        } else {
            t0 + (t1 - t0) * T::from_usize_lossy(j) / T::from_usize_lossy(k)
        }
    })
}

/// Shifts all `k` increments equally so their sum moves from `from` to `to`.
fn shift_sum<T: Real>(incs: &mut [T], from: T, to: T) {
    let d = (to - from) / T::from_usize_lossy(incs.len());
    incs.iter_mut().for_each(|v| *v += d);
}

/// One-dimensional Brownian path with an endpoint constraint in `[lo, hi]`.
struct Endpoint<T> {
    start: T,
    lo: T,
    hi: T,
    k: usize,
}

impl<T: Real> Model<T> for Endpoint<T> {
    fn dim(&self) -> usize {
        self.k
    }

    fn value(&self, x: &[T]) -> T {
        T::lit(0.5) * T::from_usize_lossy(self.k) * x.iter().map(|&v| v * v).sum::<T>()
    }

    fn gradient(&self, x: &[T], g: &mut [T]) {
        let kf = T::from_usize_lossy(self.k);
        g.iter_mut().zip(x).for_each(|(g, &v)| *g = kf * v);
    }

    fn project(&self, x: &mut [T]) {
        let s: T = x.iter().copied().sum();
        let end = self.start + s;
        let target = end.max(self.lo).min(self.hi);
        if target != end {
            shift_sum(x, s, target - self.start);
        }
    }

    fn initial(&self) -> Vec<T> {
        let target = self.start.max(self.lo).min(self.hi);
        vec![(target - self.start) / T::from_usize_lossy(self.k); self.k]
    }

    fn perturbation(&self, _i: usize, _x: T) -> T {
        T::from_usize_lossy(self.k).recip()
    }

    fn path(&self, x: &[T]) -> Result<PiecewiseLinearPath<T>> {
        let mut pos = self.start;
        let mut values = vec![pos];
        for &d in x {
            pos += d;
            values.push(pos);
        }
        PiecewiseLinearPath::scalar(uniform_times(T::zero(), T::one(), self.k).collect(), values)
    }
}

/// Path in `R^d` that enters `B` at a free time `s ≤ t_c` and stops.
/// Layout: `k * d` increments, then `s`.
struct Stopped<T> {
    start: Vec<T>,
    set: HittingSet<T>,
    t_c: T,
    s_min: T,
    k: usize,
}

impl<T: Real> Stopped<T> {
    fn d(&self) -> usize {
        self.start.len()
    }

    fn project_point(&self, p: &[T]) -> Vec<T> {
        match &self.set {
            HittingSet::Halfspace { normal, offset } => {
                let g = *offset - dot(normal, p);
                if g <= T::zero() {
                    p.to_vec()
                } else {
                    let nn = dot(normal, normal);
                    p.iter().zip(normal).map(|(&x, &n)| x + n * g / nn).collect()
                }
            }
            HittingSet::Box { lo, hi } => clamp_box(p, lo, hi),
            HittingSet::FiniteUnion { boxes } => boxes
                .iter()
                .map(|b| clamp_box(p, &b.lo, &b.hi))
                .min_by(|a, b| {
                    dist2(a, p).partial_cmp(&dist2(b, p)).expect("finite")
                })
                .expect("nonempty union"),
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn clamp_box<T: Real>(p: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    p.iter().zip(lo.iter().zip(hi)).map(|(&x, (&l, &h))| x.max(l).min(h)).collect()
}

impl<T: Real> Model<T> for Stopped<T> {
    fn dim(&self) -> usize {
        self.k * self.d() + 1
    }

    fn value(&self, x: &[T]) -> T {
        let s = x[self.dim() - 1];
        let sq: T = x[..self.dim() - 1].iter().map(|&v| v * v).sum();
        T::lit(0.5) * T::from_usize_lossy(self.k) * sq / s
    }

    fn gradient(&self, x: &[T], g: &mut [T]) {
        let n = self.dim() - 1;
        let s = x[n];
        let kf = T::from_usize_lossy(self.k);
        let mut sq = T::zero();
        for i in 0..n {
            g[i] = kf * x[i] / s;
            sq += x[i] * x[i];
        }
        g[n] = -T::lit(0.5) * kf * sq / (s * s);
    }

    fn project(&self, x: &mut [T]) {
        let d = self.d();
        let n = self.dim() - 1;
        x[n] = x[n].max(self.s_min).min(self.t_c);
        let end: Vec<T> = (0..d)
            .map(|c| self.start[c] + (0..self.k).map(|j| x[j * d + c]).sum::<T>())
            .collect();
        let target = self.project_point(&end);
        let kf = T::from_usize_lossy(self.k);
        for c in 0..d {
            let shift = (target[c] - end[c]) / kf;
            for j in 0..self.k {
                x[j * d + c] += shift;
            }
        }
    }

    fn initial(&self) -> Vec<T> {
        let d = self.d();
        let target = self.project_point(&self.start);
        let kf = T::from_usize_lossy(self.k);
        let mut x = Vec::with_capacity(self.dim());
        for _ in 0..self.k {
            for c in 0..d {
                x.push((target[c] - self.start[c]) / kf);
            }
        }
        x.push(self.t_c);
        x
    }

    fn perturbation(&self, i: usize, _x: T) -> T {
        if i == self.dim() - 1 {
            self.t_c * T::lit(0.1)
        } else {
            T::from_usize_lossy(self.k).recip()
        }
    }

    fn is_duration(&self, i: usize) -> bool {
        i == self.dim() - 1
    }

    fn path(&self, x: &[T]) -> Result<PiecewiseLinearPath<T>> {
        let d = self.d();
        let s = x[self.dim() - 1];
        let mut times: Vec<T> = uniform_times(T::zero(), s, self.k).collect();
        let mut pos = self.start.clone();
        let mut values = pos.clone();
        for j in 0..self.k {
            for c in 0..d {
                pos[c] += x[j * d + c];
            }
            values.extend_from_slice(&pos);
        }
        if s < T::one() {
            times.push(T::one());
            values.extend_from_slice(&pos);
        }
        PiecewiseLinearPath::new(d, times, values)
    }
}

/// Coalescing particles with a fixed merge order. Segment `m` ends with the
/// merge of gap `order[m]`; layout: per segment, per alive cluster, `k`
/// increments, then the `n - 1` segment lengths.
struct Coalescing<T> {
    starts: Vec<T>,
    t_c: T,
    l_min: T,
    k: usize,
    order: Vec<usize>,
    /// Per segment: alive clusters as `(first, last)` particle ranges.
    clusters: Vec<Vec<(usize, usize)>>,
    /// Offset of each segment's block of increments.
    offsets: Vec<usize>,
    rows: Vec<Vec<(usize, T)>>,
    rhs: Vec<T>,
}

impl<T: Real> Coalescing<T> {
    fn new(starts: Vec<T>, t_c: T, l_min: T, k: usize, order: Vec<usize>) -> Self {
        let n = starts.len();
        let mut clusters = Vec::with_capacity(n - 1);
        let mut current: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        let mut offsets = Vec::with_capacity(n);
        let mut off = 0;
        for &gap in &order {
            clusters.push(current.clone());
            offsets.push(off);
            off += current.len() * k;
            let left = current.iter().position(|&(_, hi)| hi == gap).expect("gap left side alive");
            let (lo, _) = current[left];
            let (_, hi) = current[left + 1];
            current[left] = (lo, hi);
            current.remove(left + 1);
        }
        offsets.push(off);
        let mut model = Self {
            starts,
            t_c,
            l_min,
            k,
            order,
            clusters,
            offsets,
            rows: Vec::new(),
            rhs: Vec::new(),
        };
        model.build_constraints();
        model
    }

    fn segments(&self) -> usize {
        self.order.len()
    }

    fn increments(&self) -> usize {
        self.offsets[self.segments()]
    }

    /// Variable indices whose sum is particle `p`'s displacement over
    /// segments `0..=m`.
    fn lineage(&self, p: usize, m: usize) -> Vec<usize> {
        let mut idx = Vec::new();
        for seg in 0..=m {
            let c = self.clusters[seg]
                .iter()
                .position(|&(lo, hi)| lo <= p && p <= hi)
                .expect("particle belongs to a cluster");
            let base = self.offsets[seg] + c * self.k;
            idx.extend(base..base + self.k);
        }
        idx
    }

    fn build_constraints(&mut self) {
        for m in 0..self.segments() {
            let gap = self.order[m];
            let mut row: Vec<(usize, T)> = Vec::new();
            for i in self.lineage(gap + 1, m) {
                row.push((i, T::one()));
            }
            for i in self.lineage(gap, m) {
                match row.iter_mut().find(|(j, _)| *j == i) {
                    Some(entry) => entry.1 -= T::one(),
                    None => row.push((i, -T::one())),
                }
            }
            row.retain(|(_, c)| *c != T::zero());
            self.rows.push(row);
            self.rhs.push(self.starts[gap] - self.starts[gap + 1]);
        }
    }

    fn project_lengths(&self, l: &mut [T]) {
        for v in l.iter_mut() {
            *v = v.max(self.l_min);
        }
        let total: T = l.iter().copied().sum();
        if total <= self.t_c {
            return;
        }
        // Euclidean projection onto {L ≥ l_min, Σ L = t_c} via the sorted
        // simplex projection of L - l_min.
        let n = l.len();
        let budget = self.t_c - self.l_min * T::from_usize_lossy(n);
        let mut w: Vec<T> = l.iter().map(|&v| v - self.l_min).collect();
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let mut cum = T::zero();
        let mut theta = T::zero();
        for (i, &v) in sorted.iter().enumerate() {
            cum += v;
            let cand = (cum - budget) / T::from_usize_lossy(i + 1);
            if v - cand > T::zero() {
                theta = cand;
            }
        }
        for (v, wi) in l.iter_mut().zip(w.iter_mut()) {
            *wi = (*wi - theta).max(T::zero());
            *v = *wi + self.l_min;
        }
    }
}

impl<T: Real> Model<T> for Coalescing<T> {
    fn dim(&self) -> usize {
        self.increments() + self.segments()
    }

    fn value(&self, x: &[T]) -> T {
        let kf = T::from_usize_lossy(self.k);
        let base = self.increments();
        (0..self.segments())
            .map(|m| {
                let sq: T = x[self.offsets[m]..self.offsets[m + 1]].iter().map(|&v| v * v).sum();
                T::lit(0.5) * kf * sq / x[base + m]
            })
            .sum()
    }

    fn gradient(&self, x: &[T], g: &mut [T]) {
        let kf = T::from_usize_lossy(self.k);
        let base = self.increments();
        for m in 0..self.segments() {
            let l = x[base + m];
            let mut sq = T::zero();
            for i in self.offsets[m]..self.offsets[m + 1] {
                g[i] = kf * x[i] / l;
                sq += x[i] * x[i];
            }
            g[base + m] = -T::lit(0.5) * kf * sq / (l * l);
        }
    }

    fn project(&self, x: &mut [T]) {
        let base = self.increments();
        self.project_lengths(&mut x[base..]);
        let r = self.rows.len();
        let resid: Vec<T> = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| row.iter().map(|&(i, c)| c * x[i]).sum::<T>() - b)
            .collect();
        let mut gram = vec![T::zero(); r * r];
        for a in 0..r {
            for b in 0..r {
                gram[a * r + b] = self.rows[a]
                    .iter()
                    .filter_map(|&(i, c)| self.rows[b].iter().find(|(j, _)| *j == i).map(|&(_, e)| c * e))
                    .sum();
            }
        }
        let mult = solve_dense(gram, resid).expect("merge constraints are independent");
        for (row, &y) in self.rows.iter().zip(&mult) {
            for &(i, c) in row {
                x[i] -= c * y;
            }
        }
    }

    fn initial(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim()];
        let segs = T::from_usize_lossy(self.segments());
        let base = self.increments();
        for m in 0..self.segments() {
            x[base + m] = self.t_c / segs;
        }
        x
    }

    fn perturbation(&self, i: usize, _x: T) -> T {
        if i >= self.increments() {
            self.t_c * T::lit(0.05) / T::from_usize_lossy(self.segments())
        } else {
            let spread = self.starts[self.starts.len() - 1] - self.starts[0];
            spread / T::from_usize_lossy(self.k)
        }
    }

    fn is_duration(&self, i: usize) -> bool {
        i >= self.increments()
    }

    fn path(&self, x: &[T]) -> Result<PiecewiseLinearPath<T>> {
        let n = self.starts.len();
        let base = self.increments();
        let mut pos = self.starts.clone();
        let mut times = vec![T::zero()];
        let mut values = pos.clone();
        let mut t0 = T::zero();
        for m in 0..self.segments() {
            let l = x[base + m];
            let t1 = if m + 1 == self.segments() && (t0 + l) > T::one() {
                T::one()
            } else {
                t0 + l
            };
            for (j, t) in uniform_times(t0, t1, self.k).enumerate().skip(1) {
                for (c, &(lo, hi)) in self.clusters[m].iter().enumerate() {
                    let d = x[self.offsets[m] + c * self.k + j - 1];
                    let anchor = pos[lo] + d;
                    for p in pos.iter_mut().take(hi + 1).skip(lo) {
                        *p = anchor;
                    }
                }
                times.push(t);
                values.extend_from_slice(&pos);
            }
            // merge: the right cluster snaps onto the left one's position
            let gap = self.order[m];
            let (lo, _) = self.clusters[m]
                .iter()
                .copied()
                .find(|&(_, hi)| hi == gap)
                .expect("left cluster");
            let anchor = pos[lo];
            let (_, hi) = self.clusters[m]
                .iter()
                .copied()
                .find(|&(lo2, _)| lo2 == gap + 1)
                .expect("right cluster");
            for p in pos.iter_mut().take(hi + 1).skip(gap + 1) {
                *p = anchor;
            }
            let last = values.len() - n;
            values[last..].copy_from_slice(&pos);
            t0 = t1;
        }
        if t0 < T::one() {
            times.push(T::one());
            values.extend_from_slice(&pos);
        }
        PiecewiseLinearPath::new(n, times, values)
    }
}

struct Run<T> {
    x: Vec<T>,
    value: T,
    gradient_norm: T,
    iterations: usize,
    converged: bool,
}

fn projected_gradient_norm<T: Real>(model: &dyn Model<T>, x: &[T], g: &[T]) -> T {
    let mut y: Vec<T> = x.iter().zip(g).map(|(&a, &b)| a - b).collect();
    model.project(&mut y);
    x.iter().zip(&y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}

fn descend<T: Real>(model: &dyn Model<T>, mut x: Vec<T>, tol: &Tolerances<T>) -> Run<T> {
    let n = x.len();
    model.project(&mut x);
    let mut f = model.value(&x);
    let mut g = vec![T::zero(); n];
    model.gradient(&x, &mut g);
    let mut alpha = T::one();
    let mut prev: Option<(Vec<T>, Vec<T>)> = None;
    let mut y = vec![T::zero(); n];
    let mut gy = vec![T::zero(); n];
    for it in 0..tol.max_iterations {
        let pg = projected_gradient_norm(model, &x, &g);
        if pg <= tol.gradient {
            return Run {
                x,
                value: f,
                gradient_norm: pg,
                iterations: it,
                converged: true,
            };
        }
        // Barzilai–Borwein guess, then backtracking on the projected step.
        if let Some((px, pgr)) = &prev {
            let mut ss = T::zero();
            let mut sy = T::zero();
            for i in 0..n {
                let s = x[i] - px[i];
                ss += s * s;
                sy += s * (g[i] - pgr[i]);
            }
            if sy > T::zero() && ss > T::zero() {
                alpha = ss / sy;
            }
        }
        let fy = loop {
            for i in 0..n {
                y[i] = x[i] - alpha * g[i];
            }
            model.project(&mut y);
            let fy = model.value(&y);
            let mut lin = T::zero();
            let mut sq = T::zero();
            for i in 0..n {
                let s = y[i] - x[i];
                lin += g[i] * s;
                sq += s * s;
            }
            if fy.is_finite() && fy <= f + lin + sq / (T::lit(2.0) * alpha) {
                break fy;
            }
            alpha *= T::lit(0.5);
            if alpha < T::lit(1e-30) {
                break f;
            }
        };
        if alpha < T::lit(1e-30) {
            return Run {
                x,
                value: f,
                gradient_norm: pg,
                iterations: it,
                converged: false,
            };
        }
        model.gradient(&y, &mut gy);
        prev = Some((x.clone(), g.clone()));
        std::mem::swap(&mut x, &mut y);
        std::mem::swap(&mut g, &mut gy);
        f = fy;
    }
    let pg = projected_gradient_norm(model, &x, &g);
    Run {
        x,
        value: f,
        gradient_norm: pg,
        iterations: tol.max_iterations,
        converged: pg <= tol.gradient,
    }
}

fn gradient_check<T: Real>(model: &dyn Model<T>, x: &[T]) -> T {
    let mut g = vec![T::zero(); x.len()];
    model.gradient(x, &mut g);
    let mut worst = T::zero();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let mut h = T::lit(1e-6) * x[i].abs().max(T::one());
        if model.is_duration(i) {
            // stay well inside the 1/L singularity
            h = h.min(T::lit(1e-3) * x[i]);
        }
        probe[i] = x[i] + h;
        let up = model.value(&probe);
        probe[i] = x[i] - h;
        let down = model.value(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (T::lit(2.0) * h);
        let rel = (fd - g[i]).abs() / T::one().max(fd.abs()).max(g[i].abs());
        worst = worst.max(rel);
    }
    worst
}

fn multi_start<T: Real>(model: &dyn Model<T>, tol: &Tolerances<T>) -> Run<T> {
    let base = model.initial();
    let starts = tol.multi_starts.max(1);
    let runs: Vec<Run<T>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut x = base.clone();
            if s > 0 {
                let mut rng = replica_rng(tol.seed, 0, s as u64);
                for (i, v) in x.iter_mut().enumerate() {
                    let z: T = standard_normal(&mut rng);
                    *v += z * model.perturbation(i, *v);
                }
            }
            descend(model, x, tol)
        })
        .collect();
    runs.into_iter()
        .reduce(|best, r| if r.value < best.value { r } else { best })
        .expect("at least one start")
}

fn finish<T: Real>(model: &dyn Model<T>, run: Run<T>, order: Option<Vec<usize>>) -> Result<VariationalSolution<T>> {
    Ok(VariationalSolution {
        path: model.path(&run.x)?,
        value: run.value,
        gradient_norm: run.gradient_norm,
        iterations: run.iterations,
        converged: run.converged,
        gradient_check: gradient_check(model, &run.x),
        merge_order: order,
    })
}

/// All orders in which the `gaps` gaps between neighbours can close.
fn merge_orders(gaps: usize) -> Vec<Vec<usize>> {
    fn rec(rest: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..rest.len() {
            let g = rest.remove(i);
            cur.push(g);
            rec(rest, cur, out);
            cur.pop();
            rest.insert(i, g);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..gaps).collect(), &mut Vec::new(), &mut out);
    out
}

/// Largest particle count for which merge orders are enumerated.
pub const MAX_COALESCING_PARTICLES: usize = 4;

/// `inf I` over the problem's constraint set.
pub fn minimize_rate<T: Real>(problem: &VariationalProblem<T>, tol: &Tolerances<T>) -> Result<VariationalSolution<T>> {
    let k = problem.steps;
    if k == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if problem.starts.is_empty() || problem.starts.iter().any(|v| !v.is_finite()) {
        return Err(invalid("starts", "need finite starting points"));
    }
    match (&problem.functional, &problem.constraint) {
        (Functional::Schilder1d, Constraint::EndpointAtLeast(c)) => {
            one_dim(problem)?;
            let m = Endpoint {
                start: problem.starts[0],
                lo: *c,
                hi: T::infinity(),
                k,
            };
            finish(&m, multi_start(&m, tol), None)
        }
        (Functional::Schilder1d, Constraint::EndpointInBox { lo, hi }) => {
            one_dim(problem)?;
            if !(lo <= hi) {
                return Err(Error::Infeasible(format!("empty endpoint box [{lo}, {hi}]")));
            }
            let m = Endpoint {
                start: problem.starts[0],
                lo: *lo,
                hi: *hi,
                k,
            };
            finish(&m, multi_start(&m, tol), None)
        }
        (Functional::Stopped, Constraint::HitSetBy { set, t_c }) => {
            set.validate().map_err(|e| Error::Infeasible(e.to_string()))?;
            if set.dim() != problem.starts.len() {
                return Err(invalid("starts", "dimension differs from the hitting set"));
            }
            if !(*t_c > T::zero() && *t_c <= T::one()) {
                return Err(Error::Infeasible(format!("hitting deadline {t_c} outside (0, 1]")));
            }
            let m = Stopped {
                start: problem.starts.clone(),
                set: set.clone(),
                t_c: *t_c,
                s_min: *t_c * T::lit(1e-3),
                k,
            };
            finish(&m, multi_start(&m, tol), None)
        }
        (Functional::NpointCoalescing, Constraint::CoalesceBy(t_c)) => coalescing(problem, *t_c, tol),
        (f, c) => Err(invalid(
            "constraint",
            format!("{c:?} is not supported for {f:?}"),
        )),
    }
}

fn one_dim<T: Real>(problem: &VariationalProblem<T>) -> Result<()> {
    if problem.starts.len() != 1 {
        return Err(invalid("starts", "schilder_1d takes a single starting point"));
    }
    Ok(())
}

fn coalescing<T: Real>(problem: &VariationalProblem<T>, t_c: T, tol: &Tolerances<T>) -> Result<VariationalSolution<T>> {
    let starts = &problem.starts;
    let n = starts.len();
    if n > MAX_COALESCING_PARTICLES {
        return Err(invalid(
            "starts",
            format!("merge orders are enumerated for at most {MAX_COALESCING_PARTICLES} particles"),
        ));
    }
    if starts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("starts", "must be strictly increasing"));
    }
    let l_min = t_c * T::lit(1e-4);
    if !(t_c > T::zero() && t_c <= T::one()) || l_min * T::from_usize_lossy(n) > t_c {
        return Err(Error::Infeasible(format!("coalescence deadline {t_c} outside (0, 1]")));
    }
    if n == 1 {
        let m = Endpoint {
            start: starts[0],
            lo: T::neg_infinity(),
            hi: T::infinity(),
            k: problem.steps,
        };
        return finish(&m, multi_start(&m, tol), Some(Vec::new()));
    }
    let k = problem.steps.div_ceil(n - 1).max(1);
    let mut best: Option<(Coalescing<T>, Run<T>)> = None;
    for order in merge_orders(n - 1) {
        let model = Coalescing::new(starts.clone(), t_c, l_min, k, order);
        let run = multi_start(&model, tol);
        if best.as_ref().is_none_or(|(_, b)| run.value < b.value) {
            best = Some((model, run));
        }
    }
    let (model, run) = best.expect("at least one order");
    let order = model.order.clone();
    finish(&model, run, Some(order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: VariationalProblem<f64>) -> VariationalSolution<f64> {
        minimize_rate(&p, &Tolerances::default()).unwrap()
    }

    #[test]
    fn schilder_endpoint() {
        for steps in [16, 32] {
            let s = solve(VariationalProblem {
                functional: Functional::Schilder1d,
                constraint: Constraint::EndpointAtLeast(1.0),
                steps,
                starts: vec![0.0],
            });
            assert!((s.value - 0.5).abs() < 1e-9);
            assert!(s.converged);
            assert!(s.gradient_check < 1e-5);
            for (j, &t) in s.path.times().iter().enumerate() {
                assert!((s.path.point(j)[0] - t).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn coalescing_pair() {
        let s = solve(VariationalProblem {
            functional: Functional::NpointCoalescing,
            constraint: Constraint::CoalesceBy(1.0),
            steps: 32,
            starts: vec![0.0, 1.0],
        });
        assert!((s.value - 0.25).abs() < 1e-8, "{}", s.value);
        assert!(s.gradient_check < 1e-5);
        let end = s.path.point(s.path.times().len() - 1);
        assert!((end[0] - 0.5).abs() < 1e-6 && (end[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stopped_halfspace() {
        let s = solve(VariationalProblem {
            functional: Functional::Stopped,
            constraint: Constraint::HitSetBy {
                set: HittingSet::halfspace(vec![1.0], 1.5).unwrap(),
                t_c: 1.0,
            },
            steps: 16,
            starts: vec![0.0],
        });
        assert!((s.value - 1.125).abs() < 1e-8);
    }

    #[test]
    fn mismatched_and_infeasible() {
        let tol = Tolerances::default();
        let p = VariationalProblem {
            functional: Functional::Schilder1d,
            constraint: Constraint::CoalesceBy(1.0),
            steps: 8,
            starts: vec![0.0],
        };
        assert!(minimize_rate(&p, &tol).is_err());
        let p = VariationalProblem {
            functional: Functional::Schilder1d,
            constraint: Constraint::EndpointInBox { lo: 2.0, hi: 1.0 },
            steps: 8,
            starts: vec![0.0],
        };
        assert!(matches!(minimize_rate(&p, &tol), Err(Error::Infeasible(_))));
    }

    #[test]
    fn merge_orders_are_permutations() {
        assert_eq!(merge_orders(1), vec![vec![0]]);
        assert_eq!(merge_orders(3).len(), 6);
    }

    #[test]
    fn problem_json() {
        let p: VariationalProblem<f64> = serde_json::from_str(
            r#"{"functional":"npoint_coalescing","constraint":{"coalesce_by":1.0},"steps":16,"starts":[0.0,1.0]}"#,
        )
        .unwrap();
        assert_eq!(p.constraint, Constraint::CoalesceBy(1.0));
        let p: VariationalProblem<f64> = serde_json::from_str(
            r#"{"functional":"stopped","constraint":{"hit_set_by":{"set":{"kind":"halfspace","normal":[1.0],"offset":1.0},"t_c":1.0}},"steps":16,"starts":[0.0]}"#,
        )
        .unwrap();
        assert_eq!(p.functional, Functional::Stopped);
        let p: VariationalProblem<f64> = serde_json::from_str(
            r#"{"functional":"schilder_1d","constraint":{"endpoint_at_least":1.0},"steps":16,"starts":[0.0]}"#,
        )
        .unwrap();
        assert_eq!(p.functional, Functional::Schilder1d);
    }
}
