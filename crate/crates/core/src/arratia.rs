//! Arratia's coalescing flow at finite particle resolution: independent
//! Brownian particles that stick together once they meet.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::flow_sim::FlowPath;
use crate::metrics::{cell_masses, DiscreteMeasure};
use crate::real::{unit_grid, Real};
use crate::rng::{standard_normal, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossingMode {
    /// Also merge pairs that end a step still ordered, with the Brownian
    /// bridge first-passage probability `exp(-a b / dt)`.
    #[default]
    Bridge,
    /// Merge only on an observed crossing at the end of a step.
    Naive,
}

/// Disjoint sets whose root is always the smallest index in the set.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Joins the sets of `a` and `b`; returns the surviving root.
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let ra = self.find(a);
        let rb = self.find(b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent<T> {
    pub time: T,
    /// Grid index at which both clusters first share a position.
    pub step: usize,
    /// Representative of the left cluster (the survivor).
    pub left: usize,
    /// Representative of the absorbed right cluster.
    pub right: usize,
}

/// Meeting times and cluster history of one coalescing run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceRecord<T> {
    starts: Vec<T>,
    times: Vec<T>,
    /// `tau[k]`: first time particle `k` shares the position of `k - 1`,
    /// clipped at 1; `tau[0] = 1`.
    tau: Vec<T>,
    merge_events: Vec<MergeEvent<T>>,
    /// The absorbed representative's own gaussian proposal on its merge
    /// step, when the simulator recorded it.
    merge_proposals: Vec<Option<T>>,
}

impl<T: Real> CoalescenceRecord<T> {
    /// Reads meeting times off given paths: particles `k - 1` and `k` meet
    /// at the first grid time where their values coincide exactly.
    pub fn from_paths(path: &FlowPath<T>) -> Result<Self> {
        let n = path.particles();
        let len = path.times().len();
        let mut uf = UnionFind::new(n);
        let mut tau = vec![T::one(); n];
        let mut merge_events = Vec::new();
        let mut merged = vec![false; n];
        for j in 0..len {
            for k in 1..n {
                if merged[k] {
                    if path.at(k, j) != path.at(k - 1, j) {
                        return Err(invalid(
                            "paths",
                            format!("particles {} and {k} separate after meeting", k - 1),
                        ));
                    }
                    continue;
                }
                if path.at(k, j) == path.at(k - 1, j) {
                    merged[k] = true;
                    let left = uf.find(k - 1);
                    uf.union(k - 1, k);
                    tau[k] = tau[k].min(path.times()[j]);
                    merge_events.push(MergeEvent {
                        time: path.times()[j],
                        step: j,
                        left,
                        right: k,
                    });
                }
            }
        }
        tau[0] = T::one();
        Ok(Self {
            starts: path.starts().to_vec(),
            times: path.times().to_vec(),
            tau,
            merge_events,
            merge_proposals: vec![None; n],
        })
    }

    pub fn particles(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[T] {
        &self.starts
    }

    pub fn tau(&self) -> &[T] {
        &self.tau
    }

    pub fn merge_events(&self) -> &[MergeEvent<T>] {
        &self.merge_events
    }

    /// Smallest-index representative of every particle at grid index `step`.
    pub fn cluster_rep(&self, step: usize) -> Vec<usize> {
        let mut uf = UnionFind::new(self.particles());
        for e in self.merge_events.iter().take_while(|e| e.step <= step) {
            uf.union(e.left, e.right);
        }
        (0..self.particles()).map(|i| uf.find(i)).collect()
    }

    pub fn cluster_count(&self, step: usize) -> usize {
        let reps = self.cluster_rep(step);
        reps.iter().enumerate().filter(|(i, r)| *i == **r).count()
    }

    /// First time particles `i < j` share a cluster (1 if never).
    pub fn meeting_time(&self, i: usize, j: usize) -> T {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.tau[i + 1..=j].iter().fold(T::zero(), |m, &t| m.max(t))
    }
}

/// Simulates `starts.len()` coalescing Brownian particles on `steps`
/// uniform steps. Increments have variance `time_scale / steps`, and the
/// returned grid is relabelled to `[0, 1]`, so `time_scale = ε` realises
/// `x(u, ε t)`.
///
/// Each step consumes exactly `n` normals followed by `n` uniforms.
pub fn simulate_arratia<T: Real, R: Rng + ?Sized>(
    starts: &[T],
    steps: usize,
    crossing_mode: CrossingMode,
    time_scale: T,
    rng: &mut R,
) -> Result<(FlowPath<T>, CoalescenceRecord<T>)> {
    let n = starts.len();
    if n == 0 {
        return Err(invalid("starts", "need at least one particle"));
    }
    if starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("starts", "must be strictly increasing"));
    }
    if steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if !(time_scale > T::zero()) || time_scale > T::one() {
        return Err(invalid("time_scale", "must lie in (0, 1]"));
    }
    let len = steps + 1;
    let times: Vec<T> = unit_grid(steps);
    let dt = time_scale / T::from_usize_lossy(steps);
    let sd = dt.sqrt();

    let mut values = vec![T::zero(); n * len];
    for (i, &u) in starts.iter().enumerate() {
        values[i * len] = u;
    }
    let mut x = starts.to_vec();
    let mut proposal = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut reps: Vec<usize> = (0..n).collect();
    let mut next_reps = Vec::with_capacity(n);
    let mut uf = UnionFind::new(n);
    let mut tau = vec![T::one(); n];
    let mut merge_events = Vec::new();
    let mut merge_proposals = vec![None; n];

    for j in 0..steps {
        for v in z.iter_mut() {
            *v = standard_normal(rng);
        }
        for v in w.iter_mut() {
            *v = uniform(rng);
        }
        for &r in &reps {
            proposal[r] = x[r] + z[r] * sd;
        }
        let t = times[j + 1];
        next_reps.clear();
        let mut cur = reps[0];
        next_reps.push(cur);
        for &r in &reps[1..] {
            let new_gap = proposal[r] - proposal[cur];
            let merge = if new_gap <= T::zero() {
                true
            } else {
                match crossing_mode {
                    CrossingMode::Naive => false,
                    CrossingMode::Bridge => {
                        let old_gap = x[r] - x[cur];
                        w[r] < (-(old_gap * new_gap) / dt).exp()
                    }
                }
            };
            if merge {
                uf.union(cur, r);
                tau[r] = t;
                merge_proposals[r] = Some(z[r] * sd);
                merge_events.push(MergeEvent {
                    time: t,
                    step: j + 1,
                    left: cur,
                    right: r,
                });
            } else {
                cur = r;
                next_reps.push(r);
            }
        }
        std::mem::swap(&mut reps, &mut next_reps);
        for &r in &reps {
            x[r] = proposal[r];
        }
        for i in 0..n {
            let r = uf.find(i);
            x[i] = x[r];
            values[i * len + j + 1] = x[i];
        }
    }
    tau[0] = T::one();
    let path = FlowPath::new(starts.to_vec(), times.clone(), values, time_scale)?;
    let record = CoalescenceRecord {
        starts: starts.to_vec(),
        times,
        tau,
        merge_events,
        merge_proposals,
    };
    Ok((path, record))
}

/// `Σ_k τ(u_k)` over a partition drawn from the simulated starts, with
/// meeting times taken between consecutive partition points and the
/// leftmost point contributing 1.
pub fn total_free_time<T: Real>(record: &CoalescenceRecord<T>, partition: &[T]) -> Result<T> {
    if partition.is_empty() {
        return Err(invalid("partition", "must not be empty"));
    }
    if partition.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("partition", "must be strictly increasing"));
    }
    let mut idx = Vec::with_capacity(partition.len());
    for &p in partition {
        match record.starts.iter().position(|&s| s == p) {
            Some(i) => idx.push(i),
            None => return Err(Error::Domain(format!("partition point {p} is not a simulated start"))),
        }
    }
    Ok(total_free_time_indices(record, &idx))
}

fn total_free_time_indices<T: Real>(record: &CoalescenceRecord<T>, idx: &[usize]) -> T {
    T::one() + idx.windows(2).map(|w| record.meeting_time(w[0], w[1])).sum::<T>()
}

/// `Σ τ` along the dyadic levels `1..=L` of a record with `2^L` particles;
/// level `l` keeps every `2^(L-l)`-th particle.
pub fn dyadic_free_times<T: Real>(record: &CoalescenceRecord<T>) -> Result<Vec<T>> {
    let n = record.particles();
    if n < 2 || !n.is_power_of_two() {
        return Err(invalid("record", "dyadic levels need a power-of-two particle count"));
    }
    let levels = n.trailing_zeros() as usize;
    Ok((1..=levels)
        .map(|l| {
            let stride = n >> l;
            let idx: Vec<usize> = (0..n).step_by(stride).collect();
            total_free_time_indices(record, &idx)
        })
        .collect())
}

/// `μ_t`: particle `i` carries the mass of `[u_i, u_{i+1})` (the first one
/// from 0, the last one up to 1); atoms are the distinct positions.
/// Positions between grid times are linearly interpolated.
pub fn empirical_measure<T: Real>(path: &FlowPath<T>, record: &CoalescenceRecord<T>, t: T) -> Result<DiscreteMeasure<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    ensure_len(path.particles(), record.particles())?;
    let masses = cell_masses(path.starts())?;
    let positions = positions_at(path, t);
    DiscreteMeasure::from_atoms(positions.into_iter().zip(masses).collect())
}

pub(crate) fn positions_at<T: Real>(path: &FlowPath<T>, t: T) -> Vec<T> {
    let times = path.times();
    let j = match times.iter().position(|&s| s >= t) {
        Some(j) => j,
        None => times.len() - 1,
    };
    if times[j] == t || j == 0 {
        return path.column(j);
    }
    let frac = (t - times[j - 1]) / (times[j] - times[j - 1]);
    (0..path.particles())
        .map(|i| {
            let a = path.at(i, j - 1);
            let b = path.at(i, j);
            if a == b {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect()
}

/// Discrete Girsanov density for adding `drift` to every free particle:
/// `Π_k exp{ Σ_{t_j < τ_k} drift(x_k(t_j)) Δx_k - ½ drift² Δt }`.
///
/// On its merge step a particle's own proposed increment is used when the
/// record carries it, keeping the density an exact martingale.
pub fn girsanov_density<T: Real>(
    path: &FlowPath<T>,
    record: &CoalescenceRecord<T>,
    drift: impl Fn(T) -> T,
) -> Result<T> {
    ensure_len(path.particles(), record.particles())?;
    let times = path.times();
    let scale = path.epsilon();
    let mut exponent = T::zero();
    for k in 0..path.particles() {
        let xs = path.particle(k);
        let tau = record.tau[k];
        for j in 0..path.steps() {
            if times[j] >= tau {
                break;
            }
            let b = drift(xs[j]);
            if !b.is_finite() {
                return Err(Error::NonFinite(format!("drift at {}", xs[j])));
            }
            let last = times[j + 1] >= tau && k > 0 && tau < T::one();
            let dx = match (last, record.merge_proposals[k]) {
                (true, Some(p)) => p,
                _ => xs[j + 1] - xs[j],
            };
            let dt = (times[j + 1] - times[j]) * scale;
            exponent += b * dx - T::lit(0.5) * b * b * dt;
        }
    }
    Ok(exponent.exp())
}
