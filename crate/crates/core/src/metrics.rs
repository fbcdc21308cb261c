//! Lévy–Prokhorov distance between finitely supported measures, the flow
//! distance between forests, and the gaussian-weighted sup norm on fields.

use rayon::prelude::*;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::SymmetricEigen;
use crate::pathmaps::Forest;
use crate::real::Real;

/// Atoms with strictly increasing positions and nonnegative masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    positions: Vec<T>,
    masses: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Sorts atoms, merges equal positions and drops zero masses.
    pub fn from_atoms(mut atoms: Vec<(T, T)>) -> Result<Self> {
        for &(x, m) in &atoms {
            if !x.is_finite() || !m.is_finite() {
                return Err(Error::NonFinite("measure atom".into()));
            }
            if m < T::zero() {
                return Err(invalid("mass", format!("negative mass {m}")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let mut positions: Vec<T> = Vec::with_capacity(atoms.len());
        let mut masses: Vec<T> = Vec::with_capacity(atoms.len());
        for (x, m) in atoms {
            if m == T::zero() {
                continue;
            }
            match positions.last() {
                Some(&last) if last == x => *masses.last_mut().expect("paired") += m,
                _ => {
                    positions.push(x);
                    masses.push(m);
                }
            }
        }
        Ok(Self { positions, masses })
    }

    pub fn dirac(x: T) -> Self {
        Self {
            positions: vec![x],
            masses: vec![T::one()],
        }
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    fn check_probability(&self) -> Result<()> {
        let total = self.total_mass();
        if (total - T::one()).abs() > T::epsilon().sqrt() * T::lit(1e-2) {
            return Err(Error::NotProbability(format!("total mass {total}")));
        }
        Ok(())
    }
}

/// Lengths of the cells `[g_i, g_{i+1})` of a grid on `[0, 1]`, with the
/// first cell starting at 0 and the last ending at 1.
pub fn cell_masses<T: Real>(grid: &[T]) -> Result<Vec<T>> {
    if grid.is_empty() {
        return Err(invalid("grid", "must not be empty"));
    }
    if grid[0] < T::zero() || grid[grid.len() - 1] > T::one() {
        return Err(invalid("grid", "must lie in [0, 1]"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    let n = grid.len();
    Ok((0..n)
        .map(|i| {
            let lo = if i == 0 { T::zero() } else { grid[i] };
            let hi = if i + 1 == n { T::one() } else { grid[i + 1] };
            hi - lo
        })
        .collect())
}

/// Lévy–Prokhorov distance, bisected to within `tol`.
///
/// `σ ≤ ε` iff there is a coupling putting mass at least `1 - ε` on pairs at
/// distance `≤ ε`; that transport is decided by a maximum flow.
pub fn prokhorov<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, tol: T) -> Result<T> {
    mu.check_probability()?;
    nu.check_probability()?;
    if !(tol > T::zero()) {
        return Err(invalid("tol", "must be positive"));
    }
    if mu == nu {
        return Ok(T::zero());
    }
    let mut net = Coupling::new(mu, nu);
    let (mut lo, mut hi) = (T::zero(), T::one());
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if net.feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct Coupling<'a, T> {
    mu: &'a DiscreteMeasure<T>,
    nu: &'a DiscreteMeasure<T>,
}

impl<'a, T: Real> Coupling<'a, T> {
    fn new(mu: &'a DiscreteMeasure<T>, nu: &'a DiscreteMeasure<T>) -> Self {
        Self { mu, nu }
    }

    fn feasible(&mut self, eps: T) -> bool {
        let (m, n) = (self.mu.len(), self.nu.len());
        let source = m + n;
        let sink = source + 1;
        let mut g = Dinic::new(m + n + 2);
        let big = T::lit(2.0);
        for (i, &w) in self.mu.masses.iter().enumerate() {
            g.add_edge(source, i, w);
        }
        for (j, &w) in self.nu.masses.iter().enumerate() {
            g.add_edge(m + j, sink, w);
        }
        // Positions are sorted, so each atom's neighbourhood is a window.
        let mut start = 0;
        for (i, &x) in self.mu.positions.iter().enumerate() {
            while start < n && self.nu.positions[start] < x - eps {
                start += 1;
            }
            let mut j = start;
            while j < n && self.nu.positions[j] <= x + eps {
                if (self.nu.positions[j] - x).abs() <= eps {
                    g.add_edge(i, m + j, big);
                }
                j += 1;
            }
        }
        let flow = g.max_flow(source, sink);
        flow >= T::one() - eps - T::tiny()
    }
}

/// Dinic maximum flow with real capacities.
#[derive(Debug, Clone)]
pub struct Dinic<T> {
    head: Vec<Option<usize>>,
    to: Vec<usize>,
    next: Vec<Option<usize>>,
    cap: Vec<T>,
    level: Vec<i64>,
    iter: Vec<Option<usize>>,
}

impl<T: Real> Dinic<T> {
    pub fn new(nodes: usize) -> Self {
        Self {
            head: vec![None; nodes],
            to: Vec::new(),
            next: Vec::new(),
            cap: Vec::new(),
            level: vec![-1; nodes],
            iter: vec![None; nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: T) {
        for (a, b, c) in [(from, to, cap), (to, from, T::zero())] {
            self.to.push(b);
            self.cap.push(c);
            self.next.push(self.head[a]);
            self.head[a] = Some(self.to.len() - 1);
        }
    }

    fn residual_floor() -> T {
        T::epsilon() * T::lit(16.0)
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            let mut e = self.head[v];
            while let Some(id) = e {
                let w = self.to[id];
                if self.cap[id] > Self::residual_floor() && self.level[w] < 0 {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
                e = self.next[id];
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: T) -> T {
        if v == t {
            return pushed;
        }
        while let Some(id) = self.iter[v] {
            let w = self.to[id];
            if self.cap[id] > Self::residual_floor() && self.level[w] == self.level[v] + 1 {
                let got = self.dfs(w, t, pushed.min(self.cap[id]));
                if got > T::zero() {
                    self.cap[id] -= got;
                    self.cap[id ^ 1] += got;
                    return got;
                }
            }
            self.iter[v] = self.next[id];
        }
        T::zero()
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> T {
        let mut flow = T::zero();
        while self.bfs(s, t) {
            self.iter.clone_from(&self.head);
            loop {
                let f = self.dfs(s, t, T::infinity());
                if f <= T::zero() {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

/// `max_t σ(y1(·,t), y2(·,t))` over `t_grid`, with each forest's measure
/// giving every query point the length of its cell of `[0, 1]`.
pub fn flow_distance<T: Real>(y1: &Forest<T>, y2: &Forest<T>, t_grid: &[T], tol: T) -> Result<T> {
    if t_grid.is_empty() {
        return Err(invalid("t_grid", "must not be empty"));
    }
    if y1.query() != y2.query() {
        return Err(Error::GridMismatch("forests use different query grids".into()));
    }
    let dists: Vec<Result<T>> = t_grid
        .par_iter()
        .map(|&t| prokhorov(&y1.measure_at(t)?, &y2.measure_at(t)?, tol))
        .collect();
    let mut best = T::zero();
    for d in dists {
        best = best.max(d?);
    }
    Ok(best)
}

/// Gauss–Hermite quadrature for the standard normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> Default for WeightedNorm<T> {
    fn default() -> Self {
        Self::new(64).expect("64 nodes")
    }
}

impl<T: Real> WeightedNorm<T> {
    /// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix of the
    /// probabilists' Hermite recurrence, weights the squared first
    /// eigenvector components.
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(invalid("nodes", "need at least one node"));
        }
        let n = nodes;
        let mut jac = vec![0.0f64; n * n];
        for k in 1..n {
            let b = (k as f64).sqrt();
            jac[(k - 1) * n + k] = b;
            jac[k * n + k - 1] = b;
        }
        let eig = SymmetricEigen::new(&jac, n);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.values[k], eig.vectors[k].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        // symmetrise to remove rounding asymmetry
        let mut out_nodes = Vec::with_capacity(n);
        let mut out_weights = Vec::with_capacity(n);
        for i in 0..n {
            let (x, w) = pairs[i];
            let (y, v) = pairs[n - 1 - i];
            out_nodes.push(T::lit((x - y) * 0.5));
            out_weights.push(T::lit((w + v) * 0.5));
        }
        let total: T = out_weights.iter().copied().sum();
        out_weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            nodes: out_nodes,
            weights: out_weights,
        })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `max_j (Σ_i w_i x(u_i, t_j)^2)^{1/2}` for a node-major field
    /// `field[i * times + j]`.
    pub fn sup_norm(&self, field: &[T], times: usize) -> Result<T> {
        ensure_len(self.nodes.len() * times, field.len())?;
        let mut best = T::zero();
        for j in 0..times {
            let s: T = self
                .weights
                .iter()
                .enumerate()
                .map(|(i, &w)| w * field[i * times + j] * field[i * times + j])
                .sum();
            best = best.max(s.sqrt());
        }
        Ok(best)
    }
}

/// Free-function form of [`WeightedNorm::sup_norm`].
pub fn weighted_sup_norm<T: Real>(norm: &WeightedNorm<T>, field: &[T], times: usize) -> Result<T> {
    norm.sup_norm(field, times)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(atoms: &[(f64, f64)]) -> DiscreteMeasure<f64> {
        DiscreteMeasure::from_atoms(atoms.to_vec()).unwrap()
    }

    #[test]
    fn point_masses() {
        let tol = 1e-9;
        assert_eq!(prokhorov(&m(&[(0.0, 1.0)]), &m(&[(0.0, 1.0)]), tol).unwrap(), 0.0);
        let d = prokhorov(&m(&[(0.0, 1.0)]), &m(&[(0.3, 1.0)]), tol).unwrap();
        assert!((d - 0.3).abs() <= tol);
        let d = prokhorov(&m(&[(0.0, 1.0)]), &m(&[(5.0, 1.0)]), tol).unwrap();
        assert!((d - 1.0).abs() <= tol);
        let d = prokhorov(&m(&[(0.0, 1.0)]), &m(&[(0.0, 0.5), (1.0, 0.5)]), tol).unwrap();
        assert!((d - 0.5).abs() <= tol);
    }

    #[test]
    fn rejects_sub_probability() {
        assert!(prokhorov(&m(&[(0.0, 0.5)]), &m(&[(0.0, 1.0)]), 1e-6).is_err());
    }

    #[test]
    fn atoms_are_merged_and_sorted() {
        let mu = m(&[(1.0, 0.25), (0.0, 0.5), (1.0, 0.25), (2.0, 0.0)]);
        assert_eq!(mu.positions(), &[0.0, 1.0]);
        assert_eq!(mu.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn gauss_hermite_moments() {
        let norm = WeightedNorm::<f64>::default();
        assert_eq!(norm.nodes().len(), 64);
        let total: f64 = norm.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let second: f64 = norm.nodes().iter().zip(norm.weights()).map(|(x, w)| w * x * x).sum();
        assert!((second - 1.0).abs() < 1e-10);
        let fourth: f64 = norm.nodes().iter().zip(norm.weights()).map(|(x, w)| w * x.powi(4)).sum();
        assert!((fourth - 3.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_norm_examples() {
        let norm = WeightedNorm::<f64>::new(16).unwrap();
        let times = 5;
        let zero = vec![0.0; 16 * times];
        assert_eq!(norm.sup_norm(&zero, times).unwrap(), 0.0);
        let ident: Vec<f64> = norm.nodes().iter().flat_map(|&u| vec![u; times]).collect();
        assert!((norm.sup_norm(&ident, times).unwrap() - 1.0).abs() < 1e-10);
        let in_t: Vec<f64> = (0..16).flat_map(|_| (0..times).map(|j| j as f64 / 4.0)).collect();
        assert!((norm.sup_norm(&in_t, times).unwrap() - 1.0).abs() < 1e-12);
        assert!(norm.sup_norm(&[0.0; 7], times).is_err());
    }

    #[test]
    fn cell_masses_cover_unit_interval() {
        let c = cell_masses(&[0.0, 0.5, 0.75]).unwrap();
        assert_eq!(c, vec![0.5, 0.25, 0.25]);
        assert!(cell_masses(&[0.5, 0.2]).is_err());
    }

    #[test]
    fn dinic_simple_network() {
        let mut g = Dinic::<f64>::new(4);
        g.add_edge(0, 1, 1.0);
        g.add_edge(0, 2, 0.5);
        g.add_edge(1, 3, 0.25);
        g.add_edge(2, 3, 1.0);
        g.add_edge(1, 2, 1.0);
        assert!((g.max_flow(0, 3) - 1.25).abs() < 1e-15);
    }
}
