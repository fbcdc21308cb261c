//! n-point motions of the smoothly correlated flow
//! `dx(u,t) = √ε ∫ φ(x(u,t) - p) W(dp,dt)`.
//!
//! Each Euler step draws the exact gaussian increment of the n-point motion
//! with positions frozen at the start of the step (or of the block, in the
//! frozen-coefficient scheme).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{mat_vec, PsdSqrt};
use crate::real::{unit_grid, Real};
use crate::rng::standard_normal;

/// Particle trajectories on the uniform grid `t_j = j / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath<T> {
    starts: Vec<T>,
    times: Vec<T>,
    /// Row-major by particle: `values[i * (T + 1) + j] = x(u_i, t_j)`.
    values: Vec<T>,
    epsilon: T,
}

impl<T: Real> FlowPath<T> {
    /// Builds a path from per-particle rows of length `times.len()`.
    pub fn new(starts: Vec<T>, times: Vec<T>, values: Vec<T>, epsilon: T) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("times", "need at least one step"));
        }
        if times[0] != T::zero() || times[times.len() - 1] != T::one() {
            return Err(invalid("times", "grid must run from 0 to 1"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("times", "grid must be strictly increasing"));
        }
        ensure_len(starts.len() * times.len(), values.len())?;
        let len = times.len();
        for (i, &u) in starts.iter().enumerate() {
            if values[i * len] != u {
                return Err(invalid("values", format!("particle {i} does not start at {u}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path values".into()));
        }
        Ok(Self {
            starts,
            times,
            values,
            epsilon,
        })
    }

    pub fn particles(&self) -> usize {
        self.starts.len()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn starts(&self) -> &[T] {
        &self.starts
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn particle(&self, i: usize) -> &[T] {
        let len = self.times.len();
        &self.values[i * len..(i + 1) * len]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.times.len() + j]
    }

    /// Positions of all particles at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.particles()).map(|i| self.at(i, j)).collect()
    }

    pub fn terminal(&self) -> Vec<T> {
        self.column(self.steps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Direct,
    /// Coefficients frozen on `m` equal blocks of the time grid.
    Frozen(usize),
    /// Unit-intensity flow run on `[0, ε]`, then relabelled to `[0, 1]`.
    TimeChanged,
}

/// Per-run observability counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimDiagnostics {
    /// Time points at which the Euler step broke the particle order
    /// before the sort repair.
    pub order_violations: usize,
    pub steps: usize,
    /// Negative covariance eigenvalues clipped to zero, summed over steps.
    pub clipped_eigenvalues: usize,
}

impl SimDiagnostics {
    pub fn violation_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.order_violations as f64 / self.steps as f64
        }
    }
}

/// `C_ij = ε dt Φ(x_i - x_j)`, row-major `n × n`.
pub fn increment_covariance<T: Real>(
    kernel: &Kernel<T>,
    positions: &[T],
    eps: T,
    dt: T,
) -> Result<Vec<T>> {
    check_eps(eps)?;
    if !(dt > T::zero()) {
        return Err(invalid("dt", "must be positive"));
    }
    let n = positions.len();
    let mut out = vec![T::zero(); n * n];
    fill_covariance(kernel, positions, eps * dt, &mut out);
    Ok(out)
}

fn fill_covariance<T: Real>(kernel: &Kernel<T>, positions: &[T], scale: T, out: &mut [T]) {
    let n = positions.len();
    for i in 0..n {
        out[i * n + i] = scale;
        for j in (i + 1)..n {
            let c = scale * kernel.correlation(positions[i] - positions[j]);
            out[i * n + j] = c;
            out[j * n + i] = c;
        }
    }
}

fn check_eps<T: Real>(eps: T) -> Result<()> {
    if eps > T::zero() && eps <= T::one() {
        Ok(())
    } else {
        Err(invalid("eps", "must lie in (0, 1]"))
    }
}

/// Reusable simulator for one `(kernel, ε, T, mode)` configuration.
///
/// Holds the covariance and square-root workspaces so that Monte Carlo
/// loops do not reallocate per replica.
#[derive(Debug, Clone)]
pub struct SmoothSimulator<'k, T> {
    kernel: &'k Kernel<T>,
    eps: T,
    steps: usize,
    mode: SimMode,
    n: usize,
    sqrt: PsdSqrt<T>,
    cov: Vec<T>,
    root: Vec<T>,
    z: Vec<T>,
    dx: Vec<T>,
}

impl<'k, T: Real> SmoothSimulator<'k, T> {
    pub fn new(kernel: &'k Kernel<T>, particles: usize, eps: T, steps: usize, mode: SimMode) -> Result<Self> {
        check_eps(eps)?;
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if particles == 0 {
            return Err(invalid("starts", "need at least one particle"));
        }
        if let SimMode::Frozen(m) = mode {
            if m == 0 || steps % m != 0 {
                return Err(invalid("mode", format!("frozen block count {m} must divide {steps}")));
            }
        }
        let n = particles;
        Ok(Self {
            kernel,
            eps,
            steps,
            mode,
            n,
            sqrt: PsdSqrt::new(n),
            cov: vec![T::zero(); n * n],
            root: vec![T::zero(); n * n],
            z: vec![T::zero(); n],
            dx: vec![T::zero(); n],
        })
    }

    /// Runs one replica with standard normal variates from `rng`
    /// (`n` per step, step-major).
    pub fn run<R: Rng + ?Sized>(&mut self, starts: &[T], rng: &mut R) -> Result<(FlowPath<T>, SimDiagnostics)> {
        let n = self.n;
        self.run_with(starts, |z| {
            for v in z.iter_mut().take(n) {
                *v = standard_normal(rng);
            }
        })
    }

    /// Runs one replica with explicit variates `noise[j * n + i]`.
    pub fn run_with_noise(&mut self, starts: &[T], noise: &[T]) -> Result<(FlowPath<T>, SimDiagnostics)> {
        ensure_len(self.n * self.steps, noise.len())?;
        let n = self.n;
        let mut j = 0;
        self.run_with(starts, |z| {
            z.copy_from_slice(&noise[j * n..(j + 1) * n]);
            j += 1;
        })
    }

    fn run_with(&mut self, starts: &[T], mut draw: impl FnMut(&mut [T])) -> Result<(FlowPath<T>, SimDiagnostics)> {
        ensure_len(self.n, starts.len())?;
        if starts.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("starts", "must be sorted"));
        }
        let n = self.n;
        let steps = self.steps;
        let len = steps + 1;
        let dt = T::from_usize_lossy(steps).recip();
        // Time-changed runs use a unit-intensity flow with step ε·dt; the
        // product is formed first so both constructions share bits.
        let scale = match self.mode {
            SimMode::TimeChanged => T::one() * (self.eps * dt),
            _ => self.eps * dt,
        };
        let block = match self.mode {
            SimMode::Frozen(m) => steps / m,
            _ => 1,
        };

        let mut values = vec![T::zero(); n * len];
        let mut x = starts.to_vec();
        for (i, &u) in starts.iter().enumerate() {
            values[i * len] = u;
        }
        let mut diag = SimDiagnostics {
            steps,
            ..Default::default()
        };
        for j in 0..steps {
            if j % block == 0 {
                fill_covariance(self.kernel, &x, scale, &mut self.cov);
                self.root.copy_from_slice(self.sqrt.factor(&self.cov));
                diag.clipped_eigenvalues += self.sqrt.clipped();
            }
            draw(&mut self.z);
            mat_vec(&self.root, &self.z, &mut self.dx);
            for (xi, d) in x.iter_mut().zip(&self.dx) {
                *xi += *d;
            }
            if x.windows(2).any(|w| w[1] < w[0]) {
                diag.order_violations += 1;
                x.sort_by(|a, b| a.partial_cmp(b).expect("finite positions"));
            }
            for (i, &xi) in x.iter().enumerate() {
                values[i * len + j + 1] = xi;
            }
        }
        let path = FlowPath::new(starts.to_vec(), unit_grid(steps), values, self.eps)?;
        Ok((path, diag))
    }
}

/// Simulates the n-point motion once; convenience wrapper over
/// [`SmoothSimulator`].
pub fn simulate_npoint_smooth<T: Real, R: Rng + ?Sized>(
    kernel: &Kernel<T>,
    starts: &[T],
    eps: T,
    steps: usize,
    mode: SimMode,
    rng: &mut R,
) -> Result<(FlowPath<T>, SimDiagnostics)> {
    SmoothSimulator::new(kernel, starts.len(), eps, steps, mode)?.run(starts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn kernel() -> Kernel<f64> {
        Kernel::gaussian(1.0).unwrap()
    }

    #[test]
    fn covariance_entries() {
        let c = increment_covariance(&kernel(), &[0.0, 2.0], 0.1, 0.01).unwrap();
        assert!((c[0] - 1e-3).abs() < 1e-18);
        assert!((c[1] - 1e-3 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((c[1] - 3.6788e-4).abs() < 1e-8);
        assert_eq!(c[1], c[2]);
        let same = increment_covariance(&kernel(), &[0.5, 0.5, 0.5], 0.2, 0.5).unwrap();
        assert!(same.iter().all(|&v| v == 0.1));
        assert!(increment_covariance(&kernel(), &[0.0], 0.0, 0.1).is_err());
        assert!(increment_covariance(&kernel(), &[0.0], 0.5, 0.0).is_err());
    }

    #[test]
    fn frozen_every_step_is_direct() {
        let k = kernel();
        let starts = [-0.5, 0.0, 0.7];
        let (a, _) = simulate_npoint_smooth(&k, &starts, 0.3, 64, SimMode::Direct, &mut replica_rng(1, 0, 0)).unwrap();
        let (b, _) =
            simulate_npoint_smooth(&k, &starts, 0.3, 64, SimMode::Frozen(64), &mut replica_rng(1, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_changed_matches_direct_bitwise() {
        let k = kernel();
        let starts = [-1.0, 0.0, 1.0];
        let (a, _) = simulate_npoint_smooth(&k, &starts, 0.1, 50, SimMode::Direct, &mut replica_rng(3, 0, 0)).unwrap();
        let (b, _) =
            simulate_npoint_smooth(&k, &starts, 0.1, 50, SimMode::TimeChanged, &mut replica_rng(3, 0, 0)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn invalid_configurations() {
        let k = kernel();
        let mut rng = replica_rng(0, 0, 0);
        assert!(simulate_npoint_smooth(&k, &[0.0], 0.5, 10, SimMode::Frozen(3), &mut rng).is_err());
        assert!(simulate_npoint_smooth(&k, &[1.0, 0.0], 0.5, 10, SimMode::Direct, &mut rng).is_err());
        assert!(simulate_npoint_smooth(&k, &[0.0], 0.5, 0, SimMode::Direct, &mut rng).is_err());
        assert!(simulate_npoint_smooth(&k, &[0.0], 1.5, 10, SimMode::Direct, &mut rng).is_err());
    }

    #[test]
    fn paths_start_at_starts_and_stay_ordered() {
        let k = kernel();
        let starts = [-0.2, -0.1, 0.0, 0.05, 0.3];
        for seed in 0..20 {
            let (p, _) =
                simulate_npoint_smooth(&k, &starts, 1.0, 16, SimMode::Direct, &mut replica_rng(seed, 0, 0)).unwrap();
            for j in 0..=p.steps() {
                let col = p.column(j);
                assert!(col.windows(2).all(|w| w[0] <= w[1]));
            }
            assert_eq!(p.column(0), starts.to_vec());
        }
    }

    #[test]
    fn mode_parses_from_json() {
        let m: SimMode = serde_json::from_str(r#"{"frozen":8}"#).unwrap();
        assert_eq!(m, SimMode::Frozen(8));
        let m: SimMode = serde_json::from_str(r#""time_changed""#).unwrap();
        assert_eq!(m, SimMode::TimeChanged);
    }
}
