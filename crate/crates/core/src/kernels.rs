//! Smoothing kernels `phi`, their spatial correlation
//! `Phi(r) = ∫ phi(r - p) phi(p) dp`, Fourier transforms and the
//! convolution square root `phi = psi * psi`.
//!
//! Fourier convention: `F f(λ) = ∫ f(p) e^{-iλp} dp`, inverse with `1/2π`,
//! so Parseval reads `(1/2π) ∫ |F f|^2 = ∫ f^2`.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::real::Real;

/// Samples of a function on the centred uniform grid
/// `p_i = (i - (len - 1) / 2) * step`, zero outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    step: T,
    values: Vec<T>,
}

impl<T: Real> Table<T> {
    pub fn new(step: T, values: Vec<T>) -> Result<Self> {
        if !(step > T::zero()) || !step.is_finite() {
            return Err(invalid("grid_step", "must be positive and finite"));
        }
        if values.len() % 2 == 0 {
            return Err(invalid("values", "tabulated kernels need an odd, centred sample count"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("table value {bad}")));
        }
        Ok(Self { step, values })
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn half(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn position(&self, i: usize) -> T {
        (T::from_usize_lossy(i) - T::from_usize_lossy(self.half())) * self.step
    }

    pub fn support_radius(&self) -> T {
        T::from_usize_lossy(self.half()) * self.step
    }

    /// Linear interpolation between samples.
    pub fn eval(&self, p: T) -> T {
        let x = p / self.step + T::from_usize_lossy(self.half());
        if x < T::zero() || !x.is_finite() {
            return T::zero();
        }
        let last = self.values.len() - 1;
        let i = x.floor().to_usize().unwrap_or(usize::MAX);
        if i > last {
            return T::zero();
        }
        if i == last {
            return if x == T::from_usize_lossy(last) {
                self.values[last]
            } else {
                T::zero()
            };
        }
        let frac = x - T::from_usize_lossy(i);
        self.values[i] * (T::one() - frac) + self.values[i + 1] * frac
    }

    /// Riemann-sum transform `h Σ f(p_i) e^{-iλ p_i}`.
    pub fn fourier_at(&self, lambda: T) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (i, &v) in self.values.iter().enumerate() {
            let phase = -lambda * self.position(i);
            acc += Complex::new(phase.cos(), phase.sin()) * v;
        }
        acc * self.step
    }
}

/// A closed-form or tabulated one-dimensional profile. Used for the
/// H1 factors, which are not individually normalised.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    /// `amplitude * exp(-p^2 / (2 width^2))`
    Gaussian { amplitude: T, width: T },
    Tabulated(Table<T>),
}

impl<T: Real> Profile<T> {
    pub fn eval(&self, p: T) -> T {
        match self {
            Profile::Gaussian { amplitude, width } => {
                *amplitude * (-(p * p) / (T::lit(2.0) * *width * *width)).exp()
            }
            Profile::Tabulated(t) => t.eval(p),
        }
    }

    pub fn fourier_at(&self, lambda: T) -> Complex<T> {
        match self {
            Profile::Gaussian { amplitude, width } => {
                let v = *amplitude
                    * *width
                    * (T::lit(2.0) * T::PI()).sqrt()
                    * (-(*width * *width * lambda * lambda) / T::lit(2.0)).exp();
                Complex::new(v, T::zero())
            }
            Profile::Tabulated(t) => t.fourier_at(lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape<T> {
    Gaussian { bandwidth: T, amplitude: T },
    Tabulated { table: Table<T>, correlation: Table<T> },
}

/// Smoothing kernel normalised so that `∫ phi^2 = 1`.
///
/// Immutable after construction and cheap to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    shape: Shape<T>,
    l2_norm: T,
}

/// The two convolution factors of `phi = psi1 * psi2`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFactors<T> {
    pub psi1: Profile<T>,
    pub psi2: Profile<T>,
    /// Sup-norm of `psi1 * psi2 - phi` measured during construction.
    pub residual: T,
}

pub fn make_gaussian_kernel<T: Real>(bandwidth: T) -> Result<Kernel<T>> {
    Kernel::gaussian(bandwidth)
}

impl<T: Real> Kernel<T> {
    /// `phi(p) = c exp(-p^2 / (2 s^2))` with `c = π^{-1/4} s^{-1/2}`.
    pub fn gaussian(bandwidth: T) -> Result<Self> {
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(invalid("bandwidth", "must be positive and finite"));
        }
        let amplitude = (bandwidth * T::PI().sqrt()).sqrt().recip();
        Ok(Self {
            shape: Shape::Gaussian {
                bandwidth,
                amplitude,
            },
            l2_norm: T::one(),
        })
    }

    /// Tabulated kernel on a centred grid; rescaled so the Riemann sum of
    /// `phi^2` is one.
    pub fn tabulated(grid_step: T, values: Vec<T>) -> Result<Self> {
        let raw = Table::new(grid_step, values)?;
        let energy: T = raw.values.iter().map(|&v| v * v).sum::<T>() * grid_step;
        if !(energy > T::zero()) {
            return Err(invalid("values", "kernel is identically zero"));
        }
        let scale = energy.sqrt().recip();
        let values: Vec<T> = raw.values.iter().map(|&v| v * scale).collect();
        let edge = values[0].abs().max(values[values.len() - 1].abs());
        if edge > T::tiny() {
            return Err(invalid(
                "values",
                format!("kernel must decay below {} at the grid boundary, found {edge}", T::tiny()),
            ));
        }
        let table = Table::new(grid_step, values)?;
        let correlation = self_correlation(&table);
        let l2_norm = table.values.iter().map(|&v| v * v).sum::<T>() * grid_step;
        Ok(Self {
            shape: Shape::Tabulated { table, correlation },
            l2_norm,
        })
    }

    pub fn family(&self) -> KernelFamily {
        match self.shape {
            Shape::Gaussian { .. } => KernelFamily::Gaussian,
            Shape::Tabulated { .. } => KernelFamily::Tabulated,
        }
    }

    /// Gaussian scale, `None` for tabulated kernels.
    pub fn bandwidth(&self) -> Option<T> {
        match self.shape {
            Shape::Gaussian { bandwidth, .. } => Some(bandwidth),
            Shape::Tabulated { .. } => None,
        }
    }

    pub fn table(&self) -> Option<&Table<T>> {
        match &self.shape {
            Shape::Tabulated { table, .. } => Some(table),
            Shape::Gaussian { .. } => None,
        }
    }

    /// Cached `∫ phi^2`.
    pub fn l2_norm(&self) -> T {
        self.l2_norm
    }

    pub fn eval(&self, p: T) -> T {
        match &self.shape {
            Shape::Gaussian {
                bandwidth,
                amplitude,
            } => *amplitude * (-(p * p) / (T::lit(2.0) * *bandwidth * *bandwidth)).exp(),
            Shape::Tabulated { table, .. } => table.eval(p),
        }
    }

    /// `Phi(r) = ∫ phi(r - p) phi(p) dp`; symmetric, `Phi(0) = 1`.
    pub fn correlation(&self, r: T) -> T {
        match &self.shape {
            Shape::Gaussian { bandwidth, .. } => {
                (-(r * r) / (T::lit(4.0) * *bandwidth * *bandwidth)).exp()
            }
            Shape::Tabulated { correlation, .. } => correlation.eval(r.abs()),
        }
    }

    pub fn fourier_at(&self, lambda: T) -> Complex<T> {
        match &self.shape {
            Shape::Gaussian {
                bandwidth,
                amplitude,
            } => {
                let v = *amplitude
                    * *bandwidth
                    * (T::lit(2.0) * T::PI()).sqrt()
                    * (-(*bandwidth * *bandwidth * lambda * lambda) / T::lit(2.0)).exp();
                Complex::new(v, T::zero())
            }
            Shape::Tabulated { table, .. } => table.fourier_at(lambda),
        }
    }

    /// `F phi` on a finite frequency grid symmetric about zero.
    pub fn fourier_transform(&self, freq_grid: &[T]) -> Result<Vec<Complex<T>>> {
        check_symmetric(freq_grid)?;
        Ok(freq_grid.iter().map(|&l| self.fourier_at(l)).collect())
    }

    /// Smallest `λ > 0` beyond which `|F phi| < tiny` (or the Nyquist
    /// frequency of a tabulated kernel if its transform never gets there).
    pub fn frequency_cutoff(&self) -> T {
        match &self.shape {
            Shape::Gaussian {
                bandwidth,
                amplitude,
            } => {
                let peak = *amplitude * *bandwidth * (T::lit(2.0) * T::PI()).sqrt();
                (T::lit(2.0) * (peak / T::tiny()).ln()).sqrt() / *bandwidth
            }
            Shape::Tabulated { table, .. } => {
                let nyquist = T::PI() / table.step;
                let n = 4096usize;
                let dl = nyquist / T::from_usize_lossy(n);
                (1..=n)
                    .map(|i| T::from_usize_lossy(i) * dl)
                    .find(|&l| table.fourier_at(l).norm() < T::tiny())
                    .unwrap_or(nyquist)
            }
        }
    }

    /// Default symmetric uniform frequency grid reaching the cutoff.
    pub fn frequency_grid(&self, points: usize) -> Vec<T> {
        let points = points.max(3);
        let lmax = self.frequency_cutoff();
        let span = T::from_usize_lossy(points - 1);
        (0..points)
            .map(|i| -lmax + T::lit(2.0) * lmax * T::from_usize_lossy(i) / span)
            .collect()
    }

    /// Convolution square root: `psi1 = psi2 = psi` with `F psi = (F phi)^{1/2}`.
    pub fn factorize(&self) -> Result<KernelFactors<T>> {
        match &self.shape {
            Shape::Gaussian {
                bandwidth,
                amplitude,
            } => {
                let peak = *amplitude * *bandwidth * (T::lit(2.0) * T::PI()).sqrt();
                let psi = Profile::Gaussian {
                    amplitude: peak.sqrt() / (*bandwidth * T::PI().sqrt()),
                    width: *bandwidth / T::SQRT_2(),
                };
                Ok(KernelFactors {
                    psi1: psi.clone(),
                    psi2: psi,
                    residual: T::zero(),
                })
            }
            Shape::Tabulated { table, .. } => factorize_table(table),
        }
    }
}

fn check_symmetric<T: Real>(grid: &[T]) -> Result<()> {
    let n = grid.len();
    let scale = grid.iter().fold(T::one(), |m, &x| m.max(x.abs()));
    for i in 0..n {
        if !grid[i].is_finite() {
            return Err(Error::NonFinite("frequency grid".into()));
        }
        if (grid[i] + grid[n - 1 - i]).abs() > T::tiny() * scale {
            return Err(invalid("freq_grid", "must be symmetric about zero"));
        }
    }
    Ok(())
}

/// Discrete autocorrelation on lags `k h`, `k = -(L-1)..=(L-1)`.
fn self_correlation<T: Real>(table: &Table<T>) -> Table<T> {
    let v = &table.values;
    let len = v.len();
    let mut out = Vec::with_capacity(2 * len - 1);
    for lag in -(len as isize - 1)..=(len as isize - 1) {
        let mut acc = T::zero();
        for (i, &a) in v.iter().enumerate() {
            let j = i as isize - lag;
            if j >= 0 && (j as usize) < len {
                acc += a * v[j as usize];
            }
        }
        out.push(acc * table.step);
    }
    Table {
        step: table.step,
        values: out,
    }
}

fn factorize_table<T: Real>(table: &Table<T>) -> Result<KernelFactors<T>> {
    let len = table.values.len();
    let half = (len - 1) / 2;
    let m = (2 * len).next_power_of_two();
    let h = table.step;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); m];
    for (i, &v) in table.values.iter().enumerate() {
        let idx = (i as isize - half as isize).rem_euclid(m as isize) as usize;
        buf[idx] = Complex::new(v, T::zero());
    }
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_forward(m).process(&mut buf);

    let spectrum: Vec<Complex<T>> = buf.iter().map(|c| *c * h).collect();
    let peak = spectrum.iter().fold(T::zero(), |a, c| a.max(c.norm()));
    let tol = T::epsilon().sqrt() * T::lit(1e-2) * peak;
    for c in &spectrum {
        if c.im.abs() > tol {
            return Err(Error::FactorizationUnsupported(
                "Fourier transform is not real; kernel is not even".into(),
            ));
        }
        if c.re < -tol {
            return Err(Error::FactorizationUnsupported(format!(
                "Fourier transform changes sign (min {})",
                c.re
            )));
        }
    }

    // psi samples: inverse DFT of sqrt(h X) / h, so that h (psi ⊛ psi) = phi.
    let mut root: Vec<Complex<T>> = spectrum
        .iter()
        .map(|c| Complex::new(c.re.max(T::zero()).sqrt() / h, T::zero()))
        .collect();
    planner.plan_fft_inverse(m).process(&mut root);
    let inv_m = T::from_usize_lossy(m).recip();
    let psi_half = m / 2 - 1;
    let psi_values: Vec<T> = (0..(2 * psi_half + 1))
        .map(|i| {
            let k = i as isize - psi_half as isize;
            root[k.rem_euclid(m as isize) as usize].re * inv_m
        })
        .collect();
    let psi = Table::new(h, psi_values)?;

    let residual = (0..len)
        .map(|i| {
            let lag = i as isize - half as isize;
            let conv: T = (0..psi.values.len())
                .filter_map(|a| {
                    let b = a as isize - lag;
                    (b >= 0 && (b as usize) < psi.values.len())
                        .then(|| psi.values[a] * psi.values[b as usize])
                })
                .sum::<T>()
                * h;
            (conv - table.values[i]).abs()
        })
        .fold(T::zero(), T::max);
    if residual > T::epsilon().sqrt() * T::lit(1e-1) {
        return Err(Error::FactorizationUnsupported(format!(
            "convolution check failed, residual {residual}"
        )));
    }
    let psi = Profile::Tabulated(psi);
    Ok(KernelFactors {
        psi1: psi.clone(),
        psi2: psi,
        residual,
    })
}

/// Serialised kernel description used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    Tabulated { grid_step: f64, values: Vec<f64> },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian { bandwidth: 1.0 }
    }
}

impl KernelSpec {
    pub fn build<T: Real>(&self) -> Result<Kernel<T>> {
        match self {
            KernelSpec::Gaussian { bandwidth } => Kernel::gaussian(T::lit(*bandwidth)),
            KernelSpec::Tabulated { grid_step, values } => {
                Kernel::tabulated(T::lit(*grid_step), values.iter().map(|&v| T::lit(v)).collect())
            }
        }
    }
}
