//! Rate functionals of the large-deviation principles, evaluated on
//! discretised inputs. Infinite rates carry a machine-readable reason.
//!
//! Spectral rates use `(1/4π) ∫∫ |F ḣ / F φ|^2 dλ dt`, i.e. half the time
//! integral of `(1/2π) ∫ |F f|^2 / |F φ|^2 dλ` over `|λ| ≤` the kernel's
//! frequency cutoff.

use std::fmt;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::kernels::Kernel;
use crate::pathmaps::{coalescing_projection, stop_map, ForestSkeleton, HittingSet, PiecewiseLinearPath};
use crate::real::{simpson_nonuniform, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfiniteReason {
    WrongStart,
    NotInImageOfMap,
    NonSquareIntegrableDerivative,
    FourierDivergence,
}

impl fmt::Display for InfiniteReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::WrongStart => "wrong_start",
            Self::NotInImageOfMap => "not_in_image_of_map",
            Self::NonSquareIntegrableDerivative => "non_square_integrable_derivative",
            Self::FourierDivergence => "fourier_divergence",
        };
        f.write_str(s)
    }
}

/// Nonnegative extended real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue<T> {
    Finite(T),
    Infinite(InfiniteReason),
}

impl<T: Real> RateValue<T> {
    pub fn value(&self) -> T {
        match self {
            Self::Finite(v) => *v,
            Self::Infinite(_) => T::infinity(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite(_))
    }

    pub fn reason(&self) -> Option<InfiniteReason> {
        match self {
            Self::Finite(_) => None,
            Self::Infinite(r) => Some(*r),
        }
    }

    pub fn max(self, other: Self) -> Self {
        match (self, other) {
            (Self::Infinite(r), _) | (Self::Finite(_), Self::Infinite(r)) => Self::Infinite(r),
            (Self::Finite(a), Self::Finite(b)) => Self::Finite(a.max(b)),
        }
    }
}

/// Samples `h(u_i, t_j)` on a spatial grid times a time grid.
/// A map `h(u, t)` sampled on `space × times`, stored as the displacement
/// `h(u, t) - u` so that small motions keep full relative precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    space: Vec<T>,
    times: Vec<T>,
    /// Time-major: `disp[j * space.len() + i] = h(u_i, t_j) - u_i`.
    disp: Vec<T>,
}

impl<T: Real> Field<T> {
    /// From positions `h(u_i, t_j)`, time-major.
    pub fn new(space: Vec<T>, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        ensure_len(space.len() * times.len(), values.len())?;
        let n = space.len();
        let disp = values.iter().enumerate().map(|(k, &v)| v - space[k % n]).collect();
        Self::from_displacement(space, times, disp)
    }

    /// From displacements `h(u_i, t_j) - u_i`, time-major.
    pub fn from_displacement(space: Vec<T>, times: Vec<T>, disp: Vec<T>) -> Result<Self> {
        if space.len() < 2 || space.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("space", "need a strictly increasing grid"));
        }
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "need a strictly increasing grid"));
        }
        ensure_len(space.len() * times.len(), disp.len())?;
        if disp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Self { space, times, disp })
    }

    pub fn from_fn(space: Vec<T>, times: Vec<T>, h: impl Fn(T, T) -> T) -> Result<Self> {
        let disp = times
            .iter()
            .flat_map(|&t| space.iter().map(|&u| h(u, t) - u).collect::<Vec<_>>())
            .collect();
        Self::from_displacement(space, times, disp)
    }

    /// Samples the displacement `d(u, t) = h(u, t) - u` directly.
    pub fn from_displacement_fn(space: Vec<T>, times: Vec<T>, d: impl Fn(T, T) -> T) -> Result<Self> {
        let disp = times
            .iter()
            .flat_map(|&t| space.iter().map(|&u| d(u, t)).collect::<Vec<_>>())
            .collect();
        Self::from_displacement(space, times, disp)
    }

    pub fn space(&self) -> &[T] {
        &self.space
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// `h(u_i, t_j) - u_i` at time index `j`.
    pub fn displacement(&self, j: usize) -> &[T] {
        let n = self.space.len();
        &self.disp[j * n..(j + 1) * n]
    }

    /// `h(u_i, t_j)` at time index `j`.
    pub fn positions(&self, j: usize) -> Vec<T> {
        self.displacement(j).iter().zip(&self.space).map(|(&d, &u)| u + d).collect()
    }

    /// `∂h/∂t` at `times[j]`: derivative of the Lagrange polynomial through
    /// the [`TIME_STENCIL`] nearest time points (fewer on short grids).
    pub fn time_derivative(&self, j: usize) -> Vec<T> {
        let nt = self.times.len();
        if nt == 1 {
            return vec![T::zero(); self.space.len()];
        }
        let q = TIME_STENCIL.min(nt);
        let lo = j.saturating_sub(q / 2).min(nt - q);
        let w = lagrange_derivative_weights(&self.times[lo..lo + q], self.times[j]);
        let centre = self.displacement(j);
        let mut out = vec![T::zero(); self.space.len()];
        for (k, &wk) in w.iter().enumerate() {
            if lo + k == j {
                continue;
            }
            // weights sum to zero; differencing first keeps static fields exact
            for (o, (&a, &c)) in out.iter_mut().zip(self.displacement(lo + k).iter().zip(centre)) {
                *o += wk * (a - c);
            }
        }
        out
    }

    fn starts_at_identity(&self) -> bool {
        self.displacement(0)
            .iter()
            .zip(&self.space)
            .all(|(&d, &u)| d.abs() <= T::tiny() * u.abs().max(T::one()))
    }
}

/// Points in the time-differentiation stencil (eighth-order accurate).
pub const TIME_STENCIL: usize = 9;

/// `L_k'(x)` for the Lagrange basis on `nodes`.
fn lagrange_derivative_weights<T: Real>(nodes: &[T], x: T) -> Vec<T> {
    let q = nodes.len();
    (0..q)
        .map(|k| {
            let mut sum = T::zero();
            for m in (0..q).filter(|&m| m != k) {
                let mut prod = (nodes[k] - nodes[m]).recip();
                for l in (0..q).filter(|&l| l != k && l != m) {
                    prod *= (x - nodes[l]) / (nodes[k] - nodes[l]);
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SpectralEnergy<T> {
    total: T,
    tail: T,
}

/// `(1/2π) ∫_{|λ|≤λ_max} |F f|^2 / |F φ|^2 dλ` for functions sampled on a
/// uniform grid, via a zero-padded FFT.
struct Spectral<'k, T: Real> {
    kernel: &'k Kernel<T>,
    lambda_max: T,
    planner: FftPlanner<T>,
    cache: Option<(usize, T, Vec<T>)>,
}

impl<'k, T: Real> Spectral<'k, T> {
    fn new(kernel: &'k Kernel<T>) -> Self {
        Self {
            kernel,
            lambda_max: kernel.frequency_cutoff(),
            planner: FftPlanner::new(),
            cache: None,
        }
    }

    fn check_resolution(&self, dx: T) -> Result<()> {
        let nyquist = T::PI() / dx;
        if nyquist < self.lambda_max {
            return Err(Error::GridMismatch(format!(
                "spatial step {dx} resolves |λ| ≤ {nyquist}, kernel needs {}",
                self.lambda_max
            )));
        }
        Ok(())
    }

    fn kernel_power(&mut self, m: usize, dx: T) -> &[T] {
        let fresh = !matches!(&self.cache, Some((cm, cdx, _)) if *cm == m && *cdx == dx);
        if fresh {
            let dl = T::lit(2.0) * T::PI() / (T::from_usize_lossy(m) * dx);
            let mut power = Vec::new();
            let mut k = 0usize;
            loop {
                let l = T::from_usize_lossy(k) * dl;
                if l > self.lambda_max || k > m / 2 {
                    break;
                }
                power.push(self.kernel.fourier_at(l).norm_sqr());
                k += 1;
            }
            self.cache = Some((m, dx, power));
        }
        &self.cache.as_ref().expect("filled").2
    }

    fn energy(&mut self, f: &[T], dx: T) -> Result<SpectralEnergy<T>> {
        self.check_resolution(dx)?;
        let m = (4 * f.len()).next_power_of_two();
        let mut buf: Vec<Complex<T>> = f.iter().map(|&v| Complex::new(v, T::zero())).collect();
        buf.resize(m, Complex::new(T::zero(), T::zero()));
        self.planner.plan_fft_forward(m).process(&mut buf);
        let dl = T::lit(2.0) * T::PI() / (T::from_usize_lossy(m) * dx);
        let half_cut = self.lambda_max * T::lit(0.5);
        let power = self.kernel_power(m, dx).to_vec();
        let transform: Vec<Complex<T>> = buf[..power.len()].iter().map(|&b| b * dx).collect();
        integrate_ratio(&transform, &power, dl, half_cut)
    }
}

/// `(1/2π) ∫_{|λ|≤λ_max} |F f|^2 / |F φ|^2` from samples at `λ_k = k dl`,
/// `k ≥ 0`; the integrand is even.
fn integrate_ratio<T: Real>(transform: &[Complex<T>], power: &[T], dl: T, half_cut: T) -> Result<SpectralEnergy<T>> {
    let integrand: Vec<T> = transform.iter().zip(power).map(|(f, &p)| f.norm_sqr() / p).collect();
    if integrand.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral integrand".into()));
    }
    let mut total = T::zero();
    let mut tail = T::zero();
    for k in 1..integrand.len() {
        let piece = (integrand[k - 1] + integrand[k]) * T::lit(0.5) * dl;
        total += piece;
        if T::from_usize_lossy(k - 1) * dl >= half_cut {
            tail += piece;
        }
    }
    let scale = T::PI().recip();
    Ok(SpectralEnergy {
        total: total * scale,
        tail: tail * scale,
    })
}

/// Tail-octave share above which a spectral rate is declared divergent.
pub const DIVERGENCE_SHARE: f64 = 0.01;

fn uniform_step<T: Real>(grid: &[T]) -> Result<T> {
    let n = grid.len();
    let dx = (grid[n - 1] - grid[0]) / T::from_usize_lossy(n - 1);
    let tol = dx * T::epsilon().sqrt() * T::lit(1e-2) * T::from_usize_lossy(n);
    for (i, &x) in grid.iter().enumerate() {
        if (x - (grid[0] + dx * T::from_usize_lossy(i))).abs() > tol {
            return Err(Error::GridMismatch("spatial grid must be uniform".into()));
        }
    }
    Ok(dx)
}

fn spectral_rate<T: Real>(times: &[T], energies: &[SpectralEnergy<T>]) -> RateValue<T> {
    let total: Vec<T> = energies.iter().map(|e| e.total).collect();
    let tail: Vec<T> = energies.iter().map(|e| e.tail).collect();
    let (total, tail) = if times.len() == 1 {
        (total[0], tail[0])
    } else {
        (simpson_nonuniform(times, &total), simpson_nonuniform(times, &tail))
    };
    if total > T::zero() && tail > T::lit(DIVERGENCE_SHARE) * total {
        return RateValue::Infinite(InfiniteReason::FourierDivergence);
    }
    RateValue::Finite(total * T::lit(0.5))
}

/// Rate of the gaussian field `y^ε`: `(1/4π) ∫∫ |F ḣ / F φ|^2`, with `h`
/// sampled on a uniform spatial grid.
pub fn rate_gaussian_field<T: Real>(kernel: &Kernel<T>, h: &Field<T>) -> Result<RateValue<T>> {
    let dx = uniform_step(&h.space)?;
    if h.times[0] != T::zero() {
        return Err(invalid("times", "field must start at t = 0"));
    }
    if !h.starts_at_identity() {
        return Ok(RateValue::Infinite(InfiniteReason::WrongStart));
    }
    let mut spec = Spectral::new(kernel);
    let energies = (0..h.times.len())
        .map(|j| spec.energy(&h.time_derivative(j), dx))
        .collect::<Result<Vec<_>>>()?;
    Ok(spectral_rate(&h.times, &energies))
}

/// One-time marginal rate `(1/4πt) ∫ |F h / F φ|^2` for a displacement
/// profile `h(u) = y(u, t) - u` on a uniform grid.
pub fn rate_fixed_time<T: Real>(kernel: &Kernel<T>, space: &[T], h: &[T], t: T) -> Result<RateValue<T>> {
    if !(t > T::zero() && t <= T::one()) {
        return Err(invalid("t", "must lie in (0, 1]"));
    }
    ensure_len(space.len(), h.len())?;
    if space.len() < 2 {
        return Err(invalid("space", "need at least two points"));
    }
    let dx = uniform_step(space)?;
    let e = Spectral::new(kernel).energy(h, dx)?;
    Ok(match spectral_rate(&[T::zero()], &[e]) {
        RateValue::Finite(v) => RateValue::Finite(v / t),
        inf => inf,
    })
}

/// Rate of the flow `x^ε`: the spectral functional applied to the Eulerian
/// velocity `v(x, t) = ḣ(h^{-1}(x, t), t)`.
///
/// `F v` is computed without inverting `h` via the substitution `x = h(u)`:
/// `F v(λ) = ∫ ḣ(u) h'(u) e^{-iλ h(u)} du`, a trapezoid sum on the uniform
/// `u` grid with a spectral `h'`. Interpolating `h^{-1}` instead leaves
/// broadband errors that `1 / |F φ|^2` amplifies without bound. Beyond the particle hull the
/// velocity decays like the kernel correlation from its edge value.
pub fn rate_flow<T: Real>(kernel: &Kernel<T>, h: &Field<T>) -> Result<RateValue<T>> {
    if h.times[0] != T::zero() {
        return Err(invalid("times", "field must start at t = 0"));
    }
    let n = h.space.len();
    if n < 5 {
        return Err(invalid("space", "need at least five points"));
    }
    let du = uniform_step(&h.space)?;
    if !h.starts_at_identity() {
        return Ok(RateValue::Infinite(InfiniteReason::WrongStart));
    }
    for j in 0..h.times.len() {
        if h.positions(j).windows(2).any(|w| !(w[1] > w[0])) {
            return Ok(RateValue::Infinite(InfiniteReason::NotInImageOfMap));
        }
    }
    let lambda_max = kernel.frequency_cutoff();
    let pad = correlation_radius(kernel);
    let dx_tail = du.min(T::lit(0.9) * T::PI() / lambda_max);
    let extent = (0..h.times.len())
        .map(|j| {
            let x = h.positions(j);
            x[n - 1] - x[0]
        })
        .fold(T::zero(), |a, b| a.max(b))
        + T::lit(2.0) * pad;
    let dl = T::lit(2.0) * T::PI() / (T::lit(4.0) * extent);
    let count = (lambda_max / dl).floor().to_usize().unwrap_or(0) + 1;
    let lambdas: Vec<T> = (0..count).map(|k| T::from_usize_lossy(k) * dl).collect();
    let power: Vec<T> = lambdas.iter().map(|&l| kernel.fourier_at(l).norm_sqr()).collect();
    let phi0 = kernel.correlation(T::zero());
    let mut planner = FftPlanner::new();
    let mut energies = Vec::with_capacity(h.times.len());
    for j in 0..h.times.len() {
        let x = &h.positions(j);
        let v = h.time_derivative(j);
        let jac = spectral_jacobian(h.displacement(j), &h.space, du, &mut planner);
        let steepest = jac.iter().fold(T::zero(), |a, &b| a.max(b));
        if lambda_max * steepest * du > T::PI() * T::lit(0.5) {
            return Err(Error::GridMismatch(format!(
                "u step {du} under-resolves e^(-iλh) at λ = {lambda_max} with h' up to {steepest}"
            )));
        }
        let mut nodes: Vec<(T, T)> = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { T::lit(0.5) } else { T::one() };
                (x[i], w * du * jac[i] * v[i])
            })
            .collect();
        let tail_steps = (pad / dx_tail).ceil().to_usize().unwrap_or(0);
        for (edge, value, dir) in [(x[0], v[0], -T::one()), (x[n - 1], v[n - 1], T::one())] {
            nodes.push((edge, T::lit(0.5) * dx_tail * value));
            for m in 1..=tail_steps {
                let off = dx_tail * T::from_usize_lossy(m);
                let w = if m == tail_steps { T::lit(0.5) } else { T::one() };
                nodes.push((edge + dir * off, w * dx_tail * value * kernel.correlation(off) / phi0));
            }
        }
        let transform: Vec<Complex<T>> = lambdas
            .iter()
            .map(|&l| {
                nodes.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &(p, w)| {
                    let phase = -l * p;
                    acc + Complex::new(phase.cos(), phase.sin()) * w
                })
            })
            .collect();
        let e = integrate_ratio(&transform, &power, dl, lambda_max * T::lit(0.5))?;
        energies.push(e);
    }
    Ok(spectral_rate(&h.times, &energies))
}

/// `1 + d'(u)` on a uniform grid, spectrally: the displacement minus its
/// end-to-end ramp is differentiated by FFT on a zero-padded buffer.
/// Finite differences leave smooth errors whose spectra outlive `F φ`.
fn spectral_jacobian<T: Real>(d: &[T], u: &[T], du: T, planner: &mut FftPlanner<T>) -> Vec<T> {
    let n = d.len();
    let span = u[n - 1] - u[0];
    let (d0, d1) = (d[0], d[n - 1]);
    let slope = (d1 - d0) / span;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(d[i] - d0 - slope * (u[i] - u[0]), T::zero()))
        .collect();
    buf.resize(m, Complex::new(T::zero(), T::zero()));
    planner.plan_fft_forward(m).process(&mut buf);
    let mf = T::from_usize_lossy(m);
    let base = T::lit(2.0) * T::PI() / (mf * du);
    for (k, b) in buf.iter_mut().enumerate() {
        let freq = if k < m / 2 {
            T::from_usize_lossy(k)
        } else if k == m / 2 {
            T::zero()
        } else {
            -T::from_usize_lossy(m - k)
        };
        *b = *b * Complex::new(T::zero(), freq * base / mf);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    (0..n).map(|i| T::one() + slope + buf[i].re).collect()
}

/// Distance beyond which the kernel correlation drops below machine
/// precision.
fn correlation_radius<T: Real>(kernel: &Kernel<T>) -> T {
    let mut r = T::lit(0.25);
    while kernel.correlation(r).abs() > T::epsilon() && r < T::lit(1e6) {
        r *= T::lit(1.25);
    }
    r
}

/// `½ Σ |Δf|^2 / Δt`: the exact Dirichlet energy of the interpolant.
pub fn dirichlet_energy<T: Real>(times: &[T], values: &[T]) -> T {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (v[1] - v[0]) * (v[1] - v[0]) / (t[1] - t[0]))
        .sum::<T>()
        * T::lit(0.5)
}

/// Grid size from which the refinement test below is applied.
pub const REFINEMENT_MIN_STEPS: usize = 64;

/// Finite energy that does not blow up under refinement: on grids with at
/// least [`REFINEMENT_MIN_STEPS`] steps, the energy of the every-other-point
/// subsample must lie within 10% of the full one.
pub fn has_square_integrable_derivative<T: Real>(times: &[T], values: &[T]) -> bool {
    let fine = dirichlet_energy(times, values);
    if !fine.is_finite() {
        return false;
    }
    if times.len() <= REFINEMENT_MIN_STEPS || fine == T::zero() {
        return true;
    }
    let last = times.len() - 1;
    let idx: Vec<usize> = (0..=last).step_by(2).chain((last % 2 == 1).then_some(last)).collect();
    let ct: Vec<T> = idx.iter().map(|&i| times[i]).collect();
    let cv: Vec<T> = idx.iter().map(|&i| values[i]).collect();
    let coarse = dirichlet_energy(&ct, &cv);
    (coarse - fine).abs() <= T::lit(0.1) * fine
}

/// Sup distance below which a path counts as a fixed point of a path map.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Rate of the stopped Brownian motion: `½ ∫ |ġ|^2` if `g(0) = start` and
/// `g` is frozen once it enters `B`.
pub fn rate_stopped<T: Real>(g: &PiecewiseLinearPath<T>, set: &HittingSet<T>, start: &[T]) -> Result<RateValue<T>> {
    ensure_len(g.dim(), start.len())?;
    if g.point(0).iter().zip(start).any(|(&a, &b)| (a - b).abs() > T::lit(FIXED_POINT_TOL)) {
        return Ok(RateValue::Infinite(InfiniteReason::WrongStart));
    }
    let stopped = stop_map(g, set)?;
    if stopped.sup_distance(g)? > T::lit(FIXED_POINT_TOL) {
        return Ok(RateValue::Infinite(InfiniteReason::NotInImageOfMap));
    }
    let energy: T = (0..g.dim())
        .map(|c| dirichlet_energy(g.times(), &g.coordinate(c)))
        .sum();
    Ok(RateValue::Finite(energy))
}

/// Rate of n coalescing Brownian motions:
/// `½ Σ_k ∫_0^{τ_k} f_k'^2`, with `τ_0 = 1` and `τ_k` the meeting time of
/// particles `k - 1` and `k`.
pub fn rate_npoint<T: Real>(f: &PiecewiseLinearPath<T>, starts: &[T]) -> Result<RateValue<T>> {
    ensure_len(f.dim(), starts.len())?;
    if starts.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("starts", "must be ordered"));
    }
    if f.point(0).iter().zip(starts).any(|(&a, &b)| (a - b).abs() > T::lit(FIXED_POINT_TOL)) {
        return Ok(RateValue::Infinite(InfiniteReason::WrongStart));
    }
    let proj = coalescing_projection(f)?;
    if proj.path.times() != f.times() || proj.path.sup_distance(f)? > T::lit(FIXED_POINT_TOL) {
        return Ok(RateValue::Infinite(InfiniteReason::NotInImageOfMap));
    }
    let times = f.times();
    let mut total = T::zero();
    for k in 0..f.dim() {
        let xs = f.coordinate(k);
        if !has_square_integrable_derivative(times, &xs) {
            return Ok(RateValue::Infinite(InfiniteReason::NonSquareIntegrableDerivative));
        }
        let tau = if k == 0 { T::one() } else { proj.tau[k] };
        let end = times.partition_point(|&t| t <= tau);
        total += dirichlet_energy(&times[..end], &xs[..end]);
    }
    Ok(RateValue::Finite(total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicRates<T> {
    /// `I_n` for `n = 1..=n_max`.
    pub levels: Vec<RateValue<T>>,
    /// Running maximum; its last entry is the reported supremum.
    pub running_max: Vec<RateValue<T>>,
    /// Whether the computed sequence is nondecreasing (up to rounding).
    pub nondecreasing: bool,
}

impl<T: Real> DyadicRates<T> {
    pub fn sup(&self) -> RateValue<T> {
        *self.running_max.last().expect("n_max ≥ 1")
    }
}

/// `I_n` of the dyadic restrictions of a skeleton, `n = 1..=n_max`.
pub fn rate_dyadic<T: Real>(skeleton: &ForestSkeleton<T>, n_max: u32) -> Result<DyadicRates<T>> {
    if n_max == 0 || n_max > skeleton.level() {
        return Err(invalid("n_max", format!("must lie in 1..={}", skeleton.level())));
    }
    let mut levels = Vec::with_capacity(n_max as usize);
    if !skeleton.is_monotone() {
        levels = vec![RateValue::Infinite(InfiniteReason::NotInImageOfMap); n_max as usize];
    } else {
        for m in 1..=n_max {
            let path = skeleton.restrict(m)?;
            let starts = path.point(0).to_vec();
            levels.push(rate_npoint(&path, &starts)?);
        }
    }
    let mut running_max = Vec::with_capacity(levels.len());
    let mut cur = RateValue::Finite(T::zero());
    for &l in &levels {
        cur = cur.max(l);
        running_max.push(cur);
    }
    let nondecreasing = levels.windows(2).all(|w| match (w[0], w[1]) {
        (_, RateValue::Infinite(_)) => true,
        (RateValue::Infinite(_), RateValue::Finite(_)) => false,
        (RateValue::Finite(a), RateValue::Finite(b)) => b >= a - T::tiny() * a.abs().max(T::one()),
    });
    Ok(DyadicRates {
        levels,
        running_max,
        nondecreasing,
    })
}
