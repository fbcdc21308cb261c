//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable by the simulators and rate functionals.
///
/// Implemented for `f32` and `f64`. Tolerances inside the crate are
/// expressed in terms of [`Real::tiny`] and [`Float::epsilon`] so that the
/// same code is meaningful at both precisions, but the published accuracy
/// targets assume `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// Threshold below which two values are treated as coincident.
    fn tiny() -> Self;
}

impl Real for f32 {
    #[inline]
    fn tiny() -> Self {
        1e-6
    }
}

impl Real for f64 {
    #[inline]
    fn tiny() -> Self {
        1e-12
    }
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid<T: Real>(values: &[T], step: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = values[1..n - 1].iter().copied().sum();
            step * (inner + (values[0] + values[n - 1]) * T::lit(0.5))
        }
    }
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid_nonuniform<T: Real>(times: &[T], values: &[T]) -> T {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) * T::lit(0.5))
        .sum()
}

/// Composite Simpson rule on an arbitrary increasing grid, exact for
/// quadratics. An odd number of intervals closes with the three-point
/// correction on the last interval; two points fall back to the trapezoid.
pub fn simpson_nonuniform<T: Real>(times: &[T], values: &[T]) -> T {
    let n = times.len();
    if n < 3 {
        return trapezoid_nonuniform(times, values);
    }
    let intervals = n - 1;
    let pairs = intervals / 2;
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let mut sum = T::zero();
    for i in 0..pairs {
        let k = 2 * i;
        let h0 = times[k + 1] - times[k];
        let h1 = times[k + 2] - times[k + 1];
        let hs = h0 + h1;
        sum += hs / six
            * ((two - h1 / h0) * values[k] + hs * hs / (h0 * h1) * values[k + 1] + (two - h0 / h1) * values[k + 2]);
    }
    if intervals % 2 == 1 {
        let h = times[n - 1] - times[n - 2];
        let hp = times[n - 2] - times[n - 3];
        let three = T::lit(3.0);
        let alpha = (two * h * h + three * h * hp) / (six * (hp + h));
        let beta = (h * h + three * h * hp) / (six * hp);
        let eta = h * h * h / (six * hp * (hp + h));
        sum += alpha * values[n - 1] + beta * values[n - 2] - eta * values[n - 3];
    }
    sum
}

/// `n + 1` evenly spaced points covering `[0, 1]`, with exact end points.
pub fn unit_grid<T: Real>(n: usize) -> Vec<T> {
    let nf = T::from_usize_lossy(n);
    (0..=n)
        .map(|j| {
            if j == n {
                T::one()
            } else {
                T::from_usize_lossy(j) / nf
            }
        })
        .collect()
}
