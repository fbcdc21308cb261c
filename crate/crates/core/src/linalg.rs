//! Small dense linear algebra on row-major `n x n` buffers.
//!
//! Particle counts stay in the tens, so a cyclic Jacobi sweep is both
//! accurate and fast enough for per-step covariance factorisation.

use crate::real::Real;

/// Eigen-decomposition of a symmetric matrix: `a = v diag(values) v^T`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Row-major, eigenvectors stored as columns.
    pub vectors: Vec<T>,
    pub n: usize,
}

const MAX_SWEEPS: usize = 64;

impl<T: Real> SymmetricEigen<T> {
    pub fn new(matrix: &[T], n: usize) -> Self {
        let mut a = matrix.to_vec();
        let mut v = vec![T::zero(); n * n];
        jacobi_in_place(&mut a, &mut v, n);
        let values = (0..n).map(|i| a[i * n + i]).collect();
        Self {
            values,
            vectors: v,
            n,
        }
    }
}

fn jacobi_in_place<T: Real>(a: &mut [T], v: &mut [T], n: usize) {
    debug_assert_eq!(a.len(), n * n);
    v.iter_mut().for_each(|x| *x = T::zero());
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    if n < 2 {
        return;
    }
    let total: T = a.iter().map(|&x| x * x).sum();
    let floor = T::epsilon() * T::epsilon() * total;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= floor || off == T::zero() {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        let new_p = c * akp - s * akq;
                        let new_q = s * akp + c * akq;
                        a[k * n + p] = new_p;
                        a[p * n + k] = new_p;
                        a[k * n + q] = new_q;
                        a[q * n + k] = new_q;
                    }
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

/// Reusable workspace producing the symmetric PSD square root of a
/// covariance matrix, with negative eigenvalues clipped to zero.
///
/// The symmetric root (rather than `V sqrt(L)`) is continuous in the
/// matrix, so runs that share gaussian variates stay close when their
/// covariances are close.
#[derive(Debug, Clone)]
pub struct PsdSqrt<T> {
    n: usize,
    work: Vec<T>,
    vectors: Vec<T>,
    root: Vec<T>,
    clipped: usize,
}

impl<T: Real> PsdSqrt<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            work: vec![T::zero(); n * n],
            vectors: vec![T::zero(); n * n],
            root: vec![T::zero(); n * n],
            clipped: 0,
        }
    }

    /// Number of strictly negative eigenvalues clipped by the last call.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn factor(&mut self, cov: &[T]) -> &[T] {
        let n = self.n;
        assert_eq!(cov.len(), n * n, "covariance has wrong size");
        if n == 1 {
            self.clipped = usize::from(cov[0] < T::zero());
            self.root[0] = cov[0].max(T::zero()).sqrt();
            return &self.root;
        }
        self.work.copy_from_slice(cov);
        jacobi_in_place(&mut self.work, &mut self.vectors, n);
        self.clipped = 0;
        let mut sqrt_vals = Vec::with_capacity(n);
        for i in 0..n {
            let lambda = self.work[i * n + i];
            if lambda < T::zero() {
                self.clipped += 1;
            }
            sqrt_vals.push(lambda.max(T::zero()).sqrt());
        }
        let v = &self.vectors;
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for (k, s) in sqrt_vals.iter().enumerate() {
                    acc += v[i * n + k] * *s * v[j * n + k];
                }
                self.root[i * n + j] = acc;
                self.root[j * n + i] = acc;
            }
        }
        &self.root
    }
}

/// `out = m * x` for a row-major square matrix.
pub fn mat_vec<T: Real>(m: &[T], x: &[T], out: &mut [T]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * n..(i + 1) * n]
            .iter()
            .zip(x)
            .map(|(&a, &b)| a * b)
            .sum();
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for numerically singular systems.
pub fn solve_dense<T: Real>(mut a: Vec<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .abs()
                .partial_cmp(&a[j * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot * n + col].abs() <= T::epsilon() * scale * T::lit(16.0) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= f * v;
            }
            let bc = b[col];
            b[row] -= f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &SymmetricEigen<f64>) -> Vec<f64> {
        let n = e.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| e.vectors[i * n + k] * e.values[k] * e.vectors[j * n + k])
                    .sum();
            }
        }
        out
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let m = vec![4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 1.0];
        let e = SymmetricEigen::new(&m, 3);
        let r = reconstruct(&e);
        for (a, b) in m.iter().zip(&r) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn psd_root_of_rank_one_matrix() {
        // coincident particles: constant matrix c * 11^T
        let c: f64 = 0.25;
        let m = vec![c; 9];
        let mut f = PsdSqrt::new(3);
        let root = f.factor(&m).to_vec();
        let mut sq = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                sq[i * 3 + j] = (0..3).map(|k| root[i * 3 + k] * root[k * 3 + j]).sum();
            }
        }
        for v in sq {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_root_clips_negative_eigenvalues() {
        let m = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3 and -1
        let mut f = PsdSqrt::new(2);
        f.factor(&m);
        assert_eq!(f.clipped(), 1);
    }

    #[test]
    fn dense_solve() {
        let a = vec![2.0f64, 1.0, 1.0, 3.0];
        let x = solve_dense(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }
}
