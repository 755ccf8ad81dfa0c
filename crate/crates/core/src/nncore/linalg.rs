//! Dense row-major matrices and the eigenvalue routine behind `spectral_radius`.
//!
//! `Matrix<T>` only needs field arithmetic for construction and products, so it
//! also works with exact rationals. Anything that needs `sqrt` or `abs` on
//! floating values is bounded on [`Scalar`].

use std::ops::{Index, IndexMut};

use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major storage.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }
}

impl<T: Clone> Matrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NnError::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)].clone());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].clone())
            .collect()
    }
}

impl<T: Clone + Num> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = d.clone();
        }
        m
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        if x.len() != self.cols {
            return Err(NnError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, NnError> {
        if self.cols != other.rows {
            return Err(NnError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)].clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out[(i, j)].clone() + a.clone() * other[(k, j)].clone();
                    out[(i, j)] = v;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NnError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self, NnError> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, NnError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NnError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a.clone(), b.clone()))
                .collect(),
        })
    }

    /// True when every entry below the diagonal is zero.
    pub fn is_upper_triangular(&self) -> bool {
        (0..self.rows).all(|i| (0..i.min(self.cols)).all(|j| self[(i, j)].is_zero()))
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| ((i + 1)..self.cols).all(|j| self[(i, j)].is_zero()))
    }
}

impl<T: Clone + Num + Signed + PartialOrd> Matrix<T> {
    /// Spectral radius read off the diagonal of a triangular matrix.
    ///
    /// Exact in the scalar type (no iteration), so it stays exact for rationals.
    /// Returns `None` when the matrix is not square and triangular.
    pub fn triangular_spectral_radius(&self) -> Option<T> {
        if !self.is_square() || !(self.is_upper_triangular() || self.is_lower_triangular()) {
            return None;
        }
        self.diagonal()
            .into_iter()
            .map(|d| d.abs())
            .fold(Some(T::zero()), |acc, d| {
                acc.map(|a| if d > a { d } else { a })
            })
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// A (possibly complex) eigenvalue `re + i·im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue<T> {
    pub re: T,
    pub im: T,
}

impl<T: Scalar> Eigenvalue<T> {
    pub fn modulus(&self) -> T {
        self.re.hypot(self.im)
    }
}

/// Orthogonal (Householder) reduction to upper Hessenberg form.
fn hessenberg<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.rows();
    let mut a = m.clone();
    let two = T::of(2.0);
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<T> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        let alpha = super::scalar::norm(&v);
        if alpha == T::zero() {
            continue;
        }
        let alpha = if v[0] > T::zero() { -alpha } else { alpha };
        v[0] -= alpha;
        let vn = super::scalar::norm(&v);
        if vn == T::zero() {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vn;
        }
        // A <- (I - 2vv^T) A on rows k+1..n
        for j in 0..n {
            let mut s = T::zero();
            for i in 0..len {
                s += v[i] * a[(k + 1 + i, j)];
            }
            for i in 0..len {
                a[(k + 1 + i, j)] -= two * v[i] * s;
            }
        }
        // A <- A (I - 2vv^T) on columns k+1..n
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..len {
                s += a[(i, k + 1 + j)] * v[j];
            }
            for j in 0..len {
                a[(i, k + 1 + j)] -= two * s * v[j];
            }
        }
        for i in (k + 2)..n {
            a[(i, k)] = T::zero();
        }
    }
    a
}

/// All eigenvalues of a real square matrix.
///
/// Hessenberg reduction followed by the Francis implicit double-shift QR
/// iteration. A subdiagonal entry is deflated once it falls below
/// `tol · (|a_{l-1,l-1}| + |a_{l,l}|)` (never tighter than machine epsilon).
/// `max_iter` bounds the QR sweeps spent on any one eigenvalue.
pub fn eigenvalues<T: Scalar>(
    m: &Matrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<Vec<Eigenvalue<T>>, NnError> {
    if !m.is_square() {
        return Err(NnError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.all_finite() {
        return Err(NnError::NonFinite("matrix entry"));
    }
    if !(tol > T::zero()) {
        return Err(NnError::InvalidArgument("tol must be positive".into()));
    }
    let n = m.rows();
    let mut out = vec![
        Eigenvalue {
            re: T::zero(),
            im: T::zero()
        };
        n
    ];
    if n == 0 {
        return Ok(out);
    }
    let deflate = tol.max(T::epsilon());
    let mut a = hessenberg(m);

    let mut anorm = T::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }

    let half = T::of(0.5);
    let mut nn = n as isize - 1;
    let mut its = 0usize;
    let mut shift = T::zero();
    while nn >= 0 {
        let hi = nn as usize;
        // look for a single small subdiagonal element
        let mut l = hi;
        while l >= 1 {
            let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
            if s == T::zero() {
                s = anorm;
            }
            if a[(l, l - 1)].abs() <= deflate * s {
                a[(l, l - 1)] = T::zero();
                break;
            }
            l -= 1;
        }
        let x = a[(hi, hi)];
        if l == hi {
            out[hi] = Eigenvalue {
                re: x + shift,
                im: T::zero(),
            };
            nn -= 1;
            its = 0;
            continue;
        }
        let y = a[(hi - 1, hi - 1)];
        let w = a[(hi, hi - 1)] * a[(hi - 1, hi)];
        if l == hi - 1 {
            let p = half * (y - x);
            let q = p * p + w;
            let z = q.abs().sqrt();
            let xs = x + shift;
            if q >= T::zero() {
                let z = p + z.copysign(p);
                out[hi - 1] = Eigenvalue {
                    re: xs + z,
                    im: T::zero(),
                };
                out[hi] = Eigenvalue {
                    re: if z != T::zero() { xs - w / z } else { xs + z },
                    im: T::zero(),
                };
            } else {
                out[hi - 1] = Eigenvalue { re: xs + p, im: z };
                out[hi] = Eigenvalue { re: xs + p, im: -z };
            }
            nn -= 2;
            its = 0;
            continue;
        }
        if its >= max_iter {
            return Err(NnError::NoConvergence {
                what: "QR eigenvalue iteration",
                iterations: its,
            });
        }
        let (mut x, mut y, mut w) = (x, y, w);
        if its > 0 && its % 10 == 0 {
            // exceptional shift
            shift += x;
            for i in 0..=hi {
                a[(i, i)] -= x;
            }
            let s = a[(hi, hi - 1)].abs() + a[(hi - 1, hi - 2)].abs();
            x = T::of(0.75) * s;
            y = x;
            w = T::of(-0.4375) * s * s;
        }
        its += 1;

        // form the double shift and look for two consecutive small subdiagonals
        let mut m_idx = hi - 2;
        let (mut p, mut q, mut r);
        loop {
            let z = a[(m_idx, m_idx)];
            let rr = x - z;
            let ss = y - z;
            p = (rr * ss - w) / a[(m_idx + 1, m_idx)] + a[(m_idx, m_idx + 1)];
            q = a[(m_idx + 1, m_idx + 1)] - z - rr - ss;
            r = a[(m_idx + 2, m_idx + 1)];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m_idx == l {
                break;
            }
            let u = a[(m_idx, m_idx - 1)].abs() * (q.abs() + r.abs());
            let v = p.abs()
                * (a[(m_idx - 1, m_idx - 1)].abs() + z.abs() + a[(m_idx + 1, m_idx + 1)].abs());
            if u <= T::epsilon() * v {
                break;
            }
            m_idx -= 1;
        }
        for i in (m_idx + 2)..=hi {
            a[(i, i - 2)] = T::zero();
            if i != m_idx + 2 {
                a[(i, i - 3)] = T::zero();
            }
        }
        // double-shift QR sweep on rows/columns l..=hi
        let mut k = m_idx;
        while k < hi {
            let mut xk = T::zero();
            if k != m_idx {
                p = a[(k, k - 1)];
                q = a[(k + 1, k - 1)];
                r = if k != hi - 1 { a[(k + 2, k - 1)] } else { T::zero() };
                xk = p.abs() + q.abs() + r.abs();
                if xk != T::zero() {
                    p /= xk;
                    q /= xk;
                    r /= xk;
                }
            }
            let s = (p * p + q * q + r * r).sqrt().copysign(p);
            if s != T::zero() {
                if k == m_idx {
                    if l != m_idx {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * xk;
                }
                p += s;
                let xx = p / s;
                let yy = q / s;
                let zz = r / s;
                q /= p;
                r /= p;
                for j in k..n {
                    let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                    if k != hi - 1 {
                        pp += r * a[(k + 2, j)];
                        a[(k + 2, j)] -= pp * zz;
                    }
                    a[(k + 1, j)] -= pp * yy;
                    a[(k, j)] -= pp * xx;
                }
                let mmin = if hi < k + 3 { hi } else { k + 3 };
                for i in 0..=mmin {
                    let mut pp = xx * a[(i, k)] + yy * a[(i, k + 1)];
                    if k != hi - 1 {
                        pp += zz * a[(i, k + 2)];
                        a[(i, k + 2)] -= pp * r;
                    }
                    a[(i, k + 1)] -= pp * q;
                    a[(i, k)] -= pp;
                }
            }
            k += 1;
        }
    }
    Ok(out)
}

/// Largest eigenvalue modulus of `m`.
///
/// Non-convergence within `max_iter` sweeps is an error, never a silent value.
pub fn spectral_radius<T: Scalar>(m: &Matrix<T>, tol: T, max_iter: usize) -> Result<T, NnError> {
    let eig = eigenvalues(m, tol, max_iter)?;
    Ok(eig
        .iter()
        .map(Eigenvalue::modulus)
        .fold(T::zero(), T::max))
}

/// Cholesky factor `L` (lower triangular, `L Lᵀ = m`) of a symmetric positive
/// definite matrix.
pub fn cholesky<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, NnError> {
    if !m.is_square() {
        return Err(NnError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(NnError::NotPositiveDefinite);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, NnError> {
    let l = cholesky(m)?;
    let n = m.rows();
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        // solve L y = e_col, then L^T x = y
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_identity_and_diagonal() {
        let i3 = Matrix::<f64>::identity(3);
        assert_eq!(spectral_radius(&i3, 1e-9, 10_000).unwrap(), 1.0);
        let d = Matrix::from_diag(&[0.5, -0.2, 0.1]);
        assert_eq!(spectral_radius(&d, 1e-9, 10_000).unwrap(), 0.5);
    }

    #[test]
    fn rotation_has_complex_pair() {
        let (c, s) = (0.6f64.cos() * 0.9, 0.6f64.sin() * 0.9);
        let m = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let eig = eigenvalues(&m, 1e-12, 100).unwrap();
        assert!(eig.iter().all(|e| e.im.abs() > 0.1));
        assert!((spectral_radius(&m, 1e-12, 100).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let m = Matrix::from_rows(&[
            vec![6.0, -11.0, 6.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let mut re: Vec<f64> = eigenvalues(&m, 1e-14, 100)
            .unwrap()
            .iter()
            .map(|e| e.re)
            .collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn non_square_and_non_finite_rejected() {
        let m = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            spectral_radius(&m, 1e-9, 10),
            Err(NnError::NotSquare { .. })
        ));
        let m = Matrix::from_diag(&[f64::NAN, 1.0]);
        assert!(spectral_radius(&m, 1e-9, 10).is_err());
    }

    #[test]
    fn zero_iteration_budget_fails_explicitly() {
        let m = Matrix::from_rows(&[
            vec![0.3, 0.9, -0.4],
            vec![0.7, -0.2, 0.5],
            vec![-0.6, 0.1, 0.8],
        ])
        .unwrap();
        assert!(matches!(
            spectral_radius(&m, 1e-12, 0),
            Err(NnError::NoConvergence { .. })
        ));
    }

    #[test]
    fn spd_inverse_round_trips() {
        let m = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = spd_inverse(&m).unwrap();
        let prod = m.matmul(&inv).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-14);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(NnError::NotPositiveDefinite)));
    }

    #[test]
    fn triangular_radius_is_exact() {
        let m = Matrix::from_rows(&[vec![0.25f64, 3.0], vec![0.0, -0.5]]).unwrap();
        assert_eq!(m.triangular_spectral_radius(), Some(0.5));
        let full = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(full.triangular_spectral_radius(), None);
    }
}
