//! Real matrices, the Iwasawa decomposition, and projective geometry of
//! the sphere.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::rng::seeded_rng;

/// An invertible real `n x n` matrix, optionally carrying exact rational
/// entries (row-major) when it was built from rational input.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    values: DMatrix<f64>,
    exact: Option<Vec<Rational>>,
}

impl Matrix {
    /// Builds from rows and checks invertibility.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Self::from_rows_unchecked(rows)?;
        m.check_invertible()?;
        Ok(m)
    }

    fn from_rows_unchecked(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix must be square and nonempty"));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        let values = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self {
            values,
            exact: None,
        })
    }

    /// Builds from exact rational rows; floating entries are their evaluation.
    pub fn from_exact_rows(rows: &[Vec<Rational>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix must be square and nonempty"));
        }
        let flat: Vec<Rational> = rows.iter().flatten().cloned().collect();
        let values = DMatrix::from_fn(n, n, |i, j| exact::to_f64(&flat[i * n + j]));
        let m = Self {
            values,
            exact: Some(flat),
        };
        if exact::inverse(n, m.exact.as_ref().unwrap()).is_none() {
            return Err(Error::SingularMatrix {
                det: 0.0,
                threshold: m.tol_det(),
            });
        }
        Ok(m)
    }

    pub fn from_dmatrix(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::invalid("matrix must be square and nonempty"));
        }
        let m = Self {
            values,
            exact: None,
        };
        m.check_invertible()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let exact = (0..n * n)
            .map(|k| exact::from_i64(i64::from(k / n == k % n)))
            .collect();
        Self {
            values: DMatrix::identity(n, n),
            exact: Some(exact),
        }
    }

    /// Planar rotation by `theta` (counter-clockwise).
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            values: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            exact: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.values.row(i).iter().copied().collect())
            .collect()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Singularity threshold `1e-12 * (max |entry|)^n`.
    pub fn tol_det(&self) -> f64 {
        1e-12 * self.max_abs_entry().powi(self.dim() as i32)
    }

    pub fn det(&self) -> f64 {
        self.values.determinant()
    }

    pub fn check_invertible(&self) -> Result<()> {
        if let Some(e) = &self.exact {
            if exact::inverse(self.dim(), e).is_none() {
                return Err(Error::SingularMatrix {
                    det: 0.0,
                    threshold: self.tol_det(),
                });
            }
            return Ok(());
        }
        let det = self.det();
        let threshold = self.tol_det();
        if !(det.abs() > threshold) {
            return Err(Error::SingularMatrix { det, threshold });
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.check_invertible()?;
        let values = self
            .values
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMatrix {
                det: self.det(),
                threshold: self.tol_det(),
            })?;
        let exact = self
            .exact
            .as_ref()
            .and_then(|e| exact::inverse(self.dim(), e));
        Ok(Matrix { values, exact })
    }

    pub fn transpose(&self) -> Matrix {
        Matrix {
            values: self.values.transpose(),
            exact: self.exact.as_ref().map(|e| exact::transpose(self.dim(), e)),
        }
    }

    /// Matrix product; exact entries survive when both factors have them.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        let exact = match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Some(exact::mat_mul(self.dim(), a, b)),
            _ => None,
        };
        Matrix {
            values: &self.values * &other.values,
            exact,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.values[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn apply_exact(&self, v: &[Rational]) -> Option<Vec<Rational>> {
        self.exact
            .as_ref()
            .map(|e| exact::mat_vec(self.dim(), e, v))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Largest entrywise difference to `other`.
    pub fn max_diff(&self, other: &Matrix) -> f64 {
        (&self.values - &other.values)
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.values.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A line through the origin of `R^{d+1}`, stored as a unit vector whose
/// first nonzero coordinate is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint(Vec<f64>);

impl ProjectivePoint {
    pub fn new(v: &[f64]) -> Result<Self> {
        let n = norm2(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("projective point needs a nonzero finite vector"));
        }
        let mut u: Vec<f64> = v.iter().map(|x| x / n).collect();
        if let Some(first) = u.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Self(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &ProjectivePoint) -> f64 {
        projective_distance(self, other)
    }
}

/// Sine of the acute angle between two lines.
///
/// Evaluated through the norm of the wedge product, which agrees with
/// `sqrt(1 - (u.v)^2)` for unit vectors but keeps full relative precision
/// for nearly parallel lines.
pub fn projective_distance(u: &ProjectivePoint, v: &ProjectivePoint) -> f64 {
    psi(&u.0, &v.0)
}

/// Projective distance between the lines spanned by arbitrary nonzero vectors.
pub fn psi(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm2(u);
    let nv = norm2(v);
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    let mut wedge = 0.0;
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let w = u[i] * v[j] - u[j] * v[i];
            wedge += w * w;
        }
    }
    (wedge.sqrt() / (nu * nv)).clamp(0.0, 1.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm2(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `||x|| = min_{q in Z^n} ||x - q||_inf`.
pub fn sup_dist_to_integers(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max((v - v.round()).abs()))
}

/// Distance of a real number to the nearest integer.
pub fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// `M = R D T` with `R` special orthogonal, `D` diagonal, `T` unit upper
/// triangular.
#[derive(Clone, Debug)]
pub struct IwasawaParts {
    pub rotation: Matrix,
    pub diagonal: Vec<f64>,
    pub unipotent: Matrix,
}

impl IwasawaParts {
    pub fn recompose(&self) -> Matrix {
        let n = self.diagonal.len();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        let values = &self.rotation.values * d * &self.unipotent.values;
        debug_assert_eq!(values.nrows(), n);
        Matrix {
            values,
            exact: None,
        }
    }
}

/// Orthonormalizes the columns of `a` (Gram–Schmidt with one
/// reorthogonalization pass). Returns `(Q, U)` with `a = Q U`, `U` upper
/// triangular with positive diagonal.
fn gram_schmidt(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut v: Vec<f64> = a.column(j).iter().copied().collect();
        for _pass in 0..2 {
            for i in 0..j {
                let r: f64 = (0..n).map(|t| q[(t, i)] * v[t]).sum();
                u[(i, j)] += r;
                for t in 0..n {
                    v[t] -= r * q[(t, i)];
                }
            }
        }
        let r = norm2(&v);
        u[(j, j)] = r;
        for t in 0..n {
            q[(t, j)] = v[t] / r;
        }
    }
    (q, u)
}

/// Iwasawa decomposition by column orthonormalization.
///
/// When `det M < 0` no factorization with `det R = +1` and a positive
/// diagonal exists; the sign is then carried by the last entry of `D`.
pub fn iwasawa_decompose(m: &Matrix) -> Result<IwasawaParts> {
    m.check_invertible()?;
    let n = m.dim();
    let (mut q, mut u) = gram_schmidt(&m.values);
    if q.determinant() < 0.0 {
        for t in 0..n {
            q[(t, n - 1)] = -q[(t, n - 1)];
        }
        for j in 0..n {
            u[(n - 1, j)] = -u[(n - 1, j)];
        }
    }
    let diagonal: Vec<f64> = (0..n).map(|i| u[(i, i)]).collect();
    let mut t = u.clone();
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] = if j < i { 0.0 } else { u[(i, j)] / diagonal[i] };
        }
        t[(i, i)] = 1.0;
    }
    Ok(IwasawaParts {
        rotation: Matrix {
            values: q,
            exact: None,
        },
        diagonal,
        unipotent: Matrix {
            values: t,
            exact: None,
        },
    })
}

/// Upper bound `sigma_max / sigma_min` on the projective Lipschitz constant.
pub fn projective_lipschitz_bound(m: &Matrix) -> Result<f64> {
    m.check_invertible()?;
    let s = m.singular_values();
    Ok(s[0] / s[s.len() - 1])
}

/// Sampled lower estimate of the projective Lipschitz constant over
/// `pairs` random pairs: half independent, half nearby.
pub fn projective_lipschitz_empirical(m: &Matrix, pairs: usize, seed: u64) -> Result<f64> {
    m.check_invertible()?;
    let n = m.dim();
    let mut rng = seeded_rng(seed);
    let mut best = 0.0_f64;
    for k in 0..pairs {
        let u = random_unit(&mut rng, n);
        let v = if k % 2 == 0 {
            random_unit(&mut rng, n)
        } else {
            let g = random_unit(&mut rng, n);
            let scale = 10f64.powf(-rng.random_range(1.0..6.0));
            u.iter().zip(&g).map(|(a, b)| a + scale * b).collect()
        };
        let base = psi(&u, &v);
        if base < 1e-12 {
            continue;
        }
        let ratio = psi(&m.apply(&u), &m.apply(&v)) / base;
        best = best.max(ratio);
    }
    Ok(best)
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm2(&v);
        if norm > 1e-12 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Haar-distributed rotation of `R^n` drawn from `rng`.
pub fn sample_rotation_with<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    loop {
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        if g.determinant().abs() < 1e-10 {
            continue;
        }
        let (mut q, _) = gram_schmidt(&g);
        if q.determinant() < 0.0 {
            for t in 0..n {
                q[(t, n - 1)] = -q[(t, n - 1)];
            }
        }
        return Matrix {
            values: q,
            exact: None,
        };
    }
}

/// Haar-distributed element of `SO(d+1)`, deterministic in `seed`.
pub fn sample_rotation(d: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    sample_rotation_with(&mut rng, d + 1)
}

/// Maximum of `|R R^T - I|` entrywise.
pub fn orthogonality_defect(r: &Matrix) -> f64 {
    let n = r.dim();
    let p = &r.values * r.values.transpose();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - target).abs());
        }
    }
    worst
}
