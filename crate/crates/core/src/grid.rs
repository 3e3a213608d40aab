//! Grids `M Z^n + g`, finite unions of them, covering radii, and the
//! unipotent / rotated-copy constructions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::lattice::{gram_schmidt_norms, lll};
use crate::linalg::{dot, norm2, Matrix};

/// `sqrt(3) / 2` as stored in the honeycomb preset.
pub const HONEYCOMB_HEIGHT: f64 = 0.8660254037844386;

/// The honeycomb (hexagonal) lattice basis, columns `(1, 0)` and `(1/2, sqrt 3 / 2)`.
pub fn honeycomb() -> Matrix {
    Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, HONEYCOMB_HEIGHT]])
        .expect("honeycomb basis is invertible")
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub matrix: Matrix,
    pub translation: Vec<f64>,
}

impl GridSpec {
    pub fn new(matrix: Matrix, translation: Vec<f64>) -> Result<Self> {
        if translation.len() != matrix.dim() {
            return Err(Error::invalid(format!(
                "translation has length {} but matrix is {}x{}",
                translation.len(),
                matrix.dim(),
                matrix.dim()
            )));
        }
        matrix.check_invertible()?;
        Ok(Self {
            matrix,
            translation,
        })
    }

    pub fn lattice(matrix: Matrix) -> Self {
        let n = matrix.dim();
        Self {
            matrix,
            translation: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// The grid point `M z + g`.
    pub fn point(&self, z: &[i64]) -> Vec<f64> {
        let zf: Vec<f64> = z.iter().map(|&c| c as f64).collect();
        self.matrix
            .apply(&zf)
            .iter()
            .zip(&self.translation)
            .map(|(a, b)| a + b)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    grids: Vec<GridSpec>,
}

impl Forest {
    pub fn new(grids: Vec<GridSpec>) -> Result<Self> {
        let Some(first) = grids.first() else {
            return Err(Error::invalid("a forest needs at least one grid"));
        };
        let n = first.dim();
        if grids.iter().any(|g| g.dim() != n) {
            return Err(Error::invalid("all grids of a forest must share one dimension"));
        }
        Ok(Self { grids })
    }

    pub fn grids(&self) -> &[GridSpec] {
        &self.grids
    }

    pub fn dim(&self) -> usize {
        self.grids[0].dim()
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn matrices(&self) -> Vec<Matrix> {
        self.grids.iter().map(|g| g.matrix.clone()).collect()
    }

    /// Largest covering radius among the grids, and whether every radius
    /// was computed exactly.
    pub fn max_covering_radius(&self) -> Result<CoveringRadius> {
        let mut out = CoveringRadius {
            value: 0.0,
            exact: true,
        };
        for g in &self.grids {
            let r = covering_radius(g)?;
            out.value = out.value.max(r.value);
            out.exact &= r.exact;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Grid-spec file format

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestFile {
    pub dimension: usize,
    pub grids: Vec<GridEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridEntry {
    /// Row-major entries (numbers or `"p/q"` strings) or a preset name.
    pub matrix: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<Vec<f64>>,
    /// Optional planar rotation angle applied on the left of the matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
}

fn preset_matrix(name: &str, n: usize) -> Result<Matrix> {
    match name {
        "honeycomb" if n == 2 => Ok(honeycomb()),
        "honeycomb" => Err(Error::invalid("the honeycomb preset is planar")),
        "identity" => Ok(Matrix::identity(n)),
        other => Err(Error::invalid(format!("unknown matrix preset '{other}'"))),
    }
}

enum Entry {
    Exact(Rational),
    Real(f64),
}

fn parse_entry(v: &Value) -> Result<Entry> {
    match v {
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                Ok(Entry::Exact(exact::from_i64(i)))
            } else {
                num.as_f64()
                    .map(Entry::Real)
                    .ok_or_else(|| Error::invalid("matrix entry out of range"))
            }
        }
        Value::String(s) => exact::parse_rational(s).map(Entry::Exact),
        _ => Err(Error::invalid("matrix entries must be numbers or \"p/q\" strings")),
    }
}

fn parse_matrix(v: &Value, n: usize) -> Result<Matrix> {
    if let Value::String(name) = v {
        return preset_matrix(name, n);
    }
    let rows = v
        .as_array()
        .ok_or_else(|| Error::invalid("matrix must be an array of rows or a preset name"))?;
    if rows.len() != n {
        return Err(Error::invalid(format!("matrix must have {n} rows")));
    }
    let mut entries = Vec::with_capacity(n * n);
    for row in rows {
        let row = row
            .as_array()
            .filter(|r| r.len() == n)
            .ok_or_else(|| Error::invalid(format!("each matrix row must have {n} entries")))?;
        for e in row {
            entries.push(parse_entry(e)?);
        }
    }
    if entries.iter().all(|e| matches!(e, Entry::Exact(_))) {
        let exact_rows: Vec<Vec<Rational>> = entries
            .chunks(n)
            .map(|c| {
                c.iter()
                    .map(|e| match e {
                        Entry::Exact(r) => r.clone(),
                        Entry::Real(_) => unreachable!(),
                    })
                    .collect()
            })
            .collect();
        return Matrix::from_exact_rows(&exact_rows);
    }
    let real_rows: Vec<Vec<f64>> = entries
        .chunks(n)
        .map(|c| {
            c.iter()
                .map(|e| match e {
                    Entry::Exact(r) => exact::to_f64(r),
                    Entry::Real(x) => *x,
                })
                .collect()
        })
        .collect();
    Matrix::from_rows(&real_rows)
}

impl ForestFile {
    pub fn to_forest(&self) -> Result<Forest> {
        let n = self.dimension;
        if n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let grids = self
            .grids
            .iter()
            .map(|entry| {
                let mut m = parse_matrix(&entry.matrix, n)?;
                if let Some(theta) = entry.rotation {
                    if n != 2 {
                        return Err(Error::invalid("rotation angles are only defined in the plane"));
                    }
                    m = Matrix::rotation2(theta).mul(&m);
                    m.check_invertible()?;
                }
                let t = entry.translation.clone().unwrap_or_else(|| vec![0.0; n]);
                GridSpec::new(m, t)
            })
            .collect::<Result<Vec<_>>>()?;
        Forest::new(grids)
    }

    pub fn from_forest(forest: &Forest) -> Self {
        let grids = forest
            .grids()
            .iter()
            .map(|g| GridEntry {
                matrix: matrix_to_value(&g.matrix),
                translation: Some(g.translation.clone()),
                rotation: None,
            })
            .collect();
        Self {
            dimension: forest.dim(),
            grids,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn matrix_to_value(m: &Matrix) -> Value {
    let n = m.dim();
    let rows: Vec<Value> = match m.exact() {
        Some(e) => (0..n)
            .map(|i| {
                Value::Array(
                    (0..n)
                        .map(|j| Value::String(e[i * n + j].to_string()))
                        .collect(),
                )
            })
            .collect(),
        None => m
            .rows()
            .into_iter()
            .map(|r| Value::Array(r.into_iter().map(Value::from).collect()))
            .collect(),
    };
    Value::Array(rows)
}

// ---------------------------------------------------------------------------
// Reduced bases and covering radii

/// An LLL-reduced basis `B' = M U` of the lattice `M Z^n`.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub basis: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// `unimodular[i][j]`: original coordinates are `z = U z'`.
    pub unimodular: Vec<Vec<i64>>,
}

impl ReducedBasis {
    pub fn new(m: &Matrix) -> Result<Self> {
        m.check_invertible()?;
        let n = m.dim();
        let cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
        let red = lll(&cols, 0.99);
        let basis = DMatrix::from_fn(n, n, |i, j| red.vectors[j][i]);
        let inverse = basis.clone().try_inverse().ok_or(Error::SingularMatrix {
            det: basis.determinant(),
            threshold: m.tol_det(),
        })?;
        let unimodular = (0..n)
            .map(|i| (0..n).map(|j| red.transform[j][i]).collect())
            .collect();
        Ok(Self {
            basis,
            inverse,
            unimodular,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn to_original(&self, reduced: &[i64]) -> Vec<i64> {
        self.unimodular
            .iter()
            .map(|row| row.iter().zip(reduced).map(|(u, z)| u * z).sum())
            .collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|j| self.basis.column(j).iter().copied().collect())
            .collect()
    }

    /// Euclidean norm of row `i` of the inverse basis.
    pub fn inverse_row_norm(&self, i: usize) -> f64 {
        self.inverse.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringRadius {
    pub value: f64,
    /// `false` when `value` is only an upper bound.
    pub exact: bool,
}

pub fn covering_radius(grid: &GridSpec) -> Result<CoveringRadius> {
    lattice_covering_radius(&grid.matrix)
}

/// Covering radius of `M Z^n`: exact through the Voronoi cell for
/// `n <= 3`, otherwise the nearest-plane bound `1/2 sqrt(sum |b*_i|^2)`.
pub fn lattice_covering_radius(m: &Matrix) -> Result<CoveringRadius> {
    let reduced = ReducedBasis::new(m)?;
    let n = reduced.dim();
    let cols = reduced.columns();
    let upper = 0.5 * gram_schmidt_norms(&cols).iter().sum::<f64>().sqrt();
    if n == 1 {
        return Ok(CoveringRadius {
            value: 0.5 * norm2(&cols[0]),
            exact: true,
        });
    }
    if n > 3 {
        return Ok(CoveringRadius {
            value: upper,
            exact: false,
        });
    }
    // Voronoi-relevant vectors have length at most twice the covering radius.
    let reach = 2.0 * upper * (1.0 + 1e-9);
    let normals = lattice_vectors_within(&reduced, reach);
    let scale = normals.iter().map(|v| dot(v, v)).fold(0.0_f64, f64::max);
    let feasible = |x: &[f64]| {
        normals
            .iter()
            .all(|v| dot(v, x) <= 0.5 * dot(v, v) + 1e-9 * scale)
    };
    let mut best = 0.0_f64;
    let mut visit = |idx: &[usize]| {
        let a = DMatrix::from_fn(n, n, |i, j| normals[idx[i]][j]);
        if a.determinant().abs() < 1e-12 * scale.powi(n as i32).sqrt() {
            return;
        }
        let rhs = nalgebra::DVector::from_fn(n, |i, _| 0.5 * dot(&normals[idx[i]], &normals[idx[i]]));
        if let Some(x) = a.lu().solve(&rhs) {
            let x: Vec<f64> = x.iter().copied().collect();
            if feasible(&x) {
                best = best.max(norm2(&x));
            }
        }
    };
    let k = normals.len();
    if n == 2 {
        for i in 0..k {
            for j in (i + 1)..k {
                visit(&[i, j]);
            }
        }
    } else {
        for i in 0..k {
            for j in (i + 1)..k {
                for l in (j + 1)..k {
                    visit(&[i, j, l]);
                }
            }
        }
    }
    Ok(CoveringRadius {
        value: best,
        exact: true,
    })
}

/// All nonzero lattice vectors of Euclidean length at most `radius`.
fn lattice_vectors_within(reduced: &ReducedBasis, radius: f64) -> Vec<Vec<f64>> {
    let n = reduced.dim();
    let bounds: Vec<i64> = (0..n)
        .map(|i| (reduced.inverse_row_norm(i) * radius).floor() as i64)
        .collect();
    let mut out = Vec::new();
    let mut z = vec![0i64; n];
    for_each_in_box(&bounds.iter().map(|b| (-b, *b)).collect::<Vec<_>>(), &mut z, 0, &mut |z| {
        if z.iter().all(|c| *c == 0) {
            return;
        }
        let v: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| reduced.basis[(i, j)] * z[j] as f64).sum())
            .collect();
        if norm2(&v) <= radius {
            out.push(v);
        }
    });
    out
}

/// Calls `f` on every integer vector in the box `ranges` (inclusive).
pub(crate) fn for_each_in_box(
    ranges: &[(i64, i64)],
    z: &mut Vec<i64>,
    depth: usize,
    f: &mut dyn FnMut(&[i64]),
) {
    if depth == ranges.len() {
        f(z);
        return;
    }
    let (lo, hi) = ranges[depth];
    for c in lo..=hi {
        z[depth] = c;
        for_each_in_box(ranges, z, depth + 1, f);
    }
}

// ---------------------------------------------------------------------------
// Constructions

/// `T(x)`: the identity of size `d + 1` with `x` in the first `d` rows of
/// the last column.
pub fn build_unipotent(x: &[f64]) -> Matrix {
    let n = x.len() + 1;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for (i, xi) in x.iter().enumerate() {
        rows[i][n - 1] = *xi;
    }
    Matrix::from_rows(&rows).expect("unipotent matrices are invertible")
}

/// Rotations `Y_1, ..., Y_n` of `R^n` with `Y_i e_n = e_i` and `Y_n = I`.
/// For `i < n`, `Y_i` is the quarter turn in the `(e_i, e_n)` plane.
pub fn rotated_copy_frames(n: usize) -> Vec<Matrix> {
    (0..n)
        .map(|i| {
            if i == n - 1 {
                return Matrix::identity(n);
            }
            let rows: Vec<Vec<Rational>> = (0..n)
                .map(|r| {
                    (0..n)
                        .map(|c| {
                            let v = if r == i && c == n - 1 {
                                1
                            } else if r == n - 1 && c == i {
                                -1
                            } else if r == c && r != i && r != n - 1 {
                                1
                            } else {
                                0
                            };
                            exact::from_i64(v)
                        })
                        .collect()
                })
                .collect();
            Matrix::from_exact_rows(&rows).expect("frame rotations are invertible")
        })
        .collect()
}

/// The union of the rotated copies `Y_i F`, grids ordered by frame then by
/// original grid.
pub fn build_rotated_union(forest: &Forest) -> Forest {
    let frames = rotated_copy_frames(forest.dim());
    let grids = frames
        .iter()
        .flat_map(|y| {
            forest.grids().iter().map(move |g| GridSpec {
                matrix: y.mul(&g.matrix),
                translation: y.apply(&g.translation),
            })
        })
        .collect();
    Forest::new(grids).expect("rotated union of a valid forest is valid")
}
