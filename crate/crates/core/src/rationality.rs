//! Integer relations and the rank criterion deciding when a finite union of
//! grids fails to be a dense forest.

use nalgebra::DMatrix;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::lattice::lll;
use crate::linalg::{dot, norm2, Matrix};
use crate::registry::{Named, Registry};

pub const DEFAULT_HEIGHT: u32 = 50;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_SEARCH_BUDGET: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationWitness {
    pub q: Vec<i64>,
    pub residual: f64,
}

impl RelationWitness {
    pub fn height(&self) -> i64 {
        self.q.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

fn canonical(q: &[i64]) -> bool {
    q.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

fn key(q: &[i64]) -> (i64, Vec<i64>) {
    (q.iter().map(|c| c.abs()).max().unwrap_or(0), q.to_vec())
}

fn keep_best(best: &mut Option<RelationWitness>, cand: RelationWitness) {
    if best.as_ref().is_none_or(|b| key(&cand.q) < key(&b.q)) {
        *best = Some(cand);
    }
}

/// A strategy for finding `q` with `|q| <= h` and `|q . v| < tol |v|`.
pub trait RelationSearch: Named + Send + Sync {
    fn find(&self, v: &[f64], height: u32, tol: f64) -> Option<RelationWitness>;
}

/// Scans every coefficient vector but the one solved for.
pub struct Exhaustive;

impl Named for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }
}

impl RelationSearch for Exhaustive {
    fn find(&self, v: &[f64], height: u32, tol: f64) -> Option<RelationWitness> {
        exhaustive_relation(v, height, tol)
    }
}

/// Lattice reduction on `(e_i, K v_i)` rows, falling back to the exhaustive
/// scan when that is affordable.
pub struct LllRelation {
    pub fallback_limit: f64,
}

impl Named for LllRelation {
    fn name(&self) -> &'static str {
        "lll"
    }
}

impl RelationSearch for LllRelation {
    fn find(&self, v: &[f64], height: u32, tol: f64) -> Option<RelationWitness> {
        let n = v.len();
        let vn = norm2(v);
        if vn == 0.0 {
            return None;
        }
        let weight = (1.0 / tol).min(1e12);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n + 1];
                r[i] = 1.0;
                r[n] = weight * v[i] / vn;
                r
            })
            .collect();
        let reduced = lll(&rows, 0.99);
        let mut best = None;
        for t in &reduced.transform {
            let mut q = t.clone();
            if !canonical(&q) {
                q.iter_mut().for_each(|c| *c = -*c);
            }
            if let Some(w) = verify_relation(v, &q, height, tol) {
                keep_best(&mut best, w);
            }
        }
        if best.is_none() && (2.0 * height as f64 + 1.0).powi(n as i32 - 1) <= self.fallback_limit {
            return exhaustive_relation(v, height, tol);
        }
        best
    }
}

pub fn relation_registry() -> Registry<dyn RelationSearch> {
    let mut reg: Registry<dyn RelationSearch> = Registry::new();
    reg.register(Box::new(Exhaustive));
    reg.register(Box::new(LllRelation {
        fallback_limit: 1e7,
    }));
    reg
}

/// Re-evaluates a candidate relation from scratch.
pub fn verify_relation(v: &[f64], q: &[i64], height: u32, tol: f64) -> Option<RelationWitness> {
    if q.iter().all(|c| *c == 0) || q.iter().any(|c| c.unsigned_abs() > u64::from(height)) {
        return None;
    }
    let qf: Vec<f64> = q.iter().map(|&c| c as f64).collect();
    let residual = dot(&qf, v).abs();
    (residual < tol * norm2(v)).then(|| RelationWitness {
        q: q.to_vec(),
        residual,
    })
}

fn exhaustive_relation(v: &[f64], height: u32, tol: f64) -> Option<RelationWitness> {
    let n = v.len();
    if n == 0 || norm2(v) == 0.0 {
        return None;
    }
    let h = i64::from(height);
    let pivot = (0..n)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap();
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|i| if i == pivot { (0, 0) } else { (-h, h) })
        .collect();
    let mut best = None;
    let mut z = vec![0i64; n];
    crate::grid::for_each_in_box(&ranges, &mut z, 0, &mut |z| {
        let partial: f64 = (0..n).filter(|&i| i != pivot).map(|i| z[i] as f64 * v[i]).sum();
        let solved = (-partial / v[pivot]).round();
        if solved.abs() > h as f64 {
            return;
        }
        let mut q = z.to_vec();
        q[pivot] = solved as i64;
        if !canonical(&q) {
            return;
        }
        if let Some(w) = verify_relation(v, &q, height, tol) {
            keep_best(&mut best, w);
        }
    });
    best
}

/// Exhaustive search for `n <= 3`, lattice reduction above.
pub fn integer_relation(v: &[f64], height: u32, tol: f64) -> Option<RelationWitness> {
    if v.len() <= 3 {
        Exhaustive.find(v, height, tol)
    } else {
        LllRelation {
            fallback_limit: 1e7,
        }
        .find(v, height, tol)
    }
}

/// Exact relation search over rationals: residual is exactly zero.
pub fn integer_relation_exact(v: &[Rational], height: u32) -> Option<RelationWitness> {
    let n = v.len();
    let pivot = (0..n).max_by(|&a, &b| v[a].abs().cmp(&v[b].abs()))?;
    if v[pivot].is_zero() {
        return None;
    }
    let h = i64::from(height);
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|i| if i == pivot { (0, 0) } else { (-h, h) })
        .collect();
    let mut best = None;
    let mut z = vec![0i64; n];
    // Clearing denominators lets the scan run in machine integers.
    let lcm = v.iter().fold(num_bigint::BigInt::from(1), |acc, x| acc.lcm(x.denom()));
    let ints: Option<Vec<i128>> = v
        .iter()
        .map(|x| (x.numer() * (&lcm / x.denom())).to_i128())
        .collect();
    if let Some(a) = ints.filter(|a| a.iter().all(|x| x.unsigned_abs() < 1u128 << 80)) {
        crate::grid::for_each_in_box(&ranges, &mut z, 0, &mut |z| {
            let partial: i128 = (0..n).map(|i| i128::from(z[i]) * a[i]).sum();
            if partial % a[pivot] != 0 {
                return;
            }
            let s = -partial / a[pivot];
            if s.abs() > i128::from(h) {
                return;
            }
            let mut q = z.to_vec();
            q[pivot] = s as i64;
            if q.iter().all(|c| *c == 0) || !canonical(&q) {
                return;
            }
            keep_best(&mut best, RelationWitness { q, residual: 0.0 });
        });
        return best;
    }
    crate::grid::for_each_in_box(&ranges, &mut z, 0, &mut |z| {
        let mut partial = Rational::zero();
        for i in (0..n).filter(|&i| i != pivot) {
            if z[i] != 0 {
                partial += &v[i] * exact::from_i64(z[i]);
            }
        }
        let solved = -partial / &v[pivot];
        if !solved.is_integer() {
            return;
        }
        let Some(s) = solved.to_integer().to_i64() else {
            return;
        };
        if s.abs() > h {
            return;
        }
        let mut q = z.to_vec();
        q[pivot] = s;
        if q.iter().all(|c| *c == 0) || !canonical(&q) {
            return;
        }
        keep_best(
            &mut best,
            RelationWitness {
                q,
                residual: 0.0,
            },
        );
    });
    best
}

// ---------------------------------------------------------------------------
// Dense-forest criterion

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestWitness {
    /// `p_i` for each grid.
    pub p: Vec<Vec<i64>>,
    /// Unit vector orthogonal to every `M_i^{-T} p_i`.
    pub b: Vec<f64>,
    /// `v_i = M_i^{-1} b`, so that `M_1 v_1 = ... = M_k v_k = b`.
    pub v: Vec<Vec<f64>>,
    /// Smallest singular value of the row-normalised stack.
    pub residual: f64,
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestStatus {
    NotDenseForest,
    NoObstructionUpTo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestVerdict {
    pub status: ForestStatus,
    pub witness: Option<ForestWitness>,
    pub height: u32,
    pub tolerance: f64,
}

impl ForestVerdict {
    pub fn is_not_dense(&self) -> bool {
        self.status == ForestStatus::NotDenseForest
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub height: u32,
    pub tol: f64,
    pub budget: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            height: DEFAULT_HEIGHT,
            tol: DEFAULT_TOLERANCE,
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Nonzero primitive vectors with first nonzero entry positive, ordered by
/// height and then lexicographically.
pub fn primitive_vectors(n: usize, height: u32) -> Vec<Vec<i64>> {
    let h = i64::from(height);
    let mut out = Vec::new();
    let mut z = vec![0i64; n];
    crate::grid::for_each_in_box(&vec![(-h, h); n], &mut z, 0, &mut |z| {
        if canonical(z) && z.iter().fold(0i64, |g, &c| num_integer::gcd(g, c)) == 1 {
            out.push(z.to_vec());
        }
    });
    out.sort_by_key(|q| key(q));
    out
}

fn search_size(n: usize, k: usize, height: u32) -> f64 {
    let side = 2.0 * height as f64 + 1.0;
    let prims = (side.powi(n as i32) - 1.0) / 2.0;
    let free = k.min(n - 1);
    let determined = k.saturating_sub(n - 1);
    prims.powi(free as i32) * (determined as f64 * side.powi(n as i32 - 1)).max(1.0)
}

/// Smallest singular value of the stack of `rows`, each scaled to unit length.
pub fn stacked_sigma_min(rows: &[Vec<f64>]) -> f64 {
    let n = rows[0].len();
    if rows.len() < n {
        return 0.0;
    }
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j] / norm2(&rows[i]));
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Unit vector orthogonal to `rows`, chosen as the normalised projection of
/// the standard basis vector that survives best. Sign is canonical.
fn complement_direction(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let len = norm2(&v);
        if len > 1e-10 * norm2(r) {
            basis.push(v.iter().map(|x| x / len).collect());
        }
    }
    let mut best = vec![0.0; n];
    let mut best_len = -1.0;
    for j in 0..n {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let len = norm2(&v);
        if len > best_len + 1e-12 {
            best_len = len;
            best = v.iter().map(|x| x / len).collect();
        }
    }
    canonical_sign(best)
}

fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn rank_float(rows: &[Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let n = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j] / norm2(&rows[i]));
    m.singular_values().iter().filter(|s| **s > 1e-9).count()
}

struct Setup {
    n: usize,
    inv: Vec<Matrix>,
    inv_t: Vec<Matrix>,
    exact: bool,
}

fn setup(ms: &[Matrix]) -> Result<Setup> {
    let Some(first) = ms.first() else {
        return Err(Error::invalid("at least one matrix is required"));
    };
    let n = first.dim();
    if ms.iter().any(|m| m.dim() != n) {
        return Err(Error::invalid("all matrices must share one dimension"));
    }
    let inv = ms.iter().map(|m| m.inverse()).collect::<Result<Vec<_>>>()?;
    let inv_t = inv.iter().map(|m| m.transpose()).collect();
    let exact = inv.iter().all(|m| m.exact().is_some());
    Ok(Setup {
        n,
        inv,
        inv_t,
        exact,
    })
}

fn finish_witness(s: &Setup, p: Vec<Vec<i64>>, b: Vec<f64>, exact: bool) -> ForestWitness {
    let rows: Vec<Vec<f64>> = p
        .iter()
        .zip(&s.inv_t)
        .map(|(pi, mt)| mt.apply(&pi.iter().map(|&c| c as f64).collect::<Vec<_>>()))
        .collect();
    // With fewer than n rows the stack is trivially deficient, so measure
    // orthogonality to b instead.
    let residual = if rows.len() < s.n {
        rows.iter()
            .map(|r| dot(r, &b).abs() / norm2(r))
            .fold(0.0, f64::max)
    } else {
        stacked_sigma_min(&rows)
    };
    ForestWitness {
        v: s.inv.iter().map(|m| m.apply(&b)).collect(),
        residual,
        p,
        b,
        exact,
    }
}

/// Searches `p_1, ..., p_k` of height at most `H` such that the vectors
/// `M_i^{-T} p_i` share an orthogonal unit vector `b`.
pub fn dense_forest_check(ms: &[Matrix], limits: SearchLimits) -> Result<ForestVerdict> {
    let s = setup(ms)?;
    let (n, k) = (s.n, ms.len());
    if limits.height == 0 || !(limits.tol > 0.0) {
        return Err(Error::invalid("height must be >= 1 and tolerance positive"));
    }
    if k < n {
        let mut e1 = vec![0i64; n];
        e1[0] = 1;
        let p = vec![e1; k];
        let (b, exact) = if s.exact {
            let rows: Vec<Vec<Rational>> = s
                .inv_t
                .iter()
                .map(|m| m.apply_exact(&unit_exact(n, 0)).unwrap())
                .collect();
            let b = exact::orthogonal_complement_vector(&rows, n)
                .expect("fewer than n rows always have a complement");
            (unit_float(&b), true)
        } else {
            let rows: Vec<Vec<f64>> = s.inv_t.iter().map(|m| m.column(0)).collect();
            (complement_direction(&rows, n), false)
        };
        return Ok(ForestVerdict {
            status: ForestStatus::NotDenseForest,
            witness: Some(finish_witness(&s, p, b, exact)),
            height: limits.height,
            tolerance: limits.tol,
        });
    }

    let mut height = limits.height;
    let over_budget = search_size(n, k, height) > limits.budget;
    if over_budget {
        while height > 1 && search_size(n, k, height) > limits.budget {
            height -= 1;
        }
        if search_size(n, k, height) > limits.budget {
            return Err(Error::SearchBudgetExceeded {
                size: search_size(n, k, limits.height),
                budget: limits.budget,
            });
        }
    }
    let prims = primitive_vectors(n, height);
    let found = if s.exact {
        search_exact(&s, &prims, height)
    } else {
        search_float(&s, &prims, height, limits.tol)
    };
    match found {
        Some(w) => Ok(ForestVerdict {
            status: ForestStatus::NotDenseForest,
            witness: Some(w),
            height: limits.height,
            tolerance: limits.tol,
        }),
        None if over_budget => Err(Error::SearchBudgetExceeded {
            size: search_size(n, k, limits.height),
            budget: limits.budget,
        }),
        None => Ok(ForestVerdict {
            status: ForestStatus::NoObstructionUpTo,
            witness: None,
            height: limits.height,
            tolerance: limits.tol,
        }),
    }
}

fn unit_exact(n: usize, i: usize) -> Vec<Rational> {
    (0..n).map(|j| exact::from_i64(i64::from(i == j))).collect()
}

fn unit_float(b: &[Rational]) -> Vec<f64> {
    let f: Vec<f64> = b.iter().map(exact::to_f64).collect();
    let len = norm2(&f);
    f.iter().map(|x| x / len).collect()
}

fn search_float(s: &Setup, prims: &[Vec<i64>], height: u32, tol: f64) -> Option<ForestWitness> {
    let k = s.inv.len();
    let rel_tol = tol / (k as f64).sqrt();
    prims.par_iter().find_map_first(|p0| {
        let mut chosen = vec![p0.clone()];
        dfs_float(s, prims, height, rel_tol, tol, &mut chosen)
    })
}

fn dfs_float(
    s: &Setup,
    prims: &[Vec<i64>],
    height: u32,
    rel_tol: f64,
    tol: f64,
    chosen: &mut Vec<Vec<i64>>,
) -> Option<ForestWitness> {
    let (n, k) = (s.n, s.inv.len());
    let rows: Vec<Vec<f64>> = chosen
        .iter()
        .enumerate()
        .map(|(i, p)| s.inv_t[i].apply(&p.iter().map(|&c| c as f64).collect::<Vec<_>>()))
        .collect();
    let rank = rank_float(&rows);
    if rank >= n {
        return None;
    }
    if rank == n - 1 || chosen.len() == k {
        let b = complement_direction(&rows, n);
        let mut p = chosen.clone();
        for i in chosen.len()..k {
            let v = s.inv[i].apply(&b);
            p.push(integer_relation(&v, height, rel_tol)?.q);
        }
        let w = finish_witness(s, p, b, false);
        return (w.residual < tol).then_some(w);
    }
    for cand in prims {
        chosen.push(cand.clone());
        let out = dfs_float(s, prims, height, rel_tol, tol, chosen);
        chosen.pop();
        if out.is_some() {
            return out;
        }
    }
    None
}

fn search_exact(s: &Setup, prims: &[Vec<i64>], height: u32) -> Option<ForestWitness> {
    prims.par_iter().find_map_first(|p0| {
        let mut chosen = vec![p0.clone()];
        dfs_exact(s, prims, height, &mut chosen)
    })
}

fn dfs_exact(
    s: &Setup,
    prims: &[Vec<i64>],
    height: u32,
    chosen: &mut Vec<Vec<i64>>,
) -> Option<ForestWitness> {
    let (n, k) = (s.n, s.inv.len());
    let rows: Vec<Vec<Rational>> = chosen
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pe: Vec<Rational> = p.iter().map(|&c| exact::from_i64(c)).collect();
            s.inv_t[i].apply_exact(&pe).unwrap()
        })
        .collect();
    let rank = exact::rank(&rows, n);
    if rank >= n {
        return None;
    }
    if rank == n - 1 || chosen.len() == k {
        let b = exact::orthogonal_complement_vector(&rows, n)?;
        let mut p = chosen.clone();
        for i in chosen.len()..k {
            let v = s.inv[i].apply_exact(&b).unwrap();
            p.push(integer_relation_exact(&v, height)?.q);
        }
        let mut w = finish_witness(s, p, unit_float(&b), true);
        w.residual = 0.0;
        return Some(w);
    }
    for cand in prims {
        chosen.push(cand.clone());
        let out = dfs_exact(s, prims, height, chosen);
        chosen.pop();
        if out.is_some() {
            return out;
        }
    }
    None
}

/// Independent check of a witness: each `p_i` is a nonzero integer vector
/// with `p_i . (M_i^{-1} b) ~ 0`, and `M_i v_i = b` for every grid.
pub fn verify_forest_witness(ms: &[Matrix], w: &ForestWitness, tol: f64) -> bool {
    if w.p.len() != ms.len() || w.v.len() != ms.len() || (norm2(&w.b) - 1.0).abs() > 1e-9 {
        return false;
    }
    ms.iter().zip(&w.p).zip(&w.v).all(|((m, p), v)| {
        let back = m.apply(v);
        let pf: Vec<f64> = p.iter().map(|&c| c as f64).collect();
        p.iter().any(|c| *c != 0)
            && back.iter().zip(&w.b).all(|(x, y)| (x - y).abs() < 1e-9)
            && dot(&pf, v).abs() < tol * norm2(&pf) * norm2(v).max(1.0) * 10.0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDependence {
    pub grid: usize,
    pub relation: Option<RelationWitness>,
}

impl GridDependence {
    pub fn dependent(&self) -> bool {
        self.relation.is_some()
    }
}

/// For each grid, whether `M_i^{-1} b` has a relation of height at most `H`.
pub fn direction_dependence(
    ms: &[Matrix],
    b: &[f64],
    height: u32,
    tol: f64,
) -> Result<Vec<GridDependence>> {
    ms.iter()
        .enumerate()
        .map(|(grid, m)| {
            let v = m.inverse()?.apply(b);
            Ok(GridDependence {
                grid,
                relation: integer_relation(&v, height, tol),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_4};

    #[test]
    fn relation_examples() {
        let w = integer_relation(&[1.0, 2.0, 3.0], 3, 1e-9).unwrap();
        assert_eq!(w.q, vec![1, 1, -1]);
        assert_eq!(w.residual, 0.0);
        assert!(integer_relation(&[1.0, 2f64.sqrt()], 1000, 1e-9).is_none());
        let r2 = 2f64.sqrt();
        let w = integer_relation(&[1.0, r2, r2], 2, 1e-9).unwrap();
        assert_eq!(w.q, vec![0, 1, -1]);
    }

    #[test]
    fn lll_strategy_finds_relations_in_higher_dimension() {
        let v = [1.0, 2f64.sqrt(), 3f64.sqrt(), 1.0 + 2.0 * 2f64.sqrt()];
        let reg = relation_registry();
        let w = reg.get("lll").unwrap().find(&v, 5, 1e-9).unwrap();
        assert!(verify_relation(&v, &w.q, 5, 1e-9).is_some());
        assert_eq!(w.height(), 2);
    }

    #[test]
    fn exact_relation_has_zero_residual() {
        let v: Vec<Rational> = ["1/3", "1/2", "5/6"]
            .iter()
            .map(|s| exact::parse_rational(s).unwrap())
            .collect();
        let w = integer_relation_exact(&v, 3).unwrap();
        assert_eq!(w.q, vec![1, 1, -1]);
    }

    #[test]
    fn identity_pair_is_not_dense() {
        let ms = vec![Matrix::identity(2), Matrix::identity(2)];
        let v = dense_forest_check(&ms, SearchLimits::default()).unwrap();
        assert!(v.is_not_dense());
        let w = v.witness.unwrap();
        assert_eq!(w.p, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(w.b, vec![1.0, 0.0]);
        assert!(w.exact);
        assert_eq!(w.residual, 0.0);
    }

    #[test]
    fn quarter_turn_pair_is_not_dense() {
        let ms = vec![Matrix::identity(2), Matrix::rotation2(FRAC_PI_4)];
        let v = dense_forest_check(&ms, SearchLimits::default()).unwrap();
        let w = v.witness.clone().unwrap();
        assert!(verify_forest_witness(&ms, &w, 1e-9));
        assert_eq!(w.p[1], vec![1, 1]);
        let b1 = ms[0].apply(&w.v[0]);
        let b2 = ms[1].apply(&w.v[1]);
        assert!(b1.iter().zip(&b2).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn transcendental_rotation_has_no_obstruction() {
        let theta = (1.0 / E).atan();
        let ms = vec![Matrix::identity(2), Matrix::rotation2(theta)];
        let limits = SearchLimits {
            height: 100,
            ..SearchLimits::default()
        };
        let v = dense_forest_check(&ms, limits).unwrap();
        assert_eq!(v.status, ForestStatus::NoObstructionUpTo);
        assert_eq!(v.height, 100);
    }

    #[test]
    fn fewer_grids_than_dimension_shortcut() {
        let ms = vec![Matrix::rotation2(0.3)];
        let v = dense_forest_check(&ms, SearchLimits::default()).unwrap();
        let w = v.witness.unwrap();
        assert_eq!(w.p, vec![vec![1, 0]]);
        assert!(w.residual < 1e-12);
        let ms3 = vec![Matrix::identity(3), Matrix::identity(3)];
        let v = dense_forest_check(&ms3, SearchLimits::default()).unwrap();
        let w = v.witness.unwrap();
        assert!(w.exact);
        assert!(verify_forest_witness(&ms3, &w, 1e-9));
    }

    #[test]
    fn dependence_examples() {
        let ms = vec![Matrix::identity(2)];
        let d = direction_dependence(&ms, &[1.0, 0.0], 10, 1e-9).unwrap();
        assert_eq!(d[0].relation.as_ref().unwrap().q, vec![0, 1]);
        let b = [1.0 / 3f64.sqrt(), 2f64.sqrt() / 3f64.sqrt()];
        let d = direction_dependence(&ms, &b, 1000, 1e-9).unwrap();
        assert!(!d[0].dependent());
    }

    #[test]
    fn primitive_vectors_are_ordered() {
        let p = primitive_vectors(2, 1);
        assert_eq!(p, vec![vec![0, 1], vec![1, -1], vec![1, 0], vec![1, 1]]);
        assert_eq!(primitive_vectors(2, 2).len(), 8);
    }
}
