//! Directional visibility of forests and sampled visibility profiles.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Forest, GridSpec, ReducedBasis};
use crate::linalg::{dot, norm2, normalize};
use crate::rng::stream_rng;

pub const DEFAULT_CELL_BUDGET: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentQuery {
    pub anchor: Vec<f64>,
    pub direction: Vec<f64>,
    pub epsilon: f64,
    pub l_max: f64,
}

impl SegmentQuery {
    /// Builds a query, normalising `direction`.
    pub fn new(anchor: Vec<f64>, direction: &[f64], epsilon: f64, l_max: f64) -> Result<Self> {
        if anchor.len() != direction.len() {
            return Err(Error::invalid("anchor and direction lengths differ"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(l_max > 0.0) {
            return Err(Error::invalid("l_max must be positive"));
        }
        Ok(Self {
            anchor,
            direction: normalize(direction)?,
            epsilon,
            l_max,
        })
    }
}

/// Euclidean distance from `p` to the segment `a + [-l, l] b`.
pub fn distance_to_segment(p: &[f64], anchor: &[f64], direction: &[f64], l: f64) -> f64 {
    let rel: Vec<f64> = p.iter().zip(anchor).map(|(x, a)| x - a).collect();
    let s = dot(&rel, direction).clamp(-l, l);
    rel.iter()
        .zip(direction)
        .map(|(r, b)| (r - s * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Smallest half-length `l` at which the closed segment reaches distance
/// `epsilon` of `p`, or `None` when the whole line stays at least
/// `epsilon` away.
pub fn hit_length(p: &[f64], anchor: &[f64], direction: &[f64], epsilon: f64) -> Option<f64> {
    let rel: Vec<f64> = p.iter().zip(anchor).map(|(x, a)| x - a).collect();
    let s = dot(&rel, direction);
    let perp2 = rel
        .iter()
        .zip(direction)
        .map(|(r, b)| (r - s * b).powi(2))
        .sum::<f64>();
    let eps2 = epsilon * epsilon;
    if perp2 >= eps2 {
        return None;
    }
    Some((s.abs() - (eps2 - perp2).sqrt()).max(0.0))
}

/// Every `z` with `|M z + g - L(a, b, l)| < epsilon`, sorted.
pub fn enumerate_near_segment(
    grid: &GridSpec,
    q: &SegmentQuery,
    l: f64,
    budget: f64,
) -> Result<Vec<Vec<i64>>> {
    let reduced = ReducedBasis::new(&grid.matrix)?;
    enumerate_with_basis(grid, &reduced, q, l, budget)
}

fn enumerate_with_basis(
    grid: &GridSpec,
    reduced: &ReducedBasis,
    q: &SegmentQuery,
    l: f64,
    budget: f64,
) -> Result<Vec<Vec<i64>>> {
    if !(l > 0.0) {
        return Err(Error::invalid("segment half-length must be positive"));
    }
    let n = grid.dim();
    let inv = &reduced.inverse;
    let shift: Vec<f64> = q
        .anchor
        .iter()
        .zip(&grid.translation)
        .map(|(a, g)| a - g)
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| inv[(i, j)] * shift[j]).sum())
        .collect();
    let beta: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| inv[(i, j)] * q.direction[j]).sum())
        .collect();
    let e: Vec<f64> = (0..n)
        .map(|i| q.epsilon * reduced.inverse_row_norm(i))
        .collect();
    let main = (0..n)
        .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
        .expect("dimension is positive");

    let lo_main = (c[main] - beta[main].abs() * l - e[main]).ceil();
    let hi_main = (c[main] + beta[main].abs() * l + e[main]).floor();
    if hi_main < lo_main {
        return Ok(Vec::new());
    }
    let slices = hi_main - lo_main + 1.0;
    // Each slice constrains t to a window of width 2 e_main / |beta_main|.
    let window = (2.0 * e[main] / beta[main].abs()).min(2.0 * l);
    let per_slice: f64 = (0..n)
        .filter(|&i| i != main)
        .map(|i| (beta[i].abs() * window + 2.0 * e[i]).floor() + 1.0)
        .product();
    let cells = slices * per_slice;
    if cells > budget {
        return Err(Error::EnumerationBudgetExceeded { cells, budget });
    }

    let mut out = Vec::new();
    let mut z = vec![0i64; n];
    let mut ranges = vec![(0i64, 0i64); n];
    let mut zm = lo_main;
    while zm <= hi_main {
        let t1 = (zm - c[main] - e[main]) / beta[main];
        let t2 = (zm - c[main] + e[main]) / beta[main];
        let t_lo = t1.min(t2).max(-l);
        let t_hi = t1.max(t2).min(l);
        if t_lo <= t_hi {
            let mut empty = false;
            for i in 0..n {
                if i == main {
                    ranges[i] = (zm as i64, zm as i64);
                    continue;
                }
                let a = c[i] + beta[i] * t_lo;
                let b = c[i] + beta[i] * t_hi;
                let lo = (a.min(b) - e[i]).ceil() as i64;
                let hi = (a.max(b) + e[i]).floor() as i64;
                if hi < lo {
                    empty = true;
                    break;
                }
                ranges[i] = (lo, hi);
            }
            if !empty {
                crate::grid::for_each_in_box(&ranges, &mut z, 0, &mut |zr| {
                    let p = grid_point(grid, reduced, zr);
                    if distance_to_segment(&p, &q.anchor, &q.direction, l) < q.epsilon {
                        out.push(reduced.to_original(zr));
                    }
                });
            }
        }
        zm += 1.0;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn grid_point(grid: &GridSpec, reduced: &ReducedBasis, zr: &[i64]) -> Vec<f64> {
    let n = zr.len();
    (0..n)
        .map(|i| {
            grid.translation[i]
                + (0..n)
                    .map(|j| reduced.basis[(i, j)] * zr[j] as f64)
                    .sum::<f64>()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub grid: usize,
    pub coords: Vec<i64>,
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VisibilityStatus {
    Hit { length: f64 },
    /// No grid point is close within the searched length. `certified` means
    /// the line is periodic modulo every grid, so no length would help.
    Blocked { searched: f64, certified: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityOutcome {
    #[serde(flatten)]
    pub status: VisibilityStatus,
    pub witness: Option<Witness>,
}

impl VisibilityOutcome {
    pub fn hit_length(&self) -> Option<f64> {
        match self.status {
            VisibilityStatus::Hit { length } => Some(length),
            VisibilityStatus::Blocked { .. } => None,
        }
    }
}

/// If `M^{-1} b` is parallel to a small integer vector `p`, the line is
/// periodic modulo the grid with period `|M p|`.
fn line_period(grid: &GridSpec, direction: &[f64]) -> Option<f64> {
    let inv = grid.matrix.inverse().ok()?;
    let w = inv.apply(direction);
    let scale = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for mult in 1..=64 {
        let v: Vec<f64> = w.iter().map(|x| x / scale * mult as f64).collect();
        if v.iter().all(|x| (x - x.round()).abs() <= 1e-9 * mult as f64) {
            let p: Vec<f64> = v.iter().map(|x| x.round()).collect();
            return Some(norm2(&grid.matrix.apply(&p)));
        }
    }
    None
}

struct Candidate {
    length: f64,
    grid: usize,
    coords: Vec<i64>,
    point: Vec<f64>,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.length
        .total_cmp(&b.length)
        .then(a.grid.cmp(&b.grid))
        .then_with(|| a.coords.cmp(&b.coords))
}

/// `phi_epsilon[F](a, b)`: the least half-length at which the segment
/// meets the epsilon-neighbourhood of the forest.
pub fn directional_visibility(
    forest: &Forest,
    q: &SegmentQuery,
    budget: f64,
) -> Result<VisibilityOutcome> {
    let bases = forest
        .grids()
        .iter()
        .map(|g| ReducedBasis::new(&g.matrix))
        .collect::<Result<Vec<_>>>()?;
    directional_visibility_with(forest, &bases, q, budget)
}

fn directional_visibility_with(
    forest: &Forest,
    bases: &[ReducedBasis],
    q: &SegmentQuery,
    budget: f64,
) -> Result<VisibilityOutcome> {
    if q.anchor.len() != forest.dim() {
        return Err(Error::invalid("query dimension does not match the forest"));
    }
    let periods: Option<Vec<f64>> = forest
        .grids()
        .iter()
        .map(|g| line_period(g, &q.direction))
        .collect();
    let certificate = periods.map(|p| {
        let half = p.iter().fold(0.0_f64, |m, x| m.max(*x)) / 2.0;
        half * (1.0 + 1e-9) + q.epsilon
    });
    let limit = match certificate {
        Some(c) => c.min(q.l_max),
        None => q.l_max,
    };
    let mut l = limit.min(1.0_f64.max(4.0 * q.epsilon));
    loop {
        let mut best: Option<Candidate> = None;
        for (gi, (grid, basis)) in forest.grids().iter().zip(bases).enumerate() {
            for coords in enumerate_with_basis(grid, basis, q, l, budget)? {
                let point = grid.point(&coords);
                let Some(length) = hit_length(&point, &q.anchor, &q.direction, q.epsilon) else {
                    continue;
                };
                let cand = Candidate {
                    length,
                    grid: gi,
                    coords,
                    point,
                };
                if best
                    .as_ref()
                    .is_none_or(|b| candidate_order(&cand, b) == Ordering::Less)
                {
                    best = Some(cand);
                }
            }
        }
        if let Some(b) = best {
            return Ok(VisibilityOutcome {
                status: VisibilityStatus::Hit { length: b.length },
                witness: Some(Witness {
                    grid: b.grid,
                    coords: b.coords,
                    point: b.point,
                }),
            });
        }
        if l >= limit {
            let certified = certificate.is_some_and(|c| c <= q.l_max);
            return Ok(VisibilityOutcome {
                status: VisibilityStatus::Blocked {
                    searched: l,
                    certified,
                },
                witness: None,
            });
        }
        l = (2.0 * l).min(limit);
    }
}

// ---------------------------------------------------------------------------
// Profiles

/// How the search length `l_max` depends on `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LengthRule {
    /// `factor * epsilon^(-exponent)`.
    Power { factor: f64, exponent: f64 },
    Fixed { value: f64 },
}

impl LengthRule {
    /// `10^6 epsilon^{-n}`.
    pub fn default_for(n: usize) -> Self {
        LengthRule::Power {
            factor: 1e6,
            exponent: n as f64,
        }
    }

    pub fn l_max(&self, epsilon: f64) -> f64 {
        match *self {
            LengthRule::Power { factor, exponent } => factor * epsilon.powf(-exponent),
            LengthRule::Fixed { value } => value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Anchors per level; `None` means `4^n`.
    pub anchors: Option<usize>,
    pub seed: u64,
    pub length: LengthRule,
    pub budget: f64,
}

impl ProfileConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            anchors: None,
            seed,
            length: LengthRule::default_for(n),
            budget: DEFAULT_CELL_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileArgmax {
    pub anchor: Vec<f64>,
    pub direction: Vec<f64>,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileLevel {
    pub level: u32,
    pub epsilon: f64,
    /// `2 * max hit length`; absent when some query was blocked.
    pub v_hat: Option<f64>,
    pub blocked: bool,
    pub blocked_queries: usize,
    pub queries: usize,
    /// The maximising query, or the first blocked one.
    pub argmax: Option<ProfileArgmax>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// `count` points of a randomly shifted Halton sequence inside the closed
/// ball of radius `rho` about the origin.
pub fn sample_anchors(n: usize, rho: f64, count: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    assert!(n <= PRIMES.len(), "anchor sampling supports n <= 8");
    let mut rng = stream_rng(seed, stream);
    let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let u = (radical_inverse(i, PRIMES[k]) + shift[k]).fract();
                rho * (2.0 * u - 1.0)
            })
            .collect();
        if norm2(&x) <= rho {
            out.push(x);
        }
        i += 1;
    }
    out
}

/// Sampled visibility `V(2^{-l})` for each level, using `directions[i]`
/// at `levels[i]`.
pub fn visibility_profile(
    forest: &Forest,
    levels: &[u32],
    directions: &[Vec<Vec<f64>>],
    config: &ProfileConfig,
) -> Result<Vec<ProfileLevel>> {
    if levels.len() != directions.len() {
        return Err(Error::invalid("one direction set is needed per level"));
    }
    let n = forest.dim();
    let rho = forest.max_covering_radius()?.value;
    let count = config.anchors.unwrap_or(4usize.pow(n as u32));
    let bases = forest
        .grids()
        .iter()
        .map(|g| ReducedBasis::new(&g.matrix))
        .collect::<Result<Vec<_>>>()?;
    levels
        .iter()
        .zip(directions)
        .map(|(&level, dirs)| {
            let epsilon = 0.5f64.powi(level as i32);
            let anchors = sample_anchors(n, rho, count, config.seed, u64::from(level));
            let l_max = config.length.l_max(epsilon);
            let jobs: Vec<(usize, usize)> = (0..anchors.len())
                .flat_map(|a| (0..dirs.len()).map(move |d| (a, d)))
                .collect();
            let outcomes = jobs
                .par_iter()
                .map(|&(a, d)| {
                    let q = SegmentQuery::new(anchors[a].clone(), &dirs[d], epsilon, l_max)?;
                    directional_visibility_with(forest, &bases, &q, config.budget)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best: Option<(f64, usize)> = None;
            let mut first_blocked = None;
            let mut blocked_queries = 0;
            for (i, out) in outcomes.iter().enumerate() {
                match out.hit_length() {
                    Some(len) => {
                        if best.is_none_or(|(b, _)| len > b) {
                            best = Some((len, i));
                        }
                    }
                    None => {
                        blocked_queries += 1;
                        first_blocked.get_or_insert(i);
                    }
                }
            }
            let pick = first_blocked.or(best.map(|(_, i)| i));
            let argmax = pick.map(|i| {
                let (a, d) = jobs[i];
                ProfileArgmax {
                    anchor: anchors[a].clone(),
                    direction: normalize(&dirs[d]).unwrap_or_else(|_| dirs[d].clone()),
                    witness: outcomes[i].witness.clone(),
                }
            });
            Ok(ProfileLevel {
                level,
                epsilon,
                v_hat: if blocked_queries == 0 {
                    best.map(|(len, _)| 2.0 * len)
                } else {
                    None
                },
                blocked: blocked_queries > 0,
                blocked_queries,
                queries: jobs.len(),
                argmax,
            })
        })
        .collect()
}

/// Re-checks that a hit witness lies within epsilon of the segment at the
/// reported length.
pub fn witness_is_valid(q: &SegmentQuery, outcome: &VisibilityOutcome) -> bool {
    match (&outcome.status, &outcome.witness) {
        (VisibilityStatus::Hit { length }, Some(w)) => {
            distance_to_segment(&w.point, &q.anchor, &q.direction, *length)
                <= q.epsilon * (1.0 + 1e-9)
                && *length <= q.l_max
        }
        (VisibilityStatus::Blocked { .. }, None) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::honeycomb;
    use crate::linalg::Matrix;

    fn z2() -> GridSpec {
        GridSpec::lattice(Matrix::identity(2))
    }

    fn brute_near(grid: &GridSpec, q: &SegmentQuery, l: f64, h: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for i in -h..=h {
            for j in -h..=h {
                let p = grid.point(&[i, j]);
                if distance_to_segment(&p, &q.anchor, &q.direction, l) < q.epsilon {
                    out.push(vec![i, j]);
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn enumeration_examples() {
        let q = SegmentQuery::new(vec![0.0, 0.0], &[1.0, 0.0], 0.1, 10.0).unwrap();
        let got = enumerate_near_segment(&z2(), &q, 2.5, DEFAULT_CELL_BUDGET).unwrap();
        let want: Vec<Vec<i64>> = (-2..=2).map(|i| vec![i, 0]).collect();
        assert_eq!(got, want);

        let q = SegmentQuery::new(vec![0.0, 0.5], &[1.0, 0.0], 0.4, 10.0).unwrap();
        assert!(enumerate_near_segment(&z2(), &q, 10.0, DEFAULT_CELL_BUDGET)
            .unwrap()
            .is_empty());

        let hc = GridSpec::lattice(honeycomb());
        let q = SegmentQuery::new(vec![0.0, 0.0], &[0.0, 1.0], 0.3, 10.0).unwrap();
        let got = enumerate_near_segment(&hc, &q, 1.0, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(got, brute_near(&hc, &q, 1.0, 10));
        assert!(!got.is_empty());
    }

    #[test]
    fn budget_is_enforced() {
        let q = SegmentQuery::new(vec![0.0, 0.0], &[1.0, 0.3], 0.1, 1e9).unwrap();
        let err = enumerate_near_segment(&z2(), &q, 1e9, 1e3).unwrap_err();
        assert!(err.is_budget());
    }

    #[test]
    fn visibility_examples() {
        let f = Forest::new(vec![z2()]).unwrap();
        let q = SegmentQuery::new(vec![0.0, 0.0], &[0.6, 0.8], 0.1, 100.0).unwrap();
        let out = directional_visibility(&f, &q, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(out.hit_length(), Some(0.0));

        let q = SegmentQuery::new(vec![0.0, 0.5], &[1.0, 0.0], 0.25, 1e12).unwrap();
        let out = directional_visibility(&f, &q, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(
            out.status,
            VisibilityStatus::Blocked {
                searched: 0.5 * (1.0 + 1e-9) + 0.25,
                certified: true
            }
        );
    }

    #[test]
    fn visibility_matches_brute_force_on_two_grids() {
        let rot = Matrix::rotation2(std::f64::consts::PI / 6.0);
        let f = Forest::new(vec![z2(), GridSpec::lattice(rot)]).unwrap();
        let q = SegmentQuery::new(vec![0.0, 0.5], &[1.0, 0.0], 0.25, 100.0).unwrap();
        let out = directional_visibility(&f, &q, DEFAULT_CELL_BUDGET).unwrap();
        let mut best = f64::INFINITY;
        for g in f.grids() {
            for i in -150..=150 {
                for j in -150..=150 {
                    if let Some(len) = hit_length(&g.point(&[i, j]), &q.anchor, &q.direction, q.epsilon) {
                        best = best.min(len);
                    }
                }
            }
        }
        let got = out.hit_length().unwrap();
        assert!((got - best).abs() < 1e-6, "{got} vs {best}");
        assert!(witness_is_valid(&q, &out));
    }

    #[test]
    fn profile_of_single_grid_is_blocked_on_axis() {
        let f = Forest::new(vec![z2()]).unwrap();
        let dirs = vec![vec![vec![1.0, 0.0], vec![0.6, 0.8]]];
        let mut cfg = ProfileConfig::new(2, 1);
        cfg.length = LengthRule::Fixed { value: 1e4 };
        let prof = visibility_profile(&f, &[3], &dirs, &cfg).unwrap();
        assert!(prof[0].blocked);
        assert_eq!(prof[0].v_hat, None);
    }

    #[test]
    fn profile_is_zero_above_covering_radius() {
        let f = Forest::new(vec![z2()]).unwrap();
        let dirs = vec![vec![vec![1.0, 0.0], vec![0.6, 0.8]]];
        let cfg = ProfileConfig::new(2, 5);
        // 2^0 = 1 exceeds the covering radius sqrt(2)/2.
        let prof = visibility_profile(&f, &[0], &dirs, &cfg).unwrap();
        assert_eq!(prof[0].v_hat, Some(0.0));
    }

    #[test]
    fn anchors_lie_in_ball_and_are_deterministic() {
        let a = sample_anchors(2, 0.7, 16, 9, 3);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|x| norm2(x) <= 0.7));
        assert_eq!(a, sample_anchors(2, 0.7, 16, 9, 3));
        assert_ne!(a, sample_anchors(2, 0.7, 16, 9, 4));
    }
}
