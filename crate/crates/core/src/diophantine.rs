//! Homogeneous and inhomogeneous approximation used to control filling
//! times: Dirichlet witnesses, Cassels transference, and the witness
//! vectors for flows that fail to be dense.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_to_int, psi};
use crate::torus::{pivot, pivot_ratios};

/// `max_i ||m r_i||`.
pub fn max_dist(m: i64, ratios: &[f64]) -> f64 {
    ratios
        .iter()
        .map(|r| dist_to_int(m as f64 * r))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletWitness {
    pub m: i64,
    pub value: f64,
    /// `X^{-1/d}`.
    pub bound: f64,
    pub holds: bool,
}

/// The `m` in `[1, X)` minimising `max_i ||m r_i||` (smallest on ties).
pub fn dirichlet_witness(ratios: &[f64], x: u64) -> Result<DirichletWitness> {
    if x < 2 || ratios.is_empty() {
        return Err(Error::invalid("need X >= 2 and at least one ratio"));
    }
    let (m, value) = (1..x as i64)
        .map(|m| (m, max_dist(m, ratios)))
        .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    let bound = (x as f64).powf(-1.0 / ratios.len() as f64);
    Ok(DirichletWitness {
        m,
        value,
        bound,
        holds: value <= bound * (1.0 + 1e-12),
    })
}

/// `1, -1, 2, -2, ...` for `|m| < x`.
fn symmetric_range(x: f64) -> impl Iterator<Item = i64> {
    let top = if x.fract() == 0.0 { x as i64 - 1 } else { x.floor() as i64 };
    (1..=top.max(0)).flat_map(|m| [m, -m])
}

/// Largest `C` for which the homogeneous hypothesis holds on `0 < |m| < X`.
pub fn hypothesis_constant(ratios: &[f64], x: f64) -> f64 {
    symmetric_range(x)
        .map(|m| max_dist(m, ratios))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferenceSolution {
    pub x: i64,
    pub error: f64,
    pub h: u64,
    pub c_prime: f64,
    pub x_prime: f64,
}

/// Given `max_i ||m r_i|| >= C` for `0 < |m| < X`, finds `x` with
/// `|x| <= X'` and `max_i ||x r_i - alpha_i|| <= C'`.
pub fn transference_apply(
    ratios: &[f64],
    c: f64,
    x_bound: f64,
    targets: &[f64],
) -> Result<TransferenceSolution> {
    if ratios.len() != targets.len() || ratios.is_empty() {
        return Err(Error::invalid("one target per ratio is required"));
    }
    if !(c > 0.0 && x_bound > 0.0) {
        return Err(Error::invalid("C and X must be positive"));
    }
    for m in symmetric_range(x_bound) {
        let value = max_dist(m, ratios);
        if value < c {
            return Err(Error::HypothesisViolated { m, value, c });
        }
    }
    let n = ratios.len() as i32;
    let h = (1.0 / (x_bound * c.powi(n))).floor() as u64;
    let c_prime = 0.5 * (h as f64 + 1.0) * c;
    let x_prime = 0.5 * (h as f64 + 1.0) * x_bound;
    let err = |x: i64| {
        ratios
            .iter()
            .zip(targets)
            .map(|(r, a)| dist_to_int(x as f64 * r - a))
            .fold(0.0, f64::max)
    };
    let top = x_prime.floor() as i64;
    std::iter::once(0)
        .chain((1..=top).flat_map(|x| [x, -x]))
        .find_map(|x| {
            let e = err(x);
            (e <= c_prime * (1.0 + 1e-12)).then_some(TransferenceSolution {
                x,
                error: e,
                h,
                c_prime,
                x_prime,
            })
        })
        .ok_or_else(|| {
            Error::invalid(format!(
                "no solution with |x| <= {x_prime} although the hypothesis holds"
            ))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lft3Outcome {
    pub holds: bool,
    pub violating_m: Option<i64>,
    pub value: Option<f64>,
    /// `S^{-1/d}`.
    pub threshold: f64,
    /// `delta^{-1} S^{1-1/d}`, the open range bound for `m`.
    pub range: f64,
}

/// Checks `max_i ||m u_i / u_pivot|| >= S^{-1/d}` over
/// `0 < |m| < delta^{-1} S^{1-1/d}`.
pub fn lft3_hypothesis(u: &[f64], s: u64, delta: f64) -> Result<Lft3Outcome> {
    let ratios = pivot_ratios(u)?;
    let d = ratios.len() as f64;
    let sf = s as f64;
    let threshold = sf.powf(-1.0 / d);
    let range = sf.powf(1.0 - 1.0 / d) / delta;
    // The condition is symmetric in m, so positive m suffice.
    for m in symmetric_range(range).filter(|m| *m > 0) {
        let value = max_dist(m, &ratios);
        if value < threshold {
            return Ok(Lft3Outcome {
                holds: false,
                violating_m: Some(m),
                value: Some(value),
                threshold,
                range,
            });
        }
    }
    Ok(Lft3Outcome {
        holds: true,
        violating_m: None,
        value: None,
        threshold,
        range,
    })
}

/// Calls `f` on every integer vector with `0 < ||q||_inf <= top` lying within
/// Euclidean distance `r` of the line `R w` (possibly on a few more). Vectors
/// are reported up to sign.
pub(crate) fn line_tube(w: &[f64], r: f64, top: i64, f: &mut dyn FnMut(&[i64])) {
    let n = w.len();
    let norm = crate::linalg::norm2(w);
    if top < 1 || norm == 0.0 {
        return;
    }
    let u: Vec<f64> = w.iter().map(|x| x / norm).collect();
    let p = (0..n).fold(0, |b, i| if u[i].abs() >= u[b].abs() { i } else { b });
    let up = u[p];
    // q_p = 0 forces |q| <= r / |u_p| + r.
    let small = ((r / up.abs() + r).ceil() as i64).min(top);
    let mut z = vec![0i64; n];
    if small >= 1 {
        let mut ranges = vec![(-small, small); n];
        ranges[p] = (0, 0);
        crate::grid::for_each_in_box(&ranges, &mut z, 0, &mut |q| {
            if q.iter().any(|c| *c != 0) {
                f(q);
            }
        });
    }
    for k in 1..=top {
        let s_lo = (k as f64 - r) / up;
        let s_hi = (k as f64 + r) / up;
        let ranges: Vec<(i64, i64)> = (0..n)
            .map(|i| {
                if i == p {
                    return (k, k);
                }
                let a = s_lo * u[i];
                let b = s_hi * u[i];
                (
                    ((a.min(b) - r).ceil() as i64).max(-top),
                    ((a.max(b) + r).floor() as i64).min(top),
                )
            })
            .collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            continue;
        }
        crate::grid::for_each_in_box(&ranges, &mut z, 0, f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineWitness {
    pub q: Vec<i64>,
    pub sup_norm: i64,
    pub psi: f64,
    /// `S^{1-1/d} / delta`.
    pub height_bound: f64,
    /// `(d+1) / (||q|| S^{1/d})`.
    pub psi_bound: f64,
}

fn canonical_sign(q: &mut [i64]) {
    if q.iter().find(|c| **c != 0).is_some_and(|c| *c < 0) {
        q.iter_mut().for_each(|c| *c = -*c);
    }
}

/// Smallest-height `q` with `||q|| < S^{1-1/d}/delta` and
/// `psi([u],[q]) < (d+1)/(||q|| S^{1/d})`, lexicographically first among
/// that height.
pub fn lft4_witness_search(u: &[f64], s: u64, delta: f64) -> Result<Option<DiophantineWitness>> {
    pivot(u)?;
    let n = u.len();
    let d = (n - 1) as f64;
    let sf = s as f64;
    let height_bound = sf.powf(1.0 - 1.0 / d) / delta;
    let top = if height_bound.fract() == 0.0 {
        height_bound as i64 - 1
    } else {
        height_bound.floor() as i64
    };
    let s_root = sf.powf(1.0 / d);
    let check = |q: &[i64]| -> Option<DiophantineWitness> {
        let h = q.iter().map(|c| c.abs()).max().unwrap_or(0);
        if h == 0 || h > top {
            return None;
        }
        let qf: Vec<f64> = q.iter().map(|&c| c as f64).collect();
        let angle = psi(u, &qf);
        let bound = (d + 1.0) / (h as f64 * s_root);
        (angle < bound).then(|| DiophantineWitness {
            q: q.to_vec(),
            sup_norm: h,
            psi: angle,
            height_bound,
            psi_bound: bound,
        })
    };

    let mut candidates: Vec<Vec<i64>> = Vec::new();
    // Any witness lies within r of the line R u.
    let r = (d + 1.0).powf(1.5) / s_root;
    line_tube(u, r, top, &mut |q| candidates.push(q.to_vec()));
    let best = candidates
        .into_iter()
        .filter_map(|mut q| {
            canonical_sign(&mut q);
            check(&q)
        })
        .min_by(|a, b| (a.sup_norm, &a.q).cmp(&(b.sup_norm, &b.q)));
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn dirichlet_examples() {
        let w = dirichlet_witness(&[2f64.sqrt()], 5).unwrap();
        assert_eq!(w.m, 2);
        assert!((w.value - 0.171_572_875).abs() < 1e-8);
        assert!(w.holds);
        let w = dirichlet_witness(&[1.0 / 3.0], 4).unwrap();
        assert_eq!(w.m, 3);
        assert!(w.value < 1e-12);
    }

    #[test]
    fn golden_transference_instance() {
        let c = hypothesis_constant(&[PHI], 3.0);
        assert!((c - dist_to_int(2.0 * PHI)).abs() < 1e-15);
        assert!((c - 0.236_067_977).abs() < 1e-8);
        let sol = transference_apply(&[PHI], c, 3.0, &[0.5]).unwrap();
        assert_eq!(sol.h, 1);
        assert_eq!(sol.x, 1);
        assert!((sol.c_prime - c).abs() < 1e-15);
        assert_eq!(sol.x_prime, 3.0);
        assert!((sol.error - (PHI - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn rational_ratio_violates_hypothesis() {
        let err = transference_apply(&[0.5], 0.1, 3.0, &[0.3]).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated { m: 2, .. }));
    }

    #[test]
    fn lft3_examples() {
        let e2 = lft3_hypothesis(&[0.0, 1.0], 10, 0.2).unwrap();
        assert!(!e2.holds);
        assert_eq!(e2.violating_m, Some(1));
        // delta >= 1 empties the range 0 < |m| < 1/delta when S = 1.
        let empty = lft3_hypothesis(&[0.3, 1.0], 1, 1.0).unwrap();
        assert!(empty.holds);
        let u = normalize(&[1.0, PHI]).unwrap();
        let g = lft3_hypothesis(&u, 25, 0.2).unwrap();
        let ratio = 1.0 / PHI;
        let oracle = (1..5).all(|m| dist_to_int(m as f64 * ratio) >= 1.0 / 25.0);
        assert_eq!(g.holds, oracle);
    }

    #[test]
    fn lft4_examples() {
        let w = lft4_witness_search(&[0.0, 1.0], 10, 0.1).unwrap().unwrap();
        assert_eq!(w.q, vec![0, 1]);
        assert_eq!(w.psi, 0.0);
        let u = normalize(&[1.0, 1.0]).unwrap();
        let w = lft4_witness_search(&u, 10, 0.1).unwrap().unwrap();
        assert_eq!(w.q, vec![1, 1]);
        assert!(w.psi < 1e-15);
    }

    #[test]
    fn lft4_tube_matches_full_scan() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(17);
        for _ in 0..40 {
            let u = normalize(&[rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).unwrap();
            let (s, delta) = (6, 0.2);
            let got = lft4_witness_search(&u, s, delta).unwrap();
            let bound = (s as f64).powf(0.5) / delta;
            let top = bound.floor() as i64;
            let mut best: Option<(i64, Vec<i64>)> = None;
            for a in -top..=top {
                for b in -top..=top {
                    for c in -top..=top {
                        let q = vec![a, b, c];
                        let h = a.abs().max(b.abs()).max(c.abs());
                        if h == 0 || q.iter().find(|x| **x != 0).unwrap() < &0 {
                            continue;
                        }
                        let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
                        if psi(&u, &qf) < 3.0 / (h as f64 * (s as f64).sqrt())
                            && best.as_ref().is_none_or(|(bh, bq)| (h, &q) < (*bh, bq))
                        {
                            best = Some((h, q));
                        }
                    }
                }
            }
            assert_eq!(got.map(|w| w.q), best.map(|b| b.1));
        }
    }
}
