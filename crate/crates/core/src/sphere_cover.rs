//! Bi-spherical caps `K(v, eta)`, finite covers of the projective sphere,
//! and Monte Carlo estimates of the rotation sets `X(b; q; eta)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, psi, random_unit, sample_rotation_with, Matrix, ProjectivePoint};
use crate::registry::{Named, Registry};
use crate::rng::stream_rng;
use crate::stats::{wilson, Proportion, Z95};

pub const DEFAULT_VERIFY_TRIALS: u64 = 100_000;
const CHUNK: u64 = 4096;

/// A strategy producing cap centres that cover `P^d` at radius `eta`.
pub trait CoverBuilder: Named + Send + Sync {
    fn supports(&self, d: usize) -> bool;
    /// Centres as vectors of `R^{d+1}` (not necessarily normalised).
    fn centres(&self, d: usize, eta: f64) -> Vec<Vec<f64>>;
}

/// Equally spaced lines in the plane.
pub struct Angular;

impl Named for Angular {
    fn name(&self) -> &'static str {
        "angular"
    }
}

impl CoverBuilder for Angular {
    fn supports(&self, d: usize) -> bool {
        d == 1
    }

    fn centres(&self, _d: usize, eta: f64) -> Vec<Vec<f64>> {
        // Spacing pi/N leaves a worst angle pi/(2N) < asin(eta).
        let n = (PI / (2.0 * eta.asin())).floor() as usize + 1;
        (0..n)
            .map(|j| {
                let t = j as f64 * PI / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    }
}

/// Latitude bands over the closed upper hemisphere of `S^2`.
pub struct LatLong;

impl Named for LatLong {
    fn name(&self) -> &'static str {
        "lat-long"
    }
}

impl CoverBuilder for LatLong {
    fn supports(&self, d: usize) -> bool {
        d == 2
    }

    fn centres(&self, _d: usize, eta: f64) -> Vec<Vec<f64>> {
        // Each cell lies within geodesic distance dtheta/2 + sin(theta_max) dphi/2
        // of its centre; both halves are held to r/2.
        let r = 0.999 * eta.asin();
        let bands = ((PI / 2.0) / r).ceil() as usize;
        let dtheta = (PI / 2.0) / bands as f64;
        let mut out = Vec::new();
        for b in 0..bands {
            let theta_c = (b as f64 + 0.5) * dtheta;
            let top = ((b + 1) as f64 * dtheta).min(PI / 2.0).sin();
            let count = ((2.0 * PI * top) / (r - dtheta / 2.0).max(1e-12) / 2.0)
                .ceil()
                .max(1.0) as usize;
            let dphi = 2.0 * PI / count as f64;
            for j in 0..count {
                let phi = (j as f64 + 0.5) * dphi;
                out.push(vec![
                    theta_c.sin() * phi.cos(),
                    theta_c.sin() * phi.sin(),
                    theta_c.cos(),
                ]);
            }
        }
        out
    }
}

/// Cell centres on the faces `x_i = 1` of the cube `[-1, 1]^{d+1}`.
pub struct CubeFace;

impl Named for CubeFace {
    fn name(&self) -> &'static str {
        "cube-face"
    }
}

impl CoverBuilder for CubeFace {
    fn supports(&self, d: usize) -> bool {
        (1..=3).contains(&d)
    }

    fn centres(&self, d: usize, eta: f64) -> Vec<Vec<f64>> {
        // A point of a face cell is within sqrt(d)/g of the cell centre, and
        // the centre has norm >= 1.
        let g = ((d as f64).sqrt() / eta).floor() as i64 + 1;
        let coord = |k: i64| -1.0 + (2 * k + 1) as f64 / g as f64;
        let mut out = Vec::new();
        for face in 0..=d {
            let mut z = vec![0i64; d];
            crate::grid::for_each_in_box(&vec![(0, g - 1); d], &mut z, 0, &mut |c| {
                let mut v = Vec::with_capacity(d + 1);
                let mut it = c.iter();
                for i in 0..=d {
                    v.push(if i == face { 1.0 } else { coord(*it.next().unwrap()) });
                }
                out.push(v);
            });
        }
        out
    }
}

pub fn cover_registry() -> Registry<dyn CoverBuilder> {
    let mut reg: Registry<dyn CoverBuilder> = Registry::new();
    reg.register(Box::new(Angular));
    reg.register(Box::new(LatLong));
    reg.register(Box::new(CubeFace));
    reg
}

pub fn default_builder(d: usize) -> &'static str {
    match d {
        1 => "angular",
        2 => "lat-long",
        _ => "cube-face",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapCover {
    pub d: usize,
    pub eta: f64,
    pub builder: String,
    pub centres: Vec<ProjectivePoint>,
    /// `|centres| * eta^d`.
    pub c_cover: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verified_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_trials: Option<u64>,
}

impl CapCover {
    pub fn from_centres(d: usize, eta: f64, builder: &str, raw: Vec<Vec<f64>>) -> Result<Self> {
        let centres = raw
            .iter()
            .map(|c| {
                if c.len() != d + 1 {
                    return Err(Error::invalid("centre has the wrong dimension"));
                }
                ProjectivePoint::new(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d,
            eta,
            builder: builder.to_string(),
            c_cover: centres.len() as f64 * eta.powi(d as i32),
            centres,
            verified_gap: None,
            verify_trials: None,
        })
    }

    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.centres.iter().map(|c| c.as_slice().to_vec()).collect()
    }

    /// Runs [`verify_cover`] and records the gap.
    pub fn verify(&mut self, trials: u64, seed: u64) -> f64 {
        let gap = verify_cover(self, trials, seed);
        self.verified_gap = Some(gap);
        self.verify_trials = Some(trials);
        gap
    }
}

pub fn build_cap_cover_with(builder: &str, d: usize, eta: f64) -> Result<CapCover> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("cap radius must lie in (0, 1)"));
    }
    let reg = cover_registry();
    let b = reg.get(builder)?;
    if !b.supports(d) {
        return Err(Error::invalid(format!("builder '{builder}' does not support d = {d}")));
    }
    CapCover::from_centres(d, eta, builder, b.centres(d, eta))
}

pub fn build_cap_cover(d: usize, eta: f64) -> Result<CapCover> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    build_cap_cover_with(default_builder(d), d, eta)
}

/// Bucketed lookup of the projectively nearest centre.
pub struct CentreIndex {
    centres: Vec<Vec<f64>>,
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    search: f64,
}

impl CentreIndex {
    /// Exact for all queries whose nearest centre is within projective
    /// distance `reach`; others fall back to a full scan.
    pub fn new(centres: Vec<Vec<f64>>, reach: f64) -> Self {
        let reach = reach.clamp(1e-6, 1.0);
        let chord = 2.0 * (reach.asin() / 2.0).sin();
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, c) in centres.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let key: Vec<i64> = c.iter().map(|x| (sign * x / chord).floor() as i64).collect();
                buckets.entry(key).or_default().push(i);
            }
        }
        Self {
            centres,
            cell: chord,
            buckets,
            search: reach,
        }
    }

    /// `min_c psi(v, c)` for a unit vector `v`.
    pub fn nearest(&self, v: &[f64]) -> f64 {
        let base: Vec<i64> = v.iter().map(|x| (x / self.cell).floor() as i64).collect();
        let n = v.len();
        let mut best = f64::INFINITY;
        let mut key = vec![0i64; n];
        crate::grid::for_each_in_box(&vec![(-1, 1); n], &mut key, 0, &mut |off| {
            let k: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&k) {
                for &i in ids {
                    best = best.min(psi(v, &self.centres[i]));
                }
            }
        });
        if best < self.search {
            best
        } else {
            self.centres.iter().map(|c| psi(v, c)).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Largest observed `min_c psi(v, c)` over `trials` uniform unit vectors.
pub fn verify_cover(cover: &CapCover, trials: u64, seed: u64) -> f64 {
    if cover.is_empty() || trials == 0 {
        return if cover.is_empty() { 1.0 } else { 0.0 };
    }
    let index = CentreIndex::new(cover.vectors(), cover.eta);
    let n = cover.d + 1;
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let count = CHUNK.min(trials - c * CHUNK);
            (0..count)
                .map(|_| index.nearest(&random_unit(&mut rng, n)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// The rotation set `{(R_i) : psi([b], [R_i M_i q_i]) < eta_i for all i}`.
#[derive(Clone, Debug)]
pub struct XSetSpec {
    pub b: Vec<f64>,
    pub q: Vec<Vec<i64>>,
    pub eta: Vec<f64>,
    pub matrices: Vec<Matrix>,
}

impl XSetSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.q.len();
        if k == 0 || self.eta.len() != k || self.matrices.len() != k {
            return Err(Error::invalid("X-set needs k >= 1 matching q, eta and matrices"));
        }
        let n = self.b.len();
        if norm2(&self.b) == 0.0 {
            return Err(Error::invalid("b must be nonzero"));
        }
        for i in 0..k {
            if self.q[i].len() != n || self.matrices[i].dim() != n {
                return Err(Error::invalid("dimension mismatch in X-set"));
            }
            if self.q[i].iter().all(|c| *c == 0) {
                return Err(Error::invalid("q_i must be nonzero"));
            }
            if !(self.eta[i] > 0.0 && self.eta[i] <= 1.0) {
                return Err(Error::invalid("eta_i must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// The images `M_i q_i`.
    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.q
            .iter()
            .zip(&self.matrices)
            .map(|(q, m)| m.apply(&q.iter().map(|&c| c as f64).collect::<Vec<_>>()))
            .collect()
    }

    pub fn contains(&self, rotations: &[Matrix]) -> bool {
        self.targets()
            .iter()
            .zip(rotations)
            .zip(&self.eta)
            .all(|((t, r), eta)| psi(&self.b, &r.apply(t)) < *eta)
    }

    /// `(prod eta_i)^d`.
    pub fn volume_scale(&self) -> f64 {
        let d = self.b.len() as i32 - 1;
        self.eta.iter().product::<f64>().powi(d)
    }
}

/// Haar Monte Carlo estimate of the measure of the X-set with a 95% Wilson
/// interval.
pub fn x_set_measure_mc(spec: &XSetSpec, trials: u64, seed: u64) -> Result<Proportion> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let n = spec.b.len();
    let targets = spec.targets();
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut hits = 0u64;
            for _ in 0..count {
                // Every rotation is drawn so that the stream does not depend
                // on early exits.
                let rs: Vec<Matrix> = targets.iter().map(|_| sample_rotation_with(&mut rng, n)).collect();
                let inside = targets
                    .iter()
                    .zip(&rs)
                    .zip(&spec.eta)
                    .all(|((t, r), eta)| psi(&spec.b, &r.apply(t)) < *eta);
                hits += u64::from(inside);
            }
            hits
        })
        .sum();
    Ok(wilson(hits, trials, Z95))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_counts() {
        let c = build_cap_cover(1, 0.5).unwrap();
        assert!(c.len() <= 8);
        assert!(verify_cover(&c, 10_000, 1) < 0.5);
        let two = build_cap_cover(1, 0.71).unwrap();
        assert_eq!(two.len(), 2);
        assert!(verify_cover(&two, 10_000, 2) < 0.71);
    }

    #[test]
    fn lat_long_covers() {
        let c = build_cap_cover(2, 0.2).unwrap();
        assert!(c.c_cover <= 40.0, "{}", c.c_cover);
        assert!(verify_cover(&c, 20_000, 3) < 0.2);
    }

    #[test]
    fn cube_face_covers_all_dimensions() {
        for d in 1..=3 {
            let c = build_cap_cover_with("cube-face", d, 0.3).unwrap();
            assert!(verify_cover(&c, 5_000, d as u64) < 0.3);
        }
        assert!(matches!(build_cap_cover(4, 0.3), Err(Error::UnsupportedDimension(4))));
        assert!(build_cap_cover_with("angular", 2, 0.3).is_err());
    }

    #[test]
    fn index_matches_full_scan() {
        let c = build_cap_cover(2, 0.3).unwrap();
        let idx = CentreIndex::new(c.vectors(), 0.3);
        let mut rng = crate::rng::seeded_rng(5);
        for _ in 0..500 {
            let v = random_unit(&mut rng, 3);
            let full = c.vectors().iter().map(|x| psi(&v, x)).fold(f64::INFINITY, f64::min);
            assert_eq!(idx.nearest(&v), full);
        }
    }

    #[test]
    fn single_axis_measure() {
        let spec = XSetSpec {
            b: vec![1.0, 0.0],
            q: vec![vec![1, 0]],
            eta: vec![0.25],
            matrices: vec![Matrix::identity(2)],
        };
        let p = x_set_measure_mc(&spec, 20_000, 9).unwrap();
        let exact = 2.0 / PI * 0.25f64.asin();
        assert!((p.estimate - exact).abs() < 3.0 * p.width(), "{p:?}");
    }
}
