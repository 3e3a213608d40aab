//! Random-rotation forests and the metrical sweep: exponent bookkeeping,
//! sampled visibility profiles with slope fits, and `A_l` membership.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diophantine::line_tube;
use crate::error::{Error, Result};
use crate::grid::{build_rotated_union, build_unipotent, honeycomb, Forest, GridSpec};
use crate::linalg::{norm_inf, psi, sample_rotation_with, Matrix};
use crate::rationality::{dense_forest_check, ForestStatus, SearchLimits};
use crate::registry::{Named, Registry};
use crate::rng::{derive_seed, stream_rng};
use crate::sphere_cover::build_cap_cover;
use crate::stats::{least_squares, quantile};
use crate::visibility::{visibility_profile, LengthRule, ProfileConfig, ProfileLevel};

/// `d^2 (d+1) / (k - d^2)`.
pub fn sigma(d: usize, k: usize) -> Result<f64> {
    let d2 = d * d;
    if d == 0 || k <= d2 {
        return Err(Error::InvalidRegime { d, k });
    }
    Ok((d2 * (d + 1)) as f64 / (k - d2) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BorelCantelli {
    /// `d(1 + lambda + d) - k lambda / d`.
    pub exponent: f64,
    pub converges: bool,
    /// The `lambda` at which the exponent vanishes; absent when `k <= d^2`.
    pub threshold: Option<f64>,
}

pub fn borel_cantelli_budget(d: usize, k: usize, lambda: f64) -> BorelCantelli {
    let (df, kf) = (d as f64, k as f64);
    let exponent = df * (1.0 + lambda + df) - kf * lambda / df;
    BorelCantelli {
        exponent,
        converges: exponent < 0.0,
        threshold: (k > d * d).then(|| df * df * (df + 1.0) / (kf - df * df)),
    }
}

/// `lambda_target` when none is given: `sigma + 1/2`, or `d^2(d+1) + 1/2`
/// outside the regime `k > d^2`.
pub fn default_lambda(d: usize, k: usize) -> f64 {
    sigma(d, k).unwrap_or((d * d * (d + 1)) as f64) + 0.5
}

/// `f(eps) = eps^{-d-lambda}`.
pub fn f_scale(d: usize, lambda: f64, epsilon: f64) -> f64 {
    epsilon.powf(-(d as f64) - lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Preset(String),
    Rows(Vec<Vec<f64>>),
}

impl MatrixInput {
    pub fn to_matrix(&self, n: usize) -> Result<Matrix> {
        let m = match self {
            MatrixInput::Preset(name) => match name.as_str() {
                "identity" => Matrix::identity(n),
                "honeycomb" if n == 2 => honeycomb(),
                other => return Err(Error::invalid(format!("unknown matrix preset '{other}' for n = {n}"))),
            },
            MatrixInput::Rows(rows) => Matrix::from_rows(rows)?,
        };
        if m.dim() != n {
            return Err(Error::invalid("base matrix has the wrong size"));
        }
        Ok(m)
    }
}

fn default_construction() -> String {
    "rotations".into()
}
fn default_levels() -> Vec<u32> {
    vec![3, 4, 5, 6, 7]
}
fn default_samples() -> usize {
    20
}
fn one() -> f64 {
    1.0
}
fn default_height() -> u32 {
    crate::rationality::DEFAULT_HEIGHT
}
fn default_tol() -> f64 {
    crate::rationality::DEFAULT_TOLERANCE
}
fn default_direction_floor() -> f64 {
    0.5f64.powi(12)
}
fn default_budget() -> f64 {
    crate::visibility::DEFAULT_CELL_BUDGET
}
fn default_box() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub d: usize,
    pub k: usize,
    /// One entry per grid; empty means identity matrices.
    #[serde(default)]
    pub base: Vec<MatrixInput>,
    #[serde(default = "default_construction")]
    pub construction: String,
    /// Levels `l` of the ladder `eps = 2^{-l}`.
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub anchors: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda_target: Option<f64>,
    #[serde(default = "one")]
    pub u1: f64,
    #[serde(default = "one")]
    pub u2: f64,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Smallest cap radius used for the direction sets.
    #[serde(default = "default_direction_floor")]
    pub direction_floor: f64,
    #[serde(default)]
    pub length: Option<LengthRule>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_box")]
    pub unipotent_box: f64,
    /// Levels at which `A_l` membership is evaluated.
    #[serde(default)]
    pub a_l_levels: Vec<u32>,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentManifest {
    pub fn new(d: usize, k: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "d": d, "k": k }))
            .expect("minimal manifest deserialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::UnsupportedDimension(self.d));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !self.base.is_empty() && self.base.len() != self.k {
            return Err(Error::invalid("base must list k matrices or be empty"));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("levels must be nonempty and strictly increasing"));
        }
        if self.levels.iter().chain(&self.a_l_levels).any(|l| *l == 0 || *l > 30) {
            return Err(Error::invalid("levels must lie in 1..=30"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples must be positive"));
        }
        if !(self.direction_floor > 0.0 && self.direction_floor < 1.0) {
            return Err(Error::invalid("direction_floor must lie in (0, 1)"));
        }
        if self.lambda_target.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::invalid("lambda_target must be positive"));
        }
        if !(self.u1 > 0.0 && self.u2 > 0.0 && self.tol > 0.0 && self.budget > 0.0) {
            return Err(Error::invalid("u1, u2, tol and budget must be positive"));
        }
        if self.height == 0 || !(self.unipotent_box > 0.0) {
            return Err(Error::invalid("height and unipotent_box must be positive"));
        }
        if !construction_registry().contains(&self.construction) {
            return Err(Error::invalid(format!("unknown construction '{}'", self.construction)));
        }
        Ok(())
    }

    /// Validates and fills every defaulted field explicitly.
    pub fn resolve(&self) -> Result<Self> {
        self.validate()?;
        let n = self.d + 1;
        let mut r = self.clone();
        if r.base.is_empty() {
            r.base = vec![MatrixInput::Preset("identity".into()); r.k];
        }
        for m in &r.base {
            m.to_matrix(n)?;
        }
        r.lambda_target.get_or_insert(default_lambda(r.d, r.k));
        r.length.get_or_insert(LengthRule::default_for(n));
        r.anchors.get_or_insert(4usize.pow(n as u32));
        Ok(r)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_target.unwrap_or_else(|| default_lambda(self.d, self.k))
    }

    pub fn bases(&self) -> Result<Vec<Matrix>> {
        let n = self.d + 1;
        if self.base.is_empty() {
            return Ok(vec![Matrix::identity(n); self.k]);
        }
        self.base.iter().map(|m| m.to_matrix(n)).collect()
    }

    fn al_params(&self) -> AlParams {
        AlParams {
            d: self.d,
            lambda: self.lambda(),
            u1: self.u1,
            u2: self.u2,
            direction_floor: self.direction_floor,
            budget: self.budget,
        }
    }
}

/// Cap radius `2^{-l} / f(2^{-l})`, floored.
pub fn direction_radius(d: usize, lambda: f64, level: u32, floor: f64) -> f64 {
    let eps = 0.5f64.powi(level as i32);
    (eps / f_scale(d, lambda, eps)).max(floor)
}

/// The direction set `D_l` as unit vectors.
pub fn direction_set(d: usize, lambda: f64, level: u32, floor: f64) -> Result<Vec<Vec<f64>>> {
    let eta = direction_radius(d, lambda, level, floor);
    Ok(build_cap_cover(d, eta.min(0.999))?.vectors())
}

/// One random forest together with the parameters it was drawn from.
#[derive(Clone, Debug)]
pub struct Draw {
    pub forest: Forest,
    /// Rotations `R_i` (rotation mode) or unipotent factors `T(x_i)`.
    pub factors: Vec<Matrix>,
}

pub trait ForestConstruction: Named + Send + Sync {
    fn draw(&self, bases: &[Matrix], manifest: &ExperimentManifest, rng: &mut ChaCha8Rng) -> Result<Draw>;
}

fn translate(matrix: &Matrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u: Vec<f64> = (0..matrix.dim()).map(|_| rng.random::<f64>()).collect();
    matrix.apply(&u)
}

/// `R_i M_i Z^{d+1} + g_i` with Haar rotations.
pub struct Rotations;

impl Named for Rotations {
    fn name(&self) -> &'static str {
        "rotations"
    }
}

impl ForestConstruction for Rotations {
    fn draw(&self, bases: &[Matrix], _m: &ExperimentManifest, rng: &mut ChaCha8Rng) -> Result<Draw> {
        let mut factors = Vec::with_capacity(bases.len());
        let mut grids = Vec::with_capacity(bases.len());
        for b in bases {
            let r = sample_rotation_with(rng, b.dim());
            let a = r.mul(b);
            let g = translate(&a, rng);
            grids.push(GridSpec::new(a, g)?);
            factors.push(r);
        }
        Ok(Draw {
            forest: Forest::new(grids)?,
            factors,
        })
    }
}

/// `M_i T(x_i) Z^{d+1} + g_i`, then the union of its rotated copies.
pub struct Unipotent;

impl Named for Unipotent {
    fn name(&self) -> &'static str {
        "unipotent"
    }
}

impl ForestConstruction for Unipotent {
    fn draw(&self, bases: &[Matrix], m: &ExperimentManifest, rng: &mut ChaCha8Rng) -> Result<Draw> {
        let mut factors = Vec::with_capacity(bases.len());
        let mut grids = Vec::with_capacity(bases.len());
        for b in bases {
            let x: Vec<f64> = (0..b.dim() - 1)
                .map(|_| m.unipotent_box * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let t = build_unipotent(&x);
            let a = b.mul(&t);
            let g = translate(&a, rng);
            grids.push(GridSpec::new(a, g)?);
            factors.push(t);
        }
        Ok(Draw {
            forest: build_rotated_union(&Forest::new(grids)?),
            factors,
        })
    }
}

pub fn construction_registry() -> Registry<dyn ForestConstruction> {
    let mut reg: Registry<dyn ForestConstruction> = Registry::new();
    reg.register(Box::new(Rotations));
    reg.register(Box::new(Unipotent));
    reg
}

// ---------------------------------------------------------------------------
// A_l membership

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlParams {
    pub d: usize,
    pub lambda: f64,
    pub u1: f64,
    pub u2: f64,
    pub direction_floor: f64,
    pub budget: f64,
}

impl AlParams {
    pub fn new(d: usize, lambda: f64) -> Self {
        Self {
            d,
            lambda,
            u1: 1.0,
            u2: 1.0,
            direction_floor: default_direction_floor(),
            budget: 1e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlMembership {
    pub level: u32,
    pub member: bool,
    pub b: Option<Vec<f64>>,
    pub q: Vec<Vec<i64>>,
    pub psi: Vec<f64>,
    pub eta: Vec<f64>,
    pub directions: usize,
    /// Open bound on `||q_i||_inf`.
    pub q_bound: f64,
}

fn frobenius(m: &Matrix) -> f64 {
    m.values().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Whether the grid matrices `A_i = R_i M_i` lie in `A_l`, with the first
/// witnessing direction of `D_l` and the smallest `q_i` for each grid.
pub fn a_l_membership(matrices: &[Matrix], level: u32, params: &AlParams) -> Result<AlMembership> {
    let d = params.d;
    let n = d + 1;
    if matrices.is_empty() || matrices.iter().any(|m| m.dim() != n) {
        return Err(Error::invalid("A_l needs k >= 1 matrices of size d + 1"));
    }
    let eps = 0.5f64.powi(level as i32);
    let f = f_scale(d, params.lambda, eps);
    let q_bound = 2f64.powi(level as i32) * params.u1 * f.powf(1.0 - 1.0 / d as f64);
    let top = if q_bound.fract() == 0.0 { q_bound as i64 - 1 } else { q_bound.floor() as i64 };
    let eta_scale = params.u2 * f.powf(-1.0 / d as f64);
    let dirs = direction_set(d, params.lambda, level, params.direction_floor)?;
    let inverses = matrices.iter().map(|m| m.inverse()).collect::<Result<Vec<_>>>()?;
    let radii: Vec<f64> = matrices
        .iter()
        .zip(&inverses)
        .map(|(a, ai)| frobenius(a) * frobenius(ai) * (n as f64).sqrt() * eta_scale)
        .collect();
    let work: f64 = radii
        .iter()
        .map(|r| dirs.len() as f64 * top.max(0) as f64 * (2.0 * r + 2.0).powi(d as i32))
        .sum();
    if work > params.budget {
        return Err(Error::SearchBudgetExceeded {
            size: work,
            budget: params.budget,
        });
    }
    let per_grid = |b: &[f64], i: usize| -> Option<(Vec<i64>, f64, f64)> {
        let w = inverses[i].apply(b);
        let mut best: Option<(Vec<i64>, f64, f64)> = None;
        line_tube(&w, radii[i], top, &mut |q| {
            let mut q = q.to_vec();
            if q.iter().find(|c| **c != 0).is_some_and(|c| *c < 0) {
                q.iter_mut().for_each(|c| *c = -*c);
            }
            let qf: Vec<f64> = q.iter().map(|&c| c as f64).collect();
            let h = norm_inf(&qf);
            let eta = eta_scale / h;
            let angle = psi(b, &matrices[i].apply(&qf));
            if angle < eta
                && best.as_ref().is_none_or(|(bq, _, _)| {
                    let bh = bq.iter().map(|c| c.abs()).max().unwrap_or(0);
                    (h as i64, &q) < (bh, bq)
                })
            {
                best = Some((q, angle, eta));
            }
        });
        best
    };
    let found = dirs.par_iter().find_map_first(|b| {
        (0..matrices.len())
            .map(|i| per_grid(b, i))
            .collect::<Option<Vec<_>>>()
            .map(|hits| (b.clone(), hits))
    });
    Ok(match found {
        Some((b, hits)) => AlMembership {
            level,
            member: true,
            b: Some(b),
            q: hits.iter().map(|h| h.0.clone()).collect(),
            psi: hits.iter().map(|h| h.1).collect(),
            eta: hits.iter().map(|h| h.2).collect(),
            directions: dirs.len(),
            q_bound,
        },
        None => AlMembership {
            level,
            member: false,
            b: None,
            q: Vec::new(),
            psi: Vec::new(),
            eta: Vec::new(),
            directions: dirs.len(),
            q_bound,
        },
    })
}

// ---------------------------------------------------------------------------
// Sweep

/// One row per (sample, level); the only input of [`summarize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub sample_id: usize,
    pub level: u32,
    pub epsilon: f64,
    pub v_hat: Option<f64>,
    pub blocked: bool,
    pub blocked_queries: usize,
    pub queries: usize,
    pub verdict: String,
    pub witness_grid: Option<usize>,
    pub witness_coords: String,
    pub anchor: String,
    pub direction: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlRow {
    pub sample_id: usize,
    pub level: u32,
    pub member: Option<bool>,
    pub b: String,
    pub q: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFit {
    pub sample_id: usize,
    pub verdict: String,
    pub points: usize,
    pub blocked_levels: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub residuals: Vec<f64>,
    pub inconclusive: bool,
    pub non_forest: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeQuantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlFrequency {
    pub level: u32,
    pub members: usize,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentManifest,
    pub sigma: Option<f64>,
    pub lambda_target: f64,
    /// `d + sigma + 1/2`.
    pub upper_threshold: Option<f64>,
    /// `d - 0.2`.
    pub lower_threshold: f64,
    pub samples: usize,
    pub fitted: usize,
    pub inconclusive: usize,
    pub non_forest: usize,
    pub errors: usize,
    pub slope_quantiles: Option<SlopeQuantiles>,
    /// Fraction of all samples with a fitted slope at most the upper threshold.
    pub pass_rate_upper: Option<f64>,
    /// Fraction of all samples with a fitted slope at least the lower threshold.
    pub pass_rate_lower: f64,
    pub a_l: Vec<AlFrequency>,
    pub fits: Vec<SampleFit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub manifest: ExperimentManifest,
    pub raw: Vec<RawRow>,
    pub a_l: Vec<AlRow>,
    pub summary: Summary,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn status_name(s: &ForestStatus) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn sample_rows(
    m: &ExperimentManifest,
    bases: &[Matrix],
    directions: &[Vec<Vec<f64>>],
    sample_id: usize,
) -> (Vec<RawRow>, Vec<AlRow>) {
    let reg = construction_registry();
    let construction = reg.get(&m.construction).expect("validated construction");
    let mut rng = stream_rng(m.seed, sample_id as u64);
    let error_rows = |verdict: &str, err: &Error| -> Vec<RawRow> {
        m.levels
            .iter()
            .map(|&level| RawRow {
                sample_id,
                level,
                epsilon: 0.5f64.powi(level as i32),
                v_hat: None,
                blocked: false,
                blocked_queries: 0,
                queries: 0,
                verdict: verdict.to_string(),
                witness_grid: None,
                witness_coords: String::new(),
                anchor: String::new(),
                direction: String::new(),
                error: err.to_string(),
            })
            .collect()
    };
    let draw = match construction.draw(bases, m, &mut rng) {
        Ok(d) => d,
        Err(e) => return (error_rows("", &e), Vec::new()),
    };
    let limits = SearchLimits {
        height: m.height,
        tol: m.tol,
        ..SearchLimits::default()
    };
    let verdict = match dense_forest_check(&draw.forest.matrices(), limits) {
        Ok(v) => status_name(&v.status),
        Err(e) if e.is_budget() => "budget_exceeded".to_string(),
        Err(e) => format!("error: {e}"),
    };
    let config = ProfileConfig {
        anchors: m.anchors,
        seed: derive_seed(m.seed, sample_id as u64),
        length: m.length.unwrap_or(LengthRule::default_for(m.d + 1)),
        budget: m.budget,
    };
    let raw = match visibility_profile(&draw.forest, &m.levels, directions, &config) {
        Ok(levels) => levels.iter().map(|p| profile_row(sample_id, &verdict, p)).collect(),
        Err(e) => error_rows(&verdict, &e),
    };
    let al = if m.construction == "rotations" {
        let mats = draw.forest.matrices();
        m.a_l_levels
            .iter()
            .map(|&level| match a_l_membership(&mats, level, &m.al_params()) {
                Ok(a) => AlRow {
                    sample_id,
                    level,
                    member: Some(a.member),
                    b: a.b.as_deref().map(join).unwrap_or_default(),
                    q: a.q.iter().map(|q| join(q)).collect::<Vec<_>>().join("|"),
                    error: String::new(),
                },
                Err(e) => AlRow {
                    sample_id,
                    level,
                    member: None,
                    b: String::new(),
                    q: String::new(),
                    error: e.to_string(),
                },
            })
            .collect()
    } else {
        Vec::new()
    };
    (raw, al)
}

fn profile_row(sample_id: usize, verdict: &str, p: &ProfileLevel) -> RawRow {
    let arg = p.argmax.as_ref();
    let witness = arg.and_then(|a| a.witness.as_ref());
    RawRow {
        sample_id,
        level: p.level,
        epsilon: p.epsilon,
        v_hat: p.v_hat,
        blocked: p.blocked,
        blocked_queries: p.blocked_queries,
        queries: p.queries,
        verdict: verdict.to_string(),
        witness_grid: witness.map(|w| w.grid),
        witness_coords: witness.map(|w| join(&w.coords)).unwrap_or_default(),
        anchor: arg.map(|a| join(&a.anchor)).unwrap_or_default(),
        direction: arg.map(|a| join(&a.direction)).unwrap_or_default(),
        error: String::new(),
    }
}

/// Runs the sweep described by `manifest`. Per-sample failures are recorded
/// in the rows and never abort the run.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    let m = manifest.resolve()?;
    let bases = m.bases()?;
    let lambda = m.lambda();
    let mut cache: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    let mut directions = Vec::with_capacity(m.levels.len());
    for &l in &m.levels {
        let eta = direction_radius(m.d, lambda, l, m.direction_floor);
        if !cache.contains_key(&eta.to_bits()) {
            cache.insert(eta.to_bits(), direction_set(m.d, lambda, l, m.direction_floor)?);
        }
        directions.push(cache[&eta.to_bits()].clone());
    }
    let rows: Vec<(Vec<RawRow>, Vec<AlRow>)> = (0..m.samples)
        .into_par_iter()
        .map(|s| sample_rows(&m, &bases, &directions, s))
        .collect();
    let (raw, a_l): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let raw: Vec<RawRow> = raw.into_iter().flatten().collect();
    let a_l: Vec<AlRow> = a_l.into_iter().flatten().collect();
    let summary = summarize(&m, &raw, &a_l);
    Ok(ExperimentResult {
        manifest: m,
        raw,
        a_l,
        summary,
    })
}

/// Aggregates raw rows. Slopes are least-squares fits of `ln V` against
/// `ln(1/eps)` over unblocked levels; fewer than four usable levels leave the
/// sample inconclusive.
pub fn summarize(m: &ExperimentManifest, raw: &[RawRow], a_l: &[AlRow]) -> Summary {
    let mut by_sample: BTreeMap<usize, Vec<&RawRow>> = BTreeMap::new();
    for r in raw {
        by_sample.entry(r.sample_id).or_default().push(r);
    }
    let fits: Vec<SampleFit> = by_sample
        .iter()
        .map(|(&sample_id, rows)| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| r.v_hat.map(|v| ((1.0 / r.epsilon).ln(), v.ln())))
                .unzip();
            let fit = if x.len() >= 4 { least_squares(&x, &y) } else { None };
            let blocked_levels = rows.iter().filter(|r| r.blocked).count();
            let verdict = rows[0].verdict.clone();
            let error = rows.iter().find(|r| !r.error.is_empty()).map(|r| r.error.clone());
            SampleFit {
                sample_id,
                points: x.len(),
                blocked_levels,
                slope: fit.as_ref().map(|f| f.slope),
                intercept: fit.as_ref().map(|f| f.intercept),
                residuals: fit.as_ref().map(|f| f.residuals.clone()).unwrap_or_default(),
                inconclusive: fit.is_none(),
                non_forest: verdict == "not_dense_forest" || blocked_levels > 0,
                verdict,
                error,
            }
        })
        .collect();
    let slopes: Vec<f64> = fits.iter().filter_map(|f| f.slope).collect();
    let sigma = sigma(m.d, m.k).ok();
    let lambda_target = m.lambda();
    let upper_threshold = sigma.map(|s| m.d as f64 + s + 0.5);
    let lower_threshold = m.d as f64 - 0.2;
    let total = fits.len().max(1) as f64;
    let slope_quantiles = (!slopes.is_empty()).then(|| SlopeQuantiles {
        min: quantile(&slopes, 0.0).unwrap(),
        q25: quantile(&slopes, 0.25).unwrap(),
        median: quantile(&slopes, 0.5).unwrap(),
        q75: quantile(&slopes, 0.75).unwrap(),
        max: quantile(&slopes, 1.0).unwrap(),
    });
    let mut freq: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in a_l {
        let e = freq.entry(r.level).or_default();
        if let Some(member) = r.member {
            e.1 += 1;
            e.0 += usize::from(member);
        }
    }
    Summary {
        config: m.clone(),
        sigma,
        lambda_target,
        upper_threshold,
        lower_threshold,
        samples: fits.len(),
        fitted: slopes.len(),
        inconclusive: fits.iter().filter(|f| f.inconclusive).count(),
        non_forest: fits.iter().filter(|f| f.non_forest).count(),
        errors: fits.iter().filter(|f| f.error.is_some()).count(),
        slope_quantiles,
        pass_rate_upper: upper_threshold
            .map(|t| slopes.iter().filter(|s| **s <= t).count() as f64 / total),
        pass_rate_lower: slopes.iter().filter(|s| **s >= lower_threshold).count() as f64 / total,
        a_l: freq
            .into_iter()
            .map(|(level, (members, evaluated))| AlFrequency {
                level,
                members,
                evaluated,
            })
            .collect(),
        fits,
    }
}

pub const RAW_FILE: &str = "raw.csv";
pub const A_L_FILE: &str = "a_l.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes the raw tables first, then the summary.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join(RAW_FILE), &result.raw)?;
    write_csv(&dir.join(A_L_FILE), &result.a_l)?;
    let mut text = serde_json::to_string_pretty(&result.summary)?;
    text.push('\n');
    fs::write(dir.join(SUMMARY_FILE), text)?;
    Ok(())
}

/// Rebuilds the summary of a written run from its raw tables alone.
pub fn resummarize(dir: &Path, manifest: &ExperimentManifest) -> Result<Summary> {
    let raw: Vec<RawRow> = read_csv(&dir.join(RAW_FILE))?;
    let a_l: Vec<AlRow> = read_csv(&dir.join(A_L_FILE))?;
    Ok(summarize(&manifest.resolve()?, &raw, &a_l))
}
