//! Linear flows on the torus: wrapped segments, discrete sections,
//! sup-norm density decisions and filling times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::normalize;

/// Largest torus dimension handled by the density decider.
pub const MAX_TORUS_DIM: usize = 4;
pub const DEFAULT_FLOOR_FACTOR: f64 = 1e-3;
pub const DEFAULT_BOX_BUDGET: usize = 20_000_000;

type P = [f64; MAX_TORUS_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    /// Unit direction in `R^{d+1}`.
    pub u: Vec<f64>,
    /// `T` for continuous flows, `S` for discrete ones.
    pub horizon: f64,
    pub delta: f64,
}

impl FlowSpec {
    pub fn new(u: &[f64], horizon: f64, delta: f64) -> Result<Self> {
        if u.len() < 2 || u.len() > MAX_TORUS_DIM {
            return Err(Error::UnsupportedDimension(u.len()));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon must be a finite non-negative number"));
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::invalid("delta must lie in (0, 1/2]"));
        }
        Ok(Self {
            u: normalize(u)?,
            horizon,
            delta,
        })
    }
}

/// Index of the coordinate of largest magnitude, the last one on ties.
pub fn pivot(u: &[f64]) -> Result<usize> {
    let max = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max < 1e-15 {
        return Err(Error::ZeroPivot);
    }
    Ok((0..u.len()).rev().find(|&i| u[i].abs() == max).unwrap())
}

/// `u_i / u_pivot` over the non-pivot coordinates.
pub fn pivot_ratios(u: &[f64]) -> Result<Vec<f64>> {
    let p = pivot(u)?;
    Ok((0..u.len()).filter(|&i| i != p).map(|i| u[i] / u[p]).collect())
}

fn wrap(x: f64) -> f64 {
    let v = x - x.floor();
    if v >= 1.0 - 1e-12 {
        0.0
    } else {
        v
    }
}

/// `Sigma_S(u)`: the points `m (u_i / u_pivot)_i mod 1` for `|m| <= S`,
/// duplicates removed, sorted.
pub fn discrete_flow(u: &[f64], s: u64) -> Result<Vec<Vec<f64>>> {
    let ratios = pivot_ratios(u)?;
    let s = s as i64;
    let mut pts: Vec<Vec<f64>> = (-s..=s)
        .map(|m| ratios.iter().map(|r| wrap(m as f64 * r)).collect())
        .collect();
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    Ok(pts)
}

/// A piece of a flow set inside the closed unit cube: `start + t dir` for
/// `t in [0, len]` (a point when `len == 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: Vec<f64>,
    pub dir: Vec<f64>,
    pub len: f64,
}

/// Decomposes `Delta_T(u)` into segments, one per cube crossing. The
/// boolean is true when the segment cap was hit and the section points
/// were used instead.
pub fn continuous_pieces(u: &[f64], t: f64) -> Result<(Vec<Piece>, bool)> {
    let n = u.len();
    let d = n - 1;
    let cap = 4.0 * (d as f64 + 1.0) * t + 4.0;
    let mut times = vec![-t, t];
    for &ui in u {
        if ui.abs() < 1e-300 {
            continue;
        }
        let lim = (t * ui.abs()).ceil() as i64;
        for m in -lim..=lim {
            let tm = m as f64 / ui;
            if tm > -t && tm < t {
                times.push(tm);
            }
        }
        if times.len() as f64 > cap + 2.0 {
            break;
        }
    }
    if times.len() as f64 > cap + 2.0 {
        let p = pivot(u)?;
        let s = (t * u[p].abs()).floor() as u64;
        let pieces = discrete_flow(u, s)?
            .into_iter()
            .map(|x| {
                let mut start = x;
                start.insert(p, 0.0);
                Piece {
                    start,
                    dir: u.to_vec(),
                    len: 0.0,
                }
            })
            .collect();
        return Ok((pieces, true));
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let mut pieces = Vec::with_capacity(times.len());
    if times.len() == 1 || t == 0.0 {
        let start = vec![0.0; n];
        return Ok((
            vec![Piece {
                start,
                dir: u.to_vec(),
                len: 0.0,
            }],
            false,
        ));
    }
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let start: Vec<f64> = u
            .iter()
            .map(|ui| {
                let cell = (mid * ui).floor();
                a * ui - cell
            })
            .collect();
        pieces.push(Piece {
            start,
            dir: u.to_vec(),
            len: b - a,
        });
    }
    Ok((pieces, false))
}

/// Pieces of the section flow, points in `[0, 1)^d`.
pub fn discrete_pieces(u: &[f64], s: u64) -> Result<Vec<Piece>> {
    Ok(discrete_flow(u, s)?
        .into_iter()
        .map(|x| {
            let d = x.len();
            Piece {
                start: x,
                dir: vec![0.0; d],
                len: 0.0,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Distances

#[derive(Clone, Copy)]
struct Seg {
    start: P,
    dir: P,
    len: f64,
}

/// Sup-norm distance from `x` to the segment `s`, in `n` coordinates.
fn seg_dist(x: &P, s: &Seg, shift: &P, n: usize) -> f64 {
    let mut a = [0.0; MAX_TORUS_DIM];
    for i in 0..n {
        a[i] = x[i] - s.start[i] - shift[i];
    }
    let f = |t: f64| {
        let mut m = 0.0_f64;
        for i in 0..n {
            m = m.max((a[i] - t * s.dir[i]).abs());
        }
        m
    };
    if s.len == 0.0 {
        return f(0.0);
    }
    let mut best = f(0.0).min(f(s.len));
    let mut consider = |t: f64| {
        if t > 0.0 && t < s.len {
            best = best.min(f(t));
        }
    };
    for i in 0..n {
        let ui = s.dir[i];
        if ui != 0.0 {
            consider(a[i] / ui);
        }
        for j in (i + 1)..n {
            let uj = s.dir[j];
            if ui != uj {
                consider((a[i] - a[j]) / (ui - uj));
            }
            if ui != -uj {
                consider((a[i] + a[j]) / (ui + uj));
            }
        }
    }
    best
}

fn to_seg(p: &Piece) -> Seg {
    let mut start = [0.0; MAX_TORUS_DIM];
    let mut dir = [0.0; MAX_TORUS_DIM];
    start[..p.start.len()].copy_from_slice(&p.start);
    dir[..p.dir.len()].copy_from_slice(&p.dir);
    Seg {
        start,
        dir,
        len: p.len,
    }
}

fn shifts(n: usize) -> Vec<P> {
    let count = 3usize.pow(n as u32);
    (0..count)
        .map(|mut c| {
            let mut s = [0.0; MAX_TORUS_DIM];
            for v in s.iter_mut().take(n) {
                *v = (c % 3) as f64 - 1.0;
                c /= 3;
            }
            s
        })
        .collect()
}

/// Exact sup-norm torus distance from `x` to the union of `pieces`.
pub fn torus_distance(x: &[f64], pieces: &[Piece]) -> f64 {
    let n = x.len();
    let mut xp = [0.0; MAX_TORUS_DIM];
    for (i, v) in x.iter().enumerate() {
        xp[i] = wrap(*v);
    }
    let sh = shifts(n);
    pieces
        .iter()
        .map(|p| {
            let s = to_seg(p);
            sh.iter()
                .map(|k| seg_dist(&xp, &s, k, n))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Density decisions

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    /// Boxes smaller than `floor_factor * delta` are left undecided.
    pub floor_factor: f64,
    pub box_budget: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            floor_factor: DEFAULT_FLOOR_FACTOR,
            box_budget: DEFAULT_BOX_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityStatus {
    Dense,
    NotDense,
    /// No counterexample found, but some boxes reached the resolution floor.
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarPoint {
    pub point: Vec<f64>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub status: DensityStatus,
    pub dense: bool,
    pub delta: f64,
    /// Smallest box radius the decision relied on.
    pub resolution: f64,
    pub farthest: Option<FarPoint>,
    pub boxes: usize,
    pub undecided_boxes: usize,
    /// True when the continuous flow was replaced by section points.
    pub approximate: bool,
}

struct CellIndex {
    n: usize,
    g: usize,
    segs: Vec<Seg>,
    /// Per cell: (segment index, shift).
    cells: Vec<Vec<(u32, P)>>,
}

impl CellIndex {
    fn build(pieces: &[Piece], n: usize, delta: f64) -> Self {
        let cap = match n {
            1 => 4096,
            2 => 256,
            3 => 48,
            _ => 16,
        };
        let g = ((1.0 / delta).ceil() as usize).clamp(1, cap);
        let h = 1.0 / g as f64;
        let mut segs = Vec::new();
        for p in pieces {
            // Split long pieces so each registers into few cells.
            let parts = ((p.len / h).ceil() as usize).max(1);
            let step = p.len / parts as f64;
            let base = to_seg(p);
            for k in 0..parts {
                let mut s = base;
                for i in 0..n {
                    s.start[i] = base.start[i] + k as f64 * step * base.dir[i];
                }
                s.len = step;
                segs.push(s);
            }
        }
        let total = g.pow(n as u32);
        let mut cells: Vec<Vec<(u32, P)>> = vec![Vec::new(); total];
        let margin = delta * (1.0 + 1e-9) + 1e-12;
        for (si, s) in segs.iter().enumerate() {
            let mut lo = [0i64; MAX_TORUS_DIM];
            let mut hi = [0i64; MAX_TORUS_DIM];
            for i in 0..n {
                let e = s.start[i] + s.len * s.dir[i];
                let (a, b) = (s.start[i].min(e), s.start[i].max(e));
                lo[i] = ((a - margin) * g as f64).floor() as i64;
                hi[i] = ((b + margin) * g as f64).floor() as i64;
            }
            let mut idx = lo;
            loop {
                let mut cell = 0usize;
                let mut shift = [0.0; MAX_TORUS_DIM];
                for i in (0..n).rev() {
                    let w = idx[i].rem_euclid(g as i64) as usize;
                    shift[i] = -(idx[i].div_euclid(g as i64) as f64);
                    cell = cell * g + w;
                }
                cells[cell].push((si as u32, shift));
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    idx[i] += 1;
                    if idx[i] <= hi[i] {
                        break;
                    }
                    idx[i] = lo[i];
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
        Self { n, g, segs, cells }
    }

    fn dist(&self, x: &P, cell: usize) -> f64 {
        self.cells[cell]
            .iter()
            .map(|(si, sh)| seg_dist(x, &self.segs[*si as usize], sh, self.n))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when a single entry is within delta of every corner of the box.
    fn corners_covered(&self, c: &P, r: f64, cell: usize, delta: f64) -> bool {
        let corners = 1usize << self.n;
        self.cells[cell].iter().any(|(si, sh)| {
            (0..corners).all(|mask| {
                let mut x = *c;
                for i in 0..self.n {
                    x[i] += if mask >> i & 1 == 1 { r } else { -r };
                }
                seg_dist(&x, &self.segs[*si as usize], sh, self.n) <= delta
            })
        })
    }
}

/// Decides sup-norm `delta`-density of the union of `pieces` in `[0,1)^n`.
pub fn density_of_pieces(
    pieces: &[Piece],
    n: usize,
    delta: f64,
    opts: DensityOptions,
) -> Result<DensityReport> {
    if n == 0 || n > MAX_TORUS_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    let index = CellIndex::build(pieces, n, delta);
    let g = index.g;
    let half = 0.5 / g as f64;
    let floor = delta * opts.floor_factor;
    let guard = 1e-12;
    let mut boxes = 0usize;
    let mut far: Option<(P, f64)> = None;
    let mut stack: Vec<(P, f64, usize)> = Vec::new();

    for cell in 0..g.pow(n as u32) {
        let mut c = [0.0; MAX_TORUS_DIM];
        let mut rem = cell;
        for v in c.iter_mut().take(n) {
            *v = ((rem % g) as f64 + 0.5) / g as f64;
            rem /= g;
        }
        boxes += 1;
        let dist = index.dist(&c, cell);
        if dist > delta + guard {
            if far.is_none_or(|(_, f)| dist > f) {
                far = Some((c, dist));
            }
        } else if dist + half > delta {
            stack.push((c, half, cell));
        }
    }
    let mut undecided = 0usize;
    let mut resolution = half;
    if far.is_none() {
        // Depth-first so the stack stays small; children pushed in reverse
        // so they are visited in index order.
        stack.reverse();
        while let Some((c, r, cell)) = stack.pop() {
            if index.corners_covered(&c, r, cell, delta) {
                continue;
            }
            let child = 0.5 * r;
            if child < floor {
                undecided += 1;
                resolution = resolution.min(r);
                continue;
            }
            let mut found = None;
            let mut kids = Vec::with_capacity(1 << n);
            for mask in 0..(1usize << n) {
                let mut x = c;
                for i in 0..n {
                    x[i] += if mask >> i & 1 == 1 { child } else { -child };
                }
                boxes += 1;
                let dist = index.dist(&x, cell);
                if dist > delta + guard {
                    found = Some((x, dist));
                    break;
                }
                if dist + child > delta {
                    kids.push((x, child, cell));
                }
            }
            resolution = resolution.min(child);
            if let Some(f) = found {
                far = Some(f);
                break;
            }
            if boxes > opts.box_budget {
                return Err(Error::RecursionBudgetExceeded {
                    budget: opts.box_budget,
                });
            }
            stack.extend(kids.into_iter().rev());
        }
    }
    let farthest = far.map(|(c, _)| {
        let point = c[..n].to_vec();
        let distance = torus_distance(&point, pieces);
        FarPoint { point, distance }
    });
    let status = if farthest.is_some() {
        DensityStatus::NotDense
    } else if undecided > 0 {
        DensityStatus::Undecided
    } else {
        DensityStatus::Dense
    };
    Ok(DensityReport {
        status,
        dense: status == DensityStatus::Dense,
        delta,
        resolution,
        farthest,
        boxes,
        undecided_boxes: undecided,
        approximate: false,
    })
}

/// Density of `Delta_T(u)` in `[0,1)^{d+1}` or of `Sigma_S(u)` in `[0,1)^d`.
pub fn is_delta_dense(flow: &FlowSpec, mode: FlowMode, opts: DensityOptions) -> Result<DensityReport> {
    match mode {
        FlowMode::Continuous => {
            let (pieces, approximate) = continuous_pieces(&flow.u, flow.horizon)?;
            let mut r = density_of_pieces(&pieces, flow.u.len(), flow.delta, opts)?;
            r.approximate = approximate;
            Ok(r)
        }
        FlowMode::Discrete => {
            let s = flow.horizon.floor() as u64;
            let pieces = discrete_pieces(&flow.u, s)?;
            density_of_pieces(&pieces, flow.u.len() - 1, flow.delta, opts)
        }
    }
}

// ---------------------------------------------------------------------------
// Filling times

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FillingTime {
    Finite { time: f64, lower: f64, upper: f64 },
    /// The orbit is closed with the given period and never becomes dense.
    Infinite { period: f64 },
    /// Not filled within the searched horizon.
    Unresolved { horizon: f64 },
}

impl FillingTime {
    pub fn time(&self) -> Option<f64> {
        match self {
            FillingTime::Finite { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// Length of the closed orbit when `u` is parallel to a small integer vector.
pub fn orbit_period(u: &[f64]) -> Option<f64> {
    let scale = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let len = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    for mult in 1..=1000u32 {
        let v: Vec<f64> = u.iter().map(|x| x / scale * f64::from(mult)).collect();
        if v.iter().all(|x| (x - x.round()).abs() < 1e-10) {
            let p: f64 = v.iter().map(|x| x.round().powi(2)).sum::<f64>().sqrt();
            return Some(p / len);
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillOptions {
    pub density: DensityOptions,
    pub max_horizon: f64,
    pub rel_tol: f64,
}

impl Default for FillOptions {
    fn default() -> Self {
        Self {
            density: DensityOptions::default(),
            max_horizon: 1e4,
            rel_tol: 1e-3,
        }
    }
}

fn filled(u: &[f64], t: f64, delta: f64, opts: DensityOptions) -> Result<bool> {
    let flow = FlowSpec::new(u, t, delta)?;
    let r = is_delta_dense(&flow, FlowMode::Continuous, opts)?;
    // A flow with no certified hole at the resolution floor counts as filled.
    Ok(r.status != DensityStatus::NotDense)
}

/// Infimum of the `T` making `Delta_T(u)` sup-norm `delta`-dense.
pub fn filling_time(u: &[f64], delta: f64, opts: FillOptions) -> Result<FillingTime> {
    let u = normalize(u)?;
    let period = orbit_period(&u);
    let cap = match period {
        Some(p) => (p / 2.0).min(opts.max_horizon),
        None => opts.max_horizon,
    };
    if !filled(&u, cap, delta, opts.density)? {
        return Ok(match period {
            Some(p) if p / 2.0 <= opts.max_horizon => FillingTime::Infinite { period: p },
            _ => FillingTime::Unresolved { horizon: cap },
        });
    }
    let mut hi = cap.min(1.0);
    let mut lo = 0.0;
    while !filled(&u, hi, delta, opts.density)? {
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > opts.rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if filled(&u, mid, delta, opts.density)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(FillingTime::Finite {
        time: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
    })
}
