//! End-to-end acceptance criteria. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use forestlab::diophantine::{hypothesis_constant, lft3_hypothesis, lft4_witness_search, transference_apply};
use forestlab::experiments::{borel_cantelli_budget, run_experiment, sigma, ExperimentManifest};
use forestlab::linalg::{dist_to_int, norm_inf, psi, sample_rotation, Matrix};
use forestlab::rationality::{dense_forest_check, ForestStatus, SearchLimits};
use forestlab::rng::stream_rng;
use forestlab::sphere_cover::{build_cap_cover, verify_cover, x_set_measure_mc, XSetSpec};
use forestlab::torus::{is_delta_dense, DensityOptions, DensityStatus, FlowMode, FlowSpec};
use rand::Rng;

const PHI: f64 = 1.618_033_988_749_895;
const DELTAS: [f64; 3] = [0.05, 0.1, 0.2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_direction(d: usize, seed: u64) -> Vec<f64> {
    let mut e = vec![0.0; d + 1];
    e[0] = 1.0;
    sample_rotation(d, seed).apply(&e)
}

fn continuous_status(u: &[f64], s: u64, delta: f64) -> DensityStatus {
    let d = u.len() - 1;
    let t = ((d + 1) as f64).sqrt() * s as f64;
    let flow = FlowSpec::new(u, t, delta).unwrap();
    is_delta_dense(&flow, FlowMode::Continuous, DensityOptions::default()).unwrap().status
}

fn planar_suite() -> Verdict {
    let start = Instant::now();
    let id = Matrix::identity(2);
    let limits = SearchLimits::default();

    let same = dense_forest_check(&[id.clone(), id.clone()], limits).unwrap();
    let ok_same = same.status == ForestStatus::NotDenseForest;

    let quarter = Matrix::rotation2(FRAC_PI_4);
    let pair = [id.clone(), quarter];
    let rot = dense_forest_check(&pair, limits).unwrap();
    let glued = rot.witness.as_ref().is_some_and(|w| {
        let a = pair[0].apply(&w.v[0]);
        let b = pair[1].apply(&w.v[1]);
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9) && norm_inf(&a) > 0.0
    });
    let ok_rot = rot.status == ForestStatus::NotDenseForest && glued;

    let irr = Matrix::rotation2((1.0 / std::f64::consts::E).atan());
    let free = dense_forest_check(&[id, irr], SearchLimits { height: 100, ..limits }).unwrap();
    let ok_free = free.status == ForestStatus::NoObstructionUpTo && free.height == 100;

    let elapsed = start.elapsed();
    verdict(
        ok_same && ok_rot && ok_free && elapsed < Duration::from_secs(10),
        format!("(I,I) {ok_same}, (I,R(pi/4)) {ok_rot}, (I,R(atan 1/e)) free to 100 {ok_free}, {elapsed:.2?}"),
    )
}

fn witness_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 1);
    let (mut negatives, mut failures) = (0, 0);
    for trial in 0..1000u64 {
        let d = 1 + (trial % 2) as usize;
        let s_min = ((d + 1) as f64).powf(d as f64 / 2.0).ceil() as u64 + 1;
        let s = rng.random_range(s_min..=50);
        let delta = DELTAS[rng.random_range(0..3)];
        let u = random_direction(d, rng.random());
        if continuous_status(&u, s, delta) != DensityStatus::NotDense {
            continue;
        }
        negatives += 1;
        let sf = s as f64;
        let ok = lft4_witness_search(&u, s, delta).unwrap().is_some_and(|w| {
            let h = w.q.iter().map(|c| c.abs()).max().unwrap_or(0);
            let q: Vec<f64> = w.q.iter().map(|&c| c as f64).collect();
            h > 0
                && (h as f64) < sf.powf(1.0 - 1.0 / d as f64) / delta
                && psi(&u, &q) < (d + 1) as f64 / (h as f64 * sf.powf(1.0 / d as f64))
        });
        if !ok {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures == 0 && elapsed < Duration::from_secs(300),
        format!("{negatives} certified non-dense flows, {failures} without a witness, {elapsed:.2?}"),
    )
}

fn implication_suites() -> Verdict {
    let mut rng = stream_rng(2024, 2);
    let (mut lft2_premises, mut lft2_bad) = (0, 0);
    for trial in 0..1000u64 {
        let d = 1 + (trial % 2) as usize;
        let s = rng.random_range(1..=40u64);
        let delta = DELTAS[rng.random_range(0..3)];
        let u = random_direction(d, rng.random());
        let flow = FlowSpec::new(&u, s as f64, delta).unwrap();
        let section = is_delta_dense(&flow, FlowMode::Discrete, DensityOptions::default()).unwrap();
        if section.status != DensityStatus::Dense {
            continue;
        }
        lft2_premises += 1;
        if continuous_status(&u, s, delta) == DensityStatus::NotDense {
            lft2_bad += 1;
        }
    }
    let (mut lft3_premises, mut lft3_bad) = (0, 0);
    for trial in 0..1000u64 {
        let d = 1 + (trial % 2) as usize;
        let s = rng.random_range(1..=50u64);
        let delta = DELTAS[rng.random_range(0..3)];
        let u = random_direction(d, rng.random());
        if !lft3_hypothesis(&u, s, delta).unwrap().holds {
            continue;
        }
        lft3_premises += 1;
        if continuous_status(&u, s, delta) == DensityStatus::NotDense {
            lft3_bad += 1;
        }
    }
    verdict(
        lft2_bad == 0 && lft3_bad == 0 && lft2_premises > 0 && lft3_premises > 0,
        format!(
            "section-dense {lft2_bad}/{lft2_premises} counterexamples, hypothesis-true {lft3_bad}/{lft3_premises} counterexamples"
        ),
    )
}

/// Enumeration oracle: first `x` in the order 0, 1, -1, ... within `X'` meeting `C'`.
fn transference_oracle(ratios: &[f64], c: f64, x: f64, alpha: &[f64]) -> Option<(i64, u64, f64, f64)> {
    let h = (x.recip() * c.powi(-(ratios.len() as i32))).floor() as u64;
    let c_prime = (h as f64 + 1.0) * c / 2.0;
    let x_prime = (h as f64 + 1.0) * x / 2.0;
    let err = |m: i64| {
        ratios
            .iter()
            .zip(alpha)
            .map(|(r, a)| dist_to_int(m as f64 * r - a))
            .fold(0.0, f64::max)
    };
    let mut order = vec![0i64];
    for m in 1..=x_prime.floor() as i64 {
        order.push(m);
        order.push(-m);
    }
    order
        .into_iter()
        .find(|&m| err(m) <= c_prime * (1.0 + 1e-12))
        .map(|m| (m, h, c_prime, x_prime))
}

fn transference() -> Verdict {
    let mut rng = stream_rng(2024, 3);
    let mut failures = 0;
    let mut cases = 0;
    while cases < 100 {
        let d = 1 + cases % 2;
        // Fractional parts of square roots of non-squares are badly approximable.
        let ratios: Vec<f64> = (0..d)
            .map(|_| loop {
                let n: u32 = rng.random_range(2..2000);
                let r = f64::from(n).sqrt();
                if r.fract() != 0.0 {
                    break r.fract();
                }
            })
            .collect();
        let x = rng.random_range(2.0..40.0);
        let c = hypothesis_constant(&ratios, x);
        if !(c > 1e-9) {
            continue;
        }
        cases += 1;
        for _ in 0..10 {
            let alpha: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let ok = match transference_apply(&ratios, c, x, &alpha) {
                Ok(sol) => {
                    let (_, h, c_prime, x_prime) = transference_oracle(&ratios, c, x, &alpha).unwrap_or_default();
                    let err = ratios
                        .iter()
                        .zip(&alpha)
                        .map(|(r, a)| dist_to_int(sol.x as f64 * r - a))
                        .fold(0.0, f64::max);
                    sol.h == h && (sol.x.abs() as f64) <= x_prime && err <= c_prime * (1.0 + 1e-12)
                }
                Err(_) => false,
            };
            if !ok {
                failures += 1;
            }
        }
    }

    let c = hypothesis_constant(&[PHI], 3.0);
    let golden = [0.0, 0.25, 0.5, 0.9].iter().all(|&a| {
        let sol = transference_apply(&[PHI], c, 3.0, &[a]).unwrap();
        let oracle = transference_oracle(&[PHI], c, 3.0, &[a]).unwrap();
        (sol.x, sol.h, sol.c_prime, sol.x_prime) == oracle && sol.h == 1
    }) && (c - 0.2361).abs() < 1e-4;
    verdict(
        failures == 0 && golden,
        format!("{failures} failures over {cases} ratio vectors x 10 targets, golden instance C={c:.4} {golden}"),
    )
}

fn cap_covers() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for d in [1usize, 2] {
        let mut scaled = Vec::new();
        for eta in [0.4, 0.2, 0.1, 0.05] {
            let cover = build_cap_cover(d, eta).unwrap();
            let gap = verify_cover(&cover, 100_000, 11);
            pass &= gap < eta;
            scaled.push(cover.len() as f64 * eta.powi(d as i32));
        }
        let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= spread <= 4.0;
        notes.push(format!("d={d} count*eta^d spread {spread:.2}"));
    }
    verdict(pass, notes.join(", "))
}

fn measure_bound() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for k in [1usize, 2] {
        let mut ratios = Vec::new();
        for (i, eta) in [0.4, 0.2, 0.1].into_iter().enumerate() {
            let spec = XSetSpec {
                b: vec![1.0, 0.0],
                q: vec![vec![1, 0]; k],
                eta: vec![eta; k],
                matrices: vec![Matrix::identity(2); k],
            };
            let p = x_set_measure_mc(&spec, 100_000, 100 + 10 * k as u64 + i as u64).unwrap();
            ratios.push(p.estimate / eta.powi(k as i32));
            if k == 1 {
                let exact = 2.0 / PI * f64::asin(eta);
                let ok = (p.estimate - exact).abs() <= 3.0 * p.width();
                pass &= ok;
                if !ok {
                    notes.push(format!("closed form off at eta={eta}"));
                }
            }
        }
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        // The measure of a single cap is (2/pi) asin(eta) <= eta, so the ratio stays below 1.
        pass &= hi <= 1.0 && lo > 0.0 && hi / lo <= 2.0;
        notes.push(format!("k={k} ratio in [{lo:.3}, {hi:.3}]"));
    }
    verdict(pass, notes.join(", "))
}

fn metrical_sweep() -> Verdict {
    let start = Instant::now();
    let m = ExperimentManifest::new(1, 3);
    let result = run_experiment(&m).unwrap();
    let s = &result.summary;
    let n = s.samples as f64;
    let upper = s.fits.iter().filter(|f| f.slope.is_some_and(|x| x <= 2.5)).count() as f64 / n;
    let lower = s.fits.iter().filter(|f| f.slope.is_some_and(|x| x >= 0.8)).count() as f64 / n;
    let elapsed = start.elapsed();
    verdict(
        s.samples == 20 && upper >= 0.8 && lower == 1.0 && elapsed < Duration::from_secs(1800),
        format!(
            "{} samples, slope <= 2.5 for {:.0}%, slope >= 0.8 for {:.0}%, median slope {:.3}, {elapsed:.1?}",
            s.samples,
            100.0 * upper,
            100.0 * lower,
            s.slope_quantiles.as_ref().map_or(f64::NAN, |q| q.median),
        ),
    )
}

fn identities() -> Verdict {
    let s13 = sigma(1, 3).unwrap();
    let s25 = sigma(2, 5).unwrap();
    let mut worst: f64 = 0.0;
    for d in 1..=3usize {
        for k in (d * d + 1)..=30 {
            let t = borel_cantelli_budget(d, k, 1.0).threshold.unwrap();
            worst = worst.max((t - sigma(d, k).unwrap()).abs());
        }
    }
    verdict(
        s13 == 1.0 && s25 == 12.0 && worst <= 1e-12,
        format!("sigma(1,3)={s13}, sigma(2,5)={s25}, max |lambda* - sigma| = {worst:.1e}"),
    )
}

fn run_cli(args: &[&str]) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_forestlab"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code(), out.stdout)
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();
    std::fs::write(
        path("pair.json"),
        r#"{"dimension": 2, "grids": [{"matrix": "identity"}, {"matrix": "honeycomb", "translation": [0.3, 0.1]}]}"#,
    )
    .unwrap();
    std::fs::write(
        path("manifest.json"),
        r#"{"d": 1, "k": 2, "samples": 3, "levels": [3, 4, 5, 6], "direction_floor": 0.00390625, "a_l_levels": [2]}"#,
    )
    .unwrap();
    let (pair, manifest) = (path("pair.json"), path("manifest.json"));
    let runs: Vec<Vec<&str>> = vec![
        vec!["check", "--grids", &pair],
        vec!["visibility", "--grids", &pair, "--levels", "1,2,3", "--cap-radius", "0.1", "--format", "csv", "--seed", "5"],
        vec!["flow", "--u", "golden", "--delta", "0.05", "--mode", "fill"],
        vec!["flow", "--u", "0.3,0.5,0.8", "--S", "20", "--delta", "0.1", "--mode", "witness"],
        vec!["cover", "--d", "2", "--eta", "0.2", "--format", "csv", "--seed", "3"],
        vec!["sigma", "--d", "2", "--k", "7", "--lambda", "40", "--format", "table"],
    ];
    let mut differing = Vec::new();
    for args in &runs {
        let (code_a, a) = run_cli(args);
        let (code_b, b) = run_cli(args);
        if a != b || code_a != code_b || a.is_empty() {
            differing.push(args[0].to_string());
        }
    }
    let mut files = Vec::new();
    let out = path("sweep");
    for _ in 0..2 {
        let (code, stdout) = run_cli(&["experiment", "--manifest", &manifest, "--seed", "17", "--out", &out]);
        let read = |f: &str| std::fs::read(Path::new(&out).join(f)).unwrap_or_default();
        files.push((code, stdout, read("raw.csv"), read("a_l.csv"), read("summary.json")));
        std::fs::remove_dir_all(&out).unwrap_or_default();
    }
    if files[0] != files[1] || files[0].2.is_empty() {
        differing.push("experiment".into());
    }
    verdict(
        differing.is_empty(),
        format!("{} commands run twice, differing: {differing:?}", runs.len() + 1),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("planar dense-forest suite", planar_suite),
        ("flow witness equivalence", witness_equivalence),
        ("section and hypothesis implications", implication_suites),
        ("transference", transference),
        ("cap covers", cap_covers),
        ("X-set measure bound", measure_bound),
        ("metrical visibility sweep", metrical_sweep),
        ("identities", identities),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {name}: {}", i + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
