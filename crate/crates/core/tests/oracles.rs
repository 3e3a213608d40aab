use std::f64::consts::{FRAC_PI_4, PI};

use forestlab::diophantine::{hypothesis_constant, lft3_hypothesis, transference_apply};
use forestlab::exact::{self, from_i64, Rational};
use forestlab::experiments::{
    a_l_membership, f_scale, resummarize, run_experiment, write_artifacts, AlParams,
    ExperimentManifest,
};
use forestlab::grid::{build_rotated_union, build_unipotent, rotated_copy_frames, Forest, GridSpec};
use forestlab::linalg::{normalize, sample_rotation, Matrix};
use forestlab::rationality::{
    dense_forest_check, direction_dependence, integer_relation, primitive_vectors,
    verify_forest_witness, SearchLimits,
};
use forestlab::rng::seeded_rng;
use forestlab::sphere_cover::{build_cap_cover, verify_cover, x_set_measure_mc, CapCover, XSetSpec};
use forestlab::torus::{
    discrete_flow, filling_time, is_delta_dense, DensityOptions, DensityStatus, FillOptions,
    FlowMode, FlowSpec,
};
use num_traits::{Signed, ToPrimitive};
use rand::Rng;

const PHI: f64 = 1.618_033_988_749_895;

#[test]
fn golden_discrete_flow_matches_direct_evaluation() {
    let u = [1.0, PHI];
    let pts = discrete_flow(&u, 10).unwrap();
    assert_eq!(pts.len(), 21);
    let mut direct: Vec<f64> = (-10..=10).map(|m| (m as f64 / PHI).rem_euclid(1.0)).collect();
    direct.sort_by(f64::total_cmp);
    for (p, d) in pts.iter().zip(&direct) {
        assert!((p[0] - d).abs() < 1e-12);
    }
}

#[test]
fn quarter_turn_witness_glues_the_grids() {
    let ms = [Matrix::identity(2), Matrix::rotation2(FRAC_PI_4)];
    let v = dense_forest_check(&ms, SearchLimits::default()).unwrap();
    let w = v.witness.unwrap();
    assert!(verify_forest_witness(&ms, &w, 1e-9));
    let a = ms[0].apply(&w.v[0]);
    let b = ms[1].apply(&w.v[1]);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
    // Every grid sees the witnessing direction as rational.
    let dep = direction_dependence(&ms, &w.b, 50, 1e-9).unwrap();
    assert!(dep.iter().all(|g| g.dependent()));
}

#[test]
fn irrational_direction_is_unobstructed_for_z2() {
    let b = normalize(&[1.0, 2f64.sqrt()]).unwrap();
    let dep = direction_dependence(&[Matrix::identity(2)], &b, 1000, 1e-9).unwrap();
    assert!(!dep[0].dependent());
    let e1 = direction_dependence(&[Matrix::identity(2)], &[1.0, 0.0], 10, 1e-9).unwrap();
    assert_eq!(e1[0].relation.as_ref().unwrap().q, vec![0, 1]);
}

fn random_rational_matrix<R: Rng>(rng: &mut R) -> Vec<Rational> {
    loop {
        let m: Vec<Rational> = (0..4)
            .map(|_| Rational::new(rng.random_range(-5i64..=5).into(), rng.random_range(1i64..=4).into()))
            .collect();
        if exact::inverse(2, &m).is_some() {
            return m;
        }
    }
}

/// In the plane, grids i and j share a rational direction iff some primitive
/// p_1 makes M_2^T M_1^{-T} p_1 proportional to an integer vector of height <= H.
fn planar_oracle(m1: &[Rational], m2: &[Rational], h: u32) -> bool {
    let a = exact::mat_mul(2, &exact::transpose(2, m2), &exact::transpose(2, &exact::inverse(2, m1).unwrap()));
    primitive_vectors(2, h).iter().any(|p| {
        let p: Vec<Rational> = p.iter().map(|&c| from_i64(c)).collect();
        let img = exact::normalize_integral(&exact::mat_vec(2, &a, &p));
        img.iter().all(|c| c.abs().to_integer().to_i64().is_some_and(|x| x <= i64::from(h)))
    })
}

#[test]
fn planar_criterion_agrees_with_direction_scan() {
    let mut rng = seeded_rng(2024);
    let limits = SearchLimits {
        height: 12,
        ..SearchLimits::default()
    };
    for _ in 0..100 {
        let m1 = random_rational_matrix(&mut rng);
        let m2 = random_rational_matrix(&mut rng);
        let rows = |m: &[Rational]| vec![m[0..2].to_vec(), m[2..4].to_vec()];
        let ms = [
            Matrix::from_exact_rows(&rows(&m1)).unwrap(),
            Matrix::from_exact_rows(&rows(&m2)).unwrap(),
        ];
        let verdict = dense_forest_check(&ms, limits).unwrap();
        assert_eq!(verdict.is_not_dense(), planar_oracle(&m1, &m2, 12));
        if let Some(w) = verdict.witness {
            assert!(w.exact && w.residual == 0.0);
            assert!(verify_forest_witness(&ms, &w, 1e-9));
        }
    }
}

#[test]
fn golden_filling_time_scales_like_one_over_delta() {
    let u = [1.0, PHI];
    let products: Vec<f64> = (3..=7)
        .map(|l| {
            let delta = 0.5f64.powi(l);
            let t = filling_time(&u, delta, FillOptions::default()).unwrap().time().unwrap();
            t * delta
        })
        .collect();
    let max = products.iter().cloned().fold(0.0, f64::max);
    let min = products.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 8.0, "{products:?}");
}

#[test]
fn lft3_hypothesis_implies_density_for_golden_flow() {
    let u = normalize(&[1.0, PHI]).unwrap();
    let h = lft3_hypothesis(&u, 25, 0.2).unwrap();
    if h.holds {
        let flow = FlowSpec::new(&u, 2f64.sqrt() * 25.0, 0.2).unwrap();
        let r = is_delta_dense(&flow, FlowMode::Continuous, DensityOptions::default()).unwrap();
        assert_eq!(r.status, DensityStatus::Dense);
    }
}

#[test]
fn transference_near_half_ratio() {
    let ratio = [0.5 - 1e-3];
    let x = 10.0;
    let c = hypothesis_constant(&ratio, x);
    let mut rng = seeded_rng(4);
    for _ in 0..1000 {
        let alpha = rng.random::<f64>();
        let sol = transference_apply(&ratio, c, x, &[alpha]).unwrap();
        assert!(sol.x.abs() as f64 <= sol.x_prime);
        assert!(sol.error <= sol.c_prime * (1.0 + 1e-12));
    }
}

#[test]
fn deleting_a_centre_opens_a_gap() {
    // Lat-long cells overlap away from the equator, so the d = 2 case removes
    // an equatorial centre, whose cell nobody else reaches.
    for (d, eta, pick) in [(1usize, 0.1, 0.5), (1, 0.3, 0.0), (2, 0.2, 1.0)] {
        let full = build_cap_cover(d, eta).unwrap();
        let mut raw = full.vectors();
        raw.remove(((raw.len() - 1) as f64 * pick) as usize);
        let holed = CapCover::from_centres(d, eta, "holed", raw).unwrap();
        assert!(verify_cover(&holed, 1_000_000, 11) >= eta);
    }
}

#[test]
fn single_centre_never_reaches_one() {
    let c = CapCover::from_centres(2, 1.0, "single", vec![vec![0.0, 0.0, 1.0]]).unwrap();
    assert!(verify_cover(&c, 20_000, 1) < 1.0);
}

fn axis_spec(k: usize, eta: f64, b: Vec<f64>) -> XSetSpec {
    XSetSpec {
        b,
        q: vec![vec![1, 0]; k],
        eta: vec![eta; k],
        matrices: vec![Matrix::identity(2); k],
    }
}

#[test]
fn x_set_measure_factorises() {
    let one = x_set_measure_mc(&axis_spec(1, 0.3, vec![1.0, 0.0]), 40_000, 5).unwrap();
    let two = x_set_measure_mc(&axis_spec(2, 0.3, vec![1.0, 0.0]), 40_000, 6).unwrap();
    let product = one.estimate * one.estimate;
    assert!((two.estimate - product).abs() < 3.0 * two.width(), "{two:?} vs {product}");
}

#[test]
fn x_set_measure_is_rotation_invariant() {
    let r = sample_rotation(1, 77);
    let b = r.apply(&[1.0, 0.0]);
    let base = x_set_measure_mc(&axis_spec(1, 0.2, vec![1.0, 0.0]), 40_000, 8).unwrap();
    let moved = x_set_measure_mc(&axis_spec(1, 0.2, b), 40_000, 9).unwrap();
    assert!((base.estimate - moved.estimate).abs() < 3.0 * base.width().max(moved.width()));
    let exact = 2.0 / PI * 0.2f64.asin();
    assert!((base.estimate - exact).abs() < 3.0 * base.width());
}

#[test]
fn rotated_union_is_convention_free_on_integer_grids() {
    // T(x) with integer x is unimodular, so every frame convention yields Z^3.
    let f = Forest::new(vec![GridSpec::lattice(build_unipotent(&[2.0, -1.0]))]).unwrap();
    let union = build_rotated_union(&f);
    let inverse_frames: Vec<Matrix> = rotated_copy_frames(3).iter().map(|y| y.inverse().unwrap()).collect();
    let patch = |grids: Vec<Matrix>| {
        let mut pts = std::collections::BTreeSet::new();
        for m in grids {
            for a in -6i64..=6 {
                for b in -6i64..=6 {
                    for c in -6i64..=6 {
                        let p = m.apply(&[a as f64, b as f64, c as f64]);
                        if p.iter().all(|x| x.abs() <= 2.0) {
                            pts.insert(p.iter().map(|x| x.round() as i64).collect::<Vec<_>>());
                        }
                    }
                }
            }
        }
        pts
    };
    let a = patch(union.matrices());
    let b = patch(inverse_frames.iter().map(|y| y.mul(&f.matrices()[0])).collect());
    assert_eq!(a, b);
    assert_eq!(a.len(), 125);
}

#[test]
fn a_l_frequency_does_not_grow_with_level() {
    let params = AlParams::new(1, 1.5);
    let counts: Vec<usize> = (1..=4)
        .map(|l| {
            (0..200u64)
                .filter(|s| {
                    let ms: Vec<Matrix> = (0..3).map(|i| sample_rotation(1, s * 3 + i)).collect();
                    a_l_membership(&ms, l, &params).unwrap().member
                })
                .count()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
}

#[test]
fn large_visibility_forces_a_l_membership() {
    let mut m = ExperimentManifest::new(1, 3);
    m.samples = 3;
    m.levels = vec![3, 4, 5, 6];
    m.a_l_levels = vec![3, 4, 5, 6];
    m.direction_floor = 0.5f64.powi(9);
    let r = run_experiment(&m).unwrap();
    let lambda = m.lambda();
    for row in &r.raw {
        let big = row.blocked || row.v_hat.is_some_and(|v| v > f_scale(1, lambda, row.epsilon));
        if big {
            let al = r.a_l.iter().find(|a| a.sample_id == row.sample_id && a.level == row.level).unwrap();
            assert_eq!(al.member, Some(true));
        }
    }
    // The identity forest is blocked on the axis at every level and lies in every A_l.
    let ids = vec![Matrix::identity(2); 3];
    for l in [3, 4, 5, 6] {
        assert!(a_l_membership(&ids, l, &AlParams::new(1, lambda)).unwrap().member);
    }
}

#[test]
fn experiment_is_reproducible_and_rederivable() {
    let mut m = ExperimentManifest::new(1, 3);
    m.samples = 3;
    m.seed = 99;
    m.direction_floor = 0.5f64.powi(8);
    m.a_l_levels = vec![2];
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_experiment(&m).unwrap();
    let b = run_experiment(&m).unwrap();
    write_artifacts(&a, dir_a.path()).unwrap();
    write_artifacts(&b, dir_b.path()).unwrap();
    for f in ["raw.csv", "a_l.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(dir_a.path().join(f)).unwrap(),
            std::fs::read(dir_b.path().join(f)).unwrap()
        );
    }
    std::fs::remove_file(dir_a.path().join("summary.json")).unwrap();
    let again = resummarize(dir_a.path(), &m).unwrap();
    assert_eq!(again, a.summary);
}

#[test]
fn rational_vectors_have_relations_within_twice_the_orbit() {
    let v = [1.0 / 3.0, 2.0 / 5.0, 1.0];
    let w = integer_relation(&v, 15, 1e-12).unwrap();
    let dot: f64 = w.q.iter().zip(&v).map(|(q, x)| *q as f64 * x).sum();
    assert!(dot.abs() < 1e-12);
}
