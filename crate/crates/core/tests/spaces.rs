use greedylab::greedy::fundamental_profile;
use greedylab::models::{
    haar_matrix, make_besov_truncation, make_haar, make_schlumprecht, schlumprecht_f,
};
use greedylab::renorm::lattice_renorm;
use greedylab::seqlab::power_sequence;
use greedylab::space::{
    apply_multiplier, apply_shift, make_direct_sum_lp, make_lorentz, make_lp, make_marcinkiewicz,
    make_skewed, make_weighted_lp, project, SignedSet, SpaceModel,
};
use greedylab::util::{random_vector, rng};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn models() -> Vec<SpaceModel> {
    vec![
        make_lp(1.0, 4).unwrap(),
        make_lp(1.5, 5).unwrap(),
        make_lp(2.0, 4).unwrap(),
        make_lp(f64::INFINITY, 3).unwrap(),
        make_weighted_lp(3.0, vec![1.0, 0.5, 2.0]).unwrap(),
        make_lorentz(vec![1.0, 0.7, 0.7, 0.2]).unwrap(),
        make_marcinkiewicz(&power_sequence(0.5, 5).unwrap(), 5).unwrap(),
        make_marcinkiewicz(&power_sequence(0.8, 4).unwrap(), 4).unwrap(),
        make_direct_sum_lp(
            3.0,
            vec![
                make_lp(1.0, 2).unwrap(),
                make_lorentz(vec![1.0, 0.5]).unwrap(),
            ],
        )
        .unwrap(),
        make_haar(2, 1.5).unwrap(),
        make_haar(3, 3.0).unwrap(),
        make_besov_truncation(1.5, 4.0, 3).unwrap(),
        make_schlumprecht(6).unwrap(),
        make_skewed(make_lp(2.0, 3).unwrap(), vec![1.0, -0.5, 0.0]).unwrap(),
        lattice_renorm(&make_haar(2, 3.0).unwrap()).unwrap(),
    ]
}

/// Cell values of Σ a_k h_k / ‖h_k‖_p built directly from dyadic intervals.
fn haar_function(levels: u32, p: f64, a: &[f64]) -> Vec<f64> {
    let cells = 1usize << levels;
    let mut f = vec![0.0; cells];
    for (k, &c) in a.iter().enumerate() {
        if k == 0 {
            f.iter_mut().for_each(|x| *x += c);
            continue;
        }
        let j = usize::BITS - 1 - k.leading_zeros();
        let offset = k - (1 << j);
        let len = cells >> j;
        let height = c * 2f64.powf(j as f64 / p);
        for (i, x) in f.iter_mut().enumerate().skip(offset * len).take(len) {
            *x += if i < offset * len + len / 2 {
                height
            } else {
                -height
            };
        }
    }
    f
}

fn lp_mean(f: &[f64], p: f64) -> f64 {
    (f.iter().map(|x| x.abs().powf(p)).sum::<f64>() / f.len() as f64).powf(1.0 / p)
}

#[test]
fn haar_norm_matches_step_function_integral() {
    let mut r = rng(1);
    for (levels, p) in [(1, 1.5), (2, 3.0), (3, 2.0), (4, 1.2)] {
        let h = make_haar(levels, p).unwrap();
        for _ in 0..30 {
            let a = random_vector(&mut r, h.dim());
            let oracle = lp_mean(&haar_function(levels, p, &a), p);
            assert!(close(h.norm(&a).unwrap(), oracle, 1e-13));
        }
    }
}

#[test]
fn haar_biorthogonality() {
    for p in [1.5, 2.0, 3.0] {
        for levels in 1..=4 {
            let n = 1usize << levels;
            let pair =
                haar_matrix(levels, p).transpose() * haar_matrix(levels, p / (p - 1.0)) / n as f64;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((pair[(i, j)] - target).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn haar_dual_is_conjugate_haar() {
    // ⟨y, a⟩ ≤ ‖a‖ · ‖y‖_* with equality at the norming vector of y.
    let h = make_haar(3, 3.0).unwrap();
    let hd = make_haar(3, 1.5).unwrap();
    let mut r = rng(2);
    for _ in 0..20 {
        let y = random_vector(&mut r, 8);
        let d = h.dual_norm(&y).unwrap();
        assert!(d.exact);
        // The dual system of the p-normalized Haar basis is the p'-normalized one.
        assert!(close(d.value, hd.norm(&y).unwrap(), 1e-12));
        for _ in 0..20 {
            let a = random_vector(&mut r, 8);
            assert!(dot(&y, &a) <= h.norm(&a).unwrap() * d.value * (1.0 + 1e-12));
        }
    }
}

#[test]
fn haar_p2_is_lattice_unconditional() {
    let h = make_haar(3, 2.0).unwrap();
    assert!(h.is_lattice());
    let mut r = rng(3);
    for _ in 0..50 {
        let v = random_vector(&mut r, 8);
        let nv = h.norm(&v).unwrap();
        for eps in 0u32..256 {
            let w: Vec<f64> = (0..8)
                .map(|i| if eps >> i & 1 == 1 { -v[i] } else { v[i] })
                .collect();
            assert!(close(h.norm(&w).unwrap(), nv, 1e-9));
        }
    }
}

#[test]
fn haar_democracy_grows_with_p() {
    let demo = |p: f64| {
        let prof = fundamental_profile(&make_haar(3, p).unwrap()).unwrap();
        prof.phi_u
            .iter()
            .zip(&prof.phi_l)
            .map(|(u, l)| u / l)
            .fold(0.0, f64::max)
    };
    assert!(demo(3.0) > demo(2.0));
}

#[test]
fn haar_and_besov_fundamental_envelopes() {
    let prof = fundamental_profile(&make_haar(3, 3.0).unwrap()).unwrap();
    for m in 1..=8 {
        let r = prof.phi_u[m - 1] / (m as f64).powf(1.0 / 3.0);
        assert!((0.8..=1.6).contains(&r), "m {m}: {r}");
    }
    let b = make_besov_truncation(1.5, 4.0, 3).unwrap();
    let prof = fundamental_profile(&b).unwrap();
    for m in 1..=b.dim() {
        let s = (m as f64).powf(2.0 / 3.0);
        assert!(prof.phi_u[m - 1] >= s / 1.6 && prof.phi_u[m - 1] <= 1.6 * s);
    }
}

#[test]
fn schlumprecht_f_properties() {
    assert_eq!(schlumprecht_f(1.0), 1.0);
    let grid: Vec<f64> = (11..=320).map(|k| k as f64 / 10.0).collect();
    for &x in &grid {
        assert!(schlumprecht_f(x) < x);
        for &y in grid.iter().step_by(13) {
            assert!(schlumprecht_f(x * y) <= schlumprecht_f(x) * schlumprecht_f(y));
        }
    }
    let g = |k: f64| k / schlumprecht_f(k);
    for k in 2..=200 {
        let k = k as f64;
        assert!(g(k + 1.0) - 2.0 * g(k) + g(k - 1.0) <= 1e-12);
    }
}

#[test]
fn schlumprecht_is_position_independent() {
    let s = make_schlumprecht(12).unwrap();
    let mut v = vec![0.0; 12];
    v[0] = 1.0;
    v[1] = 0.5;
    let mut w = vec![0.0; 12];
    w[4] = 1.0;
    w[11] = 0.5;
    assert!(close(s.norm(&v).unwrap(), s.norm(&w).unwrap(), 1e-12));
}

#[test]
fn marcinkiewicz_example_by_enumeration() {
    let m = make_marcinkiewicz(&power_sequence(0.5, 4).unwrap(), 4).unwrap();
    let v = [1.0, 1.0, 0.0, 0.0];
    // max over subsets of S(v, A)/σ*(|A|) with σ* = √m
    let mut best: f64 = 0.0;
    for mask in 1u32..16 {
        let a: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
        let s: f64 = a.iter().map(|&i| v[i]).sum();
        best = best.max(s / (a.len() as f64).sqrt());
    }
    assert!(close(m.norm(&v).unwrap(), best, 1e-15));
    assert!(close(best, 2f64.sqrt(), 1e-15));
}

#[test]
fn marcinkiewicz_dual_against_monte_carlo() {
    let m = make_marcinkiewicz(&power_sequence(0.5, 4).unwrap(), 4).unwrap();
    let y = [1.0, 1.0, 1.0, 1.0];
    let d = m.dual_norm(&y).unwrap();
    let mut r = rng(4);
    let mut best: f64 = 0.0;
    for _ in 0..100_000 {
        let x: Vec<f64> = (0..4)
            .map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0))
            .collect();
        best = best.max(dot(&y, &x) / m.norm(&x).unwrap());
    }
    assert!(best <= d.value * (1.0 + 1e-12));
    assert!(d.value - best <= 1e-3 * d.value, "{} vs {best}", d.value);
}

#[test]
fn lorentz_dual_against_indicator_enumeration() {
    // Extreme points of a Lorentz ball are normalized signed indicators.
    let w = vec![1.0, 0.8, 0.5, 0.1];
    let l = make_lorentz(w.clone()).unwrap();
    let mut r = rng(5);
    for _ in 0..50 {
        let y = random_vector(&mut r, 4);
        let mut best: f64 = 0.0;
        for mask in 1u32..16 {
            let a: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            let s: f64 = a.iter().map(|&i| y[i].abs()).sum();
            let norm: f64 = w.iter().take(a.len()).sum();
            best = best.max(s / norm);
        }
        assert!(close(l.dual_norm(&y).unwrap().value, best, 1e-14));
    }
}

#[test]
fn constructor_examples() {
    let sum = make_direct_sum_lp(
        2.0,
        vec![make_lp(2.0, 2).unwrap(), make_lp(2.0, 2).unwrap()],
    )
    .unwrap();
    let l2 = make_lp(2.0, 4).unwrap();
    let lor = make_lorentz(vec![1.0, 1.0, 1.0]).unwrap();
    let l1 = make_lp(1.0, 3).unwrap();
    let mut r = rng(6);
    for _ in 0..100 {
        let v = random_vector(&mut r, 4);
        assert!(close(sum.norm(&v).unwrap(), l2.norm(&v).unwrap(), 1e-12));
        let u = random_vector(&mut r, 3);
        assert!(close(lor.norm(&u).unwrap(), l1.norm(&u).unwrap(), 1e-12));
    }
    let m = make_marcinkiewicz(&power_sequence(0.5, 4).unwrap(), 4).unwrap();
    assert_eq!(m.norm(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
}

#[test]
fn operator_examples() {
    let s3 = make_lp(2.0, 3).unwrap();
    let v = [1.0, 2.0, 3.0];
    assert_eq!(
        apply_multiplier(&s3, &[1.0, 1.0, 1.0], &v).unwrap(),
        v.to_vec()
    );
    assert_eq!(
        apply_multiplier(&s3, &[-1.0, 1.0, -1.0], &[1.0, 1.0, 1.0]).unwrap(),
        vec![-1.0, 1.0, -1.0]
    );
    assert_eq!(project(&v, &[0, 2]), vec![1.0, 0.0, 3.0]);
    assert_eq!(apply_shift(&s3, &[0, 1, 2], &v).unwrap(), v.to_vec());
    assert_eq!(
        apply_shift(&s3, &[1], &[1.0, 0.0, 0.0]).unwrap(),
        vec![0.0, 1.0, 0.0]
    );
    assert!(apply_shift(&s3, &[1, 0], &[1.0, 1.0, 0.0]).is_err());
}

#[test]
fn signed_sets() {
    let s = SignedSet::new(vec![0, 2], vec![1, -1]).unwrap();
    assert_eq!(s.to_vector(3).unwrap(), vec![1.0, 0.0, -1.0]);
    assert!(SignedSet::new(vec![0, 0], vec![1, 1]).is_err());
    assert!(SignedSet::new(vec![0], vec![2]).is_err());
    assert!(SignedSet::new(vec![0], vec![]).is_err());
    assert_eq!(
        SignedSet::positive(vec![]).to_vector(2).unwrap(),
        vec![0.0, 0.0]
    );
    assert!(SignedSet::positive(vec![5]).to_vector(2).is_err());
}

#[test]
fn dimension_and_descriptor_errors() {
    let s = make_lp(2.0, 3).unwrap();
    assert!(s.norm(&[1.0, 2.0]).is_err());
    assert!(s.norm(&[1.0, f64::NAN, 0.0]).is_err());
    assert!(make_lp(0.5, 3).is_err());
    assert!(make_lorentz(vec![0.5, 1.0]).is_err());
    assert!(make_haar(0, 2.0).is_err());
    assert!(make_haar(2, 1.0).is_err());
    assert!(
        serde_json::from_str::<SpaceModel>(r#"{"kind":"weighted_lp","dim":2,"p":"two"}"#).is_err()
    );
}

#[test]
fn lattice_renorm_examples() {
    let mut r = rng(7);
    for m in [
        make_lp(1.5, 4).unwrap(),
        make_lorentz(vec![1.0, 0.5, 0.25]).unwrap(),
    ] {
        let lat = lattice_renorm(&m).unwrap();
        for _ in 0..100 {
            let v = random_vector(&mut r, m.dim());
            assert!(close(lat.norm(&v).unwrap(), m.norm(&v).unwrap(), 1e-12));
        }
    }
    let sk = make_skewed(make_lp(2.0, 2).unwrap(), vec![1.0, 1.0]).unwrap();
    let lat = lattice_renorm(&sk).unwrap();
    let oracle = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
        .iter()
        .map(|e| sk.norm(&[e[0], -e[1]]).unwrap())
        .fold(0.0, f64::max);
    assert!(close(lat.norm(&[1.0, -1.0]).unwrap(), oracle, 1e-15));
    assert!(close(oracle, 2.0 + 2f64.sqrt(), 1e-15));
}

#[test]
fn lattice_renorm_is_unconditional_and_dominates() {
    let base = make_haar(3, 3.0).unwrap();
    let lat = lattice_renorm(&base).unwrap();
    let bp = fundamental_profile(&base).unwrap();
    let lp = fundamental_profile(&lat).unwrap();
    for m in 0..8 {
        assert!(lp.phi_u[m] >= bp.phi_u[m] * (1.0 - 1e-12));
    }
    let mut r = rng(8);
    for _ in 0..20 {
        let v = random_vector(&mut r, 8);
        let nv = lat.norm(&v).unwrap();
        assert!(nv >= base.norm(&v).unwrap() * (1.0 - 1e-12));
        for eps in 0u32..256 {
            let w: Vec<f64> = (0..8)
                .map(|i| if eps >> i & 1 == 1 { -v[i] } else { v[i] })
                .collect();
            assert!(close(lat.norm(&w).unwrap(), nv, 1e-9));
        }
    }
}

#[test]
fn symmetric_norms_are_shift_invariant() {
    let mut r = rng(9);
    for m in [
        make_lp(3.0, 8).unwrap(),
        make_marcinkiewicz(&power_sequence(0.4, 8).unwrap(), 8).unwrap(),
    ] {
        for _ in 0..50 {
            let mut v = random_vector(&mut r, 3);
            v.resize(8, 0.0);
            let w = apply_shift(&m, &[1, 4, 7], &v).unwrap();
            assert_eq!(m.norm(&w).unwrap(), m.norm(&v).unwrap());
        }
    }
}

#[test]
fn descriptors_round_trip_for_every_kind() {
    for m in models() {
        let json = serde_json::to_string(&m).unwrap();
        let back: SpaceModel = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        let v: Vec<f64> = (0..m.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(back.norm(&v).unwrap(), m.norm(&v).unwrap());
    }
}

#[test]
fn suppression_is_one_on_lattice_kinds() {
    let mut r = rng(10);
    for m in models().into_iter().filter(|m| m.is_lattice()) {
        let n = m.dim();
        for _ in 0..20 {
            let v = random_vector(&mut r, n);
            let nv = m.norm(&v).unwrap();
            for mask in 0u32..1 << n {
                let a: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                assert!(
                    m.norm(&project(&v, &a)).unwrap() <= nv * (1.0 + 1e-12),
                    "{}",
                    m.label()
                );
            }
        }
    }
}

#[test]
fn dual_bounds_are_consistent() {
    let mut r = rng(11);
    for m in models() {
        let n = m.dim();
        for _ in 0..40 {
            let y = random_vector(&mut r, n);
            let d = m.dual_norm(&y).unwrap();
            assert!(
                d.lower <= d.value * (1.0 + 1e-12) && d.value <= d.upper * (1.0 + 1e-12),
                "{}",
                m.label()
            );
            if d.exact {
                assert!(
                    d.upper - d.lower <= 1e-6 * d.upper.max(1.0),
                    "{}",
                    m.label()
                );
            }
            let x = random_vector(&mut r, n);
            assert!(
                dot(&x, &y).abs() <= m.norm(&x).unwrap() * d.upper * (1.0 + 1e-9),
                "{}",
                m.label()
            );
        }
    }
}

#[test]
fn norming_functionals_realize_the_bidual() {
    let mut r = rng(12);
    for m in models() {
        let n = m.dim();
        for _ in 0..100 {
            let v = random_vector(&mut r, n);
            let Some(g) = m.subgradient(&v) else { continue };
            let nv = m.norm(&v).unwrap();
            assert!(close(dot(&g, &v), nv, 1e-8), "{}", m.label());
            assert!(
                m.dual_norm(&g).unwrap().lower <= 1.0 + 1e-8,
                "{}",
                m.label()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_axioms(idx in 0usize..15, seed in 0u64..1000, c in -4.0f64..4.0) {
        let m = &models()[idx];
        let mut r = rng(seed);
        let u = random_vector(&mut r, m.dim());
        let v = random_vector(&mut r, m.dim());
        let nu = m.norm(&u).unwrap();
        prop_assert!(nu > 0.0);
        prop_assert_eq!(m.norm(&vec![0.0; m.dim()]).unwrap(), 0.0);
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        prop_assert!(close(m.norm(&cu).unwrap(), c.abs() * nu, 1e-12));
        let s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        prop_assert!(m.norm(&s).unwrap() <= (nu + m.norm(&v).unwrap()) * (1.0 + 1e-12));
    }
}
