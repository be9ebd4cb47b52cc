use greedylab::greedy::{
    best_m_term, constants_report, fundamental_profile, greedy_sets, lorentz_embedding_constant,
    recheck, tga, tga_set, Budget, Mode,
};
use greedylab::models::make_haar;
use greedylab::seqlab::{dual_sequence, power_sequence};
use greedylab::space::{
    make_lorentz, make_lp, make_skewed, make_weighted_lp, sorted_abs, SpaceModel,
};
use greedylab::util::{random_vector, rng};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    f((lo + hi) / 2.0)
}

#[test]
fn best_m_term_on_lp_is_the_tail_norm() {
    let mut r = rng(1);
    for p in [1.0, 1.5, 2.0, 4.0] {
        let s = make_lp(p, 6).unwrap();
        for _ in 0..30 {
            let v = random_vector(&mut r, 6);
            let sa = sorted_abs(&v);
            for m in 0..=6 {
                let tail: f64 = sa[m..].iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p);
                assert!(close(best_m_term(&s, &v, m).unwrap().value, tail, 1e-12));
            }
        }
    }
}

#[test]
fn best_m_term_on_weighted_lp_by_brute_force() {
    let s = make_weighted_lp(2.0, vec![3.0, 1.0, 0.2, 1.5, 0.7]).unwrap();
    let mut r = rng(2);
    for _ in 0..30 {
        let v = random_vector(&mut r, 5);
        for m in 1..5 {
            let brute = (0u32..32)
                .filter(|b| b.count_ones() as usize == m)
                .map(|b| {
                    let z: Vec<f64> = (0..5)
                        .map(|i| if b >> i & 1 == 1 { 0.0 } else { v[i] })
                        .collect();
                    s.norm(&z).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(close(best_m_term(&s, &v, m).unwrap().value, brute, 1e-12));
        }
    }
}

#[test]
fn best_one_term_on_a_skewed_norm_by_line_search() {
    let s = make_skewed(make_lp(2.0, 3).unwrap(), vec![1.0, 1.0, 0.5]).unwrap();
    let mut r = rng(3);
    for _ in 0..20 {
        let v = random_vector(&mut r, 3);
        let bound = 10.0 * s.norm(&v).unwrap() + 10.0;
        let oracle = (0..3)
            .map(|b| {
                golden_min(
                    |t| {
                        let mut z = v.clone();
                        z[b] -= t;
                        s.norm(&z).unwrap()
                    },
                    -bound,
                    bound,
                )
            })
            .fold(f64::INFINITY, f64::min);
        let got = best_m_term(&s, &v, 1).unwrap();
        assert!(got.value <= oracle + 1e-6, "{} vs {oracle}", got.value);
        assert!(got.value >= oracle - 1e-6, "{} vs {oracle}", got.value);
        let mut z = v.clone();
        for (&i, c) in got.support.iter().zip(&got.coefficients) {
            z[i] -= c;
        }
        assert!(close(s.norm(&z).unwrap(), got.value, 1e-6));
    }
}

#[test]
fn lp_profile_is_a_power() {
    for p in [1.0, 1.5, 3.0] {
        let prof = fundamental_profile(&make_lp(p, 6).unwrap()).unwrap();
        let q = if p == 1.0 {
            f64::INFINITY
        } else {
            p / (p - 1.0)
        };
        for m in 1..=6 {
            let mf = m as f64;
            assert!(close(prof.phi_u[m - 1], mf.powf(1.0 / p), 1e-12));
            assert!(close(prof.phi_l[m - 1], mf.powf(1.0 / p), 1e-12));
            assert!(close(prof.phi_u_dual[m - 1], mf.powf(1.0 / q), 1e-9));
        }
    }
}

#[test]
fn lorentz_profile_is_the_partial_sum() {
    let w = vec![1.0, 0.6, 0.5, 0.2, 0.2];
    let prof = fundamental_profile(&make_lorentz(w.clone()).unwrap()).unwrap();
    let mut acc = 0.0;
    for m in 1..=5 {
        acc += w[m - 1];
        assert!(close(prof.phi_u[m - 1], acc, 1e-14));
        assert!(close(prof.phi_l[m - 1], acc, 1e-14));
    }
}

#[test]
fn profile_attaining_sets_reproduce_the_values() {
    let s = make_haar(2, 3.0).unwrap();
    let prof = fundamental_profile(&s).unwrap();
    let mut last = 0.0f64;
    for m in 0..4 {
        let (a, e) = &prof.max_sets[m];
        assert_eq!(a.len(), m + 1);
        let mut v = vec![0.0; 4];
        for (&i, &x) in a.iter().zip(e) {
            v[i] = x;
        }
        last = last.max(s.norm(&v).unwrap());
        assert!(close(prof.phi_u[m], last, 1e-12));
    }
}

#[test]
fn l2_constants_are_all_one() {
    let rep = constants_report(
        &make_lp(2.0, 4).unwrap(),
        &Budget {
            samples: 100,
            ..Budget::default()
        },
    )
    .unwrap();
    for (name, e) in rep.entries() {
        if name == "C_e" {
            continue;
        }
        assert!(close(e.value, 1.0, 1e-9), "{name} = {}", e.value);
    }
}

#[test]
fn witnesses_recompute_to_the_reported_values() {
    let budget = Budget {
        samples: 60,
        ..Budget::default()
    };
    for s in [
        make_haar(2, 3.0).unwrap(),
        make_skewed(make_lp(2.0, 3).unwrap(), vec![1.0, -0.5, 0.0]).unwrap(),
    ] {
        let rep = constants_report(&s, &budget).unwrap();
        let checks = recheck(&s, &rep).unwrap();
        assert!(!checks.is_empty());
        for (name, reported, again) in checks {
            assert!(
                close(again, reported, 1e-9),
                "{}: {name} {reported} vs {again}",
                s.label()
            );
        }
        assert_eq!(rep.lattice_unconditional.mode, Mode::LowerBoundEstimate);
    }
    let lor = make_lorentz(vec![1.0, 0.5, 0.2]).unwrap();
    let rep = constants_report(&lor, &budget).unwrap();
    assert_eq!(rep.lattice_unconditional.mode, Mode::Exact);
    assert_eq!(rep.lattice_unconditional.value, 1.0);
}

#[test]
fn embedding_constant_bounds_random_functionals() {
    for s in [
        make_haar(2, 3.0).unwrap(),
        make_lorentz(vec![1.0, 0.5, 0.4, 0.1]).unwrap(),
    ] {
        let sigma = power_sequence(0.5, 4).unwrap();
        let (ce, _) = lorentz_embedding_constant(&s, &sigma).unwrap();
        let sstar = dual_sequence(&sigma);
        let mut r = rng(4);
        for _ in 0..100 {
            let y = random_vector(&mut r, 4);
            let dy = s.dual_norm(&y).unwrap().value;
            let ya = sorted_abs(&y);
            for m in 1..=4 {
                assert!(
                    sstar.get(m) * ya[m - 1] <= ce * dy * (1.0 + 1e-9),
                    "{}",
                    s.label()
                );
            }
        }
    }
}

#[test]
fn tga_breaks_ties_by_lowest_index() {
    let v = [0.5, -1.0, 1.0, 0.5, 0.2];
    assert_eq!(tga_set(&v, 1), vec![1]);
    assert_eq!(tga_set(&v, 3), vec![0, 1, 2]);
    let s = make_lp(2.0, 5).unwrap();
    let step = tga(&s, &v, 3).unwrap();
    assert_eq!(step.approximant, vec![0.5, -1.0, 1.0, 0.0, 0.0]);
    assert_eq!(step.residual, vec![0.0, 0.0, 0.0, 0.5, 0.2]);
    assert_eq!(tga(&s, &v, 3).unwrap(), step);
    assert!(tga(&s, &v, 6).is_err());
}

#[test]
fn enumeration_caps_are_enforced() {
    let big = make_lp(2.0, 20).unwrap();
    assert!(fundamental_profile(&big).is_err());
    assert!(best_m_term(&big, &[1.0; 20], 2).is_err());
}

fn space_of(k: usize) -> SpaceModel {
    match k {
        0 => make_lp(1.5, 5).unwrap(),
        1 => make_haar(2, 1.5).unwrap(),
        _ => make_lorentz(vec![1.0, 0.9, 0.3, 0.3, 0.1]).unwrap(),
    }
}

proptest! {
    #[test]
    fn greedy_sets_are_exactly_the_greedy_sets(vals in prop::collection::vec(-2i32..=2, 1..8), m in 0usize..8) {
        let v: Vec<f64> = vals.iter().map(|x| *x as f64).collect();
        let n = v.len();
        let m = m.min(n);
        let sets = greedy_sets(&v, m);
        let brute: Vec<Vec<usize>> = (0u32..1 << n)
            .filter(|b| b.count_ones() as usize == m)
            .map(|b| (0..n).filter(|i| b >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|a: &Vec<usize>| {
                let inside = a.iter().map(|&i| v[i].abs()).fold(f64::INFINITY, f64::min);
                let outside = (0..n).filter(|i| !a.contains(i)).map(|i| v[i].abs()).fold(0.0, f64::max);
                a.is_empty() || inside >= outside
            })
            .collect();
        let mut got = sets.clone();
        got.sort();
        let mut want = brute;
        want.sort();
        prop_assert_eq!(got, want);
        prop_assert!(sets.contains(&tga_set(&v, m)));
    }

    #[test]
    fn best_m_term_is_below_the_greedy_error(k in 0usize..3, seed in 0u64..500, m in 0usize..5) {
        let s = space_of(k);
        let mut r = rng(seed);
        let v = random_vector(&mut r, s.dim());
        let best = best_m_term(&s, &v, m).unwrap();
        let step = tga(&s, &v, m).unwrap();
        prop_assert!(best.value <= s.norm(&step.residual).unwrap() * (1.0 + 1e-12));
        prop_assert!(best.support.len() <= m);
        if m < s.dim() {
            prop_assert!(best_m_term(&s, &v, m + 1).unwrap().value <= best.value * (1.0 + 1e-12));
        }
    }
}
