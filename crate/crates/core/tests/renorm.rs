use greedylab::error::LabError;
use greedylab::greedy::fundamental_profile;
use greedylab::models::{make_besov_truncation, make_haar, make_schlumprecht};
use greedylab::renorm::{
    almost_greedy_pipeline, almost_greedy_renorm, compute_constants, main_renorm,
    main_renorm_unpruned, pipeline_renorm, subsym_evaluate, subsym_renorm, AlmostSpec, Constant,
    MainCaps, MainSpec, SigmaPolicy,
};
use greedylab::seqlab::{dual_sequence, power_sequence, PosSequence};
use greedylab::space::{make_lorentz, make_lp, SpaceModel};
use greedylab::util::{random_vector, rng};
use greedylab::verify::{almost_envelope, main_envelope};
use std::sync::OnceLock;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn l2_main() -> &'static (SpaceModel, MainSpec) {
    static M: OnceLock<(SpaceModel, MainSpec)> = OnceLock::new();
    M.get_or_init(|| {
        let base = make_lp(2.0, 4).unwrap();
        let sigma = power_sequence(0.5, 4).unwrap();
        let constants = compute_constants(&base, &sigma, 0.1).unwrap();
        let spec = MainSpec {
            base,
            sigma,
            constants,
            caps: MainCaps::default(),
        };
        (main_renorm(spec.clone()).unwrap(), spec)
    })
}

#[test]
fn l2_constants_are_exact_ones() {
    let c = &l2_main().1.constants;
    for (name, k) in [
        ("C_d", c.c_d),
        ("C_a", c.c_a),
        ("C_b", c.c_b),
        ("C_q", c.c_q),
    ] {
        assert!(close(k.value, 1.0, 1e-9), "{name} = {}", k.value);
    }
    // σ = √m gives σ*(m)(σ(m) − σ(m−1)) = m − √(m² − m), smallest at m = 4.
    assert!(close(c.c_r.value, 1.0 / (4.0 - 2.0 * 3f64.sqrt()), 1e-12));
}

#[test]
fn main_renorm_fundamental_function_is_sigma() {
    let (m, _) = l2_main();
    for mask in 1u32..16 {
        let v: Vec<f64> = (0..4)
            .map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 })
            .collect();
        let k = mask.count_ones() as f64;
        assert!(close(m.norm(&v).unwrap(), k.sqrt(), 1e-9), "mask {mask}");
    }
}

#[test]
fn main_renorm_has_property_a() {
    let (m, _) = l2_main();
    let mut r = rng(1);
    for _ in 0..40 {
        let f: Vec<f64> = (0..2)
            .map(|_| rand::Rng::gen_range(&mut r, -1.0..=1.0))
            .collect();
        let with = |idx: [usize; 1], s: f64| {
            let mut v = vec![f[0], f[1], 0.0, 0.0];
            v[idx[0]] = s;
            m.norm(&v).unwrap()
        };
        let base = with([2], 1.0);
        for (i, s) in [([2], -1.0), ([3], 1.0), ([3], -1.0)] {
            assert!(close(with(i, s), base, 1e-6));
        }
    }
}

#[test]
fn factorized_evaluation_matches_unpruned_enumeration() {
    let (m, _) = l2_main();
    let v = [1.0, 1.0, 0.0, 0.0];
    assert!(close(
        m.norm(&v).unwrap(),
        main_renorm_unpruned(m, &v).unwrap(),
        1e-6
    ));
    assert!(close(m.norm(&v).unwrap(), 2f64.sqrt(), 1e-9));
    let mut r = rng(2);
    for _ in 0..6 {
        let v = random_vector(&mut r, 4);
        assert!(close(
            m.norm(&v).unwrap(),
            main_renorm_unpruned(m, &v).unwrap(),
            1e-6
        ));
    }
}

#[test]
fn main_renorm_is_greedy_with_constant_one_on_l2() {
    // For 1-unconditional models: ⦀f − S_A f⦀ ≤ ⦀f − Σ_B a_n e_n⦀ reduces to B ⊆ supp f, a = f on B.
    let (m, _) = l2_main();
    let mut r = rng(3);
    for _ in 0..10 {
        let v = random_vector(&mut r, 4);
        for k in 1..4 {
            let a = greedylab::greedy::tga(m, &v, k).unwrap();
            let ga = m.norm(&a.residual).unwrap();
            for mask in 0u32..16 {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let z: Vec<f64> = (0..4)
                    .map(|i| if mask >> i & 1 == 1 { 0.0 } else { v[i] })
                    .collect();
                assert!(ga <= m.norm(&z).unwrap() * (1.0 + 1e-6));
            }
        }
    }
}

#[test]
fn main_renorm_stays_inside_its_envelope() {
    let (m, spec) = l2_main();
    let (c1, c2) = main_envelope(&spec.constants);
    let mut r = rng(4);
    for _ in 0..20 {
        let v = random_vector(&mut r, 4);
        let (nv, bv) = (m.norm(&v).unwrap(), spec.base.norm(&v).unwrap());
        assert!(nv >= c1 * bv * (1.0 - 1e-9) && nv <= c2 * bv * (1.0 + 1e-9));
    }
}

#[test]
fn set_caps_only_lower_the_norm() {
    let (m, spec) = l2_main();
    let mut prev: Vec<f64> = Vec::new();
    let mut r = rng(5);
    let vs: Vec<Vec<f64>> = (0..6).map(|_| random_vector(&mut r, 4)).collect();
    for cap in 1..=4 {
        let capped = main_renorm(MainSpec {
            caps: MainCaps { max_set: Some(cap) },
            ..spec.clone()
        })
        .unwrap();
        let vals: Vec<f64> = vs.iter().map(|v| capped.norm(v).unwrap()).collect();
        for (j, x) in vals.iter().enumerate() {
            if let Some(p) = prev.get(j) {
                assert!(*x >= p * (1.0 - 1e-12));
            }
            assert!(*x <= m.norm(&vs[j]).unwrap() * (1.0 + 1e-12));
        }
        prev = vals;
    }
    for (j, v) in vs.iter().enumerate() {
        assert!(close(prev[j], m.norm(v).unwrap(), 1e-12));
    }
}

#[test]
fn almost_greedy_renorm_envelope_and_fundamental_function() {
    let base = make_lorentz(vec![1.0, 0.8, 0.6, 0.4]).unwrap();
    let sigma = PosSequence::new(vec![1.0, 1.8, 2.4, 2.8]).unwrap();
    let out = almost_greedy_pipeline(&base, &SigmaPolicy::Given(sigma.clone()), 0.1).unwrap();
    let (lo, hi) = almost_envelope(&out.constants);
    let mut r = rng(6);
    for _ in 0..50 {
        let v = random_vector(&mut r, 4);
        let (nv, bv) = (out.model.norm(&v).unwrap(), base.norm(&v).unwrap());
        assert!(nv >= lo * bv * (1.0 - 1e-9) && nv <= hi * bv * (1.0 + 1e-9));
    }
    for mask in 1u32..16 {
        let v: Vec<f64> = (0..4)
            .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 0.0 })
            .collect();
        assert!(close(
            out.model.norm(&v).unwrap(),
            sigma.get(mask.count_ones() as usize),
            1e-9
        ));
    }
}

#[test]
fn oversized_delta_is_rejected() {
    let base = make_lp(2.0, 4).unwrap();
    let sigma = power_sequence(0.5, 4).unwrap();
    let mut constants = compute_constants(&base, &sigma, 0.1).unwrap();
    constants.delta = Constant::user(1.0);
    let res = almost_greedy_renorm(AlmostSpec {
        base,
        sigma,
        constants,
        eps: 0.1,
    });
    assert!(matches!(res, Err(LabError::InvalidInput(_))));
}

#[test]
fn inadmissible_sigma_is_rejected() {
    let base = make_lp(2.0, 4).unwrap();
    let decreasing = PosSequence::new(vec![1.0, 2.0, 1.5, 3.0]).unwrap();
    // σ*(m) = m/σ(m) drops from 2/1.1 to 3/3.
    let bad_dual = PosSequence::new(vec![1.0, 1.1, 3.0, 3.1]).unwrap();
    assert!(dual_sequence(&bad_dual).first_decrease().is_some());
    let short = power_sequence(0.5, 3).unwrap();
    for s in [decreasing, bad_dual, short] {
        assert!(matches!(
            pipeline_renorm(&base, &SigmaPolicy::Given(s), 0.1),
            Err(LabError::InvalidSequence(_))
        ));
    }
}

#[test]
fn renormed_models_cannot_be_renormed_again() {
    let (m, _) = l2_main();
    assert!(matches!(
        subsym_renorm(m, 4, vec![1]),
        Err(LabError::InvalidInput(_))
    ));
}

#[test]
fn besov_pipeline_is_isometrically_bidemocratic() {
    let base = make_besov_truncation(1.5, 4.0, 3).unwrap();
    let out = pipeline_renorm(&base, &SigmaPolicy::Dini, 0.1).unwrap();
    let prof = fundamental_profile(&out.model).unwrap();
    for m in 1..=out.model.dim() {
        let upper_dual = prof.phi_u_dual[m - 1];
        assert!(
            prof.phi_u[m - 1] * upper_dual / m as f64 <= 1.0 + 1e-6,
            "m {m}"
        );
    }
}

#[test]
fn haar_pipeline_fundamental_function_is_dini_sigma() {
    let out = pipeline_renorm(&make_haar(2, 3.0).unwrap(), &SigmaPolicy::Dini, 0.1).unwrap();
    let prof = fundamental_profile(&out.model).unwrap();
    for m in 1..=4 {
        assert!(close(prof.phi_u[m - 1], out.sigma.get(m), 1e-9));
        assert!(close(prof.phi_l[m - 1], out.sigma.get(m), 1e-9));
    }
}

#[test]
fn subsymmetric_renorm_of_lp_is_lp() {
    let base = make_lp(3.0, 64).unwrap();
    let model = subsym_renorm(&base, 64, vec![1, 2, 4, 8]).unwrap();
    assert_eq!(model.dim(), 16);
    let small = make_lp(3.0, 16).unwrap();
    let mut r = rng(7);
    for _ in 0..10 {
        let mut v = random_vector(&mut r, 3);
        v.resize(16, 0.0);
        let ev = subsym_evaluate(&model, &v).unwrap();
        assert!(close(ev.value, small.norm(&v).unwrap(), 1e-12));
        assert!(ev.stabilized);
        assert_eq!(ev.stabilized_from, Some(1));
    }
}

#[test]
fn subsymmetric_renorm_of_schlumprecht() {
    let base = make_schlumprecht(64).unwrap();
    let model = subsym_renorm(&base, 64, vec![1, 2, 4, 8]).unwrap();
    let mut v = vec![0.0; 16];
    v[0] = 1.0;
    v[1] = 1.0;
    let mut w = vec![0.0; 64];
    w[0] = 1.0;
    w[1] = 1.0;
    let ev = subsym_evaluate(&model, &v).unwrap();
    assert!(close(ev.value, base.norm(&w).unwrap(), 1e-9));
    assert!(ev
        .per_k
        .windows(2)
        .all(|p| p[1].1 <= p[0].1 * (1.0 + 1e-12)));
    assert_eq!(ev.beta.len(), 2);
    assert!(ev.stabilized);
}

#[test]
fn subsymmetric_renorm_rejects_bad_windows() {
    let base = make_lp(2.0, 8).unwrap();
    assert!(subsym_renorm(&base, 16, vec![1]).is_err());
    assert!(subsym_renorm(&base, 2, vec![1]).is_err());
    assert!(subsym_renorm(&base, 8, vec![]).is_err());
    assert!(subsym_renorm(&base, 8, vec![0]).is_err());
}
