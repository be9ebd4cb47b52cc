//! Invariant suites run by the `verify` command. Each check reports its
//! worst violation against a tolerance together with an anchor string naming
//! the statement it tests.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::greedy::{
    fundamental_profile, greedy_lower_bound, greedy_sets, greedy_witness_ratio,
    lorentz_embedding_constant, slc_constant, tga, tga_set, SlcFamily, ENUM_CAP,
};
use crate::models::{haar_matrix, schlumprecht, schlumprecht_f, SCHLUMPRECHT_MAX_ITER};
use crate::renorm::{main_renorm_unpruned, RenormConstants, BRUTE_MAX_DIM};
use crate::seqlab::{
    check_regularity, dini_regularize, doubling_minorant, dual_sequence, power_sequence,
    PosSequence,
};
use crate::space::{project, sorted_abs, Imp, SpaceModel};
use crate::util::{mask_indices, masks_of_size, random_vector, rng};

/// Tolerances of the suites; every field may be overridden from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub norm: f64,
    pub lemma_2_1: f64,
    pub structural: f64,
    pub unconditional: f64,
    pub fundamental: f64,
    pub profile: f64,
    pub slc: f64,
    pub bidemocracy: f64,
    pub greedy: f64,
    pub sequence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            norm: 1e-9,
            lemma_2_1: 1e-12,
            structural: 1e-9,
            unconditional: 1e-9,
            fundamental: 1e-9,
            profile: 1e-6,
            slc: 1e-6,
            bidemocracy: 1e-6,
            greedy: 1e-6,
            sequence: 1e-12,
        }
    }
}

/// Sample counts of the suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteCaps {
    /// Random vectors per structural check.
    pub samples: usize,
    /// Random vectors for checks on renormed models, whose norm is costly.
    pub heavy_samples: usize,
    /// Probes of the greedy-type ratio checks.
    pub probes: usize,
    /// Bound on |A| = |B| in the Property (A) family.
    pub slc_cap: usize,
}

impl Default for SuiteCaps {
    fn default() -> Self {
        SuiteCaps {
            samples: 100,
            heavy_samples: 12,
            probes: 100,
            slc_cap: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub anchor: String,
    pub passed: bool,
    /// Worst violation found; the check passes when it is at most `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn check(id: &str, anchor: &str, worst: f64, tolerance: f64, detail: String) -> Check {
    Check {
        id: id.into(),
        anchor: anchor.into(),
        passed: worst <= tolerance,
        worst,
        tolerance,
        detail,
    }
}

fn rel(excess: f64, scale: f64) -> f64 {
    excess / scale.abs().max(1.0)
}

/// Sequence-level suites, independent of any model.
pub fn sequence_suite(tol: &Tolerances) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for alpha in [0.25, 0.5, 0.75] {
        let s = power_sequence(alpha, 64)?;
        let back = dual_sequence(&dual_sequence(&s));
        for (a, b) in s.values().iter().zip(back.values()) {
            worst = worst.max((a - b).abs() / a);
        }
    }
    out.push(check(
        "dual-involution",
        "§2 dual sequence",
        worst,
        tol.sequence,
        "power sequences 1/4, 1/2, 3/4, horizon 64".into(),
    ));

    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for alpha in [0.5, 1.0 / 3.0] {
        let tau = power_sequence(alpha, 64)?;
        let sigma = dini_regularize(&tau)?;
        let sstar = dual_sequence(&sigma);
        worst = worst.max(sigma.first_decrease().map_or(0.0, |_| 1.0));
        worst = worst.max(sstar.first_decrease().map_or(0.0, |_| 1.0));
        let c = (1..=64)
            .map(|m| sigma.get(m) / tau.get(m))
            .fold(0.0, f64::max);
        for m in 1..=64 {
            let x = sstar.get(m) * (sigma.get(m) - sigma.get(m - 1));
            worst = worst.max(x - 1.0).max(1.0 / c - x);
        }
        detail.push_str(&format!("alpha {alpha:.4}: C = {c:.6}; "));
    }
    out.push(check(
        "dini-regularization",
        "Lemma 3.1",
        worst,
        tol.sequence,
        detail.trim_end().into(),
    ));

    let f = PosSequence::from_fn(64, |m| 2f64.powi(m as i32))?;
    let g = doubling_minorant(&f)?;
    let mut worst: f64 = 0.0;
    for m in 1..=64 {
        worst = worst.max((g.get(m) - 2.0 * m as f64).abs());
    }
    for m in 1..=32 {
        worst = worst.max((g.get(2 * m) - 2.0 * g.get(m)).abs());
    }
    out.push(check(
        "doubling-minorant",
        "Lemma 6.1",
        worst,
        0.0,
        "f(m) = 2^m, horizon 64".into(),
    ));

    let s = power_sequence(1.0 / 3.0, 64)?;
    let r = check_regularity(&s, 16)?;
    let ok = r.lrp_witness == Some(8) && r.urp_witness == Some(3);
    out.push(check(
        "regularity-witnesses",
        "§3 regularity",
        if ok { 0.0 } else { 1.0 },
        0.0,
        format!(
            "alpha 1/3: lrp {:?}, urp {:?}",
            r.lrp_witness, r.urp_witness
        ),
    ));
    Ok(out)
}

/// Seeded sample vectors supported where the model can evaluate them.
pub fn sample_vectors(space: &SpaceModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = space.dim();
    let width = match space.imp() {
        Imp::Subsym(s) => s.support_cap().min(3).min(n),
        _ => n,
    };
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let mut v = random_vector(&mut r, width);
            v.resize(n, 0.0);
            v
        })
        .collect()
}

fn is_heavy(space: &SpaceModel) -> bool {
    matches!(space.imp(), Imp::Main(_) | Imp::Subsym(_))
}

/// Subsets tested for suppression: all of them up to dimension 10, otherwise seeded ones.
fn test_subsets(n: usize, seed: u64) -> Vec<Vec<usize>> {
    if n <= 10 {
        return (0u32..1 << n).map(mask_indices).collect();
    }
    let mut r = rng(seed ^ 0xA5A5);
    (0..256)
        .map(|_| {
            let v = random_vector(&mut r, n);
            (0..n).filter(|&i| v[i] != 0.0).collect()
        })
        .collect()
}

fn norm_axioms(space: &SpaceModel, vs: &[Vec<f64>], tol: &Tolerances) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let n = space.dim();
    worst = worst.max(space.norm(&vec![0.0; n])?.abs());
    for w in vs.windows(2) {
        let (u, v) = (&w[0], &w[1]);
        let nu = space.norm(u)?;
        let nv = space.norm(v)?;
        if !(nu > 0.0) {
            worst = worst.max(1.0);
        }
        let scaled: Vec<f64> = u.iter().map(|x| -2.5 * x).collect();
        worst = worst.max(rel((space.norm(&scaled)? - 2.5 * nu).abs(), nu));
        let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
        worst = worst.max(rel(space.norm(&sum)? - nu - nv, nu + nv));
    }
    Ok(check(
        "norm-axioms",
        "§2",
        worst,
        tol.norm,
        format!("{} vectors", vs.len()),
    ))
}

fn lattice_checks(
    space: &SpaceModel,
    vs: &[Vec<f64>],
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let n = space.dim();
    let subsets = test_subsets(n, seed);
    let heavy = is_heavy(space);
    let mut su: f64 = 0.0;
    let mut uc: f64 = 0.0;
    for (k, v) in vs.iter().enumerate() {
        let nv = space.norm(v)?;
        let picks: Vec<&Vec<usize>> = if heavy {
            subsets
                .iter()
                .skip(k % 7)
                .step_by(subsets.len() / 16 + 1)
                .collect()
        } else {
            subsets.iter().collect()
        };
        for a in picks {
            su = su.max(rel(space.norm(&project(v, a))? - nv, nv));
            let flipped: Vec<f64> = (0..n)
                .map(|i| if a.contains(&i) { -v[i] } else { v[i] })
                .collect();
            uc = uc.max(rel((space.norm(&flipped)? - nv).abs(), nv));
        }
    }
    Ok(vec![
        check(
            "K_su=1",
            "§2 suppression unconditionality",
            su,
            tol.unconditional,
            format!("{} vectors", vs.len()),
        ),
        check(
            "K_u=1",
            "Lemma 4.1",
            uc,
            tol.unconditional,
            format!("{} vectors, sign flips on test subsets", vs.len()),
        ),
    ])
}

fn dual_checks(
    space: &SpaceModel,
    vs: &[Vec<f64>],
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let n = space.dim();
    let mut r = rng(seed ^ 0xD0A1);
    let mut pairing: f64 = 0.0;
    let mut order: f64 = 0.0;
    for v in vs {
        let y = random_vector(&mut r, n);
        let d = space.dual_norm(&y)?;
        order = order.max(d.lower - d.value).max(d.value - d.upper);
        let ip: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
        let bound = space.norm(v)? * d.upper;
        pairing = pairing.max(rel(ip.abs() - bound, bound));
    }
    let mut out = vec![check(
        "dual-pairing",
        "§2 dual norm",
        pairing.max(order),
        tol.structural,
        "|<y,v>| <= ||v|| ||y||_*, lower <= value <= upper".into(),
    )];
    let mut norming: f64 = 0.0;
    let mut tested = 0;
    for v in vs {
        let Some(g) = space.subgradient(v) else {
            continue;
        };
        tested += 1;
        let nv = space.norm(v)?;
        let ip: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
        norming = norming.max(rel(nv - ip, nv));
        norming = norming.max(space.dual_norm(&g)?.lower - 1.0 - 1e-12);
    }
    if tested > 0 {
        out.push(check(
            "bidual-norming",
            "Proposition 2.8",
            norming,
            1e-8,
            format!("{tested} vectors with explicit norming functionals"),
        ));
    }
    Ok(out)
}

fn profile_checks(
    space: &SpaceModel,
    vs: &[Vec<f64>],
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let n = space.dim();
    let prof = fundamental_profile(space)?;
    let mut out = Vec::new();

    let mut w: f64 = 0.0;
    for m in 1..n {
        let a = m as f64 / prof.phi_u[m - 1];
        let b = (m + 1) as f64 / prof.phi_u[m];
        w = w.max(a - b);
    }
    out.push(check(
        "lemma-2.1",
        "Lemma 2.1",
        w,
        tol.lemma_2_1,
        "m/phi_u(m) nondecreasing".into(),
    ));

    let mut w: f64 = 0.0;
    for m in 1..=n {
        w = w.max(rel(
            m as f64 - prof.phi_u[m - 1] * prof.phi_l_dual[m - 1],
            m as f64,
        ));
    }
    out.push(check(
        "inequality-2.2",
        "(2.2)",
        w,
        tol.structural,
        format!("dual exact: {}", prof.dual_exact),
    ));

    let mut w: f64 = 0.0;
    for v in vs {
        let nv = space.norm(v)?;
        let s = sorted_abs(v);
        let mut acc = 0.0;
        for m in 1..=n {
            acc += s[m - 1];
            w = w.max(acc - prof.phi_u_dual[m - 1] * nv);
        }
    }
    out.push(check(
        "lemma-3.2",
        "Lemma 3.2",
        w,
        tol.structural,
        format!("{} vectors, all A", vs.len()),
    ));

    let sigma = PosSequence::new(prof.phi_u.clone())?;
    let (ce, _) = lorentz_embedding_constant(space, &sigma)?;
    let sstar = dual_sequence(&sigma);
    let mut r = rng(seed ^ 0xE4);
    let mut w: f64 = 0.0;
    for _ in 0..vs.len() {
        let y = random_vector(&mut r, n);
        let d = space.dual_norm(&y)?.upper;
        let s = sorted_abs(&y);
        for m in 1..=n {
            w = w.max(rel(sstar.get(m) * s[m - 1] - ce * d, ce * d));
        }
    }
    out.push(check(
        "embedding-2.4",
        "(2.4)",
        w,
        tol.structural,
        format!("C_e = {ce:.9} with sigma = phi_u"),
    ));
    Ok(out)
}

fn tga_checks(
    space: &SpaceModel,
    vs: &[Vec<f64>],
    probes: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let n = space.dim();
    let mut bad = 0usize;
    for v in vs {
        for m in 0..=n {
            let a = tga(space, v, m)?;
            let b = tga(space, v, m)?;
            if a != b || !greedy_sets(v, m).contains(&tga_set(v, m)) {
                bad += 1;
            }
        }
    }
    let mut out = vec![check(
        "tga-determinism",
        "§1 greedy algorithm",
        bad as f64,
        0.0,
        "repeated calls, greedy-set membership".into(),
    )];
    if n <= ENUM_CAP && !(is_heavy(space) && !space.is_lattice()) {
        let (kg, w) = greedy_lower_bound(space, probes, seed, 0);
        let again = if w.vector.is_some() {
            greedy_witness_ratio(space, &w)?
        } else {
            kg
        };
        out.push(check(
            "greedy-witness",
            "§2 greedy constant",
            (again - kg).abs(),
            tol.structural,
            format!("K_g >= {kg:.9} over {probes} probes"),
        ));
    }
    Ok(out)
}

fn haar_checks(space: &SpaceModel, levels: u32, p: f64) -> Vec<Check> {
    let n = space.dim();
    let q = p / (p - 1.0);
    let h = haar_matrix(levels, p);
    let hd = haar_matrix(levels, q);
    let pair = h.transpose() * hd / n as f64;
    let mut w: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            w = w.max((pair[(i, j)] - target).abs());
        }
    }
    vec![check(
        "haar-biorthogonality",
        "§4.1",
        w,
        1e-12,
        format!("L = {levels}, p = {p}"),
    )]
}

fn schlumprecht_checks(space: &SpaceModel, tol: &Tolerances) -> Result<Vec<Check>> {
    let n = space.dim();
    let mut w: f64 = 0.0;
    let mut iters = 0;
    for m in 1..=n.min(8) {
        let target = m as f64 / schlumprecht_f(m as f64);
        let sets: Vec<Vec<usize>> = if n <= 10 {
            masks_of_size(n, m).into_iter().map(mask_indices).collect()
        } else {
            vec![
                (0..m).collect(),
                (n - m..n).collect(),
                (0..m).map(|i| i * (n / m)).collect(),
            ]
        };
        for a in sets {
            let mut v = vec![0.0; n];
            for &i in &a {
                v[i] = 1.0;
            }
            let e = schlumprecht(&v);
            iters = iters.max(e.iterations);
            w = w.max((e.value - target).abs());
        }
    }
    let mut fw: f64 = (schlumprecht_f(1.0) - 1.0).abs();
    let grid: Vec<f64> = (11..=320).map(|k| k as f64 / 10.0).collect();
    for &x in &grid {
        fw = fw.max(schlumprecht_f(x) - x + 1e-15);
    }
    for &x in grid.iter().step_by(7) {
        for &y in grid.iter().step_by(11) {
            fw = fw.max(schlumprecht_f(x * y) - schlumprecht_f(x) * schlumprecht_f(y));
        }
    }
    let g = |k: f64| k / schlumprecht_f(k);
    for k in 2..=64 {
        let k = k as f64;
        fw = fw.max(g(k + 1.0) - 2.0 * g(k) + g(k - 1.0) - 1e-12);
    }
    Ok(vec![
        check(
            "schlumprecht-indicator-law",
            "Theorem 5.5",
            w,
            tol.profile,
            format!(
                "|A| <= {}, max {iters} iterations of {SCHLUMPRECHT_MAX_ITER}",
                n.min(8)
            ),
        ),
        check(
            "schlumprecht-f-properties",
            "Theorem 5.5",
            fw.max(0.0),
            0.0,
            "f(1) = 1, f(x) < x, submultiplicative, x/f(x) concave".into(),
        ),
    ])
}

/// Indicator values against σ over every set and sign pattern (lattice
/// models need only one pattern per set).
fn fundamental_check(
    space: &SpaceModel,
    sigma: &PosSequence,
    anchor: &str,
    tol: &Tolerances,
) -> Result<Check> {
    let n = space.dim();
    let mut w: f64 = 0.0;
    let mut count = 0usize;
    for mask in 1u32..1 << n {
        let a = mask_indices(mask);
        let k = a.len();
        let patterns = if space.is_lattice() {
            1u32
        } else {
            1 << (k - 1)
        };
        for p in 0..patterns {
            let mut v = vec![0.0; n];
            for (j, &i) in a.iter().enumerate() {
                v[i] = if j > 0 && p >> (j - 1) & 1 == 1 {
                    -1.0
                } else {
                    1.0
                };
            }
            w = w.max((space.norm(&v)? - sigma.get(k)).abs());
            count += 1;
        }
    }
    Ok(check(
        "fundamental-function",
        anchor,
        w,
        tol.fundamental,
        format!("{count} signed indicators"),
    ))
}

fn envelope_check(
    space: &SpaceModel,
    base: &SpaceModel,
    vs: &[Vec<f64>],
    c1: f64,
    c2: f64,
    anchor: &str,
    tol: &Tolerances,
) -> Result<Check> {
    let mut w: f64 = 0.0;
    for v in vs {
        let old = base.norm(v)?;
        let new = space.norm(v)?;
        w = w
            .max(rel(c1 * old - new, old))
            .max(rel(new - c2 * old, old));
    }
    Ok(check(
        "norm-equivalence",
        anchor,
        w,
        tol.norm,
        format!("{c1:.9} <= new/old <= {c2:.9} on {} vectors", vs.len()),
    ))
}

/// Theoretical envelope of the main renorming over its (lattice) base.
pub fn main_envelope(c: &RenormConstants) -> (f64, f64) {
    let k = c.k_main();
    (1.0 / k, c.c_d.value * c.c_a.value + 1.0 / k)
}

/// Theoretical envelope of the almost-greedy renorming over its base.
pub fn almost_envelope(c: &RenormConstants) -> (f64, f64) {
    (
        c.delta.value,
        (c.c_d.value * c.c_a.value).max(c.delta.value),
    )
}

fn renorm_checks(
    space: &SpaceModel,
    caps: &SuiteCaps,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let vs = sample_vectors(space, caps.heavy_samples, seed ^ 0x11);
    match space.imp() {
        Imp::Main(m) => {
            let spec = match space.descriptor() {
                crate::space::Descriptor::MainRenorm(s) => s.as_ref().clone(),
                _ => unreachable!(),
            };
            let sigma = spec.sigma.truncate(space.dim())?;
            out.push(fundamental_check(space, &sigma, "Theorem 3.4", tol)?);
            let fam = SlcFamily {
                cap: caps.slc_cap,
                equal_sizes: true,
                ..SlcFamily::default()
            };
            let (slc, _) = slc_constant(space, &fam)?;
            out.push(check(
                "property-A",
                "Theorem 3.4 Property (A)",
                (slc - 1.0).abs(),
                tol.slc,
                format!("slc = {slc:.12} over |A| = |B| <= {}", caps.slc_cap),
            ));
            let prof = fundamental_profile(space)?;
            let mut w: f64 = 0.0;
            for k in 1..=space.dim() {
                w = w.max(prof.phi_u[k - 1] * prof.phi_u_dual[k - 1] / k as f64 - 1.0);
            }
            out.push(check(
                "isometric-bidemocracy",
                "Lemma 3.3",
                w.max(0.0),
                tol.bidemocracy,
                "phi_u phi_u_dual <= m".into(),
            ));
            let (c1, c2) = main_envelope(&spec.constants);
            out.push(envelope_check(
                space,
                m.base(),
                &vs,
                c1,
                c2,
                "Theorem 3.4",
                tol,
            )?);
            if space.is_lattice() {
                let (kg, _) = greedy_lower_bound(space, caps.probes, seed, 0);
                out.push(check(
                    "greedy-constant-1",
                    "Theorem 3.4",
                    kg - 1.0,
                    tol.greedy,
                    format!("max ratio {kg:.12} over {} probes", caps.probes),
                ));
            }
            if space.dim() <= BRUTE_MAX_DIM.min(5) {
                let mut w: f64 = 0.0;
                for v in vs.iter().take(4) {
                    w = w.max((space.norm(v)? - main_renorm_unpruned(space, v)?).abs());
                }
                out.push(check(
                    "unpruned-oracle",
                    "Theorem 3.4",
                    w,
                    tol.profile,
                    "factorized vs unpruned enumeration".into(),
                ));
            }
        }
        Imp::Almost(a) => {
            let spec = match space.descriptor() {
                crate::space::Descriptor::AlmostGreedyRenorm(s) => s.as_ref().clone(),
                _ => unreachable!(),
            };
            let sigma = spec.sigma.truncate(space.dim())?;
            out.push(fundamental_check(space, &sigma, "Theorem 3.5", tol)?);
            let (lo, hi) = almost_envelope(&spec.constants);
            let vs = sample_vectors(space, caps.samples, seed ^ 0x11);
            out.push(envelope_check(
                space,
                a.base(),
                &vs,
                lo,
                hi,
                "Theorem 3.5",
                tol,
            )?);
            let (r, _) = crate::greedy::almost_greedy_lower_bound(space, caps.probes, seed);
            out.push(check(
                "almost-greedy-ratio",
                "Theorem 3.5",
                r - (1.0 + spec.eps),
                tol.greedy,
                format!(
                    "max ratio {r:.12} over {} probes, eps {}",
                    caps.probes, spec.eps
                ),
            ));
        }
        Imp::Lattice { base } => {
            let mut w: f64 = 0.0;
            for v in &sample_vectors(space, caps.samples, seed ^ 0x11) {
                w = w.max(rel(base.norm(v)? - space.norm(v)?, base.norm(v)?));
            }
            out.push(check(
                "lattice-dominates-base",
                "Lemma 4.1",
                w,
                tol.norm,
                "new >= old".into(),
            ));
        }
        Imp::Subsym(s) => {
            let mut mono: f64 = 0.0;
            let mut equal: f64 = 0.0;
            let shift_invariant = s.base().is_symmetric();
            for v in &vs {
                let e = s.evaluate(v)?;
                for w in e.per_k.windows(2) {
                    mono = mono.max(w[1].1 - w[0].1);
                }
                if shift_invariant {
                    let mut padded = v.clone();
                    padded.resize(s.base().dim(), 0.0);
                    equal = equal.max((e.value - s.base().norm(&padded)?).abs());
                    if !e.stabilized {
                        equal = equal.max(1.0);
                    }
                }
            }
            out.push(check(
                "subsym-monotone-in-k",
                "Lemma 5.1",
                mono.max(0.0),
                tol.norm,
                "sup over B(k) nonincreasing in k".into(),
            ));
            if shift_invariant {
                out.push(check(
                    "subsym-shift-invariant",
                    "Lemma 5.1",
                    equal,
                    tol.profile,
                    "value = base norm, stabilized".into(),
                ));
            }
        }
        _ => {}
    }
    Ok(out)
}

/// Every suite applicable to the model.
pub fn model_suite(
    space: &SpaceModel,
    caps: &SuiteCaps,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Check>> {
    let heavy = is_heavy(space);
    let vs = sample_vectors(
        space,
        if heavy {
            caps.heavy_samples
        } else {
            caps.samples
        },
        seed,
    );
    let mut out = vec![norm_axioms(space, &vs, tol)?];
    if matches!(space.imp(), Imp::Subsym(_)) {
        out.extend(renorm_checks(space, caps, seed, tol)?);
        return Ok(out);
    }
    if space.is_lattice() {
        out.extend(lattice_checks(space, &vs, seed, tol)?);
    }
    out.extend(dual_checks(space, &vs, seed, tol)?);
    if space.dim() <= ENUM_CAP {
        let pvs = sample_vectors(space, caps.samples, seed ^ 0x3);
        out.extend(profile_checks(space, &pvs, seed, tol)?);
    }
    out.extend(tga_checks(
        space,
        &vs[..vs.len().min(20)],
        caps.probes,
        seed,
        tol,
    )?);
    match space.descriptor() {
        crate::space::Descriptor::Haar { levels, p } => out.extend(haar_checks(space, *levels, *p)),
        crate::space::Descriptor::Schlumprecht { .. } => {
            out.extend(schlumprecht_checks(space, tol)?)
        }
        _ => {}
    }
    out.extend(renorm_checks(space, caps, seed, tol)?);
    Ok(out)
}
