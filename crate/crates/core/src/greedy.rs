//! Greedy sets, the thresholding greedy algorithm, best m-term errors, the
//! fundamental functions and the constants of a finite model.
//!
//! Indices are 0-based throughout.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::opt::{self, MinOptions, Polytope};
use crate::seqlab::{dual_sequence, PosSequence};
use crate::space::{order_by_abs, project, sorted_abs, Imp, SpaceModel};
use crate::util::{binomial, combinations, mask_indices, masks_of_size, random_vector, rng};

/// Default cap on the dimension for exhaustive enumerations.
pub const ENUM_CAP: usize = 16;

/// All greedy sets of cardinality m: min_A |v| ≥ max_{A^c} |v|.
pub fn greedy_sets(v: &[f64], m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let m = m.min(v.len());
    let t = sorted_abs(v)[m - 1];
    let strict: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() > t).collect();
    let ties: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() == t).collect();
    combinations(&ties, m - strict.len())
        .into_iter()
        .map(|extra| {
            let mut a = strict.clone();
            a.extend(extra);
            a.sort_unstable();
            a
        })
        .collect()
}

/// The greedy set chosen by the algorithm: lowest index first among ties.
pub fn tga_set(v: &[f64], m: usize) -> Vec<usize> {
    let mut a: Vec<usize> = order_by_abs(v).into_iter().take(m).collect();
    a.sort_unstable();
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgaStep {
    pub set: Vec<usize>,
    pub approximant: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn tga(space: &SpaceModel, v: &[f64], m: usize) -> Result<TgaStep> {
    space.check_dim(v)?;
    if m > v.len() {
        return Err(LabError::InvalidInput(format!(
            "m = {m} exceeds dimension {}",
            v.len()
        )));
    }
    let set = tga_set(v, m);
    let approximant = project(v, &set);
    let residual = v.iter().zip(&approximant).map(|(a, b)| a - b).collect();
    Ok(TgaStep {
        set,
        approximant,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTerm {
    pub value: f64,
    pub support: Vec<usize>,
    /// Coefficients of the best approximant on `support`.
    pub coefficients: Vec<f64>,
}

/// Cheap lower bound of the norm, used for pruning.
fn cheap_lower(space: &SpaceModel, v: &[f64]) -> f64 {
    match space.imp() {
        Imp::Main(m) => m.marcinkiewicz_part(v),
        _ => space.eval(v),
    }
}

/// σ_m(v) = min over |B| ≤ m and coefficients a of ‖v − Σ_B a_n e_n‖.
pub fn best_m_term(space: &SpaceModel, v: &[f64], m: usize) -> Result<BestTerm> {
    space.check_dim(v)?;
    let n = v.len();
    if n > ENUM_CAP {
        return Err(LabError::CapExceeded(format!(
            "best m-term enumeration needs dim <= {ENUM_CAP}; use the sampled constants instead"
        )));
    }
    if m > n {
        return Err(LabError::InvalidInput(format!(
            "m = {m} exceeds dimension {n}"
        )));
    }
    let supp: Vec<usize> = (0..n).filter(|&i| v[i] != 0.0).collect();
    if m >= supp.len() {
        return Ok(BestTerm {
            value: 0.0,
            coefficients: supp.iter().map(|&i| v[i]).collect(),
            support: supp,
        });
    }
    if m == 0 {
        return Ok(BestTerm {
            value: space.norm(v)?,
            support: vec![],
            coefficients: vec![],
        });
    }
    if space.is_lattice() {
        // Lattice norms: zeroing the coordinates on B is optimal, and B ⊆ supp(v).
        let g = tga_set(v, m);
        let mut best = (space.eval(&residual_off(v, &g)), g);
        for b in combinations(&supp, m) {
            if b == best.1 {
                continue;
            }
            let r = residual_off(v, &b);
            if cheap_lower(space, &r) >= best.0 {
                continue;
            }
            let val = space.eval_capped(&r, best.0);
            if val < best.0 {
                best = (val, b);
            }
        }
        let coefficients = best.1.iter().map(|&i| v[i]).collect();
        return Ok(BestTerm {
            value: best.0,
            support: best.1,
            coefficients,
        });
    }
    if matches!(space.imp(), Imp::Main(_)) {
        return Err(LabError::InvalidInput(
            "best m-term for a renormed model needs a lattice base".into(),
        ));
    }
    let kappa = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            space.dual_unchecked(&e).upper
        })
        .fold(0.0f64, f64::max);
    let nv = space.eval(v);
    let g = tga_set(v, m);
    let mut best = min_on_support(space, v, &g, kappa * nv);
    for b in combinations(&supp, m) {
        if b == best.1 {
            continue;
        }
        let cand = min_on_support(space, v, &b, kappa * nv);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    // B outside supp(v) can only help through the non-lattice geometry.
    for b in combinations(&(0..n).collect::<Vec<_>>(), m) {
        if b.iter().all(|i| supp.contains(i)) || b == best.1 {
            continue;
        }
        let cand = min_on_support(space, v, &b, kappa * nv);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    let (value, support, coefficients) = (best.0, best.1, best.2);
    Ok(BestTerm {
        value,
        support,
        coefficients,
    })
}

fn residual_off(v: &[f64], b: &[usize]) -> Vec<f64> {
    let mut r = v.to_vec();
    for &i in b {
        r[i] = 0.0;
    }
    r
}

/// min over a of ‖v − Σ_B a_n e_n‖ with |a_n − v_n| ≤ radius (the optimum lies inside).
fn min_on_support(
    space: &SpaceModel,
    v: &[f64],
    b: &[usize],
    radius: f64,
) -> (f64, Vec<usize>, Vec<f64>) {
    let n = v.len();
    let k = b.len();
    let radius = radius * 1.01 + 1e-12;
    let mut map = DMatrix::zeros(n, k);
    for (j, &i) in b.iter().enumerate() {
        map[(i, j)] = -1.0;
    }
    // x_j = a_j − v_j, so z = v − v_B − x on B.
    let offset = DVector::from_vec(residual_off(v, b));
    let mut ineq = DMatrix::zeros(2 * k, k);
    for j in 0..k {
        ineq[(2 * j, j)] = 1.0;
        ineq[(2 * j + 1, j)] = -1.0;
    }
    let poly = Polytope {
        map,
        offset,
        ineq,
        ineq_rhs: DVector::from_element(2 * k, radius),
        eq: DMatrix::zeros(0, k),
        eq_rhs: DVector::zeros(0),
        start: DVector::zeros(k),
    };
    let r = opt::minimize(space, &poly, vec![], MinOptions::default());
    let coeffs = b.iter().enumerate().map(|(j, &i)| v[i] + r.x[j]).collect();
    (r.upper, b.to_vec(), coeffs)
}

/// Fundamental functions of a model and of its dual system, with the sets
/// attaining the per-size extrema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalProfile {
    pub phi_u: Vec<f64>,
    pub phi_l: Vec<f64>,
    pub phi_u_dual: Vec<f64>,
    pub phi_l_dual: Vec<f64>,
    /// Whether every dual entry was computed to certified accuracy.
    pub dual_exact: bool,
    /// Per size m: signed set attaining max ‖1_{ε,A}‖ over |A| = m.
    pub max_sets: Vec<(Vec<usize>, Vec<f64>)>,
    /// Per size m: signed set attaining min ‖1_{ε,A}‖ over |A| = m.
    pub min_sets: Vec<(Vec<usize>, Vec<f64>)>,
}

fn signed_indicator(n: usize, set: &[usize], signs: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for (&i, &s) in set.iter().zip(signs) {
        v[i] = s;
    }
    v
}

/// (set, signs) pairs enumerated for indicator sums. Signs are fixed to +1
/// for lattice models and on the first index otherwise (‖−x‖ = ‖x‖).
fn signed_sets(space: &SpaceModel, signed: bool) -> Vec<(Vec<usize>, Vec<f64>)> {
    let n = space.dim();
    let mut out = Vec::new();
    for m in 1..=n {
        let sets: Vec<Vec<usize>> = if space.is_symmetric() {
            vec![(0..m).collect()]
        } else {
            masks_of_size(n, m).into_iter().map(mask_indices).collect()
        };
        for a in sets {
            if !signed || space.is_lattice() || m == 1 {
                out.push((a, vec![1.0; m]));
            } else {
                for p in 0u32..(1 << (m - 1)) {
                    let mut s = vec![1.0; m];
                    for (j, sj) in s.iter_mut().enumerate().skip(1) {
                        if p >> (j - 1) & 1 == 1 {
                            *sj = -1.0;
                        }
                    }
                    out.push((a.clone(), s));
                }
            }
        }
    }
    out
}

struct SizeExtrema {
    max: Vec<(f64, usize)>,
    min: Vec<(f64, usize)>,
}

fn size_extrema(n: usize, sets: &[(Vec<usize>, Vec<f64>)], vals: &[f64]) -> SizeExtrema {
    let mut max = vec![(f64::NEG_INFINITY, 0); n];
    let mut min = vec![(f64::INFINITY, 0); n];
    for (k, (a, _)) in sets.iter().enumerate() {
        let m = a.len() - 1;
        if vals[k] > max[m].0 {
            max[m] = (vals[k], k);
        }
        if vals[k] < min[m].0 {
            min[m] = (vals[k], k);
        }
    }
    SizeExtrema { max, min }
}

fn prefix_max(x: &[f64]) -> Vec<f64> {
    let mut acc = f64::NEG_INFINITY;
    x.iter()
        .map(|v| {
            acc = acc.max(*v);
            acc
        })
        .collect()
}

fn suffix_min(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in (0..x.len().saturating_sub(1)).rev() {
        out[i] = out[i].min(out[i + 1]);
    }
    out
}

/// Profile over signed indicators (`signed = false` restricts to ε ≡ 1).
pub fn profile_with(space: &SpaceModel, signed: bool) -> Result<FundamentalProfile> {
    let n = space.dim();
    if n > ENUM_CAP {
        return Err(LabError::CapExceeded(format!(
            "fundamental profile needs dim <= {ENUM_CAP}, got {n}"
        )));
    }
    let sets = signed_sets(space, signed);
    let evals: Vec<(f64, f64, bool)> = sets
        .par_iter()
        .map(|(a, s)| {
            let v = signed_indicator(n, a, s);
            let d = space.dual_unchecked(&v);
            (space.eval(&v), d.value, d.exact)
        })
        .collect();
    let vals: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let duals: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let ext = size_extrema(n, &sets, &vals);
    let dext = size_extrema(n, &sets, &duals);
    let take = |e: &[(f64, usize)]| -> Vec<f64> { e.iter().map(|x| x.0).collect() };
    Ok(FundamentalProfile {
        phi_u: prefix_max(&take(&ext.max)),
        phi_l: suffix_min(&take(&ext.min)),
        phi_u_dual: prefix_max(&take(&dext.max)),
        phi_l_dual: suffix_min(&take(&dext.min)),
        dual_exact: evals.iter().all(|e| e.2),
        max_sets: ext.max.iter().map(|x| sets[x.1].clone()).collect(),
        min_sets: ext.min.iter().map(|x| sets[x.1].clone()).collect(),
    })
}

/// φ_u(m) = max over |A| ≤ m and signs of ‖1_{ε,A}‖; φ_l(m) = min over |A| ≥ m.
pub fn fundamental_profile(space: &SpaceModel) -> Result<FundamentalProfile> {
    profile_with(space, true)
}

/// Lower estimate of φ_u for dimensions beyond enumeration: greedy chains
/// of signed indicators grown one coordinate at a time, randomized after the
/// first restart, then closed under φ(m) ≥ (m/k)φ(k) for k ≥ m and under
/// prefix maxima, so that both the estimate and its dual are nondecreasing.
pub fn phi_u_estimate(space: &SpaceModel, restarts: usize, seed: u64) -> Vec<f64> {
    let n = space.dim();
    let signs: &[f64] = if space.is_lattice() {
        &[1.0]
    } else {
        &[1.0, -1.0]
    };
    let mut est = vec![0.0f64; n];
    for r in 0..restarts.max(1) {
        let mut g = rng(seed.wrapping_add(r as u64));
        let mut v = vec![0.0; n];
        for m in 0..n {
            let mut cands: Vec<(f64, usize, f64)> = Vec::new();
            let free: Vec<usize> = (0..n).filter(|&i| v[i] == 0.0).collect();
            for i in free {
                for &s in signs {
                    v[i] = s;
                    cands.push((space.eval(&v), i, s));
                    v[i] = 0.0;
                }
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let pick = if r == 0 || g.gen_bool(0.6) {
                0
            } else {
                g.gen_range(0..cands.len().min(4))
            };
            let (val, i, s) = cands[pick];
            v[i] = s;
            est[m] = est[m].max(val);
        }
    }
    let mut closed = est.clone();
    let mut ratio = f64::NEG_INFINITY;
    for m in (1..=n).rev() {
        ratio = ratio.max(est[m - 1] / m as f64);
        closed[m - 1] = ratio * m as f64;
    }
    prefix_max(&closed)
}

/// μ_{ε,A} = min{‖ε∘r‖ : r ≥ 0 on A, Σ r = 1}, the value of
/// max{t : ε_n y_n ≥ t on A, ‖y‖_* ≤ 1}. Returns an upper bound.
fn simplex_min(space: &SpaceModel, a: &[usize], eps: &[f64]) -> f64 {
    let n = space.dim();
    if space.is_lattice() {
        let d = space.dual_unchecked(&signed_indicator(n, a, eps));
        return 1.0 / d.lower;
    }
    let k = a.len();
    let mut map = DMatrix::zeros(n, k);
    for (j, &i) in a.iter().enumerate() {
        map[(i, j)] = eps[j];
    }
    let poly = Polytope {
        map,
        offset: DVector::zeros(n),
        ineq: -DMatrix::identity(k, k),
        ineq_rhs: DVector::zeros(k),
        eq: DMatrix::from_element(1, k, 1.0),
        eq_rhs: DVector::from_element(1, 1.0),
        start: DVector::from_element(k, 1.0 / k as f64),
    };
    opt::minimize(space, &poly, vec![], MinOptions::default()).upper
}

/// C_e = max_m σ*(m)·max_{|A|=m, ε} μ_{ε,A}: the smallest constant with
/// σ*(m)·(m-th largest |y_n|) ≤ C_e‖y‖_* for every functional y.
pub fn lorentz_embedding_constant(
    space: &SpaceModel,
    sigma: &PosSequence,
) -> Result<(f64, Witness)> {
    let n = space.dim();
    if n > ENUM_CAP {
        return Err(LabError::CapExceeded(format!(
            "embedding constant needs dim <= {ENUM_CAP}"
        )));
    }
    let sstar = dual_sequence(&sigma.truncate(n)?);
    let sets = signed_sets(space, true);
    let mus: Vec<f64> = sets
        .par_iter()
        .map(|(a, s)| simplex_min(space, a, s) * (1.0 + 1e-9))
        .collect();
    let mut best = (0.0, 0);
    for (k, (a, _)) in sets.iter().enumerate() {
        let val = sstar.get(a.len()) * mus[k];
        if val > best.0 {
            best = (val, k);
        }
    }
    let (a, s) = sets[best.1].clone();
    Ok((
        best.0,
        Witness {
            m: Some(a.len()),
            set_a: Some(a),
            signs_a: Some(s),
            ..Witness::default()
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    LowerBoundEstimate,
}

/// Data from which a reported ratio can be recomputed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_a: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_b: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub value: f64,
    pub mode: Mode,
    pub witness: Witness,
}

impl ConstantEntry {
    fn exact(value: f64, witness: Witness) -> Self {
        ConstantEntry {
            value,
            mode: Mode::Exact,
            witness,
        }
    }
}

/// Declared test family for the symmetry-for-largest-coefficients constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlcFamily {
    /// Bound on |A| and |B|.
    pub cap: usize,
    /// Coefficient grid for g.
    pub grid: Vec<f64>,
    /// Bound on |supp g|.
    pub g_support: usize,
    /// Restrict to |A| = |B|.
    pub equal_sizes: bool,
}

impl Default for SlcFamily {
    fn default() -> Self {
        SlcFamily {
            cap: 3,
            grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            g_support: 2,
            equal_sizes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub samples: usize,
    pub seed: u64,
    pub family: SlcFamily,
    pub enum_cap: usize,
    /// σ for the embedding constant; the fundamental function when absent.
    pub sigma: Option<PosSequence>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            samples: 500,
            seed: 0,
            family: SlcFamily::default(),
            enum_cap: ENUM_CAP,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub lattice_unconditional: ConstantEntry,
    pub suppression: ConstantEntry,
    /// k_m for m = 1..dim.
    pub unconditionality_params: Vec<ConstantEntry>,
    pub democracy: ConstantEntry,
    pub superdemocracy: ConstantEntry,
    pub slc: ConstantEntry,
    pub bidemocracy: ConstantEntry,
    pub quasi_greedy: ConstantEntry,
    pub suppression_quasi_greedy: ConstantEntry,
    pub greedy: ConstantEntry,
    pub almost_greedy: ConstantEntry,
    pub lorentz_embedding: ConstantEntry,
}

impl ConstantsReport {
    /// (name, entry) pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, &ConstantEntry)> {
        let mut out = vec![
            ("K_u".to_string(), &self.lattice_unconditional),
            ("K_su".to_string(), &self.suppression),
        ];
        for (m, e) in self.unconditionality_params.iter().enumerate() {
            out.push((format!("k_{}", m + 1), e));
        }
        out.extend([
            ("democracy".to_string(), &self.democracy),
            ("superdemocracy".to_string(), &self.superdemocracy),
            ("slc".to_string(), &self.slc),
            ("bidemocracy".to_string(), &self.bidemocracy),
            ("quasi_greedy".to_string(), &self.quasi_greedy),
            (
                "suppression_quasi_greedy".to_string(),
                &self.suppression_quasi_greedy,
            ),
            ("K_g".to_string(), &self.greedy),
            ("almost_greedy".to_string(), &self.almost_greedy),
            ("C_e".to_string(), &self.lorentz_embedding),
        ]);
        out
    }

    /// `constant,value,mode` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("constant,value,mode\n");
        for (name, e) in self.entries() {
            let mode = match e.mode {
                Mode::Exact => "exact",
                Mode::LowerBoundEstimate => "lower_bound_estimate",
            };
            s.push_str(&format!("{name},{},{mode}\n", e.value));
        }
        s
    }
}

/// Per-probe generator: vector from a seeded stream, deterministic per index.
fn probe_vector(seed: u64, index: usize, n: usize) -> Vec<f64> {
    let mut r = rng(seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64));
    random_vector(&mut r, n)
}

/// Max of `ratio` over seeded probes, ties resolved by the lowest probe index.
fn sampled_max<F>(n: usize, samples: usize, seed: u64, ratio: F) -> (f64, Witness)
where
    F: Fn(&[f64]) -> Option<(f64, Witness)> + Sync,
{
    let results: Vec<Option<(f64, Witness)>> = (0..samples)
        .into_par_iter()
        .map(|k| ratio(&probe_vector(seed, k, n)))
        .collect();
    let mut best = (1.0, Witness::default());
    let mut found = false;
    for r in results.into_iter().flatten() {
        if !found || r.0 > best.0 {
            best = r;
            found = true;
        }
    }
    best
}

/// Local ascent from a witness vector by seeded coordinate perturbations.
fn refine<F>(start: (f64, Witness), seed: u64, steps: usize, ratio: F) -> (f64, Witness)
where
    F: Fn(&[f64]) -> Option<(f64, Witness)>,
{
    let Some(mut x) = start.1.vector.clone() else {
        return start;
    };
    let mut best = start;
    let mut r = rng(seed ^ 0x5EED);
    let n = x.len();
    let mut scale = 0.2;
    for step in 0..steps {
        let mut y = x.clone();
        let i = r.gen_range(0..n);
        y[i] += scale * (r.gen::<f64>() * 2.0 - 1.0);
        if r.gen_bool(0.3) {
            let j = r.gen_range(0..n);
            y[j] = y[i];
        }
        if let Some(c) = ratio(&y) {
            if c.0 > best.0 {
                best = c;
                x = y;
            }
        }
        if step % 100 == 99 {
            scale *= 0.7;
        }
    }
    best
}

fn ratio_sets<F>(
    v: &[f64],
    sets: impl Iterator<Item = Vec<usize>>,
    num: F,
) -> Option<(f64, Witness)>
where
    F: Fn(&[usize]) -> f64,
{
    let mut best: Option<(f64, Witness)> = None;
    for a in sets {
        let r = num(&a);
        if best.as_ref().is_none_or(|b| r > b.0) {
            best = Some((
                r,
                Witness {
                    vector: Some(v.to_vec()),
                    m: Some(a.len()),
                    set_a: Some(a),
                    ..Witness::default()
                },
            ));
        }
    }
    best
}

pub fn slc_constant(space: &SpaceModel, fam: &SlcFamily) -> Result<(f64, Witness)> {
    let n = space.dim();
    let nz: Vec<f64> = fam.grid.iter().copied().filter(|x| *x != 0.0).collect();
    let mut gs: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for s in 1..=fam.g_support.min(n) {
        for supp in combinations(&(0..n).collect::<Vec<_>>(), s) {
            let count = nz.len().pow(s as u32);
            for code in 0..count {
                let mut g = vec![0.0; n];
                let mut c = code;
                for &i in &supp {
                    g[i] = nz[c % nz.len()];
                    c /= nz.len();
                }
                gs.push(g);
            }
        }
    }
    let cap = fam.cap.min(n);
    let lattice = space.is_lattice();
    let per_g: Vec<(f64, Witness)> = gs
        .par_iter()
        .map(|g| {
            let free: Vec<usize> = (0..n).filter(|&i| g[i] == 0.0).collect();
            // per set: (max over ε, argmax, min over δ, argmin)
            let mut table: HashMap<Vec<usize>, (f64, Vec<f64>, f64, Vec<f64>)> = HashMap::new();
            let mut subsets = Vec::new();
            for k in 1..=cap.min(free.len()) {
                subsets.extend(combinations(&free, k));
            }
            for a in &subsets {
                let k = a.len();
                let patterns: Vec<Vec<f64>> = if lattice {
                    vec![vec![1.0; k]]
                } else {
                    (0u32..(1 << k))
                        .map(|p| {
                            (0..k)
                                .map(|j| if p >> j & 1 == 1 { -1.0 } else { 1.0 })
                                .collect()
                        })
                        .collect()
                };
                let mut entry = (f64::NEG_INFINITY, vec![], f64::INFINITY, vec![]);
                for s in patterns {
                    let mut v = g.clone();
                    for (j, &i) in a.iter().enumerate() {
                        v[i] = s[j];
                    }
                    let val = space.eval(&v);
                    if val > entry.0 {
                        entry.0 = val;
                        entry.1 = s.clone();
                    }
                    if val < entry.2 {
                        entry.2 = val;
                        entry.3 = s;
                    }
                }
                table.insert(a.clone(), entry);
            }
            let mut best = (f64::NEG_INFINITY, Witness::default());
            for a in &subsets {
                for b in &subsets {
                    if b.len() < a.len() || (fam.equal_sizes && b.len() != a.len()) {
                        continue;
                    }
                    if a.iter().any(|i| b.contains(i)) {
                        continue;
                    }
                    let (ea, eb) = (&table[a], &table[b]);
                    let r = ea.0 / eb.2;
                    if r > best.0 {
                        best = (
                            r,
                            Witness {
                                set_a: Some(a.clone()),
                                signs_a: Some(ea.1.clone()),
                                set_b: Some(b.clone()),
                                signs_b: Some(eb.3.clone()),
                                g: Some(g.clone()),
                                ..Witness::default()
                            },
                        );
                    }
                }
            }
            best
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Witness::default());
    for r in per_g {
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(best)
}

/// ‖1_{ε,A} + g‖ / ‖1_{δ,B} + g‖ for an slc witness.
pub fn slc_ratio(space: &SpaceModel, w: &Witness) -> Option<f64> {
    let n = space.dim();
    let g = w.g.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut va = g.clone();
    for (&i, &s) in w.set_a.as_ref()?.iter().zip(w.signs_a.as_ref()?) {
        va[i] = s;
    }
    let mut vb = g;
    for (&i, &s) in w.set_b.as_ref()?.iter().zip(w.signs_b.as_ref()?) {
        vb[i] = s;
    }
    Some(space.eval(&va) / space.eval(&vb))
}

fn greedy_ratio(space: &SpaceModel, v: &[f64]) -> Option<(f64, Witness)> {
    let supp = v.iter().filter(|x| **x != 0.0).count();
    let mut best: Option<(f64, Witness)> = None;
    for m in 1..supp {
        let sigma = best_m_term(space, v, m).ok()?;
        if sigma.value <= 0.0 {
            continue;
        }
        for a in greedy_sets(v, m) {
            let r = space.eval(&residual_off(v, &a)) / sigma.value;
            if best.as_ref().is_none_or(|b| r > b.0) {
                best = Some((
                    r,
                    Witness {
                        vector: Some(v.to_vec()),
                        m: Some(m),
                        set_a: Some(a),
                        set_b: Some(sigma.support.clone()),
                        ..Witness::default()
                    },
                ));
            }
        }
    }
    best
}

/// ‖v − S_A v‖ / σ_{|A|}(v) for a greedy witness.
pub fn greedy_witness_ratio(space: &SpaceModel, w: &Witness) -> Result<f64> {
    let v = w
        .vector
        .as_ref()
        .ok_or_else(|| LabError::InvalidInput("witness without vector".into()))?;
    let a = w
        .set_a
        .as_ref()
        .ok_or_else(|| LabError::InvalidInput("witness without set".into()))?;
    let s = best_m_term(space, v, a.len())?;
    Ok(space.eval(&residual_off(v, a)) / s.value)
}

/// Sampled greedy-constant lower bound with local refinement.
pub fn greedy_lower_bound(
    space: &SpaceModel,
    samples: usize,
    seed: u64,
    refine_steps: usize,
) -> (f64, Witness) {
    let n = space.dim();
    let start = sampled_max(n, samples, seed, |v| greedy_ratio(space, v));
    refine(start, seed, refine_steps, |v| greedy_ratio(space, v))
}

fn almost_greedy_ratio(space: &SpaceModel, v: &[f64]) -> Option<(f64, Witness)> {
    let n = v.len();
    let supp = v.iter().filter(|x| **x != 0.0).count();
    let mut best: Option<(f64, Witness)> = None;
    for m in 1..supp {
        let mut den = (f64::INFINITY, vec![]);
        for b in masks_of_size(n, m) {
            let b = mask_indices(b);
            let val = space.eval(&residual_off(v, &b));
            if val < den.0 {
                den = (val, b);
            }
        }
        if den.0 <= 0.0 {
            continue;
        }
        for a in greedy_sets(v, m) {
            let r = space.eval(&residual_off(v, &a)) / den.0;
            if best.as_ref().is_none_or(|x| r > x.0) {
                best = Some((
                    r,
                    Witness {
                        vector: Some(v.to_vec()),
                        m: Some(m),
                        set_a: Some(a),
                        set_b: Some(den.1.clone()),
                        ..Witness::default()
                    },
                ));
            }
        }
    }
    best
}

/// Sampled almost-greedy ratio ‖v − S_A v‖ / min_{|B|=|A|} ‖v − S_B v‖.
pub fn almost_greedy_lower_bound(space: &SpaceModel, samples: usize, seed: u64) -> (f64, Witness) {
    sampled_max(space.dim(), samples, seed, |v| {
        almost_greedy_ratio(space, v)
    })
}

/// Every constant of the report, exact where enumeration suffices.
pub fn constants_report(space: &SpaceModel, budget: &Budget) -> Result<ConstantsReport> {
    let n = space.dim();
    if n > budget.enum_cap.min(ENUM_CAP) {
        return Err(LabError::CapExceeded(format!(
            "constants report needs dim <= {}",
            budget.enum_cap.min(ENUM_CAP)
        )));
    }
    let lattice = space.is_lattice();
    let samples = budget.samples;
    let seed = budget.seed;
    let one = |w: Witness| ConstantEntry::exact(1.0, w);
    let lower = |(value, witness): (f64, Witness)| ConstantEntry {
        value,
        mode: Mode::LowerBoundEstimate,
        witness,
    };

    let lattice_unconditional = if lattice {
        one(Witness::default())
    } else {
        lower(sampled_max(n, samples, seed, |v| {
            let nv = space.eval(v);
            let mut best: Option<(f64, Witness)> = None;
            for p in 0u32..(1 << n.min(10)) {
                let s: Vec<f64> = (0..n)
                    .map(|j| if j < 10 && p >> j & 1 == 1 { -1.0 } else { 1.0 })
                    .collect();
                let w: Vec<f64> = v.iter().zip(&s).map(|(a, b)| a * b).collect();
                let r = space.eval(&w) / nv;
                if best.as_ref().is_none_or(|b| r > b.0) {
                    best = Some((
                        r,
                        Witness {
                            vector: Some(v.to_vec()),
                            signs_a: Some(s),
                            ..Witness::default()
                        },
                    ));
                }
            }
            best
        }))
    };

    let (suppression, unconditionality_params) = if lattice {
        (
            one(Witness::default()),
            (0..n).map(|_| one(Witness::default())).collect(),
        )
    } else {
        let per: Vec<Vec<Option<(f64, Witness)>>> = (0..samples)
            .into_par_iter()
            .map(|k| {
                let v = probe_vector(seed, k, n);
                let nv = space.eval(&v);
                (1..=n)
                    .map(|m| {
                        ratio_sets(&v, masks_of_size(n, m).into_iter().map(mask_indices), |a| {
                            space.eval(&project(&v, a)) / nv
                        })
                    })
                    .collect()
            })
            .collect();
        let mut exact_size: Vec<(f64, Witness)> = vec![(1.0, Witness::default()); n];
        for row in per {
            for (m, r) in row.into_iter().enumerate() {
                if let Some(r) = r {
                    if r.0 > exact_size[m].0 {
                        exact_size[m] = r;
                    }
                }
            }
        }
        let mut k_m = Vec::new();
        let mut acc: (f64, Witness) = (1.0, Witness::default());
        for e in exact_size {
            if e.0 > acc.0 {
                acc = e;
            }
            k_m.push(lower(acc.clone()));
        }
        (lower(acc), k_m)
    };

    let unsigned = profile_with(space, false)?;
    let signed = profile_with(space, true)?;
    let demo = |p: &FundamentalProfile| -> ConstantEntry {
        let mut best = (f64::NEG_INFINITY, Witness::default());
        let val = |set: &(Vec<usize>, Vec<f64>)| space.eval(&signed_indicator(n, &set.0, &set.1));
        let up: Vec<f64> = p.max_sets.iter().map(val).collect();
        let lo: Vec<f64> = p.min_sets.iter().map(val).collect();
        for m in 0..n {
            // φ_u(m) is attained at a size ≤ m, φ_l(m) at a size ≥ m.
            let iu = (0..=m).fold(0, |b, k| if up[k] > up[b] { k } else { b });
            let il = (m..n).fold(m, |b, k| if lo[k] < lo[b] { k } else { b });
            let r = p.phi_u[m] / p.phi_l[m];
            if r > best.0 {
                best = (
                    r,
                    Witness {
                        m: Some(m + 1),
                        set_a: Some(p.max_sets[iu].0.clone()),
                        signs_a: Some(p.max_sets[iu].1.clone()),
                        set_b: Some(p.min_sets[il].0.clone()),
                        signs_b: Some(p.min_sets[il].1.clone()),
                        ..Witness::default()
                    },
                );
            }
        }
        ConstantEntry::exact(best.0, best.1)
    };
    let democracy = demo(&unsigned);
    let superdemocracy = demo(&signed);

    let (slc_v, slc_w) = slc_constant(space, &budget.family)?;
    let slc = ConstantEntry::exact(slc_v, slc_w);

    let mut bid = (f64::NEG_INFINITY, 0);
    for m in 0..n {
        let r = signed.phi_u[m] * signed.phi_u_dual[m] / (m + 1) as f64;
        if r > bid.0 {
            bid = (r, m + 1);
        }
    }
    let bidemocracy = ConstantEntry {
        value: bid.0,
        mode: if signed.dual_exact {
            Mode::Exact
        } else {
            Mode::LowerBoundEstimate
        },
        witness: Witness {
            m: Some(bid.1),
            ..Witness::default()
        },
    };

    let (quasi_greedy, suppression_quasi_greedy) = if lattice {
        (one(Witness::default()), one(Witness::default()))
    } else {
        let q = sampled_max(n, samples, seed, |v| {
            let nv = space.eval(v);
            ratio_sets(v, (1..n).flat_map(|m| greedy_sets(v, m)), |a| {
                space.eval(&project(v, a)) / nv
            })
        });
        let s = sampled_max(n, samples, seed, |v| {
            let nv = space.eval(v);
            ratio_sets(v, (1..n).flat_map(|m| greedy_sets(v, m)), |a| {
                space.eval(&residual_off(v, a)) / nv
            })
        });
        (lower(q), lower(s))
    };

    let greedy = if lattice && space.is_symmetric() {
        one(Witness::default())
    } else {
        lower(greedy_lower_bound(space, samples, seed, 0))
    };
    let almost_greedy = if lattice && space.is_symmetric() {
        one(Witness::default())
    } else {
        lower(almost_greedy_lower_bound(space, samples, seed))
    };

    let sigma = match &budget.sigma {
        Some(s) => s.truncate(n)?,
        None => PosSequence::new(signed.phi_u.clone())?,
    };
    let (ce, cw) = lorentz_embedding_constant(space, &sigma)?;
    let lorentz_embedding = ConstantEntry::exact(ce, cw);

    Ok(ConstantsReport {
        lattice_unconditional,
        suppression,
        unconditionality_params,
        democracy,
        superdemocracy,
        slc,
        bidemocracy,
        quasi_greedy,
        suppression_quasi_greedy,
        greedy,
        almost_greedy,
        lorentz_embedding,
    })
}

/// Recomputes each witnessed ratio; returns (name, reported, recomputed).
pub fn recheck(space: &SpaceModel, report: &ConstantsReport) -> Result<Vec<(String, f64, f64)>> {
    let mut out = Vec::new();
    for (name, e) in report.entries() {
        let w = &e.witness;
        let again = match name.as_str() {
            "K_u" => match (&w.vector, &w.signs_a) {
                (Some(v), Some(s)) => {
                    let z: Vec<f64> = v.iter().zip(s).map(|(a, b)| a * b).collect();
                    Some(space.eval(&z) / space.eval(v))
                }
                _ => None,
            },
            "quasi_greedy" => match (&w.vector, &w.set_a) {
                (Some(v), Some(a)) => Some(space.eval(&project(v, a)) / space.eval(v)),
                _ => None,
            },
            "K_su" | "suppression_quasi_greedy" => match (&w.vector, &w.set_a) {
                (Some(v), Some(a)) if name == "K_su" => {
                    Some(space.eval(&project(v, a)) / space.eval(v))
                }
                (Some(v), Some(a)) => Some(space.eval(&residual_off(v, a)) / space.eval(v)),
                _ => None,
            },
            "democracy" | "superdemocracy" | "slc" => slc_ratio(space, w),
            "K_g" if w.vector.is_some() => Some(greedy_witness_ratio(space, w)?),
            "almost_greedy" => match (&w.vector, &w.set_a, &w.set_b) {
                (Some(v), Some(a), Some(b)) => {
                    Some(space.eval(&residual_off(v, a)) / space.eval(&residual_off(v, b)))
                }
                _ => None,
            },
            _ if name.starts_with("k_") => match (&w.vector, &w.set_a) {
                (Some(v), Some(a)) => Some(space.eval(&project(v, a)) / space.eval(v)),
                _ => None,
            },
            _ => None,
        };
        if let Some(x) = again {
            out.push((name, e.value, x));
        }
    }
    Ok(out)
}

/// Number of (set, sign) pairs the profile enumerates.
pub fn profile_size(space: &SpaceModel) -> u128 {
    let n = space.dim();
    (1..=n)
        .map(|m| {
            let sets = if space.is_symmetric() {
                1
            } else {
                binomial(n, m)
            };
            let signs = if space.is_lattice() {
                1
            } else {
                1u128 << (m - 1)
            };
            sets * signs
        })
        .sum()
}
