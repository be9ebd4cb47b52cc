//! Renorming constructions as executable norm evaluators: the lattice
//! renorming, the main renorming with its S/T^c expression, the almost-greedy
//! renorming, the subsymmetric renorming and the composed pipeline.

use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::greedy::{fundamental_profile, greedy_sets, lorentz_embedding_constant};
use crate::opt::{self, MinOptions, Polytope};
use crate::seqlab::{dini_regularize, dual_sequence, PosSequence};
use crate::space::{
    make_marcinkiewicz, marcinkiewicz, project, sgn, Descriptor, DualEstimate, Imp, SpaceModel,
};
use crate::util::{binomial, masks_of_size, random_vector, rng};

/// Largest dimension accepted by the main and almost-greedy renormings.
pub const MAIN_MAX_DIM: usize = 12;
/// Largest dimension accepted by the unpruned oracle.
pub const BRUTE_MAX_DIM: usize = 8;
/// Inflation applied to sampled constants before they enter an evaluator.
pub const INFLATION: f64 = 1.05;
const MEMO_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ComputedExact,
    ComputedLowerBoundInflated,
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn exact(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::ComputedExact,
        }
    }
    pub fn inflated(estimate: f64) -> Self {
        Constant {
            value: estimate * INFLATION,
            provenance: Provenance::ComputedLowerBoundInflated,
        }
    }
    pub fn user(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::UserSupplied,
        }
    }
}

/// Constants entering the main and almost-greedy renormings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    pub c_q: Constant,
    pub c_d: Constant,
    pub c_e: Constant,
    pub c_a: Constant,
    pub c_r: Constant,
    pub c_b: Constant,
    pub delta: Constant,
}

impl RenormConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in self.named() {
            if !(c.value.is_finite() && c.value > 0.0) {
                return Err(LabError::InvalidInput(format!(
                    "constant {name} = {} must be positive",
                    c.value
                )));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, Constant); 7] {
        [
            ("C_q", self.c_q),
            ("C_d", self.c_d),
            ("C_e", self.c_e),
            ("C_a", self.c_a),
            ("C_r", self.c_r),
            ("C_b", self.c_b),
            ("delta", self.delta),
        ]
    }

    /// 2·C_e·C_r, the divisor of the T^c term.
    pub fn k_main(&self) -> f64 {
        2.0 * self.c_e.value * self.c_r.value
    }
}

/// S(f, A) = Σ_{n∈A} |f_n|.
pub fn s_func(v: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&i| v[i].abs()).sum()
}

/// T(f, f*, A) = Σ_{n∈A} f*_n f_n.
pub fn t_func(v: &[f64], fstar: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&i| fstar[i] * v[i]).sum()
}

/// T^c(f, f*, A) = f*(f) − T(f, f*, A).
pub fn tc_func(v: &[f64], fstar: &[f64], set: &[usize]) -> f64 {
    let all: f64 = fstar.iter().zip(v).map(|(a, b)| a * b).sum();
    all - t_func(v, fstar, set)
}

/// f ↦ max_ε ‖M_ε f‖, the smallest lattice 1-unconditional norm above the base.
pub fn lattice_renorm(space: &SpaceModel) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Lattice {
        base: Box::new(space.clone()),
    })
}

/// σ restricted to the model dimension, with σ and σ* nondecreasing.
pub fn validate_sigma(sigma: &PosSequence, n: usize) -> Result<PosSequence> {
    if sigma.horizon() < n {
        return Err(LabError::InvalidSequence(format!(
            "sigma horizon {} shorter than dim {n}",
            sigma.horizon()
        )));
    }
    let s = sigma.truncate(n)?;
    if let Some(m) = s.first_decrease() {
        return Err(LabError::InvalidSequence(format!(
            "sigma decreases at index {m}"
        )));
    }
    if let Some(m) = dual_sequence(&s).first_decrease() {
        return Err(LabError::InvalidSequence(format!(
            "dual of sigma decreases at index {m}"
        )));
    }
    Ok(s)
}

fn check_base(base: &SpaceModel) -> Result<()> {
    match base.imp() {
        Imp::Main(_) | Imp::Almost(_) | Imp::Subsym(_) => Err(LabError::InvalidInput(
            "renormed models cannot serve as a renorming base".into(),
        )),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MainCaps {
    /// Upper bound on |A| and |B| in the supremum; `None` means no cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_set: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainSpec {
    pub base: SpaceModel,
    pub sigma: PosSequence,
    pub constants: RenormConstants,
    #[serde(default)]
    pub caps: MainCaps,
}

type MemoKey = (Vec<u64>, u64);

/// Evaluator of
/// ⦀f⦀ = sup{ S(f,A)/σ*(|A|) + |T^c(f,f*,A∪B)|/(2C_eC_r) : B greedy for f*, |A| ≤ |B|, ‖f*‖ ≤ 1 }.
///
/// For fixed (A, B) the supremum over f* is the value of the convex program
/// V(c, B) = sup{⟨y,c⟩ : ‖y‖_* ≤ 1, B greedy for y} with c = f·χ_{(A∪B)^c},
/// which is solved in its dual form min ‖z‖ over an explicit polytope.
pub struct MainImp {
    base: SpaceModel,
    n: usize,
    sstar: Vec<f64>,
    k: f64,
    max_set: usize,
    lattice: bool,
    /// Upper bound for max_j ‖e_j*‖_*, used to box the general programs.
    coord_dual: f64,
    marc: SpaceModel,
    by_size: Vec<Vec<u32>>,
    memo: RwLock<HashMap<MemoKey, f64>>,
}

struct Cand {
    ub: f64,
    sa: f64,
    u: u32,
    b: u32,
}

fn bits(c: &[f64]) -> Vec<u64> {
    c.iter().map(|x| x.to_bits()).collect()
}

fn masked(a: &[f64], keep: u32) -> Vec<f64> {
    a.iter()
        .enumerate()
        .map(|(i, x)| if keep >> i & 1 == 1 { *x } else { 0.0 })
        .collect()
}

fn mask_sum(a: &[f64], m: u32) -> f64 {
    a.iter()
        .enumerate()
        .filter(|(i, _)| m >> i & 1 == 1)
        .map(|(_, x)| x.abs())
        .sum()
}

impl MainImp {
    pub(crate) fn new(spec: &MainSpec) -> Result<Self> {
        check_base(&spec.base)?;
        let n = spec.base.dim();
        if n > MAIN_MAX_DIM {
            return Err(LabError::CapExceeded(format!(
                "main renorm needs dim <= {MAIN_MAX_DIM}, got {n}"
            )));
        }
        let sigma = validate_sigma(&spec.sigma, n)?;
        spec.constants.validate()?;
        let lattice = spec.base.is_lattice();
        let coord_dual = if lattice {
            1.0
        } else {
            let mut worst: f64 = 0.0;
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                worst = worst.max(spec.base.dual_unchecked(&e).upper);
            }
            if worst.is_finite() {
                worst
            } else {
                1e6
            }
        };
        Ok(MainImp {
            base: spec.base.clone(),
            n,
            sstar: dual_sequence(&sigma).values().to_vec(),
            k: spec.constants.k_main(),
            max_set: spec.caps.max_set.unwrap_or(n).min(n),
            lattice,
            coord_dual,
            marc: make_marcinkiewicz(&sigma, n)?,
            by_size: (0..=n).map(|k| masks_of_size(n, k)).collect(),
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &SpaceModel {
        &self.base
    }

    /// The Marcinkiewicz(σ) part sup_A S(f,A)/σ*(|A|), a lower bound of the value.
    pub fn marcinkiewicz_part(&self, v: &[f64]) -> f64 {
        marcinkiewicz(&self.sstar, v).0
    }

    fn s_term(&self, a: &[f64], m: u32) -> f64 {
        let size = m.count_ones() as usize;
        if size == 0 {
            0.0
        } else {
            mask_sum(a, m) / self.sstar[size - 1]
        }
    }

    fn memo_get(&self, key: &MemoKey) -> Option<f64> {
        self.memo.read().ok().and_then(|m| m.get(key).copied())
    }

    fn memo_put(&self, key: MemoKey, v: f64) {
        if let Ok(mut m) = self.memo.write() {
            if m.len() >= MEMO_LIMIT {
                m.clear();
            }
            m.insert(key, v);
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.eval_capped(v, f64::INFINITY)
    }

    /// The exact value when it is below `cap`; otherwise some lower bound ≥ `cap`.
    pub fn eval_capped(&self, v: &[f64], cap: f64) -> f64 {
        if self.lattice {
            self.eval_lattice(v, cap)
        } else {
            self.eval_general(v, cap)
        }
    }

    /// Masks (T, D): support and the set where |f| is maximal.
    fn top_masks(&self, a: &[f64]) -> (u32, u32) {
        let amax = a.iter().fold(0.0f64, |m, x| m.max(*x));
        let mut t = 0;
        let mut d = 0;
        for (i, x) in a.iter().enumerate() {
            if *x > 0.0 {
                t |= 1 << i;
            }
            if *x == amax && amax > 0.0 {
                d |= 1 << i;
            }
        }
        (t, d)
    }

    fn eval_lattice(&self, v: &[f64], cap: f64) -> f64 {
        let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let (t, d) = self.top_masks(&a);
        if t == 0 {
            return 0.0;
        }
        let mut ntab = vec![f64::NAN; 1 << self.n];
        let mut best = self.base.eval(&a) / self.k;
        let mut cands = Vec::new();
        let free = t & !d;
        let mut sub = free;
        loop {
            let am = d | sub;
            let size = am.count_ones() as usize;
            if size <= self.max_set {
                let sa = self.s_term(&a, am);
                best = best.max(sa);
                for &bm in &self.by_size[size] {
                    let u = (am | bm) & t;
                    if u == t {
                        continue;
                    }
                    if ntab[u as usize].is_nan() {
                        ntab[u as usize] = self.base.eval(&masked(&a, t & !u));
                    }
                    cands.push(Cand {
                        ub: sa + ntab[u as usize] / self.k,
                        sa,
                        u,
                        b: bm,
                    });
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        if best >= cap {
            return best;
        }
        cands.sort_by(|x, y| {
            y.ub.total_cmp(&x.ub)
                .then(x.u.cmp(&y.u))
                .then(x.b.cmp(&y.b))
        });
        for cd in cands {
            if cd.ub <= best || best >= cap {
                break;
            }
            let c = masked(&a, t & !cd.u);
            let key = (bits(&c), cd.b as u64);
            let val = match self.memo_get(&key) {
                Some(x) => x,
                None => {
                    let cheap = self.shift_bound(&c, cd.b);
                    if cd.sa + cheap / self.k <= best {
                        continue;
                    }
                    let x = self.v_lattice(&c, cd.b).min(cheap);
                    self.memo_put(key, x);
                    x
                }
            };
            best = best.max(cd.sa + val / self.k);
        }
        best
    }

    /// Feasible value of the lattice program along the uniform transfer
    /// s = θc, r = θΣc/|B|, minimized over θ by golden section.
    fn shift_bound(&self, c: &[f64], bm: u32) -> f64 {
        let nb = bm.count_ones() as f64;
        let total: f64 = c.iter().sum();
        let z_of = |th: f64| -> Vec<f64> {
            c.iter()
                .enumerate()
                .map(|(i, x)| {
                    if bm >> i & 1 == 1 {
                        th * total / nb
                    } else {
                        (1.0 - th) * x
                    }
                })
                .collect()
        };
        let f = |th: f64| self.base.eval(&z_of(th));
        let mut best = f(0.0);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let g = 0.618_033_988_749_894_9;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..28 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        best = best.min(f1).min(f2);
        best
    }

    /// min ‖z‖ with z = c − s on supp(c), z = r on B, 0 ≤ s ≤ c, r ≥ 0, Σr = Σs.
    fn v_lattice(&self, c: &[f64], bm: u32) -> f64 {
        let n = self.n;
        let o: Vec<usize> = (0..n).filter(|&i| c[i] > 0.0 && bm >> i & 1 == 0).collect();
        let b: Vec<usize> = (0..n).filter(|&i| bm >> i & 1 == 1).collect();
        if o.is_empty() {
            return 0.0;
        }
        if b.is_empty() {
            return self.base.eval(c);
        }
        let (no, nb) = (o.len(), b.len());
        let d = no + nb;
        let mut map = DMatrix::zeros(n, d);
        let mut offset = DVector::zeros(n);
        for (k, &i) in o.iter().enumerate() {
            map[(i, k)] = -1.0;
            offset[i] = c[i];
        }
        for (k, &j) in b.iter().enumerate() {
            map[(j, no + k)] = 1.0;
        }
        let mut ineq = DMatrix::zeros(2 * no + nb, d);
        let mut rhs = DVector::zeros(2 * no + nb);
        for k in 0..no {
            ineq[(k, k)] = -1.0;
            ineq[(no + k, k)] = 1.0;
            rhs[no + k] = c[o[k]];
        }
        for k in 0..nb {
            ineq[(2 * no + k, no + k)] = -1.0;
        }
        let mut eq = DMatrix::zeros(1, d);
        for k in 0..no {
            eq[(0, k)] = -1.0;
        }
        for k in 0..nb {
            eq[(0, no + k)] = 1.0;
        }
        let half: f64 = o.iter().map(|&i| c[i] / 2.0).sum();
        let mut start = DVector::zeros(d);
        for k in 0..no {
            start[k] = c[o[k]] / 2.0;
        }
        for k in 0..nb {
            start[no + k] = half / nb as f64;
        }
        let poly = Polytope {
            map,
            offset,
            ineq,
            ineq_rhs: rhs,
            eq,
            eq_rhs: DVector::zeros(1),
            start,
        };
        opt::minimize(&self.base, &poly, vec![], MinOptions::default()).upper
    }

    /// max over sign patterns ε on B of
    /// min ‖z‖ with z_B = ε∘r, r ≥ 0, ‖c_R − z_R‖₁ ≤ Σr (R = complement of B).
    fn v_general(&self, c: &[f64], bm: u32, memo: Option<&mut HashMap<MemoKey, f64>>) -> f64 {
        if c.iter().all(|x| *x == 0.0) {
            return 0.0;
        }
        if bm == 0 {
            return self.base.eval(c);
        }
        let key = (bits(c), (bm as u64) | 1 << 40);
        let cached = match &memo {
            Some(m) => m.get(&key).copied(),
            None => self.memo_get(&key),
        };
        if let Some(x) = cached {
            return x;
        }
        let b: Vec<usize> = (0..self.n).filter(|&i| bm >> i & 1 == 1).collect();
        let mut best: f64 = 0.0;
        let nc = self.base.eval(c);
        for pattern in 0u32..(1u32 << b.len()) {
            let eps: Vec<f64> = (0..b.len())
                .map(|k| if pattern >> k & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            best = best.max(self.v_general_signed(c, &b, &eps, nc));
        }
        match memo {
            Some(m) => {
                m.insert(key, best);
            }
            None => self.memo_put(key, best),
        }
        best
    }

    fn v_general_signed(&self, c: &[f64], b: &[usize], eps: &[f64], nc: f64) -> f64 {
        let n = self.n;
        let r_idx: Vec<usize> = (0..n).filter(|i| !b.contains(i)).collect();
        let (nr, nb) = (r_idx.len(), b.len());
        // x = (z_R, u_R, r_B)
        let d = 2 * nr + nb;
        let mut map = DMatrix::zeros(n, d);
        for (k, &i) in r_idx.iter().enumerate() {
            map[(i, k)] = 1.0;
        }
        for (k, &j) in b.iter().enumerate() {
            map[(j, 2 * nr + k)] = eps[k];
        }
        let rows = 2 * nr + 1 + 2 * nb;
        let mut ineq = DMatrix::zeros(rows, d);
        let mut rhs = DVector::zeros(rows);
        for (k, &i) in r_idx.iter().enumerate() {
            ineq[(2 * k, k)] = -1.0;
            ineq[(2 * k, nr + k)] = -1.0;
            rhs[2 * k] = -c[i];
            ineq[(2 * k + 1, k)] = 1.0;
            ineq[(2 * k + 1, nr + k)] = -1.0;
            rhs[2 * k + 1] = c[i];
        }
        for k in 0..nr {
            ineq[(2 * nr, nr + k)] = 1.0;
        }
        for k in 0..nb {
            ineq[(2 * nr, 2 * nr + k)] = -1.0;
        }
        let r_max = (2.0 * nc * self.coord_dual).max(2.0);
        for k in 0..nb {
            ineq[(2 * nr + 1 + 2 * k, 2 * nr + k)] = -1.0;
            ineq[(2 * nr + 2 + 2 * k, 2 * nr + k)] = 1.0;
            rhs[2 * nr + 2 + 2 * k] = r_max;
        }
        let mut start = DVector::zeros(d);
        for (k, &i) in r_idx.iter().enumerate() {
            start[k] = c[i];
            start[nr + k] = nb as f64 / (2.0 * nr.max(1) as f64);
        }
        for k in 0..nb {
            start[2 * nr + k] = 1.0;
        }
        let poly = Polytope {
            map,
            offset: DVector::zeros(n),
            ineq,
            ineq_rhs: rhs,
            eq: DMatrix::zeros(0, d),
            eq_rhs: DVector::zeros(0),
            start,
        };
        opt::minimize(&self.base, &poly, vec![], MinOptions::default())
            .upper
            .min(nc)
    }

    fn eval_general(&self, v: &[f64], cap: f64) -> f64 {
        let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let (t, d) = self.top_masks(&a);
        if t == 0 {
            return 0.0;
        }
        let mut ntab = vec![f64::NAN; 1 << self.n];
        let mut best = self.base.eval(v) / self.k;
        let mut cands = Vec::new();
        let free = t & !d;
        let mut sub = free;
        loop {
            let am = d | sub;
            let size = am.count_ones() as usize;
            if size <= self.max_set {
                let sa = self.s_term(&a, am);
                best = best.max(sa);
                for bsize in size..=self.max_set {
                    for &bm in &self.by_size[bsize] {
                        let u = (am | bm) & t;
                        if u == t {
                            continue;
                        }
                        if ntab[u as usize].is_nan() {
                            ntab[u as usize] = self.base.eval(&masked(v, t & !u));
                        }
                        cands.push(Cand {
                            ub: sa + ntab[u as usize] / self.k,
                            sa,
                            u,
                            b: bm,
                        });
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        if best >= cap {
            return best;
        }
        cands.sort_by(|x, y| {
            y.ub.total_cmp(&x.ub)
                .then(x.u.cmp(&y.u))
                .then(x.b.cmp(&y.b))
        });
        for cd in cands {
            if cd.ub <= best || best >= cap {
                break;
            }
            let c = masked(v, t & !cd.u);
            best = best.max(cd.sa + self.v_general(&c, cd.b, None) / self.k);
        }
        best
    }

    /// Full enumeration over all (A, B) with |A| ≤ |B| and all sign regions,
    /// without the reduction to D ⊆ A ⊆ supp(f) and without bounds.
    fn eval_unpruned(&self, v: &[f64]) -> f64 {
        let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let mut local = HashMap::new();
        let mut best: f64 = 0.0;
        let full = (1u32 << self.n) - 1;
        for asize in 0..=self.max_set {
            for &am in &self.by_size[asize] {
                let sa = self.s_term(&a, am);
                for bsize in asize..=self.max_set {
                    for &bm in &self.by_size[bsize] {
                        let c = masked(v, full & !(am | bm));
                        let val = sa + self.v_general(&c, bm, Some(&mut local)) / self.k;
                        best = best.max(val);
                    }
                }
            }
        }
        best
    }

    /// Two-sided dual norm bounds: lower from explicit primal vectors, upper
    /// from ⦀·⦀ ≥ Marcinkiewicz(σ).
    pub fn dual(&self, y: &[f64]) -> DualEstimate {
        let upper = self.marc.dual_unchecked(y).upper;
        let n = self.n;
        let order = crate::space::order_by_abs(y);
        let supp = y.iter().filter(|x| **x != 0.0).count();
        let mut sizes: Vec<usize> = vec![supp];
        sizes.extend((1..=n).filter(|&m| m < supp));
        let mut lower: f64 = 0.0;
        let try_vec = |w: Vec<f64>, lower: &mut f64| {
            let nv = self.eval(&w);
            if nv > 0.0 {
                let p: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
                *lower = lower.max(p / nv);
            }
        };
        for m in sizes {
            let mut w = vec![0.0; n];
            for &i in order.iter().take(m) {
                w[i] = sgn(y[i]);
            }
            try_vec(w, &mut lower);
            if lower >= upper * (1.0 - 1e-12) {
                break;
            }
        }
        if lower < upper * (1.0 - 1e-12) {
            try_vec(y.to_vec(), &mut lower);
        }
        let lower = lower.min(upper);
        DualEstimate {
            value: lower,
            lower,
            upper,
            exact: upper - lower <= 1e-9 * upper,
        }
    }
}

/// The main renorming as a space model.
pub fn main_renorm(spec: MainSpec) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::MainRenorm(Box::new(spec)))
}

/// Brute-force evaluation of a main-renorm model over every (A, B) pair.
pub fn main_renorm_unpruned(model: &SpaceModel, v: &[f64]) -> Result<f64> {
    model.check_dim(v)?;
    match model.imp() {
        Imp::Main(m) => {
            if m.n > BRUTE_MAX_DIM {
                return Err(LabError::CapExceeded(format!(
                    "unpruned oracle needs dim <= {BRUTE_MAX_DIM}"
                )));
            }
            Ok(m.eval_unpruned(v))
        }
        _ => Err(LabError::InvalidInput("not a main-renorm model".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostSpec {
    pub base: SpaceModel,
    pub sigma: PosSequence,
    pub constants: RenormConstants,
    /// Target ε of the almost (1+ε)-greedy conclusion.
    pub eps: f64,
}

/// ⦀f⦀ = max{‖f‖_s, δ‖f‖_t}. For a lattice 1-unconditional base the
/// functional ‖f‖_t coincides with the base norm: B = ∅ and A = supp(f*) give
/// ‖f‖_t ≥ ‖f‖, and |T(f,f*,A∖B)| ≤ ‖f*‖_*‖f‖ for lattice norms.
pub struct AlmostImp {
    base: SpaceModel,
    sstar: Vec<f64>,
    delta: f64,
}

impl AlmostImp {
    pub(crate) fn new(spec: &AlmostSpec) -> Result<Self> {
        check_base(&spec.base)?;
        let n = spec.base.dim();
        if n > MAIN_MAX_DIM {
            return Err(LabError::CapExceeded(format!(
                "almost-greedy renorm needs dim <= {MAIN_MAX_DIM}"
            )));
        }
        if !spec.base.is_lattice() {
            return Err(LabError::InvalidInput(
                "almost-greedy renorm needs a lattice 1-unconditional base; apply the lattice renorm first".into(),
            ));
        }
        let sigma = validate_sigma(&spec.sigma, n)?;
        spec.constants.validate()?;
        if !(spec.eps > 0.0) {
            return Err(LabError::InvalidInput("eps must be positive".into()));
        }
        let c = &spec.constants;
        let d = c.delta.value * (2.0 * c.c_e.value + c.c_b.value);
        if d > spec.eps.min(1.0) * (1.0 + 1e-12) {
            return Err(LabError::InvalidInput(format!(
                "delta too large: delta(2C_e + C_b) = {d} exceeds min(eps, 1) = {}",
                spec.eps.min(1.0)
            )));
        }
        Ok(AlmostImp {
            base: spec.base.clone(),
            sstar: dual_sequence(&sigma).values().to_vec(),
            delta: c.delta.value,
        })
    }

    pub fn base(&self) -> &SpaceModel {
        &self.base
    }

    pub fn s_norm(&self, v: &[f64]) -> f64 {
        marcinkiewicz(&self.sstar, v).0
    }

    pub fn t_norm(&self, v: &[f64]) -> f64 {
        self.base.eval(v)
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.s_norm(v).max(self.delta * self.t_norm(v))
    }

    pub fn subgradient(&self, v: &[f64]) -> Option<Vec<f64>> {
        let s = self.s_norm(v);
        if s >= self.delta * self.t_norm(v) {
            let (_, k) = marcinkiewicz(&self.sstar, v);
            let mut g = vec![0.0; v.len()];
            for &i in crate::space::order_by_abs(v).iter().take(k) {
                g[i] = sgn(v[i]) / self.sstar[k - 1];
            }
            Some(g)
        } else {
            self.base
                .subgradient(v)
                .map(|g| g.into_iter().map(|x| x * self.delta).collect())
        }
    }
}

pub fn almost_greedy_renorm(spec: AlmostSpec) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::AlmostGreedyRenorm(Box::new(spec)))
}

/// ‖f‖_t by enumeration over nested pairs B ⊊ A through the programs V of the
/// main renorming; used to cross-check the closed form for lattice bases.
pub fn t_norm_by_enumeration(base: &SpaceModel, sigma: &PosSequence, v: &[f64]) -> Result<f64> {
    let n = base.dim();
    let constants = RenormConstants {
        c_q: Constant::user(1.0),
        c_d: Constant::user(1.0),
        c_e: Constant::user(1.0),
        c_a: Constant::user(1.0),
        c_r: Constant::user(1.0),
        c_b: Constant::user(1.0),
        delta: Constant::user(1.0),
    };
    let imp = MainImp::new(&MainSpec {
        base: base.clone(),
        sigma: sigma.clone(),
        constants,
        caps: MainCaps::default(),
    })?;
    if !imp.lattice {
        return Err(LabError::InvalidInput(
            "enumeration form needs a lattice base".into(),
        ));
    }
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let full = (1u32 << n) - 1;
    let mut best: f64 = 0.0;
    for bm in 0..=full {
        let c = masked(&a, full & !bm);
        let val = if bm == 0 {
            base.eval(&c)
        } else {
            imp.v_lattice(&c, bm)
        };
        best = best.max(val);
    }
    Ok(best)
}

fn default_ks() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn default_support_cap() -> usize {
    6
}
fn default_budget() -> u64 {
    2_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsymSpec {
    pub base: SpaceModel,
    pub window: usize,
    #[serde(default = "default_ks")]
    pub k_schedule: Vec<usize>,
    #[serde(default = "default_support_cap")]
    pub support_cap: usize,
    /// Maximal number of maps β enumerated per k.
    #[serde(default = "default_budget")]
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsymEval {
    pub value: f64,
    pub per_k: Vec<(usize, f64)>,
    pub stabilized: bool,
    /// Smallest scheduled k from which all later values agree within 1e-9.
    pub stabilized_from: Option<usize>,
    /// Maximizing positions (0-based) at the largest k.
    pub beta: Vec<usize>,
}

/// ‖f‖_s = sup over increasing β with β(1) ≥ k and gaps ≥ k of ‖L_β f‖,
/// evaluated for every k of the schedule on a finite window.
pub struct SubsymImp {
    base: SpaceModel,
    window: usize,
    ks: Vec<usize>,
    support_cap: usize,
    budget: u64,
}

impl SubsymImp {
    pub(crate) fn new(spec: &SubsymSpec) -> Result<Self> {
        check_base(&spec.base)?;
        if spec.window < 4 {
            return Err(LabError::InvalidInput("window must be at least 4".into()));
        }
        if spec.base.dim() < spec.window {
            return Err(LabError::InvalidInput(format!(
                "base dimension {} smaller than window {}",
                spec.base.dim(),
                spec.window
            )));
        }
        let mut ks = spec.k_schedule.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() || ks[0] == 0 {
            return Err(LabError::InvalidInput(
                "k schedule must be nonempty and positive".into(),
            ));
        }
        Ok(SubsymImp {
            base: spec.base.clone(),
            window: spec.window,
            ks,
            support_cap: spec.support_cap,
            budget: spec.budget,
        })
    }

    pub fn dim(&self) -> usize {
        self.window / 4
    }

    pub fn base(&self) -> &SpaceModel {
        &self.base
    }

    pub fn support_cap(&self) -> usize {
        self.support_cap
    }

    /// Length of the prefix carrying the support of v.
    pub fn prefix_len(v: &[f64]) -> usize {
        v.iter().rposition(|x| *x != 0.0).map_or(0, |i| i + 1)
    }

    pub fn evaluate(&self, v: &[f64]) -> Result<SubsymEval> {
        let s = Self::prefix_len(v);
        if s == 0 {
            return Ok(SubsymEval {
                value: 0.0,
                per_k: self.ks.iter().map(|k| (*k, 0.0)).collect(),
                stabilized: true,
                stabilized_from: self.ks.first().copied(),
                beta: vec![],
            });
        }
        if s > self.support_cap {
            return Err(LabError::CapExceeded(format!(
                "support prefix {s} exceeds the subsymmetric cap {}",
                self.support_cap
            )));
        }
        let mut per_k = Vec::new();
        let mut beta = Vec::new();
        for &k in &self.ks {
            if s * k > self.window {
                return Err(LabError::InvalidInput(format!(
                    "window {} too small for {s} coordinates with gaps {k}",
                    self.window
                )));
            }
            let count = binomial(self.window - (k - 1) * s, s);
            if count > self.budget as u128 {
                return Err(LabError::CapExceeded(format!(
                    "{count} maps at k = {k} exceed the enumeration budget {}",
                    self.budget
                )));
            }
            let (val, arg) = self.sup_at(v, s, k);
            per_k.push((k, val));
            beta = arg;
        }
        let value = per_k.last().map(|x| x.1).unwrap_or(0.0);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
        let mut stabilized_from = None;
        for i in (0..per_k.len()).rev() {
            if close(per_k[i].1, value) {
                stabilized_from = Some(per_k[i].0);
            } else {
                break;
            }
        }
        let stabilized = per_k.len() >= 2 && close(per_k[per_k.len() - 2].1, value);
        Ok(SubsymEval {
            value,
            per_k,
            stabilized,
            stabilized_from,
            beta,
        })
    }

    fn sup_at(&self, v: &[f64], s: usize, k: usize) -> (f64, Vec<usize>) {
        let mut pos = vec![0usize; s];
        let mut w = vec![0.0; self.base.dim()];
        let mut best = (f64::NEG_INFINITY, Vec::new());
        self.rec(v, s, k, 0, &mut pos, &mut w, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        &self,
        v: &[f64],
        s: usize,
        k: usize,
        i: usize,
        pos: &mut Vec<usize>,
        w: &mut Vec<f64>,
        best: &mut (f64, Vec<usize>),
    ) {
        if i == s {
            let val = self.base.eval(w);
            if val > best.0 {
                *best = (val, pos.clone());
            }
            return;
        }
        let lo = if i == 0 { k - 1 } else { pos[i - 1] + k };
        let hi = self.window - 1 - (s - 1 - i) * k;
        for p in lo..=hi {
            pos[i] = p;
            w[p] = v[i];
            self.rec(v, s, k, i + 1, pos, w, best);
            w[p] = 0.0;
        }
    }

    pub fn subgradient(&self, v: &[f64]) -> Option<Vec<f64>> {
        if !self.base.is_lattice() {
            return None;
        }
        let e = self.evaluate(v).ok()?;
        let mut g = vec![0.0; v.len()];
        if e.beta.is_empty() {
            return Some(g);
        }
        let mut w = vec![0.0; self.base.dim()];
        for (i, &p) in e.beta.iter().enumerate() {
            w[p] = v[i];
        }
        let gb = self.base.subgradient(&w)?;
        for (i, &p) in e.beta.iter().enumerate() {
            g[i] = gb[p];
        }
        Some(g)
    }
}

pub fn subsym_renorm(
    space: &SpaceModel,
    window: usize,
    k_schedule: Vec<usize>,
) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::SubsymmetricRenorm(Box::new(SubsymSpec {
        base: space.clone(),
        window,
        k_schedule,
        support_cap: default_support_cap(),
        budget: default_budget(),
    })))
}

/// Full subsymmetric evaluation report of a subsymmetric-renorm model.
pub fn subsym_evaluate(model: &SpaceModel, v: &[f64]) -> Result<SubsymEval> {
    model.check_dim(v)?;
    match model.imp() {
        Imp::Subsym(s) => s.evaluate(v),
        _ => Err(LabError::InvalidInput(
            "not a subsymmetric-renorm model".into(),
        )),
    }
}

/// Suppression quasi-greedy constant of the dual basis, estimated from
/// random functionals.
fn dual_quasi_greedy_estimate(base: &SpaceModel, samples: usize, seed: u64) -> f64 {
    let n = base.dim();
    let mut r = rng(seed);
    let mut worst: f64 = 1.0;
    for _ in 0..samples {
        let y = random_vector(&mut r, n);
        let dy = base.dual_unchecked(&y).value;
        if dy <= 0.0 {
            continue;
        }
        for m in 1..n {
            for g in greedy_sets(&y, m) {
                let rest: Vec<usize> = (0..n).filter(|i| !g.contains(i)).collect();
                let res = project(&y, &rest);
                worst = worst.max(base.dual_unchecked(&res).upper / dy);
            }
        }
    }
    worst
}

/// Constants of the renormings for a base and a sequence σ.
pub fn compute_constants(
    base: &SpaceModel,
    sigma: &PosSequence,
    eps: f64,
) -> Result<RenormConstants> {
    let n = base.dim();
    let sigma = validate_sigma(sigma, n)?;
    let prof = fundamental_profile(base)?;
    let sstar = dual_sequence(&sigma);
    let mut c_d: f64 = 0.0;
    let mut c_a: f64 = 0.0;
    let mut c_b: f64 = 0.0;
    let mut c_r: f64 = 0.0;
    for m in 1..=n {
        let phi = prof.phi_u[m - 1];
        c_d = c_d.max(phi * prof.phi_u_dual[m - 1] / m as f64);
        c_a = c_a.max(sigma.get(m) / phi);
        c_b = c_b.max(phi / sigma.get(m));
        let diff = sigma.get(m) - sigma.get(m - 1);
        if !(diff > 0.0) {
            return Err(LabError::InvalidSequence(format!(
                "sigma is not strictly increasing at index {m}"
            )));
        }
        c_r = c_r.max(1.0 / (sstar.get(m) * diff));
    }
    let c_d = if prof.dual_exact {
        Constant::exact(c_d)
    } else {
        Constant::inflated(c_d)
    };
    let (c_e, _) = lorentz_embedding_constant(base, &sigma)?;
    let c_q = if base.is_lattice() {
        Constant::exact(1.0)
    } else {
        Constant::inflated(dual_quasi_greedy_estimate(base, 64, 0))
    };
    let c_e = Constant::exact(c_e);
    let delta = eps.min(1.0) / (2.0 * c_e.value + c_b);
    Ok(RenormConstants {
        c_q,
        c_d,
        c_e,
        c_a: Constant::exact(c_a),
        c_r: Constant::exact(c_r),
        c_b: Constant::exact(c_b),
        delta: Constant::exact(delta),
    })
}

/// Source of σ for the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaPolicy {
    Given(PosSequence),
    /// Dini regularization of the fundamental function of the lattice model.
    Dini,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub model: SpaceModel,
    pub constants: RenormConstants,
    pub sigma: PosSequence,
}

/// Lattice renorm (when the model is not lattice 1-unconditional already),
/// constants on the lattice model, then the main renorm.
pub fn pipeline_renorm(
    space: &SpaceModel,
    policy: &SigmaPolicy,
    eps: f64,
) -> Result<PipelineOutput> {
    let n = space.dim();
    let lat = if space.is_lattice() {
        space.clone()
    } else {
        lattice_renorm(space)?
    };
    let sigma = match policy {
        SigmaPolicy::Given(s) => validate_sigma(s, n)?,
        SigmaPolicy::Dini => {
            let prof = fundamental_profile(&lat)?;
            dini_regularize(&PosSequence::new(prof.phi_u.clone())?)?
        }
    };
    let constants = compute_constants(&lat, &sigma, eps)?;
    let model = main_renorm(MainSpec {
        base: lat,
        sigma: sigma.clone(),
        constants: constants.clone(),
        caps: MainCaps::default(),
    })?;
    Ok(PipelineOutput {
        model,
        constants,
        sigma,
    })
}

/// Almost-greedy counterpart of the pipeline.
pub fn almost_greedy_pipeline(
    space: &SpaceModel,
    policy: &SigmaPolicy,
    eps: f64,
) -> Result<PipelineOutput> {
    let n = space.dim();
    let lat = if space.is_lattice() {
        space.clone()
    } else {
        lattice_renorm(space)?
    };
    let sigma = match policy {
        SigmaPolicy::Given(s) => validate_sigma(s, n)?,
        SigmaPolicy::Dini => {
            let prof = fundamental_profile(&lat)?;
            dini_regularize(&PosSequence::new(prof.phi_u.clone())?)?
        }
    };
    let constants = compute_constants(&lat, &sigma, eps)?;
    let model = almost_greedy_renorm(AlmostSpec {
        base: lat,
        sigma: sigma.clone(),
        constants: constants.clone(),
        eps,
    })?;
    Ok(PipelineOutput {
        model,
        constants,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqlab::power_sequence;
    use crate::space::make_lp;

    #[test]
    fn functionals() {
        assert_eq!(s_func(&[1.0, -2.0, 3.0], &[0, 2]), 4.0);
        assert_eq!(s_func(&[1.0, -2.0, 3.0], &[]), 0.0);
        assert_eq!(t_func(&[1.0, 2.0], &[0.5, -0.5], &[0, 1]), -0.5);
        assert_eq!(tc_func(&[1.0, 2.0], &[0.5, -0.5], &[0, 1]), 0.0);
        assert_eq!(tc_func(&[1.0, 2.0], &[0.5, -0.5], &[]), -0.5);
    }

    #[test]
    fn t_norm_equals_base_norm_for_lattice_bases() {
        let base = make_lp(2.0, 4).unwrap();
        let sigma = power_sequence(0.5, 4).unwrap();
        let v = [0.4, -1.0, 0.3, 0.7];
        let t = t_norm_by_enumeration(&base, &sigma, &v).unwrap();
        assert!((t - base.eval(&v)).abs() < 1e-9);
    }

    #[test]
    fn rejects_decreasing_dual_sigma() {
        let base = make_lp(2.0, 3).unwrap();
        let sigma = PosSequence::new(vec![1.0, 3.0, 3.5]).unwrap();
        assert!(matches!(
            validate_sigma(&sigma, 3),
            Err(LabError::InvalidSequence(_))
        ));
        let _ = base;
    }
}
