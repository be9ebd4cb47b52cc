//! Finite-dimensional normed spaces with a distinguished coordinate basis.
//!
//! A [`SpaceModel`] is built from a serializable [`Descriptor`] and keeps a
//! compiled evaluator next to it. Vectors are plain coefficient arrays
//! relative to the basis.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};
use crate::models::{self, HaarImp};
use crate::opt::{self, MinOptions, Piece, PieceOracle, Polytope};
use crate::renorm::{AlmostImp, AlmostSpec, MainImp, MainSpec, SubsymImp, SubsymSpec};
use crate::seqlab::{dual_sequence, PosSequence};

/// Coefficients of a vector relative to the basis.
pub type CoefVector = Vec<f64>;

/// An exponent in `[1, ∞]`; serialized as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INF: Exponent = Exponent(f64::INFINITY);

    /// p' with 1/p + 1/p' = 1.
    pub fn conjugate(self) -> Exponent {
        let p = self.0;
        if p == 1.0 {
            Exponent::INF
        } else if p.is_infinite() {
            Exponent(1.0)
        } else {
            Exponent(p / (p - 1.0))
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(Exponent::INF),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad exponent {s:?}"))),
        }
    }
}

/// JSON space descriptor, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Descriptor {
    WeightedLp {
        dim: usize,
        p: Exponent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Lorentz {
        dim: usize,
        weights: Vec<f64>,
    },
    Marcinkiewicz {
        dim: usize,
        sigma: PosSequence,
    },
    DirectSum {
        p: Exponent,
        parts: Vec<SpaceModel>,
    },
    Haar {
        levels: u32,
        p: f64,
    },
    Besov {
        p: f64,
        q: Exponent,
        blocks: usize,
    },
    Schlumprecht {
        dim: usize,
    },
    /// `base(v) + |⟨functional, v⟩|`.
    Skewed {
        base: Box<SpaceModel>,
        functional: Vec<f64>,
    },
    Lattice {
        base: Box<SpaceModel>,
    },
    MainRenorm(Box<MainSpec>),
    AlmostGreedyRenorm(Box<AlmostSpec>),
    SubsymmetricRenorm(Box<SubsymSpec>),
}

/// Result of a dual norm computation. `lower` is always attained by an
/// explicit primal vector; `exact` is set when `upper - lower` is within
/// solver tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
}

impl DualEstimate {
    pub fn exact(v: f64) -> Self {
        DualEstimate {
            value: v,
            lower: v,
            upper: v,
            exact: true,
        }
    }
}

pub(crate) enum Imp {
    Lp {
        p: f64,
        w: Vec<f64>,
    },
    Lorentz {
        w: Vec<f64>,
        cum: Vec<f64>,
    },
    Marcinkiewicz {
        sstar: Vec<f64>,
        concave: bool,
    },
    Blocks {
        p: f64,
        parts: Vec<SpaceModel>,
        starts: Vec<usize>,
    },
    Haar(HaarImp),
    Schlumprecht,
    Skewed {
        base: SpaceModel,
        a: Vec<f64>,
    },
    Lattice {
        base: SpaceModel,
    },
    Main(MainImp),
    Almost(AlmostImp),
    Subsym(SubsymImp),
}

/// A normed space on `R^dim` together with its coordinate basis.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "Descriptor", into = "Descriptor")]
pub struct SpaceModel {
    desc: Descriptor,
    label: String,
    dim: usize,
    imp: Arc<Imp>,
}

impl fmt::Debug for SpaceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceModel({})", self.label)
    }
}

impl PartialEq for SpaceModel {
    fn eq(&self, other: &Self) -> bool {
        self.desc == other.desc
    }
}

impl TryFrom<Descriptor> for SpaceModel {
    type Error = LabError;
    fn try_from(d: Descriptor) -> Result<Self> {
        SpaceModel::from_descriptor(d)
    }
}

impl From<SpaceModel> for Descriptor {
    fn from(s: SpaceModel) -> Self {
        s.desc
    }
}

fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

fn check_positive(name: &str, w: &[f64]) -> Result<()> {
    if let Some(i) = w.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(LabError::InvalidInput(format!(
            "{name}[{}] must be positive and finite",
            i + 1
        )));
    }
    Ok(())
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidInput(format!(
            "exponent {p} must be at least 1"
        )));
    }
    Ok(())
}

impl SpaceModel {
    pub fn from_descriptor(desc: Descriptor) -> Result<Self> {
        let (imp, dim, label) = match &desc {
            Descriptor::WeightedLp { dim, p, weights } => {
                check_exponent(p.0)?;
                if *dim == 0 {
                    return Err(LabError::InvalidInput("dim must be positive".into()));
                }
                let w = match weights {
                    Some(w) => {
                        if w.len() != *dim {
                            return Err(LabError::DimensionMismatch {
                                expected: *dim,
                                got: w.len(),
                            });
                        }
                        check_positive("weights", w)?;
                        w.clone()
                    }
                    None => vec![1.0; *dim],
                };
                let label = if weights.is_some() {
                    format!("weighted_l{}^{}", fmt_p(p.0), dim)
                } else {
                    format!("l{}^{}", fmt_p(p.0), dim)
                };
                (Imp::Lp { p: p.0, w }, *dim, label)
            }
            Descriptor::Lorentz { dim, weights } => {
                if weights.len() != *dim || *dim == 0 {
                    return Err(LabError::DimensionMismatch {
                        expected: *dim,
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(weights[0] > 0.0) {
                    return Err(LabError::InvalidInput(
                        "Lorentz weights must be nonnegative with w1 > 0".into(),
                    ));
                }
                if weights.windows(2).any(|p| p[1] > p[0]) {
                    return Err(LabError::InvalidInput(
                        "Lorentz weights must be nonincreasing".into(),
                    ));
                }
                let mut acc = 0.0;
                let cum = weights
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                (
                    Imp::Lorentz {
                        w: weights.clone(),
                        cum,
                    },
                    *dim,
                    format!("lorentz^{dim}"),
                )
            }
            Descriptor::Marcinkiewicz { dim, sigma } => {
                if *dim == 0 || sigma.horizon() < *dim {
                    return Err(LabError::InvalidInput(format!(
                        "sigma horizon {} shorter than dim {}",
                        sigma.horizon(),
                        dim
                    )));
                }
                let sstar = dual_sequence(&sigma.truncate(*dim)?).values().to_vec();
                let mut concave = true;
                let mut prev_inc = f64::INFINITY;
                for k in 0..*dim {
                    let inc = sstar[k] - if k == 0 { 0.0 } else { sstar[k - 1] };
                    if inc < 0.0 || inc > prev_inc * (1.0 + 1e-12) {
                        concave = false;
                    }
                    prev_inc = inc;
                }
                (
                    Imp::Marcinkiewicz { sstar, concave },
                    *dim,
                    format!("marcinkiewicz^{dim}"),
                )
            }
            Descriptor::DirectSum { p, parts } => {
                check_exponent(p.0)?;
                if parts.is_empty() {
                    return Err(LabError::InvalidInput(
                        "direct sum needs at least one part".into(),
                    ));
                }
                let mut starts = Vec::with_capacity(parts.len() + 1);
                let mut n = 0;
                for part in parts {
                    starts.push(n);
                    n += part.dim();
                }
                starts.push(n);
                let label = format!(
                    "sum_l{}({})",
                    fmt_p(p.0),
                    parts
                        .iter()
                        .map(|x| x.label())
                        .collect::<Vec<_>>()
                        .join(",")
                );
                (
                    Imp::Blocks {
                        p: p.0,
                        parts: parts.clone(),
                        starts,
                    },
                    n,
                    label,
                )
            }
            Descriptor::Haar { levels, p } => {
                let h = HaarImp::new(*levels, *p)?;
                let n = h.dim();
                (Imp::Haar(h), n, format!("haar(L={levels},p={p})"))
            }
            Descriptor::Besov { p, q, blocks } => {
                if !(*p > 1.0 && p.is_finite()) {
                    return Err(LabError::InvalidInput(format!(
                        "Besov p = {p} must lie in (1, inf)"
                    )));
                }
                check_exponent(q.0)?;
                if *blocks == 0 {
                    return Err(LabError::InvalidInput("blocks must be at least 1".into()));
                }
                let mut parts = Vec::new();
                let mut starts = Vec::new();
                let mut n = 0;
                for b in 1..=*blocks {
                    starts.push(n);
                    n += b;
                    parts.push(make_lp(q.0, b)?);
                }
                starts.push(n);
                (
                    Imp::Blocks {
                        p: *p,
                        parts,
                        starts,
                    },
                    n,
                    format!("besov(p={p},q={},blocks={blocks})", fmt_p(q.0)),
                )
            }
            Descriptor::Schlumprecht { dim } => {
                if *dim == 0 || *dim > models::SCHLUMPRECHT_MAX_DIM {
                    return Err(LabError::CapExceeded(format!(
                        "Schlumprecht dim {dim} outside 1..={}",
                        models::SCHLUMPRECHT_MAX_DIM
                    )));
                }
                (Imp::Schlumprecht, *dim, format!("schlumprecht^{dim}"))
            }
            Descriptor::Skewed { base, functional } => {
                if functional.len() != base.dim() {
                    return Err(LabError::DimensionMismatch {
                        expected: base.dim(),
                        got: functional.len(),
                    });
                }
                if functional.iter().any(|x| !x.is_finite()) {
                    return Err(LabError::InvalidInput("functional must be finite".into()));
                }
                (
                    Imp::Skewed {
                        base: (**base).clone(),
                        a: functional.clone(),
                    },
                    base.dim(),
                    format!("skewed({})", base.label()),
                )
            }
            Descriptor::Lattice { base } => {
                if base.dim() > LATTICE_MAX_DIM {
                    return Err(LabError::CapExceeded(format!(
                        "lattice renorm needs dim <= {LATTICE_MAX_DIM}, got {}",
                        base.dim()
                    )));
                }
                (
                    Imp::Lattice {
                        base: (**base).clone(),
                    },
                    base.dim(),
                    format!("lattice({})", base.label()),
                )
            }
            Descriptor::MainRenorm(spec) => {
                let imp = MainImp::new(spec)?;
                let n = spec.base.dim();
                (
                    Imp::Main(imp),
                    n,
                    format!("main_renorm({})", spec.base.label()),
                )
            }
            Descriptor::AlmostGreedyRenorm(spec) => {
                let imp = AlmostImp::new(spec)?;
                let n = spec.base.dim();
                (
                    Imp::Almost(imp),
                    n,
                    format!("almost_greedy_renorm({})", spec.base.label()),
                )
            }
            Descriptor::SubsymmetricRenorm(spec) => {
                let imp = SubsymImp::new(spec)?;
                let n = imp.dim();
                (
                    Imp::Subsym(imp),
                    n,
                    format!("subsymmetric_renorm({})", spec.base.label()),
                )
            }
        };
        Ok(SpaceModel {
            desc,
            label,
            dim,
            imp: Arc::new(imp),
        })
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn imp(&self) -> &Imp {
        &self.imp
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidInput("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// The norm of `v`.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        if let Imp::Subsym(s) = &*self.imp {
            return Ok(s.evaluate(v)?.value);
        }
        Ok(self.eval(v))
    }

    /// Unchecked evaluation; callers guarantee the length.
    pub(crate) fn eval(&self, v: &[f64]) -> f64 {
        match &*self.imp {
            Imp::Lp { p, w } => lp_norm(*p, w, v),
            Imp::Lorentz { w, .. } => {
                let s = sorted_abs(v);
                s.iter().zip(w).map(|(a, b)| a * b).sum()
            }
            Imp::Marcinkiewicz { sstar, .. } => marcinkiewicz(sstar, v).0,
            Imp::Blocks { p, parts, starts } => {
                let norms: Vec<f64> = parts
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m.eval(&v[starts[j]..starts[j + 1]]))
                    .collect();
                lp_norm(*p, &vec![1.0; norms.len()], &norms)
            }
            Imp::Haar(h) => h.eval(v),
            Imp::Schlumprecht => models::schlumprecht(v).value,
            Imp::Skewed { base, a } => base.eval(v) + dot(a, v).abs(),
            Imp::Lattice { base } => lattice_max(base, v).0,
            Imp::Main(m) => m.eval(v),
            Imp::Almost(m) => m.eval(v),
            Imp::Subsym(s) => s.evaluate(v).map(|r| r.value).unwrap_or(f64::NAN),
        }
    }

    /// Exact below `cap`; at or above `cap` only a lower bound ≥ `cap` is guaranteed.
    pub(crate) fn eval_capped(&self, v: &[f64], cap: f64) -> f64 {
        match &*self.imp {
            Imp::Main(m) => m.eval_capped(v, cap),
            _ => self.eval(v),
        }
    }

    /// Lattice 1-unconditional by construction.
    pub fn is_lattice(&self) -> bool {
        match &*self.imp {
            Imp::Lp { .. } | Imp::Lorentz { .. } | Imp::Marcinkiewicz { .. } => true,
            Imp::Schlumprecht | Imp::Lattice { .. } => true,
            Imp::Blocks { parts, .. } => parts.iter().all(|m| m.is_lattice()),
            Imp::Haar(h) => h.p() == 2.0,
            Imp::Skewed { a, .. } => a.iter().all(|x| *x == 0.0),
            Imp::Main(m) => m.base().is_lattice(),
            Imp::Almost(_) => true,
            Imp::Subsym(s) => s.base().is_lattice(),
        }
    }

    /// Invariant under permutations and sign changes of coordinates.
    pub fn is_symmetric(&self) -> bool {
        match &*self.imp {
            Imp::Lp { w, .. } => w.iter().all(|x| *x == w[0]),
            Imp::Lorentz { .. } | Imp::Marcinkiewicz { .. } => true,
            Imp::Blocks { parts, p, .. } => {
                parts.len() == 1 && parts[0].is_symmetric()
                    || parts.iter().all(|m| matches!(&*m.imp, Imp::Lp { p: q, w } if q == p && w.iter().all(|x| *x == 1.0)))
            }
            _ => false,
        }
    }

    /// Whether the norm is a single smooth piece away from the origin.
    pub fn is_smooth(&self) -> bool {
        match &*self.imp {
            Imp::Lp { p, .. } => *p > 1.0 && p.is_finite(),
            Imp::Haar(_) => true,
            Imp::Blocks { p, parts, .. } => {
                *p > 1.0 && p.is_finite() && parts.iter().all(|m| m.is_smooth())
            }
            _ => false,
        }
    }

    /// A norming functional g: `⟨g,v⟩ = ‖v‖` and `‖g‖_* ≤ 1`. Not available
    /// for the renormed kinds.
    pub fn subgradient(&self, v: &[f64]) -> Option<Vec<f64>> {
        let n = v.len();
        let g = match &*self.imp {
            Imp::Lp { p, w } => {
                if *p == 1.0 {
                    v.iter().zip(w).map(|(x, wi)| wi * sgn(*x)).collect()
                } else if p.is_infinite() {
                    let mut g = vec![0.0; n];
                    let (i, _) = argmax(v.iter().zip(w).map(|(x, wi)| (x * wi).abs()));
                    g[i] = w[i] * sgn(v[i]);
                    g
                } else {
                    let mut g = vec![0.0; n];
                    let mut h = DMatrix::zeros(0, 0);
                    lp_smooth(*p, w, v, &mut g, &mut h, false);
                    g
                }
            }
            Imp::Lorentz { w, .. } => {
                let mut g = vec![0.0; n];
                for (k, i) in order_by_abs(v).into_iter().enumerate() {
                    g[i] = w[k] * sgn(v[i]);
                }
                g
            }
            Imp::Marcinkiewicz { sstar, .. } => {
                let (_, k) = marcinkiewicz(sstar, v);
                let mut g = vec![0.0; n];
                for &i in order_by_abs(v).iter().take(k) {
                    g[i] = sgn(v[i]) / sstar[k - 1];
                }
                g
            }
            Imp::Blocks { p, parts, starts } => {
                let norms: Vec<f64> = parts
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m.eval(&v[starts[j]..starts[j + 1]]))
                    .collect();
                let total = lp_norm(*p, &vec![1.0; norms.len()], &norms);
                let mut g = vec![0.0; n];
                let scale: Vec<f64> = if p.is_infinite() {
                    let (j, _) = argmax(norms.iter().copied());
                    (0..norms.len())
                        .map(|k| if k == j { 1.0 } else { 0.0 })
                        .collect()
                } else if *p == 1.0 {
                    vec![1.0; norms.len()]
                } else if total > 0.0 {
                    norms.iter().map(|x| (x / total).powf(p - 1.0)).collect()
                } else {
                    vec![0.0; norms.len()]
                };
                for (j, m) in parts.iter().enumerate() {
                    if scale[j] == 0.0 {
                        continue;
                    }
                    let gj = m.subgradient(&v[starts[j]..starts[j + 1]])?;
                    for (k, x) in gj.into_iter().enumerate() {
                        g[starts[j] + k] = scale[j] * x;
                    }
                }
                g
            }
            Imp::Haar(h) => {
                let mut g = vec![0.0; n];
                let mut hm = DMatrix::zeros(0, 0);
                h.smooth_raw(v, &mut g, &mut hm, false);
                g
            }
            Imp::Schlumprecht => models::schlumprecht(v).functional,
            Imp::Skewed { base, a } => {
                let mut g = base.subgradient(v)?;
                let s = sgn(dot(a, v));
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += s * ai;
                }
                g
            }
            Imp::Lattice { base } => {
                let (_, eps) = lattice_max(base, v);
                let z: Vec<f64> = v.iter().zip(&eps).map(|(x, e)| x * e).collect();
                let gb = base.subgradient(&z)?;
                gb.iter().zip(&eps).map(|(x, e)| x * e).collect()
            }
            Imp::Almost(m) => m.subgradient(v)?,
            Imp::Subsym(s) => s.subgradient(v)?,
            Imp::Main(_) => return None,
        };
        Some(g)
    }

    /// Value of the smooth piece `z ↦ N(ε∘z)` with gradient and (optionally) Hessian.
    fn smooth_raw(&self, z: &[f64], g: &mut [f64], h: &mut DMatrix<f64>, want_h: bool) -> f64 {
        match &*self.imp {
            Imp::Lp { p, w } => lp_smooth(*p, w, z, g, h, want_h),
            Imp::Haar(hm) => hm.smooth_raw(z, g, h, want_h),
            Imp::Blocks { p, parts, starts } => blocks_smooth(*p, parts, starts, z, g, h, want_h),
            Imp::Lattice { base } => base.smooth_raw(z, g, h, want_h),
            _ => {
                // only reached for smooth kinds
                let v = self.eval(z);
                if let Some(sg) = self.subgradient(z) {
                    g.copy_from_slice(&sg);
                }
                v
            }
        }
    }

    /// The dual norm `sup{⟨y,v⟩ : ‖v‖ ≤ 1}`.
    pub fn dual_norm(&self, y: &[f64]) -> Result<DualEstimate> {
        self.check_dim(y)?;
        if let Imp::Subsym(s) = &*self.imp {
            s.evaluate(y)?;
        }
        Ok(self.dual_unchecked(y))
    }

    pub(crate) fn dual_unchecked(&self, y: &[f64]) -> DualEstimate {
        if y.iter().all(|x| *x == 0.0) {
            return DualEstimate::exact(0.0);
        }
        match &*self.imp {
            Imp::Lp { p, w } => {
                let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
                DualEstimate::exact(lp_norm(Exponent(*p).conjugate().0, &inv, y))
            }
            Imp::Lorentz { cum, .. } => {
                let s = sorted_abs(y);
                let mut acc = 0.0;
                let mut best: f64 = 0.0;
                for (k, x) in s.iter().enumerate() {
                    acc += x;
                    best = best.max(acc / cum[k]);
                }
                DualEstimate::exact(best)
            }
            Imp::Marcinkiewicz {
                sstar,
                concave: true,
            } => {
                let s = sorted_abs(y);
                let v = s
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x * (sstar[k] - if k == 0 { 0.0 } else { sstar[k - 1] }))
                    .sum();
                DualEstimate::exact(v)
            }
            Imp::Blocks { p, parts, starts } => {
                let q = Exponent(*p).conjugate().0;
                let ests: Vec<DualEstimate> = parts
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m.dual_unchecked(&y[starts[j]..starts[j + 1]]))
                    .collect();
                let ones = vec![1.0; ests.len()];
                let f = |sel: fn(&DualEstimate) -> f64| {
                    lp_norm(q, &ones, &ests.iter().map(sel).collect::<Vec<_>>())
                };
                DualEstimate {
                    value: f(|e| e.value),
                    lower: f(|e| e.lower),
                    upper: f(|e| e.upper),
                    exact: ests.iter().all(|e| e.exact),
                }
            }
            Imp::Haar(h) => DualEstimate::exact(h.dual(y)),
            Imp::Main(m) => m.dual(y),
            _ => generic_dual(self, y),
        }
    }

    /// `1_{ε,A}` for this space.
    pub fn indicator(&self, set: &SignedSet) -> Result<CoefVector> {
        set.to_vector(self.dim)
    }
}

pub const LATTICE_MAX_DIM: usize = 20;

impl PieceOracle for SpaceModel {
    fn oracle_dim(&self) -> usize {
        self.dim
    }

    fn value_and_piece(&self, z: &[f64]) -> (f64, Piece) {
        match &*self.imp {
            Imp::Lattice { base } => {
                let (v, eps) = lattice_max(base, z);
                if base.is_smooth() {
                    (v, Piece::Smooth(eps))
                } else {
                    (
                        v,
                        Piece::Linear(self.subgradient(z).unwrap_or_else(|| vec![0.0; z.len()])),
                    )
                }
            }
            _ if self.is_smooth() => (self.eval(z), Piece::Smooth(vec![1.0; z.len()])),
            _ => {
                let v = self.eval(z);
                let g = self.subgradient(z).unwrap_or_else(|| vec![0.0; z.len()]);
                (v, Piece::Linear(g))
            }
        }
    }

    fn smooth_piece(
        &self,
        sign: &[f64],
        z: &[f64],
        grad: &mut [f64],
        hess: &mut DMatrix<f64>,
    ) -> f64 {
        let flip = sign.iter().any(|s| *s != 1.0);
        let zz: Vec<f64> = if flip {
            z.iter().zip(sign).map(|(a, b)| a * b).collect()
        } else {
            z.to_vec()
        };
        let v = self.smooth_raw(&zz, grad, hess, true);
        if flip {
            for i in 0..z.len() {
                grad[i] *= sign[i];
                for j in 0..z.len() {
                    hess[(i, j)] *= sign[i] * sign[j];
                }
            }
        }
        v
    }
}

/// Dual norm through `N*(y) = 1 / min{N(v) : ⟨y,v⟩ = 1}`. For lattice norms
/// the minimization runs over nonnegative v on supp(y); otherwise over a box
/// that is enlarged until it is inactive.
pub(crate) fn generic_dual(model: &SpaceModel, y: &[f64]) -> DualEstimate {
    let n = y.len();
    let opts = MinOptions {
        rel_tol: 1e-10,
        ..MinOptions::default()
    };
    if model.is_lattice() {
        let supp: Vec<usize> = (0..n).filter(|&i| y[i] != 0.0).collect();
        let k = supp.len();
        let mut map = DMatrix::zeros(n, k);
        for (j, &i) in supp.iter().enumerate() {
            map[(i, j)] = 1.0;
        }
        let ay: Vec<f64> = supp.iter().map(|&i| y[i].abs()).collect();
        let poly = Polytope {
            map,
            offset: DVector::zeros(n),
            ineq: -DMatrix::identity(k, k),
            ineq_rhs: DVector::zeros(k),
            eq: DMatrix::from_row_slice(1, k, &ay),
            eq_rhs: DVector::from_element(1, 1.0),
            start: DVector::from_iterator(k, ay.iter().map(|a| 1.0 / (k as f64 * a))),
        };
        let r = opt::minimize(model, &poly, vec![], opts);
        return from_min(r.lower, r.upper, r.converged);
    }
    let yy: f64 = y.iter().map(|x| x * x).sum();
    let x0: Vec<f64> = y.iter().map(|x| x / yy).collect();
    let mut b = 4.0 * x0.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-12);
    let mut last = None;
    for _ in 0..16 {
        let mut ineq = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            ineq[(2 * i, i)] = 1.0;
            ineq[(2 * i + 1, i)] = -1.0;
        }
        let poly = Polytope {
            map: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
            ineq,
            ineq_rhs: DVector::from_element(2 * n, b),
            eq: DMatrix::from_row_slice(1, n, y),
            eq_rhs: DVector::from_element(1, 1.0),
            start: DVector::from_vec(x0.clone()),
        };
        let r = opt::minimize(model, &poly, vec![], opts);
        let reach = r.x.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let done = reach < 0.9 * b;
        last = Some((r.lower, r.upper, r.converged && done));
        if done {
            break;
        }
        b *= 4.0;
    }
    let (lo, up, ok) = last.expect("at least one box round");
    from_min(lo, up, ok)
}

fn from_min(lo: f64, up: f64, converged: bool) -> DualEstimate {
    let lower = 1.0 / up;
    let upper = if lo > 0.0 { 1.0 / lo } else { f64::INFINITY };
    DualEstimate {
        value: lower,
        lower,
        upper,
        exact: converged && upper - lower <= 1e-8 * upper,
    }
}

/// `max_ε base(ε∘v)` with the maximizing sign pattern.
pub(crate) fn lattice_max(base: &SpaceModel, v: &[f64]) -> (f64, Vec<f64>) {
    if let Imp::Haar(h) = &*base.imp {
        return h.lattice_max(v);
    }
    let supp: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let mut eps = vec![1.0; v.len()];
    if supp.len() <= 1 || base.is_lattice() {
        return (base.eval(v), eps);
    }
    let free = supp.len() - 1;
    let mut best = f64::NEG_INFINITY;
    let mut best_mask = 0u64;
    let mut z = v.to_vec();
    for mask in 0..(1u64 << free) {
        for (j, &i) in supp[1..].iter().enumerate() {
            z[i] = if mask >> j & 1 == 1 { -v[i] } else { v[i] };
        }
        let val = base.eval(&z);
        if val > best {
            best = val;
            best_mask = mask;
        }
    }
    for (j, &i) in supp[1..].iter().enumerate() {
        if best_mask >> j & 1 == 1 {
            eps[i] = -1.0;
        }
    }
    (best, eps)
}

pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(it: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in it.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Indices ordered by decreasing modulus, lowest index first among ties.
pub fn order_by_abs(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx
}

/// The nonincreasing rearrangement of |v|.
pub fn sorted_abs(v: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Marcinkiewicz value `max_k S_k(v*)/σ*(k)` and the maximizing k (≥ 1).
pub(crate) fn marcinkiewicz(sstar: &[f64], v: &[f64]) -> (f64, usize) {
    let s = sorted_abs(v);
    let mut acc = 0.0;
    let mut best = (0.0, 1);
    for (k, x) in s.iter().enumerate() {
        acc += x;
        let r = acc / sstar[k];
        if r > best.0 {
            best = (r, k + 1);
        }
    }
    best
}

/// `(Σ |w_i v_i|^p)^{1/p}`, computed with scaling.
pub(crate) fn lp_norm(p: f64, w: &[f64], v: &[f64]) -> f64 {
    if p == 1.0 {
        return v.iter().zip(w).map(|(x, wi)| (x * wi).abs()).sum();
    }
    let m = v
        .iter()
        .zip(w)
        .fold(0.0f64, |a, (x, wi)| a.max((x * wi).abs()));
    if p.is_infinite() || m == 0.0 {
        return m;
    }
    if p == 2.0 {
        let s: f64 = v.iter().zip(w).map(|(x, wi)| (x * wi / m).powi(2)).sum();
        return m * s.sqrt();
    }
    let s: f64 = v
        .iter()
        .zip(w)
        .map(|(x, wi)| (x * wi / m).abs().powf(p))
        .sum();
    m * s.powf(1.0 / p)
}

/// Lower clamp on |t|/N in Hessians of ℓ_p with p < 2.
const SMOOTH_FLOOR: f64 = 1e-8;

fn lp_smooth(
    p: f64,
    w: &[f64],
    z: &[f64],
    g: &mut [f64],
    h: &mut DMatrix<f64>,
    want_h: bool,
) -> f64 {
    let n = z.len();
    let nv = lp_norm(p, w, z);
    if nv == 0.0 {
        g.iter_mut().for_each(|x| *x = 0.0);
        if want_h {
            h.fill(0.0);
        }
        return 0.0;
    }
    for i in 0..n {
        let t = w[i] * z[i] / nv;
        g[i] = w[i] * sgn(t) * t.abs().powf(p - 1.0);
    }
    if want_h {
        let c = (p - 1.0) / nv;
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = -c * g[i] * g[j];
            }
            let t = (w[i] * z[i] / nv).abs();
            let t = if p < 2.0 { t.max(SMOOTH_FLOOR) } else { t };
            h[(i, i)] += c * w[i] * w[i] * t.powf(p - 2.0);
        }
    }
    nv
}

fn blocks_smooth(
    p: f64,
    parts: &[SpaceModel],
    starts: &[usize],
    z: &[f64],
    g: &mut [f64],
    h: &mut DMatrix<f64>,
    want_h: bool,
) -> f64 {
    let n = z.len();
    let mut norms = Vec::with_capacity(parts.len());
    let mut grads = Vec::with_capacity(parts.len());
    let mut hs = Vec::with_capacity(parts.len());
    for (j, m) in parts.iter().enumerate() {
        let d = m.dim();
        let mut gj = vec![0.0; d];
        let mut hj = DMatrix::zeros(d, d);
        let v = m.smooth_raw(&z[starts[j]..starts[j + 1]], &mut gj, &mut hj, want_h);
        norms.push(v);
        grads.push(gj);
        hs.push(hj);
    }
    let total = lp_norm(p, &vec![1.0; norms.len()], &norms);
    g.iter_mut().for_each(|x| *x = 0.0);
    if want_h {
        h.fill(0.0);
    }
    if total == 0.0 {
        return 0.0;
    }
    for (j, m) in parts.iter().enumerate() {
        if norms[j] == 0.0 {
            continue;
        }
        let r = norms[j] / total;
        let a = r.powf(p - 1.0);
        for k in 0..m.dim() {
            g[starts[j] + k] = a * grads[j][k];
        }
        if want_h {
            // (p-1) n_j^{p-2} N^{1-p} = (p-1)/N · r^{p-2}
            let b = (p - 1.0) / total * r.max(SMOOTH_FLOOR).powf(p - 2.0);
            for k in 0..m.dim() {
                for l in 0..m.dim() {
                    h[(starts[j] + k, starts[j] + l)] +=
                        a * hs[j][(k, l)] + b * grads[j][k] * grads[j][l];
                }
            }
        }
    }
    if want_h {
        let c = (p - 1.0) / total;
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] -= c * g[i] * g[j];
            }
        }
    }
    total
}

/// A subset A of the index set with signs ε on A (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedSet {
    pub indices: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SignedSet {
    pub fn new(indices: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        if indices.len() != signs.len() {
            return Err(LabError::InvalidInput(
                "signs must be defined exactly on the index set".into(),
            ));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(LabError::InvalidInput("signs must be +1 or -1".into()));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(LabError::InvalidInput(
                "repeated index in signed set".into(),
            ));
        }
        Ok(SignedSet { indices, signs })
    }

    pub fn positive(indices: Vec<usize>) -> Self {
        let signs = vec![1; indices.len()];
        SignedSet { indices, signs }
    }

    pub fn to_vector(&self, n: usize) -> Result<CoefVector> {
        let mut v = vec![0.0; n];
        for (&i, &s) in self.indices.iter().zip(&self.signs) {
            if i >= n {
                return Err(LabError::InvalidInput(format!(
                    "index {i} outside dimension {n}"
                )));
            }
            v[i] = s as f64;
        }
        Ok(v)
    }
}

/// M_λ: coordinatewise multiplication.
pub fn apply_multiplier(space: &SpaceModel, lambda: &[f64], v: &[f64]) -> Result<CoefVector> {
    space.check_dim(v)?;
    space.check_dim(lambda)?;
    Ok(lambda.iter().zip(v).map(|(a, b)| a * b).collect())
}

/// S_A = M_{χ_A}.
pub fn project(v: &[f64], set: &[usize]) -> CoefVector {
    let mut out = vec![0.0; v.len()];
    for &i in set {
        out[i] = v[i];
    }
    out
}

/// L_β: moves coordinate n to β(n). `beta` is 0-based, strictly increasing
/// and defined on the whole support of `v`.
pub fn apply_shift(space: &SpaceModel, beta: &[usize], v: &[f64]) -> Result<CoefVector> {
    space.check_dim(v)?;
    shift_into(space.dim(), beta, v)
}

pub(crate) fn shift_into(n: usize, beta: &[usize], v: &[f64]) -> Result<CoefVector> {
    if beta.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidInput(
            "beta must be strictly increasing".into(),
        ));
    }
    let mut out = vec![0.0; n];
    for (k, x) in v.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        let target = *beta
            .get(k)
            .ok_or_else(|| LabError::InvalidInput(format!("beta undefined at {}", k + 1)))?;
        if target >= n {
            return Err(LabError::InvalidInput(format!(
                "beta({}) = {} outside dimension {n}",
                k + 1,
                target + 1
            )));
        }
        out[target] = *x;
    }
    Ok(out)
}

pub fn make_weighted_lp(p: f64, weights: Vec<f64>) -> Result<SpaceModel> {
    let dim = weights.len();
    SpaceModel::from_descriptor(Descriptor::WeightedLp {
        dim,
        p: Exponent(p),
        weights: Some(weights),
    })
}

pub fn make_lp(p: f64, dim: usize) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::WeightedLp {
        dim,
        p: Exponent(p),
        weights: None,
    })
}

pub fn make_lorentz(weights: Vec<f64>) -> Result<SpaceModel> {
    let dim = weights.len();
    SpaceModel::from_descriptor(Descriptor::Lorentz { dim, weights })
}

pub fn make_marcinkiewicz(sigma: &PosSequence, dim: usize) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Marcinkiewicz {
        dim,
        sigma: sigma.clone(),
    })
}

pub fn make_direct_sum_lp(p: f64, parts: Vec<SpaceModel>) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::DirectSum {
        p: Exponent(p),
        parts,
    })
}

pub fn make_skewed(base: SpaceModel, functional: Vec<f64>) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Skewed {
        base: Box::new(base),
        functional,
    })
}
