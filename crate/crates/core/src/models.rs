//! Concrete basis models: the discrete Haar system in L_p, Besov-type
//! direct sums and the truncated Schlumprecht norm.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::space::{sgn, Descriptor, Exponent, SpaceModel};

pub const HAAR_MAX_LEVELS: u32 = 6;
pub const SCHLUMPRECHT_MAX_DIM: usize = 64;
/// Iteration cap of the Schlumprecht fixed point.
pub const SCHLUMPRECHT_MAX_ITER: usize = 200;
pub const SCHLUMPRECHT_TOL: f64 = 1e-8;

pub fn make_haar(levels: u32, p: f64) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Haar { levels, p })
}

pub fn make_besov_truncation(p: f64, q: f64, blocks: usize) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Besov {
        p,
        q: Exponent(q),
        blocks,
    })
}

pub fn make_schlumprecht(dim: usize) -> Result<SpaceModel> {
    SpaceModel::from_descriptor(Descriptor::Schlumprecht { dim })
}

/// Haar system on 2^L cells of equal measure. Basis order: the constant
/// function, then intervals by (level, left endpoint).
pub struct HaarImp {
    levels: u32,
    p: f64,
    cells: usize,
    /// Cell values of the p-normalized basis functions, row-major (cell, basis).
    synth: Vec<f64>,
    /// Same for the p'-normalized system, which is the dual basis.
    synth_dual: Vec<f64>,
}

/// Cell values of `h_I/‖h_I‖_r` for the full Haar system (r = ∞ gives ±1 values).
pub fn haar_matrix(levels: u32, r: f64) -> DMatrix<f64> {
    let n = 1usize << levels;
    let mut m = DMatrix::zeros(n, n);
    for c in 0..n {
        m[(c, 0)] = 1.0;
    }
    for j in 0..levels {
        let count = 1usize << j;
        let len = n >> j;
        // |I| = 2^{-j}, so ‖h_I‖_r = 2^{-j/r}
        let scale = if r.is_infinite() {
            1.0
        } else {
            2f64.powf(j as f64 / r)
        };
        for k in 0..count {
            let col = count + k;
            let start = k * len;
            for c in start..start + len / 2 {
                m[(c, col)] = scale;
            }
            for c in start + len / 2..start + len {
                m[(c, col)] = -scale;
            }
        }
    }
    m
}

impl HaarImp {
    pub fn new(levels: u32, p: f64) -> Result<Self> {
        if !(1..=HAAR_MAX_LEVELS).contains(&levels) {
            return Err(LabError::InvalidInput(format!(
                "Haar levels {levels} outside 1..={HAAR_MAX_LEVELS}"
            )));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "Haar exponent {p} must lie in (1, inf)"
            )));
        }
        let q = Exponent(p).conjugate().0;
        let flat = |m: DMatrix<f64>| {
            let n = m.nrows();
            let mut out = Vec::with_capacity(n * n);
            for c in 0..n {
                for b in 0..n {
                    out.push(m[(c, b)]);
                }
            }
            out
        };
        let cells = 1usize << levels;
        Ok(HaarImp {
            levels,
            p,
            cells,
            synth: flat(haar_matrix(levels, p)),
            synth_dual: flat(haar_matrix(levels, q)),
        })
    }

    pub fn dim(&self) -> usize {
        self.cells
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    fn synthesize(synth: &[f64], n: usize, a: &[f64], out: &mut [f64]) {
        for c in 0..n {
            let row = &synth[c * n..(c + 1) * n];
            out[c] = row.iter().zip(a).map(|(x, y)| x * y).sum();
        }
    }

    fn lp_of_cells(p: f64, f: &[f64]) -> f64 {
        let n = f.len() as f64;
        let m = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m == 0.0 {
            return 0.0;
        }
        let s: f64 = f.iter().map(|x| pow_abs(x / m, p)).sum();
        m * (s / n).powf(1.0 / p)
    }

    pub fn eval(&self, a: &[f64]) -> f64 {
        let mut f = vec![0.0; self.cells];
        Self::synthesize(&self.synth, self.cells, a, &mut f);
        Self::lp_of_cells(self.p, &f)
    }

    /// Dual norm: the L_{p'} norm of the p'-normalized expansion.
    pub fn dual(&self, y: &[f64]) -> f64 {
        let mut f = vec![0.0; self.cells];
        Self::synthesize(&self.synth_dual, self.cells, y, &mut f);
        Self::lp_of_cells(Exponent(self.p).conjugate().0, &f)
    }

    /// Step values of the synthesized function.
    pub fn cell_values(&self, a: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.cells];
        Self::synthesize(&self.synth, self.cells, a, &mut f);
        f
    }

    pub fn smooth_raw(&self, a: &[f64], g: &mut [f64], h: &mut DMatrix<f64>, want_h: bool) -> f64 {
        let n = self.cells;
        let p = self.p;
        let mut f = vec![0.0; n];
        Self::synthesize(&self.synth, n, a, &mut f);
        let nv = Self::lp_of_cells(p, &f);
        g.iter_mut().for_each(|x| *x = 0.0);
        if want_h {
            h.fill(0.0);
        }
        if nv == 0.0 {
            return 0.0;
        }
        let mu = 1.0 / n as f64;
        // ∇N = μ Hᵀ(sgn F |F/N|^{p-1})
        let u: Vec<f64> = f
            .iter()
            .map(|x| sgn(*x) * pow_abs(x / nv, p - 1.0))
            .collect();
        for c in 0..n {
            let row = &self.synth[c * n..(c + 1) * n];
            for b in 0..n {
                g[b] += mu * row[b] * u[c];
            }
        }
        if want_h {
            // (p-1)/N [μ Hᵀ diag(|F/N|^{p-2}) H − ∇N∇Nᵀ]
            let c0 = (p - 1.0) / nv;
            let d: Vec<f64> = f
                .iter()
                .map(|x| {
                    let t = (x / nv).abs();
                    let t = if p < 2.0 { t.max(1e-8) } else { t };
                    pow_abs(t, p - 2.0)
                })
                .collect();
            for c in 0..n {
                let row = &self.synth[c * n..(c + 1) * n];
                let w = c0 * mu * d[c];
                for i in 0..n {
                    let ri = row[i] * w;
                    for j in 0..n {
                        h[(i, j)] += ri * row[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] -= c0 * g[i] * g[j];
                }
            }
        }
        nv
    }

    /// `max_ε ‖ε∘a‖` by Gray-code enumeration of sign patterns on supp(a).
    pub fn lattice_max(&self, a: &[f64]) -> (f64, Vec<f64>) {
        let n = self.cells;
        let supp: Vec<usize> = (0..n).filter(|&i| a[i] != 0.0).collect();
        let mut eps = vec![1.0; n];
        if supp.len() <= 1 || self.p == 2.0 {
            return (self.eval(a), eps);
        }
        let mut f = vec![0.0; n];
        Self::synthesize(&self.synth, n, a, &mut f);
        let p = self.p;
        let power = |f: &[f64]| -> f64 { f.iter().map(|x| pow_abs(*x, p)).sum() };
        let free = &supp[1..];
        let mut cur = vec![1.0; free.len()];
        let mut best = power(&f);
        let mut best_code = 0u64;
        let mut code = 0u64;
        for step in 1u64..(1u64 << free.len()) {
            let j = step.trailing_zeros() as usize;
            let i = free[j];
            let delta = -2.0 * cur[j] * a[i];
            cur[j] = -cur[j];
            code ^= 1 << j;
            for c in 0..n {
                f[c] += delta * self.synth[c * n + i];
            }
            let s = power(&f);
            if s > best {
                best = s;
                best_code = code;
            }
        }
        for (j, &i) in free.iter().enumerate() {
            if best_code >> j & 1 == 1 {
                eps[i] = -1.0;
            }
        }
        let z: Vec<f64> = a.iter().zip(&eps).map(|(x, e)| x * e).collect();
        (self.eval(&z), eps)
    }
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 3.0 {
        a * a * a
    } else if p == 1.0 {
        a
    } else {
        a.powf(p)
    }
}

/// f(x) = log₂(x + 1).
pub fn schlumprecht_f(x: f64) -> f64 {
    (x + 1.0).log2()
}

#[derive(Debug, Clone)]
pub struct SchlumprechtEval {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A norming functional read off the optimal partition tree.
    pub functional: Vec<f64>,
}

/// The Schlumprecht norm truncated to the given coordinates.
///
/// W(E) is computed for every interval E of the support simultaneously by
/// iterating W ↦ max(‖·‖_∞, max_l f(l)^{-1} max Σ_{i≤l} W(E_i)) from the ℓ_∞
/// seed. The norm is spreading invariant, so zero coordinates are dropped.
pub fn schlumprecht(v: &[f64]) -> SchlumprechtEval {
    let pos: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let s = pos.len();
    let mut functional = vec![0.0; v.len()];
    if s == 0 {
        return SchlumprechtEval {
            value: 0.0,
            iterations: 0,
            converged: true,
            functional,
        };
    }
    let x: Vec<f64> = pos.iter().map(|&i| v[i].abs()).collect();
    let inv_f: Vec<f64> = (0..=s)
        .map(|l| {
            if l >= 1 {
                1.0 / schlumprecht_f(l as f64)
            } else {
                0.0
            }
        })
        .collect();
    // seed[a][b] = max x[a..=b]
    let mut seed = vec![0.0; s * s];
    for a in 0..s {
        let mut m: f64 = 0.0;
        for b in a..s {
            m = m.max(x[b]);
            seed[a * s + b] = m;
        }
    }
    let mut w = seed.clone();
    let mut next = seed.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut dp = vec![f64::NEG_INFINITY; (s + 1) * s];
    while iterations < SCHLUMPRECHT_MAX_ITER {
        iterations += 1;
        let mut change: f64 = 0.0;
        for a in 0..s {
            split_table(&w, s, a, &mut dp, None);
            for b in a..s {
                let mut best = seed[a * s + b];
                for l in 2..=(b - a + 1) {
                    let cand = dp[l * s + b] * inv_f[l];
                    if cand > best {
                        best = cand;
                    }
                }
                change = change.max(best - w[a * s + b]);
                next[a * s + b] = best;
            }
        }
        std::mem::swap(&mut w, &mut next);
        if change < SCHLUMPRECHT_TOL {
            converged = true;
            break;
        }
    }
    let value = w[s - 1];
    let mut g = vec![0.0; s];
    build_functional(&w, &seed, &x, &inv_f, s, 0, s - 1, 1.0, &mut g);
    for (k, &i) in pos.iter().enumerate() {
        functional[i] = g[k] * sgn(v[i]);
    }
    SchlumprechtEval {
        value,
        iterations,
        converged,
        functional,
    }
}

/// dp[l*s + b] = best sum over partitions of [a..=b] into l intervals.
fn split_table(w: &[f64], s: usize, a: usize, dp: &mut [f64], mut arg: Option<&mut Vec<usize>>) {
    dp.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
    for b in a..s {
        dp[s + b] = w[a * s + b];
    }
    for l in 2..=(s - a) {
        for b in (a + l - 1)..s {
            let mut best = f64::NEG_INFINITY;
            let mut at = 0;
            for k in (a + l - 2)..b {
                let cand = dp[(l - 1) * s + k] + w[(k + 1) * s + b];
                if cand > best {
                    best = cand;
                    at = k;
                }
            }
            dp[l * s + b] = best;
            if let Some(arg) = arg.as_deref_mut() {
                arg[l * s + b] = at;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_functional(
    w: &[f64],
    seed: &[f64],
    x: &[f64],
    inv_f: &[f64],
    s: usize,
    a: usize,
    b: usize,
    weight: f64,
    g: &mut [f64],
) {
    let mut dp = vec![f64::NEG_INFINITY; (s + 1) * s];
    let mut arg = vec![0usize; (s + 1) * s];
    split_table(w, s, a, &mut dp, Some(&mut arg));
    let mut best = seed[a * s + b];
    let mut best_l = 1;
    for l in 2..=(b - a + 1) {
        let cand = dp[l * s + b] * inv_f[l];
        if cand > best {
            best = cand;
            best_l = l;
        }
    }
    if best_l == 1 {
        let mut i = a;
        for k in a..=b {
            if x[k] > x[i] {
                i = k;
            }
        }
        g[i] += weight;
        return;
    }
    let mut cuts = Vec::with_capacity(best_l);
    let mut end = b;
    for l in (2..=best_l).rev() {
        let k = arg[l * s + end];
        cuts.push((k + 1, end));
        end = k;
    }
    cuts.push((a, end));
    for (lo, hi) in cuts {
        build_functional(w, seed, x, inv_f, s, lo, hi, weight * inv_f[best_l], g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schlumprecht_small_values() {
        assert_eq!(schlumprecht(&[1.0]).value, 1.0);
        let two = schlumprecht(&[1.0, 1.0]).value;
        assert!((two - 2.0 / 3f64.log2()).abs() < 1e-12);
        let four = schlumprecht(&[1.0, 1.0, 1.0, 1.0]).value;
        assert!((four - 4.0 / 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn schlumprecht_functional_norms_vector() {
        let v = [0.3, -1.0, 0.0, 0.7, 0.2, -0.9];
        let e = schlumprecht(&v);
        let pairing: f64 = e.functional.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((pairing - e.value).abs() < 1e-7, "{pairing} vs {}", e.value);
    }

    #[test]
    fn haar_level_one_is_plain_signs() {
        let h = haar_matrix(1, 3.0);
        assert_eq!(h.as_slice(), &[1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn haar_gray_code_matches_brute_force() {
        let h = HaarImp::new(3, 3.0).unwrap();
        let a = [0.4, -1.0, 0.3, 0.0, 0.8, -0.2, 0.5, 0.1];
        let (v, _) = h.lattice_max(&a);
        let mut best: f64 = 0.0;
        for mask in 0..256u32 {
            let z: Vec<f64> = (0..8)
                .map(|i| if mask >> i & 1 == 1 { -a[i] } else { a[i] })
                .collect();
            best = best.max(h.eval(&z));
        }
        assert!((v - best).abs() < 1e-13);
    }
}
