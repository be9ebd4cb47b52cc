//! Minimization of a convex norm-like function over a bounded polytope.
//!
//! The function is accessed as a maximum of pieces: either smooth pieces
//! `z ↦ N(ε∘z)` for a sign pattern ε, or linear pieces `z ↦ ⟨g,z⟩`. The
//! current piece model is minimized with a log-barrier Newton method and
//! violated pieces are added until the true value at the model minimizer
//! matches the certified lower bound.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Smooth(Vec<f64>),
    Linear(Vec<f64>),
}

pub trait PieceOracle {
    fn oracle_dim(&self) -> usize;
    /// True value at z together with a piece attaining it.
    fn value_and_piece(&self, z: &[f64]) -> (f64, Piece);
    /// Value, gradient and Hessian at z of the smooth piece with sign pattern `sign`.
    fn smooth_piece(
        &self,
        sign: &[f64],
        z: &[f64],
        grad: &mut [f64],
        hess: &mut DMatrix<f64>,
    ) -> f64;
}

/// `z = map·x + offset` with `ineq·x ≤ ineq_rhs` and `eq·x = eq_rhs`.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub map: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub ineq: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Strictly feasible for the inequalities and exactly feasible for the equalities.
    pub start: DVector<f64>,
}

impl Polytope {
    pub fn z_of(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.map * x + &self.offset
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_pieces: usize,
    pub max_rounds: usize,
}

impl Default for MinOptions {
    fn default() -> Self {
        MinOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_pieces: 600,
            max_rounds: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinResult {
    /// Certified lower bound on the minimum.
    pub lower: f64,
    /// True value at `z`, hence an upper bound on the minimum.
    pub upper: f64,
    pub x: DVector<f64>,
    pub z: Vec<f64>,
    /// Convex combination of active piece gradients at the optimum.
    pub dual_point: Vec<f64>,
    pub converged: bool,
    pub rounds: usize,
}

struct PieceEval {
    value: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

fn eval_piece(oracle: &dyn PieceOracle, piece: &Piece, z: &[f64], want_hess: bool) -> PieceEval {
    match piece {
        Piece::Linear(g) => PieceEval {
            value: g.iter().zip(z).map(|(a, b)| a * b).sum(),
            grad: g.clone(),
            hess: None,
        },
        Piece::Smooth(sign) => {
            let n = z.len();
            let mut grad = vec![0.0; n];
            let mut hess = DMatrix::zeros(n, n);
            let value = oracle.smooth_piece(sign, z, &mut grad, &mut hess);
            PieceEval {
                value,
                grad,
                hess: if want_hess { Some(hess) } else { None },
            }
        }
    }
}

struct Barrier<'a> {
    oracle: &'a dyn PieceOracle,
    poly: &'a Polytope,
    pieces: &'a [Piece],
}

impl Barrier<'_> {
    fn d(&self) -> usize {
        self.poly.start.len()
    }

    fn n_constraints(&self) -> usize {
        self.pieces.len() + self.poly.ineq.nrows()
    }

    /// Barrier objective at w = (x, S); None outside the domain.
    fn value(&self, w: &DVector<f64>, t: f64) -> Option<f64> {
        let d = self.d();
        let x = w.rows(0, d).into_owned();
        let s = w[d];
        let z = self.poly.z_of(&x);
        let mut total = t * s;
        for p in self.pieces {
            let q = s - eval_piece(self.oracle, p, z.as_slice(), false).value;
            if !(q > 0.0) {
                return None;
            }
            total -= q.ln();
        }
        let r = &self.poly.ineq_rhs - &self.poly.ineq * &x;
        for v in r.iter() {
            if !(*v > 0.0) {
                return None;
            }
            total -= v.ln();
        }
        Some(total)
    }

    fn grad_hess(&self, w: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.d();
        let x = w.rows(0, d).into_owned();
        let s = w[d];
        let z = self.poly.z_of(&x);
        let mut g = DVector::zeros(d + 1);
        let mut h = DMatrix::zeros(d + 1, d + 1);
        g[d] = t;
        let mt = self.poly.map.transpose();
        for p in self.pieces {
            let ev = eval_piece(self.oracle, p, z.as_slice(), true);
            let q = s - ev.value;
            let gz = DVector::from_vec(ev.grad);
            let gx = &mt * &gz;
            let mut dq = DVector::zeros(d + 1);
            for i in 0..d {
                dq[i] = -gx[i];
            }
            dq[d] = 1.0;
            g -= &dq / q;
            h += (&dq * dq.transpose()) / (q * q);
            if let Some(hz) = ev.hess {
                let hx = &mt * hz * &self.poly.map;
                let mut block = h.view_mut((0, 0), (d, d));
                block += hx / q;
            }
        }
        let r = &self.poly.ineq_rhs - &self.poly.ineq * &x;
        for j in 0..self.poly.ineq.nrows() {
            let row = self.poly.ineq.row(j);
            for a in 0..d {
                g[a] += row[a] / r[j];
                for b in 0..d {
                    h[(a, b)] += row[a] * row[b] / (r[j] * r[j]);
                }
            }
        }
        (g, h)
    }

    fn newton_step(&self, w: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)> {
        let d = self.d();
        let (g, mut h) = self.grad_hess(w, t);
        let rhs = -&g;
        let dw = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let scale = (0..=d).map(|i| h[(i, i)].abs()).fold(1e-300, f64::max);
                for i in 0..=d {
                    h[(i, i)] += 1e-12 * scale;
                }
                h.lu().solve(&rhs)?
            }
        };
        let dec = -g.dot(&dw);
        Some((dw, dec))
    }

    /// Damped Newton centering; returns the centered point. Step sizes only
    /// backtrack for feasibility, since barrier values at large t lose the
    /// precision an Armijo test would need.
    fn center(&self, mut w: DVector<f64>, t: f64) -> (DVector<f64>, bool) {
        if self.value(&w, t).is_none() {
            return (w, false);
        }
        for _ in 0..200 {
            let (dw, dec) = match self.newton_step(&w, t) {
                Some(v) => v,
                None => break,
            };
            if !(dec > 1e-7) {
                return (w, true);
            }
            let lam = dec.sqrt();
            let mut step = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
            let mut moved = false;
            for _ in 0..60 {
                let cand = &w + &dw * step;
                if self.value(&cand, t).is_some() {
                    w = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (w, false)
    }
}

/// Rewrites the polytope over a basis of the equality null space so the
/// barrier iterations cannot drift off the affine constraints.
fn reduce(poly: &Polytope) -> (Polytope, DMatrix<f64>) {
    let d = poly.start.len();
    let basis = if poly.eq.nrows() == 0 {
        DMatrix::identity(d, d)
    } else {
        let gram = poly.eq.transpose() * &poly.eq;
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cols: Vec<DVector<f64>> = (0..d)
            .filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * top.max(1e-300))
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    let reduced = Polytope {
        map: &poly.map * &basis,
        offset: &poly.map * &poly.start + &poly.offset,
        ineq: &poly.ineq * &basis,
        ineq_rhs: &poly.ineq_rhs - &poly.ineq * &poly.start,
        eq: DMatrix::zeros(0, basis.ncols()),
        eq_rhs: DVector::zeros(0),
        start: DVector::zeros(basis.ncols()),
    };
    (reduced, basis)
}

/// Minimizes the oracle function over the polytope.
pub fn minimize(
    oracle: &dyn PieceOracle,
    poly: &Polytope,
    initial: Vec<Piece>,
    opts: MinOptions,
) -> MinResult {
    let (reduced, basis) = reduce(poly);
    let mut r = minimize_reduced(oracle, &reduced, initial, opts);
    r.x = &poly.start + &basis * &r.x;
    r
}

fn minimize_reduced(
    oracle: &dyn PieceOracle,
    poly: &Polytope,
    initial: Vec<Piece>,
    opts: MinOptions,
) -> MinResult {
    let d = poly.start.len();
    let mut pieces = initial;
    let z0 = poly.z_of(&poly.start);
    let (v0, p0) = oracle.value_and_piece(z0.as_slice());
    if !pieces.contains(&p0) {
        pieces.push(p0);
    }
    let mut x = poly.start.clone();
    let mut best_upper = v0;
    let mut best_x = x.clone();
    let mut best_lower = f64::NEG_INFINITY;
    let mut dual_point = vec![0.0; z0.len()];
    let mut t = 1.0 / v0.abs().max(1e-300);
    let mut rounds = 0;
    let mu = 12.0;
    loop {
        rounds += 1;
        let z = poly.z_of(&x);
        let model = pieces
            .iter()
            .map(|p| eval_piece(oracle, p, z.as_slice(), false).value)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = 1e-3 * model.abs().max(1e-12) + 1.0 / t;
        let mut w = DVector::zeros(d + 1);
        w.rows_mut(0, d).copy_from(&x);
        w[d] = model + margin;
        let barrier = Barrier {
            oracle,
            poly,
            pieces: &pieces,
        };
        let m = barrier.n_constraints() as f64;
        let mut lower;
        loop {
            let (cw, centered) = barrier.center(w, t);
            w = cw;
            let s = w[d];
            lower = if centered {
                s - m / t
            } else {
                f64::NEG_INFINITY
            };
            let tol = opts.abs_tol + opts.rel_tol * s.abs();
            if m / t <= tol * 0.5 {
                break;
            }
            t *= mu;
        }
        x = w.rows(0, d).into_owned();
        let z = poly.z_of(&x);
        let (val, piece) = oracle.value_and_piece(z.as_slice());
        best_lower = best_lower.max(lower);
        if val < best_upper {
            best_upper = val;
            best_x = x.clone();
            // multipliers 1/(t q_k) at the centered point
            let s = w[d];
            let mut agg = vec![0.0; z.len()];
            let mut tot = 0.0;
            for p in &pieces {
                let ev = eval_piece(oracle, p, z.as_slice(), false);
                let lam = 1.0 / (t * (s - ev.value));
                tot += lam;
                for (a, g) in agg.iter_mut().zip(&ev.grad) {
                    *a += lam * g;
                }
            }
            if tot > 0.0 {
                for a in agg.iter_mut() {
                    *a /= tot;
                }
            }
            dual_point = agg;
        }
        let tol = opts.abs_tol + opts.rel_tol * best_upper.abs();
        if best_upper - best_lower <= tol {
            return MinResult {
                lower: best_lower,
                upper: best_upper,
                z: poly.z_of(&best_x).as_slice().to_vec(),
                x: best_x,
                dual_point,
                converged: true,
                rounds,
            };
        }
        if pieces.contains(&piece) || pieces.len() >= opts.max_pieces || rounds >= opts.max_rounds {
            return MinResult {
                lower: best_lower,
                upper: best_upper,
                z: poly.z_of(&best_x).as_slice().to_vec(),
                x: best_x,
                dual_point,
                converged: false,
                rounds,
            };
        }
        pieces.push(piece);
        t = 1.0 / best_upper.abs().max(1e-300);
    }
}
