//! Phase-one revised simplex for `A w = b, w ≥ 0` with sparse columns.
//!
//! Returns either a feasible point or the row duals of the phase-one
//! optimum, which form a Farkas certificate `yᵀA ≤ 0 < yᵀb`.

use crate::{Error, Result};

/// Column-major sparse matrix.
pub(crate) struct SparseColumns {
    pub rows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
}

pub(crate) enum PhaseOne {
    Feasible { x: Vec<f64> },
    Infeasible { duals: Vec<f64>, objective: f64 },
}

const PRICE_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 50;

struct Solver<'a> {
    a: &'a SparseColumns,
    /// Row signs making the right-hand side nonnegative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn m(&self) -> usize {
        self.a.rows
    }

    fn n(&self) -> usize {
        self.a.cols.len()
    }

    fn cost(&self, j: usize) -> f64 {
        if j >= self.n() {
            1.0
        } else {
            0.0
        }
    }

    /// Column `j` of the sign-adjusted system; artificials are unit vectors.
    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j >= self.n() {
            out[j - self.n()] = 1.0;
        } else {
            for &(r, v) in &self.a.cols[j] {
                out[r] += self.sign[r] * v;
            }
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m();
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        if j >= self.n() {
            1.0 - y[j - self.n()]
        } else {
            -self.a.cols[j].iter().map(|&(r, v)| y[r] * self.sign[r] * v).sum::<f64>()
        }
    }

    /// Recomputes `B⁻¹` from scratch by Gauss–Jordan with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m();
        let mut b = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                b[i * m + k] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &k| b[i * m + c].abs().total_cmp(&b[k * m + c].abs()))
                .unwrap();
            let pv = b[p * m + c];
            if pv.abs() < 1e-13 {
                return Err(Error::Numerical {
                    message: "singular basis during refactorization".into(),
                    reconstruction: f64::NAN,
                    violation: f64::NAN,
                });
            }
            if p != c {
                for k in 0..m {
                    b.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let scale = 1.0 / pv;
            for k in 0..m {
                b[c * m + k] *= scale;
                inv[c * m + k] *= scale;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = b[i * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    b[i * m + k] -= f * b[c * m + k];
                    inv[i * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&self.rhs).map(|(p, q)| p * q).sum();
            self.xb[i] = if v < 0.0 && v > -1e-12 { 0.0 } else { v };
        }
        Ok(())
    }

    fn pivot(&mut self, leave: usize, enter: usize, u: &[f64]) {
        let m = self.m();
        let theta = (self.xb[leave] / u[leave]).max(0.0);
        for i in 0..m {
            if i != leave {
                self.xb[i] -= theta * u[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-13 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[leave] = theta;
        let inv_p = 1.0 / u[leave];
        let (before, rest) = self.binv.split_at_mut(leave * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v *= inv_p);
        for (i, row) in before.chunks_mut(m).enumerate() {
            let f = u[i];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(r, p)| *r -= f * p);
            }
        }
        for (k, row) in after.chunks_mut(m).enumerate() {
            let f = u[leave + 1 + k];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(r, p)| *r -= f * p);
            }
        }
        self.in_basis[self.basis[leave]] = false;
        self.in_basis[enter] = true;
        self.basis[leave] = enter;
    }

    fn objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&j, &v)| self.cost(j) * v)
            .sum()
    }
}

/// Minimizes the sum of artificial variables of `A w + s = b`.
///
/// `feasibility_tol` bounds the phase-one objective accepted as feasible.
pub(crate) fn phase_one(a: &SparseColumns, b: &[f64], feasibility_tol: f64) -> Result<PhaseOne> {
    let m = a.rows;
    let n = a.cols.len();
    assert_eq!(b.len(), m);
    let sign: Vec<f64> = b.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    let rhs: Vec<f64> = b.iter().zip(&sign).map(|(v, s)| v * s).collect();
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }
    let mut in_basis = vec![false; n + m];
    in_basis[n..].iter_mut().for_each(|v| *v = true);
    let mut s = Solver {
        a,
        sign,
        xb: rhs.clone(),
        rhs,
        basis: (n..n + m).collect(),
        in_basis,
        binv,
    };

    let max_iter = 50 * (n + m) + 1000;
    let mut u = vec![0.0; m];
    let mut col = vec![0.0; m];
    let mut degenerate = 0usize;
    let mut since_refactor = 0usize;
    let mut verified_optimal = false;
    for _ in 0..max_iter {
        if since_refactor >= REFACTOR_EVERY {
            s.refactor()?;
            since_refactor = 0;
        }
        let y = s.duals();
        let bland = degenerate > DEGENERATE_STREAK;
        let mut enter = None;
        let mut best = -PRICE_TOL;
        for j in 0..n + m {
            if s.in_basis[j] {
                continue;
            }
            let d = s.reduced_cost(j, &y);
            if d < best {
                enter = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(enter) = enter else {
            if since_refactor == 0 || verified_optimal {
                break;
            }
            // Confirm optimality on a fresh factorization.
            s.refactor()?;
            since_refactor = 0;
            verified_optimal = true;
            continue;
        };
        verified_optimal = false;

        s.column(enter, &mut col);
        for i in 0..m {
            let row = &s.binv[i * m..(i + 1) * m];
            u[i] = row.iter().zip(&col).map(|(p, q)| p * q).sum();
        }
        // Harris two-pass ratio test.
        let mut bound = f64::INFINITY;
        for i in 0..m {
            if u[i] > PIVOT_TOL {
                bound = bound.min((s.xb[i].max(0.0) + HARRIS_TOL) / u[i]);
            }
        }
        if !bound.is_finite() {
            return Err(Error::Numerical {
                message: "phase-one problem reported unbounded".into(),
                reconstruction: f64::NAN,
                violation: f64::NAN,
            });
        }
        let mut leave = None;
        let mut best_u = 0.0;
        for i in 0..m {
            if u[i] > PIVOT_TOL && s.xb[i].max(0.0) / u[i] <= bound {
                let better = if bland {
                    leave.map_or(true, |l: usize| s.basis[i] < s.basis[l])
                } else {
                    u[i] > best_u
                };
                if better {
                    leave = Some(i);
                    best_u = u[i];
                }
            }
        }
        let leave = leave.expect("ratio test found a finite bound");
        let theta = s.xb[leave].max(0.0) / u[leave];
        if theta < 1e-14 {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        s.pivot(leave, enter, &u);
        since_refactor += 1;
    }

    let objective = s.objective();
    if objective <= feasibility_tol {
        let mut x = vec![0.0; n];
        for (i, &j) in s.basis.iter().enumerate() {
            if j < n {
                x[j] = s.xb[i].max(0.0);
            }
        }
        Ok(PhaseOne::Feasible { x })
    } else {
        let y = s.duals();
        let duals = y.iter().zip(&s.sign).map(|(v, sg)| v * sg).collect();
        Ok(PhaseOne::Infeasible { duals, objective })
    }
}
