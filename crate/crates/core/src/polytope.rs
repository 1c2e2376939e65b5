//! Membership in the local polytope of a lossy scenario.
//!
//! Deterministic strategies assign one lossy outcome code (no-click
//! included) to every setting of each party. A behavior is local iff it is a
//! convex mixture of the `(d+1)^{M_A} (d+1)^{M_B}` strategy pairs. Every
//! verdict ships a certificate that [`LocalityCertificate::verify`] re-checks
//! without the solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lossy::{apply_loss_both, LossyBehavior};
use crate::scenario::{Behavior, Scenario};
use crate::simplex::{phase_one, PhaseOne, SparseColumns};
use crate::table::Table;
use crate::{Error, Result};

/// Default tolerance for certificates.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default bisection width for [`critical_local_eta`].
pub const DEFAULT_BISECTION_TOL: f64 = 1e-3;

/// One lossy outcome code per setting for each party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

/// Number of deterministic strategy pairs of a lossy scenario.
pub fn strategy_count(s: Scenario) -> usize {
    let k = s.lossy_outcomes();
    k.pow(s.m_a as u32) * k.pow(s.m_b as u32)
}

fn digits(mut index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    out
}

/// Decodes strategy-pair `index`: Alice's strategy is the high part, each
/// strategy written in base `d+1` with the first setting most significant.
pub fn strategy(s: Scenario, index: usize) -> DeterministicStrategy {
    let k = s.lossy_outcomes();
    let nb = k.pow(s.m_b as u32);
    DeterministicStrategy {
        alice: digits(index / nb, k, s.m_a),
        bob: digits(index % nb, k, s.m_b),
    }
}

/// Linear functional on lossy tables, indexed like the table itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellFunctional {
    pub m_a: usize,
    pub m_b: usize,
    /// Outcomes per party (`d + 1`).
    pub outcomes: usize,
    pub coefficients: Vec<f64>,
}

impl BellFunctional {
    pub fn zeros(s: Scenario) -> Self {
        let k = s.lossy_outcomes();
        Self {
            m_a: s.m_a,
            m_b: s.m_b,
            outcomes: k,
            coefficients: vec![0.0; Table::len_for(s.m_a, s.m_b, k, k)],
        }
    }

    fn idx(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        ((x * self.m_b + y) * self.outcomes + a) * self.outcomes + b
    }

    pub fn coefficient(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.coefficients[self.idx(x, y, a, b)]
    }

    pub fn set(&mut self, x: usize, y: usize, a: usize, b: usize, v: f64) {
        let i = self.idx(x, y, a, b);
        self.coefficients[i] = v;
    }

    fn check_shape(&self, s: Scenario) -> Result<()> {
        let k = s.lossy_outcomes();
        if self.m_a != s.m_a
            || self.m_b != s.m_b
            || self.outcomes != k
            || self.coefficients.len() != Table::len_for(s.m_a, s.m_b, k, k)
        {
            return Err(Error::Argument("functional shape does not match the behavior".into()));
        }
        Ok(())
    }

    /// Value on a single deterministic strategy pair.
    pub fn evaluate_strategy(&self, st: &DeterministicStrategy) -> f64 {
        let mut v = 0.0;
        for x in 0..self.m_a {
            for y in 0..self.m_b {
                v += self.coefficient(x, y, st.alice[x], st.bob[y]);
            }
        }
        v
    }

    /// Maximum over every deterministic strategy pair.
    pub fn local_bound(&self) -> f64 {
        let s = Scenario {
            m_a: self.m_a,
            m_b: self.m_b,
            d: self.outcomes - 1,
        };
        (0..strategy_count(s))
            .into_par_iter()
            .map(|j| self.evaluate_strategy(&strategy(s, j)))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    /// CHSH as a functional on lossy tables (no-click entries weigh zero):
    /// `E(1,1) + E(1,2) + E(2,1) - E(2,2)` for the click events.
    pub fn chsh(s: Scenario) -> Result<Self> {
        if s.m_a != 2 || s.m_b != 2 || s.d != 2 {
            return Err(Error::Argument("CHSH needs the 2-2-2 scenario".into()));
        }
        let mut f = Self::zeros(s);
        for x in 0..2 {
            for y in 0..2 {
                let sign = if x == 1 && y == 1 { -1.0 } else { 1.0 };
                for a in 1..3 {
                    for b in 1..3 {
                        f.set(x, y, a, b, if a == b { sign } else { -sign });
                    }
                }
            }
        }
        Ok(f)
    }
}

/// `(Σ coefficients · p, max over deterministic strategy pairs)`.
pub fn bell_value(p: &LossyBehavior, functional: &BellFunctional) -> Result<(f64, f64)> {
    functional.check_shape(p.scenario())?;
    let value = functional.coefficients.iter().zip(p.table()).map(|(c, v)| c * v).sum();
    Ok((value, functional.local_bound()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum LocalityCertificate {
    Local {
        /// Sparse `(strategy index, weight)` pairs; see [`strategy`].
        weights: Vec<(usize, f64)>,
        reconstruction_error: f64,
    },
    Nonlocal {
        functional: BellFunctional,
        local_bound: f64,
        value: f64,
    },
}

impl LocalityCertificate {
    pub fn is_local(&self) -> bool {
        matches!(self, LocalityCertificate::Local { .. })
    }

    /// `value - local_bound` for nonlocal verdicts.
    pub fn violation(&self) -> Option<f64> {
        match self {
            LocalityCertificate::Nonlocal { local_bound, value, .. } => Some(value - local_bound),
            LocalityCertificate::Local { .. } => None,
        }
    }

    /// Re-checks the certificate against `p` from first principles.
    pub fn verify(&self, p: &LossyBehavior, tol: f64) -> Result<()> {
        let fail = |message: String, reconstruction: f64, violation: f64| Error::Numerical {
            message,
            reconstruction,
            violation,
        };
        match self {
            LocalityCertificate::Local { weights, .. } => {
                let err = reconstruction_error(p, weights)?;
                let total: f64 = weights.iter().map(|w| w.1).sum();
                let min = weights.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
                if min < -1e-10 || (total - 1.0).abs() > 1e-9 || err > tol {
                    return Err(fail(
                        format!("local certificate rejected (sum {total}, min weight {min:e})"),
                        err,
                        f64::NAN,
                    ));
                }
                Ok(())
            }
            LocalityCertificate::Nonlocal { functional, .. } => {
                let (value, bound) = bell_value(p, functional)?;
                if value - bound > tol {
                    Ok(())
                } else {
                    Err(fail("nonlocal certificate rejected".into(), f64::NAN, value - bound))
                }
            }
        }
    }
}

/// Largest entrywise deviation of the weighted mixture of deterministic
/// strategy pairs from `p`.
pub fn reconstruction_error(p: &LossyBehavior, weights: &[(usize, f64)]) -> Result<f64> {
    let s = p.scenario();
    let k = s.lossy_outcomes();
    let count = strategy_count(s);
    let mut t = Table::zeros(s.m_a, s.m_b, k, k);
    for &(j, w) in weights {
        if j >= count {
            return Err(Error::Argument(format!("strategy index {j} out of range")));
        }
        let st = strategy(s, j);
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                t.add(x, y, st.alice[x], st.bob[y], w);
            }
        }
    }
    Ok(t.max_abs_diff(p.inner()))
}

fn constraint_matrix(s: Scenario) -> SparseColumns {
    let k = s.lossy_outcomes();
    let table_rows = Table::len_for(s.m_a, s.m_b, k, k);
    let shape = Table::zeros(s.m_a, s.m_b, k, k);
    let cols = (0..strategy_count(s))
        .map(|j| {
            let st = strategy(s, j);
            let mut c = Vec::with_capacity(s.m_a * s.m_b + 1);
            for x in 0..s.m_a {
                for y in 0..s.m_b {
                    c.push((shape.idx(x, y, st.alice[x], st.bob[y]), 1.0));
                }
            }
            c.push((table_rows, 1.0));
            c
        })
        .collect();
    SparseColumns {
        rows: table_rows + 1,
        cols,
    }
}

/// Decides whether `p` lies in the local polytope.
///
/// Feasible LPs yield mixture weights; infeasible ones yield the phase-one
/// duals as a separating functional, rescaled to unit max-coefficient, with
/// its local bound recomputed by enumeration.
pub fn is_local(p: &LossyBehavior, tol: f64) -> Result<LocalityCertificate> {
    let s = p.scenario();
    let a = constraint_matrix(s);
    let mut rhs = p.table().to_vec();
    rhs.push(1.0);
    let feasibility_tol = (tol * 0.1).min(1e-10);
    match phase_one(&a, &rhs, feasibility_tol)? {
        PhaseOne::Feasible { x } => local_certificate(p, &x, tol),
        PhaseOne::Infeasible { duals, objective } => {
            let table_duals = &duals[..duals.len() - 1];
            let scale = table_duals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut functional = BellFunctional::zeros(s);
            if scale > 0.0 {
                functional
                    .coefficients
                    .iter_mut()
                    .zip(table_duals)
                    .for_each(|(c, v)| *c = v / scale);
            }
            let (value, local_bound) = bell_value(p, &functional)?;
            if value - local_bound > tol {
                return Ok(LocalityCertificate::Nonlocal {
                    functional,
                    local_bound,
                    value,
                });
            }
            Err(Error::Numerical {
                message: format!("separation too weak to certify (phase-one objective {objective:e})"),
                reconstruction: objective,
                violation: value - local_bound,
            })
        }
    }
}

fn local_certificate(p: &LossyBehavior, x: &[f64], tol: f64) -> Result<LocalityCertificate> {
    let weights: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 1e-15)
        .map(|(j, w)| (j, *w))
        .collect();
    let reconstruction_error = reconstruction_error(p, &weights)?;
    if reconstruction_error > tol {
        return Err(Error::Numerical {
            message: "local weights do not reconstruct the behavior".into(),
            reconstruction: reconstruction_error,
            violation: f64::NAN,
        });
    }
    Ok(LocalityCertificate::Local {
        weights,
        reconstruction_error,
    })
}

/// Result of a detection-threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    /// Local at `lower`, nonlocal at `upper`; `eta` is the midpoint.
    At { eta: f64, lower: f64, upper: f64 },
    /// Local even without losses.
    NoTransition,
}

/// Bisects the efficiency at which `apply_loss_both(q, η)` leaves the local
/// polytope, to width `tol`.
pub fn critical_local_eta(q: &Behavior, tol: f64) -> Result<Transition> {
    let local_at = |eta: f64| -> Result<bool> {
        Ok(is_local(&apply_loss_both(q, eta)?, DEFAULT_TOL)?.is_local())
    };
    if local_at(1.0)? {
        return Ok(Transition::NoTransition);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if local_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Transition::At {
        eta: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::chsh_tsirelson;

    #[test]
    fn strategy_enumeration() {
        let s = Scenario::new(3, 3, 4).unwrap();
        assert_eq!(strategy_count(s), 125 * 125);
        let st = strategy(s, 125 * 7 + 31);
        assert_eq!(st.alice, vec![0, 1, 2]);
        assert_eq!(st.bob, vec![1, 1, 1]);
    }

    #[test]
    fn deterministic_behavior_has_unit_weight() {
        let s = Scenario::new(2, 2, 2).unwrap();
        let st = DeterministicStrategy {
            alice: vec![1, 0],
            bob: vec![2, 2],
        };
        let mut data = vec![0.0; Table::len_for(2, 2, 3, 3)];
        let shape = Table::zeros(2, 2, 3, 3);
        for x in 0..2 {
            for y in 0..2 {
                data[shape.idx(x, y, st.alice[x], st.bob[y])] = 1.0;
            }
        }
        let p = LossyBehavior::new(s, data).unwrap();
        match is_local(&p, DEFAULT_TOL).unwrap() {
            LocalityCertificate::Local { weights, .. } => {
                assert_eq!(weights.len(), 1);
                assert!((weights[0].1 - 1.0).abs() < 1e-12);
                assert_eq!(strategy(s, weights[0].0), st);
            }
            other => panic!("expected local, got {other:?}"),
        }
    }

    #[test]
    fn chsh_functional_values() {
        let q = chsh_tsirelson();
        let p = apply_loss_both(&q, 1.0).unwrap();
        let (v, b) = bell_value(&p, &BellFunctional::chsh(q.scenario()).unwrap()).unwrap();
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(b, 2.0);
        let (v, b) = bell_value(&p, &BellFunctional::zeros(q.scenario())).unwrap();
        assert_eq!((v, b), (0.0, 0.0));
    }

    #[test]
    fn tsirelson_is_nonlocal_and_half_loss_is_local() {
        let q = chsh_tsirelson();
        let p = apply_loss_both(&q, 1.0).unwrap();
        let c = is_local(&p, DEFAULT_TOL).unwrap();
        assert!(!c.is_local());
        c.verify(&p, DEFAULT_TOL).unwrap();

        let p = apply_loss_both(&q, 0.5).unwrap();
        let c = is_local(&p, DEFAULT_TOL).unwrap();
        assert!(c.is_local());
        c.verify(&p, DEFAULT_TOL).unwrap();
    }

    #[test]
    fn tampered_certificates_fail_verification() {
        let q = chsh_tsirelson();
        let p_half = apply_loss_both(&q, 0.5).unwrap();
        let p_full = apply_loss_both(&q, 1.0).unwrap();
        let local = is_local(&p_half, DEFAULT_TOL).unwrap();
        assert!(local.verify(&p_full, DEFAULT_TOL).is_err());
        let nonlocal = is_local(&p_full, DEFAULT_TOL).unwrap();
        assert!(nonlocal.verify(&p_half, DEFAULT_TOL).is_err());
    }

    #[test]
    fn certificate_json_shape() {
        let q = chsh_tsirelson();
        let c = is_local(&apply_loss_both(&q, 0.5).unwrap(), DEFAULT_TOL).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["verdict"], "local");
        assert!(v["weights"].is_array());
    }
}
