//! Small dense Born-rule evaluator used to generate and cross-check
//! behavior tables.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::scenario::{Behavior, Scenario};
use crate::{Error, Result, EXACT_TOL, PSD_TOL};

pub type CMatrix = DMatrix<Complex64>;

/// Bipartite state plus one POVM per setting and party.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "QuantumModelFile", into = "QuantumModelFile")]
pub struct QuantumModel {
    dim_a: usize,
    dim_b: usize,
    state: CMatrix,
    povms_a: Vec<Vec<CMatrix>>,
    povms_b: Vec<Vec<CMatrix>>,
}

/// JSON schema: matrices are arrays of rows, each entry an `[re, im]` pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantumModelFile {
    pub dim_a: usize,
    pub dim_b: usize,
    pub state: Vec<Vec<[f64; 2]>>,
    pub povms_a: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
    pub povms_b: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("matrix is not square".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

impl TryFrom<QuantumModelFile> for QuantumModel {
    type Error = Error;

    fn try_from(f: QuantumModelFile) -> Result<Self> {
        let convert = |povms: &[Vec<Vec<Vec<[f64; 2]>>>]| -> Result<Vec<Vec<CMatrix>>> {
            povms
                .iter()
                .map(|setting| setting.iter().map(|m| matrix_from_rows(m)).collect())
                .collect()
        };
        QuantumModel::new(
            f.dim_a,
            f.dim_b,
            matrix_from_rows(&f.state)?,
            convert(&f.povms_a)?,
            convert(&f.povms_b)?,
        )
    }
}

impl From<QuantumModel> for QuantumModelFile {
    fn from(m: QuantumModel) -> Self {
        let convert = |povms: &[Vec<CMatrix>]| {
            povms
                .iter()
                .map(|setting| setting.iter().map(matrix_to_rows).collect())
                .collect()
        };
        QuantumModelFile {
            dim_a: m.dim_a,
            dim_b: m.dim_b,
            state: matrix_to_rows(&m.state),
            povms_a: convert(&m.povms_a),
            povms_b: convert(&m.povms_b),
        }
    }
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    // Symmetrize first so tiny anti-Hermitian noise does not leak into the spectrum.
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_povms(povms: &[Vec<CMatrix>], dim: usize, party: &str) -> Result<usize> {
    let d = povms.first().map(Vec::len).unwrap_or(0);
    if povms.is_empty() || d < 2 {
        return Err(Error::Config(format!(
            "{party} needs at least one setting with >= 2 outcomes"
        )));
    }
    let identity = CMatrix::identity(dim, dim);
    for (s, setting) in povms.iter().enumerate() {
        if setting.len() != d {
            return Err(Error::Config(format!(
                "{party} setting {s} has {} outcomes, expected {d}",
                setting.len()
            )));
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for (k, e) in setting.iter().enumerate() {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(Error::Config(format!(
                    "{party} POVM element ({s},{k}) is {}x{}, local dimension is {dim}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            if hermiticity_defect(e) > PSD_TOL || min_eigenvalue(e) < -PSD_TOL {
                return Err(Error::Config(format!(
                    "{party} POVM element ({s},{k}) is not positive semidefinite"
                )));
            }
            sum += e;
        }
        let defect = (sum - &identity).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > PSD_TOL {
            return Err(Error::Config(format!(
                "{party} setting {s} does not sum to identity (defect {defect:e})"
            )));
        }
    }
    Ok(d)
}

impl QuantumModel {
    pub fn new(
        dim_a: usize,
        dim_b: usize,
        state: CMatrix,
        povms_a: Vec<Vec<CMatrix>>,
        povms_b: Vec<Vec<CMatrix>>,
    ) -> Result<Self> {
        let n = dim_a * dim_b;
        if n == 0 || state.nrows() != n || state.ncols() != n {
            return Err(Error::Config(format!(
                "state is {}x{}, expected {n}x{n}",
                state.nrows(),
                state.ncols()
            )));
        }
        let tr = state.trace();
        if (tr.re - 1.0).abs() > EXACT_TOL || tr.im.abs() > EXACT_TOL {
            return Err(Error::Config(format!("state trace is {tr}, expected 1")));
        }
        if hermiticity_defect(&state) > EXACT_TOL {
            return Err(Error::Config("state is not Hermitian".into()));
        }
        if min_eigenvalue(&state) < -PSD_TOL {
            return Err(Error::Config("state is not positive semidefinite".into()));
        }
        let da = check_povms(&povms_a, dim_a, "Alice")?;
        let db = check_povms(&povms_b, dim_b, "Bob")?;
        if da != db {
            return Err(Error::Config(format!(
                "outcome counts differ between parties ({da} vs {db})"
            )));
        }
        Ok(Self {
            dim_a,
            dim_b,
            state,
            povms_a,
            povms_b,
        })
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            m_a: self.povms_a.len(),
            m_b: self.povms_b.len(),
            d: self.povms_a[0].len(),
        }
    }

    pub fn state(&self) -> &CMatrix {
        &self.state
    }

    /// Same measurements on a different state.
    pub fn with_state(&self, state: CMatrix) -> Result<Self> {
        Self::new(
            self.dim_a,
            self.dim_b,
            state,
            self.povms_a.clone(),
            self.povms_b.clone(),
        )
    }
}

/// `Q(ab|xy) = tr(ρ · (A_{a|x} ⊗ B_{b|y}))`.
pub fn born_behavior(model: &QuantumModel) -> Result<Behavior> {
    let scenario = model.scenario();
    let mut data = Vec::with_capacity(scenario.m_a * scenario.m_b * scenario.d * scenario.d);
    for pa in &model.povms_a {
        for pb in &model.povms_b {
            for ea in pa {
                for eb in pb {
                    let p = (&model.state * ea.kronecker(eb)).trace().re;
                    // Rounding can leave -1e-17 on exact zeros.
                    data.push(p.max(0.0));
                }
            }
        }
    }
    Behavior::new(scenario, data)
}

/// Pauli matrices and a few helpers used by the builtin models.
pub mod ops {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn identity(n: usize) -> CMatrix {
        CMatrix::identity(n, n)
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) real amplitude vector.
    pub fn pure_state(amplitudes: &[Complex64]) -> CMatrix {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let norm2: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        (&v * v.adjoint()).unscale(norm2)
    }

    /// `|Φ+⟩ = (|00⟩ + |11⟩)/√2`.
    pub fn phi_plus() -> CMatrix {
        pure_state(&[c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)])
    }

    /// Two-outcome projective measurement of a ±1 observable, `+1` first.
    pub fn observable_povm(o: &CMatrix) -> Vec<CMatrix> {
        let id = identity(o.nrows());
        vec![(&id + o).scale(0.5), (&id - o).scale(0.5)]
    }
}

/// Optimal CHSH model on `|Φ+⟩`: Alice measures Z, X; Bob (Z±X)/√2.
pub fn chsh_model() -> QuantumModel {
    use ops::*;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let b0 = (pauli_z() + pauli_x()).scale(s);
    let b1 = (pauli_z() - pauli_x()).scale(s);
    QuantumModel::new(
        2,
        2,
        phi_plus(),
        vec![observable_povm(&pauli_z()), observable_povm(&pauli_x())],
        vec![observable_povm(&b0), observable_povm(&b1)],
    )
    .expect("CHSH model is valid")
}

/// Two-ebit magic-square model: `|Φ+⟩⊗|Φ+⟩` with Alice measuring rows and
/// Bob columns of the observable square
///
/// ```text
///   X⊗I   I⊗X   X⊗X
///   I⊗Z   Z⊗I   Z⊗Z
///   X⊗Z   Z⊗X   Y⊗Y
/// ```
///
/// Outcome `k` encodes the signs of the first two observables in the row or
/// column as in [`crate::scenario::magic_square_signs`].
pub fn magic_square_model() -> QuantumModel {
    use ops::*;
    let (i, x, y, z) = (identity(2), pauli_x(), pauli_y(), pauli_z());
    let square = [
        [x.kronecker(&i), i.kronecker(&x), x.kronecker(&x)],
        [i.kronecker(&z), z.kronecker(&i), z.kronecker(&z)],
        [x.kronecker(&z), z.kronecker(&x), y.kronecker(&y)],
    ];
    let id4 = identity(4);
    let povm = |o1: &CMatrix, o2: &CMatrix| -> Vec<CMatrix> {
        (0..4)
            .map(|k| {
                let (v1, v2) = crate::scenario::magic_square_signs(k);
                let p1 = (&id4 + o1.scale(v1 as f64)).scale(0.5);
                let p2 = (&id4 + o2.scale(v2 as f64)).scale(0.5);
                p1 * p2
            })
            .collect()
    };
    let rows = (0..3).map(|r| povm(&square[r][0], &square[r][1])).collect();
    let cols = (0..3).map(|c| povm(&square[0][c], &square[1][c])).collect();
    // Pairs (A1,B1) and (A2,B2) each share a |Φ+⟩; reorder A1A2B1B2.
    let two = phi_plus().kronecker(&phi_plus());
    let perm = |k: usize| {
        // k = a1 b1 a2 b2 (bits, msb first) -> a1 a2 b1 b2
        let (a1, b1, a2, b2) = ((k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1);
        (a1 << 3) | (a2 << 2) | (b1 << 1) | b2
    };
    let mut state = CMatrix::zeros(16, 16);
    for r in 0..16 {
        for c in 0..16 {
            state[(perm(r), perm(c))] = two[(r, c)];
        }
    }
    QuantumModel::new(4, 4, state, rows, cols).expect("magic-square model is valid")
}

#[cfg(test)]
mod tests {
    use super::ops::*;
    use super::*;
    use crate::scenario::{chsh_tsirelson, magic_square};

    #[test]
    fn bell_state_computational_basis_is_perfectly_correlated() {
        let z = observable_povm(&pauli_z());
        let m = QuantumModel::new(2, 2, phi_plus(), vec![z.clone()], vec![z]).unwrap();
        let q = born_behavior(&m).unwrap();
        assert!((q.prob(0, 0, 0, 0) - 0.5).abs() < 1e-15);
        assert!((q.prob(0, 0, 1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(q.prob(0, 0, 0, 1), 0.0);
        assert_eq!(q.prob(0, 0, 1, 0), 0.0);
    }

    #[test]
    fn product_state_gives_deterministic_product_behavior() {
        let zero = pure_state(&[Complex64::new(1., 0.), Complex64::new(0., 0.)]);
        let one = pure_state(&[Complex64::new(0., 0.), Complex64::new(1., 0.)]);
        let z = observable_povm(&pauli_z());
        let m = QuantumModel::new(2, 2, zero.kronecker(&one), vec![z.clone()], vec![z]).unwrap();
        let q = born_behavior(&m).unwrap();
        assert!(q.is_deterministic());
        assert_eq!(q.prob(0, 0, 0, 1), 1.0);
    }

    #[test]
    fn chsh_correlators_from_born_rule() {
        let q = born_behavior(&chsh_model()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[s, s], [s, -s]];
        for x in 0..2 {
            for y in 0..2 {
                assert!((q.correlator(x, y).unwrap() - expected[x][y]).abs() < 1e-12);
            }
        }
        assert!(q.max_abs_diff(&chsh_tsirelson()).unwrap() <= 1e-12);
    }

    #[test]
    fn magic_square_table_matches_born_rule() {
        let q = born_behavior(&magic_square_model()).unwrap();
        assert!(q.max_abs_diff(&magic_square()).unwrap() <= 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_a_configuration_error() {
        let z = observable_povm(&pauli_z());
        let r = QuantumModel::new(2, 2, identity(2).scale(0.5), vec![z.clone()], vec![z]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn povm_not_summing_to_identity_is_rejected() {
        let mut z = observable_povm(&pauli_z());
        z[1] = z[1].scale(0.5);
        let r = QuantumModel::new(2, 2, phi_plus(), vec![z.clone()], vec![observable_povm(&pauli_x())]);
        assert!(r.is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = chsh_model();
        let json = serde_json::to_string(&m).unwrap();
        let back: QuantumModel = serde_json::from_str(&json).unwrap();
        let q1 = born_behavior(&m).unwrap();
        let q2 = born_behavior(&back).unwrap();
        assert_eq!(q1, q2);
    }
}
