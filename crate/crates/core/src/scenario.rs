//! Bipartite scenarios and ideal (lossless) behaviors `Q(ab|xy)`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::table::Table;
use crate::{Error, Result, EXACT_TOL};

/// Setting and outcome counts of a bipartite Bell scenario.
///
/// A single-party scenario over Bob is encoded with `m_a = 1` and all of
/// Alice's weight on her first outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub m_a: usize,
    pub m_b: usize,
    pub d: usize,
}

impl Scenario {
    pub fn new(m_a: usize, m_b: usize, d: usize) -> Result<Self> {
        if m_a == 0 || m_b == 0 {
            return Err(Error::Config(format!(
                "setting counts must be positive (m_a={m_a}, m_b={m_b})"
            )));
        }
        if d < 2 {
            return Err(Error::Config(format!("outcome count must be >= 2, got {d}")));
        }
        Ok(Self { m_a, m_b, d })
    }

    /// Size of the no-click-extended outcome alphabet.
    pub fn lossy_outcomes(&self) -> usize {
        self.d + 1
    }
}

/// Ideal conditional probability table `Q(ab|xy)`.
///
/// Construction checks nonnegativity, per-setting normalization and
/// no-signalling at [`EXACT_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableFile", into = "TableFile")]
pub struct Behavior {
    scenario: Scenario,
    table: Table,
}

/// On-disk schema shared by ideal and lossy behaviors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableFile {
    pub m_a: usize,
    pub m_b: usize,
    pub d: usize,
    pub table: Vec<f64>,
}

impl TryFrom<TableFile> for Behavior {
    type Error = Error;

    fn try_from(file: TableFile) -> Result<Self> {
        Behavior::new(Scenario::new(file.m_a, file.m_b, file.d)?, file.table)
    }
}

impl From<Behavior> for TableFile {
    fn from(b: Behavior) -> Self {
        TableFile {
            m_a: b.scenario.m_a,
            m_b: b.scenario.m_b,
            d: b.scenario.d,
            table: b.table.data,
        }
    }
}

pub(crate) fn validate_table(table: &Table, what: &str) -> Result<()> {
    let min = table.min_entry();
    if min < -EXACT_TOL || min.is_nan() {
        return Err(Error::InvalidBehavior(format!(
            "{what} has a negative entry ({min:e})"
        )));
    }
    let norm = table.normalization_residual();
    if !(norm <= EXACT_TOL) {
        return Err(Error::InvalidBehavior(format!(
            "{what} is not normalized (residual {norm:e})"
        )));
    }
    let ns = table.no_signalling_residual();
    if !(ns <= EXACT_TOL) {
        return Err(Error::InvalidBehavior(format!(
            "{what} is signalling (residual {ns:e})"
        )));
    }
    Ok(())
}

impl Behavior {
    /// Builds a behavior from a flat `(x, y, a, b)` row-major table.
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        let Scenario { m_a, m_b, d } = scenario;
        let expected = Table::len_for(m_a, m_b, d, d);
        if table.len() != expected {
            return Err(Error::InvalidBehavior(format!(
                "table has {} entries, scenario needs {expected}",
                table.len()
            )));
        }
        let table = Table {
            m_a,
            m_b,
            na: d,
            nb: d,
            data: table,
        };
        validate_table(&table, "behavior")?;
        Ok(Self { scenario, table })
    }

    /// Builds a behavior by evaluating `f(x, y, a, b)` on every cell.
    pub fn from_fn(scenario: Scenario, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let Scenario { m_a, m_b, d } = scenario;
        let mut data = Vec::with_capacity(Table::len_for(m_a, m_b, d, d));
        for x in 0..m_a {
            for y in 0..m_b {
                for a in 0..d {
                    for b in 0..d {
                        data.push(f(x, y, a, b));
                    }
                }
            }
        }
        Self::new(scenario, data)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table.get(x, y, a, b)
    }

    pub fn table(&self) -> &[f64] {
        &self.table.data
    }

    pub(crate) fn inner(&self) -> &Table {
        &self.table
    }

    /// `Q(a|x)`, read at Bob's first setting.
    pub fn alice_marginal(&self, x: usize) -> Vec<f64> {
        self.table.alice_marginal(x, 0)
    }

    /// `Q(b|y)`, read at Alice's first setting.
    pub fn bob_marginal(&self, y: usize) -> Vec<f64> {
        self.table.bob_marginal(0, y)
    }

    /// `E(x,y) = Σ (-1)^(a+b) Q(ab|xy)` for binary-outcome scenarios.
    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        if self.scenario.d != 2 {
            return Err(Error::Argument("correlators need d = 2".into()));
        }
        Ok(self.prob(x, y, 0, 0) + self.prob(x, y, 1, 1) - self.prob(x, y, 0, 1) - self.prob(x, y, 1, 0))
    }

    pub fn no_signalling_residual(&self) -> f64 {
        self.table.no_signalling_residual()
    }

    pub fn normalization_residual(&self) -> f64 {
        self.table.normalization_residual()
    }

    pub fn max_abs_diff(&self, other: &Behavior) -> Result<f64> {
        if self.scenario != other.scenario {
            return Err(Error::Argument("behaviors have different scenarios".into()));
        }
        Ok(self.table.max_abs_diff(&other.table))
    }

    /// Mixture `λ·self + (1-λ)·other`.
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        if self.scenario != other.scenario {
            return Err(Error::Argument("behaviors have different scenarios".into()));
        }
        let data = self
            .table
            .data
            .iter()
            .zip(&other.table.data)
            .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
            .collect();
        Behavior::new(self.scenario, data)
    }

    pub fn is_deterministic(&self) -> bool {
        self.table.data.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

/// CHSH behavior at the Tsirelson point: uniform marginals, correlators
/// `E(1,1) = E(1,2) = E(2,1) = 1/√2` and `E(2,2) = -1/√2`.
pub fn chsh_tsirelson() -> Behavior {
    let scenario = Scenario { m_a: 2, m_b: 2, d: 2 };
    Behavior::from_fn(scenario, |x, y, a, b| {
        let e = if x == 1 && y == 1 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
        let sign = if a == b { 1.0 } else { -1.0 };
        (1.0 + sign * e) / 4.0
    })
    .expect("Tsirelson table is a valid behavior")
}

/// Signs `(v1, v2)` of the two free observables in a row or column, for a
/// 0-based outcome index of the magic-square game.
pub fn magic_square_signs(outcome: usize) -> (i8, i8) {
    let v1 = if outcome & 2 == 0 { 1 } else { -1 };
    let v2 = if outcome & 1 == 0 { 1 } else { -1 };
    (v1, v2)
}

/// Full row of ±1 values Alice reports for a 0-based outcome (rows multiply to +1).
pub fn magic_square_row(outcome: usize) -> [i8; 3] {
    let (v1, v2) = magic_square_signs(outcome);
    [v1, v2, v1 * v2]
}

/// Full column of ±1 values Bob reports for column `y` (columns 1 and 2
/// multiply to +1, column 3 to -1).
pub fn magic_square_column(y: usize, outcome: usize) -> [i8; 3] {
    let (v1, v2) = magic_square_signs(outcome);
    let parity = if y == 2 { -1 } else { 1 };
    [v1, v2, parity * v1 * v2]
}

/// Mermin–Peres magic-square behavior of the two-ebit strategy: Alice reports
/// row `x`, Bob column `y`, and the intersection cell always agrees.
pub fn magic_square() -> Behavior {
    let scenario = Scenario { m_a: 3, m_b: 3, d: 4 };
    Behavior::from_fn(scenario, |x, y, a, b| {
        if magic_square_row(a)[y] == magic_square_column(y, b)[x] {
            0.125
        } else {
            0.0
        }
    })
    .expect("magic-square table is a valid behavior")
}

/// Bob's behavior conditioned on Alice obtaining `a` for setting `x`:
/// `Q(b|y, a x) = Q(ab|xy) / Q(a|x)`.
///
/// The result is a single-party behavior (`m_a = 1`, Alice's weight on
/// outcome 0) normalized separately for every `y`.
pub fn conditional_bob(behavior: &Behavior, x: usize, a: usize) -> Result<Behavior> {
    let s = behavior.scenario;
    if x >= s.m_a || a >= s.d {
        return Err(Error::Argument(format!("setting {x} / outcome {a} out of range")));
    }
    let mut data = vec![0.0; s.m_b * s.d * s.d];
    for y in 0..s.m_b {
        let row: Vec<f64> = (0..s.d).map(|b| behavior.prob(x, y, a, b)).collect();
        let qa: f64 = row.iter().sum();
        if qa <= EXACT_TOL {
            return Err(Error::UndefinedConditional { x, a });
        }
        for (b, p) in row.iter().enumerate() {
            data[(y * s.d) * s.d + b] = p / qa;
        }
    }
    Behavior::new(Scenario { m_a: 1, ..s }, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_rejects_degenerate_counts() {
        assert!(Scenario::new(0, 2, 2).is_err());
        assert!(Scenario::new(2, 0, 2).is_err());
        assert!(Scenario::new(2, 2, 1).is_err());
        assert_eq!(Scenario::new(2, 3, 4).unwrap().lossy_outcomes(), 5);
    }

    #[test]
    fn behavior_rejects_invalid_tables() {
        let s = Scenario::new(1, 1, 2).unwrap();
        assert!(Behavior::new(s, vec![0.5, 0.5, 0.0]).is_err());
        assert!(Behavior::new(s, vec![0.5, 0.6, 0.0, -0.1]).is_err());
        assert!(Behavior::new(s, vec![0.5, 0.5, 0.1, 0.0]).is_err());

        let s = Scenario::new(2, 1, 2).unwrap();
        // Bob's marginal depends on x.
        assert!(Behavior::new(s, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn chsh_has_uniform_marginals_and_tsirelson_value() {
        let q = chsh_tsirelson();
        for x in 0..2 {
            for p in q.alice_marginal(x) {
                assert!((p - 0.5).abs() < 1e-15);
            }
        }
        let s = q.correlator(0, 0).unwrap() + q.correlator(0, 1).unwrap() + q.correlator(1, 0).unwrap()
            - q.correlator(1, 1).unwrap();
        assert!((s - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn magic_square_support_and_marginals() {
        let q = magic_square();
        for x in 0..3 {
            for y in 0..3 {
                let support = (0..4)
                    .flat_map(|a| (0..4).map(move |b| (a, b)))
                    .filter(|&(a, b)| q.prob(x, y, a, b) > 0.0)
                    .count();
                assert_eq!(support, 8);
                assert!(q.alice_marginal(x).iter().all(|&p| p == 0.25));
                assert!(q.bob_marginal(y).iter().all(|&p| p == 0.25));
            }
        }
        // Column 3 has odd parity.
        assert_eq!(magic_square_column(2, 0), [1, 1, -1]);
        assert_eq!(magic_square_row(3), [-1, -1, 1]);
    }

    #[test]
    fn conditional_of_perfect_correlation() {
        let s = Scenario::new(1, 1, 2).unwrap();
        let q = Behavior::new(s, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let c = conditional_bob(&q, 0, 0).unwrap();
        assert_eq!(c.bob_marginal(0), vec![1.0, 0.0]);
    }

    #[test]
    fn conditional_of_zero_mass_outcome_fails() {
        let s = Scenario::new(1, 1, 2).unwrap();
        let q = Behavior::new(s, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            conditional_bob(&q, 0, 1),
            Err(Error::UndefinedConditional { x: 0, a: 1 })
        ));
    }

    #[test]
    fn conditional_of_product_is_bob_marginal() {
        let s = Scenario::new(2, 2, 2).unwrap();
        let pa = [[0.3, 0.7], [0.9, 0.1]];
        let pb = [[0.6, 0.4], [0.2, 0.8]];
        let q = Behavior::from_fn(s, |x, y, a, b| pa[x][a] * pb[y][b]).unwrap();
        let c = conditional_bob(&q, 1, 0).unwrap();
        for y in 0..2 {
            for b in 0..2 {
                assert!((c.prob(0, y, 0, b) - pb[y][b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chsh_conditionals_are_normalized() {
        let q = chsh_tsirelson();
        for x in 0..2 {
            for a in 0..2 {
                let c = conditional_bob(&q, x, a).unwrap();
                for y in 0..2 {
                    let s: f64 = c.bob_marginal(y).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn behavior_json_round_trip() {
        let q = magic_square();
        let json = serde_json::to_string(&q).unwrap();
        let back: Behavior = serde_json::from_str(&json).unwrap();
        assert_eq!(q, back);
        assert!(serde_json::from_str::<Behavior>(r#"{"m_a":1,"m_b":1,"d":2,"table":[1.0]}"#).is_err());
    }
}
