//! Lossy detectors: every measurement gains a no-click outcome (code 0).

use serde::{Deserialize, Serialize};

use crate::scenario::{validate_table, Behavior, Scenario, TableFile};
use crate::table::Table;
use crate::{Error, Result, NO_CLICK};

/// Per-setting detection efficiencies of one party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EfficiencyProfile {
    etas: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EfficiencyProfile {
    type Error = Error;

    fn try_from(etas: Vec<f64>) -> Result<Self> {
        Self::new(etas)
    }
}

impl From<EfficiencyProfile> for Vec<f64> {
    fn from(p: EfficiencyProfile) -> Self {
        p.etas
    }
}

impl EfficiencyProfile {
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        if etas.is_empty() {
            return Err(Error::Argument("efficiency profile is empty".into()));
        }
        if let Some(bad) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Argument(format!("efficiency {bad} outside [0, 1]")));
        }
        Ok(Self { etas })
    }

    pub fn uniform(settings: usize, eta: f64) -> Result<Self> {
        Self::new(vec![eta; settings])
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn eta(&self, y: usize) -> f64 {
        self.etas[y]
    }
}

/// Behavior over the extended alphabets `{∅, 1..d}` for both parties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableFile", into = "TableFile")]
pub struct LossyBehavior {
    scenario: Scenario,
    table: Table,
}

impl TryFrom<TableFile> for LossyBehavior {
    type Error = Error;

    fn try_from(file: TableFile) -> Result<Self> {
        LossyBehavior::new(Scenario::new(file.m_a, file.m_b, file.d)?, file.table)
    }
}

impl From<LossyBehavior> for TableFile {
    fn from(p: LossyBehavior) -> Self {
        TableFile {
            m_a: p.scenario.m_a,
            m_b: p.scenario.m_b,
            d: p.scenario.d,
            table: p.table.data,
        }
    }
}

impl LossyBehavior {
    /// Builds a lossy behavior from a flat `(x, y, a, b)` table with
    /// `d + 1` outcomes per party, index 0 being the no-click event.
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        let k = scenario.lossy_outcomes();
        let expected = Table::len_for(scenario.m_a, scenario.m_b, k, k);
        if table.len() != expected {
            return Err(Error::InvalidBehavior(format!(
                "lossy table has {} entries, scenario needs {expected}",
                table.len()
            )));
        }
        let table = Table {
            m_a: scenario.m_a,
            m_b: scenario.m_b,
            na: k,
            nb: k,
            data: table,
        };
        Self::from_table(scenario, table)
    }

    pub(crate) fn from_table(scenario: Scenario, table: Table) -> Result<Self> {
        validate_table(&table, "lossy behavior")?;
        Ok(Self { scenario, table })
    }

    pub(crate) fn empty_table(scenario: Scenario) -> Table {
        let k = scenario.lossy_outcomes();
        Table::zeros(scenario.m_a, scenario.m_b, k, k)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// `P(ab|xy)` with lossy outcome codes.
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table.get(x, y, a, b)
    }

    pub fn table(&self) -> &[f64] {
        &self.table.data
    }

    pub(crate) fn inner(&self) -> &Table {
        &self.table
    }

    pub fn alice_marginal(&self, x: usize) -> Vec<f64> {
        self.table.alice_marginal(x, 0)
    }

    pub fn bob_marginal(&self, y: usize) -> Vec<f64> {
        self.table.bob_marginal(0, y)
    }

    /// Alice's marginal read at a specific Bob setting.
    pub fn alice_marginal_at(&self, x: usize, y: usize) -> Vec<f64> {
        self.table.alice_marginal(x, y)
    }

    pub fn bob_marginal_at(&self, x: usize, y: usize) -> Vec<f64> {
        self.table.bob_marginal(x, y)
    }

    pub fn no_signalling_residual(&self) -> f64 {
        self.table.no_signalling_residual()
    }

    pub fn normalization_residual(&self) -> f64 {
        self.table.normalization_residual()
    }

    pub fn max_abs_diff(&self, other: &LossyBehavior) -> Result<f64> {
        if self.scenario != other.scenario {
            return Err(Error::Argument("behaviors have different scenarios".into()));
        }
        Ok(self.table.max_abs_diff(&other.table))
    }

    /// Embeds an ideal behavior with no no-click mass.
    pub fn lossless(q: &Behavior) -> LossyBehavior {
        apply_loss_both(q, 1.0).expect("η = 1 is in range")
    }
}

/// Bob's detectors fire with probability `η_y`; Alice is untouched:
/// `P(ab|xy) = η_y Q(ab|xy)` and `P(a∅|xy) = (1 - η_y) Q(a|x)`.
pub fn apply_loss_bob(q: &Behavior, profile: &EfficiencyProfile) -> Result<LossyBehavior> {
    let s = q.scenario();
    if profile.len() != s.m_b {
        return Err(Error::Argument(format!(
            "profile has {} efficiencies, Bob has {} settings",
            profile.len(),
            s.m_b
        )));
    }
    let mut t = LossyBehavior::empty_table(s);
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            let eta = profile.eta(y);
            for a in 0..s.d {
                let mut qa = 0.0;
                for b in 0..s.d {
                    let p = q.prob(x, y, a, b);
                    qa += p;
                    t.add(x, y, a + 1, b + 1, eta * p);
                }
                t.add(x, y, a + 1, NO_CLICK, (1.0 - eta) * qa);
            }
        }
    }
    LossyBehavior::from_table(s, t)
}

/// Both parties lose independently with the same efficiency `η`:
/// `P(ab) = η²Q(ab)`, `P(∅b) = η(1-η)Q(b|y)`, `P(a∅) = η(1-η)Q(a|x)`,
/// `P(∅∅) = (1-η)²`.
pub fn apply_loss_both(q: &Behavior, eta: f64) -> Result<LossyBehavior> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Argument(format!("efficiency {eta} outside [0, 1]")));
    }
    let s = q.scenario();
    let mut t = LossyBehavior::empty_table(s);
    let both = eta * eta;
    let one = eta * (1.0 - eta);
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            let qa = q.inner().alice_marginal(x, y);
            let qb = q.inner().bob_marginal(x, y);
            for a in 0..s.d {
                for b in 0..s.d {
                    t.add(x, y, a + 1, b + 1, both * q.prob(x, y, a, b));
                }
                t.add(x, y, a + 1, NO_CLICK, one * qa[a]);
            }
            for b in 0..s.d {
                t.add(x, y, NO_CLICK, b + 1, one * qb[b]);
            }
            t.add(x, y, NO_CLICK, NO_CLICK, (1.0 - eta) * (1.0 - eta));
        }
    }
    LossyBehavior::from_table(s, t)
}

/// Independently turns each side's clicks into no-clicks with probability
/// `1 - survival`.
pub fn blank_both(p: &LossyBehavior, survival: f64) -> Result<LossyBehavior> {
    if !(0.0..=1.0).contains(&survival) {
        return Err(Error::Argument(format!("survival {survival} outside [0, 1]")));
    }
    let s = p.scenario();
    let k = s.lossy_outcomes();
    let mut t = LossyBehavior::empty_table(s);
    // Per-side kernel K(out|in): ∅ stays ∅, a click survives with `survival`.
    let kernel = |input: usize| -> [(usize, f64); 2] {
        if input == NO_CLICK {
            [(NO_CLICK, 1.0), (NO_CLICK, 0.0)]
        } else {
            [(input, survival), (NO_CLICK, 1.0 - survival)]
        }
    };
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            for a in 0..k {
                for b in 0..k {
                    let w = p.prob(x, y, a, b);
                    if w == 0.0 {
                        continue;
                    }
                    for (a2, ka) in kernel(a) {
                        for (b2, kb) in kernel(b) {
                            t.add(x, y, a2, b2, w * ka * kb);
                        }
                    }
                }
            }
        }
    }
    LossyBehavior::from_table(s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{chsh_tsirelson, magic_square};

    #[test]
    fn profile_rejects_out_of_range() {
        assert!(EfficiencyProfile::new(vec![0.5, 1.1]).is_err());
        assert!(EfficiencyProfile::new(vec![-0.1]).is_err());
        assert!(EfficiencyProfile::new(vec![]).is_err());
        assert!(serde_json::from_str::<EfficiencyProfile>("[0.2, 2.0]").is_err());
    }

    #[test]
    fn lossless_bob_equals_ideal() {
        let q = magic_square();
        let p = apply_loss_bob(&q, &EfficiencyProfile::uniform(3, 1.0).unwrap()).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                for a in 0..4 {
                    assert_eq!(p.prob(x, y, a + 1, NO_CLICK), 0.0);
                    for b in 0..4 {
                        assert_eq!(p.prob(x, y, a + 1, b + 1), q.prob(x, y, a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn opaque_bob_never_clicks() {
        let q = chsh_tsirelson();
        let p = apply_loss_bob(&q, &EfficiencyProfile::uniform(2, 0.0).unwrap()).unwrap();
        for y in 0..2 {
            assert_eq!(p.bob_marginal(y)[NO_CLICK], 1.0);
        }
        for x in 0..2 {
            let qa = q.alice_marginal(x);
            for a in 0..2 {
                assert_eq!(p.prob(x, 0, a + 1, NO_CLICK), qa[a]);
            }
        }
    }

    #[test]
    fn half_efficiency_on_chsh() {
        let q = chsh_tsirelson();
        let p = apply_loss_bob(&q, &EfficiencyProfile::uniform(2, 0.5).unwrap()).unwrap();
        for y in 0..2 {
            let m = p.bob_marginal(y);
            assert!((m[1] - 0.25).abs() < 1e-15);
            assert!((m[2] - 0.25).abs() < 1e-15);
            assert!((m[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_length_must_match() {
        let q = chsh_tsirelson();
        assert!(apply_loss_bob(&q, &EfficiencyProfile::uniform(3, 0.5).unwrap()).is_err());
    }

    #[test]
    fn both_sided_blocks() {
        let q = magic_square();
        let eta = 0.6;
        let p = apply_loss_both(&q, eta).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((p.prob(x, y, 0, 0) - 0.16).abs() < 1e-15);
                let clicks: f64 = (1..5).flat_map(|a| (1..5).map(move |b| (a, b))).map(|(a, b)| p.prob(x, y, a, b)).sum();
                let a_only: f64 = (1..5).map(|a| p.prob(x, y, a, 0)).sum();
                let b_only: f64 = (1..5).map(|b| p.prob(x, y, 0, b)).sum();
                assert!((clicks - eta * eta).abs() < 1e-12);
                assert!((a_only - eta * (1.0 - eta)).abs() < 1e-12);
                assert!((b_only - eta * (1.0 - eta)).abs() < 1e-12);
            }
        }
        assert!(apply_loss_both(&q, 1.5).is_err());
    }

    #[test]
    fn blanking_composes_efficiencies() {
        let q = chsh_tsirelson();
        let direct = apply_loss_both(&q, 0.3).unwrap();
        let composed = blank_both(&apply_loss_both(&q, 0.6).unwrap(), 0.5).unwrap();
        assert!(direct.max_abs_diff(&composed).unwrap() <= 1e-12);
    }
}
