//! Tripartite no-signalling box `P(abe|xyz)` in which Eve's input
//! `z = (x̄, ȳ)` selects the setting pair whose outcomes she will know.
//!
//! For each `z`, the single-party attack with target `{x̄}` runs on Alice
//! and with target `{ȳ}` on Bob, each side with its own branch coin. Eve's
//! outcome `e = (e_a, e_b)` records what she measured (no-click where she
//! forwarded). Summing over `e` gives the honest two-sided lossy behavior
//! for every `z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lossy::{apply_loss_both, LossyBehavior};
use crate::polytope::{is_local, LocalityCertificate};
use crate::scenario::{Behavior, Scenario, TableFile};
use crate::table::Table;
use crate::{Error, Result, EXACT_TOL, NO_CLICK};

/// Table indexed `(z, x, y, e_a, e_b, a, b)` with lossy outcome codes and
/// `z = x̄·M_B + ȳ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableFile", into = "TableFile")]
pub struct TripartiteBox {
    scenario: Scenario,
    table: Vec<f64>,
}

impl TryFrom<TableFile> for TripartiteBox {
    type Error = Error;

    fn try_from(f: TableFile) -> Result<Self> {
        TripartiteBox::from_table(Scenario::new(f.m_a, f.m_b, f.d)?, f.table)
    }
}

impl From<TripartiteBox> for TableFile {
    fn from(b: TripartiteBox) -> Self {
        TableFile {
            m_a: b.scenario.m_a,
            m_b: b.scenario.m_b,
            d: b.scenario.d,
            table: b.table,
        }
    }
}

/// Eve's input `(x̄, ȳ)`, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveInput {
    pub x: usize,
    pub y: usize,
}

impl TripartiteBox {
    /// Wraps a raw table after shape, sign and normalization checks.
    /// No-signalling is not required here; see [`verify_no_signalling`].
    pub fn from_table(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        let b = Self { scenario, table };
        if b.table.len() != b.len() {
            return Err(Error::InvalidBehavior(format!(
                "box table has {} entries, scenario needs {}",
                b.table.len(),
                b.len()
            )));
        }
        if let Some(v) = b.table.iter().find(|v| !(**v >= -EXACT_TOL)) {
            return Err(Error::InvalidBehavior(format!("box has a negative entry ({v:e})")));
        }
        let block = b.k().pow(4);
        for (i, chunk) in b.table.chunks(block).enumerate() {
            let s: f64 = chunk.iter().sum();
            if (s - 1.0).abs() > EXACT_TOL {
                return Err(Error::InvalidBehavior(format!(
                    "box block {i} is not normalized (sum {s})"
                )));
            }
        }
        Ok(b)
    }

    fn zeros(scenario: Scenario) -> Self {
        let mut b = Self {
            scenario,
            table: Vec::new(),
        };
        b.table = vec![0.0; b.len()];
        b
    }

    fn k(&self) -> usize {
        self.scenario.lossy_outcomes()
    }

    pub fn z_count(&self) -> usize {
        self.scenario.m_a * self.scenario.m_b
    }

    fn len(&self) -> usize {
        self.z_count() * self.scenario.m_a * self.scenario.m_b * self.k().pow(4)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn z_index(&self, z: EveInput) -> usize {
        z.x * self.scenario.m_b + z.y
    }

    pub fn eve_input(&self, z: usize) -> EveInput {
        EveInput {
            x: z / self.scenario.m_b,
            y: z % self.scenario.m_b,
        }
    }

    #[inline]
    fn idx(&self, z: usize, x: usize, y: usize, ea: usize, eb: usize, a: usize, b: usize) -> usize {
        let s = self.scenario;
        let k = self.k();
        (((((z * s.m_a + x) * s.m_b + y) * k + ea) * k + eb) * k + a) * k + b
    }

    /// `P(a b e_a e_b | x y z)`.
    #[allow(clippy::too_many_arguments)]
    pub fn prob(&self, z: usize, x: usize, y: usize, ea: usize, eb: usize, a: usize, b: usize) -> f64 {
        self.table[self.idx(z, x, y, ea, eb, a, b)]
    }

    /// `Σ_e P(abe|xyz)` as a bipartite lossy table.
    pub fn sum_over_eve(&self, z: usize) -> Result<LossyBehavior> {
        let s = self.scenario;
        let k = self.k();
        let mut t = Table::zeros(s.m_a, s.m_b, k, k);
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                for ea in 0..k {
                    for eb in 0..k {
                        for a in 0..k {
                            for b in 0..k {
                                t.add(x, y, a, b, self.prob(z, x, y, ea, eb, a, b));
                            }
                        }
                    }
                }
            }
        }
        LossyBehavior::from_table(s, t)
    }

    /// Eve's marginal `P(e|xyz)` flattened as `e_a·(d+1) + e_b`.
    pub fn eve_marginal(&self, z: usize, x: usize, y: usize) -> Vec<f64> {
        let k = self.k();
        let mut m = vec![0.0; k * k];
        for ea in 0..k {
            for eb in 0..k {
                m[ea * k + eb] = (0..k)
                    .flat_map(|a| (0..k).map(move |b| (a, b)))
                    .map(|(a, b)| self.prob(z, x, y, ea, eb, a, b))
                    .sum();
            }
        }
        m
    }

    /// Alice–Bob box steered by Eve's outcome `e` for input `z`; `None` when
    /// `P(e|z) = 0`.
    pub fn steered_behavior(&self, z: usize, ea: usize, eb: usize) -> Result<Option<LossyBehavior>> {
        let s = self.scenario;
        let k = self.k();
        let pe = self.eve_marginal(z, 0, 0)[ea * k + eb];
        if pe <= EXACT_TOL {
            return Ok(None);
        }
        let mut t = Table::zeros(s.m_a, s.m_b, k, k);
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                for a in 0..k {
                    for b in 0..k {
                        t.add(x, y, a, b, self.prob(z, x, y, ea, eb, a, b) / pe);
                    }
                }
            }
        }
        LossyBehavior::from_table(s, t).map(Some)
    }
}

/// Builds the box at efficiency `eta ≤ 1/2` from an ideal behavior.
pub fn build_box(q: &Behavior, eta: f64) -> Result<TripartiteBox> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Argument(format!("efficiency {eta} outside [0, 1]")));
    }
    if eta > 0.5 {
        return Err(Error::Infeasible { margin: 0.5 - eta });
    }
    let s = q.scenario();
    let d = s.d;
    let k = s.lossy_outcomes();
    // Forwarded, non-targeted settings click with τ = η/(1-η).
    let tau = if eta == 0.5 { 1.0 } else { eta / (1.0 - eta) };
    let mut bx = TripartiteBox::zeros(s);
    let per_z = s.m_a * s.m_b * k.pow(4);
    let shape = TripartiteBox {
        scenario: s,
        table: Vec::new(),
    };
    bx.table.par_chunks_mut(per_z).enumerate().for_each(|(z, block)| {
        let EveInput { x: xt, y: yt } = shape.eve_input(z);
        let base = shape.idx(z, 0, 0, 0, 0, 0, 0);
        let mut add = |x: usize, y: usize, ea: usize, eb: usize, a: usize, b: usize, w: f64| {
            if w != 0.0 {
                block[shape.idx(z, x, y, ea, eb, a, b) - base] += w;
            }
        };
        // Forwarded side: blanked on its target, else clicks with τ.
        let forwarded = |setting: usize, target: usize, outcome: usize| -> [(usize, f64); 2] {
            if setting == target {
                [(NO_CLICK, 1.0), (NO_CLICK, 0.0)]
            } else {
                [(outcome + 1, tau), (NO_CLICK, 1.0 - tau)]
            }
        };
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                for u in 0..d {
                    for v in 0..d {
                        // Eve measures both targets: (u, v) ~ Q(uv|x̄ȳ).
                        let w = eta * eta * q.prob(xt, yt, u, v);
                        let a = if x == xt { u + 1 } else { NO_CLICK };
                        let b = if y == yt { v + 1 } else { NO_CLICK };
                        add(x, y, u + 1, v + 1, a, b, w);

                        // Eve measures Alice's target only: u ~ Q(u|x̄), Bob's
                        // forwarded outcome v ~ Q(v|y, u x̄).
                        let w = eta * (1.0 - eta) * q.prob(xt, y, u, v);
                        let a = if x == xt { u + 1 } else { NO_CLICK };
                        for (b, kb) in forwarded(y, yt, v) {
                            add(x, y, u + 1, NO_CLICK, a, b, w * kb);
                        }

                        // Eve measures Bob's target only (roles swapped).
                        let w = (1.0 - eta) * eta * q.prob(x, yt, u, v);
                        let b = if y == yt { v + 1 } else { NO_CLICK };
                        for (a, ka) in forwarded(x, xt, u) {
                            add(x, y, NO_CLICK, v + 1, a, b, w * ka);
                        }

                        // Both sides forwarded.
                        let w = (1.0 - eta) * (1.0 - eta) * q.prob(x, y, u, v);
                        for (a, ka) in forwarded(x, xt, u) {
                            for (b, kb) in forwarded(y, yt, v) {
                                add(x, y, NO_CLICK, NO_CLICK, a, b, w * ka * kb);
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(bx)
}

/// Largest deviation of `Σ_e P(abe|xyz)` from the two-sided lossy behavior,
/// over all `z`.
pub fn marginal_residual(bx: &TripartiteBox, q: &Behavior, eta: f64) -> Result<f64> {
    let honest = apply_loss_both(q, eta)?;
    let mut worst: f64 = 0.0;
    for z in 0..bx.z_count() {
        worst = worst.max(bx.sum_over_eve(z)?.max_abs_diff(&honest)?);
    }
    Ok(worst)
}

/// Probability that `e = (a, b)` when Alice and Bob use `(x, y)` and Eve
/// inputs `z`.
pub fn guess_success_at(bx: &TripartiteBox, z: EveInput, x: usize, y: usize) -> Result<f64> {
    let s = bx.scenario;
    if z.x >= s.m_a || z.y >= s.m_b || x >= s.m_a || y >= s.m_b {
        return Err(Error::Argument("setting out of range".into()));
    }
    let zi = bx.z_index(z);
    let k = bx.k();
    let mut miss = 0.0;
    for ea in 0..k {
        for eb in 0..k {
            for a in 0..k {
                for b in 0..k {
                    if (ea, eb) != (a, b) {
                        miss += bx.prob(zi, x, y, ea, eb, a, b);
                    }
                }
            }
        }
    }
    Ok(1.0 - miss)
}

/// Success of Eve's a-posteriori guess on the pair she targeted.
pub fn guess_success(bx: &TripartiteBox, z: EveInput) -> Result<f64> {
    guess_success_at(bx, z, z.x, z.y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignallingReport {
    /// `P(a|xyz)` independent of `(y, z)`.
    pub alice: f64,
    /// `P(b|xyz)` independent of `(x, z)`.
    pub bob: f64,
    /// `P(e|xyz)` independent of `(x, y)`.
    pub eve: f64,
    /// `P(ab|xyz)` independent of `z`.
    pub alice_bob: f64,
    /// `P(ae|xyz)` independent of `y`.
    pub alice_eve: f64,
    /// `P(be|xyz)` independent of `x`.
    pub bob_eve: f64,
    pub max_residual: f64,
    pub pass: bool,
}

/// Checks every one- and two-party marginal for independence from the
/// remaining parties' inputs.
pub fn verify_no_signalling(bx: &TripartiteBox, tol: f64) -> NoSignallingReport {
    // keep = (alice, bob, eve) outcome parties retained in the marginal.
    let residual = |keep: [bool; 3]| -> f64 {
        let s = bx.scenario;
        let k = bx.k();
        let zc = bx.z_count();
        let dims = [k, k, k * k];
        let kept: usize = (0..3).filter(|&i| keep[i]).map(|i| dims[i]).product();
        let marginal = |z: usize, x: usize, y: usize| -> Vec<f64> {
            let mut m = vec![0.0; kept];
            for ea in 0..k {
                for eb in 0..k {
                    for a in 0..k {
                        for b in 0..k {
                            let mut i = 0;
                            if keep[0] {
                                i = i * k + a;
                            }
                            if keep[1] {
                                i = i * k + b;
                            }
                            if keep[2] {
                                i = i * k * k + ea * k + eb;
                            }
                            m[i] += bx.prob(z, x, y, ea, eb, a, b);
                        }
                    }
                }
            }
            m
        };
        let mut worst: f64 = 0.0;
        for z in 0..zc {
            for x in 0..s.m_a {
                for y in 0..s.m_b {
                    // Inputs of parties outside the marginal are reset to 0.
                    let (xr, yr, zr) = (
                        if keep[0] { x } else { 0 },
                        if keep[1] { y } else { 0 },
                        if keep[2] { z } else { 0 },
                    );
                    if (xr, yr, zr) == (x, y, z) {
                        continue;
                    }
                    let m = marginal(z, x, y);
                    let r = marginal(zr, xr, yr);
                    for (p, q) in m.iter().zip(&r) {
                        worst = worst.max((p - q).abs());
                    }
                }
            }
        }
        worst
    };
    let alice = residual([true, false, false]);
    let bob = residual([false, true, false]);
    let eve = residual([false, false, true]);
    let alice_bob = residual([true, true, false]);
    let alice_eve = residual([true, false, true]);
    let bob_eve = residual([false, true, true]);
    let max_residual = [alice, bob, eve, alice_bob, alice_eve, bob_eve]
        .into_iter()
        .fold(0.0, f64::max);
    NoSignallingReport {
        alice,
        bob,
        eve,
        alice_bob,
        alice_eve,
        bob_eve,
        max_residual,
        pass: max_residual <= tol,
    }
}

/// Evidence that a lossy behavior is nonlocal yet fully readable a
/// posteriori by a no-signalling eavesdropper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRandomnessCertificate {
    pub eta: f64,
    pub locality: LocalityCertificate,
    pub marginal_residual: f64,
    pub no_signalling: NoSignallingReport,
    /// Smallest targeted guess success over all `z`.
    pub min_guess_success: f64,
    pub nonlocal: bool,
    pub box_valid: bool,
    pub passes: bool,
}

/// Runs the locality test on `apply_loss_both(q, eta)` and the three box
/// checks at [`EXACT_TOL`].
pub fn certify_bound_randomness(q: &Behavior, eta: f64, tol: f64) -> Result<BoundRandomnessCertificate> {
    let bx = build_box(q, eta)?;
    let lossy = apply_loss_both(q, eta)?;
    let locality = is_local(&lossy, tol)?;
    locality.verify(&lossy, tol)?;
    let marginal_residual = marginal_residual(&bx, q, eta)?;
    let no_signalling = verify_no_signalling(&bx, EXACT_TOL);
    let mut min_guess_success: f64 = 1.0;
    for z in 0..bx.z_count() {
        min_guess_success = min_guess_success.min(guess_success(&bx, bx.eve_input(z))?);
    }
    let nonlocal = !locality.is_local();
    let box_valid = marginal_residual <= EXACT_TOL && no_signalling.pass && min_guess_success == 1.0;
    Ok(BoundRandomnessCertificate {
        eta,
        locality,
        marginal_residual,
        no_signalling,
        min_guess_success,
        nonlocal,
        box_valid,
        passes: nonlocal && box_valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::chsh_tsirelson;

    #[test]
    fn chsh_box_at_half_efficiency() {
        let q = chsh_tsirelson();
        let bx = build_box(&q, 0.5).unwrap();
        assert!(marginal_residual(&bx, &q, 0.5).unwrap() <= 1e-12);
        assert!(verify_no_signalling(&bx, 1e-12).pass);
        for z in 0..bx.z_count() {
            assert_eq!(guess_success(&bx, bx.eve_input(z)).unwrap(), 1.0);
        }
        // Untargeted pairs are not fully readable.
        let z = EveInput { x: 0, y: 0 };
        assert!(guess_success_at(&bx, z, 1, 1).unwrap() < 1.0);
    }

    #[test]
    fn efficiency_above_half_is_infeasible() {
        let q = chsh_tsirelson();
        assert!(matches!(build_box(&q, 0.6), Err(Error::Infeasible { .. })));
        assert!(matches!(build_box(&q, -0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn product_box_has_zero_residual() {
        let s = Scenario::new(2, 2, 2).unwrap();
        let k = 3;
        let pa = [[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]];
        let pb = [[0.5, 0.5, 0.0], [0.1, 0.1, 0.8]];
        let mut table = Vec::new();
        for z in 0..4 {
            let pe: Vec<f64> = (0..9).map(|e| if e == z { 0.5 } else if e == 8 { 0.5 } else { 0.0 }).collect();
            for x in 0..2 {
                for y in 0..2 {
                    for ea in 0..k {
                        for eb in 0..k {
                            for a in 0..k {
                                for b in 0..k {
                                    table.push(pa[x][a] * pb[y][b] * pe[ea * k + eb]);
                                }
                            }
                        }
                    }
                }
            }
        }
        let bx = TripartiteBox::from_table(s, table).unwrap();
        let r = verify_no_signalling(&bx, 1e-12);
        assert!(r.max_residual <= 1e-15);
    }

    #[test]
    fn injected_signalling_is_reported() {
        let q = chsh_tsirelson();
        let mut bx = build_box(&q, 0.5).unwrap();
        // Move mass between Bob's click outcomes only when Alice uses x = 1.
        let bias = 0.01;
        let z = 0;
        let (i, j) = (bx.idx(z, 1, 1, 0, 0, 1, 1), bx.idx(z, 1, 1, 0, 0, 1, 2));
        assert!(bx.table[i] >= bias);
        bx.table[i] -= bias;
        bx.table[j] += bias;
        let r = verify_no_signalling(&bx, 1e-12);
        assert!(!r.pass);
        assert!((r.bob - bias).abs() < 1e-12);
    }

    #[test]
    fn malformed_box_is_rejected() {
        let s = Scenario::new(1, 1, 2).unwrap();
        assert!(TripartiteBox::from_table(s, vec![0.0; 10]).is_err());
        assert!(TripartiteBox::from_table(s, vec![0.0; 81]).is_err());
    }
}
