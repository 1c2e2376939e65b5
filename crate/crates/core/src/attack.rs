//! Efficiency-tuning attack on Bob's untrusted detector.
//!
//! Eve picks one targeted setting `ȳ ∈ G` with probability `η_ȳ`, measures
//! it herself and lets Bob's detector click only if he happens to choose
//! `ȳ`. With the remaining probability `1 - Σ_G η` she forwards the system
//! untouched, suppresses clicks on `G` and lets every other setting `y`
//! click with probability `τ_y`. Bob's lossy statistics are reproduced
//! exactly whenever `Σ_{y∈G} η_y ≤ 1 - max_{y∉G} η_y`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lossy::{EfficiencyProfile, LossyBehavior};
use crate::scenario::Behavior;
use crate::simulation::{bernoulli, round_rng, sample_index, RoundRecord, SimulationConfig, NOT_APPLICABLE};
use crate::{Error, Result, NO_CLICK};

/// Slack on the feasibility boundary so that equal-efficiency profiles at
/// `1/(|G|+1)` are accepted despite rounding.
pub const BOUNDARY_SLACK: f64 = 1e-15;

/// Nonempty set of Bob's settings whose outcomes Eve learns.
///
/// Stored 0-based and sorted; serialized 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TargetSet {
    settings: Vec<usize>,
}

impl TryFrom<Vec<usize>> for TargetSet {
    type Error = Error;

    fn try_from(one_based: Vec<usize>) -> Result<Self> {
        if one_based.contains(&0) {
            return Err(Error::Argument("target settings are 1-based".into()));
        }
        Self::from_settings(one_based.into_iter().map(|y| y - 1).collect())
    }
}

impl From<TargetSet> for Vec<usize> {
    fn from(t: TargetSet) -> Self {
        t.settings.iter().map(|y| y + 1).collect()
    }
}

impl TargetSet {
    /// Target set over 0-based settings, checked against `m_b`.
    pub fn new(settings: Vec<usize>, m_b: usize) -> Result<Self> {
        let t = Self::from_settings(settings)?;
        if let Some(&y) = t.settings.last() {
            if y >= m_b {
                return Err(Error::Argument(format!(
                    "target setting {} exceeds Bob's {m_b} settings",
                    y + 1
                )));
            }
        }
        Ok(t)
    }

    fn from_settings(mut settings: Vec<usize>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::Argument("target set is empty".into()));
        }
        settings.sort_unstable();
        if settings.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("target set has repeated settings".into()));
        }
        Ok(Self { settings })
    }

    pub fn single(y: usize, m_b: usize) -> Result<Self> {
        Self::new(vec![y], m_b)
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn contains(&self, y: usize) -> bool {
        self.settings.binary_search(&y).is_ok()
    }

    fn check_range(&self, m_b: usize) -> Result<()> {
        match self.settings.last() {
            Some(&y) if y >= m_b => Err(Error::Argument(format!(
                "target setting {} exceeds {m_b} settings",
                y + 1
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `(1 - η′) - Σ_{y∈G} η_y`; nonnegative iff feasible (up to boundary slack).
    pub margin: f64,
}

/// Checks `Σ_{y∈G} η_y ≤ 1 - η′` with `η′ = max_{y∉G} η_y` (0 if `G` covers everything).
pub fn feasible(profile: &EfficiencyProfile, target: &TargetSet) -> Result<Feasibility> {
    target.check_range(profile.len())?;
    let targeted: f64 = target.settings().iter().map(|&y| profile.eta(y)).sum();
    let eta_prime = (0..profile.len())
        .filter(|y| !target.contains(*y))
        .map(|y| profile.eta(y))
        .fold(0.0, f64::max);
    let margin = (1.0 - eta_prime) - targeted;
    Ok(Feasibility {
        feasible: margin >= -BOUNDARY_SLACK,
        margin,
    })
}

/// Largest equal efficiency at which the attack on `g_size` of `m_b`
/// settings works: `1/(|G|+1)` if `|G| < M_B`, else `1/M_B`.
pub fn critical_efficiency(g_size: usize, m_b: usize) -> Result<f64> {
    if g_size == 0 || g_size > m_b {
        return Err(Error::Argument(format!(
            "target size {g_size} must lie in 1..={m_b}"
        )));
    }
    Ok(if g_size < m_b {
        1.0 / (g_size as f64 + 1.0)
    } else {
        1.0 / m_b as f64
    })
}

/// Eve's classical strategy against a given efficiency profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    target: TargetSet,
    profile: EfficiencyProfile,
    /// Click probability in the forwarding branch; `None` for targeted settings.
    taus: Vec<Option<f64>>,
    /// Probability of measuring each targeted setting, aligned with `target`.
    measure_probs: Vec<f64>,
    forward_prob: f64,
}

impl AttackPlan {
    pub fn target(&self) -> &TargetSet {
        &self.target
    }

    pub fn profile(&self) -> &EfficiencyProfile {
        &self.profile
    }

    pub fn tau(&self, y: usize) -> Option<f64> {
        self.taus[y]
    }

    pub fn taus(&self) -> &[Option<f64>] {
        &self.taus
    }

    /// `(ȳ, probability)` for every measuring branch.
    pub fn measure_branches(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.target.settings().iter().copied().zip(self.measure_probs.iter().copied())
    }

    /// Probability that Eve forwards the system untouched.
    pub fn forward_prob(&self) -> f64 {
        self.forward_prob
    }

    pub fn m_b(&self) -> usize {
        self.profile.len()
    }

    fn check_behavior(&self, q: &Behavior) -> Result<()> {
        if q.scenario().m_b != self.m_b() {
            return Err(Error::Argument(format!(
                "plan covers {} settings, behavior has {}",
                self.m_b(),
                q.scenario().m_b
            )));
        }
        Ok(())
    }
}

/// Builds the plan: branch (i) with probability `η_ȳ` per `ȳ ∈ G`, branch
/// (ii) with `1 - Σ_G η`, and `τ_y = η_y / (1 - Σ_G η)` for `y ∉ G`.
pub fn build_plan(profile: &EfficiencyProfile, target: &TargetSet) -> Result<AttackPlan> {
    let f = feasible(profile, target)?;
    if !f.feasible {
        return Err(Error::Infeasible { margin: f.margin });
    }
    let measure_probs: Vec<f64> = target.settings().iter().map(|&y| profile.eta(y)).collect();
    let forward_prob = (1.0 - measure_probs.iter().sum::<f64>()).max(0.0);
    let taus = (0..profile.len())
        .map(|y| {
            if target.contains(y) {
                None
            } else if profile.eta(y) == 0.0 {
                Some(0.0)
            } else {
                Some((profile.eta(y) / forward_prob).min(1.0))
            }
        })
        .collect();
    Ok(AttackPlan {
        target: target.clone(),
        profile: profile.clone(),
        taus,
        measure_probs,
        forward_prob,
    })
}

/// Eve's best guess of Bob's click outcome for an unread setting.
fn most_likely_click(q: &Behavior, y: usize) -> usize {
    let m = q.bob_marginal(y);
    let mut best = 0;
    for (b, p) in m.iter().enumerate() {
        if *p > m[best] {
            best = b;
        }
    }
    best + 1
}

/// Enumerates every elementary event of the attacked round at settings
/// `(x, y)` as `(weight, alice_code, bob_code, eve_guess_of_bob)`.
pub(crate) fn for_each_event(
    plan: &AttackPlan,
    q: &Behavior,
    x: usize,
    y: usize,
    mut f: impl FnMut(f64, usize, usize, usize),
) {
    let d = q.scenario().d;
    // Branch (i): Eve measures ȳ, obtaining b' ~ Q(b'|ȳ); Alice's outcome
    // follows the conditional Q(a|x, b'ȳ), so the joint weight is Q(ab'|xȳ).
    for (target_y, w) in plan.measure_branches() {
        if w == 0.0 {
            continue;
        }
        for b_eve in 0..d {
            for a in 0..d {
                let p = w * q.prob(x, target_y, a, b_eve);
                let bob = if y == target_y { b_eve + 1 } else { NO_CLICK };
                f(p, a + 1, bob, bob);
            }
        }
    }
    // Branch (ii): forwarded untouched.
    let w = plan.forward_prob;
    if w == 0.0 {
        return;
    }
    match plan.tau(y) {
        None => {
            for a in 0..d {
                for b in 0..d {
                    f(w * q.prob(x, y, a, b), a + 1, NO_CLICK, NO_CLICK);
                }
            }
        }
        Some(tau) => {
            let guess = most_likely_click(q, y);
            for a in 0..d {
                for b in 0..d {
                    let p = w * q.prob(x, y, a, b);
                    f(p * tau, a + 1, b + 1, guess);
                    f(p * (1.0 - tau), a + 1, NO_CLICK, NO_CLICK);
                }
            }
        }
    }
}

/// Joint statistics of an honest Alice and the attacked Bob, summed over
/// Eve's branches.
pub fn induced_behavior(plan: &AttackPlan, q: &Behavior) -> Result<LossyBehavior> {
    plan.check_behavior(q)?;
    let s = q.scenario();
    let mut t = LossyBehavior::empty_table(s);
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            for_each_event(plan, q, x, y, |w, a, b, _| t.add(x, y, a, b, w));
        }
    }
    LossyBehavior::from_table(s, t)
}

/// Probability that Eve's record equals Bob's outcome (no-click included)
/// for setting `y`, computed as one minus the mass of mismatching events.
pub fn guessing_probability(plan: &AttackPlan, q: &Behavior, y: usize) -> Result<f64> {
    plan.check_behavior(q)?;
    if y >= plan.m_b() {
        return Err(Error::Argument(format!("setting {} out of range", y + 1)));
    }
    let m_a = q.scenario().m_a;
    let mut miss = 0.0;
    for x in 0..m_a {
        for_each_event(plan, q, x, y, |w, _, b, guess| {
            if guess != b {
                miss += w;
            }
        });
    }
    Ok(1.0 - miss / m_a as f64)
}

/// One round of the attack after settings are chosen.
pub(crate) struct AttackedRound {
    pub a: usize,
    pub b: usize,
    pub guess_b: usize,
    pub branch: String,
}

pub(crate) fn sample_attacked_round<R: rand::Rng + ?Sized>(
    plan: &AttackPlan,
    q: &Behavior,
    x: usize,
    y: usize,
    rng: &mut R,
) -> AttackedRound {
    let d = q.scenario().d;
    let mut branch_weights: Vec<f64> = plan.measure_probs.clone();
    branch_weights.push(plan.forward_prob);
    let branch = sample_index(rng, &branch_weights);
    if branch < plan.measure_probs.len() {
        let target_y = plan.target.settings()[branch];
        let b_eve = sample_index(rng, &q.bob_marginal(target_y));
        let cond: Vec<f64> = (0..d).map(|a| q.prob(x, target_y, a, b_eve)).collect();
        let a = sample_index(rng, &cond);
        let bob = if y == target_y { b_eve + 1 } else { NO_CLICK };
        AttackedRound {
            a: a + 1,
            b: bob,
            guess_b: bob,
            branch: format!("measure:{}", target_y + 1),
        }
    } else {
        let joint: Vec<f64> = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| q.prob(x, y, a, b)).collect();
        let k = sample_index(rng, &joint);
        let (a, b) = (k / d, k % d);
        let (bob, guess) = match plan.tau(y) {
            None => (NO_CLICK, NO_CLICK),
            Some(tau) => {
                if bernoulli(rng, tau) {
                    (b + 1, most_likely_click(q, y))
                } else {
                    (NO_CLICK, NO_CLICK)
                }
            }
        };
        AttackedRound {
            a: a + 1,
            b: bob,
            guess_b: guess,
            branch: "forward".into(),
        }
    }
}

/// Monte-Carlo realization of the attack. Each round draws from its own
/// seeded stream, so the log does not depend on thread scheduling.
pub fn simulate_rounds(plan: &AttackPlan, q: &Behavior, config: &SimulationConfig) -> Result<Vec<RoundRecord>> {
    plan.check_behavior(q)?;
    let (wa, wb) = config.validate(q.scenario())?;
    Ok((0..config.rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = round_rng(config.seed, round);
            let x = sample_index(&mut rng, &wa);
            let y = sample_index(&mut rng, &wb);
            let r = sample_attacked_round(plan, q, x, y, &mut rng);
            RoundRecord {
                round,
                x: x + 1,
                y: y + 1,
                a: r.a,
                b: r.b,
                eve_branch: r.branch,
                eve_guess_a: NOT_APPLICABLE,
                eve_guess_b: r.guess_b as i64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lossy::apply_loss_bob;
    use crate::scenario::{chsh_tsirelson, Scenario};

    fn profile(etas: &[f64]) -> EfficiencyProfile {
        EfficiencyProfile::new(etas.to_vec()).unwrap()
    }

    #[test]
    fn target_set_validation() {
        assert!(TargetSet::new(vec![], 2).is_err());
        assert!(TargetSet::new(vec![0, 0], 2).is_err());
        assert!(TargetSet::new(vec![2], 2).is_err());
        let t = TargetSet::new(vec![1, 0], 2).unwrap();
        assert_eq!(t.settings(), &[0, 1]);
        assert_eq!(serde_json::to_string(&t).unwrap(), "[1,2]");
        assert!(serde_json::from_str::<TargetSet>("[0]").is_err());
    }

    #[test]
    fn feasibility_examples() {
        let g1 = TargetSet::single(0, 2).unwrap();
        let f = feasible(&profile(&[0.6, 0.3]), &g1).unwrap();
        assert!(f.feasible);
        assert!((f.margin - 0.1).abs() < 1e-15);

        let all = TargetSet::new(vec![0, 1], 2).unwrap();
        let f = feasible(&profile(&[0.5, 0.5]), &all).unwrap();
        assert!(f.feasible);
        assert_eq!(f.margin, 0.0);

        let f = feasible(&profile(&[0.6, 0.6]), &g1).unwrap();
        assert!(!f.feasible);
        assert!((f.margin + 0.2).abs() < 1e-15);
    }

    #[test]
    fn critical_efficiency_examples() {
        assert_eq!(critical_efficiency(1, 2).unwrap(), 0.5);
        assert_eq!(critical_efficiency(3, 3).unwrap(), 1.0 / 3.0);
        assert_eq!(critical_efficiency(2, 5).unwrap(), 1.0 / 3.0);
        assert!(critical_efficiency(0, 2).is_err());
        assert!(critical_efficiency(3, 2).is_err());
    }

    #[test]
    fn plan_examples() {
        let g1 = TargetSet::single(0, 2).unwrap();
        let p = build_plan(&profile(&[0.5, 0.4]), &g1).unwrap();
        assert!((p.tau(1).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(p.tau(0), None);

        let p = build_plan(&profile(&[0.5, 0.5]), &g1).unwrap();
        assert_eq!(p.tau(1), Some(1.0));

        let all = TargetSet::new(vec![0, 1, 2], 3).unwrap();
        let p = build_plan(&profile(&[0.3, 0.3, 0.3]), &all).unwrap();
        assert!(p.taus().iter().all(Option::is_none));
        assert!((p.forward_prob() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn infeasible_plan_carries_margin() {
        let g1 = TargetSet::single(0, 2).unwrap();
        match build_plan(&profile(&[0.6, 0.6]), &g1) {
            Err(Error::Infeasible { margin }) => assert!((margin + 0.2).abs() < 1e-15),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn chsh_at_half_efficiency_is_invisible() {
        let q = chsh_tsirelson();
        let prof = profile(&[0.5, 0.5]);
        let plan = build_plan(&prof, &TargetSet::single(0, 2).unwrap()).unwrap();
        let attacked = induced_behavior(&plan, &q).unwrap();
        let honest = apply_loss_bob(&q, &prof).unwrap();
        assert!(attacked.max_abs_diff(&honest).unwrap() <= 1e-12);
        assert_eq!(guessing_probability(&plan, &q, 0).unwrap(), 1.0);
        assert!(guessing_probability(&plan, &q, 1).unwrap() < 1.0);
    }

    #[test]
    fn deterministic_behavior_is_fully_guessable() {
        let s = Scenario::new(2, 3, 2).unwrap();
        let q = Behavior::from_fn(s, |x, y, a, b| if a == x % 2 && b == (y + 1) % 2 { 1.0 } else { 0.0 }).unwrap();
        let plan = build_plan(&profile(&[0.3, 0.2, 0.5]), &TargetSet::single(1, 3).unwrap()).unwrap();
        let attacked = induced_behavior(&plan, &q).unwrap();
        for y in 0..3 {
            assert_eq!(guessing_probability(&plan, &q, y).unwrap(), 1.0);
            // Click events are deterministic: at most one click outcome carries mass.
            let clicks = (1..3).filter(|&b| attacked.bob_marginal(y)[b] > 0.0).count();
            assert!(clicks <= 1);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let q = chsh_tsirelson();
        let plan = build_plan(&profile(&[0.5, 0.5]), &TargetSet::single(0, 2).unwrap()).unwrap();
        let c = SimulationConfig::new(500, 42);
        let a = simulate_rounds(&plan, &q, &c).unwrap();
        let b = simulate_rounds(&plan, &q, &c).unwrap();
        assert_eq!(a, b);
        let c2 = SimulationConfig::new(500, 43);
        assert_ne!(a, simulate_rounds(&plan, &q, &c2).unwrap());
        for r in &a {
            if r.y == 1 {
                assert_eq!(r.eve_guess_b, r.b as i64);
            }
            assert_eq!(r.eve_guess_a, NOT_APPLICABLE);
        }
    }

    #[test]
    fn configured_setting_weights_are_respected() {
        let q = chsh_tsirelson();
        let plan = build_plan(&profile(&[0.5, 0.5]), &TargetSet::single(0, 2).unwrap()).unwrap();
        let mut c = SimulationConfig::new(200, 1);
        c.bob_weights = Some(vec![0.0, 1.0]);
        let log = simulate_rounds(&plan, &q, &c).unwrap();
        assert!(log.iter().all(|r| r.y == 2));
    }
}
