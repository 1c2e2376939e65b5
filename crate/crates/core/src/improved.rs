//! Two-sided attack that spends Alice's detector inefficiency to raise the
//! efficiency at which Bob's targeted outcomes can be learned.
//!
//! With probability `r` Eve runs the protocol below, otherwise she blanks
//! both detectors. Inside it, with probability `q` she runs the single-party
//! attack on Bob at efficiency `1/|G|′` with Alice untouched; with `1 - q`
//! she fixes the outcome of one uniformly chosen Alice setting `x̄` and
//! pre-decides every Bob outcome from the conditional `Q(b|y, a x̄)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{self, build_plan, sample_attacked_round, AttackPlan, TargetSet};
use crate::lossy::{EfficiencyProfile, LossyBehavior};
use crate::scenario::{conditional_bob, Behavior};
use crate::simulation::{bernoulli, round_rng, sample_index, RoundRecord, SimulationConfig, NOT_APPLICABLE};
use crate::{Error, Result, EXACT_TOL, NO_CLICK};

/// `|G|′ = |G| + 1` when `|G| < M_B`, else `|G|`.
pub fn g_prime(g_size: usize, m_b: usize) -> Result<usize> {
    if g_size == 0 || g_size > m_b {
        return Err(Error::Argument(format!("target size {g_size} must lie in 1..={m_b}")));
    }
    Ok(if g_size < m_b { g_size + 1 } else { g_size })
}

/// `η = (|G|′ + M_A - 2) / (|G|′ M_A - 1)`.
pub fn critical_eta_improved(m_a: usize, g_prime: usize) -> Result<f64> {
    if m_a < 2 || g_prime < 2 {
        return Err(Error::Argument(format!(
            "need m_a >= 2 and g_prime >= 2 (got {m_a}, {g_prime})"
        )));
    }
    let (m, g) = (m_a as f64, g_prime as f64);
    Ok((g + m - 2.0) / (g * m - 1.0))
}

/// Mixing parameters matching the lossy model at the critical efficiency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub eta: f64,
    pub q: f64,
    pub r: f64,
    /// Worst mismatch among the four block equations.
    pub residual: f64,
}

/// Solves `1 - r = (1-η)²` and `r q (1 - 1/|G|′) = η(1-η)`, then checks the
/// remaining two block equations.
pub fn tune_parameters(m_a: usize, g_prime: usize) -> Result<Tuning> {
    let eta = critical_eta_improved(m_a, g_prime)?;
    let (m, g) = (m_a as f64, g_prime as f64);
    let r = 1.0 - (1.0 - eta) * (1.0 - eta);
    let one_click = eta * (1.0 - eta);
    let q = one_click / (r * (1.0 - 1.0 / g));
    let residual = [
        (r * (1.0 - q) * (1.0 - 1.0 / m) - one_click).abs(),
        (r * (q / g + (1.0 - q) / m) - eta * eta).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if residual > EXACT_TOL || !(0.0..=1.0).contains(&q) || !(0.0..=1.0).contains(&r) {
        return Err(Error::Consistency(format!(
            "block equations disagree for m_a={m_a}, g'={g_prime} (residual {residual:e}, q={q}, r={r})"
        )));
    }
    Ok(Tuning { eta, q, r, residual })
}

/// Parameters of the two-sided attack for one scenario and target set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovedPlan {
    pub target: TargetSet,
    pub m_a: usize,
    pub m_b: usize,
    pub g_prime: usize,
    pub eta_crit: f64,
    /// Efficiency reproduced on both sides.
    pub eta: f64,
    pub q_mix: f64,
    pub r_click: f64,
    /// Per-side survival of clicks, `η / η_crit`.
    pub survival: f64,
    #[serde(skip)]
    bob_attack: Option<AttackPlan>,
}

impl ImprovedPlan {
    /// Plan at the critical efficiency.
    pub fn at_critical(m_a: usize, m_b: usize, target: &TargetSet) -> Result<Self> {
        let g = g_prime(target.len(), m_b)?;
        let eta = critical_eta_improved(m_a, g)?;
        Self::new(m_a, m_b, target, eta)
    }

    /// Plan reproducing efficiency `eta ≤ η_crit`, using extra per-side
    /// blanking below the critical point.
    pub fn new(m_a: usize, m_b: usize, target: &TargetSet, eta: f64) -> Result<Self> {
        TargetSet::new(target.settings().to_vec(), m_b)?;
        let g = g_prime(target.len(), m_b)?;
        let tuning = tune_parameters(m_a, g)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Argument(format!("efficiency {eta} outside [0, 1]")));
        }
        if eta > tuning.eta {
            return Err(Error::Infeasible {
                margin: tuning.eta - eta,
            });
        }
        let bob_profile = EfficiencyProfile::uniform(m_b, 1.0 / g as f64)?;
        let bob_attack = build_plan(&bob_profile, target)?;
        Ok(Self {
            target: target.clone(),
            m_a,
            m_b,
            g_prime: g,
            eta_crit: tuning.eta,
            eta,
            q_mix: tuning.q,
            r_click: tuning.r,
            survival: if eta == tuning.eta { 1.0 } else { eta / tuning.eta },
            bob_attack: Some(bob_attack),
        })
    }

    fn bob_attack(&self) -> Result<AttackPlan> {
        match &self.bob_attack {
            Some(p) => Ok(p.clone()),
            None => build_plan(
                &EfficiencyProfile::uniform(self.m_b, 1.0 / self.g_prime as f64)?,
                &self.target,
            ),
        }
    }

    fn check_behavior(&self, q: &Behavior) -> Result<()> {
        let s = q.scenario();
        if s.m_a != self.m_a || s.m_b != self.m_b {
            return Err(Error::Argument(format!(
                "plan is for ({}, {}) settings, behavior has ({}, {})",
                self.m_a, self.m_b, s.m_a, s.m_b
            )));
        }
        Ok(())
    }
}

/// Enumerates `(weight, alice_code, bob_code, eve_guess_of_bob)` before
/// blanking.
fn for_each_unblanked_event(
    plan: &ImprovedPlan,
    bob_attack: &AttackPlan,
    conditionals: &[Vec<Option<Behavior>>],
    q: &Behavior,
    x: usize,
    y: usize,
    mut f: impl FnMut(f64, usize, usize, usize),
) {
    let d = q.scenario().d;
    let primary = plan.r_click * plan.q_mix;
    attack::for_each_event(bob_attack, q, x, y, |w, a, b, g| f(primary * w, a, b, g));

    let reverse = plan.r_click * (1.0 - plan.q_mix) / plan.m_a as f64;
    for (x_fixed, by_outcome) in conditionals.iter().enumerate() {
        let qa = q.alice_marginal(x_fixed);
        for (a_fixed, cond) in by_outcome.iter().enumerate() {
            let Some(cond) = cond else { continue };
            let alice = if x == x_fixed { a_fixed + 1 } else { NO_CLICK };
            for b in 0..d {
                let w = reverse * qa[a_fixed] * cond.prob(0, y, 0, b);
                f(w, alice, b + 1, b + 1);
            }
        }
    }

    f(1.0 - plan.r_click, NO_CLICK, NO_CLICK, NO_CLICK);
}

fn conditionals(q: &Behavior) -> Vec<Vec<Option<Behavior>>> {
    let s = q.scenario();
    (0..s.m_a)
        .map(|x| (0..s.d).map(|a| conditional_bob(q, x, a).ok()).collect())
        .collect()
}

/// Splits an event by independent per-side blanking with survival `s`.
fn blanked(
    s: f64,
    (w, a, b, guess): (f64, usize, usize, usize),
    mut f: impl FnMut(f64, usize, usize, usize),
) {
    let alice: [(usize, f64); 2] = if a == NO_CLICK { [(a, 1.0), (a, 0.0)] } else { [(a, s), (NO_CLICK, 1.0 - s)] };
    let bob: [(usize, usize, f64); 2] = if b == NO_CLICK {
        [(b, guess, 1.0), (b, guess, 0.0)]
    } else {
        // Eve performs the blanking, so she knows Bob saw no click.
        [(b, guess, s), (NO_CLICK, NO_CLICK, 1.0 - s)]
    };
    for (a2, ka) in alice {
        for (b2, g2, kb) in bob {
            let p = w * ka * kb;
            if p != 0.0 {
                f(p, a2, b2, g2);
            }
        }
    }
}

fn for_each_event(
    plan: &ImprovedPlan,
    bob_attack: &AttackPlan,
    conds: &[Vec<Option<Behavior>>],
    q: &Behavior,
    x: usize,
    y: usize,
    mut f: impl FnMut(f64, usize, usize, usize),
) {
    for_each_unblanked_event(plan, bob_attack, conds, q, x, y, |w, a, b, g| {
        blanked(plan.survival, (w, a, b, g), &mut f)
    });
}

/// Joint statistics produced by the two-sided attack.
pub fn induced_joint(plan: &ImprovedPlan, q: &Behavior) -> Result<LossyBehavior> {
    plan.check_behavior(q)?;
    let bob_attack = plan.bob_attack()?;
    let conds = conditionals(q);
    let s = q.scenario();
    let mut t = LossyBehavior::empty_table(s);
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            for_each_event(plan, &bob_attack, &conds, q, x, y, |w, a, b, _| t.add(x, y, a, b, w));
        }
    }
    LossyBehavior::from_table(s, t)
}

/// Probability that Eve's record matches Bob's outcome for setting `y`.
pub fn guessing_probability_improved(plan: &ImprovedPlan, q: &Behavior, y: usize) -> Result<f64> {
    plan.check_behavior(q)?;
    if y >= plan.m_b {
        return Err(Error::Argument(format!("setting {} out of range", y + 1)));
    }
    let bob_attack = plan.bob_attack()?;
    let conds = conditionals(q);
    let mut miss = 0.0;
    for x in 0..plan.m_a {
        for_each_event(plan, &bob_attack, &conds, q, x, y, |w, _, b, g| {
            if g != b {
                miss += w;
            }
        });
    }
    Ok(1.0 - miss / plan.m_a as f64)
}

/// Monte-Carlo realization of the two-sided attack.
pub fn simulate_improved_rounds(
    plan: &ImprovedPlan,
    q: &Behavior,
    config: &SimulationConfig,
) -> Result<Vec<RoundRecord>> {
    plan.check_behavior(q)?;
    let (wa, wb) = config.validate(q.scenario())?;
    let bob_attack = plan.bob_attack()?;
    let d = q.scenario().d;
    let branch_weights = [
        plan.r_click * plan.q_mix,
        plan.r_click * (1.0 - plan.q_mix),
        1.0 - plan.r_click,
    ];
    Ok((0..config.rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = round_rng(config.seed, round);
            let x = sample_index(&mut rng, &wa);
            let y = sample_index(&mut rng, &wb);
            let (mut a, mut b, mut guess_a, mut guess_b, branch) = match sample_index(&mut rng, &branch_weights) {
                0 => {
                    let r = sample_attacked_round(&bob_attack, q, x, y, &mut rng);
                    (r.a, r.b, NOT_APPLICABLE, r.guess_b as i64, format!("primary/{}", r.branch))
                }
                1 => {
                    let x_fixed = sample_index(&mut rng, &vec![1.0; plan.m_a]);
                    let a_fixed = sample_index(&mut rng, &q.alice_marginal(x_fixed));
                    let cond: Vec<f64> = (0..d).map(|b| q.prob(x_fixed, y, a_fixed, b)).collect();
                    let b = sample_index(&mut rng, &cond) + 1;
                    let a = if x == x_fixed { a_fixed + 1 } else { NO_CLICK };
                    (a, b, a as i64, b as i64, format!("reverse:{}", x_fixed + 1))
                }
                _ => (NO_CLICK, NO_CLICK, NO_CLICK as i64, NO_CLICK as i64, "blank".to_string()),
            };
            if a != NO_CLICK && !bernoulli(&mut rng, plan.survival) {
                a = NO_CLICK;
                if guess_a != NOT_APPLICABLE {
                    guess_a = NO_CLICK as i64;
                }
            }
            if b != NO_CLICK && !bernoulli(&mut rng, plan.survival) {
                b = NO_CLICK;
                guess_b = NO_CLICK as i64;
            }
            RoundRecord {
                round,
                x: x + 1,
                y: y + 1,
                a,
                b,
                eve_branch: branch,
                eve_guess_a: guess_a,
                eve_guess_b: guess_b,
            }
        })
        .collect())
}
