use detloss::attack::{
    build_plan, critical_efficiency, feasible, guessing_probability, induced_behavior, simulate_rounds,
};
use detloss::bound::{build_box, certify_bound_randomness, guess_success};
use detloss::channel::{channel_efficiency, max_distance, min_bases, ChannelModel};
use detloss::improved::{
    critical_eta_improved, guessing_probability_improved, induced_joint, simulate_improved_rounds, tune_parameters,
    ImprovedPlan,
};
use detloss::lossy::{apply_loss_bob, apply_loss_both};
use detloss::polytope::{critical_local_eta, is_local};
use detloss::simulation::{summarize, SimulationConfig};
use detloss::Error;
use serde_json::{json, Value};

use crate::input::{load_behavior, profile, target_set};
use crate::report::{emit, write, Failure};
use crate::{AttackArgs, AttackKind, BoundrandArgs, ImprovedArgs, LocaltestArgs, PlanArgs, SimulateArgs};

fn infeasible(message: String, margin: f64) -> Failure {
    Failure {
        code: Failure::INFEASIBLE,
        message,
        details: json!({ "kind": "infeasible", "margin": margin }),
    }
}

fn deviation_check(deviation: f64, tol: f64) -> Result<(), Failure> {
    if deviation > tol {
        return Err(Failure {
            code: Failure::NUMERICAL,
            message: format!("induced table deviates by {deviation:e} (tolerance {tol:e})"),
            details: json!({ "kind": "numerical", "deviation": deviation }),
        });
    }
    Ok(())
}

pub fn attack(a: &AttackArgs) -> u8 {
    emit("attack", a, a.output.out.as_deref(), a.output.timing, || {
        let loaded = load_behavior(&a.behavior)?;
        let q = &loaded.behavior;
        let s = q.scenario();
        let target = target_set(&a.targets, s.m_b)?;
        let profile = profile(&a.eta, s.m_b)?;
        let feasibility = feasible(&profile, &target)?;
        if !feasibility.feasible {
            if a.force {
                return Ok((loaded.source, json!({ "feasibility": feasibility, "plan": null })));
            }
            return Err(infeasible(
                format!("attack infeasible (margin {})", feasibility.margin),
                feasibility.margin,
            ));
        }
        let plan = build_plan(&profile, &target)?;
        let induced = induced_behavior(&plan, q)?;
        let deviation = induced.max_abs_diff(&apply_loss_bob(q, &profile)?)?;
        deviation_check(deviation, a.tol)?;
        let guessing = (0..s.m_b)
            .map(|y| {
                Ok(json!({
                    "setting": y + 1,
                    "targeted": target.contains(y),
                    "probability": guessing_probability(&plan, q, y)?,
                }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let monte_carlo = match a.rounds {
            Some(rounds) => {
                let log = simulate_rounds(&plan, q, &SimulationConfig::new(rounds, a.seed))?;
                Some(summarize(&log, &induced, |y| target.contains(y)))
            }
            None => None,
        };
        Ok((
            loaded.source,
            json!({
                "feasibility": feasibility,
                "plan": plan,
                "deviation": deviation,
                "guessing": guessing,
                "monte_carlo": monte_carlo,
            }),
        ))
    })
}

fn improved_plan(
    m_a: usize,
    m_b: usize,
    target: &detloss::attack::TargetSet,
    eta: Option<f64>,
) -> Result<ImprovedPlan, Error> {
    match eta {
        Some(eta) => ImprovedPlan::new(m_a, m_b, target, eta),
        None => ImprovedPlan::at_critical(m_a, m_b, target),
    }
}

pub fn improved(a: &ImprovedArgs) -> u8 {
    emit("improved", a, a.output.out.as_deref(), a.output.timing, || {
        let loaded = load_behavior(&a.behavior)?;
        let q = &loaded.behavior;
        let s = q.scenario();
        let target = target_set(&a.targets, s.m_b)?;
        let plan = match improved_plan(s.m_a, s.m_b, &target, a.eta) {
            Err(Error::Infeasible { margin }) if a.force => {
                return Ok((loaded.source, json!({ "feasibility": { "feasible": false, "margin": margin }, "plan": null })));
            }
            other => other?,
        };
        let induced = induced_joint(&plan, q)?;
        let deviation = induced.max_abs_diff(&apply_loss_both(q, plan.eta)?)?;
        deviation_check(deviation, a.tol)?;
        let guessing = target
            .settings()
            .iter()
            .map(|&y| Ok(json!({ "setting": y + 1, "probability": guessing_probability_improved(&plan, q, y)? })))
            .collect::<Result<Vec<_>, Error>>()?;
        let monte_carlo = match a.rounds {
            Some(rounds) => {
                let log = simulate_improved_rounds(&plan, q, &SimulationConfig::new(rounds, a.seed))?;
                Some(summarize(&log, &induced, |y| target.contains(y)))
            }
            None => None,
        };
        Ok((
            loaded.source,
            json!({
                "feasibility": { "feasible": true, "margin": plan.eta_crit - plan.eta },
                "plan": plan,
                "deviation": deviation,
                "guessing": guessing,
                "monte_carlo": monte_carlo,
            }),
        ))
    })
}

pub fn boundrand(a: &BoundrandArgs) -> u8 {
    emit("boundrand", a, a.output.out.as_deref(), a.output.timing, || {
        let loaded = load_behavior(&a.behavior)?;
        let q = &loaded.behavior;
        let bx = match build_box(q, a.eta) {
            Err(Error::Infeasible { margin }) if a.force => {
                return Ok((loaded.source, json!({ "feasibility": { "feasible": false, "margin": margin }, "verdict": null })));
            }
            other => other?,
        };
        let guesses = (0..bx.z_count())
            .map(|z| {
                let input = bx.eve_input(z);
                Ok(json!({ "x": input.x + 1, "y": input.y + 1, "success": guess_success(&bx, input)? }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let certificate = certify_bound_randomness(q, a.eta, a.tol)?;
        Ok((
            loaded.source,
            json!({
                "verdict": if certificate.passes { "PASS" } else { "FAIL" },
                "guess_table": guesses,
                "certificate": certificate,
            }),
        ))
    })
}

pub fn localtest(a: &LocaltestArgs) -> u8 {
    emit("localtest", a, a.output.out.as_deref(), a.output.timing, || {
        let loaded = load_behavior(&a.behavior)?;
        let q = &loaded.behavior;
        let tests = a
            .eta
            .iter()
            .map(|&eta| {
                let p = apply_loss_both(q, eta)?;
                let cert = is_local(&p, a.tol)?;
                Ok(json!({
                    "eta": eta,
                    "verdict": if cert.is_local() { "local" } else { "nonlocal" },
                    "violation": cert.violation(),
                    "certificate": cert,
                }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let threshold = match a.threshold {
            Some(width) => Some(critical_local_eta(q, width)?),
            None => None,
        };
        Ok((loaded.source, json!({ "tests": tests, "threshold": threshold })))
    })
}

pub fn plan(a: &PlanArgs) -> u8 {
    emit("plan", a, a.output.out.as_deref(), a.output.timing, || {
        let source = serde_json::to_vec(a).map_err(|e| Failure::input(e.to_string()))?;
        let mut results = serde_json::Map::new();
        if let Some(length) = a.length {
            let model = ChannelModel::new(a.alpha, length)?;
            results.insert("channel_efficiency".into(), json!(channel_efficiency(&model)));
            results.insert("min_bases".into(), json!(min_bases(&model)?));
        }
        if let Some(bases) = a.bases {
            let g = usize::try_from(bases).map_err(|_| Failure::input(format!("too many bases: {bases}")))?;
            results.insert("max_distance".into(), json!(max_distance(a.alpha, bases)?));
            results.insert("primary_threshold".into(), json!(critical_efficiency(g, g + 1)?));
        }
        match (a.m_a, a.g_prime) {
            (Some(m_a), Some(g)) => {
                results.insert("improved_threshold".into(), json!(critical_eta_improved(m_a, g)?));
                results.insert("tuning".into(), json!(tune_parameters(m_a, g)?));
            }
            (None, None) => {}
            _ => return Err(Failure::input("--m-a and --g-prime must be given together".into())),
        }
        if results.is_empty() {
            return Err(Failure::input("nothing to plan: give --length, --bases or --m-a/--g-prime".into()));
        }
        Ok((source, Value::Object(results)))
    })
}

pub fn simulate(a: &SimulateArgs) -> u8 {
    let run = || -> Result<Vec<u8>, Failure> {
        let loaded = load_behavior(&a.behavior)?;
        let q = &loaded.behavior;
        let s = q.scenario();
        let target = target_set(&a.targets, s.m_b)?;
        let config = SimulationConfig::new(a.rounds, a.seed);
        let log = match a.attack {
            AttackKind::Primary => {
                let plan = build_plan(&profile(&a.eta, s.m_b)?, &target)?;
                simulate_rounds(&plan, q, &config)?
            }
            AttackKind::Improved => {
                let [eta] = a.eta[..] else {
                    return Err(Failure::input("the improved attack takes a single efficiency".into()));
                };
                simulate_improved_rounds(&ImprovedPlan::new(s.m_a, s.m_b, &target, eta)?, q, &config)?
            }
        };
        let mut bytes = Vec::new();
        for record in &log {
            serde_json::to_writer(&mut bytes, record).map_err(|e| Failure::input(e.to_string()))?;
            bytes.push(b'\n');
        }
        Ok(bytes)
    };
    match run().and_then(|bytes| write(a.out.as_deref(), &bytes)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("detloss simulate: {}", f.message);
            f.code
        }
    }
}
