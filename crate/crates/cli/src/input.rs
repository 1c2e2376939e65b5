//! Loading behaviors and turning raw flags into core types.

use std::fs;

use detloss::attack::TargetSet;
use detloss::lossy::EfficiencyProfile;
use detloss::quantum::{born_behavior, QuantumModel};
use detloss::scenario::{chsh_tsirelson, magic_square, Behavior};
use serde_json::Value;

use crate::report::Failure;

/// Resolved behavior plus the bytes its digest is taken over.
pub struct Loaded {
    pub behavior: Behavior,
    pub source: Vec<u8>,
}

pub fn load_behavior(name: &str) -> Result<Loaded, Failure> {
    let builtin = match name {
        "chsh-tsirelson" => Some(chsh_tsirelson()),
        "magic-square" => Some(magic_square()),
        _ => None,
    };
    if let Some(behavior) = builtin {
        return Ok(Loaded {
            behavior,
            source: name.as_bytes().to_vec(),
        });
    }
    let source = fs::read(name).map_err(|e| Failure::input(format!("cannot read {name}: {e}")))?;
    let value: Value =
        serde_json::from_slice(&source).map_err(|e| Failure::input(format!("{name}: malformed JSON: {e}")))?;
    // Files with a density matrix are quantum models; anything else must be a table.
    let behavior = if value.get("state").is_some() {
        let model: QuantumModel =
            serde_json::from_value(value).map_err(|e| Failure::input(format!("{name}: {e}")))?;
        born_behavior(&model).map_err(Failure::from)?
    } else {
        serde_json::from_value(value).map_err(|e| Failure::input(format!("{name}: {e}")))?
    };
    Ok(Loaded { behavior, source })
}

pub fn target_set(one_based: &[usize], m_b: usize) -> Result<TargetSet, Failure> {
    if one_based.iter().any(|&y| y == 0 || y > m_b) {
        return Err(Failure::input(format!(
            "targets {one_based:?} must lie in 1..={m_b}"
        )));
    }
    TargetSet::new(one_based.iter().map(|y| y - 1).collect(), m_b).map_err(Failure::from)
}

pub fn profile(etas: &[f64], m_b: usize) -> Result<EfficiencyProfile, Failure> {
    match etas {
        [eta] => EfficiencyProfile::uniform(m_b, *eta).map_err(Failure::from),
        _ if etas.len() == m_b => EfficiencyProfile::new(etas.to_vec()).map_err(Failure::from),
        _ => Err(Failure::input(format!(
            "expected 1 or {m_b} efficiencies, got {}",
            etas.len()
        ))),
    }
}
