#![allow(dead_code)]

use detloss::attack::TargetSet;
use detloss::lossy::EfficiencyProfile;
use detloss::scenario::{Behavior, Scenario};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Random no-signalling behavior: a mixture of deterministic local points,
/// product behaviors and a generalized PR box `b - a ≡ x·y (mod d)`.
pub fn random_behavior(rng: &mut StdRng, s: Scenario) -> Behavior {
    let d = s.d;
    let parts = rng.gen_range(1..=4);
    let mut weights: Vec<f64> = (0..parts + 1).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut table = vec![0.0; s.m_a * s.m_b * d * d];
    let idx = |x: usize, y: usize, a: usize, b: usize| ((x * s.m_b + y) * d + a) * d + b;
    for w in &weights[..parts] {
        if rng.gen_bool(0.5) {
            let fa: Vec<usize> = (0..s.m_a).map(|_| rng.gen_range(0..d)).collect();
            let fb: Vec<usize> = (0..s.m_b).map(|_| rng.gen_range(0..d)).collect();
            for x in 0..s.m_a {
                for y in 0..s.m_b {
                    table[idx(x, y, fa[x], fb[y])] += w;
                }
            }
        } else {
            let pa: Vec<Vec<f64>> = (0..s.m_a).map(|_| simplex_point(rng, d)).collect();
            let pb: Vec<Vec<f64>> = (0..s.m_b).map(|_| simplex_point(rng, d)).collect();
            for x in 0..s.m_a {
                for y in 0..s.m_b {
                    for a in 0..d {
                        for b in 0..d {
                            table[idx(x, y, a, b)] += w * pa[x][a] * pb[y][b];
                        }
                    }
                }
            }
        }
    }
    let w = weights[parts];
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            for a in 0..d {
                let b = (a + x * y) % d;
                table[idx(x, y, a, b)] += w / d as f64;
            }
        }
    }
    Behavior::new(s, table).expect("mixture of no-signalling points is valid")
}

pub fn simplex_point(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -(rng.gen::<f64>().max(1e-300)).ln()).collect();
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

pub fn random_scenario(rng: &mut StdRng, max: usize) -> Scenario {
    Scenario::new(rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(2..=max)).unwrap()
}

/// Random nonempty target set and a feasible profile for it.
pub fn random_feasible_instance(rng: &mut StdRng, m_b: usize) -> (EfficiencyProfile, TargetSet) {
    let size = rng.gen_range(1..=m_b);
    let mut settings: Vec<usize> = (0..m_b).collect();
    for i in (1..settings.len()).rev() {
        settings.swap(i, rng.gen_range(0..=i));
    }
    settings.truncate(size);
    let target = TargetSet::new(settings, m_b).unwrap();
    // Draw η′ for the complement, then split a budget ≤ 1 - η′ over G.
    let eta_prime = if size < m_b { rng.gen_range(0.0..0.9) } else { 0.0 };
    let budget = (1.0 - eta_prime) * rng.gen_range(0.0..=1.0);
    let split = simplex_point(rng, size);
    let mut etas = vec![0.0; m_b];
    let mut k = 0;
    for (y, eta) in etas.iter_mut().enumerate() {
        if target.contains(y) {
            *eta = budget * split[k];
            k += 1;
        } else {
            *eta = rng.gen_range(0.0..=eta_prime);
        }
    }
    (EfficiencyProfile::new(etas).unwrap(), target)
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// CHSH detection threshold for maximally entangled states, `2/(1+√2)`.
pub fn chsh_threshold_oracle() -> f64 {
    2.0 / (1.0 + 2f64.sqrt())
}
