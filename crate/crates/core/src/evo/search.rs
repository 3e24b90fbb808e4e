use super::{generation_step, EsConfig, EsState};
use crate::env::Environment;
use crate::policy::{auc, pg_train_truncated};
use crate::reward::RewardSource;
use crate::rng::{derive_seed, seeded};
use crate::shaping::Potential;
use crate::Result;

const INIT_STREAM: u64 = 0x9f11;
const INNER_STREAM: u64 = 0x17e2;

/// Final potential of an evolution run and the optimiser state that
/// produced it.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub potential: Potential,
    pub state: EsState,
}

/// Fitness of one potential: AUC of a fresh inner run trained on
/// `base + F_phi`, measured under that same shaped reward.
pub fn shaping_fitness(
    env: &dyn Environment,
    base: &RewardSource,
    potential: Potential,
    config: &EsConfig,
    inner_updates: usize,
    inner_seed: u64,
) -> Result<f64> {
    let reward = RewardSource::shaped(base.clone(), potential);
    let out = pg_train_truncated(env, &reward, &config.inner, inner_seed, None, inner_updates)?;
    auc(&out.curve)
}

/// Evolves a potential for `base` on `env`. Potentials start at zero
/// (tables) or at a small random network, so generation 0 is close to the
/// unshaped baseline.
pub fn evolve_shaping(env: &dyn Environment, base: &RewardSource, config: &EsConfig, seed: u64) -> Result<Evolution> {
    config.validate()?;
    let init = Potential::init(env, &config.potential_hidden, &mut seeded(seed, &[INIT_STREAM]));
    let mut state = EsState::new(init.params().to_vec(), config);
    let fitness = |generation: usize, member: usize, params: &[f64]| -> Result<f64> {
        let updates = config.inner_updates_at(generation);
        let potential = init.with_params(params);
        let mut total = 0.0;
        for rep in 0..config.inner_repeats as u64 {
            let inner_seed = if config.common_inner_seed {
                derive_seed(seed, &[INNER_STREAM, generation as u64, rep])
            } else {
                derive_seed(seed, &[INNER_STREAM, generation as u64, rep, member as u64])
            };
            total += shaping_fitness(env, base, potential.clone(), config, updates, inner_seed)?;
        }
        Ok(-total / config.inner_repeats as f64)
    };
    for _ in 0..config.generations {
        state = generation_step(&state, config, seed, &fitness)?;
    }
    Ok(Evolution {
        potential: init.with_params(&state.theta),
        state,
    })
}
