//! OpenAI-ES and the evolution of shaping potentials.

mod es;
mod search;

pub use es::{
    centered_ranks, es_update, estimate_gradient, generation_step, minimize, sample_population, EsConfig,
    EsState, FitnessRecord, FractionSchedule, GenerationStats, Population,
};
pub use search::{evolve_shaping, shaping_fitness, Evolution};
