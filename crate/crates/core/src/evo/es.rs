use serde::{Deserialize, Serialize};

use crate::policy::PgConfig;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::{Error, Result};

/// Inner-loop truncation over generations: `start` of the inner updates at
/// generation 0, doubled every `double_every` generations, capped at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionSchedule {
    pub start: f64,
    pub double_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub population_size: usize,
    pub sigma_init: f64,
    pub sigma_decay: f64,
    pub learning_rate: f64,
    pub generations: usize,
    /// Mirrored noise pairs `(eps, -eps)`.
    pub antithetic: bool,
    /// Replace losses by centred ranks in `[-0.5, 0.5]` before the update.
    pub rank_shaping: bool,
    /// Fraction of the inner updates that are run and scored.
    pub fitness_fraction: f64,
    pub fraction_schedule: Option<FractionSchedule>,
    /// All members of a generation share one inner-loop seed (common random
    /// numbers). Off: every member draws its own.
    pub common_inner_seed: bool,
    /// Inner runs averaged per fitness evaluation.
    pub inner_repeats: usize,
    /// Hidden widths of network potentials.
    pub potential_hidden: Vec<usize>,
    /// Inner policy-gradient run; `inner.updates` is `M`.
    pub inner: PgConfig,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            sigma_init: 0.03,
            sigma_decay: 1.0,
            learning_rate: 1e-3,
            generations: 300,
            antithetic: true,
            rank_shaping: true,
            fitness_fraction: 1.0,
            fraction_schedule: None,
            common_inner_seed: false,
            inner_repeats: 1,
            potential_hidden: crate::shaping::DEFAULT_HIDDEN.to_vec(),
            inner: PgConfig::default(),
        }
    }
}

impl EsConfig {
    /// Desk-scale settings for tabular potentials: a small population with
    /// large steps, one inner seed per generation.
    pub fn gridworld() -> Self {
        Self {
            population_size: 16,
            sigma_init: 0.5,
            learning_rate: 0.5,
            generations: 50,
            common_inner_seed: true,
            inner: PgConfig::tabular(),
            ..Self::default()
        }
    }

    /// Desk-scale settings for network potentials on the point mass.
    pub fn point_mass() -> Self {
        Self {
            population_size: 16,
            sigma_init: 0.05,
            learning_rate: 0.02,
            generations: 30,
            fraction_schedule: Some(FractionSchedule {
                start: 0.25,
                double_every: 10,
            }),
            common_inner_seed: true,
            potential_hidden: vec![32, 32],
            inner: PgConfig::point_mass().with_updates(60),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("population_size", "must be at least 1"));
        }
        if self.antithetic && self.population_size % 2 != 0 {
            return Err(Error::config("population_size", "must be even with antithetic sampling"));
        }
        if self.inner_repeats == 0 {
            return Err(Error::config("inner_repeats", "must be at least 1"));
        }
        if !(self.sigma_init > 0.0) {
            return Err(Error::config("sigma_init", "must be positive"));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(Error::config("sigma_decay", "must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.fitness_fraction > 0.0 && self.fitness_fraction <= 1.0) {
            return Err(Error::config("fitness_fraction", "must lie in (0, 1]"));
        }
        if let Some(s) = &self.fraction_schedule {
            if !(s.start > 0.0 && s.start <= 1.0) || s.double_every == 0 {
                return Err(Error::config("fraction_schedule", "start in (0, 1], double_every >= 1"));
            }
        }
        self.inner.validate()
    }

    /// Fraction of the inner run scored at `generation`.
    pub fn fraction_at(&self, generation: usize) -> f64 {
        match &self.fraction_schedule {
            Some(s) => {
                let doublings = (generation / s.double_every).min(60) as i32;
                (s.start * 2f64.powi(doublings)).min(1.0)
            }
            None => self.fitness_fraction,
        }
    }

    /// Inner updates run at `generation`, at least one.
    pub fn inner_updates_at(&self, generation: usize) -> usize {
        let m = self.inner.updates;
        ((self.fraction_at(generation) * m as f64).ceil() as usize).clamp(1.min(m), m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    pub sigma: f64,
}

/// Search distribution state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsState {
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub generation: usize,
    pub fitness_history: Vec<GenerationStats>,
}

impl EsState {
    pub fn new(theta: Vec<f64>, config: &EsConfig) -> Self {
        Self {
            theta,
            sigma: config.sigma_init,
            generation: 0,
            fitness_history: Vec::new(),
        }
    }

    /// Writes `generation,mean_fitness,best_fitness,sigma`.
    pub fn write_history_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "mean_fitness", "best_fitness", "sigma"])?;
        for g in &self.fitness_history {
            w.write_record([
                g.generation.to_string(),
                g.mean_fitness.to_string(),
                g.best_fitness.to_string(),
                g.sigma.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One member's evaluation. `loss` is `-auc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub member: usize,
    pub noise_seed: u64,
    pub loss: f64,
    pub auc: f64,
}

impl FitnessRecord {
    pub fn from_auc(member: usize, noise_seed: u64, auc: f64) -> Self {
        Self {
            member,
            noise_seed,
            loss: -auc,
            auc,
        }
    }
}

/// Noise vectors and perturbed parameters of one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub noise_seed: u64,
    pub noises: Vec<Vec<f64>>,
    pub members: Vec<Vec<f64>>,
}

/// Draws `theta + sigma * eps_i` for every member. With antithetic sampling,
/// odd members mirror the preceding even member.
pub fn sample_population(state: &EsState, config: &EsConfig, seed: u64) -> Population {
    let n = config.population_size;
    let d = state.theta.len();
    let noise_seed = derive_seed(seed, &[state.generation as u64]);
    let mut rng = seeded(noise_seed, &[]);
    let mut noises: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        if config.antithetic && i % 2 == 1 {
            let mirrored = noises[i - 1].iter().map(|e| -e).collect();
            noises.push(mirrored);
        } else {
            noises.push((0..d).map(|_| standard_normal(&mut rng)).collect());
        }
    }
    let members = noises
        .iter()
        .map(|eps| {
            state
                .theta
                .iter()
                .zip(eps)
                .map(|(t, e)| t + state.sigma * e)
                .collect()
        })
        .collect();
    Population {
        noise_seed,
        noises,
        members,
    }
}

/// Centred ranks in `[-0.5, 0.5]`; tied values share their average rank.
pub fn centered_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

fn checked_losses(records: &[FitnessRecord], n: usize) -> Result<Vec<f64>> {
    if records.len() != n {
        return Err(Error::config(
            "records",
            format!("expected {n} fitness records, got {}", records.len()),
        ));
    }
    let mut losses = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for r in records {
        if r.member >= n || seen[r.member] {
            return Err(Error::config("records", format!("bad or duplicate member index {}", r.member)));
        }
        if !r.loss.is_finite() {
            return Err(Error::member(r.member, Error::NonFinite(format!("loss {}", r.loss))));
        }
        seen[r.member] = true;
        losses[r.member] = r.loss;
    }
    Ok(losses)
}

/// `(1 / (N sigma)) sum_i w_i eps_i`, an estimate of the loss gradient,
/// with `w` the raw or rank-transformed losses.
pub fn estimate_gradient(
    state: &EsState,
    config: &EsConfig,
    records: &[FitnessRecord],
    noises: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = noises.len();
    let losses = checked_losses(records, n)?;
    if !(state.sigma > 0.0) {
        return Err(Error::Degenerate(format!("sigma is {}", state.sigma)));
    }
    let weights = if config.rank_shaping {
        centered_ranks(&losses)
    } else {
        losses
    };
    let d = state.theta.len();
    let mut grad = vec![0.0; d];
    for (w, eps) in weights.iter().zip(noises) {
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += w * e;
        }
    }
    let scale = 1.0 / (n as f64 * state.sigma);
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// `theta <- theta - alpha * grad`, then `sigma <- sigma * decay`.
pub fn es_update(state: &EsState, config: &EsConfig, records: &[FitnessRecord], noises: &[Vec<f64>]) -> Result<EsState> {
    let grad = estimate_gradient(state, config, records, noises)?;
    let mut next = state.clone();
    for (t, g) in next.theta.iter_mut().zip(&grad) {
        *t -= config.learning_rate * g;
    }
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.member);
    let fitness: Vec<f64> = sorted.iter().map(|r| -r.loss).collect();
    next.fitness_history.push(GenerationStats {
        generation: state.generation,
        mean_fitness: crate::stats::mean(&fitness),
        best_fitness: fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sigma: state.sigma,
    });
    next.sigma *= config.sigma_decay;
    next.generation += 1;
    Ok(next)
}

/// Runs `config.generations` generations against `loss(member, params)`,
/// evaluating members in parallel.
pub fn minimize<F>(theta: Vec<f64>, config: &EsConfig, seed: u64, loss: F) -> Result<EsState>
where
    F: Fn(usize, usize, &[f64]) -> Result<f64> + Sync + Send,
{
    config.validate()?;
    let mut state = EsState::new(theta, config);
    for _ in 0..config.generations {
        state = generation_step(&state, config, seed, &loss)?;
    }
    Ok(state)
}

/// Samples, evaluates and applies one generation. `loss` receives the
/// generation, the member index and its parameters.
pub fn generation_step<F>(state: &EsState, config: &EsConfig, seed: u64, loss: &F) -> Result<EsState>
where
    F: Fn(usize, usize, &[f64]) -> Result<f64> + Sync + Send,
{
    let pop = sample_population(state, config, seed);
    let gen = state.generation;
    let results = crate::par::map_indexed(pop.members.len(), |i| loss(gen, i, &pop.members[i]));
    let mut records = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let l = r.map_err(|e| Error::member(i, e))?;
        records.push(FitnessRecord {
            member: i,
            noise_seed: pop.noise_seed,
            loss: l,
            auc: -l,
        });
    }
    es_update(state, config, &records, &pop.noises)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(losses: &[f64]) -> Vec<FitnessRecord> {
        losses
            .iter()
            .enumerate()
            .map(|(i, l)| FitnessRecord::from_auc(i, 0, -l))
            .collect()
    }

    #[test]
    fn zero_sigma_gives_identical_members() {
        let cfg = EsConfig::default();
        let mut st = EsState::new(vec![1.0, -2.0, 3.0], &cfg);
        st.sigma = 0.0;
        let pop = sample_population(&st, &cfg, 4);
        assert!(pop.members.iter().all(|m| m == &st.theta));
    }

    #[test]
    fn antithetic_noise_sums_to_zero() {
        let cfg = EsConfig::default();
        let st = EsState::new(vec![0.0; 7], &cfg);
        let pop = sample_population(&st, &cfg, 11);
        for j in 0..7 {
            let s: f64 = pop.noises.iter().map(|e| e[j]).sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn member_spread_matches_sigma() {
        // i.i.d. draws; mirrored pairs halve the effective sample size
        let cfg = EsConfig {
            antithetic: false,
            ..EsConfig::default()
        };
        let st = EsState::new(vec![0.5; 5], &cfg);
        let pop = sample_population(&st, &cfg, 2);
        for j in 0..5 {
            let xs: Vec<f64> = pop.members.iter().map(|m| m[j]).collect();
            let m = crate::stats::mean(&xs);
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            assert!((sd - 0.03).abs() < 0.25 * 0.03, "coordinate {j}: {sd}");
        }
    }

    #[test]
    fn equal_losses_leave_theta_unchanged() {
        for (antithetic, rank_shaping) in [(true, false), (false, true), (true, true)] {
            let cfg = EsConfig {
                antithetic,
                rank_shaping,
                population_size: 8,
                ..EsConfig::default()
            };
            let st = EsState::new(vec![0.3, -0.7], &cfg);
            let pop = sample_population(&st, &cfg, 5);
            let next = es_update(&st, &cfg, &records(&[2.5; 8]), &pop.noises).unwrap();
            assert_eq!(next.theta, st.theta);
        }
    }

    #[test]
    fn non_finite_loss_names_member() {
        let cfg = EsConfig {
            population_size: 4,
            ..EsConfig::default()
        };
        let st = EsState::new(vec![0.0], &cfg);
        let pop = sample_population(&st, &cfg, 0);
        let err = es_update(&st, &cfg, &records(&[1.0, 2.0, f64::NAN, 0.0]), &pop.noises).unwrap_err();
        assert!(matches!(err, Error::Member { member: 2, .. }), "{err}");
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 2.0, 0.0]), vec![0.0, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn fraction_schedule_doubles() {
        let cfg = EsConfig {
            fraction_schedule: Some(FractionSchedule {
                start: 0.2,
                double_every: 10,
            }),
            inner: PgConfig::default().with_updates(50),
            ..EsConfig::default()
        };
        assert_eq!(cfg.inner_updates_at(0), 10);
        assert_eq!(cfg.inner_updates_at(10), 20);
        assert_eq!(cfg.inner_updates_at(20), 40);
        assert_eq!(cfg.inner_updates_at(30), 50);
    }

    proptest! {
        #[test]
        fn constant_shift_invariance(shift in -1e3f64..1e3, losses in prop::collection::vec(-10.0f64..10.0, 6)) {
            for (antithetic, rank_shaping) in [(true, false), (false, true)] {
                let cfg = EsConfig { antithetic, rank_shaping, population_size: 6, ..EsConfig::default() };
                let st = EsState::new(vec![0.1, 0.2, 0.3], &cfg);
                let pop = sample_population(&st, &cfg, 9);
                let a = es_update(&st, &cfg, &records(&losses), &pop.noises).unwrap();
                let shifted: Vec<f64> = losses.iter().map(|l| l + shift).collect();
                let b = es_update(&st, &cfg, &records(&shifted), &pop.noises).unwrap();
                for (x, y) in a.theta.iter().zip(&b.theta) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn record_order_is_irrelevant(losses in prop::collection::vec(-10.0f64..10.0, 8)) {
            let cfg = EsConfig { population_size: 8, ..EsConfig::default() };
            let st = EsState::new(vec![0.0; 4], &cfg);
            let pop = sample_population(&st, &cfg, 1);
            let recs = records(&losses);
            let mut rev = recs.clone();
            rev.reverse();
            let a = estimate_gradient(&st, &cfg, &recs, &pop.noises).unwrap();
            let b = estimate_gradient(&st, &cfg, &rev, &pop.noises).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
