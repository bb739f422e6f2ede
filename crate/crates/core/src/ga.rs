//! Real-coded genetic algorithm baseline.
//!
//! Each generation is composed of three pools: the best `elite_fraction` of
//! the population copied unchanged, `crossover_fraction` children of
//! arithmetic crossover between binary-tournament parents, and the remaining
//! `mutation_fraction` as Gaussian-mutated tournament winners. Pool sizes are
//! rounded to the nearest integer and whatever is left over goes to the
//! mutation pool.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::optim::{Bounds, Country, Evaluator, Objective, RunTrace, SearchBox, TraceRow};
use crate::rng::{substream, Purpose, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaMode {
    /// Fractions are the composition of the next generation.
    Composition,
    /// Elites as above; every other slot crosses two parents with
    /// probability `crossover_fraction` (else copies the first) and then
    /// mutates with probability `mutation_fraction`.
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub num_generations: usize,
    pub elite_fraction: f64,
    pub crossover_fraction: f64,
    pub mutation_fraction: f64,
    pub per_gene_mutation_prob: f64,
    /// Mutation standard deviation as a fraction of each dimension's width.
    pub mutation_sd_fraction: f64,
    pub bounds: Bounds,
    pub mode: GaMode,
    pub seed: u64,
    pub threads: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 1000,
            num_generations: 200,
            elite_fraction: 0.15,
            crossover_fraction: 0.50,
            mutation_fraction: 0.35,
            per_gene_mutation_prob: 0.02,
            mutation_sd_fraction: 0.1,
            bounds: Bounds::default(),
            mode: GaMode::Composition,
            seed: 0,
            threads: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ga: {m}")));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.num_generations < 1 {
            return bad("num_generations must be at least 1");
        }
        let fractions = [
            self.elite_fraction,
            self.crossover_fraction,
            self.mutation_fraction,
            self.per_gene_mutation_prob,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("fractions and probabilities must lie in [0, 1]");
        }
        let sum = self.elite_fraction + self.crossover_fraction + self.mutation_fraction;
        if (sum - 1.0).abs() > 1e-12 {
            return bad("elite, crossover and mutation fractions must sum to 1");
        }
        if !(self.mutation_sd_fraction >= 0.0 && self.mutation_sd_fraction.is_finite()) {
            return bad("mutation_sd_fraction must be non-negative");
        }
        Ok(())
    }

    /// `(elite, crossover, mutation)` individuals per generation.
    pub fn pool_sizes(&self) -> (usize, usize, usize) {
        let n = self.population_size;
        let round = |f: f64| ((f * n as f64) + 0.5).floor() as usize;
        let mut elite = round(self.elite_fraction).min(n);
        if self.elite_fraction > 0.0 && elite == 0 {
            elite = 1;
        }
        let cross = round(self.crossover_fraction).min(n - elite);
        (elite, cross, n - elite - cross)
    }
}

/// Binary tournament: two uniform draws with replacement, cheaper one wins,
/// ties decided by a fair coin.
pub fn select_parent<'p, R: Rng + ?Sized>(population: &'p [Country], rng: &mut R) -> &'p Country {
    let n = population.len();
    let a = &population[rng.random_range(0..n)];
    let b = &population[rng.random_range(0..n)];
    if a.cost < b.cost {
        a
    } else if b.cost < a.cost {
        b
    } else if rng.random::<bool>() {
        a
    } else {
        b
    }
}

/// Arithmetic crossover with per-gene weights `alpha_i = alpha()`:
/// `child1 = alpha*a + (1-alpha)*b`, `child2 = (1-alpha)*a + alpha*b`.
pub fn crossover_with(
    a: &[f64],
    b: &[f64],
    bounds: &SearchBox,
    mut alpha: impl FnMut() -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "crossover parents have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut c1 = Vec::with_capacity(a.len());
    let mut c2 = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let t = alpha();
        c1.push(t * x + (1.0 - t) * y);
        c2.push((1.0 - t) * x + t * y);
    }
    bounds.clamp(&mut c1);
    bounds.clamp(&mut c2);
    Ok((c1, c2))
}

pub fn crossover<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    bounds: &SearchBox,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    crossover_with(a, b, bounds, || rng.random::<f64>())
}

/// Gaussian mutation. Each gene is perturbed with probability
/// `per_gene_prob` by `N(0, sd_fraction * width)`; if no gene was picked, one
/// uniformly chosen gene is perturbed instead.
pub fn mutate<R: Rng + ?Sized>(
    v: &[f64],
    per_gene_prob: f64,
    sd_fraction: f64,
    bounds: &SearchBox,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = v.to_vec();
    if out.is_empty() {
        return out;
    }
    let perturb = |x: &mut f64, i: usize, rng: &mut R| {
        let sd = sd_fraction * bounds.width(i);
        if sd > 0.0 {
            let noise = Normal::new(0.0, sd).expect("finite positive sd");
            *x += noise.sample(rng);
        }
    };
    let mut touched = false;
    for i in 0..out.len() {
        if rng.random::<f64>() < per_gene_prob {
            perturb(&mut out[i], i, rng);
            touched = true;
        }
    }
    if !touched {
        let i = rng.random_range(0..out.len());
        perturb(&mut out[i], i, rng);
    }
    bounds.clamp(&mut out);
    out
}

fn offspring_rng(config: &GaConfig, generation: usize, slot: usize) -> StreamRng {
    substream(
        config.seed,
        Purpose::GaOffspring,
        generation as u64,
        slot as u64,
    )
}

/// Children produced by one offspring slot of the composition mode.
fn composition_slot(
    config: &GaConfig,
    population: &[Country],
    bounds: &SearchBox,
    generation: usize,
    slot: usize,
    pairs: usize,
) -> Vec<Vec<f64>> {
    let mut rng = offspring_rng(config, generation, slot);
    if slot < pairs {
        let a = select_parent(population, &mut rng);
        let b = select_parent(population, &mut rng);
        let (c1, c2) =
            crossover(&a.position, &b.position, bounds, &mut rng).expect("equal-length parents");
        vec![c1, c2]
    } else {
        let p = select_parent(population, &mut rng);
        vec![mutate(
            &p.position,
            config.per_gene_mutation_prob,
            config.mutation_sd_fraction,
            bounds,
            &mut rng,
        )]
    }
}

fn probabilistic_slot(
    config: &GaConfig,
    population: &[Country],
    bounds: &SearchBox,
    generation: usize,
    slot: usize,
) -> Vec<f64> {
    let mut rng = offspring_rng(config, generation, slot);
    let a = select_parent(population, &mut rng);
    let b = select_parent(population, &mut rng);
    let mut child = if rng.random::<f64>() < config.crossover_fraction {
        crossover(&a.position, &b.position, bounds, &mut rng)
            .expect("equal-length parents")
            .0
    } else {
        a.position.clone()
    };
    if rng.random::<f64>() < config.mutation_fraction {
        child = mutate(
            &child,
            config.per_gene_mutation_prob,
            config.mutation_sd_fraction,
            bounds,
            &mut rng,
        );
    }
    child
}

fn next_positions<O: Objective + ?Sized>(
    config: &GaConfig,
    population: &[Country],
    bounds: &SearchBox,
    generation: usize,
    evaluator: &Evaluator<'_, O>,
) -> Vec<Vec<f64>> {
    let (elite, cross, mutation) = config.pool_sizes();
    match config.mode {
        GaMode::Composition => {
            let pairs = cross.div_ceil(2);
            let slots = pairs + mutation;
            let mut children: Vec<Vec<f64>> = evaluator
                .map_indexed(slots, |k| {
                    composition_slot(config, population, bounds, generation, k, pairs)
                })
                .into_iter()
                .flatten()
                .collect();
            // an odd crossover pool drops the second child of the last pair
            if cross % 2 == 1 {
                children.remove(2 * pairs - 1);
            }
            children
        }
        GaMode::Probabilistic => evaluator.map_indexed(config.population_size - elite, |k| {
            probabilistic_slot(config, population, bounds, generation, k)
        }),
    }
}

fn sort_by_cost(population: &mut [Country]) {
    population.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.id.cmp(&b.id)));
}

/// Hook called with the population after each generation.
pub trait GenerationObserver {
    fn end_of_generation(&mut self, _generation: usize, _population: &[Country]) {}
}

impl GenerationObserver for () {}

pub fn run<O: Objective + ?Sized>(
    config: &GaConfig,
    objective: &O,
    dim: usize,
) -> Result<(Country, RunTrace)> {
    run_observed(config, objective, dim, &mut ())
}

pub fn run_observed<O: Objective + ?Sized, W: GenerationObserver + ?Sized>(
    config: &GaConfig,
    objective: &O,
    dim: usize,
    observer: &mut W,
) -> Result<(Country, RunTrace)> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::Config("ga: dimension must be at least 1".into()));
    }
    let bounds = config.bounds.resolve(dim)?;
    let evaluator = Evaluator::new(objective, config.threads)?;

    let positions: Vec<Vec<f64>> = (0..config.population_size)
        .map(|i| bounds.sample(&mut substream(config.seed, Purpose::GaInit, 0, i as u64)))
        .collect();
    let refs: Vec<&[f64]> = positions.iter().map(|p| p.as_slice()).collect();
    let costs = evaluator.eval_many(&refs)?;
    let mut population: Vec<Country> = positions
        .into_iter()
        .zip(costs)
        .enumerate()
        .map(|(i, (p, c))| Country::new(i, p, c))
        .collect();
    sort_by_cost(&mut population);
    let mut best = population[0].clone();
    let (elite, _, _) = config.pool_sizes();
    let mut rows = Vec::with_capacity(config.num_generations);

    for generation in 1..=config.num_generations {
        let children = next_positions(config, &population, &bounds, generation, &evaluator);
        let refs: Vec<&[f64]> = children.iter().map(|p| p.as_slice()).collect();
        let costs = evaluator.eval_many(&refs)?;

        let mut next: Vec<Country> = population[..elite].to_vec();
        next.extend(
            children
                .into_iter()
                .zip(costs)
                .map(|(p, c)| Country::new(0, p, c)),
        );
        debug_assert_eq!(next.len(), config.population_size);
        for (i, c) in next.iter_mut().enumerate() {
            c.id = i;
        }
        sort_by_cost(&mut next);
        population = next;
        if population[0].cost < best.cost {
            best = population[0].clone();
        }
        observer.end_of_generation(generation, &population);

        rows.push(TraceRow {
            iteration: generation,
            best_cost: best.cost,
            mean_cost: population.iter().map(|c| c.cost).sum::<f64>() / population.len() as f64,
            num_empires: 0,
            objective_calls: evaluator.calls(),
        });
    }

    Ok((best.clone(), RunTrace { rows, best }))
}
