//! The dual-population evolutionary loop and selective breeding.
//!
//! Each generation, for each of the two populations: members get fresh SES
//! filters (shared within twin pairs), train from fresh random weights, are
//! scored by misclassification on the fitness split, and the top and
//! median-centred performers are bred into twin pairs. Every pair is split
//! across two halves and halves are recombined so that no population ever
//! holds both members of a pair. After the last generation the two
//! populations are merged into one by breeding without twins.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, SesFilter, TaskDataset, SES_MAX};
use crate::error::{Error, Result};
use crate::genome::{self, CalibrationBounds, Genome, Zygosity, DEFAULT_MUTATION_RATE};
use crate::mlp::{ConfusionSummary, NetConfig, Network};
use crate::rng::{self, stream, Rng};

/// Fitness charged to a divergent network.
pub const WORST_FITNESS: f64 = 100.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessSplit {
    #[default]
    Test,
    Validation,
}

/// Environment draw shared by both members of a twin pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SesAssignment {
    pub fraction: f64,
    pub seed: u64,
}

impl SesAssignment {
    pub fn random(seed: u64) -> Self {
        let mut rng = rng::rng_from(seed);
        Self {
            fraction: rng.gen_range(0.0..=SES_MAX),
            seed: rng.gen(),
        }
    }

    pub fn filter(&self, data: &TaskDataset) -> Result<SesFilter> {
        SesFilter::draw(data, self.fraction, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub pair_id: u64,
    /// `None` for individuals without a twin.
    pub zygosity: Option<Zygosity>,
    /// 0 or 1 within the pair.
    pub sibling: u8,
    pub ses: Option<SesAssignment>,
    pub weight_seed: u64,
    pub fitness: Option<f64>,
    pub divergent: bool,
}

impl Individual {
    fn singleton(id: u64, pair_id: u64, genome: Genome, weight_seed: u64) -> Self {
        Self {
            id,
            genome,
            pair_id,
            zygosity: None,
            sibling: 0,
            ses: None,
            weight_seed,
            fitness: None,
            divergent: false,
        }
    }

    pub fn net_config(&self, input_dim: usize, epochs: usize) -> NetConfig {
        NetConfig::from_genome(&self.genome, input_dim, epochs, self.weight_seed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// No two members may belong to the same pair.
    pub fn check_twin_separation(&self) -> Result<()> {
        let mut seen = HashMap::with_capacity(self.members.len());
        for m in &self.members {
            if let Some(other) = seen.insert(m.pair_id, m.id) {
                return Err(Error::Config(format!(
                    "members {other} and {} of pair {} share a population",
                    m.id, m.pair_id
                )));
            }
        }
        Ok(())
    }

    pub fn fitness(&self) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.fitness.ok_or(Error::Untrained(m.id)))
            .collect()
    }

    pub fn mean_fitness(&self) -> Option<f64> {
        let f = self.fitness().ok()?;
        (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.fitness().ok()?.into_iter().reduce(f64::min)
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for m in &self.members {
            serde_json::to_writer(&mut out, m)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>, generation: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut members = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                members.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { members, generation })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub epochs: usize,
    pub top_fraction: f64,
    pub mid_fraction: f64,
    pub mutation_rate: f64,
    pub bounds: CalibrationBounds,
    pub master_seed: u64,
    pub fitness_split: FitnessSplit,
    /// Train members on the rayon pool; results do not depend on it.
    pub parallel: bool,
}

impl EvolutionConfig {
    pub const FULL_POP_SIZE: usize = 1200;
    pub const FULL_GENERATIONS: usize = 20;
    pub const FULL_EPOCHS: usize = 1000;

    pub fn new(bounds: CalibrationBounds, master_seed: u64) -> Self {
        Self {
            pop_size: Self::FULL_POP_SIZE,
            generations: Self::FULL_GENERATIONS,
            epochs: Self::FULL_EPOCHS,
            top_fraction: 1.0 / 6.0,
            mid_fraction: 1.0 / 6.0,
            mutation_rate: DEFAULT_MUTATION_RATE,
            bounds,
            master_seed,
            fitness_split: FitnessSplit::Test,
            parallel: true,
        }
    }

    /// Small preset: 40 individuals, 5 generations, 100 epochs.
    pub fn desk(bounds: CalibrationBounds, master_seed: u64) -> Self {
        Self {
            pop_size: 40,
            generations: 5,
            epochs: 100,
            ..Self::new(bounds, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size == 0 || self.pop_size % 4 != 0 {
            return Err(Error::Config(format!(
                "population size {} must be a positive multiple of 4",
                self.pop_size
            )));
        }
        for (name, f) in [("top_fraction", self.top_fraction), ("mid_fraction", self.mid_fraction)] {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::Config(format!("{name} = {f} outside (0, 0.5]")));
            }
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!("mutation_rate = {} outside [0, 1]", self.mutation_rate)));
        }
        selection_windows(self.pop_size, self.top_fraction, self.mid_fraction)?;
        self.bounds.validate()
    }
}

/// Sequential id source shared by both populations of a run.
#[derive(Clone, Debug)]
pub struct IdAllocator {
    next_member: u64,
    next_pair: u64,
}

impl IdAllocator {
    pub fn new() -> Self {
        Self {
            next_member: 0,
            next_pair: 0,
        }
    }

    /// Continue after every id already used in `populations`.
    pub fn after(populations: &[&Population]) -> Self {
        let mut ids = Self::new();
        for m in populations.iter().flat_map(|p| &p.members) {
            ids.next_member = ids.next_member.max(m.id + 1);
            ids.next_pair = ids.next_pair.max(m.pair_id + 1);
        }
        ids
    }

    pub fn member(&mut self) -> u64 {
        self.next_member += 1;
        self.next_member - 1
    }

    pub fn pair(&mut self) -> u64 {
        self.next_pair += 1;
        self.next_pair - 1
    }
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self::new()
    }
}

/// Two populations of `pop_size` random genomes, each member its own pair.
pub fn init_populations(config: &EvolutionConfig) -> Result<(Population, Population)> {
    config.validate()?;
    let mut ids = IdAllocator::new();
    let mut make = |p: u64| Population {
        members: (0..config.pop_size as u64)
            .map(|i| {
                let id = ids.member();
                let genome = genome::random_genome(
                    &config.bounds,
                    rng::derive_seed(config.master_seed, &[stream::INIT_GENOME, p, i]),
                );
                let weight_seed = rng::derive_seed(config.master_seed, &[stream::WEIGHTS, id]);
                Individual::singleton(id, ids.pair(), genome, weight_seed)
            })
            .collect(),
        generation: 0,
    };
    let a = make(0);
    let b = make(1);
    Ok((a, b))
}

/// Give every pair a fresh SES draw keyed by (generation, pair id), so twins
/// living in different populations still share one environment.
pub fn assign_ses(pop: &mut Population, master_seed: u64, generation: usize) {
    for m in &mut pop.members {
        m.ses = Some(SesAssignment::random(rng::derive_seed(
            master_seed,
            &[stream::SES, generation as u64, m.pair_id],
        )));
    }
}

/// A member after training. A divergent network is kept for inspection but
/// must not be used for prediction.
#[derive(Clone, Debug)]
pub struct TrainedMember {
    pub id: u64,
    pub network: Network,
    pub divergent: bool,
}

impl TrainedMember {
    /// Confusion counts, with every prediction counted wrong when divergent.
    pub fn evaluate(&self, data: &TaskDataset, indices: &[usize]) -> Result<ConfusionSummary> {
        if self.divergent {
            if indices.is_empty() {
                return Err(Error::EmptyIndexSet);
            }
            Ok(ConfusionSummary::all_wrong(data.labels(), indices))
        } else {
            self.network.evaluate(data.features(), data.labels(), indices)
        }
    }
}

/// Train one individual from its own weight seed on its SES-filtered
/// training split.
pub fn train_member(ind: &Individual, data: &TaskDataset, epochs: usize) -> Result<TrainedMember> {
    let filter = match &ind.ses {
        Some(s) => s.filter(data)?,
        None => SesFilter::none(),
    };
    let indices = dataio::apply_ses(data, &filter)?;
    let mut network = Network::new(ind.net_config(data.width(), epochs))?;
    let report = network.train(data.features(), data.labels(), &indices)?;
    Ok(TrainedMember {
        id: ind.id,
        network,
        divergent: report.divergent,
    })
}

pub fn train_population(pop: &Population, data: &TaskDataset, epochs: usize, parallel: bool) -> Result<Vec<TrainedMember>> {
    if parallel {
        pop.members.par_iter().map(|m| train_member(m, data, epochs)).collect()
    } else {
        pop.members.iter().map(|m| train_member(m, data, epochs)).collect()
    }
}

fn split_indices(data: &TaskDataset, split: FitnessSplit) -> &[usize] {
    match split {
        FitnessSplit::Test => &data.split().test,
        FitnessSplit::Validation => &data.split().validation,
    }
}

/// Score trained members by misclassification percent on the fitness split
/// (lower is better) and record it on the population.
pub fn assess(pop: &mut Population, trained: &[TrainedMember], data: &TaskDataset, split: FitnessSplit) -> Result<Vec<f64>> {
    let by_id: HashMap<u64, &TrainedMember> = trained.iter().map(|t| (t.id, t)).collect();
    let indices = split_indices(data, split);
    let mut fitness = Vec::with_capacity(pop.len());
    for m in &mut pop.members {
        let t = by_id.get(&m.id).ok_or(Error::Untrained(m.id))?;
        let f = if t.divergent {
            WORST_FITNESS
        } else {
            t.evaluate(data, indices)?
                .misclassification_percent()
                .ok_or(Error::EmptyIndexSet)?
        };
        m.fitness = Some(f);
        m.divergent = t.divergent;
        fitness.push(f);
    }
    Ok(fitness)
}

pub fn train_and_assess(pop: &mut Population, data: &TaskDataset, config: &EvolutionConfig) -> Result<Vec<f64>> {
    let trained = train_population(pop, data, config.epochs, config.parallel)?;
    assess(pop, &trained, data, config.fitness_split)
}

fn fraction_count(n: usize, fraction: f64) -> usize {
    // tolerate representation error such as 12 * (1/6) = 2.0000000000000004
    ((n as f64 * fraction) - 1e-9).ceil().max(0.0) as usize
}

/// `(top count, mid start, mid count)` for a population of `n`.
fn selection_windows(n: usize, top_fraction: f64, mid_fraction: f64) -> Result<(usize, usize, usize)> {
    let top = fraction_count(n, top_fraction).max(1);
    let mid = fraction_count(n, mid_fraction).max(1);
    let mid_start = (n / 2).saturating_sub(mid / 2);
    if mid_start < top || mid_start + mid > n {
        return Err(Error::OverlappingSelection { top, mid_start });
    }
    Ok((top, mid_start, mid))
}

/// Rank by ascending fitness (ties by lower id); take the first
/// `ceil(n * top_fraction)` ranks and `ceil(n * mid_fraction)` ranks centred
/// on the median.
pub fn select_for_mating(
    pop: &Population,
    fitness: &[f64],
    top_fraction: f64,
    mid_fraction: f64,
) -> Result<(Vec<Individual>, Vec<Individual>)> {
    if fitness.len() != pop.len() {
        return Err(Error::SizeMismatch(format!(
            "{} fitness values for {} members",
            fitness.len(),
            pop.len()
        )));
    }
    let (top_n, mid_start, mid_n) = selection_windows(pop.len(), top_fraction, mid_fraction)?;
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[a]
            .total_cmp(&fitness[b])
            .then(pop.members[a].id.cmp(&pop.members[b].id))
    });
    let pick = |range: std::ops::Range<usize>| -> Vec<Individual> {
        order[range].iter().map(|&i| pop.members[i].clone()).collect()
    };
    Ok((pick(0..top_n), pick(mid_start..mid_start + mid_n)))
}

/// Shuffled draw-without-replacement over a pool, reshuffled when exhausted.
struct Deck<'a> {
    pool: &'a [Individual],
    order: Vec<usize>,
}

impl<'a> Deck<'a> {
    fn new(pool: &'a [Individual]) -> Self {
        Self { pool, order: Vec::new() }
    }

    fn draw(&mut self, rng: &mut Rng) -> usize {
        if self.order.is_empty() {
            self.order = (0..self.pool.len()).collect();
            self.order.shuffle(rng);
        }
        self.order.pop().expect("pool is non-empty")
    }

    /// Two members, distinct whenever the pool has more than one.
    fn draw_pair(&mut self, rng: &mut Rng) -> (&'a Individual, &'a Individual) {
        let a = self.draw(rng);
        let mut b = self.draw(rng);
        while b == a && self.pool.len() > 1 {
            b = self.draw(rng);
        }
        (&self.pool[a], &self.pool[b])
    }
}

/// Number of parent pairs for top x top, top x mid and mid x mid, as even as
/// possible with the remainder going to the groups in that order.
pub fn group_sizes(pairs: usize) -> [usize; 3] {
    let base = pairs / 3;
    let rem = pairs % 3;
    [base + usize::from(rem > 0), base + usize::from(rem > 1), base]
}

fn parent_pairs<'a>(top: &'a [Individual], mid: &'a [Individual], pairs: usize, rng: &mut Rng) -> Vec<(&'a Individual, &'a Individual)> {
    let [tt, tm, mm] = group_sizes(pairs);
    let mut out = Vec::with_capacity(pairs);
    let mut deck = Deck::new(top);
    out.extend((0..tt).map(|_| deck.draw_pair(rng)));
    let mut top_deck = Deck::new(top);
    let mut mid_deck = Deck::new(mid);
    out.extend((0..tm).map(|_| (&top[top_deck.draw(rng)], &mid[mid_deck.draw(rng)])));
    let mut deck = Deck::new(mid);
    out.extend((0..mm).map(|_| deck.draw_pair(rng)));
    out
}

/// Selective breeding: `n / 4` parent pairs spread over the three groups,
/// each producing one MZ and one DZ twin pair.
pub fn breed(
    top: &[Individual],
    mid: &[Individual],
    bounds: &CalibrationBounds,
    n: usize,
    mutation_rate: f64,
    seed: u64,
    ids: &mut IdAllocator,
) -> Result<Vec<Individual>> {
    if top.is_empty() || mid.is_empty() {
        return Err(Error::EmptyPool);
    }
    if n % 4 != 0 {
        return Err(Error::Config(format!("offspring count {n} must be a multiple of 4")));
    }
    let mut rng = rng::rng_from(seed);
    let parents = parent_pairs(top, mid, n / 4, &mut rng);
    let mut offspring = Vec::with_capacity(n);
    for (k, (pa, pb)) in parents.into_iter().enumerate() {
        for (z, zygosity) in [Zygosity::Mz, Zygosity::Dz].into_iter().enumerate() {
            let pair_id = ids.pair();
            let twins = genome::make_twins(
                &pa.genome,
                &pb.genome,
                zygosity,
                bounds,
                mutation_rate,
                pair_id,
                rng::derive_seed(seed, &[k as u64, z as u64]),
            );
            for (sibling, g) in [twins.genome_a, twins.genome_b].into_iter().enumerate() {
                let id = ids.member();
                offspring.push(Individual {
                    id,
                    genome: g,
                    pair_id,
                    zygosity: Some(zygosity),
                    sibling: sibling as u8,
                    ses: None,
                    weight_seed: rng::derive_seed(seed, &[stream::WEIGHTS, id]),
                    fitness: None,
                    divergent: false,
                });
            }
        }
    }
    Ok(offspring)
}

/// Sibling 0 of every pair to the first half, sibling 1 to the second.
pub fn split(offspring: Vec<Individual>) -> Result<(Vec<Individual>, Vec<Individual>)> {
    let mut count: HashMap<u64, [u8; 2]> = HashMap::new();
    for m in &offspring {
        let c = count.entry(m.pair_id).or_default();
        c[usize::from(m.sibling.min(1))] += 1;
    }
    if let Some(m) = offspring.iter().find(|m| count[&m.pair_id] != [1, 1]) {
        return Err(Error::Unpaired(m.id));
    }
    Ok(offspring.into_iter().partition(|m| m.sibling == 0))
}

/// `(a1 + b1, a2 + b2)`: each pair ends up with one member in each population.
pub fn combine(
    a1: Vec<Individual>,
    a2: Vec<Individual>,
    b1: Vec<Individual>,
    b2: Vec<Individual>,
    generation: usize,
) -> Result<(Population, Population)> {
    let sizes = [a1.len(), a2.len(), b1.len(), b2.len()];
    if sizes.iter().any(|&s| s != sizes[0]) {
        return Err(Error::SizeMismatch(format!("half populations of sizes {sizes:?}")));
    }
    let first = Population {
        members: a1.into_iter().chain(b1).collect(),
        generation,
    };
    let second = Population {
        members: a2.into_iter().chain(b2).collect(),
        generation,
    };
    first.check_twin_separation()?;
    second.check_twin_separation()?;
    Ok((first, second))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub population: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    pub divergent: usize,
    pub mz_offspring: usize,
    pub dz_offspring: usize,
}

/// What the observer of [`evolve_source_with`] sees after each generation.
pub struct GenerationRecord<'a> {
    pub generation: usize,
    /// Assessed parents, before breeding.
    pub assessed: [&'a Population; 2],
    pub offspring: [&'a [Individual]; 2],
    /// The recombined populations entering the next generation.
    pub next: [&'a Population; 2],
}

#[derive(Clone, Debug)]
pub struct EvolutionRun {
    pub populations: (Population, Population),
    pub stats: Vec<GenerationStats>,
}

pub fn evolve_source(data: &TaskDataset, config: &EvolutionConfig) -> Result<EvolutionRun> {
    evolve_source_with(data, config, |_| {})
}

pub fn evolve_source_with(
    data: &TaskDataset,
    config: &EvolutionConfig,
    mut observer: impl FnMut(&GenerationRecord<'_>),
) -> Result<EvolutionRun> {
    let (mut a, mut b) = init_populations(config)?;
    let mut ids = IdAllocator::after(&[&a, &b]);
    let mut stats = Vec::new();
    for generation in 0..config.generations {
        let mut halves = Vec::with_capacity(2);
        let mut offspring_sets = Vec::with_capacity(2);
        for (p, pop) in [&mut a, &mut b].into_iter().enumerate() {
            assign_ses(pop, config.master_seed, generation);
            let fitness = train_and_assess(pop, data, config)?;
            let (top, mid) = select_for_mating(pop, &fitness, config.top_fraction, config.mid_fraction)?;
            let offspring = breed(
                &top,
                &mid,
                &config.bounds,
                config.pop_size,
                config.mutation_rate,
                rng::derive_seed(config.master_seed, &[stream::BREED, generation as u64, p as u64]),
                &mut ids,
            )?;
            let count = |z| offspring.iter().filter(|m| m.zygosity == Some(z)).count();
            stats.push(GenerationStats {
                generation,
                population: p,
                mean_fitness: pop.mean_fitness().unwrap_or(f64::NAN),
                best_fitness: pop.best_fitness().unwrap_or(f64::NAN),
                divergent: pop.members.iter().filter(|m| m.divergent).count(),
                mz_offspring: count(Zygosity::Mz),
                dz_offspring: count(Zygosity::Dz),
            });
            log::debug!(
                "generation {generation} population {p}: mean {:.3} best {:.3}",
                stats.last().unwrap().mean_fitness,
                stats.last().unwrap().best_fitness
            );
            offspring_sets.push(offspring.clone());
            halves.push(split(offspring)?);
        }
        let (b1, b2) = halves.pop().expect("two populations");
        let (a1, a2) = halves.pop().expect("two populations");
        let (next_a, next_b) = combine(a1, a2, b1, b2, generation + 1)?;
        observer(&GenerationRecord {
            generation,
            assessed: [&a, &b],
            offspring: [&offspring_sets[0], &offspring_sets[1]],
            next: [&next_a, &next_b],
        });
        a = next_a;
        b = next_b;
    }
    Ok(EvolutionRun {
        populations: (a, b),
        stats,
    })
}

/// Merge two assessed populations into one of the same size: select over the
/// pooled members, form `n / 2` parent pairs and give each pair two
/// independent, non-twin offspring.
pub fn merge_final(pop_a: &Population, pop_b: &Population, config: &EvolutionConfig) -> Result<Population> {
    if pop_a.len() != config.pop_size || pop_b.len() != config.pop_size {
        return Err(Error::SizeMismatch(format!(
            "merging populations of {} and {} with configured size {}",
            pop_a.len(),
            pop_b.len(),
            config.pop_size
        )));
    }
    let pooled = Population {
        members: pop_a.members.iter().chain(&pop_b.members).cloned().collect(),
        generation: pop_a.generation.max(pop_b.generation),
    };
    let fitness = pooled.fitness()?;
    let (top, mid) = select_for_mating(&pooled, &fitness, config.top_fraction, config.mid_fraction)?;
    let seed = rng::derive_seed(config.master_seed, &[stream::MERGE]);
    let mut rng = rng::rng_from(seed);
    let mut ids = IdAllocator::after(&[pop_a, pop_b]);
    let parents = parent_pairs(&top, &mid, config.pop_size / 2, &mut rng);
    let mut members = Vec::with_capacity(config.pop_size);
    for (pa, pb) in parents {
        for _ in 0..2 {
            let g = genome::offspring(&pa.genome, &pb.genome, &config.bounds, config.mutation_rate, &mut rng);
            let id = ids.member();
            members.push(Individual::singleton(
                id,
                ids.pair(),
                g,
                rng::derive_seed(seed, &[stream::WEIGHTS, id]),
            ));
        }
    }
    Ok(Population {
        members,
        generation: pooled.generation,
    })
}

/// Train and assess both evolved populations, then merge them.
pub fn finalize(run: &mut EvolutionRun, data: &TaskDataset, config: &EvolutionConfig) -> Result<Population> {
    let (a, b) = &mut run.populations;
    let generation = a.generation;
    for pop in [&mut *a, &mut *b] {
        assign_ses(pop, config.master_seed, generation);
        train_and_assess(pop, data, config)?;
    }
    merge_final(a, b, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Task;

    fn individual(id: u64, pair_id: u64, sibling: u8) -> Individual {
        Individual {
            sibling,
            zygosity: Some(Zygosity::Mz),
            ..Individual::singleton(id, pair_id, Genome::new(5, 0.1, 0.01, 1.0), id)
        }
    }

    fn population(n: usize) -> Population {
        Population {
            members: (0..n as u64).map(|i| Individual::singleton(i, i, Genome::new(5, 0.1, 0.01, 1.0), i)).collect(),
            generation: 0,
        }
    }

    fn config(n: usize) -> EvolutionConfig {
        EvolutionConfig {
            pop_size: n,
            ..EvolutionConfig::desk(CalibrationBounds::preset(Task::Banknote), 17)
        }
    }

    #[test]
    fn init_sizes_and_determinism() {
        let cfg = config(8);
        let (a, b) = init_populations(&cfg).unwrap();
        assert_eq!((a.len(), b.len()), (8, 8));
        assert!(a.members.iter().chain(&b.members).all(|m| cfg.bounds.contains(&m.genome)));
        assert_eq!(init_populations(&cfg).unwrap(), (a, b));
        assert!(matches!(init_populations(&config(6)), Err(Error::Config(_))));
    }

    #[test]
    fn selection_windows_for_twelve() {
        let pop = population(12);
        let fitness: Vec<f64> = (1..=12).map(f64::from).collect();
        let (top, mid) = select_for_mating(&pop, &fitness, 1.0 / 6.0, 1.0 / 6.0).unwrap();
        assert_eq!(top.iter().map(|m| m.id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(mid.iter().map(|m| m.id).collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn equal_fitness_breaks_ties_by_id() {
        let mut pop = population(12);
        pop.members.reverse();
        let (top, mid) = select_for_mating(&pop, &[3.0; 12], 1.0 / 6.0, 1.0 / 6.0).unwrap();
        assert_eq!(top.iter().map(|m| m.id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(mid.iter().map(|m| m.id).collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let pop = population(12);
        let fitness = vec![0.0; 12];
        assert!(matches!(
            select_for_mating(&pop, &fitness, 0.5, 0.5),
            Err(Error::OverlappingSelection { .. })
        ));
    }

    #[test]
    fn group_sizes_follow_remainder_rule() {
        assert_eq!(group_sizes(6), [2, 2, 2]);
        assert_eq!(group_sizes(1), [1, 0, 0]);
        assert_eq!(group_sizes(10), [4, 3, 3]);
        assert_eq!(group_sizes(300), [100, 100, 100]);
    }

    #[test]
    fn breed_twenty_four() {
        let pop = population(12);
        let bounds = CalibrationBounds::preset(Task::German);
        let mut ids = IdAllocator::after(&[&pop]);
        let kids = breed(&pop.members[..2], &pop.members[5..7], &bounds, 24, 0.001, 3, &mut ids).unwrap();
        assert_eq!(kids.len(), 24);
        assert_eq!(kids.iter().filter(|k| k.zygosity == Some(Zygosity::Mz)).count(), 12);
        assert_eq!(kids.iter().filter(|k| k.zygosity == Some(Zygosity::Dz)).count(), 12);
        assert!(kids.iter().all(|k| k.id >= 12));
    }

    #[test]
    fn breed_single_pair_uses_top() {
        let pop = population(2);
        let bounds = CalibrationBounds::preset(Task::Banknote);
        let mut ids = IdAllocator::after(&[&pop]);
        let kids = breed(&pop.members[..1], &pop.members[1..], &bounds, 4, 0.0, 3, &mut ids).unwrap();
        // top x top with a single parent: crossover of a genome with itself
        let parent = &pop.members[0].genome;
        assert!(kids.iter().filter(|k| k.zygosity == Some(Zygosity::Mz)).all(|k| k.genome == *parent));
        assert!(kids.iter().all(|k| k.genome.shared_genes(parent) >= 2));
        assert!(matches!(
            breed(&[], &pop.members, &bounds, 4, 0.0, 3, &mut ids),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn split_separates_pairs() {
        let kids: Vec<Individual> = (0..24).map(|i| individual(i, i / 2, (i % 2) as u8)).collect();
        let (a, b) = split(kids).unwrap();
        assert_eq!((a.len(), b.len()), (12, 12));
        let pa = Population { members: a, generation: 1 };
        pa.check_twin_separation().unwrap();
        assert!(split(vec![individual(0, 0, 0)]).is_err());
    }

    #[test]
    fn combine_checks_sizes() {
        let half = |base: u64| -> Vec<Individual> { (0..4).map(|i| individual(base + i, base + i, 0)).collect() };
        let (p, q) = combine(half(0), half(10), half(20), half(30), 1).unwrap();
        assert_eq!((p.len(), q.len()), (8, 8));
        assert!(combine(half(0), half(10), half(20)[..3].to_vec(), half(30), 1).is_err());
    }

    #[test]
    fn ses_is_shared_by_pair() {
        let mut pop = Population {
            members: vec![individual(0, 7, 0), individual(1, 7, 1), individual(2, 8, 0)],
            generation: 0,
        };
        assign_ses(&mut pop, 99, 3);
        assert_eq!(pop.members[0].ses, pop.members[1].ses);
        assert_ne!(pop.members[0].ses, pop.members[2].ses);
        assert!(pop.members.iter().all(|m| m.ses.unwrap().fraction <= SES_MAX));
    }

    #[test]
    fn assess_requires_training() {
        let mut pop = population(4);
        let data = dataio::synthetic_dataset(crate::task::Task::Banknote, 40, 1).unwrap();
        assert!(matches!(
            assess(&mut pop, &[], &data, FitnessSplit::Test),
            Err(Error::Untrained(0))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut pop = population(4);
        assign_ses(&mut pop, 1, 0);
        pop.members[1].fitness = Some(12.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.jsonl");
        pop.write_jsonl(&path).unwrap();
        assert_eq!(Population::read_jsonl(&path, 0).unwrap(), pop);
        let first = std::fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        for key in ["genome", "pair_id", "zygosity", "ses", "fitness"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }
}
