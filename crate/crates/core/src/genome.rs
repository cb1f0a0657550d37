//! Hyperparameter genomes and the genetic operators acting on them.
//!
//! A genome carries four genes in a fixed order: hidden nodes, learning rate,
//! momentum and logistic slope. Weights are never inherited.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::task::Task;

pub const GENE_COUNT: usize = 4;
/// Per-gene probability of a uniform redraw.
pub const DEFAULT_MUTATION_RATE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub hidden: usize,
    pub rate: f64,
    pub momentum: f64,
    pub slope: f64,
}

impl Genome {
    pub fn new(hidden: usize, rate: f64, momentum: f64, slope: f64) -> Self {
        Self {
            hidden,
            rate,
            momentum,
            slope,
        }
    }

    pub fn gene_eq(&self, other: &Genome, gene: usize) -> bool {
        match gene {
            0 => self.hidden == other.hidden,
            1 => self.rate == other.rate,
            2 => self.momentum == other.momentum,
            3 => self.slope == other.slope,
            _ => panic!("gene index {gene} out of range"),
        }
    }

    /// Copy gene `gene` from `src`.
    pub fn take_gene(&mut self, src: &Genome, gene: usize) {
        match gene {
            0 => self.hidden = src.hidden,
            1 => self.rate = src.rate,
            2 => self.momentum = src.momentum,
            3 => self.slope = src.slope,
            _ => panic!("gene index {gene} out of range"),
        }
    }

    /// Number of gene positions where `self` and `other` hold equal values.
    pub fn shared_genes(&self, other: &Genome) -> usize {
        (0..GENE_COUNT).filter(|&g| self.gene_eq(other, g)).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: PartialOrd + Copy> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn covers(&self, other: &Interval<T>) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl Interval<usize> {
    fn sample(&self, rng: &mut Rng) -> usize {
        rng.gen_range(self.lo..=self.hi)
    }
}

impl Interval<f64> {
    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.is_point() {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

/// Per-task sampling intervals for each gene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBounds {
    pub hidden: Interval<usize>,
    pub rate: Interval<f64>,
    pub momentum: Interval<f64>,
    pub slope: Interval<f64>,
}

impl CalibrationBounds {
    /// Built-in optimal calibrations for the three tasks.
    pub fn preset(task: Task) -> Self {
        let (h, r, m, s) = match task {
            Task::Australian => ((15, 50), (0.01, 0.2), (0.01, 5.1), (1.0, 4.0)),
            Task::German => ((5, 30), (0.01, 0.4), (0.1, 1.2), (0.8, 2.1)),
            Task::Banknote => ((5, 15), (0.01, 0.15), (0.01, 0.01), (0.01, 1.2)),
        };
        Self {
            hidden: Interval::new(h.0, h.1),
            rate: Interval::new(r.0, r.1),
            momentum: Interval::new(m.0, m.1),
            slope: Interval::new(s.0, s.1),
        }
    }

    /// All genes fixed to `g`.
    pub fn point(g: &Genome) -> Self {
        Self {
            hidden: Interval::new(g.hidden, g.hidden),
            rate: Interval::new(g.rate, g.rate),
            momentum: Interval::new(g.momentum, g.momentum),
            slope: Interval::new(g.slope, g.slope),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden.is_valid()
            && self.hidden.lo > 0
            && self.rate.is_valid()
            && self.rate.lo > 0.0
            && self.momentum.is_valid()
            && self.momentum.lo >= 0.0
            && self.slope.is_valid()
            && self.slope.lo > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid calibration bounds {self:?}")))
        }
    }

    pub fn contains(&self, g: &Genome) -> bool {
        self.hidden.contains(g.hidden)
            && self.rate.contains(g.rate)
            && self.momentum.contains(g.momentum)
            && self.slope.contains(g.slope)
    }

    /// Componentwise interval inclusion.
    pub fn covers(&self, other: &CalibrationBounds) -> bool {
        self.hidden.covers(&other.hidden)
            && self.rate.covers(&other.rate)
            && self.momentum.covers(&other.momentum)
            && self.slope.covers(&other.slope)
    }

    pub fn is_point_gene(&self, gene: usize) -> bool {
        match gene {
            0 => self.hidden.is_point(),
            1 => self.rate.is_point(),
            2 => self.momentum.is_point(),
            3 => self.slope.is_point(),
            _ => panic!("gene index {gene} out of range"),
        }
    }

    /// Redraw gene `gene` of `g` uniformly within its interval.
    fn resample_gene(&self, g: &mut Genome, gene: usize, rng: &mut Rng) {
        match gene {
            0 => g.hidden = self.hidden.sample(rng),
            1 => g.rate = self.rate.sample(rng),
            2 => g.momentum = self.momentum.sample(rng),
            3 => g.slope = self.slope.sample(rng),
            _ => panic!("gene index {gene} out of range"),
        }
    }

    fn sample(&self, rng: &mut Rng) -> Genome {
        Genome {
            hidden: self.hidden.sample(rng),
            rate: self.rate.sample(rng),
            momentum: self.momentum.sample(rng),
            slope: self.slope.sample(rng),
        }
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bounds: Self = serde_json::from_str(&text)?;
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn random_genome(bounds: &CalibrationBounds, seed: u64) -> Genome {
    bounds.sample(&mut rng::rng_from(seed))
}

/// Single-point crossover with the cut after gene `cut - 1`, `cut` in `1..=3`.
pub fn crossover_at(a: &Genome, b: &Genome, cut: usize) -> Genome {
    assert!((1..GENE_COUNT).contains(&cut), "cut point {cut} out of range");
    let mut child = *a;
    for gene in cut..GENE_COUNT {
        child.take_gene(b, gene);
    }
    child
}

/// Single-point crossover with a uniformly drawn cut point.
pub fn crossover(a: &Genome, b: &Genome, seed: u64) -> Genome {
    crossover_rng(a, b, &mut rng::rng_from(seed))
}

fn crossover_rng(a: &Genome, b: &Genome, rng: &mut Rng) -> Genome {
    crossover_at(a, b, rng.gen_range(1..GENE_COUNT))
}

/// Each gene independently redrawn uniformly within bounds with probability `rate`.
pub fn mutate(g: &Genome, bounds: &CalibrationBounds, rate: f64, seed: u64) -> Genome {
    mutate_rng(g, bounds, rate, &mut rng::rng_from(seed))
}

fn mutate_rng(g: &Genome, bounds: &CalibrationBounds, rate: f64, rng: &mut Rng) -> Genome {
    let mut out = *g;
    for gene in 0..GENE_COUNT {
        if rng.gen_bool(rate.clamp(0.0, 1.0)) {
            bounds.resample_gene(&mut out, gene, rng);
        }
    }
    out
}

/// Crossover followed by mutation, the basic reproduction step.
pub fn offspring(a: &Genome, b: &Genome, bounds: &CalibrationBounds, mutation_rate: f64, rng: &mut Rng) -> Genome {
    let child = crossover_rng(a, b, rng);
    mutate_rng(&child, bounds, mutation_rate, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zygosity {
    #[serde(rename = "MZ")]
    Mz,
    #[serde(rename = "DZ")]
    Dz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinPair {
    pub pair_id: u64,
    pub zygosity: Zygosity,
    pub genome_a: Genome,
    pub genome_b: Genome,
    /// Bit `i` set when gene `i` is inherited jointly (DZ pairs only).
    pub shared_mask: Option<u8>,
}

impl TwinPair {
    /// MZ pairs are identical. DZ pairs have a two-bit mask, agree on the
    /// masked genes and differ on the others wherever the bounds leave room.
    pub fn check(&self, bounds: &CalibrationBounds) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("pair {}: {msg}", self.pair_id)));
        match self.zygosity {
            Zygosity::Mz => {
                if self.genome_a != self.genome_b {
                    return fail("MZ twins with different genomes".into());
                }
            }
            Zygosity::Dz => {
                let Some(mask) = self.shared_mask else {
                    return fail("DZ twins without a shared mask".into());
                };
                if mask.count_ones() != 2 || mask >> GENE_COUNT != 0 {
                    return fail(format!("DZ mask {mask:#06b} does not select 2 of 4 genes"));
                }
                for gene in 0..GENE_COUNT {
                    let equal = self.genome_a.gene_eq(&self.genome_b, gene);
                    let shared = mask & (1 << gene) != 0;
                    if shared && !equal {
                        return fail(format!("shared gene {gene} differs"));
                    }
                    if !shared && equal && !bounds.is_point_gene(gene) {
                        return fail(format!("unshared gene {gene} is identical"));
                    }
                }
            }
        }
        if !bounds.contains(&self.genome_a) || !bounds.contains(&self.genome_b) {
            return fail("genome outside bounds".into());
        }
        Ok(())
    }
}

const TWO_OF_FOUR: [u8; 6] = [0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100];

/// Build one twin pair from two parents.
///
/// MZ: one crossover+mutation child, duplicated. DZ: a first child as for MZ;
/// the second child copies a uniformly chosen 2-of-4 subset of the first and
/// takes its other genes from an independent crossover+mutation draw. Where
/// that draw coincides with the first child on an unshared gene, the other
/// parent's gene is used, or failing that a fresh in-bounds value.
pub fn make_twins(
    parent_a: &Genome,
    parent_b: &Genome,
    zygosity: Zygosity,
    bounds: &CalibrationBounds,
    mutation_rate: f64,
    pair_id: u64,
    seed: u64,
) -> TwinPair {
    let mut rng = rng::rng_from(seed);
    let first = offspring(parent_a, parent_b, bounds, mutation_rate, &mut rng);
    match zygosity {
        Zygosity::Mz => TwinPair {
            pair_id,
            zygosity,
            genome_a: first,
            genome_b: first,
            shared_mask: None,
        },
        Zygosity::Dz => {
            let mask = *TWO_OF_FOUR.choose(&mut rng).expect("non-empty");
            let mut second = offspring(parent_a, parent_b, bounds, mutation_rate, &mut rng);
            for gene in 0..GENE_COUNT {
                if mask & (1 << gene) != 0 {
                    second.take_gene(&first, gene);
                    continue;
                }
                if !second.gene_eq(&first, gene) || bounds.is_point_gene(gene) {
                    continue;
                }
                for parent in [parent_a, parent_b] {
                    if !parent.gene_eq(&first, gene) && bounds_allow(bounds, parent, gene) {
                        second.take_gene(parent, gene);
                        break;
                    }
                }
                while second.gene_eq(&first, gene) {
                    bounds.resample_gene(&mut second, gene, &mut rng);
                }
            }
            TwinPair {
                pair_id,
                zygosity,
                genome_a: first,
                genome_b: second,
                shared_mask: Some(mask),
            }
        }
    }
}

fn bounds_allow(bounds: &CalibrationBounds, g: &Genome, gene: usize) -> bool {
    match gene {
        0 => bounds.hidden.contains(g.hidden),
        1 => bounds.rate.contains(g.rate),
        2 => bounds.momentum.contains(g.momentum),
        3 => bounds.slope.contains(g.slope),
        _ => false,
    }
}
