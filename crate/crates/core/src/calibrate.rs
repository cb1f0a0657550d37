//! Grid search over the four genes and derivation of calibration bounds from
//! the best-scoring region.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::TaskDataset;
use crate::error::{Error, Result};
use crate::evolve::WORST_FITNESS;
use crate::genome::{CalibrationBounds, Genome, Interval};
use crate::mlp::{NetConfig, Network};
use crate::rng::{self, stream};

pub const DEFAULT_QUANTILE: f64 = 0.1;

/// Candidate values per gene plus the training length for every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub hidden: Vec<usize>,
    pub rate: Vec<f64>,
    pub momentum: Vec<f64>,
    pub slope: Vec<f64>,
    pub epochs: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.hidden.len() * self.rate.len() * self.momentum.len() * self.slope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in hidden-major order.
    pub fn points(&self) -> Vec<Genome> {
        let mut out = Vec::with_capacity(self.len());
        for &h in &self.hidden {
            for &r in &self.rate {
                for &m in &self.momentum {
                    for &s in &self.slope {
                        out.push(Genome::new(h, r, m, s));
                    }
                }
            }
        }
        out
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredConfig {
    pub genome: Genome,
    /// Validation misclassification percent; 100 for a divergent network.
    pub score: f64,
}

/// Train one network per grid point on the training split and score it on
/// validation. Sorted ascending by score, ties kept in grid order.
pub fn grid_search(data: &TaskDataset, spec: &GridSpec, seed: u64) -> Result<Vec<ScoredConfig>> {
    if spec.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut scored: Vec<ScoredConfig> = spec
        .points()
        .into_par_iter()
        .enumerate()
        .map(|(k, genome)| {
            let config = NetConfig::from_genome(
                &genome,
                data.width(),
                spec.epochs,
                rng::derive_seed(seed, &[stream::GRID, k as u64]),
            );
            let mut net = Network::new(config)?;
            let report = net.train(data.features(), data.labels(), &data.split().train)?;
            let score = if report.divergent {
                WORST_FITNESS
            } else {
                net.evaluate(data.features(), data.labels(), &data.split().validation)?
                    .misclassification_percent()
                    .ok_or(Error::EmptyIndexSet)?
            };
            Ok(ScoredConfig { genome, score })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(scored)
}

fn extent<T: PartialOrd + Copy>(values: impl Iterator<Item = T>) -> Interval<T> {
    let mut it = values;
    let first = it.next().expect("non-empty");
    it.fold(Interval::new(first, first), |acc, v| {
        Interval::new(
            if v < acc.lo { v } else { acc.lo },
            if v > acc.hi { v } else { acc.hi },
        )
    })
}

/// Per-gene `[min, max]` over the best `ceil(q * n)` configurations of an
/// ascending-sorted list.
pub fn derive_bounds(scored: &[ScoredConfig], quantile: f64) -> Result<CalibrationBounds> {
    if scored.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Config(format!("quantile {quantile} outside (0, 1]")));
    }
    let keep = ((quantile * scored.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let best = &scored[..keep.min(scored.len())];
    Ok(CalibrationBounds {
        hidden: extent(best.iter().map(|s| s.genome.hidden)),
        rate: extent(best.iter().map(|s| s.genome.rate)),
        momentum: extent(best.iter().map(|s| s.genome.momentum)),
        slope: extent(best.iter().map(|s| s.genome.slope)),
    })
}
