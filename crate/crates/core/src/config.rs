//! Run configuration: a flat key-value TOML file whose unset keys fall back
//! to full-scale defaults. The master seed has no default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{EvolutionConfig, FitnessSplit};
use crate::genome::{CalibrationBounds, DEFAULT_MUTATION_RATE};
use crate::relatedness::DEFAULT_REPEATS;
use crate::task::Task;

/// Configuration as written in a file. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub pop_size: usize,
    pub generations: usize,
    pub epochs: usize,
    pub top_fraction: f64,
    pub mid_fraction: f64,
    pub mutation_rate: f64,
    /// Repeat runs averaged in transfer and baseline reports.
    pub repeats: usize,
    pub reference_nets: usize,
    pub fitness_split: FitnessSplit,
    pub tasks: Vec<Task>,
    pub data_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            pop_size: EvolutionConfig::FULL_POP_SIZE,
            generations: EvolutionConfig::FULL_GENERATIONS,
            epochs: EvolutionConfig::FULL_EPOCHS,
            top_fraction: 1.0 / 6.0,
            mid_fraction: 1.0 / 6.0,
            mutation_rate: DEFAULT_MUTATION_RATE,
            repeats: 4,
            reference_nets: DEFAULT_REPEATS,
            fitness_split: FitnessSplit::Test,
            tasks: Task::ALL.to_vec(),
            data_dir: None,
        }
    }
}

impl RunConfig {
    /// 40 individuals, 5 generations, 100 epochs, 2 repeats.
    pub fn desk() -> Self {
        Self::default().into_desk()
    }

    pub fn into_desk(self) -> Self {
        Self {
            pop_size: 40,
            generations: 5,
            epochs: 100,
            repeats: 2,
            reference_nets: 2,
            ..self
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fix the seed and check every value.
    pub fn resolve(self) -> Result<Settings> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("seed is required; set `seed` or pass --seed".into()))?;
        if self.repeats == 0 || self.reference_nets == 0 {
            return Err(Error::Config("repeats and reference_nets must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must not be empty".into()));
        }
        let settings = Settings {
            seed,
            config: self,
            parallel: true,
        };
        for &task in &settings.config.tasks {
            settings.evolution(task).validate()?;
        }
        Ok(settings)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// A validated configuration with its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub config: RunConfig,
    pub parallel: bool,
}

impl Settings {
    pub fn evolution(&self, task: Task) -> EvolutionConfig {
        self.evolution_with(CalibrationBounds::preset(task))
    }

    pub fn evolution_with(&self, bounds: CalibrationBounds) -> EvolutionConfig {
        let c = &self.config;
        EvolutionConfig {
            pop_size: c.pop_size,
            generations: c.generations,
            epochs: c.epochs,
            top_fraction: c.top_fraction,
            mid_fraction: c.mid_fraction,
            mutation_rate: c.mutation_rate,
            bounds,
            master_seed: self.seed,
            fitness_split: c.fitness_split,
            parallel: self.parallel,
        }
    }
}
