//! Transfer and baseline experiments, report tables and the end-to-end
//! pipeline.
//!
//! A transfer run retrains every member of a source-evolved population on a
//! target task from fresh weights and averages the confusion counts over
//! members and repeat runs. The baseline does the same for a population of
//! random genomes drawn within the target's own bounds. Both report counts
//! on the validation split, the test split and the full dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::dataio::TaskDataset;
use crate::error::{Error, Result};
use crate::evolve::{self, GenerationStats, Individual, Population, SesAssignment};
use crate::genome::{self, CalibrationBounds};
use crate::mlp::{ConfusionSummary, Metrics};
use crate::relatedness::{self, Pairing, ReferenceHyper, RelatednessMatrix};
use crate::rng::{self, stream};
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub epochs: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub parallel: bool,
}

impl TransferConfig {
    pub fn from_settings(s: &Settings) -> Self {
        Self {
            epochs: s.config.epochs,
            repeats: s.config.repeats,
            master_seed: s.seed,
            parallel: s.parallel,
        }
    }
}

/// Mean confusion counts of one population on one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEvaluation {
    pub target: Task,
    pub validation: ConfusionSummary,
    pub test: ConfusionSummary,
    pub full: ConfusionSummary,
    /// Share of trained networks that diverged.
    pub divergent_fraction: f64,
}

impl TargetEvaluation {
    pub fn validation_error(&self) -> Option<f64> {
        self.validation.misclassification_percent()
    }

    pub fn test_error(&self) -> Option<f64> {
        self.test.misclassification_percent()
    }

    fn check(&self, what: &str) -> Result<()> {
        for (name, s) in [("validation", &self.validation), ("test", &self.test), ("full", &self.full)] {
            let counts = [s.tp, s.tn, s.fp, s.fn_];
            if s.total() <= 0.0 || counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::PartialReport(format!(
                    "{what}: {name} counts for {} are missing or invalid",
                    self.target
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: Task,
    pub population_size: usize,
    pub repeats: usize,
    pub targets: Vec<TargetEvaluation>,
}

impl TransferReport {
    pub fn target(&self, task: Task) -> Option<&TargetEvaluation> {
        self.targets.iter().find(|t| t.target == task)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub population_size: usize,
    pub repeats: usize,
    pub targets: Vec<TargetEvaluation>,
}

impl BaselineReport {
    pub fn target(&self, task: Task) -> Option<&TargetEvaluation> {
        self.targets.iter().find(|t| t.target == task)
    }
}

/// Train every trial on the target's (SES-filtered) training split and
/// average the confusion counts. Divergent networks count as all wrong.
fn evaluate_trials(target: &TaskDataset, trials: &[Individual], epochs: usize, parallel: bool) -> Result<TargetEvaluation> {
    if trials.is_empty() {
        return Err(Error::EmptyPool);
    }
    let split = target.split();
    let all = target.all_indices();
    let run = |ind: &Individual| -> Result<([ConfusionSummary; 3], bool)> {
        let trained = evolve::train_member(ind, target, epochs)?;
        Ok((
            [
                trained.evaluate(target, &split.validation)?,
                trained.evaluate(target, &split.test)?,
                trained.evaluate(target, &all)?,
            ],
            trained.divergent,
        ))
    };
    let outcomes: Vec<([ConfusionSummary; 3], bool)> = if parallel {
        trials.par_iter().map(run).collect::<Result<_>>()?
    } else {
        trials.iter().map(run).collect::<Result<_>>()?
    };
    let mean = |k: usize| ConfusionSummary::mean(outcomes.iter().map(|o| &o.0[k])).expect("non-empty");
    Ok(TargetEvaluation {
        target: target.task,
        validation: mean(0),
        test: mean(1),
        full: mean(2),
        divergent_fraction: outcomes.iter().filter(|o| o.1).count() as f64 / outcomes.len() as f64,
    })
}

/// Retrain the members of a source population on each target and report the
/// mean over members and `repeats` runs.
pub fn run_transfer(
    source: Task,
    population: &Population,
    targets: &[TaskDataset],
    config: &TransferConfig,
) -> Result<TransferReport> {
    if population.is_empty() {
        return Err(Error::EmptyPool);
    }
    if config.repeats == 0 {
        return Err(Error::Config("repeats must be positive".into()));
    }
    let mut evaluations = Vec::with_capacity(targets.len());
    for target in targets {
        let mut trials = Vec::with_capacity(population.len() * config.repeats);
        for r in 0..config.repeats as u64 {
            let base = [source.index(), target.task.index(), r];
            for m in &population.members {
                let at = |label: u64, key: u64| {
                    rng::derive_seed(config.master_seed, &[stream::TRANSFER, label, base[0], base[1], base[2], key])
                };
                trials.push(Individual {
                    ses: Some(SesAssignment::random(at(stream::SES, m.pair_id))),
                    weight_seed: at(stream::WEIGHTS, m.id),
                    fitness: None,
                    divergent: false,
                    ..m.clone()
                });
            }
        }
        evaluations.push(evaluate_trials(target, &trials, config.epochs, config.parallel)?);
    }
    Ok(TransferReport {
        source,
        population_size: population.len(),
        repeats: config.repeats,
        targets: evaluations,
    })
}

/// Random genomes within each target's own bounds, trained once on that
/// target; `pop_size` genomes per repeat.
pub fn run_baseline(targets: &[TaskDataset], pop_size: usize, config: &TransferConfig) -> Result<BaselineReport> {
    if pop_size == 0 || config.repeats == 0 {
        return Err(Error::Config("baseline needs a positive population size and repeat count".into()));
    }
    let mut evaluations = Vec::with_capacity(targets.len());
    for target in targets {
        let bounds = CalibrationBounds::preset(target.task);
        let mut trials = Vec::with_capacity(pop_size * config.repeats);
        for r in 0..config.repeats as u64 {
            for i in 0..pop_size as u64 {
                let seed = rng::derive_seed(config.master_seed, &[stream::BASELINE, target.task.index(), r, i]);
                trials.push(Individual {
                    id: i,
                    genome: genome::random_genome(&bounds, seed),
                    pair_id: i,
                    zygosity: None,
                    sibling: 0,
                    ses: Some(SesAssignment::random(rng::derive_seed(seed, &[stream::SES]))),
                    weight_seed: rng::derive_seed(seed, &[stream::WEIGHTS]),
                    fitness: None,
                    divergent: false,
                });
            }
        }
        evaluations.push(evaluate_trials(target, &trials, config.epochs, config.parallel)?);
    }
    Ok(BaselineReport {
        population_size: pop_size,
        repeats: config.repeats,
        targets: evaluations,
    })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

fn check_targets(targets: &[TargetEvaluation], what: &str) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::PartialReport(format!("{what} has no targets")));
    }
    targets.iter().try_for_each(|t| t.check(what))
}

const METRIC_ROWS: [&str; 7] = ["tp", "tn", "fp", "fn", "precision", "recall", "misclassification"];

fn metric_column(s: &ConfusionSummary) -> [Option<f64>; 7] {
    let m: Metrics = s.metrics();
    [
        Some(s.tp),
        Some(s.tn),
        Some(s.fp),
        Some(s.fn_),
        m.precision_neg,
        m.recall_neg,
        m.misclassification_percent,
    ]
}

type Block<'a> = (&'a str, fn(&TargetEvaluation) -> &ConfusionSummary);

/// `block,metric,<target>...`; one 7-row block per entry of `blocks`.
/// Precision and recall are those of the negative class.
fn metric_table(targets: &[TargetEvaluation], blocks: &[Block]) -> String {
    let mut out = String::from("block,metric");
    for t in targets {
        let _ = write!(out, ",{}", t.target);
    }
    out.push('\n');
    for (block, pick) in blocks {
        let columns: Vec<[Option<f64>; 7]> = targets.iter().map(|t| metric_column(pick(t))).collect();
        for (r, metric) in METRIC_ROWS.iter().enumerate() {
            let _ = write!(out, "{block},{metric}");
            for c in &columns {
                let _ = write!(out, ",{}", fmt_value(c[r]));
            }
            out.push('\n');
        }
    }
    out
}

/// Validation and test blocks over the split-only counts.
pub fn transfer_table(report: &TransferReport) -> String {
    metric_table(&report.targets, &[("validation", |t| &t.validation), ("test", |t| &t.test)])
}

/// Counts accumulated over every instance of each target.
pub fn transfer_full_table(report: &TransferReport) -> String {
    metric_table(&report.targets, &[("full", |t| &t.full)])
}

pub fn baseline_table(report: &BaselineReport) -> String {
    let mut out = String::from("target,validation_error,test_error\n");
    for t in &report.targets {
        let _ = writeln!(out, "{},{},{}", t.target, fmt_value(t.validation_error()), fmt_value(t.test_error()));
    }
    out
}

/// Mean transfer error per target, averaged over every source report that
/// covers it.
pub fn mean_transfer_error(transfers: &[TransferReport], target: Task, test: bool) -> Option<f64> {
    let errors: Vec<f64> = transfers
        .iter()
        .filter_map(|r| r.target(target))
        .filter_map(|t| if test { t.test_error() } else { t.validation_error() })
        .collect();
    (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Long-format comparison: one row per target, method and split.
pub fn benchmark_long(transfers: &[TransferReport], baseline: &BaselineReport) -> Result<String> {
    let mut out = String::from("target,method,split,error\n");
    for b in &baseline.targets {
        for (split, test) in [("validation", false), ("test", true)] {
            let transfer = mean_transfer_error(transfers, b.target, test).ok_or_else(|| {
                Error::PartialReport(format!("no transfer report covers target {}", b.target))
            })?;
            let base = if test { b.test_error() } else { b.validation_error() };
            let _ = writeln!(out, "{},transfer,{split},{transfer}", b.target);
            let _ = writeln!(out, "{},baseline,{split},{}", b.target, fmt_value(base));
        }
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Write the metric tables, the baseline table and the long-format
/// comparison. Reports with missing or invalid counts are rejected before
/// anything is written.
pub fn emit_tables(transfers: &[TransferReport], baseline: Option<&BaselineReport>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if transfers.is_empty() && baseline.is_none() {
        return Err(Error::PartialReport("nothing to emit".into()));
    }
    for r in transfers {
        check_targets(&r.targets, &format!("transfer from {}", r.source))?;
    }
    let long = match baseline {
        Some(b) => {
            check_targets(&b.targets, "baseline")?;
            if transfers.is_empty() {
                None
            } else {
                Some(benchmark_long(transfers, b)?)
            }
        }
        None => None,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for r in transfers {
        written.push(write_file(dir, &format!("table_{}.csv", r.source), &transfer_table(r))?);
        written.push(write_file(dir, &format!("table_{}_full.csv", r.source), &transfer_full_table(r))?);
    }
    if let Some(b) = baseline {
        written.push(write_file(dir, "baseline.csv", &baseline_table(b))?);
    }
    if let Some(long) = long {
        written.push(write_file(dir, "benchmark_long.csv", &long)?);
    }
    Ok(written)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub settings: Settings,
    /// Extra stage arguments, sorted by key.
    pub arguments: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(stage: &str, settings: &Settings) -> Self {
        Self {
            tool: "twinbreed".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage: stage.into(),
            settings: settings.clone(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.arguments.insert(key.into(), value.to_string());
        self
    }
}

pub fn stats_csv(stats: &[GenerationStats]) -> String {
    let mut out = String::from("generation,population,mean_fitness,best_fitness,divergent,mz_offspring,dz_offspring\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.generation, s.population, s.mean_fitness, s.best_fitness, s.divergent, s.mz_offspring, s.dz_offspring
        );
    }
    out
}

/// Source evolution on one task, ending in the merged population.
#[derive(Clone, Debug)]
pub struct SourceRun {
    pub source: Task,
    pub merged: Population,
    pub stats: Vec<GenerationStats>,
}

pub fn evolve_and_merge(data: &TaskDataset, settings: &Settings) -> Result<SourceRun> {
    let config = settings.evolution(data.task);
    let mut run = evolve::evolve_source(data, &config)?;
    let merged = evolve::finalize(&mut run, data, &config)?;
    Ok(SourceRun {
        source: data.task,
        merged,
        stats: run.stats,
    })
}

/// Reference snapshots for every task, then the pairwise matrix.
pub fn run_relatedness(datasets: &[TaskDataset], count: usize, epochs: usize, seed: u64) -> Result<RelatednessMatrix> {
    let mut sets = Vec::with_capacity(datasets.len());
    for d in datasets {
        let hyper = ReferenceHyper::from_bounds(&CalibrationBounds::preset(d.task));
        sets.push((d.task, relatedness::train_reference_nets(d, count, hyper, epochs, seed)?));
    }
    relatedness::relatedness(&sets, Pairing::AllCross)
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub sources: Vec<SourceRun>,
    pub transfers: Vec<TransferReport>,
    pub baseline: BaselineReport,
    pub relatedness: RelatednessMatrix,
}

/// Evolve on every task, transfer each merged population to every task, run
/// the baseline on every task and measure relatedness.
pub fn run_pipeline(datasets: &[TaskDataset], settings: &Settings) -> Result<PipelineOutput> {
    let transfer = TransferConfig::from_settings(settings);
    let mut sources = Vec::with_capacity(datasets.len());
    let mut transfers = Vec::with_capacity(datasets.len());
    for data in datasets {
        log::info!("evolving on {}", data.task);
        let run = evolve_and_merge(data, settings)?;
        log::info!("transferring from {}", data.task);
        transfers.push(run_transfer(data.task, &run.merged, datasets, &transfer)?);
        sources.push(run);
    }
    log::info!("baseline");
    let baseline = run_baseline(datasets, settings.config.pop_size, &transfer)?;
    log::info!("relatedness");
    let relatedness = run_relatedness(datasets, settings.config.reference_nets, settings.config.epochs, settings.seed)?;
    Ok(PipelineOutput {
        sources,
        transfers,
        baseline,
        relatedness,
    })
}

/// Write all pipeline artifacts under `dir`.
pub fn write_pipeline(output: &PipelineOutput, settings: &Settings, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let manifest = dir.join("manifest_run.json");
    write_json(&RunManifest::new("run", settings), &manifest)?;
    written.push(manifest);
    for s in &output.sources {
        let pop = dir.join(format!("population_{}.jsonl", s.source));
        s.merged.write_jsonl(&pop)?;
        written.push(pop);
        written.push(write_file(dir, &format!("stats_{}.csv", s.source), &stats_csv(&s.stats))?);
    }
    for r in &output.transfers {
        let path = dir.join(format!("transfer_{}.json", r.source));
        write_json(r, &path)?;
        written.push(path);
    }
    let path = dir.join("baseline.json");
    write_json(&output.baseline, &path)?;
    written.push(path);
    let path = dir.join("relatedness.csv");
    output.relatedness.write_csv(&path)?;
    written.push(path);
    written.extend(emit_tables(&output.transfers, Some(&output.baseline), dir)?);
    Ok(written)
}

/// Reports found in a run directory: `transfer_<task>.json` and
/// `baseline.json`.
pub fn load_reports(dir: impl AsRef<Path>) -> Result<(Vec<TransferReport>, Option<BaselineReport>)> {
    let dir = dir.as_ref();
    let mut transfers = Vec::new();
    for task in Task::ALL {
        let path = dir.join(format!("transfer_{task}.json"));
        if path.exists() {
            transfers.push(read_json(&path)?);
        }
    }
    let path = dir.join("baseline.json");
    let baseline = if path.exists() { Some(read_json(&path)?) } else { None };
    Ok((transfers, baseline))
}
