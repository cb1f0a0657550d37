use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use twinbreed::config::{self, RunConfig, Settings};
use twinbreed::experiment::{self, RunManifest, TransferConfig};
use twinbreed::{calibrate, dataio, evolve, genome::CalibrationBounds, Population, Task, TaskDataset};

#[derive(Parser, Debug)]
#[command(name = "twinbreed", version, about = "Twin-structured neuroevolution and cross-task transfer")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Key-value run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Small preset: population 40, 5 generations, 100 epochs, 2 repeats.
    #[arg(long, global = true)]
    desk: bool,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "TWINBREED_JOBS")]
    jobs: Option<usize>,
    /// Directory holding the raw dataset files.
    #[arg(long, global = true, env = "TWINBREED_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode, normalize, pad and split a dataset into a CSV.
    Preprocess {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search hyperparameters and derive calibration bounds.
    Calibrate {
        #[arg(long)]
        task: Task,
        /// JSON grid with candidate lists for hidden, rate, momentum, slope and an epoch count.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = calibrate::DEFAULT_QUANTILE)]
        quantile: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve two twin-structured populations on a source task and merge them.
    Evolve {
        #[arg(long)]
        task: Task,
        #[command(flatten)]
        scale: Scale,
        /// Calibration bounds JSON; defaults to the task's preset.
        #[arg(long)]
        bounds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain a source-evolved population on target tasks.
    Transfer {
        #[arg(long)]
        source: Task,
        #[arg(long, value_delimiter = ',', default_value = "australian,german,banknote")]
        targets: Vec<Task>,
        /// Population checkpoint (JSON lines).
        #[arg(long)]
        pop: PathBuf,
        #[command(flatten)]
        scale: Scale,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a population of random genomes once on each target.
    Baseline {
        #[arg(long, value_delimiter = ',', default_value = "australian,german,banknote")]
        targets: Vec<Task>,
        #[command(flatten)]
        scale: Scale,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances between reference networks trained on each task.
    Relatedness {
        #[arg(long, value_delimiter = ',', default_value = "australian,german,banknote")]
        tasks: Vec<Task>,
        /// Reference networks per task.
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit tables from the transfer and baseline reports in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage on every configured task.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct Scale {
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Repeat runs averaged in reports.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Global {
    fn settings(&self, scale: &Scale) -> Result<Settings> {
        let mut c = match &self.config {
            Some(path) => config::load_config(path)?,
            None => RunConfig::default(),
        };
        if self.desk {
            c = c.into_desk();
        }
        if let Some(seed) = self.seed {
            c.seed = Some(seed);
        }
        c.pop_size = scale.pop_size.unwrap_or(c.pop_size);
        c.generations = scale.generations.unwrap_or(c.generations);
        c.epochs = scale.epochs.unwrap_or(c.epochs);
        c.repeats = scale.repeats.unwrap_or(c.repeats);
        if let Some(dir) = &self.data_dir {
            c.data_dir = Some(dir.clone());
        }
        Ok(c.resolve()?)
    }
}

fn data_dir(settings: &Settings) -> PathBuf {
    settings.config.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"))
}

fn load(settings: &Settings, tasks: &[Task]) -> Result<Vec<TaskDataset>> {
    let dir = data_dir(settings);
    tasks
        .iter()
        .map(|&t| dataio::load_task(t, &dir, settings.seed).with_context(|| format!("loading {t} from {}", dir.display())))
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    experiment::write_json(manifest, dir.join(format!("manifest_{}.json", manifest.stage)))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Preprocess { task, out } => {
            let s = g.settings(&Scale::default())?;
            let data = load(&s, &[task])?.remove(0);
            create_dir(&out)?;
            data.write_csv(out.join(format!("{task}.csv")))?;
            write_manifest(&out, &RunManifest::new("preprocess", &s).with("task", task))?;
        }
        Command::Calibrate { task, grid, quantile, out } => {
            let s = g.settings(&Scale::default())?;
            let data = load(&s, &[task])?.remove(0);
            let spec = calibrate::GridSpec::read_json(&grid)?;
            let scored = calibrate::grid_search(&data, &spec, s.seed)?;
            let bounds = calibrate::derive_bounds(&scored, quantile)?;
            create_dir(&out)?;
            experiment::write_json(&scored, out.join(format!("grid_{task}.json")))?;
            bounds.write_json(out.join(format!("bounds_{task}.json")))?;
            write_manifest(
                &out,
                &RunManifest::new("calibrate", &s)
                    .with("task", task)
                    .with("grid", grid.display())
                    .with("quantile", quantile),
            )?;
            println!("best validation error {:.3}% with {:?}", scored[0].score, scored[0].genome);
        }
        Command::Evolve { task, scale, bounds, out } => {
            let s = g.settings(&scale)?;
            let data = load(&s, &[task])?.remove(0);
            let bounds = match &bounds {
                Some(p) => CalibrationBounds::read_json(p)?,
                None => CalibrationBounds::preset(task),
            };
            let config = s.evolution_with(bounds);
            config.validate()?;
            let mut run = evolve::evolve_source(&data, &config)?;
            let merged = evolve::finalize(&mut run, &data, &config)?;
            create_dir(&out)?;
            run.populations.0.write_jsonl(out.join("population_a.jsonl"))?;
            run.populations.1.write_jsonl(out.join("population_b.jsonl"))?;
            merged.write_jsonl(out.join("population.jsonl"))?;
            std::fs::write(out.join("stats.csv"), experiment::stats_csv(&run.stats))?;
            let mut manifest = RunManifest::new("evolve", &s).with("task", task);
            manifest.arguments.insert("generation".into(), merged.generation.to_string());
            write_manifest(&out, &manifest)?;
        }
        Command::Transfer { source, targets, pop, scale, out } => {
            let s = g.settings(&scale)?;
            let population = Population::read_jsonl(&pop, 0)?;
            if population.is_empty() {
                bail!("population checkpoint {} is empty", pop.display());
            }
            let datasets = load(&s, &targets)?;
            let report = experiment::run_transfer(source, &population, &datasets, &TransferConfig::from_settings(&s))?;
            create_dir(&out)?;
            experiment::write_json(&report, out.join(format!("transfer_{source}.json")))?;
            write_manifest(
                &out,
                &RunManifest::new("transfer", &s)
                    .with("source", source)
                    .with("pop", pop.display()),
            )?;
        }
        Command::Baseline { targets, scale, out } => {
            let s = g.settings(&scale)?;
            let datasets = load(&s, &targets)?;
            let report = experiment::run_baseline(&datasets, s.config.pop_size, &TransferConfig::from_settings(&s))?;
            create_dir(&out)?;
            experiment::write_json(&report, out.join("baseline.json"))?;
            write_manifest(&out, &RunManifest::new("baseline", &s))?;
        }
        Command::Relatedness { tasks, repeats, epochs, out } => {
            let s = g.settings(&Scale::default())?;
            let datasets = load(&s, &tasks)?;
            let count = repeats.unwrap_or(s.config.reference_nets);
            let epochs = epochs.unwrap_or(s.config.epochs);
            let matrix = experiment::run_relatedness(&datasets, count, epochs, s.seed)?;
            create_dir(&out)?;
            matrix.write_csv(out.join("relatedness.csv"))?;
            write_manifest(
                &out,
                &RunManifest::new("relatedness", &s)
                    .with("repeats", count)
                    .with("epochs", epochs),
            )?;
            print!("{}", matrix.to_csv_string());
        }
        Command::Report { input, format, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let (transfers, baseline) = experiment::load_reports(&input)?;
            match format {
                Format::Csv => {
                    for path in experiment::emit_tables(&transfers, baseline.as_ref(), &out)? {
                        println!("{}", path.display());
                    }
                }
                Format::Json => {
                    if transfers.is_empty() && baseline.is_none() {
                        bail!("no reports found in {}", input.display());
                    }
                    create_dir(&out)?;
                    let path = out.join("report.json");
                    let combined = CombinedReport {
                        transfers: &transfers,
                        baseline: baseline.as_ref(),
                    };
                    experiment::write_json(&combined, &path)?;
                    println!("{}", path.display());
                }
            }
        }
        Command::Run { out } => {
            let s = g.settings(&Scale::default())?;
            let datasets = load(&s, &s.config.tasks)?;
            let output = experiment::run_pipeline(&datasets, &s)?;
            for path in experiment::write_pipeline(&output, &s, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CombinedReport<'a> {
    transfers: &'a [experiment::TransferReport],
    baseline: Option<&'a experiment::BaselineReport>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
