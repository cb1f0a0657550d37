//! Deterministic invariant checks shared by the property tests and the
//! acceptance harness. Each returns a short summary on success.

// negated comparisons in `ensure!` make NaN fail the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinbreed::dataio::{self, SesFilter};
use twinbreed::evolve::{self, EvolutionConfig, Population};
use twinbreed::genome::{self, CalibrationBounds, Genome, Interval};
use twinbreed::mlp::{NetConfig, Network};
use twinbreed::relatedness::{self, Pairing};
use twinbreed::{Task, TaskDataset, Zygosity};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load(task: Task, seed: u64) -> TaskDataset {
    dataio::load_task(task, data_dir(), seed).expect("dataset present under data/")
}

fn flat(g: &twinbreed::mlp::Gradients) -> Vec<f64> {
    g.w1.iter().chain(&g.w2).copied().collect()
}

/// Maximum relative difference between the analytic gradient of one random
/// network and central finite differences of its loss.
pub fn gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NetConfig {
        input_dim: rng.gen_range(1..=6),
        hidden_nodes: rng.gen_range(1..=5),
        learning_rate: 0.1,
        momentum: 0.0,
        logistic_slope: rng.gen_range(0.3..3.0),
        epochs: 0,
        weight_init_seed: rng.gen(),
    };
    let base = Network::new(config.clone()).unwrap();
    // spread weights wider than the init range so units leave the linear regime
    let weights: Vec<f64> = base.weights().iter().map(|w| w * rng.gen_range(1.0..4.0)).collect();
    let net = Network::from_weights(config.clone(), &weights).unwrap();
    let x: Vec<f64> = (0..config.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = rng.gen_range(0..=1u8);
    let analytic = flat(&net.gradient(&x, y).unwrap());
    let eps = 1e-5;
    let mut numeric = Vec::with_capacity(weights.len());
    for k in 0..weights.len() {
        let mut w = weights.clone();
        w[k] = weights[k] + eps;
        let up = Network::from_weights(config.clone(), &w).unwrap().loss(&x, y).unwrap();
        w[k] = weights[k] - eps;
        let down = Network::from_weights(config.clone(), &w).unwrap().loss(&x, y).unwrap();
        numeric.push((up - down) / (2.0 * eps));
    }
    let scale = numeric.iter().chain(&analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-12 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

pub fn gradient_check(nets: u64) -> Check {
    let worst = (0..nets).map(gradient_error).fold(0.0, f64::max);
    ensure!(worst < 1e-4, "max relative gradient error {worst:e} on {nets} nets");
    Ok(format!("{nets} nets, max relative error {worst:.2e}"))
}

/// Twin construction invariants for `pairs` MZ and DZ pairs per task.
pub fn twin_pairs_check(pairs: u64) -> Check {
    for task in Task::ALL {
        let bounds = CalibrationBounds::preset(task);
        for i in 0..pairs {
            let a = genome::random_genome(&bounds, i * 3);
            let b = genome::random_genome(&bounds, i * 3 + 1);
            for z in [Zygosity::Mz, Zygosity::Dz] {
                let pair = genome::make_twins(&a, &b, z, &bounds, 0.001, i, i * 3 + 2);
                pair.check(&bounds).map_err(|e| format!("{task}: {e}"))?;
                let shared = pair.genome_a.shared_genes(&pair.genome_b);
                let points = (0..4).filter(|&g| bounds.is_point_gene(g)).count();
                match z {
                    Zygosity::Mz => ensure!(shared == 4, "{task}: MZ pair shares {shared} genes"),
                    Zygosity::Dz => ensure!(
                        (2..=2 + points).contains(&shared),
                        "{task}: DZ pair shares {shared} genes"
                    ),
                }
            }
        }
    }
    Ok(format!("{} pairs per task", 2 * pairs))
}

/// Genome operators never leave the bounds.
pub fn closure_check(trials: u64) -> Check {
    for task in Task::ALL {
        let bounds = CalibrationBounds::preset(task);
        for i in 0..trials {
            let a = genome::random_genome(&bounds, 2 * i);
            let b = genome::random_genome(&bounds, 2 * i + 1);
            let c = genome::crossover(&a, &b, i);
            let m = genome::mutate(&c, &bounds, 0.5, i);
            for g in [a, b, c, m] {
                ensure!(bounds.contains(&g), "{task}: {g:?} outside bounds");
            }
        }
    }
    Ok(format!("{trials} trials per task"))
}

fn pair_members(pop: &Population) -> HashMap<u64, usize> {
    pop.members.iter().enumerate().map(|(i, m)| (m.pair_id, i)).collect()
}

/// Structural invariants across `generations` generations of a small run on
/// the German task (no point intervals, so DZ twins share exactly 2 genes).
pub fn desk_generations_check(generations: usize, seed: u64) -> Check {
    let data = load(Task::German, seed);
    let config = EvolutionConfig {
        generations,
        epochs: 2,
        ..EvolutionConfig::desk(CalibrationBounds::preset(Task::German), seed)
    };
    let n = config.pop_size;
    let mut failure: Option<String> = None;
    let mut fail = |msg: String| {
        failure.get_or_insert(msg);
    };
    evolve::evolve_source_with(&data, &config, |rec| {
        let g = rec.generation;
        for pop in rec.assessed.iter().chain(&rec.next) {
            if pop.len() != n {
                fail(format!("generation {g}: population of {}", pop.len()));
            }
            if let Err(e) = pop.check_twin_separation() {
                fail(format!("generation {g}: {e}"));
            }
        }
        // both members of a pair see the same environment
        let (a, b) = (rec.assessed[0], rec.assessed[1]);
        let index_b = pair_members(b);
        for m in &a.members {
            if let Some(&j) = index_b.get(&m.pair_id) {
                let (sa, sb) = (m.ses.unwrap(), b.members[j].ses.unwrap());
                let fa = sa.filter(&data).unwrap();
                let fb = sb.filter(&data).unwrap();
                if fa != fb {
                    fail(format!("generation {g}: pair {} has unequal SES", m.pair_id));
                }
            }
        }
        for offspring in rec.offspring {
            let mz = offspring.iter().filter(|m| m.zygosity == Some(Zygosity::Mz)).count();
            if offspring.len() != n || 2 * mz != n {
                fail(format!("generation {g}: {mz} MZ among {} offspring", offspring.len()));
            }
            let mut by_pair: HashMap<u64, Vec<&twinbreed::Individual>> = HashMap::new();
            for m in offspring.iter() {
                by_pair.entry(m.pair_id).or_default().push(m);
            }
            for (pid, members) in by_pair {
                let ok = match (members.as_slice(), members[0].zygosity) {
                    ([x, y], Some(Zygosity::Mz)) => x.genome == y.genome && x.weight_seed != y.weight_seed,
                    ([x, y], Some(Zygosity::Dz)) => x.genome.shared_genes(&y.genome) == 2,
                    _ => false,
                };
                if !ok {
                    fail(format!("generation {g}: pair {pid} breaks its twin invariant"));
                }
            }
        }
        let ids = |p: &Population| p.members.iter().map(|m| m.pair_id).collect::<BTreeSet<_>>();
        if ids(rec.next[0]) != ids(rec.next[1]) {
            fail(format!("generation {g}: recombined populations hold different pairs"));
        }
    })
    .map_err(|e| e.to_string())?;
    match failure {
        Some(msg) => Err(msg),
        None => Ok(format!("{generations} generations of {n}")),
    }
}

/// Split stratification, SES isolation, normalization idempotence and
/// padding on the real datasets.
pub fn dataio_check(seeds: u64) -> Check {
    for task in Task::ALL {
        let raw = dataio::load_dataset(task, data_dir().join(task.file_name())).map_err(|e| e.to_string())?;
        for seed in 0..seeds {
            let data = dataio::preprocess(&raw, dataio::D_COMMON, seed).map_err(|e| e.to_string())?;
            let all = data.class_counts(&data.all_indices());
            let p_all = all[1] as f64 / data.len() as f64;
            let split = data.split();
            for set in [&split.train, &split.validation, &split.test] {
                let c = data.class_counts(set);
                let p = c[1] as f64 / set.len() as f64;
                ensure!(
                    (p - p_all).abs() <= 1.0 / set.len() as f64,
                    "{task}: split class share {p} vs {p_all}"
                );
            }
            let filter = SesFilter::random(&data, seed);
            let expected = (filter.fraction * split.train.len() as f64).round_ties_even() as usize;
            ensure!(filter.removed_indices.len() == expected, "{task}: SES removed wrong count");
            let kept = dataio::apply_ses(&data, &filter).unwrap();
            ensure!(kept.len() + expected == split.train.len(), "{task}: SES kept wrong count");
            let outside: BTreeSet<usize> = split.validation.iter().chain(&split.test).copied().collect();
            ensure!(
                filter.removed_indices.iter().chain(&kept).all(|i| !outside.contains(i)),
                "{task}: SES touched validation or test"
            );
            // normalizing already-normalized columns changes nothing
            let f = data.features();
            let mut cols: Vec<Vec<f64>> = (0..data.d_native()).map(|j| f.column(j).collect()).collect();
            let before = cols.clone();
            dataio::normalize_columns(&mut cols);
            for (x, y) in cols.iter().flatten().zip(before.iter().flatten()) {
                ensure!((x - y).abs() < 1e-12, "{task}: normalization not idempotent");
            }
            ensure!(
                (data.d_native()..data.width()).all(|j| f.column(j).all(|v| v == 0.0)),
                "{task}: padding columns not zero"
            );
            ensure!(
                before.iter().flatten().all(|v| (0.0..=1.0).contains(v)),
                "{task}: normalized value outside [0, 1]"
            );
        }
    }
    Ok(format!("3 tasks x {seeds} split seeds"))
}

/// Serial and multi-threaded runs of the same configuration agree exactly.
pub fn schedule_independence_check(seed: u64) -> Check {
    let data = load(Task::Banknote, seed);
    let serial = EvolutionConfig {
        generations: 2,
        epochs: 5,
        parallel: false,
        ..EvolutionConfig::desk(CalibrationBounds::preset(Task::Banknote), seed)
    };
    let parallel = EvolutionConfig {
        parallel: true,
        ..serial.clone()
    };
    let a = evolve::evolve_source(&data, &serial).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let b = pool
        .install(|| evolve::evolve_source(&data, &parallel))
        .map_err(|e| e.to_string())?;
    ensure!(a.stats == b.stats, "generation statistics differ");
    ensure!(a.populations == b.populations, "final populations differ");
    Ok(format!("{} generation records identical", a.stats.len()))
}

pub fn relatedness_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets: Vec<(Task, Vec<Vec<f64>>)> = Task::ALL
        .iter()
        .map(|&t| (t, (0..3).map(|_| (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()))
        .collect();
    for pairing in [Pairing::AllCross, Pairing::Identity, Pairing::Sampled { count: 5, seed }] {
        let m = relatedness::relatedness(&sets, pairing).map_err(|e| e.to_string())?;
        ensure!(m.is_symmetric(), "{pairing:?}: asymmetric");
        ensure!((0..3).all(|i| m.values[i][i] == 0.0), "{pairing:?}: non-zero diagonal");
        ensure!(
            (0..3).all(|i| (0..3).all(|j| i == j || m.values[i][j] > 0.0)),
            "{pairing:?}: non-positive off-diagonal"
        );
    }
    Ok("symmetric, zero diagonal, positive off-diagonal".into())
}

/// Bounds so wide that a redraw never reproduces the old value.
pub fn wide_bounds() -> CalibrationBounds {
    CalibrationBounds {
        hidden: Interval::new(1, 1_000_000_000),
        rate: Interval::new(0.0, 1e6),
        momentum: Interval::new(0.0, 1e6),
        slope: Interval::new(0.0, 1e6),
    }
}

pub fn changed_genes(a: &Genome, b: &Genome) -> usize {
    4 - a.shared_genes(b)
}
