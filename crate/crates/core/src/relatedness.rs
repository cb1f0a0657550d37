//! Task relatedness as the mean normalized distance between the flattened
//! weight vectors of fixed-architecture reference networks.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::TaskDataset;
use crate::error::{Error, Result};
use crate::genome::CalibrationBounds;
use crate::mlp::{NetConfig, Network};
use crate::rng::{self, stream};
use crate::task::Task;

pub const REFERENCE_HIDDEN: usize = 100;
pub const MAX_RETRIES: usize = 5;
pub const DEFAULT_REPEATS: usize = 4;

/// Non-architectural hyperparameters of a reference network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHyper {
    pub rate: f64,
    pub momentum: f64,
    pub slope: f64,
}

impl ReferenceHyper {
    /// Rate and slope at the interval midpoints, momentum at its lower end.
    pub fn from_bounds(bounds: &CalibrationBounds) -> Self {
        Self {
            rate: 0.5 * (bounds.rate.lo + bounds.rate.hi),
            momentum: bounds.momentum.lo,
            slope: 0.5 * (bounds.slope.lo + bounds.slope.hi),
        }
    }
}

/// Flat weight vector of one trained reference network, layer-major.
pub type Snapshot = Vec<f64>;

pub fn snapshot_len(input_dim: usize) -> usize {
    (input_dim + 1) * REFERENCE_HIDDEN + REFERENCE_HIDDEN + 1
}

fn train_one(data: &TaskDataset, hyper: ReferenceHyper, epochs: usize, seed: u64) -> Result<Snapshot> {
    for attempt in 0..=MAX_RETRIES {
        let config = NetConfig {
            input_dim: data.width(),
            hidden_nodes: REFERENCE_HIDDEN,
            learning_rate: hyper.rate,
            momentum: hyper.momentum,
            logistic_slope: hyper.slope,
            epochs,
            weight_init_seed: rng::derive_seed(seed, &[attempt as u64]),
        };
        let mut net = Network::new(config)?;
        let report = net.train(data.features(), data.labels(), &data.split().train)?;
        if !report.divergent {
            return Ok(net.weights());
        }
        log::warn!("{} reference net diverged on attempt {attempt}", data.task);
    }
    Err(Error::ReferenceDiverged {
        task: data.task.to_string(),
    })
}

/// `count` reference networks (hidden width 100) trained on the training
/// split. A divergent network is retrained from a new seed, at most
/// [`MAX_RETRIES`] times.
pub fn train_reference_nets(
    data: &TaskDataset,
    count: usize,
    hyper: ReferenceHyper,
    epochs: usize,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    (0..count as u64)
        .into_par_iter()
        .map(|r| {
            train_one(
                data,
                hyper,
                epochs,
                rng::derive_seed(seed, &[stream::REFERENCE, data.task.index(), r]),
            )
        })
        .collect()
}

/// Which snapshot pairs enter the mean for two tasks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every snapshot of one task against every snapshot of the other.
    #[default]
    AllCross,
    /// The k-th snapshot against the k-th snapshot.
    Identity,
    /// `count` pairs drawn uniformly with replacement.
    Sampled { count: usize, seed: u64 },
}

pub fn normalized_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SnapshotLength(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sq.sqrt() / a.len() as f64)
}

fn mean_distance(a: &[Snapshot], b: &[Snapshot], pairing: Pairing, salt: u64) -> Result<f64> {
    use rand::Rng as _;
    let pairs: Vec<(usize, usize)> = match pairing {
        Pairing::AllCross => (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect(),
        Pairing::Identity => (0..a.len().min(b.len())).map(|i| (i, i)).collect(),
        Pairing::Sampled { count, seed } => {
            let mut rng = rng::derived_rng(seed, &[salt]);
            (0..count)
                .map(|_| (rng.gen_range(0..a.len()), rng.gen_range(0..b.len())))
                .collect()
        }
    };
    if pairs.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let mut total = 0.0;
    for &(i, j) in &pairs {
        total += normalized_distance(&a[i], &b[j])?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatednessMatrix {
    pub tasks: Vec<Task>,
    pub values: Vec<Vec<f64>>,
}

impl RelatednessMatrix {
    pub fn get(&self, a: Task, b: Task) -> Option<f64> {
        let i = self.tasks.iter().position(|&t| t == a)?;
        let j = self.tasks.iter().position(|&t| t == b)?;
        Some(self.values[i][j])
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.tasks.len();
        (0..n).all(|i| (0..n).all(|j| self.values[i][j] == self.values[j][i]))
    }

    /// Header row and first column hold task names.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("task");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t.name());
        }
        out.push('\n');
        for (t, row) in self.tasks.iter().zip(&self.values) {
            out.push_str(t.name());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Pairwise mean normalized distances. The diagonal is zero and only the
/// upper triangle is computed, so the result is exactly symmetric.
pub fn relatedness(snapshots: &[(Task, Vec<Snapshot>)], pairing: Pairing) -> Result<RelatednessMatrix> {
    let len = snapshots
        .iter()
        .flat_map(|(_, s)| s.first())
        .map(Vec::len)
        .next()
        .ok_or(Error::EmptyIndexSet)?;
    for (_, set) in snapshots {
        if set.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if let Some(bad) = set.iter().find(|s| s.len() != len) {
            return Err(Error::SnapshotLength(len, bad.len()));
        }
    }
    let n = snapshots.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let salt = (i * n + j) as u64;
            let d = mean_distance(&snapshots[i].1, &snapshots[j].1, pairing, salt)?;
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    Ok(RelatednessMatrix {
        tasks: snapshots.iter().map(|(t, _)| *t).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio;

    #[test]
    fn hand_distance() {
        assert_eq!(normalized_distance(&[0.0; 4], &[1.0; 4]).unwrap(), 0.5);
        assert!(matches!(
            normalized_distance(&[0.0; 3], &[1.0; 4]),
            Err(Error::SnapshotLength(3, 4))
        ));
    }

    #[test]
    fn identical_sets_with_identity_pairing_are_zero() {
        let set = vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]];
        let m = relatedness(&[(Task::German, set.clone()), (Task::Banknote, set)], Pairing::Identity).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let sets = vec![
            (Task::Australian, vec![vec![0.0; 4], vec![0.5; 4]]),
            (Task::German, vec![vec![1.0; 4]]),
            (Task::Banknote, vec![vec![-1.0; 4], vec![2.0; 4]]),
        ];
        for pairing in [Pairing::AllCross, Pairing::Sampled { count: 7, seed: 3 }] {
            let m = relatedness(&sets, pairing).unwrap();
            assert!(m.is_symmetric());
            assert!((0..3).all(|i| m.values[i][i] == 0.0));
            assert!(m.values.iter().flatten().all(|&v| v >= 0.0));
        }
        // all-cross: mean of |0-1|*2/4 and |0.5-1|*2/4
        let m = relatedness(&sets, Pairing::AllCross).unwrap();
        assert!((m.get(Task::Australian, Task::German).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let sets = vec![(Task::German, vec![vec![0.0; 4]]), (Task::Banknote, vec![vec![0.0; 5]])];
        assert!(matches!(relatedness(&sets, Pairing::AllCross), Err(Error::SnapshotLength(4, 5))));
    }

    #[test]
    fn reference_snapshots_have_fixed_length_and_are_deterministic() {
        let data = dataio::synthetic_dataset(Task::Banknote, 60, 2).unwrap();
        let hyper = ReferenceHyper::from_bounds(&CalibrationBounds::preset(Task::Banknote));
        let a = train_reference_nets(&data, 2, hyper, 3, 9).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|s| s.len() == snapshot_len(24)));
        assert_eq!(snapshot_len(24), 2601);
        assert_eq!(a, train_reference_nets(&data, 2, hyper, 3, 9).unwrap());
        assert_eq!(train_reference_nets(&data, 1, hyper, 3, 9).unwrap().len(), 1);
    }

    #[test]
    fn csv_layout() {
        let m = RelatednessMatrix {
            tasks: vec![Task::German, Task::Banknote],
            values: vec![vec![0.0, 0.25], vec![0.25, 0.0]],
        };
        assert_eq!(m.to_csv_string(), "task,german,banknote\ngerman,0,0.25\nbanknote,0.25,0\n");
    }
}
