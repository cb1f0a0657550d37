//! One-hidden-layer feedforward network with logistic units.
//!
//! Both layers use the same logistic slope. Biases are folded in as a
//! constant-1 input stored in the last column of each weight row. Training is
//! per-sample gradient descent on `E = (y - y_hat)^2 / 2` with classical
//! momentum: `dw(t) = -rate * grad E + momentum * dw(t-1)`.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::rng::{self, stream};

/// Initial weights are uniform in `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 0.5;
/// An epoch loss above this marks the network divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[inline]
pub fn logistic(x: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_nodes: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub logistic_slope: f64,
    pub epochs: usize,
    pub weight_init_seed: u64,
}

impl NetConfig {
    pub fn from_genome(genome: &Genome, input_dim: usize, epochs: usize, weight_init_seed: u64) -> Self {
        Self {
            input_dim,
            hidden_nodes: genome.hidden,
            learning_rate: genome.rate,
            momentum: genome.momentum,
            logistic_slope: genome.slope,
            epochs,
            weight_init_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.input_dim > 0
            && self.hidden_nodes > 0
            && self.learning_rate > 0.0
            && self.momentum >= 0.0
            && self.logistic_slope > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid network configuration {self:?}")))
        }
    }
}

/// Gradient of the per-sample loss, laid out like the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean per-sample loss of each completed epoch.
    pub loss_trace: Vec<f64>,
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    config: NetConfig,
    /// `hidden x (input_dim + 1)`, bias in the last column.
    w1: Vec<f64>,
    /// `hidden + 1`, bias last.
    w2: Vec<f64>,
    v1: Vec<f64>,
    v2: Vec<f64>,
}

struct Scratch {
    hidden: Vec<f64>,
    delta: Vec<f64>,
}

impl Scratch {
    fn new(hidden: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden],
            delta: vec![0.0; hidden],
        }
    }
}

impl Network {
    /// Fresh network with weights drawn from `config.weight_init_seed`.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::rng_from(config.weight_init_seed);
        let n1 = config.hidden_nodes * (config.input_dim + 1);
        let n2 = config.hidden_nodes + 1;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect()
        };
        let w1 = draw(n1);
        let w2 = draw(n2);
        Ok(Self {
            v1: vec![0.0; n1],
            v2: vec![0.0; n2],
            w1,
            w2,
            config,
        })
    }

    /// Network with explicit weights, `w1` then `w2` in layer-major order.
    pub fn from_weights(config: NetConfig, weights: &[f64]) -> Result<Self> {
        let mut net = Self::new(config)?;
        if weights.len() != net.weight_count() {
            return Err(Error::SnapshotLength(weights.len(), net.weight_count()));
        }
        let (a, b) = weights.split_at(net.w1.len());
        net.w1.copy_from_slice(a);
        net.w2.copy_from_slice(b);
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn weight_count(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// All weights flattened layer-major: hidden rows first, then output.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.weight_count());
        w.extend_from_slice(&self.w1);
        w.extend_from_slice(&self.w2);
        w
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.w2).all(|w| w.is_finite())
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.config.input_dim {
            Ok(())
        } else {
            Err(Error::WidthMismatch {
                expected: self.config.input_dim,
                found: x.len(),
            })
        }
    }

    #[inline]
    fn forward_into(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let n_in = self.config.input_dim;
        let slope = self.config.logistic_slope;
        for (h, row) in hidden.iter_mut().zip(self.w1.chunks_exact(n_in + 1)) {
            let z = row[..n_in].iter().zip(x).fold(row[n_in], |acc, (w, xi)| acc + w * xi);
            *h = logistic(z, slope);
        }
        let (w_out, bias) = self.w2.split_at(hidden.len());
        let z = w_out.iter().zip(hidden.iter()).fold(bias[0], |acc, (w, h)| acc + w * h);
        logistic(z, slope)
    }

    /// Output unit activation for one feature row.
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        let mut hidden = vec![0.0; self.config.hidden_nodes];
        Ok(self.forward_into(x, &mut hidden))
    }

    /// Class 1 when the output is at least 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.output(x)? >= 0.5))
    }

    pub fn loss(&self, x: &[f64], y: u8) -> Result<f64> {
        let err = self.output(x)? - f64::from(y);
        Ok(0.5 * err * err)
    }

    /// Back-propagated gradient of the squared-error loss for one sample.
    pub fn gradient(&self, x: &[f64], y: u8) -> Result<Gradients> {
        self.check_width(x)?;
        let hidden_n = self.config.hidden_nodes;
        let n_in = self.config.input_dim;
        let slope = self.config.logistic_slope;
        let mut hidden = vec![0.0; hidden_n];
        let out = self.forward_into(x, &mut hidden);
        let delta_out = (out - f64::from(y)) * slope * out * (1.0 - out);

        let mut w2 = Vec::with_capacity(hidden_n + 1);
        w2.extend(hidden.iter().map(|h| delta_out * h));
        w2.push(delta_out);

        let mut w1 = Vec::with_capacity(self.w1.len());
        for (j, h) in hidden.iter().enumerate() {
            let delta = delta_out * self.w2[j] * slope * h * (1.0 - h);
            w1.extend(x.iter().map(|xi| delta * xi));
            w1.push(delta);
        }
        debug_assert_eq!(w1.len(), hidden_n * (n_in + 1));
        Ok(Gradients { w1, w2 })
    }

    #[inline]
    fn step_with(&mut self, x: &[f64], y: f64, scratch: &mut Scratch) -> f64 {
        let n_in = self.config.input_dim;
        let slope = self.config.logistic_slope;
        let rate = self.config.learning_rate;
        let momentum = self.config.momentum;
        let hidden_n = self.config.hidden_nodes;

        let out = self.forward_into(x, &mut scratch.hidden);
        let err = out - y;
        let delta_out = err * slope * out * (1.0 - out);

        for j in 0..hidden_n {
            let h = scratch.hidden[j];
            scratch.delta[j] = delta_out * self.w2[j] * slope * h * (1.0 - h);
        }

        for j in 0..hidden_n {
            let v = -rate * delta_out * scratch.hidden[j] + momentum * self.v2[j];
            self.v2[j] = v;
            self.w2[j] += v;
        }
        let v = -rate * delta_out + momentum * self.v2[hidden_n];
        self.v2[hidden_n] = v;
        self.w2[hidden_n] += v;

        for ((row, vrow), &delta) in self
            .w1
            .chunks_exact_mut(n_in + 1)
            .zip(self.v1.chunks_exact_mut(n_in + 1))
            .zip(&scratch.delta)
        {
            let g = -rate * delta;
            for ((w, v), xi) in row[..n_in].iter_mut().zip(&mut vrow[..n_in]).zip(x) {
                *v = g * xi + momentum * *v;
                *w += *v;
            }
            vrow[n_in] = g + momentum * vrow[n_in];
            row[n_in] += vrow[n_in];
        }
        0.5 * err * err
    }

    /// One momentum update on a single sample; returns the pre-update loss.
    pub fn step(&mut self, x: &[f64], y: u8) -> Result<f64> {
        self.check_width(x)?;
        let mut scratch = Scratch::new(self.config.hidden_nodes);
        Ok(self.step_with(x, f64::from(y), &mut scratch))
    }

    /// Run `config.epochs` passes over `indices` in a freshly shuffled order
    /// each epoch. Stops early, flagged divergent, once a weight or the epoch
    /// loss stops being finite or exceeds [`DIVERGENCE_LOSS`].
    pub fn train(&mut self, features: &FeatureMatrix, labels: &[u8], indices: &[usize]) -> Result<TrainReport> {
        if indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if features.cols() != self.config.input_dim {
            return Err(Error::WidthMismatch {
                expected: self.config.input_dim,
                found: features.cols(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= features.rows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: features.rows(),
            });
        }

        let mut order = indices.to_vec();
        let mut rng = rng::derived_rng(self.config.weight_init_seed, &[stream::SHUFFLE]);
        let mut scratch = Scratch::new(self.config.hidden_nodes);
        let mut loss_trace = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                total += self.step_with(features.row(i), f64::from(labels[i]), &mut scratch);
            }
            let loss = total / order.len() as f64;
            loss_trace.push(loss);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS || !self.is_finite() {
                return Ok(TrainReport {
                    loss_trace,
                    divergent: true,
                });
            }
        }
        Ok(TrainReport {
            loss_trace,
            divergent: false,
        })
    }

    /// Confusion counts over `indices`, class 1 positive.
    pub fn evaluate(&self, features: &FeatureMatrix, labels: &[u8], indices: &[usize]) -> Result<ConfusionSummary> {
        if indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if features.cols() != self.config.input_dim {
            return Err(Error::WidthMismatch {
                expected: self.config.input_dim,
                found: features.cols(),
            });
        }
        let mut hidden = vec![0.0; self.config.hidden_nodes];
        let mut cs = ConfusionSummary::default();
        for &i in indices {
            if i >= features.rows() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: features.rows(),
                });
            }
            let predicted = self.forward_into(features.row(i), &mut hidden) >= 0.5;
            cs.record(labels[i] == 1, predicted);
        }
        Ok(cs)
    }

    /// Write weights as CSV rows `layer,row,col,value` (layer 1 hidden, 2 output).
    pub fn write_snapshot_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "layer,row,col,value").map_err(io)?;
        let cols = self.config.input_dim + 1;
        for (k, w) in self.w1.iter().enumerate() {
            writeln!(out, "1,{},{},{}", k / cols, k % cols, w).map_err(io)?;
        }
        for (k, w) in self.w2.iter().enumerate() {
            writeln!(out, "2,0,{k},{w}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Confusion counts. Fractional values appear when summaries are averaged
/// over population members and repeat runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

/// Derived metrics. `None` marks an undefined ratio (zero denominator).
///
/// The `*_neg` pair is precision and recall of the negative class,
/// `tn / (tn + fn)` and `tn / (tn + fp)`; the `*_std` pair is the usual
/// positive-class definition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision_neg: Option<f64>,
    pub recall_neg: Option<f64>,
    pub precision_std: Option<f64>,
    pub recall_std: Option<f64>,
    pub misclassification_percent: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

impl ConfusionSummary {
    pub fn new(tp: f64, tn: f64, fp: f64, fn_: f64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Every prediction wrong: the summary charged to a divergent network.
    pub fn all_wrong(labels: &[u8], indices: &[usize]) -> Self {
        let positives = indices.iter().filter(|&&i| labels[i] == 1).count() as f64;
        Self {
            tp: 0.0,
            tn: 0.0,
            fp: indices.len() as f64 - positives,
            fn_: positives,
        }
    }

    fn record(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1.0,
            (false, false) => self.tn += 1.0,
            (false, true) => self.fp += 1.0,
            (true, false) => self.fn_ += 1.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn misclassification_percent(&self) -> Option<f64> {
        ratio(100.0 * (self.fp + self.fn_), self.total())
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            precision_neg: ratio(self.tn, self.tn + self.fn_),
            recall_neg: ratio(self.tn, self.tn + self.fp),
            precision_std: ratio(self.tp, self.tp + self.fp),
            recall_std: ratio(self.tp, self.tp + self.fn_),
            misclassification_percent: self.misclassification_percent(),
        }
    }

    /// Element-wise mean; `None` for an empty input.
    pub fn mean<'a>(summaries: impl IntoIterator<Item = &'a ConfusionSummary>) -> Option<Self> {
        let mut acc = Self::default();
        let mut n = 0usize;
        for s in summaries {
            acc.tp += s.tp;
            acc.tn += s.tn;
            acc.fp += s.fp;
            acc.fn_ += s.fn_;
            n += 1;
        }
        (n > 0).then(|| {
            let n = n as f64;
            Self::new(acc.tp / n, acc.tn / n, acc.fp / n, acc.fn_ / n)
        })
    }
}
