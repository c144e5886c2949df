// SPDX-License-Identifier: Apache-2.0

//! Rate and latency features from observation matrices, and an
//! L2-regularized softmax readout trained with L-BFGS.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Mutex;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spikeio::ObservationMatrix;

/// Spike times kept per neuron.
pub const LATENCY_SPIKES: usize = 20;
pub const FEATURES_PER_NEURON: usize = 2 + LATENCY_SPIKES;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("observation has {got} channels, scaler was fitted on {expected}")]
    Shape { expected: usize, got: usize },
    #[error("need at least {need} training observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("feature vectors differ in length")]
    Ragged,
    #[error("nothing to average")]
    Empty,
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    Rate,
    Latency,
    Combined,
}

impl EncodingMode {
    pub const ALL: [EncodingMode; 3] = [EncodingMode::Rate, EncodingMode::Latency, EncodingMode::Combined];

    pub fn dim(self, neurons: usize) -> usize {
        match self {
            EncodingMode::Rate => 2 * neurons,
            EncodingMode::Latency => LATENCY_SPIKES * neurons,
            EncodingMode::Combined => FEATURES_PER_NEURON * neurons,
        }
    }

    fn code(self) -> u8 {
        match self {
            EncodingMode::Rate => 0,
            EncodingMode::Latency => 1,
            EncodingMode::Combined => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(usize::from(c)).copied()
    }
}

impl std::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncodingMode::Rate => "rate",
            EncodingMode::Latency => "latency",
            EncodingMode::Combined => "combined",
        })
    }
}

/// `[count_n, count_n / total]` per neuron.
pub fn rate_features(o: &ObservationMatrix) -> Vec<f64> {
    let counts: Vec<f64> = (0..o.channels).map(|n| o.count(n) as f64).collect();
    let total: f64 = counts.iter().sum();
    counts
        .iter()
        .flat_map(|&c| [c, if total > 0.0 { c / total } else { 0.0 }])
        .collect()
}

/// First spike bins per neuron, `None` where the neuron spiked fewer times.
pub fn latency_features(o: &ObservationMatrix) -> Vec<Option<f64>> {
    (0..o.channels)
        .flat_map(|n| {
            let bins = o.spike_bins(n);
            (0..LATENCY_SPIKES).map(move |k| bins.get(k).map(|&b| b as f64))
        })
        .collect()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Training-set statistics. Only [`fit_scaler`] produces one, so an
/// unfitted scaler cannot reach [`encode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub channels: usize,
    pub rate_std: Vec<f64>,
    pub latency_median: Vec<f64>,
    pub latency_iqr: Vec<f64>,
    /// Stand-in for missing spike times.
    pub impute: f64,
}

fn population_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let mean = sum / n as f64;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

pub fn fit_scaler(train: &[ObservationMatrix]) -> Result<ScalerState, ReadoutError> {
    if train.len() < 2 {
        return Err(ReadoutError::TooFew {
            need: 2,
            got: train.len(),
        });
    }
    let channels = train[0].channels;
    if let Some(o) = train.iter().find(|o| o.channels != channels) {
        return Err(ReadoutError::Shape {
            expected: channels,
            got: o.channels,
        });
    }
    let bins = train[0].bins;
    let rates: Vec<Vec<f64>> = train.iter().map(rate_features).collect();
    let rate_std = (0..2 * channels)
        .map(|j| {
            let s = population_std(rates.iter().map(|r| r[j]));
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();

    let mut pooled: Vec<f64> = train
        .iter()
        .flat_map(|o| (0..channels).flat_map(move |n| o.spike_bins(n)))
        .map(|b| b as f64)
        .collect();
    pooled.sort_by(f64::total_cmp);
    // a silent training set has no spike times; use the end of the window
    let impute = if pooled.is_empty() {
        bins as f64
    } else {
        quantile(&pooled, 0.99)
    };

    let lats: Vec<Vec<Option<f64>>> = train.iter().map(latency_features).collect();
    let mut latency_median = Vec::with_capacity(LATENCY_SPIKES * channels);
    let mut latency_iqr = Vec::with_capacity(LATENCY_SPIKES * channels);
    for j in 0..LATENCY_SPIKES * channels {
        let mut col: Vec<f64> = lats.iter().map(|l| l[j].unwrap_or(impute)).collect();
        col.sort_by(f64::total_cmp);
        latency_median.push(quantile(&col, 0.5));
        let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
        latency_iqr.push(if iqr > 0.0 { iqr } else { 1.0 });
    }
    Ok(ScalerState {
        channels,
        rate_std,
        latency_median,
        latency_iqr,
        impute,
    })
}

/// Scaled feature vector; combined is rate block then latency block.
pub fn encode(o: &ObservationMatrix, scaler: &ScalerState, mode: EncodingMode) -> Result<Vec<f64>, ReadoutError> {
    if o.channels != scaler.channels {
        return Err(ReadoutError::Shape {
            expected: scaler.channels,
            got: o.channels,
        });
    }
    let mut out = Vec::with_capacity(mode.dim(o.channels));
    if mode != EncodingMode::Latency {
        out.extend(rate_features(o).iter().zip(&scaler.rate_std).map(|(x, s)| x / s));
    }
    if mode != EncodingMode::Rate {
        out.extend(
            latency_features(o)
                .iter()
                .enumerate()
                .map(|(j, x)| (x.unwrap_or(scaler.impute) - scaler.latency_median[j]) / scaler.latency_iqr[j]),
        );
    }
    Ok(out)
}

/// Elementwise mean of equal-length vectors.
pub fn average_features(runs: &[Vec<f64>]) -> Result<Vec<f64>, ReadoutError> {
    let first = runs.first().ok_or(ReadoutError::Empty)?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(ReadoutError::Ragged);
    }
    let n = runs.len() as f64;
    Ok((0..first.len())
        .map(|j| runs.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect())
}

/// Design matrix from feature rows.
pub fn design_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>, ReadoutError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(ReadoutError::Ragged);
    }
    Ok(Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("checked lengths"))
}

/// `K x d` weights and `K` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        SoftmaxModel {
            w: Array2::zeros((classes, dim)),
            b: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.classes() * (self.dim() + 1)
    }

    /// Flat parameters: `W` row-major, then `b`.
    pub fn to_params(&self) -> Vec<f64> {
        self.w.iter().chain(self.b.iter()).copied().collect()
    }

    pub fn from_params(classes: usize, dim: usize, p: &[f64]) -> Self {
        SoftmaxModel {
            w: Array2::from_shape_vec((classes, dim), p[..classes * dim].to_vec()).expect("parameter length"),
            b: Array1::from(p[classes * dim..].to_vec()),
        }
    }

    pub fn logits(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }

    pub fn probabilities(&self, x: ArrayView1<f64>) -> Array1<f64> {
        softmax(self.logits(x).view())
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        argmax(self.logits(x).view())
    }
}

pub fn softmax(z: ArrayView1<f64>) -> Array1<f64> {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

fn log_sum_exp(z: ArrayView1<f64>) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// First index of the largest entry.
pub fn argmax(z: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `(|W|^2 + |b|^2) / (2C)`, with its gradient in
/// the flat parameter layout.
pub fn loss_and_gradient(model: &SoftmaxModel, x: &Array2<f64>, y: &[usize], c: f64) -> (f64, Vec<f64>) {
    let m = x.nrows() as f64;
    let k = model.classes();
    let mut logits = x.dot(&model.w.t());
    logits += &model.b;
    // running mean keeps m identical per-sample losses exact
    let mut nll = 0.0;
    for (i, (mut row, &yi)) in logits.axis_iter_mut(Axis(0)).zip(y).enumerate() {
        let lse = log_sum_exp(row.view());
        nll += (lse - row[yi] - nll) / (i + 1) as f64;
        row.mapv_inplace(|v| (v - lse).exp());
        row[yi] -= 1.0;
    }
    // logits now holds P - Y
    let reg = (model.w.iter().map(|v| v * v).sum::<f64>() + model.b.iter().map(|v| v * v).sum::<f64>()) / (2.0 * c);
    let gw = logits.t().dot(x) / m + &model.w / c;
    let gb = logits.sum_axis(Axis(0)) / m + &model.b / c;
    debug_assert_eq!(gb.len(), k);
    let grad = gw.iter().chain(gb.iter()).copied().collect();
    (nll + reg, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub max_iters: u64,
    pub tol_grad: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 0.01,
            max_iters: 1000,
            tol_grad: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SoftmaxModel,
    pub loss: f64,
    pub iterations: u64,
    /// False when the iteration limit stopped the optimizer first.
    pub converged: bool,
}

/// Last evaluated point with its loss and gradient.
type Evaluated = (Vec<f64>, f64, Vec<f64>);

struct Objective<'a> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    classes: usize,
    c: f64,
    cache: Mutex<Option<Evaluated>>,
}

impl Objective<'_> {
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut cache = self.cache.lock().expect("objective cache");
        if let Some((q, l, g)) = cache.as_ref() {
            if q.as_slice() == p {
                return (*l, g.clone());
            }
        }
        let model = SoftmaxModel::from_params(self.classes, self.x.ncols(), p);
        let (l, g) = loss_and_gradient(&model, self.x, self.y, self.c);
        *cache = Some((p.to_vec(), l, g.clone()));
        (l, g)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.eval(p).0)
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

/// Minimizes [`loss_and_gradient`] from zero parameters.
pub fn train(x: &Array2<f64>, y: &[usize], classes: usize, cfg: &TrainConfig) -> Result<TrainOutcome, ReadoutError> {
    if let Some(&label) = y.iter().find(|&&l| l >= classes) {
        return Err(ReadoutError::Label { label, classes });
    }
    if y.len() != x.nrows() || y.len() < classes {
        return Err(ReadoutError::TooFew {
            need: classes,
            got: y.len().min(x.nrows()),
        });
    }
    let problem = Objective {
        x,
        y,
        classes,
        c: cfg.c,
        cache: Mutex::new(None),
    };
    let init = vec![0.0; classes * (x.ncols() + 1)];
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), cfg.memory)
        .with_tolerance_grad(cfg.tol_grad)
        .and_then(|s| s.with_tolerance_cost(0.0))
        .map_err(|e| ReadoutError::Optimizer(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(init).max_iters(cfg.max_iters))
        .run()
        .map_err(|e| ReadoutError::Optimizer(e.to_string()))?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| ReadoutError::Optimizer("no iterate".into()))?;
    let converged = !matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::MaxItersReached)
    );
    if !converged {
        log::warn!("L-BFGS stopped at the iteration limit ({})", cfg.max_iters);
    }
    Ok(TrainOutcome {
        model: SoftmaxModel::from_params(classes, x.ncols(), &best),
        loss: state.get_best_cost(),
        iterations: state.get_iter(),
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Rows are true labels.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn confusion_csv(&self) -> String {
        let k = self.confusion.len();
        let mut s = String::from("true\\pred");
        for j in 0..k {
            s.push_str(&format!(",{j}"));
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&i.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn evaluate(model: &SoftmaxModel, x: &Array2<f64>, y: &[usize]) -> Evaluation {
    let k = model.classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    for (row, &yi) in x.axis_iter(Axis(0)).zip(y) {
        let p = model.predict(row);
        confusion[yi][p] += 1;
        correct += usize::from(p == yi);
    }
    Evaluation {
        accuracy: if y.is_empty() { 0.0 } else { correct as f64 / y.len() as f64 },
        confusion,
    }
}

const CKPT_MAGIC: &[u8; 4] = b"BSRM";
const CKPT_VERSION: u32 = 1;

/// Trained readout with the scaler and encoding it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: EncodingMode,
    pub scaler: ScalerState,
    pub model: SoftmaxModel,
}

fn put_f64s(b: &mut Vec<u8>, v: impl IntoIterator<Item = f64>) {
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    /// Little-endian: magic, version u32, mode u8, K u32, d u32, channels
    /// u32, then f64 arrays W, b, impute, rate std, latency median, IQR.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CKPT_MAGIC);
        b.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        b.push(self.mode.code());
        for n in [self.model.classes(), self.model.dim(), self.scaler.channels] {
            b.extend_from_slice(&(n as u32).to_le_bytes());
        }
        put_f64s(&mut b, self.model.w.iter().copied());
        put_f64s(&mut b, self.model.b.iter().copied());
        put_f64s(&mut b, [self.scaler.impute]);
        put_f64s(&mut b, self.scaler.rate_std.iter().copied());
        put_f64s(&mut b, self.scaler.latency_median.iter().copied());
        put_f64s(&mut b, self.scaler.latency_iqr.iter().copied());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ReadoutError> {
        let bad = |m: &str| ReadoutError::Checkpoint(m.to_string());
        if b.len() < 21 || &b[..4] != CKPT_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]) as usize;
        if u32_at(4) != CKPT_VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let mode = EncodingMode::from_code(b[8]).ok_or_else(|| bad("unknown mode"))?;
        let (k, d, ch) = (u32_at(9), u32_at(13), u32_at(17));
        let n_f64 = k * d + k + 1 + 2 * ch + 2 * LATENCY_SPIKES * ch;
        if b.len() != 21 + 8 * n_f64 {
            return Err(bad("length mismatch"));
        }
        let vals: Vec<f64> = b[21..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = vals[at..at + n].to_vec();
            at += n;
            s
        };
        let w = take(k * d);
        let bias = take(k);
        let impute = take(1)[0];
        let rate_std = take(2 * ch);
        let latency_median = take(LATENCY_SPIKES * ch);
        let latency_iqr = take(LATENCY_SPIKES * ch);
        let mut p = w;
        p.extend(bias);
        Ok(Checkpoint {
            mode,
            scaler: ScalerState {
                channels: ch,
                rate_std,
                latency_median,
                latency_iqr,
                impute,
            },
            model: SoftmaxModel::from_params(k, d, &p),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ReadoutError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ReadoutError> {
        let mut b = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut b)?;
        Self::from_bytes(&b)
    }
}
