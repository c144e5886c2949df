// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration: dataset, reservoir, simulation, readout and
//! reporting, all driven by one seeded [`ExperimentConfig`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::desim::{Netlist, SimTime, CLOCK_STEP};
use crate::elaborator::{elaborate, estimate_resources, probe_label, scaling_estimate, ElabError, ElaboratedNetwork, ResourceReport};
use crate::netgen::{generate, ConnectivityParams, GridDims, NetgenError};
use crate::neuroblocks::{BlockConfig, DelayModel};
use crate::readout::{
    average_features, design_matrix, encode, evaluate, fit_scaler, train, Checkpoint, EncodingMode, Evaluation,
    ReadoutError, ScalerState, TrainConfig,
};
use crate::shd::{self, RawSample, ShdError};
use crate::spikeio::{
    observe, Client, ClientConfig, ObservationMatrix, RasterWindow, Server, ServerConfig, SpikeEvent, SpikeIoError,
    SpikeTrainInput, WindowRunner, WINDOW_BINS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset not found in {0}")]
    DatasetNotFound(PathBuf),
    #[error(transparent)]
    Dataset(#[from] ShdError),
    #[error(transparent)]
    Netgen(#[from] NetgenError),
    #[error(transparent)]
    Elab(#[from] ElabError),
    #[error(transparent)]
    SpikeIo(#[from] SpikeIoError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error("simulation: {0}")]
    Sim(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::ser::Error),
    #[error(transparent)]
    TomlParse(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    /// `shd_train.h5` / `shd_test.h5` in `dir`.
    Shd { dir: PathBuf },
    /// Generated sweeps shaped like SHD, see [`shd::synthetic_samples`].
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Original labels to keep; relabelled to their position here.
    pub classes: Vec<u16>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Adds one jittered copy of every training sample.
    pub augment: bool,
}

impl DatasetConfig {
    /// Digits 0..3 in both languages, 100 train and 25 test each.
    pub fn desk(source: DatasetSource) -> Self {
        DatasetConfig {
            source,
            classes: vec![0, 1, 2, 3, 10, 11, 12, 13],
            train_per_class: 100,
            test_per_class: 25,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub topology: u64,
    pub jitter: u64,
    pub augmentation: u64,
    /// Only used by the synthetic dataset.
    pub synthetic: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            topology: 1,
            jitter: 2,
            augmentation: 3,
            synthetic: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Transport {
    InProcess,
    /// Windows go through the UDP protocol. Without an endpoint a loopback
    /// server is started for the duration of the run.
    Udp { endpoint: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: GridDims,
    pub connectivity: ConnectivityParams,
    pub seeds: Seeds,
    /// Jittered simulations per sample whose features are averaged.
    pub runs_per_sample: u32,
    /// Independent repetitions with fresh jitter; reported as mean and std.
    pub repeats: u32,
    /// Per-gate delay standard deviation in ps; 0 disables jitter.
    pub jitter_sigma_ps: f64,
    pub delay_model: DelayModel,
    pub encoding: EncodingMode,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub transport: Transport,
    pub output_dir: PathBuf,
    /// Simulation threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: GridDims::default(),
            connectivity: ConnectivityParams::default(),
            seeds: Seeds::default(),
            runs_per_sample: 3,
            repeats: 1,
            jitter_sigma_ps: 10.0,
            delay_model: DelayModel::Lumped,
            encoding: EncodingMode::Combined,
            train: TrainConfig::default(),
            dataset: DatasetConfig::desk(DatasetSource::Shd { dir: shd::default_dir() }),
            transport: Transport::InProcess,
            output_dir: PathBuf::from("runs"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        self.connectivity.validate()?;
        if self.runs_per_sample == 0 || self.repeats == 0 {
            return bad("runs_per_sample and repeats must be positive");
        }
        if self.runs_per_sample * self.repeats >= 1 << 12 {
            return bad("too many simulation runs");
        }
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return bad("jitter_sigma_ps must be finite and non-negative");
        }
        if self.train.c.is_nan() || self.train.c <= 0.0 {
            return bad("train.c must be positive");
        }
        let d = &self.dataset;
        if d.classes.len() < 2 {
            return bad("need at least two classes");
        }
        let mut seen = d.classes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != d.classes.len() || seen.iter().any(|c| usize::from(*c) >= shd::CLASSES) {
            return bad("classes must be distinct labels below 20");
        }
        if d.train_per_class == 0 || d.test_per_class == 0 {
            return bad("per-class counts must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over everything that can change a result. Output location
    /// and transport are excluded: they never change what is computed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.transport = Transport::InProcess;
        c.workers = 0;
        let text = toml::to_string(&c).expect("config always serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", &self.hash()[..16]))
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            delay_model: self.delay_model,
            ..Default::default()
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples after selection and augmentation, labels already relabelled.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    let d = &cfg.dataset;
    let (train, test) = match &d.source {
        DatasetSource::Shd { dir } => {
            if !shd::available(dir) {
                return Err(HarnessError::DatasetNotFound(dir.clone()));
            }
            #[cfg(feature = "hdf5")]
            {
                let s = shd::load(dir)?;
                (s.train, s.test)
            }
            #[cfg(not(feature = "hdf5"))]
            unreachable!("available() is false without hdf5")
        }
        DatasetSource::Synthetic => (
            shd::synthetic_samples(shd::CLASSES, d.train_per_class, cfg.seeds.synthetic),
            shd::synthetic_samples(shd::CLASSES, d.test_per_class, cfg.seeds.synthetic.wrapping_add(1)),
        ),
    };
    let mut train = shd::select_subset(&train, &d.classes, d.train_per_class);
    let test = shd::select_subset(&test, &d.classes, d.test_per_class);
    if d.augment {
        train = shd::augment_set(&train, shd::JITTER_SIGMA, cfg.seeds.augmentation);
    }
    if train.len() < d.classes.len() || test.is_empty() {
        return Err(HarnessError::Config(format!(
            "subset has {} train and {} test samples",
            train.len(),
            test.len()
        )));
    }
    Ok(Dataset { train, test })
}

/// Sessions carry the run slot in the top 12 bits, the sample in the rest.
const SAMPLE_BITS: u32 = 20;

pub fn session_id(slot: u32, sample: usize) -> u32 {
    (slot << SAMPLE_BITS) | sample as u32
}

pub fn session_slot(session: u32) -> u32 {
    session >> SAMPLE_BITS
}

/// Jitter seed for one simulation slot.
pub fn slot_seed(jitter_seed: u64, slot: u32) -> u64 {
    jitter_seed.wrapping_add(u64::from(slot)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Simulates windows on the jittered reservoir picked by the session id.
/// Jittered netlists are built once per slot and shared.
pub fn window_runner(network: Arc<ElaboratedNetwork>, sigma: f64, jitter_seed: u64) -> WindowRunner {
    let cache: Mutex<HashMap<u32, Arc<Netlist>>> = Mutex::new(HashMap::new());
    Arc::new(move |session, input: &SpikeTrainInput| {
        let slot = session_slot(session);
        let nl = {
            let mut c = cache.lock().map_err(|e| e.to_string())?;
            Arc::clone(c.entry(slot).or_insert_with(|| {
                let mut nl = network.netlist.clone();
                nl.apply_delay_jitter(sigma, slot_seed(jitter_seed, slot));
                Arc::new(nl)
            }))
        };
        observe(&nl, &network, input).map(|(m, _)| m).map_err(|e| e.to_string())
    })
}

/// Everything simulated for one repetition.
#[derive(Debug, Clone)]
pub struct Observations {
    /// `[run][sample]`, training samples first.
    pub windows: Vec<Vec<ObservationMatrix>>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x_train: Array2<f64>,
    pub y_train: Vec<usize>,
    pub x_test: Array2<f64>,
    pub y_test: Vec<usize>,
}

impl FeatureSet {
    /// SHA-256 of both matrices' little-endian bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for x in [&self.x_train, &self.x_test] {
            for v in x.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

impl Observations {
    fn split(&self) -> usize {
        self.train_labels.len()
    }

    /// One scaler over the training windows of every run.
    pub fn scaler(&self) -> Result<ScalerState, HarnessError> {
        let split = self.split();
        let pooled: Vec<ObservationMatrix> = self.windows.iter().flat_map(|r| r[..split].iter().cloned()).collect();
        Ok(fit_scaler(&pooled)?)
    }

    /// Per-sample features averaged over runs.
    pub fn features(&self, mode: EncodingMode) -> Result<FeatureSet, HarnessError> {
        self.features_with(&self.scaler()?, mode)
    }

    pub fn features_with(&self, scaler: &ScalerState, mode: EncodingMode) -> Result<FeatureSet, HarnessError> {
        let split = self.split();
        let per_run: Vec<Vec<Vec<f64>>> = self
            .windows
            .iter()
            .map(|run| run.par_iter().map(|o| encode(o, scaler, mode)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, ReadoutError>>()?;
        let rows: Vec<Vec<f64>> = (0..self.windows[0].len())
            .map(|i| average_features(&per_run.iter().map(|r| r[i].clone()).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()?;
        Ok(FeatureSet {
            x_train: design_matrix(&rows[..split])?,
            y_train: self.train_labels.clone(),
            x_test: design_matrix(&rows[split..])?,
            y_test: self.test_labels.clone(),
        })
    }

    /// Reloads repetition `repeat` from a run directory.
    pub fn load(dir: &Path, repeat: u32) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(dir.join("labels.csv"))?;
        let (mut train_labels, mut test_labels) = (Vec::new(), Vec::new());
        for line in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
            let bad = || HarnessError::Config(format!("labels.csv: bad line {line:?}"));
            let (split, label) = line.split_once(',').ok_or_else(bad)?;
            let label = label.parse().map_err(|_| bad())?;
            match split {
                "train" => train_labels.push(label),
                "test" => test_labels.push(label),
                _ => return Err(bad()),
            }
        }
        let mut windows = Vec::new();
        for r in 0.. {
            let p = dir.join(format!("observations-{repeat}-{r}.bin"));
            if !p.is_file() {
                break;
            }
            let w = read_observations(&p)?;
            if w.len() != train_labels.len() + test_labels.len() {
                return Err(HarnessError::Config(format!("{}: window count mismatch", p.display())));
            }
            windows.push(w);
        }
        if windows.is_empty() {
            return Err(HarnessError::Config(format!("no observations for repetition {repeat} in {}", dir.display())));
        }
        Ok(Observations {
            windows,
            train_labels,
            test_labels,
        })
    }

    fn labels_csv(&self) -> String {
        let mut s = String::from("split,label\n");
        for l in &self.train_labels {
            s += &format!("train,{l}\n");
        }
        for l in &self.test_labels {
            s += &format!("test,{l}\n");
        }
        s
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Sim(e.to_string()))
}

/// Runs `runs_per_sample` jittered simulations of every sample for
/// repetition `repeat` over the configured transport.
pub fn simulate(
    cfg: &ExperimentConfig,
    network: Arc<ElaboratedNetwork>,
    data: &Dataset,
    repeat: u32,
) -> Result<Observations, HarnessError> {
    let inputs: Vec<SpikeTrainInput> = data
        .train
        .iter()
        .chain(&data.test)
        .map(|s| shd::preprocess(s).to_input())
        .collect();
    let runner = window_runner(Arc::clone(&network), cfg.jitter_sigma_ps, cfg.seeds.jitter);
    let slots: Vec<u32> = (0..cfg.runs_per_sample).map(|r| repeat * cfg.runs_per_sample + r).collect();
    let jobs: Vec<(u32, usize)> = slots.iter().flat_map(|&s| (0..inputs.len()).map(move |i| (s, i))).collect();
    let pool = pool(cfg.workers)?;

    let results: Vec<ObservationMatrix> = match &cfg.transport {
        Transport::InProcess => pool.install(|| {
            jobs.par_iter()
                .map(|&(s, i)| runner(session_id(s, i), &inputs[i]).map_err(HarnessError::Sim))
                .collect::<Result<_, _>>()
        })?,
        Transport::Udp { endpoint } => {
            let (server, addr) = match endpoint {
                Some(e) => (
                    None,
                    e.parse().map_err(|_| HarnessError::Config(format!("bad endpoint {e}")))?,
                ),
                None => {
                    let server = Server::bind(
                        "127.0.0.1:0",
                        runner,
                        ServerConfig {
                            workers: pool.current_num_threads(),
                            input_channels: network.input_ports.len(),
                            ..Default::default()
                        },
                    )?;
                    let addr = server.local_addr();
                    (Some(server), addr)
                }
            };
            let out = pool.install(|| {
                jobs.par_iter()
                    .map_init(
                        || Client::connect(addr, ClientConfig::default()),
                        |client, &(s, i)| match client {
                            Ok(c) => Ok(c.run_window(session_id(s, i), &inputs[i])?),
                            Err(e) => Err(HarnessError::Sim(e.to_string())),
                        },
                    )
                    .collect::<Result<Vec<_>, _>>()
            });
            if let Some(s) = server {
                s.shutdown();
            }
            out?
        }
    };

    let mut windows: Vec<Vec<ObservationMatrix>> = Vec::with_capacity(slots.len());
    let mut it = results.into_iter();
    for _ in &slots {
        windows.push(it.by_ref().take(inputs.len()).collect());
    }
    Ok(Observations {
        windows,
        train_labels: data.train.iter().map(|s| usize::from(s.label)).collect(),
        test_labels: data.test.iter().map(|s| usize::from(s.label)).collect(),
    })
}

const OBS_MAGIC: &[u8; 4] = b"BSOB";

/// Sparse window cache: magic, `windows bins channels` as u32, then per
/// window an event count and `(bin u16, channel u16)` pairs, little-endian.
pub fn write_observations(path: &Path, windows: &[ObservationMatrix]) -> Result<(), HarnessError> {
    let (bins, channels) = windows.first().map_or((0, 0), |w| (w.bins, w.channels));
    let mut b = Vec::new();
    b.extend_from_slice(OBS_MAGIC);
    for v in [windows.len(), bins, channels] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for w in windows {
        let ev = w.events();
        b.extend_from_slice(&(ev.len() as u32).to_le_bytes());
        for e in ev {
            b.extend_from_slice(&(e.time_step as u16).to_le_bytes());
            b.extend_from_slice(&e.channel.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&b)?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationMatrix>, HarnessError> {
    let mut b = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut b)?;
    let bad = || HarnessError::Config(format!("{}: corrupt observation cache", path.display()));
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], HarnessError> {
        let s = b.get(at..at + n).ok_or_else(bad)?;
        at += n;
        Ok(s)
    };
    if take(4)? != OBS_MAGIC {
        return Err(bad());
    }
    let mut u32s = [0usize; 3];
    for v in &mut u32s {
        *v = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    }
    let [n, bins, channels] = u32s;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut m = ObservationMatrix::zeros(bins, channels);
        for _ in 0..count {
            let e = take(4)?;
            let (t, c) = (u16::from_le_bytes([e[0], e[1]]) as usize, u16::from_le_bytes([e[2], e[3]]) as usize);
            if t >= bins || c >= channels {
                return Err(bad());
            }
            m.set(t, c);
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_s: f64,
    pub train_s: f64,
    pub total_s: f64,
}

/// Scores of one encoding over all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub encoding: EncodingMode,
    pub per_run_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub train_accuracy: Vec<f64>,
    pub converged: Vec<bool>,
    /// Summed over repetitions; rows are true labels.
    pub confusion: Vec<Vec<usize>>,
    /// Digest of the first repetition's features.
    pub feature_digest: String,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ModeResult {
    fn new(encoding: EncodingMode, classes: usize) -> Self {
        ModeResult {
            encoding,
            per_run_accuracy: Vec::new(),
            mean_accuracy: f64::NAN,
            std_accuracy: f64::NAN,
            train_accuracy: Vec::new(),
            converged: Vec::new(),
            confusion: vec![vec![0; classes]; classes],
            feature_digest: String::new(),
        }
    }

    fn add(&mut self, test: &Evaluation, train: &Evaluation, converged: bool) {
        self.per_run_accuracy.push(test.accuracy);
        self.train_accuracy.push(train.accuracy);
        self.converged.push(converged);
        for (acc, row) in self.confusion.iter_mut().zip(&test.confusion) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        (self.mean_accuracy, self.std_accuracy) = mean_std(&self.per_run_accuracy);
    }

    /// True when the stored summary matches the stored per-run values.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.per_run_accuracy);
        m == self.mean_accuracy && s == self.std_accuracy
    }

    pub fn confusion_csv(&self) -> String {
        Evaluation {
            accuracy: self.mean_accuracy,
            confusion: self.confusion.clone(),
        }
        .confusion_csv()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub run_dir: PathBuf,
    pub neurons: usize,
    pub synapses: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Mean spikes per observation window over all simulations.
    pub mean_window_spikes: f64,
    /// One entry per trained encoding; `run_experiment` trains one.
    pub results: Vec<ModeResult>,
    pub resources: ResourceReport,
    pub timings: Timings,
}

impl RunReport {
    pub fn result(&self, mode: EncodingMode) -> Option<&ModeResult> {
        self.results.iter().find(|r| r.encoding == mode)
    }

    /// `encoding,mean,std,run accuracies...` per row.
    pub fn accuracy_csv(&self) -> String {
        let mut s = format!("# config {}\nencoding,mean_accuracy,std_accuracy,per_run\n", self.config_hash);
        for r in &self.results {
            let runs: Vec<String> = r.per_run_accuracy.iter().map(|a| format!("{a:.6}")).collect();
            s += &format!("{},{:.6},{:.6},{}\n", r.encoding, r.mean_accuracy, r.std_accuracy, runs.join(";"));
        }
        s
    }
}

/// The single-encoding pipeline.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    run_with_modes(cfg, &[cfg.encoding])
}

/// Trains rate, latency and combined readouts on the same simulated
/// windows.
pub fn compare_encodings(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    run_with_modes(cfg, &EncodingMode::ALL)
}

/// Marks the run directory as failed while keeping whatever was written.
pub const FAILURE_MARKER: &str = "FAILED";

fn run_with_modes(cfg: &ExperimentConfig, modes: &[EncodingMode]) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    let _ = std::fs::remove_file(dir.join(FAILURE_MARKER));
    let out = execute(cfg, modes, &dir);
    if let Err(e) = &out {
        log::error!("run {} failed: {e}", dir.display());
        std::fs::write(dir.join(FAILURE_MARKER), format!("config {}\n{e}\n", cfg.hash()))?;
    }
    out
}

fn execute(cfg: &ExperimentConfig, modes: &[EncodingMode], dir: &Path) -> Result<RunReport, HarnessError> {
    let hash = cfg.hash();
    let started = Instant::now();
    std::fs::write(dir.join("config.toml"), format!("# config {hash}\n{}", cfg.to_toml()?))?;

    let data = load_dataset(cfg)?;
    let spec = generate(cfg.dims, &cfg.connectivity, Some(cfg.seeds.topology), shd::CHANNELS)?;
    spec.save(&dir.join("network.json"))?;
    let resources = estimate_resources(&spec, true);
    std::fs::write(dir.join("resources.csv"), format!("# config {hash}\n{}", resources.to_csv()))?;
    let network = Arc::new(elaborate(&spec, &cfg.block_config())?);
    log::info!(
        "{} neurons, {} synapses, {} gates; {} train / {} test samples",
        spec.len(),
        spec.synapses.len(),
        network.netlist.gates.len(),
        data.train.len(),
        data.test.len()
    );

    let classes = cfg.dataset.classes.len();
    let mut results: Vec<ModeResult> = modes.iter().map(|&m| ModeResult::new(m, classes)).collect();
    let mut timings = Timings::default();
    let (mut spikes, mut windows) = (0usize, 0usize);
    for repeat in 0..cfg.repeats {
        let t = Instant::now();
        let obs = simulate(cfg, Arc::clone(&network), &data, repeat)?;
        timings.simulate_s += t.elapsed().as_secs_f64();
        for (r, run) in obs.windows.iter().enumerate() {
            spikes += run.iter().map(ObservationMatrix::total).sum::<usize>();
            windows += run.len();
            write_observations(&dir.join(format!("observations-{repeat}-{r}.bin")), run)?;
        }
        if repeat == 0 {
            std::fs::write(dir.join("labels.csv"), obs.labels_csv())?;
            write_raster(dir, &obs.windows[0][obs.split()], spec.len(), &hash)?;
        }

        let t = Instant::now();
        let scaler = obs.scaler()?;
        for res in &mut results {
            let f = obs.features_with(&scaler, res.encoding)?;
            let out = train(&f.x_train, &f.y_train, classes, &cfg.train)?;
            if !out.converged {
                log::warn!("{} readout stopped after {} iterations", res.encoding, out.iterations);
            }
            let test = evaluate(&out.model, &f.x_test, &f.y_test);
            res.add(&test, &evaluate(&out.model, &f.x_train, &f.y_train), out.converged);
            if repeat == 0 {
                res.feature_digest = f.digest();
                Checkpoint {
                    mode: res.encoding,
                    scaler: scaler.clone(),
                    model: out.model,
                }
                .save(&dir.join(format!("model-{}.bin", res.encoding)))?;
            }
        }
        timings.train_s += t.elapsed().as_secs_f64();
    }
    timings.total_s = started.elapsed().as_secs_f64();

    for res in &results {
        std::fs::write(
            dir.join(format!("confusion-{}.csv", res.encoding)),
            format!("# config {hash}\n{}", res.confusion_csv()),
        )?;
    }
    let report = RunReport {
        config_hash: hash,
        run_dir: dir.to_path_buf(),
        neurons: spec.len(),
        synapses: spec.synapses.len(),
        train_samples: data.train.len(),
        test_samples: data.test.len(),
        mean_window_spikes: spikes as f64 / windows.max(1) as f64,
        results,
        resources,
        timings,
    };
    std::fs::write(dir.join("accuracy.csv"), report.accuracy_csv())?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn write_raster(dir: &Path, window: &ObservationMatrix, neurons: usize, hash: &str) -> Result<(), HarnessError> {
    let labels = (0..neurons).map(probe_label).collect();
    let r = RasterWindow::from_matrix(window, labels, CLOCK_STEP * WINDOW_BINS as u64);
    std::fs::write(dir.join("raster.csv"), r.to_csv())?;
    std::fs::write(dir.join("raster.svg"), r.to_svg().replacen('\n', &format!("\n<!-- config {hash} -->\n"), 1))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub dims: GridDims,
    pub neurons: usize,
    pub synapses: usize,
    pub estimate: u64,
    pub law: u64,
    /// `(estimate - law) / law`.
    pub relative_error: f64,
}

/// Resource model against the fitted law for `x × y × z` grids.
pub fn sweep_scaling(
    layers: std::ops::RangeInclusive<u32>,
    params: &ConnectivityParams,
    seed: u64,
) -> Result<Vec<ScalingRow>, HarnessError> {
    let base = GridDims::default();
    layers
        .map(|z| {
            let dims = GridDims { z, ..base };
            let spec = generate(dims, params, Some(seed), shd::CHANNELS)?;
            let estimate = estimate_resources(&spec, true).logic_elements;
            let law = scaling_estimate(spec.len() as u64);
            Ok(ScalingRow {
                dims,
                neurons: spec.len(),
                synapses: spec.synapses.len(),
                estimate,
                law,
                relative_error: (estimate as f64 - law as f64) / law as f64,
            })
        })
        .collect()
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("dims,neurons,synapses,estimate,law,relative_error\n");
    for r in rows {
        s += &format!(
            "{}x{}x{},{},{},{},{},{:.4}\n",
            r.dims.x, r.dims.y, r.dims.z, r.neurons, r.synapses, r.estimate, r.law, r.relative_error
        );
    }
    s
}

/// One window from spike events, for the CLI and examples.
pub fn single_window(
    network: &ElaboratedNetwork,
    events: Vec<SpikeEvent>,
    sigma: f64,
    seed: u64,
) -> Result<(ObservationMatrix, crate::desim::WaveTrace), HarnessError> {
    let input = SpikeTrainInput::new(network.input_ports.len(), events)?;
    let mut nl = network.netlist.clone();
    nl.apply_delay_jitter(sigma, seed);
    Ok(observe(&Arc::new(nl), network, &input)?)
}

/// Duration of one observation window.
pub fn window_duration() -> SimTime {
    CLOCK_STEP * WINDOW_BINS as u64
}

#[cfg(test)]
mod tests;
