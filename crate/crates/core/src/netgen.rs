// SPDX-License-Identifier: Apache-2.0

//! Grid-based reservoir topology: neuron typing, distance-dependent random
//! connectivity, Dale-consistent signed weights and noisy axonal delays.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desim::SimTime;
use crate::neuroblocks::{Sign, TAU_P};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetgenError {
    #[error("grid {0:?} has {1} receptive cells, fewer than {2} input channels")]
    TooFewReceptive(GridDims, usize, usize),
    #[error("a seed is required for reproducible generation")]
    MissingSeed,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported connectome format version {0}")]
    Version(u32),
    #[error("malformed network: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl GridDims {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        GridDims { x, y, z }
    }

    pub fn len(&self) -> usize {
        (self.x * self.y * self.z) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layer_len(&self) -> usize {
        (self.x * self.y) as usize
    }

    /// Position of neuron `id`; ids run column-fastest, then row, then layer.
    pub fn position(&self, id: usize) -> GridPosition {
        let id = id as u32;
        GridPosition {
            x: id % self.x,
            y: (id / self.x) % self.y,
            z: id / (self.x * self.y),
        }
    }
}

impl Default for GridDims {
    fn default() -> Self {
        GridDims::new(7, 7, 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPosition {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl GridPosition {
    pub fn distance(&self, other: &GridPosition) -> f64 {
        let d = |a: u32, b: u32| f64::from(a) - f64::from(b);
        (d(self.x, other.x).powi(2) + d(self.y, other.y).powi(2) + d(self.z, other.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    Excitatory,
    Inhibitory,
    Receptive,
}

impl NeuronKind {
    pub fn capacity(self) -> u32 {
        match self {
            NeuronKind::Receptive => 2,
            _ => 4,
        }
    }

    /// Dale's principle: receptive neurons are excitatory.
    pub fn sign(self) -> Sign {
        match self {
            NeuronKind::Inhibitory => Sign::Inhibitory,
            _ => Sign::Excitatory,
        }
    }

    fn index(self) -> usize {
        match self {
            NeuronKind::Excitatory => 0,
            NeuronKind::Inhibitory => 1,
            NeuronKind::Receptive => 2,
        }
    }
}

/// Connectivity scale per ordered (pre, post) kind pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub ee: f64,
    pub ei: f64,
    pub er: f64,
    pub ie: f64,
    pub ii: f64,
    pub ir: f64,
    pub re: f64,
    pub ri: f64,
    pub rr: f64,
}

impl GammaTable {
    pub fn get(&self, pre: NeuronKind, post: NeuronKind) -> f64 {
        let t = [
            [self.ee, self.ei, self.er],
            [self.ie, self.ii, self.ir],
            [self.re, self.ri, self.rr],
        ];
        t[pre.index()][post.index()]
    }

    pub fn zero() -> Self {
        GammaTable {
            ee: 0.0,
            ei: 0.0,
            er: 0.0,
            ie: 0.0,
            ii: 0.0,
            ir: 0.0,
            re: 0.0,
            ri: 0.0,
            rr: 0.0,
        }
    }

    fn all(&self) -> [f64; 9] {
        [
            self.ee, self.ei, self.er, self.ie, self.ii, self.ir, self.re, self.ri, self.rr,
        ]
    }
}

impl Default for GammaTable {
    fn default() -> Self {
        GammaTable {
            ee: 0.15,
            ei: 0.3,
            ie: 0.3,
            re: 0.3,
            ri: 0.3,
            ..GammaTable::zero()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityParams {
    pub gamma: GammaTable,
    pub lambda: f64,
    /// Delay per unit grid distance.
    pub delay_per_unit: SimTime,
    /// Standard deviation of the additive Gaussian delay noise, in ps.
    pub delay_sigma_ps: f64,
    pub inhibitory_fraction: f64,
    /// Weights are drawn uniformly from this set.
    pub weights: Vec<u32>,
}

impl Eq for ConnectivityParams {}

impl Default for ConnectivityParams {
    fn default() -> Self {
        ConnectivityParams {
            gamma: GammaTable::default(),
            lambda: 2.2,
            delay_per_unit: TAU_P * 20,
            delay_sigma_ps: 3.0 * TAU_P.as_ps() as f64,
            inhibitory_fraction: 0.2,
            weights: vec![1, 2],
        }
    }
}

impl ConnectivityParams {
    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.gamma.all().iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(NetgenError::InvalidParams("every gamma must lie in [0, 1]".into()));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(NetgenError::InvalidParams("lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.inhibitory_fraction) {
            return Err(NetgenError::InvalidParams("inhibitory fraction outside [0, 1]".into()));
        }
        if self.weights.is_empty() || self.weights.contains(&0) {
            return Err(NetgenError::InvalidParams("weights must be a non-empty set of positive integers".into()));
        }
        if self.delay_sigma_ps < 0.0 {
            return Err(NetgenError::InvalidParams("delay sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// `gamma * exp(-|a-b|^2 / lambda^2)`, clamped to [0, 1].
pub fn connection_probability(
    a: &GridPosition,
    b: &GridPosition,
    gamma: f64,
    lambda: f64,
) -> f64 {
    let d2 = a.distance(b).powi(2);
    (gamma * (-d2 / (lambda * lambda)).exp()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neuron {
    pub id: u32,
    pub position: GridPosition,
    pub kind: NeuronKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: u32,
    pub post: u32,
    pub weight: u32,
    pub sign: Sign,
    pub delay: SimTime,
}

/// The generated connectome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub format_version: u32,
    pub dims: GridDims,
    pub params: ConnectivityParams,
    pub seed: u64,
    pub neurons: Vec<Neuron>,
    pub synapses: Vec<Synapse>,
    /// `input_map[channel]` = receptive neuron id.
    pub input_map: Vec<u32>,
}

impl NetworkSpec {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn count(&self, kind: NeuronKind) -> usize {
        self.neurons.iter().filter(|n| n.kind == kind).count()
    }

    /// Structural checks on a spec that may have been edited by hand.
    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.format_version != FORMAT_VERSION {
            return Err(NetgenError::Version(self.format_version));
        }
        let n = self.neurons.len() as u32;
        for (i, neuron) in self.neurons.iter().enumerate() {
            if neuron.id as usize != i {
                return Err(NetgenError::Malformed(format!("neuron {i} has id {}", neuron.id)));
            }
        }
        for s in &self.synapses {
            if s.pre >= n || s.post >= n {
                return Err(NetgenError::Malformed(format!("synapse {}->{} out of range", s.pre, s.post)));
            }
            if s.pre == s.post {
                return Err(NetgenError::Malformed(format!("self-loop on {}", s.pre)));
            }
            if s.weight == 0 {
                return Err(NetgenError::Malformed("zero weight".into()));
            }
            if s.sign != self.neurons[s.pre as usize].kind.sign() {
                return Err(NetgenError::Malformed(format!("synapse from {} violates Dale's principle", s.pre)));
            }
            if s.delay.as_ps() % TAU_P.as_ps() != 0 {
                return Err(NetgenError::Malformed(format!("delay {} is not a multiple of tau_p", s.delay)));
            }
        }
        for &r in &self.input_map {
            if r >= n || self.neurons[r as usize].kind != NeuronKind::Receptive {
                return Err(NetgenError::Malformed(format!("input map targets non-receptive neuron {r}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, NetgenError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetgenError> {
        let spec: NetworkSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetgenError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetgenError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Dense delay (ps, 0 = absent) and signed weight matrices, indexed
/// `[pre][post]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrices {
    pub delay_ps: Vec<Vec<u64>>,
    pub weight: Vec<Vec<i32>>,
}

pub fn adjacency_matrices(spec: &NetworkSpec) -> AdjacencyMatrices {
    let n = spec.len();
    let mut delay_ps = vec![vec![0u64; n]; n];
    let mut weight = vec![vec![0i32; n]; n];
    for s in &spec.synapses {
        let w = s.weight as i32;
        weight[s.pre as usize][s.post as usize] = match s.sign {
            Sign::Excitatory => w,
            Sign::Inhibitory => -w,
        };
        delay_ps[s.pre as usize][s.post as usize] = s.delay.as_ps();
    }
    AdjacencyMatrices { delay_ps, weight }
}

impl AdjacencyMatrices {
    pub fn delay_csv(&self) -> String {
        matrix_csv(&self.delay_ps)
    }

    pub fn weight_csv(&self) -> String {
        matrix_csv(&self.weight)
    }
}

fn matrix_csv<T: ToString>(m: &[Vec<T>]) -> String {
    let mut s = String::new();
    for row in m {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Rounds to the nearest multiple of `tau_p`, at least one `tau_p`.
pub fn quantize_delay(ps: f64, tau_p: SimTime) -> SimTime {
    let pairs = (ps / tau_p.as_ps() as f64).round().max(1.0) as u64;
    tau_p * pairs
}

/// Draws the synapse (if any) for one ordered neuron pair.
pub fn sample_connection<R: Rng>(
    rng: &mut R,
    pre: &Neuron,
    post: &Neuron,
    params: &ConnectivityParams,
) -> Option<Synapse> {
    let gamma = params.gamma.get(pre.kind, post.kind);
    if gamma <= 0.0 || pre.id == post.id {
        return None;
    }
    let p = connection_probability(&pre.position, &post.position, gamma, params.lambda);
    if rng.gen::<f64>() >= p {
        return None;
    }
    let weight = *params.weights.choose(rng).expect("non-empty weight set");
    let d = pre.position.distance(&post.position);
    let noise = if params.delay_sigma_ps > 0.0 {
        Normal::new(0.0, params.delay_sigma_ps)
            .expect("finite sigma")
            .sample(rng)
    } else {
        0.0
    };
    let delay = quantize_delay(params.delay_per_unit.as_ps() as f64 * d + noise, TAU_P);
    Some(Synapse {
        pre: pre.id,
        post: post.id,
        weight,
        sign: pre.kind.sign(),
        delay,
    })
}

/// Generates a reservoir over `dims`; layer z = 0 is receptive and takes
/// `input_channels` channels in row-column order.
pub fn generate(
    dims: GridDims,
    params: &ConnectivityParams,
    seed: Option<u64>,
    input_channels: usize,
) -> Result<NetworkSpec, NetgenError> {
    let seed = seed.ok_or(NetgenError::MissingSeed)?;
    params.validate()?;
    if dims.layer_len() < input_channels || dims.z == 0 {
        return Err(NetgenError::TooFewReceptive(
            dims,
            if dims.z == 0 { 0 } else { dims.layer_len() },
            input_channels,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.len();
    let receptive = dims.layer_len();
    let mut kinds = vec![NeuronKind::Receptive; receptive];
    kinds.resize(n, NeuronKind::Excitatory);
    let n_inh = (params.inhibitory_fraction * (n - receptive) as f64).round() as usize;
    let mut rest: Vec<usize> = (receptive..n).collect();
    rest.shuffle(&mut rng);
    for &i in &rest[..n_inh] {
        kinds[i] = NeuronKind::Inhibitory;
    }
    let neurons: Vec<Neuron> = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| Neuron {
            id: i as u32,
            position: dims.position(i),
            kind,
        })
        .collect();
    let mut synapses = Vec::new();
    for pre in &neurons {
        for post in &neurons {
            if let Some(s) = sample_connection(&mut rng, pre, post, params) {
                synapses.push(s);
            }
        }
    }
    Ok(NetworkSpec {
        format_version: FORMAT_VERSION,
        dims,
        params: params.clone(),
        seed,
        neurons,
        synapses,
        input_map: (0..input_channels as u32).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_net(seed: u64) -> NetworkSpec {
        generate(GridDims::default(), &ConnectivityParams::default(), Some(seed), 49).unwrap()
    }

    #[test]
    fn zero_gamma_gives_zero_probability() {
        let p = ConnectivityParams::default();
        let a = GridPosition { x: 0, y: 0, z: 1 };
        let b = GridPosition { x: 1, y: 0, z: 1 };
        assert_eq!(p.gamma.get(NeuronKind::Inhibitory, NeuronKind::Inhibitory), 0.0);
        assert_eq!(connection_probability(&a, &b, 0.0, 2.2), 0.0);
        for post in [NeuronKind::Receptive] {
            for pre in [NeuronKind::Excitatory, NeuronKind::Inhibitory, NeuronKind::Receptive] {
                assert_eq!(p.gamma.get(pre, post), 0.0);
            }
        }
    }

    #[test]
    fn probability_at_lambda_distance() {
        // distance sqrt(4 + 0.84) is awkward on a grid; evaluate the formula directly
        let a = GridPosition { x: 0, y: 0, z: 0 };
        let near = connection_probability(&a, &a, 0.3, 2.2);
        assert_eq!(near, 0.3);
        let p = 0.15 * (-(2.2f64 * 2.2) / (2.2 * 2.2)).exp();
        assert!((p - 0.055_181).abs() < 1e-6);
        let b = GridPosition { x: 2, y: 0, z: 0 };
        let expect = 0.15 * (-4.0f64 / 4.84).exp();
        assert!((connection_probability(&a, &b, 0.15, 2.2) - expect).abs() < 1e-15);
    }

    #[test]
    fn paper_grid_counts() {
        let net = paper_net(1);
        assert_eq!(net.len(), 196);
        assert_eq!(net.count(NeuronKind::Receptive), 49);
        assert_eq!(net.count(NeuronKind::Inhibitory), 29);
        assert_eq!(net.count(NeuronKind::Excitatory), 118);
        assert!(net.neurons[..49].iter().all(|n| n.position.z == 0 && n.kind == NeuronKind::Receptive));
    }

    #[test]
    fn input_map_is_row_column_order() {
        let net = paper_net(3);
        for (ch, &id) in net.input_map.iter().enumerate() {
            let p = net.neurons[id as usize].position;
            assert_eq!((p.y * 7 + p.x) as usize, ch);
            assert_eq!(p.z, 0);
        }
    }

    #[test]
    fn missing_seed_is_an_error() {
        assert!(matches!(
            generate(GridDims::default(), &ConnectivityParams::default(), None, 49),
            Err(NetgenError::MissingSeed)
        ));
    }

    #[test]
    fn too_few_receptive_cells() {
        assert!(matches!(
            generate(GridDims::new(3, 3, 2), &ConnectivityParams::default(), Some(1), 49),
            Err(NetgenError::TooFewReceptive(..))
        ));
    }

    #[test]
    fn nearest_neighbour_without_noise_is_twenty_pairs() {
        let params = ConnectivityParams {
            delay_sigma_ps: 0.0,
            gamma: GammaTable {
                ee: 1.0,
                ..GammaTable::zero()
            },
            lambda: 1e6,
            ..Default::default()
        };
        let a = Neuron {
            id: 0,
            position: GridPosition { x: 0, y: 0, z: 1 },
            kind: NeuronKind::Excitatory,
        };
        let b = Neuron {
            id: 1,
            position: GridPosition { x: 0, y: 1, z: 1 },
            kind: NeuronKind::Excitatory,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_connection(&mut rng, &a, &b, &params).unwrap();
        assert_eq!(s.delay, SimTime(11_200));
    }

    #[test]
    fn all_zero_gamma_gives_no_synapses() {
        let params = ConnectivityParams {
            gamma: GammaTable::zero(),
            ..Default::default()
        };
        let net = generate(GridDims::default(), &params, Some(5), 49).unwrap();
        assert!(net.synapses.is_empty());
    }

    #[test]
    fn adjacency_signs_follow_dale() {
        let net = paper_net(11);
        let m = adjacency_matrices(&net);
        for (i, row) in m.weight.iter().enumerate() {
            let kind = net.neurons[i].kind;
            for &w in row {
                match kind {
                    NeuronKind::Inhibitory => assert!(w <= 0),
                    _ => assert!(w >= 0),
                }
            }
        }
        // nothing connects to receptive neurons
        for row in &m.weight {
            assert!(row[..49].iter().all(|w| *w == 0));
        }
        assert!(net.synapses.iter().any(|s| s.sign == Sign::Inhibitory && s.weight == 2));
        let s = net
            .synapses
            .iter()
            .find(|s| s.sign == Sign::Inhibitory && s.weight == 2)
            .unwrap();
        assert_eq!(m.weight[s.pre as usize][s.post as usize], -2);
    }

    #[test]
    fn empty_network_matrices_are_zero() {
        let params = ConnectivityParams {
            gamma: GammaTable::zero(),
            ..Default::default()
        };
        let net = generate(GridDims::new(7, 7, 1), &params, Some(0), 49).unwrap();
        let m = adjacency_matrices(&net);
        assert!(m.weight.iter().flatten().all(|w| *w == 0));
        assert!(m.delay_ps.iter().flatten().all(|d| *d == 0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = paper_net(42).to_json().unwrap();
        let b = paper_net(42).to_json().unwrap();
        let c = paper_net(43).to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let net = paper_net(9);
        let back = NetworkSpec::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        let mut bad = net.clone();
        bad.format_version = 99;
        assert!(matches!(
            NetworkSpec::from_json(&bad.to_json().unwrap()),
            Err(NetgenError::Version(99))
        ));
    }

    #[test]
    fn delays_are_quantized_and_positive() {
        let net = paper_net(2);
        assert!(!net.synapses.is_empty());
        for s in &net.synapses {
            assert!(s.delay >= TAU_P);
            assert_eq!(s.delay.as_ps() % TAU_P.as_ps(), 0);
            assert_ne!(s.pre, s.post);
        }
        assert_eq!(quantize_delay(-5_000.0, TAU_P), TAU_P);
        assert_eq!(quantize_delay(839.0, TAU_P), TAU_P);
        assert_eq!(quantize_delay(841.0, TAU_P), TAU_P * 2);
    }
}
