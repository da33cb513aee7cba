//! Class -> instance -> CRP generation and the packed response tensor.

use std::collections::HashSet;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, Trajectory};
use crate::error::{Error, Result};
use crate::params::{keyed_class, keyed_instance, ClassSpec, SimConfig, StepGrid};
use crate::rng::{self, Purpose, Stream, StreamIndex};

/// Number of (s, i, c) tasks integrated between packing passes.
const TASK_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeSet {
    pub challenges: Vec<Vec<bool>>,
}

impl ChallengeSet {
    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }
}

fn random_bits(n_nodes: usize, stream: &mut Stream) -> Vec<bool> {
    let mut bits = Vec::with_capacity(n_nodes);
    while bits.len() < n_nodes {
        let word = stream.next_u64();
        let take = (n_nodes - bits.len()).min(64);
        bits.extend((0..take).map(|j| (word >> j) & 1 == 1));
    }
    bits
}

fn index_bits(value: u64, n_nodes: usize) -> Vec<bool> {
    (0..n_nodes).map(|j| (value >> j) & 1 == 1).collect()
}

/// Draws `n_challenges` distinct uniform challenges of `n_nodes` bits.
pub fn sample_challenges(n_challenges: usize, n_nodes: usize, stream: &mut Stream) -> Result<ChallengeSet> {
    sample_challenges_where(n_challenges, n_nodes, stream, |_| true)
}

/// Like [`sample_challenges`], restricted to challenges accepted by `accept`.
pub fn sample_challenges_where(
    n_challenges: usize,
    n_nodes: usize,
    stream: &mut Stream,
    accept: impl Fn(&[bool]) -> bool,
) -> Result<ChallengeSet> {
    if n_nodes == 0 {
        return Err(Error::param("n_nodes must be positive"));
    }
    if n_nodes < 64 && n_challenges as u128 > 1u128 << n_nodes {
        return Err(Error::param(format!(
            "{n_challenges} distinct challenges requested but only 2^{n_nodes} exist"
        )));
    }
    // Small spaces: enumerate, shuffle, take.
    if n_nodes <= 20 && (n_challenges as u64) * 2 >= 1u64 << n_nodes {
        let mut all: Vec<u64> = (0..1u64 << n_nodes)
            .filter(|&v| accept(&index_bits(v, n_nodes)))
            .collect();
        if all.len() < n_challenges {
            return Err(Error::param(format!(
                "only {} acceptable challenges exist, {n_challenges} requested",
                all.len()
            )));
        }
        for k in (1..all.len()).rev() {
            let j = stream.random_range(0..=k as u64) as usize;
            all.swap(k, j);
        }
        return Ok(ChallengeSet {
            challenges: all[..n_challenges].iter().map(|&v| index_bits(v, n_nodes)).collect(),
        });
    }
    let mut seen = HashSet::with_capacity(n_challenges);
    let mut challenges = Vec::with_capacity(n_challenges);
    let max_draws = 1000 * n_challenges + 1000;
    for _ in 0..max_draws {
        if challenges.len() == n_challenges {
            break;
        }
        let c = random_bits(n_nodes, stream);
        if accept(&c) && seen.insert(c.clone()) {
            challenges.push(c);
        }
    }
    if challenges.len() < n_challenges {
        return Err(Error::param(format!(
            "could not draw {n_challenges} distinct acceptable challenges"
        )));
    }
    Ok(ChallengeSet { challenges })
}

/// True when the challenge reproduces itself under every node function, so the
/// noise-free network never leaves it.
pub fn is_fixed_point(cls: &ClassSpec, challenge: &[bool]) -> bool {
    (0..cls.topology.n_nodes()).all(|n| {
        let inputs: Vec<bool> = cls.topology.pred(n).iter().map(|&m| challenge[m]).collect();
        cls.node_function[n].eval(&inputs) == challenge[n]
    })
}

/// Keyed challenge set for class `s`.
pub fn keyed_challenges(cls: &ClassSpec, cfg: &SimConfig) -> Result<ChallengeSet> {
    let mut stream = rng::stream(cfg.master_seed, Purpose::Challenge, StreamIndex::class(cls.class_index));
    if cfg.exclude_fixed_point_challenges {
        sample_challenges_where(cfg.n_challenges, cfg.n_nodes, &mut stream, |c| !is_fixed_point(cls, c))
    } else {
        sample_challenges(cfg.n_challenges, cfg.n_nodes, &mut stream)
    }
}

/// Keeps the Boolean states at the output sample steps. Returns `[node][sample]`.
pub fn decimate(traj: &Trajectory, cfg: &SimConfig) -> Result<Vec<Vec<bool>>> {
    let grid = cfg.validate()?;
    let n_nodes = traj.n_nodes();
    let mut out = vec![Vec::with_capacity(grid.n_samples); n_nodes];
    for k in 0..grid.n_samples {
        let step = grid.sample_step(k);
        let row = traj
            .times
            .binary_search(&step)
            .map_err(|_| Error::param(format!("trajectory does not cover step {step}")))?;
        for (n, col) in out.iter_mut().enumerate() {
            col.push(traj.bits[row][n]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_classes: usize,
    pub n_instances: usize,
    pub n_challenges: usize,
    pub n_repeats: usize,
    pub n_nodes: usize,
    pub n_times: usize,
}

impl Dims {
    pub fn total_bits(&self) -> u128 {
        [
            self.n_classes,
            self.n_instances,
            self.n_challenges,
            self.n_repeats,
            self.n_nodes,
            self.n_times,
        ]
        .iter()
        .map(|&d| d as u128)
        .product()
    }

    pub fn payload_bytes(&self) -> u128 {
        self.total_bits().div_ceil(8)
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let grid = cfg.validate()?;
        Ok(Dims {
            n_classes: cfg.n_classes,
            n_instances: cfg.n_instances,
            n_challenges: cfg.n_challenges,
            n_repeats: cfg.n_repeats,
            n_nodes: cfg.n_nodes,
            n_times: grid.n_samples,
        })
    }

    #[inline]
    pub fn index(&self, s: usize, i: usize, c: usize, r: usize, n: usize, t: usize) -> usize {
        ((((s * self.n_instances + i) * self.n_challenges + c) * self.n_repeats + r) * self.n_nodes + n)
            * self.n_times
            + t
    }
}

/// Per-class record stored with a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class_index: usize,
    pub n_nodes: usize,
    pub degree: usize,
    /// Undirected edges `[a, b]` with `a < b`, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Mean delay per directed edge `(n <- m)` in canonical order (ns).
    pub mean_delay_ns: Vec<f64>,
    /// Challenges as hex strings, bit `n` in nibble order starting from the last character.
    pub challenges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub config: SimConfig,
    pub classes: Vec<ClassRecord>,
}

/// Boolean responses `X[s, i, c, r, n, t]`, packed LSB-first in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTensor {
    dims: Dims,
    bits: Vec<u8>,
    sample_times_ns: Vec<f64>,
    metadata: Option<DatasetMetadata>,
}

impl ResponseTensor {
    pub fn zeros(dims: Dims, sample_times_ns: Vec<f64>) -> Result<Self> {
        Self::from_payload(dims, sample_times_ns, vec![0u8; dims.payload_bytes() as usize], None)
    }

    pub fn from_payload(
        dims: Dims,
        sample_times_ns: Vec<f64>,
        bits: Vec<u8>,
        metadata: Option<DatasetMetadata>,
    ) -> Result<Self> {
        if sample_times_ns.len() != dims.n_times {
            return Err(Error::Format(format!(
                "{} sample times for {} time columns",
                sample_times_ns.len(),
                dims.n_times
            )));
        }
        if sample_times_ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("sample times must be strictly increasing".into()));
        }
        if bits.len() as u128 != dims.payload_bytes() {
            return Err(Error::Format(format!(
                "payload length mismatch: {} bytes, expected {}",
                bits.len(),
                dims.payload_bytes()
            )));
        }
        Ok(ResponseTensor {
            dims,
            bits,
            sample_times_ns,
            metadata,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn payload(&self) -> &[u8] {
        &self.bits
    }

    pub fn sample_times_ns(&self) -> &[f64] {
        &self.sample_times_ns
    }

    pub fn metadata(&self) -> Option<&DatasetMetadata> {
        self.metadata.as_ref()
    }

    #[inline]
    pub fn get_linear(&self, idx: usize) -> bool {
        (self.bits[idx >> 3] >> (idx & 7)) & 1 == 1
    }

    #[inline]
    pub fn set_linear(&mut self, idx: usize, value: bool) {
        let mask = 1u8 << (idx & 7);
        if value {
            self.bits[idx >> 3] |= mask;
        } else {
            self.bits[idx >> 3] &= !mask;
        }
    }

    pub fn get(&self, s: usize, i: usize, c: usize, r: usize, n: usize, t: usize) -> bool {
        self.get_linear(self.dims.index(s, i, c, r, n, t))
    }

    pub fn set(&mut self, s: usize, i: usize, c: usize, r: usize, n: usize, t: usize, value: bool) {
        let idx = self.dims.index(s, i, c, r, n, t);
        self.set_linear(idx, value);
    }
}

fn challenge_hex(bits: &[bool]) -> String {
    let n_nibbles = bits.len().div_ceil(4);
    (0..n_nibbles)
        .rev()
        .map(|k| {
            let v = (0..4)
                .filter(|&j| bits.get(4 * k + j).copied().unwrap_or(false))
                .fold(0u32, |acc, j| acc | 1 << j);
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

fn class_record(cls: &ClassSpec, challenges: &ChallengeSet) -> ClassRecord {
    let mut edges: Vec<[usize; 2]> = cls
        .topology
        .edges()
        .into_iter()
        .filter(|&(n, m)| m > n)
        .map(|(n, m)| [n, m])
        .collect();
    edges.sort_unstable();
    ClassRecord {
        class_index: cls.class_index,
        n_nodes: cls.topology.n_nodes(),
        degree: cls.topology.degree(),
        edges,
        mean_delay_ns: cls.mean_delay_ns.clone(),
        challenges: challenges.challenges.iter().map(|c| challenge_hex(c)).collect(),
    }
}

/// Integrates all repeats of one (instance, challenge) pair and returns the
/// decimated bits in `[r][n][t]` order.
fn crp_block(
    integrator: &Integrator<'_>,
    challenge: &[bool],
    cfg: &SimConfig,
    grid: &StepGrid,
    s: usize,
    i: usize,
    c: usize,
) -> Result<Vec<u8>> {
    let n_nodes = integrator.n_nodes();
    let t_len = grid.n_samples;
    let mut out = vec![0u8; cfg.n_repeats * n_nodes * t_len];
    for r in 0..cfg.n_repeats {
        let mut noise = rng::stream(cfg.master_seed, Purpose::Noise, StreamIndex::crp(s, i, c, r));
        let base = r * n_nodes * t_len;
        integrator.run(challenge, grid.total_steps, &mut noise, |st| {
            let step = st.step_index();
            if step <= grid.discard_steps || (step - grid.discard_steps) % grid.sample_stride != 0 {
                return;
            }
            let k = (step - grid.discard_steps) / grid.sample_stride - 1;
            for (n, &b) in st.bits().iter().enumerate() {
                out[base + n * t_len + k] = b;
            }
        })?;
    }
    Ok(out)
}

/// Generates the full response tensor for `cfg`. The output depends only on
/// `cfg`, never on the number of worker threads or their scheduling.
pub fn generate_dataset(cfg: &SimConfig) -> Result<ResponseTensor> {
    let grid = cfg.validate()?;
    let dims = Dims::from_config(cfg)?;
    let payload_bytes = usize::try_from(dims.payload_bytes())
        .map_err(|_| Error::param("tensor too large for this platform"))?;

    let classes: Vec<ClassSpec> = (0..cfg.n_classes)
        .into_par_iter()
        .map(|s| keyed_class(cfg, s))
        .collect::<Result<_>>()?;
    let challenge_sets: Vec<ChallengeSet> = classes
        .par_iter()
        .map(|cls| keyed_challenges(cls, cfg))
        .collect::<Result<_>>()?;
    let instances: Vec<Vec<_>> = classes
        .par_iter()
        .map(|cls| {
            (0..cfg.n_instances)
                .map(|i| keyed_instance(cls, cfg, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let integrators: Vec<Vec<Integrator<'_>>> = instances
        .iter()
        .map(|row| row.iter().map(|inst| Integrator::new(inst, cfg)).collect())
        .collect();

    let block_bits = cfg.n_repeats * cfg.n_nodes * grid.n_samples;
    let n_tasks = cfg.n_classes * cfg.n_instances * cfg.n_challenges;
    let mut bits = vec![0u8; payload_bytes];
    for start in (0..n_tasks).step_by(TASK_BLOCK) {
        let end = (start + TASK_BLOCK).min(n_tasks);
        let blocks: Vec<Vec<u8>> = (start..end)
            .into_par_iter()
            .map(|task| {
                let c = task % cfg.n_challenges;
                let i = (task / cfg.n_challenges) % cfg.n_instances;
                let s = task / (cfg.n_challenges * cfg.n_instances);
                crp_block(&integrators[s][i], &challenge_sets[s].challenges[c], cfg, &grid, s, i, c)
            })
            .collect::<Result<_>>()?;
        for (offset, block) in blocks.iter().enumerate() {
            let base = (start + offset) * block_bits;
            for (k, &b) in block.iter().enumerate() {
                if b == 1 {
                    let idx = base + k;
                    bits[idx >> 3] |= 1 << (idx & 7);
                }
            }
        }
    }

    let metadata = DatasetMetadata {
        config: cfg.clone(),
        classes: classes
            .iter()
            .zip(&challenge_sets)
            .map(|(cls, ch)| class_record(cls, ch))
            .collect(),
    };
    ResponseTensor::from_payload(dims, cfg.sample_times_ns()?, bits, Some(metadata))
}
