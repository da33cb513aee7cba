//! Simulation configuration, class-level means and per-instance manufacturing draws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::NodeFunction;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Stream, StreamIndex};
use crate::topology::Topology;

pub const MAX_RESAMPLE_ATTEMPTS: usize = 1_000;

/// Normalization used when averaging pairwise Hamming distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairNormMode {
    /// Mean over the `n(n-1)/2` unordered pairs.
    #[default]
    PairCount,
    /// Sum over pairs divided by `n(n+1)/2`.
    PaperLiteral,
}

impl std::str::FromStr for PairNormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair-count" => Ok(PairNormMode::PairCount),
            "paper-literal" => Ok(PairNormMode::PaperLiteral),
            other => Err(Error::param(format!(
                "unknown mode `{other}` (expected pair-count or paper-literal)"
            ))),
        }
    }
}

/// Physical and ensemble parameters of a simulation. Times are in nanoseconds;
/// `sigma` is in units of `tau_mean_ns`; `epsilon` is dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tau_mean_ns: f64,
    pub dt_ns: f64,
    pub t_int_ns: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub delay_max_ns: f64,
    pub sample_interval_ns: f64,
    pub discard_ns: f64,
    pub n_classes: usize,
    pub n_instances: usize,
    pub n_challenges: usize,
    pub n_repeats: usize,
    pub n_nodes: usize,
    pub degree: usize,
    pub master_seed: u64,
    pub pair_norm_mode: PairNormMode,
    pub node_function: NodeFunction,
    pub exclude_fixed_point_challenges: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let tau = 0.25;
        SimConfig {
            tau_mean_ns: tau,
            dt_ns: tau / 25.0,
            t_int_ns: 42.0 * tau,
            sigma: 0.05,
            epsilon: 0.01,
            delay_max_ns: 10.0 * tau,
            sample_interval_ns: 2.0 * tau,
            discard_ns: 2.0 * tau,
            n_classes: 15,
            n_instances: 15,
            n_challenges: 15,
            n_repeats: 15,
            n_nodes: 256,
            degree: 3,
            master_seed: 0,
            pair_norm_mode: PairNormMode::PairCount,
            node_function: NodeFunction::Xor,
            exclude_fixed_point_challenges: false,
        }
    }
}

/// Integer step counts derived from a validated [`SimConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGrid {
    pub total_steps: usize,
    pub discard_steps: usize,
    pub sample_stride: usize,
    pub n_samples: usize,
}

impl StepGrid {
    /// Simulation step index of output sample `k` (0-based).
    pub fn sample_step(&self, k: usize) -> usize {
        self.discard_steps + (k + 1) * self.sample_stride
    }
}

fn steps_of(field: &str, value: f64, dt: f64) -> Result<usize> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::config(field, format!("must be finite and non-negative, got {value}")));
    }
    let ratio = value / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::config(
            field,
            format!("{value} ns is not an integer multiple of dt_ns = {dt}"),
        ));
    }
    Ok(n as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<StepGrid> {
        let dt = self.dt_ns;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt_ns", "must be positive"));
        }
        if !(self.tau_mean_ns.is_finite() && self.tau_mean_ns > 0.0) {
            return Err(Error::config("tau_mean_ns", "must be positive"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma", "must be finite and >= 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", "must be finite and >= 0"));
        }
        let total_steps = steps_of("t_int_ns", self.t_int_ns, dt)?;
        let discard_steps = steps_of("discard_ns", self.discard_ns, dt)?;
        let sample_stride = steps_of("sample_interval_ns", self.sample_interval_ns, dt)?;
        steps_of("delay_max_ns", self.delay_max_ns, dt)?;
        if total_steps == 0 {
            return Err(Error::config("t_int_ns", "must be positive"));
        }
        if sample_stride == 0 {
            return Err(Error::config("sample_interval_ns", "must be positive"));
        }
        if discard_steps == 0 {
            return Err(Error::config("discard_ns", "must be positive"));
        }
        if discard_steps >= total_steps {
            return Err(Error::config(
                "discard_ns",
                "must be smaller than t_int_ns (no samples would remain)",
            ));
        }
        let window = total_steps - discard_steps;
        if window % sample_stride != 0 {
            return Err(Error::config(
                "sample_interval_ns",
                "must divide t_int_ns - discard_ns",
            ));
        }
        for (field, v) in [
            ("n_classes", self.n_classes),
            ("n_instances", self.n_instances),
            ("n_challenges", self.n_challenges),
            ("n_repeats", self.n_repeats),
            ("n_nodes", self.n_nodes),
            ("degree", self.degree),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::config("master_seed", "must fit in a signed 64-bit integer"));
        }
        if self.degree >= self.n_nodes {
            return Err(Error::config("degree", "must be less than n_nodes"));
        }
        if (self.n_nodes * self.degree) % 2 != 0 {
            return Err(Error::config("degree", "n_nodes * degree must be even"));
        }
        if self.n_nodes < 64 && self.n_challenges as u128 > 1u128 << self.n_nodes {
            return Err(Error::config("n_challenges", "exceeds 2^n_nodes distinct challenges"));
        }
        Ok(StepGrid {
            total_steps,
            discard_steps,
            sample_stride,
            n_samples: window / sample_stride,
        })
    }

    /// Standard deviation of the manufacturing perturbations, in ns.
    pub fn sigma_ns(&self) -> f64 {
        self.sigma * self.tau_mean_ns
    }

    /// Reported sample times, relative to the end of the discarded window.
    pub fn sample_times_ns(&self) -> Result<Vec<f64>> {
        let grid = self.validate()?;
        Ok((1..=grid.n_samples)
            .map(|k| (k * grid.sample_stride) as f64 * self.dt_ns)
            .collect())
    }
}

/// A circuit netlist: the wiring plus class-mean parameters shared by every chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class_index: usize,
    pub topology: Topology,
    /// Mean delay per directed edge, in [`Topology::edges`] order (ns).
    pub mean_delay_ns: Vec<f64>,
    pub tau_mean_ns: f64,
    pub node_function: Vec<NodeFunction>,
}

/// One chip: exact node time constants and quantized edge delays.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub class_index: usize,
    pub instance_index: usize,
    pub topology: Topology,
    pub node_function: Vec<NodeFunction>,
    /// Per node, ns.
    pub tau_ns: Vec<f64>,
    /// Per directed edge in [`Topology::edges`] order, in steps of `dt`.
    pub delay_steps: Vec<usize>,
}

impl InstanceParams {
    pub fn max_delay_steps(&self) -> usize {
        self.delay_steps.iter().copied().max().unwrap_or(0)
    }
}

/// Rounds `delay / dt` to the nearest integer, ties away from zero.
///
/// Ties are judged after a few-ulp nudge so that decimal halves such as
/// 0.015 / 0.01 (which evaluates to 1.4999999999999998) round up.
pub fn quantize_delay(delay_ns: f64, dt_ns: f64) -> Result<usize> {
    if !(dt_ns > 0.0) {
        return Err(Error::param("dt must be positive"));
    }
    if !(delay_ns >= 0.0) || !delay_ns.is_finite() {
        return Err(Error::param(format!("delay must be finite and >= 0, got {delay_ns}")));
    }
    let ratio = delay_ns / dt_ns;
    Ok((ratio * (1.0 + 4.0 * f64::EPSILON)).round() as usize)
}

pub fn sample_class(topology: Topology, cfg: &SimConfig, class_index: usize, stream: &mut Stream) -> ClassSpec {
    let mean_delay_ns = (0..topology.n_edges())
        .map(|_| cfg.delay_max_ns * stream.random::<f64>())
        .collect();
    let node_function = vec![cfg.node_function; topology.n_nodes()];
    ClassSpec {
        class_index,
        topology,
        mean_delay_ns,
        tau_mean_ns: cfg.tau_mean_ns,
        node_function,
    }
}

fn positive_normal(mean: f64, std: f64, stream: &mut Stream) -> Result<f64> {
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let z: f64 = stream.sample(StandardNormal);
        let v = mean + std * z;
        if v > 0.0 {
            return Ok(v);
        }
    }
    Err(Error::Numerical(format!(
        "no positive draw from N({mean}, {std}^2) after {MAX_RESAMPLE_ATTEMPTS} attempts"
    )))
}

/// Perturbs a class into one instance. Time constants are redrawn until
/// positive; delays take the absolute value and are then quantized to `dt`.
pub fn sample_instance(
    cls: &ClassSpec,
    cfg: &SimConfig,
    instance_index: usize,
    tau_stream: &mut Stream,
    delay_stream: &mut Stream,
) -> Result<InstanceParams> {
    let std = cfg.sigma_ns();
    let tau_ns = (0..cls.topology.n_nodes())
        .map(|_| positive_normal(cls.tau_mean_ns, std, tau_stream))
        .collect::<Result<Vec<_>>>()?;
    let delay_steps = cls
        .mean_delay_ns
        .iter()
        .map(|&mean| {
            let z: f64 = delay_stream.sample(StandardNormal);
            quantize_delay((mean + std * z).abs(), cfg.dt_ns)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InstanceParams {
        class_index: cls.class_index,
        instance_index,
        topology: cls.topology.clone(),
        node_function: cls.node_function.clone(),
        tau_ns,
        delay_steps,
    })
}

/// Draws class `s` from its keyed streams.
pub fn keyed_class(cfg: &SimConfig, s: usize) -> Result<ClassSpec> {
    let mut topo_stream = rng::stream(cfg.master_seed, Purpose::Topology, StreamIndex::class(s));
    let topology = crate::topology::generate_random_regular(cfg.n_nodes, cfg.degree, &mut topo_stream)?;
    let mut delay_stream = rng::stream(cfg.master_seed, Purpose::ClassDelay, StreamIndex::class(s));
    Ok(sample_class(topology, cfg, s, &mut delay_stream))
}

/// Draws instance `i` of `cls` from its keyed streams.
pub fn keyed_instance(cls: &ClassSpec, cfg: &SimConfig, i: usize) -> Result<InstanceParams> {
    let idx = StreamIndex::instance(cls.class_index, i);
    let mut tau_stream = rng::stream(cfg.master_seed, Purpose::InstanceTau, idx);
    let mut delay_stream = rng::stream(cfg.master_seed, Purpose::InstanceDelay, idx);
    sample_instance(cls, cfg, i, &mut tau_stream, &mut delay_stream)
}
