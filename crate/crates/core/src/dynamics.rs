//! Euler integration of the noisy time-delay node dynamics
//!
//! ```text
//! x_n(t + dt) = x_n(t) + (dt / tau_n) * (-x_n(t) + f_n(y_n(t)) + eps_n(t))
//! y_n(t)      = { X_m(t - delay_nm) : m in pred(n) },   X_m = [x_m >= 0.5]
//! ```
//!
//! Delayed inputs are read from a per-node ring buffer of past Boolean states.
//! All nodes update synchronously: inputs for step `k -> k+1` come from states
//! at step `k` or earlier, so a zero-step delay reads the pre-update bit.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{InstanceParams, SimConfig};
use crate::rng::Stream;

/// Logic function executed by a node on its delayed, thresholded inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFunction {
    #[default]
    Xor,
    Xnor,
}

impl NodeFunction {
    #[inline]
    pub fn eval_parity(self, parity: u8) -> u8 {
        match self {
            NodeFunction::Xor => parity,
            NodeFunction::Xnor => parity ^ 1,
        }
    }

    pub fn eval(self, inputs: &[bool]) -> bool {
        let parity = inputs.iter().fold(0u8, |acc, &b| acc ^ b as u8);
        self.eval_parity(parity) == 1
    }
}

/// Heaviside threshold at 0.5; the boundary maps to 1.
#[inline]
pub fn threshold(x: f64) -> bool {
    x >= 0.5
}

pub fn xor_node(inputs: &[bool]) -> Result<bool> {
    if inputs.is_empty() {
        return Err(Error::param("xor_node needs at least one input"));
    }
    Ok(NodeFunction::Xor.eval(inputs))
}

/// Analog node states plus the Boolean history needed to serve delayed reads.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    x: Vec<f64>,
    /// `slots` rows of `n_nodes` bits; step `k` lives in row `k mod slots`.
    history: Vec<u8>,
    slots: usize,
    step_index: usize,
}

impl NetworkState {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn history_len(&self) -> usize {
        self.slots
    }

    fn slot(&self, step: isize) -> usize {
        step.rem_euclid(self.slots as isize) as usize
    }

    /// Boolean state of `node` at `step`, which must lie within the history window.
    pub fn bit_at(&self, node: usize, step: isize) -> bool {
        debug_assert!(step <= self.step_index as isize);
        debug_assert!(step > self.step_index as isize - self.slots as isize);
        self.history[self.slot(step) * self.n_nodes() + node] == 1
    }

    /// Boolean states at the current step.
    pub fn bits(&self) -> &[u8] {
        let n = self.n_nodes();
        let row = self.slot(self.step_index as isize);
        &self.history[row * n..(row + 1) * n]
    }
}

/// Precomputed per-instance coefficients for repeated integration.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    inst: &'a InstanceParams,
    gain: Vec<f64>,
    edge_start: Vec<usize>,
    pred: Vec<usize>,
    delay: Vec<usize>,
    epsilon: f64,
    slots: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(inst: &'a InstanceParams, cfg: &SimConfig) -> Self {
        let topo = &inst.topology;
        let mut edge_start = Vec::with_capacity(topo.n_nodes() + 1);
        let mut pred = Vec::with_capacity(topo.n_edges());
        edge_start.push(0);
        for ps in topo.pred_lists() {
            pred.extend_from_slice(ps);
            edge_start.push(pred.len());
        }
        Integrator {
            inst,
            gain: inst.tau_ns.iter().map(|&tau| cfg.dt_ns / tau).collect(),
            edge_start,
            pred,
            delay: inst.delay_steps.clone(),
            epsilon: cfg.epsilon,
            slots: inst.max_delay_steps() + 1,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.gain.len()
    }

    #[inline]
    fn parity_of_inputs(&self, node: usize, bit_of: impl Fn(usize, usize) -> u8) -> u8 {
        let mut parity = 0u8;
        for e in self.edge_start[node]..self.edge_start[node + 1] {
            parity ^= bit_of(self.pred[e], self.delay[e]);
        }
        parity
    }

    /// State at `t = 0`: pre-zero history holds the raw challenge bits, and each
    /// node starts at its function evaluated over the challenge bits of its predecessors.
    pub fn initial_state(&self, challenge: &[bool]) -> Result<NetworkState> {
        let n = self.n_nodes();
        if challenge.len() != n {
            return Err(Error::param(format!(
                "challenge has {} bits, network has {n} nodes",
                challenge.len()
            )));
        }
        let raw: Vec<u8> = challenge.iter().map(|&b| b as u8).collect();
        let x: Vec<f64> = (0..n)
            .map(|node| {
                let p = self.parity_of_inputs(node, |m, _| raw[m]);
                self.inst.node_function[node].eval_parity(p) as f64
            })
            .collect();
        let mut history = Vec::with_capacity(self.slots * n);
        for _ in 0..self.slots {
            history.extend_from_slice(&raw);
        }
        let mut state = NetworkState {
            x,
            history,
            slots: self.slots,
            step_index: 0,
        };
        let row = state.slot(0);
        for node in 0..n {
            state.history[row * n + node] = threshold(state.x[node]) as u8;
        }
        Ok(state)
    }

    /// Advances one Euler step, drawing one standard normal per node in node
    /// order when `epsilon > 0`.
    pub fn step(&self, state: &mut NetworkState, noise: &mut Stream, scratch: &mut Vec<u8>) {
        let n = self.n_nodes();
        let k = state.step_index as isize;
        scratch.clear();
        {
            let history = &state.history;
            let slots = state.slots as isize;
            for node in 0..n {
                let p = self.parity_of_inputs(node, |m, d| {
                    let row = (k - d as isize).rem_euclid(slots) as usize;
                    history[row * n + m]
                });
                let drive = self.inst.node_function[node].eval_parity(p) as f64;
                let eps = if self.epsilon > 0.0 {
                    self.epsilon * noise.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let x = &mut state.x[node];
                *x += self.gain[node] * (-*x + drive + eps);
                scratch.push(threshold(*x) as u8);
            }
        }
        state.step_index += 1;
        let row = state.slot(state.step_index as isize);
        state.history[row * n..(row + 1) * n].copy_from_slice(scratch);
    }

    /// Integrates `total_steps` steps from the challenge, calling `observe`
    /// on the initial state and after every step.
    pub fn run(
        &self,
        challenge: &[bool],
        total_steps: usize,
        noise: &mut Stream,
        mut observe: impl FnMut(&NetworkState),
    ) -> Result<NetworkState> {
        let mut state = self.initial_state(challenge)?;
        let mut scratch = Vec::with_capacity(self.n_nodes());
        observe(&state);
        for _ in 0..total_steps {
            self.step(&mut state, noise, &mut scratch);
            observe(&state);
        }
        Ok(state)
    }
}

/// Recorded Boolean (and optionally analog) states of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<usize>,
    pub bits: Vec<Vec<bool>>,
    pub analog: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn n_nodes(&self) -> usize {
        self.bits.first().map_or(0, Vec::len)
    }
}

pub fn initial_state(inst: &InstanceParams, challenge: &[bool], cfg: &SimConfig) -> Result<NetworkState> {
    Integrator::new(inst, cfg).initial_state(challenge)
}

pub fn step(state: &mut NetworkState, inst: &InstanceParams, cfg: &SimConfig, noise: &mut Stream) {
    let integrator = Integrator::new(inst, cfg);
    let mut scratch = Vec::with_capacity(state.n_nodes());
    integrator.step(state, noise, &mut scratch);
}

/// Integrates over `t_int` and records every step, including `t = 0`.
pub fn integrate(
    inst: &InstanceParams,
    challenge: &[bool],
    cfg: &SimConfig,
    noise: &mut Stream,
    keep_analog: bool,
) -> Result<Trajectory> {
    let grid = cfg.validate()?;
    let integrator = Integrator::new(inst, cfg);
    let mut traj = Trajectory {
        times: Vec::with_capacity(grid.total_steps + 1),
        bits: Vec::with_capacity(grid.total_steps + 1),
        analog: keep_analog.then(Vec::new),
    };
    integrator.run(challenge, grid.total_steps, noise, |st| {
        traj.times.push(st.step_index());
        traj.bits.push(st.bits().iter().map(|&b| b == 1).collect());
        if let Some(a) = traj.analog.as_mut() {
            a.push(st.x().to_vec());
        }
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{keyed_class, keyed_instance};
    use crate::rng::{self, Purpose, StreamIndex};
    use crate::topology::Topology;

    fn k4_instance(delay: usize) -> InstanceParams {
        let topology = Topology::from_undirected_edges(4, 3, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        InstanceParams {
            class_index: 0,
            instance_index: 0,
            node_function: vec![NodeFunction::Xor; 4],
            tau_ns: vec![0.25; 4],
            delay_steps: vec![delay; topology.n_edges()],
            topology,
        }
    }

    fn noise() -> Stream {
        rng::stream(0, Purpose::Noise, StreamIndex::default())
    }

    #[test]
    fn threshold_examples() {
        assert!(threshold(0.7));
        assert!(!threshold(0.3));
        assert!(threshold(0.5));
        assert!(!threshold(0.499_999_999));
    }

    #[test]
    fn xor_examples() {
        assert!(!xor_node(&[false, false, false]).unwrap());
        assert!(xor_node(&[true, false, false]).unwrap());
        assert!(xor_node(&[true, true, true]).unwrap());
        assert!(!xor_node(&[true, true, false]).unwrap());
        assert!(xor_node(&[]).is_err());
        assert!(!NodeFunction::Xnor.eval(&[true, false, false]));
    }

    #[test]
    fn initial_state_evaluates_node_function_over_challenge() {
        let cfg = SimConfig::default();
        let inst = k4_instance(5);
        let st = initial_state(&inst, &[false; 4], &cfg).unwrap();
        assert_eq!(st.x(), &[0.0; 4]);
        let st = initial_state(&inst, &[true, false, false, false], &cfg).unwrap();
        assert_eq!(st.x(), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(st.bits(), &[0, 1, 1, 1]);
        // Pre-zero history holds the raw challenge.
        assert!(st.bit_at(0, -1));
        assert!(!st.bit_at(1, -5));
        assert_eq!(st, initial_state(&inst, &[true, false, false, false], &cfg).unwrap());
        assert!(initial_state(&inst, &[true; 3], &cfg).is_err());
    }

    fn pair_instance() -> InstanceParams {
        // Two nodes feeding each other with zero delay.
        let topology = Topology::from_undirected_edges(2, 1, &[(0, 1)]);
        InstanceParams {
            class_index: 0,
            instance_index: 0,
            node_function: vec![NodeFunction::Xor; 2],
            tau_ns: vec![0.25; 2],
            delay_steps: vec![0, 0],
            topology,
        }
    }

    #[test]
    fn euler_step_substitution() {
        let cfg = SimConfig {
            epsilon: 0.0,
            ..SimConfig::default()
        };
        // x = 0, f = 1 -> 0.04
        let inst = pair_instance();
        let mut st = initial_state(&inst, &[false, false], &cfg).unwrap();
        st.history.iter_mut().for_each(|b| *b = 1);
        st.x = vec![0.0, 1.0];
        step(&mut st, &inst, &cfg, &mut noise());
        assert!((st.x()[0] - 0.04).abs() < 1e-15);
        // x = 1, f = 1 -> fixed point
        assert_eq!(st.x()[1], 1.0);
        // x = 0.5, f = 0 -> 0.48
        let mut st = initial_state(&inst, &[false, false], &cfg).unwrap();
        st.x = vec![0.5, 0.5];
        step(&mut st, &inst, &cfg, &mut noise());
        assert!((st.x()[0] - 0.48).abs() < 1e-15);
    }

    #[test]
    fn all_zero_challenge_is_a_fixed_point() {
        let cfg = SimConfig {
            epsilon: 0.0,
            n_nodes: 32,
            ..SimConfig::default()
        };
        let cls = keyed_class(&cfg, 0).unwrap();
        let inst = keyed_instance(&cls, &cfg, 0).unwrap();
        let traj = integrate(&inst, &[false; 32], &cfg, &mut noise(), true).unwrap();
        assert_eq!(traj.times.len(), 1051);
        assert!(traj.bits.iter().flatten().all(|&b| !b));
        assert!(traj.analog.unwrap().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn delayed_chain_matches_hand_schedule() {
        // Node 0 <- node 1 with delay da, node 1 <- node 0 with delay db; tau = 0.25, dt = 0.01.
        // Challenge [1, 0]: x(0) = [0, 1]; node 0 sees challenge bit 0 until step da, then
        // node 1's 1. With gain 0.04 a node crosses 0.5 after 17 updates (0.96^16 > 0.5 > 0.96^17).
        let cfg = SimConfig {
            epsilon: 0.0,
            ..SimConfig::default()
        };
        for (da, db) in [(0usize, 0usize), (3, 7), (40, 5), (12, 12)] {
            let topology = Topology::from_undirected_edges(2, 1, &[(0, 1)]);
            let inst = InstanceParams {
                class_index: 0,
                instance_index: 0,
                node_function: vec![NodeFunction::Xor; 2],
                tau_ns: vec![0.25; 2],
                delay_steps: vec![da, db],
                topology,
            };
            let traj = integrate(&inst, &[true, false], &cfg, &mut noise(), false).unwrap();
            let first_one_0 = traj.bits.iter().position(|b| b[0]).unwrap();
            let first_zero_1 = traj.bits.iter().position(|b| !b[1]).unwrap();
            assert_eq!(first_one_0, da + 17, "da={da}");
            assert_eq!(first_zero_1, db + 17, "db={db}");
        }
    }

    #[test]
    fn noise_free_runs_are_deterministic_and_bounded() {
        let cfg = SimConfig {
            epsilon: 0.0,
            n_nodes: 64,
            ..SimConfig::default()
        };
        let cls = keyed_class(&cfg, 3).unwrap();
        let inst = keyed_instance(&cls, &cfg, 0).unwrap();
        let challenge: Vec<bool> = (0..64).map(|k| k % 3 == 0).collect();
        let a = integrate(&inst, &challenge, &cfg, &mut noise(), true).unwrap();
        let b = integrate(&inst, &challenge, &cfg, &mut noise(), true).unwrap();
        assert_eq!(a, b);
        assert!(a.analog.unwrap().iter().flatten().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn noise_changes_trajectories() {
        let cfg = SimConfig {
            epsilon: 0.05,
            n_nodes: 64,
            ..SimConfig::default()
        };
        let cls = keyed_class(&cfg, 0).unwrap();
        let inst = keyed_instance(&cls, &cfg, 0).unwrap();
        let challenge: Vec<bool> = (0..64).map(|k| k % 2 == 0).collect();
        let mut s1 = rng::stream(0, Purpose::Noise, StreamIndex::crp(0, 0, 0, 0));
        let mut s2 = rng::stream(0, Purpose::Noise, StreamIndex::crp(0, 0, 0, 1));
        let a = integrate(&inst, &challenge, &cfg, &mut s1, true).unwrap();
        let b = integrate(&inst, &challenge, &cfg, &mut s2, true).unwrap();
        assert_ne!(a.analog, b.analog);
    }

    #[test]
    fn history_covers_longest_delay() {
        let inst = k4_instance(9);
        let st = initial_state(&inst, &[true; 4], &SimConfig::default()).unwrap();
        assert_eq!(st.history_len(), 10);
    }
}
