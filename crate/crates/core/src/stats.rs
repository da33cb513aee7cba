//! Uniqueness, reliability and derived PUF statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{generate_dataset, ResponseTensor};
use crate::error::{Error, Result};
use crate::params::{PairNormMode, SimConfig};

/// Number of pairs the pairwise sum is divided by.
pub fn pair_normalizer(n: usize, mode: PairNormMode) -> f64 {
    let n = n as f64;
    match mode {
        PairNormMode::PairCount => n * (n - 1.0) / 2.0,
        PairNormMode::PaperLiteral => n * (n + 1.0) / 2.0,
    }
}

/// Sum of `|X_j - X_j'|` over unordered pairs `j < j'`, divided per `mode`.
pub fn pairwise_mean_distance(values: &[bool], mode: PairNormMode) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::param("pairwise distance needs at least two values"));
    }
    let ones = values.iter().filter(|&&b| b).count();
    Ok(disagreeing_pairs(ones, values.len()) as f64 / pair_normalizer(values.len(), mode))
}

/// For binary values, the pairs that differ are exactly the (one, zero) pairs.
#[inline]
fn disagreeing_pairs(ones: usize, n: usize) -> usize {
    ones * (n - ones)
}

/// Which tensor axis the pairwise distance runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairAxis {
    Instance,
    Repeat,
}

fn pairwise_series(x: &ResponseTensor, mode: PairNormMode, axis: PairAxis) -> Result<Vec<Vec<f64>>> {
    let d = x.dims();
    let (n_pair, name) = match axis {
        PairAxis::Instance => (d.n_instances, "n_instances"),
        PairAxis::Repeat => (d.n_repeats, "n_repeats"),
    };
    if n_pair < 2 {
        return Err(Error::param(format!("{name} must be >= 2, got {n_pair}")));
    }
    let norm = pair_normalizer(n_pair, mode);
    let pair_stride = match axis {
        PairAxis::Instance => d.index(0, 1, 0, 0, 0, 0),
        PairAxis::Repeat => d.index(0, 0, 0, 1, 0, 0),
    };
    // Linear index of (pair member 0, t = 0) for every averaged-over tuple.
    let bases = |s: usize| -> Vec<usize> {
        let mut out = Vec::new();
        match axis {
            PairAxis::Instance => {
                for c in 0..d.n_challenges {
                    for r in 0..d.n_repeats {
                        out.extend((0..d.n_nodes).map(|n| d.index(s, 0, c, r, n, 0)));
                    }
                }
            }
            PairAxis::Repeat => {
                for i in 0..d.n_instances {
                    for c in 0..d.n_challenges {
                        out.extend((0..d.n_nodes).map(|n| d.index(s, i, c, 0, n, 0)));
                    }
                }
            }
        }
        out
    };
    let per_class = (0..d.n_classes)
        .into_par_iter()
        .map(|s| {
            let bases = bases(s);
            let mut sums = vec![0usize; d.n_times];
            for &base in &bases {
                for (t, sum) in sums.iter_mut().enumerate() {
                    let ones = (0..n_pair)
                        .filter(|&j| x.get_linear(base + t + j * pair_stride))
                        .count();
                    *sum += disagreeing_pairs(ones, n_pair);
                }
            }
            sums.into_iter()
                .map(|sum| sum as f64 / norm / bases.len() as f64)
                .collect()
        })
        .collect();
    Ok(per_class)
}

/// Per-class uniqueness `mu_inter[s][t]`: pairwise distance over instances,
/// averaged over challenges, repeats and nodes.
pub fn uniqueness(x: &ResponseTensor, mode: PairNormMode) -> Result<Vec<Vec<f64>>> {
    pairwise_series(x, mode, PairAxis::Instance)
}

/// Per-class reliability `mu_intra[s][t]`: pairwise distance over repeats,
/// averaged over instances, challenges and nodes.
pub fn reliability(x: &ResponseTensor, mode: PairNormMode) -> Result<Vec<Vec<f64>>> {
    pairwise_series(x, mode, PairAxis::Repeat)
}

/// Index of the largest value; ties go to the earliest index.
pub fn argmax_earliest(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((k, v)),
        }
    }
    best.map(|(k, _)| k)
}

/// Mean and sample standard deviation across classes at each time.
pub fn class_mean_std(per_class: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n_s = per_class.len();
    let n_t = per_class.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; n_t];
    let mut std = vec![0.0; n_t];
    if n_s == 0 {
        return (mean, std);
    }
    for t in 0..n_t {
        let m = per_class.iter().map(|row| row[t]).sum::<f64>() / n_s as f64;
        mean[t] = m;
        if n_s > 1 {
            let var = per_class.iter().map(|row| (row[t] - m).powi(2)).sum::<f64>() / (n_s - 1) as f64;
            std[t] = var.sqrt();
        }
    }
    (mean, std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSeries {
    pub mu_inter: Vec<f64>,
    pub mu_intra: Vec<f64>,
    pub delta_mu: Vec<f64>,
    pub t_opt_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub mu_inter_mean: Vec<f64>,
    pub mu_inter_std: Vec<f64>,
    pub mu_intra_mean: Vec<f64>,
    pub mu_intra_std: Vec<f64>,
    pub delta_mu_mean: Vec<f64>,
    pub delta_mu_std: Vec<f64>,
    pub t_opt_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSeries {
    pub sample_times_ns: Vec<f64>,
    pub per_class: Vec<ClassSeries>,
    pub ensemble: EnsembleSeries,
}

impl StatsSeries {
    /// Builds the full series from per-class uniqueness and reliability curves,
    /// filling in `delta_mu` and `t_opt`.
    pub fn from_curves(sample_times_ns: Vec<f64>, inter: Vec<Vec<f64>>, intra: Vec<Vec<f64>>) -> Result<Self> {
        if inter.len() != intra.len() || inter.is_empty() {
            return Err(Error::param("need matching, non-empty per-class curves"));
        }
        let n_t = sample_times_ns.len();
        if n_t == 0 {
            return Err(Error::param("no sample times"));
        }
        if inter.iter().chain(&intra).any(|row| row.len() != n_t) {
            return Err(Error::param("curve length does not match sample times"));
        }
        let per_class: Vec<ClassSeries> = inter
            .into_iter()
            .zip(intra)
            .map(|(mu_inter, mu_intra)| {
                let delta_mu: Vec<f64> = mu_inter.iter().zip(&mu_intra).map(|(a, b)| a - b).collect();
                let t_opt_index = argmax_earliest(&delta_mu).expect("non-empty");
                ClassSeries {
                    mu_inter,
                    mu_intra,
                    delta_mu,
                    t_opt_index,
                }
            })
            .collect();
        let collect = |f: fn(&ClassSeries) -> &Vec<f64>| -> Vec<Vec<f64>> { per_class.iter().map(|c| f(c).clone()).collect() };
        let (mu_inter_mean, mu_inter_std) = class_mean_std(&collect(|c| &c.mu_inter));
        let (mu_intra_mean, mu_intra_std) = class_mean_std(&collect(|c| &c.mu_intra));
        let (delta_mu_mean, delta_mu_std) = class_mean_std(&collect(|c| &c.delta_mu));
        let t_opt_index = argmax_earliest(&delta_mu_mean).expect("non-empty");
        Ok(StatsSeries {
            sample_times_ns,
            per_class,
            ensemble: EnsembleSeries {
                mu_inter_mean,
                mu_inter_std,
                mu_intra_mean,
                mu_intra_std,
                delta_mu_mean,
                delta_mu_std,
                t_opt_index,
            },
        })
    }

    pub fn t_opt_ns(&self) -> f64 {
        self.sample_times_ns[self.ensemble.t_opt_index]
    }

    pub fn class_t_opt_ns(&self, s: usize) -> f64 {
        self.sample_times_ns[self.per_class[s].t_opt_index]
    }
}

/// Uniqueness, reliability, `delta_mu` and `t_opt` for every class and the ensemble.
pub fn compute_stats(x: &ResponseTensor, mode: PairNormMode) -> Result<StatsSeries> {
    let inter = uniqueness(x, mode)?;
    let intra = reliability(x, mode)?;
    StatsSeries::from_curves(x.sample_times_ns().to_vec(), inter, intra)
}

/// Per-class curves of a single statistic on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub sample_times_ns: Vec<f64>,
    pub per_class: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZReport {
    /// `None` where the combined standard deviation is zero.
    pub z: Vec<Option<f64>>,
    pub z_rms: f64,
    pub undefined_times_ns: Vec<f64>,
}

const TIME_TOLERANCE_NS: f64 = 1e-9;

pub fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TIME_TOLERANCE_NS)
}

/// Z-score of class-ensemble means, `(mean_a - mean_b) / sqrt(std_a^2 + std_b^2)`,
/// and its root-mean-square over the times where it is defined.
pub fn z_compare(a: &SeriesSet, b: &SeriesSet) -> Result<ZReport> {
    if !same_grid(&a.sample_times_ns, &b.sample_times_ns) {
        return Err(Error::Incompatible(format!(
            "{} vs {} sample times, or values differ",
            a.sample_times_ns.len(),
            b.sample_times_ns.len()
        )));
    }
    if a.per_class.is_empty() || b.per_class.is_empty() {
        return Err(Error::param("both series sets need at least one class"));
    }
    let (mean_a, std_a) = class_mean_std(&a.per_class);
    let (mean_b, std_b) = class_mean_std(&b.per_class);
    let mut z = Vec::with_capacity(mean_a.len());
    let mut undefined = Vec::new();
    for t in 0..mean_a.len() {
        let combined = (std_a[t].powi(2) + std_b[t].powi(2)).sqrt();
        if combined > 0.0 {
            z.push(Some((mean_a[t] - mean_b[t]) / combined));
        } else {
            z.push(None);
            undefined.push(a.sample_times_ns[t]);
        }
    }
    let defined: Vec<f64> = z.iter().flatten().copied().collect();
    let z_rms = if defined.is_empty() {
        f64::NAN
    } else {
        (defined.iter().map(|v| v * v).sum::<f64>() / defined.len() as f64).sqrt()
    };
    Ok(ZReport {
        z,
        z_rms,
        undefined_times_ns: undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knob {
    Sigma,
    Epsilon,
}

impl std::str::FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(Knob::Sigma),
            "epsilon" => Ok(Knob::Epsilon),
            other => Err(Error::param(format!("unknown knob `{other}` (expected sigma or epsilon)"))),
        }
    }
}

impl Knob {
    pub fn name(self) -> &'static str {
        match self {
            Knob::Sigma => "sigma",
            Knob::Epsilon => "epsilon",
        }
    }

    /// Statistic reported by a sweep of this knob.
    pub fn statistic_name(self) -> &'static str {
        match self {
            Knob::Sigma => "mu_inter",
            Knob::Epsilon => "mu_intra",
        }
    }

    fn apply(self, cfg: &SimConfig, value: f64) -> SimConfig {
        let mut out = cfg.clone();
        match self {
            Knob::Sigma => out.sigma = value,
            Knob::Epsilon => out.epsilon = value,
        }
        out
    }

    fn other_value(self, cfg: &SimConfig) -> f64 {
        match self {
            Knob::Sigma => cfg.epsilon,
            Knob::Epsilon => cfg.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub knob: Knob,
    pub xs: Vec<f64>,
    /// Class-ensemble mean of the statistic at `eval_time_ns`.
    pub ys: Vec<f64>,
    /// Class std divided by sqrt(number of classes); zero with a single class.
    pub std_errs: Vec<f64>,
    pub fixed: f64,
    pub eval_time_ns: f64,
}

pub fn time_index(sample_times_ns: &[f64], time_ns: f64) -> Result<usize> {
    sample_times_ns
        .iter()
        .position(|t| (t - time_ns).abs() <= TIME_TOLERANCE_NS)
        .ok_or_else(|| {
            Error::param(format!(
                "time {time_ns} ns is not on the sample grid {:?}",
                sample_times_ns
            ))
        })
}

/// Regenerates the dataset for each knob value and evaluates uniqueness (sigma
/// knob) or reliability (epsilon knob) at `eval_time_ns`. All random streams are
/// keyed, so only the knob differs between points.
pub fn sweep(knob: Knob, values: &[f64], base: &SimConfig, eval_time_ns: f64) -> Result<SweepCurve> {
    if values.is_empty() {
        return Err(Error::param("sweep needs at least one value"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("sweep values must be strictly increasing"));
    }
    let t_idx = time_index(&base.sample_times_ns()?, eval_time_ns)?;
    let mut ys = Vec::with_capacity(values.len());
    let mut std_errs = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = knob.apply(base, v);
        let x = generate_dataset(&cfg)?;
        let per_class = match knob {
            Knob::Sigma => uniqueness(&x, cfg.pair_norm_mode)?,
            Knob::Epsilon => reliability(&x, cfg.pair_norm_mode)?,
        };
        let (mean, std) = class_mean_std(&per_class);
        ys.push(mean[t_idx]);
        std_errs.push(std[t_idx] / (per_class.len() as f64).sqrt());
    }
    Ok(SweepCurve {
        knob,
        xs: values.to_vec(),
        ys,
        std_errs,
        fixed: knob.other_value(base),
        eval_time_ns,
    })
}
