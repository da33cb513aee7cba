//! Least-squares fit of the saturating exponential `y = B - A * exp(-C * x)`.
//!
//! The solver is a damped Gauss-Newton iteration: each step solves
//! `(JᵀWJ + λ·diag(JᵀWJ)) δ = JᵀW r`, accepting the step only when the weighted
//! residual does not grow. λ is divided by 10 after an accepted step and
//! multiplied by 10 after a rejected one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
pub const INITIAL_DAMPING: f64 = 1e-3;
pub const MAX_DAMPING: f64 = 1e12;
const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatExp {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SatExp {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        SatExp { a, b, c }
    }

    fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    fn from_array(p: [f64; 3]) -> Self {
        SatExp::new(p[0], p[1], p[2])
    }

    pub fn eval(&self, x: f64) -> f64 {
        sat_exp_eval(self.a, self.b, self.c, x)
    }

    /// Partial derivatives `[∂y/∂A, ∂y/∂B, ∂y/∂C]` at `x`.
    pub fn gradient(&self, x: f64) -> [f64; 3] {
        let e = (-self.c * x).exp();
        [-e, 1.0, self.a * x * e]
    }
}

pub fn sat_exp_eval(a: f64, b: f64, c: f64, x: f64) -> f64 {
    b - a * (-c * x).exp()
}

fn check_xs(xs: &[f64], ys: &[f64], min_points: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::param(format!("{} xs but {} ys", xs.len(), ys.len())));
    }
    if xs.len() < min_points {
        return Err(Error::param(format!(
            "need at least {min_points} points, got {}",
            xs.len()
        )));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("xs must be strictly increasing"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite data point"));
    }
    Ok(())
}

/// Starting point: `B` from the largest observation, `A` from the observed
/// range, and `C` from a straight-line fit to `ln(B - y)` against `x`.
pub fn initial_guess(xs: &[f64], ys: &[f64]) -> Result<SatExp> {
    check_xs(xs, ys, 3)?;
    let b0 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let a0 = b0 - min;
    if a0 == 0.0 {
        return Ok(SatExp::new(0.0, b0, 1.0));
    }
    let ls: Vec<f64> = ys.iter().map(|&y| (b0 - y).max(LOG_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let ml = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxl: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - mx) * (l - ml)).sum();
    let c0 = (-sxl / sxx).max(LOG_FLOOR);
    Ok(SatExp::new(a0, b0, c0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: SatExp,
    /// Standard errors of `[A, B, C]`.
    pub std_errs: [f64; 3],
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted cost at the start and after every accepted step.
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
}

type Mat3 = [[f64; 3]; 3];

/// Cholesky solve of a symmetric positive definite 3x3 system.
fn solve_spd(m: &Mat3, rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut sum = m[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut sum = y[i];
        for k in i + 1..3 {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

fn invert_spd(m: &Mat3) -> Option<Mat3> {
    let mut inv = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut e = [0.0; 3];
        e[col] = 1.0;
        let x = solve_spd(m, &e)?;
        for row in 0..3 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

struct Problem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    weights: Option<&'a [f64]>,
}

impl Problem<'_> {
    fn weight(&self, k: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[k])
    }

    fn cost(&self, p: &SatExp) -> f64 {
        (0..self.xs.len())
            .map(|k| self.weight(k) * (self.ys[k] - p.eval(self.xs[k])).powi(2))
            .sum()
    }

    /// `JᵀWJ` and `JᵀW r` with `r = y - model`.
    fn normal_equations(&self, p: &SatExp) -> (Mat3, [f64; 3]) {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for k in 0..self.xs.len() {
            let g = p.gradient(self.xs[k]);
            let w = self.weight(k);
            let r = self.ys[k] - p.eval(self.xs[k]);
            for i in 0..3 {
                jtr[i] += w * g[i] * r;
                for j in 0..3 {
                    jtj[i][j] += w * g[i] * g[j];
                }
            }
        }
        (jtj, jtr)
    }
}

fn relative_change(step: &[f64; 3], p: &[f64; 3]) -> f64 {
    step.iter()
        .zip(p)
        .map(|(d, v)| d.abs() / v.abs().max(1e-10))
        .fold(0.0, f64::max)
}

/// Fits `y = B - A exp(-C x)`. Weights, when given, multiply squared residuals.
pub fn fit_sat_exp(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    check_xs(xs, ys, 4)?;
    if let Some(w) = weights {
        if w.len() != xs.len() {
            return Err(Error::param("weights length does not match data"));
        }
        if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::param("weights must be positive and finite"));
        }
    }
    let problem = Problem { xs, ys, weights };
    let mut p = initial_guess(xs, ys)?;
    let mut cost = problem.cost(&p);
    let mut cost_trace = vec![cost];
    let mut lambda = INITIAL_DAMPING;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&p);
        if jtr.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        loop {
            let mut damped = jtj;
            for i in 0..3 {
                damped[i][i] += lambda * jtj[i][i].max(f64::MIN_POSITIVE);
            }
            let Some(step) = solve_spd(&damped, &jtr) else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Err(Error::Numerical("normal equations are singular".into()));
                }
                continue;
            };
            let current = p.to_array();
            let change = relative_change(&step, &current);
            let trial = SatExp::from_array([current[0] + step[0], current[1] + step[1], current[2] + step[2]]);
            let trial_cost = problem.cost(&trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                p = trial;
                cost = trial_cost;
                cost_trace.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                if change < RELATIVE_TOLERANCE {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if change < RELATIVE_TOLERANCE {
                // No representable improvement remains at this tolerance.
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break 'outer;
            }
        }
    }

    let n = xs.len();
    let (jtj, _) = problem.normal_equations(&p);
    let dof = (n - 3) as f64;
    let std_errs = match invert_spd(&jtj) {
        Some(cov) => {
            let scale = cost / dof;
            [0, 1, 2].map(|i| (cov[i][i] * scale).max(0.0).sqrt())
        }
        None => [f64::NAN; 3],
    };
    let residual_rms = (xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - p.eval(x)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(FitResult {
        params: p,
        std_errs,
        residual_rms,
        converged: converged && p.c.is_finite(),
        iterations,
        cost_trace,
    })
}
