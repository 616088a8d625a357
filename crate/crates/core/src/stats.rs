//! Decay fitting, per-depth aggregation and cross-circuit variance.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{sample_rqc_seeded, Boundary, CircuitSeed, GateSet};
use crate::pauli::{Pauli, PauliString};
use crate::rng::{domain, StreamSeed};
use crate::statevec::PureState;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;

/// Mean estimator value over the circuits at one depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthPoint {
    pub depth: usize,
    pub mean: f64,
    /// Standard error of the mean; absent with a single circuit.
    pub stderr: Option<f64>,
    pub circuits: usize,
    /// Samples or trajectories per circuit; zero for exact backends.
    pub shots: usize,
    pub per_circuit: Vec<f64>,
    pub within_circuit_vars: Vec<f64>,
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn aggregate_depth(depth: usize, values: &[f64], within_circuit_vars: &[f64], shots: usize) -> Result<DepthPoint> {
    if values.is_empty() {
        return Err(Error::invalid("no circuit values"));
    }
    if !within_circuit_vars.is_empty() && within_circuit_vars.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: within_circuit_vars.len(),
        });
    }
    let l = values.len();
    let mean = values.iter().sum::<f64>() / l as f64;
    let stderr = (l >= 2).then(|| (sample_variance(values) / l as f64).sqrt());
    Ok(DepthPoint {
        depth,
        mean,
        stderr,
        circuits: l,
        shots,
        per_circuit: values.to_vec(),
        within_circuit_vars: within_circuit_vars.to_vec(),
    })
}

/// Cross-circuit sample variance minus the mean within-circuit variance.
/// May be negative.
pub fn varc_unbiased(values: &[f64], within_circuit_vars: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid("varc needs at least two circuits"));
    }
    let within = if within_circuit_vars.is_empty() {
        0.0
    } else if within_circuit_vars.len() == values.len() {
        within_circuit_vars.iter().sum::<f64>() / values.len() as f64
    } else {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: within_circuit_vars.len(),
        });
    };
    Ok(sample_variance(values) - within)
}

/// Weighted least squares result for a model with `k` parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Unweighted residuals `y - f(x)`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Levenberg-Marquardt on `model(x, params) -> (value, gradient)`.
///
/// With `sigma = None` the covariance is scaled by the residual variance.
pub fn levenberg_marquardt<F>(
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    initial: &[f64],
    model: F,
) -> Result<LeastSquares>
where
    F: Fn(f64, &[f64]) -> (f64, Vec<f64>),
{
    let (m, k) = (x.len(), initial.len());
    if y.len() != m || sigma.is_some_and(|s| s.len() != m) {
        return Err(Error::invalid("inconsistent data lengths"));
    }
    if m < k {
        return Err(Error::Fit(format!("{m} points for {k} parameters")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / s).collect(),
        None => vec![1.0; m],
    };
    let system = |p: &[f64]| {
        let mut jac = DMatrix::zeros(m, k);
        let mut r = DVector::zeros(m);
        for i in 0..m {
            let (f, g) = model(x[i], p);
            r[i] = w[i] * (y[i] - f);
            for j in 0..k {
                jac[(i, j)] = w[i] * g[j];
            }
        }
        (jac, r)
    };
    let mut p = initial.to_vec();
    let (mut jac, mut r) = system(&p);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut a = jtj.clone();
        for j in 0..k {
            a[(j, j)] += mu * jtj[(j, j)].max(1e-300);
        }
        let Some(step) = a.lu().solve(&jtr) else {
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let (tj, tr) = system(&trial);
        let tcost = tr.norm_squared();
        if tcost.is_finite() && tcost <= cost {
            let small_step = step
                .iter()
                .zip(&trial)
                .all(|(s, v)| s.abs() <= RELATIVE_TOLERANCE * (v.abs() + RELATIVE_TOLERANCE));
            let small_gain = cost - tcost <= RELATIVE_TOLERANCE * cost;
            p = trial;
            jac = tj;
            r = tr;
            cost = tcost;
            mu = (mu / 10.0).max(1e-15);
            if small_step || small_gain || cost == 0.0 {
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
        }
    }
    let jtj = jac.transpose() * &jac;
    let sv = jtj.singular_values();
    if sv.min() <= 1e-13 * sv.max() {
        return Err(Error::Fit("singular Jacobian".into()));
    }
    let mut covariance = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular Jacobian".into()))?;
    if sigma.is_none() {
        let dof = (m - k).max(1) as f64;
        covariance *= cost / dof;
    }
    let residuals = (0..m).map(|i| r[i] / w[i]).collect();
    Ok(LeastSquares {
        params: p,
        covariance,
        residuals,
        iterations,
    })
}

fn exp_model(d: f64, p: &[f64]) -> (f64, Vec<f64>) {
    let e = (-p[1] * d).exp();
    (p[0] * e, vec![e, -p[0] * d * e])
}

/// Fit of `F = A e^{-λ d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub lambda: f64,
    #[serde(rename = "sigma_A")]
    pub sigma_a: f64,
    pub sigma_lambda: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub n_points: usize,
    pub residual_norm: f64,
    #[serde(skip)]
    pub covariance: [[f64; 2]; 2],
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// Inclusive depth window used for fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub d_min: usize,
    pub d_max: usize,
}

impl FitRange {
    pub fn new(d_min: usize, d_max: usize) -> Result<Self> {
        if d_min > d_max {
            return Err(Error::invalid(format!("empty fit range [{d_min}, {d_max}]")));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn contains(&self, d: usize) -> bool {
        (self.d_min..=self.d_max).contains(&d)
    }

    /// Lower cut skips the low-depth uXEB bump: `d_min = n` from 10 qubits up.
    pub fn default_for(n: usize, d_max: usize) -> Self {
        let d_min = if n >= 10 { n.min(d_max) } else { 1 };
        Self { d_min, d_max }
    }
}

impl std::str::FromStr for FitRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once([':', '-', ','])
            .ok_or_else(|| Error::invalid(format!("fit range '{s}' is not d_min:d_max")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::invalid(format!("fit range '{s}': {e}")))
        };
        FitRange::new(parse(a)?, parse(b)?)
    }
}

/// Weighted linear regression of `ln(mean)` on depth; `None` if any mean is non-positive.
fn log_linear_guess(d: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Option<[f64; 2]> {
    if y.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = match sigma {
        Some(s) => y.iter().zip(s).map(|(v, s)| (v / s).powi(2)).collect(),
        None => vec![1.0; y.len()],
    };
    let fit = weighted_linear_fit(d, &ly, &w)?;
    Some([fit.0.exp(), -fit.1])
}

/// Returns `(intercept, slope)`.
fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn fallback_guess(d: &[f64], y: &[f64]) -> [f64; 2] {
    let pos: Vec<(f64, f64)> = d
        .iter()
        .zip(y)
        .filter(|(_, y)| **y > 0.0)
        .map(|(d, y)| (*d, *y))
        .collect();
    let lambda = if pos.len() >= 2 {
        let (d0, y0) = pos[0];
        let (d1, y1) = pos[pos.len() - 1];
        if d1 > d0 {
            (y0 / y1).ln() / (d1 - d0)
        } else {
            0.01
        }
    } else {
        0.01
    };
    let a = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max).abs().max(1e-3);
    [a * (lambda * d[0]).exp(), lambda]
}

/// Fits `A e^{-λ d}` to `(d, mean ± stderr)`; stderr weights are used when
/// every point has a positive stderr.
pub fn fit_exponential_data(depths: &[f64], means: &[f64], stderrs: Option<&[f64]>) -> Result<DecayFit> {
    if depths.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", depths.len())));
    }
    if means.len() != depths.len() {
        return Err(Error::DimensionMismatch {
            expected: depths.len(),
            got: means.len(),
        });
    }
    if means.iter().chain(depths).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let sigma = stderrs.filter(|s| s.len() == means.len() && s.iter().all(|v| *v > 0.0 && v.is_finite()));
    let guess = log_linear_guess(depths, means, sigma).unwrap_or_else(|| fallback_guess(depths, means));
    let ls = levenberg_marquardt(depths, means, sigma, &guess, exp_model)?;
    let c = &ls.covariance;
    let covariance = [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]];
    let residual_norm = ls.residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(DecayFit {
        a: ls.params[0],
        lambda: ls.params[1],
        sigma_a: covariance[0][0].max(0.0).sqrt(),
        sigma_lambda: covariance[1][1].max(0.0).sqrt(),
        d_min: depths.iter().cloned().fold(f64::INFINITY, f64::min) as usize,
        d_max: depths.iter().cloned().fold(0.0, f64::max) as usize,
        n_points: depths.len(),
        residual_norm,
        covariance,
        residuals: ls.residuals,
    })
}

pub fn fit_exponential(points: &[DepthPoint]) -> Result<DecayFit> {
    let d: Vec<f64> = points.iter().map(|p| p.depth as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let s: Option<Vec<f64>> = points.iter().map(|p| p.stderr).collect();
    fit_exponential_data(&d, &y, s.as_deref())
}

pub fn fit_in_range(points: &[DepthPoint], range: FitRange) -> Result<DecayFit> {
    let selected: Vec<DepthPoint> = points.iter().filter(|p| range.contains(p.depth)).cloned().collect();
    fit_exponential(&selected)
}

/// Ordinary least squares line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Pearson correlation.
    pub r: f64,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Fit("linear regression needs at least 3 paired points".into()));
    }
    let w = vec![1.0; x.len()];
    let (intercept, slope) = weighted_linear_fit(x, y, &w).ok_or_else(|| Error::Fit("constant abscissa".into()))?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: (sse / (n - 2.0) / sxx).sqrt(),
        r: if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 },
    })
}

/// `Var(Σ_{l<=d} A_l)` at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlVariance {
    pub depth: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Settings for [`al_covariance`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub n: usize,
    pub d_max: usize,
    pub gate_set: GateSet,
    pub boundary: Boundary,
    pub circuits: usize,
    /// Error locations sampled per layer; zero enumerates all qubits.
    pub locations: usize,
    pub master_seed: u64,
}

/// `A_l` for `l = 1..=d_max` on one circuit. `A_l` averages
/// `|<ψ|X_i|ψ>|^2` over qubits of the prefix state after `l` layers.
fn al_series(cfg: &AlConfig, index: u64) -> Result<Vec<f64>> {
    let seed = CircuitSeed {
        master: cfg.master_seed,
        index,
    };
    let circuit = sample_rqc_seeded(cfg.n, cfg.d_max, cfg.gate_set, cfg.boundary, seed)?;
    let paulis: Vec<PauliString> = (0..cfg.n).map(|q| PauliString::single(cfg.n, q, Pauli::X)).collect();
    let mut rng = StreamSeed::derive(cfg.master_seed, domain::LOCATIONS, index).rng();
    let mut state = PureState::zero(cfg.n)?;
    let mut out = Vec::with_capacity(cfg.d_max);
    for layer in circuit.layers.iter().filter(|l| !l.injected) {
        state.apply_layer(layer)?;
        let qubits: Vec<usize> = if cfg.locations == 0 {
            (0..cfg.n).collect()
        } else {
            (0..cfg.locations)
                .map(|_| index::sample(&mut rng, cfg.n, 1).index(0))
                .collect()
        };
        let mut acc = 0.0;
        for &q in &qubits {
            acc += state.expectation_pauli(&paulis[q])?.norm_sqr();
        }
        out.push(acc / qubits.len() as f64);
    }
    Ok(out)
}

/// Monte-Carlo estimate of `Var(Σ_{l=1}^d A_l)` across circuits for every
/// `d = 1..=d_max`, using nested prefixes of the same circuits.
pub fn al_covariance(cfg: &AlConfig) -> Result<Vec<AlVariance>> {
    if cfg.circuits < 2 || cfg.d_max == 0 {
        return Err(Error::invalid(
            "al_covariance needs at least two circuits and d_max >= 1",
        ));
    }
    let series: Vec<Vec<f64>> = (0..cfg.circuits as u64)
        .into_par_iter()
        .map(|i| al_series(cfg, i))
        .collect::<Result<_>>()?;
    let mut sums = vec![0.0; cfg.circuits];
    let mut rows = Vec::with_capacity(cfg.d_max);
    for d in 0..cfg.d_max {
        for (s, a) in sums.iter_mut().zip(&series) {
            *s += a[d];
        }
        let mean = sums.iter().sum::<f64>() / cfg.circuits as f64;
        rows.push(AlVariance {
            depth: d + 1,
            mean,
            variance: sample_variance(&sums),
        });
    }
    Ok(rows)
}
