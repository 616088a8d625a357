//! Simultaneous two-qubit randomized benchmarking on neighbouring pairs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{layer_pairs, sample_haar_unitary, Boundary, Circuit, Gate, GateSet, Layer};
use crate::density::{run_density_with, LayerNoise, MAX_DENSITY_QUBITS};
use crate::mcwf::{run_trajectory_with, trajectory_stream, TrajectorySolver};
use crate::rng::{domain, mix, StreamSeed};
use crate::stats::levenberg_marquardt;
use crate::{Error, Result, C64};

use super::{Backend, NoiseSpec};

/// Converts a two-qubit depolarizing parameter `p` to a Pauli error rate `(1 - p) * 15/16`.
pub const PAULI_ERROR_FACTOR: f64 = 15.0 / 16.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbConfig {
    pub n: usize,
    pub noise: NoiseSpec,
    /// Sequence lengths `s`; each sequence adds one inverse layer.
    pub lengths: Vec<usize>,
    pub sequences: usize,
    pub backend: Backend,
    pub master_seed: u64,
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 == 1 {
            return Err(Error::invalid(format!(
                "rb needs an even ring of at least 4 qubits, got {}",
                self.n
            )));
        }
        if self.lengths.len() < 4 || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "rb needs at least 4 strictly increasing sequence lengths",
            ));
        }
        if self.sequences == 0 {
            return Err(Error::invalid("rb needs at least one sequence per length"));
        }
        match self.backend {
            Backend::Density if self.n > MAX_DENSITY_QUBITS => Err(Error::unsupported(format!(
                "density backend supports n <= {MAX_DENSITY_QUBITS}"
            ))),
            Backend::StatevecSampling { .. } => Err(Error::unsupported("rb runs on the density or mcwf backend")),
            Backend::Mcwf { trajectories: 0 } => Err(Error::invalid("need at least one trajectory")),
            _ => self.noise.model(self.n).map(|_| ()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub length: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: (usize, usize),
    pub survival: Vec<SurvivalPoint>,
    /// Fit of `A p^s + B`.
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub sigma_p: f64,
    /// Pauli error rate per step.
    pub error_rate: f64,
    pub sigma_error_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    /// Layer parity whose pairs are benchmarked (1: even-first, 2: odd-first).
    pub parity: usize,
    pub pairs: Vec<PairResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbReport {
    pub config: RbConfig,
    pub patterns: Vec<PatternResult>,
    /// `-1/2 Σ ln(1 - e_i)` over both patterns: noise per layer implied by sRB.
    pub lambda_srb: f64,
    pub sigma_lambda_srb: f64,
    pub true_enr: f64,
    pub pauli_error_factor: f64,
}

impl RbReport {
    pub fn error_rates(&self) -> Vec<f64> {
        self.patterns
            .iter()
            .flat_map(|p| p.pairs.iter().map(|r| r.error_rate))
            .collect()
    }
}

fn gate_product(gates: &[&Gate]) -> DMatrix<C64> {
    gates
        .iter()
        .fold(DMatrix::identity(4, 4), |acc, g| g.to_dmatrix() * acc)
}

/// `s` random layers on `pairs` followed by the inverse of each pair's product.
fn rb_sequence(n: usize, pairs: &[(usize, usize)], s: usize, stream: StreamSeed) -> Result<Circuit> {
    let mut rng = stream.rng();
    let mut layers = Vec::with_capacity(s + 1);
    for _ in 0..s {
        let gates = pairs
            .iter()
            .map(|&(a, b)| Ok(Gate::new(vec![a, b], sample_haar_unitary(4, &mut rng)?)?))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Layer { gates, injected: false });
    }
    let mut inverse = Vec::with_capacity(pairs.len());
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let seq: Vec<&Gate> = layers.iter().map(|l: &Layer| &l.gates[k]).collect();
        let inv = gate_product(&seq).adjoint();
        let matrix: Vec<C64> = (0..16).map(|i| inv[(i / 4, i % 4)]).collect();
        inverse.push(Gate::new(vec![a, b], matrix)?);
    }
    layers.push(Layer {
        gates: inverse,
        injected: false,
    });
    Ok(Circuit {
        n,
        depth: s + 1,
        boundary: Boundary::Ring,
        gate_set: GateSet::Haar2q,
        seed: None,
        layers,
    })
}

/// Probability that both qubits of each pair read `0`.
fn pair_survival(probs: &[f64], n: usize, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let mask = (1usize << (n - 1 - a)) | (1usize << (n - 1 - b));
            probs
                .iter()
                .enumerate()
                .filter(|(x, _)| x & mask == 0)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

enum RbSimulator {
    Density(LayerNoise),
    Mcwf(TrajectorySolver, usize),
}

impl RbSimulator {
    fn survival(&self, circuit: &Circuit, pairs: &[(usize, usize)], key: u64) -> Result<Vec<f64>> {
        let n = circuit.n;
        match self {
            RbSimulator::Density(noise) => {
                let rho = run_density_with(circuit, noise, |_, _| Ok(()))?;
                Ok(pair_survival(&rho.probabilities(), n, pairs))
            }
            RbSimulator::Mcwf(solver, t) => {
                let mut acc = vec![0.0; pairs.len()];
                for j in 0..*t as u64 {
                    let mut rng = trajectory_stream(key, j).rng();
                    let phi = run_trajectory_with(circuit, solver, &mut rng, |_, _| Ok(()))?;
                    for (a, v) in acc.iter_mut().zip(pair_survival(&phi.probabilities(), n, pairs)) {
                        *a += v;
                    }
                }
                Ok(acc.into_iter().map(|a| a / *t as f64).collect())
            }
        }
    }
}

fn fit_pair(pair: (usize, usize), survival: Vec<SurvivalPoint>) -> Result<PairResult> {
    if survival.iter().all(|p| (p.mean - 1.0).abs() < 1e-12) {
        return Ok(PairResult {
            pair,
            survival,
            a: 1.0,
            p: 1.0,
            b: 0.0,
            sigma_p: 0.0,
            error_rate: 0.0,
            sigma_error_rate: 0.0,
        });
    }
    let x: Vec<f64> = survival.iter().map(|p| p.length as f64).collect();
    let y: Vec<f64> = survival.iter().map(|p| p.mean).collect();
    let sigma: Option<Vec<f64>> = survival
        .iter()
        .all(|p| p.stderr > 0.0)
        .then(|| survival.iter().map(|p| p.stderr).collect());
    let (first, last) = (survival[0], survival[survival.len() - 1]);
    let ratio = ((last.mean - 0.25) / (first.mean - 0.25)).clamp(1e-6, 1.0 - 1e-9);
    let p0 = ratio
        .powf(1.0 / (last.length - first.length) as f64)
        .clamp(0.5, 1.0 - 1e-9);
    let a0 = (first.mean - 0.25) / p0.powi(first.length as i32);
    let model = |s: f64, q: &[f64]| {
        let e = q[1].powf(s);
        (q[0] * e + q[2], vec![e, q[0] * s * q[1].powf(s - 1.0), 1.0])
    };
    let ls = levenberg_marquardt(&x, &y, sigma.as_deref(), &[a0, p0, 0.25], model)
        .map_err(|e| e.context(format!("rb fit for pair {pair:?}")))?;
    let p = ls.params[1];
    let sigma_p = ls.covariance[(1, 1)].max(0.0).sqrt();
    Ok(PairResult {
        pair,
        survival,
        a: ls.params[0],
        p,
        b: ls.params[2],
        sigma_p,
        error_rate: (1.0 - p) * PAULI_ERROR_FACTOR,
        sigma_error_rate: sigma_p * PAULI_ERROR_FACTOR,
    })
}

/// Runs simultaneous RB for both layer patterns of an even ring.
pub fn simultaneous_rb(cfg: &RbConfig) -> Result<RbReport> {
    cfg.validate()?;
    let model = cfg.noise.model(cfg.n)?;
    let sim = match cfg.backend {
        Backend::Density => RbSimulator::Density(if model.terms.iter().all(|t| t.gamma == 0.0) {
            LayerNoise::None
        } else {
            LayerNoise::lindblad(&model)?
        }),
        Backend::Mcwf { trajectories } => RbSimulator::Mcwf(TrajectorySolver::new(&model)?, trajectories),
        Backend::StatevecSampling { .. } => unreachable!("rejected by validate"),
    };
    let mut patterns = Vec::with_capacity(2);
    for parity in [1usize, 2] {
        let pairs = layer_pairs(cfg.n, Boundary::Ring, parity);
        let jobs: Vec<(usize, usize)> = (0..cfg.lengths.len())
            .flat_map(|k| (0..cfg.sequences).map(move |j| (k, j)))
            .collect();
        let results: Vec<Vec<f64>> = jobs
            .par_iter()
            .map(|&(k, j)| {
                let s = cfg.lengths[k];
                let index = ((parity as u64) << 48) | ((j as u64) << 24) | s as u64;
                let stream = StreamSeed::derive(cfg.master_seed, domain::RB, index);
                let circuit = rb_sequence(cfg.n, &pairs, s, stream)?;
                sim.survival(&circuit, &pairs, mix(cfg.master_seed, index))
            })
            .collect::<Result<_>>()?;
        let mut pair_results = Vec::with_capacity(pairs.len());
        for (pi, &pair) in pairs.iter().enumerate() {
            let survival = cfg
                .lengths
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    let vals: Vec<f64> = (0..cfg.sequences).map(|j| results[k * cfg.sequences + j][pi]).collect();
                    let m = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / m;
                    let stderr = if vals.len() > 1 {
                        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
                    } else {
                        0.0
                    };
                    SurvivalPoint {
                        length: s,
                        mean,
                        stderr,
                    }
                })
                .collect();
            pair_results.push(fit_pair(pair, survival)?);
        }
        patterns.push(PatternResult {
            parity,
            pairs: pair_results,
        });
    }
    let mut lambda = 0.0;
    let mut var = 0.0;
    for r in patterns.iter().flat_map(|p| &p.pairs) {
        if r.error_rate >= 1.0 {
            return Err(Error::Fit(format!(
                "pair {:?} has error rate {} >= 1",
                r.pair, r.error_rate
            )));
        }
        lambda -= 0.5 * (1.0 - r.error_rate).ln();
        var += (0.5 * r.sigma_error_rate / (1.0 - r.error_rate)).powi(2);
    }
    Ok(RbReport {
        config: cfg.clone(),
        patterns,
        lambda_srb: lambda,
        sigma_lambda_srb: var.sqrt(),
        true_enr: model.enr(),
        pauli_error_factor: PAULI_ERROR_FACTOR,
    })
}
