//! RCS benchmarking: sample circuits, simulate, estimate, aggregate, fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{sample_rqc_seeded, Boundary, Circuit, CircuitSeed, GateSet};
use crate::density::{run_density_with, LayerNoise, MAX_DENSITY_QUBITS};
use crate::estimators::{
    dfe, uxeb_samples, xeb_samples, DistributionMoments, EstimatorKind, IdealDistribution, NoisyState, EULER_GAMMA,
    MAX_DFE_QUBITS,
};
use crate::mcwf::{
    ideal_checkpoints, run_trajectory_with, stream_checkpoints, trajectory_stream, IdealCheckpoint, TrajectorySolver,
};
use crate::noise::NoiseModel;
use crate::rng::{domain, mix, StreamSeed};
use crate::statevec::PureState;
use crate::stats::{aggregate_depth, fit_in_range, varc_unbiased, DecayFit, DepthPoint, FitRange};
use crate::{Error, Result};

use super::NoiseSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// Exact density-matrix evolution.
    Density,
    /// Trajectory averages over `trajectories` per circuit.
    Mcwf { trajectories: usize },
    /// `samples` bitstrings per circuit, each from an independent trajectory.
    StatevecSampling { samples: usize },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Density => "density",
            Backend::Mcwf { .. } => "mcwf",
            Backend::StatevecSampling { .. } => "statevec_sampling",
        }
    }

    fn shots(&self) -> usize {
        match self {
            Backend::Density => 0,
            Backend::Mcwf { trajectories } => *trajectories,
            Backend::StatevecSampling { samples } => *samples,
        }
    }
}

/// How circuits are assigned to depths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitSchedule {
    /// Fresh circuits at every depth.
    #[default]
    Independent,
    /// `L` circuits at the largest depth; shallower depths use their prefixes.
    Nested,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Fidelity,
        EstimatorKind::Uxeb,
        EstimatorKind::Xeb,
        EstimatorKind::LogXeb,
        EstimatorKind::Hog,
    ]
}

fn default_dfe_paulis() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub depths: Vec<usize>,
    pub circuits: usize,
    pub backend: Backend,
    #[serde(default = "default_gate_set")]
    pub gate_set: GateSet,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    pub noise: NoiseSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<FitRange>,
    #[serde(default)]
    pub schedule: CircuitSchedule,
    /// Paulis drawn per circuit for DFE.
    #[serde(default = "default_dfe_paulis")]
    pub dfe_paulis: usize,
}

fn default_gate_set() -> GateSet {
    GateSet::Haar2q
}

fn default_boundary() -> Boundary {
    Boundary::Ring
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths[0] == 0 {
            return Err(Error::invalid("depths must be non-empty and start at 1 or more"));
        }
        if self.depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("depths must be strictly increasing"));
        }
        if self.circuits == 0 {
            return Err(Error::invalid("need at least one circuit per depth"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        match self.backend {
            Backend::Density if self.n > MAX_DENSITY_QUBITS => {
                return Err(Error::unsupported(format!(
                    "density backend supports n <= {MAX_DENSITY_QUBITS}, got {}",
                    self.n
                )));
            }
            Backend::Mcwf { trajectories: 0 } | Backend::StatevecSampling { samples: 0 } => {
                return Err(Error::invalid("backend needs at least one trajectory or sample"));
            }
            _ => {}
        }
        for kind in &self.estimators {
            match kind {
                EstimatorKind::Srb => {
                    return Err(Error::invalid("sRB is produced by the rb protocol, not by benchmark"));
                }
                EstimatorKind::Dfe if self.backend != Backend::Density || self.n > MAX_DFE_QUBITS => {
                    return Err(Error::unsupported(format!(
                        "DFE needs the density backend and n <= {MAX_DFE_QUBITS}"
                    )));
                }
                EstimatorKind::Dfe if self.dfe_paulis == 0 => {
                    return Err(Error::invalid("dfe_paulis must be positive"));
                }
                _ => {}
            }
        }
        self.noise.model(self.n)?;
        Ok(())
    }

    pub fn d_max(&self) -> usize {
        *self.depths.last().unwrap_or(&0)
    }

    pub fn effective_fit_range(&self) -> FitRange {
        self.fit_range
            .unwrap_or_else(|| FitRange::default_for(self.n, self.d_max()))
    }
}

/// One estimator across depths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSeries {
    pub kind: EstimatorKind,
    pub points: Vec<DepthPoint>,
    /// Unbiased cross-circuit variance per depth; absent with one circuit.
    pub varc: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub master_seed: u64,
    pub backend: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    /// Effective noise rate of the configured model.
    pub true_enr: f64,
    pub fit_range: FitRange,
    pub series: Vec<EstimatorSeries>,
    pub provenance: Provenance,
}

impl BenchmarkReport {
    pub fn series(&self, kind: EstimatorKind) -> Option<&EstimatorSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    /// Fitted decay rate of `kind`, if the fit succeeded.
    pub fn lambda(&self, kind: EstimatorKind) -> Option<(f64, f64)> {
        self.series(kind)?.fit.as_ref().map(|f| (f.lambda, f.sigma_lambda))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-circuit estimator value and its within-circuit variance.
type Estimate = (f64, f64);

struct Simulation {
    model: NoiseModel,
    noiseless: bool,
    density_noise: Option<LayerNoise>,
    solver: Option<TrajectorySolver>,
}

impl Simulation {
    fn new(cfg: &BenchmarkConfig) -> Result<Self> {
        let model = cfg.noise.model(cfg.n)?;
        let noiseless = model.terms.iter().all(|t| t.gamma == 0.0);
        let (density_noise, solver) = match cfg.backend {
            Backend::Density => {
                let noise = if noiseless {
                    LayerNoise::None
                } else {
                    LayerNoise::lindblad(&model)?
                };
                (Some(noise), None)
            }
            _ => (None, Some(TrajectorySolver::new(&model)?)),
        };
        Ok(Self {
            model,
            noiseless,
            density_noise,
            solver,
        })
    }
}

fn distribution_estimate(
    kind: EstimatorKind,
    moments: &DistributionMoments,
    ideal: &IdealDistribution,
) -> Result<Estimate> {
    Ok((moments.estimate(kind, ideal)?.value, 0.0))
}

fn evaluate_density(
    cfg: &BenchmarkConfig,
    sim: &Simulation,
    circuit: &Circuit,
    checkpoints: &[IdealCheckpoint],
    dists: &[IdealDistribution],
    circuit_key: u64,
) -> Result<Vec<Vec<Estimate>>> {
    let noise = sim.density_noise.as_ref().expect("density backend");
    let mut out = vec![Vec::new(); checkpoints.len()];
    let last = checkpoints.last().map(|c| c.depth).unwrap_or(0);
    run_density_with(&circuit.prefix(last), noise, |depth, rho| {
        let Some(k) = checkpoints.iter().position(|c| c.depth == depth) else {
            return Ok(());
        };
        let q = rho.probabilities();
        let moments = DistributionMoments::new(&q, &dists[k])?;
        for &kind in &cfg.estimators {
            let e = match kind {
                EstimatorKind::Fidelity => (rho.expectation_pure(&checkpoints[k].state)?, 0.0),
                EstimatorKind::Dfe => {
                    let mut rng = StreamSeed::derive(circuit_key, domain::DFE, depth as u64).rng();
                    let v = dfe(
                        &checkpoints[k].state,
                        NoisyState::Density(rho),
                        cfg.dfe_paulis,
                        None,
                        &mut rng,
                    )?;
                    (v.value, v.stderr.map(|s| s * s).unwrap_or(0.0))
                }
                other => distribution_estimate(other, &moments, &dists[k])?,
            };
            out[k].push(e);
        }
        Ok(())
    })?;
    Ok(out)
}

fn evaluate_mcwf(
    cfg: &BenchmarkConfig,
    sim: &Simulation,
    circuit: &Circuit,
    checkpoints: &[IdealCheckpoint],
    dists: &[IdealDistribution],
    trajectories: usize,
    circuit_key: u64,
) -> Result<Vec<Vec<Estimate>>> {
    let solver = sim.solver.as_ref().expect("trajectory backend");
    let t = if sim.noiseless { 1 } else { trajectories };
    let sums = stream_checkpoints(circuit, solver, checkpoints, t, circuit_key)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for (s, dist) in sums.iter().zip(dists) {
        let tf = s.trajectories as f64;
        let moments = DistributionMoments {
            sum_pq: s.sum_p_weighted / tf,
            sum_q_ln_p: s.sum_q_ln_p / tf,
            sum_q_heavy: s.sum_q_heavy / tf,
            zero_probability: s.zero_probability,
        };
        let mut row = Vec::with_capacity(cfg.estimators.len());
        for &kind in &cfg.estimators {
            row.push(match kind {
                EstimatorKind::Fidelity => (s.mean_fidelity(), s.fidelity_variance() / tf),
                other => distribution_estimate(other, &moments, dist)?,
            });
        }
        out.push(row);
    }
    Ok(out)
}

fn mean_and_var_of_mean(values: &[f64]) -> Estimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var / m)
}

fn evaluate_sampling(
    cfg: &BenchmarkConfig,
    sim: &Simulation,
    circuit: &Circuit,
    checkpoints: &[IdealCheckpoint],
    dists: &[IdealDistribution],
    samples: usize,
    circuit_key: u64,
) -> Result<Vec<Vec<Estimate>>> {
    let solver = sim.solver.as_ref().expect("trajectory backend");
    let last = checkpoints.last().map(|c| c.depth).unwrap_or(0);
    let prefix = circuit.prefix(last);
    let runs = if sim.noiseless { 1 } else { samples };
    let per_run = samples / runs;
    // Per trajectory: for each checkpoint, its fidelity and drawn samples.
    let per_traj: Vec<Vec<(f64, Vec<usize>)>> = (0..runs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_stream(circuit_key, j).rng();
            let mut sample_rng = StreamSeed::derive(circuit_key, domain::SAMPLES, j).rng();
            let mut rows = Vec::with_capacity(checkpoints.len());
            run_trajectory_with(&prefix, solver, &mut rng, |depth, phi: &PureState| {
                if let Some(c) = checkpoints.iter().find(|c| c.depth == depth) {
                    let f = c.state.inner(phi)?.norm_sqr();
                    rows.push((f, phi.sample_bitstrings(per_run, &mut sample_rng)?));
                }
                Ok(())
            })?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for (k, dist) in dists.iter().enumerate() {
        let fids: Vec<f64> = per_traj.iter().map(|r| r[k].0).collect();
        let xs: Vec<usize> = per_traj.iter().flat_map(|r| r[k].1.iter().copied()).collect();
        let d = dist.dim() as f64;
        let mut row = Vec::with_capacity(cfg.estimators.len());
        for &kind in &cfg.estimators {
            row.push(match kind {
                EstimatorKind::Fidelity => mean_and_var_of_mean(&fids),
                EstimatorKind::Uxeb | EstimatorKind::Xeb => {
                    let v = if kind == EstimatorKind::Uxeb {
                        uxeb_samples(&xs, dist)?
                    } else {
                        xeb_samples(&xs, dist)?
                    };
                    (v.value, v.stderr.map(|s| s * s).unwrap_or(0.0))
                }
                EstimatorKind::LogXeb => {
                    let mut logs = Vec::with_capacity(xs.len());
                    for &x in &xs {
                        let p = dist.probs()[x];
                        if p < 1e-300 {
                            return Err(Error::ZeroProbability(x));
                        }
                        logs.push((d * p).ln() + EULER_GAMMA);
                    }
                    mean_and_var_of_mean(&logs)
                }
                EstimatorKind::Hog => {
                    let thr = std::f64::consts::LN_2 / d;
                    let h: Vec<f64> = xs
                        .iter()
                        .map(|&x| (2.0 * (dist.probs()[x] >= thr) as u8 as f64 - 1.0) / std::f64::consts::LN_2)
                        .collect();
                    mean_and_var_of_mean(&h)
                }
                other => return Err(Error::unsupported(format!("{other} with the sampling backend"))),
            });
        }
        out.push(row);
    }
    Ok(out)
}

fn evaluate_circuit(
    cfg: &BenchmarkConfig,
    sim: &Simulation,
    circuit: &Circuit,
    depths: &[usize],
    circuit_key: u64,
) -> Result<Vec<Vec<Estimate>>> {
    let checkpoints = ideal_checkpoints(circuit, depths)?;
    let dists = checkpoints
        .iter()
        .map(|c| IdealDistribution::new(c.probs.clone()))
        .collect::<Result<Vec<_>>>()?;
    match cfg.backend {
        Backend::Density => evaluate_density(cfg, sim, circuit, &checkpoints, &dists, circuit_key),
        Backend::Mcwf { trajectories } => {
            evaluate_mcwf(cfg, sim, circuit, &checkpoints, &dists, trajectories, circuit_key)
        }
        Backend::StatevecSampling { samples } => {
            evaluate_sampling(cfg, sim, circuit, &checkpoints, &dists, samples, circuit_key)
        }
    }
}

/// Runs the benchmark; the report is a deterministic function of `cfg`.
pub fn rcs_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let sim = Simulation::new(cfg)?;
    let n_depths = cfg.depths.len();
    let n_est = cfg.estimators.len();
    // values[depth][estimator][circuit]
    let mut values = vec![vec![Vec::with_capacity(cfg.circuits); n_est]; n_depths];
    let mut within = values.clone();
    let mut record = |k: usize, row: &[Estimate]| {
        for (e, &(v, w)) in row.iter().enumerate() {
            values[k][e].push(v);
            within[k][e].push(w);
        }
    };
    match cfg.schedule {
        CircuitSchedule::Nested => {
            let results: Vec<Vec<Vec<Estimate>>> = (0..cfg.circuits as u64)
                .into_par_iter()
                .map(|i| {
                    let seed = CircuitSeed {
                        master: cfg.master_seed,
                        index: i,
                    };
                    let c = sample_rqc_seeded(cfg.n, cfg.d_max(), cfg.gate_set, cfg.boundary, seed)?;
                    evaluate_circuit(cfg, &sim, &c, &cfg.depths, mix(cfg.master_seed, i))
                        .map_err(|e| e.context(format!("circuit {i}")))
                })
                .collect::<Result<_>>()?;
            for rows in &results {
                for (k, row) in rows.iter().enumerate() {
                    record(k, row);
                }
            }
        }
        CircuitSchedule::Independent => {
            for (k, &d) in cfg.depths.iter().enumerate() {
                let results: Vec<Vec<Vec<Estimate>>> = (0..cfg.circuits as u64)
                    .into_par_iter()
                    .map(|i| {
                        let index = ((d as u64) << 32) | i;
                        let seed = CircuitSeed {
                            master: cfg.master_seed,
                            index,
                        };
                        let c = sample_rqc_seeded(cfg.n, d, cfg.gate_set, cfg.boundary, seed)?;
                        evaluate_circuit(cfg, &sim, &c, &[d], mix(cfg.master_seed, index))
                            .map_err(|e| e.context(format!("depth {d}, circuit {i}")))
                    })
                    .collect::<Result<_>>()?;
                for rows in &results {
                    record(k, &rows[0]);
                }
            }
        }
    }
    let range = cfg.effective_fit_range();
    let shots = cfg.backend.shots();
    let mut series = Vec::with_capacity(n_est);
    for (e, &kind) in cfg.estimators.iter().enumerate() {
        let mut points = Vec::with_capacity(n_depths);
        let mut varc = Vec::with_capacity(n_depths);
        for (k, &d) in cfg.depths.iter().enumerate() {
            points.push(aggregate_depth(d, &values[k][e], &within[k][e], shots)?);
            varc.push(varc_unbiased(&values[k][e], &within[k][e]).ok());
        }
        let (fit, fit_error) = match fit_in_range(&points, range) {
            Ok(f) => (Some(f), None),
            Err(err) => (None, Some(err.to_string())),
        };
        series.push(EstimatorSeries {
            kind,
            points,
            varc,
            fit,
            fit_error,
        });
    }
    Ok(BenchmarkReport {
        config: cfg.clone(),
        true_enr: sim.model.enr(),
        fit_range: range,
        series,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: cfg.master_seed,
            backend: cfg.backend.name().to_string(),
        },
    })
}
