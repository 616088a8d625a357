//! Extraction of a correlated dephasing rate from relaxation, Ramsey and RCS decays.

use serde::{Deserialize, Serialize};

use crate::circuits::{Boundary, GateSet};
use crate::density::{DensityState, Integrator, LindbladPropagator, MAX_DENSITY_QUBITS};
use crate::estimators::EstimatorKind;
use crate::mcwf::{trajectory_stream, TrajectorySolver, TrajectoryState};
use crate::noise::NoiseModel;
use crate::pauli::{Pauli, PauliString};
use crate::rng::mix;
use crate::statevec::PureState;
use crate::stats::{fit_exponential_data, FitRange};
use crate::{Error, Result, C64};

use super::{rcs_benchmark, Backend, BenchmarkConfig, BenchmarkReport, CircuitSchedule, NoiseSpec};

/// `Γ1/4 + Γ2/4 - λ/n`.
pub fn extract_gamma3(gamma1_fit: f64, gamma2_fit: f64, lambda: f64, n: usize) -> f64 {
    gamma1_fit / 4.0 + gamma2_fit / 4.0 - lambda / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualConfig {
    pub n: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Free evolution is sampled at `t = 1..=max_time`.
    pub max_time: usize,
    pub depths: Vec<usize>,
    pub circuits: usize,
    pub backend: Backend,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<FitRange>,
    pub master_seed: u64,
}

/// Observable decay with its fitted rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayMeasurement {
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    pub rate: f64,
    pub sigma_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualResult {
    pub config: VirtualConfig,
    /// Population decay, rate `Γ1`.
    pub relaxation: DecayMeasurement,
    /// Coherence decay, rate `Γ2 / 2`.
    pub ramsey: DecayMeasurement,
    pub gamma1_fit: f64,
    pub gamma2_fit: f64,
    pub lambda: f64,
    pub sigma_lambda: f64,
    pub gamma3_extracted: f64,
    pub sigma_gamma3: f64,
    pub benchmark: BenchmarkReport,
}

/// Per-time averages of `observable` over free evolution from `initial`.
fn free_evolution<F>(
    cfg: &VirtualConfig,
    model: &NoiseModel,
    initial: &PureState,
    stream: u64,
    observable: F,
) -> Result<(Vec<f64>, Option<Vec<f64>>)>
where
    F: Fn(&[f64], Option<&DensityState>, Option<&PureState>) -> Result<f64>,
{
    match cfg.backend {
        Backend::Density => {
            let prop = LindbladPropagator::new(model, Integrator::Auto)?;
            let mut rho = DensityState::pure(initial)?;
            let mut values = Vec::with_capacity(cfg.max_time);
            for _ in 0..cfg.max_time {
                prop.evolve(&mut rho, 1.0)?;
                values.push(observable(&rho.probabilities(), Some(&rho), None)?);
            }
            Ok((values, None))
        }
        Backend::Mcwf { trajectories } | Backend::StatevecSampling { samples: trajectories } => {
            let solver = TrajectorySolver::new(model)?;
            let mut per_time = vec![Vec::with_capacity(trajectories); cfg.max_time];
            for j in 0..trajectories as u64 {
                let mut rng = trajectory_stream(mix(cfg.master_seed, stream), j).rng();
                let mut traj = TrajectoryState::new(initial.clone(), &mut rng);
                for slot in per_time.iter_mut() {
                    solver.evolve(&mut traj, 1.0, &mut rng)?;
                    slot.push(observable(&traj.state.probabilities(), None, Some(&traj.state))?);
                }
            }
            let t = trajectories as f64;
            let means: Vec<f64> = per_time.iter().map(|v| v.iter().sum::<f64>() / t).collect();
            let errs = per_time
                .iter()
                .zip(&means)
                .map(|(v, m)| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (t - 1.0).max(1.0) / t).sqrt())
                .collect();
            Ok((means, Some(errs)))
        }
    }
}

fn fit_decay(values: Vec<f64>, errors: Option<Vec<f64>>) -> Result<DecayMeasurement> {
    let times: Vec<usize> = (1..=values.len()).collect();
    let t: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let fit = fit_exponential_data(&t, &values, errors.as_deref())?;
    Ok(DecayMeasurement {
        times,
        values,
        rate: fit.lambda,
        sigma_rate: fit.sigma_lambda,
    })
}

/// Relaxation from `|1..1>` under `model`, averaged over qubits.
pub(crate) fn relaxation_curve(cfg: &VirtualConfig, model: &NoiseModel) -> Result<DecayMeasurement> {
    let n = cfg.n;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    amps[(1 << n) - 1] = C64::new(1.0, 0.0);
    let excited = PureState::from_amplitudes(n, amps)?;
    let (values, errors) = free_evolution(cfg, model, &excited, 1, |probs, _, _| {
        let mut pop = 0.0;
        for (x, p) in probs.iter().enumerate() {
            pop += p * x.count_ones() as f64;
        }
        Ok(pop / n as f64)
    })?;
    fit_decay(values, errors)
}

/// Ramsey decay of `<X_i>` from `|+>^n`, averaged over qubits.
pub(crate) fn ramsey_curve(cfg: &VirtualConfig, model: &NoiseModel) -> Result<DecayMeasurement> {
    let n = cfg.n;
    let dim = 1usize << n;
    let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let plus = PureState::from_amplitudes(n, vec![amp; dim])?;
    let xs: Vec<PauliString> = (0..n).map(|q| PauliString::single(n, q, Pauli::X)).collect();
    let (values, errors) = free_evolution(cfg, model, &plus, 2, |_, rho, psi| {
        let mut acc = 0.0;
        for p in &xs {
            acc += match (rho, psi) {
                (Some(r), _) => r.expectation_pauli(p)?.re,
                (_, Some(s)) => s.expectation_pauli(p)?.re,
                _ => unreachable!(),
            };
        }
        Ok(acc / n as f64)
    })?;
    fit_decay(values, errors)
}

pub fn virtual_experiment(cfg: &VirtualConfig) -> Result<VirtualResult> {
    if cfg.max_time < 3 {
        return Err(Error::invalid("free evolution needs at least 3 time points"));
    }
    if cfg.backend == Backend::Density && cfg.n > MAX_DENSITY_QUBITS {
        return Err(Error::unsupported(format!(
            "density backend supports n <= {MAX_DENSITY_QUBITS}"
        )));
    }
    let noise = NoiseSpec::CorrelatedDephasing {
        gamma1: cfg.gamma1,
        gamma2: cfg.gamma2,
        gamma3: cfg.gamma3,
    };
    let model = noise.model(cfg.n)?;
    let relaxation = relaxation_curve(cfg, &model).map_err(|e| e.context("relaxation fit"))?;
    let ramsey = ramsey_curve(cfg, &model).map_err(|e| e.context("Ramsey fit"))?;
    let bench_cfg = BenchmarkConfig {
        n: cfg.n,
        depths: cfg.depths.clone(),
        circuits: cfg.circuits,
        backend: cfg.backend,
        gate_set: GateSet::Haar2q,
        boundary: Boundary::Ring,
        noise,
        estimators: vec![cfg.estimator],
        master_seed: cfg.master_seed,
        fit_range: cfg.fit_range,
        schedule: CircuitSchedule::Nested,
        dfe_paulis: 1,
    };
    let benchmark = rcs_benchmark(&bench_cfg)?;
    let series = benchmark.series(cfg.estimator).expect("requested estimator");
    let fit = series
        .fit
        .as_ref()
        .ok_or_else(|| Error::Fit(series.fit_error.clone().unwrap_or_default()).context("RCS fit"))?;
    let gamma1_fit = relaxation.rate;
    let gamma2_fit = 2.0 * ramsey.rate;
    let n = cfg.n as f64;
    let sigma_gamma3 = ((relaxation.sigma_rate / 4.0).powi(2)
        + (2.0 * ramsey.sigma_rate / 4.0).powi(2)
        + (fit.sigma_lambda / n).powi(2))
    .sqrt();
    Ok(VirtualResult {
        config: cfg.clone(),
        gamma1_fit,
        gamma2_fit,
        lambda: fit.lambda,
        sigma_lambda: fit.sigma_lambda,
        gamma3_extracted: extract_gamma3(gamma1_fit, gamma2_fit, fit.lambda, cfg.n),
        sigma_gamma3,
        relaxation,
        ramsey,
        benchmark,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, g3: f64) -> VirtualConfig {
        VirtualConfig {
            n,
            gamma1: 0.01,
            gamma2: 0.02,
            gamma3: g3,
            max_time: 20,
            depths: vec![1, 2, 3],
            circuits: 2,
            backend: Backend::Density,
            estimator: EstimatorKind::Uxeb,
            fit_range: None,
            master_seed: 1,
        }
    }

    #[test]
    fn ramsey_convention_on_three_qubit_ring() {
        for g3 in [0.0, 0.005, 0.02] {
            let c = cfg(3, g3);
            let model = NoiseSpec::CorrelatedDephasing {
                gamma1: 0.01,
                gamma2: 0.02,
                gamma3: g3,
            }
            .model(3)
            .unwrap();
            let relax = relaxation_curve(&c, &model).unwrap();
            let ramsey = ramsey_curve(&c, &model).unwrap();
            assert!((relax.rate - 0.01).abs() < 1e-9, "{}", relax.rate);
            assert!((2.0 * ramsey.rate - (0.03 + 8.0 * g3)).abs() < 1e-9, "{}", ramsey.rate);
        }
    }

    #[test]
    fn trajectory_relaxation_is_consistent() {
        let mut c = cfg(4, 0.01);
        c.backend = Backend::Mcwf { trajectories: 2000 };
        let model = NoiseSpec::CorrelatedDephasing {
            gamma1: 0.05,
            gamma2: 0.02,
            gamma3: 0.01,
        }
        .model(4)
        .unwrap();
        let relax = relaxation_curve(&c, &model).unwrap();
        assert!((relax.rate - 0.05).abs() < 4.0 * relax.sigma_rate + 1e-3, "{relax:?}");
    }

    #[test]
    fn closed_loop_identity() {
        assert_eq!(extract_gamma3(0.01, 0.03, 0.1, 10), 0.0025 + 0.0075 - 0.01);
    }
}
