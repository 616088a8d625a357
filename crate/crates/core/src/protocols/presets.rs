//! Named experiment configurations.

use serde::{Deserialize, Serialize};

use crate::circuits::{Boundary, GateSet};
use crate::estimators::EstimatorKind;
use crate::noise::Preset;
use crate::stats::{AlConfig, FitRange};
use crate::{Error, Result};

use super::{Backend, BenchmarkConfig, CircuitSchedule, NoiseSpec, RbConfig, VirtualConfig};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Total effective noise rate shared by the benchmark presets.
pub const TABLE_ENR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Benchmark(BenchmarkConfig),
    Rb(RbConfig),
    Virtual(VirtualConfig),
    Variance(AlConfig),
}

pub const PRESET_NAMES: &[&str] = &[
    "mcwf-t1t2",
    "mcwf-pauli-x",
    "mcwf-corr-xx",
    "mcwf-weight-nm1",
    "density-t1t2",
    "density-pauli-x",
    "density-corr-xx",
    "density-weight-nm1",
    "uxeb-unbiased",
    "rb-weight-nm1",
    "rb-pauli-x",
    "virtual-0",
    "virtual-0.25",
    "virtual-1",
    "variance-haar2q",
    "variance-cnot-haar1q",
];

fn noise_family(name: &str) -> Result<Preset> {
    Preset::parse(&name.replace('-', "_"))
}

/// Trajectory benchmark at `d = n ..= 2.5 n`.
pub fn trajectory_benchmark(preset: Preset, n: usize) -> BenchmarkConfig {
    let d_max = (5 * n).div_ceil(2);
    BenchmarkConfig {
        n,
        depths: (n..=d_max).collect(),
        circuits: 100,
        backend: Backend::Mcwf { trajectories: 400 },
        gate_set: GateSet::Haar2q,
        boundary: Boundary::Ring,
        noise: NoiseSpec::Preset { preset, enr: TABLE_ENR },
        estimators: vec![
            EstimatorKind::Fidelity,
            EstimatorKind::Uxeb,
            EstimatorKind::Xeb,
            EstimatorKind::LogXeb,
            EstimatorKind::Hog,
        ],
        master_seed: DEFAULT_SEED,
        fit_range: Some(FitRange { d_min: n, d_max }),
        schedule: CircuitSchedule::Nested,
        dfe_paulis: 50,
    }
}

/// Exact density-matrix runs at `n = 10`, depths 10 to 25.
pub fn density_benchmark(preset: Preset, n: usize) -> BenchmarkConfig {
    BenchmarkConfig {
        depths: (10..=25).collect(),
        backend: Backend::Density,
        estimators: vec![EstimatorKind::Fidelity, EstimatorKind::Uxeb],
        fit_range: Some(FitRange { d_min: 10, d_max: 25 }),
        ..trajectory_benchmark(preset, n)
    }
}

pub fn uxeb_unbiased(n: usize) -> BenchmarkConfig {
    BenchmarkConfig {
        n,
        depths: vec![2 * n],
        circuits: 100,
        backend: Backend::StatevecSampling { samples: 2000 },
        gate_set: GateSet::Haar2q,
        boundary: Boundary::Ring,
        noise: NoiseSpec::None,
        estimators: vec![EstimatorKind::Uxeb],
        master_seed: DEFAULT_SEED,
        fit_range: None,
        schedule: CircuitSchedule::Independent,
        dfe_paulis: 50,
    }
}

pub fn rb_benchmark(preset: Preset, n: usize) -> RbConfig {
    RbConfig {
        n,
        noise: NoiseSpec::Preset { preset, enr: TABLE_ENR },
        lengths: vec![1, 2, 4, 7, 11, 16, 22, 30, 40, 50],
        sequences: 10,
        backend: Backend::Density,
        master_seed: DEFAULT_SEED,
    }
}

/// Depth windows keep the fitted fidelity between roughly 0.7 and 0.05.
pub fn virtual_dephasing(alpha: f64, n: usize) -> VirtualConfig {
    let gamma3 = 0.02 * alpha;
    let lambda = n as f64 * (0.01 / 2.0 + 0.02 / 4.0 + gamma3);
    let d_min = ((0.4 / lambda).round() as usize).max(3);
    let d_max = ((3.0 / lambda).round() as usize).max(d_min + 4);
    VirtualConfig {
        n,
        gamma1: 0.01,
        gamma2: 0.02,
        gamma3,
        max_time: 20,
        depths: (d_min..=d_max).collect(),
        circuits: 50,
        backend: Backend::Density,
        estimator: EstimatorKind::Uxeb,
        fit_range: Some(FitRange { d_min, d_max }),
        master_seed: DEFAULT_SEED,
    }
}

pub fn al_variance(gate_set: GateSet, n: usize) -> AlConfig {
    AlConfig {
        n,
        d_max: 30,
        gate_set,
        boundary: Boundary::Ring,
        circuits: 2000,
        locations: 0,
        master_seed: DEFAULT_SEED,
    }
}

/// Looks up a named preset, optionally at a different register size.
pub fn preset(name: &str, n: Option<usize>) -> Result<ExperimentConfig> {
    let unknown = || Error::invalid(format!("unknown preset '{name}'; known: {}", PRESET_NAMES.join(", ")));
    if let Some(rest) = name.strip_prefix("mcwf-") {
        return Ok(ExperimentConfig::Benchmark(trajectory_benchmark(
            noise_family(rest)?,
            n.unwrap_or(20),
        )));
    }
    if let Some(rest) = name.strip_prefix("density-") {
        return Ok(ExperimentConfig::Benchmark(density_benchmark(
            noise_family(rest)?,
            n.unwrap_or(10),
        )));
    }
    if name == "uxeb-unbiased" {
        return Ok(ExperimentConfig::Benchmark(uxeb_unbiased(n.unwrap_or(10))));
    }
    if let Some(rest) = name.strip_prefix("rb-") {
        return Ok(ExperimentConfig::Rb(rb_benchmark(noise_family(rest)?, n.unwrap_or(10))));
    }
    if let Some(rest) = name.strip_prefix("virtual-") {
        let alpha: f64 = rest.parse().map_err(|_| unknown())?;
        return Ok(ExperimentConfig::Virtual(virtual_dephasing(alpha, n.unwrap_or(10))));
    }
    if let Some(rest) = name.strip_prefix("variance-") {
        let gate_set = match rest {
            "haar2q" => GateSet::Haar2q,
            "cnot-haar1q" => GateSet::CnotHaar1q,
            _ => return Err(unknown()),
        };
        return Ok(ExperimentConfig::Variance(al_variance(gate_set, n.unwrap_or(8))));
    }
    Err(unknown())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves() {
        for name in PRESET_NAMES {
            let cfg = preset(name, None).unwrap();
            if let ExperimentConfig::Benchmark(b) = &cfg {
                b.validate().unwrap();
            }
            if let ExperimentConfig::Rb(r) = &cfg {
                r.validate().unwrap();
            }
        }
        assert!(preset("bogus-x", None).is_err());
        assert!(preset("mcwf-bogus", None).is_err());
    }

    #[test]
    fn trajectory_benchmark_shapes() {
        let c = trajectory_benchmark(Preset::T1t2, 20);
        assert_eq!((c.depths[0], *c.depths.last().unwrap()), (20, 50));
        let c = trajectory_benchmark(Preset::T1t2, 14);
        assert_eq!((c.depths[0], *c.depths.last().unwrap()), (14, 35));
        assert!((c.noise.model(14).unwrap().enr() - TABLE_ENR).abs() < 1e-15);
    }

    #[test]
    fn experiment_json_roundtrip() {
        for name in PRESET_NAMES {
            let cfg = preset(name, None).unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
        }
    }
}
