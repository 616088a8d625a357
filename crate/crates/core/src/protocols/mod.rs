//! Complete experiments built from the simulation, estimator and fitting layers.

mod benchmark;
mod checks;
pub mod presets;
mod rb;
mod virtual_exp;

use serde::{Deserialize, Serialize};

use crate::noise::{correlated_dephasing_model, NoiseModel, Preset};
use crate::{Error, Result};

pub use benchmark::{
    rcs_benchmark, Backend, BenchmarkConfig, BenchmarkReport, CircuitSchedule, EstimatorSeries, Provenance,
};
pub use checks::{first_order_check, theorem1_check, FirstOrderCheckRow, Theorem1Result};
pub use rb::{simultaneous_rb, PairResult, PatternResult, RbConfig, RbReport, SurvivalPoint, PAULI_ERROR_FACTOR};
pub use virtual_exp::{extract_gamma3, virtual_experiment, DecayMeasurement, VirtualConfig, VirtualResult};

/// Noise model description used in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Noiseless evolution.
    None,
    /// A named family scaled to a total effective noise rate.
    Preset { preset: Preset, enr: f64 },
    /// Amplitude decay, dephasing and nearest-neighbour `ZZ` dephasing.
    CorrelatedDephasing { gamma1: f64, gamma2: f64, gamma3: f64 },
    /// An explicit model.
    Model { model: NoiseModel },
}

impl NoiseSpec {
    pub fn model(&self, n: usize) -> Result<NoiseModel> {
        match self {
            NoiseSpec::None => Preset::PauliX.model(n, 0.0),
            NoiseSpec::Preset { preset, enr } => {
                if !(*enr >= 0.0) {
                    return Err(Error::invalid(format!("noise rate {enr} must be >= 0")));
                }
                preset.with_enr(n, *enr)
            }
            NoiseSpec::CorrelatedDephasing { gamma1, gamma2, gamma3 } => {
                correlated_dephasing_model(n, *gamma1, *gamma2, *gamma3)
            }
            NoiseSpec::Model { model } => {
                if model.n != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: model.n,
                    });
                }
                model.validate()?;
                Ok(model.clone())
            }
        }
    }
}
