//! Numerical checks of the average-fidelity theory against exact simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{sample_rqc_seeded, Boundary, CircuitSeed, GateSet};
use crate::density::{run_density_with, LayerNoise};
use crate::mcwf::ideal_checkpoints;
use crate::noise::ProcessMatrix;
use crate::pauli::{Pauli, PauliString};
use crate::spinmodel::first_order_table;
use crate::{Error, Result};

const MAX_THEOREM1_QUBITS: usize = 6;
const MAX_FIRST_ORDER_QUBITS: usize = 8;

/// Mean fidelities under a channel and its Pauli-diagonal part, paired by circuit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Result {
    pub circuits: usize,
    pub mean_full: f64,
    pub mean_diag: f64,
    pub mean_diff: f64,
    pub stderr_diff: f64,
    pub z: f64,
}

fn ring_tiles(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| (0..k).map(|j| (i + j) % n).collect()).collect()
}

/// Compares `χ` applied after every layer (tiled on consecutive ring qubits)
/// with its diagonal part on the same circuits.
pub fn theorem1_check(
    n: usize,
    d: usize,
    chi: &ProcessMatrix,
    circuits: usize,
    master_seed: u64,
) -> Result<Theorem1Result> {
    if n > MAX_THEOREM1_QUBITS {
        return Err(Error::unsupported(format!(
            "theorem1_check needs n <= {MAX_THEOREM1_QUBITS}"
        )));
    }
    if circuits < 2 {
        return Err(Error::invalid("theorem1_check needs at least two circuits"));
    }
    let tiles = ring_tiles(n, chi.k());
    let full = LayerNoise::tiled(chi, &tiles, n)?;
    let diag = LayerNoise::tiled(&chi.diagonalize(), &tiles, n)?;
    let pairs: Vec<(f64, f64)> = (0..circuits as u64)
        .into_par_iter()
        .map(|i| {
            let c = sample_rqc_seeded(
                n,
                d,
                GateSet::Haar2q,
                Boundary::Ring,
                CircuitSeed {
                    master: master_seed,
                    index: i,
                },
            )?;
            let ideal = crate::statevec::run_circuit(&c)?;
            let f_full = run_density_with(&c, &full, |_, _| Ok(()))?.expectation_pure(&ideal)?;
            let f_diag = run_density_with(&c, &diag, |_, _| Ok(()))?.expectation_pure(&ideal)?;
            Ok((f_full, f_diag))
        })
        .collect::<Result<_>>()?;
    let l = circuits as f64;
    let mean_full = pairs.iter().map(|p| p.0).sum::<f64>() / l;
    let mean_diag = pairs.iter().map(|p| p.1).sum::<f64>() / l;
    let mean_diff = mean_full - mean_diag;
    let var = pairs.iter().map(|p| (p.0 - p.1 - mean_diff).powi(2)).sum::<f64>() / (l - 1.0);
    let stderr_diff = (var / l).sqrt();
    let z = if stderr_diff > 0.0 {
        mean_diff / stderr_diff
    } else {
        0.0
    };
    Ok(Theorem1Result {
        circuits,
        mean_full,
        mean_diag,
        mean_diff,
        stderr_diff,
        z,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderCheckRow {
    pub depth: usize,
    pub f0: f64,
    pub ef1: f64,
    /// Exact average fidelity estimated over circuits.
    pub ef: f64,
    pub ef_stderr: f64,
    /// `E F1 / F0`.
    pub first_order_ratio: f64,
    /// `(E F - F0 - E F1) / F0`.
    pub higher_order_ratio: f64,
    pub higher_order_stderr: f64,
}

/// Exact average fidelity under i.i.d. Pauli-X noise of probability `eps`
/// against the zeroth- and first-order terms of the error expansion.
///
/// Each circuit's own first-order term `F1(C)` is subtracted before
/// averaging; its mean is the spin-model value, so `E F` stays unbiased
/// while the cross-circuit spread of the first-order term drops out.
pub fn first_order_check(
    n: usize,
    d_max: usize,
    eps: f64,
    circuits: usize,
    master_seed: u64,
) -> Result<Vec<FirstOrderCheckRow>> {
    if n > MAX_FIRST_ORDER_QUBITS {
        return Err(Error::unsupported(format!(
            "first_order_check needs n <= {MAX_FIRST_ORDER_QUBITS}"
        )));
    }
    if circuits < 2 || d_max == 0 {
        return Err(Error::invalid(
            "first_order_check needs at least two circuits and d_max >= 1",
        ));
    }
    let table = first_order_table(n, d_max, eps)?;
    let chi = ProcessMatrix::from_diagonal(&[1.0 - eps, eps, 0.0, 0.0])?;
    let noise = LayerNoise::tiled(&chi, &ring_tiles(n, 1), n)?;
    let xs: Vec<PauliString> = (0..n).map(|q| PauliString::single(n, q, Pauli::X)).collect();
    let depths: Vec<usize> = (1..=d_max).collect();
    let higher: Vec<Vec<f64>> = (0..circuits as u64)
        .into_par_iter()
        .map(|i| {
            let c = sample_rqc_seeded(
                n,
                d_max,
                GateSet::Haar2q,
                Boundary::Ring,
                CircuitSeed {
                    master: master_seed,
                    index: i,
                },
            )?;
            let checkpoints = ideal_checkpoints(&c, &depths)?;
            let mut a_sum = 0.0;
            let mut out = Vec::with_capacity(d_max);
            run_density_with(&c, &noise, |depth, rho| {
                let ideal = &checkpoints[depth - 1].state;
                let mut a = 0.0;
                for x in &xs {
                    a += ideal.expectation_pauli(x)?.norm_sqr();
                }
                a_sum += a / n as f64;
                let row = &table[depth - 1];
                let f1 = n as f64 * eps * (1.0 - eps).powi((n * depth) as i32 - 1) * a_sum;
                out.push(rho.expectation_pure(ideal)? - row.f0 - f1);
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let l = circuits as f64;
    Ok(table
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let h: Vec<f64> = higher.iter().map(|v| v[k]).collect();
            let mean = h.iter().sum::<f64>() / l;
            let se = (h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (l - 1.0) / l).sqrt();
            FirstOrderCheckRow {
                depth: row.depth,
                f0: row.f0,
                ef1: row.ef1,
                ef: row.f0 + row.ef1 + mean,
                ef_stderr: se,
                first_order_ratio: row.ef1 / row.f0,
                higher_order_ratio: mean / row.f0,
                higher_order_stderr: se / row.f0,
            }
        })
        .collect())
}
