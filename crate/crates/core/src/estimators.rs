//! Fidelity estimators: sample and full-distribution cross-entropy forms,
//! direct fidelity estimation and the simultaneous-RB product.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::DensityState;
use crate::pauli::PauliString;
use crate::statevec::{sample_from_weights, PureState};
use crate::{Error, Result, C64};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Largest register for which DFE builds the full Pauli table.
pub const MAX_DFE_QUBITS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "F")]
    Fidelity,
    #[serde(rename = "uXEB")]
    Uxeb,
    #[serde(rename = "XEB")]
    Xeb,
    #[serde(rename = "logXEB")]
    LogXeb,
    #[serde(rename = "HOG")]
    Hog,
    #[serde(rename = "DFE")]
    Dfe,
    #[serde(rename = "sRB")]
    Srb,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Fidelity,
        EstimatorKind::Uxeb,
        EstimatorKind::Xeb,
        EstimatorKind::LogXeb,
        EstimatorKind::Hog,
        EstimatorKind::Dfe,
        EstimatorKind::Srb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Fidelity => "F",
            EstimatorKind::Uxeb => "uXEB",
            EstimatorKind::Xeb => "XEB",
            EstimatorKind::LogXeb => "logXEB",
            EstimatorKind::Hog => "HOG",
            EstimatorKind::Dfe => "DFE",
            EstimatorKind::Srb => "sRB",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorValue {
    pub kind: EstimatorKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl EstimatorValue {
    fn exact(kind: EstimatorKind, value: f64) -> Self {
        Self {
            kind,
            value,
            stderr: None,
        }
    }
}

/// Ideal output distribution `p_C(x)` with `Σ p^2` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealDistribution {
    probs: Vec<f64>,
    sum_p_sq: f64,
}

impl IdealDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if !probs.len().is_power_of_two() {
            return Err(Error::invalid("distribution length must be a power of two"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("negative or NaN probability"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        let sum_p_sq = probs.iter().map(|p| p * p).sum();
        Ok(Self { probs, sum_p_sq })
    }

    pub fn from_state(psi: &PureState) -> Result<Self> {
        Self::new(psi.probabilities())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn sum_p_sq(&self) -> f64 {
        self.sum_p_sq
    }

    /// `D Σ p^2 - 1`, the uXEB normalization.
    pub fn denominator(&self) -> f64 {
        self.dim() as f64 * self.sum_p_sq - 1.0
    }

    fn checked_denominator(&self) -> Result<f64> {
        let den = self.denominator();
        if den <= 1e-12 {
            return Err(Error::invalid(format!("degenerate uXEB denominator {den:.3e}")));
        }
        Ok(den)
    }

    fn heavy_threshold(&self) -> f64 {
        std::f64::consts::LN_2 / self.dim() as f64
    }
}

fn check_samples(samples: &[usize], ideal: &IdealDistribution) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if let Some(&x) = samples.iter().find(|&&x| x >= ideal.dim()) {
        return Err(Error::invalid(format!("sample {x} out of range")));
    }
    Ok(())
}

/// Mean and standard error of `D p(x_i)` over the samples.
fn scaled_prob_stats(samples: &[usize], ideal: &IdealDistribution) -> (f64, f64) {
    let d = ideal.dim() as f64;
    let m = samples.len() as f64;
    let vals = samples.iter().map(|&x| d * ideal.probs[x]);
    let mean = vals.clone().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `(D/M) Σ p(x_i) - 1`.
pub fn xeb_samples(samples: &[usize], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    check_samples(samples, ideal)?;
    let (mean, se) = scaled_prob_stats(samples, ideal);
    Ok(EstimatorValue {
        kind: EstimatorKind::Xeb,
        value: mean - 1.0,
        stderr: Some(se),
    })
}

/// `((D/M) Σ p(x_i) - 1) / (D Σ p^2 - 1)`.
pub fn uxeb_samples(samples: &[usize], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    check_samples(samples, ideal)?;
    let den = ideal.checked_denominator()?;
    let (mean, se) = scaled_prob_stats(samples, ideal);
    Ok(EstimatorValue {
        kind: EstimatorKind::Uxeb,
        value: (mean - 1.0) / den,
        stderr: Some(se / den),
    })
}

/// Sums over outcomes that are linear in the noisy distribution `q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionMoments {
    /// `Σ p(x) q(x)`.
    pub sum_pq: f64,
    /// `Σ q(x) ln p(x)` over outcomes with `p >= 1e-300`.
    pub sum_q_ln_p: f64,
    /// `Σ q(x) 1[p(x) >= ln2 / D]`.
    pub sum_q_heavy: f64,
    /// First outcome with `p < 1e-300` but `q > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_probability: Option<usize>,
}

impl DistributionMoments {
    pub fn new(q: &[f64], ideal: &IdealDistribution) -> Result<Self> {
        if q.len() != ideal.dim() {
            return Err(Error::DimensionMismatch {
                expected: ideal.dim(),
                got: q.len(),
            });
        }
        let thr = ideal.heavy_threshold();
        let mut m = DistributionMoments::default();
        for (x, (&qx, &p)) in q.iter().zip(&ideal.probs).enumerate() {
            m.sum_pq += p * qx;
            if p >= thr {
                m.sum_q_heavy += qx;
            }
            if p < 1e-300 {
                if qx > 0.0 && m.zero_probability.is_none() {
                    m.zero_probability = Some(x);
                }
            } else {
                m.sum_q_ln_p += qx * p.ln();
            }
        }
        Ok(m)
    }

    pub fn estimate(&self, kind: EstimatorKind, ideal: &IdealDistribution) -> Result<EstimatorValue> {
        let d = ideal.dim() as f64;
        let value = match kind {
            EstimatorKind::Xeb => d * self.sum_pq - 1.0,
            EstimatorKind::Uxeb => (d * self.sum_pq - 1.0) / ideal.checked_denominator()?,
            EstimatorKind::LogXeb => {
                if let Some(x) = self.zero_probability {
                    return Err(Error::ZeroProbability(x));
                }
                d.ln() + EULER_GAMMA + self.sum_q_ln_p
            }
            EstimatorKind::Hog => (2.0 * self.sum_q_heavy - 1.0) / std::f64::consts::LN_2,
            other => {
                return Err(Error::invalid(format!("{other} is not a distribution estimator")));
            }
        };
        Ok(EstimatorValue::exact(kind, value))
    }
}

pub fn uxeb_full(q: &[f64], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    DistributionMoments::new(q, ideal)?.estimate(EstimatorKind::Uxeb, ideal)
}

pub fn xeb_full(q: &[f64], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    DistributionMoments::new(q, ideal)?.estimate(EstimatorKind::Xeb, ideal)
}

pub fn logxeb_full(q: &[f64], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    DistributionMoments::new(q, ideal)?.estimate(EstimatorKind::LogXeb, ideal)
}

pub fn hog_full(q: &[f64], ideal: &IdealDistribution) -> Result<EstimatorValue> {
    DistributionMoments::new(q, ideal)?.estimate(EstimatorKind::Hog, ideal)
}

/// `Π (1 - e_i)`.
pub fn srb_estimate(error_rates: &[f64]) -> Result<EstimatorValue> {
    if let Some(e) = error_rates.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(Error::invalid(format!("error rate {e} outside [0, 1)")));
    }
    Ok(EstimatorValue::exact(
        EstimatorKind::Srb,
        error_rates.iter().map(|e| 1.0 - e).product(),
    ))
}

fn fwht(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `<ψ|X^a Z^b|ψ>` up to the Hermitian phase, for every Pauli, indexed `a * D + b`.
///
/// The returned values are `<ψ|σ|ψ>` for `σ = i^{|a&b|} X^a Z^b`, which is real.
pub fn pauli_expectations(psi: &PureState) -> Result<Vec<f64>> {
    let n = psi.n();
    if n > MAX_DFE_QUBITS {
        return Err(Error::unsupported(format!(
            "Pauli table needs n <= {MAX_DFE_QUBITS}, got {n}"
        )));
    }
    let dim = 1usize << n;
    let amps = psi.amplitudes();
    let mut out = vec![0.0; dim * dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    for a in 0..dim {
        for (y, slot) in buf.iter_mut().enumerate() {
            *slot = amps[y ^ a].conj() * amps[y];
        }
        fwht(&mut buf);
        for b in 0..dim {
            let phase = crate::pauli::i_pow((a & b).count_ones());
            out[a * dim + b] = (phase * buf[b]).re;
        }
    }
    Ok(out)
}

/// Noisy state access for DFE.
#[derive(Clone, Copy, Debug)]
pub enum NoisyState<'a> {
    Density(&'a DensityState),
    /// Equal-weight mixture of trajectory states.
    Trajectories(&'a [PureState]),
}

impl NoisyState<'_> {
    fn n(&self) -> usize {
        match self {
            NoisyState::Density(r) => r.n(),
            NoisyState::Trajectories(s) => s.first().map(|s| s.n()).unwrap_or(0),
        }
    }

    fn expectation(&self, p: &PauliString) -> Result<f64> {
        match self {
            NoisyState::Density(r) => Ok(r.expectation_pauli(p)?.re),
            NoisyState::Trajectories(states) => {
                let mut s = 0.0;
                for st in states.iter() {
                    s += st.expectation_pauli(p)?.re;
                }
                Ok(s / states.len() as f64)
            }
        }
    }
}

/// Direct fidelity estimate from `k` Paulis drawn with probability `γ_α^2`.
/// With `shots = Some(m)` each noisy expectation is replaced by the mean of
/// `m` simulated `±1` outcomes.
pub fn dfe<R: Rng + ?Sized>(
    ideal: &PureState,
    noisy: NoisyState<'_>,
    k: usize,
    shots: Option<usize>,
    rng: &mut R,
) -> Result<EstimatorValue> {
    if k == 0 {
        return Err(Error::invalid("DFE needs at least one Pauli"));
    }
    if noisy.n() != ideal.n() {
        return Err(Error::DimensionMismatch {
            expected: ideal.n(),
            got: noisy.n(),
        });
    }
    if let Some(0) = shots {
        return Err(Error::invalid("DFE needs at least one shot per Pauli"));
    }
    let n = ideal.n();
    let dim = 1usize << n;
    let table = pauli_expectations(ideal)?;
    let weights: Vec<f64> = table.iter().map(|e| e * e).collect();
    let draws = sample_from_weights(&weights, k, rng)?;
    let mut ratios = Vec::with_capacity(k);
    for alpha in draws {
        let expected = table[alpha];
        if expected.abs() < 1e-300 {
            return Err(Error::invalid("drew a Pauli with zero ideal expectation"));
        }
        let (a, b) = ((alpha / dim) as u64, (alpha % dim) as u64);
        let p = PauliString::from_masks(n, a, b);
        let exact = noisy.expectation(&p)?;
        let measured = match shots {
            None => exact,
            Some(m) => {
                let up =
                    Bernoulli::new(((1.0 + exact) / 2.0).clamp(0.0, 1.0)).map_err(|e| Error::invalid(e.to_string()))?;
                let plus = (0..m).filter(|_| up.sample(rng)).count() as f64;
                (2.0 * plus - m as f64) / m as f64
            }
        };
        ratios.push(measured / expected);
    }
    let mean = ratios.iter().sum::<f64>() / k as f64;
    let stderr = if k > 1 {
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        Some((var / k as f64).sqrt())
    } else {
        None
    };
    Ok(EstimatorValue {
        kind: EstimatorKind::Dfe,
        value: mean,
        stderr,
    })
}
