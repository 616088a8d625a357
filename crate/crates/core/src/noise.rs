//! Lindblad noise models, effective noise rates and process matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::pauli::{pauli_basis, PauliString};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// `|0><1|` on each supported qubit.
    AmplitudeDecay,
    /// `|1><1|` on each supported qubit.
    Dephasing,
    /// A Pauli string on the support.
    PauliString,
    /// Product of `|0><1|` across the support.
    CorrAmplitude,
    /// Product of `|1><1|` across the support.
    CorrDephasing,
}

/// One weighted term `γ D[J]` of the Lindblad generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseTerm {
    pub kind: TermKind,
    pub support: Vec<usize>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli: Option<String>,
}

impl CollapseTerm {
    pub fn amplitude_decay(qubits: Vec<usize>, gamma: f64) -> Self {
        Self {
            kind: TermKind::AmplitudeDecay,
            support: qubits,
            gamma,
            pauli: None,
        }
    }

    pub fn dephasing(qubits: Vec<usize>, gamma: f64) -> Self {
        Self {
            kind: TermKind::Dephasing,
            support: qubits,
            gamma,
            pauli: None,
        }
    }

    pub fn pauli(support: Vec<usize>, label: &str, gamma: f64) -> Self {
        Self {
            kind: TermKind::PauliString,
            support,
            gamma,
            pauli: Some(label.to_string()),
        }
    }

    pub fn corr_amplitude(support: Vec<usize>, gamma: f64) -> Self {
        Self {
            kind: TermKind::CorrAmplitude,
            support,
            gamma,
            pauli: None,
        }
    }

    pub fn corr_dephasing(support: Vec<usize>, gamma: f64) -> Self {
        Self {
            kind: TermKind::CorrDephasing,
            support,
            gamma,
            pauli: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("rate {} must be finite and >= 0", self.gamma)));
        }
        if self.support.is_empty() {
            return Err(Error::invalid("collapse term with empty support"));
        }
        let mut seen = vec![false; n];
        for &q in &self.support {
            if q >= n {
                return Err(Error::invalid(format!("support qubit {q} out of range for n = {n}")));
            }
            if seen[q] {
                return Err(Error::invalid(format!("repeated support qubit {q}")));
            }
            seen[q] = true;
        }
        match (self.kind, &self.pauli) {
            (TermKind::PauliString, Some(label)) => {
                PauliString::on_support(n, &self.support, label)?;
            }
            (TermKind::PauliString, None) => {
                return Err(Error::invalid("pauli_string term needs a Pauli label"));
            }
            (_, Some(_)) => {
                return Err(Error::invalid("only pauli_string terms carry a Pauli label"));
            }
            _ => {}
        }
        Ok(())
    }

    /// The individual collapse operators this term stands for.
    pub fn collapse_ops(&self, n: usize) -> Result<Vec<CollapseOp>> {
        self.validate(n)?;
        let ops = match self.kind {
            TermKind::AmplitudeDecay => self
                .support
                .iter()
                .map(|&q| CollapseOp::new(n, OpKind::Lower, vec![q], self.gamma))
                .collect(),
            TermKind::Dephasing => self
                .support
                .iter()
                .map(|&q| CollapseOp::new(n, OpKind::Number, vec![q], self.gamma))
                .collect(),
            TermKind::CorrAmplitude => {
                vec![CollapseOp::new(n, OpKind::Lower, self.support.clone(), self.gamma)]
            }
            TermKind::CorrDephasing => {
                vec![CollapseOp::new(n, OpKind::Number, self.support.clone(), self.gamma)]
            }
            TermKind::PauliString => {
                let label = self.pauli.clone().unwrap_or_default();
                vec![CollapseOp::new(
                    n,
                    OpKind::Pauli(label),
                    self.support.clone(),
                    self.gamma,
                )]
            }
        };
        Ok(ops)
    }
}

/// Shape of a single collapse operator on its support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpKind {
    /// `⊗ |0><1|`.
    Lower,
    /// `⊗ |1><1|`.
    Number,
    /// Pauli label, one symbol per support qubit.
    Pauli(String),
}

/// `J†J` for the supported operator kinds, all diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpNorm {
    Identity,
    /// Projector onto basis states with every bit of `mask` set.
    AllOnes(u64),
}

/// A single collapse operator `J` with rate `γ`, compiled for an `n`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseOp {
    pub gamma: f64,
    pub support: Vec<usize>,
    pub kind: OpKind,
    n: usize,
    mask: u64,
    pauli: Option<PauliString>,
}

impl CollapseOp {
    pub(crate) fn new(n: usize, kind: OpKind, support: Vec<usize>, gamma: f64) -> Self {
        let mask = support.iter().fold(0u64, |m, &q| m | 1u64 << (n - 1 - q));
        let pauli = match &kind {
            OpKind::Pauli(label) => PauliString::on_support(n, &support, label).ok(),
            _ => None,
        };
        Self {
            gamma,
            support,
            kind,
            n,
            mask,
            pauli,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The same operator with rate `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> CollapseOp {
        CollapseOp { gamma, ..self.clone() }
    }

    /// Bit mask of the support.
    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn pauli(&self) -> Option<&PauliString> {
        self.pauli.as_ref()
    }

    /// `J|x> = amp |y>` or zero.
    #[inline]
    pub fn apply_basis(&self, x: usize) -> Option<(usize, C64)> {
        let m = self.mask as usize;
        match &self.kind {
            OpKind::Lower => (x & m == m).then_some((x ^ m, C64::new(1.0, 0.0))),
            OpKind::Number => (x & m == m).then_some((x, C64::new(1.0, 0.0))),
            OpKind::Pauli(_) => Some(self.pauli.as_ref().expect("validated").apply_to_basis(x)),
        }
    }

    pub fn jump_norm(&self) -> JumpNorm {
        match self.kind {
            OpKind::Pauli(_) => JumpNorm::Identity,
            OpKind::Lower | OpKind::Number => JumpNorm::AllOnes(self.mask),
        }
    }

    /// Whether `D[J]` acts diagonally on the matrix units `|x><y|`.
    pub fn is_dephasing_like(&self) -> bool {
        match &self.kind {
            OpKind::Number => true,
            OpKind::Pauli(_) => self.pauli.as_ref().is_some_and(|p| p.is_diagonal()),
            OpKind::Lower => false,
        }
    }

    /// First-order contribution to the effective noise rate.
    pub fn enr(&self) -> f64 {
        let k = self.support.len() as i32;
        match &self.kind {
            OpKind::Pauli(_) => {
                if self.pauli.as_ref().is_some_and(|p| p.is_identity()) {
                    0.0
                } else {
                    self.gamma
                }
            }
            OpKind::Lower => self.gamma * 0.5f64.powi(k),
            OpKind::Number => self.gamma * (2f64.powi(k) - 1.0) / 4f64.powi(k),
        }
    }

    /// The same operator on a register made of the qubits `on`, relabelled
    /// to `0..on.len()`.
    pub fn localize(&self, on: &[usize]) -> Result<CollapseOp> {
        let support = self
            .support
            .iter()
            .map(|q| {
                on.iter()
                    .position(|p| p == q)
                    .ok_or_else(|| Error::invalid(format!("qubit {q} not in local register")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CollapseOp::new(on.len(), self.kind.clone(), support, self.gamma))
    }

    /// Dense matrix of `J` on the full register; intended for small `n`.
    pub fn dense(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for x in 0..dim {
            if let Some((y, a)) = self.apply_basis(x) {
                m[(y, x)] = a;
            }
        }
        m
    }
}

/// Superoperator of `Σ γ D[J]` on row-major `vec(ρ)`, for ops on a small register.
pub fn lindblad_superoperator(ops: &[CollapseOp], n: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let id = DMatrix::<C64>::identity(d, d);
    let mut l = DMatrix::<C64>::zeros(d * d, d * d);
    for op in ops {
        let j = op.dense();
        let jdj = j.adjoint() * &j;
        let g = C64::new(op.gamma, 0.0);
        l += (j.kronecker(&j.map(|c| c.conj()))
            - (jdj.kronecker(&id) + id.kronecker(&jdj.transpose())) * C64::new(0.5, 0.0))
            * g;
    }
    l
}

/// Sum of weighted collapse terms acting between gate layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub n: usize,
    pub terms: Vec<CollapseTerm>,
}

impl NoiseModel {
    pub fn new(n: usize, terms: Vec<CollapseTerm>) -> Result<Self> {
        let m = Self { n, terms };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > crate::pauli::MAX_QUBITS {
            return Err(Error::invalid(format!("noise model size n = {}", self.n)));
        }
        if self.terms.is_empty() {
            return Err(Error::invalid("noise model needs at least one term"));
        }
        self.terms.iter().try_for_each(|t| t.validate(self.n))
    }

    /// Total effective noise rate per time unit.
    pub fn enr(&self) -> f64 {
        self.terms.iter().map(enr_of_term).sum()
    }

    /// All collapse operators, in term order.
    pub fn collapse_ops(&self) -> Result<Vec<CollapseOp>> {
        let mut ops = Vec::new();
        for t in &self.terms {
            ops.extend(t.collapse_ops(self.n)?);
        }
        Ok(ops)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: NoiseModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> NoiseModel {
        NoiseModel {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|t| CollapseTerm {
                    gamma: t.gamma * factor,
                    ..t.clone()
                })
                .collect(),
        }
    }
}

/// A term's first-order contribution to the effective noise rate.
pub fn enr_of_term(term: &CollapseTerm) -> f64 {
    let k = term.support.len() as i32;
    let g = term.gamma;
    match term.kind {
        TermKind::AmplitudeDecay => 0.5 * g * k as f64,
        TermKind::Dephasing => 0.25 * g * k as f64,
        TermKind::CorrAmplitude => g * 0.5f64.powi(k),
        TermKind::CorrDephasing => g * (2f64.powi(k) - 1.0) / 4f64.powi(k),
        TermKind::PauliString => {
            let identity = term
                .pauli
                .as_deref()
                .is_some_and(|p| p.chars().all(|c| c.eq_ignore_ascii_case(&'I')));
            if identity {
                0.0
            } else {
                g
            }
        }
    }
}

pub fn enr_of_model(model: &NoiseModel) -> f64 {
    model.enr()
}

/// Named noise families, each scaled so that the total rate is `n γ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `γ D[σ] + 2γ D[σ†σ]` on every qubit.
    T1t2,
    /// `γ D[X]` on every qubit.
    PauliX,
    /// `γ D[X_i X_{i+1}]` on every ring bond.
    CorrXx,
    /// `γ D[Π_{i≠j} X_i]` for every `j`.
    WeightNm1,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::T1t2, Preset::PauliX, Preset::CorrXx, Preset::WeightNm1];

    pub fn name(self) -> &'static str {
        match self {
            Preset::T1t2 => "t1t2",
            Preset::PauliX => "pauli_x",
            Preset::CorrXx => "corr_xx",
            Preset::WeightNm1 => "weight_nm1",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('_', "-") == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise preset '{s}'")))
    }

    /// The preset at per-term rate `gamma`.
    pub fn model(self, n: usize, gamma: f64) -> Result<NoiseModel> {
        let all: Vec<usize> = (0..n).collect();
        let terms = match self {
            Preset::T1t2 => vec![
                CollapseTerm::amplitude_decay(all, gamma),
                CollapseTerm::dephasing((0..n).collect(), 2.0 * gamma),
            ],
            Preset::PauliX => all
                .into_iter()
                .map(|q| CollapseTerm::pauli(vec![q], "X", gamma))
                .collect(),
            Preset::CorrXx => {
                if n < 3 {
                    return Err(Error::invalid("corr_xx needs a ring of at least 3 qubits"));
                }
                (0..n)
                    .map(|i| CollapseTerm::pauli(vec![i, (i + 1) % n], "XX", gamma))
                    .collect()
            }
            Preset::WeightNm1 => (0..n)
                .map(|j| {
                    let support: Vec<usize> = (0..n).filter(|&q| q != j).collect();
                    let label = "X".repeat(n - 1);
                    CollapseTerm::pauli(support, &label, gamma)
                })
                .collect(),
        };
        NoiseModel::new(n, terms)
    }

    /// The preset with total effective noise rate `lambda`.
    pub fn with_enr(self, n: usize, lambda: f64) -> Result<NoiseModel> {
        self.model(n, lambda / n as f64)
    }
}

/// `γ1 D[σ_i] + γ2 D[σ_i†σ_i] + γ3 D[Z_i Z_{i+1}]` on a ring.
pub fn correlated_dephasing_model(n: usize, g1: f64, g2: f64, g3: f64) -> Result<NoiseModel> {
    let mut terms = vec![
        CollapseTerm::amplitude_decay((0..n).collect(), g1),
        CollapseTerm::dephasing((0..n).collect(), g2),
    ];
    if g3 > 0.0 {
        terms.extend((0..n).map(|i| CollapseTerm::pauli(vec![i, (i + 1) % n], "ZZ", g3)));
    }
    NoiseModel::new(n, terms)
}

/// Process matrix `χ` over the `k`-qubit Pauli basis, `N(ρ) = Σ χ_ab σ_a ρ σ_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    k: usize,
    chi: DMatrix<C64>,
}

const CHI_TOL: f64 = 1e-10;

impl ProcessMatrix {
    /// Checks shape, Hermiticity and unit trace.
    pub fn new(chi: DMatrix<C64>) -> Result<Self> {
        let dim = chi.nrows();
        if chi.ncols() != dim || !dim.is_power_of_two() || dim.trailing_zeros() % 2 != 0 {
            return Err(Error::invalid("process matrix must be 4^k x 4^k"));
        }
        let k = dim.trailing_zeros() as usize / 2;
        if !(1..=3).contains(&k) {
            return Err(Error::unsupported(format!("process matrix on {k} qubits")));
        }
        let herm = (&chi - chi.adjoint()).camax();
        if herm > CHI_TOL {
            return Err(Error::invalid(format!("process matrix not Hermitian ({herm:.2e})")));
        }
        let tr = chi.trace();
        if (tr - 1.0).norm() > CHI_TOL {
            return Err(Error::invalid(format!("process matrix trace {tr} != 1")));
        }
        Ok(Self { k, chi })
    }

    /// Pauli channel with the given probabilities.
    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        let v: Vec<C64> = probs.iter().map(|&p| C64::new(p, 0.0)).collect();
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)))
    }

    /// Channel from Kraus operators on `k` qubits.
    pub fn from_kraus(kraus: &[DMatrix<C64>]) -> Result<Self> {
        let d = kraus.first().map(|m| m.nrows()).unwrap_or(0);
        let basis = pauli_basis(d.trailing_zeros() as usize);
        let dim = basis.len();
        let mut chi = DMatrix::zeros(dim, dim);
        for kmat in kraus {
            let c: Vec<C64> = basis.iter().map(|s| (s * kmat).trace() / d as f64).collect();
            for a in 0..dim {
                for b in 0..dim {
                    chi[(a, b)] += c[a] * c[b].conj();
                }
            }
        }
        Self::new(chi)
    }

    /// Channel from a superoperator acting on row-major `vec(ρ)`.
    pub fn from_superoperator(s: &DMatrix<C64>) -> Result<Self> {
        let d2 = s.nrows();
        let d = (d2 as f64).sqrt().round() as usize;
        let basis = pauli_basis(d.trailing_zeros() as usize);
        // Choi matrix C[(i,k),(j,l)] = N(|i><j|)_{kl}.
        let mut choi = DMatrix::<C64>::zeros(d2, d2);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        choi[(i * d + k, j * d + l)] = s[(k * d + l, i * d + j)];
                    }
                }
            }
        }
        // |σ>> has entries σ_{k i} at position (i, k).
        let v = DMatrix::from_fn(d2, basis.len(), |r, a| basis[a][(r % d, r / d)]);
        let chi = v.adjoint() * choi * v / C64::new((d * d) as f64, 0.0);
        Self::new(chi)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.chi
    }

    /// `Σ_{α≠0} χ_αα`.
    pub fn enr(&self) -> f64 {
        (1..self.chi.nrows()).map(|a| self.chi[(a, a)].re).sum()
    }

    /// The Pauli channel with the same diagonal.
    pub fn diagonalize(&self) -> ProcessMatrix {
        ProcessMatrix {
            k: self.k,
            chi: DMatrix::from_diagonal(&self.chi.diagonal()),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        let dim = self.chi.nrows();
        (0..dim).all(|a| (0..dim).all(|b| a == b || self.chi[(a, b)] == C64::new(0.0, 0.0)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.chi
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `max |Σ_ab χ_ab σ_b σ_a − I|`.
    pub fn trace_preservation_error(&self) -> f64 {
        let basis = pauli_basis(self.k);
        let d = 1usize << self.k;
        let mut acc = DMatrix::<C64>::zeros(d, d);
        for (a, sa) in basis.iter().enumerate() {
            for (b, sb) in basis.iter().enumerate() {
                let c = self.chi[(a, b)];
                if c != C64::new(0.0, 0.0) {
                    acc += sb * sa * c;
                }
            }
        }
        (acc - DMatrix::identity(d, d)).camax()
    }

    /// Checks that `χ` describes a completely positive, trace-preserving map.
    pub fn validate_channel(&self) -> Result<()> {
        let ev = self.min_eigenvalue();
        if ev < -CHI_TOL {
            return Err(Error::invalid(format!(
                "process matrix not positive semidefinite (min eigenvalue {ev:.3e})"
            )));
        }
        let tp = self.trace_preservation_error();
        if tp > 1e-9 {
            return Err(Error::invalid(format!(
                "process matrix not trace preserving ({tp:.3e})"
            )));
        }
        Ok(())
    }
}

/// `χ` of the unit-time channel of `term`, to first order in the rate.
pub fn first_order_process_matrix(term: &CollapseTerm) -> Result<ProcessMatrix> {
    let k = term.support.len();
    if k > 3 {
        return Err(Error::unsupported(format!("process matrix on {k} qubits")));
    }
    let n_max = term.support.iter().copied().max().unwrap_or(0) + 1;
    let ops = term.collapse_ops(n_max)?;
    let basis = pauli_basis(k);
    let dim = basis.len();
    let d = (1usize << k) as f64;
    let coeffs = |m: &DMatrix<C64>| -> Vec<C64> { basis.iter().map(|s| (s * m).trace() / d).collect() };
    let mut chi = DMatrix::<C64>::zeros(dim, dim);
    chi[(0, 0)] = C64::new(1.0, 0.0);
    for op in &ops {
        let j = op.localize(&term.support)?.dense();
        let c = coeffs(&j);
        let dn = coeffs(&(j.adjoint() * &j));
        let g = op.gamma;
        for a in 0..dim {
            for b in 0..dim {
                chi[(a, b)] += c[a] * c[b].conj() * g;
            }
            chi[(a, 0)] -= dn[a] * (0.5 * g);
            chi[(0, a)] -= dn[a].conj() * (0.5 * g);
        }
    }
    ProcessMatrix::new(chi)
}

/// `χ` of the exact channel `exp(t L)` of `term` on its support.
pub fn exact_process_matrix(term: &CollapseTerm, t: f64) -> Result<ProcessMatrix> {
    let k = term.support.len();
    if k > 3 {
        return Err(Error::unsupported(format!("process matrix on {k} qubits")));
    }
    let n_max = term.support.iter().copied().max().unwrap_or(0) + 1;
    let ops = term
        .collapse_ops(n_max)?
        .iter()
        .map(|op| op.localize(&term.support))
        .collect::<Result<Vec<_>>>()?;
    let l = lindblad_superoperator(&ops, k) * C64::new(t, 0.0);
    ProcessMatrix::from_superoperator(&l.exp())
}

/// Zeroes the off-diagonal entries of `χ`.
pub fn diagonalize_channel(chi: &ProcessMatrix) -> ProcessMatrix {
    chi.diagonalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn term_enr_values() {
        let g = 0.08;
        assert_abs_diff_eq!(enr_of_term(&CollapseTerm::amplitude_decay(vec![0], g)), g / 2.0);
        assert_abs_diff_eq!(enr_of_term(&CollapseTerm::dephasing(vec![0], g)), g / 4.0);
        assert_abs_diff_eq!(
            enr_of_term(&CollapseTerm::corr_dephasing(vec![0, 1], g)),
            3.0 * g / 16.0
        );
        assert_abs_diff_eq!(enr_of_term(&CollapseTerm::corr_amplitude(vec![0, 1], g)), g / 4.0);
        assert_abs_diff_eq!(enr_of_term(&CollapseTerm::pauli(vec![0, 2], "XY", g)), g);
    }

    #[test]
    fn preset_rates_sum_to_n_gamma() {
        for p in Preset::ALL {
            let m = p.model(20, 0.0025).unwrap();
            assert_abs_diff_eq!(m.enr(), 0.05, epsilon = 1e-15);
        }
        let zero = Preset::T1t2.model(4, 0.0).unwrap();
        assert_eq!(zero.enr(), 0.0);
    }

    #[test]
    fn dephasing_chi() {
        let g = 0.04;
        let chi = first_order_process_matrix(&CollapseTerm::dephasing(vec![0], g)).unwrap();
        let want = [1.0 - g / 4.0, 0.0, 0.0, g / 4.0];
        for a in 0..4 {
            for b in 0..4 {
                let w = if a == b { want[a] } else { 0.0 };
                assert_abs_diff_eq!(chi.matrix()[(a, b)].re, w, epsilon = 1e-15);
                assert_abs_diff_eq!(chi.matrix()[(a, b)].im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pauli_chi_is_diagonal_with_rate_gamma() {
        let g = 0.03;
        let chi = first_order_process_matrix(&CollapseTerm::pauli(vec![3], "X", g)).unwrap();
        assert!(chi.is_diagonal());
        assert_abs_diff_eq!(chi.matrix()[(0, 0)].re, 1.0 - g);
        assert_abs_diff_eq!(chi.matrix()[(1, 1)].re, g);
        assert_abs_diff_eq!(chi.enr(), g);
    }

    /// Symbolic expansion of D[σ], σ = (X + iY)/2, in the Pauli basis.
    #[test]
    fn amplitude_decay_chi_matches_symbolic_expansion() {
        let g = 0.02;
        let chi = first_order_process_matrix(&CollapseTerm::amplitude_decay(vec![0], g)).unwrap();
        let m = chi.matrix();
        let q = g / 4.0;
        let want = [
            [c(1.0 - g / 2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(q, 0.0)],
            [c(0.0, 0.0), c(q, 0.0), c(0.0, -q), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, q), c(q, 0.0), c(0.0, 0.0)],
            [c(q, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((m[(a, b)] - want[a][b]).norm() < 1e-15, "({a},{b}) = {}", m[(a, b)]);
            }
        }
        assert_abs_diff_eq!(chi.enr(), g / 2.0, epsilon = 1e-15);
    }

    /// First-order χ agrees with the exact unit-time channel up to O(γ²).
    #[test]
    fn first_order_matches_exact_channel_at_small_rate() {
        let g = 1e-3;
        let terms = [
            CollapseTerm::amplitude_decay(vec![0], g),
            CollapseTerm::dephasing(vec![0], g),
            CollapseTerm::corr_dephasing(vec![0, 1], g),
            CollapseTerm::corr_amplitude(vec![0, 1], g),
            CollapseTerm::pauli(vec![0, 1], "XZ", g),
        ];
        for t in terms {
            let first = first_order_process_matrix(&t).unwrap();
            let exact = exact_process_matrix(&t, 1.0).unwrap();
            let diff = (first.matrix() - exact.matrix()).camax();
            assert!(diff < 2.0 * g * g, "{:?}: {diff}", t.kind);
            exact.validate_channel().unwrap();
        }
    }

    #[test]
    fn exact_amplitude_channel_matches_kraus() {
        let g: f64 = 0.3;
        let p = 1.0 - (-g).exp();
        let k0 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p).sqrt(), 0.0)]);
        let k1 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(p.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let kraus = ProcessMatrix::from_kraus(&[k0, k1]).unwrap();
        let exact = exact_process_matrix(&CollapseTerm::amplitude_decay(vec![0], g), 1.0).unwrap();
        assert!((kraus.matrix() - exact.matrix()).camax() < 1e-12);
    }

    #[test]
    fn diagonalization_preserves_enr_and_is_idempotent() {
        let chi = exact_process_matrix(&CollapseTerm::amplitude_decay(vec![0], 0.2), 1.0).unwrap();
        let d = diagonalize_channel(&chi);
        assert!(d.is_diagonal());
        assert_eq!(d.enr(), chi.enr());
        assert_eq!(diagonalize_channel(&d), d);
        let pauli = ProcessMatrix::from_diagonal(&[0.9, 0.05, 0.03, 0.02]).unwrap();
        assert_eq!(diagonalize_channel(&pauli), pauli);
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(ProcessMatrix::from_diagonal(&[0.5, 0.1, 0.1, 0.1]).is_err());
        let bad = ProcessMatrix::from_diagonal(&[1.2, -0.2, 0.0, 0.0]).unwrap();
        assert!(bad.validate_channel().is_err());
        assert!(first_order_process_matrix(&CollapseTerm::pauli(vec![0, 1, 2, 3], "XXXX", 0.1)).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = Preset::CorrXx.model(4, 0.01).unwrap();
        let back = NoiseModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(NoiseModel::from_json(r#"{"n":2,"terms":[{"kind":"dephasing","support":[2],"gamma":0.1}]}"#).is_err());
    }

    #[test]
    fn collapse_op_actions() {
        let lower = CollapseOp::new(2, OpKind::Lower, vec![0, 1], 1.0);
        assert_eq!(lower.apply_basis(0b11), Some((0b00, c(1.0, 0.0))));
        assert_eq!(lower.apply_basis(0b10), None);
        let number = CollapseOp::new(2, OpKind::Number, vec![1], 1.0);
        assert_eq!(number.apply_basis(0b01), Some((0b01, c(1.0, 0.0))));
        assert_eq!(number.jump_norm(), JumpNorm::AllOnes(0b01));
        assert!(number.is_dephasing_like());
        assert!(!lower.is_dephasing_like());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn enr_is_additive(gs in proptest::collection::vec(0.0f64..0.1, 1..8)) {
            let n = gs.len() + 1;
            let terms: Vec<CollapseTerm> = gs.iter().enumerate().map(|(i, &g)| match i % 4 {
                0 => CollapseTerm::amplitude_decay(vec![i], g),
                1 => CollapseTerm::dephasing(vec![i], g),
                2 => CollapseTerm::pauli(vec![i, i + 1], "YZ", g),
                _ => CollapseTerm::corr_dephasing(vec![i, i + 1], g),
            }).collect();
            let m = NoiseModel::new(n, terms.clone()).unwrap();
            let sum: f64 = terms.iter().map(enr_of_term).sum();
            prop_assert_eq!(m.enr(), sum);
        }

        #[test]
        fn first_order_enr_matches_table(g in 0.0f64..0.2, kind in 0usize..5) {
            let t = match kind {
                0 => CollapseTerm::amplitude_decay(vec![0], g),
                1 => CollapseTerm::dephasing(vec![0], g),
                2 => CollapseTerm::pauli(vec![0, 1, 2], "XYZ", g),
                3 => CollapseTerm::corr_amplitude(vec![0, 1], g),
                _ => CollapseTerm::corr_dephasing(vec![0, 1, 2], g),
            };
            let chi = first_order_process_matrix(&t).unwrap();
            prop_assert!((chi.enr() - enr_of_term(&t)).abs() < 1e-14);
            let d = chi.diagonalize();
            prop_assert_eq!(d.enr(), chi.enr());
            prop_assert_eq!(d.diagonalize(), d);
        }
    }
}
