//! Pure-state simulation of ideal circuits.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::circuits::{Circuit, ErrorInjection, Gate, Layer};
use crate::pauli::PauliString;
use crate::{Error, Result, C64};

/// Largest register handled by the statevector kernels.
pub const MAX_STATEVEC_QUBITS: usize = 24;

#[inline]
fn insert_zero(i: usize, pos: usize) -> usize {
    let low = i & ((1usize << pos) - 1);
    ((i - low) << 1) | low
}

/// Applies a row-major 2x2 matrix to qubit `q` of an `nq`-qubit register.
pub(crate) fn apply_1q(amps: &mut [C64], nq: usize, q: usize, m: &[C64]) {
    let pos = nq - 1 - q;
    let bit = 1usize << pos;
    let (m00, m01, m10, m11) = (m[0], m[1], m[2], m[3]);
    for i in 0..amps.len() / 2 {
        let a = insert_zero(i, pos);
        let b = a | bit;
        let (x, y) = (amps[a], amps[b]);
        amps[a] = m00 * x + m01 * y;
        amps[b] = m10 * x + m11 * y;
    }
}

/// Applies a row-major 4x4 matrix to qubits `(q0, q1)`, `q0` most significant.
pub(crate) fn apply_2q(amps: &mut [C64], nq: usize, q0: usize, q1: usize, m: &[C64]) {
    let p0 = nq - 1 - q0;
    let p1 = nq - 1 - q1;
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let b0 = 1usize << p0;
    let b1 = 1usize << p1;
    for i in 0..amps.len() / 4 {
        let base = insert_zero(insert_zero(i, lo), hi);
        let idx = [base, base | b1, base | b0, base | b0 | b1];
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for r in 0..4 {
            let row = &m[4 * r..4 * r + 4];
            amps[idx[r]] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
}

/// Applies a row-major `2^k x 2^k` matrix to `qubits`, first listed most significant.
pub(crate) fn apply_kq(amps: &mut [C64], nq: usize, qubits: &[usize], m: &[C64]) {
    let k = qubits.len();
    let local = 1usize << k;
    let mut positions: Vec<usize> = qubits.iter().map(|&q| nq - 1 - q).collect();
    let offsets: Vec<usize> = (0..local)
        .map(|l| {
            (0..k)
                .filter(|&j| l >> (k - 1 - j) & 1 == 1)
                .fold(0, |acc, j| acc | 1usize << positions[j])
        })
        .collect();
    positions.sort_unstable();
    let mut v = vec![C64::new(0.0, 0.0); local];
    for i in 0..amps.len() >> k {
        let base = positions.iter().fold(i, |b, &p| insert_zero(b, p));
        for (vl, off) in v.iter_mut().zip(&offsets) {
            *vl = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let row = &m[r * local..(r + 1) * local];
            amps[base | off] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
    }
}

/// Applies `gate` (or its entrywise conjugate) to qubits offset by `shift`
/// inside an `nq`-qubit register.
pub(crate) fn apply_gate_raw(amps: &mut [C64], nq: usize, gate: &Gate, shift: usize, conj: bool) {
    let conjugated;
    let m: &[C64] = if conj {
        conjugated = gate.matrix.iter().map(|c| c.conj()).collect::<Vec<_>>();
        &conjugated
    } else {
        &gate.matrix
    };
    match gate.targets.as_slice() {
        [q] => apply_1q(amps, nq, q + shift, m),
        [q0, q1] => apply_2q(amps, nq, q0 + shift, q1 + shift, m),
        _ => unreachable!("gate arity is validated on construction"),
    }
}

/// Applies a Pauli string in place: `|y> -> phase |y ^ x>`.
pub(crate) fn apply_pauli_raw(amps: &mut [C64], p: &PauliString) {
    if p.x_mask() == 0 {
        for (y, a) in amps.iter_mut().enumerate() {
            let (_, ph) = p.apply_to_basis(y);
            *a *= ph;
        }
        return;
    }
    let x = p.x_mask() as usize;
    let top = 1usize << (63 - (x as u64).leading_zeros());
    for y in 0..amps.len() {
        if y & top != 0 {
            continue;
        }
        let (y2, ph1) = p.apply_to_basis(y);
        let (_, ph2) = p.apply_to_basis(y2);
        let (a, b) = (amps[y], amps[y2]);
        amps[y2] = ph1 * a;
        amps[y] = ph2 * b;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n: usize,
    amps: Vec<C64>,
}

impl PureState {
    /// `|0^n>`.
    pub fn zero(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_STATEVEC_QUBITS {
            return Err(Error::invalid(format!(
                "statevector size n = {n} outside [1, {MAX_STATEVEC_QUBITS}]"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(n: usize, amps: Vec<C64>) -> Result<Self> {
        if n == 0 || n > MAX_STATEVEC_QUBITS {
            return Err(Error::invalid(format!("statevector size n = {n}")));
        }
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm2(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm2();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        if gate.targets.iter().any(|&q| q >= self.n) {
            return Err(Error::invalid(format!(
                "gate targets {:?} out of range for n = {}",
                gate.targets, self.n
            )));
        }
        if gate.matrix.len() != gate.dim() * gate.dim() {
            return Err(Error::DimensionMismatch {
                expected: gate.dim() * gate.dim(),
                got: gate.matrix.len(),
            });
        }
        apply_gate_raw(&mut self.amps, self.n, gate, 0, false);
        Ok(())
    }

    pub fn apply_layer(&mut self, layer: &Layer) -> Result<()> {
        layer.gates.iter().try_for_each(|g| self.apply_gate(g))
    }

    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.check_pauli(p)?;
        apply_pauli_raw(&mut self.amps, p);
        Ok(())
    }

    fn check_pauli(&self, p: &PauliString) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.n(),
            });
        }
        Ok(())
    }

    /// `<self|P|self>`.
    pub fn expectation_pauli(&self, p: &PauliString) -> Result<C64> {
        self.check_pauli(p)?;
        let mut s = C64::new(0.0, 0.0);
        for (y, a) in self.amps.iter().enumerate() {
            let (x, ph) = p.apply_to_basis(y);
            s += self.amps[x].conj() * ph * a;
        }
        Ok(s)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|amplitude_x|^2` for every basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn output_probability(&self, x: usize) -> Result<f64> {
        self.amps
            .get(x)
            .map(|a| a.norm_sqr())
            .ok_or_else(|| Error::invalid(format!("bitstring {x} out of range")))
    }

    /// `m` i.i.d. basis-state draws from `|amplitude|^2 / norm2`.
    pub fn sample_bitstrings<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if m == 0 {
            return Ok(Vec::new());
        }
        sample_from_weights(&self.probabilities(), m, rng)
    }
}

/// Draws `m` indices with probabilities proportional to `weights`.
pub fn sample_from_weights<R: Rng + ?Sized>(weights: &[f64], m: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist =
        WeightedIndex::new(weights).map_err(|e| Error::invalid(format!("cannot sample from distribution: {e}")))?;
    Ok((0..m).map(|_| dist.sample(rng)).collect())
}

/// `C|0^n>`.
pub fn run_circuit(circuit: &Circuit) -> Result<PureState> {
    let mut s = PureState::zero(circuit.n)?;
    for layer in &circuit.layers {
        s.apply_layer(layer)?;
    }
    Ok(s)
}

/// `|<0|C_l† P C_l|0>|^2` where `C_l` is the first `l` random layers;
/// `l = 0` evaluates on `|0^n>`.
pub fn prefix_overlap_sq(circuit: &Circuit, l: usize, pauli: &PauliString) -> Result<f64> {
    let state = run_circuit(&circuit.prefix(l))?;
    Ok(state.expectation_pauli(pauli)?.norm_sqr())
}

/// `|<ψ_injected|ψ>|^2`. Layers after the injection cancel, so only the
/// prefix up to the injection layer is simulated.
pub fn pauli_overlap_sq(circuit: &Circuit, injection: &ErrorInjection) -> Result<f64> {
    if injection.pauli.is_identity() {
        return Err(Error::invalid("identity Pauli cannot be injected"));
    }
    if injection.layer == 0 || injection.layer > circuit.random_depth() {
        return Err(Error::invalid(format!(
            "injection layer {} outside [1, {}]",
            injection.layer,
            circuit.random_depth()
        )));
    }
    prefix_overlap_sq(circuit, injection.layer, &injection.pauli)
}

/// Formats a basis index as a bit string, qubit 0 first.
pub fn format_bitstring(x: usize, n: usize) -> String {
    (0..n)
        .map(|q| if (x >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parses a bit string written qubit 0 first.
pub fn parse_bitstring(s: &str) -> Result<usize> {
    s.chars().try_fold(0usize, |acc, c| match c {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        _ => Err(Error::invalid(format!("invalid bit string '{s}'"))),
    })
}

/// Writes a probability table as a little-endian `u64` length followed by
/// little-endian `f64` values.
pub fn write_probabilities<W: Write>(probs: &[f64], mut out: W) -> io::Result<()> {
    out.write_all(&(probs.len() as u64).to_le_bytes())?;
    for p in probs {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{
        inject_pauli, sample_haar_unitary, sample_rqc, sample_rqc_seeded, Boundary, CircuitSeed, GateSet,
    };
    use crate::pauli::Pauli;
    use crate::rng::StreamSeed;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Full `2^n x 2^n` matrix of a gate, built by Kronecker products.
    fn dense_gate(g: &Gate, n: usize) -> DMatrix<C64> {
        let dim = 1 << n;
        let d = g.dim();
        DMatrix::from_fn(dim, dim, |r, c| {
            let bits = |x: usize, q: usize| (x >> (n - 1 - q)) & 1;
            let others_equal = (0..n)
                .filter(|q| !g.targets.contains(q))
                .all(|q| bits(r, q) == bits(c, q));
            if !others_equal {
                return C64::new(0.0, 0.0);
            }
            let local = |x: usize| g.targets.iter().fold(0, |acc, &q| acc * 2 + bits(x, q));
            g.matrix[local(r) * d + local(c)]
        })
    }

    #[test]
    fn x_on_qubit_zero_is_most_significant() {
        let mut s = PureState::zero(3).unwrap();
        s.apply_gate(&Gate::pauli(0, Pauli::X)).unwrap();
        assert_eq!(s.amplitudes()[0b100], C64::new(1.0, 0.0));
        assert_eq!(format_bitstring(0b100, 3), "100");
        assert_eq!(parse_bitstring("100").unwrap(), 4);
    }

    #[test]
    fn identity_and_inverse() {
        let mut r = StreamSeed::new(1, 1).rng();
        let c = sample_rqc(4, 3, GateSet::Haar2q, Boundary::Ring, &mut r).unwrap();
        let s0 = run_circuit(&c).unwrap();
        let mut s = s0.clone();
        let id = Gate::pauli(2, Pauli::I);
        s.apply_gate(&id).unwrap();
        assert_eq!(s, s0);
        let g = Gate::new(vec![1, 3], sample_haar_unitary(4, &mut r).unwrap()).unwrap();
        s.apply_gate(&g).unwrap();
        s.apply_gate(&g.adjoint()).unwrap();
        for (a, b) in s.amplitudes().iter().zip(s0.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_and_single_gate_circuits() {
        let c = Circuit::empty(3, Boundary::Open, GateSet::Haar2q).unwrap();
        let s = run_circuit(&c).unwrap();
        assert_eq!(s.output_probability(0).unwrap(), 1.0);
        let c = sample_rqc(2, 1, GateSet::Haar2q, Boundary::Open, &mut StreamSeed::new(2, 0).rng()).unwrap();
        let s = run_circuit(&c).unwrap();
        let u = &c.layers[0].gates[0].matrix;
        for x in 0..4 {
            assert!((s.amplitudes()[x] - u[4 * x]).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_matrix_products() {
        let mut r = StreamSeed::new(3, 0).rng();
        for n in 2..=6 {
            let c = sample_rqc(n, 4, GateSet::CnotHaar1q, Boundary::Open, &mut r).unwrap();
            let mut v = DVector::from_element(1 << n, C64::new(0.0, 0.0));
            v[0] = C64::new(1.0, 0.0);
            for layer in &c.layers {
                for g in &layer.gates {
                    v = dense_gate(g, n) * v;
                }
            }
            let s = run_circuit(&c).unwrap();
            for (a, b) in s.amplitudes().iter().zip(v.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
            let g = Gate::new(vec![n - 1, 0], sample_haar_unitary(4, &mut r).unwrap()).unwrap();
            let mut s2 = s.clone();
            s2.apply_gate(&g).unwrap();
            let v2 = dense_gate(&g, n) * v;
            for (a, b) in s2.amplitudes().iter().zip(v2.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pauli_application_matches_dense() {
        let mut r = StreamSeed::new(4, 0).rng();
        let c = sample_rqc(4, 3, GateSet::Haar2q, Boundary::Ring, &mut r).unwrap();
        let s = run_circuit(&c).unwrap();
        for label in ["XIYZ", "ZZII", "IYIY", "XXXX"] {
            let p: PauliString = label.parse().unwrap();
            let mut t = s.clone();
            t.apply_pauli(&p).unwrap();
            let v = p.dense() * DVector::from_column_slice(s.amplitudes());
            for (a, b) in t.amplitudes().iter().zip(v.iter()) {
                assert!((a - b).norm() < 1e-14);
            }
            let e = s.expectation_pauli(&p).unwrap();
            let want = DVector::from_column_slice(s.amplitudes()).dotc(&v);
            assert!((e - want).norm() < 1e-14);
        }
    }

    #[test]
    fn sampling_matches_probabilities() {
        let mut r = StreamSeed::new(5, 0).rng();
        let c = sample_rqc(4, 3, GateSet::Haar2q, Boundary::Ring, &mut r).unwrap();
        let s = run_circuit(&c).unwrap();
        let m = 1_000_000;
        let draws = s.sample_bitstrings(m, &mut r).unwrap();
        let mut counts = [0usize; 16];
        draws.iter().for_each(|&x| counts[x] += 1);
        for (x, &k) in counts.iter().enumerate() {
            let p = s.output_probability(x).unwrap();
            let sd = (m as f64 * p * (1.0 - p)).sqrt();
            assert!((k as f64 - m as f64 * p).abs() <= 4.0 * sd + 1.0);
        }
        let z = PureState::zero(3).unwrap();
        assert!(z.sample_bitstrings(50, &mut r).unwrap().iter().all(|&x| x == 0));
        assert!(z.sample_bitstrings(0, &mut r).unwrap().is_empty());
        let a = s.sample_bitstrings(20, &mut StreamSeed::new(9, 9).rng()).unwrap();
        let b = s.sample_bitstrings(20, &mut StreamSeed::new(9, 9).rng()).unwrap();
        assert_eq!(a, b);
    }

    /// Kolmogorov-Smirnov distance between 2^n p(x) and Exp(1).
    #[test]
    fn deep_circuits_are_porter_thomas() {
        let n = 12;
        let c = sample_rqc(n, 30, GateSet::Haar2q, Boundary::Ring, &mut StreamSeed::new(6, 0).rng()).unwrap();
        let mut scaled: Vec<f64> = run_circuit(&c)
            .unwrap()
            .probabilities()
            .iter()
            .map(|p| p * (1 << n) as f64)
            .collect();
        scaled.sort_by(f64::total_cmp);
        let len = scaled.len() as f64;
        let ks = scaled
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = 1.0 - (-v).exp();
                (cdf - i as f64 / len).abs().max((cdf - (i + 1) as f64 / len).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    fn naive_overlap(c: &Circuit, inj: &ErrorInjection) -> f64 {
        let ideal = run_circuit(c).unwrap();
        let noisy = run_circuit(&inject_pauli(c, inj).unwrap()).unwrap();
        noisy.inner(&ideal).unwrap().norm_sqr()
    }

    #[test]
    fn single_error_overlap_at_depth_one_is_one_fifth() {
        let n = 4;
        let trials = 4000;
        let pauli = PauliString::single(n, 0, Pauli::X);
        let inj = ErrorInjection { pauli, layer: 1 };
        let vals: Vec<f64> = (0..trials)
            .map(|i| {
                let c = sample_rqc_seeded(
                    n,
                    1,
                    GateSet::Haar2q,
                    Boundary::Ring,
                    CircuitSeed { master: 7, index: i },
                )
                .unwrap();
                pauli_overlap_sq(&c, &inj).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn deep_overlap_reaches_design_value() {
        let n = 4;
        let trials = 3000;
        let l = 40;
        let pauli = PauliString::single(n, 1, Pauli::Z);
        let vals: Vec<f64> = (0..trials)
            .map(|i| {
                let c = sample_rqc_seeded(
                    n,
                    l,
                    GateSet::Haar2q,
                    Boundary::Ring,
                    CircuitSeed { master: 8, index: i },
                )
                .unwrap();
                prefix_overlap_sq(&c, l, &pauli).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0 / 17.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn z_stabilizes_the_initial_state() {
        let c = Circuit::empty(4, Boundary::Ring, GateSet::Haar2q).unwrap();
        let z = PauliString::single(4, 2, Pauli::Z);
        assert_eq!(prefix_overlap_sq(&c, 0, &z).unwrap(), 1.0);
    }

    #[test]
    fn probability_export_layout() {
        let mut buf = Vec::new();
        write_probabilities(&[0.25, 0.75], &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 16);
        assert_eq!(u64::from_le_bytes(buf[..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.75);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn norm_preserved(n in 2usize..9, d in 1usize..40, s in any::<u64>()) {
            let c = sample_rqc(n, d, GateSet::Haar2q, Boundary::Open, &mut StreamSeed::new(s, 2).rng()).unwrap();
            let st = run_circuit(&c).unwrap();
            prop_assert!((st.norm2() - 1.0).abs() < 1e-10);
            let total: f64 = st.probabilities().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn gate_cancellation_matches_naive(half in 2usize..4, d in 1usize..8, s in any::<u64>(), q in 0usize..6, which in 0usize..3) {
            let n = 2 * half;
            let c = sample_rqc(n, d, GateSet::Haar2q, Boundary::Ring, &mut StreamSeed::new(s, 3).rng()).unwrap();
            let p = [Pauli::X, Pauli::Y, Pauli::Z][which];
            let inj = ErrorInjection { pauli: PauliString::single(n, q % n, p), layer: 1 + s as usize % d };
            let fast = pauli_overlap_sq(&c, &inj).unwrap();
            prop_assert!((fast - naive_overlap(&c, &inj)).abs() < 1e-12);
        }
    }
}
