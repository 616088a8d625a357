//! Random brickwork circuits on a 1D ring or open chain.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::pauli::{Pauli, PauliString};
use crate::rng::{domain, StreamSeed};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Ring,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSet {
    /// Haar-random two-qubit gates.
    Haar2q,
    /// Haar-random single-qubit gates on every qubit followed by CNOTs.
    CnotHaar1q,
}

/// A one- or two-qubit unitary with its target qubits.
///
/// For two-qubit gates the first target is the more significant bit of the
/// local 4-dimensional index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub targets: Vec<usize>,
    #[serde(with = "complex_rows")]
    pub matrix: Vec<C64>,
}

const UNITARITY_TOL: f64 = 1e-12;

impl Gate {
    /// Builds a gate, checking the matrix shape and unitarity.
    pub fn new(targets: Vec<usize>, matrix: Vec<C64>) -> Result<Self> {
        let dim = match targets.len() {
            1 => 2,
            2 => 4,
            k => return Err(Error::unsupported(format!("{k}-qubit gate"))),
        };
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::invalid("two-qubit gate targets must be distinct"));
        }
        let gate = Self { targets, matrix };
        let err = gate.unitarity_error();
        if err > UNITARITY_TOL {
            return Err(Error::invalid(format!("gate matrix is not unitary (error {err:.3e})")));
        }
        Ok(gate)
    }

    pub fn dim(&self) -> usize {
        1 << self.targets.len()
    }

    /// `max |U†U - I|` over entries.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        let u = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..d {
                    s += u[k * d + i].conj() * u[k * d + j];
                }
                if i == j {
                    s -= 1.0;
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// The inverse gate.
    pub fn adjoint(&self) -> Gate {
        let d = self.dim();
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                m[j * d + i] = self.matrix[i * d + j].conj();
            }
        }
        Gate {
            targets: self.targets.clone(),
            matrix: m,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        #[rustfmt::skip]
        let m = vec![
            l, o, o, o,
            o, l, o, o,
            o, o, o, l,
            o, o, l, o,
        ];
        Gate {
            targets: vec![control, target],
            matrix: m,
        }
    }

    pub fn pauli(qubit: usize, p: Pauli) -> Gate {
        Gate {
            targets: vec![qubit],
            matrix: p.matrix().to_vec(),
        }
    }

    /// Dense matrix in local-index order.
    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.matrix[r * d + c])
    }
}

/// Samples a Haar-random unitary of dimension 2 or 4, returned row-major.
///
/// Uses a complex Ginibre matrix and its QR factorization, with the phases of
/// the diagonal of `R` moved into `Q`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<C64>> {
    if dim != 2 && dim != 4 {
        return Err(Error::unsupported(format!("Haar unitary of dimension {dim}")));
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for _ in 0..dim * dim {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        entries.push(C64::new(re, im) * FRAC_1_SQRT_2);
    }
    let ginibre = DMatrix::from_row_slice(dim, dim, &entries);
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(q[(i, j)]);
        }
    }
    Ok(out)
}

/// Qubit pairs acted on by two-qubit gates in layer `t` (1-based).
///
/// Odd layers pair `(i, i+1)` for even `i`, even layers for odd `i`; on a ring
/// the wraparound pair `(n-1, 0)` closes even layers.
pub fn layer_pairs(n: usize, boundary: Boundary, t: usize) -> Vec<(usize, usize)> {
    let start = if t % 2 == 1 { 0 } else { 1 };
    let mut pairs: Vec<(usize, usize)> = (start..n.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Ring && start == 1 && n >= 2 && n % 2 == 0 {
        pairs.push((n - 1, 0));
    }
    pairs
}

/// Provenance of a sampled circuit: master seed and circuit index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSeed {
    pub master: u64,
    pub index: u64,
}

impl CircuitSeed {
    pub fn stream(&self) -> StreamSeed {
        StreamSeed::derive(self.master, domain::CIRCUIT, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub gates: Vec<Gate>,
    /// Set for Pauli layers inserted by [`inject_pauli`].
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub injected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub depth: usize,
    pub boundary: Boundary,
    pub gate_set: GateSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<CircuitSeed>,
    pub layers: Vec<Layer>,
}

fn check_shape(n: usize, boundary: Boundary) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 qubits, got {n}")));
    }
    if boundary == Boundary::Ring && n % 2 == 1 {
        return Err(Error::invalid(format!("ring boundary requires even n, got {n}")));
    }
    if n > crate::pauli::MAX_QUBITS {
        return Err(Error::invalid(format!("n = {n} too large")));
    }
    Ok(())
}

/// Samples one layer (depth unit `t`) of a random circuit.
pub fn sample_layer<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    gate_set: GateSet,
    boundary: Boundary,
    rng: &mut R,
) -> Result<Layer> {
    let pairs = layer_pairs(n, boundary, t);
    let mut gates = Vec::new();
    match gate_set {
        GateSet::Haar2q => {
            for (a, b) in pairs {
                gates.push(Gate {
                    targets: vec![a, b],
                    matrix: sample_haar_unitary(4, rng)?,
                });
            }
        }
        GateSet::CnotHaar1q => {
            for q in 0..n {
                gates.push(Gate {
                    targets: vec![q],
                    matrix: sample_haar_unitary(2, rng)?,
                });
            }
            for (a, b) in pairs {
                gates.push(Gate::cnot(a.min(b), a.max(b)));
            }
        }
    }
    Ok(Layer { gates, injected: false })
}

/// Samples a circuit from RQC(n, d).
///
/// Layers are drawn in order from `rng`, so the depth-`d'` prefix of a deeper
/// circuit drawn from the same stream equals the depth-`d'` circuit.
pub fn sample_rqc<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    gate_set: GateSet,
    boundary: Boundary,
    rng: &mut R,
) -> Result<Circuit> {
    check_shape(n, boundary)?;
    if d == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let layers = (1..=d)
        .map(|t| sample_layer(n, t, gate_set, boundary, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Circuit {
        n,
        depth: d,
        boundary,
        gate_set,
        seed: None,
        layers,
    })
}

/// Samples the circuit identified by `seed`.
pub fn sample_rqc_seeded(
    n: usize,
    d: usize,
    gate_set: GateSet,
    boundary: Boundary,
    seed: CircuitSeed,
) -> Result<Circuit> {
    let mut rng = seed.stream().rng();
    let mut c = sample_rqc(n, d, gate_set, boundary, &mut rng)?;
    c.seed = Some(seed);
    Ok(c)
}

impl Circuit {
    /// An empty circuit on `n` qubits.
    pub fn empty(n: usize, boundary: Boundary, gate_set: GateSet) -> Result<Self> {
        check_shape(n, boundary)?;
        Ok(Self {
            n,
            depth: 0,
            boundary,
            gate_set,
            seed: None,
            layers: Vec::new(),
        })
    }

    /// Number of random (non-injected) layers.
    pub fn random_depth(&self) -> usize {
        self.layers.iter().filter(|l| !l.injected).count()
    }

    /// The first `d` random layers together with any injections among them.
    pub fn prefix(&self, d: usize) -> Circuit {
        let mut seen = 0;
        let mut layers = Vec::new();
        for layer in &self.layers {
            if !layer.injected {
                if seen == d {
                    break;
                }
                seen += 1;
            }
            layers.push(layer.clone());
        }
        Circuit {
            depth: seen,
            layers,
            ..self.clone()
        }
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        check_shape(self.n, self.boundary)?;
        if self.depth != self.random_depth() {
            return Err(Error::invalid(format!(
                "declared depth {} but circuit has {} random layers",
                self.depth,
                self.random_depth()
            )));
        }
        let mut t = 0;
        for layer in &self.layers {
            let mut used = vec![false; self.n];
            for g in &layer.gates {
                if g.targets.is_empty() || g.targets.len() > 2 {
                    return Err(Error::unsupported(format!("{}-qubit gate", g.targets.len())));
                }
                if g.targets.iter().any(|&q| q >= self.n) {
                    return Err(Error::invalid("gate target out of range"));
                }
                if g.matrix.len() != g.dim() * g.dim() {
                    return Err(Error::invalid("gate matrix has wrong size"));
                }
                if g.unitarity_error() > UNITARITY_TOL {
                    return Err(Error::invalid("non-unitary gate"));
                }
                if g.targets.len() == 2 {
                    for &q in &g.targets {
                        if used[q] {
                            return Err(Error::invalid(format!(
                                "qubit {q} acted on by two 2-qubit gates in one layer"
                            )));
                        }
                        used[q] = true;
                    }
                }
            }
            if layer.injected {
                continue;
            }
            t += 1;
            let mut pairs: Vec<(usize, usize)> = layer
                .gates
                .iter()
                .filter(|g| g.targets.len() == 2)
                .map(|g| (g.targets[0].min(g.targets[1]), g.targets[0].max(g.targets[1])))
                .collect();
            pairs.sort_unstable();
            let mut want: Vec<(usize, usize)> = layer_pairs(self.n, self.boundary, t)
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            want.sort_unstable();
            if pairs != want {
                return Err(Error::invalid(format!(
                    "layer {t} does not follow the brickwork pattern"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Circuit = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Removes every injected layer.
    pub fn without_injections(&self) -> Circuit {
        Circuit {
            layers: self.layers.iter().filter(|l| !l.injected).cloned().collect(),
            ..self.clone()
        }
    }

    /// Number of two-qubit gates.
    pub fn two_qubit_gate_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !l.injected)
            .flat_map(|l| &l.gates)
            .filter(|g| g.targets.len() == 2)
            .count()
    }
}

/// A Pauli error inserted after the gates of random layer `layer` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInjection {
    pub pauli: PauliString,
    pub layer: usize,
}

/// Returns `circuit` with the injection's Pauli inserted as an extra layer.
pub fn inject_pauli(circuit: &Circuit, injection: &ErrorInjection) -> Result<Circuit> {
    if injection.pauli.n() != circuit.n {
        return Err(Error::DimensionMismatch {
            expected: circuit.n,
            got: injection.pauli.n(),
        });
    }
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
    let mut seen = 0;
    let mut at = circuit.layers.len();
    for (i, layer) in circuit.layers.iter().enumerate() {
        if !layer.injected {
            if seen == injection.layer {
                at = i;
                break;
            }
            seen += 1;
        }
    }
    let gates = injection
        .pauli
        .support()
        .into_iter()
        .map(|q| Gate::pauli(q, injection.pauli.get(q)))
        .collect();
    let mut out = circuit.clone();
    out.layers.insert(at, Layer { gates, injected: true });
    Ok(out)
}

mod complex_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::C64;

    pub fn serialize<S: Serializer>(m: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = m.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;
    use proptest::prelude::*;

    fn rng(i: u64) -> crate::rng::StreamRng {
        StreamSeed::new(11, i).rng()
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut r = rng(0);
        for (dim, k) in [(2, 1), (4, 2)] {
            for _ in 0..100 {
                let g = Gate {
                    targets: (0..k).collect(),
                    matrix: sample_haar_unitary(dim, &mut r).unwrap(),
                };
                assert!(g.unitarity_error() <= 1e-12);
            }
        }
        assert!(sample_haar_unitary(3, &mut r).is_err());
    }

    /// E|U_00|^2 = 1/4 and E|<00|U†(X⊗I)U|00>|^2 = 1/5 over Haar U(4).
    #[test]
    fn haar_second_moments() {
        let mut r = rng(1);
        let draws = 100_000;
        let x_i = PauliString::single(2, 0, Pauli::X).dense();
        let (mut s1, mut s1sq, mut s2, mut s2sq) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let u = DMatrix::from_row_slice(4, 4, &sample_haar_unitary(4, &mut r).unwrap());
            let a = u[(0, 0)].norm_sqr();
            s1 += a;
            s1sq += a * a;
            let col = u.column(0).into_owned();
            let v = &x_i * &col;
            let b = col.dotc(&v).norm_sqr();
            s2 += b;
            s2sq += b * b;
        }
        let n = draws as f64;
        let check = |s: f64, sq: f64, want: f64| {
            let mean = s / n;
            let sd = (sq / n - mean * mean).sqrt();
            assert!((mean - want).abs() < 3.0 * sd / n.sqrt(), "mean {mean} want {want}");
        };
        check(s1, s1sq, 0.25);
        check(s2, s2sq, 0.2);
    }

    /// E[U_a conj(U_b)] over flattened entries is δ_ab / 4.
    #[test]
    fn haar_tensor_moment() {
        let mut r = rng(2);
        let draws = 100_000;
        let mut sum = vec![C64::new(0.0, 0.0); 256];
        let mut sq = vec![0.0; 256];
        for _ in 0..draws {
            let u = sample_haar_unitary(4, &mut r).unwrap();
            for a in 0..16 {
                for b in 0..16 {
                    let v = u[a] * u[b].conj();
                    sum[a * 16 + b] += v;
                    sq[a * 16 + b] += v.norm_sqr();
                }
            }
        }
        let n = draws as f64;
        for a in 0..16 {
            for b in 0..16 {
                let mean = sum[a * 16 + b] / n;
                let want = if a == b { 0.25 } else { 0.0 };
                let var = sq[a * 16 + b] / n - mean.norm_sqr();
                let se = (var / n).sqrt().max(1e-12);
                assert!((mean - want).norm() < 4.0 * se, "entry ({a},{b}) mean {mean}");
            }
        }
    }

    fn targets(c: &Circuit) -> Vec<Vec<Vec<usize>>> {
        c.layers
            .iter()
            .map(|l| l.gates.iter().map(|g| g.targets.clone()).collect())
            .collect()
    }

    #[test]
    fn open_chain_pattern() {
        let c = sample_rqc(5, 4, GateSet::Haar2q, Boundary::Open, &mut rng(3)).unwrap();
        let odd = vec![vec![0, 1], vec![2, 3]];
        let even = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(targets(&c), vec![odd.clone(), even.clone(), odd, even]);
    }

    #[test]
    fn ring_pattern() {
        let c = sample_rqc(4, 2, GateSet::Haar2q, Boundary::Ring, &mut rng(4)).unwrap();
        let t = targets(&c);
        assert_eq!(t[0], vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(t[1], vec![vec![1, 2], vec![3, 0]]);
        let one = sample_rqc(4, 1, GateSet::Haar2q, Boundary::Ring, &mut rng(4)).unwrap();
        assert_eq!(targets(&one), vec![vec![vec![0, 1], vec![2, 3]]]);
        assert!(sample_rqc(5, 1, GateSet::Haar2q, Boundary::Ring, &mut rng(4)).is_err());
    }

    #[test]
    fn cnot_layers() {
        let c = sample_rqc(4, 2, GateSet::CnotHaar1q, Boundary::Ring, &mut rng(5)).unwrap();
        c.validate().unwrap();
        let l2 = &c.layers[1];
        assert_eq!(l2.gates.len(), 4 + 2);
        assert!(l2.gates[..4].iter().all(|g| g.targets.len() == 1));
        assert_eq!(l2.gates[5].targets, vec![0, 3]);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let seed = CircuitSeed { master: 5, index: 9 };
        let a = sample_rqc_seeded(6, 5, GateSet::Haar2q, Boundary::Ring, seed).unwrap();
        let b = sample_rqc_seeded(6, 5, GateSet::Haar2q, Boundary::Ring, seed).unwrap();
        assert_eq!(a, b);
        let deep = sample_rqc_seeded(6, 9, GateSet::Haar2q, Boundary::Ring, seed).unwrap();
        assert_eq!(deep.prefix(5), a);
    }

    #[test]
    fn injection_roundtrip() {
        let seed = CircuitSeed { master: 1, index: 2 };
        let c = sample_rqc_seeded(4, 3, GateSet::Haar2q, Boundary::Ring, seed).unwrap();
        let inj = ErrorInjection {
            pauli: "IXIZ".parse().unwrap(),
            layer: 2,
        };
        let injected = inject_pauli(&c, &inj).unwrap();
        assert_eq!(injected.layers.len(), 4);
        assert!(injected.layers[2].injected);
        assert_eq!(injected.random_depth(), 3);
        injected.validate().unwrap();
        let back = injected.without_injections();
        assert_eq!(
            serde_json::to_string(&back).unwrap(),
            serde_json::to_string(&c).unwrap()
        );

        let identity = ErrorInjection {
            pauli: "IIII".parse().unwrap(),
            layer: 1,
        };
        assert!(inject_pauli(&c, &identity).is_err());
        let late = ErrorInjection {
            pauli: "XIII".parse().unwrap(),
            layer: 4,
        };
        assert!(inject_pauli(&c, &late).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let seed = CircuitSeed { master: 3, index: 0 };
        let c = sample_rqc_seeded(4, 3, GateSet::CnotHaar1q, Boundary::Ring, seed).unwrap();
        let back = Circuit::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn every_qubit_in_exactly_one_gate_on_a_ring(half in 1usize..8, d in 1usize..7, s in any::<u64>()) {
            let n = 2 * half;
            let c = sample_rqc(n, d, GateSet::Haar2q, Boundary::Ring, &mut StreamSeed::new(s, 0).rng()).unwrap();
            c.validate().unwrap();
            for layer in &c.layers {
                let mut count = vec![0; n];
                for g in &layer.gates {
                    for &q in &g.targets { count[q] += 1; }
                }
                prop_assert!(count.iter().all(|&k| k == 1));
            }
        }

        #[test]
        fn at_most_one_gate_per_qubit_on_a_chain(n in 2usize..12, d in 1usize..7, s in any::<u64>()) {
            let c = sample_rqc(n, d, GateSet::Haar2q, Boundary::Open, &mut StreamSeed::new(s, 1).rng()).unwrap();
            c.validate().unwrap();
            for layer in &c.layers {
                let mut count = vec![0; n];
                for g in &layer.gates {
                    for &q in &g.targets { count[q] += 1; }
                }
                prop_assert!(count.iter().all(|&k| k <= 1));
            }
        }
    }
}
