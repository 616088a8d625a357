//! Transfer-matrix evaluation of the second-moment spin model of brickwork
//! Haar circuits on a ring.
//!
//! Each two-qubit gate carries a spin: `⊖` (identity permutation) or `⊕`
//! (swap). Row `t` holds the `n/2` gates of layer `t`; gate `j` of an odd layer
//! acts on `(2j, 2j+1)` and of an even layer on `(2j+1, 2j+2 mod n)`. Spin
//! configurations of a row are bit masks with bit `j` set for `⊕`.

use crate::pauli::PauliString;
use crate::{Error, Result};

const STEP: f64 = 0.4;
/// Largest ring handled, `2^{n/2}` row states.
pub const MAX_SPIN_QUBITS: usize = 28;
/// Largest number of top-row gates an observable may touch.
pub const MAX_BOUNDARY_GATES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    /// Identity permutation.
    Minus,
    /// Swap permutation.
    Plus,
}

/// Three-body weight after summing out the output-side permutation of the lower gate.
pub fn triangle_weight(top_left: Spin, top_right: Spin, bottom: Spin) -> f64 {
    if top_left == top_right {
        if bottom == top_left {
            1.0
        } else {
            0.0
        }
    } else {
        STEP
    }
}

/// Spins of the top row, one per gate of layer `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryCondition {
    pub top: Vec<Spin>,
}

impl BoundaryCondition {
    pub fn all_minus(n: usize) -> Self {
        Self {
            top: vec![Spin::Minus; n / 2],
        }
    }

    /// `⊕` on the listed gates, `⊖` elsewhere.
    pub fn plus_at(n: usize, gates: &[usize]) -> Self {
        let mut b = Self::all_minus(n);
        for &g in gates {
            b.top[g] = Spin::Plus;
        }
        b
    }

    fn mask(&self) -> usize {
        self.top
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Spin::Plus)
            .fold(0, |m, (j, _)| m | 1 << j)
    }
}

fn check_ring(n: usize) -> Result<usize> {
    if n % 2 == 1 || n < 4 {
        return Err(Error::invalid(format!(
            "spin model needs an even ring with n >= 4, got {n}"
        )));
    }
    if n > MAX_SPIN_QUBITS {
        return Err(Error::unsupported(format!(
            "spin model with n = {n} > {MAX_SPIN_QUBITS}"
        )));
    }
    Ok(n / 2)
}

/// Row weights `v_l(b) = Z(n, l; b)` for every top boundary `b`, for
/// `l = 1, 2, ...`. The bottom boundary is free.
#[derive(Clone, Debug)]
pub struct TransferState {
    m: usize,
    l: usize,
    weights: Vec<f64>,
}

impl TransferState {
    pub fn new(n: usize) -> Result<Self> {
        let m = check_ring(n)?;
        Ok(Self {
            m,
            l: 1,
            weights: vec![1.0; 1 << m],
        })
    }

    /// Current depth `l`.
    pub fn depth(&self) -> usize {
        self.l
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn partition_function(&self, boundary: &BoundaryCondition) -> Result<f64> {
        if boundary.top.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: boundary.top.len(),
            });
        }
        Ok(self.weights[boundary.mask()])
    }

    /// Adds one row on top: `v_{l+1}(u) = Σ_c W(u → c) v_l(c)`.
    pub fn advance(&mut self) {
        let m = self.m;
        let upper = self.l + 1;
        let full = (1usize << m) - 1;
        // Lower gate j sits under upper gates (j-1, j) for even upper layers
        // and (j, j+1) for odd ones.
        let rotate_right = |u: usize| ((u << 1) | (u >> (m - 1))) & full;
        let rotate_left = |u: usize| ((u >> 1) | (u << (m - 1))) & full;
        let mut next = vec![0.0; 1 << m];
        for (u, slot) in next.iter_mut().enumerate() {
            let partner = if upper % 2 == 0 {
                rotate_right(u)
            } else {
                rotate_left(u)
            };
            let free = u ^ partner;
            let base = u & partner;
            let scale = STEP.powi(free.count_ones() as i32);
            let mut sum = 0.0;
            let mut s = free;
            loop {
                sum += self.weights[base | s];
                if s == 0 {
                    break;
                }
                s = (s - 1) & free;
            }
            *slot = scale * sum;
        }
        self.weights = next;
        self.l = upper;
    }
}

/// `Z(n, l; b)`.
pub fn partition_function(n: usize, l: usize, boundary: &BoundaryCondition) -> Result<f64> {
    if l == 0 {
        return Err(Error::invalid("depth l must be >= 1"));
    }
    let mut t = TransferState::new(n)?;
    while t.depth() < l {
        t.advance();
    }
    t.partition_function(boundary)
}

/// Gates of layer `l` that touch `support`.
pub fn touched_gates(n: usize, l: usize, support: &[usize]) -> Vec<usize> {
    let mut gates: Vec<usize> = support
        .iter()
        .map(|&q| if l % 2 == 1 { q / 2 } else { ((q + n - 1) % n) / 2 })
        .collect();
    gates.sort_unstable();
    gates.dedup();
    gates
}

fn overlap_from_row(state: &TransferState, gates: &[usize]) -> f64 {
    let k = gates.len();
    let mut total = 0.0;
    for s in 0..1usize << k {
        let mask = (0..k).filter(|i| s >> i & 1 == 1).fold(0, |m, i| m | 1 << gates[i]);
        let plus = s.count_ones() as i32;
        let coeff = (4.0 / 15.0f64).powi(plus) * (-1.0 / 15.0f64).powi(k as i32 - plus);
        total += coeff * state.weights[mask];
    }
    total
}

fn boundary_gates(n: usize, pauli: &PauliString, l: usize) -> Result<Vec<usize>> {
    if pauli.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pauli.n(),
        });
    }
    if pauli.is_identity() {
        return Err(Error::invalid("identity Pauli has no error boundary"));
    }
    let gates = touched_gates(n, l, &pauli.support());
    if gates.len() > MAX_BOUNDARY_GATES {
        return Err(Error::unsupported(format!(
            "Pauli touching {} top gates (limit {MAX_BOUNDARY_GATES})",
            gates.len()
        )));
    }
    Ok(gates)
}

/// `E_C |<0^n|C† σ C|0^n>|^2` over depth-`l` brickwork Haar circuits on a ring.
pub fn expected_overlap_sq(n: usize, l: usize, pauli: &PauliString) -> Result<f64> {
    Ok(*overlap_profile(n, l, pauli)?.last().expect("l >= 1"))
}

/// [`expected_overlap_sq`] for `l = 1..=l_max`, in one pass.
pub fn overlap_profile(n: usize, l_max: usize, pauli: &PauliString) -> Result<Vec<f64>> {
    if l_max == 0 {
        return Err(Error::invalid("depth l must be >= 1"));
    }
    let mut t = TransferState::new(n)?;
    let mut out = Vec::with_capacity(l_max);
    for l in 1..=l_max {
        if l > 1 {
            t.advance();
        }
        out.push(overlap_from_row(&t, &boundary_gates(n, pauli, l)?));
    }
    Ok(out)
}

/// `1 / (2^n + 1)`, the two-design value of the overlap.
pub fn haar_limit(n: usize) -> f64 {
    1.0 / (2f64.powi(n as i32) + 1.0)
}

/// `(4/5)^{2(l-1)}`.
pub fn domain_wall_bound(l: usize) -> f64 {
    0.8f64.powi(2 * (l as i32 - 1))
}

/// `(F0, E F1)` for i.i.d. single-qubit Pauli-X noise of probability `ε` per
/// qubit and layer: `F0 = (1-ε)^{nd}`, `E F1 = nε(1-ε)^{nd-1} Σ_l E|<ψ_l|ψ>|^2`.
pub fn first_order_fidelity(n: usize, d: usize, eps: f64) -> Result<(f64, f64)> {
    let table = first_order_table(n, d, eps)?;
    Ok(table.last().map(|r| (r.f0, r.ef1)).unwrap_or((1.0, 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderRow {
    pub depth: usize,
    pub f0: f64,
    pub ef1: f64,
}

/// [`first_order_fidelity`] for every depth `1..=d_max`.
pub fn first_order_table(n: usize, d_max: usize, eps: f64) -> Result<Vec<FirstOrderRow>> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid(format!("error probability {eps} outside [0, 1)")));
    }
    if d_max == 0 {
        return Ok(Vec::new());
    }
    let mut x = PauliString::identity(n);
    x.set(0, crate::pauli::Pauli::X);
    let profile = overlap_profile(n, d_max, &x)?;
    let mut acc = 0.0;
    Ok(profile
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let d = i + 1;
            acc += e;
            let nd = (n * d) as i32;
            FirstOrderRow {
                depth: d,
                f0: (1.0 - eps).powi(nd),
                ef1: n as f64 * eps * (1.0 - eps).powi(nd - 1) * acc,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{sample_rqc_seeded, Boundary, CircuitSeed, GateSet};
    use crate::statevec::prefix_overlap_sq;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use Spin::{Minus as M, Plus as P};

    fn single(n: usize, q: usize, label: &str) -> PauliString {
        PauliString::on_support(n, &[q], label).unwrap()
    }

    #[test]
    fn weight_table() {
        assert_eq!(triangle_weight(M, M, M), 1.0);
        assert_eq!(triangle_weight(M, M, P), 0.0);
        assert_eq!(triangle_weight(P, P, P), 1.0);
        assert_eq!(triangle_weight(P, M, P), 0.4);
        assert_eq!(triangle_weight(P, M, M), 0.4);
        assert_eq!(triangle_weight(M, P, M), 0.4);
    }

    #[test]
    fn all_minus_top_gives_one() {
        for n in [4, 6, 10] {
            for l in [1, 2, 7, 30] {
                let z = partition_function(n, l, &BoundaryCondition::all_minus(n)).unwrap();
                assert_abs_diff_eq!(z, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_layer_anchor() {
        for n in [4, 6, 8, 12] {
            for q in 0..n {
                for label in ["X", "Y", "Z"] {
                    let v = expected_overlap_sq(n, 1, &single(n, q, label)).unwrap();
                    assert!((v - 0.2).abs() <= 1e-12);
                }
            }
            let z = partition_function(n, 1, &BoundaryCondition::plus_at(n, &[1])).unwrap();
            assert!((4.0 / 15.0 * z - 1.0 / 15.0 - 0.2).abs() <= 1e-15);
        }
    }

    #[test]
    fn recursion_identity() {
        for n in (4..=12).step_by(2) {
            for l in 2..=20 {
                let lhs = partition_function(n, l, &BoundaryCondition::plus_at(n, &[1])).unwrap();
                let pair = partition_function(n, l - 1, &BoundaryCondition::plus_at(n, &[0, 1])).unwrap();
                let one = partition_function(n, l - 1, &BoundaryCondition::plus_at(n, &[0])).unwrap();
                let rhs = 4.0 / 25.0 * pair + 8.0 / 25.0 * one + 4.0 / 25.0;
                assert!((lhs - rhs).abs() <= 1e-12, "n={n} l={l}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn haar_limit_for_local_paulis() {
        let n = 8;
        for label_support in [
            (vec![3], "X"),
            (vec![2, 3], "XZ"),
            (vec![3, 4], "YY"),
            (vec![1, 2, 3], "XYZ"),
        ] {
            let p = PauliString::on_support(n, &label_support.0, label_support.1).unwrap();
            let v = expected_overlap_sq(n, 60, &p).unwrap();
            assert!((v - haar_limit(n)).abs() < 1e-9, "{p}: {v}");
        }
    }

    #[test]
    fn three_local_closed_form() {
        let n = 8;
        for l in 1..10 {
            let p = PauliString::on_support(n, &[1, 2, 3], "XIZ").unwrap();
            let gates = touched_gates(n, l, &p.support());
            assert_eq!(gates.len(), 2);
            let both = partition_function(n, l, &BoundaryCondition::plus_at(n, &gates)).unwrap();
            let one = partition_function(n, l, &BoundaryCondition::plus_at(n, &gates[..1])).unwrap();
            let want = 16.0 / 225.0 * both - 8.0 / 225.0 * one + 1.0 / 225.0;
            assert_abs_diff_eq!(expected_overlap_sq(n, l, &p).unwrap(), want, epsilon = 1e-14);
        }
    }

    #[test]
    fn matches_haar_monte_carlo() {
        let (n, l, count) = (6, 3, 5000);
        let p = single(n, 2, "X");
        let vals: Vec<f64> = (0..count)
            .map(|i| {
                let c = sample_rqc_seeded(
                    n,
                    l,
                    GateSet::Haar2q,
                    Boundary::Ring,
                    CircuitSeed { master: 404, index: i },
                )
                .unwrap();
                prefix_overlap_sq(&c, l, &p).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        let se = (var / count as f64).sqrt();
        let exact = expected_overlap_sq(n, l, &p).unwrap();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} ± {se} vs {exact}");
    }

    #[test]
    fn domain_wall_bound_values() {
        assert_eq!(domain_wall_bound(1), 1.0);
        assert_abs_diff_eq!(domain_wall_bound(11), 0.8f64.powi(20), epsilon = 1e-15);
        assert_abs_diff_eq!(domain_wall_bound(11), 0.011529215, epsilon = 1e-9);
        let n = 8;
        let b = BoundaryCondition::plus_at(n, &[0]);
        let z_inf = partition_function(n, 200, &b).unwrap();
        let z_190 = partition_function(n, 190, &b).unwrap();
        assert!((z_inf - z_190).abs() < 1e-12);
        for l in 1..=30 {
            let z = partition_function(n, l, &b).unwrap();
            assert!(z - z_inf <= domain_wall_bound(l) + 1e-15, "l={l}");
        }
    }

    #[test]
    fn decay_bound_holds() {
        for n in [4, 6, 8, 10] {
            let prof = overlap_profile(n, 30, &single(n, 0, "X")).unwrap();
            for (i, v) in prof.iter().enumerate() {
                let l = i + 1;
                assert!(*v <= 4.0 / 15.0 * domain_wall_bound(l) + haar_limit(n) + 1e-15);
            }
        }
    }

    #[test]
    fn single_plus_partition_function_is_monotone() {
        let n = 10;
        let mut t = TransferState::new(n).unwrap();
        let b = BoundaryCondition::plus_at(n, &[2]);
        let mut last = t.partition_function(&b).unwrap();
        for _ in 0..40 {
            t.advance();
            let z = t.partition_function(&b).unwrap();
            assert!(z <= last + 1e-15);
            last = z;
        }
    }

    #[test]
    fn first_order_values() {
        assert_eq!(first_order_fidelity(6, 5, 0.0).unwrap(), (1.0, 0.0));
        let (n, eps) = (8, 0.01);
        let (f0, ef1) = first_order_fidelity(n, 1, eps).unwrap();
        assert_abs_diff_eq!(f0, (1.0 - eps).powi(8), epsilon = 1e-15);
        assert_abs_diff_eq!(ef1, n as f64 * eps * (1.0 - eps).powi(7) * 0.2, epsilon = 1e-14);
    }

    #[test]
    fn first_order_ratio_converges() {
        let table = first_order_table(20, 40, 0.001).unwrap();
        let ratio = |d: usize| table[d - 1].ef1 / table[d - 1].f0;
        assert!((ratio(40) / ratio(30) - 1.0).abs() < 0.05);
    }

    #[test]
    fn invalid_shapes() {
        assert!(TransferState::new(7).is_err());
        assert!(TransferState::new(30).is_err());
        assert!(expected_overlap_sq(8, 1, &PauliString::identity(8)).is_err());
        assert!(expected_overlap_sq(8, 0, &single(8, 0, "X")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn row_weights_are_nonnegative(half in 2usize..7, l in 1usize..25) {
            let mut t = TransferState::new(2 * half).unwrap();
            while t.depth() < l {
                t.advance();
            }
            prop_assert!(t.weights().iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn overlap_depends_only_on_pauli_shape(q in 0usize..8, l in 1usize..12) {
            // Translation by two qubits maps the brickwork onto itself.
            let n = 8;
            let a = expected_overlap_sq(n, l, &single(n, q, "X")).unwrap();
            let b = expected_overlap_sq(n, l, &single(n, (q + 2) % n, "Z")).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}
