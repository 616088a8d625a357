//! Pauli strings in symplectic (x, z) form.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, C64};

/// Maximum register size representable by the bit masks.
pub const MAX_QUBITS: usize = 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Position in the (I, X, Y, Z) ordering.
    pub fn index(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn from_index(i: usize) -> Pauli {
        Pauli::ALL[i & 3]
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Row-major 2x2 matrix.
    pub fn matrix(self) -> [C64; 4] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// An `n`-qubit Pauli operator `i^{|x&z|} X^x Z^z` (Hermitian, no sign).
///
/// Masks use the global bit convention: qubit `q` is bit `n - 1 - q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "too many qubits for a Pauli mask");
        Self { n, x: 0, z: 0 }
    }

    pub fn from_masks(n: usize, x: u64, z: u64) -> Self {
        assert!(n <= MAX_QUBITS, "too many qubits for a Pauli mask");
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Self {
            n,
            x: x & full,
            z: z & full,
        }
    }

    /// A single-qubit Pauli `p` on qubit `q`.
    pub fn single(n: usize, q: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(q, p);
        s
    }

    /// Pauli `label[k]` on qubit `support[k]`, identity elsewhere.
    pub fn on_support(n: usize, support: &[usize], label: &str) -> Result<Self> {
        let local: Vec<char> = label.chars().collect();
        if local.len() != support.len() {
            return Err(Error::invalid(format!(
                "Pauli label '{label}' has length {} but support has {} qubits",
                local.len(),
                support.len()
            )));
        }
        let mut s = Self::identity(n);
        for (&q, &c) in support.iter().zip(&local) {
            if q >= n {
                return Err(Error::invalid(format!("qubit {q} out of range for n = {n}")));
            }
            s.set(q, parse_symbol(c)?);
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    fn bit(&self, q: usize) -> u64 {
        1u64 << (self.n - 1 - q)
    }

    pub fn get(&self, q: usize) -> Pauli {
        let b = self.bit(q);
        Pauli::from_bits(self.x & b != 0, self.z & b != 0)
    }

    pub fn set(&mut self, q: usize, p: Pauli) {
        assert!(q < self.n, "qubit {q} out of range for n = {}", self.n);
        let b = self.bit(q);
        let (xb, zb) = p.bits();
        self.x = if xb { self.x | b } else { self.x & !b };
        self.z = if zb { self.z | b } else { self.z & !b };
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    /// Qubits acted on non-trivially, in increasing order.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.get(q) != Pauli::I).collect()
    }

    /// Whether the operator is diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    /// Action on a basis state: `P|y> = phase * |y ^ x>`.
    #[inline]
    pub fn apply_to_basis(&self, y: usize) -> (usize, C64) {
        let y64 = y as u64;
        let ipow = (self.x & self.z).count_ones() + 2 * (self.z & y64).count_ones();
        ((y64 ^ self.x) as usize, i_pow(ipow))
    }

    /// Dense `2^n x 2^n` matrix; intended for small `n`.
    pub fn dense(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for y in 0..dim {
            let (x, ph) = self.apply_to_basis(y);
            m[(x, y)] = ph;
        }
        m
    }

    /// Commutation test via the symplectic form.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// Index in the `(I, X, Y, Z)^{⊗k}` ordering restricted to `support`,
    /// first listed qubit most significant.
    pub fn local_index(&self, support: &[usize]) -> usize {
        support.iter().fold(0, |acc, &q| acc * 4 + self.get(q).index())
    }

    /// Inverse of [`PauliString::local_index`].
    pub fn from_local_index(n: usize, support: &[usize], mut index: usize) -> Self {
        let mut s = Self::identity(n);
        for &q in support.iter().rev() {
            s.set(q, Pauli::from_index(index & 3));
            index >>= 2;
        }
        s
    }
}

#[inline]
pub(crate) fn i_pow(k: u32) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

fn parse_symbol(c: char) -> Result<Pauli> {
    match c.to_ascii_uppercase() {
        'I' => Ok(Pauli::I),
        'X' => Ok(Pauli::X),
        'Y' => Ok(Pauli::Y),
        'Z' => Ok(Pauli::Z),
        other => Err(Error::invalid(format!("invalid Pauli symbol '{other}'"))),
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s.chars().count();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!("Pauli label length {n} out of range")));
        }
        let mut p = Self::identity(n);
        for (q, c) in s.chars().enumerate() {
            p.set(q, parse_symbol(c)?);
        }
        Ok(p)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.get(q).symbol())?;
        }
        Ok(())
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense matrices of the `4^k` Paulis on `k` qubits in local-index order.
pub fn pauli_basis(k: usize) -> Vec<DMatrix<C64>> {
    let support: Vec<usize> = (0..k).collect();
    (0..1usize << (2 * k))
        .map(|a| PauliString::from_local_index(k, &support, a).dense())
        .collect()
}
