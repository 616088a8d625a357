//! Exact density-matrix evolution for small registers.
//!
//! A density matrix on `n` qubits is stored row-major and treated as a
//! `2n`-qubit register: row qubit `q` is register qubit `q`, column qubit `q`
//! is register qubit `n + q`. Gate conjugation `U ρ U†` then becomes `U` on the
//! row qubits and `conj(U)` on the column qubits.

use nalgebra::DMatrix;

use crate::circuits::{Circuit, Layer};
use crate::noise::{lindblad_superoperator, CollapseOp, NoiseModel, OpKind, ProcessMatrix};
use crate::pauli::{pauli_basis, PauliString};
use crate::statevec::{apply_gate_raw, apply_kq, run_circuit, PureState};
use crate::{Error, Result, C64};

/// Largest register handled by the density simulator.
pub const MAX_DENSITY_QUBITS: usize = 10;

/// Fixed RK4 step used by [`evolve_density_unit_time`].
pub const RK4_STEP: f64 = 0.02;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    n: usize,
    rho: Vec<C64>,
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DENSITY_QUBITS {
        return Err(Error::invalid(format!(
            "density simulation supports 1..={MAX_DENSITY_QUBITS} qubits, got {n}"
        )));
    }
    Ok(())
}

impl DensityState {
    /// `|0^n><0^n|`.
    pub fn zero(n: usize) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        let mut rho = vec![ZERO; dim * dim];
        rho[0] = C64::new(1.0, 0.0);
        Ok(Self { n, rho })
    }

    /// `|ψ><ψ|` for a normalized `ψ`.
    pub fn pure(psi: &PureState) -> Result<Self> {
        check_size(psi.n())?;
        let a = psi.amplitudes();
        let rho = a.iter().flat_map(|x| a.iter().map(move |y| x * y.conj())).collect();
        Ok(Self { n: psi.n(), rho })
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        let mut rho = vec![ZERO; dim * dim];
        for x in 0..dim {
            rho[x * dim + x] = C64::new(1.0 / dim as f64, 0.0);
        }
        Ok(Self { n, rho })
    }

    /// Wraps a row-major matrix without physicality checks; see [`DensityState::validate`].
    pub fn from_matrix(n: usize, rho: Vec<C64>) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        if rho.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: rho.len(),
            });
        }
        Ok(Self { n, rho })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn get(&self, x: usize, y: usize) -> C64 {
        self.rho[x * self.dim() + y]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.rho
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.rho
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.rho)
    }

    pub fn trace(&self) -> C64 {
        let dim = self.dim();
        (0..dim).map(|x| self.rho[x * dim + x]).sum()
    }

    /// `max |ρ - ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut err: f64 = 0.0;
        for x in 0..dim {
            for y in x..dim {
                err = err.max((self.rho[x * dim + y] - self.rho[y * dim + x].conj()).norm());
            }
        }
        err
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.to_dmatrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian to 1e-10, unit trace to 1e-8, eigenvalues >= -1e-8.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-10 {
            return Err(Error::invalid(format!("density matrix not Hermitian ({h:.2e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-8 {
            return Err(Error::invalid(format!("density matrix trace {tr}")));
        }
        let ev = self.min_eigenvalue();
        if ev < -1e-8 {
            return Err(Error::invalid(format!("density matrix eigenvalue {ev:.3e}")));
        }
        Ok(())
    }

    /// Diagonal of `ρ`, i.e. the measurement distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        let dim = self.dim();
        (0..dim).map(|x| self.rho[x * dim + x].re).collect()
    }

    /// `<ψ|ρ|ψ>`.
    pub fn expectation_pure(&self, psi: &PureState) -> Result<f64> {
        if psi.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: psi.n(),
            });
        }
        let a = psi.amplitudes();
        let dim = self.dim();
        let mut s = ZERO;
        for (x, ax) in a.iter().enumerate() {
            let row = &self.rho[x * dim..(x + 1) * dim];
            let inner: C64 = row.iter().zip(a).map(|(r, ay)| r * ay).sum();
            s += ax.conj() * inner;
        }
        Ok(s.re)
    }

    /// `Tr(P ρ)`.
    pub fn expectation_pauli(&self, p: &PauliString) -> Result<C64> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.n(),
            });
        }
        let dim = self.dim();
        Ok((0..dim)
            .map(|y| {
                let (x, ph) = p.apply_to_basis(y);
                ph * self.rho[y * dim + x]
            })
            .sum())
    }

    pub fn apply_layer(&mut self, layer: &Layer) -> Result<()> {
        let nq = 2 * self.n;
        for g in &layer.gates {
            if g.targets.iter().any(|&q| q >= self.n) {
                return Err(Error::invalid(format!("gate targets {:?} out of range", g.targets)));
            }
            apply_gate_raw(&mut self.rho, nq, g, 0, false);
            apply_gate_raw(&mut self.rho, nq, g, self.n, true);
        }
        Ok(())
    }

    /// `P ρ P`.
    pub fn conjugate_pauli(&mut self, p: &PauliString) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.n(),
            });
        }
        let mut scratch = vec![ZERO; self.rho.len()];
        pauli_conjugate(&self.rho, &mut scratch, self.n, p);
        self.rho = scratch;
        Ok(())
    }
}

fn pauli_phases(p: &PauliString, dim: usize) -> (usize, Vec<C64>) {
    let phases = (0..dim).map(|x| p.apply_to_basis(x).1).collect();
    (p.x_mask() as usize, phases)
}

/// `out = P ρ P`.
fn pauli_conjugate(rho: &[C64], out: &mut [C64], n: usize, p: &PauliString) {
    let dim = 1usize << n;
    let (m, ph) = pauli_phases(p, dim);
    for x in 0..dim {
        let px = ph[x];
        let row = &rho[x * dim..(x + 1) * dim];
        let out_row = (x ^ m) * dim;
        for (y, r) in row.iter().enumerate() {
            out[out_row + (y ^ m)] = px * ph[y].conj() * r;
        }
    }
}

/// `out = Σ γ D[J](ρ)`.
fn lindblad_action(ops: &[CollapseOp], n: usize, rho: &[C64], out: &mut [C64]) {
    let dim = 1usize << n;
    out.iter_mut().for_each(|v| *v = ZERO);
    for op in ops {
        let g = op.gamma;
        if g == 0.0 {
            continue;
        }
        let image: Vec<Option<(usize, C64)>> = (0..dim).map(|x| op.apply_basis(x)).collect();
        let occ: Vec<f64> = match op.kind {
            OpKind::Pauli(_) => vec![1.0; dim],
            _ => {
                let m = op.mask() as usize;
                (0..dim).map(|x| if x & m == m { 1.0 } else { 0.0 }).collect()
            }
        };
        for x in 0..dim {
            for y in 0..dim {
                let r = rho[x * dim + y];
                if r == ZERO {
                    continue;
                }
                if let (Some((xp, a)), Some((yp, b))) = (image[x], image[y]) {
                    out[xp * dim + yp] += r * a * b.conj() * g;
                }
                out[x * dim + y] -= r * (0.5 * g * (occ[x] + occ[y]));
            }
        }
    }
}

fn rk4_step(ops: &[CollapseOp], n: usize, rho: &mut [C64], h: f64, buf: &mut [Vec<C64>; 5]) {
    let [k1, k2, k3, k4, tmp] = buf;
    lindblad_action(ops, n, rho, k1);
    for i in 0..rho.len() {
        tmp[i] = rho[i] + k1[i] * (0.5 * h);
    }
    lindblad_action(ops, n, tmp, k2);
    for i in 0..rho.len() {
        tmp[i] = rho[i] + k2[i] * (0.5 * h);
    }
    lindblad_action(ops, n, tmp, k3);
    for i in 0..rho.len() {
        tmp[i] = rho[i] + k3[i] * h;
    }
    lindblad_action(ops, n, tmp, k4);
    for i in 0..rho.len() {
        rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
    }
}

/// Closed-form `exp(γ D[J])` for a single collapse operator.
fn apply_exact_op(op: &CollapseOp, n: usize, rho: &mut [C64], scratch: &mut [C64]) {
    let dim = 1usize << n;
    let g = op.gamma;
    if g == 0.0 {
        return;
    }
    match &op.kind {
        OpKind::Pauli(_) => {
            let p = op.pauli().expect("validated Pauli label");
            let a = 0.5 * (1.0 + (-2.0 * g).exp());
            let b = 0.5 * (1.0 - (-2.0 * g).exp());
            if p.is_diagonal() {
                let (_, ph) = pauli_phases(p, dim);
                for x in 0..dim {
                    for y in 0..dim {
                        // ph is ±1 for diagonal Paulis up to a global phase that cancels.
                        let s = (ph[x] * ph[y].conj()).re;
                        rho[x * dim + y] *= a + b * s;
                    }
                }
            } else {
                pauli_conjugate(rho, scratch, n, p);
                for (r, s) in rho.iter_mut().zip(scratch.iter()) {
                    *r = *r * a + s * b;
                }
            }
        }
        OpKind::Number => {
            let m = op.mask() as usize;
            let f = (-0.5 * g).exp();
            for x in 0..dim {
                for y in 0..dim {
                    if (x & m == m) != (y & m == m) {
                        rho[x * dim + y] *= f;
                    }
                }
            }
        }
        OpKind::Lower => {
            let m = op.mask() as usize;
            let full = (-g).exp();
            let half = (-0.5 * g).exp();
            let gain = 1.0 - full;
            for x in (0..dim).filter(|x| x & m == 0) {
                for y in (0..dim).filter(|y| y & m == 0) {
                    let src = rho[(x | m) * dim + (y | m)];
                    rho[x * dim + y] += src * gain;
                }
            }
            for x in 0..dim {
                let sx = x & m == m;
                for y in 0..dim {
                    let sy = y & m == m;
                    match (sx, sy) {
                        (true, true) => rho[x * dim + y] *= full,
                        (true, false) | (false, true) => rho[x * dim + y] *= half,
                        _ => {}
                    }
                }
            }
        }
    }
}

fn union_support(a: &CollapseOp, b: &CollapseOp) -> Vec<usize> {
    let mut u: Vec<usize> = a.support.iter().chain(&b.support).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Whether `D[J_a]` and `D[J_b]` commute as superoperators.
fn dissipators_commute(a: &CollapseOp, b: &CollapseOp) -> bool {
    if a.mask() & b.mask() == 0 {
        return true;
    }
    if a.pauli().is_some() && b.pauli().is_some() {
        return true;
    }
    if a.is_dephasing_like() && b.is_dephasing_like() {
        return true;
    }
    let on = union_support(a, b);
    if on.len() > 4 {
        return false;
    }
    let (Ok(la), Ok(lb)) = (a.localize(&on), b.localize(&on)) else {
        return false;
    };
    let sa = lindblad_superoperator(&[la], on.len());
    let sb = lindblad_superoperator(&[lb], on.len());
    let comm = &sa * &sb - &sb * &sa;
    comm.camax() <= 1e-12 * (1.0 + a.gamma * b.gamma)
}

/// How [`LindbladPropagator`] integrates the master equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4 { step: f64 },
    /// Product of closed-form single-operator channels; requires commuting dissipators.
    Exact,
    /// `Exact` when every pair of dissipators commutes, otherwise RK4 at [`RK4_STEP`].
    Auto,
}

/// Compiled `exp(t L)` for a fixed noise model.
#[derive(Clone, Debug)]
pub struct LindbladPropagator {
    n: usize,
    ops: Vec<CollapseOp>,
    exact: bool,
    step: f64,
}

impl LindbladPropagator {
    pub fn new(model: &NoiseModel, integrator: Integrator) -> Result<Self> {
        check_size(model.n)?;
        let ops = model.collapse_ops()?;
        let commuting = || {
            ops.iter()
                .enumerate()
                .all(|(i, a)| ops[i + 1..].iter().all(|b| dissipators_commute(a, b)))
        };
        let (exact, step) = match integrator {
            Integrator::Rk4 { step } => {
                if !(step > 0.0 && step <= 1.0) {
                    return Err(Error::invalid(format!("RK4 step {step} outside (0, 1]")));
                }
                (false, step)
            }
            Integrator::Exact => {
                if !commuting() {
                    return Err(Error::unsupported(
                        "exact integration needs pairwise commuting dissipators",
                    ));
                }
                (true, RK4_STEP)
            }
            Integrator::Auto => (commuting(), RK4_STEP),
        };
        Ok(Self {
            n: model.n,
            ops,
            exact,
            step,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Applies `exp(t L)` to an arbitrary row-major operator (not necessarily a state).
    pub fn evolve_matrix(&self, m: &mut [C64], t: f64) -> Result<()> {
        let dim = 1usize << self.n;
        if m.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: m.len(),
            });
        }
        if self.exact {
            let mut scratch = vec![ZERO; m.len()];
            for op in &self.ops {
                apply_exact_op(&op.with_gamma(op.gamma * t), self.n, m, &mut scratch);
            }
        } else {
            let steps = (t / self.step).round().max(1.0) as usize;
            let h = t / steps as f64;
            let mut buf: [Vec<C64>; 5] = std::array::from_fn(|_| vec![ZERO; m.len()]);
            for _ in 0..steps {
                rk4_step(&self.ops, self.n, m, h, &mut buf);
            }
        }
        Ok(())
    }

    pub fn evolve(&self, rho: &mut DensityState, t: f64) -> Result<()> {
        if rho.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rho.n,
            });
        }
        self.evolve_matrix(&mut rho.rho, t)
    }
}

/// `ρ ← exp(L) ρ` by RK4 with step [`RK4_STEP`].
pub fn evolve_density_unit_time(rho: &mut DensityState, model: &NoiseModel) -> Result<()> {
    LindbladPropagator::new(model, Integrator::Rk4 { step: RK4_STEP })?.evolve(rho, 1.0)
}

/// `N(ρ) = Σ χ_ab σ_a ρ σ_b` on `support`.
pub fn apply_pauli_channel(rho: &mut DensityState, chi: &ProcessMatrix, support: &[usize]) -> Result<()> {
    chi.validate_channel()?;
    let s = ChannelSuperop::new(chi, support, rho.n)?;
    s.apply(rho);
    Ok(())
}

/// A process matrix compiled to a local superoperator on `support`.
#[derive(Clone, Debug)]
pub struct ChannelSuperop {
    qubits: Vec<usize>,
    matrix: Vec<C64>,
    n: usize,
}

impl ChannelSuperop {
    pub fn new(chi: &ProcessMatrix, support: &[usize], n: usize) -> Result<Self> {
        check_size(n)?;
        let k = chi.k();
        if support.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: support.len(),
            });
        }
        if support.iter().any(|&q| q >= n) {
            return Err(Error::invalid(format!("channel support {support:?} out of range")));
        }
        let basis = pauli_basis(k);
        let d = 1usize << k;
        let mut s = DMatrix::<C64>::zeros(d * d, d * d);
        let c = chi.matrix();
        for (a, sa) in basis.iter().enumerate() {
            for (b, sb) in basis.iter().enumerate() {
                if c[(a, b)] != ZERO {
                    s += sa.kronecker(&sb.transpose()) * c[(a, b)];
                }
            }
        }
        let qubits = support.iter().copied().chain(support.iter().map(|q| q + n)).collect();
        let matrix = (0..d * d)
            .flat_map(|r| (0..d * d).map(move |col| (r, col)))
            .map(|(r, col)| s[(r, col)])
            .collect();
        Ok(Self { qubits, matrix, n })
    }

    pub fn apply(&self, rho: &mut DensityState) {
        debug_assert_eq!(rho.n, self.n);
        apply_kq(&mut rho.rho, 2 * self.n, &self.qubits, &self.matrix);
    }
}

/// Noise applied once per depth unit.
#[derive(Clone, Debug)]
pub enum LayerNoise {
    None,
    Lindblad(LindbladPropagator),
    /// Channels applied in order, e.g. one process matrix tiled over every qubit.
    Channels(Vec<ChannelSuperop>),
}

impl LayerNoise {
    pub fn lindblad(model: &NoiseModel) -> Result<Self> {
        Ok(LayerNoise::Lindblad(LindbladPropagator::new(model, Integrator::Auto)?))
    }

    /// The same single- or multi-qubit channel on each support in `tiles`.
    pub fn tiled(chi: &ProcessMatrix, tiles: &[Vec<usize>], n: usize) -> Result<Self> {
        chi.validate_channel()?;
        let ops = tiles
            .iter()
            .map(|t| ChannelSuperop::new(chi, t, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerNoise::Channels(ops))
    }

    pub fn apply(&self, rho: &mut DensityState) -> Result<()> {
        match self {
            LayerNoise::None => Ok(()),
            LayerNoise::Lindblad(p) => p.evolve(rho, 1.0),
            LayerNoise::Channels(ops) => {
                ops.iter().for_each(|op| op.apply(rho));
                Ok(())
            }
        }
    }
}

/// Runs `circuit` from `|0^n>` with `noise` after every non-injected layer,
/// calling `visit(depth, ρ)` after each depth unit.
pub fn run_density_with<F>(circuit: &Circuit, noise: &LayerNoise, mut visit: F) -> Result<DensityState>
where
    F: FnMut(usize, &DensityState) -> Result<()>,
{
    let mut rho = DensityState::zero(circuit.n)?;
    let mut depth = 0;
    for layer in &circuit.layers {
        rho.apply_layer(layer)?;
        if !layer.injected {
            noise.apply(&mut rho)?;
            depth += 1;
            visit(depth, &rho)?;
        }
    }
    Ok(rho)
}

/// Alternates perfect layers with one time unit of Lindblad evolution.
pub fn run_noisy_density(circuit: &Circuit, model: &NoiseModel) -> Result<DensityState> {
    if model.n != circuit.n {
        return Err(Error::DimensionMismatch {
            expected: circuit.n,
            got: model.n,
        });
    }
    run_density_with(circuit, &LayerNoise::lindblad(model)?, |_, _| Ok(()))
}

/// `<ψ|ρ|ψ>` with `ψ` the ideal output of `circuit`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityState, circuit: &Circuit) -> Result<f64> {
    let psi = run_circuit(circuit)?;
    Ok(rho.expectation_pure(&psi)?.clamp(0.0, 1.0))
}
