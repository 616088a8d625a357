//! Monte Carlo wave function trajectories.
//!
//! Between gate layers the state evolves under `H_eff = -(i/2) Σ γ_l J_l†J_l`.
//! Every supported `J_l†J_l` is diagonal, so the no-jump evolution is the
//! closed form `ψ_x ← ψ_x e^{-Γ_x t/2}` and jump times solve a scalar equation
//! in a handful of distinct decay rates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::Circuit;
use crate::noise::{CollapseOp, JumpNorm, NoiseModel};
use crate::rng::{domain, StreamSeed};
use crate::statevec::{apply_pauli_raw, run_circuit, sample_from_weights, PureState};
use crate::{Error, Result, C64};

const ROOT_TOL: f64 = 1e-12;
const NEWTON_BRACKET: f64 = 1e-3;

/// Per-basis-state total decay rates `Γ_x = Σ_l γ_l <x|J_l†J_l|x>`, grouped
/// into classes of equal rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayProfile {
    classes: Vec<f64>,
    class_of: Vec<u32>,
}

impl DecayProfile {
    /// `Γ_x` for every basis state.
    pub fn rates(&self) -> Vec<f64> {
        self.class_of.iter().map(|&c| self.classes[c as usize]).collect()
    }

    pub fn rate(&self, x: usize) -> f64 {
        self.classes[self.class_of[x] as usize]
    }

    /// Distinct rates, ascending.
    pub fn distinct_rates(&self) -> &[f64] {
        &self.classes
    }

    /// The common rate when `Γ_x` does not depend on `x`.
    pub fn uniform_rate(&self) -> Option<f64> {
        (self.classes.len() == 1).then(|| self.classes[0])
    }

    /// `Σ_{x in class k} |ψ_x|^2` for every class.
    fn class_weights(&self, amps: &[C64]) -> Vec<f64> {
        let mut w = vec![0.0; self.classes.len()];
        for (a, &c) in amps.iter().zip(&self.class_of) {
            w[c as usize] += a.norm_sqr();
        }
        w
    }
}

/// Assembles `Γ_x` without materializing operators.
pub fn decay_profile(model: &NoiseModel) -> Result<DecayProfile> {
    let ops = model.collapse_ops()?;
    profile_from_ops(&ops, model.n)
}

fn profile_from_ops(ops: &[CollapseOp], n: usize) -> Result<DecayProfile> {
    if n > crate::statevec::MAX_STATEVEC_QUBITS {
        return Err(Error::invalid(format!(
            "trajectory simulation limited to 24 qubits, got {n}"
        )));
    }
    let dim = 1usize << n;
    let mut rates = vec![0.0; dim];
    for op in ops {
        match op.jump_norm() {
            JumpNorm::Identity => rates.iter_mut().for_each(|r| *r += op.gamma),
            JumpNorm::AllOnes(mask) => {
                let m = mask as usize;
                for (x, r) in rates.iter_mut().enumerate() {
                    if x & m == m {
                        *r += op.gamma;
                    }
                }
            }
        }
    }
    let mut classes: Vec<f64> = rates.clone();
    classes.sort_by(f64::total_cmp);
    classes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let class_of = rates
        .iter()
        .map(|r| {
            let i = classes.partition_point(|c| *c < *r - 1e-14 * r.abs().max(1.0));
            i.min(classes.len() - 1) as u32
        })
        .collect();
    Ok(DecayProfile { classes, class_of })
}

/// Solves `norm2 · Σ_k w_k e^{-g_k t} = p` on `[0, horizon]`; `None` when the
/// norm stays above `p` until the horizon.
fn solve_decay(weights: &[f64], rates: &[f64], norm2: f64, p: f64, horizon: f64) -> Option<f64> {
    let target = p / norm2;
    let f = |t: f64| weights.iter().zip(rates).map(|(w, g)| w * (-g * t).exp()).sum::<f64>() - target;
    let df = |t: f64| {
        -weights
            .iter()
            .zip(rates)
            .map(|(w, g)| w * g * (-g * t).exp())
            .sum::<f64>()
    };
    if f(0.0) <= 0.0 {
        return Some(0.0);
    }
    if f(horizon) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, horizon);
    while hi - lo > NEWTON_BRACKET {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let v = f(t);
        if (v * norm2).abs() <= ROOT_TOL || hi - lo <= f64::EPSILON * horizon.max(1.0) {
            break;
        }
        if v > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let newton = if d < 0.0 { t - v / d } else { f64::NAN };
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Some(t)
}

/// Time until the (possibly unnormalized) `state` decays to squared norm `p`,
/// within `horizon`.
pub fn jump_time(state: &PureState, profile: &DecayProfile, p: f64, horizon: f64) -> Option<f64> {
    let w = profile.class_weights(state.amplitudes());
    solve_decay(&w, &profile.classes, 1.0, p, horizon)
}

/// Categorical draw over `P_l ∝ γ_l <ψ|J_l†J_l|ψ>`.
pub fn select_jump<R: Rng + ?Sized>(state: &PureState, ops: &[CollapseOp], rng: &mut R) -> Result<usize> {
    let norm2 = state.norm2();
    let weights: Vec<f64> = ops
        .iter()
        .map(|op| {
            op.gamma
                * match op.jump_norm() {
                    JumpNorm::Identity => norm2,
                    JumpNorm::AllOnes(mask) => {
                        let m = mask as usize;
                        state
                            .amplitudes()
                            .iter()
                            .enumerate()
                            .filter(|(x, _)| x & m == m)
                            .map(|(_, a)| a.norm_sqr())
                            .sum()
                    }
                }
        })
        .collect();
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::NoJumpPossible);
    }
    Ok(sample_from_weights(&weights, 1, rng)?[0])
}

/// `ψ ← J ψ / ||J ψ||`.
pub fn apply_jump(state: &mut PureState, op: &CollapseOp) -> Result<()> {
    if op.n() != state.n() {
        return Err(Error::DimensionMismatch {
            expected: state.n(),
            got: op.n(),
        });
    }
    let amps = state.amplitudes_mut();
    match op.pauli() {
        Some(p) => apply_pauli_raw(amps, p),
        None => {
            let mut out = vec![C64::new(0.0, 0.0); amps.len()];
            for (x, a) in amps.iter().enumerate() {
                if let Some((y, c)) = op.apply_basis(x) {
                    out[y] += c * a;
                }
            }
            amps.copy_from_slice(&out);
        }
    }
    if state.norm2() <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    state.normalize()
}

/// A compiled noise model for trajectory evolution.
#[derive(Clone, Debug)]
pub struct TrajectorySolver {
    n: usize,
    ops: Vec<CollapseOp>,
    profile: DecayProfile,
}

impl TrajectorySolver {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        let ops = model.collapse_ops()?;
        let profile = profile_from_ops(&ops, model.n)?;
        Ok(Self {
            n: model.n,
            ops,
            profile,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> &DecayProfile {
        &self.profile
    }

    pub fn ops(&self) -> &[CollapseOp] {
        &self.ops
    }

    /// Advances by exactly `duration` time units.
    pub fn evolve<R: Rng + ?Sized>(&self, traj: &mut TrajectoryState, duration: f64, rng: &mut R) -> Result<()> {
        let mut remaining = duration;
        loop {
            let (weights, rates): (Vec<f64>, &[f64]) = match self.profile.uniform_rate() {
                Some(_) => (vec![1.0], &self.profile.classes),
                None => (
                    self.profile.class_weights(traj.state.amplitudes()),
                    &self.profile.classes,
                ),
            };
            match solve_decay(&weights, rates, traj.norm2, traj.threshold, remaining) {
                None => {
                    self.decay(traj, &weights, remaining);
                    return Ok(());
                }
                Some(t) => {
                    self.decay(traj, &weights, t);
                    let l = select_jump(&traj.state, &self.ops, rng)?;
                    apply_jump(&mut traj.state, &self.ops[l])?;
                    traj.norm2 = 1.0;
                    traj.threshold = draw_threshold(rng);
                    traj.jumps += 1;
                    remaining -= t;
                }
            }
        }
    }

    /// No-jump evolution for time `t`, keeping `state` normalized and
    /// folding the norm loss into `norm2`.
    fn decay(&self, traj: &mut TrajectoryState, weights: &[f64], t: f64) {
        if t <= 0.0 {
            return;
        }
        let survival: f64 = weights
            .iter()
            .zip(&self.profile.classes)
            .map(|(w, g)| w * (-g * t).exp())
            .sum();
        traj.norm2 *= survival;
        if self.profile.uniform_rate().is_none() {
            let inv = 1.0 / survival.sqrt();
            let factors: Vec<f64> = self
                .profile
                .classes
                .iter()
                .map(|g| (-0.5 * g * t).exp() * inv)
                .collect();
            for (a, &c) in traj.state.amplitudes_mut().iter_mut().zip(&self.profile.class_of) {
                *a *= factors[c as usize];
            }
        }
    }
}

fn draw_threshold<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Uniform on (0, 1): exclude 0 so the norm equation always has a root.
    loop {
        let p: f64 = rng.random();
        if p > 0.0 {
            return p;
        }
    }
}

/// A trajectory between gate layers. `state` is kept at unit norm and the
/// no-jump norm decay since the last jump is tracked in `norm2`.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub state: PureState,
    pub norm2: f64,
    pub threshold: f64,
    pub jumps: usize,
}

impl TrajectoryState {
    pub fn new<R: Rng + ?Sized>(state: PureState, rng: &mut R) -> Self {
        Self {
            state,
            norm2: 1.0,
            threshold: draw_threshold(rng),
            jumps: 0,
        }
    }
}

/// One time unit of trajectory evolution under `model`.
pub fn evolve_unit_time<R: Rng + ?Sized>(traj: &mut TrajectoryState, model: &NoiseModel, rng: &mut R) -> Result<()> {
    TrajectorySolver::new(model)?.evolve(traj, 1.0, rng)
}

/// Runs `circuit` on one trajectory, calling `visit(depth, ψ)` after the
/// noise step of every depth unit.
pub fn run_trajectory_with<R, F>(
    circuit: &Circuit,
    solver: &TrajectorySolver,
    rng: &mut R,
    mut visit: F,
) -> Result<PureState>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &PureState) -> Result<()>,
{
    if solver.n != circuit.n {
        return Err(Error::DimensionMismatch {
            expected: circuit.n,
            got: solver.n,
        });
    }
    let mut traj = TrajectoryState::new(PureState::zero(circuit.n)?, rng);
    let mut depth = 0;
    for layer in &circuit.layers {
        traj.state.apply_layer(layer)?;
        if !layer.injected {
            solver.evolve(&mut traj, 1.0, rng)?;
            depth += 1;
            visit(depth, &traj.state)?;
        }
    }
    Ok(traj.state)
}

/// Final normalized state of one noisy trajectory.
pub fn run_noisy_trajectory<R: Rng + ?Sized>(circuit: &Circuit, model: &NoiseModel, rng: &mut R) -> Result<PureState> {
    run_trajectory_with(circuit, &TrajectorySolver::new(model)?, rng, |_, _| Ok(()))
}

/// Random stream of trajectory `index` under `master_seed`.
pub fn trajectory_stream(master_seed: u64, index: u64) -> StreamSeed {
    StreamSeed::derive(master_seed, domain::TRAJECTORY, index)
}

/// Final states of `t` independent trajectories.
pub fn trajectory_ensemble(
    circuit: &Circuit,
    model: &NoiseModel,
    t: usize,
    master_seed: u64,
) -> Result<Vec<PureState>> {
    if t == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    let solver = TrajectorySolver::new(model)?;
    (0..t as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_stream(master_seed, j).rng();
            run_trajectory_with(circuit, &solver, &mut rng, |_, _| Ok(()))
        })
        .collect()
}

/// Ideal output at one checkpoint depth, with per-outcome tables used by the
/// streaming estimators.
#[derive(Clone, Debug)]
pub struct IdealCheckpoint {
    pub depth: usize,
    pub state: PureState,
    pub probs: Vec<f64>,
    heavy_threshold: f64,
}

impl IdealCheckpoint {
    pub fn new(depth: usize, state: PureState) -> Self {
        let probs = state.probabilities();
        let heavy_threshold = std::f64::consts::LN_2 / probs.len() as f64;
        Self {
            depth,
            state,
            probs,
            heavy_threshold,
        }
    }
}

/// Ideal checkpoints of `circuit` at the given depths (counted in non-injected layers).
pub fn ideal_checkpoints(circuit: &Circuit, depths: &[usize]) -> Result<Vec<IdealCheckpoint>> {
    let mut out = Vec::with_capacity(depths.len());
    let mut state = PureState::zero(circuit.n)?;
    let mut depth = 0;
    if depths.contains(&0) {
        out.push(IdealCheckpoint::new(0, state.clone()));
    }
    for layer in &circuit.layers {
        state.apply_layer(layer)?;
        if !layer.injected {
            depth += 1;
            if depths.contains(&depth) {
                out.push(IdealCheckpoint::new(depth, state.clone()));
            }
        }
    }
    if out.len() != depths.len() {
        return Err(Error::invalid(format!(
            "checkpoint depths {depths:?} exceed circuit depth {depth}"
        )));
    }
    Ok(out)
}

/// Trajectory sums of quantities linear in `q(x) = |φ_x|^2`, plus the
/// fidelity second moment for the within-circuit variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSums {
    pub trajectories: usize,
    pub fidelity_sum: f64,
    pub fidelity_sq_sum: f64,
    pub sum_p_weighted: f64,
    pub sum_q_ln_p: f64,
    pub sum_q_heavy: f64,
    /// Set when some outcome has `p < 1e-300` but positive weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_probability: Option<usize>,
}

impl CheckpointSums {
    /// Adds the contribution of one trajectory state.
    pub fn record(&mut self, ideal: &IdealCheckpoint, phi: &PureState) -> Result<()> {
        let f = ideal.state.inner(phi)?.norm_sqr();
        let (mut spq, mut sln, mut sheavy) = (0.0, 0.0, 0.0);
        for (x, (a, &p)) in phi.amplitudes().iter().zip(&ideal.probs).enumerate() {
            let q = a.norm_sqr();
            spq += p * q;
            if p >= ideal.heavy_threshold {
                sheavy += q;
            }
            if p < 1e-300 {
                if q > 0.0 && self.zero_probability.is_none() {
                    self.zero_probability = Some(x);
                }
            } else {
                sln += q * p.ln();
            }
        }
        self.trajectories += 1;
        self.fidelity_sum += f;
        self.fidelity_sq_sum += f * f;
        self.sum_p_weighted += spq;
        self.sum_q_ln_p += sln;
        self.sum_q_heavy += sheavy;
        Ok(())
    }

    pub fn merge(&mut self, other: &CheckpointSums) {
        self.trajectories += other.trajectories;
        self.fidelity_sum += other.fidelity_sum;
        self.fidelity_sq_sum += other.fidelity_sq_sum;
        self.sum_p_weighted += other.sum_p_weighted;
        self.sum_q_ln_p += other.sum_q_ln_p;
        self.sum_q_heavy += other.sum_q_heavy;
        self.zero_probability = self.zero_probability.or(other.zero_probability);
    }

    pub fn mean_fidelity(&self) -> f64 {
        self.fidelity_sum / self.trajectories as f64
    }

    /// Sample variance of the per-trajectory fidelity.
    pub fn fidelity_variance(&self) -> f64 {
        let t = self.trajectories as f64;
        if self.trajectories < 2 {
            return 0.0;
        }
        let m = self.fidelity_sum / t;
        ((self.fidelity_sq_sum - t * m * m) / (t - 1.0)).max(0.0)
    }
}

/// Streams `t` trajectories through `circuit`, accumulating [`CheckpointSums`]
/// at every checkpoint. Per-trajectory results are reduced in index order.
pub fn stream_checkpoints(
    circuit: &Circuit,
    solver: &TrajectorySolver,
    checkpoints: &[IdealCheckpoint],
    t: usize,
    master_seed: u64,
) -> Result<Vec<CheckpointSums>> {
    if t == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    let last = checkpoints.iter().map(|c| c.depth).max().unwrap_or(0);
    let circuit = circuit.prefix(last);
    let per_traj: Vec<Vec<CheckpointSums>> = (0..t as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_stream(master_seed, j).rng();
            let mut sums = vec![CheckpointSums::default(); checkpoints.len()];
            run_trajectory_with(&circuit, solver, &mut rng, |depth, phi| {
                for (s, c) in sums.iter_mut().zip(checkpoints) {
                    if c.depth == depth {
                        s.record(c, phi)?;
                    }
                }
                Ok(())
            })?;
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![CheckpointSums::default(); checkpoints.len()];
    for sums in &per_traj {
        for (acc, s) in total.iter_mut().zip(sums) {
            acc.merge(s);
        }
    }
    Ok(total)
}

/// Trajectory-averaged `<ψ|ρ|ψ>` and its standard error for the ideal output of `circuit`.
pub fn trajectory_fidelity(circuit: &Circuit, model: &NoiseModel, t: usize, master_seed: u64) -> Result<(f64, f64)> {
    let solver = TrajectorySolver::new(model)?;
    let depth = circuit.random_depth();
    let ideal = IdealCheckpoint::new(depth, run_circuit(circuit)?);
    let sums = stream_checkpoints(circuit, &solver, &[ideal], t, master_seed)?;
    let s = &sums[0];
    Ok((s.mean_fidelity(), (s.fidelity_variance() / t as f64).sqrt()))
}
