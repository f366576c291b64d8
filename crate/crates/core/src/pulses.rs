//! Stroboscopic circuit on qubit ⊗ M₁ ⊗ M₂: sideband pulses interleaved with qubit
//! resets, and the map from pulse parameters to effective rates.
//!
//! Two engines run the same schedule. [`run_cycle`] propagates the full qubit ⊗ modes
//! density matrix with exact segment unitaries. [`ReducedCycle`] uses that every
//! qubit-coupled segment starts from |↓⟩ and ends in a reset, so each segment collapses to
//! the Kraus pair K_s = ⟨s|U|↓⟩ acting on the modes only.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, embed, partial_trace, OperatorMatrix, QuantumState, SpaceLayout, Subsystem,
};
use crate::linalg::{self, CMat, Csr, C64, I, ONE, ZERO};
use crate::lindblad::{self, EffectiveParams, Regime};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SegmentKind {
    /// Blue sideband on a mode (0 = M₁).
    Bsb {
        mode: usize,
    },
    /// Second red sideband.
    Rsb2 {
        mode: usize,
    },
    /// Simultaneous red sidebands on both modes.
    Sync,
    /// State-dependent force.
    Sdf {
        mode: usize,
    },
    /// Resonant classical drive on a mode, no qubit involved.
    Drive {
        mode: usize,
    },
    Reset,
}

impl SegmentKind {
    fn mode(self) -> Option<usize> {
        match self {
            SegmentKind::Bsb { mode }
            | SegmentKind::Rsb2 { mode }
            | SegmentKind::Sdf { mode }
            | SegmentKind::Drive { mode } => Some(mode),
            SegmentKind::Sync | SegmentKind::Reset => None,
        }
    }

    fn couples_qubit(self) -> bool {
        !matches!(self, SegmentKind::Drive { .. } | SegmentKind::Reset)
    }
}

/// One pulse. `rabi` is the carrier Rabi frequency Ω in rad/s (the amplitude Ω_d for a
/// drive); `eta` is the Lamb-Dicke parameter (η₁ for SYNC, whose strength Ω·η₁ is shared
/// by both modes); `phase` is φ_b, φ_r, φ, φ_m or the drive phase depending on kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    #[serde(flatten)]
    pub kind: SegmentKind,
    #[serde(default)]
    pub rabi: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    #[serde(default)]
    pub phase: f64,
    /// Seconds.
    #[serde(default)]
    pub duration: f64,
}

impl PulseSegment {
    fn new(kind: SegmentKind, rabi: f64, eta: f64, phase: f64, duration: f64) -> Self {
        PulseSegment {
            kind,
            rabi,
            eta,
            eta2: None,
            phase,
            duration,
        }
    }

    pub fn bsb(mode: usize, rabi: f64, eta: f64, duration: f64) -> Self {
        Self::new(SegmentKind::Bsb { mode }, rabi, eta, 0.0, duration)
    }

    pub fn rsb2(mode: usize, rabi: f64, eta: f64, duration: f64) -> Self {
        Self::new(SegmentKind::Rsb2 { mode }, rabi, eta, 0.0, duration)
    }

    pub fn sync(rabi: f64, eta1: f64, eta2: f64, phase: f64, duration: f64) -> Self {
        PulseSegment {
            eta2: Some(eta2),
            ..Self::new(SegmentKind::Sync, rabi, eta1, phase, duration)
        }
    }

    pub fn sdf(mode: usize, rabi: f64, eta: f64, phase: f64, duration: f64) -> Self {
        Self::new(SegmentKind::Sdf { mode }, rabi, eta, phase, duration)
    }

    pub fn drive(mode: usize, amp: f64, phase: f64, duration: f64) -> Self {
        Self::new(SegmentKind::Drive { mode }, amp, 0.0, phase, duration)
    }

    pub fn reset() -> Self {
        Self::new(SegmentKind::Reset, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!(
                "segment duration {} must be finite and >= 0",
                self.duration
            ));
        }
        if !(self.rabi.is_finite() && self.rabi >= 0.0) || !self.phase.is_finite() {
            return bad("segment Rabi frequency must be >= 0 and phase finite".into());
        }
        if let Some(m) = self.kind.mode() {
            if m > 1 {
                return bad(format!("mode index {m} out of range (0 or 1)"));
            }
        }
        if self.kind.couples_qubit() {
            let etas = [Some(self.eta), self.eta2];
            for e in etas.into_iter().flatten() {
                if !(e > 0.0 && e < 1.0) {
                    return bad(format!("Lamb-Dicke parameter {e} outside (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// One cycle of segments plus the static mode detunings δ₁, δ₂ (rad/s) of the rotating frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<PulseSegment>,
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub delta2: f64,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta1.is_finite() && self.delta2.is_finite()) {
            return Err(Error::InvalidArgument("non-finite detuning".into()));
        }
        self.segments.iter().try_for_each(|s| s.validate())
    }

    /// T, the summed duration of all non-reset segments.
    pub fn cycle_period(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.kind != SegmentKind::Reset)
            .map(|s| s.duration)
            .sum()
    }

    /// Every duration divided by `factor`, Rabi frequencies times √factor; the effective
    /// rates are unchanged.
    pub fn refined(&self, factor: f64) -> Result<PulseSchedule> {
        if !(factor.is_finite() && factor >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "refinement factor {factor} < 1"
            )));
        }
        let mut out = self.clone();
        for s in &mut out.segments {
            s.duration /= factor;
            match s.kind {
                // keep Ω_d·t/T fixed
                SegmentKind::Drive { .. } | SegmentKind::Reset => {}
                _ => s.rabi *= factor.sqrt(),
            }
        }
        Ok(out)
    }

    pub fn without_sync(&self) -> PulseSchedule {
        let mut out = self.clone();
        let mut keep = Vec::new();
        let mut skip_reset = false;
        for s in &self.segments {
            if s.kind == SegmentKind::Sync {
                skip_reset = true;
                continue;
            }
            if skip_reset && s.kind == SegmentKind::Reset {
                skip_reset = false;
                continue;
            }
            skip_reset = false;
            keep.push(*s);
        }
        out.segments = keep;
        out
    }

    fn detuning(&self, mode: usize) -> f64 {
        if mode == 0 {
            self.delta1
        } else {
            self.delta2
        }
    }
}

fn mode_slot(layout: &SpaceLayout, mode: usize) -> Result<usize> {
    layout
        .mode_slots()
        .get(mode)
        .copied()
        .ok_or_else(|| Error::Layout(format!("layout has no mode {mode}")))
}

fn mode_cutoff(layout: &SpaceLayout, slot: usize) -> usize {
    layout.slots()[slot].dim()
}

fn lowering(layout: &SpaceLayout, mode: usize) -> Result<OperatorMatrix> {
    let slot = mode_slot(layout, mode)?;
    embed(
        &hilbert::annihilation(mode_cutoff(layout, slot))?,
        slot,
        layout,
    )
}

fn qubit_op(layout: &SpaceLayout, op: &OperatorMatrix) -> Result<OperatorMatrix> {
    let q = layout
        .qubit_slot()
        .ok_or_else(|| Error::Layout("segment needs a qubit slot".into()))?;
    embed(op, q, layout)
}

/// X + X†.
fn hermitize(x: OperatorMatrix) -> Result<OperatorMatrix> {
    let xd = x.dagger();
    x.add(&xd)
}

/// Interaction Hamiltonian of one segment (without detuning terms).
pub fn segment_hamiltonian(seg: &PulseSegment, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    seg.validate()?;
    let (om, eta, ph) = (seg.rabi, seg.eta, seg.phase);
    match seg.kind {
        SegmentKind::Reset => Err(Error::InvalidKind("RESET has no Hamiltonian".into())),
        SegmentKind::Bsb { mode } => {
            let a = lowering(layout, mode)?;
            let sp = qubit_op(layout, &hilbert::sigma_plus())?;
            let c = I * C64::from_polar(0.5 * om * eta, ph);
            hermitize(sp.matmul(&a.dagger())?.scale(c))
        }
        SegmentKind::Rsb2 { mode } => {
            let a = lowering(layout, mode)?;
            let sp = qubit_op(layout, &hilbert::sigma_plus())?;
            let c = -C64::from_polar(0.25 * om * eta * eta, ph);
            hermitize(sp.matmul(&a.matmul(&a)?)?.scale(c))
        }
        SegmentKind::Sync => {
            let a1 = lowering(layout, 0)?;
            let a2 = lowering(layout, 1)?;
            let sp = qubit_op(layout, &hilbert::sigma_plus())?;
            let l = a1.add(&a2.scale(C64::from_polar(1.0, ph)))?;
            hermitize(sp.matmul(&l)?.scale(-I * (0.5 * om * eta)))
        }
        SegmentKind::Sdf { mode } => {
            let a = lowering(layout, mode)?;
            let sx = qubit_op(layout, &hilbert::sigma_x())?;
            let x = hermitize(a.scale(C64::from_polar(1.0, ph)))?;
            Ok(sx.matmul(&x)?.scale(C64::new(0.5 * eta * om, 0.0)))
        }
        SegmentKind::Drive { mode } => {
            let a = lowering(layout, mode)?;
            hermitize(a.scale(C64::from_polar(om, ph)))
        }
    }
}

/// δ₁a₁†a₁ + δ₂a₂†a₂ over the modes present in `layout`.
fn detuning_hamiltonian(sched: &PulseSchedule, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let mut h = OperatorMatrix::zeros(layout);
    for (m, _) in layout.mode_slots().iter().enumerate().take(2) {
        let a = lowering(layout, m)?;
        let n = a.dagger().matmul(&a)?;
        h = h.add(&n.scale(C64::new(sched.detuning(m), 0.0)))?;
    }
    Ok(h)
}

/// Traces out the qubit (slot 0) and re-prepares it in |↓⟩.
pub fn qubit_reset(state: &QuantumState) -> Result<QuantumState> {
    if state.layout.slots().first() != Some(&Subsystem::Qubit) {
        return Err(Error::Layout(
            "qubit reset needs the qubit in slot 0".into(),
        ));
    }
    let rest: Vec<usize> = (1..state.layout.slots().len()).collect();
    let modes = partial_trace(state, &rest)?;
    let mut down = Array2::zeros((2, 2));
    down[[0, 0]] = ONE;
    QuantumState::from_parts(state.layout.clone(), linalg::kron(&down, &modes.rho))
}

/// Uniform phases in [0, 2π) for one cycle; the stream index is the cycle number, so any
/// cycle can be regenerated independently.
pub fn cycle_phases(seed: u64, cycle: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    (0..count).map(|_| rng.random_range(0.0..TWO_PI)).collect()
}

fn randomized(seg: &PulseSegment) -> bool {
    matches!(seg.kind, SegmentKind::Bsb { .. } | SegmentKind::Rsb2 { .. })
}

fn unitary(h: &OperatorMatrix, t: f64) -> CMat {
    linalg::expm(&h.entries.mapv(|z| -I * z * t))
}

fn conjugate(u: &CMat, rho: &CMat) -> CMat {
    linalg::matmul3(u, rho, &linalg::dagger(u))
}

/// One cycle on the full qubit ⊗ M₁ ⊗ M₂ space with exact segment unitaries.
///
/// BSB and 2RSB phases are replaced by fresh draws from [`cycle_phases`]`(seed, cycle)`.
pub fn run_cycle(
    state: &QuantumState,
    sched: &PulseSchedule,
    seed: u64,
    cycle: u64,
) -> Result<QuantumState> {
    run_cycle_full(state, sched, seed, cycle, true)
}

fn run_cycle_full(
    state: &QuantumState,
    sched: &PulseSchedule,
    seed: u64,
    cycle: u64,
    with_sync: bool,
) -> Result<QuantumState> {
    sched.validate()?;
    let layout = &state.layout;
    let hdet = detuning_hamiltonian(sched, layout)?;
    let n_random = sched.segments.iter().filter(|s| randomized(s)).count();
    let mut phases = cycle_phases(seed, cycle, n_random).into_iter();
    let mut cur = state.clone();
    for seg in &sched.segments {
        let mut seg = *seg;
        if randomized(&seg) {
            seg.phase = phases.next().unwrap_or(0.0);
        }
        if seg.kind == SegmentKind::Reset {
            cur = qubit_reset(&cur)?;
            continue;
        }
        if (seg.kind == SegmentKind::Sync && !with_sync) || seg.duration == 0.0 {
            continue;
        }
        let h = segment_hamiltonian(&seg, layout)?.add(&hdet)?;
        let u = unitary(&h, seg.duration);
        cur = QuantumState::from_parts(layout.clone(), conjugate(&u, &cur.rho))?;
    }
    Ok(cur)
}

/// A segment compiled to Kraus operators on M₁ ⊗ M₂.
struct Step {
    kraus: Vec<Csr>,
    adjoints: Vec<Csr>,
    /// For randomized segments: (mode, θ per unit phase) so that K(φ) = R K(0) R†,
    /// R = exp(iθφ a†a).
    phased: Option<(usize, f64)>,
    is_sync: bool,
}

/// Reset-reduced cycle on the two-mode space.
pub struct ReducedCycle {
    n1: usize,
    n2: usize,
    steps: Vec<Step>,
    n_random: usize,
}

fn dense_from_csr(a: &Csr) -> CMat {
    let mut out = Array2::zeros((a.nrows, a.ncols));
    for i in 0..a.nrows {
        for (j, v) in a.row(i) {
            out[[i, j]] = v;
        }
    }
    out
}

fn free_rotation(delta: f64, t: f64, n: usize) -> CMat {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            C64::from_polar(1.0, -delta * t * i as f64)
        } else {
            ZERO
        }
    })
}

fn drop_tiny(a: &CMat) -> CMat {
    let scale = linalg::max_abs(a).max(1.0);
    a.mapv(|z| if z.norm() < 1e-15 * scale { ZERO } else { z })
}

impl ReducedCycle {
    /// Compiles a schedule for cutoffs (n1, n2). Every qubit-coupled segment must be followed
    /// directly by a RESET.
    pub fn new(sched: &PulseSchedule, n1: usize, n2: usize) -> Result<Self> {
        sched.validate()?;
        let segs = &sched.segments;
        let dims = [n1, n2];
        let mut steps = Vec::new();
        for (k, seg) in segs.iter().enumerate() {
            if seg.kind == SegmentKind::Reset || seg.duration == 0.0 {
                continue;
            }
            if seg.kind.couples_qubit()
                && segs.get(k + 1).map(|s| s.kind) != Some(SegmentKind::Reset)
            {
                return Err(Error::InvalidArgument(format!(
                    "segment {k} ({:?}) is not followed by a reset; use the full engine",
                    seg.kind
                )));
            }
            let t = seg.duration;
            let mut base = *seg;
            if randomized(seg) {
                base.phase = 0.0;
            }
            let full: Vec<CMat> = match seg.kind.mode() {
                Some(m) => {
                    let n = dims[m];
                    let other = 1 - m;
                    let local_layout = if seg.kind.couples_qubit() {
                        SpaceLayout::new(vec![Subsystem::Qubit, Subsystem::Mode(n)])?
                    } else {
                        SpaceLayout::mode(n)?
                    };
                    let mut local = base;
                    local.kind = match seg.kind {
                        SegmentKind::Bsb { .. } => SegmentKind::Bsb { mode: 0 },
                        SegmentKind::Rsb2 { .. } => SegmentKind::Rsb2 { mode: 0 },
                        SegmentKind::Sdf { .. } => SegmentKind::Sdf { mode: 0 },
                        _ => SegmentKind::Drive { mode: 0 },
                    };
                    let a = lowering(&local_layout, 0)?;
                    let h = segment_hamiltonian(&local, &local_layout)?.add(
                        &a.dagger()
                            .matmul(&a)?
                            .scale(C64::new(sched.detuning(m), 0.0)),
                    )?;
                    let u = unitary(&h, t);
                    let locals: Vec<CMat> = if seg.kind.couples_qubit() {
                        (0..2)
                            .map(|s| u.slice(ndarray::s![s * n..(s + 1) * n, 0..n]).to_owned())
                            .collect()
                    } else {
                        vec![u]
                    };
                    let f = free_rotation(sched.detuning(other), t, dims[other]);
                    locals
                        .iter()
                        .map(|kl| {
                            if m == 0 {
                                linalg::kron(kl, &f)
                            } else {
                                linalg::kron(&f, kl)
                            }
                        })
                        .collect()
                }
                None => {
                    let layout = SpaceLayout::qubit_two_modes(n1, n2)?;
                    let h = segment_hamiltonian(&base, &layout)?
                        .add(&detuning_hamiltonian(sched, &layout)?)?;
                    let u = unitary(&h, t);
                    let d = n1 * n2;
                    (0..2)
                        .map(|s| u.slice(ndarray::s![s * d..(s + 1) * d, 0..d]).to_owned())
                        .collect()
                }
            };
            let kraus: Vec<Csr> = full
                .iter()
                .map(|k| Csr::from_dense(&drop_tiny(k)))
                .collect();
            let adjoints = kraus.iter().map(|k| k.adjoint()).collect();
            let phased = match seg.kind {
                SegmentKind::Bsb { mode } => Some((mode, 1.0)),
                SegmentKind::Rsb2 { mode } => Some((mode, -0.5)),
                _ => None,
            };
            steps.push(Step {
                kraus,
                adjoints,
                phased,
                is_sync: seg.kind == SegmentKind::Sync,
            });
        }
        let n_random = segs.iter().filter(|s| randomized(s)).count();
        Ok(ReducedCycle {
            n1,
            n2,
            steps,
            n_random,
        })
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::two_modes(self.n1, self.n2)
    }

    fn mode_number(&self, mode: usize, idx: usize) -> f64 {
        if mode == 0 {
            (idx / self.n2) as f64
        } else {
            (idx % self.n2) as f64
        }
    }

    fn with_phase(&self, k: &Csr, mode: usize, angle: f64) -> Csr {
        let mut out = k.clone();
        for i in 0..k.nrows {
            for p in k.indptr[i]..k.indptr[i + 1] {
                let j = k.indices[p];
                let dn = self.mode_number(mode, i) - self.mode_number(mode, j);
                out.values[p] *= C64::from_polar(1.0, angle * dn);
            }
        }
        out
    }

    /// Applies one cycle. `cycle` selects the phase stream; SYNC steps are skipped unless
    /// `with_sync`.
    pub fn apply(&self, rho: &CMat, seed: u64, cycle: u64, with_sync: bool) -> CMat {
        let phases = cycle_phases(seed, cycle, self.n_random);
        let mut next_phase = phases.into_iter();
        let mut cur = rho.clone();
        for step in &self.steps {
            let angle = step
                .phased
                .map(|(m, theta)| (m, theta * next_phase.next().unwrap_or(0.0)));
            if step.is_sync && !with_sync {
                continue;
            }
            let mut out = Array2::zeros(cur.dim());
            for (k, kd) in step.kraus.iter().zip(&step.adjoints) {
                let x = match angle {
                    Some((m, a)) => {
                        let kp = self.with_phase(k, m, a);
                        let kpd = kp.adjoint();
                        kpd.mul_right(&kp.mul_left(&cur))
                    }
                    None => kd.mul_right(&k.mul_left(&cur)),
                };
                out += &x;
            }
            cur = out;
        }
        cur
    }

    /// Kraus operators of every step as dense matrices (for inspection and tests).
    pub fn kraus_dense(&self) -> Vec<Vec<CMat>> {
        self.steps
            .iter()
            .map(|s| s.kraus.iter().map(dense_from_csr).collect())
            .collect()
    }
}

/// `n_uncoupled` cycles without SYNC, then `n_coupled` full cycles.
///
/// A state on qubit ⊗ M₁ ⊗ M₂ runs on the full engine; a state on M₁ ⊗ M₂ runs on the
/// reset-reduced engine. Cycle k uses phase stream k.
pub fn run_protocol(
    initial: &QuantumState,
    sched: &PulseSchedule,
    n_uncoupled: usize,
    n_coupled: usize,
    seed: u64,
) -> Result<QuantumState> {
    let slots = initial.layout.slots();
    match slots {
        [Subsystem::Qubit, Subsystem::Mode(_), Subsystem::Mode(_)] => {
            let mut cur = initial.clone();
            for c in 0..n_uncoupled + n_coupled {
                cur = run_cycle_full(&cur, sched, seed, c as u64, c >= n_uncoupled)?;
            }
            Ok(cur)
        }
        [Subsystem::Mode(n1), Subsystem::Mode(n2)] => {
            let rc = ReducedCycle::new(sched, *n1, *n2)?;
            let mut rho = initial.rho.clone();
            for c in 0..n_uncoupled + n_coupled {
                rho = rc.apply(&rho, seed, c as u64, c >= n_uncoupled);
            }
            QuantumState::from_parts(initial.layout.clone(), rho)
        }
        _ => Err(Error::Layout(
            "protocol needs qubit ⊗ M₁ ⊗ M₂ or M₁ ⊗ M₂".into(),
        )),
    }
}

/// Fixed point of the reduced cycle map, iterated from `start`.
///
/// Stops when the per-cycle trace-distance change, extrapolated geometrically, bounds the
/// remaining distance below `tol`.
pub fn stroboscopic_steady_state(
    rc: &ReducedCycle,
    start: &QuantumState,
    seed: u64,
    tol: f64,
    max_cycles: usize,
) -> Result<(QuantumState, usize)> {
    let layout = rc.layout()?;
    let mut cur = QuantumState::from_parts(layout.clone(), start.rho.clone())?;
    let mut prev_change = f64::INFINITY;
    for c in 0..max_cycles {
        let next =
            QuantumState::from_parts(layout.clone(), rc.apply(&cur.rho, seed, c as u64, true))?;
        let change = lindblad::trace_distance(&cur, &next)?;
        cur = next;
        let ratio = change / prev_change;
        if change == 0.0 || (ratio < 1.0 && change * ratio / (1.0 - ratio) < tol && change < tol) {
            return Ok((cur, c + 1));
        }
        prev_change = change;
    }
    Err(Error::NonConvergence {
        windows: max_cycles,
        last_distance: prev_change,
    })
}

/// Effective rates implied by one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub period: f64,
    pub kappa_plus: [f64; 2],
    pub kappa_minus: [f64; 2],
    pub coupling: f64,
    /// Mode-averaged rates, SYNC phase shifted by π, detunings and the mode-1 drive.
    pub params: EffectiveParams,
}

/// κ₊ = Ω²η²t²/4T, κ₋ = Ω²η⁴t²/16T, V = Ω²η₁²t²/4T, summed over segments.
///
/// The SYNC jump operator is a₁ + e^{iφ}a₂, so the effective collective dissipator
/// 𝒟[a₁ − e^{iφ'}a₂] has φ' = φ + π.
pub fn effective_rates(sched: &PulseSchedule) -> Result<RateReport> {
    sched.validate()?;
    let t_cycle = sched.cycle_period();
    if t_cycle <= 0.0 {
        return Err(Error::IncompleteSchedule("cycle period is zero".into()));
    }
    let mut kp = [0.0; 2];
    let mut km = [0.0; 2];
    let mut seen_bsb = [false; 2];
    let mut seen_rsb = [false; 2];
    let mut v = 0.0;
    let mut phi = None;
    let mut drive = C64::new(0.0, 0.0);
    for s in &sched.segments {
        let x = s.rabi * s.duration;
        match s.kind {
            SegmentKind::Bsb { mode } => {
                kp[mode] += (x * s.eta).powi(2) / (4.0 * t_cycle);
                seen_bsb[mode] = true;
            }
            SegmentKind::Rsb2 { mode } => {
                km[mode] += (x * s.eta * s.eta).powi(2) / (16.0 * t_cycle);
                seen_rsb[mode] = true;
            }
            SegmentKind::Sync => {
                v += (x * s.eta).powi(2) / (4.0 * t_cycle);
                let p = (s.phase + PI).rem_euclid(TWO_PI);
                match phi {
                    Some(q) if q != p => {
                        return Err(Error::InvalidArgument(
                            "SYNC segments with different phases".into(),
                        ))
                    }
                    _ => phi = Some(p),
                }
            }
            SegmentKind::Drive { mode } => {
                if mode != 0 {
                    return Err(Error::InvalidKind(
                        "effective model drives mode 1 only".into(),
                    ));
                }
                drive += C64::from_polar(x / t_cycle, s.phase);
            }
            SegmentKind::Sdf { .. } | SegmentKind::Reset => {}
        }
    }
    for m in 0..2 {
        if !(seen_bsb[m] && seen_rsb[m]) {
            return Err(Error::IncompleteSchedule(format!(
                "mode {m} lacks a BSB or 2RSB segment"
            )));
        }
    }
    let params = EffectiveParams {
        kappa_plus: 0.5 * (kp[0] + kp[1]),
        kappa_minus: 0.5 * (km[0] + km[1]),
        coupling: v,
        phi: phi.unwrap_or(0.0),
        delta1: sched.delta1,
        delta2: sched.delta2,
        drive_amp: drive.norm(),
        drive_phase: if drive.norm() > 0.0 { drive.arg() } else { 0.0 },
    };
    Ok(RateReport {
        period: t_cycle,
        kappa_plus: kp,
        kappa_minus: km,
        coupling: v,
        params,
    })
}

/// Lamb-Dicke parameters and carrier Rabi frequencies (rad/s) available to a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidebandHardware {
    pub eta: [f64; 2],
    pub omega_bsb: f64,
    pub omega_rsb2: f64,
    pub omega_sync: f64,
}

impl Default for SidebandHardware {
    fn default() -> Self {
        SidebandHardware {
            eta: [0.094, 0.072],
            omega_bsb: TWO_PI * 0.12e6,
            omega_rsb2: TWO_PI * 0.22e6,
            omega_sync: TWO_PI * 0.048e6,
        }
    }
}

/// Schedule whose rate formulas hit `params` exactly: with a_k = √(rate·c_k)/(Ω_k·g_k) the
/// durations are t_k = a_k·√T and T = (Σa_k)².
pub fn designed_schedule(params: &EffectiveParams, hw: &SidebandHardware) -> Result<PulseSchedule> {
    params.validate()?;
    if params.drive_amp > 0.0 {
        return Err(Error::InvalidArgument(
            "designed schedules carry no drive".into(),
        ));
    }
    if params.kappa_minus <= 0.0 {
        return Err(Error::InvalidArgument(
            "designed schedule needs kappa_minus > 0".into(),
        ));
    }
    let [e1, e2] = hw.eta;
    let a_bsb = |eta: f64| (4.0 * params.kappa_plus).sqrt() / (hw.omega_bsb * eta);
    let a_rsb = |eta: f64| (16.0 * params.kappa_minus).sqrt() / (hw.omega_rsb2 * eta * eta);
    let a_sync = (4.0 * params.coupling).sqrt() / (hw.omega_sync * e1);
    let a = [a_bsb(e1), a_rsb(e1), a_bsb(e2), a_rsb(e2), a_sync];
    let root_t: f64 = a.iter().sum();
    let t = |x: f64| x * root_t;
    let mut segments = vec![
        PulseSegment::bsb(0, hw.omega_bsb, e1, t(a[0])),
        PulseSegment::reset(),
        PulseSegment::rsb2(0, hw.omega_rsb2, e1, t(a[1])),
        PulseSegment::reset(),
        PulseSegment::bsb(1, hw.omega_bsb, e2, t(a[2])),
        PulseSegment::reset(),
        PulseSegment::rsb2(1, hw.omega_rsb2, e2, t(a[3])),
        PulseSegment::reset(),
    ];
    if params.coupling > 0.0 {
        let phase = (params.phi - PI).rem_euclid(TWO_PI);
        segments.push(PulseSegment::sync(hw.omega_sync, e1, e2, phase, t(a[4])));
        segments.push(PulseSegment::reset());
    }
    Ok(PulseSchedule {
        segments,
        delta1: params.delta1,
        delta2: params.delta2,
    })
}

/// The tabulated experimental schedule of either regime, SYNC phase chosen so that the
/// effective collective dissipator has phase `phi`.
pub fn table_schedule(regime: Regime, phi: f64) -> PulseSchedule {
    let us = 1e-6;
    let mhz = TWO_PI * 1e6;
    let (om_bsb, t_bsb, t_rsb, t_sync) = match regime {
        Regime::Classical => (0.12, [17.10, 22.46], [48.77, 84.06], 24.0),
        Regime::Quantum => (0.11, [17.10, 22.45], [97.54, 168.12], 32.0),
    };
    let eta = [0.094, 0.072];
    let mut segments = Vec::new();
    for m in 0..2 {
        segments.push(PulseSegment::bsb(m, om_bsb * mhz, eta[m], t_bsb[m] * us));
        segments.push(PulseSegment::reset());
        segments.push(PulseSegment::rsb2(m, 0.22 * mhz, eta[m], t_rsb[m] * us));
        segments.push(PulseSegment::reset());
    }
    let phase = (phi - PI).rem_euclid(TWO_PI);
    segments.push(PulseSegment::sync(
        0.048 * mhz,
        eta[0],
        eta[1],
        phase,
        t_sync * us,
    ));
    segments.push(PulseSegment::reset());
    PulseSchedule {
        segments,
        delta1: 0.0,
        delta2: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub factor: f64,
    pub period: f64,
    /// Trace distance between the stroboscopic fixed point and the effective steady state.
    pub distance: f64,
    /// Same after (15 + 10)·factor cycles from vacuum.
    pub transient_distance: f64,
    pub cycles_to_fixed_point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub monotone: bool,
}

/// Distance between stroboscopic and effective steady states under segment refinement.
pub fn stroboscopic_convergence(
    sched: &PulseSchedule,
    factors: &[f64],
    cutoffs: (usize, usize),
    seed: u64,
) -> Result<ConvergenceReport> {
    let (n1, n2) = cutoffs;
    let layout = SpaceLayout::two_modes(n1, n2)?;
    let mut rows = Vec::new();
    for &f in factors {
        let s = sched.refined(f)?;
        let rates = effective_rates(&s)?;
        let eff = lindblad::steady_state_direct(&lindblad::vdp_generator(&rates.params, &layout)?)?;
        let rc = ReducedCycle::new(&s, n1, n2)?;
        let (fixed, cycles) = stroboscopic_steady_state(&rc, &eff, seed, 1e-9, 200_000)?;
        let scale = f.round().max(1.0) as usize;
        let mut rho = lindblad::vacuum(&layout)?.rho;
        for c in 0..25 * scale {
            rho = rc.apply(&rho, seed, c as u64, c >= 15 * scale);
        }
        let transient = QuantumState::from_parts(layout.clone(), rho)?;
        rows.push(ConvergenceRow {
            factor: f,
            period: s.cycle_period(),
            distance: lindblad::trace_distance(&fixed, &eff)?,
            transient_distance: lindblad::trace_distance(&transient, &eff)?,
            cycles_to_fixed_point: cycles,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].distance < w[0].distance);
    Ok(ConvergenceReport { rows, monotone })
}

/// ⟨σ_z⟩ after an SDF pulse applied to `mode_state` ⊗ (qubit prep), the characteristic
/// function readout primitive. With `imaginary`, the qubit is first rotated by π/2 about x.
///
/// The SDF of strength g = ηΩ/2, phase φ_m and duration t displaces by ±β with
/// β = −i g t e^{−iφ_m}; the returned value is Re χ(2β) (or Im χ(2β)).
pub fn sdf_readout(mode_state: &QuantumState, seg: &PulseSegment, imaginary: bool) -> Result<f64> {
    let n = match mode_state.layout.slots() {
        [Subsystem::Mode(n)] => *n,
        _ => {
            return Err(Error::Layout(
                "SDF readout takes a single-mode state".into(),
            ))
        }
    };
    let SegmentKind::Sdf { .. } = seg.kind else {
        return Err(Error::InvalidKind("readout needs an SDF segment".into()));
    };
    let layout = SpaceLayout::new(vec![Subsystem::Qubit, Subsystem::Mode(n)])?;
    let mut local = *seg;
    local.kind = SegmentKind::Sdf { mode: 0 };
    let h = segment_hamiltonian(&local, &layout)?;
    let u = unitary(&h, seg.duration);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = if imaginary {
        ndarray::arr1(&[C64::new(s, 0.0), C64::new(0.0, -s)])
    } else {
        ndarray::arr1(&[ONE, ZERO])
    };
    let qrho = Array2::from_shape_fn((2, 2), |(i, j)| q[i] * q[j].conj());
    let rho = conjugate(&u, &linalg::kron(&qrho, &mode_state.rho));
    let sz = embed(&hilbert::sigma_z(), 0, &layout)?;
    Ok(linalg::trace(&linalg::matmul(&sz.entries, &rho)).re)
}

/// SDF segment whose readout samples χ at `b` (= 2β).
pub fn sdf_for_argument(b: C64, rabi: f64, eta: f64) -> Result<PulseSegment> {
    let g = 0.5 * eta * rabi;
    if g <= 0.0 {
        return Err(Error::InvalidArgument("SDF strength must be > 0".into()));
    }
    let beta = 0.5 * b;
    // β = −i g t e^{−iφ}  ⇒  e^{−iφ} = iβ/|β|
    let phase = if beta.norm() > 0.0 {
        -(I * beta).arg()
    } else {
        0.0
    };
    Ok(PulseSegment::sdf(0, rabi, eta, phase, beta.norm() / g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{canonical_state, StateKind};
    use approx::assert_abs_diff_eq;

    fn small_schedule(phi: f64) -> PulseSchedule {
        let mut p = EffectiveParams::classical();
        p.phi = phi;
        p.delta2 = TWO_PI * 40.0;
        designed_schedule(&p, &SidebandHardware::default()).unwrap()
    }

    #[test]
    fn zero_rabi_bsb_is_zero() {
        let l = SpaceLayout::qubit_two_modes(4, 4).unwrap();
        let h = segment_hamiltonian(&PulseSegment::bsb(0, 0.0, 0.1, 1e-6), &l).unwrap();
        assert_eq!(linalg::max_abs(&h.entries), 0.0);
    }

    #[test]
    fn every_kind_is_hermitian() {
        let l = SpaceLayout::qubit_two_modes(4, 3).unwrap();
        let segs = [
            PulseSegment {
                phase: 0.7,
                ..PulseSegment::bsb(0, 1e5, 0.09, 1e-6)
            },
            PulseSegment {
                phase: 2.1,
                ..PulseSegment::rsb2(1, 1e5, 0.07, 1e-6)
            },
            PulseSegment::sync(1e5, 0.09, 0.07, 1.3, 1e-6),
            PulseSegment::sdf(1, 1e5, 0.09, 0.4, 1e-6),
            PulseSegment::drive(0, 3e2, 0.9, 1e-6),
        ];
        for s in segs {
            let h = segment_hamiltonian(&s, &l).unwrap();
            assert!(h.hermiticity_error() < 1e-12, "{:?}", s.kind);
            let u = unitary(&h, 3e-6);
            let e = linalg::matmul(&linalg::dagger(&u), &u) - linalg::identity(u.nrows());
            assert!(linalg::max_abs(&e) < 1e-10);
        }
        assert!(matches!(
            segment_hamiltonian(&PulseSegment::reset(), &l),
            Err(Error::InvalidKind(_))
        ));
    }

    #[test]
    fn sync_dark_state() {
        let l = SpaceLayout::qubit_two_modes(3, 3).unwrap();
        let h = segment_hamiltonian(&PulseSegment::sync(1e5, 0.09, 0.07, 0.0, 1e-6), &l).unwrap();
        // |↓⟩ ⊗ (|01⟩ − |10⟩)/√2 in index q·9 + n1·3 + n2
        let mut psi = ndarray::Array1::<C64>::zeros(18);
        psi[1] = C64::new(1.0, 0.0);
        psi[3] = C64::new(-1.0, 0.0);
        let out = h.entries.dot(&psi);
        assert!(out.iter().all(|z| z.norm() < 1e-12));
        // the symmetric combination is bright
        psi[3] = C64::new(1.0, 0.0);
        assert!(h.entries.dot(&psi).iter().any(|z| z.norm() > 1.0));
    }

    #[test]
    fn reset_examples() {
        let l = SpaceLayout::qubit_two_modes(3, 3).unwrap();
        let modes = canonical_state(StateKind::Fock(1), 3)
            .unwrap()
            .tensor(&canonical_state(StateKind::Vacuum, 3).unwrap())
            .unwrap();
        let mut up = Array2::zeros((2, 2));
        up[[1, 1]] = ONE;
        let s = QuantumState::from_parts(l.clone(), linalg::kron(&up, &modes.rho)).unwrap();
        let r = qubit_reset(&s).unwrap();
        assert_abs_diff_eq!(r.rho[[3, 3]].re, 1.0, epsilon = 1e-15);
        let rr = qubit_reset(&r).unwrap();
        assert_eq!(rr.rho, r.rho);
        assert!(qubit_reset(&modes).is_err());
    }

    #[test]
    fn single_bsb_cycle_matches_rabi_formula() {
        let (om, eta, tau) = (TWO_PI * 0.12e6, 0.094, 4e-6);
        let sched = PulseSchedule {
            segments: vec![PulseSegment::bsb(0, om, eta, tau), PulseSegment::reset()],
            delta1: 0.0,
            delta2: 0.0,
        };
        let l = SpaceLayout::qubit_two_modes(5, 3).unwrap();
        let vac = lindblad::vacuum(&l).unwrap();
        let out = run_cycle(&vac, &sched, 1, 0).unwrap();
        let n = out.mean_number(1).unwrap();
        assert_abs_diff_eq!(n, (om * eta * tau / 2.0).sin().powi(2), epsilon = 1e-12);
    }

    #[test]
    fn only_resets_leave_modes_untouched() {
        let sched = PulseSchedule {
            segments: vec![PulseSegment::reset(), PulseSegment::reset()],
            delta1: 0.0,
            delta2: 0.0,
        };
        let l = SpaceLayout::qubit_two_modes(6, 6).unwrap();
        let mut up = Array2::zeros((2, 2));
        up[[1, 1]] = ONE;
        let m = canonical_state(StateKind::Coherent(C64::new(0.2, 0.1)), 6).unwrap();
        let modes = m.tensor(&m).unwrap();
        let s = QuantumState::from_parts(l, linalg::kron(&up, &modes.rho)).unwrap();
        let out = run_cycle(&s, &sched, 0, 0).unwrap();
        let back = partial_trace(&out, &[1, 2]).unwrap();
        assert!(linalg::max_abs(&(back.rho - &modes.rho)) < 1e-15);
    }

    #[test]
    fn reduced_engine_matches_full_engine() {
        let sched = small_schedule(PI / 2.0);
        let (n1, n2) = (4, 4);
        let ful = SpaceLayout::qubit_two_modes(n1, n2).unwrap();
        let red = SpaceLayout::two_modes(n1, n2).unwrap();
        let a = run_protocol(&lindblad::vacuum(&ful).unwrap(), &sched, 2, 2, 9).unwrap();
        let b = run_protocol(&lindblad::vacuum(&red).unwrap(), &sched, 2, 2, 9).unwrap();
        let a_modes = partial_trace(&a, &[1, 2]).unwrap();
        assert!(linalg::max_abs(&(&a_modes.rho - &b.rho)) < 1e-10);
        a.validate().unwrap();
        b.validate().unwrap();
    }

    #[test]
    fn random_phases_do_not_change_reduced_map() {
        let sched = small_schedule(0.3);
        let rc = ReducedCycle::new(&sched, 5, 5).unwrap();
        let m = canonical_state(StateKind::Coherent(C64::new(0.3, -0.2)), 5).unwrap();
        let rho = m.tensor(&m).unwrap().rho;
        let a = rc.apply(&rho, 1, 0, true);
        let b = rc.apply(&rho, 2, 7, true);
        assert!(linalg::max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn protocol_is_reproducible() {
        let sched = small_schedule(0.0);
        let l = SpaceLayout::qubit_two_modes(3, 3).unwrap();
        let a = run_protocol(&lindblad::vacuum(&l).unwrap(), &sched, 1, 1, 5).unwrap();
        let b = run_protocol(&lindblad::vacuum(&l).unwrap(), &sched, 1, 1, 5).unwrap();
        assert_eq!(a.rho, b.rho);
        assert_eq!(cycle_phases(5, 3, 4), cycle_phases(5, 3, 4));
        assert_ne!(cycle_phases(5, 3, 4), cycle_phases(5, 4, 4));
    }

    #[test]
    fn designed_schedule_hits_target_rates() {
        let mut p = EffectiveParams::quantum();
        p.phi = 1.1;
        p.delta2 = 300.0;
        let s = designed_schedule(&p, &SidebandHardware::default()).unwrap();
        let r = effective_rates(&s).unwrap();
        for m in 0..2 {
            assert_abs_diff_eq!(r.kappa_plus[m], p.kappa_plus, epsilon = 1e-9 * p.kappa_plus);
            assert_abs_diff_eq!(
                r.kappa_minus[m],
                p.kappa_minus,
                epsilon = 1e-9 * p.kappa_minus
            );
        }
        assert_abs_diff_eq!(r.params.coupling, p.coupling, epsilon = 1e-9 * p.coupling);
        assert_abs_diff_eq!(r.params.phi, 1.1, epsilon = 1e-12);
        assert_eq!(r.params.delta2, 300.0);
        let f = effective_rates(&s.refined(4.0).unwrap()).unwrap();
        assert_abs_diff_eq!(
            f.params.kappa_plus,
            p.kappa_plus,
            epsilon = 1e-9 * p.kappa_plus
        );
        assert_abs_diff_eq!(f.period, r.period / 4.0, epsilon = 1e-18);
    }

    #[test]
    fn missing_damping_is_incomplete() {
        let s = PulseSchedule {
            segments: vec![PulseSegment::bsb(0, 1e5, 0.1, 1e-6), PulseSegment::reset()],
            delta1: 0.0,
            delta2: 0.0,
        };
        assert!(matches!(
            effective_rates(&s),
            Err(Error::IncompleteSchedule(_))
        ));
    }

    #[test]
    fn reduced_engine_rejects_missing_reset() {
        let s = PulseSchedule {
            segments: vec![
                PulseSegment::bsb(0, 1e5, 0.1, 1e-6),
                PulseSegment::rsb2(0, 1e5, 0.1, 1e-6),
            ],
            delta1: 0.0,
            delta2: 0.0,
        };
        assert!(ReducedCycle::new(&s, 3, 3).is_err());
    }

    #[test]
    fn without_sync_drops_sync_and_its_reset() {
        let s = small_schedule(0.0);
        let w = s.without_sync();
        assert_eq!(w.segments.len(), s.segments.len() - 2);
        assert!(w.segments.iter().all(|x| x.kind != SegmentKind::Sync));
    }

    #[test]
    fn sdf_readout_samples_characteristic_function() {
        let n = 14;
        let st = canonical_state(StateKind::Coherent(C64::new(0.4, 0.3)), n).unwrap();
        for b in [C64::new(0.5, 0.0), C64::new(-0.3, 0.7), C64::new(0.0, -0.9)] {
            let seg = sdf_for_argument(b, TWO_PI * 0.1e6, 0.09).unwrap();
            let d = hilbert::displacement(b, n).unwrap().value;
            let chi = hilbert::expectation(&st, &d).unwrap();
            assert_abs_diff_eq!(
                sdf_readout(&st, &seg, false).unwrap(),
                chi.re,
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                sdf_readout(&st, &seg, true).unwrap(),
                chi.im,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn sdf_on_vacuum_then_reset_gives_cat_mixture() {
        let n = 16;
        let seg = sdf_for_argument(C64::new(2.0, 0.0), TWO_PI * 0.1e6, 0.09).unwrap();
        let l = SpaceLayout::new(vec![Subsystem::Qubit, Subsystem::Mode(n)]).unwrap();
        let h = segment_hamiltonian(&seg, &l).unwrap();
        let u = unitary(&h, seg.duration);
        let vac = lindblad::vacuum(&l).unwrap();
        let after =
            qubit_reset(&QuantumState::from_parts(l, conjugate(&u, &vac.rho)).unwrap()).unwrap();
        let mode = partial_trace(&after, &[1]).unwrap();
        // β = −i g t e^{−iφ} = 1 for b = 2
        let cat =
            canonical_state(StateKind::OppositeCoherentMixture(C64::new(1.0, 0.0)), n).unwrap();
        assert!(lindblad::trace_distance(&mode, &cat).unwrap() < 1e-6);
    }

    #[test]
    fn table_schedule_rates() {
        let r = effective_rates(&table_schedule(Regime::Classical, 0.0)).unwrap();
        let khz = |x: f64| x / TWO_PI / 1e3;
        assert_abs_diff_eq!(khz(r.params.kappa_plus), 0.30, epsilon = 5e-3);
        assert!((khz(r.params.kappa_minus) - 0.017).abs() < 0.0017);
        assert!((khz(r.coupling) - 0.1).abs() < 0.01);
        assert_abs_diff_eq!(r.params.phi, 0.0, epsilon = 1e-12);
    }
}
