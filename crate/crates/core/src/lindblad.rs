//! Effective two-oscillator master equation: generators, RK4 evolution and steady states.
//!
//! dρ/dt = −i[H,ρ] + κ₊Σ𝒟[a_i†]ρ + κ₋Σ𝒟[a_i²]ρ + V𝒟[a₁ − a₂e^{iφ}]ρ,
//! H = δ₁a₁†a₁ + δ₂a₂†a₂ + Ω_d(a₁e^{iφ_d} + a₁†e^{−iφ_d}).

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, embed, same_layout, OperatorMatrix, QuantumState, SpaceLayout, Subsystem,
};
use crate::linalg::{self, CMat, Csr, SparseSystem, C64, I, ONE};

/// Parameters of the effective model. Rates and detunings in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveParams {
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    /// Dissipative coupling V.
    pub coupling: f64,
    pub phi: f64,
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub delta2: f64,
    #[serde(default)]
    pub drive_amp: f64,
    #[serde(default)]
    pub drive_phase: f64,
}

const TWO_PI: f64 = 2.0 * PI;

/// Operating regime of the oscillator pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Classical,
    Quantum,
}

impl EffectiveParams {
    pub fn preset(regime: Regime) -> Self {
        match regime {
            Regime::Classical => Self::classical(),
            Regime::Quantum => Self::quantum(),
        }
    }

    /// Near-classical regime: κ₊/2π = 0.12 kHz, κ₋/2π = 0.017 kHz, V₀/2π = 0.1 kHz.
    pub fn classical() -> Self {
        EffectiveParams {
            kappa_plus: TWO_PI * 120.0,
            kappa_minus: TWO_PI * 17.0,
            coupling: TWO_PI * 100.0,
            phi: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            drive_amp: 0.0,
            drive_phase: 0.0,
        }
    }

    /// Quantum regime: κ₊/2π = 0.10 kHz, κ₋/2π = 0.042 kHz, V₀/2π = 0.1 kHz.
    pub fn quantum() -> Self {
        EffectiveParams {
            kappa_plus: TWO_PI * 100.0,
            kappa_minus: TWO_PI * 42.0,
            ..Self::classical()
        }
    }

    /// Uncoupled oscillators with gain κ₊ and κ₋ = ratio·κ₊.
    pub fn single(kappa_plus: f64, ratio: f64) -> Self {
        EffectiveParams {
            kappa_plus,
            kappa_minus: ratio * kappa_plus,
            coupling: 0.0,
            ..Self::classical()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa_plus,
            self.kappa_minus,
            self.coupling,
            self.phi,
            self.delta1,
            self.delta2,
            self.drive_amp,
            self.drive_phase,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite effective parameter".into(),
            ));
        }
        if self.kappa_plus <= 0.0 {
            return Err(Error::InvalidArgument("kappa_plus must be > 0".into()));
        }
        if self.kappa_minus < 0.0 || self.coupling < 0.0 || self.drive_amp < 0.0 {
            return Err(Error::InvalidArgument(
                "kappa_minus, coupling and drive_amp must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Δω = δ₂ − δ₁.
    pub fn detuning(&self) -> f64 {
        self.delta2 - self.delta1
    }

    /// Mean-field limit-cycle amplitude √(κ₊/2κ₋).
    pub fn mean_field_radius(&self) -> f64 {
        (self.kappa_plus / (2.0 * self.kappa_minus)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub rate: f64,
    pub op: OperatorMatrix,
}

/// Hamiltonian plus weighted jump operators on one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub hamiltonian: OperatorMatrix,
    pub dissipators: Vec<Dissipator>,
}

impl GeneratorSpec {
    pub fn new(hamiltonian: OperatorMatrix, dissipators: Vec<Dissipator>) -> Result<Self> {
        for d in &dissipators {
            if !d.rate.is_finite() || d.rate < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "dissipator rate {} < 0",
                    d.rate
                )));
            }
            same_layout(&hamiltonian.layout, &d.op.layout)?;
        }
        Ok(GeneratorSpec {
            hamiltonian,
            dissipators,
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.hamiltonian.layout
    }

    pub fn max_rate(&self) -> f64 {
        self.dissipators.iter().map(|d| d.rate).fold(0.0, f64::max)
    }

    /// Largest |eigenvalue| of H.
    pub fn hamiltonian_scale(&self) -> Result<f64> {
        let e = linalg::eigvalsh(&self.hamiltonian.entries)?;
        Ok(e[0].abs().max(e[e.len() - 1].abs()))
    }

    /// Upper bound on the magnitude of the generator spectrum: the spread of H plus
    /// Σ rate·‖L†L‖.
    pub fn stiffness(&self) -> Result<f64> {
        let e = linalg::eigvalsh(&self.hamiltonian.entries)?;
        let mut s = e[e.len() - 1] - e[0];
        for d in &self.dissipators {
            if d.rate == 0.0 {
                continue;
            }
            let ldl = linalg::matmul(&linalg::dagger(&d.op.entries), &d.op.entries);
            let top = *linalg::eigvalsh(&ldl)?.last().unwrap();
            s += d.rate * top;
        }
        Ok(s)
    }

    /// Largest step accepted by [`evolve`].
    pub fn max_step(&self) -> Result<f64> {
        let accuracy =
            STEP_BOUND / (self.max_rate() + self.hamiltonian_scale()?).max(f64::MIN_POSITIVE);
        let stability = RK4_MARGIN / self.stiffness()?.max(f64::MIN_POSITIVE);
        Ok(accuracy.min(stability))
    }
}

/// step·(max rate + ‖H‖) must not exceed this.
pub const STEP_BOUND: f64 = 0.05;
/// step·stiffness must not exceed this; the RK4 stability boundary lies near 2.8.
pub const RK4_MARGIN: f64 = 2.0;

fn mode_op(op: &OperatorMatrix, slot: usize, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    embed(op, slot, layout)
}

/// Builds the generator of the effective model on a two-mode layout.
pub fn vdp_generator(params: &EffectiveParams, layout: &SpaceLayout) -> Result<GeneratorSpec> {
    params.validate()?;
    let slots = layout.slots();
    let (n1, n2) = match slots {
        [Subsystem::Mode(a), Subsystem::Mode(b)] => (*a, *b),
        _ => {
            return Err(Error::Layout(
                "effective model needs exactly two mode slots and no qubit".into(),
            ))
        }
    };
    let a1 = mode_op(&hilbert::annihilation(n1)?, 0, layout)?;
    let a2 = mode_op(&hilbert::annihilation(n2)?, 1, layout)?;
    let ad1 = a1.dagger();
    let ad2 = a2.dagger();

    let n1op = ad1.matmul(&a1)?;
    let n2op = ad2.matmul(&a2)?;
    let drive = a1
        .scale(C64::from_polar(params.drive_amp, params.drive_phase))
        .add(&ad1.scale(C64::from_polar(params.drive_amp, -params.drive_phase)))?;
    let h = n1op
        .scale(C64::new(params.delta1, 0.0))
        .add(&n2op.scale(C64::new(params.delta2, 0.0)))?
        .add(&drive)?;

    let collective = a1.add(&a2.scale(-C64::from_polar(1.0, params.phi)))?;
    let dissipators = vec![
        Dissipator {
            rate: params.kappa_plus,
            op: ad1,
        },
        Dissipator {
            rate: params.kappa_plus,
            op: ad2,
        },
        Dissipator {
            rate: params.kappa_minus,
            op: a1.matmul(&a1)?,
        },
        Dissipator {
            rate: params.kappa_minus,
            op: a2.matmul(&a2)?,
        },
        Dissipator {
            rate: params.coupling,
            op: collective,
        },
    ];
    GeneratorSpec::new(h, dissipators)
}

/// Single oscillator restriction: gain κ₊, loss κ₋, detuning δ₁ and the mode-1 drive.
pub fn single_vdp_generator(params: &EffectiveParams, cutoff: usize) -> Result<GeneratorSpec> {
    params.validate()?;
    let a = hilbert::annihilation(cutoff)?;
    let ad = a.dagger();
    let h = ad
        .matmul(&a)?
        .scale(C64::new(params.delta1, 0.0))
        .add(&a.scale(C64::from_polar(params.drive_amp, params.drive_phase)))?
        .add(&ad.scale(C64::from_polar(params.drive_amp, -params.drive_phase)))?;
    GeneratorSpec::new(
        h,
        vec![
            Dissipator {
                rate: params.kappa_plus,
                op: ad,
            },
            Dissipator {
                rate: params.kappa_minus,
                op: a.matmul(&a)?,
            },
        ],
    )
}

/// −i[H,ρ] + Σ rate·(LρL† − ½{L†L,ρ}), evaluated densely.
pub fn generator_apply(gen: &GeneratorSpec, state: &QuantumState) -> Result<CMat> {
    same_layout(gen.layout(), &state.layout)?;
    let rho = &state.rho;
    let h = &gen.hamiltonian.entries;
    let mut out = (linalg::matmul(h, rho) - linalg::matmul(rho, h)).mapv(|z| -I * z);
    for d in &gen.dissipators {
        if d.rate == 0.0 {
            continue;
        }
        let l = &d.op.entries;
        let ld = linalg::dagger(l);
        let ldl = linalg::matmul(&ld, l);
        let term = linalg::matmul3(l, rho, &ld)
            - (linalg::matmul(&ldl, rho) + linalg::matmul(rho, &ldl)).mapv(|z| z * 0.5);
        out = out + term.mapv(|z| z * d.rate);
    }
    Ok(out)
}

/// Sparse form of a generator, dρ/dt = −iKρ + iρK† + Σ r LρL† with K = H − (i/2)Σ r L†L.
#[derive(Debug, Clone)]
pub struct CompiledGenerator {
    pub dim: usize,
    k: Csr,
    k_adj: Csr,
    jumps: Vec<(f64, Csr, Csr)>,
}

impl CompiledGenerator {
    pub fn new(gen: &GeneratorSpec) -> Self {
        let mut k = gen.hamiltonian.entries.clone();
        let mut jumps = Vec::new();
        for d in &gen.dissipators {
            if d.rate == 0.0 {
                continue;
            }
            let l = &d.op.entries;
            let ldl = linalg::matmul(&linalg::dagger(l), l);
            k = k - ldl.mapv(|z| z * (0.5 * d.rate) * I);
            let lc = Csr::from_dense(l);
            let lac = lc.adjoint();
            jumps.push((d.rate, lc, lac));
        }
        let kc = Csr::from_dense(&k);
        let k_adj = kc.adjoint();
        CompiledGenerator {
            dim: k.nrows(),
            k: kc,
            k_adj,
            jumps,
        }
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = Array2::zeros(rho.raw_dim());
        self.k.mul_left_acc(rho, -I, &mut out);
        self.k_adj.mul_right_acc(rho, I, &mut out);
        for (rate, l, ld) in &self.jumps {
            let lr = l.mul_left(rho);
            ld.mul_right_acc(&lr, C64::new(*rate, 0.0), &mut out);
        }
        out
    }

    fn rk4_step(&self, rho: &CMat, h: f64) -> CMat {
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &(&k1 * (h / 2.0))));
        let k3 = self.apply(&(rho + &(&k2 * (h / 2.0))));
        let k4 = self.apply(&(rho + &(&k3 * h)));
        rho + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
    }

    /// Sparse Liouvillian entries on vectorized indices (row-major vec(ρ)).
    fn superoperator_entries(&self) -> Vec<(usize, usize, C64)> {
        let d = self.dim;
        let mut e = Vec::new();
        for i in 0..d {
            for (k, v) in self.k.row(i) {
                let val = -I * v;
                for l in 0..d {
                    e.push((i * d + l, k * d + l, val));
                }
            }
        }
        for j in 0..d {
            for (l, v) in self.k.row(j) {
                let val = I * v.conj();
                for k in 0..d {
                    e.push((k * d + j, k * d + l, val));
                }
            }
        }
        for (rate, l, _) in &self.jumps {
            for i in 0..d {
                for (k, lik) in l.row(i) {
                    for j in 0..d {
                        for (ll, ljl) in l.row(j) {
                            e.push((i * d + j, k * d + ll, lik * ljl.conj() * *rate));
                        }
                    }
                }
            }
        }
        e
    }
}

/// Classic fixed-step RK4 propagation.
///
/// The step must satisfy step·(max rate + ‖H‖) ≤ 0.05 and step·stiffness ≤ 2. The final
/// trace is asserted against 1 and never renormalized.
pub fn evolve(
    state: &QuantumState,
    gen: &GeneratorSpec,
    duration: f64,
    step: f64,
) -> Result<QuantumState> {
    evolve_observed(state, gen, duration, step, |_, _| {})
}

/// [`evolve`] with a callback receiving (t, ρ(t)) after every step.
pub fn evolve_observed<F: FnMut(f64, &CMat)>(
    state: &QuantumState,
    gen: &GeneratorSpec,
    duration: f64,
    step: f64,
    mut observe: F,
) -> Result<QuantumState> {
    same_layout(gen.layout(), &state.layout)?;
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidStep(format!("step {step} must be > 0")));
    }
    if duration < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "negative duration {duration}"
        )));
    }
    if duration == 0.0 {
        return Ok(state.clone());
    }
    let max = gen.max_step()?;
    if step > max * (1.0 + 1e-12) {
        return Err(Error::InvalidStep(format!(
            "step {step:.3e} s exceeds the stability/accuracy bound {max:.3e} s"
        )));
    }
    let compiled = CompiledGenerator::new(gen);
    let n = (duration / step).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let mut rho = state.rho.clone();
    for s in 0..n {
        rho = compiled.rk4_step(&rho, h);
        observe((s + 1) as f64 * h, &rho);
    }
    finish(state, rho, step)
}

fn finish(input: &QuantumState, rho: CMat, step: f64) -> Result<QuantumState> {
    let tr = linalg::trace(&rho);
    let bad = rho.iter().any(|z| !z.is_finite()) || linalg::max_abs(&rho) > 1.0 + 1e-6;
    let drift = if bad {
        f64::INFINITY
    } else {
        (tr - ONE).norm()
    };
    if drift > 1e-6 {
        return Err(Error::IntegratorAccuracy {
            drift,
            suggested_step: step / 2.0,
        });
    }
    QuantumState::from_parts(input.layout.clone(), rho)
}

/// ½‖a − b‖₁.
pub fn trace_distance(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    same_layout(&a.layout, &b.layout)?;
    let diff = &a.rho - &b.rho;
    Ok(0.5
        * linalg::eigvalsh(&diff)?
            .iter()
            .map(|x| x.abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub tol: f64,
    /// Window length; 5/κ₊ for the effective model.
    pub window: f64,
    /// Integrator step; `None` picks the largest admissible step.
    pub step: Option<f64>,
    pub max_windows: usize,
}

impl SteadyOptions {
    pub fn for_params(params: &EffectiveParams) -> Self {
        SteadyOptions {
            tol: 1e-6,
            window: 5.0 / params.kappa_plus,
            step: None,
            max_windows: 200,
        }
    }
}

/// Evolves window by window until successive windows are within `tol` in trace distance.
pub fn steady_state(
    gen: &GeneratorSpec,
    initial: &QuantumState,
    opts: &SteadyOptions,
) -> Result<QuantumState> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    let step = match opts.step {
        Some(s) => s,
        None => gen.max_step()?,
    };
    let mut cur = initial.clone();
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_windows {
        let next = evolve(&cur, gen, opts.window, step)?;
        last = trace_distance(&cur, &next)?;
        cur = next;
        if last < opts.tol {
            return Ok(cur);
        }
    }
    Err(Error::NonConvergence {
        windows: opts.max_windows,
        last_distance: last,
    })
}

/// Steady state as the trace-one null vector of the Liouvillian.
///
/// The sparse Liouvillian is split into connected blocks; only blocks that touch
/// populations can carry the steady state (with a U(1)-symmetric generator this is the
/// zero-coherence-order block). Since L(ρ†) = L(ρ)†, the block is solved for a Hermitian ρ
/// as a real system over (ρ_kk, Re ρ_kl, Im ρ_kl), k < l. One population equation is
/// replaced by the trace condition and the system is solved by sparse LU.
pub fn steady_state_direct(gen: &GeneratorSpec) -> Result<QuantumState> {
    let compiled = CompiledGenerator::new(gen);
    let d = compiled.dim;
    let entries = compiled.superoperator_entries();

    let mut uf = UnionFind::new(d * d);
    for &(r, c, _) in &entries {
        uf.union(r, c);
    }
    let mut keep_root = vec![false; d * d];
    for k in 0..d {
        keep_root[uf.find(k * d + k)] = true;
    }
    // real unknown for pair (p, q): p == q population, p < q real part, p > q imaginary part of ρ_qp
    let mut index = vec![usize::MAX; d * d];
    let mut kept = Vec::new();
    for v in 0..d * d {
        if keep_root[uf.find(v)] {
            index[v] = kept.len();
            kept.push(v);
        }
    }
    let n = kept.len();
    let trace_row = index[0];
    let mut sys = SparseSystem::<f64>::new(n);
    for (r, c, v) in entries {
        let (i, j) = (r / d, r % d);
        if i > j || index[r] == usize::MAX || index[r] == trace_row {
            continue;
        }
        let (k, l) = (c / d, c % d);
        let parts = match k.cmp(&l) {
            std::cmp::Ordering::Equal => [(index[c], ONE), (usize::MAX, ONE)],
            std::cmp::Ordering::Less => [(index[c], ONE), (index[l * d + k], I)],
            std::cmp::Ordering::Greater => [(index[l * d + k], ONE), (index[c], -I)],
        };
        for (u, coef) in parts {
            if u == usize::MAX {
                continue;
            }
            let w = v * coef;
            sys.push(index[r], u, w.re);
            if i < j {
                sys.push(index[j * d + i], u, w.im);
            }
        }
    }
    for k in 0..d {
        sys.push(trace_row, index[k * d + k], 1.0);
    }
    let mut b = Array1::zeros(n);
    b[trace_row] = 1.0;
    let x = sys.solve(&b)?;

    let mut rho = Array2::<C64>::zeros((d, d));
    for &v in &kept {
        let (k, l) = (v / d, v % d);
        match k.cmp(&l) {
            std::cmp::Ordering::Equal => rho[[k, k]] = C64::new(x[index[v]], 0.0),
            std::cmp::Ordering::Less => {
                let z = C64::new(x[index[v]], x[index[l * d + k]]);
                rho[[k, l]] = z;
                rho[[l, k]] = z.conj();
            }
            std::cmp::Ordering::Greater => {}
        }
    }
    QuantumState::from_parts(gen.layout().clone(), rho)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Vacuum on every slot of a layout.
pub fn vacuum(layout: &SpaceLayout) -> Result<QuantumState> {
    let d = layout.total_dim();
    let mut rho = Array2::zeros((d, d));
    rho[[0, 0]] = ONE;
    QuantumState::from_parts(layout.clone(), rho)
}

/// Residual ‖L ρ‖_max of a candidate steady state.
pub fn stationarity_residual(gen: &GeneratorSpec, state: &QuantumState) -> Result<f64> {
    let r = CompiledGenerator::new(gen).apply(&state.rho);
    Ok(linalg::max_abs(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{canonical_state, StateKind};
    use approx::assert_abs_diff_eq;

    fn random_state(layout: &SpaceLayout, seed: u64) -> QuantumState {
        let n = layout.total_dim();
        let mut x = seed.wrapping_mul(2654435761).wrapping_add(7);
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let g = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        let r = linalg::matmul(&g, &linalg::dagger(&g));
        let t = linalg::trace(&r);
        QuantumState::from_parts(layout.clone(), r.mapv(|z| z / t)).unwrap()
    }

    /// Null vector of the classical rate equations for the single vdP populations.
    fn rate_equation_oracle(kp: f64, km: f64, n: usize) -> Vec<f64> {
        let mut m = Array2::<C64>::zeros((n, n));
        for k in 0..n {
            let kf = k as f64;
            if k + 1 < n {
                m[[k + 1, k]] += C64::new(kp * (kf + 1.0), 0.0);
                m[[k, k]] -= C64::new(kp * (kf + 1.0), 0.0);
            }
            if k >= 2 {
                m[[k - 2, k]] += C64::new(km * kf * (kf - 1.0), 0.0);
                m[[k, k]] -= C64::new(km * kf * (kf - 1.0), 0.0);
            }
        }
        for c in 0..n {
            m[[0, c]] = ONE;
        }
        let mut b = Array2::<C64>::zeros((n, 1));
        b[[0, 0]] = ONE;
        let x = linalg::solve(&m, &b);
        (0..n).map(|i| x[[i, 0]].re).collect()
    }

    #[test]
    fn table_i_generator_has_five_dissipators() {
        let p = EffectiveParams::classical();
        let g = vdp_generator(&p, &SpaceLayout::two_modes(4, 4).unwrap()).unwrap();
        let rates: Vec<f64> = g.dissipators.iter().map(|d| d.rate).collect();
        assert_eq!(
            rates,
            vec![
                p.kappa_plus,
                p.kappa_plus,
                p.kappa_minus,
                p.kappa_minus,
                p.coupling
            ]
        );
        assert!(vdp_generator(&p, &SpaceLayout::mode(4).unwrap()).is_err());
        assert!(vdp_generator(&p, &SpaceLayout::qubit_two_modes(3, 3).unwrap()).is_err());
    }

    #[test]
    fn zero_generator_gives_zero() {
        let layout = SpaceLayout::mode(4).unwrap();
        let g = GeneratorSpec::new(OperatorMatrix::zeros(&layout), vec![]).unwrap();
        let s = canonical_state(StateKind::Fock(2), 4).unwrap();
        assert_eq!(linalg::max_abs(&generator_apply(&g, &s).unwrap()), 0.0);
    }

    #[test]
    fn single_photon_decay_rates() {
        let layout = SpaceLayout::mode(3).unwrap();
        let g = GeneratorSpec::new(
            OperatorMatrix::zeros(&layout),
            vec![Dissipator {
                rate: 2.5,
                op: hilbert::annihilation(3).unwrap(),
            }],
        )
        .unwrap();
        let s = canonical_state(StateKind::Fock(1), 3).unwrap();
        let d = generator_apply(&g, &s).unwrap();
        assert_abs_diff_eq!(d[[0, 0]].re, 2.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d[[1, 1]].re, -2.5, epsilon = 1e-14);
    }

    #[test]
    fn generator_is_traceless_and_hermitian_and_compiled_agrees() {
        let mut p = EffectiveParams::classical();
        p.delta2 = 300.0;
        p.drive_amp = 50.0;
        p.phi = 1.1;
        let layout = SpaceLayout::two_modes(4, 5).unwrap();
        let g = vdp_generator(&p, &layout).unwrap();
        let s = random_state(&layout, 3);
        let d = generator_apply(&g, &s).unwrap();
        assert!(linalg::trace(&d).norm() < 1e-10 * p.kappa_plus.max(1.0));
        assert!(linalg::hermiticity_error(&d) < 1e-10 * p.kappa_plus);
        let c = CompiledGenerator::new(&g).apply(&s.rho);
        assert!(linalg::max_abs(&(&c - &d)) < 1e-9);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let g = vdp_generator(
            &EffectiveParams::classical(),
            &SpaceLayout::two_modes(3, 3).unwrap(),
        )
        .unwrap();
        let s = canonical_state(StateKind::Vacuum, 9).unwrap();
        assert!(matches!(generator_apply(&g, &s), Err(Error::Layout(_))));
    }

    #[test]
    fn damped_coherent_state_stays_coherent() {
        let n = 25;
        let gamma = 1.0;
        let layout = SpaceLayout::mode(n).unwrap();
        let g = GeneratorSpec::new(
            OperatorMatrix::zeros(&layout),
            vec![Dissipator {
                rate: gamma,
                op: hilbert::annihilation(n).unwrap(),
            }],
        )
        .unwrap();
        let alpha = C64::new(1.5, 0.8);
        let s = canonical_state(StateKind::Coherent(alpha), n).unwrap();
        let t = 0.7;
        let out = evolve(&s, &g, t, 1e-3).unwrap();
        let want =
            canonical_state(StateKind::Coherent(alpha * (-gamma * t / 2.0).exp()), n).unwrap();
        assert!(linalg::max_abs(&(&out.rho - &want.rho)) < 1e-5);
    }

    #[test]
    fn zero_duration_is_identity() {
        let g = single_vdp_generator(&EffectiveParams::single(1.0, 0.2), 6).unwrap();
        let s = canonical_state(StateKind::Fock(2), 6).unwrap();
        assert_eq!(evolve(&s, &g, 0.0, 1e-3).unwrap(), s);
        assert!(matches!(
            evolve(&s, &g, 1.0, 0.0),
            Err(Error::InvalidStep(_))
        ));
        assert!(matches!(
            evolve(&s, &g, 1.0, 1.0),
            Err(Error::InvalidStep(_))
        ));
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let p = EffectiveParams::single(1.0, 0.3);
        let g = single_vdp_generator(&p, 10).unwrap();
        let s = canonical_state(StateKind::Coherent(C64::new(1.0, 0.5)), 10).unwrap();
        let h0 = g.max_step().unwrap();
        let t = 1.0;
        let a = evolve(&s, &g, t, h0).unwrap();
        let b = evolve(&s, &g, t, h0 / 2.0).unwrap();
        let c = evolve(&s, &g, t, h0 / 4.0).unwrap();
        let d1 = trace_distance(&a, &b).unwrap();
        let d2 = trace_distance(&b, &c).unwrap();
        assert!(d2 < d1 / 15.0, "{d1:.3e} {d2:.3e}");
    }

    #[test]
    fn single_vdp_matches_rate_equation_oracle() {
        for ratio in [0.14, 0.42, 2.0] {
            let p = EffectiveParams::single(1.0, ratio);
            let n = 30;
            let g = single_vdp_generator(&p, n).unwrap();
            let ss = steady_state_direct(&g).unwrap();
            let oracle = rate_equation_oracle(p.kappa_plus, p.kappa_minus, n);
            for (k, want) in oracle.iter().enumerate() {
                assert_abs_diff_eq!(ss.rho[[k, k]].re, *want, epsilon = 1e-6);
            }
            let offdiag = ss
                .rho
                .indexed_iter()
                .filter(|((i, j), _)| i != j)
                .fold(0.0f64, |m, (_, z)| m.max(z.norm()));
            assert!(offdiag < 1e-6);
        }
    }

    #[test]
    fn windowed_and_direct_steady_states_agree() {
        let p = EffectiveParams::single(1.0, 0.42);
        let g = single_vdp_generator(&p, 20).unwrap();
        let init = canonical_state(StateKind::Vacuum, 20).unwrap();
        let a = steady_state(&g, &init, &SteadyOptions::for_params(&p)).unwrap();
        let b = steady_state_direct(&g).unwrap();
        assert!(trace_distance(&a, &b).unwrap() < 1e-5);
    }

    #[test]
    fn direct_steady_state_of_driven_two_mode_is_stationary() {
        let mut p = EffectiveParams::classical();
        p.drive_amp = 0.3 * p.kappa_plus;
        p.phi = PI;
        p.delta2 = 200.0;
        let g = vdp_generator(&p, &SpaceLayout::two_modes(6, 6).unwrap()).unwrap();
        let ss = steady_state_direct(&g).unwrap();
        ss.validate().unwrap();
        let r = stationarity_residual(&g, &ss).unwrap();
        assert!(r < 1e-8 * p.kappa_plus, "{r}");
    }

    #[test]
    fn trace_distance_examples() {
        let f0 = canonical_state(StateKind::Fock(0), 3).unwrap();
        let f1 = canonical_state(StateKind::Fock(1), 3).unwrap();
        assert_abs_diff_eq!(trace_distance(&f0, &f0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&f0, &f1).unwrap(), 1.0, epsilon = 1e-14);
        let mix = QuantumState::from_parts(f0.layout.clone(), (&f0.rho + &f1.rho) * 0.5).unwrap();
        assert_abs_diff_eq!(trace_distance(&f0, &mix).unwrap(), 0.5, epsilon = 1e-14);
    }
}
