//! Fock-space and composite-space operator algebra.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};

/// One tensor factor of a composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    Qubit,
    Mode(usize),
}

impl Subsystem {
    pub fn dim(self) -> usize {
        match self {
            Subsystem::Qubit => 2,
            Subsystem::Mode(n) => n,
        }
    }
}

/// Ordered tensor-product structure, e.g. qubit ⊗ M₁ ⊗ M₂.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceLayout {
    slots: Vec<Subsystem>,
}

impl SpaceLayout {
    pub fn new(slots: Vec<Subsystem>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidDimension(
                "layout needs at least one slot".into(),
            ));
        }
        for s in &slots {
            if let Subsystem::Mode(n) = s {
                if *n < 2 {
                    return Err(Error::InvalidDimension(format!("mode cutoff {n} < 2")));
                }
            }
        }
        Ok(SpaceLayout { slots })
    }

    pub fn mode(cutoff: usize) -> Result<Self> {
        Self::new(vec![Subsystem::Mode(cutoff)])
    }

    pub fn two_modes(n1: usize, n2: usize) -> Result<Self> {
        Self::new(vec![Subsystem::Mode(n1), Subsystem::Mode(n2)])
    }

    pub fn qubit_two_modes(n1: usize, n2: usize) -> Result<Self> {
        Self::new(vec![
            Subsystem::Qubit,
            Subsystem::Mode(n1),
            Subsystem::Mode(n2),
        ])
    }

    pub fn slots(&self) -> &[Subsystem] {
        &self.slots
    }

    pub fn dims(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.dim()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.slots.iter().map(|s| s.dim()).product()
    }

    /// Slot indices holding bosonic modes, in layout order.
    pub fn mode_slots(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| matches!(self.slots[i], Subsystem::Mode(_)))
            .collect()
    }

    pub fn qubit_slot(&self) -> Option<usize> {
        self.slots.iter().position(|s| *s == Subsystem::Qubit)
    }

    /// Sub-layout keeping the given slots in their original order.
    pub fn restrict(&self, keep: &[usize]) -> Result<SpaceLayout> {
        let mut k: Vec<usize> = keep.to_vec();
        k.sort_unstable();
        k.dedup();
        if k.is_empty() {
            return Err(Error::InvalidArgument("keep set is empty".into()));
        }
        if *k.last().unwrap() >= self.slots.len() {
            return Err(Error::InvalidArgument(format!(
                "slot {} out of range for {} slots",
                k.last().unwrap(),
                self.slots.len()
            )));
        }
        SpaceLayout::new(k.iter().map(|&i| self.slots[i]).collect())
    }

    /// Multi-index digits of a flat basis index (first slot most significant).
    pub fn digits(&self, mut idx: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for s in (0..dims.len()).rev() {
            out[s] = idx % dims[s];
            idx /= dims[s];
        }
        out
    }
}

/// Dense operator tagged with the layout it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub layout: SpaceLayout,
    pub entries: CMat,
}

impl OperatorMatrix {
    pub fn new(layout: SpaceLayout, entries: CMat) -> Result<Self> {
        let d = layout.total_dim();
        if entries.dim() != (d, d) {
            return Err(Error::Layout(format!(
                "matrix {:?} does not match layout dimension {d}",
                entries.dim()
            )));
        }
        if entries.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument(
                "operator has non-finite entries".into(),
            ));
        }
        Ok(OperatorMatrix { layout, entries })
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        OperatorMatrix {
            layout: layout.clone(),
            entries: Array2::zeros((d, d)),
        }
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        OperatorMatrix {
            layout: layout.clone(),
            entries: linalg::identity(layout.total_dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dagger(&self) -> Self {
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: linalg::dagger(&self.entries),
        }
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Result<Self> {
        same_layout(&self.layout, &other.layout)?;
        Ok(OperatorMatrix {
            layout: self.layout.clone(),
            entries: linalg::matmul(&self.entries, &other.entries),
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: self.entries.mapv(|z| z * c),
        }
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        same_layout(&self.layout, &other.layout)?;
        Ok(OperatorMatrix {
            layout: self.layout.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.entries)
    }
}

pub(crate) fn same_layout(a: &SpaceLayout, b: &SpaceLayout) -> Result<()> {
    if a != b {
        return Err(Error::Layout(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// A value together with non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct Warned<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Warned<T> {
    pub fn clean(value: T) -> Self {
        Warned {
            value,
            warnings: Vec::new(),
        }
    }
}

/// Lowering operator with ⟨n−1|a|n⟩ = √n.
pub fn annihilation(cutoff: usize) -> Result<OperatorMatrix> {
    let layout = SpaceLayout::mode(cutoff)?;
    let mut m = Array2::zeros((cutoff, cutoff));
    for n in 1..cutoff {
        m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    OperatorMatrix::new(layout, m)
}

pub fn creation(cutoff: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(cutoff)?.dagger())
}

pub fn number(cutoff: usize) -> Result<OperatorMatrix> {
    let layout = SpaceLayout::mode(cutoff)?;
    let m = Array2::from_diag(&Array1::from_iter(
        (0..cutoff).map(|n| C64::new(n as f64, 0.0)),
    ));
    OperatorMatrix::new(layout, m)
}

/// Quadrature x_φ = (a e^{−iφ} + a† e^{iφ})/√2.
pub fn quadrature(cutoff: usize, phi: f64) -> Result<OperatorMatrix> {
    let a = annihilation(cutoff)?;
    let e = C64::from_polar(1.0, -phi);
    let m = (&a.entries * e + &linalg::dagger(&a.entries) * e.conj()) / 2f64.sqrt();
    OperatorMatrix::new(a.layout, m)
}

fn qubit_layout() -> SpaceLayout {
    SpaceLayout {
        slots: vec![Subsystem::Qubit],
    }
}

/// Qubit basis order is (↓, ↑); σ_z = diag(1, −1) so the reset state |↓⟩ has ⟨σ_z⟩ = +1.
pub fn sigma_z() -> OperatorMatrix {
    let mut m = Array2::zeros((2, 2));
    m[[0, 0]] = ONE;
    m[[1, 1]] = -ONE;
    OperatorMatrix {
        layout: qubit_layout(),
        entries: m,
    }
}

pub fn sigma_x() -> OperatorMatrix {
    let mut m = Array2::zeros((2, 2));
    m[[0, 1]] = ONE;
    m[[1, 0]] = ONE;
    OperatorMatrix {
        layout: qubit_layout(),
        entries: m,
    }
}

pub fn sigma_y() -> OperatorMatrix {
    let mut m = Array2::zeros((2, 2));
    m[[0, 1]] = C64::new(0.0, -1.0);
    m[[1, 0]] = C64::new(0.0, 1.0);
    OperatorMatrix {
        layout: qubit_layout(),
        entries: m,
    }
}

/// σ₊ = |↑⟩⟨↓|.
pub fn sigma_plus() -> OperatorMatrix {
    let mut m = Array2::zeros((2, 2));
    m[[1, 0]] = ONE;
    OperatorMatrix {
        layout: qubit_layout(),
        entries: m,
    }
}

pub fn sigma_minus() -> OperatorMatrix {
    sigma_plus().dagger()
}

/// Kronecker product with identities on every other slot.
pub fn embed(op: &OperatorMatrix, slot: usize, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let dims = layout.dims();
    if slot >= dims.len() {
        return Err(Error::Layout(format!("slot {slot} out of range")));
    }
    if op.dim() != dims[slot] {
        return Err(Error::Layout(format!(
            "operator dimension {} does not match slot {slot} of dimension {}",
            op.dim(),
            dims[slot]
        )));
    }
    let before: usize = dims[..slot].iter().product();
    let after: usize = dims[slot + 1..].iter().product();
    let m = linalg::kron(
        &linalg::kron(&linalg::identity(before), &op.entries),
        &linalg::identity(after),
    );
    OperatorMatrix::new(layout.clone(), m)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Generalized Laguerre polynomials L_j^{(k)}(x) for j = 0..=n.
pub(crate) fn laguerre_all(n: usize, k: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(1.0 + k - x);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k - x) * out[j] - (jf + k) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// Displacement D(β) = exp(βa† − β*a) from the analytic Laguerre-form matrix elements.
///
/// Elements are exact projections of the untruncated operator, so no padding is needed.
/// Unitarity of the truncated block degrades once |β|² approaches the cutoff; a warning
/// is attached for |β|² > cutoff/2.
pub fn displacement(beta: C64, cutoff: usize) -> Result<Warned<OperatorMatrix>> {
    let layout = SpaceLayout::mode(cutoff)?;
    let m = displacement_matrix(beta, cutoff);
    let mut out = Warned::clean(OperatorMatrix::new(layout, m)?);
    if beta.norm_sqr() > cutoff as f64 / 2.0 {
        out.warnings.push(format!(
            "|beta|^2 = {:.3} exceeds cutoff/2 = {:.1}; truncated displacement is not unitary",
            beta.norm_sqr(),
            cutoff as f64 / 2.0
        ));
    }
    Ok(out)
}

pub(crate) fn displacement_matrix(beta: C64, cutoff: usize) -> CMat {
    let mut m = Array2::zeros((cutoff, cutoff));
    let r2 = beta.norm_sqr();
    if r2 == 0.0 {
        for n in 0..cutoff {
            m[[n, n]] = ONE;
        }
        return m;
    }
    let lf = ln_factorials(cutoff);
    let lr = beta.norm().ln();
    let unit = beta / beta.norm();
    for n in 0..cutoff {
        for m_idx in n..cutoff {
            let k = m_idx - n;
            let lag = laguerre_all(n, k as f64, r2)[n];
            let logmag = 0.5 * (lf[n] - lf[m_idx]) + k as f64 * lr - r2 / 2.0;
            let mag = logmag.exp() * lag;
            // ⟨m|D|n⟩ for m ≥ n carries β^{m−n}; the transposed element carries (−β*)^{m−n}.
            m[[m_idx, n]] = unit.powi(k as i32) * mag;
            if k > 0 {
                m[[n, m_idx]] = (-unit.conj()).powi(k as i32) * mag;
            }
        }
    }
    m
}

/// Density operator with an explicit layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub layout: SpaceLayout,
    pub rho: CMat,
}

pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = -1e-6;

impl QuantumState {
    /// Builds a state and checks trace, Hermiticity and positivity.
    pub fn new(layout: SpaceLayout, rho: CMat) -> Result<Self> {
        let s = Self::from_parts(layout, rho)?;
        s.validate()?;
        Ok(s)
    }

    /// Builds a state checking only the shape; call [`QuantumState::validate`] at checkpoints.
    pub fn from_parts(layout: SpaceLayout, rho: CMat) -> Result<Self> {
        let d = layout.total_dim();
        if rho.dim() != (d, d) {
            return Err(Error::Layout(format!(
                "density matrix {:?} does not match layout dimension {d}",
                rho.dim()
            )));
        }
        Ok(QuantumState { layout, rho })
    }

    pub fn pure(layout: SpaceLayout, psi: &Array1<C64>) -> Result<Self> {
        let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if n == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi.mapv(|z| z / n.sqrt());
        let d = psi.len();
        let rho = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        Self::from_parts(layout, rho)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.rho)
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ_ij |ρ_ij|² for Hermitian ρ
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigvalsh(&self.rho)?[0])
    }

    /// Full invariant check: trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} deviates from 1")));
        }
        let h = self.hermiticity_error();
        if h > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("Hermiticity error {h:.3e}")));
        }
        let e = self.min_eigenvalue()?;
        if e < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {e:.3e}")));
        }
        Ok(())
    }

    /// Diagonal of ρ.
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diag().iter().map(|z| z.re).collect()
    }

    pub fn tensor(&self, other: &QuantumState) -> Result<QuantumState> {
        let mut slots = self.layout.slots.clone();
        slots.extend_from_slice(&other.layout.slots);
        Self::from_parts(
            SpaceLayout::new(slots)?,
            linalg::kron(&self.rho, &other.rho),
        )
    }

    /// Reduced state of one slot.
    pub fn reduced(&self, slot: usize) -> Result<QuantumState> {
        partial_trace(self, &[slot])
    }

    /// ⟨a†a⟩ of the mode in `slot`.
    pub fn mean_number(&self, slot: usize) -> Result<f64> {
        let r = self.reduced(slot)?;
        Ok(r.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum())
    }

    /// ⟨a⟩ of the mode in `slot`.
    pub fn mean_amplitude(&self, slot: usize) -> Result<C64> {
        let r = self.reduced(slot)?;
        Ok((1..r.dim())
            .map(|n| r.rho[[n, n - 1]] * (n as f64).sqrt())
            .sum())
    }

    /// Population held in the two highest Fock levels of the mode in `slot`.
    pub fn top_population(&self, slot: usize) -> Result<f64> {
        let p = self.reduced(slot)?.populations();
        let n = p.len();
        Ok(p[n - 1] + p[n - 2])
    }
}

/// Named single-mode states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Vacuum,
    Fock(usize),
    Coherent(C64),
    OppositeCoherentMixture(C64),
}

/// Largest Poisson tail mass allowed beyond the cutoff for coherent states.
pub const COHERENT_TAIL_TOL: f64 = 1e-6;

fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Result<Array1<C64>> {
    let lf = ln_factorials(cutoff);
    let r2 = alpha.norm_sqr();
    let c = Array1::from_shape_fn(cutoff, |n| {
        if r2 == 0.0 {
            return if n == 0 { ONE } else { ZERO };
        }
        let mag = (-r2 / 2.0 + n as f64 * alpha.norm().ln() - 0.5 * lf[n]).exp();
        C64::from_polar(mag, n as f64 * alpha.arg())
    });
    let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if 1.0 - kept > COHERENT_TAIL_TOL {
        return Err(Error::InvalidState(format!(
            "coherent amplitude {alpha} loses {:.2e} probability beyond cutoff {cutoff}",
            1.0 - kept
        )));
    }
    Ok(c.mapv(|z| z / kept.sqrt()))
}

pub fn canonical_state(kind: StateKind, cutoff: usize) -> Result<QuantumState> {
    let layout = SpaceLayout::mode(cutoff)?;
    let mut rho = Array2::zeros((cutoff, cutoff));
    match kind {
        StateKind::Vacuum => rho[[0, 0]] = ONE,
        StateKind::Fock(n) => {
            if n >= cutoff {
                return Err(Error::InvalidState(format!(
                    "Fock level {n} >= cutoff {cutoff}"
                )));
            }
            rho[[n, n]] = ONE;
        }
        StateKind::Coherent(alpha) => {
            let c = coherent_amplitudes(alpha, cutoff)?;
            rho = Array2::from_shape_fn((cutoff, cutoff), |(i, j)| c[i] * c[j].conj());
        }
        StateKind::OppositeCoherentMixture(alpha) => {
            let c = coherent_amplitudes(alpha, cutoff)?;
            let d = coherent_amplitudes(-alpha, cutoff)?;
            rho = Array2::from_shape_fn((cutoff, cutoff), |(i, j)| {
                0.5 * (c[i] * c[j].conj() + d[i] * d[j].conj())
            });
        }
    }
    QuantumState::from_parts(layout, rho)
}

/// Reduced density matrix over `keep`, in original slot order.
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    let layout = &state.layout;
    let sub = layout.restrict(keep)?;
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let dims = layout.dims();
    let nslots = dims.len();
    if keep_sorted.len() == nslots {
        return Ok(state.clone());
    }
    let traced: Vec<usize> = (0..nslots).filter(|s| !keep_sorted.contains(s)).collect();
    let kd: Vec<usize> = keep_sorted.iter().map(|&s| dims[s]).collect();
    let td: Vec<usize> = traced.iter().map(|&s| dims[s]).collect();
    let dk: usize = kd.iter().product();
    let dt: usize = td.iter().product();

    // strides of each slot in the flat index
    let mut stride = vec![1usize; nslots];
    for s in (0..nslots.saturating_sub(1)).rev() {
        stride[s] = stride[s + 1] * dims[s + 1];
    }
    let flat = |slots: &[usize], ds: &[usize], mut idx: usize| -> usize {
        let mut f = 0;
        for p in (0..slots.len()).rev() {
            f += (idx % ds[p]) * stride[slots[p]];
            idx /= ds[p];
        }
        f
    };
    let koff: Vec<usize> = (0..dk).map(|i| flat(&keep_sorted, &kd, i)).collect();
    let toff: Vec<usize> = (0..dt).map(|i| flat(&traced, &td, i)).collect();

    let mut out = Array2::<C64>::zeros((dk, dk));
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = ZERO;
            for &t in &toff {
                acc += state.rho[[koff[i] + t, koff[j] + t]];
            }
            out[[i, j]] = acc;
        }
    }
    QuantumState::from_parts(sub, out)
}

/// Tr(ρ·op).
pub fn expectation(state: &QuantumState, op: &OperatorMatrix) -> Result<C64> {
    same_layout(&state.layout, &op.layout)?;
    let d = state.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += state.rho[[i, k]] * op.entries[[k, i]];
        }
    }
    Ok(acc)
}
