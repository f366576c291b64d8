//! Synchronization measures: quadrature mutual information, von Neumann mutual information,
//! canonical phase distributions and mean resultant lengths.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, partial_trace, QuantumState, Warned};
use crate::linalg::{self, C64, ZERO};
use crate::tomography::{self, Grid2D, ReadoutSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub i_xx: f64,
    pub i_xp: f64,
    pub i_combined: f64,
    pub i_vn: Option<f64>,
    pub s1: f64,
    pub s2: f64,
    pub pearson_xx: f64,
}

impl SyncReport {
    pub const CSV_HEADER: &'static str =
        "i_xx_nats,i_xp_nats,i_combined_nats,i_combined_bits,i_vn_nats,s1,s2,pearson_xx";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.i_xx,
            self.i_xp,
            self.i_combined,
            self.i_combined / std::f64::consts::LN_2,
            self.i_vn.map(|v| v.to_string()).unwrap_or_default(),
            self.s1,
            self.s2,
            self.pearson_xx
        )
    }
}

fn masses(p: &Grid2D) -> Result<ndarray::Array2<f64>> {
    if p.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDistribution("non-finite probability".into()));
    }
    let m = p.values.mapv(|v| v.max(0.0));
    let total = m.sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution(
            "distribution has no mass".into(),
        ));
    }
    Ok(m / total)
}

/// Plug-in I(X₁:X₂) in nats, treating each cell as a probability mass.
pub fn mutual_information_2d(p: &Grid2D) -> Result<f64> {
    let m = masses(p)?;
    let pi: Vec<f64> = m.rows().into_iter().map(|r| r.sum()).collect();
    let pj: Vec<f64> = m.columns().into_iter().map(|c| c.sum()).collect();
    let mut acc = 0.0;
    for ((i, j), &v) in m.indexed_iter() {
        if v > 0.0 {
            acc += v * (v / (pi[i] * pj[j])).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// Covariance and Pearson correlation of the two axes.
pub fn covariance(p: &Grid2D) -> Result<(f64, f64)> {
    let m = masses(p)?;
    let x = p.axis1.coords();
    let y = p.axis2.coords();
    let (mut ex, mut ey, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((i, j), &v) in m.indexed_iter() {
        ex += v * x[i];
        ey += v * y[j];
        exx += v * x[i] * x[i];
        eyy += v * y[j] * y[j];
        exy += v * x[i] * y[j];
    }
    let cov = exy - ex * ey;
    let sx = (exx - ex * ex).max(0.0).sqrt();
    let sy = (eyy - ey * ey).max(0.0).sqrt();
    let r = if sx > 0.0 && sy > 0.0 {
        cov / (sx * sy)
    } else {
        0.0
    };
    Ok((cov, r.clamp(-1.0, 1.0)))
}

fn entropy(rho: &linalg::CMat) -> Result<f64> {
    let ev = linalg::eigvalsh(rho)?;
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min < crate::hilbert::POSITIVITY_TOL {
        return Err(Error::InvalidState(format!(
            "density matrix has eigenvalue {min:.3e}"
        )));
    }
    Ok(ev.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum())
}

/// S(ρ₁) + S(ρ₂) − S(ρ₁₂) in nats; a qubit slot is traced out first.
pub fn von_neumann_mi(state: &QuantumState) -> Result<f64> {
    let modes = state.layout.mode_slots();
    if modes.len() != 2 {
        return Err(Error::Layout(format!(
            "mutual information needs two modes, got {}",
            modes.len()
        )));
    }
    let joint = partial_trace(state, &modes)?;
    let r1 = partial_trace(&joint, &[0])?;
    let r2 = partial_trace(&joint, &[1])?;
    Ok((entropy(&r1.rho)? + entropy(&r2.rho)? - entropy(&joint.rho)?).max(0.0))
}

fn single_mode(state: &QuantumState, what: &str) -> Result<QuantumState> {
    let modes = state.layout.mode_slots();
    if modes.len() != 1 {
        return Err(Error::Layout(format!("{what} needs a single-mode state")));
    }
    partial_trace(state, &modes)
}

/// Σₙ ρ[n, n+d] for d = 0..N.
fn diagonals(rho: &linalg::CMat) -> Vec<C64> {
    let n = rho.nrows();
    (0..n)
        .map(|d| (0..n - d).map(|k| rho[[k, k + d]]).fold(ZERO, |a, b| a + b))
        .collect()
}

/// Canonical phase density averaged over `bins` equal bins centred on φ_k = 2πk/bins.
pub fn phase_distribution(state: &QuantumState, bins: usize) -> Result<Vec<f64>> {
    if bins < 8 {
        return Err(Error::InvalidArgument(format!(
            "need at least 8 phase bins, got {bins}"
        )));
    }
    let m = single_mode(state, "phase distribution")?;
    let c = diagonals(&m.rho);
    let width = TAU / bins as f64;
    Ok((0..bins)
        .map(|k| {
            let phi = k as f64 * width;
            let mut acc = c[0].re;
            for (d, cd) in c.iter().enumerate().skip(1) {
                let x = 0.5 * d as f64 * width;
                let sinc = x.sin() / x;
                acc += 2.0 * (cd * C64::from_polar(sinc, d as f64 * phi)).re;
            }
            (acc / TAU).max(0.0)
        })
        .collect())
}

/// S = |Σₙ⟨n+1|ρ|n⟩|, the first moment of the canonical phase distribution.
pub fn resultant_length(state: &QuantumState) -> Result<f64> {
    let m = single_mode(state, "resultant length")?;
    let n = m.dim();
    Ok((0..n - 1)
        .map(|k| m.rho[[k + 1, k]])
        .fold(ZERO, |a, b| a + b)
        .norm())
}

/// |⟨e^{iθ}⟩| over the angular marginal of a reconstructed Wigner grid.
pub fn resultant_length_wigner(w: &Grid2D) -> f64 {
    let mut num = ZERO;
    let mut den = 0.0;
    for ((i, j), &v) in w.values.indexed_iter() {
        let (x, y) = (w.axis1.coord(i), w.axis2.coord(j));
        if x == 0.0 && y == 0.0 {
            continue;
        }
        num += C64::from_polar(v, y.atan2(x));
        den += v;
    }
    if den > 0.0 {
        (num.norm() / den).min(1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMethod {
    #[default]
    Canonical,
    WignerAngular,
}

/// Resultant length of one mode of a state, by the chosen phase construction.
pub fn mode_resultant(
    state: &QuantumState,
    slot: usize,
    method: PhaseMethod,
    settings: &ReadoutSettings,
    seed: u64,
) -> Result<f64> {
    let m = partial_trace(state, &[slot])?;
    match method {
        PhaseMethod::Canonical => resultant_length(&m),
        PhaseMethod::WignerAngular => {
            let w = tomography::wigner(&m, settings, seed)?;
            Ok(resultant_length_wigner(&w.value))
        }
    }
}

/// Settings for the P(x₁, p₂) readout paired with `settings`.
pub fn xp_settings(settings: &ReadoutSettings) -> ReadoutSettings {
    ReadoutSettings {
        phi2: settings.phi2 + FRAC_PI_2,
        ..*settings
    }
}

/// Seed of the P(x₁, p₂) readout paired with `seed`.
pub fn xp_seed(seed: u64) -> u64 {
    seed ^ 0x5851_f42d_4c95_7f2d
}

/// Fills a report from already reconstructed P(x₁,x₂) and P(x₁,p₂).
pub fn report_from_grids(state: &QuantumState, pxx: &Grid2D, pxp: &Grid2D) -> Result<SyncReport> {
    let modes = state.layout.mode_slots();
    if modes.len() != 2 {
        return Err(Error::Layout(format!(
            "sync report needs two modes, got {}",
            modes.len()
        )));
    }
    let joint = partial_trace(state, &modes)?;
    let i_xx = mutual_information_2d(pxx)?;
    let i_xp = mutual_information_2d(pxp)?;
    let (_, pearson_xx) = covariance(pxx)?;
    Ok(SyncReport {
        i_xx,
        i_xp,
        i_combined: i_xx + i_xp,
        i_vn: Some(von_neumann_mi(&joint)?),
        s1: resultant_length(&partial_trace(&joint, &[0])?)?,
        s2: resultant_length(&partial_trace(&joint, &[1])?)?,
        pearson_xx,
    })
}

/// ℐ = I[x₁:x₂] + I[x₁:p₂] with the other report fields filled in.
///
/// With `settings.shots > 0` both joint distributions carry projection noise, which biases the
/// plug-in estimate upward by a roughly constant offset.
pub fn combined_mi(
    state: &QuantumState,
    settings: &ReadoutSettings,
    seed: u64,
) -> Result<Warned<SyncReport>> {
    let modes = state.layout.mode_slots();
    if modes.len() != 2 {
        return Err(Error::Layout(format!(
            "combined MI needs two modes, got {}",
            modes.len()
        )));
    }
    let joint = partial_trace(state, &modes)?;
    let pxx = tomography::joint_distribution(&joint, settings, seed)?;
    let pxp = tomography::joint_distribution(&joint, &xp_settings(settings), xp_seed(seed))?;
    let mut warnings = pxx.warnings.clone();
    warnings.extend(pxp.warnings.iter().cloned());
    Ok(Warned {
        value: report_from_grids(&joint, &pxx.value, &pxp.value)?,
        warnings,
    })
}

/// Exact ⟨x_{φ₁}x_{φ₂}⟩ − ⟨x_{φ₁}⟩⟨x_{φ₂}⟩ of a two-mode state.
pub fn quadrature_covariance(state: &QuantumState, phi1: f64, phi2: f64) -> Result<f64> {
    let modes = state.layout.mode_slots();
    if modes.len() != 2 {
        return Err(Error::Layout(
            "quadrature covariance needs two modes".into(),
        ));
    }
    let joint = partial_trace(state, &modes)?;
    let dims = joint.layout.dims();
    let x1 = hilbert::embed(&hilbert::quadrature(dims[0], phi1)?, 0, &joint.layout)?;
    let x2 = hilbert::embed(&hilbert::quadrature(dims[1], phi2)?, 1, &joint.layout)?;
    let e12 = hilbert::expectation(&joint, &x1.matmul(&x2)?)?.re;
    let e1 = hilbert::expectation(&joint, &x1)?.re;
    let e2 = hilbert::expectation(&joint, &x2)?.re;
    Ok(e12 - e1 * e2)
}

/// Phase of ⟨e^{iφ}⟩ in (−π, π]; zero for a phase-free state.
pub fn mean_phase(state: &QuantumState) -> Result<f64> {
    let m = single_mode(state, "mean phase")?;
    let n = m.dim();
    let z = (0..n - 1)
        .map(|k| m.rho[[k + 1, k]])
        .fold(ZERO, |a, b| a + b);
    Ok(if z.norm() > 0.0 { z.arg() } else { 0.0 }.clamp(-PI, PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{canonical_state, SpaceLayout, StateKind};
    use crate::tomography::Axis;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn grid(values: Array2<f64>) -> Grid2D {
        let (n1, n2) = values.dim();
        Grid2D::new(
            Axis::centered(1.0, n1).unwrap(),
            Axis::centered(1.0, n2).unwrap(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn product_grid_has_zero_mi() {
        let p: Vec<f64> = (0..16).map(|k| 1.0 + k as f64).collect();
        let q: Vec<f64> = (0..16).map(|k| (k as f64 * 0.3).exp()).collect();
        let g = grid(Array2::from_shape_fn((16, 16), |(i, j)| p[i] * q[j]));
        assert_abs_diff_eq!(mutual_information_2d(&g).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn diagonal_grid_gives_log_n() {
        let g = grid(Array2::from_shape_fn((16, 16), |(i, j)| {
            if i == j {
                1.0
            } else {
                0.0
            }
        }));
        assert_abs_diff_eq!(
            mutual_information_2d(&g).unwrap(),
            16f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gaussian_mi() {
        let r: f64 = 0.5;
        let n = 256;
        let ax = Axis::centered(8.0, n).unwrap();
        let x = ax.coords();
        let v = Array2::from_shape_fn((n, n), |(i, j)| {
            let (a, b) = (x[i], x[j]);
            (-(a * a - 2.0 * r * a * b + b * b) / (2.0 * (1.0 - r * r))).exp()
        });
        let g = Grid2D::new(ax, ax, v).unwrap();
        let expect = -0.5 * (1.0 - r * r).ln();
        assert!((mutual_information_2d(&g).unwrap() - expect).abs() < 0.05 * expect);
        let (_, pr) = covariance(&g).unwrap();
        assert_abs_diff_eq!(pr, r, epsilon = 1e-6);
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(mutual_information_2d(&grid(Array2::zeros((8, 8)))).is_err());
    }

    #[test]
    fn vn_mi_of_product_and_pure_entangled() {
        let a = canonical_state(StateKind::Coherent(C64::new(0.5, 0.2)), 6).unwrap();
        let b = canonical_state(StateKind::Fock(1), 5).unwrap();
        assert_abs_diff_eq!(
            von_neumann_mi(&a.tensor(&b).unwrap()).unwrap(),
            0.0,
            epsilon = 1e-9
        );

        let mut psi = ndarray::Array1::<C64>::zeros(16);
        psi[1] = C64::new(0.6, 0.0);
        psi[4] = C64::new(0.0, 0.8);
        let s = QuantumState::pure(SpaceLayout::two_modes(4, 4).unwrap(), &psi).unwrap();
        let r1 = partial_trace(&s, &[0]).unwrap();
        let s1 = entropy(&r1.rho).unwrap();
        assert_abs_diff_eq!(von_neumann_mi(&s).unwrap(), 2.0 * s1, epsilon = 1e-9);
    }

    #[test]
    fn vacuum_phase_is_uniform() {
        let v = canonical_state(StateKind::Vacuum, 10).unwrap();
        let p = phase_distribution(&v, 32).unwrap();
        for x in &p {
            assert_abs_diff_eq!(*x, 1.0 / TAU, epsilon = 1e-12);
        }
    }

    #[test]
    fn coherent_phase_peak() {
        let s = canonical_state(StateKind::Coherent(C64::from_polar(2.0, PI / 4.0)), 30).unwrap();
        let p = phase_distribution(&s, 64).unwrap();
        let width = TAU / 64.0;
        let total: f64 = p.iter().sum::<f64>() * width;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        let k = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(k, 8);
    }

    #[test]
    fn opposite_mixture_has_two_peaks() {
        let s =
            canonical_state(StateKind::OppositeCoherentMixture(C64::new(2.0, 0.0)), 30).unwrap();
        let p = phase_distribution(&s, 32).unwrap();
        assert_abs_diff_eq!(p[0], p[16], epsilon = 1e-12);
        assert!(p[0] > 4.0 * p[8]);
        assert!(resultant_length(&s).unwrap() < 1e-12);
    }

    #[test]
    fn resultant_length_limits() {
        let f = canonical_state(StateKind::Fock(3), 10).unwrap();
        assert!(resultant_length(&f).unwrap() < 1e-10);
        let c = canonical_state(StateKind::Coherent(C64::new(3.0, 0.0)), 40).unwrap();
        let s = resultant_length(&c).unwrap();
        assert!(s > 0.95 && s <= 1.0 + 1e-9);
        // oracle: numerical integration of the phase density
        let bins = 2048;
        let p = phase_distribution(&c, bins).unwrap();
        let w = TAU / bins as f64;
        let z: C64 = p
            .iter()
            .enumerate()
            .map(|(k, &v)| C64::from_polar(v * w, k as f64 * w))
            .sum();
        assert_abs_diff_eq!(z.norm(), s, epsilon = 1e-4);
    }

    #[test]
    fn wigner_angular_resultant_is_close_for_coherent_state() {
        let c = canonical_state(StateKind::Coherent(C64::new(2.0, 0.0)), 30).unwrap();
        let w = tomography::wigner(&c, &ReadoutSettings::exact(), 0)
            .unwrap()
            .value;
        let s = resultant_length_wigner(&w);
        assert!(s > 0.8 && s < 1.0, "{s}");
    }

    #[test]
    fn product_state_combined_mi_is_small() {
        let a = canonical_state(StateKind::Coherent(C64::new(0.7, 0.0)), 10).unwrap();
        let s = a.tensor(&a).unwrap();
        let r = combined_mi(&s, &ReadoutSettings::exact(), 0).unwrap().value;
        assert!(r.i_combined < 0.02, "{r:?}");
        assert_abs_diff_eq!(r.i_combined, r.i_xx + r.i_xp, epsilon = 0.0);
        assert!(r.i_vn.unwrap() < 1e-9);
    }

    proptest! {
        #[test]
        fn mi_symmetric_under_transpose_and_permutation(
            vals in proptest::collection::vec(0.0f64..1.0, 64),
            perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let mut v = Array2::from_shape_vec((8, 8), vals).unwrap();
            v[[0, 0]] += 0.1;
            let g = grid(v.clone());
            let t = grid(v.t().to_owned());
            let p = grid(Array2::from_shape_fn((8, 8), |(i, j)| v[[perm[i], perm[j]]]));
            let base = mutual_information_2d(&g).unwrap();
            prop_assert!(base >= -1e-9);
            prop_assert!((base - mutual_information_2d(&t).unwrap()).abs() < 1e-12);
            prop_assert!((base - mutual_information_2d(&p).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn resultant_invariant_under_rotation(theta in 0.0f64..TAU, r in 0.2f64..1.5) {
            let a = canonical_state(StateKind::Coherent(C64::new(r, 0.0)), 20).unwrap();
            let b = canonical_state(StateKind::Coherent(C64::from_polar(r, theta)), 20).unwrap();
            prop_assert!((resultant_length(&a).unwrap() - resultant_length(&b).unwrap()).abs() < 1e-12);
        }
    }
}
