//! Classical mean-field dynamics of the coupled oscillators.
//!
//! Residuals are reported in units of κ₊ so that they are dimensionless.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, I};
use crate::lindblad::EffectiveParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MFState {
    pub alpha1: C64,
    pub alpha2: C64,
}

impl MFState {
    pub fn new(alpha1: C64, alpha2: C64) -> Self {
        MFState { alpha1, alpha2 }
    }

    pub fn norm(&self) -> f64 {
        (self.alpha1.norm_sqr() + self.alpha2.norm_sqr()).sqrt()
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let r = C64::from_polar(1.0, theta);
        MFState::new(self.alpha1 * r, self.alpha2 * r)
    }

    /// Quadratures x_i = (α_i + α_i*)/√2.
    pub fn x(&self) -> (f64, f64) {
        (SQRT_2 * self.alpha1.re, SQRT_2 * self.alpha2.re)
    }

    fn axpy(&self, h: f64, d: &MFState) -> MFState {
        MFState::new(self.alpha1 + d.alpha1 * h, self.alpha2 + d.alpha2 * h)
    }

    fn is_finite(&self) -> bool {
        [self.alpha1, self.alpha2]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Time derivative of (α₁, α₂), including detunings −iδᵢαᵢ and the mode-1 drive.
pub fn mf_rhs(s: &MFState, p: &EffectiveParams) -> MFState {
    let (a1, a2) = (s.alpha1, s.alpha2);
    let e = C64::from_polar(1.0, p.phi);
    let d1 = 0.5 * p.kappa_plus * a1
        - p.kappa_minus * a1.norm_sqr() * a1
        - 0.5 * p.coupling * (a1 - e * a2)
        - I * p.delta1 * a1
        - I * C64::from_polar(p.drive_amp, -p.drive_phase);
    let d2 = 0.5 * p.kappa_plus * a2
        - p.kappa_minus * a2.norm_sqr() * a2
        - 0.5 * p.coupling * (a2 - e.conj() * a1)
        - I * p.delta2 * a2;
    MFState::new(d1, d2)
}

/// ‖mf_rhs‖ / κ₊.
pub fn residual(s: &MFState, p: &EffectiveParams) -> f64 {
    mf_rhs(s, p).norm() / p.kappa_plus
}

/// The trivial point and the θ = 0 representative (e^{iφ}|α|, |α|) of the synchronized family.
pub fn fixed_points(p: &EffectiveParams) -> Result<Vec<MFState>> {
    p.validate()?;
    if p.kappa_minus == 0.0 {
        return Err(Error::Unbounded(
            "kappa_minus = 0 leaves the amplitude unbounded".into(),
        ));
    }
    let r = p.mean_field_radius();
    Ok(vec![
        MFState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
        MFState::new(C64::from_polar(r, p.phi), C64::new(r, 0.0)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub fixed_point: MFState,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub stable: bool,
}

pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Eigenvalues of the Hermitian reduced Jacobian
/// [[κ₊ − 4κ₋|α₁|² − V, V e^{iφ}], [V e^{−iφ}, κ₊ − 4κ₋|α₂|² − V]].
pub fn stability(point: &MFState, p: &EffectiveParams) -> Result<StabilityResult> {
    p.validate()?;
    let res = residual(point, p);
    if res >= FIXED_POINT_TOL {
        return Err(Error::Precondition(format!(
            "not a fixed point: residual {res:.3e} (units of kappa_plus)"
        )));
    }
    let a = p.kappa_plus - 4.0 * p.kappa_minus * point.alpha1.norm_sqr() - p.coupling;
    let d = p.kappa_plus - 4.0 * p.kappa_minus * point.alpha2.norm_sqr() - p.coupling;
    let b = p.coupling;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b * b).sqrt();
    let eigenvalues = vec![mean + r, mean - r];
    Ok(StabilityResult {
        fixed_point: *point,
        stable: eigenvalues.iter().all(|&l| l < 0.0),
        eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MFState>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&MFState> {
        self.states.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "# t unit=s; alpha dimensionless\nt,re_alpha1,im_alpha1,re_alpha2,im_alpha2\n",
        );
        for (t, a) in self.times.iter().zip(&self.states) {
            let _ = writeln!(
                s,
                "{t},{},{},{},{}",
                a.alpha1.re, a.alpha1.im, a.alpha2.re, a.alpha2.im
            );
        }
        s
    }
}

/// Fixed-step RK4; the step is shrunk slightly so that it divides `duration`.
pub fn integrate_mf(
    initial: MFState,
    p: &EffectiveParams,
    duration: f64,
    step: f64,
) -> Result<Trajectory> {
    p.validate()?;
    if !(step > 0.0 && step.is_finite()) || !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidStep(format!(
            "step {step} / duration {duration}"
        )));
    }
    let limit = if p.kappa_minus > 0.0 {
        10.0 * p.mean_field_radius().max(initial.norm())
    } else {
        f64::INFINITY
    };
    let n = (duration / step).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
    };
    let mut s = initial;
    traj.times.push(0.0);
    traj.states.push(s);
    for k in 1..=n {
        let k1 = mf_rhs(&s, p);
        let k2 = mf_rhs(&s.axpy(0.5 * h, &k1), p);
        let k3 = mf_rhs(&s.axpy(0.5 * h, &k2), p);
        let k4 = mf_rhs(&s.axpy(h, &k3), p);
        s = MFState::new(
            s.alpha1 + (k1.alpha1 + 2.0 * k2.alpha1 + 2.0 * k3.alpha1 + k4.alpha1) * (h / 6.0),
            s.alpha2 + (k1.alpha2 + 2.0 * k2.alpha2 + 2.0 * k3.alpha2 + k4.alpha2) * (h / 6.0),
        );
        if !s.is_finite() || s.alpha1.norm().max(s.alpha2.norm()) > limit {
            return Err(Error::Instability(format!(
                "amplitude diverged at t = {:.3e} s",
                k as f64 * h
            )));
        }
        traj.times.push(k as f64 * h);
        traj.states.push(s);
    }
    Ok(traj)
}

/// Distance from the synchronized family {(e^{iφ}|α|e^{iθ}, |α|e^{iθ})}.
pub fn distance_to_sync_family(s: &MFState, p: &EffectiveParams) -> f64 {
    let r = p.mean_field_radius();
    let e = C64::from_polar(1.0, p.phi);
    let theta = s.alpha2.arg();
    let target = MFState::new(e * C64::from_polar(r, theta), C64::from_polar(r, theta));
    ((s.alpha1 - target.alpha1).norm_sqr() + (s.alpha2 - target.alpha2).norm_sqr()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LissajousCurve {
    pub phi: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

/// Lab-frame orbit of the attractor for each φ: relax from a generic start, then sweep the
/// common oscillation phase over one period.
pub fn lissajous(
    p: &EffectiveParams,
    phi_values: &[f64],
    samples: usize,
) -> Result<Vec<LissajousCurve>> {
    p.validate()?;
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least two samples per curve".into(),
        ));
    }
    let mut out = Vec::with_capacity(phi_values.len());
    for &phi in phi_values {
        let q = EffectiveParams {
            phi,
            delta1: 0.0,
            delta2: 0.0,
            drive_amp: 0.0,
            ..*p
        };
        let r = q.mean_field_radius();
        let start = MFState::new(C64::new(0.3 * r, 0.2 * r), C64::new(-0.1 * r, 0.4 * r));
        let rate = q.kappa_plus.min(q.coupling.max(q.kappa_plus * 1e-3));
        let traj = integrate_mf(start, &q, 40.0 / rate, 0.01 / q.kappa_plus)?;
        let end = *traj.last().expect("trajectory has the initial point");
        let res = residual(&end, &q);
        if res > 1e-6 {
            return Err(Error::Instability(format!(
                "phi = {phi:.3}: no stable orbit (residual {res:.2e})"
            )));
        }
        let (mut x1, mut x2) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
        for k in 0..samples {
            let (a, b) = end.rotated(-TAU * k as f64 / samples as f64).x();
            x1.push(a);
            x2.push(b);
        }
        out.push(LissajousCurve { phi, x1, x2 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn origin_is_stationary() {
        let p = EffectiveParams::classical();
        assert_eq!(
            mf_rhs(&MFState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0)), &p).norm(),
            0.0
        );
    }

    #[test]
    fn radial_balance_on_limit_cycle() {
        let p = EffectiveParams {
            coupling: 0.0,
            ..EffectiveParams::classical()
        };
        let r = p.mean_field_radius();
        let s = MFState::new(C64::from_polar(r, 0.7), C64::from_polar(r, -2.0));
        let d = mf_rhs(&s, &p);
        let radial = (d.alpha1 * s.alpha1.conj()).re;
        assert!(radial.abs() < 1e-10 * p.kappa_plus);
    }

    #[test]
    fn table_radius() {
        let pts = fixed_points(&EffectiveParams::classical()).unwrap();
        assert_abs_diff_eq!(pts[1].alpha2.re, 1.879, epsilon = 5e-4);
        for s in &pts {
            assert!(residual(s, &EffectiveParams::classical()) < 1e-12);
        }
    }

    #[test]
    fn phase_difference_matches_phi() {
        let p = EffectiveParams {
            phi: 2.1,
            ..EffectiveParams::classical()
        };
        let s = fixed_points(&p).unwrap()[1];
        assert_abs_diff_eq!((s.alpha1 / s.alpha2).arg(), 2.1, epsilon = 1e-12);
    }

    #[test]
    fn zero_loss_is_unbounded() {
        let p = EffectiveParams {
            kappa_minus: 0.0,
            ..EffectiveParams::classical()
        };
        assert!(matches!(fixed_points(&p), Err(Error::Unbounded(_))));
    }

    #[test]
    fn closed_form_eigenvalues() {
        let p = EffectiveParams::classical();
        let (k, v) = (p.kappa_plus, p.coupling);
        let pts = fixed_points(&p).unwrap();
        let t = stability(&pts[0], &p).unwrap();
        assert!(
            (t.eigenvalues[0] - k).abs() < 1e-12
                && (t.eigenvalues[1] - (k - 2.0 * v)).abs() < 1e-12
        );
        assert!(!t.stable);
        let s = stability(&pts[1], &p).unwrap();
        assert!(
            (s.eigenvalues[0] + k).abs() < 1e-12 && (s.eigenvalues[1] + k + 2.0 * v).abs() < 1e-12
        );
        assert!(s.stable);
        let q = EffectiveParams { coupling: 0.0, ..p };
        let d = stability(&fixed_points(&q).unwrap()[1], &q).unwrap();
        assert_eq!(d.eigenvalues, vec![-k, -k]);
    }

    #[test]
    fn non_fixed_point_is_rejected() {
        let p = EffectiveParams::classical();
        let s = MFState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        assert!(matches!(stability(&s, &p), Err(Error::Precondition(_))));
    }

    #[test]
    fn fixed_point_stays_put() {
        let p = EffectiveParams::classical();
        let s = fixed_points(&p).unwrap()[1];
        let t = integrate_mf(s, &p, 5.0 / p.kappa_plus, 0.01 / p.kappa_plus).unwrap();
        let e = t.last().unwrap();
        assert!((e.alpha1 - s.alpha1).norm() < 1e-9 && (e.alpha2 - s.alpha2).norm() < 1e-9);
    }

    #[test]
    fn random_start_locks_in_phase() {
        let p = EffectiveParams::classical();
        let s = MFState::new(C64::new(0.2, -0.5), C64::new(-0.4, 0.1));
        let t = integrate_mf(s, &p, 20.0 / p.kappa_plus, 0.01 / p.kappa_plus).unwrap();
        let e = t.last().unwrap();
        assert!(distance_to_sync_family(e, &p) < 1e-4);
        assert_abs_diff_eq!((e.alpha1 / e.alpha2).arg(), 0.0, epsilon = 1e-4);
    }

    #[test]
    fn lissajous_shapes() {
        let p = EffectiveParams::classical();
        let c = lissajous(&p, &[0.0, FRAC_PI_2, PI], 64).unwrap();
        for (a, b) in c[0].x1.iter().zip(&c[0].x2) {
            assert!((a - b).abs() < 1e-6);
        }
        let r0 = c[1].x1[0].hypot(c[1].x2[0]);
        for (a, b) in c[1].x1.iter().zip(&c[1].x2) {
            assert!((a.hypot(*b) - r0).abs() < 1e-6);
        }
        for (a, b) in c[2].x1.iter().zip(&c[2].x2) {
            assert!((a + b).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = EffectiveParams::classical();
        let s = MFState::new(C64::new(0.5, 0.0), C64::new(0.5, 0.0));
        assert!(matches!(
            integrate_mf(s, &p, 1.0, 10.0 / p.kappa_plus),
            Err(Error::Instability(_))
        ));
    }

    proptest! {
        #[test]
        fn global_rotation_commutes_with_flow(theta in 0.0f64..TAU, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let p = EffectiveParams { phi: 0.8, ..EffectiveParams::classical() };
            let s = MFState::new(C64::new(a, 0.3), C64::new(0.2, b));
            let (dur, h) = (2.0 / p.kappa_plus, 0.01 / p.kappa_plus);
            let x = integrate_mf(s, &p, dur, h).unwrap().last().unwrap().rotated(theta);
            let y = *integrate_mf(s.rotated(theta), &p, dur, h).unwrap().last().unwrap();
            prop_assert!((x.alpha1 - y.alpha1).norm() < 1e-10);
            prop_assert!((x.alpha2 - y.alpha2).norm() < 1e-10);
        }
    }
}
