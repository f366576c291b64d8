//! Noise ensembles, Arnold-tongue sweeps and sensing scans.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{Engine, ExperimentConfig, NoiseSpec};
use super::output::Audit;
use super::{par_map, stream_seed, two_mode_steady_state};
use crate::error::{Error, Result};
use crate::hilbert::partial_trace;
use crate::lindblad::EffectiveParams;
use crate::syncmetrics::{self, SyncReport};
use crate::tomography::{self, Grid2D, ReadoutSettings};

/// I.i.d. draws V ← V(1 + σ_V·z₁), δ₂ ← δ₂ + 2π·σ_f·z₂ (so Δω moves by the same amount).
pub fn noise_ensemble(
    base: &EffectiveParams,
    spec: &NoiseSpec,
    seed: u64,
) -> Result<Vec<EffectiveParams>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.ensemble_size)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            EffectiveParams {
                coupling: (base.coupling * (1.0 + spec.coupling_rel_sigma * z1)).max(0.0),
                delta2: base.delta2 + TAU * spec.freq_sigma * z2,
                ..*base
            }
        })
        .collect())
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub v_over_v0: f64,
    pub detuning_hz: f64,
    pub mean_i: f64,
    pub std_i: f64,
    pub mean_i_vn: f64,
    pub std_i_vn: f64,
    pub samples: Vec<SyncReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// V₀ in rad/s.
    pub v0: f64,
    /// Ordered detuning-major: all V values for the first Δω, then the next Δω.
    pub points: Vec<SweepPoint>,
    /// (V/V₀, Δω/2π) where the mean ℐ first reaches the contour level along each Δω row.
    pub contour: Vec<[f64; 2]>,
    pub contour_level: f64,
    pub audit: Audit,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn at(&self, v_over_v0: f64, detuning_hz: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| {
            (p.v_over_v0 - v_over_v0).abs() < 1e-9 && (p.detuning_hz - detuning_hz).abs() < 1e-9
        })
    }
}

struct MemberOut {
    report: Result<SyncReport>,
    audit: Audit,
    warnings: Vec<String>,
}

fn arnold_member(
    cfg: &ExperimentConfig,
    params: &EffectiveParams,
    settings: &ReadoutSettings,
    seed: u64,
) -> MemberOut {
    let mut audit = Audit::default();
    let mut warnings = Vec::new();
    let report = (|| {
        let state = two_mode_steady_state(cfg, params, stream_seed(seed, 0))?;
        audit.record(&state)?;
        let r = syncmetrics::combined_mi(&state, settings, stream_seed(seed, 1))?;
        warnings.extend(r.warnings);
        Ok(r.value)
    })();
    MemberOut {
        report,
        audit,
        warnings,
    }
}

fn contour(points: &[SweepPoint], v_grid: &[f64], detunings: &[f64], level: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for (r, &dw) in detunings.iter().enumerate() {
        let row = &points[r * v_grid.len()..(r + 1) * v_grid.len()];
        for w in row.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.mean_i < level && b.mean_i >= level {
                let t = (level - a.mean_i) / (b.mean_i - a.mean_i);
                out.push([a.v_over_v0 + t * (b.v_over_v0 - a.v_over_v0), dw]);
                break;
            }
        }
    }
    out
}

/// ℐ over a (V/V₀, Δω/2π) grid, each point averaged over a noise ensemble.
///
/// Member (k, m) derives its seeds from stream k of the run seed, so results do not depend
/// on scheduling. Failed members are recorded and the sweep continues.
pub fn arnold_sweep(
    cfg: &ExperimentConfig,
    v_grid: &[f64],
    detuning_grid_hz: &[f64],
) -> Result<SweepResult> {
    if v_grid.is_empty() || detuning_grid_hz.is_empty() {
        return Err(Error::Config("arnold grids must be nonempty".into()));
    }
    let mut sorted = v_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = cfg.base_params()?;
    let v0 = base.coupling;
    if v0 <= 0.0 {
        return Err(Error::Config(
            "arnold needs a reference coupling V0 > 0".into(),
        ));
    }
    let settings = ReadoutSettings {
        shots: cfg.shots(),
        ..cfg.readout
    };
    let mut tasks = Vec::new();
    for (r, &dw) in detuning_grid_hz.iter().enumerate() {
        for (c, &v) in sorted.iter().enumerate() {
            let k = (r * sorted.len() + c) as u64;
            let nominal = EffectiveParams {
                coupling: v * v0,
                delta2: base.delta1 + TAU * dw,
                ..base
            };
            let ens = noise_ensemble(&nominal, &cfg.noise, stream_seed(cfg.seed, k))?;
            for (m, p) in ens.into_iter().enumerate() {
                tasks.push((
                    k as usize,
                    p,
                    stream_seed(stream_seed(cfg.seed, k), 1 + m as u64),
                ));
            }
        }
    }
    let outs = par_map(&tasks, |(_, p, seed)| {
        arnold_member(cfg, p, &settings, *seed)
    });
    let mut audit = Audit::default();
    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for (r, &dw) in detuning_grid_hz.iter().enumerate() {
        for (c, &v) in sorted.iter().enumerate() {
            let k = r * sorted.len() + c;
            let mut samples = Vec::new();
            let mut errors = Vec::new();
            for ((_, _, _), o) in tasks.iter().zip(&outs).filter(|((kk, _, _), _)| *kk == k) {
                audit.merge(&o.audit);
                warnings.extend(
                    o.warnings
                        .iter()
                        .map(|w| format!("V/V0={v}, dw={dw} Hz: {w}")),
                );
                match &o.report {
                    Ok(s) => samples.push(*s),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            let is: Vec<f64> = samples.iter().map(|s| s.i_combined).collect();
            let vn: Vec<f64> = samples.iter().filter_map(|s| s.i_vn).collect();
            let (mean_i, std_i) = mean_std(&is);
            let (mean_i_vn, std_i_vn) = mean_std(&vn);
            points.push(SweepPoint {
                v_over_v0: v,
                detuning_hz: dw,
                mean_i,
                std_i,
                mean_i_vn,
                std_i_vn,
                samples,
                error: errors.first().map(|e| {
                    format!(
                        "{} of {} members failed: {e}",
                        errors.len(),
                        cfg.noise.ensemble_size
                    )
                }),
            });
        }
    }
    let level = cfg.sweep.contour_level();
    Ok(SweepResult {
        v0,
        contour: contour(&points, &sorted, detuning_grid_hz, level),
        contour_level: level,
        points,
        audit,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensePoint {
    pub detuning_hz: f64,
    pub s2_mean: f64,
    pub s2_std: f64,
    pub s1_mean: f64,
    pub s1_std: f64,
    /// Drive switched off.
    pub control_s2_mean: f64,
    pub control_s2_max: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseResult {
    pub points: Vec<SensePoint>,
    /// (label, Wigner grid) for both modes at the first and last detuning, ensemble member 0.
    pub wigners: Vec<(String, Grid2D)>,
    pub audit: Audit,
    /// Largest resultant length over the drive-off states (Fock-diagonal by symmetry).
    pub control_max_s: f64,
    pub warnings: Vec<String>,
}

struct SenseMember {
    s: Result<(f64, f64, f64)>,
    audit: Audit,
    wigner: Option<[Grid2D; 2]>,
}

/// S of both modes of the driven model versus Δω/2π (mode 2 detuned), with a drive-off control.
pub fn sense_sweep(cfg: &ExperimentConfig, detuning_grid_hz: &[f64]) -> Result<SenseResult> {
    if detuning_grid_hz.is_empty() {
        return Err(Error::Config("sense grid must be nonempty".into()));
    }
    if cfg.engine != Engine::Effective {
        return Err(Error::Config(
            "sense runs on the effective engine only".into(),
        ));
    }
    let base = cfg.base_params()?;
    if base.drive_amp <= 0.0 {
        return Err(Error::Config("sense needs a drive on mode 1".into()));
    }
    let mut warnings = Vec::new();
    if (base.phi - std::f64::consts::PI).abs() > 1e-12 {
        warnings.push(format!("coupling phase {} differs from pi", base.phi));
    }
    let method = cfg.sweep.phase_method();
    let last = detuning_grid_hz.len() - 1;
    let mut tasks = Vec::new();
    for (k, &dw) in detuning_grid_hz.iter().enumerate() {
        let nominal = EffectiveParams {
            delta2: base.delta1 + TAU * dw,
            ..base
        };
        let ens = noise_ensemble(&nominal, &cfg.noise, stream_seed(cfg.seed, k as u64))?;
        for (m, p) in ens.into_iter().enumerate() {
            let want_wigner = m == 0 && (k == 0 || k == last);
            tasks.push((
                k,
                p,
                stream_seed(stream_seed(cfg.seed, k as u64), 1 + m as u64),
                want_wigner,
            ));
        }
    }
    let settings = ReadoutSettings {
        shots: cfg.shots(),
        ..cfg.readout
    };
    let outs = par_map(&tasks, |(_, p, seed, want_wigner)| {
        let mut audit = Audit::default();
        let mut wigner = None;
        let s = (|| {
            let st = two_mode_steady_state(cfg, p, 0)?;
            audit.record(&st)?;
            let s1 = syncmetrics::mode_resultant(&st, 0, method, &settings, stream_seed(*seed, 1))?;
            let s2 = syncmetrics::mode_resultant(&st, 1, method, &settings, stream_seed(*seed, 2))?;
            if *want_wigner {
                let w1 = tomography::wigner(
                    &partial_trace(&st, &[0])?,
                    &settings,
                    stream_seed(*seed, 3),
                )?;
                let w2 = tomography::wigner(
                    &partial_trace(&st, &[1])?,
                    &settings,
                    stream_seed(*seed, 4),
                )?;
                wigner = Some([w1.value, w2.value]);
            }
            let off = EffectiveParams {
                drive_amp: 0.0,
                ..*p
            };
            let control = two_mode_steady_state(cfg, &off, 0)?;
            audit.record(&control)?;
            let c2 = syncmetrics::resultant_length(&partial_trace(&control, &[1])?)?;
            Ok((s1, s2, c2))
        })();
        SenseMember { s, audit, wigner }
    });
    let mut audit = Audit::default();
    let mut points = Vec::new();
    let mut wigners = Vec::new();
    let mut control_max_s: f64 = 0.0;
    for (k, &dw) in detuning_grid_hz.iter().enumerate() {
        let (mut s1, mut s2, mut c2, mut errors) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (t, o) in tasks.iter().zip(&outs).filter(|(t, _)| t.0 == k) {
            audit.merge(&o.audit);
            match &o.s {
                Ok((a, b, c)) => {
                    s1.push(*a);
                    s2.push(*b);
                    c2.push(*c);
                }
                Err(e) => errors.push(e.to_string()),
            }
            if let (true, Some([w1, w2])) = (t.3, &o.wigner) {
                wigners.push((format!("m1_dw{dw}"), w1.clone()));
                wigners.push((format!("m2_dw{dw}"), w2.clone()));
            }
        }
        let (s2_mean, s2_std) = mean_std(&s2);
        let (s1_mean, s1_std) = mean_std(&s1);
        let (control_s2_mean, _) = mean_std(&c2);
        let control_s2_max = c2.iter().copied().fold(0.0, f64::max);
        control_max_s = control_max_s.max(control_s2_max);
        points.push(SensePoint {
            detuning_hz: dw,
            s2_mean,
            s2_std,
            s1_mean,
            s1_std,
            control_s2_mean,
            control_s2_max,
            error: errors
                .first()
                .map(|e| format!("{} members failed: {e}", errors.len())),
        });
    }
    Ok(SenseResult {
        points,
        wigners,
        audit,
        control_max_s,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_ensemble_is_constant() {
        let base = EffectiveParams::classical();
        let spec = NoiseSpec {
            coupling_rel_sigma: 0.0,
            freq_sigma: 0.0,
            ensemble_size: 5,
            shots: None,
        };
        assert!(noise_ensemble(&base, &spec, 1)
            .unwrap()
            .iter()
            .all(|p| *p == base));
    }

    #[test]
    fn ensemble_statistics() {
        let base = EffectiveParams::classical();
        let spec = NoiseSpec {
            ensemble_size: 10_000,
            ..NoiseSpec::default()
        };
        let e = noise_ensemble(&base, &spec, 42).unwrap();
        let rel: Vec<f64> = e.iter().map(|p| p.coupling / base.coupling).collect();
        let (_, sd) = mean_std(&rel);
        assert!((sd - 0.02).abs() < 0.05 * 0.02, "{sd}");
        let dw: Vec<f64> = e.iter().map(|p| p.detuning() / TAU).collect();
        let (_, sdw) = mean_std(&dw);
        assert!((sdw - 37.0).abs() < 0.05 * 37.0, "{sdw}");
        assert_eq!(e, noise_ensemble(&base, &spec, 42).unwrap());
    }

    #[test]
    fn contour_interpolates() {
        let mk = |v: f64, i: f64| SweepPoint {
            v_over_v0: v,
            detuning_hz: 0.0,
            mean_i: i,
            std_i: 0.0,
            mean_i_vn: 0.0,
            std_i_vn: 0.0,
            samples: vec![],
            error: None,
        };
        let pts = vec![mk(0.0, 0.0), mk(1.0, 0.04), mk(2.0, 0.08)];
        let c = contour(&pts, &[0.0, 1.0, 2.0], &[0.0], 0.05);
        assert_eq!(c.len(), 1);
        assert!((c[0][0] - 1.25).abs() < 1e-12);
    }
}
