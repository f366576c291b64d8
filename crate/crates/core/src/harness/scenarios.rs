//! The seven scenario runners. Each writes its CSVs through `run.writer` and records checks.

use std::f64::consts::TAU;

use super::output::{num, Table};
use super::sweeps::{arnold_sweep, sense_sweep};
use super::{single_steady_state, stream_seed, two_mode_steady_state, Engine, Run, Scenario};
use crate::error::Result;
use crate::hilbert::{canonical_state, partial_trace, QuantumState, SpaceLayout, StateKind};
use crate::linalg::C64;
use crate::lindblad::{self, EffectiveParams};
use crate::meanfield::{self, MFState};
use crate::syncmetrics::{self, SyncReport};
use crate::tomography::{self, Axis, Grid2D, ReadoutSettings};

const W_NAMES: [&str; 3] = ["re_alpha", "im_alpha", "wigner"];
const W_UNITS: [&str; 3] = ["1", "1", "1/area"];
const P_NAMES: [&str; 3] = ["x1", "x2", "probability_density"];
const P_UNITS: [&str; 3] = ["1", "1", "1/area"];

fn noisy_settings(run: &Run) -> ReadoutSettings {
    ReadoutSettings {
        shots: run.cfg.shots(),
        ..run.cfg.readout
    }
}

fn params_comment(p: &EffectiveParams) -> String {
    format!(
        "kappa_plus/2pi={} Hz kappa_minus/2pi={} Hz V/2pi={} Hz phi={} rad delta1/2pi={} Hz delta2/2pi={} Hz drive/2pi={} Hz",
        p.kappa_plus / TAU,
        p.kappa_minus / TAU,
        p.coupling / TAU,
        p.phi,
        p.delta1 / TAU,
        p.delta2 / TAU,
        p.drive_amp / TAU
    )
}

fn record(run: &mut Run, state: &QuantumState) -> Result<()> {
    run.audit.record(state)
}

pub(crate) fn single_vdp(run: &mut Run) -> Result<()> {
    run.stage("params");
    let base = run.cfg.base_params()?;
    let cutoff = run.cfg.cutoffs.single;
    let settings = noisy_settings(run);
    let ratios = run.cfg.sweep.ratios();
    let mut t = Table::new(
        &[
            format!(
                "kappa_plus/2pi={} Hz, cutoff={cutoff}, shots={}",
                base.kappa_plus / TAU,
                settings.shots
            ),
            format!(
                "ratio = kappa_minus/kappa_plus: {} points from {} to {}",
                ratios.len(),
                ratios[0],
                ratios[ratios.len() - 1]
            ),
            "donut radius and mean-field radius in units of sqrt(photon number)".into(),
        ],
        &[
            "ratio",
            "mean_n",
            "donut_radius",
            "mean_field_radius",
            "resultant_s",
            "top_population",
        ],
    );
    let mut max_s: f64 = 0.0;
    for (k, &ratio) in ratios.iter().enumerate() {
        run.stage(&format!("steady state ratio={ratio}"));
        let p = EffectiveParams {
            delta1: base.delta1,
            ..EffectiveParams::single(base.kappa_plus, ratio)
        };
        let state = single_steady_state(&p, cutoff)?;
        record(run, &state)?;
        run.stage(&format!("wigner ratio={ratio}"));
        let w = tomography::wigner(&state, &settings, stream_seed(run.cfg.seed, k as u64))?;
        run.warn(w.warnings.iter().map(|s| format!("ratio={ratio}: {s}")));
        let radius = match tomography::donut_radius(&w.value) {
            Ok(r) => r,
            Err(e) => {
                run.warn([format!("ratio={ratio}: no donut radius: {e}")]);
                f64::NAN
            }
        };
        let s = syncmetrics::resultant_length(&state)?;
        max_s = max_s.max(s);
        t.row([
            num(ratio),
            num(state.mean_number(0)?),
            num(radius),
            num(p.mean_field_radius()),
            num(s),
            num(state.top_population(0)?),
        ]);
        run.writer.write(
            &format!("wigner_ratio{k}.csv"),
            &w.value.to_csv(W_NAMES, W_UNITS),
        )?;
    }
    run.stage("write");
    run.writer.write("single_vdp.csv", &t.finish())?;
    run.check(
        "phase_symmetric",
        max_s < 1e-10,
        format!("max resultant length {max_s:.3e}"),
    );
    Ok(())
}

pub(crate) fn limit_cycle(run: &mut Run) -> Result<()> {
    run.stage("params");
    let base = run.cfg.base_params()?;
    let p = EffectiveParams {
        coupling: 0.0,
        ..base
    };
    let cutoff = run.cfg.cutoffs.single;
    let [re, im] = run.cfg.sweep.initial_alpha();
    let snapshots = run.cfg.sweep.snapshots();
    let duration = run.cfg.sweep.duration_kappa() / p.kappa_plus;
    let settings = noisy_settings(run);
    let gen = lindblad::single_vdp_generator(&p, cutoff)?;
    run.stage("steady state");
    let steady = lindblad::steady_state_direct(&gen)?;
    record(run, &steady)?;
    let mut state = canonical_state(StateKind::Coherent(C64::new(re, im)), cutoff)?;
    let step = gen.max_step()?;
    let chunks = 20 * snapshots;
    let dt = duration / chunks as f64;
    let mut t = Table::new(
        &[
            params_comment(&p),
            format!("t: 0 to {duration} s in {chunks} steps; initial alpha = {re}+{im}i; cutoff={cutoff}"),
        ],
        &["t_s", "re_a", "im_a", "mean_n", "purity", "trace_distance_to_steady"],
    );
    let mut distances = Vec::with_capacity(chunks + 1);
    for c in 0..=chunks {
        run.stage(&format!("evolve chunk {c}"));
        if c > 0 {
            state = lindblad::evolve(&state, &gen, dt, step.min(dt))?;
        }
        record(run, &state)?;
        let a = state.mean_amplitude(0)?;
        let d = lindblad::trace_distance(&state, &steady)?;
        distances.push(d);
        t.row([
            num(c as f64 * dt),
            num(a.re),
            num(a.im),
            num(state.mean_number(0)?),
            num(state.purity()),
            num(d),
        ]);
        if c % 20 == 0 {
            let w = tomography::wigner(&state, &settings, stream_seed(run.cfg.seed, c as u64))?;
            run.warn(
                w.warnings
                    .iter()
                    .map(|s| format!("t={}: {s}", c as f64 * dt)),
            );
            run.writer.write(
                &format!("wigner_t{}.csv", c / 20),
                &w.value.to_csv(W_NAMES, W_UNITS),
            )?;
        }
    }
    run.stage("write");
    run.writer.write("limit_cycle.csv", &t.finish())?;
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    run.check(
        "contraction",
        monotone,
        format!(
            "trace distance to steady state {:.4} -> {:.4}",
            distances[0], distances[chunks]
        ),
    );
    Ok(())
}

pub(crate) fn sync(run: &mut Run) -> Result<()> {
    run.stage("params");
    let base = run.cfg.base_params()?;
    let settings = noisy_settings(run);
    let phis = run.cfg.sweep.phis();
    let mut t = Table::new(
        &[
            params_comment(&base),
            format!(
                "engine={:?}; cutoffs={:?}; shots={}; MI in nats and bits",
                run.cfg.engine, run.cfg.cutoffs.two_mode, settings.shots
            ),
        ],
        &[&format!(
            "phi_rad,{},cov_x1x2,cross_check_trace_distance",
            SyncReport::CSV_HEADER
        )],
    );
    let mut min_mi = f64::INFINITY;
    let mut worst_cross: f64 = 0.0;
    for (k, &phi) in phis.iter().enumerate() {
        let p = EffectiveParams { phi, ..base };
        run.stage(&format!("steady state phi={phi}"));
        let state = two_mode_steady_state(run.cfg, &p, stream_seed(run.cfg.seed, 2 * k as u64))?;
        record(run, &state)?;
        let cross = if run.cfg.engine == Engine::Stroboscopic {
            run.stage(&format!("cross-check phi={phi}"));
            let layout =
                SpaceLayout::two_modes(run.cfg.cutoffs.two_mode[0], run.cfg.cutoffs.two_mode[1])?;
            let reference = lindblad::steady_state_direct(&lindblad::vdp_generator(&p, &layout)?)?;
            let modes = partial_trace(&state, &state.layout.mode_slots())?;
            let d = lindblad::trace_distance(&modes, &reference)?;
            worst_cross = worst_cross.max(d);
            Some(d)
        } else {
            None
        };
        run.stage(&format!("readout phi={phi}"));
        let seed = stream_seed(run.cfg.seed, 2 * k as u64 + 1);
        let joint = partial_trace(&state, &state.layout.mode_slots())?;
        let pxx = tomography::joint_distribution(&joint, &settings, seed)?;
        let pxp = tomography::joint_distribution(
            &joint,
            &syncmetrics::xp_settings(&settings),
            syncmetrics::xp_seed(seed),
        )?;
        run.warn(
            pxx.warnings
                .iter()
                .chain(&pxp.warnings)
                .map(|s| format!("phi={phi}: {s}")),
        );
        let report = syncmetrics::report_from_grids(&joint, &pxx.value, &pxp.value)?;
        min_mi = min_mi.min(report.i_xx).min(report.i_xp);
        let cov = syncmetrics::quadrature_covariance(&joint, settings.phi1, settings.phi2)?;
        t.row([
            num(phi),
            report.csv_row(),
            num(cov),
            cross.map(num).unwrap_or_default(),
        ]);
        run.writer.write(
            &format!("p_xx_phi{k}.csv"),
            &pxx.value.to_csv(P_NAMES, P_UNITS),
        )?;
        run.writer.write(
            &format!("p_xp_phi{k}.csv"),
            &pxp.value.to_csv(["x1", "p2", P_NAMES[2]], P_UNITS),
        )?;
    }
    run.stage("write");
    run.writer.write("sync.csv", &t.finish())?;
    run.check(
        "mi_nonnegative",
        min_mi >= -1e-9,
        format!("min MI {min_mi:.3e} nats"),
    );
    if run.cfg.engine == Engine::Stroboscopic {
        let bound = run.cfg.sweep.cross_validation_bound();
        run.check(
            "engine_cross_check",
            worst_cross <= bound,
            format!(
                "max trace distance to the effective steady state {worst_cross:.4} (bound {bound})"
            ),
        );
    }
    Ok(())
}

pub(crate) fn arnold(run: &mut Run) -> Result<()> {
    run.stage("sweep");
    let v = run.cfg.sweep.v_over_v0();
    let dw = run.cfg.sweep.detunings_hz(Scenario::Arnold);
    let res = arnold_sweep(run.cfg, &v, &dw)?;
    run.audit.merge(&res.audit);
    run.warn(res.warnings.iter().cloned());
    run.stage("write");
    let head = vec![
        format!(
            "V0/2pi={} Hz; ensemble={}; shots={}",
            res.v0 / TAU,
            run.cfg.noise.ensemble_size,
            run.cfg.shots()
        ),
        format!("v_over_v0: {v:?}"),
        format!("detuning_hz: {dw:?}"),
        "I = I[x1:x2] + I[x1:p2] in nats; std over the noise ensemble".into(),
    ];
    let mut t = Table::new(
        &head,
        &[
            "v_over_v0",
            "detuning_hz",
            "mean_i",
            "std_i",
            "mean_i_vn",
            "std_i_vn",
            "members_ok",
            "error",
        ],
    );
    let mut s = Table::new(
        &head,
        &[&format!(
            "v_over_v0,detuning_hz,member,{}",
            SyncReport::CSV_HEADER
        )],
    );
    let mut failed = 0;
    for pt in &res.points {
        t.row([
            num(pt.v_over_v0),
            num(pt.detuning_hz),
            num(pt.mean_i),
            num(pt.std_i),
            num(pt.mean_i_vn),
            num(pt.std_i_vn),
            pt.samples.len().to_string(),
            pt.error.clone().unwrap_or_default().replace(',', ";"),
        ]);
        for (m, r) in pt.samples.iter().enumerate() {
            s.row([
                num(pt.v_over_v0),
                num(pt.detuning_hz),
                m.to_string(),
                r.csv_row(),
            ]);
        }
        if let Some(e) = &pt.error {
            failed += 1;
            run.warn([format!(
                "V/V0={}, dw={} Hz: {e}",
                pt.v_over_v0, pt.detuning_hz
            )]);
        }
    }
    let mut c = Table::new(
        &[format!(
            "first crossing of I = {} nats along each detuning row",
            res.contour_level
        )],
        &["v_over_v0", "detuning_hz"],
    );
    for [a, b] in &res.contour {
        c.row([num(*a), num(*b)]);
    }
    run.writer.write("arnold.csv", &t.finish())?;
    run.writer.write("arnold_samples.csv", &s.finish())?;
    run.writer.write("arnold_contour.csv", &c.finish())?;
    run.check(
        "sweep_complete",
        failed == 0,
        format!("{failed} of {} points had failed members", res.points.len()),
    );
    Ok(())
}

pub(crate) fn sense(run: &mut Run) -> Result<()> {
    run.stage("sweep");
    let base = run.cfg.base_params()?;
    let dw = run.cfg.sweep.detunings_hz(Scenario::Sense);
    let res = sense_sweep(run.cfg, &dw)?;
    run.audit.merge(&res.audit);
    run.warn(res.warnings.iter().cloned());
    run.stage("write");
    let mut t = Table::new(
        &[
            params_comment(&base),
            format!(
                "detuning_hz (mode 2): {dw:?}; ensemble={}",
                run.cfg.noise.ensemble_size
            ),
            format!(
                "phase method {:?}; control = drive off",
                run.cfg.sweep.phase_method()
            ),
        ],
        &[
            "detuning_hz",
            "s2_mean",
            "s2_std",
            "s1_mean",
            "s1_std",
            "control_s2_mean",
            "control_s2_max",
            "error",
        ],
    );
    for p in &res.points {
        t.row([
            num(p.detuning_hz),
            num(p.s2_mean),
            num(p.s2_std),
            num(p.s1_mean),
            num(p.s1_std),
            num(p.control_s2_mean),
            num(p.control_s2_max),
            p.error.clone().unwrap_or_default().replace(',', ";"),
        ]);
        if let Some(e) = &p.error {
            run.warn([format!("dw={} Hz: {e}", p.detuning_hz)]);
        }
    }
    run.writer.write("sense.csv", &t.finish())?;
    for (label, w) in &res.wigners {
        run.writer
            .write(&format!("wigner_{label}.csv"), &w.to_csv(W_NAMES, W_UNITS))?;
    }
    let worst = res
        .points
        .iter()
        .map(|p| p.control_s2_max)
        .fold(0.0, f64::max);
    run.check(
        "control_s2",
        worst < 0.05,
        format!("max drive-off S2 {worst:.3e}"),
    );
    run.check(
        "control_phase_symmetric",
        res.control_max_s < 1e-10,
        format!("{:.3e}", res.control_max_s),
    );
    Ok(())
}

pub(crate) fn meanfield(run: &mut Run) -> Result<()> {
    run.stage("params");
    let base = run.cfg.base_params()?;
    let phis = run.cfg.sweep.phis();
    let mut t = Table::new(
        &[
            params_comment(&base),
            "eigenvalues in 1/s; residual in units of kappa_plus".into(),
        ],
        &[
            "phi_rad",
            "point",
            "abs_alpha1",
            "abs_alpha2",
            "phase_difference_rad",
            "residual",
            "lambda_1",
            "lambda_2",
            "stable",
        ],
    );
    let mut worst: f64 = 0.0;
    for &phi in &phis {
        run.stage(&format!("fixed points phi={phi}"));
        let p = EffectiveParams {
            phi,
            delta1: 0.0,
            delta2: 0.0,
            drive_amp: 0.0,
            ..base
        };
        for (i, fp) in meanfield::fixed_points(&p)?.iter().enumerate() {
            let st = meanfield::stability(fp, &p)?;
            let expect = if i == 0 {
                [p.kappa_plus, p.kappa_plus - 2.0 * p.coupling]
            } else {
                [-p.kappa_plus, -p.kappa_plus - 2.0 * p.coupling]
            };
            let mut e = expect;
            e.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in st.eigenvalues.iter().zip(e) {
                worst = worst.max((a - b).abs() / p.kappa_plus);
            }
            let dphase = if fp.norm() > 0.0 {
                (fp.alpha1 * fp.alpha2.conj()).arg()
            } else {
                0.0
            };
            t.row([
                num(phi),
                i.to_string(),
                num(fp.alpha1.norm()),
                num(fp.alpha2.norm()),
                num(dphase),
                num(meanfield::residual(fp, &p)),
                num(st.eigenvalues[0]),
                num(st.eigenvalues[1]),
                st.stable.to_string(),
            ]);
        }
    }
    run.stage("trajectory");
    let [re, im] = run.cfg.sweep.initial_alpha();
    let a1 = C64::new(re, im);
    let start = MFState::new(a1, a1 * C64::new(0.0, 0.5));
    let duration = run.cfg.sweep.duration_kappa() / base.kappa_plus;
    let traj = meanfield::integrate_mf(start, &base, duration, 0.01 / base.kappa_plus)?;
    let end = *traj.last().expect("nonempty trajectory");
    run.stage("lissajous");
    let curves = meanfield::lissajous(&base, &phis, 200)?;
    run.stage("write");
    run.writer.write("meanfield.csv", &t.finish())?;
    run.writer.write("trajectory.csv", &traj.to_csv())?;
    for (k, c) in curves.iter().enumerate() {
        let mut l = Table::new(
            &[format!(
                "phi={} rad; x = sqrt(2) Re alpha over one period",
                c.phi
            )],
            &["x1", "x2"],
        );
        for (a, b) in c.x1.iter().zip(&c.x2) {
            l.row([num(*a), num(*b)]);
        }
        run.writer
            .write(&format!("lissajous_phi{k}.csv"), &l.finish())?;
    }
    run.check(
        "closed_form_eigenvalues",
        worst < 1e-12,
        format!("max relative deviation {worst:.3e}"),
    );
    if base.delta1 == base.delta2 && base.drive_amp == 0.0 && base.coupling > 0.0 {
        let d = meanfield::distance_to_sync_family(&end, &base) / base.mean_field_radius();
        run.check(
            "trajectory_locks",
            d < 1e-3,
            format!("relative distance to synchronized family {d:.3e}"),
        );
    }
    Ok(())
}

pub(crate) fn tomo_check(run: &mut Run) -> Result<()> {
    run.stage("states");
    let cutoff = run.cfg.cutoffs.single;
    let exact = ReadoutSettings {
        shots: 0,
        ..run.cfg.readout
    };
    let noisy = noisy_settings(run);
    let states = [
        ("vacuum", StateKind::Vacuum),
        ("fock1", StateKind::Fock(1)),
        ("coherent2", StateKind::Coherent(C64::new(2.0, 0.0))),
        (
            "mixture2",
            StateKind::OppositeCoherentMixture(C64::new(2.0, 0.0)),
        ),
    ];
    let mut t = Table::new(
        &[format!(
            "beta_max={} points={} pad={} shots={}; cutoff={cutoff}",
            exact.beta_max, exact.points, exact.zero_pad_factor, noisy.shots
        )],
        &[
            "state",
            "max_error_exact",
            "max_error_noisy",
            "integral",
            "peak_re_alpha",
            "peak_im_alpha",
        ],
    );
    let mut worst: f64 = 0.0;
    for (k, (name, kind)) in states.iter().enumerate() {
        run.stage(&format!("wigner {name}"));
        let s = canonical_state(*kind, cutoff)?;
        let w = tomography::wigner(&s, &exact, 0)?;
        let reference = tomography::wigner_fock(&s, w.value.axis1, w.value.axis2)?;
        let err = w.value.max_abs_diff(&reference)?;
        let wn = tomography::wigner(&s, &noisy, stream_seed(run.cfg.seed, k as u64))?;
        let errn = wn.value.max_abs_diff(&reference)?;
        run.warn(wn.warnings.iter().map(|x| format!("{name}: {x}")));
        worst = worst.max(err);
        let (pr, pi) = w.value.argmax();
        t.row([
            name.to_string(),
            num(err),
            num(errn),
            num(w.value.integral()),
            num(pr),
            num(pi),
        ]);
        run.writer.write(
            &format!("wigner_{name}.csv"),
            &w.value.to_csv(W_NAMES, W_UNITS),
        )?;
        run.writer.write(
            &format!("wigner_{name}_noisy.csv"),
            &wn.value.to_csv(W_NAMES, W_UNITS),
        )?;
    }
    run.stage("characteristic function");
    let vac = canonical_state(StateKind::Vacuum, cutoff)?;
    let axis = Axis::centered(2.0, 16)?;
    let mut chi_err: f64 = 0.0;
    for a in axis.coords() {
        for b in axis.coords() {
            let xi = C64::new(a, b);
            let chi = tomography::char_function_single(&vac, xi)?.value;
            chi_err = chi_err.max((chi - C64::new((-0.5 * xi.norm_sqr()).exp(), 0.0)).norm());
        }
    }
    run.stage("two-mode marginal");
    let layout = SpaceLayout::two_modes(run.cfg.cutoffs.two_mode[0], run.cfg.cutoffs.two_mode[1])?;
    let vac2 = lindblad::vacuum(&layout)?;
    let p = tomography::joint_distribution(&vac2, &exact, 0)?.value;
    let var = marginal_variance(&p, 0);
    run.writer.write("tomo_check.csv", &t.finish())?;
    run.check(
        "wigner_exact",
        worst <= 0.02,
        format!("max |W - W_ref| {worst:.3e}"),
    );
    run.check(
        "vacuum_characteristic",
        chi_err <= 1e-10,
        format!("max error {chi_err:.3e}"),
    );
    run.check(
        "vacuum_marginal_variance",
        (var - 0.5).abs() <= 0.01,
        format!("var x1 = {var:.5}"),
    );
    Ok(())
}

fn marginal_variance(p: &Grid2D, axis: usize) -> f64 {
    let m = p.marginal(axis);
    let ax = if axis == 0 { p.axis1 } else { p.axis2 };
    let xs = ax.coords();
    let total: f64 = m.iter().sum();
    let mean = xs.iter().zip(&m).map(|(x, w)| x * w).sum::<f64>() / total;
    xs.iter()
        .zip(&m)
        .map(|(x, w)| (x - mean).powi(2) * w)
        .sum::<f64>()
        / total
}
