//! Experiment configuration, read from TOML.
//!
//! Rates in the `[effective]` table are given as κ/2π in Hz; everything in `[schedule]` is in
//! SI units (rad/s, s) so that schedules round-trip exactly.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lindblad::{EffectiveParams, Regime};
use crate::pulses::{self, PulseSchedule, SegmentKind, SidebandHardware};
use crate::syncmetrics::PhaseMethod;
use crate::tomography::ReadoutSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SingleVdp,
    LimitCycle,
    Sync,
    Arnold,
    Sense,
    Meanfield,
    TomoCheck,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleVdp => "single-vdp",
            Scenario::LimitCycle => "limit-cycle",
            Scenario::Sync => "sync",
            Scenario::Arnold => "arnold",
            Scenario::Sense => "sense",
            Scenario::Meanfield => "meanfield",
            Scenario::TomoCheck => "tomo-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        toml::Value::String(s.to_string())
            .try_into()
            .map_err(|_| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Effective,
    Stroboscopic,
}

impl Engine {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(Engine::Effective),
            "stroboscopic" => Ok(Engine::Stroboscopic),
            _ => Err(Error::Config(format!(
                "unknown engine '{s}' (effective | stroboscopic)"
            ))),
        }
    }
}

/// Effective-model parameters as written in a config file. Starts from `preset` and
/// overrides individual values; frequencies are /2π in Hz, phases in rad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Option<Regime>,
    pub kappa_plus_hz: Option<f64>,
    pub kappa_minus_hz: Option<f64>,
    pub coupling_hz: Option<f64>,
    pub phi: Option<f64>,
    pub delta1_hz: Option<f64>,
    pub delta2_hz: Option<f64>,
    pub drive_amp_hz: Option<f64>,
    pub drive_phase: Option<f64>,
}

impl ModelSpec {
    pub fn preset(regime: Regime) -> Self {
        ModelSpec {
            preset: Some(regime),
            ..Default::default()
        }
    }

    pub fn resolve(&self) -> Result<EffectiveParams> {
        let base = self.preset.map(EffectiveParams::preset);
        let hz = |v: Option<f64>, fallback: Option<f64>, name: &str| -> Result<f64> {
            match (v, fallback) {
                (Some(x), _) => Ok(TAU * x),
                (None, Some(f)) => Ok(f),
                (None, None) => Err(Error::Config(format!(
                    "effective.{name} missing and no preset given"
                ))),
            }
        };
        let p = EffectiveParams {
            kappa_plus: hz(
                self.kappa_plus_hz,
                base.map(|b| b.kappa_plus),
                "kappa_plus_hz",
            )?,
            kappa_minus: hz(
                self.kappa_minus_hz,
                base.map(|b| b.kappa_minus),
                "kappa_minus_hz",
            )?,
            coupling: hz(self.coupling_hz, base.map(|b| b.coupling), "coupling_hz")?,
            phi: self.phi.unwrap_or(0.0),
            delta1: TAU * self.delta1_hz.unwrap_or(0.0),
            delta2: TAU * self.delta2_hz.unwrap_or(0.0),
            drive_amp: TAU * self.drive_amp_hz.unwrap_or(0.0),
            drive_phase: self.drive_phase.unwrap_or(0.0),
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative σ of the coupling V.
    pub coupling_rel_sigma: f64,
    /// σ of the detuning Δω/2π, Hz.
    pub freq_sigma: f64,
    pub ensemble_size: usize,
    /// Readout shots for ensemble members; falls back to `readout.shots`.
    pub shots: Option<u64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            coupling_rel_sigma: 0.02,
            freq_sigma: 37.0,
            ensemble_size: 20,
            shots: None,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.coupling_rel_sigma >= 0.0 && self.freq_sigma >= 0.0)
            || !self.coupling_rel_sigma.is_finite()
            || !self.freq_sigma.is_finite()
        {
            return Err(Error::Config("noise sigmas must be finite and >= 0".into()));
        }
        if self.ensemble_size < 1 {
            return Err(Error::Config("noise.ensemble_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cutoffs {
    pub single: usize,
    pub two_mode: [usize; 2],
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs {
            single: 30,
            two_mode: [12, 12],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cycles {
    pub n_uncoupled: usize,
    pub n_coupled: usize,
}

impl Default for Cycles {
    fn default() -> Self {
        Cycles {
            n_uncoupled: 15,
            n_coupled: 10,
        }
    }
}

/// Context only; never enters the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metadata {
    pub mode1_frequency_khz: f64,
    pub mode2_frequency_khz: f64,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            mode1_frequency_khz: 522.0,
            mode2_frequency_khz: 906.0,
        }
    }
}

/// Scenario grids and knobs. Unset lists take scenario-specific defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// κ₋/κ₊ values for single-vdp.
    pub ratios: Option<Vec<f64>>,
    /// Coupling phases φ for sync and meanfield.
    pub phis: Option<Vec<f64>>,
    /// V/V₀ for arnold.
    pub v_over_v0: Option<Vec<f64>>,
    /// Δω/2π in Hz for arnold and sense.
    pub detunings_hz: Option<Vec<f64>>,
    /// Run length in units of 1/κ₊ for limit-cycle and meanfield.
    pub duration_kappa: Option<f64>,
    pub snapshots: Option<usize>,
    /// Initial coherent amplitude (Re, Im) for limit-cycle and meanfield mode 1.
    pub initial_alpha: Option<[f64; 2]>,
    pub phase_bins: Option<usize>,
    pub phase_method: Option<PhaseMethod>,
    /// Trace-distance bound for the stroboscopic/effective cross-check.
    pub cross_validation_bound: Option<f64>,
    /// Steady-state ℐ level traced as the tongue boundary.
    pub contour_level: Option<f64>,
}

impl SweepSpec {
    pub fn ratios(&self) -> Vec<f64> {
        self.ratios
            .clone()
            .unwrap_or_else(|| (0..9).map(|k| 10f64.powf(-1.0 + 0.25 * k as f64)).collect())
    }

    pub fn phis(&self) -> Vec<f64> {
        self.phis
            .clone()
            .unwrap_or_else(|| vec![0.0, FRAC_PI_2, PI])
    }

    pub fn v_over_v0(&self) -> Vec<f64> {
        self.v_over_v0
            .clone()
            .unwrap_or_else(|| (0..8).map(|k| 0.25 * k as f64).collect())
    }

    pub fn detunings_hz(&self, scenario: Scenario) -> Vec<f64> {
        self.detunings_hz.clone().unwrap_or_else(|| match scenario {
            Scenario::Sense => (0..5).map(|k| 50.0 * k as f64).collect(),
            _ => (0..8).map(|k| 25.0 * k as f64).collect(),
        })
    }

    pub fn duration_kappa(&self) -> f64 {
        self.duration_kappa.unwrap_or(10.0)
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots.unwrap_or(5)
    }

    pub fn initial_alpha(&self) -> [f64; 2] {
        self.initial_alpha.unwrap_or([0.5, 0.0])
    }

    pub fn phase_bins(&self) -> usize {
        self.phase_bins.unwrap_or(64)
    }

    pub fn phase_method(&self) -> PhaseMethod {
        self.phase_method.unwrap_or_default()
    }

    pub fn cross_validation_bound(&self) -> f64 {
        self.cross_validation_bound.unwrap_or(0.3)
    }

    pub fn contour_level(&self) -> f64 {
        self.contour_level.unwrap_or(0.05)
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub engine: Engine,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PulseSchedule>,
    /// Used to design a schedule when the stroboscopic engine is given effective parameters.
    #[serde(default)]
    pub hardware: SidebandHardware,
    #[serde(default)]
    pub readout: ReadoutSettings,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub cycles: Cycles,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config with preset parameters and all defaults.
    pub fn new(scenario: Scenario, regime: Regime, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            engine: Engine::Effective,
            seed,
            effective: Some(ModelSpec::preset(regime)),
            schedule: None,
            hardware: SidebandHardware::default(),
            readout: ReadoutSettings::default(),
            cutoffs: Cutoffs::default(),
            cycles: Cycles::default(),
            noise: NoiseSpec::default(),
            sweep: SweepSpec::default(),
            metadata: Metadata::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        match (&self.effective, &self.schedule) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either [effective] or [schedule], not both".into(),
                ));
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of [effective] or [schedule] is required".into(),
                ))
            }
            _ => {}
        }
        if let Some(m) = &self.effective {
            m.resolve()?;
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(cfg)?;
            pulses::effective_rates(s).map_err(cfg)?;
        }
        self.readout.validate().map_err(cfg)?;
        self.noise.validate()?;
        if self.cutoffs.single < 2 || self.cutoffs.two_mode.iter().any(|&n| n < 2) {
            return Err(Error::Config("cutoffs must be >= 2".into()));
        }
        let sw = &self.sweep;
        let finite = |v: &Option<Vec<f64>>, name: &str| -> Result<()> {
            match v {
                Some(x) if x.is_empty() || x.iter().any(|y| !y.is_finite()) => Err(Error::Config(
                    format!("sweep.{name} must be a nonempty list of finite numbers"),
                )),
                _ => Ok(()),
            }
        };
        finite(&sw.ratios, "ratios")?;
        finite(&sw.phis, "phis")?;
        finite(&sw.v_over_v0, "v_over_v0")?;
        finite(&sw.detunings_hz, "detunings_hz")?;
        if sw.ratios().iter().any(|&r| r <= 0.0) || sw.v_over_v0().iter().any(|&v| v < 0.0) {
            return Err(Error::Config(
                "ratios must be > 0 and v_over_v0 >= 0".into(),
            ));
        }
        if sw.duration_kappa().is_nan()
            || sw.duration_kappa() <= 0.0
            || sw.snapshots() < 1
            || sw.phase_bins() < 8
        {
            return Err(Error::Config(
                "duration_kappa > 0, snapshots >= 1, phase_bins >= 8 required".into(),
            ));
        }
        if self.scenario == Scenario::Sense && self.base_params()?.drive_amp <= 0.0 {
            return Err(Error::Config(
                "sense needs effective.drive_amp_hz > 0".into(),
            ));
        }
        if self.engine == Engine::Stroboscopic {
            let two_mode = matches!(self.scenario, Scenario::Sync | Scenario::Arnold);
            if !two_mode {
                return Err(Error::Config(format!(
                    "scenario {} runs on the effective engine only",
                    self.scenario.name()
                )));
            }
            if self
                .schedule
                .iter()
                .flat_map(|s| &s.segments)
                .any(|s| matches!(s.kind, SegmentKind::Drive { .. }))
            {
                return Err(Error::Config(
                    "stroboscopic two-mode runs take no DRIVE segments".into(),
                ));
            }
        }
        Ok(())
    }

    /// Effective parameters, from `[effective]` or implied by `[schedule]`.
    pub fn base_params(&self) -> Result<EffectiveParams> {
        match (&self.effective, &self.schedule) {
            (Some(m), _) => m.resolve(),
            (None, Some(s)) => Ok(pulses::effective_rates(s)?.params),
            (None, None) => Err(Error::Config("no model given".into())),
        }
    }

    /// Stroboscopic schedule for `params`: one designed from `hardware`, or the configured
    /// one with its SYNC amplitude, SYNC phase and detunings set from `params` (single-mode
    /// rates stay as scheduled).
    pub fn schedule_for(&self, params: &EffectiveParams) -> Result<PulseSchedule> {
        match &self.schedule {
            Some(s) => {
                let rates = pulses::effective_rates(s)?;
                let scale = if rates.coupling > 0.0 {
                    (params.coupling / rates.coupling).sqrt()
                } else if params.coupling > 0.0 {
                    return Err(Error::Config(
                        "schedule has no SYNC segment but coupling > 0".into(),
                    ));
                } else {
                    0.0
                };
                let mut out = s.clone();
                for seg in &mut out.segments {
                    if seg.kind == SegmentKind::Sync {
                        seg.phase = (params.phi - PI).rem_euclid(TAU);
                        seg.rabi *= scale;
                    }
                }
                out.delta1 = params.delta1;
                out.delta2 = params.delta2;
                Ok(out)
            }
            None => pulses::designed_schedule(params, &self.hardware),
        }
    }

    pub fn shots(&self) -> u64 {
        self.noise.shots.unwrap_or(self.readout.shots)
    }

    /// SHA-256 of the canonical JSON form, `output_dir` excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config is serializable");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub engine: Option<Engine>,
    pub shots: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        if let Some(n) = self.shots {
            cfg.readout.shots = n;
            cfg.noise.shots = Some(n);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "sync"
seed = 7

[effective]
preset = "classical"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.cutoffs.two_mode, [12, 12]);
        assert_eq!(c.cycles, Cycles::default());
        assert_eq!(c.readout, ReadoutSettings::default());
        assert_eq!(c.base_params().unwrap(), EffectiveParams::classical());
    }

    #[test]
    fn seed_is_mandatory() {
        let t = MINIMAL.replace("seed = 7", "");
        assert!(matches!(
            ExperimentConfig::from_toml(&t),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = format!("{MINIMAL}kappa = 3\n");
        assert!(ExperimentConfig::from_toml(&t).is_err());
    }

    #[test]
    fn effective_and_schedule_are_exclusive() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.schedule = Some(pulses::table_schedule(Regime::Classical, 0.0));
        assert!(c.validate().is_err());
        c.effective = None;
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_schedule() {
        let mut c = ExperimentConfig::new(Scenario::Sync, Regime::Classical, 1);
        c.effective = None;
        c.engine = Engine::Stroboscopic;
        c.schedule = Some(
            pulses::designed_schedule(&EffectiveParams::quantum(), &SidebandHardware::default())
                .unwrap(),
        );
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.readout.shots += 1;
        assert_ne!(a.hash(), b.hash());
        let explicit = format!("{MINIMAL}[readout]\nshots = 200\n");
        assert_eq!(
            ExperimentConfig::from_toml(&explicit).unwrap().hash(),
            a.hash()
        );
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        Overrides {
            seed: Some(9),
            engine: Some(Engine::Stroboscopic),
            shots: Some(0),
            out: Some("x".into()),
        }
        .apply(&mut c)
        .unwrap();
        assert_eq!(
            (c.seed, c.engine, c.readout.shots, c.shots()),
            (9, Engine::Stroboscopic, 0, 0)
        );
        let mut s = ExperimentConfig::from_toml(&MINIMAL.replace("sync", "single-vdp")).unwrap();
        let o = Overrides {
            engine: Some(Engine::Stroboscopic),
            ..Default::default()
        };
        assert!(matches!(o.apply(&mut s), Err(Error::Config(_))));
    }

    #[test]
    fn hz_fields_are_scaled() {
        let t = "scenario = \"sense\"\nseed = 1\n[effective]\npreset = \"quantum\"\ndrive_amp_hz = 30\n";
        let c = ExperimentConfig::from_toml(t).unwrap();
        assert!((c.base_params().unwrap().drive_amp - TAU * 30.0).abs() < 1e-12);
    }

    #[test]
    fn sense_without_drive_is_a_config_error() {
        let t = "scenario = \"sense\"\nseed = 1\n[effective]\npreset = \"quantum\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml(t),
            Err(Error::Config(_))
        ));
    }
}
