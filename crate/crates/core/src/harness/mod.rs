//! Scenario orchestration, sweeps, noise ensembles and run artifacts.

mod config;
mod output;
mod scenarios;
mod sweeps;

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    Cutoffs, Cycles, Engine, ExperimentConfig, Metadata, ModelSpec, NoiseSpec, Overrides, Scenario,
    SweepSpec,
};
pub use output::{Audit, Check, Manifest, OutputFile, RunWriter, Table};
pub use sweeps::{
    arnold_sweep, noise_ensemble, sense_sweep, SensePoint, SenseResult, SweepPoint, SweepResult,
};

use crate::error::{Error, Result};
use crate::hilbert::{QuantumState, SpaceLayout};
use crate::lindblad::{self, EffectiveParams};
use crate::pulses;

/// Child seed for stream `stream` of `seed`.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Steady state of the two-mode model on the configured engine.
///
/// The stroboscopic engine runs `cycles.n_uncoupled + cycles.n_coupled` cycles from vacuum.
pub fn two_mode_steady_state(
    cfg: &ExperimentConfig,
    params: &EffectiveParams,
    seed: u64,
) -> Result<QuantumState> {
    let [n1, n2] = cfg.cutoffs.two_mode;
    let layout = SpaceLayout::two_modes(n1, n2)?;
    match cfg.engine {
        Engine::Effective => {
            lindblad::steady_state_direct(&lindblad::vdp_generator(params, &layout)?)
        }
        Engine::Stroboscopic => {
            let sched = cfg.schedule_for(params)?;
            pulses::run_protocol(
                &lindblad::vacuum(&layout)?,
                &sched,
                cfg.cycles.n_uncoupled,
                cfg.cycles.n_coupled,
                seed,
            )
        }
    }
}

/// Steady state of one oscillator (gain, loss, δ₁ and the drive of `params`).
pub fn single_steady_state(params: &EffectiveParams, cutoff: usize) -> Result<QuantumState> {
    lindblad::steady_state_direct(&lindblad::single_vdp_generator(params, cutoff)?)
}

/// A failed run: the stage that failed and why.
#[derive(Debug)]
pub struct ScenarioError {
    pub stage: String,
    pub error: Error,
    pub manifest: Option<Box<Manifest>>,
}

impl ScenarioError {
    /// 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_config() {
            2
        } else {
            3
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage '{}': {}", self.stage, self.error)
    }
}

impl std::error::Error for ScenarioError {}

/// Mutable state of one run, threaded through the scenario code.
pub(crate) struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub writer: RunWriter,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub audit: Audit,
    pub stage: String,
}

impl Run<'_> {
    pub fn stage(&mut self, s: &str) {
        self.stage = s.to_string();
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check::new(name, pass, detail));
    }

    pub fn warn<I: IntoIterator<Item = String>>(&mut self, w: I) {
        self.warnings.extend(w);
    }
}

/// Runs the configured scenario, writing CSVs and `manifest.json` into `output_dir`.
///
/// On failure the manifest is still written, naming the failed stage.
pub fn run_scenario(cfg: &ExperimentConfig) -> std::result::Result<Manifest, ScenarioError> {
    let started = output::unix_now();
    let clock = std::time::Instant::now();
    if let Err(error) = cfg.validate() {
        return Err(ScenarioError {
            stage: "config".into(),
            error,
            manifest: None,
        });
    }
    let writer = RunWriter::create(&cfg.output_dir).map_err(|error| ScenarioError {
        stage: "output".into(),
        error,
        manifest: None,
    })?;
    let mut run = Run {
        cfg,
        writer,
        checks: Vec::new(),
        warnings: Vec::new(),
        audit: Audit::default(),
        stage: "start".into(),
    };
    let result = match cfg.scenario {
        Scenario::SingleVdp => scenarios::single_vdp(&mut run),
        Scenario::LimitCycle => scenarios::limit_cycle(&mut run),
        Scenario::Sync => scenarios::sync(&mut run),
        Scenario::Arnold => scenarios::arnold(&mut run),
        Scenario::Sense => scenarios::sense(&mut run),
        Scenario::Meanfield => scenarios::meanfield(&mut run),
        Scenario::TomoCheck => scenarios::tomo_check(&mut run),
    };
    let Run {
        writer,
        mut checks,
        warnings,
        audit,
        stage,
        ..
    } = run;
    checks.extend(audit.checks());
    let (status, failed_stage, error) = match &result {
        Ok(()) => ("completed".to_string(), None, None),
        Err(e) => (
            "failed".to_string(),
            Some(stage.clone()),
            Some(e.to_string()),
        ),
    };
    let mut manifest = Manifest {
        library: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.scenario.name().into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: serde_json::to_value(cfg).unwrap_or_default(),
        status,
        failed_stage,
        error,
        checks,
        warnings,
        outputs: Vec::new(),
        started_unix: started,
        finished_unix: output::unix_now(),
        elapsed_s: clock.elapsed().as_secs_f64(),
    };
    let written = writer.finish(&mut manifest);
    match (result, written) {
        (Ok(()), Ok(())) => Ok(manifest),
        (Err(error), _) => Err(ScenarioError {
            stage,
            error,
            manifest: Some(Box::new(manifest)),
        }),
        (Ok(()), Err(error)) => Err(ScenarioError {
            stage: "manifest".into(),
            error,
            manifest: Some(Box::new(manifest)),
        }),
    }
}
