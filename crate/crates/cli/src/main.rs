use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qvdp::harness::{run_scenario, Engine, ExperimentConfig, Overrides, Scenario};

#[derive(Parser)]
#[command(
    name = "qvdp",
    version,
    about = "Dissipatively coupled quantum van der Pol oscillators"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Single oscillator steady states over a kappa_minus/kappa_plus sweep
    SingleVdp(Common),
    /// Relaxation of one oscillator onto its limit cycle
    LimitCycle(Common),
    /// Mutual information of the coupled pair versus coupling phase
    Sync(Common),
    /// Arnold tongue over coupling strength and detuning
    Arnold(Common),
    /// Detuning sensing through the phase coherence of the undriven mode
    Sense(Common),
    /// Mean-field fixed points, stability and orbits
    Meanfield(Common),
    /// Reconstruction checks on known states
    TomoCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// effective | stroboscopic
    #[arg(long)]
    engine: Option<String>,
    /// Projection-noise shots per readout point (0 = exact)
    #[arg(long)]
    shots: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Verb {
    fn split(self) -> (Scenario, Common) {
        match self {
            Verb::SingleVdp(c) => (Scenario::SingleVdp, c),
            Verb::LimitCycle(c) => (Scenario::LimitCycle, c),
            Verb::Sync(c) => (Scenario::Sync, c),
            Verb::Arnold(c) => (Scenario::Arnold, c),
            Verb::Sense(c) => (Scenario::Sense, c),
            Verb::Meanfield(c) => (Scenario::Meanfield, c),
            Verb::TomoCheck(c) => (Scenario::TomoCheck, c),
        }
    }
}

fn load(scenario: Scenario, c: &Common) -> qvdp::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if cfg.scenario != scenario {
        return Err(qvdp::Error::Config(format!(
            "{} holds a '{}' experiment, not '{}'",
            c.config.display(),
            cfg.scenario.name(),
            scenario.name()
        )));
    }
    let overrides = Overrides {
        seed: c.seed,
        engine: c.engine.as_deref().map(Engine::parse).transpose()?,
        shots: c.shots,
        out: c.out.clone(),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let (scenario, common) = Cli::parse().verb.split();
    let cfg = match load(scenario, &common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(&cfg) {
        Ok(m) => {
            for c in &m.checks {
                println!(
                    "{} {}: {}",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} files to {} in {:.1} s",
                m.outputs.len() + 1,
                cfg.output_dir.display(),
                m.elapsed_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{} failed: {e}", scenario.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
