use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ssb_erasure::artifacts::{compare_runs, load_config, verify, CompareMetric};
use ssb_erasure::config::{EngineKind, ExperimentConfig, ExperimentKind, PresetName};
use ssb_erasure::runner::run_experiment;

#[derive(Parser)]
#[command(name = "ssb-erasure", version, about = "Erasure by spontaneous symmetry breaking on a 2D Ising register")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an erasure protocol (classical_bit by default).
    Run {
        #[command(flatten)]
        common: Common,
        /// classical_bit, quantum_bit, classical_cooperative or quantum_cooperative.
        #[arg(long)]
        experiment: Option<ExperimentKind>,
    },
    /// Critical-point scan and temperature inference.
    JcScan(Common),
    /// Run a protocol and hold its final ensemble under the endpoint Hamiltonian.
    Stability(Common),
    /// Randomized driven cycles checked against the exact open-system oracle.
    OracleSuite(Common),
    /// Compare two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// all, total_variation, switching or ledger.
        #[arg(long, default_value = "all")]
        metric: CompareMetric,
    },
    /// Re-hash a run directory against its manifest.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML configuration, or a manifest.json to re-run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Schedule preset: classical or quantum.
    #[arg(long)]
    preset: Option<PresetName>,
    #[arg(long)]
    engine: Option<EngineKind>,
}

impl Common {
    fn config(&self, experiment: Option<ExperimentKind>) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = experiment {
            c.experiment = e;
        }
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        if let Some(n) = self.replicas {
            c.replicas = n;
        }
        if let Some(p) = self.preset {
            c.schedule.preset = Some(p);
        }
        if let Some(e) = self.engine {
            c.engine = Some(e);
        }
        Ok(c)
    }
}

fn execute(config: ExperimentConfig) -> Result<()> {
    let manifest = run_experiment(&config)?;
    println!(
        "{} finished in {:.1} s; {} files in {}",
        config.experiment,
        manifest.elapsed_s,
        manifest.files.len(),
        config.output_dir.display()
    );
    let report = std::fs::read_to_string(config.output_dir.join("report.json"))?;
    println!("{report}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, experiment } => {
            let c = common.config(experiment)?;
            if !c.experiment.is_protocol() {
                anyhow::bail!("run expects an erasure protocol, got {}", c.experiment);
            }
            execute(c)
        }
        Command::JcScan(common) => execute(common.config(Some(ExperimentKind::JcScan))?),
        Command::Stability(common) => execute(common.config(Some(ExperimentKind::StabilityHold))?),
        Command::OracleSuite(common) => execute(common.config(Some(ExperimentKind::OracleSuite))?),
        Command::Compare { a, b, metric } => {
            let r = compare_runs(&a, &b, metric)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
        Command::Verify { dir } => {
            let n = verify(&dir)?;
            println!("{}: {n} files verified", dir.display());
            Ok(())
        }
    }
}
