use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

mod config;
mod experiments;
mod output;

use config::{ExperimentConfig, OUTPUT_DIR_ENV};
use experiments::{Experiment, Setup};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("configuration error:\n{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: qedtrunc::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core {
                source: qedtrunc::Error::CutoffCeiling(_) | qedtrunc::Error::NotConverged { .. },
                ..
            } => 3,
            _ => 1,
        }
    }
}

fn core(context: impl Into<String>) -> impl FnOnce(qedtrunc::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Core { context, source }
}

#[derive(Parser)]
#[command(name = "qedtrunc", version, about = "Gauge-consistent truncated cavity QED: figure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or `all`) and write CSV tables plus provenance JSON.
    Run {
        #[arg(value_enum)]
        experiment: Target,
        #[command(flatten)]
        opts: ConfigArgs,
        /// Worker threads for the coupling sweep (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a configuration without running anything.
    Validate {
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// List the available experiments.
    List,
    /// Calibrate the double well and print the matter basis summary as JSON.
    DumpBasis {
        #[command(flatten)]
        opts: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    #[value(name = "all")]
    All,
    #[value(name = "fig1b")]
    Fig1b,
    #[value(name = "fig2")]
    Fig2,
    #[value(name = "fig3")]
    Fig3,
    #[value(name = "fig4a")]
    Fig4a,
    #[value(name = "fig4b")]
    Fig4b,
    #[value(name = "figS1")]
    FigS1,
    #[value(name = "figS2")]
    FigS2,
    #[value(name = "figS3")]
    FigS3,
    #[value(name = "figS4")]
    FigS4,
    #[value(name = "figS5")]
    FigS5,
}

impl Target {
    fn experiments(self) -> Vec<Experiment> {
        let one = match self {
            Target::All => return Experiment::ALL.to_vec(),
            Target::Fig1b => Experiment::Fig1b,
            Target::Fig2 => Experiment::Fig2,
            Target::Fig3 => Experiment::Fig3,
            Target::Fig4a => Experiment::Fig4a,
            Target::Fig4b => Experiment::Fig4b,
            Target::FigS1 => Experiment::FigS1,
            Target::FigS2 => Experiment::FigS2,
            Target::FigS3 => Experiment::FigS3,
            Target::FigS4 => Experiment::FigS4,
            Target::FigS5 => Experiment::FigS5,
        };
        vec![one]
    }
}

/// Flags override the matching keys of the configuration file.
#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    eta_points: Option<usize>,
    /// Temperatures in units of omega, comma separated.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_points: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eta_dynamics: Option<f64>,
    /// Matter truncation M (keeps M + 1 levels).
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    target_mu: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    matter_levels: Option<usize>,
    #[arg(long)]
    photon_levels: Option<usize>,
    #[arg(long)]
    truncated_photon_levels: Option<usize>,
    #[arg(long)]
    dynamics_levels: Option<usize>,
    /// Use the fixed cutoffs instead of escalating through the schedule.
    #[arg(long)]
    no_converge: bool,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_owned(), v);
            }
        };
        put("eta_min", self.eta_min.map(Value::from));
        put("eta_max", self.eta_max.map(Value::from));
        put("eta_points", self.eta_points.map(Value::from));
        put("temperatures", self.temperatures.clone().map(Value::from));
        put("t_max", self.t_max.map(Value::from));
        put("t_points", self.t_points.map(Value::from));
        put("kappa", self.kappa.map(Value::from));
        put("eta_dynamics", self.eta_dynamics.map(Value::from));
        put("truncation", self.truncation.map(Value::from));
        put("target_mu", self.target_mu.map(Value::from));
        put("grid_points", self.grid_points.map(Value::from));
        put("matter_levels", self.matter_levels.map(Value::from));
        put("photon_levels", self.photon_levels.map(Value::from));
        put("truncated_photon_levels", self.truncated_photon_levels.map(Value::from));
        put("dynamics_levels", self.dynamics_levels.map(Value::from));
        put("converge", self.no_converge.then_some(Value::Bool(false)));
        put(
            "output_dir",
            self.output_dir.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned())),
        );
        m
    }

    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let source = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?),
            None => None,
        };
        let render = |issues: Vec<config::Issue>| {
            let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
            CliError::Config(lines.join("\n"))
        };
        let cfg = config::load(source.as_deref(), &self.overrides()).map_err(render)?;
        let issues = cfg.validate(source.as_deref());
        if !issues.is_empty() {
            return Err(render(issues));
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{:<6} {}", e.name(), e.description());
            }
        }
        Command::Validate { opts } => {
            let cfg = opts.load()?;
            println!("configuration valid ({} coupling points)", cfg.eta_grid().len());
        }
        Command::DumpBasis { opts } => {
            let setup = Setup::new(opts.load()?).map_err(core("matter calibration"))?;
            let doc = serde_json::json!({ "spec": setup.spec, "basis": setup.basis.to_json() });
            println!("{}", serde_json::to_string_pretty(&doc).expect("basis serializes"));
        }
        Command::Run {
            experiment,
            opts,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("  threads: {e}")))?;
            }
            let cfg = opts.load()?;
            let dir = cfg.output_dir.clone();
            let clock = std::time::Instant::now();
            let setup = Setup::new(cfg).map_err(core("matter calibration"))?;
            eprintln!("calibration: {:.2} s", clock.elapsed().as_secs_f64());
            for exp in experiment.experiments() {
                let out = experiments::run(exp, &setup).map_err(core(exp.name()))?;
                let io = |source| CliError::Io {
                    path: dir.clone(),
                    source,
                };
                let files = output::write_tables(&dir, &out.tables).map_err(io)?;
                let doc = output::provenance(exp, &setup, &out, &files);
                output::write_provenance(&dir, exp, &doc).map_err(io)?;
                let (c, t) = (out.cutoffs, out.timing);
                eprintln!(
                    "{}: cutoffs N_mat={} N_ph={} N_ph(truncated)={}; wrote {} table(s) to {}",
                    exp.name(),
                    c.matter_levels,
                    c.photon_levels,
                    c.truncated_photon_levels,
                    files.len(),
                    dir.display()
                );
                eprintln!(
                    "{}: timing convergence {:.2} s, sweep {:.2} s over {} points, fixed {:.2} s",
                    exp.name(),
                    t.convergence,
                    t.sweep,
                    t.points,
                    t.fixed
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
