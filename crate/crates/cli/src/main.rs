use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isosand_core::isograph::GraphSpec;

mod config;
mod run;

use config::{Emit, ExperimentConfig, FileConfig, GrainSpec, OneOrMany};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] isosand_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use isosand_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 1,
            CliError::Numerical(_) => 3,
            CliError::Core(e) => match e {
                E::Domain(_) | E::Construction(_) | E::NotAdmissible(_) | E::Refused(_) => 2,
                E::Io(_) | E::Json(_) => 2,
                E::Structural(_) | E::Invariant(_) => 1,
                E::Pole(_)
                | E::RootNotFound(_)
                | E::NoConvergence { .. }
                | E::RegionTooSmall { .. }
                | E::Empty(_) => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "isosand", version, about = "Leaky sandpiles on isoradial graphs with elliptic weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Subcommand)]
enum Command {
    /// Build a patch and write it with its lift and diagnostics as JSON.
    BuildGraph(Common),
    /// Tabulate conductances and masses for each modulus.
    Weights(Common),
    /// Solve the massive Green function from the origin.
    Green {
        #[command(flatten)]
        common: Common,
        /// Also run the Neumann series and compare.
        #[arg(long)]
        cross_validate: bool,
        /// Solve on all interior vertices, killed at the patch edge, instead
        /// of a truncation ball.
        #[arg(long)]
        whole: bool,
    },
    /// Stabilize N grains at the origin and verify the identities.
    Simulate(Common),
    /// Compare scaled shapes with the predicted limit shape across N.
    LimitShape {
        #[command(flatten)]
        common: Common,
        /// Report a non-decreasing error trend as a warning only.
        #[arg(long)]
        soft_fail: bool,
    },
    /// Run the invariant suite on one configuration.
    Verify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Builder {
    Square,
    Multigrid,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    graph: Option<Builder>,
    /// Patch radius (graph steps for the square lattice, plane units for multigrids).
    #[arg(long)]
    radius: Option<f64>,
    /// Number of grid families of a multigrid.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Option<Vec<f64>>,
    /// Elliptic modulus, or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// Grain count, or a comma-separated list.
    #[arg(short = 'n', long = "grains", value_delimiter = ',')]
    grains: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, relative to $ISOSAND_OUT when set.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads for solves and parallel stabilization.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    margin: Option<u32>,
    /// Solve the Green function and check the threshold sandwich.
    #[arg(long)]
    green: bool,
    /// Outputs to write, e.g. `csv,json`.
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
}

const DEFAULT_OFFSETS: [f64; 5] = [0.11, 0.23, 0.37, 0.41, 0.17];

fn default_offsets(d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| DEFAULT_OFFSETS.get(j).copied().unwrap_or((0.1 + 0.29 * j as f64).fract()))
        .collect()
}

fn graph_override(c: &Common, base: Option<GraphSpec>) -> Result<Option<GraphSpec>, CliError> {
    let spec = match (c.graph, base) {
        (Some(Builder::Square), _) => Some(GraphSpec::Square {
            radius: c.radius.unwrap_or(40.0).ceil() as u32,
        }),
        (Some(Builder::Multigrid), _) => {
            let d = c.d.or(c.offsets.as_ref().map(Vec::len)).unwrap_or(5);
            Some(GraphSpec::Multigrid {
                d,
                offsets: c.offsets.clone().unwrap_or_else(|| default_offsets(d)),
                radius: c.radius.unwrap_or(40.0),
            })
        }
        (None, Some(GraphSpec::Multigrid { d, offsets, radius })) => Some(GraphSpec::Multigrid {
            d: c.d.unwrap_or(d),
            offsets: c.offsets.clone().unwrap_or(offsets),
            radius: c.radius.unwrap_or(radius),
        }),
        (None, Some(spec)) => Some(match c.radius {
            Some(r) => spec.with_plane_radius(r),
            None => spec,
        }),
        (None, None) => None,
    };
    if let Some(r) = c.radius {
        if !(r >= 1.0) {
            return Err(CliError::Usage(format!("radius {r} must be ≥ 1")));
        }
    }
    Ok(spec)
}

fn resolve(c: &Common, default_output: &str) -> Result<ExperimentConfig, CliError> {
    let mut f = match &c.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    f.graph = graph_override(c, f.graph.take())?;
    if let Some(k) = &c.k {
        f.k = Some(OneOrMany::Many(k.clone()));
    }
    if let Some(n) = &c.grains {
        f.n = Some(GrainSpec::List(OneOrMany::Many(n.clone())));
    }
    f.seed = c.seed.or(f.seed);
    f.output = c.output.clone().or(f.output);
    f.workers = c.workers.or(f.workers);
    f.bins = c.bins.or(f.bins);
    f.margin = c.margin.or(f.margin);
    if c.green {
        f.green = Some(true);
    }
    if let Some(list) = &c.emit {
        let mut e = Emit {
            csv: false,
            json: false,
            svg: false,
        };
        for item in list {
            match item.as_str() {
                "csv" => e.csv = true,
                "json" => e.json = true,
                "svg" => e.svg = true,
                other => return Err(CliError::Usage(format!("unknown output kind `{other}`"))),
            }
        }
        f.emit = e;
    }
    ExperimentConfig::resolve(f, default_output)
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let with_pool = |cfg: &ExperimentConfig| -> Result<(), CliError> {
        if let Some(t) = cfg.workers {
            if t == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            // Ignored if a pool already exists; the first setting wins.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        Ok(())
    };
    match cmd {
        Command::BuildGraph(c) => {
            let cfg = resolve(&c, "graph")?;
            with_pool(&cfg)?;
            run::build_graph(&cfg)
        }
        Command::Weights(c) => {
            let cfg = resolve(&c, "weights")?;
            with_pool(&cfg)?;
            run::weights(&cfg)
        }
        Command::Green {
            common,
            cross_validate,
            whole,
        } => {
            let cfg = resolve(&common, "green")?;
            with_pool(&cfg)?;
            run::green(&cfg, cross_validate, whole)
        }
        Command::Simulate(c) => {
            let cfg = resolve(&c, "simulate")?;
            with_pool(&cfg)?;
            run::simulate(&cfg)
        }
        Command::LimitShape { common, soft_fail } => {
            let cfg = resolve(&common, "limit-shape")?;
            with_pool(&cfg)?;
            run::limit_shape(&cfg, soft_fail)
        }
        Command::Verify(c) => {
            let cfg = resolve(&c, "verify")?;
            with_pool(&cfg)?;
            run::verify(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isosand: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
