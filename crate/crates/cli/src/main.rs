//! `skewlab`: analyses of skew-torsion connections on bi-invariant Lie
//! groups, from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 theorem-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skewlab::Tolerances;
use skewlab_cli::{run, CommandSpec, OutputFormat, RunConfig};

#[derive(Parser)]
#[command(
    name = "skewlab",
    version,
    about = "Skew-torsion connections on bi-invariant Lie groups: closures, transport, curvature, holonomy"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args)]
struct Common {
    /// Random seed; overrides SKEWLAB_SEED (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Absolute skewness tolerance.
    #[arg(long, global = true)]
    tol_skew: Option<f64>,
    /// Fixed step of the transport integrator.
    #[arg(long, global = true)]
    ode_step: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Commands {
    /// Closure and structure analysis of a 3-form (catalog:<key> or JSON path).
    Analyze {
        #[arg(long)]
        form: String,
    },
    /// Residual table for parallel transport along a geodesic.
    Transport {
        #[arg(long)]
        group: String,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Scalar field: const:<c> or trace:<alpha>,<beta>.
        #[arg(long, default_value = "const:1")]
        f: String,
        #[arg(long, default_value_t = 1.0)]
        tmax: f64,
        /// Direction coefficients c0,c1,... or random:<seed>.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Curvature operator of nabla - f D^lambda at a point.
    Curvature {
        #[arg(long)]
        group: String,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value = "const:1")]
        f: String,
        /// First direction (defaults to e_0).
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Second direction (defaults to e_1).
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        /// Base point: identity or <direction>@<t>.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        /// Also run the loop-holonomy estimate at this loop size.
        #[arg(long)]
        loop_s: Option<f64>,
    },
    /// Max curvature norm over a grid of constant rescalings f.
    FlatScan {
        #[arg(long)]
        group: String,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Grid start:end:npoints.
        #[arg(long, default_value = "-2:2:401", allow_hyphen_values = true)]
        grid: String,
    },
    /// Generated holonomy and difference-tensor algebra report.
    Holonomy {
        #[arg(long)]
        group: String,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value = "const:1")]
        f: String,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Built-in example library.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List entry keys and descriptions.
    List,
    /// Export an entry in the 3-form JSON format.
    Export { key: String },
}

fn seed_from(common: &Common) -> u64 {
    common
        .seed
        .or_else(|| {
            std::env::var("SKEWLAB_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(42)
}

fn tolerances_from(common: &Common) -> Tolerances {
    let mut tol = Tolerances::default();
    if let Some(v) = common.tol_rank {
        tol.rank_rtol = v;
    }
    if let Some(v) = common.tol_skew {
        tol.skew_atol = v;
    }
    if let Some(v) = common.ode_step {
        tol.ode_step = v;
    }
    tol
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let command = match cli.command {
        Commands::Analyze { form } => CommandSpec::Analyze { form },
        Commands::Transport {
            group,
            lambda,
            f,
            tmax,
            direction,
            format,
        } => CommandSpec::Transport {
            group,
            lambda,
            f,
            tmax,
            direction,
            format: match format {
                Format::Json => OutputFormat::Json,
                Format::Csv => OutputFormat::Csv,
            },
        },
        Commands::Curvature {
            group,
            lambda,
            f,
            x,
            y,
            point,
            loop_s,
        } => CommandSpec::Curvature {
            group,
            lambda,
            f,
            x,
            y,
            point,
            loop_s,
        },
        Commands::FlatScan {
            group,
            lambda,
            grid,
        } => CommandSpec::FlatScan {
            group,
            lambda,
            grid,
        },
        Commands::Holonomy {
            group,
            lambda,
            f,
            samples,
        } => CommandSpec::Holonomy {
            group,
            lambda,
            f,
            samples,
        },
        Commands::Catalog { action } => match action {
            CatalogAction::List => CommandSpec::CatalogList,
            CatalogAction::Export { key } => CommandSpec::CatalogExport { key },
        },
    };

    let config = RunConfig {
        command,
        seed: seed_from(&cli.common),
        tolerances: tolerances_from(&cli.common),
    };

    match run(&config) {
        Ok(output) => {
            let write_result = match &cli.common.out {
                Some(path) => std::fs::write(path, &output.body),
                None => {
                    // Tolerate a closed pipe (e.g. piping into head).
                    use std::io::Write;
                    let mut stdout = std::io::stdout();
                    match writeln!(stdout, "{}", output.body.trim_end()) {
                        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {
                            return ExitCode::SUCCESS
                        }
                        other => other,
                    }
                }
            };
            if let Err(e) = write_result {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            if output.theorem_failed {
                eprintln!("theorem check failed (see report)");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
