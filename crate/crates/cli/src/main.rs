use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vclass_cli::commands;
use vclass_cli::output::emit;
use vclass_cli::{exit, CliError, Format, RunConfig};

#[derive(Parser)]
#[command(
    name = "vclass",
    version,
    about = "Single-squeezer EPR entanglement: model, sample, fit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path; a directory for `sample`. Defaults to the config's
    /// `output`, then stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// One row of criteria per pump power in `pump_grid` (CSV by default).
    Sweep,
    /// All criteria at the configured pump power (JSON by default).
    Criteria,
    /// Seeded homodyne records of the four quadratures plus a summary.
    Sample,
    /// Fit squeezer parameters to a `pump_mw,sqz_db,asqz_db[,weight]` CSV.
    Fit { dataset: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone());
    let format = cli.format.map(Format::from);
    let json_only = |name: &str| match format {
        Some(Format::Csv) => Err(CliError::Config(format!("`{name}` writes JSON only"))),
        _ => Ok(()),
    };

    match cli.command {
        Command::Sweep => {
            let text = commands::sweep(&cfg, format.unwrap_or(Format::Csv))?;
            emit(out.as_deref(), &text)?;
        }
        Command::Criteria => {
            let text = commands::criteria(&cfg, format.unwrap_or(Format::Json))?;
            emit(out.as_deref(), &text)?;
        }
        Command::Sample => {
            json_only("sample")?;
            let dir = out.ok_or_else(|| CliError::Config("`sample` needs --out <dir>".into()))?;
            commands::sample(&cfg, &dir)?;
            eprintln!("wrote samples to {}", dir.display());
        }
        Command::Fit { dataset } => {
            json_only("fit")?;
            let (text, code) = commands::fit(&cfg, Path::new(&dataset))?;
            emit(out.as_deref(), &text)?;
            if code != exit::OK {
                eprintln!("warning: fit did not converge");
            }
            return Ok(code);
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::CONFIG as u8
            } else {
                0
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
