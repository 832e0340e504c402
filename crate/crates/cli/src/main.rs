use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qgraph_cli::config::{load_config, Cells, Overrides, RunConfig};
use qgraph_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "qgraph", version, about = "Quasi-delta vertex conditions and the loop chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block spectra, gap margin and shift-invariance verdict.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Write the configuration in canonical form.
        #[arg(long, value_name = "PATH")]
        emit_config: Option<PathBuf>,
    },
    /// Eigenvalues of every vertex block.
    Block(Common),
    /// Shift twist phases and invariance residual.
    Invariance(Common),
    /// Transfer-matrix eigenvalues over a k range.
    Band(Common),
    /// Sampled eigenfunction candidates.
    Eigenfunction(Common),
    /// Roots of the closed chain of m cells.
    Closed(Common),
    /// Point interaction on the line: closed formula vs matched solution.
    Pointint(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Wavenumber; repeat for several.
    #[arg(long)]
    k: Vec<f64>,
    #[arg(long)]
    kmin: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Cell window, `N` or `a..b`.
    #[arg(long, value_parser = Cells::parse)]
    cells: Option<Cells>,
    /// Sample points per edge (or on the line for `pointint`).
    #[arg(long)]
    points: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            k: self.k.clone(),
            k_min: self.kmin,
            k_max: self.kmax,
            samples: self.samples,
            m: self.m,
            cells: self.cells,
            points: self.points,
        })?;
        Ok(cfg)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "stdout".into(), source }),
    }
}

/// `dir/name.csv` -> `dir/name_k3.csv`.
fn indexed_path(path: &Path, j: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_k{j}.{}", ext.to_string_lossy()),
        None => format!("{stem}_k{j}"),
    };
    path.with_file_name(name)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("QGRAPH_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Parse(format!("QGRAPH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Parse(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Validate { common, emit_config } => {
            let cfg = common.load()?;
            let report = commands::cmd_validate(&cfg)?;
            print!("{report}");
            if let Some(p) = &common.out {
                write_file(p, &report)?;
            }
            if let Some(p) = emit_config {
                write_file(&p, &cfg.canonical_json())?;
            }
        }
        Command::Block(c) => emit(c.out.as_deref(), &commands::cmd_block(&c.load()?)?)?,
        Command::Invariance(c) => {
            let r = commands::cmd_invariance(&c.load()?)?;
            emit(c.out.as_deref(), &r.csv)?;
            eprint!("{}", r.summary);
        }
        Command::Band(c) => {
            let r = commands::cmd_band(&c.load()?)?;
            emit(c.out.as_deref(), &r.csv)?;
            eprint!("{}", r.summary);
        }
        Command::Eigenfunction(c) => {
            let runs = commands::cmd_eigenfunction(&c.load()?)?;
            if runs.len() > 1 && c.out.is_none() {
                return Err(CliError::Parse("several k values need --out".into()));
            }
            for (j, r) in runs.iter().enumerate() {
                let path = c.out.as_ref().map(|p| if runs.len() > 1 { indexed_path(p, j) } else { p.clone() });
                emit(path.as_deref(), &r.csv)?;
                let mult = r.multiplier.map_or_else(|| "none".into(), commands::fmt_complex);
                eprintln!(
                    "k {}: residual {}, multiplier {}, |Phi| vertex defect {}",
                    commands::fmt_num(r.k),
                    commands::fmt_num(r.residual),
                    mult,
                    commands::fmt_num(r.continuity)
                );
            }
        }
        Command::Closed(c) => {
            let r = commands::cmd_closed(&c.load()?)?;
            emit(c.out.as_deref(), &r.csv)?;
            eprint!("{}", r.summary);
        }
        Command::Pointint(c) => {
            let r = commands::cmd_pointint(&c.load()?)?;
            emit(c.out.as_deref(), &r.csv)?;
            eprint!("{}", r.summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
