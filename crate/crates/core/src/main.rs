use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};
use log::{error, info};

use perfhom::cli::config::Study;
use perfhom::cli::{run_studies, write_outputs, StudyConfig};
use perfhom::Error;

const CACHE_ENV: &str = "PERFHOM_CACHE";
const LOG_FILE: &str = "perfhom.log";

#[derive(Parser)]
#[command(name = "perfhom", version, about = "Periodic homogenization workbench for perforated elastic domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured studies and write rates.csv, monitors.csv and summary.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cell cache directory; the PERFHOM_CACHE variable takes precedence.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Run a single study.
        #[arg(long)]
        only: Option<String>,
    },
    /// Validate the cell problems only.
    CheckCell {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

/// Writes every log line to stderr and to the run's log file.
struct Tee(Arc<Mutex<File>>);

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        self.0.lock().expect("log file lock").write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.lock().expect("log file lock").flush()
    }
}

fn init_logging(out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let file = Arc::new(Mutex::new(File::create(out.join(LOG_FILE))?));
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee(file))))
        .init();
    Ok(())
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    let (config, out, cache, workers, only, cell_only) = match cli.command {
        Command::Run { config, out, cache, workers, only } => (config, out, cache, workers, only, false),
        Command::CheckCell { config, out, cache } => (config, out, cache, None, None, true),
    };
    let mut cfg = StudyConfig::load(&config)?;
    if let Some(o) = out {
        cfg.run.out = o;
    }
    if let Some(c) = cache {
        cfg.run.cache = c;
    }
    if let Some(c) = std::env::var_os(CACHE_ENV).filter(|c| !c.is_empty()) {
        cfg.run.cache = PathBuf::from(c);
    }
    if let Some(w) = workers {
        cfg.run.workers = w;
    }
    if let Some(name) = only {
        let study = Study::parse(&name).ok_or_else(|| Error::Config { field: "--only".into(), message: format!("unknown study `{name}`") })?;
        cfg.run.studies = vec![study];
    }
    if cell_only {
        cfg.run.studies = vec![Study::Cell];
    }
    cfg.validate()?;
    init_logging(&cfg.run.out)?;
    info!("config {} with {} worker(s), cache {}", config.display(), cfg.run.workers, cfg.run.cache.display());
    let summary = run_studies(&cfg, &cfg.run.cache)?;
    write_outputs(&summary, &cfg.run.out)?;
    let failed = summary.gates.iter().filter(|g| !g.pass).count();
    info!("{} gate(s), {} failed, {} gap(s)", summary.gates.len(), failed, summary.gaps.len());
    if let Some(g) = summary.gaps.first() {
        error!("{}", g.to_error());
    }
    Ok(summary.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("perfhom: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
