use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftlab::error::Error;
use shiftlab::experiment::{bundled, find_bundled, fmt_g10, load_config, run_experiment, ExperimentConfig, RunStatus};

#[derive(Parser)]
#[command(name = "shiftlab", version, about = "Run covariate-shift experiments on Bayesian neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file or a bundled config name.
    Run {
        config: String,
        /// Output directory; defaults to the config's `output_dir`, then `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel fits and evaluation.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the bundled experiments.
    List,
    /// Print the JSON schema of experiment configs.
    Schema,
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. } | Error::Json(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}

fn resolve(config: &str) -> Result<ExperimentConfig, Error> {
    let path = PathBuf::from(config);
    if path.is_file() {
        return load_config(&path);
    }
    match find_bundled(config) {
        Some(b) => b.config(),
        None => Err(Error::config(
            "<config>",
            format!("`{config}` is neither a file nor a bundled experiment (see `shiftlab list`)"),
        )),
    }
}

fn run(config: &str, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> ExitCode {
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let mut cfg = match resolve(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    match run_experiment(&cfg, &out) {
        Ok(report) => {
            for c in &report.checks {
                let value = c.value.map_or("missing".to_string(), |v| format!("{v:.6e}"));
                println!(
                    "{} {}: {value} {} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    serde_json::to_string(&c.op).unwrap_or_default().trim_matches('"'),
                    fmt_g10(c.bound)
                );
            }
            println!("{}: {:?} -> {}", report.name, report.status, out.display());
            match report.status {
                RunStatus::Passed => ExitCode::SUCCESS,
                RunStatus::ChecksFailed => ExitCode::from(EXIT_RUNTIME),
                RunStatus::Failed => {
                    eprintln!("error: {}", report.error.as_deref().unwrap_or("run failed"));
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> ExitCode {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run(&config, out, seed, threads),
        Command::List => {
            let mut text = String::new();
            for b in bundled() {
                let desc = b.config().map(|c| c.description).unwrap_or_else(|e| format!("<invalid: {e}>"));
                text += &format!("{:>2}  {:<26} {desc}\n", b.criterion, b.name);
            }
            emit(&text)
        }
        Command::Schema => emit(&shiftlab::experiment::schema_json()),
    }
}
