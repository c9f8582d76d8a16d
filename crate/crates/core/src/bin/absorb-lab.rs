use absorption_lab::harness::{exit_code, run, Experiment, ExperimentConfig};
use absorption_lab::LabError;
use clap::Parser;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one experiment and write its artifacts plus `manifest.json`.
#[derive(Parser, Debug)]
#[command(name = "absorb-lab", version)]
struct Cli {
    /// Experiment (overrides the config's `experiment`).
    experiment: Option<Experiment>,
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Nonlinearity expression, e.g. "u*ln(u+1)^3".
    #[arg(short = 'f', long)]
    nonlinearity: Option<String>,
    /// Space dimension.
    #[arg(short = 'N', long = "dim")]
    n_dim: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// `key=value` overrides, applied after the config file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for the k ladder.
    #[arg(long)]
    threads: Option<usize>,
}

fn build(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut config = match (&cli.config, cli.experiment) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(e)) => ExperimentConfig::new(e, "", 3),
        (None, None) => return Err(LabError::Config("give an experiment or --config".into())),
    };
    if let Some(e) = cli.experiment {
        config.experiment = e;
    }
    if let Some(f) = &cli.nonlinearity {
        config.nonlinearity = f.clone();
    }
    if let Some(n) = cli.n_dim {
        config.n_dim = n;
    }
    for kv in &cli.overrides {
        config.apply_override(kv)?;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = build(&cli).and_then(|config| run(&config, cli.out.as_deref()));
    match result {
        Ok(manifest) => {
            // a closed pipe must not turn a finished run into a panic
            let mut out = std::io::stdout().lock();
            for p in &manifest.postconditions {
                let _ = writeln!(out, "{} {}: {}", if p.holds { "ok  " } else { "FAIL" }, p.name, p.detail);
            }
            for f in &manifest.files {
                let _ = writeln!(out, "wrote {}", f.file);
            }
            if manifest.ok() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {}", LabError::Postcondition("see manifest.json".into()));
                ExitCode::from(5)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
