use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use tdadc_harness::output::overlay_path;
use tdadc_harness::{
    encode, load_spec, run, Command, ExperimentSpec, HarnessError, Result, WORKERS_ENV,
};

/// Behavioral simulator of a dual-edge reset-free time-domain ADC.
#[derive(Debug, Parser)]
#[command(name = "tdadc", version)]
struct Cli {
    /// simulate, vtc-curve, ddu-sweep, sweep-dt, calibrate, power-compare or feasibility
    command: String,
    /// Experiment spec (TOML). All defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the spec's output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            tdadc::par::init_workers(n);
            Ok(())
        }
        _ => Err(HarnessError::invalid(
            WORKERS_ENV,
            format!("`{v}` is not a positive integer"),
        )),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn execute(cli: Cli) -> Result<()> {
    init_workers()?;
    let command = Command::parse(&cli.command)?;
    let spec = match &cli.spec {
        Some(p) => load_spec(p)?,
        None => ExperimentSpec::default(),
    };
    let out = cli.out.as_ref().map(|p| p.display().to_string());
    let spec = spec.with_overrides(Some(command), cli.seed, out)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let path = PathBuf::from(&spec.output_path);
    if let Some(input) = &cli.spec {
        if same_file(input, &path) {
            return Err(HarnessError::invalid(
                "output_path",
                "refusing to overwrite the spec file",
            ));
        }
    }
    let outcome = run(&spec)?;
    let bytes = encode(&spec, &outcome);
    std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&spec.output_path, e))?;
    let overlay = match &outcome.overlay {
        Some(text) => {
            let p = overlay_path(&spec.output_path);
            std::fs::write(&p, text).map_err(|e| HarnessError::io(p.display().to_string(), e))?;
            Some(p)
        }
        None => None,
    };
    for (name, value) in &outcome.summary {
        println!("{name} = {value}");
    }
    println!("wrote {}", spec.output_path);
    if let Some(p) = overlay {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
