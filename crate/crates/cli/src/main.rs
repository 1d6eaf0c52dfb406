use std::fs::File;
use std::io::Write;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use spsd_cli::{run, ExperimentConfig};

fn main() -> ExitCode {
    match try_main() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("spsd: {failures} trial(s) failed; see the per-trial errors in the record");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("spsd: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> anyhow::Result<usize> {
    let config = ExperimentConfig::parse();
    let record = run(&config).context("run failed")?;
    let json = record.to_json()?;
    match &config.out {
        Some(path) => std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(json.as_bytes())?,
    }
    if let Some(path) = &config.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        record
            .write_sweep_csv(f)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(record.failures)
}
