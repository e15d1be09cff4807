//! `coulomb experiment`: run the cells of a config with per-cell checkpoints,
//! then write the result tables, a gnuplot script and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use coulomb_core::experiment::{
    gnuplot_script, rate_rows, rate_trend_breaks, violations, write_rate_rows, write_rows, CellResult,
    ExperimentConfig, ExperimentSetup,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult, ExperimentArgs};

pub const RESULTS: &str = "results.csv";
pub const RATES: &str = "rates.csv";
pub const PLOT: &str = "plot.gp";
pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    seed: u64,
    fitted_c: f64,
    fitted_at_run_time: bool,
    started: String,
    finished: String,
    cells_run: Vec<usize>,
    cells_resumed: Vec<usize>,
    violations: usize,
    outputs: Vec<OutputFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary file so an interrupted run never leaves a
/// truncated output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cell_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("cells").join(format!("cell-{index:03}.json"))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn run(a: ExperimentArgs) -> CliResult<()> {
    let started = now();
    let text = fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.config.display())))?;
    let config = ExperimentConfig::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let config_hash = sha256_hex(config.canonical_json().as_bytes());
    fs::create_dir_all(a.output.join("cells"))
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", a.output.display())))?;

    let setup = ExperimentSetup::new(config)?;
    if setup.fitted_now {
        eprintln!(
            "fitted C = {:.4} (c_a = {:.4}, c_b = {:.4})",
            setup.fitted.c, setup.fitted.c_a, setup.fitted.c_b
        );
    }
    let cells = setup.config.cells();
    let mut results = Vec::with_capacity(cells.len());
    let (mut ran, mut resumed) = (Vec::new(), Vec::new());
    for cell in &cells {
        let path = cell_path(&a.output, cell.index);
        if a.resume {
            let previous = fs::read_to_string(&path)
                .ok()
                .and_then(|t| serde_json::from_str::<CellResult>(&t).ok())
                .filter(|r| r.config_hash == config_hash && r.cell == *cell);
            if let Some(r) = previous {
                resumed.push(cell.index);
                results.push((*cell, r.tail));
                continue;
            }
        }
        let t0 = std::time::Instant::now();
        let tail = setup.run_cell(cell)?;
        eprintln!(
            "cell {}: n = {}, beta = {}, acceptance {:.3}, R-hat {:.3}, {:.1?}",
            cell.index,
            cell.n,
            cell.beta,
            tail.mean_acceptance,
            tail.r_hat,
            t0.elapsed()
        );
        let record = CellResult {
            config_hash: config_hash.clone(),
            cell: *cell,
            tail,
        };
        let json = serde_json::to_vec_pretty(&record).map_err(coulomb_core::Error::from)?;
        write_atomic(&path, &json)?;
        ran.push(cell.index);
        results.push((*cell, record.tail));
    }

    let rows: Vec<_> = results.iter().flat_map(|(c, t)| setup.rows(c, t)).collect();
    let mut csv = Vec::new();
    write_rows(&mut csv, &rows)?;
    let rates = rate_rows(&setup, &results);
    let mut rate_csv = Vec::new();
    write_rate_rows(&mut rate_csv, &rates)?;
    let plot = gnuplot_script(RESULTS, &cells, setup.config.manifold);

    let mut outputs = Vec::new();
    for (name, bytes) in [(RESULTS, &csv), (RATES, &rate_csv), (PLOT, &plot.into_bytes())] {
        write_atomic(&a.output.join(name), bytes)?;
        outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    for cell in &cells {
        let path = cell_path(&a.output, cell.index);
        let bytes = fs::read(&path)?;
        outputs.push(OutputFile {
            path: format!("cells/{}", path.file_name().unwrap().to_string_lossy()),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let bad = violations(&rows);
    let manifest = RunManifest {
        tool: "coulomb",
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash,
        seed: setup.config.seed,
        fitted_c: setup.fitted.c,
        fitted_at_run_time: setup.fitted_now,
        started,
        finished: now(),
        cells_run: ran.clone(),
        cells_resumed: resumed.clone(),
        violations: bad,
        outputs,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(coulomb_core::Error::from)?;
    write_atomic(&a.output.join(MANIFEST), &json)?;

    let unmixed = rows.iter().filter(|r| r.flags.contains("rhat")).count();
    let vacuous = rows.iter().filter(|r| r.flags.contains("vacuous")).count();
    let breaks = rate_trend_breaks(&rates);
    println!(
        "{} cells ({} run, {} resumed), {} rows: {} violations, {} vacuous, {} not mixed",
        cells.len(),
        ran.len(),
        resumed.len(),
        rows.len(),
        bad,
        vacuous,
        unmixed
    );
    if breaks.is_empty() {
        println!("rate trend: nondecreasing in n within confidence intervals");
    } else {
        for (n1, n2, r) in &breaks {
            println!("rate trend: decreases from n = {n1} to n = {n2} at r = {r}");
        }
    }
    if bad > 0 {
        return Err(CliError::Failure(format!("{bad} rows exceed the bound")));
    }
    Ok(())
}
