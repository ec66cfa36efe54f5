//! CSV and JSON artifacts for sweeps, plus STFT dumps for plotting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use radalt_core::dsp::{stft, Window};
use radalt_core::ComplexSignal;

use crate::error::Result;
use crate::sweep::{CellResult, SweepConfig, SweepResult};

pub const CELLS_FILE: &str = "sweep.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct ArmSummary {
    mean_rmse_m: f64,
    mean_pd: f64,
    mean_miss_rate: f64,
    median_recon_rmse: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a SweepConfig,
    cells: &'a [CellResult],
    arms: BTreeMap<&'static str, ArmSummary>,
}

pub fn cells_csv(cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn parse_cells_csv(bytes: &[u8]) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn summary_json(result: &SweepResult) -> Result<Vec<u8>> {
    let mut arms = BTreeMap::new();
    for &arm in &result.config.mitigations {
        let cells: Vec<&CellResult> = result.cells.iter().filter(|c| c.mitigation == arm).collect();
        let n = cells.len() as f64;
        let recon: Vec<f64> = cells.iter().map(|c| c.recon_rmse).collect();
        arms.insert(
            arm.name(),
            ArmSummary {
                mean_rmse_m: cells.iter().map(|c| c.rmse_m).sum::<f64>() / n,
                mean_pd: cells.iter().map(|c| c.pd).sum::<f64>() / n,
                mean_miss_rate: cells.iter().map(|c| c.miss_rate).sum::<f64>() / n,
                median_recon_rmse: crate::metrics::median(&recon),
            },
        );
    }
    let s = Summary { config: &result.config, cells: &result.cells, arms };
    let mut out = serde_json::to_vec_pretty(&s)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `sweep.csv`, `trials.csv` and `summary.json` into `dir`.
pub fn emit_report(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cells = dir.join(CELLS_FILE);
    fs::write(&cells, cells_csv(&result.cells)?)?;

    let trials = dir.join(TRIALS_FILE);
    let mut w = csv::Writer::from_path(&trials)?;
    w.write_record([
        "mitigation", "sinr_db", "overlap", "trial", "seed", "snr_db", "sir_db", "truth_m",
        "estimate_m", "error_m", "recon_rmse", "pslr_db", "input_digest",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for t in &result.trials {
        w.write_record([
            t.mitigation.name().to_string(),
            t.sinr_db.to_string(),
            t.overlap.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            t.snr_db.to_string(),
            t.sir_db.to_string(),
            t.truth_m.to_string(),
            opt(t.estimate_m),
            t.error_m.to_string(),
            t.recon_rmse.to_string(),
            opt(t.pslr_db),
            t.input_digest.clone(),
        ])?;
    }
    w.flush()?;

    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, summary_json(result)?)?;
    Ok(vec![cells, trials, summary])
}

/// STFT magnitude in dB as CSV: one row per frame, first column the frame start.
pub fn write_stft_dump(sig: &ComplexSignal, n_fft: usize, hop: usize, path: &Path) -> Result<()> {
    let st = stft(sig, n_fft, hop, Window::Hann)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame_start".to_string()];
    header.extend((0..n_fft).map(|i| format!("{:.1}", st.bin_frequency((i + n_fft / 2) % n_fft))));
    w.write_record(&header)?;
    for (f, row) in st.magnitude_db().iter().enumerate() {
        let mut rec = vec![(f * hop).to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.3}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
