//! SNR and CSI-error sweeps with CSV output.

use std::io::Write;
use std::time::Instant;

use crate::precode::PrecoderSpec;
use crate::rate_eval::{evaluate_system, LinkSetup};

use super::config::SystemConfig;
use super::HarnessError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Fill the `seconds` column. Off by default so repeated runs give identical files.
    pub timing: bool,
}

/// One operating point of a sweep. Failed points keep their coordinates and carry
/// the error message instead of statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub config_hash: String,
    pub precoder: PrecoderSpec,
    pub snr_db: f64,
    pub epsilon: f64,
    pub mean_rate: Option<f64>,
    pub per_ue_rates: Vec<f64>,
    pub alpha_mean: Option<f64>,
    pub mults_per_iter: Option<f64>,
    pub iterations: Option<usize>,
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

fn run_point(
    setup: &LinkSetup,
    hash: &str,
    precoder: PrecoderSpec,
    snr_db: f64,
    epsilon: f64,
    opts: &SweepOptions,
) -> SweepRow {
    let start = Instant::now();
    let result = evaluate_system(setup, &precoder, snr_db, epsilon);
    let seconds = opts.timing.then(|| start.elapsed().as_secs_f64());
    let mut row = SweepRow {
        config_hash: hash.to_string(),
        precoder,
        snr_db,
        epsilon,
        mean_rate: None,
        per_ue_rates: Vec::new(),
        alpha_mean: None,
        mults_per_iter: None,
        iterations: None,
        seconds,
        error: None,
    };
    match result {
        Ok(report) => {
            row.mean_rate = Some(report.mean_rate);
            row.per_ue_rates = report.per_ue_rates;
            row.alpha_mean = Some(report.alpha_mean);
            row.mults_per_iter = Some(report.mults_per_iter);
            row.iterations = Some(report.iterations);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluates every (precoder, ε, SNR) point of the configuration in that nesting
/// order. Blocks inside a point run on the current rayon pool.
pub fn run_sweep(cfg: &SystemConfig, opts: &SweepOptions) -> Result<Vec<SweepRow>, HarnessError> {
    let setup = cfg.link_setup()?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for &precoder in &cfg.precoders {
        for &epsilon in &cfg.epsilon_grid {
            for &snr_db in &cfg.snr_grid {
                rows.push(run_point(&setup, &hash, precoder, snr_db, epsilon, opts));
            }
        }
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn sweep_header(n_ue: usize) -> Vec<String> {
    let mut header: Vec<String> = ["precoder", "snr_db", "epsilon", "mean_rate_bpcu"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_ue).map(|k| format!("rate_ue_{k}")));
    header.extend(
        [
            "alpha_mean",
            "mults_per_iter",
            "iters",
            "seconds",
            "config_hash",
            "error",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    header
}

/// Writes rows as CSV with one `rate_ue_<k>` column per UE.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], n_ue: usize, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sweep_header(n_ue))?;
    for row in rows {
        let mut rec = vec![
            row.precoder.to_string(),
            row.snr_db.to_string(),
            row.epsilon.to_string(),
            opt(row.mean_rate),
        ];
        rec.extend((0..n_ue).map(|k| opt(row.per_ue_rates.get(k))));
        rec.extend([
            opt(row.alpha_mean),
            opt(row.mults_per_iter),
            opt(row.iterations),
            opt(row.seconds),
            row.config_hash.clone(),
            row.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
