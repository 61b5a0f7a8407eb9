//! Coordinate-descent `α` against the Wiener-filter `α` on the same channels.

use std::io::Write;

use rayon::prelude::*;

use crate::precode::{optimal_alpha, precode_frame, PrecoderSpec};
use crate::rate_eval::{block_channels, block_frames, evaluate_system, LinkSetup, RateError};

use super::config::SystemConfig;
use super::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRow {
    pub precoder: PrecoderSpec,
    pub snr_db: f64,
    pub epsilon: f64,
    /// Converged `α` of the coordinate precoder, averaged over frames and blocks.
    pub alpha_coord: f64,
    /// Closed-form `α` of the power-normalised MMSE precoder output, same averaging.
    pub alpha_wf: f64,
}

impl AlphaRow {
    pub fn ratio(&self) -> f64 {
        self.alpha_coord / self.alpha_wf
    }
}

/// Mean `α_WF` over the frames of block `block`.
pub fn wiener_alpha(setup: &LinkSetup, snr_db: f64, epsilon: f64, block: usize) -> Result<f64, RateError> {
    let (_, csi) = block_channels(setup, epsilon, block)?;
    let frames = block_frames(setup, block)?;
    let alphabet = setup.alphabet()?;
    let noise_var = setup.noise_var(snr_db);
    // linear precoding draws no randomness
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut sum = 0.0;
    for frame in &frames {
        let out = precode_frame(&PrecoderSpec::LpMmse, frame, &csi, &alphabet, noise_var, &mut rng)?;
        sum += optimal_alpha(&out.x, &csi, &frame.time, noise_var)?;
    }
    Ok(sum / frames.len() as f64)
}

/// One row per SNR for the first QCM precoder of the configuration (MAGIQ if there is
/// none), at the first CSI error of the grid.
pub fn emit_alpha_diagnostics(cfg: &SystemConfig) -> Result<Vec<AlphaRow>, HarnessError> {
    let precoder = *cfg
        .precoders
        .iter()
        .find(|p| matches!(p, PrecoderSpec::Qcm { .. }))
        .or_else(|| cfg.precoders.iter().find(|p| p.is_coordinate()))
        .ok_or(HarnessError::NoCoordinatePrecoder)?;
    let setup = cfg.link_setup()?;
    let epsilon = cfg.epsilon_grid[0];
    let mut rows = Vec::with_capacity(cfg.snr_grid.len());
    for &snr_db in &cfg.snr_grid {
        let report = evaluate_system(&setup, &precoder, snr_db, epsilon)?;
        let wf: Vec<Result<f64, RateError>> = (0..setup.blocks)
            .into_par_iter()
            .map(|b| wiener_alpha(&setup, snr_db, epsilon, b))
            .collect();
        let mut sum = 0.0;
        for (b, a) in wf.into_iter().enumerate() {
            sum += a.map_err(|e| RateError::Block {
                block: b,
                source: Box::new(e),
            })?;
        }
        rows.push(AlphaRow {
            precoder,
            snr_db,
            epsilon,
            alpha_coord: report.alpha_mean,
            alpha_wf: sum / setup.blocks as f64,
        });
    }
    Ok(rows)
}

pub fn write_alpha_csv<W: Write>(rows: &[AlphaRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["precoder", "snr_db", "epsilon", "alpha_coord", "alpha_wf", "ratio"])?;
    for r in rows {
        w.write_record([
            r.precoder.to_string(),
            r.snr_db.to_string(),
            r.epsilon.to_string(),
            r.alpha_coord.to_string(),
            r.alpha_wf.to_string(),
            r.ratio().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
