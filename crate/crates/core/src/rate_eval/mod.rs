//! Achievable rates of the end-to-end link via the generalized mutual information.
//!
//! Each Monte-Carlo block draws a channel, precodes `S / T_F` OFDM symbols, passes
//! them through the true channel with noise, and lets every UE estimate its Gaussian
//! auxiliary channel from the received subcarrier symbols. Blocks run in parallel on
//! the current rayon pool and are reduced in block order.

mod gmi;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{corrupt_csi, ChannelError, NoiseSpec, TapChannel, TapGenerator, UniformPdpRayleigh};
use crate::ofdm::{from_time_with, Constellation, Dft, OfdmError, OfdmFrame};
use crate::precode::{precode_frame, PrecodeError, PrecoderSpec, TxAlphabet};
use crate::rng::{Purpose, Substreams};
use crate::Complex64;

pub use gmi::{estimate_params, gmi_rate, optimize_s, place_pilots, AuxChannelParams, IndexSet, NOISE_FLOOR};

#[derive(Debug, Error)]
pub enum RateError {
    #[error("length mismatch: {tx} transmitted vs {rx} received symbols")]
    Length { tx: usize, rx: usize },
    #[error("estimation set is empty or carries no energy")]
    DegeneratePilots,
    #[error("pilot index {0} out of range")]
    PilotIndex(usize),
    #[error("exponent grid is empty")]
    EmptyGrid,
    #[error("invalid link setup: {0}")]
    Setup(String),
    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<RateError>,
    },
    #[error(transparent)]
    Precode(#[from] PrecodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Ofdm(#[from] OfdmError),
}

/// How UEs estimate their auxiliary channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Pilot-assisted: estimates from a random pilot subset, rate sums over the rest.
    Pat,
    /// Estimates from all `S` symbols, no pilots.
    DataAided,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pat => "pat",
            Mode::DataAided => "data-aided",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pat" => Ok(Mode::Pat),
            "data-aided" => Ok(Mode::DataAided),
            other => Err(format!("unknown mode `{other}` (expected pat or data-aided)")),
        }
    }
}

/// Where per-block channels come from.
#[derive(Clone)]
pub enum TapSource {
    Rayleigh,
    Generator(Arc<dyn TapGenerator>),
}

impl fmt::Debug for TapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TapSource::Rayleigh => f.write_str("Rayleigh"),
            TapSource::Generator(_) => f.write_str("Generator(..)"),
        }
    }
}

/// Everything needed to simulate one link at one operating point, except the
/// precoder, SNR and CSI error.
#[derive(Clone, Debug)]
pub struct LinkSetup {
    pub n_tx: usize,
    pub n_ue: usize,
    pub t_f: usize,
    pub t_c: usize,
    pub n_taps: usize,
    pub constellation: Constellation,
    pub phase_bits: u32,
    /// Transmit power budget `P`; SNR is `P / σ²`.
    pub power: f64,
    /// Symbols per UE per coherence block, `S`; a multiple of `t_f`.
    pub coherence: usize,
    pub pilot_fraction: f64,
    pub mode: Mode,
    pub blocks: usize,
    pub seed: u64,
    pub taps: TapSource,
}

impl LinkSetup {
    pub fn validate(&self) -> Result<(), RateError> {
        let bad = |m: String| Err(RateError::Setup(m));
        if self.n_tx == 0 || self.n_ue == 0 || self.t_f == 0 || self.n_taps == 0 {
            return bad("n_tx, n_ue, t_f and n_taps must be positive".into());
        }
        if self.t_f < self.n_taps {
            return bad(format!("t_f = {} must be at least n_taps = {}", self.t_f, self.n_taps));
        }
        if self.t_c + 1 < self.n_taps {
            return bad(format!(
                "t_c = {} must be at least n_taps - 1 = {}",
                self.t_c,
                self.n_taps - 1
            ));
        }
        if self.coherence == 0 || self.coherence % self.t_f != 0 {
            return bad(format!(
                "coherence = {} must be a positive multiple of t_f = {}",
                self.coherence, self.t_f
            ));
        }
        if self.blocks == 0 {
            return bad("blocks must be positive".into());
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return bad(format!("power must be positive, got {}", self.power));
        }
        if self.mode == Mode::Pat && !(self.pilot_fraction > 0.0 && self.pilot_fraction < 1.0) {
            return bad(format!(
                "pilot_fraction must lie in (0, 1), got {}",
                self.pilot_fraction
            ));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> Result<TxAlphabet, RateError> {
        Ok(TxAlphabet::new(self.power, self.n_tx, self.phase_bits)?)
    }

    pub fn noise_var(&self, snr_db: f64) -> f64 {
        self.power * 10f64.powf(-snr_db / 10.0)
    }

    fn draw_channel(&self, streams: &Substreams, block: usize) -> Result<TapChannel, RateError> {
        let mut rng = streams.rng(Purpose::Channel, block as u64, 0);
        let ch = match &self.taps {
            TapSource::Rayleigh => UniformPdpRayleigh {
                n_ue: self.n_ue,
                n_tx: self.n_tx,
                n_taps: self.n_taps,
            }
            .generate(&mut rng)?,
            TapSource::Generator(g) => g.generate(&mut rng)?,
        };
        if (ch.n_ue(), ch.n_tx()) != (self.n_ue, self.n_tx) || ch.n_taps() > self.n_taps {
            return Err(RateError::Setup(format!(
                "generated channel is {}x{} with {} taps, setup expects {}x{} with at most {}",
                ch.n_ue(),
                ch.n_tx(),
                ch.n_taps(),
                self.n_ue,
                self.n_tx,
                self.n_taps
            )));
        }
        Ok(ch)
    }
}

/// Transmitted and received subcarrier symbols of one coherence block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrace {
    /// `tx[k][i]`, `i = ℓ T_F + m`.
    pub tx: Vec<Vec<Complex64>>,
    pub rx: Vec<Vec<Complex64>>,
    /// Mean of the precoder's `α` over the OFDM symbols of the block.
    pub alpha_mean: f64,
    pub mults_per_iter: f64,
    pub setup_mults: f64,
    pub iterations: usize,
    pub cost_mean: Option<f64>,
}

/// True channel and the transmitter's estimate of it for block `block`.
pub fn block_channels(setup: &LinkSetup, epsilon: f64, block: usize) -> Result<(TapChannel, TapChannel), RateError> {
    let streams = Substreams::new(setup.seed);
    let ch = setup.draw_channel(&streams, block)?;
    let csi = corrupt_csi(&ch, epsilon, &mut streams.rng(Purpose::Csi, block as u64, 0))?.estimate;
    Ok((ch, csi))
}

/// Data frames of block `block`, one per OFDM symbol.
pub fn block_frames(setup: &LinkSetup, block: usize) -> Result<Vec<OfdmFrame>, RateError> {
    let streams = Substreams::new(setup.seed);
    (0..setup.coherence / setup.t_f)
        .map(|i| {
            let data = setup.constellation.draw(
                setup.n_ue,
                setup.t_f,
                &mut streams.rng(Purpose::Data, block as u64, i as u64),
            );
            Ok(OfdmFrame::new(data, setup.t_c)?)
        })
        .collect()
}

/// Runs block `block` end to end and returns its symbol traces.
pub fn simulate_block(
    setup: &LinkSetup,
    precoder: &PrecoderSpec,
    snr_db: f64,
    epsilon: f64,
    block: usize,
) -> Result<BlockTrace, RateError> {
    let streams = Substreams::new(setup.seed);
    let alphabet = setup.alphabet()?;
    let noise_var = setup.noise_var(snr_db);
    let noise = NoiseSpec::new(noise_var)?;
    let (ch, csi) = block_channels(setup, epsilon, block)?;
    let frames = block_frames(setup, block)?;
    let dft = Dft::new(setup.t_f)?;

    let mut tx = vec![Vec::with_capacity(setup.coherence); setup.n_ue];
    let mut rx = vec![Vec::with_capacity(setup.coherence); setup.n_ue];
    let (mut alpha_sum, mut mults, mut setup_mults, mut cost_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut has_cost = true;
    let mut iterations = 0;
    for (ofdm_symbol, frame) in frames.iter().enumerate() {
        let idx = ofdm_symbol as u64;
        let mut sched = streams.rng(Purpose::Schedule, block as u64, idx);
        let out = precode_frame(precoder, frame, &csi, &alphabet, noise_var, &mut sched)?;
        let y = ch.apply(&out.x, &noise, &mut streams.rng(Purpose::Noise, block as u64, idx))?;
        let y_freq = from_time_with(&dft, &y, setup.t_c)?;
        for k in 0..setup.n_ue {
            tx[k].extend(frame.freq.row(k).iter());
            rx[k].extend(y_freq.row(k).iter());
        }
        alpha_sum += out.alpha;
        mults += out.ops.mean_per_iteration();
        setup_mults += out.ops.setup as f64;
        iterations = out.iterations;
        match out.cost {
            Some(c) => cost_sum += c,
            None => has_cost = false,
        }
    }
    let n = frames.len() as f64;
    Ok(BlockTrace {
        tx,
        rx,
        alpha_mean: alpha_sum / n,
        mults_per_iter: mults / n,
        setup_mults: setup_mults / n,
        iterations,
        cost_mean: has_cost.then_some(cost_sum / n),
    })
}

/// Per-UE auxiliary parameters and raw GMI estimates for one block.
pub fn block_rates(
    setup: &LinkSetup,
    trace: &BlockTrace,
    block: usize,
) -> Result<(Vec<AuxChannelParams>, Vec<f64>), RateError> {
    let pilots = match setup.mode {
        Mode::DataAided => Vec::new(),
        Mode::Pat => {
            let streams = Substreams::new(setup.seed);
            place_pilots(
                setup.coherence,
                setup.pilot_fraction,
                &mut streams.rng(Purpose::Pilots, block as u64, 0),
            )?
        }
    };
    let set = match setup.mode {
        Mode::DataAided => IndexSet::All,
        Mode::Pat => IndexSet::Subset(&pilots),
    };
    let mut params = Vec::with_capacity(setup.n_ue);
    let mut rates = Vec::with_capacity(setup.n_ue);
    for (tx, rx) in trace.tx.iter().zip(&trace.rx) {
        let p = estimate_params(tx, rx, set)?;
        rates.push(gmi_rate(tx, rx, &p, &setup.constellation, &pilots)?);
        params.push(p);
    }
    Ok((params, rates))
}

/// Aggregated rates for one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct GmiReport {
    /// `R_{a,k}`: block average of the clamped per-block estimates, bits per channel use.
    pub per_ue_rates: Vec<f64>,
    /// Average over UEs.
    pub mean_rate: f64,
    pub blocks: usize,
    pub pilot_fraction: f64,
    pub mode: Mode,
    /// Unclamped `R_{a,k}^{(b)}`, indexed `[block][ue]`.
    pub raw_block_rates: Vec<Vec<f64>>,
    /// Auxiliary channel parameters, indexed `[block][ue]`.
    pub block_params: Vec<Vec<AuxChannelParams>>,
    pub alpha_mean: f64,
    pub mults_per_iter: f64,
    pub setup_mults: f64,
    pub iterations: usize,
}

/// Runs `setup.blocks` independent blocks and averages their rates, first over blocks
/// then over UEs. Per-block estimates are clamped at zero before averaging.
pub fn evaluate_system(
    setup: &LinkSetup,
    precoder: &PrecoderSpec,
    snr_db: f64,
    epsilon: f64,
) -> Result<GmiReport, RateError> {
    setup.validate()?;
    let per_block: Vec<Result<(BlockTrace, Vec<AuxChannelParams>, Vec<f64>), RateError>> = (0..setup.blocks)
        .into_par_iter()
        .map(|b| {
            let run = || -> Result<_, RateError> {
                let trace = simulate_block(setup, precoder, snr_db, epsilon, b)?;
                let (params, rates) = block_rates(setup, &trace, b)?;
                Ok((trace, params, rates))
            };
            run().map_err(|e| RateError::Block {
                block: b,
                source: Box::new(e),
            })
        })
        .collect();

    let mut raw = Vec::with_capacity(setup.blocks);
    let mut params = Vec::with_capacity(setup.blocks);
    let mut per_ue = vec![0.0; setup.n_ue];
    let (mut alpha, mut mults, mut setup_mults) = (0.0, 0.0, 0.0);
    let mut iterations = 0;
    for result in per_block {
        let (trace, p, rates) = result?;
        for (acc, r) in per_ue.iter_mut().zip(&rates) {
            *acc += r.max(0.0);
        }
        alpha += trace.alpha_mean;
        mults += trace.mults_per_iter;
        setup_mults += trace.setup_mults;
        iterations = trace.iterations;
        raw.push(rates);
        params.push(p);
    }
    let b = setup.blocks as f64;
    per_ue.iter_mut().for_each(|r| *r /= b);
    let mean_rate = per_ue.iter().sum::<f64>() / setup.n_ue as f64;
    Ok(GmiReport {
        per_ue_rates: per_ue,
        mean_rate,
        blocks: setup.blocks,
        pilot_fraction: match setup.mode {
            Mode::Pat => setup.pilot_fraction,
            Mode::DataAided => 0.0,
        },
        mode: setup.mode,
        raw_block_rates: raw,
        block_params: params,
        alpha_mean: alpha / b,
        mults_per_iter: mults / b,
        setup_mults: setup_mults / b,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LinkSetup {
        LinkSetup {
            n_tx: 8,
            n_ue: 2,
            t_f: 16,
            t_c: 2,
            n_taps: 3,
            constellation: Constellation::qpsk(),
            phase_bits: 2,
            power: 1.0,
            coherence: 32,
            pilot_fraction: 0.1,
            mode: Mode::DataAided,
            blocks: 4,
            seed: 11,
            taps: TapSource::Rayleigh,
        }
    }

    #[test]
    fn setup_validation() {
        assert!(tiny().validate().is_ok());
        let mut s = tiny();
        s.t_c = 1;
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.coherence = 20;
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.mode = Mode::Pat;
        s.pilot_fraction = 0.0;
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.t_f = 2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn deterministic_reports_and_bounds() {
        let setup = tiny();
        for spec in ["lp-zf", "qlp-zf", "qcm:2", "magiq:1"] {
            let spec: PrecoderSpec = spec.parse().unwrap();
            let a = evaluate_system(&setup, &spec, 10.0, 0.0).unwrap();
            let b = evaluate_system(&setup, &spec, 10.0, 0.0).unwrap();
            assert_eq!(a, b);
            assert!(a.mean_rate >= 0.0 && a.mean_rate <= 2.0 + 1e-9);
            for row in &a.raw_block_rates {
                assert!(row.iter().all(|r| *r <= 2.0 + 1e-9));
            }
            assert_eq!(a.raw_block_rates.len(), 4);
        }
    }

    #[test]
    fn trace_layout() {
        let setup = tiny();
        let t = simulate_block(&setup, &PrecoderSpec::LpZf, 20.0, 0.0, 0).unwrap();
        assert_eq!(t.tx.len(), 2);
        assert_eq!(t.tx[0].len(), 32);
        assert_eq!(t.rx[1].len(), 32);
    }

    #[test]
    fn block_errors_carry_index() {
        let mut setup = tiny();
        setup.mode = Mode::Pat;
        setup.pilot_fraction = 0.001;
        let err = evaluate_system(&setup, &PrecoderSpec::LpZf, 10.0, 0.0).unwrap_err();
        assert!(matches!(err, RateError::Block { block: 0, .. }), "{err}");
    }
}
