//! Precoders: linear ZF/MMSE, quantized linear (QLP) and coordinate minimization
//! (MAGIQ, QCM) over the finite per-antenna alphabet.

mod alphabet;
mod coordinate;
mod cost;
mod linear;
pub mod ops;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, TapChannel};
use crate::ofdm::OfdmFrame;
use crate::CMatrix;

pub use alphabet::{TxAlphabet, MAX_PHASE_BITS};
pub use coordinate::{
    coordinate_descent, AntennaRule, Candidate, CoordinateState, CoordinateUpdate, Schedule, TraceEvent,
};
pub use cost::{cost_g, optimal_alpha};
pub use linear::{
    linear_precode, lmmse_weight_mults, lmmse_weights, matched_filter_init, matched_filter_mults, zf_weights,
};
pub use ops::OpTally;

#[derive(Debug, Error)]
pub enum PrecodeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid transmit alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("zero-forcing infeasible: channel on subcarrier {subcarrier} is rank deficient")]
    ZfInfeasible { subcarrier: usize },
    #[error("degenerate input: optimal alpha is not positive")]
    DegenerateAlpha,
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Transmit sequence produced by a precoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecodeResult {
    /// `N x T` transmit samples; entries lie in the alphabet for quantized precoders.
    pub x: CMatrix,
    pub alpha: f64,
    /// `G(x, α)` when the precoder evaluated it.
    pub cost: Option<f64>,
    pub iterations: usize,
    pub ops: OpTally,
}

/// A named precoder with its parameters.
///
/// Text form: `lp-zf`, `lp-mmse`, `qlp-zf`, `qcm:<I>` (round-robin), `qcm:<I>:perm`
/// (random permutation), `magiq:<I>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PrecoderSpec {
    LpZf,
    LpMmse,
    QlpZf,
    Qcm { iterations: usize, schedule: Schedule },
    Magiq { iterations: usize },
}

impl PrecoderSpec {
    pub fn is_coordinate(&self) -> bool {
        matches!(self, PrecoderSpec::Qcm { .. } | PrecoderSpec::Magiq { .. })
    }
}

impl fmt::Display for PrecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecoderSpec::LpZf => write!(f, "lp-zf"),
            PrecoderSpec::LpMmse => write!(f, "lp-mmse"),
            PrecoderSpec::QlpZf => write!(f, "qlp-zf"),
            PrecoderSpec::Qcm {
                iterations,
                schedule: Schedule::RoundRobin,
            } => write!(f, "qcm:{iterations}"),
            PrecoderSpec::Qcm {
                iterations,
                schedule: Schedule::RandomPermutation,
            } => write!(f, "qcm:{iterations}:perm"),
            PrecoderSpec::Magiq { iterations } => write!(f, "magiq:{iterations}"),
        }
    }
}

impl FromStr for PrecoderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let iterations = |p: &str| -> Result<usize, String> {
            match p.parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("`{s}`: iteration count must be a positive integer")),
                Ok(i) => Ok(i),
            }
        };
        match parts.as_slice() {
            ["lp-zf"] => Ok(PrecoderSpec::LpZf),
            ["lp-mmse"] => Ok(PrecoderSpec::LpMmse),
            ["qlp-zf"] => Ok(PrecoderSpec::QlpZf),
            ["qcm"] => Ok(PrecoderSpec::Qcm {
                iterations: 6,
                schedule: Schedule::RoundRobin,
            }),
            ["qcm", i] | ["qcm", i, "rr"] => Ok(PrecoderSpec::Qcm {
                iterations: iterations(i)?,
                schedule: Schedule::RoundRobin,
            }),
            ["qcm", i, "perm"] => Ok(PrecoderSpec::Qcm {
                iterations: iterations(i)?,
                schedule: Schedule::RandomPermutation,
            }),
            ["magiq"] => Ok(PrecoderSpec::Magiq { iterations: 4 }),
            ["magiq", i] => Ok(PrecoderSpec::Magiq {
                iterations: iterations(i)?,
            }),
            _ => Err(format!(
                "unknown precoder `{s}` (expected lp-zf, lp-mmse, qlp-zf, qcm:<I>[:perm], magiq:<I>)"
            )),
        }
    }
}

impl TryFrom<String> for PrecoderSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PrecoderSpec> for String {
    fn from(p: PrecoderSpec) -> String {
        p.to_string()
    }
}

fn coordinate_with_mf<R: Rng + ?Sized>(
    rule: AntennaRule,
    iterations: usize,
    frame: &OfdmFrame,
    ch: &TapChannel,
    alphabet: &TxAlphabet,
    noise_var: f64,
    rng: &mut R,
) -> Result<PrecodeResult, PrecodeError> {
    let freq = ch.frequency_response(frame.t_f)?;
    let init = matched_filter_init(frame, &freq, alphabet)?;
    let mut result = coordinate_descent(
        rule,
        iterations,
        &frame.time,
        ch,
        alphabet,
        &init,
        noise_var,
        rng,
        &mut |_, _| {},
    )?;
    result.ops.setup += ops::COMPLEX_MUL * ch.frequency_response_mults(frame.t_f)
        + matched_filter_mults(ch.n_ue(), ch.n_tx(), frame.t_f, frame.t_c, alphabet);
    Ok(result)
}

/// MAGIQ from the quantized matched-filter start.
pub fn precode_magiq(
    frame: &OfdmFrame,
    ch: &TapChannel,
    alphabet: &TxAlphabet,
    iterations: usize,
    noise_var: f64,
) -> Result<PrecodeResult, PrecodeError> {
    // greedy selection draws no randomness
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    coordinate_with_mf(
        AntennaRule::Greedy,
        iterations,
        frame,
        ch,
        alphabet,
        noise_var,
        &mut rng,
    )
}

/// QCM from the quantized matched-filter start.
pub fn precode_qcm<R: Rng + ?Sized>(
    frame: &OfdmFrame,
    ch: &TapChannel,
    alphabet: &TxAlphabet,
    iterations: usize,
    schedule: Schedule,
    noise_var: f64,
    rng: &mut R,
) -> Result<PrecodeResult, PrecodeError> {
    coordinate_with_mf(
        AntennaRule::Scheduled(schedule),
        iterations,
        frame,
        ch,
        alphabet,
        noise_var,
        rng,
    )
}

/// Precodes one OFDM frame with the named precoder, using `ch` as the transmitter's
/// channel knowledge.
///
/// Linear precoders are normalised to block-average energy `P`; the MMSE filter uses
/// regularisation `Kσ²/P` for unit-energy symbols. For every precoder the returned
/// `cost` is `G` evaluated against `ch`; for QLP-ZF `alpha` is the closed-form optimum
/// for the quantized sequence.
pub fn precode_frame<R: Rng + ?Sized>(
    spec: &PrecoderSpec,
    frame: &OfdmFrame,
    ch: &TapChannel,
    alphabet: &TxAlphabet,
    noise_var: f64,
    rng: &mut R,
) -> Result<PrecodeResult, PrecodeError> {
    match *spec {
        PrecoderSpec::Qcm { iterations, schedule } => {
            precode_qcm(frame, ch, alphabet, iterations, schedule, noise_var, rng)
        }
        PrecoderSpec::Magiq { iterations } => precode_magiq(frame, ch, alphabet, iterations, noise_var),
        PrecoderSpec::LpZf | PrecoderSpec::LpMmse | PrecoderSpec::QlpZf => {
            let freq = ch.frequency_response(frame.t_f)?;
            let (k, n) = (ch.n_ue(), ch.n_tx());
            let reg = if *spec == PrecoderSpec::LpMmse {
                k as f64 * noise_var / alphabet.power()
            } else {
                0.0
            };
            let weights = lmmse_weights(&freq, 1.0, reg)?;
            let mut result = linear_precode(&frame.freq, &weights, frame.t_c, alphabet.power())?;
            result.ops.setup = ops::COMPLEX_MUL * ch.frequency_response_mults(frame.t_f);
            result.ops.per_iteration[0] += lmmse_weight_mults(k, n, frame.t_f);
            if *spec == PrecoderSpec::QlpZf {
                result.x = alphabet.quantize(&result.x);
                result.ops.per_iteration[0] += alphabet.quantize_mults(result.x.len());
                let alpha = optimal_alpha(&result.x, ch, &frame.time, noise_var)?;
                if alpha > 0.0 {
                    result.alpha = alpha;
                }
            }
            result.cost = Some(cost_g(&result.x, result.alpha, ch, &frame.time, noise_var)?);
            Ok(result)
        }
    }
}
