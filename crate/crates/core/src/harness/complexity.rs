//! Measured multiplication counts and doubling experiments.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::TapChannel;
use crate::ofdm::OfdmFrame;
use crate::precode::{precode_frame, PrecoderSpec, TxAlphabet};

use super::config::SystemConfig;
use super::HarnessError;

/// SNR used for the measurement instances; counts do not depend on it for QCM.
const PROBE_SNR_DB: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_tx: usize,
    pub n_ue: usize,
    pub t_f: usize,
    pub t_c: usize,
    pub n_taps: usize,
}

impl Dims {
    pub fn t(&self) -> usize {
        self.t_f + self.t_c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    T,
    N,
    K,
    L,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::T, Param::N, Param::K, Param::L];

    pub fn name(&self) -> &'static str {
        match self {
            Param::T => "T",
            Param::N => "N",
            Param::K => "K",
            Param::L => "L",
        }
    }

    /// `(base, doubled)` dimensions for this parameter.
    ///
    /// `T` doubles both the DFT length and the prefix. The `L` experiment lengthens the
    /// prefix of both instances to `2L - 1` so only the tap count changes.
    pub fn pair(&self, d: Dims) -> (Dims, Dims) {
        match self {
            Param::T => (
                d,
                Dims {
                    t_f: 2 * d.t_f,
                    t_c: 2 * d.t_c,
                    ..d
                },
            ),
            Param::N => (d, Dims { n_tx: 2 * d.n_tx, ..d }),
            Param::K => (d, Dims { n_ue: 2 * d.n_ue, ..d }),
            Param::L => {
                let base = Dims {
                    t_c: d.t_c.max(2 * d.n_taps - 1),
                    t_f: d.t_f.max(2 * d.n_taps),
                    ..d
                };
                (
                    base,
                    Dims {
                        n_taps: 2 * d.n_taps,
                        ..base
                    },
                )
            }
        }
    }
}

/// Leading-order multiplication count per iteration.
pub fn table_order(spec: &PrecoderSpec) -> &'static str {
    match spec {
        PrecoderSpec::Qcm { .. } | PrecoderSpec::Magiq { .. } => "KNTL + KNL|X|",
        PrecoderSpec::LpZf | PrecoderSpec::LpMmse | PrecoderSpec::QlpZf => "TK^3 + TK^2N",
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub setup: u64,
    pub per_iteration: f64,
}

/// Precodes one random frame and returns its tallies.
pub fn measure(
    spec: &PrecoderSpec,
    dims: Dims,
    constellation: &crate::ofdm::Constellation,
    phase_bits: u32,
    power: f64,
    seed: u64,
) -> Result<Measurement, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = TapChannel::rayleigh(dims.n_ue, dims.n_tx, dims.n_taps, &mut rng)?;
    let frame = OfdmFrame::new(constellation.draw(dims.n_ue, dims.t_f, &mut rng), dims.t_c)?;
    let alphabet = TxAlphabet::new(power, dims.n_tx, phase_bits)?;
    let noise_var = power * 10f64.powf(-PROBE_SNR_DB / 10.0);
    let out = precode_frame(spec, &frame, &ch, &alphabet, noise_var, &mut rng)?;
    Ok(Measurement {
        setup: out.ops.setup,
        per_iteration: out.ops.mean_per_iteration(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub precoder: PrecoderSpec,
    pub param: Param,
    pub base: Dims,
    pub doubled: Dims,
    pub base_mults: f64,
    pub doubled_mults: f64,
    pub base_setup: u64,
    pub doubled_setup: u64,
}

impl ComplexityRow {
    pub fn ratio(&self) -> f64 {
        self.doubled_mults / self.base_mults
    }

    /// Fitted scaling exponent `log2(ratio)`.
    pub fn exponent(&self) -> f64 {
        self.ratio().log2()
    }
}

/// Doubling experiments for each precoder around the configuration's dimensions.
pub fn report_complexity(cfg: &SystemConfig, precoders: &[PrecoderSpec]) -> Result<Vec<ComplexityRow>, HarnessError> {
    cfg.validate()?;
    let constellation = cfg.constellation()?;
    let d = Dims {
        n_tx: cfg.n_tx,
        n_ue: cfg.n_ue,
        t_f: cfg.t_f,
        t_c: cfg.t_c,
        n_taps: cfg.n_taps,
    };
    let mut rows = Vec::new();
    for spec in precoders {
        for param in Param::ALL {
            let (base, doubled) = param.pair(d);
            let m0 = measure(spec, base, &constellation, cfg.phase_bits, cfg.power, cfg.master_seed)?;
            let m1 = measure(
                spec,
                doubled,
                &constellation,
                cfg.phase_bits,
                cfg.power,
                cfg.master_seed,
            )?;
            rows.push(ComplexityRow {
                precoder: *spec,
                param,
                base,
                doubled,
                base_mults: m0.per_iteration,
                doubled_mults: m1.per_iteration,
                base_setup: m0.setup,
                doubled_setup: m1.setup,
            });
        }
    }
    Ok(rows)
}

pub fn write_complexity_csv<W: Write>(rows: &[ComplexityRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "precoder",
        "param",
        "base_value",
        "doubled_value",
        "base_mults_per_iter",
        "doubled_mults_per_iter",
        "ratio",
        "exponent",
        "base_setup_mults",
        "doubled_setup_mults",
        "table_order",
    ])?;
    for r in rows {
        let value = |d: &Dims| match r.param {
            Param::T => d.t(),
            Param::N => d.n_tx,
            Param::K => d.n_ue,
            Param::L => d.n_taps,
        };
        w.write_record([
            r.precoder.to_string(),
            r.param.name().to_string(),
            value(&r.base).to_string(),
            value(&r.doubled).to_string(),
            r.base_mults.to_string(),
            r.doubled_mults.to_string(),
            format!("{:.4}", r.ratio()),
            format!("{:.4}", r.exponent()),
            r.base_setup.to_string(),
            r.doubled_setup.to_string(),
            table_order(&r.precoder).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
