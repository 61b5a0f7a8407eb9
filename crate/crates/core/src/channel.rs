//! Discrete-time multipath MIMO channels.
//!
//! A [`TapChannel`] holds the impulse response `H[0..L-1]` (each `K x N`). The
//! time-domain operator is the linear convolution
//!
//! ```text
//! y[t] = sum_{τ=0}^{L-1} H[τ] x[t-τ] + z[t],     x[t] = 0 for t < 0
//! ```
//!
//! so consecutive blocks are isolated from each other.
//!
//! # Tap file format
//!
//! [`TapChannel::write_text`] / [`TapChannel::read_text`] use a plain-text layout:
//!
//! ```text
//! lowres-taps v1
//! <K> <N> <L>
//! <re> <im> <re> <im> ...      # one line per (τ, k): N complex entries of row k of H[τ]
//! ```
//!
//! Lines are ordered `τ = 0..L-1` outer, `k = 0..K-1` inner. Blank lines and lines
//! starting with `#` are ignored.

use std::io::{BufRead, Write};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::ofdm::Dft;
use crate::{CMatrix, Complex64};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel dimensions must be positive (n_ue={n_ue}, n_tx={n_tx}, n_taps={n_taps})")]
    ZeroDimension { n_ue: usize, n_tx: usize, n_taps: usize },
    #[error("tap {tap} has shape {got:?}, expected {expected:?}")]
    TapShape {
        tap: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("DFT length {t_f} is shorter than the channel ({n_taps} taps)")]
    TooFewSubcarriers { t_f: usize, n_taps: usize },
    #[error("input has {got} rows, channel expects {expected} transmit antennas")]
    InputShape { got: usize, expected: usize },
    #[error("CSI error parameter must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("noise variance must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("tap file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Draws one `CN(0, variance)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, variance))
}

/// Impulse response `H[τ]`, `τ = 0..L-1`, each a `K x N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TapChannel {
    taps: Vec<CMatrix>,
}

impl TapChannel {
    pub fn new(taps: Vec<CMatrix>) -> Result<Self, ChannelError> {
        let Some(first) = taps.first() else {
            return Err(ChannelError::ZeroDimension {
                n_ue: 0,
                n_tx: 0,
                n_taps: 0,
            });
        };
        let expected = first.shape();
        if expected.0 == 0 || expected.1 == 0 {
            return Err(ChannelError::ZeroDimension {
                n_ue: expected.0,
                n_tx: expected.1,
                n_taps: taps.len(),
            });
        }
        for (tap, m) in taps.iter().enumerate() {
            if m.shape() != expected {
                return Err(ChannelError::TapShape {
                    tap,
                    got: m.shape(),
                    expected,
                });
            }
        }
        Ok(Self { taps })
    }

    /// Rayleigh fading with a uniform power delay profile: every entry of every tap is
    /// iid `CN(0, 1/L)`.
    pub fn rayleigh<R: Rng + ?Sized>(
        n_ue: usize,
        n_tx: usize,
        n_taps: usize,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        check_dims(n_ue, n_tx, n_taps)?;
        let var = 1.0 / n_taps as f64;
        let taps = (0..n_taps).map(|_| gaussian_matrix(n_ue, n_tx, var, rng)).collect();
        Ok(Self { taps })
    }

    pub fn n_ue(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[CMatrix] {
        &self.taps
    }

    pub fn tap(&self, tau: usize) -> &CMatrix {
        &self.taps[tau]
    }

    /// `Ĥ[m]_{kn} = sum_τ h_kn[τ] e^{-j2πmτ/T_F}`, computed as the DFT of each
    /// zero-padded tap sequence.
    pub fn frequency_response(&self, t_f: usize) -> Result<FreqChannel, ChannelError> {
        if t_f < self.n_taps() {
            return Err(ChannelError::TooFewSubcarriers {
                t_f,
                n_taps: self.n_taps(),
            });
        }
        let dft = Dft::new(t_f).expect("t_f >= n_taps >= 1");
        let (k_dim, n_dim) = (self.n_ue(), self.n_tx());
        let mut per_subcarrier = vec![CMatrix::zeros(k_dim, n_dim); t_f];
        let mut buf = vec![Complex64::new(0.0, 0.0); t_f];
        for k in 0..k_dim {
            for n in 0..n_dim {
                buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for (tau, tap) in self.taps.iter().enumerate() {
                    buf[tau] = tap[(k, n)];
                }
                dft.forward(&mut buf);
                for (m, v) in buf.iter().enumerate() {
                    per_subcarrier[m][(k, n)] = *v;
                }
            }
        }
        Ok(FreqChannel { per_subcarrier })
    }

    /// Complex multiplications spent by [`Self::frequency_response`].
    pub fn frequency_response_mults(&self, t_f: usize) -> u64 {
        let dft = Dft::new(t_f.max(1)).expect("positive length");
        (self.n_ue() * self.n_tx()) as u64 * dft.complex_mults()
    }

    /// Noise-free output `sum_τ H[τ] x[t-τ]` for an `N x T` input.
    pub fn convolve(&self, x: &CMatrix) -> Result<CMatrix, ChannelError> {
        if x.nrows() != self.n_tx() {
            return Err(ChannelError::InputShape {
                got: x.nrows(),
                expected: self.n_tx(),
            });
        }
        let len = x.ncols();
        let mut y = CMatrix::zeros(self.n_ue(), len);
        for (tau, tap) in self.taps.iter().enumerate() {
            if tau >= len {
                break;
            }
            let mut dst = y.columns_mut(tau, len - tau);
            dst.gemm(
                Complex64::new(1.0, 0.0),
                tap,
                &x.columns(0, len - tau),
                Complex64::new(1.0, 0.0),
            );
        }
        Ok(y)
    }

    /// Channel output with additive `CN(0, σ² I)` noise drawn from `rng`.
    ///
    /// The noise is generated as unit-variance samples scaled by `σ`, so runs at
    /// different noise levels with the same generator share one noise realisation.
    pub fn apply<R: Rng + ?Sized>(&self, x: &CMatrix, noise: &NoiseSpec, rng: &mut R) -> Result<CMatrix, ChannelError> {
        noise.validate()?;
        let mut y = self.convolve(x)?;
        let sigma = noise.variance.sqrt();
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, 1.0) * sigma;
        }
        Ok(y)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), ChannelError> {
        writeln!(w, "lowres-taps v1")?;
        writeln!(w, "{} {} {}", self.n_ue(), self.n_tx(), self.n_taps())?;
        for tap in &self.taps {
            for k in 0..self.n_ue() {
                let row: Vec<String> = (0..self.n_tx())
                    .map(|n| format!("{} {}", tap[(k, n)].re, tap[(k, n)].im))
                    .collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, ChannelError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| match l {
            Ok(s) => !(s.trim().is_empty() || s.trim_start().starts_with('#')),
            Err(_) => true,
        });
        let mut next = |what: &str| -> Result<(usize, String), ChannelError> {
            match lines.next() {
                Some((i, Ok(s))) => Ok((i, s)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(ChannelError::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (line, header) = next("header")?;
        if header.trim() != "lowres-taps v1" {
            return Err(ChannelError::Parse {
                line,
                msg: format!("bad header `{}`", header.trim()),
            });
        }
        let (line, dims) = next("dimensions")?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| ChannelError::Parse {
                line,
                msg: format!("dimensions: {e}"),
            })?;
        let [n_ue, n_tx, n_taps] = dims[..] else {
            return Err(ChannelError::Parse {
                line,
                msg: "expected `K N L`".into(),
            });
        };
        check_dims(n_ue, n_tx, n_taps)?;
        let mut taps = Vec::with_capacity(n_taps);
        for _ in 0..n_taps {
            let mut tap = CMatrix::zeros(n_ue, n_tx);
            for k in 0..n_ue {
                let (line, row) = next("tap row")?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| ChannelError::Parse {
                        line,
                        msg: format!("{e}"),
                    })?;
                if vals.len() != 2 * n_tx {
                    return Err(ChannelError::Parse {
                        line,
                        msg: format!("expected {} numbers, found {}", 2 * n_tx, vals.len()),
                    });
                }
                for n in 0..n_tx {
                    tap[(k, n)] = Complex64::new(vals[2 * n], vals[2 * n + 1]);
                }
            }
            taps.push(tap);
        }
        if let Ok((line, _)) = next("") {
            return Err(ChannelError::Parse {
                line,
                msg: "trailing data".into(),
            });
        }
        Self::new(taps)
    }
}

fn check_dims(n_ue: usize, n_tx: usize, n_taps: usize) -> Result<(), ChannelError> {
    if n_ue == 0 || n_tx == 0 || n_taps == 0 {
        return Err(ChannelError::ZeroDimension { n_ue, n_tx, n_taps });
    }
    Ok(())
}

/// Per-subcarrier channel matrices `Ĥ[m]`, `m = 0..T_F-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqChannel {
    pub per_subcarrier: Vec<CMatrix>,
}

impl FreqChannel {
    pub fn n_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Per receive antenna, per sample.
    pub variance: f64,
}

impl NoiseSpec {
    pub fn new(variance: f64) -> Result<Self, ChannelError> {
        let spec = Self { variance };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ChannelError> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(ChannelError::InvalidNoise(self.variance));
        }
        Ok(())
    }
}

/// Source of channel realisations for Monte-Carlo blocks.
pub trait TapGenerator: Send + Sync {
    fn generate(&self, rng: &mut dyn RngCore) -> Result<TapChannel, ChannelError>;
}

/// iid Rayleigh taps with uniform power delay profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformPdpRayleigh {
    pub n_ue: usize,
    pub n_tx: usize,
    pub n_taps: usize,
}

impl TapGenerator for UniformPdpRayleigh {
    fn generate(&self, rng: &mut dyn RngCore) -> Result<TapChannel, ChannelError> {
        TapChannel::rayleigh(self.n_ue, self.n_tx, self.n_taps, rng)
    }
}

/// The same externally supplied channel for every block.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedTaps(pub TapChannel);

impl TapGenerator for FixedTaps {
    fn generate(&self, _rng: &mut dyn RngCore) -> Result<TapChannel, ChannelError> {
        Ok(self.0.clone())
    }
}

/// Transmitter-side channel knowledge and the error matrices it was built with.
///
/// The true channel satisfies `H[τ] = sqrt(1-ε²) estimate[τ] + ε innovation[τ]`
/// with `innovation` iid `CN(0, 1/L)` and independent of `estimate`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiCorruption {
    pub estimate: TapChannel,
    pub innovation: Vec<CMatrix>,
}

/// Imperfect CSI with error parameter `ε ∈ [0, 1]`.
///
/// The estimate is drawn from its conditional law given the true channel,
/// `H̃ = sqrt(1-ε²) H + ε W` with fresh `W ~ CN(0, 1/L)`, so that `H̃` has the same
/// statistics as `H` and the implied error `Z = ε H - sqrt(1-ε²) W` is independent
/// of `H̃`. `ε = 0` returns `H` unchanged; `ε = 1` returns an independent draw.
pub fn corrupt_csi<R: Rng + ?Sized>(ch: &TapChannel, epsilon: f64, rng: &mut R) -> Result<CsiCorruption, ChannelError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(ChannelError::InvalidEpsilon(epsilon));
    }
    let var = 1.0 / ch.n_taps() as f64;
    let keep = (1.0 - epsilon * epsilon).sqrt();
    let mut estimate = Vec::with_capacity(ch.n_taps());
    let mut innovation = Vec::with_capacity(ch.n_taps());
    for tap in ch.taps() {
        if epsilon == 0.0 {
            estimate.push(tap.clone());
            innovation.push(CMatrix::zeros(tap.nrows(), tap.ncols()));
            continue;
        }
        let w = gaussian_matrix(tap.nrows(), tap.ncols(), var, rng);
        estimate.push(tap * Complex64::new(keep, 0.0) + &w * Complex64::new(epsilon, 0.0));
        innovation.push(tap * Complex64::new(epsilon, 0.0) - &w * Complex64::new(keep, 0.0));
    }
    Ok(CsiCorruption {
        estimate: TapChannel::new(estimate)?,
        innovation,
    })
}
