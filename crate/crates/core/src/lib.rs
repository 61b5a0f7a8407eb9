//! Low-resolution precoding for multi-user MISO-OFDM downlinks.
//!
//! The crate is organised along the signal path of a link-level simulation:
//!
//! * [`channel`]: multipath tap channels, their frequency responses, CSI corruption
//!   and the time-domain channel operator.
//! * [`ofdm`]: constellations, IDFT/DFT framing with a cyclic prefix.
//! * [`precode`]: linear (ZF/MMSE), quantized-linear and coordinate-minimization
//!   precoders (MAGIQ, QCM) over the finite transmit alphabet.
//! * [`rate_eval`]: achievable rates via the generalized mutual information with a
//!   Gaussian auxiliary channel.
//! * [`harness`]: configuration presets, sweeps, complexity and alpha reports.
//!
//! Matrices use `nalgebra` with complex `f64` entries. Time and frequency grids are
//! stored column-per-sample: a `K x T` grid holds `u[t]` in column `t`.

pub mod channel;
pub mod harness;
pub mod ofdm;
pub mod precode;
pub mod rate_eval;
pub mod rng;

pub use num_complex::Complex64;

/// Dense complex matrix used for channel taps, weights and sample grids.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
