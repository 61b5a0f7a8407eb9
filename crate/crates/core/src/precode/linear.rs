//! Linear precoders and the matched-filter starting point.

use nalgebra::Cholesky;

use crate::channel::FreqChannel;
use crate::ofdm::{to_time_with, Dft, OfdmFrame};
use crate::{CMatrix, Complex64};

use super::alphabet::TxAlphabet;
use super::ops::{OpTally, COMPLEX_MUL, COMPLEX_NORM, COMPLEX_SCALE};
use super::{PrecodeError, PrecodeResult};

/// Relative pivot threshold below which `Ĥ Ĥ^†` is treated as singular at `σ² = 0`.
const ZF_RANK_TOL: f64 = 1e-12;

/// Per-subcarrier Wiener filters `W[m] = P Ĥ[m]^† (P Ĥ[m] Ĥ[m]^† + σ² I)^{-1}` (`N x K`).
///
/// `noise_var = 0` gives the zero-forcing right pseudo-inverse, which requires every
/// `Ĥ[m]` to have full row rank.
pub fn lmmse_weights(freq: &FreqChannel, symbol_power: f64, noise_var: f64) -> Result<Vec<CMatrix>, PrecodeError> {
    if !(symbol_power > 0.0) || !(noise_var >= 0.0) {
        return Err(PrecodeError::Shape(format!(
            "need symbol_power > 0 and noise_var >= 0, got {symbol_power}, {noise_var}"
        )));
    }
    freq.per_subcarrier
        .iter()
        .enumerate()
        .map(|(m, h)| {
            let k = h.nrows();
            let scaled = h * Complex64::new(symbol_power, 0.0);
            let gram = &scaled * h.adjoint() + CMatrix::identity(k, k) * Complex64::new(noise_var, 0.0);
            let chol = Cholesky::new(gram).ok_or(PrecodeError::ZfInfeasible { subcarrier: m })?;
            if noise_var == 0.0 {
                let diag: Vec<f64> = chol.l_dirty().diagonal().iter().map(|d| d.re).collect();
                let max = diag.iter().cloned().fold(0.0, f64::max);
                let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(min * min > ZF_RANK_TOL * max * max) {
                    return Err(PrecodeError::ZfInfeasible { subcarrier: m });
                }
            }
            // gram is Hermitian, so W^† = gram^{-1} P Ĥ
            Ok(chol.solve(&scaled).adjoint())
        })
        .collect()
}

pub fn zf_weights(freq: &FreqChannel) -> Result<Vec<CMatrix>, PrecodeError> {
    lmmse_weights(freq, 1.0, 0.0)
}

/// Real multiplications for [`lmmse_weights`] on `t_f` subcarriers of a `K x N` channel:
/// Gram matrix `K²N`, Cholesky `K³/3`, two triangular solves with `N` right-hand sides `K²N`.
pub fn lmmse_weight_mults(n_ue: usize, n_tx: usize, t_f: usize) -> u64 {
    let (k, n, t_f) = (n_ue as u64, n_tx as u64, t_f as u64);
    t_f * COMPLEX_MUL * (2 * k * k * n + k * k * k / 3)
}

fn normalize_block(x: &mut CMatrix, power: f64) -> Result<f64, PrecodeError> {
    let energy = x.norm_squared() / x.ncols() as f64;
    if !(energy > 0.0) {
        return Err(PrecodeError::DegenerateAlpha);
    }
    let c = (power / energy).sqrt();
    *x *= Complex64::new(c, 0.0);
    Ok(c)
}

/// Applies `x̂[m] = W[m] û[m]`, takes per-antenna IDFTs, adds the cyclic prefix and
/// scales the block so that the average energy `(1/T) sum_t ‖x[t]‖²` equals `power`.
///
/// The returned `alpha` is the inverse of that scaling, so `α H x` reproduces the
/// target exactly for zero-forcing weights and perfect CSI.
pub fn linear_precode(
    freq_data: &CMatrix,
    weights: &[CMatrix],
    t_c: usize,
    power: f64,
) -> Result<PrecodeResult, PrecodeError> {
    let t_f = freq_data.ncols();
    if weights.len() != t_f {
        return Err(PrecodeError::Shape(format!(
            "{} weight matrices for {} subcarriers",
            weights.len(),
            t_f
        )));
    }
    let n_tx = weights.first().map_or(0, |w| w.nrows());
    let n_ue = freq_data.nrows();
    if weights.iter().any(|w| w.shape() != (n_tx, n_ue)) {
        return Err(PrecodeError::Shape("weight matrices must all be N x K".into()));
    }
    let mut freq_tx = CMatrix::zeros(n_tx, t_f);
    for (m, w) in weights.iter().enumerate() {
        freq_tx.set_column(m, &(w * freq_data.column(m)));
    }
    let dft = Dft::new(t_f).map_err(|e| PrecodeError::Shape(e.to_string()))?;
    let mut x = to_time_with(&dft, &freq_tx, t_c);
    let scale = normalize_block(&mut x, power)?;
    let len = (t_f + t_c) as u64;
    let mults = COMPLEX_MUL * (t_f * n_tx * n_ue) as u64
        + COMPLEX_MUL * n_tx as u64 * dft.complex_mults()
        + (COMPLEX_NORM + COMPLEX_SCALE) * n_tx as u64 * len;
    Ok(PrecodeResult {
        x,
        alpha: 1.0 / scale,
        cost: None,
        iterations: 1,
        ops: OpTally {
            setup: 0,
            per_iteration: vec![mults],
        },
    })
}

/// Quantized transmit matched filter: `Ĥ[m]^† û[m]` per subcarrier, per-antenna IDFT
/// with cyclic prefix, scaled to block-average energy `P`, then projected entrywise
/// onto the alphabet.
pub fn matched_filter_init(
    frame: &OfdmFrame,
    freq_ch: &FreqChannel,
    alphabet: &TxAlphabet,
) -> Result<CMatrix, PrecodeError> {
    if freq_ch.n_subcarriers() != frame.t_f {
        return Err(PrecodeError::Shape(format!(
            "frequency response has {} subcarriers, frame has {}",
            freq_ch.n_subcarriers(),
            frame.t_f
        )));
    }
    let n_tx = freq_ch.per_subcarrier[0].ncols();
    let mut freq_tx = CMatrix::zeros(n_tx, frame.t_f);
    for (m, h) in freq_ch.per_subcarrier.iter().enumerate() {
        freq_tx.set_column(m, &h.ad_mul(&frame.freq.column(m)));
    }
    let dft = Dft::new(frame.t_f).map_err(|e| PrecodeError::Shape(e.to_string()))?;
    let mut x = to_time_with(&dft, &freq_tx, frame.t_c);
    normalize_block(&mut x, alphabet.power())?;
    Ok(alphabet.quantize(&x))
}

/// Real multiplications spent by [`matched_filter_init`].
pub fn matched_filter_mults(n_ue: usize, n_tx: usize, t_f: usize, t_c: usize, alphabet: &TxAlphabet) -> u64 {
    let dft = Dft::new(t_f.max(1)).expect("positive length");
    let len = t_f + t_c;
    COMPLEX_MUL * (t_f * n_tx * n_ue) as u64
        + COMPLEX_MUL * n_tx as u64 * dft.complex_mults()
        + (COMPLEX_NORM + COMPLEX_SCALE) * (n_tx * len) as u64
        + alphabet.quantize_mults(n_tx * len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::TapChannel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn freq_channel(k: usize, n: usize, l: usize, t_f: usize, seed: u64) -> FreqChannel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TapChannel::rayleigh(k, n, l, &mut rng)
            .unwrap()
            .frequency_response(t_f)
            .unwrap()
    }

    #[test]
    fn zf_inverts_channel() {
        let f = freq_channel(4, 16, 3, 8, 31);
        let w = zf_weights(&f).unwrap();
        for (h, w) in f.per_subcarrier.iter().zip(&w) {
            assert!((h * w - CMatrix::identity(4, 4)).norm() <= 1e-9);
        }
    }

    #[test]
    fn scalar_wiener_filter() {
        let f = FreqChannel {
            per_subcarrier: vec![CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))],
        };
        let w = lmmse_weights(&f, 1.0, 1.0).unwrap();
        assert!((w[0][(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mmse_approaches_zf() {
        let f = freq_channel(4, 16, 2, 4, 32);
        let zf = zf_weights(&f).unwrap();
        let mmse = lmmse_weights(&f, 1.0, 1e-8).unwrap();
        for (a, b) in zf.iter().zip(&mmse) {
            assert!((a - b).norm() <= 1e-6 * a.norm());
        }
    }

    #[test]
    fn rank_deficient_zf_rejected() {
        let h = CMatrix::from_fn(2, 3, |_, n| Complex64::new(n as f64 + 1.0, 0.0));
        let f = FreqChannel {
            per_subcarrier: vec![h],
        };
        assert!(matches!(
            zf_weights(&f),
            Err(PrecodeError::ZfInfeasible { subcarrier: 0 })
        ));
        assert!(lmmse_weights(&f, 1.0, 0.1).is_ok());
    }

    #[test]
    fn identity_channel_reproduces_scaled_target() {
        let f = FreqChannel {
            per_subcarrier: vec![CMatrix::identity(3, 3); 8],
        };
        let w = zf_weights(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = crate::ofdm::Constellation::qpsk().draw(3, 8, &mut rng);
        let frame = OfdmFrame::new(data.clone(), 2).unwrap();
        let out = linear_precode(&data, &w, 2, 1.0).unwrap();
        let scaled = &out.x * Complex64::new(out.alpha, 0.0);
        assert!((scaled - &frame.time).norm() < 1e-12);
        let energy = out.x.norm_squared() / out.x.ncols() as f64;
        assert!((energy - 1.0).abs() < 1e-12);
    }
}
