//! Gaussian auxiliary channel: parameter estimation and GMI rates.

use rand::seq::index::sample;
use rand::Rng;

use crate::ofdm::Constellation;
use crate::Complex64;

use super::RateError;

/// Lower bound applied to the estimated auxiliary noise variance.
pub const NOISE_FLOOR: f64 = 1e-12;

/// `q(y|x) = exp(-|y - h x|² / σ_q²) / (π σ_q²)`, used with exponent `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxChannelParams {
    pub gain: Complex64,
    pub noise_var: f64,
    pub exponent: f64,
}

impl AuxChannelParams {
    pub fn new(gain: Complex64, noise_var: f64) -> Self {
        Self {
            gain,
            noise_var: noise_var.max(NOISE_FLOOR),
            exponent: 1.0,
        }
    }

    pub fn with_exponent(self, exponent: f64) -> Self {
        Self { exponent, ..self }
    }
}

/// Symbols used for estimation.
#[derive(Clone, Copy, Debug)]
pub enum IndexSet<'a> {
    All,
    Subset(&'a [usize]),
}

fn check_lengths(tx: &[Complex64], rx: &[Complex64]) -> Result<(), RateError> {
    if tx.len() != rx.len() {
        return Err(RateError::Length {
            tx: tx.len(),
            rx: rx.len(),
        });
    }
    Ok(())
}

/// Joint ML estimates over the index set:
/// `h = sum y x* / sum |x|²`, `σ_q² = mean |y - h x|²` (floored), `s = 1`.
pub fn estimate_params(tx: &[Complex64], rx: &[Complex64], set: IndexSet<'_>) -> Result<AuxChannelParams, RateError> {
    check_lengths(tx, rx)?;
    let pairs: Vec<(Complex64, Complex64)> = match set {
        IndexSet::All => tx.iter().copied().zip(rx.iter().copied()).collect(),
        IndexSet::Subset(idx) => idx
            .iter()
            .map(|&i| {
                if i >= tx.len() {
                    Err(RateError::PilotIndex(i))
                } else {
                    Ok((tx[i], rx[i]))
                }
            })
            .collect::<Result<_, _>>()?,
    };
    let energy: f64 = pairs.iter().map(|(x, _)| x.norm_sqr()).sum();
    if pairs.is_empty() || !(energy > 0.0) {
        return Err(RateError::DegeneratePilots);
    }
    let corr: Complex64 = pairs.iter().map(|(x, y)| y * x.conj()).sum();
    let gain = corr / energy;
    let noise = pairs.iter().map(|(x, y)| (y - gain * x).norm_sqr()).sum::<f64>() / pairs.len() as f64;
    Ok(AuxChannelParams::new(gain, noise))
}

/// Per-block GMI estimate in bits per symbol:
///
/// ```text
/// (1/S) sum_{i ∉ pilots} log2( q(y_i|x_i)^s / sum_a P(a) q(y_i|a)^s )
/// ```
///
/// with uniform `P(a)` over the constellation. The normalisation is by the full `S`,
/// so pilot positions cost rate.
pub fn gmi_rate(
    tx: &[Complex64],
    rx: &[Complex64],
    params: &AuxChannelParams,
    constellation: &Constellation,
    pilots: &[usize],
) -> Result<f64, RateError> {
    check_lengths(tx, rx)?;
    if tx.is_empty() {
        return Ok(0.0);
    }
    let mut is_pilot = vec![false; tx.len()];
    for &p in pilots {
        *is_pilot.get_mut(p).ok_or(RateError::PilotIndex(p))? = true;
    }
    let scale = params.exponent / params.noise_var;
    let points: Vec<Complex64> = constellation.points().iter().map(|a| params.gain * a).collect();
    let ln_m = (points.len() as f64).ln();
    let mut metrics = vec![0.0; points.len()];
    let mut total = 0.0;
    for ((x, y), pilot) in tx.iter().zip(rx).zip(&is_pilot) {
        if *pilot {
            continue;
        }
        let own = -scale * (y - params.gain * x).norm_sqr();
        let mut peak = f64::NEG_INFINITY;
        for (m, ha) in metrics.iter_mut().zip(&points) {
            *m = -scale * (y - ha).norm_sqr();
            peak = peak.max(*m);
        }
        let lse = peak + metrics.iter().map(|m| (m - peak).exp()).sum::<f64>().ln();
        total += own - lse + ln_m;
    }
    Ok(total / std::f64::consts::LN_2 / tx.len() as f64)
}

/// Grid search over the exponent `s`; returns `(s*, rate*)`. Ties keep the first grid point.
pub fn optimize_s(
    tx: &[Complex64],
    rx: &[Complex64],
    params: &AuxChannelParams,
    constellation: &Constellation,
    pilots: &[usize],
    grid: &[f64],
) -> Result<(f64, f64), RateError> {
    let mut best: Option<(f64, f64)> = None;
    for &s in grid {
        if !(s > 0.0) {
            return Err(RateError::Setup(format!(
                "exponent grid values must be positive, got {s}"
            )));
        }
        let r = gmi_rate(tx, rx, &params.with_exponent(s), constellation, pilots)?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((s, r));
        }
    }
    best.ok_or(RateError::EmptyGrid)
}

/// `round(fraction * len)` distinct pilot positions, uniform over `0..len`, sorted.
pub fn place_pilots<R: Rng + ?Sized>(len: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>, RateError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(RateError::Setup(format!(
            "pilot fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let count = (fraction * len as f64).round() as usize;
    if count == 0 || count >= len {
        return Err(RateError::DegeneratePilots);
    }
    let mut idx = sample(rng, len, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
