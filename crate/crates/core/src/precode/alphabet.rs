use std::f64::consts::PI;

use crate::{CMatrix, Complex64};

use super::PrecodeError;

/// Per-antenna transmit alphabet `{0} ∪ {sqrt(P/N) e^{j2πq/2^b}}`.
///
/// Index 0 is the zero symbol; index `1 + q` is phase point `q`. Candidate loops and
/// tie-breaking follow this order.
#[derive(Clone, Debug, PartialEq)]
pub struct TxAlphabet {
    power: f64,
    n_tx: usize,
    phase_bits: u32,
    points: Vec<Complex64>,
}

pub const MAX_PHASE_BITS: u32 = 8;

impl TxAlphabet {
    pub fn new(power: f64, n_tx: usize, phase_bits: u32) -> Result<Self, PrecodeError> {
        if !(power.is_finite() && power > 0.0) {
            return Err(PrecodeError::InvalidAlphabet(format!(
                "power budget must be positive, got {power}"
            )));
        }
        if n_tx == 0 {
            return Err(PrecodeError::InvalidAlphabet("n_tx must be positive".into()));
        }
        if phase_bits > MAX_PHASE_BITS {
            return Err(PrecodeError::InvalidAlphabet(format!(
                "at most {MAX_PHASE_BITS} phase bits supported, got {phase_bits}"
            )));
        }
        let amp = (power / n_tx as f64).sqrt();
        let phases = 1usize << phase_bits;
        let mut points = Vec::with_capacity(phases + 1);
        points.push(Complex64::new(0.0, 0.0));
        points.extend((0..phases).map(|q| Complex64::from_polar(amp, 2.0 * PI * q as f64 / phases as f64)));
        Ok(Self {
            power,
            n_tx,
            phase_bits,
            points,
        })
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn phase_bits(&self) -> u32 {
        self.phase_bits
    }

    pub fn amplitude(&self) -> f64 {
        (self.power / self.n_tx as f64).sqrt()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point; exact ties go to the lowest index.
    pub fn nearest_index(&self, v: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = v.norm_sqr();
        for (i, p) in self.points.iter().enumerate().skip(1) {
            let d = (v - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn quantize_value(&self, v: Complex64) -> Complex64 {
        self.points[self.nearest_index(v)]
    }

    /// Entrywise nearest-point projection onto the alphabet.
    pub fn quantize(&self, x: &CMatrix) -> CMatrix {
        x.map(|v| self.quantize_value(v))
    }

    /// Real multiplications spent quantizing `entries` values by exhaustive search.
    pub fn quantize_mults(&self, entries: usize) -> u64 {
        entries as u64 * self.points.len() as u64 * 2
    }
}
