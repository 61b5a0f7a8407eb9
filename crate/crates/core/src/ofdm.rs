//! OFDM framing and modulation constellations.
//!
//! Transform convention: the transmitter IDFT carries the `1/T_F` factor and the
//! receiver DFT is unscaled,
//!
//! ```text
//! u[t] = (1/T_F) sum_m û[m] e^{+j2πmt/T_F}        ŷ[m] = sum_t y[t] e^{-j2πmt/T_F}
//! ```
//!
//! A time-domain block has length `T = T_c + T_F`. Indices `[0, T_c)` hold the cyclic
//! prefix (a copy of the last `T_c` core samples) and `[T_c, T)` hold the IDFT core.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::{CMatrix, Complex64};

#[derive(Debug, Error, PartialEq)]
pub enum OfdmError {
    #[error("received block has {got} samples, need at least t_c + t_f = {need}")]
    ShortBlock { got: usize, need: usize },
    #[error("DFT length must be positive")]
    EmptyTransform,
    #[error("unknown constellation `{0}` (expected qpsk, 16qam, 64qam or <M>psk with M in 4,8,16,32)")]
    UnknownConstellation(String),
}

/// Length-`n` DFT with the crate's sign and scaling convention.
///
/// Power-of-two lengths go through `rustfft`; other lengths use a direct `O(n²)`
/// sum with a precomputed twiddle table.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    plan: Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    twiddles: Vec<Complex64>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft")
            .field("len", &self.len)
            .field("fast", &self.plan.is_some())
            .finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Result<Self, OfdmError> {
        if len == 0 {
            return Err(OfdmError::EmptyTransform);
        }
        if len.is_power_of_two() {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(len);
            let inv = planner.plan_fft_inverse(len);
            Ok(Self {
                len,
                plan: Some((fwd, inv)),
                twiddles: Vec::new(),
            })
        } else {
            Ok(Self::direct(len))
        }
    }

    /// Direct-sum transform regardless of length.
    pub fn direct(len: usize) -> Self {
        let twiddles = (0..len)
            .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / len as f64))
            .collect();
        Self {
            len,
            plan: None,
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_fast(&self) -> bool {
        self.plan.is_some()
    }

    /// Complex multiplications performed by one transform (radix-2 count for the
    /// fast path, `n²` for the direct path).
    pub fn complex_mults(&self) -> u64 {
        let n = self.len as u64;
        if self.plan.is_some() {
            n / 2 * u64::from(n.trailing_zeros())
        } else {
            n * n
        }
    }

    /// `X[m] = sum_t x[t] e^{-j2πmt/n}` in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        match &self.plan {
            Some((fwd, _)) => fwd.process(buf),
            None => self.direct_sum(buf, false),
        }
    }

    /// `x[t] = (1/n) sum_m X[m] e^{+j2πmt/n}` in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        match &self.plan {
            Some((_, inv)) => inv.process(buf),
            None => self.direct_sum(buf, true),
        }
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    fn direct_sum(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.len;
        let input = buf.to_vec();
        for (m, out) in buf.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, v) in input.iter().enumerate() {
                let w = self.twiddles[(m * t) % n];
                acc += v * if inverse { w.conj() } else { w };
            }
            *out = acc;
        }
    }
}

/// Finite, zero-mean, unit-energy symbol set with Gray labelling.
///
/// `points()[label]` is the symbol carrying bit label `label`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    label: String,
    points: Vec<Complex64>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn qpsk() -> Self {
        let mut c = Self::square_qam(4);
        c.label = "qpsk".into();
        c
    }

    pub fn qam16() -> Self {
        Self::square_qam(16)
    }

    pub fn qam64() -> Self {
        Self::square_qam(64)
    }

    fn square_qam(order: usize) -> Self {
        let side = (order as f64).sqrt() as usize;
        let bits_per_axis = side.trailing_zeros();
        let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mut points = vec![Complex64::new(0.0, 0.0); order];
        for i_pos in 0..side {
            for q_pos in 0..side {
                let label = (gray(i_pos) << bits_per_axis) | gray(q_pos);
                let re = 2.0 * i_pos as f64 - (side as f64 - 1.0);
                let im = 2.0 * q_pos as f64 - (side as f64 - 1.0);
                points[label] = Complex64::new(re, im) / norm;
            }
        }
        Self {
            label: format!("{order}qam"),
            points,
        }
    }

    /// `order`-PSK with points `e^{j2πp/order}`; `order` must be one of 4, 8, 16, 32.
    pub fn psk(order: usize) -> Result<Self, OfdmError> {
        if ![4, 8, 16, 32].contains(&order) {
            return Err(OfdmError::UnknownConstellation(format!("{order}psk")));
        }
        let mut points = vec![Complex64::new(0.0, 0.0); order];
        for pos in 0..order {
            points[gray(pos)] = Complex64::from_polar(1.0, 2.0 * PI * pos as f64 / order as f64);
        }
        Ok(Self {
            label: format!("{order}psk"),
            points,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> f64 {
        (self.points.len() as f64).log2()
    }

    /// iid uniform `n_ue x t_f` grid of symbols.
    pub fn draw<R: Rng + ?Sized>(&self, n_ue: usize, t_f: usize, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(n_ue, t_f, |_, _| self.points[rng.random_range(0..self.points.len())])
    }
}

impl FromStr for Constellation {
    type Err = OfdmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let name = s.trim().to_ascii_lowercase();
        match name.as_str() {
            "qpsk" | "4qam" => Ok(Self::qpsk()),
            "16qam" | "16-qam" => Ok(Self::qam16()),
            "64qam" | "64-qam" => Ok(Self::qam64()),
            other => match other.strip_suffix("psk").map(|m| m.trim_end_matches('-')) {
                Some(m) => m
                    .parse::<usize>()
                    .map_err(|_| OfdmError::UnknownConstellation(s.to_string()))
                    .and_then(Self::psk),
                None => Err(OfdmError::UnknownConstellation(s.to_string())),
            },
        }
    }
}

/// One OFDM block: frequency-domain symbols and their cyclic-prefixed time image.
#[derive(Clone, Debug, PartialEq)]
pub struct OfdmFrame {
    pub freq: CMatrix,
    pub time: CMatrix,
    pub t_f: usize,
    pub t_c: usize,
}

impl OfdmFrame {
    pub fn new(freq: CMatrix, t_c: usize) -> Result<Self, OfdmError> {
        let dft = Dft::new(freq.ncols())?;
        let time = to_time_with(&dft, &freq, t_c);
        let t_f = freq.ncols();
        Ok(Self { freq, time, t_f, t_c })
    }

    pub fn len(&self) -> usize {
        self.t_f + self.t_c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-row IDFT (with `1/T_F`) followed by cyclic extension to `t_c + T_F` columns.
pub fn to_time(freq: &CMatrix, t_c: usize) -> Result<CMatrix, OfdmError> {
    let dft = Dft::new(freq.ncols())?;
    Ok(to_time_with(&dft, freq, t_c))
}

pub fn to_time_with(dft: &Dft, freq: &CMatrix, t_c: usize) -> CMatrix {
    let t_f = dft.len();
    assert_eq!(freq.ncols(), t_f);
    let mut out = CMatrix::zeros(freq.nrows(), t_c + t_f);
    let mut buf = vec![Complex64::new(0.0, 0.0); t_f];
    for row in 0..freq.nrows() {
        for (m, b) in buf.iter_mut().enumerate() {
            *b = freq[(row, m)];
        }
        dft.inverse(&mut buf);
        for (t, v) in buf.iter().enumerate() {
            out[(row, t_c + t)] = *v;
        }
        for t in 0..t_c {
            // prefix wraps modulo t_f when t_c > t_f
            out[(row, t)] = buf[(t_f - t_c % t_f + t) % t_f];
        }
    }
    out
}

/// Drops the first `t_c` samples of each row and applies the unscaled length-`t_f` DFT.
pub fn from_time(time: &CMatrix, t_f: usize, t_c: usize) -> Result<CMatrix, OfdmError> {
    let dft = Dft::new(t_f)?;
    from_time_with(&dft, time, t_c)
}

pub fn from_time_with(dft: &Dft, time: &CMatrix, t_c: usize) -> Result<CMatrix, OfdmError> {
    let t_f = dft.len();
    if time.ncols() < t_c + t_f {
        return Err(OfdmError::ShortBlock {
            got: time.ncols(),
            need: t_c + t_f,
        });
    }
    let mut out = CMatrix::zeros(time.nrows(), t_f);
    let mut buf = vec![Complex64::new(0.0, 0.0); t_f];
    for row in 0..time.nrows() {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = time[(row, t_c + t)];
        }
        dft.forward(&mut buf);
        for (m, v) in buf.iter().enumerate() {
            out[(row, m)] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn constellations_are_zero_mean_unit_energy() {
        let names = ["qpsk", "16qam", "64qam", "4psk", "8psk", "16psk", "32psk"];
        for name in names {
            let c: Constellation = name.parse().unwrap();
            let n = c.order() as f64;
            let mean: Complex64 = c.points().iter().sum::<Complex64>() / n;
            let energy: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
            assert!(mean.norm() < 1e-12, "{name}");
            assert!((energy - 1.0).abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn qpsk_matches_textbook_points() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = Constellation::qpsk();
        for p in c.points() {
            assert!((p.re.abs() - s).abs() < 1e-15 && (p.im.abs() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::qam16();
        let pts = c.points();
        let min_d = 2.0 / 10f64.sqrt();
        for a in 0..16 {
            for b in 0..16 {
                if ((pts[a] - pts[b]).norm() - min_d).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn unknown_constellation_rejected() {
        assert!("7psk".parse::<Constellation>().is_err());
        assert!("32qam".parse::<Constellation>().is_err());
    }

    #[test]
    fn qpsk_draws_are_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Constellation::qpsk().draw(3, 50, &mut rng);
        assert!(g.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn qam64_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Constellation::qam64().draw(1, 100_000, &mut rng);
        let n = g.len() as f64;
        let mean = g.iter().sum::<Complex64>() / n;
        let energy = g.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        assert!(mean.norm() < 0.02);
        assert!((energy - 1.0).abs() < 0.02);
    }

    #[test]
    fn draw_shape_system_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Constellation::qam16().draw(16, 256, &mut rng);
        assert_eq!(g.shape(), (16, 256));
    }

    #[test]
    fn dc_tone_gives_constant() {
        let mut freq = CMatrix::zeros(1, 8);
        freq[(0, 0)] = Complex64::new(8.0, 0.0);
        let time = to_time(&freq, 0).unwrap();
        for v in time.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn prefix_copies_tail() {
        let freq = random_grid(2, 32, 4);
        let time = to_time(&freq, 3).unwrap();
        assert_eq!(time.ncols(), 35);
        for row in 0..2 {
            for t in 0..3 {
                assert_eq!(time[(row, t)], time[(row, t + 32)]);
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for t_f in [16usize, 12, 45] {
            let freq = random_grid(3, t_f, t_f as u64);
            let time = to_time(&freq, 5).unwrap();
            let back = from_time(&time, t_f, 5).unwrap();
            assert!((&back - &freq).norm() <= 1e-12 * freq.norm());
            for row in 0..3 {
                let e_time: f64 = (5..5 + t_f).map(|t| time[(row, t)].norm_sqr()).sum();
                let e_freq: f64 = (0..t_f).map(|m| freq[(row, m)].norm_sqr()).sum();
                assert!((e_time - e_freq / t_f as f64).abs() < 1e-12 * e_freq);
            }
        }
    }

    #[test]
    fn fast_and_direct_paths_agree() {
        let fast = Dft::new(64).unwrap();
        let slow = Dft::direct(64);
        assert!(fast.is_fast() && !slow.is_fast());
        let grid = random_grid(1, 64, 9);
        let mut a: Vec<Complex64> = grid.iter().copied().collect();
        let mut b = a.clone();
        fast.forward(&mut a);
        slow.forward(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
        fast.inverse(&mut a);
        slow.inverse(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn short_input_rejected_and_zero_maps_to_zero() {
        let time = CMatrix::zeros(2, 10);
        assert_eq!(from_time(&time, 8, 3), Err(OfdmError::ShortBlock { got: 10, need: 11 }));
        let out = from_time(&time, 8, 2).unwrap();
        assert!(out.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }
}
