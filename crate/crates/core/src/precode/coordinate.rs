//! Coordinate minimization of the time-domain cost over the transmit alphabet.
//!
//! The state caches the residuals `r[t] = u[t] - α sum_τ H[τ] x[t-τ]`. Changing
//! `x_n[t']` by `δ` only touches `r[t'], ..., r[min(t'+L-1, T-1)]`, and the change in
//! cost is
//!
//! ```text
//! Δ(δ) = -2α Re(δ* c) + α² |δ|² e,    c = sum_τ h_n[τ]^† r[t'+τ],   e = sum_τ ‖h_n[τ]‖²
//! ```
//!
//! with both sums over the same window. `c` costs `O(LK)` per coordinate and every
//! candidate symbol is then scored in `O(1)`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::TapChannel;
use crate::{CMatrix, Complex64};

use super::alphabet::TxAlphabet;
use super::cost::cost_g;
use super::ops::{OpTally, COMPLEX_MUL, COMPLEX_NORM, COMPLEX_SCALE};
use super::{PrecodeError, PrecodeResult};

/// Antenna visiting order for QCM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// `n = 0, 1, ..., N-1` at every time slot.
    RoundRobin,
    /// A fresh uniform permutation of the antennas at every time slot.
    RandomPermutation,
}

/// How the next antenna is picked within a time slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AntennaRule {
    /// MAGIQ: joint argmin over the remaining antennas and their candidate symbols.
    Greedy,
    /// QCM: fixed order, argmin over the candidate symbols only.
    Scheduled(Schedule),
}

/// Best candidate for one coordinate, before it is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub symbol: usize,
    /// Change in cost if `symbol` replaces the current symbol (`0` if it is the current one).
    pub delta: f64,
}

/// Outcome of one coordinate update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateUpdate {
    pub slot: usize,
    pub antenna: usize,
    pub previous: usize,
    pub symbol: usize,
    pub delta: f64,
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceEvent {
    Coordinate {
        iteration: usize,
        update: CoordinateUpdate,
    },
    Alpha {
        iteration: usize,
        alpha_before: f64,
        alpha_after: f64,
        cost_before: f64,
        cost_after: f64,
    },
}

/// Mutable precoding state: symbols, `α` and cached residuals.
#[derive(Clone, Debug)]
pub struct CoordinateState {
    n_tx: usize,
    n_ue: usize,
    n_taps: usize,
    len: usize,
    channel: TapChannel,
    // H[τ][k, n] at ((n * L) + τ) * K + k
    columns: Vec<Complex64>,
    // sum_{τ < w} ‖H[τ][:, n]‖² at n * (L + 1) + w
    window_energy: Vec<f64>,
    points: Vec<Complex64>,
    target: Vec<Complex64>,
    residual: Vec<Complex64>,
    // alphabet index of x_n[t] at t * N + n
    symbols: Vec<usize>,
    alpha: f64,
    noise_var: f64,
    residual_energy: f64,
    mults: u64,
}

impl CoordinateState {
    /// Builds the state from an initial transmit sequence (`N x T`), projected onto the
    /// alphabet, with `α` set to its closed-form optimum for that sequence.
    ///
    /// If the optimum is zero (e.g. an all-zero start) `α` falls back to
    /// `sqrt(sum‖u‖² / (T (P/N) sum_τ ‖H[τ]‖_F²))`, the scale matching a full-power
    /// random transmit sequence to the target.
    pub fn new(
        target: &CMatrix,
        ch: &TapChannel,
        alphabet: &TxAlphabet,
        init: &CMatrix,
        noise_var: f64,
    ) -> Result<Self, PrecodeError> {
        let (n_ue, n_tx, n_taps) = (ch.n_ue(), ch.n_tx(), ch.n_taps());
        let len = target.ncols();
        if target.nrows() != n_ue || init.nrows() != n_tx || init.ncols() != len || len == 0 {
            return Err(PrecodeError::Shape(format!(
                "target {}x{}, init {}x{}, channel {}x{}",
                target.nrows(),
                target.ncols(),
                init.nrows(),
                init.ncols(),
                n_ue,
                n_tx
            )));
        }
        if alphabet.n_tx() != n_tx {
            return Err(PrecodeError::Shape(format!(
                "alphabet normalised for {} antennas, channel has {}",
                alphabet.n_tx(),
                n_tx
            )));
        }
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(PrecodeError::Shape(format!("invalid noise variance {noise_var}")));
        }

        let mut mults = 0u64;
        let mut columns = vec![Complex64::new(0.0, 0.0); n_tx * n_taps * n_ue];
        let mut window_energy = vec![0.0; n_tx * (n_taps + 1)];
        for n in 0..n_tx {
            for (tau, tap) in ch.taps().iter().enumerate() {
                let base = (n * n_taps + tau) * n_ue;
                let mut e = 0.0;
                for k in 0..n_ue {
                    columns[base + k] = tap[(k, n)];
                    e += tap[(k, n)].norm_sqr();
                }
                window_energy[n * (n_taps + 1) + tau + 1] = window_energy[n * (n_taps + 1) + tau] + e;
            }
        }
        mults += COMPLEX_NORM * (n_tx * n_taps * n_ue) as u64;

        let symbols: Vec<usize> = (0..len)
            .flat_map(|t| (0..n_tx).map(move |n| (t, n)))
            .map(|(t, n)| alphabet.nearest_index(init[(n, t)]))
            .collect();
        let x = CMatrix::from_fn(n_tx, len, |n, t| alphabet.points()[symbols[t * n_tx + n]]);
        let hx = ch.convolve(&x)?;
        mults += COMPLEX_MUL * (len * n_taps * n_tx * n_ue) as u64;

        let target_flat: Vec<Complex64> = (0..len)
            .flat_map(|t| (0..n_ue).map(move |k| (k, t)))
            .map(|(k, t)| target[(k, t)])
            .collect();
        let hx_flat: Vec<Complex64> = (0..len)
            .flat_map(|t| (0..n_ue).map(move |k| (k, t)))
            .map(|(k, t)| hx[(k, t)])
            .collect();

        let mut state = Self {
            n_tx,
            n_ue,
            n_taps,
            len,
            channel: ch.clone(),
            columns,
            window_energy,
            points: alphabet.points().to_vec(),
            target: target_flat,
            residual: vec![Complex64::new(0.0, 0.0); len * n_ue],
            symbols,
            alpha: 0.0,
            noise_var,
            residual_energy: 0.0,
            mults,
        };
        let alpha = match state.alpha_from_output(&hx_flat) {
            Some(a) if a > 0.0 => a,
            _ => {
                let u_energy: f64 = state.target.iter().map(|u| u.norm_sqr()).sum();
                let h_energy: f64 = ch.taps().iter().map(|h| h.norm_squared()).sum();
                let a = (u_energy / (len as f64 * alphabet.power() / n_tx as f64 * h_energy)).sqrt();
                if !(a > 0.0 && a.is_finite()) {
                    return Err(PrecodeError::DegenerateAlpha);
                }
                a
            }
        };
        state.set_alpha(alpha, &hx_flat);
        Ok(state)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    /// Real multiplications performed so far.
    pub fn mults(&self) -> u64 {
        self.mults
    }

    pub fn symbol(&self, slot: usize, antenna: usize) -> usize {
        self.symbols[slot * self.n_tx + antenna]
    }

    /// Cached cost `G(x, α)`.
    pub fn cost(&self) -> f64 {
        self.residual_energy + self.noise_term(self.alpha)
    }

    fn noise_term(&self, alpha: f64) -> f64 {
        alpha * alpha * (self.len * self.n_ue) as f64 * self.noise_var
    }

    /// Current transmit sequence as an `N x T` matrix.
    pub fn x(&self) -> CMatrix {
        CMatrix::from_fn(self.n_tx, self.len, |n, t| self.points[self.symbols[t * self.n_tx + n]])
    }

    pub fn target(&self) -> CMatrix {
        CMatrix::from_fn(self.n_ue, self.len, |k, t| self.target[t * self.n_ue + k])
    }

    /// `G` evaluated from scratch, independent of the caches.
    pub fn fresh_cost(&self) -> f64 {
        cost_g(&self.x(), self.alpha, &self.channel, &self.target(), self.noise_var)
            .expect("state shapes are consistent")
    }

    /// Cost change if `x_n[t]` were replaced by `symbol`, under the current `α`.
    pub fn delta(&self, slot: usize, antenna: usize, symbol: usize) -> f64 {
        let (corr, energy) = self.window_terms(slot, antenna);
        let d = self.points[symbol] - self.points[self.symbol(slot, antenna)];
        -2.0 * self.alpha * (d.conj() * corr).re + self.alpha * self.alpha * d.norm_sqr() * energy
    }

    fn window_terms(&self, slot: usize, antenna: usize) -> (Complex64, f64) {
        let width = self.n_taps.min(self.len - slot);
        let k_dim = self.n_ue;
        let col = &self.columns[antenna * self.n_taps * k_dim..][..width * k_dim];
        let res = &self.residual[slot * k_dim..][..width * k_dim];
        let corr = col
            .iter()
            .zip(res)
            .fold(Complex64::new(0.0, 0.0), |acc, (g, r)| acc + g.conj() * r);
        (corr, self.window_energy[antenna * (self.n_taps + 1) + width])
    }

    /// Scores every candidate symbol for `x_n[t]` and returns the best one. A different
    /// symbol wins only with a strictly negative delta; ties go to the lowest index.
    pub fn best_candidate(&mut self, slot: usize, antenna: usize) -> Candidate {
        let width = self.n_taps.min(self.len - slot);
        let (corr, energy) = self.window_terms(slot, antenna);
        let lin = corr * (2.0 * self.alpha);
        let quad = self.alpha * self.alpha * energy;
        let current = self.symbol(slot, antenna);
        let x0 = self.points[current];
        let mut best = Candidate {
            symbol: current,
            delta: 0.0,
        };
        for (i, p) in self.points.iter().enumerate() {
            if i == current {
                continue;
            }
            let d = p - x0;
            let delta = -(d.conj() * lin).re + quad * d.norm_sqr();
            if delta < best.delta {
                best = Candidate { symbol: i, delta };
            }
        }
        self.mults += COMPLEX_MUL * (width * self.n_ue) as u64 + COMPLEX_SCALE + 1 + 5 * (self.points.len() as u64 - 1);
        best
    }

    /// Writes `symbol` into `x_n[t]` and updates the residual window and cached cost.
    pub fn apply(&mut self, slot: usize, antenna: usize, symbol: usize, delta: f64) {
        let current = self.symbol(slot, antenna);
        if symbol == current {
            return;
        }
        let width = self.n_taps.min(self.len - slot);
        let k_dim = self.n_ue;
        let step = (self.points[symbol] - self.points[current]) * self.alpha;
        let col = &self.columns[antenna * self.n_taps * k_dim..][..width * k_dim];
        let res = &mut self.residual[slot * k_dim..][..width * k_dim];
        for (r, g) in res.iter_mut().zip(col) {
            *r -= g * step;
        }
        self.symbols[slot * self.n_tx + antenna] = symbol;
        self.residual_energy += delta;
        self.mults += COMPLEX_SCALE + COMPLEX_MUL * (width * k_dim) as u64;
    }

    /// Minimises `G` over `x_n[t]` alone.
    pub fn coordinate_update(&mut self, slot: usize, antenna: usize) -> CoordinateUpdate {
        let cost_before = self.cost();
        let previous = self.symbol(slot, antenna);
        let best = self.best_candidate(slot, antenna);
        self.apply(slot, antenna, best.symbol, best.delta);
        CoordinateUpdate {
            slot,
            antenna,
            previous,
            symbol: best.symbol,
            delta: best.delta,
            cost_before,
            cost_after: self.cost(),
        }
    }

    /// `(sum Re(u^† y), sum ‖y‖² + TKσ²)` → optimal α, or `None` if the denominator vanishes.
    fn alpha_from_output(&mut self, hx: &[Complex64]) -> Option<f64> {
        let num: f64 = self.target.iter().zip(hx).map(|(u, y)| (u.conj() * y).re).sum();
        let den: f64 = hx.iter().map(|y| y.norm_sqr()).sum::<f64>() + (self.len * self.n_ue) as f64 * self.noise_var;
        self.mults += (COMPLEX_MUL / 2 + COMPLEX_NORM) * hx.len() as u64;
        (den > 0.0).then(|| (num / den).max(0.0))
    }

    fn set_alpha(&mut self, alpha: f64, hx: &[Complex64]) {
        self.alpha = alpha;
        let mut energy = 0.0;
        for ((r, u), y) in self.residual.iter_mut().zip(&self.target).zip(hx) {
            *r = u - y * alpha;
            energy += r.norm_sqr();
        }
        self.residual_energy = energy;
        self.mults += (COMPLEX_SCALE + COMPLEX_NORM) * hx.len() as u64;
    }

    /// Closed-form `α` update for the current symbols. Returns the new `α`.
    ///
    /// When the optimum is not positive (the symbols carry no useful correlation with
    /// the target, e.g. all zero) the current `α` is kept, so `G` does not change.
    pub fn reoptimize_alpha(&mut self) -> f64 {
        let inv = 1.0 / self.alpha;
        let hx: Vec<Complex64> = self
            .target
            .iter()
            .zip(&self.residual)
            .map(|(u, r)| (u - r) * inv)
            .collect();
        self.mults += COMPLEX_SCALE * hx.len() as u64;
        match self.alpha_from_output(&hx) {
            Some(a) if a > 0.0 => {
                self.set_alpha(a, &hx);
                a
            }
            _ => self.alpha,
        }
    }

    /// Runs `iterations` sweeps over `t = 0..T-1` with `α` re-optimised after each sweep,
    /// reporting every coordinate and `α` update to `observer`.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        rule: AntennaRule,
        iterations: usize,
        rng: &mut R,
        observer: &mut dyn FnMut(&TraceEvent, &CoordinateState),
    ) -> Result<Vec<u64>, PrecodeError> {
        if iterations == 0 {
            return Err(PrecodeError::NoIterations);
        }
        let mut per_iteration = Vec::with_capacity(iterations);
        let mut order: Vec<usize> = (0..self.n_tx).collect();
        for iteration in 0..iterations {
            let start = self.mults;
            for slot in 0..self.len {
                match rule {
                    AntennaRule::Scheduled(schedule) => {
                        if schedule == Schedule::RandomPermutation {
                            order.shuffle(rng);
                        }
                        for i in 0..self.n_tx {
                            let update = self.coordinate_update(slot, order[i]);
                            observer(&TraceEvent::Coordinate { iteration, update }, self);
                        }
                    }
                    AntennaRule::Greedy => self.greedy_slot(slot, iteration, observer),
                }
            }
            let alpha_before = self.alpha;
            let cost_before = self.cost();
            let alpha_after = self.reoptimize_alpha();
            observer(
                &TraceEvent::Alpha {
                    iteration,
                    alpha_before,
                    alpha_after,
                    cost_before,
                    cost_after: self.cost(),
                },
                self,
            );
            per_iteration.push(self.mults - start);
        }
        Ok(per_iteration)
    }

    fn greedy_slot(&mut self, slot: usize, iteration: usize, observer: &mut dyn FnMut(&TraceEvent, &CoordinateState)) {
        let mut remaining: Vec<usize> = (0..self.n_tx).collect();
        while !remaining.is_empty() {
            let mut pick: Option<(usize, Candidate)> = None;
            for (pos, &n) in remaining.iter().enumerate() {
                let c = self.best_candidate(slot, n);
                if pick.is_none_or(|(_, b)| c.delta < b.delta) {
                    pick = Some((pos, c));
                }
            }
            let (pos, best) = pick.expect("remaining is non-empty");
            if !(best.delta < 0.0) {
                // nothing left improves this slot; later picks would all be no-ops
                break;
            }
            let antenna = remaining.remove(pos);
            let cost_before = self.cost();
            let previous = self.symbol(slot, antenna);
            self.apply(slot, antenna, best.symbol, best.delta);
            let update = CoordinateUpdate {
                slot,
                antenna,
                previous,
                symbol: best.symbol,
                delta: best.delta,
                cost_before,
                cost_after: self.cost(),
            };
            observer(&TraceEvent::Coordinate { iteration, update }, self);
        }
    }

    pub fn into_result(self, setup: u64, per_iteration: Vec<u64>) -> PrecodeResult {
        PrecodeResult {
            x: self.x(),
            alpha: self.alpha,
            cost: Some(self.cost()),
            iterations: per_iteration.len(),
            ops: OpTally { setup, per_iteration },
        }
    }
}

/// Runs MAGIQ or QCM from an explicit starting sequence.
#[allow(clippy::too_many_arguments)]
pub fn coordinate_descent<R: Rng + ?Sized>(
    rule: AntennaRule,
    iterations: usize,
    target: &CMatrix,
    ch: &TapChannel,
    alphabet: &TxAlphabet,
    init: &CMatrix,
    noise_var: f64,
    rng: &mut R,
    observer: &mut dyn FnMut(&TraceEvent, &CoordinateState),
) -> Result<PrecodeResult, PrecodeError> {
    let mut state = CoordinateState::new(target, ch, alphabet, init, noise_var)?;
    let setup = state.mults();
    let per_iteration = state.run(rule, iterations, rng, observer)?;
    Ok(state.into_result(setup, per_iteration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(
        k: usize,
        n: usize,
        l: usize,
        len: usize,
        b: u32,
        seed: u64,
    ) -> (CMatrix, TapChannel, TxAlphabet, CMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = TapChannel::rayleigh(k, n, l, &mut rng).unwrap();
        let alphabet = TxAlphabet::new(1.0, n, b).unwrap();
        let target = CMatrix::from_fn(k, len, |_, _| {
            crate::channel::complex_gaussian(&mut rng, 1.0 / len as f64)
        });
        let init = CMatrix::from_fn(n, len, |_, _| alphabet.points()[rng.random_range(0..alphabet.len())]);
        (target, ch, alphabet, init)
    }

    #[test]
    fn fixed_point_leaves_symbol_unchanged() {
        let (u, ch, a, init) = instance(2, 4, 2, 6, 2, 41);
        let mut s = CoordinateState::new(&u, &ch, &a, &init, 0.1).unwrap();
        let first = s.coordinate_update(3, 1);
        let again = s.coordinate_update(3, 1);
        assert_eq!(again.symbol, first.symbol);
        assert_eq!(again.delta, 0.0);
        assert_eq!(again.cost_after, again.cost_before);
    }

    #[test]
    fn cached_delta_matches_full_recompute() {
        let (u, ch, a, init) = instance(3, 5, 3, 9, 2, 42);
        let mut s = CoordinateState::new(&u, &ch, &a, &init, 0.05).unwrap();
        for slot in 0..9 {
            for n in 0..5 {
                for sym in 0..a.len() {
                    let mut x = s.x();
                    x[(n, slot)] = a.points()[sym];
                    let fresh = cost_g(&x, s.alpha(), &ch, &u, 0.05).unwrap();
                    let predicted = s.cost() + s.delta(slot, n, sym);
                    assert!((fresh - predicted).abs() <= 1e-9 * fresh);
                }
                s.coordinate_update(slot, n);
                assert!((s.cost() - s.fresh_cost()).abs() <= 1e-9 * s.fresh_cost());
            }
        }
    }

    #[test]
    fn single_tap_touches_one_residual() {
        let (u, ch, a, init) = instance(2, 3, 1, 5, 1, 43);
        let mut s = CoordinateState::new(&u, &ch, &a, &init, 0.0).unwrap();
        let before = s.residual.clone();
        // force a change at slot 2
        let target_sym = (s.symbol(2, 0) + 1) % a.len();
        let d = s.delta(2, 0, target_sym);
        s.apply(2, 0, target_sym, d);
        let changed: Vec<usize> = (0..5)
            .filter(|&t| (0..2).any(|k| before[t * 2 + k] != s.residual[t * 2 + k]))
            .collect();
        assert_eq!(changed, vec![2]);
    }

    #[test]
    fn qcm_and_magiq_are_monotone() {
        for (seed, rule) in [
            (44, AntennaRule::Greedy),
            (45, AntennaRule::Scheduled(Schedule::RoundRobin)),
            (46, AntennaRule::Scheduled(Schedule::RandomPermutation)),
        ] {
            let (u, ch, a, init) = instance(3, 8, 3, 12, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut violations = 0;
            let mut last = f64::INFINITY;
            let res = coordinate_descent(rule, 4, &u, &ch, &a, &init, 0.02, &mut rng, &mut |ev, _| {
                let (before, after) = match ev {
                    TraceEvent::Coordinate { update, .. } => (update.cost_before, update.cost_after),
                    TraceEvent::Alpha {
                        cost_before,
                        cost_after,
                        ..
                    } => (*cost_before, *cost_after),
                };
                if after > before * (1.0 + 1e-12) || before > last * (1.0 + 1e-12) {
                    violations += 1;
                }
                last = after;
            })
            .unwrap();
            assert_eq!(violations, 0);
            assert!(res.alpha > 0.0);
            assert_eq!(res.iterations, 4);
            let fresh = cost_g(&res.x, res.alpha, &ch, &u, 0.02).unwrap();
            assert!((res.cost.unwrap() - fresh).abs() <= 1e-9 * fresh);
        }
    }

    #[test]
    fn zero_start_uses_fallback_alpha() {
        let (u, ch, a, _) = instance(2, 4, 2, 6, 2, 47);
        let zero = CMatrix::zeros(4, 6);
        let s = CoordinateState::new(&u, &ch, &a, &zero, 0.1).unwrap();
        assert!(s.alpha() > 0.0);
        assert!((s.cost() - s.fresh_cost()).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_rejected() {
        let (u, ch, a, init) = instance(2, 4, 2, 6, 2, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = coordinate_descent(
            AntennaRule::Greedy,
            0,
            &u,
            &ch,
            &a,
            &init,
            0.1,
            &mut rng,
            &mut |_, _| {},
        );
        assert!(matches!(err, Err(PrecodeError::NoIterations)));
    }
}
