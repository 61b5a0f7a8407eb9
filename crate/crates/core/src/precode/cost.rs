use crate::channel::TapChannel;
use crate::CMatrix;

use super::PrecodeError;

fn check_shapes(x: &CMatrix, ch: &TapChannel, target: &CMatrix) -> Result<(), PrecodeError> {
    if x.nrows() != ch.n_tx() || target.nrows() != ch.n_ue() || x.ncols() != target.ncols() {
        return Err(PrecodeError::Shape(format!(
            "x is {}x{}, target is {}x{}, channel is {}x{}",
            x.nrows(),
            x.ncols(),
            target.nrows(),
            target.ncols(),
            ch.n_ue(),
            ch.n_tx()
        )));
    }
    Ok(())
}

/// Time-domain MSE cost
/// `G = sum_t ‖u[t] - α sum_τ H[τ] x[t-τ]‖² + α² T K σ²`.
pub fn cost_g(x: &CMatrix, alpha: f64, ch: &TapChannel, target: &CMatrix, noise_var: f64) -> Result<f64, PrecodeError> {
    check_shapes(x, ch, target)?;
    let y = ch.convolve(x)?;
    let mismatch: f64 = target
        .iter()
        .zip(y.iter())
        .map(|(u, v)| (u - v * alpha).norm_sqr())
        .sum();
    let len = target.ncols() as f64;
    let k = target.nrows() as f64;
    Ok(mismatch + alpha * alpha * len * k * noise_var)
}

/// Closed-form minimiser of `G` over `α >= 0` for fixed `x`:
/// `α = sum_t Re(u[t]^H (Hx)[t]) / (sum_t ‖(Hx)[t]‖² + T K σ²)`, clamped at 0.
pub fn optimal_alpha(x: &CMatrix, ch: &TapChannel, target: &CMatrix, noise_var: f64) -> Result<f64, PrecodeError> {
    check_shapes(x, ch, target)?;
    let y = ch.convolve(x)?;
    let num: f64 = target.iter().zip(y.iter()).map(|(u, v)| (u.conj() * v).re).sum();
    let den: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>() + (target.ncols() * target.nrows()) as f64 * noise_var;
    if !(den > 0.0) {
        return Err(PrecodeError::DegenerateAlpha);
    }
    Ok((num / den).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// Independent triple-loop evaluation of the cost.
    fn naive_cost(x: &CMatrix, alpha: f64, ch: &TapChannel, u: &CMatrix, s2: f64) -> f64 {
        let (k_dim, len) = u.shape();
        let mut g = 0.0;
        for t in 0..len {
            for k in 0..k_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for tau in 0..ch.n_taps() {
                    if tau > t {
                        continue;
                    }
                    for n in 0..ch.n_tx() {
                        acc += ch.tap(tau)[(k, n)] * x[(n, t - tau)];
                    }
                }
                g += (u[(k, t)] - acc * alpha).norm_sqr();
            }
        }
        g + alpha * alpha * (len * k_dim) as f64 * s2
    }

    #[test]
    fn matches_naive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let ch = TapChannel::rayleigh(2, 4, 2, &mut rng).unwrap();
            let x = random(4, 5, &mut rng);
            let u = random(2, 5, &mut rng);
            let alpha = rng.random::<f64>() * 2.0;
            let s2 = rng.random::<f64>();
            let fast = cost_g(&x, alpha, &ch, &u, s2).unwrap();
            let slow = naive_cost(&x, alpha, &ch, &u, s2);
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
        }
    }

    #[test]
    fn zero_alpha_gives_target_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let ch = TapChannel::rayleigh(3, 4, 2, &mut rng).unwrap();
        let x = random(4, 6, &mut rng);
        let u = random(3, 6, &mut rng);
        let g = cost_g(&x, 0.0, &ch, &u, 0.7).unwrap();
        assert!((g - u.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_gives_zero_cost_and_unit_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ch = TapChannel::rayleigh(3, 4, 3, &mut rng).unwrap();
        let x = random(4, 7, &mut rng);
        let u = ch.convolve(&x).unwrap();
        assert!(cost_g(&x, 1.0, &ch, &u, 0.0).unwrap() < 1e-24);
        assert!((optimal_alpha(&x, &ch, &u, 0.0).unwrap() - 1.0).abs() < 1e-12);

        let s2 = 0.05;
        let energy = u.norm_squared();
        let shrink = energy / (energy + 7.0 * 3.0 * s2);
        assert!((optimal_alpha(&x, &ch, &u, s2).unwrap() - shrink).abs() < 1e-12);
    }

    #[test]
    fn optimal_alpha_is_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..20 {
            let ch = TapChannel::rayleigh(2, 6, 3, &mut rng).unwrap();
            let x = random(6, 9, &mut rng);
            let u = ch.convolve(&x).unwrap() * Complex64::new(0.3, 0.1) + random(2, 9, &mut rng);
            let s2 = 0.1;
            let a = optimal_alpha(&x, &ch, &u, s2).unwrap();
            let g = cost_g(&x, a, &ch, &u, s2).unwrap();
            for probe in [a - 0.01, a + 0.01] {
                if probe >= 0.0 {
                    assert!(g <= cost_g(&x, probe, &ch, &u, s2).unwrap());
                }
            }
        }
    }

    #[test]
    fn alpha_scales_with_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let ch = TapChannel::rayleigh(2, 4, 2, &mut rng).unwrap();
        let x = random(4, 6, &mut rng);
        let u = ch.convolve(&x).unwrap() + random(2, 6, &mut rng) * Complex64::new(0.1, 0.0);
        let a1 = optimal_alpha(&x, &ch, &u, 0.2).unwrap();
        let a3 = optimal_alpha(&x, &ch, &(&u * Complex64::new(3.0, 0.0)), 0.2).unwrap();
        assert!((a3 - 3.0 * a1).abs() < 1e-12 * a3);
    }

    #[test]
    fn degenerate_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let ch = TapChannel::rayleigh(2, 3, 1, &mut rng).unwrap();
        let u = random(2, 4, &mut rng);
        let zero = CMatrix::zeros(3, 4);
        assert!(matches!(
            optimal_alpha(&zero, &ch, &u, 0.0),
            Err(PrecodeError::DegenerateAlpha)
        ));
        assert_eq!(optimal_alpha(&zero, &ch, &u, 0.1).unwrap(), 0.0);
        assert!(cost_g(&CMatrix::zeros(2, 4), 1.0, &ch, &u, 0.0).is_err());
    }
}
