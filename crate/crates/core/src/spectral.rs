//! FFT plumbing shared by the grid transforms.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized `X_k = Σ_j x_j e^{-2πijk/N}` in place.
pub(crate) fn forward(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// Unnormalized `x_j = Σ_k X_k e^{+2πijk/N}` in place.
pub(crate) fn inverse(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// Fourier coefficients `ĝ_k = (1/N) Σ_j g_j e^{-2πijk/N}`.
pub(crate) fn fourier_coefficients(samples: &[Complex64]) -> Vec<Complex64> {
    let mut buf = samples.to_vec();
    forward(&mut buf);
    let scale = 1.0 / samples.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Smallest power of two that is at least `n`.
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Spectral θ-derivative of uniformly sampled periodic real data.
///
/// Modes whose normalized amplitude is at most `floor` are dropped first;
/// differentiation otherwise amplifies round-off by up to `(N/2)^order`.
/// The Nyquist mode is dropped for odd orders so the result stays real.
pub(crate) fn periodic_derivative(values: &[f64], order: u32, floor: f64) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let wave = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if (n.is_multiple_of(2) && k == n / 2 && !order.is_multiple_of(2)) || c.norm() <= floor * n as f64 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        *c *= Complex64::new(0.0, wave).powu(order);
    }
    inverse(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_cosine() {
        let n = 64;
        let vals: Vec<f64> = (0..n)
            .map(|j| (3.0 * std::f64::consts::TAU * j as f64 / n as f64).cos())
            .collect();
        let d1 = periodic_derivative(&vals, 1, 0.0);
        let d2 = periodic_derivative(&vals, 2, 0.0);
        for j in 0..n {
            let th = std::f64::consts::TAU * j as f64 / n as f64;
            assert!((d1[j] + 3.0 * (3.0 * th).sin()).abs() < 1e-12);
            assert!((d2[j] + 9.0 * (3.0 * th).cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn pow2() {
        assert_eq!(next_pow2(1), 1);
        assert_eq!(next_pow2(5), 8);
        assert_eq!(next_pow2(256), 256);
    }
}
