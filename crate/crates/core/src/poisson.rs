//! The Poisson operator `P[g]`: analytic completion in the unit disk of the
//! harmonic extension of real boundary data `g`, normalized so that
//! `Re P[g] = g` on the circle.
//!
//! Two routes are provided. [`poisson_fourier`] works from samples of `g` on
//! the unit circle. [`poisson_contour`] handles `g = 1/|f'|²` by pushing the
//! contour out to `|z| = r > 1`, where the integrand
//! `1/(f'(z)·f̄'(1/z))` is evaluated instead. They are meant to check each
//! other.

use num_complex::Complex64;
use thiserror::Error;

use crate::roots;
use crate::series::{BoundaryGrid, CoefficientSeries, Series, DEFAULT_GRID};
use crate::spectral;

/// Largest grid the adaptive sizing will pick.
pub const MAX_GRID: usize = 1 << 16;

/// Relative imaginary residue tolerated in boundary data.
pub const REAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("boundary data has imaginary residue {residue:e}; expected real values")]
    NonReal { residue: f64 },
    #[error("boundary data must live on the unit circle, got radius {0}")]
    NotUnitCircle(f64),
    #[error("contour radius {0} must exceed 1")]
    BadRadius(f64),
    #[error("f' vanishes at {root} with |root| <= {radius}")]
    SingularIntegrand { root: Complex64, radius: f64 },
    #[error("grid size {0} must be a power of two >= 4")]
    BadGrid(usize),
}

/// `P[g](ξ) = c₀ + Σ_{k=1}^{K} c_k ξ^k` with real `c₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticCompletion {
    pub constant: f64,
    pub coeffs: Vec<Complex64>,
}

impl AnalyticCompletion {
    pub fn to_series(&self) -> Series {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(Complex64::new(self.constant, 0.0));
        c.extend_from_slice(&self.coeffs);
        Series::new(c)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::default(), |acc, c| (acc + c) * z)
            + self.constant
    }

    /// `c_k` for `k ≥ 0`; zero past the truncation.
    pub fn coeff(&self, k: usize) -> Complex64 {
        if k == 0 {
            Complex64::new(self.constant, 0.0)
        } else {
            self.coeffs.get(k - 1).copied().unwrap_or_default()
        }
    }

    /// Largest coefficientwise difference.
    pub fn max_diff(&self, other: &AnalyticCompletion) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..=n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> AnalyticCompletion {
        AnalyticCompletion {
            constant: self.constant * s,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

/// `P[g]` from samples of real `g` on the unit circle, truncated at
/// `N/2 − 1` modes.
pub fn poisson_fourier(g: &BoundaryGrid) -> Result<AnalyticCompletion, PoissonError> {
    if (g.radius() - 1.0).abs() > 1e-14 {
        return Err(PoissonError::NotUnitCircle(g.radius()));
    }
    let scale = g.samples().iter().map(|v| v.norm()).fold(1.0, f64::max);
    let residue = g.samples().iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > REAL_TOLERANCE * scale {
        return Err(PoissonError::NonReal { residue });
    }
    let real: Vec<Complex64> = g.samples().iter().map(|v| Complex64::new(v.re, 0.0)).collect();
    Ok(completion_from_fourier(&real))
}

pub(crate) fn completion_from_fourier(real_samples: &[Complex64]) -> AnalyticCompletion {
    let n = real_samples.len();
    let hat = spectral::fourier_coefficients(real_samples);
    AnalyticCompletion {
        constant: hat[0].re,
        coeffs: hat[1..n / 2].iter().map(|c| c * 2.0).collect(),
    }
}

/// `P[1/|f'|²]` by the trapezoid rule for
/// `(1/2πi)∮_{|z|=r} [f'(z)·f̄'(1/z)]⁻¹ (z+ξ)/(z−ξ) dz/z`, truncated at
/// `n_grid/2 − 1` modes. At least `n_grid` nodes are used, more when a zero
/// of `f'` sits close outside the contour.
///
/// Expanding `(z+ξ)/(z−ξ) = 1 + 2Σ (ξ/z)^k` turns each coefficient into a
/// discrete Fourier coefficient of the integrand on the circle `|z| = r`.
pub fn poisson_contour(
    f: &CoefficientSeries,
    r: f64,
    n_grid: usize,
) -> Result<AnalyticCompletion, PoissonError> {
    if !(r > 1.0) {
        return Err(PoissonError::BadRadius(r));
    }
    if !n_grid.is_power_of_two() || n_grid < 4 {
        return Err(PoissonError::BadGrid(n_grid));
    }
    let df = f.derivative(1);
    let zs = roots::zeros(&df);
    if let Some(root) = zs
        .iter()
        .filter(|z| z.norm() <= r)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        return Err(PoissonError::SingularIntegrand { root: *root, radius: r });
    }
    // The trapezoid rule aliases at rate (r/ρ)^M, with ρ the nearest zero of f'.
    let nodes = zs
        .iter()
        .map(|z| z.norm())
        .min_by(f64::total_cmp)
        .map_or(n_grid, |rho| grid_for_zero_modulus(n_grid, Some(rho / r)).max(n_grid));

    let dfz = crate::series::sample_coeffs(df.coeffs(), 0, r, nodes);
    // f̄'(1/z) = conj(f'(1/z̄)) and 1/z̄ = z/r² on |z| = r.
    let dfw = crate::series::sample_coeffs(df.coeffs(), 0, 1.0 / r, nodes);
    let integrand: Vec<Complex64> = dfz
        .iter()
        .zip(&dfw)
        .map(|(a, b)| 1.0 / (a * b.conj()))
        .collect();
    let hat = spectral::fourier_coefficients(&integrand);
    let coeffs = hat[1..n_grid / 2]
        .iter()
        .enumerate()
        .map(|(i, c)| c * 2.0 / r.powi(i as i32 + 1))
        .collect();
    Ok(AnalyticCompletion {
        constant: hat[0].re,
        coeffs,
    })
}

/// Midpoint between 1 and the nearest zero of `f'` outside the closed disk;
/// 2 when `f'` has no such zero.
pub fn default_contour_radius(f: &CoefficientSeries) -> f64 {
    let outer = roots::zeros(&f.derivative(1))
        .into_iter()
        .map(|z| z.norm())
        .filter(|&m| m > 1.0)
        .min_by(f64::total_cmp);
    match outer {
        Some(rho) => 0.5 * (1.0 + rho),
        None => 2.0,
    }
}

/// Grid size resolving `1/|f'|²` on the unit circle to round-off.
///
/// The Fourier coefficients of `1/|f'|²` decay like `ρ^{-k}`, with `ρ` the
/// smallest zero modulus of `f'`. The grid keeps `ρ^{-N/2}` below `1e-16`
/// and respects the 4× anti-aliasing margin; it never drops under
/// [`DEFAULT_GRID`] and is capped at [`MAX_GRID`].
pub fn recommended_grid(f: &CoefficientSeries) -> usize {
    let base = DEFAULT_GRID.max(spectral::next_pow2(4 * f.degree()));
    let rho = roots::min_zero_modulus(&f.derivative(1));
    grid_for_zero_modulus(base, rho)
}

pub(crate) fn grid_for_zero_modulus(base: usize, rho: Option<f64>) -> usize {
    match rho {
        None => base,
        Some(rho) if rho <= 1.0 => MAX_GRID,
        Some(rho) => {
            let half = (16.0 * std::f64::consts::LN_10 / rho.ln()).ceil();
            if !half.is_finite() || half * 2.0 >= MAX_GRID as f64 {
                MAX_GRID
            } else {
                base.max(spectral::next_pow2(2 * half as usize + 2))
            }
        }
    }
}

/// Samples `σ/|f'|²` on the unit circle.
pub fn inverse_speed_grid(
    f: &CoefficientSeries,
    sign: f64,
    n_grid: usize,
) -> Result<BoundaryGrid, crate::series::SeriesError> {
    let df = crate::series::sample_coeffs(f.derivative(1).coeffs(), 0, 1.0, n_grid);
    BoundaryGrid::new(
        1.0,
        df.iter().map(|d| Complex64::new(sign / d.norm_sqr(), 0.0)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn quad() -> CoefficientSeries {
        CoefficientSeries::from_real(&[1.0, 0.4]).unwrap()
    }

    /// Closed form of `P[1/|1+0.8e^{iθ}|²]`: `(25/9)(1−0.8ξ)/(1+0.8ξ)`.
    fn quad_closed_form(k: usize) -> f64 {
        if k == 0 {
            25.0 / 9.0
        } else {
            2.0 * 25.0 / 9.0 * (-0.8f64).powi(k as i32)
        }
    }

    #[test]
    fn constant_and_single_harmonic() {
        let one = BoundaryGrid::from_fn(1.0, 64, |_| Complex64::new(1.0, 0.0)).unwrap();
        let p = poisson_fourier(&one).unwrap();
        assert!((p.constant - 1.0).abs() < 1e-15);
        assert!(p.coeffs.iter().all(|c| c.norm() < 1e-15));

        let cos = BoundaryGrid::from_fn(1.0, 64, |t| Complex64::new(2.0 * t.cos(), 0.0)).unwrap();
        let p = poisson_fourier(&cos).unwrap();
        assert!(p.constant.abs() < 1e-15);
        assert!((p.coeffs[0] - 2.0).norm() < 1e-14);
        assert!(p.coeffs[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn quadratic_inverse_speed_matches_closed_form() {
        // Independent check of the mean: ∫dθ/(A+B cosθ) = 2π/√(A²−B²).
        let (a, b) = (1.64f64, 1.6f64);
        let n = 20_000;
        let quad_mean: f64 = (0..n)
            .map(|j| 1.0 / (a + b * (TAU * j as f64 / n as f64).cos()))
            .sum::<f64>()
            / n as f64;
        assert!((quad_mean - 1.0 / (a * a - b * b).sqrt()).abs() < 1e-12);
        assert!((quad_mean - 25.0 / 9.0).abs() < 1e-12);

        let g = inverse_speed_grid(&quad(), 1.0, 512).unwrap();
        let p = poisson_fourier(&g).unwrap();
        for k in 0..40 {
            assert!((p.coeff(k) - quad_closed_form(k)).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn rejects_complex_data() {
        let g = BoundaryGrid::from_fn(1.0, 16, |t| Complex64::new(1.0, 1e-6 * t.sin())).unwrap();
        assert!(matches!(poisson_fourier(&g), Err(PoissonError::NonReal { .. })));
        let off = BoundaryGrid::from_fn(2.0, 16, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(poisson_fourier(&off), Err(PoissonError::NotUnitCircle(_))));
    }

    #[test]
    fn contour_disk() {
        for r in [1.1, 1.5, 3.0] {
            let p = poisson_contour(&CoefficientSeries::disk(2.0), r, 64).unwrap();
            assert!((p.constant - 0.25).abs() < 1e-15);
            assert!(p.coeffs.iter().all(|c| c.norm() < 1e-15));
        }
    }

    #[test]
    fn contour_quadratic() {
        let p11 = poisson_contour(&quad(), 1.1, 512).unwrap();
        let p12 = poisson_contour(&quad(), 1.2, 512).unwrap();
        assert!((p11.constant - 25.0 / 9.0).abs() < 1e-10);
        assert!(p11.max_diff(&p12) < 1e-10);
        for k in 0..30 {
            assert!((p11.coeff(k) - quad_closed_form(k)).norm() < 1e-10);
        }
    }

    #[test]
    fn contour_rejects_singular_integrand() {
        assert!(matches!(
            poisson_contour(&quad(), 1.3, 64),
            Err(PoissonError::SingularIntegrand { .. })
        ));
        assert!(matches!(poisson_contour(&quad(), 1.0, 64), Err(PoissonError::BadRadius(_))));
    }

    #[test]
    fn default_radius_is_midpoint() {
        assert!((default_contour_radius(&quad()) - 1.125).abs() < 1e-14);
        assert_eq!(default_contour_radius(&CoefficientSeries::disk(1.0)), 2.0);
    }

    #[test]
    fn recommended_grid_grows_near_singularity() {
        assert_eq!(recommended_grid(&CoefficientSeries::disk(1.0)), DEFAULT_GRID);
        let near = CoefficientSeries::from_real(&[1.0, 0.49]).unwrap();
        assert!(recommended_grid(&near) > recommended_grid(&quad()));
        let g = inverse_speed_grid(&near, 1.0, recommended_grid(&near)).unwrap();
        let p = poisson_fourier(&g).unwrap();
        let via_contour = poisson_contour(&near, default_contour_radius(&near), g.len()).unwrap();
        assert!(p.max_diff(&via_contour) < 1e-10 * p.constant);
    }
}
