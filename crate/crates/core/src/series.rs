//! Finite complex power series, their norms, and sampling on circles.
//!
//! Two types carry coefficient data:
//!
//! * [`Series`] is a general polynomial `Σ_{k≥0} c_k ξ^k`. Derivatives and
//!   products land here because they may carry a constant term.
//! * [`CoefficientSeries`] is a normalized map `f(ξ) = Σ_{i≥1} a_i ξ^i`
//!   with `f(0) = 0`. This is the state object evolved by the flow.
//!
//! Both are immutable once built.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral;

/// Default number of samples on a circle.
pub const DEFAULT_GRID: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("a map needs at least the linear coefficient")]
    Empty,
    #[error("coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("grid size {n_grid} must be a power of two")]
    GridNotPow2 { n_grid: usize },
    #[error("grid size {n_grid} aliases degree {degree} (need at least {required})")]
    Aliasing {
        n_grid: usize,
        degree: usize,
        required: usize,
    },
    #[error("sampling radius {0} must be positive")]
    BadRadius(f64),
}

fn sum_descending(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.total_cmp(a));
    terms.into_iter().sum()
}

fn trim_len(coeffs: &[Complex64], min_len: usize) -> usize {
    let mut len = coeffs.len();
    while len > min_len && coeffs[len - 1] == Complex64::new(0.0, 0.0) {
        len -= 1;
    }
    len
}

/// Polynomial `Σ_{k=0}^{n} c_k ξ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    coeffs: Vec<Complex64>,
}

impl Series {
    /// Builds a series from ascending coefficients; trailing zeros are dropped.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        let len = trim_len(&coeffs, 0);
        coeffs.truncate(len);
        Series { coeffs }
    }

    pub fn zero() -> Self {
        Series { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Series::new(vec![c])
    }

    /// Ascending coefficients `c_0..c_n`; empty for the zero series.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    /// Largest index with a nonzero coefficient, `None` for the zero series.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coeffs, z)
    }

    /// `j`-fold derivative; `j = 0` returns a copy.
    pub fn derivative(&self, j: usize) -> Series {
        if j == 0 {
            return self.clone();
        }
        let out = self
            .coeffs
            .iter()
            .enumerate()
            .skip(j)
            .map(|(k, &c)| c * falling_factorial(k, j))
            .collect();
        Series::new(out)
    }

    /// `|g|_{M(r)} = Σ |c_k| r^k`, constant term included.
    pub fn norm_m(&self, r: f64) -> f64 {
        sum_descending(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c.norm() * r.powi(k as i32))
                .collect(),
        )
    }

    /// Cauchy product.
    pub fn mul(&self, other: &Series) -> Series {
        if self.is_zero() || other.is_zero() {
            return Series::zero();
        }
        let mut out = vec![Complex64::default(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Series::new(out)
    }

    pub fn add(&self, other: &Series) -> Series {
        Series::new(zip_longest(&self.coeffs, &other.coeffs, |a, b| a + b))
    }

    pub fn sub(&self, other: &Series) -> Series {
        Series::new(zip_longest(&self.coeffs, &other.coeffs, |a, b| a - b))
    }

    pub fn scale(&self, s: Complex64) -> Series {
        Series::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Keeps coefficients `c_0..c_deg`.
    pub fn truncate(&self, deg: usize) -> Series {
        Series::new(self.coeffs.iter().take(deg + 1).copied().collect())
    }

    /// Samples at `r·e^{2πij/N}`.
    pub fn sample(&self, r: f64, n_grid: usize) -> Result<BoundaryGrid, SeriesError> {
        check_grid(self.degree().unwrap_or(0), r, n_grid)?;
        Ok(BoundaryGrid {
            radius: r,
            samples: sample_coeffs(&self.coeffs, 0, r, n_grid),
        })
    }
}

/// Normalized map `f(ξ) = Σ_{i=1}^{N} a_i ξ^i`.
///
/// `a₀ = 0` is structural. The stored length equals the degree: the largest
/// index with a nonzero coefficient, or 1 when every coefficient vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct CoefficientSeries {
    coeffs: Vec<Complex64>,
}

impl CoefficientSeries {
    /// `coeffs[i]` is `a_{i+1}`.
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self, SeriesError> {
        if coeffs.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some(index) = coeffs.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SeriesError::NonFinite { index: index + 1 });
        }
        let len = trim_len(&coeffs, 1);
        coeffs.truncate(len);
        Ok(CoefficientSeries { coeffs })
    }

    /// Real coefficients `a₁, a₂, ...`.
    pub fn from_real(coeffs: &[f64]) -> Result<Self, SeriesError> {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// The disk map `cξ`.
    pub fn disk(c: f64) -> Self {
        CoefficientSeries {
            coeffs: vec![Complex64::new(c, 0.0)],
        }
    }

    /// Drops the constant term of a general series.
    pub fn from_series(s: &Series) -> Result<Self, SeriesError> {
        let tail: Vec<Complex64> = s.coeffs().iter().skip(1).copied().collect();
        if tail.is_empty() {
            return Ok(CoefficientSeries {
                coeffs: vec![Complex64::default()],
            });
        }
        Self::new(tail)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// `a_1..a_N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `a_i`, zero outside `1..=N`.
    pub fn coeff(&self, i: usize) -> Complex64 {
        if i == 0 {
            return Complex64::default();
        }
        self.coeffs.get(i - 1).copied().unwrap_or_default()
    }

    pub fn to_series(&self) -> Series {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(Complex64::default());
        c.extend_from_slice(&self.coeffs);
        Series::new(c)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coeffs, z) * z
    }

    /// `f'(z)` without building the derivative series.
    pub fn eval_derivative(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::default();
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * z + c * (i + 1) as f64;
        }
        acc
    }

    pub fn derivative(&self, j: usize) -> Series {
        self.to_series().derivative(j)
    }

    pub fn norm_m(&self, r: f64) -> f64 {
        self.to_series().norm_m(r)
    }

    /// `‖v‖_{ρ,n} = Σ_j |v_j| ρ^j j^{1/2+n}`.
    pub fn norm_rho_n(&self, rho: f64, n: u32) -> f64 {
        sum_descending(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let j = (i + 1) as f64;
                    c.norm() * rho.powf(j) * j.powf(0.5 + n as f64)
                })
                .collect(),
        )
    }

    pub fn sample(&self, r: f64, n_grid: usize) -> Result<BoundaryGrid, SeriesError> {
        check_grid(self.degree(), r, n_grid)?;
        Ok(BoundaryGrid {
            radius: r,
            samples: sample_coeffs(&self.coeffs, 1, r, n_grid),
        })
    }

    /// Coefficients `a_1..a_n`, zero-padded or truncated to length `n`.
    pub fn padded(&self, n: usize) -> Vec<Complex64> {
        let mut v = self.coeffs.clone();
        v.resize(n, Complex64::default());
        v
    }

    pub fn truncate(&self, deg: usize) -> Self {
        let deg = deg.max(1);
        Self::new(self.coeffs.iter().take(deg).copied().collect()).expect("nonempty")
    }

    pub fn add(&self, other: &CoefficientSeries) -> Self {
        Self::new(zip_longest(&self.coeffs, &other.coeffs, |a, b| a + b)).expect("nonempty")
    }

    pub fn sub(&self, other: &CoefficientSeries) -> Self {
        Self::new(zip_longest(&self.coeffs, &other.coeffs, |a, b| a - b)).expect("nonempty")
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect()).expect("nonempty")
    }

    /// `f(e^{iφ}ξ)`: same image domain, rotated parametrization.
    pub fn reparametrize(&self, phi: f64) -> Self {
        let out = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * Complex64::from_polar(1.0, phi * (i + 1) as f64))
            .collect();
        Self::new(out).expect("nonempty")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numbers serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl TryFrom<Vec<[f64; 2]>> for CoefficientSeries {
    type Error = SeriesError;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl From<CoefficientSeries> for Vec<[f64; 2]> {
    fn from(s: CoefficientSeries) -> Self {
        s.coeffs.iter().map(|c| [c.re, c.im]).collect()
    }
}

/// Values of a function at `ξ_j = r·e^{2πij/N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGrid {
    radius: f64,
    samples: Vec<Complex64>,
}

impl BoundaryGrid {
    pub fn new(radius: f64, samples: Vec<Complex64>) -> Result<Self, SeriesError> {
        if !(radius > 0.0) {
            return Err(SeriesError::BadRadius(radius));
        }
        if !samples.len().is_power_of_two() {
            return Err(SeriesError::GridNotPow2 {
                n_grid: samples.len(),
            });
        }
        Ok(BoundaryGrid { radius, samples })
    }

    /// Tabulates a function of the angle `θ_j = 2πj/N`.
    pub fn from_fn(
        radius: f64,
        n_grid: usize,
        f: impl Fn(f64) -> Complex64,
    ) -> Result<Self, SeriesError> {
        let samples = (0..n_grid).map(|j| f(TAU * j as f64 / n_grid as f64)).collect();
        Self::new(radius, samples)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Grid node `r·e^{2πij/N}`.
    pub fn node(&self, j: usize) -> Complex64 {
        Complex64::from_polar(self.radius, TAU * j as f64 / self.samples.len() as f64)
    }

    /// Inverts [`Series::sample`]: coefficients `c_0..c_deg`.
    pub fn recover(&self, deg: usize) -> Series {
        let hat = spectral::fourier_coefficients(&self.samples);
        let out = hat
            .into_iter()
            .take(deg + 1)
            .enumerate()
            .map(|(k, c)| c / self.radius.powi(k as i32))
            .collect();
        Series::new(out)
    }
}

fn check_grid(degree: usize, r: f64, n_grid: usize) -> Result<(), SeriesError> {
    if !(r > 0.0) {
        return Err(SeriesError::BadRadius(r));
    }
    if !n_grid.is_power_of_two() {
        return Err(SeriesError::GridNotPow2 { n_grid });
    }
    let required = 4 * degree.max(1);
    if n_grid < required {
        return Err(SeriesError::Aliasing {
            n_grid,
            degree,
            required,
        });
    }
    Ok(())
}

/// Grid values of `Σ_i c_i ξ^{i+offset}` on radius `r` via one inverse FFT.
pub(crate) fn sample_coeffs(
    coeffs: &[Complex64],
    offset: usize,
    r: f64,
    n_grid: usize,
) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); n_grid];
    for (i, c) in coeffs.iter().enumerate() {
        let k = i + offset;
        buf[k % n_grid] += c * r.powi(k as i32);
    }
    spectral::inverse(&mut buf);
    buf
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::default(), |acc, c| acc * z + c)
}

fn falling_factorial(k: usize, j: usize) -> f64 {
    (0..j).map(|m| (k - m) as f64).product()
}

fn zip_longest(
    a: &[Complex64],
    b: &[Complex64],
    op: impl Fn(Complex64, Complex64) -> Complex64,
) -> Vec<Complex64> {
    (0..a.len().max(b.len()))
        .map(|i| op(a.get(i).copied().unwrap_or_default(), b.get(i).copied().unwrap_or_default()))
        .collect()
}
