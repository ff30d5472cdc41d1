//! Richardson moments `M_k = (1/π)∫_Ω z^k dA` of `Ω = f(D)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::geometry;
use crate::series::{CoefficientSeries, Series};

/// Relative size below which a moment counts as zero when locating `n0`.
pub const ZERO_MOMENT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("quadrature needs at least one radial and one angular node, got {radial}x{angular}")]
    BadResolution { radial: usize, angular: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// `M_0..M_K`, with `n0` the first nonvanishing `M_k`, `k ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentVector {
    pub values: Vec<Complex64>,
    pub n0: Option<usize>,
    /// `f` is not univalent on the closed disk, so these are moments of
    /// the pushforward measure rather than of a domain.
    pub pushforward: bool,
}

impl MomentVector {
    fn new(values: Vec<Complex64>, pushforward: bool) -> Self {
        let n0 = first_nonzero(&values);
        MomentVector {
            values,
            n0,
            pushforward,
        }
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn m0(&self) -> f64 {
        self.values[0].re
    }

    pub fn get(&self, k: usize) -> Complex64 {
        self.values[k]
    }
}

/// `|M_k| ≤ 1e-9·max(1, M₀^{(k+2)/2})` counts as zero; the scale matches
/// how `M_k` grows under dilation.
pub fn is_negligible(mk: Complex64, k: usize, m0: f64) -> bool {
    mk.norm() <= ZERO_MOMENT_THRESHOLD * m0.max(0.0).powf((k + 2) as f64 / 2.0).max(1.0)
}

fn first_nonzero(values: &[Complex64]) -> Option<usize> {
    let m0 = values[0].re;
    (1..values.len()).find(|&k| !is_negligible(values[k], k, m0))
}

/// `M₀ = Σ n|a_n|²`.
pub fn area_moment(f: &CoefficientSeries) -> f64 {
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1) as f64 * c.norm_sqr())
        .sum()
}

fn exact_values(f: &CoefficientSeries, k_max: usize) -> Vec<Complex64> {
    let fs = f.to_series();
    let df = f.derivative(1);
    let mut values = Vec::with_capacity(k_max + 1);
    values.push(Complex64::new(area_moment(f), 0.0));
    // p = f^k f', and M_k is the ξ^{-1} coefficient of p(ξ)·Σ ā_n ξ^{-n}.
    let mut p: Series = df;
    for _ in 1..=k_max {
        p = p.mul(&fs);
        let mk = f
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, a)| a.conj() * p.coeff(i))
            .sum();
        values.push(mk);
    }
    values
}

/// Moments from the residue of `f(ξ)^k f̄(1/ξ) f'(ξ)` at the origin, by
/// exact convolution of coefficient sequences.
pub fn moments_exact(f: &CoefficientSeries, k_max: usize) -> MomentVector {
    let pushforward = !geometry::is_univalent(f, 1.0).univalent;
    MomentVector::new(exact_values(f, k_max), pushforward)
}

/// Node counts for [`moments_quadrature`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub radial: usize,
    pub angular: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            radial: 200,
            angular: 512,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (Golub–Welsch).
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (0.5 * (x + 1.0), 0.5 * w)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// `M_k = (1/π)∬_D f^k |f'|² dA` by Gauss–Legendre in the radius and the
/// trapezoid rule in the angle.
///
/// The angular nodes are shifted by a random fraction of the spacing drawn
/// from `seed`; the rule is exact for the polynomial integrands here
/// whatever the shift, so the jitter only guards against accidental
/// alignment.
pub fn moments_quadrature(
    f: &CoefficientSeries,
    k_max: usize,
    res: Resolution,
    seed: u64,
) -> Result<MomentVector, MomentError> {
    if res.radial == 0 || res.angular == 0 {
        return Err(MomentError::BadResolution {
            radial: res.radial,
            angular: res.angular,
        });
    }
    let shift: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
    let gl = gauss_legendre_unit(res.radial);
    let dth = TAU / res.angular as f64;
    let mut acc = vec![Complex64::default(); k_max + 1];
    for &(r, w) in &gl {
        let mut ring = vec![Complex64::default(); k_max + 1];
        for j in 0..res.angular {
            let z = Complex64::from_polar(r, dth * (j as f64 + shift));
            let fz = f.eval(z);
            let jac = f.eval_derivative(z).norm_sqr();
            let mut pw = Complex64::new(jac, 0.0);
            for slot in ring.iter_mut() {
                *slot += pw;
                pw *= fz;
            }
        }
        for (a, s) in acc.iter_mut().zip(&ring) {
            *a += s * (w * r * dth);
        }
    }
    let mut values: Vec<Complex64> = acc.into_iter().map(|v| v / PI).collect();
    values[0].im = 0.0;
    let pushforward = !geometry::is_univalent(f, 1.0).univalent;
    Ok(MomentVector::new(values, pushforward))
}

/// Moments of one stored state and their drift from `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub values: Vec<Complex64>,
    /// `|M₀(t) − M₀(0) − 2σt|`.
    pub area_delta: f64,
    /// `|M_k(t) − M_k(0)|` for `k = 1..K`.
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub order: usize,
    pub rows: Vec<MomentRow>,
    pub max_area_delta: f64,
    /// Entry `k − 1` is `max_t |M_k(t) − M_k(0)|`.
    pub max_deltas: Vec<f64>,
    pub n0: Option<usize>,
}

impl ConservationReport {
    /// Largest conserved-moment drift relative to `max(1, |M_k(0)|)`.
    pub fn max_relative_delta(&self) -> f64 {
        let m = &self.rows[0].values;
        self.max_deltas
            .iter()
            .enumerate()
            .map(|(i, d)| d / m[i + 1].norm().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Drift of `M_1..M_K` and of the area law along a trajectory.
pub fn conservation_report(traj: &Trajectory, k_max: usize) -> Result<ConservationReport, MomentError> {
    if traj.is_empty() {
        return Err(MomentError::EmptyTrajectory);
    }
    let sigma = traj.sign.value();
    let all: Vec<Vec<Complex64>> = traj
        .states
        .par_iter()
        .map(|s| exact_values(s, k_max))
        .collect();
    let m_init = &all[0];
    let rows: Vec<MomentRow> = traj
        .times
        .iter()
        .zip(&all)
        .map(|(&t, v)| MomentRow {
            t,
            values: v.clone(),
            area_delta: (v[0].re - m_init[0].re - 2.0 * sigma * t).abs(),
            deltas: (1..=k_max).map(|k| (v[k] - m_init[k]).norm()).collect(),
        })
        .collect();
    let max_area_delta = rows.iter().map(|r| r.area_delta).fold(0.0, f64::max);
    let max_deltas = (0..k_max)
        .map(|i| rows.iter().map(|r| r.deltas[i]).fold(0.0, f64::max))
        .collect();
    Ok(ConservationReport {
        order: k_max,
        n0: first_nonzero(m_init),
        rows,
        max_area_delta,
        max_deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolveOptions, FlowSign};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn disk_moments() {
        let m = moments_exact(&CoefficientSeries::disk(1.7), 5);
        assert!((m.m0() - 1.7 * 1.7).abs() < 1e-15);
        assert!(m.values[1..].iter().all(|v| v.norm() == 0.0));
        assert_eq!(m.n0, None);
        assert!(!m.pushforward);
    }

    #[test]
    fn quadratic_and_cubic_by_hand() {
        let q = moments_exact(&CoefficientSeries::from_real(&[1.0, 0.4]).unwrap(), 3);
        assert!((q.m0() - 1.32).abs() < 1e-15);
        assert!((q.get(1) - c(0.4)).norm() < 1e-15);
        assert_eq!(q.n0, Some(1));

        let cub = moments_exact(&CoefficientSeries::from_real(&[1.0, 0.0, 0.1]).unwrap(), 3);
        assert_eq!(cub.get(1), c(0.0));
        assert!((cub.get(2) - c(0.1)).norm() < 1e-15);
        assert_eq!(cub.n0, Some(2));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let gl = gauss_legendre_unit(12);
        let w: f64 = gl.iter().map(|p| p.1).sum();
        assert!((w - 1.0).abs() < 1e-14);
        for d in [1, 7, 23] {
            let v: f64 = gl.iter().map(|&(x, w)| w * x.powi(d)).sum();
            assert!((v - 1.0 / (d + 1) as f64).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn quadrature_examples() {
        let res = Resolution::default();
        let disk = moments_quadrature(&CoefficientSeries::disk(1.0), 2, res, 7).unwrap();
        assert!((disk.m0() - 1.0).abs() < 1e-12);
        let q = moments_quadrature(&CoefficientSeries::from_real(&[1.0, 0.4]).unwrap(), 2, res, 7).unwrap();
        assert!((q.get(1) - c(0.4)).norm() < 1e-8);
        let cub =
            moments_quadrature(&CoefficientSeries::from_real(&[1.0, 0.0, 0.1]).unwrap(), 3, res, 7).unwrap();
        assert!((cub.get(2) - c(0.1)).norm() < 1e-8);
        assert_eq!(cub.n0, Some(2));
    }

    #[test]
    fn pushforward_flag() {
        let f = CoefficientSeries::from_real(&[1.0, 1.0]).unwrap();
        assert!(moments_exact(&f, 2).pushforward);
    }

    #[test]
    fn disk_conservation_is_exact() {
        let traj = evolve(&CoefficientSeries::disk(1.0), FlowSign::Injection, 3.0, &EvolveOptions::default()).unwrap();
        let rep = conservation_report(&traj, 5).unwrap();
        assert!(rep.max_area_delta <= 1e-10);
        assert!(rep.max_deltas.iter().all(|&d| d <= 1e-10));
    }

    #[test]
    fn corrupted_state_is_detected() {
        let mut traj =
            evolve(&CoefficientSeries::from_real(&[1.0, 0.4]).unwrap(), FlowSign::Injection, 1.0, &EvolveOptions::default())
                .unwrap();
        let i = traj.len() / 2;
        let s = &traj.states[i];
        let a1 = s.coeff(1).re;
        let mut bumped = s.coeffs().to_vec();
        bumped[1] += 1e-3;
        traj.states[i] = CoefficientSeries::new(bumped).unwrap();
        let rep = conservation_report(&traj, 2).unwrap();
        let d = rep.rows[i].deltas[0];
        assert!((d - a1 * a1 * 1e-3).abs() < 1e-6 * a1 * a1, "{d} vs {}", a1 * a1 * 1e-3);
    }
}
