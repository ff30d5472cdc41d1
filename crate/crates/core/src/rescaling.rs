//! Area-normalized boundary `r̄(t,θ) = |f|/√(2t+M₀(0)) − 1` in the image
//! polar angle, its curvature and power-law decay fits.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::series::CoefficientSeries;
use crate::spectral::{next_pow2, periodic_derivative};

/// Curvature denominators below this are degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Fourier amplitudes of `r̄` at or below this are round-off.
pub const SPECTRAL_NOISE_FLOOR: f64 = 1e-14;

const NEWTON_STEPS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RescalingError {
    #[error("map is not starlike: arg f(e^is) stops increasing near s = {angle}")]
    NotStarlike { angle: f64 },
    #[error("normalizing area 2t + M0(0) = {0} must be positive")]
    BadScale(f64),
    #[error("grid size {0} must be a power of two >= 8")]
    BadGrid(usize),
    #[error("curvature denominator {value:e} at theta = {theta} is degenerate")]
    Degenerate { theta: f64, value: f64 },
    #[error("decay fit needs at least 4 snapshots in the window, found {0}")]
    InsufficientData(usize),
    #[error("invalid window [{0}, {1}]")]
    BadWindow(f64, f64),
}

/// `r̄` on the uniform grid `θ_j = 2πj/N` with spectral derivatives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescaledBoundary {
    pub t: f64,
    pub theta: Vec<f64>,
    pub rbar: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// `max(‖r̄‖_∞, ‖r̄'‖_∞, ‖r̄''‖_∞)`.
    pub sup_c2: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl RescaledBoundary {
    /// Builds the derivatives of a sampled profile; amplitudes below
    /// [`SPECTRAL_NOISE_FLOOR`] are treated as zero.
    pub fn from_profile(t: f64, rbar: Vec<f64>) -> Result<Self, RescalingError> {
        let n = rbar.len();
        if n < 8 || !n.is_power_of_two() {
            return Err(RescalingError::BadGrid(n));
        }
        let d1 = periodic_derivative(&rbar, 1, SPECTRAL_NOISE_FLOOR);
        let d2 = periodic_derivative(&rbar, 2, SPECTRAL_NOISE_FLOOR);
        let sup_c2 = sup(&rbar).max(sup(&d1)).max(sup(&d2));
        Ok(RescaledBoundary {
            t,
            theta: (0..n).map(|j| TAU * j as f64 / n as f64).collect(),
            rbar,
            d1,
            d2,
            sup_c2,
        })
    }

    pub fn len(&self) -> usize {
        self.rbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rbar.is_empty()
    }

    pub fn sup_rbar(&self) -> f64 {
        sup(&self.rbar)
    }

    pub fn sup_d1(&self) -> f64 {
        sup(&self.d1)
    }

    pub fn sup_d2(&self) -> f64 {
        sup(&self.d2)
    }

    /// `(1/2)∮(1 + r̄)² dθ`, spectrally accurate for smooth profiles.
    pub fn area(&self) -> f64 {
        let n = self.len() as f64;
        0.5 * self.rbar.iter().map(|r| (1.0 + r).powi(2)).sum::<f64>() * TAU / n
    }
}

/// Default number of image angles for a map of this degree.
pub fn default_grid(f: &CoefficientSeries) -> usize {
    next_pow2((16 * f.degree()).max(256))
}

/// `arg f(e^{is})` and its derivative `Re(ξf'/f)`.
fn arg_and_rate(f: &CoefficientSeries, s: f64) -> (Complex64, f64) {
    let z = Complex64::from_polar(1.0, s);
    let w = f.eval(z);
    let rate = (z * f.eval_derivative(z) / w).re;
    (w, rate)
}

/// Samples `r̄` at image angles `θ_j = 2πj/N`.
///
/// The parameter `s_j` with `arg f(e^{is_j}) = θ_j` is found by bracketing
/// in a monotone table of `arg f` and Newton steps with the exact
/// derivative `Re(ξf'/f)`. A nonpositive derivative anywhere on the table
/// means the image is not starlike and the map is rejected.
pub fn rescaled_boundary(
    f: &CoefficientSeries,
    t: f64,
    m0_0: f64,
    n_grid: usize,
) -> Result<RescaledBoundary, RescalingError> {
    if n_grid < 8 || !n_grid.is_power_of_two() {
        return Err(RescalingError::BadGrid(n_grid));
    }
    let scale2 = 2.0 * t + m0_0;
    if !(scale2 > 0.0) {
        return Err(RescalingError::BadScale(scale2));
    }
    let scale = scale2.sqrt();

    let m = 4 * n_grid;
    let mut table = Vec::with_capacity(m + 1);
    let mut prev: Option<f64> = None;
    for k in 0..=m {
        let s = TAU * k as f64 / m as f64;
        let (w, rate) = arg_and_rate(f, s);
        if !(rate > 0.0) {
            return Err(RescalingError::NotStarlike { angle: s });
        }
        let a = match prev {
            None => w.arg(),
            Some(p) => {
                let mut a = w.arg();
                while a < p - PI {
                    a += TAU;
                }
                while a > p + PI {
                    a -= TAU;
                }
                a
            }
        };
        if prev.is_some_and(|p| a <= p) {
            return Err(RescalingError::NotStarlike { angle: s });
        }
        table.push((s, a));
        prev = Some(a);
    }
    let base = table[0].1;
    if ((table[m].1 - base) - TAU).abs() > 1e-6 {
        return Err(RescalingError::NotStarlike { angle: 0.0 });
    }

    let rbar = (0..n_grid)
        .map(|j| {
            let theta = TAU * j as f64 / n_grid as f64;
            let target = base + (theta - base).rem_euclid(TAU);
            let idx = table.partition_point(|&(_, a)| a <= target).clamp(1, m);
            let (s0, a0) = table[idx - 1];
            let (s1, a1) = table[idx];
            let mut s = s0 + (s1 - s0) * (target - a0) / (a1 - a0);
            let phase = Complex64::from_polar(1.0, -theta);
            for _ in 0..NEWTON_STEPS {
                let (w, rate) = arg_and_rate(f, s);
                let step = (w * phase).arg() / rate;
                s -= step;
                if step.abs() <= 1e-15 {
                    break;
                }
            }
            f.eval(Complex64::from_polar(1.0, s)).norm() / scale - 1.0
        })
        .collect();
    RescaledBoundary::from_profile(t, rbar)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curvature {
    pub kappa: Vec<f64>,
    pub max_deviation: f64,
}

/// `κ = [(1+r̄)² + 2r̄'² − r̄''(1+r̄)] / [(1+r̄)² + r̄'²]^{3/2}`.
pub fn curvature(rb: &RescaledBoundary) -> Result<Curvature, RescalingError> {
    let mut kappa = Vec::with_capacity(rb.len());
    for j in 0..rb.len() {
        let r = 1.0 + rb.rbar[j];
        let (p, q) = (rb.d1[j], rb.d2[j]);
        let den = r * r + p * p;
        if den < DEGENERATE_DENOMINATOR {
            return Err(RescalingError::Degenerate {
                theta: rb.theta[j],
                value: den,
            });
        }
        kappa.push((r * r + 2.0 * p * p - q * r) / den.powf(1.5));
    }
    let max_deviation = kappa.iter().fold(0.0, |m: f64, k| m.max((k - 1.0).abs()));
    Ok(Curvature {
        kappa,
        max_deviation,
    })
}

/// `max ||z| − 1|` over the rescaled boundary.
pub fn radius_deviation(rb: &RescaledBoundary) -> f64 {
    rb.sup_rbar()
}

/// `n` log-spaced times per decade covering `[lo, hi]`, both included.
pub fn log_schedule(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo * 10f64.powf(decades * i as f64 / n as f64)
            }
        })
        .collect()
}

/// One row of the decay table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub sup_rbar: f64,
    pub sup_d1: f64,
    pub sup_d2: f64,
    pub sup_c2: f64,
    pub max_kappa_dev: f64,
    /// Rescaled area minus `π`.
    pub area_check: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// `−slope` of `log sup_c2` against `log t`; `None` when every snapshot
    /// is a circle.
    pub lambda: Option<f64>,
    pub exact_zero: bool,
    pub rows: Vec<DecayRow>,
}

fn decay_row(f: &CoefficientSeries, t: f64, m0_0: f64) -> Result<DecayRow, RescalingError> {
    let rb = rescaled_boundary(f, t, m0_0, default_grid(f))?;
    let k = curvature(&rb)?;
    Ok(DecayRow {
        t,
        sup_rbar: rb.sup_rbar(),
        sup_d1: rb.sup_d1(),
        sup_d2: rb.sup_d2(),
        sup_c2: rb.sup_c2,
        max_kappa_dev: k.max_deviation,
        area_check: rb.area() - PI,
    })
}

/// Least-squares power law of `sup_c2` over the snapshots in `[lo, hi]`.
pub fn decay_fit(
    traj: &Trajectory,
    m0_0: f64,
    window: [f64; 2],
) -> Result<DecayFit, RescalingError> {
    let [lo, hi] = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(RescalingError::BadWindow(lo, hi));
    }
    let picked: Vec<(f64, &CoefficientSeries)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, s)| (*t, s))
        .collect();
    if picked.len() < 4 {
        return Err(RescalingError::InsufficientData(picked.len()));
    }
    let rows = picked
        .par_iter()
        .map(|(t, f)| decay_row(f, *t, m0_0))
        .collect::<Result<Vec<_>, _>>()?;
    // A circle of slightly wrong radius (integrator error in the scale) has
    // no shape to decay.
    if rows.iter().all(|r| r.sup_d1 == 0.0 && r.sup_d2 == 0.0) {
        return Ok(DecayFit {
            lambda: None,
            exact_zero: true,
            rows,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_c2 > 0.0)
        .map(|r| (r.t.ln(), r.sup_c2.ln()))
        .collect();
    Ok(DecayFit {
        lambda: Some(-least_squares_slope(&pts)),
        exact_zero: false,
        rows,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// First stored time whose state passes the starlike test.
pub fn first_starlike(traj: &Trajectory) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.states)
        .find(|(_, s)| crate::geometry::starlike_order(s).is_starlike())
        .map(|(t, _)| *t)
}
