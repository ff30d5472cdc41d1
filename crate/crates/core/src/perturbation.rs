//! Perturbed polynomial flows: co-evolution against a base solution,
//! truncation cascades and suction survival sweeps.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{evolve, detect_blowup, DynamicsError, EvolveOptions, FlowSign, Snapshots, Termination, Trajectory};
use crate::moments::area_moment;
use crate::series::CoefficientSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("trajectories have different snapshot times")]
    MismatchedGrids,
    #[error("perturbed map needs a real positive linear coefficient, got {0}")]
    BadNormalization(Complex64),
    #[error("degrees must be increasing and at least two, got {0:?}")]
    BadDegrees(Vec<usize>),
    #[error("{which} run stopped at t = {t} before reaching {t_end}: {termination:?}")]
    Incomplete {
        which: String,
        t: f64,
        t_end: f64,
        termination: Termination,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Initial datum `base + tail` with the tail measured in `‖·‖_{ρ,k}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub base: CoefficientSeries,
    pub tail: CoefficientSeries,
    pub rho: f64,
    pub k: u32,
}

impl PerturbationSpec {
    pub fn new(
        base: CoefficientSeries,
        tail: CoefficientSeries,
        rho: f64,
        k: u32,
    ) -> Result<Self, PerturbationError> {
        let a1 = base.add(&tail).coeff(1);
        if !(a1.im == 0.0 && a1.re > 0.0) {
            return Err(PerturbationError::BadNormalization(a1));
        }
        Ok(PerturbationSpec { base, tail, rho, k })
    }

    pub fn norm_value(&self) -> f64 {
        self.tail.norm_rho_n(self.rho, self.k)
    }

    pub fn combined(&self) -> CoefficientSeries {
        self.base.add(&self.tail)
    }
}

/// Uniform snapshot grid on `[0, t_end]`.
pub fn uniform_schedule(t_end: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(1);
    (0..=n).map(|i| if i == n { t_end } else { t_end * i as f64 / n as f64 }).collect()
}

fn complete(traj: Trajectory, which: &str, t_end: f64) -> Result<Trajectory, PerturbationError> {
    if traj.termination == Termination::Completed {
        Ok(traj)
    } else {
        Err(PerturbationError::Incomplete {
            which: which.to_string(),
            t: traj.final_time(),
            t_end,
            termination: traj.termination,
        })
    }
}

/// Runs base and perturbed flows on the same snapshot grid.
pub fn co_evolve(
    spec: &PerturbationSpec,
    sign: FlowSign,
    schedule: &[f64],
    opts: &EvolveOptions,
) -> Result<(Trajectory, Trajectory), PerturbationError> {
    let t_end = *schedule.last().unwrap_or(&0.0);
    let opts = EvolveOptions {
        snapshots: Snapshots::Times(schedule.to_vec()),
        ..opts.clone()
    };
    let (b, p) = rayon::join(
        || evolve(&spec.base, sign, t_end, &opts),
        || evolve(&spec.combined(), sign, t_end, &opts),
    );
    Ok((complete(b?, "base", t_end)?, complete(p?, "perturbed", t_end)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationTable {
    pub radius: f64,
    /// Entry `n` is `sup_t |f^{(n)} − g^{(n)}|_{M(r)}`.
    pub sup_deviation: Vec<f64>,
    pub times: Vec<f64>,
    /// `rows[i][n]` is the deviation of the `n`-th derivative at `times[i]`.
    pub rows: Vec<Vec<f64>>,
}

/// `|f^{(n)} − g^{(n)}|_{M(r)}` on a common snapshot grid, `n = 0..=jmax`.
pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
    r: f64,
    jmax: usize,
) -> Result<DeviationTable, PerturbationError> {
    if a.times != b.times {
        return Err(PerturbationError::MismatchedGrids);
    }
    let rows: Vec<Vec<f64>> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d = x.to_series().sub(&y.to_series());
            (0..=jmax).map(|n| d.derivative(n).norm_m(r)).collect()
        })
        .collect();
    let sup_deviation = (0..=jmax)
        .map(|n| rows.iter().map(|row| row[n]).fold(0.0, f64::max))
        .collect();
    Ok(DeviationTable {
        radius: r,
        sup_deviation,
        times: a.times.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeReport {
    pub degrees: Vec<usize>,
    /// `e_i = sup_t |g_{d_i}' − g_{d_{i+1}}'|_{M(r)}`.
    pub deviations: Vec<f64>,
    /// `e_{i+1}/e_i`.
    pub ratios: Vec<f64>,
    /// `|g_{d_i} − g_{d_{i+1}}|_{M(1)}` at the final time.
    pub final_gaps: Vec<f64>,
    /// Truncations that did not reach the final time.
    pub failures: Vec<(usize, Termination)>,
}

/// Evolves the truncations of `f0` to each degree and measures successive
/// differences of their derivatives.
pub fn truncation_cascade(
    f0: &CoefficientSeries,
    degrees: &[usize],
    sign: FlowSign,
    t_end: f64,
    r: f64,
    schedule_intervals: usize,
    opts: &EvolveOptions,
) -> Result<CascadeReport, PerturbationError> {
    if degrees.len() < 2 || degrees.windows(2).any(|w| w[0] >= w[1]) || degrees[0] == 0 {
        return Err(PerturbationError::BadDegrees(degrees.to_vec()));
    }
    let opts = EvolveOptions {
        snapshots: Snapshots::Times(uniform_schedule(t_end, schedule_intervals)),
        ..opts.clone()
    };
    let runs: Vec<Result<Trajectory, DynamicsError>> = degrees
        .par_iter()
        .map(|&d| evolve(&f0.truncate(d), sign, t_end, &opts))
        .collect();
    let mut trajs = Vec::with_capacity(runs.len());
    for run in runs {
        trajs.push(run?);
    }
    let failures: Vec<(usize, Termination)> = degrees
        .iter()
        .zip(&trajs)
        .filter(|(_, t)| t.termination != Termination::Completed)
        .map(|(&d, t)| (d, t.termination.clone()))
        .collect();
    let mut deviations = Vec::new();
    let mut final_gaps = Vec::new();
    if failures.is_empty() {
        for w in trajs.windows(2) {
            let tab = compare_trajectories(&w[0], &w[1], r, 1)?;
            deviations.push(tab.sup_deviation[1]);
            final_gaps.push(w[0].final_state().sub(w[1].final_state()).norm_m(1.0));
        }
    }
    let ratios = deviations.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(CascadeReport {
        degrees: degrees.to_vec(),
        deviations,
        ratios,
        final_gaps,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub delta: f64,
    pub detected: bool,
    pub t_star: f64,
    /// `M₀(t*)/M₀(0)`.
    pub remaining_fraction: f64,
}

/// Suction blow-up time and remaining area for `ξ + δ·template`, one
/// independent run per `δ`.
pub fn suction_survival(
    deltas: &[f64],
    template: &CoefficientSeries,
    t_max: f64,
    opts: &EvolveOptions,
) -> Result<Vec<SurvivalRow>, PerturbationError> {
    deltas
        .par_iter()
        .map(|&delta| {
            let f0 = CoefficientSeries::disk(1.0).add(&template.scale(Complex64::new(delta, 0.0)));
            let b = detect_blowup(&f0, FlowSign::Suction, t_max, opts)?;
            Ok(SurvivalRow {
                delta,
                detected: b.detected,
                t_star: b.t_star,
                remaining_fraction: b.m0_at_star / area_moment(&f0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> CoefficientSeries {
        CoefficientSeries::from_real(&[1.0, 0.4]).unwrap()
    }

    fn monomial(deg: usize, c: f64) -> CoefficientSeries {
        let mut v = vec![0.0; deg];
        v[deg - 1] = c;
        CoefficientSeries::from_real(&v).unwrap()
    }

    #[test]
    fn zero_tail_is_identical() {
        let spec = PerturbationSpec::new(quad(), CoefficientSeries::disk(0.0), 1.5, 1).unwrap();
        let (a, b) = co_evolve(&spec, FlowSign::Injection, &uniform_schedule(1.0, 10), &EvolveOptions::default()).unwrap();
        assert_eq!(a, b);
        let tab = compare_trajectories(&a, &b, 1.0, 2).unwrap();
        assert!(tab.sup_deviation.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let o = EvolveOptions::default();
        let a = evolve(&quad(), FlowSign::Injection, 1.0, &EvolveOptions { snapshots: Snapshots::Times(uniform_schedule(1.0, 4)), ..o.clone() }).unwrap();
        let b = evolve(&quad(), FlowSign::Injection, 1.0, &EvolveOptions { snapshots: Snapshots::Times(uniform_schedule(1.0, 5)), ..o }).unwrap();
        assert_eq!(compare_trajectories(&a, &b, 1.0, 1), Err(PerturbationError::MismatchedGrids));
    }

    #[test]
    fn normalization_checked() {
        let tail = CoefficientSeries::new(vec![Complex64::new(0.0, 0.1)]).unwrap();
        assert!(PerturbationSpec::new(quad(), tail, 1.5, 0).is_err());
    }

    #[test]
    fn polynomial_cascade_is_exact() {
        let rep = truncation_cascade(&quad(), &[2, 3, 5], FlowSign::Injection, 0.5, 1.0, 5, &EvolveOptions::default()).unwrap();
        assert!(rep.failures.is_empty());
        assert!(rep.deviations.iter().all(|&e| e == 0.0), "{:?}", rep.deviations);
    }

    #[test]
    fn survival_of_unperturbed_disk() {
        let rows = suction_survival(&[0.0], &monomial(3, 1.0), 1.0, &EvolveOptions::default()).unwrap();
        assert!(rows[0].detected);
        assert!((rows[0].t_star - 0.5).abs() < 1e-3);
        assert!(rows[0].remaining_fraction < 1e-5);
    }

    #[test]
    fn deviation_grows_with_amplitude() {
        let sched = uniform_schedule(0.5, 10);
        let sup: Vec<f64> = [2.5e-4, 5e-4, 1e-3]
            .iter()
            .map(|&d| {
                let spec = PerturbationSpec::new(quad(), monomial(5, d), 1.5, 1).unwrap();
                let (a, b) = co_evolve(&spec, FlowSign::Injection, &sched, &EvolveOptions::default()).unwrap();
                compare_trajectories(&a, &b, 1.0, 1).unwrap().sup_deviation[0]
            })
            .collect();
        assert!(sup.windows(2).all(|w| w[0] <= w[1]), "{sup:?}");
    }
}
