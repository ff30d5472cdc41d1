//! Coefficient dynamics `f_t = ξ f' P[σ/|f'|²]`, adaptive integration and
//! blow-up detection.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, UnivalenceWitness};
use crate::integrator::{rk4_step, Dense, Dopri5, State};
use crate::poisson::{completion_from_fourier, grid_for_zero_modulus, MAX_GRID};
use crate::roots;
use crate::series::{sample_coeffs, CoefficientSeries, Series, DEFAULT_GRID};
use crate::spectral::next_pow2;

/// Velocity tail above this fraction of `|f|_{M(1)}` triggers grid doubling.
pub const DEGREE_RESIDUAL_TARGET: f64 = 1e-8;

/// Velocity tail above this fraction of `|f|_{M(1)}` on the largest grid is fatal.
pub const DEGREE_RESIDUAL_FATAL: f64 = 1e-6;

/// Injection (`+1`) or suction (`-1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum FlowSign {
    Injection,
    Suction,
}

impl FlowSign {
    pub fn value(self) -> f64 {
        match self {
            FlowSign::Injection => 1.0,
            FlowSign::Suction => -1.0,
        }
    }
}

impl TryFrom<i32> for FlowSign {
    type Error = DynamicsError;

    fn try_from(v: i32) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(FlowSign::Injection),
            -1 => Ok(FlowSign::Suction),
            other => Err(DynamicsError::BadSign(other)),
        }
    }
}

impl From<FlowSign> for i32 {
    fn from(s: FlowSign) -> i32 {
        s.value() as i32
    }
}

impl fmt::Display for FlowSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowSign::Injection => write!(f, "+1"),
            FlowSign::Suction => write!(f, "-1"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("flow sign must be +1 or -1, got {0}")]
    BadSign(i32),
    #[error("f' vanishes at {0} in the closed unit disk")]
    CriticalPoint(Complex64),
    #[error("initial map is not univalent on the closed disk: {0:?}")]
    NotUnivalent(UnivalenceWitness),
    #[error("linear coefficient must be nonzero")]
    DegenerateMap,
    #[error("grid size {n_grid} must be a power of two of at least {required}")]
    BadGrid { n_grid: usize, required: usize },
    #[error("velocity tail {residual:e} exceeds tolerance on a {n_grid}-point grid")]
    Aliasing { n_grid: usize, residual: f64 },
    #[error("velocity is not finite")]
    NonFinite,
    #[error("invalid options: {0}")]
    BadOptions(String),
}

/// Truncated velocity and the size of what was cut.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub rate: CoefficientSeries,
    /// `|tail beyond degree(f)|_{M(1)}`.
    pub residual: f64,
    pub n_grid: usize,
}

fn fprime_coeffs(a: &[Complex64]) -> Vec<Complex64> {
    a.iter().enumerate().map(|(i, c)| c * (i + 1) as f64).collect()
}

fn norm_m1(a: &[Complex64]) -> f64 {
    let mut t: Vec<f64> = a.iter().map(|c| c.norm()).collect();
    t.sort_by(|x, y| y.total_cmp(x));
    t.into_iter().sum()
}

/// Velocity coefficients on a fixed grid; the state length is preserved.
fn velocity_on_grid(
    a: &[Complex64],
    sign: f64,
    n_grid: usize,
) -> Result<(State, f64), DynamicsError> {
    let deg = a.len();
    let dfc = fprime_coeffs(a);
    let g: Vec<Complex64> = sample_coeffs(&dfc, 0, 1.0, n_grid)
        .iter()
        .map(|d| Complex64::new(sign / d.norm_sqr(), 0.0))
        .collect();
    if g.iter().any(|v| !v.re.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    let p = completion_from_fourier(&g);
    let mut c = Vec::with_capacity(p.coeffs.len() + 1);
    c.push(Complex64::new(p.constant, 0.0));
    c.extend_from_slice(&p.coeffs);
    let kmax = c.len() - 1;

    // ξf' has coefficients n·a_n at ξ^n.
    let mut rate = vec![Complex64::default(); deg];
    let mut tail = Vec::new();
    for m in 1..=deg + kmax {
        let lo = if m > kmax { m - kmax } else { 1 };
        let hi = m.min(deg);
        let mut v = Complex64::default();
        for n in lo..=hi {
            v += dfc[n - 1] * c[m - n];
        }
        if m <= deg {
            rate[m - 1] = v;
        } else {
            tail.push(v);
        }
    }
    if rate.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    Ok((rate, norm_m1(&tail)))
}

fn interior_critical_point(a: &[Complex64]) -> Option<Complex64> {
    roots::zeros(&Series::new(fprime_coeffs(a)))
        .into_iter()
        .filter(|z| z.norm() <= 1.0)
        .min_by(|x, y| x.norm().total_cmp(&y.norm()))
}

/// Velocity with the grid sized from the zeros of `f'` and doubled until
/// the degree residual is negligible.
fn velocity_adaptive(
    a: &[Complex64],
    sign: f64,
    min_grid: usize,
) -> Result<(State, f64), DynamicsError> {
    velocity_adaptive_grid(a, sign, min_grid).map(|(rate, res, _)| (rate, res))
}

fn velocity_adaptive_grid(
    a: &[Complex64],
    sign: f64,
    min_grid: usize,
) -> Result<(State, f64, usize), DynamicsError> {
    let zs = roots::zeros(&Series::new(fprime_coeffs(a)));
    if let Some(z) = zs
        .iter()
        .filter(|z| z.norm() <= 1.0)
        .min_by(|x, y| x.norm().total_cmp(&y.norm()))
    {
        return Err(DynamicsError::CriticalPoint(*z));
    }
    let rho = zs.iter().map(|z| z.norm()).min_by(f64::total_cmp);
    let base = min_grid.max(next_pow2(4 * a.len()));
    let mut n = grid_for_zero_modulus(base, rho);
    let scale = norm_m1(a);
    loop {
        let (rate, residual) = velocity_on_grid(a, sign, n)?;
        if residual <= DEGREE_RESIDUAL_TARGET * scale {
            return Ok((rate, residual, n));
        }
        if n >= MAX_GRID {
            if residual > DEGREE_RESIDUAL_FATAL * scale {
                return Err(DynamicsError::Aliasing { n_grid: n, residual });
            }
            return Ok((rate, residual, n));
        }
        n *= 2;
    }
}

/// `ξ f'(ξ) P[σ/|f'|²](ξ)` truncated to `degree(f)` on an `n_grid`-point
/// unit-circle grid.
pub fn velocity(
    f: &CoefficientSeries,
    sign: FlowSign,
    n_grid: usize,
) -> Result<Velocity, DynamicsError> {
    let required = 4 * f.degree();
    if !n_grid.is_power_of_two() || n_grid < required {
        return Err(DynamicsError::BadGrid { n_grid, required });
    }
    if let Some(z) = interior_critical_point(f.coeffs()) {
        return Err(DynamicsError::CriticalPoint(z));
    }
    let (rate, residual) = velocity_on_grid(f.coeffs(), sign.value(), n_grid)?;
    Ok(Velocity {
        rate: CoefficientSeries::new(rate).map_err(|_| DynamicsError::NonFinite)?,
        residual,
        n_grid,
    })
}

/// [`velocity`] on the adaptive grid used by the integrators.
pub fn velocity_auto(f: &CoefficientSeries, sign: FlowSign) -> Result<Velocity, DynamicsError> {
    let (rate, residual, n_grid) = velocity_adaptive_grid(f.coeffs(), sign.value(), DEFAULT_GRID)?;
    Ok(Velocity {
        rate: CoefficientSeries::new(rate).map_err(|_| DynamicsError::NonFinite)?,
        residual,
        n_grid,
    })
}

fn pg_residual_raw(a: &[Complex64], ft: &[Complex64], sign: f64) -> f64 {
    let n = DEFAULT_GRID.max(next_pow2(4 * a.len().max(ft.len())));
    let zf = sample_coeffs(&fprime_coeffs(a), 1, 1.0, n);
    let v = sample_coeffs(ft, 1, 1.0, n);
    zf.iter()
        .zip(&v)
        .map(|(w, u)| ((u * w.conj()).re - sign).abs())
        .fold(0.0, f64::max)
}

/// `max_θ |Re[f_t · conj(ξ f')] − σ|` on the unit circle.
pub fn residual_pg(f: &CoefficientSeries, f_t: &CoefficientSeries, sign: FlowSign) -> f64 {
    pg_residual_raw(f.coeffs(), f_t.coeffs(), sign.value())
}

/// `M₀ = Σ n|a_n|²`.
fn area_moment(a: &[Complex64]) -> f64 {
    a.iter()
        .enumerate()
        .map(|(i, c)| (i + 1) as f64 * c.norm_sqr())
        .sum()
}

/// Which states a trajectory keeps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snapshots {
    /// Every accepted step.
    #[default]
    EveryStep,
    /// Only the initial and terminal states.
    Endpoints,
    /// The initial state, these times (by dense output) and the terminal state.
    Times(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Radius of the closed disk on which `min |f'|` is monitored.
    pub analysis_radius: f64,
    pub min_fprime_floor: f64,
    /// Strong* mode: only local univalence is required.
    pub locally_univalent: bool,
    /// Accepted steps between univalence spot checks (default mode only).
    pub univalence_every: usize,
    /// Suction stops once `M₀` drops to this value.
    pub exhaustion_m0: f64,
    /// Width of the bracket around the floor crossing.
    pub blowup_tolerance: f64,
    pub max_steps: usize,
    /// Smallest velocity grid.
    pub min_grid: usize,
    pub snapshots: Snapshots,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            rtol: 1e-9,
            atol: 1e-12,
            analysis_radius: 1.05,
            min_fprime_floor: 1e-3,
            locally_univalent: false,
            univalence_every: 10,
            exhaustion_m0: 1e-6,
            blowup_tolerance: 1e-6,
            max_steps: 2_000_000,
            min_grid: DEFAULT_GRID,
            snapshots: Snapshots::EveryStep,
        }
    }
}

impl EvolveOptions {
    fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::BadOptions(m.to_string()));
        if !(self.rtol > 0.0 && self.atol >= 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.analysis_radius > 1.0) {
            return bad("analysis radius must exceed 1");
        }
        if !(self.min_fprime_floor > 0.0) {
            return bad("derivative floor must be positive");
        }
        if !(self.blowup_tolerance > 0.0) {
            return bad("blow-up tolerance must be positive");
        }
        if !self.min_grid.is_power_of_two() || self.min_grid < 4 {
            return bad("minimum grid must be a power of two");
        }
        if let Snapshots::Times(ts) = &self.snapshots {
            if ts.iter().any(|t| !t.is_finite() || *t < 0.0) || ts.windows(2).any(|w| w[0] >= w[1]) {
                return bad("snapshot times must be finite, nonnegative and increasing");
            }
        }
        Ok(())
    }
}

/// Diagnostics of one stored state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// `min |f'|` on the closed disk of the analysis radius.
    pub min_fprime: f64,
    pub degree_residual: f64,
    pub pg_residual: f64,
    /// Step that produced (or contains) this state; zero initially.
    pub step_size: f64,
}

/// Loss of the strong solution: `min |f'|` on `D̄_r` fell below the floor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupReport {
    pub detected: bool,
    /// Bracket midpoint when detected, otherwise the horizon reached.
    pub t_star: f64,
    pub bracket: [f64; 2],
    pub bracket_width: f64,
    pub floor: f64,
    pub radius: f64,
    /// `M₀` at the lower end of the bracket.
    pub m0_at_star: f64,
}

impl fmt::Display for BlowupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detected {
            write!(
                f,
                "blow-up at t* = {} (bracket width {:e}, min|f'| < {} on radius {})",
                self.t_star, self.bracket_width, self.floor, self.radius
            )
        } else {
            write!(f, "none up to t_max = {}", self.t_star)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Blowup(BlowupReport),
    /// Suction removed (numerically) all the fluid.
    Exhausted { t: f64, m0: f64 },
    /// The spot check found the boundary no longer simple.
    UnivalenceLost { t: f64, witness: UnivalenceWitness },
    StepUnderflow { t: f64, h: f64, cause: String },
    MaxSteps { t: f64 },
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::StepUnderflow { .. } | Termination::MaxSteps { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_failures: usize,
    /// Largest degree residual over all accepted states.
    pub max_degree_residual: f64,
    pub max_pg_residual: f64,
    /// `|Im a₁|` removed by the gauge.
    pub max_gauge_drift: f64,
    pub min_fprime: f64,
    /// Elapsed time over accepted steps.
    pub mean_step: f64,
    pub univalence_checks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub sign: FlowSign,
    pub times: Vec<f64>,
    pub states: Vec<CoefficientSeries>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub termination: Termination,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    pub fn final_state(&self) -> &CoefficientSeries {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn blowup(&self) -> Option<&BlowupReport> {
        match &self.termination {
            Termination::Blowup(b) => Some(b),
            _ => None,
        }
    }

    fn push(&mut self, t: f64, a: &[Complex64], d: StepDiagnostics) {
        if self.times.last().is_some_and(|&last| t <= last) {
            return;
        }
        self.times.push(t);
        self.states.push(to_series(a));
        self.diagnostics.push(d);
    }
}

fn to_series(a: &[Complex64]) -> CoefficientSeries {
    CoefficientSeries::new(a.to_vec()).expect("state is finite and nonempty")
}

/// Rotates the parametrization so that `a₁` is real and positive.
///
/// The velocity's linear coefficient is `a₁` times a real number, so this
/// only clamps round-off.
fn apply_gauge(y: &mut [Complex64], k: Option<&mut [Complex64]>) -> f64 {
    let a1 = y[0];
    if a1.im == 0.0 && a1.re > 0.0 {
        return 0.0;
    }
    let phi = -a1.arg();
    let rot = |v: &mut [Complex64]| {
        for (i, c) in v.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, phi * (i + 1) as f64);
        }
    };
    rot(y);
    if let Some(k) = k {
        rot(k);
    }
    y[0] = Complex64::new(y[0].norm(), 0.0);
    a1.im.abs()
}

fn check_initial(f0: &CoefficientSeries, opts: &EvolveOptions) -> Result<State, DynamicsError> {
    opts.validate()?;
    let mut y = f0.coeffs().to_vec();
    if y[0].norm() == 0.0 {
        return Err(DynamicsError::DegenerateMap);
    }
    if let Some(z) = interior_critical_point(&y) {
        return Err(DynamicsError::CriticalPoint(z));
    }
    if !opts.locally_univalent {
        let rep = geometry::is_univalent(f0, 1.0);
        if !rep.univalent {
            return Err(DynamicsError::NotUnivalent(
                rep.witness.expect("failing report carries a witness"),
            ));
        }
    }
    apply_gauge(&mut y, None);
    Ok(y)
}

struct Accepted {
    t1: f64,
    h: f64,
    y1: State,
    residual: f64,
    dense: Dense,
}

/// Adaptive Dormand–Prince driver for the coefficient ODE.
struct Stepper {
    tab: Dopri5,
    sign: f64,
    min_grid: usize,
    t: f64,
    y: State,
    k1: State,
    h: f64,
    rejected: usize,
    rhs_failures: usize,
    gauge_drift: f64,
}

enum StepFailure {
    Underflow { t: f64, h: f64, cause: String },
}

impl Stepper {
    fn new(
        t: f64,
        y: State,
        sign: f64,
        opts: &EvolveOptions,
        span: f64,
    ) -> Result<(Self, f64), DynamicsError> {
        let tab = Dopri5 {
            rtol: opts.rtol,
            atol: opts.atol,
        };
        let mut rhs = |v: &[Complex64]| velocity_adaptive(v, sign, opts.min_grid);
        let (k1, res) = rhs(&y)?;
        let h = if span > 0.0 {
            tab.initial_step(&mut rhs, &y, &k1, span)
        } else {
            0.0
        };
        Ok((
            Stepper {
                tab,
                sign,
                min_grid: opts.min_grid,
                t,
                y,
                k1,
                h,
                rejected: 0,
                rhs_failures: 0,
                gauge_drift: 0.0,
            },
            res,
        ))
    }

    fn h_min(&self) -> f64 {
        1e-14 * self.t.abs().max(1.0)
    }

    /// One accepted step not passing `t_limit`.
    fn advance(&mut self, t_limit: f64) -> Result<Accepted, StepFailure> {
        let (sign, min_grid) = (self.sign, self.min_grid);
        let mut rhs = |v: &[Complex64]| velocity_adaptive(v, sign, min_grid);
        let mut last_reject = false;
        let mut cause = String::from("error control");
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(remaining);
            if remaining - h <= 1e-12 * remaining.max(1e-300) || h > remaining {
                h = remaining;
            }
            if !(h >= self.h_min()) && h < remaining {
                return Err(StepFailure::Underflow { t: self.t, h, cause });
            }
            if h <= 0.0 {
                return Err(StepFailure::Underflow { t: self.t, h, cause });
            }
            match self.tab.attempt(&mut rhs, &self.y, &self.k1, h) {
                Err(e) => {
                    self.rhs_failures += 1;
                    self.rejected += 1;
                    cause = e.to_string();
                    self.h = 0.25 * h;
                    last_reject = true;
                }
                Ok(trial) if trial.err <= 1.0 => {
                    let dense = self.tab.dense(self.t, h, &self.y, &trial);
                    let mut fac = (0.9 * trial.err.powf(-0.2)).clamp(0.2, 10.0);
                    if last_reject {
                        fac = fac.min(1.0);
                    }
                    let mut y1 = trial.y1;
                    let mut k7 = trial.k7;
                    let drift = apply_gauge(&mut y1, Some(&mut k7));
                    self.gauge_drift = self.gauge_drift.max(drift);
                    let t0 = self.t;
                    self.t = if h == remaining { t_limit } else { t0 + h };
                    self.y = y1.clone();
                    self.k1 = k7;
                    self.h = h * fac;
                    return Ok(Accepted {
                        t1: self.t,
                        h,
                        y1,
                        residual: trial.aux7,
                        dense,
                    });
                }
                Ok(trial) => {
                    self.rejected += 1;
                    let fac = (0.9 * trial.err.powf(-0.2)).clamp(0.2, 1.0);
                    self.h = h * fac;
                    last_reject = true;
                    cause = String::from("error control");
                }
            }
        }
    }
}

fn diagnostics_at(a: &[Complex64], sign: f64, opts: &EvolveOptions, step: f64) -> StepDiagnostics {
    let f = to_series(a);
    let min_fprime = geometry::min_abs_fprime(&f, opts.analysis_radius);
    match velocity_adaptive(a, sign, opts.min_grid) {
        Ok((rate, residual)) => StepDiagnostics {
            min_fprime,
            degree_residual: residual,
            pg_residual: pg_residual_raw(a, &rate, sign),
            step_size: step,
        },
        Err(_) => StepDiagnostics {
            min_fprime,
            degree_residual: f64::NAN,
            pg_residual: f64::NAN,
            step_size: step,
        },
    }
}

/// Integrates from `(t0, y0)` to `t1` without monitoring.
fn integrate_quiet(
    t0: f64,
    y0: &[Complex64],
    t1: f64,
    sign: f64,
    opts: &EvolveOptions,
) -> Option<State> {
    let (mut st, _) = Stepper::new(t0, y0.to_vec(), sign, opts, t1 - t0).ok()?;
    let mut steps = 0;
    while st.t < t1 {
        st.advance(t1).ok()?;
        steps += 1;
        if steps > opts.max_steps {
            return None;
        }
    }
    Some(st.y)
}

/// Bisection for the first time `min |f'|` on `D̄_r` falls below the floor.
///
/// Each probe re-integrates from the latest state known to be above the
/// floor; a probe that cannot be integrated counts as past the crossing.
fn refine_crossing(
    mut lo: f64,
    mut y_lo: State,
    mut hi: f64,
    sign: f64,
    opts: &EvolveOptions,
) -> (f64, State, f64) {
    while hi - lo > opts.blowup_tolerance {
        let mid = 0.5 * (lo + hi);
        match integrate_quiet(lo, &y_lo, mid, sign, opts) {
            Some(y) if geometry::min_abs_fprime(&to_series(&y), opts.analysis_radius)
                >= opts.min_fprime_floor =>
            {
                lo = mid;
                y_lo = y;
            }
            _ => hi = mid,
        }
    }
    (lo, y_lo, hi)
}

/// Adaptive integration of the coefficient ODE from `f0` up to `t_end`.
///
/// Stops early on blow-up (after refining the crossing time), on fluid
/// exhaustion under suction, on failed univalence spot checks or on step
/// underflow. Invalid input is an error; everything else is reported in
/// [`Trajectory::termination`].
pub fn evolve(
    f0: &CoefficientSeries,
    sign: FlowSign,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory, DynamicsError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(DynamicsError::BadOptions(format!("t_end = {t_end}")));
    }
    let y0 = check_initial(f0, opts)?;
    let s = sign.value();
    let (mut st, res0) = Stepper::new(0.0, y0.clone(), s, opts, t_end)?;

    let d0 = StepDiagnostics {
        min_fprime: geometry::min_abs_fprime(&to_series(&y0), opts.analysis_radius),
        degree_residual: res0,
        pg_residual: pg_residual_raw(&y0, &st.k1, s),
        step_size: 0.0,
    };
    let mut traj = Trajectory {
        sign,
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        termination: Termination::Completed,
        stats: RunStats {
            max_degree_residual: d0.degree_residual,
            max_pg_residual: d0.pg_residual,
            min_fprime: d0.min_fprime,
            ..RunStats::default()
        },
    };
    traj.push(0.0, &y0, d0);
    let snap_times: Vec<f64> = match &opts.snapshots {
        Snapshots::Times(ts) => ts.iter().copied().filter(|&t| t > 0.0 && t <= t_end).collect(),
        _ => Vec::new(),
    };
    let mut next_snap = 0;

    if d0.min_fprime < opts.min_fprime_floor {
        traj.termination = Termination::Blowup(BlowupReport {
            detected: true,
            t_star: 0.0,
            bracket: [0.0, 0.0],
            bracket_width: 0.0,
            floor: opts.min_fprime_floor,
            radius: opts.analysis_radius,
            m0_at_star: area_moment(&y0),
        });
        return Ok(traj);
    }

    let mut last_diag = d0;
    while st.t < t_end {
        if traj.stats.accepted >= opts.max_steps {
            traj.termination = Termination::MaxSteps { t: st.t };
            break;
        }
        let (t_prev, y_prev) = (st.t, st.y.clone());
        let acc = match st.advance(t_end) {
            Ok(a) => a,
            Err(StepFailure::Underflow { t, h, cause }) => {
                traj.termination = Termination::StepUnderflow { t, h, cause };
                break;
            }
        };
        traj.stats.accepted += 1;
        let t1 = st.t;
        let f1 = to_series(&acc.y1);
        let min_fp = geometry::min_abs_fprime(&f1, opts.analysis_radius);

        if min_fp < opts.min_fprime_floor {
            let (lo, y_lo, hi) = refine_crossing(t_prev, y_prev, t1, s, opts);
            let report = BlowupReport {
                detected: true,
                t_star: 0.5 * (lo + hi),
                bracket: [lo, hi],
                bracket_width: hi - lo,
                floor: opts.min_fprime_floor,
                radius: opts.analysis_radius,
                m0_at_star: area_moment(&y_lo),
            };
            record_snapshots(&mut traj, &snap_times, &mut next_snap, &acc, lo, s, opts);
            let d = diagnostics_at(&y_lo, s, opts, acc.h);
            traj.push(lo, &y_lo, d);
            traj.termination = Termination::Blowup(report);
            break;
        }

        let diag = StepDiagnostics {
            min_fprime: min_fp,
            degree_residual: acc.residual,
            pg_residual: pg_residual_raw(&acc.y1, &st.k1, s),
            step_size: acc.h,
        };
        traj.stats.max_degree_residual = traj.stats.max_degree_residual.max(diag.degree_residual);
        traj.stats.max_pg_residual = traj.stats.max_pg_residual.max(diag.pg_residual);
        traj.stats.min_fprime = traj.stats.min_fprime.min(min_fp);
        last_diag = diag;

        record_snapshots(&mut traj, &snap_times, &mut next_snap, &acc, t1, s, opts);
        if opts.snapshots == Snapshots::EveryStep {
            traj.push(t1, &acc.y1, diag);
        }

        let m0 = area_moment(&acc.y1);
        if sign == FlowSign::Suction && m0 <= opts.exhaustion_m0 {
            traj.push(t1, &acc.y1, diag);
            traj.termination = Termination::Exhausted { t: t1, m0 };
            break;
        }

        if !opts.locally_univalent
            && opts.univalence_every > 0
            && traj.stats.accepted.is_multiple_of(opts.univalence_every)
        {
            traj.stats.univalence_checks += 1;
            let rep = geometry::is_univalent(&f1, 1.0);
            if !rep.univalent {
                traj.push(t1, &acc.y1, diag);
                traj.termination = Termination::UnivalenceLost {
                    t: t1,
                    witness: rep.witness.expect("failing report carries a witness"),
                };
                break;
            }
        }
    }
    if matches!(traj.termination, Termination::Completed) || traj.termination.is_failure() {
        traj.push(st.t, &st.y, last_diag);
    }
    traj.stats.rejected = st.rejected;
    traj.stats.rhs_failures = st.rhs_failures;
    traj.stats.max_gauge_drift = st.gauge_drift;
    if traj.stats.accepted > 0 {
        traj.stats.mean_step = st.t / traj.stats.accepted as f64;
    }
    Ok(traj)
}

fn record_snapshots(
    traj: &mut Trajectory,
    snap_times: &[f64],
    next: &mut usize,
    acc: &Accepted,
    up_to: f64,
    sign: f64,
    opts: &EvolveOptions,
) {
    while *next < snap_times.len() && snap_times[*next] <= up_to {
        let ts = snap_times[*next];
        let y = if ts == acc.t1 {
            acc.y1.clone()
        } else {
            acc.dense.eval(ts)
        };
        let d = diagnostics_at(&y, sign, opts, acc.h);
        traj.stats.max_degree_residual = traj.stats.max_degree_residual.max(d.degree_residual);
        traj.stats.max_pg_residual = traj.stats.max_pg_residual.max(d.pg_residual);
        traj.push(ts, &y, d);
        *next += 1;
    }
}

/// Integrates until `t_max` looking only for the floor crossing.
pub fn detect_blowup(
    f0: &CoefficientSeries,
    sign: FlowSign,
    t_max: f64,
    opts: &EvolveOptions,
) -> Result<BlowupReport, DynamicsError> {
    let opts = EvolveOptions {
        snapshots: Snapshots::Endpoints,
        ..opts.clone()
    };
    let traj = evolve(f0, sign, t_max, &opts)?;
    Ok(match traj.termination {
        Termination::Blowup(b) => b,
        _ => {
            let t = traj.final_time();
            BlowupReport {
                detected: false,
                t_star: t,
                bracket: [t, t],
                bracket_width: 0.0,
                floor: opts.min_fprime_floor,
                radius: opts.analysis_radius,
                m0_at_star: area_moment(traj.final_state().coeffs()),
            }
        }
    })
}

/// Fixed-step classical RK4 with `ceil(t_end/dt)` equal steps.
pub fn integrate_rk4(
    f0: &CoefficientSeries,
    sign: FlowSign,
    t_end: f64,
    dt: f64,
) -> Result<CoefficientSeries, DynamicsError> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(DynamicsError::BadOptions(format!("dt = {dt}, t_end = {t_end}")));
    }
    let n = (t_end / dt).ceil().max(1.0) as usize;
    integrate_rk4_on(f0, sign, &[0.0, t_end], n)
}

/// Classical RK4 over a prescribed time grid, each interval split into
/// `substeps` equal steps. Replaying an adaptive run's accepted times gives
/// an independent fixed-step solution at the same local resolution.
pub fn integrate_rk4_on(
    f0: &CoefficientSeries,
    sign: FlowSign,
    times: &[f64],
    substeps: usize,
) -> Result<CoefficientSeries, DynamicsError> {
    if substeps == 0 || times.is_empty() || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(DynamicsError::BadOptions(format!(
            "need nondecreasing times and substeps >= 1, got {} times, {substeps} substeps",
            times.len()
        )));
    }
    let mut y = f0.coeffs().to_vec();
    if let Some(z) = interior_critical_point(&y) {
        return Err(DynamicsError::CriticalPoint(z));
    }
    apply_gauge(&mut y, None);
    let s = sign.value();
    let mut rhs = |v: &[Complex64]| velocity_adaptive(v, s, DEFAULT_GRID);
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        if h == 0.0 {
            continue;
        }
        for _ in 0..substeps {
            y = rk4_step(&mut rhs, &y, h)?;
            apply_gauge(&mut y, None);
        }
    }
    Ok(to_series(&y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> CoefficientSeries {
        CoefficientSeries::from_real(&[1.0, 0.4]).unwrap()
    }

    #[test]
    fn disk_velocity() {
        let v = velocity(&CoefficientSeries::disk(2.0), FlowSign::Injection, 256).unwrap();
        assert!((v.rate.coeff(1) - 0.5).norm() < 1e-15);
        assert_eq!(v.rate.degree(), 1);
        assert!(v.residual < 1e-15);
    }

    #[test]
    fn quadratic_velocity_closed_form() {
        for (sign, s) in [(FlowSign::Injection, 1.0), (FlowSign::Suction, -1.0)] {
            let v = velocity(&quad(), sign, 256).unwrap();
            assert!((v.rate.coeff(1) - s * 25.0 / 9.0).norm() < 1e-12);
            assert!((v.rate.coeff(2) + s * 20.0 / 9.0).norm() < 1e-12);
            // 0.8^128 of the kernel tail survives on 256 points.
            assert!(v.residual < 1e-10);
            assert!(residual_pg(&quad(), &v.rate, sign) < 1e-12);
            let auto = velocity_auto(&quad(), sign).unwrap();
            assert!(auto.residual < 1e-12, "{}", auto.residual);
            assert!((auto.rate.coeff(2) + s * 20.0 / 9.0).norm() < 1e-14);
        }
        // d/dt(a₁² + 2a₂²) = 2 and d/dt(a₁²a₂) = 0 at t = 0.
        let v = velocity(&quad(), FlowSign::Injection, 256).unwrap();
        let (a1, a2) = (1.0, 0.4);
        let (d1, d2) = (v.rate.coeff(1).re, v.rate.coeff(2).re);
        assert!((2.0 * a1 * d1 + 4.0 * a2 * d2 - 2.0).abs() < 1e-12);
        assert!((2.0 * a1 * a2 * d1 + a1 * a1 * d2).abs() < 1e-12);
    }

    #[test]
    fn velocity_rejects_critical_points() {
        let f = CoefficientSeries::from_real(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            velocity(&f, FlowSign::Injection, 256),
            Err(DynamicsError::CriticalPoint(_))
        ));
    }

    #[test]
    fn pg_residual_examples() {
        let f = CoefficientSeries::disk(1.5);
        let ft = CoefficientSeries::disk(1.0 / 1.5);
        assert!(residual_pg(&f, &ft, FlowSign::Injection) < 1e-15);
        assert!((residual_pg(&f, &ft, FlowSign::Suction) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn disk_injection_exact() {
        let traj = evolve(&CoefficientSeries::disk(1.0), FlowSign::Injection, 4.0, &EvolveOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::Completed);
        assert_eq!(traj.final_time(), 4.0);
        assert!((traj.final_state().coeff(1) - 3.0).norm() < 1e-8);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s.coeff(1).re - (1.0 + 2.0 * t).sqrt()).abs() < 1e-8);
            assert_eq!(s.coeff(1).im, 0.0);
        }
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn disk_suction_and_blowup() {
        let opts = EvolveOptions::default();
        let traj = evolve(&CoefficientSeries::disk(1.0), FlowSign::Suction, 0.375, &opts).unwrap();
        assert!((traj.final_state().coeff(1) - 0.5).norm() < 1e-8);
        let b = detect_blowup(&CoefficientSeries::disk(1.0), FlowSign::Suction, 1.0, &opts).unwrap();
        assert!(b.detected);
        assert!((b.t_star - 0.5).abs() < 1e-3, "{b}");
        assert!(b.bracket_width <= opts.blowup_tolerance);
    }

    #[test]
    fn snapshots_by_dense_output() {
        let opts = EvolveOptions {
            snapshots: Snapshots::Times(vec![0.5, 1.0, 1.7]),
            ..EvolveOptions::default()
        };
        let traj = evolve(&CoefficientSeries::disk(1.0), FlowSign::Injection, 2.0, &opts).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.5, 1.0, 1.7, 2.0]);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s.coeff(1).re - (1.0 + 2.0 * t).sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn non_univalent_start_rejected() {
        let f = CoefficientSeries::from_real(&[1.0, 1.0]).unwrap();
        assert!(evolve(&f, FlowSign::Injection, 1.0, &EvolveOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let o = EvolveOptions::default();
        let a = evolve(&quad(), FlowSign::Injection, 1.0, &o).unwrap();
        let b = evolve(&quad(), FlowSign::Injection, 1.0, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rk4_matches_disk() {
        let f = integrate_rk4(&CoefficientSeries::disk(1.0), FlowSign::Injection, 4.0, 0.01).unwrap();
        assert!((f.coeff(1) - 3.0).norm() < 1e-8);
    }

    #[test]
    fn sign_serde() {
        assert_eq!(serde_json::to_string(&FlowSign::Suction).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<FlowSign>("1").unwrap(), FlowSign::Injection);
        assert!(serde_json::from_str::<FlowSign>("2").is_err());
    }
}
