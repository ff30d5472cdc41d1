//! Numerical predicates for univalence, local univalence and strong
//! starlikeness of polynomial maps.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::Serialize;

use crate::roots;
use crate::series::{sample_coeffs, CoefficientSeries, Series};
use crate::spectral::next_pow2;

/// Zeros of `f'` this close to `|ξ| = r` count as lying on the circle.
pub const ROOT_BAND: f64 = 1e-9;

/// Boundary samples closer than this fraction of the image diameter collide.
pub const COLLISION_FRACTION: f64 = 1e-8;

const REFINE_TOL: f64 = 1e-10;

/// Where `min |f'|` over a closed disk is attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeMinimum {
    pub value: f64,
    pub at: Complex64,
    /// A zero of `f'` lies strictly inside the disk.
    pub interior_zero: bool,
}

/// `min_{|ξ| ≤ r} |f'(ξ)|`.
pub fn min_abs_fprime(f: &CoefficientSeries, r: f64) -> f64 {
    min_abs_fprime_detail(f, r).value
}

/// [`min_abs_fprime`] with the minimizing point.
///
/// Zeros of `f'` inside the disk give exactly 0. Otherwise the minimum
/// modulus principle puts the minimum on `|ξ| = r`, found by dense sampling
/// and golden-section refinement. Zeros within [`ROOT_BAND`] of the circle
/// also take the boundary route.
pub fn min_abs_fprime_detail(f: &CoefficientSeries, r: f64) -> DerivativeMinimum {
    let df = f.derivative(1);
    let zs = roots::zeros(&df);
    if let Some(z) = zs
        .iter()
        .filter(|z| z.norm() < r - ROOT_BAND)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        return DerivativeMinimum {
            value: 0.0,
            at: *z,
            interior_zero: true,
        };
    }
    let (theta, value) = boundary_min(&df, r);
    DerivativeMinimum {
        value,
        at: Complex64::from_polar(r, theta),
        interior_zero: false,
    }
}

fn boundary_min(df: &Series, r: f64) -> (f64, f64) {
    let deg = df.degree().unwrap_or(0);
    let n = next_pow2((32 * deg).max(1024));
    let vals: Vec<f64> = sample_coeffs(df.coeffs(), 0, r, n)
        .iter()
        .map(|v| v.norm())
        .collect();
    let h = TAU / n as f64;
    let obj = |t: f64| df.eval(Complex64::from_polar(r, t)).norm();
    let mut best = (0.0, f64::INFINITY);
    for j in local_extrema(&vals, false, 4) {
        let t0 = h * j as f64;
        let (t, v) = golden_section(&obj, t0 - h, t0 + h, false);
        let v = v.min(vals[j]);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Indices of the `count` most extreme local minima (or maxima) of periodic samples.
fn local_extrema(vals: &[f64], maxima: bool, count: usize) -> Vec<usize> {
    let n = vals.len();
    let better = |a: f64, b: f64| if maxima { a >= b } else { a <= b };
    let mut idx: Vec<usize> = (0..n)
        .filter(|&j| better(vals[j], vals[(j + n - 1) % n]) && better(vals[j], vals[(j + 1) % n]))
        .collect();
    if idx.is_empty() {
        idx.push(0);
    }
    idx.sort_by(|&a, &b| {
        if maxima {
            vals[b].total_cmp(&vals[a])
        } else {
            vals[a].total_cmp(&vals[b])
        }
    });
    idx.truncate(count);
    idx
}

fn golden_section(obj: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, maximize: bool) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let key = |t: f64| if maximize { -obj(t) } else { obj(t) };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (key(c), key(d));
    while (b - a).abs() > REFINE_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = key(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = key(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, obj(t))
}

/// Why a map failed the univalence test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum UnivalenceWitness {
    /// A zero of `f'` in the closed disk.
    CriticalPoint(Complex64),
    /// Two distinct parameters with (numerically) the same image.
    Collision(Complex64, Complex64),
    /// The boundary curve winds `winding` times around the image of `probe`.
    Winding { probe: Complex64, winding: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnivalenceReport {
    pub univalent: bool,
    pub witness: Option<UnivalenceWitness>,
}

/// Numerical univalence test on the closed disk `|ξ| ≤ r`.
///
/// Passes when `f'` has no zero in the disk, the sampled boundary curve
/// `f(∂D_r)` has no crossing or near-collision, and it winds exactly once
/// around the images of a lattice of interior probes.
pub fn is_univalent(f: &CoefficientSeries, r: f64) -> UnivalenceReport {
    let df = f.derivative(1);
    if let Some(z) = roots::zeros(&df)
        .into_iter()
        .filter(|z| z.norm() <= r + ROOT_BAND)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        return fail(UnivalenceWitness::CriticalPoint(z));
    }
    if df.is_zero() {
        return fail(UnivalenceWitness::CriticalPoint(Complex64::default()));
    }

    let n = next_pow2((16 * f.degree()).max(1024));
    let w = sample_coeffs(f.coeffs(), 1, r, n);
    let h = TAU / n as f64;

    let (mut lo, mut hi) = (w[0], w[0]);
    for p in &w {
        lo = Complex64::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = Complex64::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    let diameter = (hi - lo).norm();
    let tol = COLLISION_FRACTION * diameter;
    let min_sep = 4;

    for i in 0..n {
        let a0 = w[i];
        let a1 = w[(i + 1) % n];
        for j in (i + 2)..n {
            if (i == 0 && j == n - 1) || j == i + 1 {
                continue;
            }
            let sep = (j - i).min(n - (j - i));
            if sep > min_sep && (w[i] - w[j]).norm() < tol {
                return fail(collision_witness(f, r, h * i as f64, h * j as f64));
            }
            let b0 = w[j];
            let b1 = w[(j + 1) % n];
            if let Some((s, t)) = segment_intersection(a0, a1, b0, b1) {
                return fail(collision_witness(
                    f,
                    r,
                    h * (i as f64 + s),
                    h * (j as f64 + t),
                ));
            }
        }
    }

    for probe in probe_lattice(r) {
        let target = f.eval(probe);
        let winding = winding_number(&w, target);
        if winding != 1 {
            return fail(UnivalenceWitness::Winding { probe, winding });
        }
    }

    UnivalenceReport {
        univalent: true,
        witness: None,
    }
}

fn fail(w: UnivalenceWitness) -> UnivalenceReport {
    UnivalenceReport {
        univalent: false,
        witness: Some(w),
    }
}

fn probe_lattice(r: f64) -> Vec<Complex64> {
    let mut pts = vec![Complex64::default()];
    for &rad in &[0.3, 0.6, 0.9] {
        for k in 0..12 {
            pts.push(Complex64::from_polar(rad * r, TAU * k as f64 / 12.0 + 0.1));
        }
    }
    pts
}

/// Winding number of the closed polygon `w` around `p`.
pub fn winding_number(w: &[Complex64], p: Complex64) -> i64 {
    let n = w.len();
    let total: f64 = (0..n)
        .map(|j| ((w[(j + 1) % n] - p) / (w[j] - p)).arg())
        .sum();
    (total / TAU).round() as i64
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Proper crossing of segments `[a0,a1]` and `[b0,b1]`; returns the
/// fractional positions along each segment.
fn segment_intersection(
    a0: Complex64,
    a1: Complex64,
    b0: Complex64,
    b1: Complex64,
) -> Option<(f64, f64)> {
    let da = a1 - a0;
    let db = b1 - b0;
    let denom = cross(da, db);
    if denom == 0.0 {
        return None;
    }
    let s = cross(b0 - a0, db) / denom;
    let t = cross(b0 - a0, da) / denom;
    if (0.0..1.0).contains(&s) && (0.0..1.0).contains(&t) {
        Some((s, t))
    } else {
        None
    }
}

/// Newton refinement of `f(re^{iθ₁}) = f(re^{iθ₂})` from a polygon crossing.
fn collision_witness(f: &CoefficientSeries, r: f64, mut t1: f64, mut t2: f64) -> UnivalenceWitness {
    let point = |t: f64| Complex64::from_polar(r, t);
    for _ in 0..20 {
        let (z1, z2) = (point(t1), point(t2));
        let g = f.eval(z1) - f.eval(z2);
        if g.norm() < 1e-14 {
            break;
        }
        let j1 = Complex64::i() * z1 * f.eval_derivative(z1);
        let j2 = -Complex64::i() * z2 * f.eval_derivative(z2);
        let det = j1.re * j2.im - j2.re * j1.im;
        if det.abs() < 1e-300 {
            break;
        }
        let d1 = (g.re * j2.im - j2.re * g.im) / det;
        let d2 = (j1.re * g.im - g.re * j1.im) / det;
        if !d1.is_finite() || !d2.is_finite() || d1.abs().max(d2.abs()) > 0.1 {
            break;
        }
        t1 -= d1;
        t2 -= d2;
    }
    UnivalenceWitness::Collision(point(t1), point(t2))
}

/// Strong-starlikeness summary for `f` on the unit disk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarlikeReport {
    /// `α = max_arg / (π/2)` when below 1, otherwise `None` (not starlike).
    pub order: Option<f64>,
    /// `sup_{|ξ|=1} |arg(ξ f'(ξ)/f(ξ))|`.
    pub max_arg: f64,
    /// `Σ_{n≥2} n|a_n| < |a₁|`, a sufficient coefficient condition.
    pub coefficient_condition: bool,
    /// A zero of `f(ξ)/ξ` in the closed disk, when there is one.
    pub witness: Option<Complex64>,
}

impl StarlikeReport {
    pub fn is_starlike(&self) -> bool {
        self.order.is_some()
    }
}

pub fn coefficient_condition(f: &CoefficientSeries) -> bool {
    let tail: f64 = (2..=f.degree()).map(|n| n as f64 * f.coeff(n).norm()).sum();
    tail < f.coeff(1).norm()
}

/// Strongly-starlike order of `f` on the unit disk.
///
/// `arg(ξf'/f)` is the boundary trace of a harmonic function once `f/ξ` is
/// zero-free on the closed disk, so its supremum is taken over `|ξ| = 1`.
pub fn starlike_order(f: &CoefficientSeries) -> StarlikeReport {
    let cond = coefficient_condition(f);
    // f/ξ as an ordinary polynomial.
    let quotient = Series::new(f.coeffs().to_vec());
    if let Some(z) = roots::zeros(&quotient)
        .into_iter()
        .filter(|z| z.norm() <= 1.0 + ROOT_BAND)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        return StarlikeReport {
            order: None,
            max_arg: PI,
            coefficient_condition: cond,
            witness: Some(z),
        };
    }
    if quotient.is_zero() {
        return StarlikeReport {
            order: None,
            max_arg: PI,
            coefficient_condition: cond,
            witness: Some(Complex64::default()),
        };
    }

    let weighted = Series::new(
        f.coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| c * (i + 1) as f64)
            .collect(),
    );
    let n = next_pow2((64 * f.degree()).max(4096));
    let num = sample_coeffs(weighted.coeffs(), 0, 1.0, n);
    let den = sample_coeffs(quotient.coeffs(), 0, 1.0, n);
    let vals: Vec<f64> = num.iter().zip(&den).map(|(a, b)| (a / b).arg().abs()).collect();
    let h = TAU / n as f64;
    let obj = |t: f64| {
        let z = Complex64::from_polar(1.0, t);
        (weighted.eval(z) / quotient.eval(z)).arg().abs()
    };
    let mut max_arg = vals.iter().copied().fold(0.0, f64::max);
    for j in local_extrema(&vals, true, 4) {
        let t0 = h * j as f64;
        let (_, v) = golden_section(&obj, t0 - h, t0 + h, true);
        max_arg = max_arg.max(v);
    }
    StarlikeReport {
        order: (max_arg < FRAC_PI_2).then(|| max_arg / FRAC_PI_2),
        max_arg,
        coefficient_condition: cond,
        witness: None,
    }
}
