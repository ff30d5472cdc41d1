//! Polynomial zeros via companion-matrix eigenvalues.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::series::Series;

const NEWTON_POLISH_STEPS: usize = 3;

/// All complex zeros of `p`, with multiplicity.
///
/// Eigenvalues of the companion matrix of the monic normalization, each
/// polished by a few Newton steps against `p` itself. Constant and zero
/// series have no zeros.
pub fn zeros(p: &Series) -> Vec<Complex64> {
    let c = p.coeffs();
    let deg = match p.degree() {
        Some(d) if d >= 1 => d,
        _ => return Vec::new(),
    };
    let lead = c[deg];
    if deg == 1 {
        return vec![-c[0] / lead];
    }

    let mut m = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }

    let t = match Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.unpack().1,
        // Schur sweep did not converge.
        None => return durand_kerner(c),
    };
    let dp = p.derivative(1);
    (0..deg)
        .map(|i| {
            let mut z = t[(i, i)];
            for _ in 0..NEWTON_POLISH_STEPS {
                let d = dp.eval(z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = p.eval(z) / d;
                if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                    break;
                }
                z -= step;
            }
            z
        })
        .collect()
}

/// Smallest zero modulus, `None` when there are no zeros.
pub fn min_zero_modulus(p: &Series) -> Option<f64> {
    zeros(p).into_iter().map(|z| z.norm()).min_by(f64::total_cmp)
}

fn durand_kerner(c: &[Complex64]) -> Vec<Complex64> {
    let deg = c.len() - 1;
    let lead = c[deg];
    let monic: Vec<Complex64> = c.iter().map(|x| x / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::default(), |acc, a| acc * z + a);
    let radius = 1.0 + monic[..deg].iter().map(|a| a.norm()).fold(0.0, f64::max);
    let seed = Complex64::from_polar(0.4 * radius, 0.9);
    let mut z: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 * radius {
            break;
        }
    }
    z
}
