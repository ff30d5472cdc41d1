//! Dormand–Prince 5(4) with Hairer's dense output, and classical RK4.
//!
//! The systems here are autonomous, so right-hand sides take only the state.
//! Each evaluation also returns an auxiliary scalar (the degree residual of
//! the velocity), carried along for the last stage.

use num_complex::Complex64;

pub(crate) type State = Vec<Complex64>;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// `y + h Σ w_j k_j`.
fn combine(y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])]) -> State {
    let mut out = y.to_vec();
    for &(w, k) in terms {
        if w == 0.0 {
            continue;
        }
        let hw = h * w;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += ki * hw;
        }
    }
    out
}

/// One attempted step.
pub(crate) struct Trial {
    pub y1: State,
    pub k7: State,
    pub aux7: f64,
    /// Scaled max-norm error estimate; the step is acceptable when `≤ 1`.
    pub err: f64,
    ks: [State; 6],
}

/// Hermite-type continuous extension over one accepted step.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub t0: f64,
    pub h: f64,
    r: [State; 5],
}

impl Dense {
    pub fn eval(&self, t: f64) -> State {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * th) * th1) * th)
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
}

impl Dopri5 {
    fn scale(&self, a: Complex64, b: Complex64) -> f64 {
        self.atol + self.rtol * a.norm().max(b.norm())
    }

    pub fn attempt<E>(
        &self,
        rhs: &mut impl FnMut(&[Complex64]) -> Result<(State, f64), E>,
        y0: &[Complex64],
        k1: &[Complex64],
        h: f64,
    ) -> Result<Trial, E> {
        let k2 = rhs(&combine(y0, h, &[(A21, k1)]))?.0;
        let k3 = rhs(&combine(y0, h, &[(A31, k1), (A32, &k2)]))?.0;
        let k4 = rhs(&combine(y0, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?.0;
        let k5 = rhs(&combine(
            y0,
            h,
            &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        ))?
        .0;
        let k6 = rhs(&combine(
            y0,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ))?
        .0;
        let y1 = combine(
            y0,
            h,
            &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let (k7, aux7) = rhs(&y1)?;

        let mut err = 0.0f64;
        for i in 0..y0.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            err = err.max(e.norm() / self.scale(y0[i], y1[i]));
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }
        Ok(Trial {
            y1,
            k7,
            aux7,
            err,
            ks: [k1.to_vec(), k2, k3, k4, k5, k6],
        })
    }

    pub fn dense(&self, t0: f64, h: f64, y0: &[Complex64], trial: &Trial) -> Dense {
        let [k1, _k2, k3, k4, k5, k6] = &trial.ks;
        let k7 = &trial.k7;
        let n = y0.len();
        let mut r1 = Vec::with_capacity(n);
        let mut r2 = Vec::with_capacity(n);
        let mut r3 = Vec::with_capacity(n);
        let mut r4 = Vec::with_capacity(n);
        let mut r5 = Vec::with_capacity(n);
        for i in 0..n {
            let dy = trial.y1[i] - y0[i];
            let bspl = k1[i] * h - dy;
            r1.push(y0[i]);
            r2.push(dy);
            r3.push(bspl);
            r4.push(dy - k7[i] * h - bspl);
            r5.push(
                (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h,
            );
        }
        Dense {
            t0,
            h,
            r: [r1, r2, r3, r4, r5],
        }
    }

    /// Starting step from the local scales of `y` and `f(y)`.
    pub fn initial_step<E>(
        &self,
        rhs: &mut impl FnMut(&[Complex64]) -> Result<(State, f64), E>,
        y0: &[Complex64],
        k1: &[Complex64],
        span: f64,
    ) -> f64 {
        let rms = |v: &[Complex64]| {
            (v.iter()
                .zip(y0)
                .map(|(x, y)| (x.norm() / (self.atol + self.rtol * y.norm())).powi(2))
                .sum::<f64>()
                / v.len() as f64)
                .sqrt()
        };
        let d0 = rms(y0);
        let d1 = rms(k1);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        let y1 = combine(y0, h0, &[(1.0, k1)]);
        let d2 = match rhs(&y1) {
            Ok((k, _)) => {
                let diff: State = k.iter().zip(k1).map(|(a, b)| a - b).collect();
                rms(&diff) / h0
            }
            Err(_) => return (0.01 * h0).min(span),
        };
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }
}

/// One classical RK4 step.
pub(crate) fn rk4_step<E>(
    rhs: &mut impl FnMut(&[Complex64]) -> Result<(State, f64), E>,
    y: &[Complex64],
    h: f64,
) -> Result<State, E> {
    let k1 = rhs(y)?.0;
    let k2 = rhs(&combine(y, h, &[(0.5, &k1)]))?.0;
    let k3 = rhs(&combine(y, h, &[(0.5, &k2)]))?.0;
    let k4 = rhs(&combine(y, h, &[(1.0, &k3)]))?.0;
    Ok(combine(
        y,
        h,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    type Never = std::convert::Infallible;

    fn lin(lambda: Complex64) -> impl FnMut(&[Complex64]) -> Result<(State, f64), Never> {
        move |y| Ok((y.iter().map(|v| v * lambda).collect(), 0.0))
    }

    #[test]
    fn tableau_rows_sum_to_nodes() {
        let (c2, c3, c4, c5) = (1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0);
        assert!((A21 - c2).abs() < 1e-15);
        assert!((A31 + A32 - c3).abs() < 1e-15);
        assert!((A41 + A42 + A43 - c4).abs() < 1e-14);
        assert!((A51 + A52 + A53 + A54 - c5).abs() < 1e-13);
        assert!((A61 + A62 + A63 + A64 + A65 - 1.0).abs() < 1e-13);
        assert!((A71 + A73 + A74 + A75 + A76 - 1.0).abs() < 1e-15);
        assert!((E1 + E3 + E4 + E5 + E6 + E7).abs() < 1e-15);
        assert!((D1 + D3 + D4 + D5 + D6 + D7).abs() < 1e-12);
    }

    #[test]
    fn fifth_order_on_exponential() {
        let lambda = Complex64::new(-0.7, 2.0);
        let tab = Dopri5 { rtol: 1e-9, atol: 1e-12 };
        let mut rhs = lin(lambda);
        let y0 = vec![Complex64::new(1.0, 0.0)];
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let k1 = rhs(&y0).unwrap().0;
                let tr = tab.attempt(&mut rhs, &y0, &k1, h).unwrap();
                (tr.y1[0] - (lambda * h).exp()).norm()
            })
            .collect();
        // Local error is O(h^6).
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 6.0).abs() < 0.3, "observed order {order}");
    }

    #[test]
    fn dense_output_matches_endpoints_and_interior() {
        let lambda = Complex64::new(-1.0, 0.5);
        let tab = Dopri5 { rtol: 1e-9, atol: 1e-12 };
        let mut rhs = lin(lambda);
        let y0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)];
        let k1 = rhs(&y0).unwrap().0;
        let h = 0.05;
        let tr = tab.attempt(&mut rhs, &y0, &k1, h).unwrap();
        let d = tab.dense(1.0, h, &y0, &tr);
        assert_eq!(d.eval(1.0), y0);
        assert!((d.eval(1.0 + h)[1] - tr.y1[1]).norm() < 1e-15);
        for th in [0.25, 0.5, 0.8] {
            let y = d.eval(1.0 + th * h);
            let exact = y0[1] * (lambda * th * h).exp();
            assert!((y[1] - exact).norm() < 1e-9);
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let lambda = Complex64::new(0.3, -1.0);
        let mut rhs = lin(lambda);
        let y0 = vec![Complex64::new(1.0, 0.0)];
        let mut run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = y0.clone();
            for _ in 0..n {
                y = rk4_step(&mut rhs, &y, h).unwrap();
            }
            (y[0] - lambda.exp()).norm()
        };
        let e1 = run(20);
        let e2 = run(40);
        assert!(((e1 / e2).log2() - 4.0).abs() < 0.2);
    }
}
