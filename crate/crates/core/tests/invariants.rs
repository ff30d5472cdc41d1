use std::f64::consts::TAU;

use hele_shaw_core::dynamics::{evolve, residual_pg, velocity_auto, EvolveOptions, FlowSign, Snapshots};
use hele_shaw_core::moments::{moments_exact, moments_quadrature, Resolution};
use hele_shaw_core::poisson::{
    default_contour_radius, inverse_speed_grid, poisson_contour, poisson_fourier, recommended_grid,
};
use hele_shaw_core::series::CoefficientSeries;
use hele_shaw_core::Complex64;
use proptest::prelude::*;

/// Maps `ξ + Σ a_n ξ^n` with `Σ n|a_n| ≤ 0.8`, so `|f'| ≥ 0.2` on the disk.
fn small_poly() -> impl Strategy<Value = CoefficientSeries> {
    prop::collection::vec((0.05f64..1.0, 0.0f64..TAU), 1..6).prop_map(|raw| {
        let weight: f64 = raw.iter().enumerate().map(|(i, (m, _))| (i + 2) as f64 * m).sum();
        let mut c = vec![Complex64::new(1.0, 0.0)];
        c.extend(raw.iter().map(|&(m, a)| Complex64::from_polar(0.8 * m / weight, a)));
        CoefficientSeries::new(c).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn completion_has_the_boundary_data_as_real_part(f in small_poly()) {
        let n = recommended_grid(&f);
        let g = inverse_speed_grid(&f, 1.0, n).unwrap();
        let p = poisson_fourier(&g).unwrap();
        for j in (0..n).step_by(n / 16) {
            let z = Complex64::from_polar(1.0, TAU * j as f64 / n as f64);
            prop_assert!((p.eval(z).re - g.samples()[j].re).abs() < 1e-10);
        }
        let q = poisson_contour(&f, default_contour_radius(&f), n).unwrap();
        prop_assert!(p.max_diff(&q) < 1e-10);
    }

    #[test]
    fn velocity_keeps_degree_and_solves_boundary_equation(f in small_poly(), suction in any::<bool>()) {
        let sign = if suction { FlowSign::Suction } else { FlowSign::Injection };
        let v = velocity_auto(&f, sign).unwrap();
        prop_assert!(v.rate.degree() <= f.degree());
        prop_assert!(v.residual <= 1e-8 * f.norm_m(1.0));
        prop_assert!(residual_pg(&f, &v.rate, sign) < 1e-9);
    }

    #[test]
    fn moment_routes_agree(f in small_poly(), seed in any::<u64>()) {
        let e = moments_exact(&f, 4);
        let q = moments_quadrature(&f, 4, Resolution::default(), seed).unwrap();
        for k in 0..=4 {
            prop_assert!((e.get(k) - q.get(k)).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn short_injection_conserves_moments_and_gauge(f in small_poly()) {
        let o = EvolveOptions { snapshots: Snapshots::Endpoints, ..EvolveOptions::default() };
        let tr = evolve(&f, FlowSign::Injection, 0.5, &o).unwrap();
        let (m_start, m_end) = (moments_exact(&f, 3), moments_exact(tr.final_state(), 3));
        prop_assert!((m_end.m0() - m_start.m0() - 1.0).abs() < 1e-7);
        for k in 1..=3 {
            prop_assert!((m_end.get(k) - m_start.get(k)).norm() < 1e-7);
        }
        let a1 = tr.final_state().coeff(1);
        prop_assert!(a1.re > 0.0 && a1.im.abs() < 1e-12);
        prop_assert!(tr.final_state().degree() <= f.degree());
    }
}
