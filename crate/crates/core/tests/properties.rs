use num_complex::Complex64;
use proptest::prelude::*;

use conefield::cone::{ConeMode, ConeSample};
use conefield::export::fmt_f64;
use conefield::flow::{flow_point, prolonged_point, IntegratorConfig};
use conefield::linalg::{norm, Matrix};
use conefield::{Grid, SystemSpec};

fn cone(d: [f64; 2], s: [f64; 2]) -> ConeSample {
    ConeSample::new(
        vec![0.0, 0.0],
        ConeMode::Tabulated,
        d.to_vec(),
        vec![s.iter().map(|v| Complex64::new(*v, 0.0)).collect()],
    )
}

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    [-3.0..3.0f64, -3.0..3.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_is_scale_free(d in vec2(), s in vec2(), u in vec2(), c in 1e-3..1e3f64) {
        prop_assume!(norm(&u) > 1e-6);
        let k = cone(d, s);
        let scaled = [c * u[0], c * u[1]];
        prop_assert!((k.margin(&u) - k.margin(&scaled)).abs() <= 1e-12 * (1.0 + norm(&d) + norm(&s)));
    }

    #[test]
    fn cone_is_convex(d in vec2(), s in vec2(), u in vec2(), v in vec2()) {
        let k = cone(d, s);
        prop_assume!(k.margin(&u) >= 0.0 && k.margin(&v) >= 0.0);
        let sum = [u[0] + v[0], u[1] + v[1]];
        prop_assume!(norm(&sum) > 1e-9);
        let unit = (norm(&d) + norm(&s)) * 1e-12 * (norm(&u) + norm(&v)) / norm(&sum);
        prop_assert!(k.margin(&sum) >= -unit);
    }

    #[test]
    fn boundary_rays_have_zero_margin(d in vec2(), s in vec2()) {
        let k = cone(d, s);
        if let Ok((lo, hi)) = k.boundary_angles() {
            for a in [lo, hi] {
                prop_assert!(k.margin(&[a.cos(), a.sin()]).abs() <= 1e-9 * (norm(&d) + norm(&s)));
            }
        }
    }

    #[test]
    fn linear_flow_is_exponential(x in vec2(), t in 0.0..3.0f64) {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        let y = flow_point(&spec, &x, t, &IntegratorConfig::default()).unwrap();
        prop_assert!((y[0] - x[0] * (-t).exp()).abs() <= 1e-8 * (1.0 + x[0].abs()));
        prop_assert!((y[1] - x[1] * (-2.0 * t).exp()).abs() <= 1e-8 * (1.0 + x[1].abs()));
    }

    #[test]
    fn flow_composes(x in vec2(), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let spec = SystemSpec::builtin("vanderpol").unwrap();
        let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-12);
        let a = flow_point(&spec, &flow_point(&spec, &x, s, &cfg).unwrap(), t, &cfg).unwrap();
        let b = flow_point(&spec, &x, s + t, &cfg).unwrap();
        prop_assert!(norm(&[a[0] - b[0], a[1] - b[1]]) <= 1e-8 * (1.0 + norm(&b)));
    }

    #[test]
    fn prolonged_frame_is_linear(x in vec2(), u in vec2(), v in vec2(), t in 0.1..1.0f64) {
        let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
        let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-12);
        let (_, m) = prolonged_point(&spec, &x, &Matrix::identity(2), t, &cfg).unwrap();
        let (_, mu) = prolonged_point(&spec, &x, &Matrix::from_row_slice(2, 1, &u), t, &cfg).unwrap();
        let (_, mv) = prolonged_point(&spec, &x, &Matrix::from_row_slice(2, 1, &v), t, &cfg).unwrap();
        let w = [u[0] + v[0], u[1] + v[1]];
        let direct = m.mul_vec(&w);
        let scale = 1e-8 * (1.0 + norm(&direct));
        let (cu, cv) = (mu.column(0), mv.column(0));
        for (i, d) in direct.iter().enumerate() {
            prop_assert!((cu[i] + cv[i] - d).abs() <= scale);
        }
    }

    #[test]
    fn csv_numbers_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn grid_points_cover_the_box(
        lo in vec2(),
        span in [0.0..2.0f64, 0.0..2.0f64],
        res in 1usize..9,
        r in proptest::option::of(0.0..1.0f64),
    ) {
        let hi = [lo[0] + span[0], lo[1] + span[1]];
        let grid = Grid::new(lo.to_vec(), hi.to_vec(), res).unwrap().with_exclusion(r);
        let points = grid.points();
        prop_assert!(points.len() <= res * res);
        if r.is_none() {
            prop_assert_eq!(points.len(), res * res);
        }
        for p in &points {
            for i in 0..2 {
                prop_assert!(p[i] >= lo[i] - 1e-12 && p[i] <= hi[i] + 1e-12);
            }
            if let Some(r) = r {
                prop_assert!(norm(p) >= r);
            }
        }
    }
}
