use bipgps_core::numerics::{krr_fit, ols, stats, DesignMatrix, KrrParams, OlsSolver};
use bipgps_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn design(cols: Vec<Vec<f64>>) -> DesignMatrix {
    DesignMatrix::from_columns(
        cols.into_iter()
            .enumerate()
            .map(|(k, c)| (format!("x{k}"), c))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn residuals_are_orthogonal_and_projection_idempotent(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 8..40)
    ) {
        let n = rows.len();
        let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let x = design(vec![vec![1.0; n], x1, x2]);
        let solver = match OlsSolver::new(&x) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let yv = DVector::from_vec(y);
        let u = solver.residuals(&yv);
        let xtu = x.matrix().tr_mul(&u);
        prop_assert!(xtu.amax() < 1e-8 * (1.0 + yv.amax()) * n as f64);
        let fitted = &yv - &u;
        prop_assert!(solver.residuals(&fitted).amax() < 1e-9 * (1.0 + yv.amax()));
    }
}

#[test]
fn simple_example_regression_slope() {
    // Per 8 units: S at E = 0,0,1,1 with Y = 0; D at E = 0,½,½,1 with Y = E.
    let e = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.5, 0.5, 1.0];
    let y = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0];
    let fit = ols(&design(vec![vec![1.0; 8], e]), &y).unwrap();
    assert!((fit.coefficients[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn collinear_design_is_reported() {
    let x = design(vec![
        vec![1.0; 5],
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![2.0, 4.0, 6.0, 8.0, 10.0],
    ]);
    match ols(&x, &[1.0; 5]) {
        Err(Error::RankDeficient { columns }) => assert!(!columns.is_empty()),
        other => panic!("expected rank deficiency, got {other:?}"),
    }
    let wide = DesignMatrix::new(
        DMatrix::from_element(2, 3, 1.0),
        vec!["a".into(), "b".into(), "c".into()],
    );
    assert!(wide.is_err() || ols(&wide.unwrap(), &[1.0, 2.0]).is_err());
}

#[test]
fn krr_recovers_smooth_surface() {
    let f = |e: f64, r: f64| 1.0 + 2.0 * e - e * e + 0.5 * r;
    let grid = |k: usize, n: usize| k as f64 / (n - 1) as f64;
    let mut inputs = Vec::new();
    let mut y = Vec::new();
    for a in 0..25 {
        for b in 0..20 {
            let (e, r) = (grid(a, 25), grid(b, 20));
            inputs.push((e, r));
            y.push(f(e, r));
        }
    }
    let fit = krr_fit(&inputs, &y, &KrrParams::default()).unwrap();
    let mut err = Vec::new();
    for a in 0..12 {
        for b in 0..9 {
            let (e, r) = ((a as f64 + 0.5) / 12.0, (b as f64 + 0.5) / 9.0);
            err.push((fit.predict((e, r)) - f(e, r)).powi(2));
        }
    }
    let rmse = stats::mean(&err).sqrt();
    assert!(rmse < 0.05, "held-out rmse {rmse}");
}

#[test]
fn krr_rejects_bad_input() {
    assert!(krr_fit(&[(0.0, 0.0)], &[1.0, 2.0], &KrrParams::default()).is_err());
    assert!(krr_fit(&[], &[], &KrrParams::default()).is_err());
}
