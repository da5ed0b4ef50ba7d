use std::sync::Arc;

use bipgps_core::estimators::*;
use bipgps_core::graph::single_double_graph;
use bipgps_core::rng;
use bipgps_core::{
    draw_assignment, linear_exposure, Assignment, AssignmentDesign, BipartiteGraph, Bucketing,
    Error, GpsTable,
};
use proptest::prelude::*;

fn half() -> AssignmentDesign {
    AssignmentDesign::Bernoulli { p: 0.5 }
}

/// Exact population of the two-type example: per 8 units, 2 S at E=0,
/// 2 S at E=1, 1 D at 0, 2 D at 1/2, 1 D at 1; S never responds, D has Y = E.
fn population() -> Dataset {
    let g = single_double_graph(4, 4);
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let e = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.5, 0.5, 1.0];
    let y = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0];
    Dataset::new(&g, gps, y, e).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn population_naive_estimators() {
    let d = population();
    assert!(close(naive_mean(&d, 1.0).unwrap(), 1.0 / 3.0, 1e-12));
    assert_eq!(naive_mean(&d, 0.0).unwrap(), 0.0);
    assert!(close(naive_ols(&d).unwrap(), 1.0 / 3.0, 1e-12));
    assert!(matches!(
        naive_mean(&d, 0.3),
        Err(Error::NoObservations { .. })
    ));
}

#[test]
fn population_ht_and_weighted_regression() {
    let d = population();
    let one = ht_estimate(&d, 1.0).unwrap();
    assert!(close(one.value, 0.5, 1e-12));
    assert!(one.flags.is_empty());
    assert_eq!(ht_estimate(&d, 0.0).unwrap().value, 0.0);

    let reg = ht_weighted_regression(&d, &[0.0, 1.0]).unwrap();
    assert!(close(reg.beta[1], 0.5, 1e-12));
    assert!(close(reg.beta[0], 0.0, 1e-12));
}

#[test]
fn population_cell_table_and_imputation() {
    let d = population();
    let s = beta_cell_means(&d, &Bucketing::atoms(), &Bucketing::atoms()).unwrap();
    for (e, r, want) in [
        (0.5, 0.5, 0.5),
        (1.0, 0.25, 1.0),
        (0.0, 0.5, 0.0),
        (1.0, 0.5, 0.0),
        (0.0, 0.25, 0.0),
    ] {
        assert_eq!(s.eval(e, r), Some(want), "cell ({e}, {r})");
    }
    assert_eq!(s.eval(0.5, 0.25), None);

    let curve = dose_response(&s, d.gps(), d.units(), &[0.0, 1.0]).unwrap();
    assert_eq!(curve.mu, vec![0.0, 0.5]);
    assert_eq!(ate(&curve).unwrap(), 0.5);

    // S units have no mass at 1/2, so the cell (1/2, 0) is never observed.
    match dose_response(&s, d.gps(), d.units(), &[0.0, 0.5, 1.0]) {
        Err(Error::MissingCells { holes }) => assert_eq!(holes, vec![(0.5, 0.0)]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn population_stratified_by_variance() {
    let d = population();
    let labels = strata_labels(d.gps(), d.units(), &StrataSpec::default()).unwrap();
    assert_eq!(labels.iter().max(), Some(&1));
    assert_eq!(labels[0], labels[3]);
    assert_ne!(labels[0], labels[4]);
    assert!(close(
        stratified_estimate(&d, &labels, 1.0).unwrap(),
        0.5,
        1e-12
    ));

    // Means are all p = 1/2: one stratum, which reduces to the naive mean.
    let spec = StrataSpec {
        moment: Moment::Mean,
        n_strata: 10,
    };
    let single = strata_labels(d.gps(), d.units(), &spec).unwrap();
    assert!(single.iter().all(|&s| s == 0));
    assert_eq!(
        stratified_estimate(&d, &single, 1.0).unwrap(),
        naive_mean(&d, 1.0).unwrap()
    );
    assert!(matches!(
        stratified_estimate(&d, &labels, 0.5),
        Err(Error::EmptyStrata { .. })
    ));
}

#[test]
fn pipeline_effects_on_population() {
    let d = population();
    let want = [
        (Estimator::NaiveMean, 1.0 / 3.0),
        (Estimator::NaiveOls, 1.0 / 3.0),
        (Estimator::HorvitzThompson, 0.5),
        (Estimator::HtRegression, 0.5),
        (Estimator::CellMeans, 0.5),
        (
            Estimator::Stratified {
                moment: Moment::Variance,
                n_strata: 10,
            },
            0.5,
        ),
    ];
    for (est, value) in want {
        let got = est.ate(&d, &d).unwrap().value;
        assert!(close(got, value, 1e-12), "{}: {got}", est.name());
    }
}

/// Constant outcomes give a flat curve for every estimator.
#[test]
fn constant_outcomes() {
    let d = population();
    let c = d.with_outcomes(vec![2.5; 8]).unwrap();
    assert_eq!(naive_mean(&c, 0.5).unwrap(), 2.5);
    assert!(close(naive_ols(&c).unwrap(), 0.0, 1e-12));
    let reg = ht_weighted_regression(&c, &[0.0, 1.0]).unwrap();
    assert!(reg.beta.iter().all(|b| close(*b, 2.5, 1e-12)));
    let z = d.with_outcomes(vec![0.0; 8]).unwrap();
    assert_eq!(ht_estimate(&z, 1.0).unwrap().value, 0.0);
    assert_eq!(naive_ols(&z).unwrap(), 0.0);
    for est in [Estimator::CellMeans, Estimator::krr_default()] {
        let curve = est.curve(&c, &c, &[0.0, 1.0]).unwrap();
        assert!(
            curve.mu.iter().all(|m| close(*m, 2.5, 1e-9)),
            "{}",
            est.name()
        );
    }
}

/// Six outcome units over four diversion units with unequal weights.
fn hand_graph() -> BipartiteGraph {
    BipartiteGraph::from_pairs(
        4,
        vec![
            vec![(0, 1.0)],
            vec![(0, 0.5), (1, 0.5)],
            vec![(1, 0.3), (2, 0.7)],
            vec![(2, 0.25), (3, 0.75)],
            vec![(0, 0.2), (1, 0.3), (3, 0.5)],
            vec![(3, 1.0)],
        ],
    )
    .unwrap()
}

/// Exhaustive expectation over all 2^M assignments equals the true mean.
#[test]
fn ht_is_exactly_unbiased_by_enumeration() {
    let g = hand_graph();
    let p = 0.3;
    let design = AssignmentDesign::Bernoulli { p };
    let gps = Arc::new(GpsTable::exact(&g, &design, 20).unwrap());
    let a = [0.4, -1.0, 2.0, 0.0, 1.5, 3.0];
    let b = [1.0, 2.0, -0.5, 4.0, 0.3, 1.0];
    for level in [0.0, 1.0] {
        let truth: f64 = a.iter().zip(&b).map(|(a, b)| a + b * level).sum::<f64>() / 6.0;
        let mut expectation = 0.0;
        for mask in 0u32..16 {
            let bits: Vec<u8> = (0..4).map(|j| (mask >> j & 1) as u8).collect();
            let prob: f64 = bits
                .iter()
                .map(|&z| if z == 1 { p } else { 1.0 - p })
                .product();
            let z = Assignment::from_bits(&bits).unwrap();
            let e = linear_exposure(&g, &z).unwrap().e;
            let y: Vec<f64> = (0..6).map(|i| a[i] + b[i] * e[i]).collect();
            let d = Dataset::new(&g, Arc::clone(&gps), y, e).unwrap();
            expectation += prob * ht_estimate(&d, level).unwrap().value;
        }
        assert!(
            close(expectation, truth, 1e-12),
            "level {level}: {expectation} vs {truth}"
        );
    }
}

/// HT regression equals HT up to the normalisation Σ D/R versus N.
#[test]
fn ht_regression_identity() {
    let g = hand_graph();
    let design = AssignmentDesign::Bernoulli { p: 0.5 };
    let gps = Arc::new(GpsTable::exact(&g, &design, 20).unwrap());
    let mut r = rng::from_seed(11);
    for _ in 0..20 {
        let z = draw_assignment(&design, 4, &mut r).unwrap();
        let e = linear_exposure(&g, &z).unwrap().e;
        let y: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(i, x)| i as f64 + 2.0 * x)
            .collect();
        let d = Dataset::new(&g, Arc::clone(&gps), y, e).unwrap();
        let Ok(reg) = ht_weighted_regression(&d, &[0.0, 1.0]) else {
            continue;
        };
        for (k, &level) in [0.0, 1.0].iter().enumerate() {
            let norm: f64 = (0..d.len())
                .filter(|&i| d.matches(i, level))
                .map(|i| 1.0 / d.score()[i])
                .sum();
            let ht = ht_estimate(&d, level).unwrap().value;
            assert!(close(reg.beta[k] * norm / d.len() as f64, ht, 1e-12));
        }
    }
}

/// Over fresh assignments HT centres on 1/2 and the naive mean on 1/3.
#[test]
fn ht_unbiased_naive_biased_over_assignments() {
    let g = single_double_graph(200, 200);
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let mut r = rng::from_seed(2024);
    let (mut ht, mut naive) = (Vec::new(), Vec::new());
    for _ in 0..5000 {
        let z = draw_assignment(&half(), g.m_diversion(), &mut r).unwrap();
        let e = linear_exposure(&g, &z).unwrap().e;
        let y: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(i, x)| if i < 200 { 0.0 } else { *x })
            .collect();
        let d = Dataset::new(&g, Arc::clone(&gps), y, e).unwrap();
        ht.push(ht_estimate(&d, 1.0).unwrap().value);
        naive.push(naive_mean(&d, 1.0).unwrap());
    }
    let check = |v: &[f64], target: f64| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            (m - target).abs() <= 3.0 * sd / n.sqrt(),
            "mean {m} vs {target}"
        );
    };
    check(&ht, 0.5);
    check(&naive, 1.0 / 3.0);
}

fn random_dataset(seed: u64, n: usize) -> (BipartiteGraph, Dataset) {
    let spec = bipgps_core::GraphSpec::uniform_degree(n, 40, 1, 6, seed);
    let mut r = rng::from_seed(seed);
    let g = bipgps_core::graph::synth_graph(&spec, &mut r).unwrap();
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let z = draw_assignment(&half(), 40, &mut r).unwrap();
    let e = linear_exposure(&g, &z).unwrap().e;
    let y = vec![0.0; n];
    let d = Dataset::new(&g, gps, y, e).unwrap();
    (g, d)
}

#[test]
fn poly_recovers_noiseless_surface() {
    let (_, d) = random_dataset(5, 400);
    let truth = [0.3, -1.0, 2.0, 0.7, -0.4, 1.1];
    let y: Vec<f64> = d
        .e()
        .iter()
        .zip(d.score())
        .map(|(&e, &r)| {
            truth[0]
                + truth[1] * e
                + truth[2] * e * e
                + truth[3] * r
                + truth[4] * r * r
                + truth[5] * e * r
        })
        .collect();
    let d = d.with_outcomes(y).unwrap();
    match beta_poly_fit(&d).unwrap() {
        BetaSurface::Poly { coefficients } => {
            for (c, t) in coefficients.iter().zip(truth) {
                assert!(close(*c, t, 1e-8), "{c} vs {t}");
            }
        }
        other => panic!("unexpected surface {}", other.kind()),
    }
    let c = d.with_outcomes(vec![4.0; d.len()]).unwrap();
    match beta_poly_fit(&c).unwrap() {
        BetaSurface::Poly { coefficients } => {
            assert!(close(coefficients[0], 4.0, 1e-9));
            assert!(coefficients[1..].iter().all(|b| b.abs() < 1e-9));
        }
        _ => unreachable!(),
    }
}

#[test]
fn poly_rank_deficiency_names_columns() {
    // Single-neighbor units only: R is constant, E and E^2 coincide.
    let g = single_double_graph(30, 0);
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let e: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
    let d = Dataset::new(&g, gps, vec![1.0; 30], e).unwrap();
    match beta_poly_fit(&d) {
        Err(Error::RankDeficient { columns }) => {
            assert!(columns.iter().any(|c| c == "r"), "{columns:?}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn naive_ols_needs_exposure_variation() {
    let g = single_double_graph(5, 0);
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let d = Dataset::new(&g, gps, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0; 5]).unwrap();
    assert!(naive_ols(&d).is_err());
}

#[test]
fn isolated_units_are_excluded() {
    let g = BipartiteGraph::from_pairs(1, vec![vec![(0, 1.0)], vec![]]).unwrap();
    let gps = Arc::new(GpsTable::exact(&g, &half(), 20).unwrap());
    let d = Dataset::new(&g, gps, vec![1.0, 7.0], vec![1.0, 0.0]).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d.units(), &[0]);
}

#[test]
fn grid_and_endpoint_validation() {
    let d = population();
    let s = beta_cell_means(&d, &Bucketing::atoms(), &Bucketing::atoms()).unwrap();
    assert!(dose_response(&s, d.gps(), d.units(), &[1.0, 0.0]).is_err());
    assert!(dose_response(&s, d.gps(), d.units(), &[0.0, 1.5]).is_err());
    let curve = DoseResponseCurve {
        grid: vec![0.0, 0.5],
        mu: vec![0.0, 1.0],
        estimator: "x".into(),
    };
    assert!(ate(&curve).is_err());
    let line = smooth_linear(&DoseResponseCurve {
        grid: vec![0.0, 0.5, 1.0],
        mu: vec![0.0, 0.4, 0.5],
        estimator: "x".into(),
    })
    .unwrap();
    assert!(close(line.mu[2] - line.mu[0], 0.5, 1e-12));
}

#[test]
fn results_table_round_trip() {
    let rows = vec![ResultRow {
        estimator: "ht".into(),
        quantity: "ate".into(),
        value: 0.5,
        warnings: String::new(),
        ..Default::default()
    }];
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(
        "estimator,quantity,level,value,lower,upper,method,b,coverage_level,seed,warnings\n"
    ));
    assert!(text.contains("ht,ate,,0.5,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_ignore_unit_order(seed in 0u64..1000, shift in 1usize..97) {
        let (_, d) = random_dataset(seed, 120);
        let y: Vec<f64> = d.e().iter().zip(d.degree()).map(|(e, m)| m * e + (m * 7.0).sin()).collect();
        let d = d.with_outcomes(y).unwrap();
        let n = d.len();
        let perm: Vec<usize> = (0..n).map(|k| (k * shift + 3) % n).collect();
        prop_assume!({
            let mut s = perm.clone();
            s.sort_unstable();
            s.dedup();
            s.len() == n
        });
        let p = d.resample(&perm);
        for est in [
            Estimator::NaiveOls,
            Estimator::HorvitzThompson,
            Estimator::Poly,
            Estimator::CorrectSpec,
            Estimator::krr_default(),
        ] {
            let a = est.ate(&d, &d);
            let b = est.ate(&p, &p);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a.value - b.value).abs() < 1e-8, "{}", est.name()),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{}: {a:?} vs {b:?}", est.name()),
            }
        }
    }
}
