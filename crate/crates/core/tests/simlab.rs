mod common;

use bipgps_core::design::ExposureProfile;
use bipgps_core::estimators::Estimator;
use bipgps_core::inference::BootstrapOptions;
use bipgps_core::rng::substream;
use bipgps_core::simlab::*;
use bipgps_core::{
    draw_assignment, linear_exposure, BipartiteGraph, Error, GpsSettings, GraphSpec,
};

use common::*;

fn study(
    graph: GraphSpec,
    effect: EffectForm,
    s_eps: f64,
    s_gamma: f64,
    methods: Vec<MethodSpec>,
    n_sims: usize,
) -> StudySpec {
    StudySpec {
        dgp: dgp(graph, effect, s_eps, s_gamma),
        methods,
        n_sims,
        bootstrap: BootstrapOptions::with_b(50),
        gps: GpsSettings::default(),
    }
}

fn method(estimator: Estimator, intervals: Vec<IntervalMethod>) -> MethodSpec {
    MethodSpec {
        estimator,
        intervals,
    }
}

fn small() -> GraphSpec {
    GraphSpec::uniform_degree(200, 20, 1, 4, 0)
}

#[test]
fn noiseless_homogeneous_outcomes_are_linear() {
    let spec = dgp(small(), EffectForm::Homogeneous, 0.0, 0.0);
    let g = realize(&spec.graph, 1);
    let z = draw_assignment(&spec.design, 20, &mut substream(2, &[0])).unwrap();
    let ex = linear_exposure(&g, &z).unwrap();
    let y = generate_outcomes(&spec, &g, &ex, &mut substream(3, &[0])).unwrap();
    let c = true_ate(&g);
    for (yi, ei) in y.iter().zip(&ex.e) {
        assert!((yi - c * ei).abs() < 1e-12);
    }
    let het = generate_outcomes(
        &DgpSpec {
            effect: EffectForm::Heterogeneous,
            ..spec
        },
        &g,
        &ex,
        &mut substream(3, &[0]),
    )
    .unwrap();
    for (i, (h, e)) in het.iter().zip(&ex.e).enumerate() {
        assert!((h - g.degree(i) as f64 * e).abs() < 1e-12);
    }
}

#[test]
fn outcome_noise_variance() {
    let spec = dgp(
        GraphSpec::uniform_degree(1000, 50, 1, 5, 0),
        EffectForm::Homogeneous,
        0.5,
        0.0,
    );
    let g = realize(&spec.graph, 4);
    let ex = ExposureProfile { e: vec![0.0; 1000] };
    let mut resid = Vec::with_capacity(100_000);
    let mut rng = substream(5, &[0]);
    for _ in 0..100 {
        resid.extend(generate_outcomes(&spec, &g, &ex, &mut rng).unwrap());
    }
    assert!((var(&resid) - 0.5).abs() < 0.01, "{}", var(&resid));
}

#[test]
fn shared_neighbor_correlation() {
    let g = BipartiteGraph::from_pairs(1, vec![vec![(0, 1.0)], vec![(0, 1.0)]]).unwrap();
    let spec = dgp(small(), EffectForm::Homogeneous, 0.5, 0.5);
    let ex = ExposureProfile { e: vec![0.0; 2] };
    let mut rng = substream(6, &[0]);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..100_000 {
        let y = generate_outcomes(&spec, &g, &ex, &mut rng).unwrap();
        a.push(y[0]);
        b.push(y[1]);
    }
    let r = bipgps_core::numerics::stats::pearson(&a, &b);
    assert!((r - 0.5).abs() < 0.01, "correlation {r}");
}

#[test]
fn dgp_rejects_negative_variance() {
    let mut spec = dgp(small(), EffectForm::Homogeneous, 0.5, 0.0);
    spec.sigma2_gamma = -0.1;
    assert!(spec.validate().is_err());
}

#[test]
fn noiseless_correct_specification_is_exact() {
    let s = study(
        small(),
        EffectForm::Heterogeneous,
        0.0,
        0.0,
        vec![method(Estimator::CorrectSpec, vec![])],
        1,
    );
    let res = run_study(&s, 7).unwrap();
    let row = res.row("correct-spec", "none").unwrap();
    assert_eq!(row.n_failed, 0);
    assert!(row.bias.unwrap().abs() < 1e-10);
    assert!(row.rmse.unwrap() < 1e-10);
}

#[test]
fn rmse_decomposes_into_bias_and_spread() {
    let s = study(
        small(),
        EffectForm::Homogeneous,
        0.5,
        0.0,
        vec![method(
            Estimator::NaiveOls,
            vec![IntervalMethod::OlsAsymptotic],
        )],
        30,
    );
    let res = run_study(&s, 8).unwrap();
    let row = res.row("naive-ols", "none").unwrap();
    let est = res.estimates("naive-ols");
    assert_eq!(est.len(), 30);
    let m = mean(&est);
    let spread = est.iter().map(|x| (x - m).powi(2)).sum::<f64>() / est.len() as f64;
    let (bias, rmse) = (row.bias.unwrap(), row.rmse.unwrap());
    assert!((rmse * rmse - bias * bias - spread).abs() < 1e-12);
    assert!(rmse >= bias.abs());
    let cov = res
        .row("naive-ols", "ols-asymptotic")
        .unwrap()
        .coverage
        .unwrap();
    assert!((0.0..=1.0).contains(&cov));
}

#[test]
fn studies_are_reproducible_and_stream_in_order() {
    let s = study(
        small(),
        EffectForm::Homogeneous,
        0.5,
        0.2,
        vec![
            method(Estimator::NaiveOls, vec![IntervalMethod::NaiveBootstrap]),
            method(Estimator::HorvitzThompson, vec![]),
        ],
        9,
    );
    let a = run_study(&s, 11).unwrap();
    let mut streamed = Vec::new();
    let b = run_study_streaming(&s, 11, |chunk| {
        streamed.extend_from_slice(chunk);
        Ok(())
    })
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(streamed, a.records);
    let one_thread = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c = one_thread.install(|| run_study(&s, 11).unwrap());
    assert_eq!(a, c);
    assert_ne!(a, run_study(&s, 12).unwrap());
}

#[test]
fn failures_are_counted_not_dropped() {
    // Parametric intervals need a linear estimator: HT cannot provide one.
    let s = study(
        small(),
        EffectForm::Homogeneous,
        0.5,
        0.5,
        vec![method(
            Estimator::HorvitzThompson,
            vec![IntervalMethod::Parametric {
                sigma_method: Default::default(),
            }],
        )],
        3,
    );
    let res = run_study(&s, 13).unwrap();
    let row = res.row("ht", "parametric-bootstrap").unwrap();
    assert_eq!(row.n_sims, 3);
    assert_eq!(row.n_failed, 3);
    assert_eq!(row.coverage, None);
    assert!(res.records.iter().any(|r| r.error.is_some()));
}

#[test]
fn redrawn_graphs_differ_per_simulation() {
    let mut s = study(
        small(),
        EffectForm::Heterogeneous,
        0.0,
        0.0,
        vec![method(Estimator::CorrectSpec, vec![])],
        4,
    );
    s.dgp.redraw_graph = true;
    let res = run_study(&s, 14).unwrap();
    let truths: Vec<f64> = res.records.iter().map(|r| r.truth).collect();
    assert!(truths.windows(2).any(|w| w[0] != w[1]));
    assert!(res.row("correct-spec", "none").unwrap().bias.unwrap().abs() < 1e-10);
}

#[test]
fn invalid_studies_are_rejected() {
    let s = study(
        small(),
        EffectForm::Homogeneous,
        0.5,
        0.0,
        vec![method(Estimator::NaiveOls, vec![])],
        0,
    );
    assert!(matches!(run_study(&s, 0), Err(Error::Validation(_))));
    let s = study(small(), EffectForm::Homogeneous, 0.5, 0.0, vec![], 1);
    assert!(run_study(&s, 0).is_err());
    let sweep = SweepSpec {
        study: study(
            small(),
            EffectForm::Homogeneous,
            0.5,
            0.5,
            vec![method(Estimator::NaiveOls, vec![])],
            1,
        ),
        shares: vec![0.0],
    };
    assert!(edges_cut_sweep(&sweep, 0).is_err());
}

#[test]
fn sweep_reports_every_share() {
    let base = study(
        GraphSpec::blocks(200, 20, 1, 2, 10, 0.0, 0),
        EffectForm::Homogeneous,
        0.5,
        0.5,
        vec![method(
            Estimator::NaiveOls,
            vec![
                IntervalMethod::NaiveBootstrap,
                IntervalMethod::BlockBootstrap,
            ],
        )],
        3,
    );
    let rows = edges_cut_sweep(
        &SweepSpec {
            study: base,
            shares: vec![0.0, 0.3],
        },
        15,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.share == 0.3).count(), 2);
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("share,estimator,interval,n_sims,n_failed,coverage,mean_width,bias"));
    assert_eq!(text.lines().count(), 5);
}
