//! Cross-module properties.

use std::path::Path;

use disorder_core::dp::{solve_dp, DpParams, DpSettings};
use disorder_core::experiments::ExperimentConfig;
use disorder_core::filter::{filter_exact, posterior_mean_check, shiryaev_filter};
use disorder_core::model::{constant_model, ModelSpec};
use disorder_core::risk::{
    estimate_risk, estimate_thresholds, path_losses, robustness_risks, Statistic, StrategySpec,
};
use disorder_core::shiryaev::{solve, ClassicalParams};
use disorder_core::sim::{simulate_scenario, TimeGrid};

fn reference() -> ModelSpec {
    constant_model(&[(0.5, 0.5), (2.0, 0.5)], 0.1, 0.2, 1.0, 1.0).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        if p.file_name().unwrap().to_string_lossy().ends_with("_model.json") {
            ModelSpec::from_json_str(&text).unwrap();
        } else {
            ExperimentConfig::from_json_str(&text, "config").unwrap().validate().unwrap();
        }
        n += 1;
    }
    assert!(n >= 12);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let m = reference();
    let grid = TimeGrid::new(0.01, 20.0).unwrap();
    let thresholds = [0.2, 0.3, 0.5];
    let run = || {
        (
            estimate_thresholds(&m, Statistic::TruePosterior, &thresholds, &grid, 3000, 9).unwrap(),
            posterior_mean_check(&m, 3000, &grid, 9, &[1.0, 5.0]).unwrap(),
        )
    };
    let one = in_pool(1, run);
    let three = in_pool(3, run);
    assert_eq!(one.0, three.0);
    assert_eq!(one.1, three.1);
}

#[test]
fn multi_threshold_pass_matches_single_rules() {
    let m = reference();
    let grid = TimeGrid::new(0.01, 20.0).unwrap();
    let thresholds = [0.15, 0.3, 0.45];
    let joint = estimate_thresholds(&m, Statistic::TruePosterior, &thresholds, &grid, 2000, 4).unwrap();
    for (a, est) in thresholds.iter().zip(&joint) {
        let single = estimate_risk(&m, &StrategySpec::ThresholdOnTrue { a: *a }, &grid, 2000, 4).unwrap();
        assert_eq!(single.mean, est.mean);
        assert_eq!(single.truncated, est.truncated);
    }
}

#[test]
fn path_losses_agree_with_estimate() {
    let m = reference();
    let grid = TimeGrid::new(0.01, 20.0).unwrap();
    let s = StrategySpec::ThresholdOnTrue { a: 0.3 };
    let losses = path_losses(&m, &s, &grid, 1500, 2).unwrap();
    let est = estimate_risk(&m, &s, &grid, 1500, 2).unwrap();
    let mean = losses.iter().map(|l| l.total()).sum::<f64>() / losses.len() as f64;
    assert!((mean - est.mean).abs() < 1e-12);
    assert!(losses.iter().all(|l| l.false_alarm == (l.tau < l.theta)));
}

#[test]
fn fixed_time_zero_risk_is_exact() {
    // Stopping at once costs a false alarm exactly when the disorder is later.
    let m = reference();
    let grid = TimeGrid::new(0.01, 1.0).unwrap();
    let est = estimate_risk(&m, &StrategySpec::FixedTime { t: 0.0 }, &grid, 4000, 1).unwrap();
    let fa = est.false_alarm_rate;
    assert!((fa - 0.9).abs() < 3.0 * (0.09f64 / 4000.0).sqrt());
    assert_eq!(est.mean_delay, 0.0);
}

#[test]
fn one_atom_exact_filter_is_the_shiryaev_statistic() {
    let m = constant_model(&[(-1.5, 1.0)], 0.25, 0.3, 0.8, 1.0).unwrap();
    let grid = TimeGrid::new(0.005, 10.0).unwrap();
    for p in 0..5 {
        let path = simulate_scenario(&m, &grid, 21, p);
        let exact = filter_exact(&m, &path).unwrap();
        let g = shiryaev_filter(-1.5, 0.3, 0.8, 0.25, &path).unwrap();
        let worst = exact.pi_tilde.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "path {p}: {worst}");
    }
}

#[test]
fn robustness_quantities_are_consistent() {
    let m = reference();
    let grid = TimeGrid::new(0.01, 40.0).unwrap();
    let r = robustness_risks(&m, 0.1, 0.3, 2000, &grid, 5, (0.01, 0.61)).unwrap();
    assert_eq!((r.l, r.r), (0.5, 2.0));
    assert!(r.a_l < r.a_r);
    assert!((r.correction - 0.1 / 0.02 * 0.9).abs() < 1e-12);
    assert!(r.v_delta_r <= r.v_delta_l);
    assert_eq!(r.rows.len(), 6);
    assert!(r.v_mu_upper.mean <= r.v_gamma.mean + 3.0 * r.v_gamma.std_error);
}

#[test]
fn coarse_value_iteration_tracks_the_solver() {
    let params = DpParams::new(vec![1.0], vec![1.0], 1.0, 0.2, 1.0).unwrap();
    let dp = solve_dp(&params, &DpSettings::new(0.01, 0.01)).unwrap();
    let sol = solve(&ClassicalParams::new(1.0, 1.0, 0.2, 1.0).unwrap()).unwrap();
    let err = dp
        .grid
        .coords()
        .into_iter()
        .zip(&dp.value)
        .map(|(ij, v)| (v - sol.value_at(dp.grid.point(ij)[0])).abs())
        .fold(0.0, f64::max);
    assert!(err < 2e-2, "{err}");
}
