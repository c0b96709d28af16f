//! Contract tests for estimator metrics, truth generation, and the
//! ensemble configuration surface.

use approx::assert_relative_eq;
use deltacu::epi::Stratum;
use deltacu::eval::{
    default_schedule, error_metrics, generate_truth, roc_auc, sensitivity_specificity,
    simulate_observations, EnsembleConfig, SchedulePoint, TruthFilters, TruthKind,
};
use deltacu::grid::TimeGrid;
use deltacu::rng::substream;
use deltacu::traj::{self, TrajectoryModel};
use deltacu::{epi, Error};

fn grid() -> TimeGrid {
    TimeGrid::new(1985.0, 2010.0, 6.0).unwrap()
}

#[test]
fn error_metrics_hand_oracle() {
    let m = error_metrics(&[0.1, 0.4, 0.5], &[0.2, 0.3, 0.4]).unwrap();
    assert_eq!(m.n, 3);
    assert_relative_eq!(m.bias, 1.0 / 30.0, max_relative = 1e-14);
    assert_relative_eq!(m.mse, 0.01, max_relative = 1e-14);
    // std = sqrt(0.01 - 1/900) = 2*sqrt(2)/30
    assert_relative_eq!(m.std, 2.0 * 2.0_f64.sqrt() / 30.0, max_relative = 1e-14);
}

#[test]
fn error_metrics_zero_error_and_rejects_bad_input() {
    let m = error_metrics(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
    assert_eq!(m.bias, 0.0);
    assert_eq!(m.mse, 0.0);
    assert_eq!(m.std, 0.0);
    assert!(matches!(error_metrics(&[], &[]), Err(Error::Config(_))));
    assert!(matches!(error_metrics(&[0.1], &[0.1, 0.2]), Err(Error::Config(_))));
}

#[test]
fn sensitivity_specificity_partition_rule() {
    // pos = truths > T (strict); flagged = estimates > t (strict).
    let est = [0.9, 0.1, 0.6, 0.4];
    let truth = [0.5, 0.5, 0.1, 0.1];
    let (sens, spec) = sensitivity_specificity(&est, &truth, 0.3, 0.5).unwrap();
    assert_eq!(sens, 0.5);
    assert_eq!(spec, 0.5);

    // Boundary values fall on the negative side of each strict comparison.
    let (sens, spec) = sensitivity_specificity(&[0.5, 0.5], &[1.0, 0.0], 0.5, 0.5).unwrap();
    assert_eq!(sens, 0.0);
    assert_eq!(spec, 1.0);
    let (_, spec) = sensitivity_specificity(&[0.0, 0.9], &[0.5, 0.9], 0.5, 0.2).unwrap();
    // truth == T counts as a negative
    assert_eq!(spec, 1.0);

    // Perfect classifier.
    let (sens, spec) = sensitivity_specificity(&[0.8, 0.1], &[0.6, 0.1], 0.3, 0.3).unwrap();
    assert_eq!(sens, 1.0);
    assert_eq!(spec, 1.0);
}

#[test]
fn sensitivity_specificity_undefined_cases() {
    // Single-class truths are an error, not a NaN.
    assert!(matches!(
        sensitivity_specificity(&[0.1, 0.2], &[0.9, 0.8], 0.5, 0.3),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        sensitivity_specificity(&[0.1, 0.2], &[0.1, 0.2], 0.5, 0.3),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        sensitivity_specificity(&[], &[], 0.5, 0.3),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        sensitivity_specificity(&[0.1], &[0.1, 0.2], 0.5, 0.3),
        Err(Error::Config(_))
    ));
}

#[test]
fn roc_auc_separation_oracles() {
    // Perfect separation.
    let (_, auc) = roc_auc(&[0.8, 0.7, 0.2, 0.1], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
    assert_eq!(auc, 1.0);
    // Perfectly reversed.
    let (_, auc) = roc_auc(&[0.2, 0.1, 0.8, 0.7], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
    assert_eq!(auc, 0.0);
    // Hand case: pairs (0.9,0.5) (0.9,0.1) (0.4,0.1) win, (0.4,0.5) loses -> 3/4.
    let (_, auc) = roc_auc(&[0.9, 0.4, 0.5, 0.1], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
    assert_relative_eq!(auc, 0.75, max_relative = 1e-14);
}

#[test]
fn roc_auc_ties_get_half_credit() {
    let (_, auc) = roc_auc(&[0.3, 0.3], &[1.0, 0.0], 0.5).unwrap();
    assert_eq!(auc, 0.5);
    // All estimates identical: chance-level regardless of class sizes.
    let (_, auc) = roc_auc(&[0.4; 6], &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0], 0.5).unwrap();
    assert_relative_eq!(auc, 0.5, max_relative = 1e-14);
}

#[test]
fn roc_curve_shape() {
    let est = [0.9, 0.4, 0.5, 0.1, 0.4];
    let truth = [1.0, 1.0, 0.0, 0.0, 1.0];
    let (points, auc) = roc_auc(&est, &truth, 0.5).unwrap();
    // Sentinel endpoints.
    let first = points.first().unwrap();
    assert_eq!(first.threshold, f64::INFINITY);
    assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
    let last = points.last().unwrap();
    assert_eq!(last.threshold, f64::NEG_INFINITY);
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    // One interior point per distinct estimate, thresholds strictly decreasing,
    // both rates non-decreasing.
    assert_eq!(points.len(), 2 + 4);
    for w in points.windows(2) {
        assert!(w[1].threshold < w[0].threshold);
        assert!(w[1].fpr >= w[0].fpr);
        assert!(w[1].tpr >= w[0].tpr);
    }
    assert!((0.0..=1.0).contains(&auc));
    // Single-class input is an error.
    assert!(matches!(roc_auc(&[0.1, 0.2], &[1.0, 0.9], 0.5), Err(Error::Data(_))));
    assert!(matches!(roc_auc(&[0.1], &[1.0, 0.0], 0.5), Err(Error::Config(_))));
}

#[test]
fn generate_truth_step_respects_bin_and_filters() {
    let grid = grid();
    let filters = TruthFilters::default();
    let truth = generate_truth(
        TruthKind::Step,
        0.4,
        0.45,
        &filters,
        &grid,
        2003.0,
        2009.0,
        11,
        0,
        200_000,
    )
    .unwrap();
    assert!(truth.delta_cu >= 0.4 && truth.delta_cu < 0.45);
    assert!(truth.attempts >= 1);
    assert_eq!(truth.cu_path.len(), grid.n_nodes());
    assert_eq!(truth.states.len(), grid.n_nodes());
    let TrajectoryModel::Step { cu0, cu1, t_in } = truth.model else {
        panic!("expected a step truth, got {:?}", truth.model);
    };
    assert!(t_in > 2003.0 && t_in < 2009.0);
    assert_relative_eq!(truth.delta_cu, cu1 - cu0, max_relative = 1e-12);
    // 2010 FSW prevalence filter.
    let node_2010 = grid.nearest_node(2010.0).unwrap();
    let prev = epi::observe_prevalence(&truth.states[node_2010], Stratum::Fsw);
    assert!((0.02..=0.40).contains(&prev), "prev_2010 = {prev}");
}

#[test]
fn generate_truth_dsigm_respects_bin_and_filters() {
    let grid = grid();
    let filters = TruthFilters::default();
    let truth = generate_truth(
        TruthKind::DSigm,
        0.2,
        0.25,
        &filters,
        &grid,
        2003.0,
        2009.0,
        12,
        3,
        200_000,
    )
    .unwrap();
    assert!(truth.delta_cu >= 0.2 && truth.delta_cu < 0.25);
    let TrajectoryModel::DSigm { cu0, eta, k, t_in } = truth.model else {
        panic!("expected a dsigm truth, got {:?}", truth.model);
    };
    assert!(cu0 > 0.0 && cu0 < 1.0);
    assert!(eta >= cu0 && eta < 1.0);
    assert!(k > 0.0);
    assert!(t_in > filters.t_in_min, "t_in = {t_in}");
    let node_2010 = grid.nearest_node(2010.0).unwrap();
    let prev = epi::observe_prevalence(&truth.states[node_2010], Stratum::Fsw);
    assert!((0.02..=0.40).contains(&prev));
}

#[test]
fn generate_truth_is_deterministic_per_replicate() {
    let grid = grid();
    let filters = TruthFilters::default();
    let draw = |replicate| {
        generate_truth(
            TruthKind::Step,
            0.3,
            0.35,
            &filters,
            &grid,
            2003.0,
            2009.0,
            7,
            replicate,
            200_000,
        )
        .unwrap()
    };
    let a = draw(0);
    let b = draw(0);
    let c = draw(1);
    assert_eq!(a.delta_cu.to_bits(), b.delta_cu.to_bits());
    assert_eq!(a.attempts, b.attempts);
    assert_eq!(
        a.cu_path.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.cu_path.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_ne!(a.delta_cu.to_bits(), c.delta_cu.to_bits());
}

#[test]
fn generate_truth_budget_exhaustion() {
    let grid = grid();
    // Inflection filter above the sampling window: no candidate can pass.
    let filters = TruthFilters { t_in_min: 2009.5, ..TruthFilters::default() };
    let err = generate_truth(
        TruthKind::Step,
        0.3,
        0.35,
        &filters,
        &grid,
        2003.0,
        2009.0,
        999,
        0,
        3,
    )
    .unwrap_err();
    match err {
        Error::Numerical(msg) => assert!(msg.contains("within 3 draws"), "{msg}"),
        other => panic!("expected a numerical error, got {other:?}"),
    }
}

#[test]
fn simulate_observations_contract() {
    let grid = grid();
    let params = deltacu::io::config::midrange_epi_params();
    let model = TrajectoryModel::DSigm { cu0: 0.1, eta: 0.8, k: 0.05, t_in: 2004.0 };
    let mut rng = substream(1, &[0xE]);
    let cu = traj::sample_path(&model, &grid, &mut rng).unwrap();
    let states = epi::integrate(&params, &cu, &grid).unwrap();

    let mut rng = substream(1, &[0xF]);
    let obs = simulate_observations(&states, &default_schedule(), &grid, &mut rng).unwrap();
    let mut rng2 = substream(1, &[0xF]);
    let obs2 = simulate_observations(&states, &default_schedule(), &grid, &mut rng2).unwrap();

    assert_eq!(obs.len(), 4);
    let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
    assert_eq!(times, vec![2005.0, 2007.0, 2008.75, 2009.0]);
    let strata: Vec<Stratum> = obs.iter().map(|o| o.stratum).collect();
    assert_eq!(strata, vec![Stratum::Fsw, Stratum::Fsw, Stratum::Fsw, Stratum::Client]);
    for o in &obs {
        assert_eq!(o.sample_size, 425);
        assert!(o.positives <= o.sample_size);
    }
    for (a, b) in obs.iter().zip(&obs2) {
        assert_eq!(a.positives, b.positives);
    }

    // Zero-size schedule entries are rejected.
    let bad = vec![SchedulePoint { time: 2005.0, stratum: Stratum::Fsw, sample_size: 0 }];
    assert!(matches!(
        simulate_observations(&states, &bad, &grid, &mut rng),
        Err(Error::Config(_))
    ));

    // Counts track the latent prevalence: mean of many draws within 5 binomial
    // standard errors.
    let node = grid.nearest_node(2005.0).unwrap();
    let h = epi::observe_prevalence(&states[node], Stratum::Fsw);
    let one = vec![SchedulePoint { time: 2005.0, stratum: Stratum::Fsw, sample_size: 425 }];
    let reps = 500;
    let mut rng = substream(2, &[0x10]);
    let mut total = 0u64;
    for _ in 0..reps {
        total += u64::from(simulate_observations(&states, &one, &grid, &mut rng).unwrap()[0].positives);
    }
    let mean_rate = total as f64 / (reps as f64 * 425.0);
    let se = (h * (1.0 - h) / (reps as f64 * 425.0)).sqrt();
    assert!((mean_rate - h).abs() < 5.0 * se, "mean {mean_rate} vs h {h} (se {se})");
}

#[test]
fn default_schedule_contents() {
    let sched = default_schedule();
    assert_eq!(sched.len(), 4);
    assert_eq!(sched[0].time, 2005.0);
    assert_eq!(sched[3].time, 2009.0);
    assert_eq!(sched[3].stratum, Stratum::Client);
    assert!(sched.iter().take(3).all(|p| p.stratum == Stratum::Fsw));
    assert!(sched.iter().all(|p| p.sample_size == 425));
}

#[test]
fn ensemble_config_validation() {
    let grid = grid();
    let base = EnsembleConfig::default();
    assert!(base.validate(&grid).is_ok());

    let mut c = base.clone();
    c.replicates = 0;
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.methods.clear();
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.schedule.clear();
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.n_bins = 0;
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.bin_width = -0.05;
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.rejection_budget = 0;
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.stored_draws = 0;
    assert!(matches!(c.validate(&grid), Err(Error::Config(_))));

    let mut c = base.clone();
    c.inference.iterations = 0;
    assert!(c.validate(&grid).is_err());

    // Schedule points must land inside the grid.
    let mut c = base.clone();
    c.schedule.push(SchedulePoint { time: 1800.0, stratum: Stratum::Fsw, sample_size: 10 });
    assert!(c.validate(&grid).is_err());

    // The post-window prevalence filter needs the grid to reach 2010.
    let short = TimeGrid::new(1985.0, 2005.0, 6.0).unwrap();
    assert!(base.validate(&short).is_err());
}

#[test]
fn ensemble_config_defaults() {
    let c = EnsembleConfig::default();
    assert_eq!(c.replicates, 50);
    assert_eq!(c.truth, TruthKind::DSigm);
    assert_eq!(c.n_bins, 18);
    assert_eq!(c.bin_width, 0.05);
    assert_eq!(c.thresholds, vec![0.2, 0.3, 0.4]);
    assert_eq!(c.stored_draws, 1000);
    assert_eq!(c.schedule.len(), 4);
}
