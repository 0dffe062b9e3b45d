use mimo_core::channel::CorrelationModel;
use mimo_core::detect::CombinerKind;
use mimo_core::pa::PaScheme;
use mimo_sim::config::{Command, ExperimentSpec, PowerScheme, Profile, Sweep, SweepAxis};
use mimo_sim::experiment::run_experiment;

/// One cell, two users, eight antennas.
fn tiny() -> ExperimentSpec {
    let mut spec = ExperimentSpec::profile(Profile::Desk, Command::Sweep);
    let n = &mut spec.network;
    n.grid_rows = 1;
    n.grid_cols = 1;
    n.users_per_cell = 2;
    n.antennas = 8;
    n.tau_p = 2;
    spec.correlation = CorrelationModel::gaussian(20.0);
    spec.pa_schemes = vec![PaScheme::Multicell];
    spec.combiners = vec![CombinerKind::Mmmse];
    spec.power_schemes = vec![PowerScheme::Uniform];
    spec.sweep = Sweep { axis: SweepAxis::TauP, values: vec![2.0] };
    spec.drops = 1;
    spec.blocks = 1;
    spec.normalize();
    spec
}

#[test]
fn single_block_gives_one_record() {
    let out = run_experiment(&tiny()).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert_eq!((r.drops, r.blocks, r.per_user_se.len()), (1, 1, 2));
    assert!(r.sum_se_per_cell > 0.0);
    assert_eq!(r.sum_se_drop_std_err, None);
}

#[test]
fn records_follow_sweep_then_arm_order() {
    let mut spec = tiny();
    spec.sweep.values = vec![1.0, 2.0];
    spec.combiners = vec![CombinerKind::Mmmse, CombinerKind::Mf];
    let out = run_experiment(&spec).unwrap();
    let keys: Vec<(f64, &str)> = out.records.iter().map(|r| (r.sweep_value, r.combiner.as_str())).collect();
    assert_eq!(keys, [(1.0, "M-MMSE"), (1.0, "MF"), (2.0, "M-MMSE"), (2.0, "MF")]);
}

#[test]
fn same_seed_same_records_other_seed_differs() {
    let mut spec = tiny();
    spec.blocks = 20;
    spec.drops = 2;
    let a = run_experiment(&spec).unwrap().records;
    let b = run_experiment(&spec).unwrap().records;
    let strip = |v: Vec<mimo_sim::experiment::ResultRecord>| {
        v.into_iter()
            .map(|mut r| {
                r.wall_clock_s = 0.0;
                r
            })
            .collect::<Vec<_>>()
    };
    let (a, b) = (strip(a), strip(b));
    assert_eq!(a, b);
    spec.seed += 1;
    let c = strip(run_experiment(&spec).unwrap().records);
    assert_ne!(a[0].sum_se_per_cell, c[0].sum_se_per_cell);
}

#[test]
fn doubling_blocks_shrinks_std_err_by_sqrt2() {
    let mut spec = tiny();
    spec.blocks = 400;
    let e1 = run_experiment(&spec).unwrap().records[0].sum_se_std_err;
    spec.blocks = 800;
    let e2 = run_experiment(&spec).unwrap().records[0].sum_se_std_err;
    let ratio = e1 / e2;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn optimized_power_records_carry_trajectories() {
    let mut spec = tiny();
    spec.network.grid_cols = 2;
    spec.normalize();
    spec.power_schemes = vec![PowerScheme::Sumse, PowerScheme::PilotOpt];
    spec.deterministic = true;
    spec.blocks = 10;
    let out = run_experiment(&spec).unwrap();
    assert!(out.records.iter().all(|r| r.det_sum_se_per_cell.is_some() && r.det_gap.is_some()));
    let stages: std::collections::BTreeSet<&str> = out.trajectories.iter().map(|t| t.stage.as_str()).collect();
    assert!(stages.len() >= 2, "{stages:?}");
}
