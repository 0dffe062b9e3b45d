use mimo_sim::config::{Command, ExperimentSpec, Profile, SweepAxis};

#[test]
fn every_profile_and_command_validates() {
    for profile in [Profile::Desk, Profile::Paper] {
        for cmd in [Command::Validate, Command::Sweep, Command::Power, Command::PaCompare] {
            let mut spec = ExperimentSpec::profile(profile, cmd);
            spec.normalize();
            spec.validate().unwrap_or_else(|e| panic!("{profile:?} {cmd:?}: {e}"));
        }
    }
}

#[test]
fn paper_pa_compare_uses_sixteen_cells() {
    let mut spec = ExperimentSpec::profile(Profile::Paper, Command::PaCompare);
    spec.normalize();
    assert_eq!((spec.network.cells, spec.network.users_per_cell, spec.network.antennas), (16, 10, 100));
    assert_eq!(spec.power_dbm, 24.8);
}

#[test]
fn overrides_merge_into_the_profile() {
    let json = r#"{"schema_version": 1, "network": {"antennas": 32}, "sweep": {"axis": "antennas", "values": [16, 32]}}"#;
    let spec = ExperimentSpec::from_json(Profile::Desk, Command::Sweep, json).unwrap();
    assert_eq!(spec.network.antennas, 32);
    assert_eq!(spec.network.users_per_cell, 8);
    assert_eq!(spec.sweep.axis, SweepAxis::Antennas);
    assert_eq!(spec.network.tau_u, spec.network.tau_c - spec.network.tau_d - spec.network.tau_p);
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let cases = [
        r#"{"network": {"antennas": 32}}"#,
        r#"{"schema_version": 2}"#,
        r#"{"schema_version": 1, "drops": 0}"#,
        r#"{"schema_version": 1, "unknown_field": 3}"#,
        r#"{"schema_version": 1, "sweep": {"axis": "tau_p", "values": [2.5]}}"#,
        r#"{"schema_version": 1, "gamma": 0}"#,
        r#"[1, 2]"#,
        r#"{"schema_version": 1,"#,
    ];
    for json in cases {
        let err = ExperimentSpec::from_json(Profile::Desk, Command::Sweep, json).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{json}: {err}");
    }
}
