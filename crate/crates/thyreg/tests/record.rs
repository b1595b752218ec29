use proptest::prelude::*;
use thyreg::record::{read_csv, write_csv, RecordError, HEADER};
use thyreg_core::metrics::compute_metrics;
use thyreg_core::mpc::SolveInfo;
use thyreg_core::scenario::{run_scenario, ControllerSettings, Mode, ScenarioConfig, ScenarioKind};
use thyreg_core::sim::{time_grid, RunStatus, SimulationRecord};
use thyreg_core::thyroid::{algebraic_outputs, HormoneState, N_STATES};
use thyreg_core::{IodideRegime, ParameterSet, SECONDS_PER_DAY};

fn to_csv(rec: &SimulationRecord) -> Vec<u8> {
    let m = ParameterSet::default().model(IodideRegime::Normal);
    let mut buf = Vec::new();
    write_csv(rec, &m, &mut buf).unwrap();
    buf
}

#[test]
fn closed_loop_record_round_trips() {
    let mut sc = ScenarioConfig::preset(ScenarioKind::Ordinary, Mode::Realistic, 3);
    sc.duration_s = 5.0 * SECONDS_PER_DAY;
    let run = run_scenario(&ParameterSet::default(), &sc, &ControllerSettings::default()).unwrap();
    let mut buf = Vec::new();
    write_csv(&run.record, &run.models.plant, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();

    assert_eq!(back.times, run.record.times);
    assert_eq!(back.states, run.record.states);
    let (t, c, a) = back.doses();
    assert_eq!(t, run.record.sample_times);
    assert_eq!(c, run.record.commanded);
    assert_eq!(a, run.record.administered);
    assert_eq!(a[4], 0.0);
    for (i, x) in back.states.iter().enumerate() {
        let alg = algebraic_outputs(back.times[i], x, &run.models.plant);
        assert_eq!((back.ft4[i], back.ft3[i], back.tpo_a[i]), (alg.ft4, alg.ft3, alg.tpo_a));
    }

    let from_csv = back.metrics(&run.models.setpoint, 0.1);
    let direct = compute_metrics(&run.record, &run.models.setpoint, 0.1);
    assert_eq!(from_csv, thyreg_core::metrics::RunMetrics { solver: None, ..direct });
}

#[test]
fn header_and_row_errors() {
    let text = "time_s,T4\n0,1\n";
    assert!(matches!(read_csv(text.as_bytes()), Err(RecordError::Header(_))));

    let header = HEADER.join(",");
    let row = |cells: &[&str]| format!("{header}\n{}\n", cells.join(","));
    let mut cells = vec!["1"; 13];
    cells.extend(["2", ""]);
    assert!(matches!(read_csv(row(&cells).as_bytes()), Err(RecordError::Row { row: 1, .. })));
    cells[14] = "2";
    cells[3] = "abc";
    assert!(matches!(read_csv(row(&cells).as_bytes()), Err(RecordError::Row { row: 1, .. })));
    cells[3] = "1";
    assert_eq!(read_csv(row(&cells).as_bytes()).unwrap().commanded, vec![Some(2.0)]);
}

fn any_record() -> impl Strategy<Value = SimulationRecord> {
    let value = prop_oneof![Just(0.0), 1e-40..1e-6f64, 1e-6..1e6f64, 1e6..1e30f64];
    (1usize..4, proptest::collection::vec(value.clone(), N_STATES * 25), proptest::collection::vec(0.0..40.0f64, 4))
        .prop_map(|(days, vals, doses)| {
            let times = time_grid(0.0, days as f64 * SECONDS_PER_DAY, 3600.0);
            let states = (0..times.len())
                .map(|i| HormoneState(std::array::from_fn(|c| vals[(i * N_STATES + c) % vals.len()])))
                .collect();
            let sample_times: Vec<f64> = (0..days).map(|d| d as f64 * SECONDS_PER_DAY).collect();
            let commanded: Vec<f64> = doses[..days].to_vec();
            let mut administered = commanded.clone();
            administered[0] = 0.0;
            let scenario = ScenarioConfig::preset(ScenarioKind::Ordinary, Mode::Nominal, 0);
            SimulationRecord {
                scenario,
                setpoint: HormoneState([1.0; N_STATES]),
                times,
                states,
                measured: vec![HormoneState([1.0; N_STATES]); days],
                sample_times,
                commanded,
                administered,
                solves: vec![
                    SolveInfo {
                        iterations: 1,
                        cost_evaluations: 1,
                        cost: 0.0,
                        stationarity: 0.0,
                        converged: true
                    };
                    days
                ],
                status: RunStatus::Completed,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn csv_is_lossless(rec in any_record()) {
        let back = read_csv(to_csv(&rec).as_slice()).unwrap();
        prop_assert_eq!(&back.times, &rec.times);
        prop_assert_eq!(&back.states, &rec.states);
        let (t, c, a) = back.doses();
        prop_assert_eq!(t, rec.sample_times);
        prop_assert_eq!(c, rec.commanded);
        prop_assert_eq!(a, rec.administered);
    }
}
