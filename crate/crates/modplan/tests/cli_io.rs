//! Run orchestration and file outputs: report shapes, reloadable solution
//! files, generator purity, and byte-determinism of written artifacts.

use modplan::bnb::BnbConfig;
use modplan::model::check_feasibility;
use modplan::report::{run, RunOptions};
use modplan::scenario::{
    generate, load_scenario, load_solution, save_scenario, Family, GenerateParams,
};

fn options(m_values: Vec<usize>, with_reference: bool) -> RunOptions {
    RunOptions {
        m_values,
        with_reference,
        bnb: BnbConfig {
            rel_gap_tol: 1e-9,
            ..BnbConfig::default()
        },
        big_m: None,
        out_dir: None,
        render: true,
    }
}

#[test]
fn trivial_scenario_reports_zero_gap_and_no_displacement() {
    let params = GenerateParams {
        count: 0,
        seed: 1,
        horizon: Some(8),
        ..Default::default()
    };
    let scenario = generate(Family::Random, &params).unwrap();
    let artifacts = run(&scenario, "trivial", &options(vec![1], true)).unwrap();
    assert_eq!(artifacts.report.rows.len(), 1);
    let row = &artifacts.report.rows[0];
    assert_eq!(row.m, 1);
    assert!(row.gap.unwrap().abs() < 1e-9);
    assert!(row.j_o.abs() < 1e-9);
}

#[test]
fn sweep_rows_follow_the_reference() {
    let params = GenerateParams {
        count: 4,
        seed: 42,
        horizon: Some(9),
        ..Default::default()
    };
    let scenario = generate(Family::Random, &params).unwrap();
    let artifacts = run(&scenario, "sweep", &options(vec![1, 2, 3], true)).unwrap();
    assert_eq!(artifacts.report.rows.len(), 3);
    let m1 = &artifacts.report.rows[0];
    assert_eq!(m1.m, 1);
    assert!(m1.gap.unwrap().abs() < 1e-9, "m=1 gap {}", m1.gap.unwrap());
    for row in &artifacts.report.rows[1..] {
        assert!(row.error.is_none());
        assert!(row.gap.unwrap() >= -1e-6, "m={} gap {}", row.m, row.gap.unwrap());
    }
    // Fixed column set in the CSV.
    let csv = artifacts.report.to_csv();
    assert!(csv.starts_with(
        "scenario,model,m,cpu_s,gap,j_r,j_o,status,nodes,format_version\n"
    ));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn written_artifacts_reload_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let params = GenerateParams {
        count: 2,
        seed: 9,
        horizon: Some(8),
        ..Default::default()
    };
    let scenario = generate(Family::Random, &params).unwrap();
    let scenario_path = dir.path().join("scenario.json");
    save_scenario(&scenario, &scenario_path).unwrap();
    let reloaded = load_scenario(&scenario_path).unwrap();
    assert_eq!(scenario, reloaded);

    let mut opts = options(vec![1, 2], false);
    opts.out_dir = Some(dir.path().to_path_buf());
    let artifacts = run(&scenario, "case", &opts).unwrap();
    assert_eq!(artifacts.report.rows.len(), 2);

    for m in [1usize, 2] {
        let solution = load_solution(dir.path().join(format!("case_m{m}.solution.json"))).unwrap();
        let report = check_feasibility(&solution, &scenario, 1e-6).unwrap();
        assert!(report.passes(1e-6), "m={m}: {report}");
        let svg = std::fs::read_to_string(dir.path().join(format!("case_m{m}.svg"))).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("start-marker"));
        assert!(svg.contains("goal-marker"));
    }
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let params = GenerateParams {
        count: 2,
        seed: 17,
        horizon: Some(8),
        ..Default::default()
    };
    let scenario = generate(Family::Random, &params).unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = options(vec![1, 2], false);
        opts.out_dir = Some(dir.path().to_path_buf());
        run(&scenario, "det", &opts).unwrap();
        let mut bytes = Vec::new();
        for name in ["det_m1.solution.json", "det_m2.solution.json", "det_m1.svg", "det_m2.svg"] {
            bytes.push(std::fs::read(dir.path().join(name)).unwrap());
        }
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn displaced_obstacle_gets_an_arrow() {
    // A blocking obstacle in a narrow band must be displaced; its render
    // then carries exactly one displacement arrow.
    let mut params = GenerateParams {
        count: 0,
        seed: 1,
        horizon: Some(8),
        ..Default::default()
    };
    params.workspace = Some([0.0, -1.0, 8.0, 1.0]);
    let mut scenario = generate(Family::Random, &params).unwrap();
    scenario.obstacles.push(modplan::model::Obstacle {
        initial: modplan::model::ObstacleState::new(4.0, 0.0, 0.0),
        radius: 0.55,
        state_bounds: modplan::model::Bounds {
            lower: vec![-5.0, -6.0, -1e6],
            upper: vec![13.0, 6.0, 1e6],
        },
        velocity_bounds: modplan::model::Bounds::symmetric(3, 2.0),
    });
    scenario.validate().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(vec![1], false);
    opts.out_dir = Some(dir.path().to_path_buf());
    let artifacts = run(&scenario, "arrow", &opts).unwrap();
    let displacement = artifacts.runs[0].1.solution.total_displacement_magnitude();
    assert!(displacement > 0.1, "obstacle should move, got {displacement}");
    let svg = std::fs::read_to_string(dir.path().join("arrow_m1.svg")).unwrap();
    assert_eq!(svg.matches("displacement-arrow").count(), 1);
}
