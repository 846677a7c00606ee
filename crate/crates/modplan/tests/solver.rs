//! Contract tests for the QP engine and branch-and-bound: the spec examples
//! plus the bound/determinism/oracle properties.

use std::collections::BTreeMap;

use modplan::bnb::{
    enumerate_oracle, enumerate_oracle_with_options, solve_miqp, BnbConfig, OracleError,
    OracleOptions,
};
use modplan::formulation::{build_default, MiqpProblem, QpProblem};
use modplan::model::*;
use modplan::qp::{solve_qp_with_fixings, QpSettings, QpSolver, QpStatus};
use nalgebra::{DMatrix, DVector};

fn scenario(t: usize, obstacles: Vec<(f64, f64, f64)>) -> Scenario {
    Scenario {
        model: RobotModel::FirstOrder,
        start: RobotState::Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        },
        goal: RobotState::Pose {
            x: 5.0,
            y: 0.0,
            theta: 0.0,
        },
        robot_radius: 0.4,
        horizon: t,
        timestep: 0.5,
        state_bounds: Bounds {
            lower: vec![-1.0, -3.5, -50.0],
            upper: vec![6.0, 3.5, 50.0],
        },
        control_bounds: Bounds::symmetric(3, 3.0),
        obstacles: obstacles
            .into_iter()
            .map(|(x, y, r)| Obstacle {
                initial: ObstacleState::new(x, y, 0.0),
                radius: r,
                state_bounds: Bounds {
                    lower: vec![-8.0, -8.0, -50.0],
                    upper: vec![12.0, 8.0, 50.0],
                },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            })
            .collect(),
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    }
}

fn tight_config() -> BnbConfig {
    BnbConfig {
        rel_gap_tol: 1e-9,
        ..BnbConfig::default()
    }
}

#[test]
fn fixing_chain_never_decreases_value() {
    // Relaxation monotonicity: every additional fixing can only raise the
    // optimal value.
    let s = scenario(5, vec![(2.5, 0.0, 0.5)]);
    let (problem, layout) = build_default(&s).unwrap();
    let mut solver = QpSolver::new(&problem.qp, QpSettings::default()).unwrap();
    let mut fixings: BTreeMap<usize, f64> = BTreeMap::new();
    let mut last = solver.solve_with_fixings(&fixings, &[]).unwrap().objective;
    // Step 0 compares pinned positions, where only "robot left" holds; the
    // later steps are fixed to the "pass above" side.
    for k in 0..4 {
        let side = if k == 0 { 1 } else { 2 };
        fixings.insert(layout.binary(0, k, side), 0.0);
        for j in (0..4).filter(|&j| j != side) {
            fixings.insert(layout.binary(0, k, j), 1.0);
        }
        let value = solver.solve_with_fixings(&fixings, &[]).unwrap();
        assert_eq!(value.status, QpStatus::Optimal);
        assert!(
            value.objective >= last - 1e-8,
            "fixing lowered the value: {} -> {}",
            last,
            value.objective
        );
        last = value.objective;
    }
}

#[test]
fn fixed_assignment_matches_external_enumeration() {
    // Fixing all binaries to one admissible assignment must match solving
    // that assignment as its own QP.
    let s = scenario(4, vec![(2.0, 0.0, 0.5)]);
    let (problem, layout) = build_default(&s).unwrap();
    let mut fixings: BTreeMap<usize, f64> = BTreeMap::new();
    for k in 0..3 {
        let side = if k == 0 { 1 } else { 2 };
        fixings.insert(layout.binary(0, k, side), 0.0);
        for j in (0..4).filter(|&j| j != side) {
            fixings.insert(layout.binary(0, k, j), 1.0);
        }
    }
    let fixed = solve_qp_with_fixings(&problem.qp, &fixings, &[]).unwrap();
    assert_eq!(fixed.status, QpStatus::Optimal);
    for (&idx, &value) in &fixings {
        assert_eq!(fixed.z[idx], value);
    }

    // The oracle enumerates all assignments; the best cannot beat any one
    // admissible assignment, and the "pass above" side is optimal here.
    let (oracle_value, _) = enumerate_oracle(&problem, 1_000_000).unwrap();
    assert!(oracle_value <= fixed.objective + 1e-9);
}

#[test]
fn selector_overfixing_is_infeasible() {
    let s = scenario(4, vec![(2.0, 0.0, 0.5)]);
    let (problem, layout) = build_default(&s).unwrap();
    let mut fixings = BTreeMap::new();
    for j in 0..4 {
        fixings.insert(layout.binary(0, 1, j), 1.0);
    }
    let result = solve_qp_with_fixings(&problem.qp, &fixings, &[]).unwrap();
    assert_eq!(result.status, QpStatus::Infeasible);
    assert!(result.certificate > 0.0);
}

#[test]
fn zero_binary_miqp_equals_qp_in_one_node() {
    let s = scenario(5, vec![]);
    let (problem, _) = build_default(&s).unwrap();
    let result = solve_miqp(&problem, &tight_config()).unwrap();
    assert_eq!(result.status, SolveStatus::Optimal);
    assert_eq!(result.nodes, 1);
    let mut solver = QpSolver::new(&problem.qp, QpSettings::default()).unwrap();
    let qp = solver.solve();
    assert!((result.incumbent_value - qp.objective).abs() < 1e-9);
}

#[test]
fn integral_root_needs_no_branching() {
    // A hand-built MIQP whose relaxation is integral at the root: the cost
    // pulls the single binary to its lower bound.
    let problem = MiqpProblem {
        qp: QpProblem {
            h: DMatrix::from_diagonal_element(2, 2, 2.0),
            f: DVector::from_vec(vec![0.0, 1.0]),
            c0: 0.0,
            a: DMatrix::zeros(0, 2),
            b: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, 2),
            b_eq: DVector::zeros(0),
            lb: DVector::from_vec(vec![-5.0, 0.0]),
            ub: DVector::from_vec(vec![5.0, 1.0]),
        },
        binaries: vec![1],
    };
    let result = solve_miqp(&problem, &tight_config()).unwrap();
    assert_eq!(result.status, SolveStatus::Optimal);
    assert_eq!(result.nodes, 1);
    assert!(result.incumbent_value.abs() < 1e-9);
}

#[test]
fn search_matches_oracle_on_small_instances() {
    for (t, obstacles) in [
        (4usize, vec![(1.5, 0.0, 0.5)]),
        (6, vec![(3.0, 0.0, 0.5)]),
        (5, vec![(2.0, 0.3, 0.45), (3.5, -0.4, 0.5)]),
    ] {
        let s = scenario(t, obstacles);
        let (problem, _) = build_default(&s).unwrap();
        let result = solve_miqp(&problem, &tight_config()).unwrap();
        let (oracle_value, _) = enumerate_oracle(&problem, u64::MAX).unwrap();
        let tol = 1e-6 * oracle_value.abs().max(1e-6);
        assert!(
            (result.incumbent_value - oracle_value).abs() <= tol,
            "T={t}: search {} vs oracle {}",
            result.incumbent_value,
            oracle_value
        );
        assert!(result.max_bound_regression <= 1e-8);
        assert!(result.incumbent_value >= result.best_bound - 1e-9);
    }
}

#[test]
fn dominance_reduction_matches_full_enumeration() {
    // The four single-axis patterns must land on the same optimum as all
    // fifteen admissible patterns per selector group.
    let s = scenario(3, vec![(1.2, 0.1, 0.4)]);
    let (problem, _) = build_default(&s).unwrap();
    let reduced = enumerate_oracle_with_options(
        &problem,
        u64::MAX,
        &OracleOptions {
            use_dominance: true,
        },
    )
    .unwrap();
    let full = enumerate_oracle_with_options(
        &problem,
        u64::MAX,
        &OracleOptions {
            use_dominance: false,
        },
    )
    .unwrap();
    assert!(
        (reduced.0 - full.0).abs() <= 1e-9 * (1.0 + full.0.abs()),
        "{} vs {}",
        reduced.0,
        full.0
    );
}

#[test]
fn oracle_cap_guard_trips() {
    let s = scenario(6, vec![(2.0, 0.3, 0.45), (3.5, -0.4, 0.5)]);
    let (problem, _) = build_default(&s).unwrap();
    let err = enumerate_oracle(&problem, 10).unwrap_err();
    assert!(matches!(err, OracleError::CapExceeded { .. }));
}

#[test]
fn search_is_deterministic() {
    let s = scenario(6, vec![(3.0, 0.0, 0.5)]);
    let (problem, _) = build_default(&s).unwrap();
    let a = solve_miqp(&problem, &tight_config()).unwrap();
    let b = solve_miqp(&problem, &tight_config()).unwrap();
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(
        a.incumbent_value.to_bits(),
        b.incumbent_value.to_bits(),
        "objective must be bit-identical"
    );
    let (za, zb) = (a.incumbent.unwrap(), b.incumbent.unwrap());
    assert_eq!(za.as_slice(), zb.as_slice());
}

#[test]
fn incumbents_extract_feasible() {
    let s = scenario(6, vec![(3.0, 0.1, 0.5)]);
    let (problem, layout) = build_default(&s).unwrap();
    let result = solve_miqp(&problem, &tight_config()).unwrap();
    let solution =
        modplan::formulation::extract(result.incumbent.unwrap().as_slice(), &layout, &s).unwrap();
    let report = check_feasibility(&solution, &s, 1e-6).unwrap();
    assert!(report.passes(1e-6), "{report}");
}
