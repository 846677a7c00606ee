//! Linearization properties: axiswise separation implies disc separation
//! (soundness), the converse fails near the diagonal (conservativeness),
//! and solved vectors round-trip through extraction feasibly.

use modplan::bnb::{solve_miqp, BnbConfig};
use modplan::formulation::{build_default, extract};
use modplan::model::*;
use proptest::prelude::*;

fn one_obstacle_scenario() -> Scenario {
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
        horizon: 6,
        timestep: 0.5,
        state_bounds: Bounds {
            lower: vec![-1.0, -3.5, -50.0],
            upper: vec![6.0, 3.5, 50.0],
        },
        control_bounds: Bounds::symmetric(3, 3.0),
        obstacles: vec![Obstacle {
            initial: ObstacleState::new(2.5, 0.0, 0.5),
            radius: 0.5,
            state_bounds: Bounds {
                lower: vec![-8.0, -8.0, -50.0],
                upper: vec![12.0, 8.0, 50.0],
            },
            velocity_bounds: Bounds::symmetric(3, 2.0),
        }],
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    }
}

proptest! {
    /// Sound linearization: whenever some axis row holds with margin >= 0,
    /// the Euclidean disc constraint holds too.
    #[test]
    fn axis_separation_implies_disc_separation(
        radius_sum in 0.2f64..2.0,
        gap in 0.0f64..3.0,
        other in -3.0f64..3.0,
        axis in 0usize..4,
    ) {
        // Position the pair exactly on an axis-row boundary plus slack.
        let (dx, dy) = match axis {
            0 => (radius_sum + gap, other),
            1 => (-(radius_sum + gap), other),
            2 => (other, radius_sum + gap),
            _ => (other, -(radius_sum + gap)),
        };
        let euclid = dx.hypot(dy);
        prop_assert!(euclid >= radius_sum - 1e-12);
    }
}

#[test]
fn diagonal_near_contact_has_no_separating_axis() {
    // Euclidean-feasible but axiswise-infeasible: the linearized set is a
    // strict subset.
    let radius_sum = 1.0f64;
    let eps = 1e-3;
    let d = radius_sum / 2f64.sqrt() + eps;
    let (dx, dy) = (d, d);
    assert!(dx.hypot(dy) >= radius_sum + eps);
    // No axis row can be enforced with nonnegative margin.
    assert!(dx < radius_sum);
    assert!(dy < radius_sum);
}

#[test]
fn solver_vectors_round_trip_feasibly() {
    // Any vector produced by the exact solver extracts into a solution that
    // passes every feasibility family, including Euclidean clearance: the
    // axiswise disjunction implies the disc constraint.
    let scenario = one_obstacle_scenario();
    let (problem, layout) = build_default(&scenario).unwrap();
    let config = BnbConfig {
        rel_gap_tol: 1e-9,
        ..BnbConfig::default()
    };
    let result = solve_miqp(&problem, &config).unwrap();
    assert_eq!(result.status, SolveStatus::Optimal);
    let z = result.incumbent.unwrap();

    // The quadratic form agrees with the domain evaluator on the solution.
    let solution = extract(z.as_slice(), &layout, &scenario).unwrap();
    let qp_value = problem.qp.objective_at(&z);
    assert!(
        (qp_value - solution.cost.total).abs() <= 1e-6 * (1.0 + solution.cost.total.abs())
    );

    let report = check_feasibility(&solution, &scenario, 1e-6).unwrap();
    assert!(report.passes(1e-6), "{report}");
    assert!(report.dynamics_residual <= 1e-7);
}
