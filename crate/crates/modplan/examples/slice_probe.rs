//! Dev probe: sliced vs exact solve.
use modplan::bnb::BnbConfig;
use modplan::model::*;
use modplan::slicing::{gap_analysis, solve_exact, solve_sliced};
use std::time::Instant;

fn main() {
    env_logger::init();
    let s = Scenario {
        model: RobotModel::FirstOrder,
        start: RobotState::Pose { x: 0.0, y: 0.0, theta: 0.0 },
        goal: RobotState::Pose { x: 8.0, y: 0.0, theta: 0.0 },
        robot_radius: 0.4,
        horizon: 12,
        timestep: 0.5,
        state_bounds: Bounds { lower: vec![-1.0, -4.0, -50.0], upper: vec![9.0, 4.0, 50.0] },
        control_bounds: Bounds::symmetric(3, 3.0),
        obstacles: vec![
            Obstacle {
                initial: ObstacleState::new(3.0, 0.1, 0.0),
                radius: 0.5,
                state_bounds: Bounds { lower: vec![-10.0, -10.0, -50.0], upper: vec![12.0, 10.0, 50.0] },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            },
            Obstacle {
                initial: ObstacleState::new(5.5, -0.4, 0.5),
                radius: 0.6,
                state_bounds: Bounds { lower: vec![-10.0, -10.0, -50.0], upper: vec![12.0, 10.0, 50.0] },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            },
        ],
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    };
    let mut config = BnbConfig::default();
    config.rel_gap_tol = 1e-9;

    let t0 = Instant::now();
    let (exact, result) = solve_exact(&s, &config).unwrap();
    println!(
        "exact: J {:.6} ({} nodes, {:?}) feas {}",
        exact.cost.total, result.nodes, t0.elapsed(),
        check_feasibility(&exact, &s, 1e-6).unwrap()
    );
    for m in [1usize, 2, 3, 4] {
        let t0 = Instant::now();
        let run = solve_sliced(&s, m, &config).unwrap();
        let report = gap_analysis(&run.solution, Some(&exact), &s, &run.plan).unwrap();
        let feas = check_feasibility(&run.solution, &s, 1e-6).unwrap();
        println!(
            "m={m}: Js {:.6} eps {:?} bound {:?} nodes {} in {:?} feas_max {:.2e} disp {:.3}",
            run.solution.cost.total,
            report.epsilon.map(|e| (e * 1e4).round() / 1e4),
            report.epsilon_bound.map(|e| (e * 1e4).round() / 1e4),
            run.solution.meta.nodes,
            t0.elapsed(),
            feas.max_violation(),
            run.solution.total_displacement_magnitude(),
        );
    }
}
