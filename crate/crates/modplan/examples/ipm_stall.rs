//! Dev probe: trace one stalling node relaxation.
use modplan::formulation::build_default;
use modplan::model::*;
use modplan::qp::{QpSettings, QpSolver};
use std::collections::BTreeMap;

fn main() {
    env_logger::init();
    let s = Scenario {
        model: RobotModel::FirstOrder,
        start: RobotState::Pose { x: 0.0, y: 0.0, theta: 0.0 },
        goal: RobotState::Pose { x: 6.0, y: 0.0, theta: 0.0 },
        robot_radius: 0.4,
        horizon: 8,
        timestep: 0.5,
        state_bounds: Bounds { lower: vec![-1.0, -4.0, -50.0], upper: vec![7.0, 4.0, 50.0] },
        control_bounds: Bounds::symmetric(3, 3.0),
        obstacles: vec![
            Obstacle {
                initial: ObstacleState::new(2.5, 0.2, 0.0),
                radius: 0.5,
                state_bounds: Bounds { lower: vec![-10.0, -10.0, -50.0], upper: vec![10.0, 10.0, 50.0] },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            },
            Obstacle {
                initial: ObstacleState::new(4.5, -0.3, 0.0),
                radius: 0.5,
                state_bounds: Bounds { lower: vec![-10.0, -10.0, -50.0], upper: vec![10.0, 10.0, 50.0] },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            },
        ],
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    };
    let (problem, _layout) = build_default(&s).unwrap();
    let mut solver = QpSolver::new(&problem.qp, QpSettings { max_iterations: 200, ..Default::default() }).unwrap();
    let mut fixings = BTreeMap::new();
    for (idx, v) in [
        (139usize, 1.0), (140, 0.0), (141, 1.0), (142, 1.0), (143, 1.0), (144, 0.0),
        (145, 1.0), (146, 1.0), (147, 1.0), (148, 1.0), (149, 0.0), (150, 1.0),
        (151, 0.0), (152, 1.0), (153, 0.0), (154, 1.0), (156, 1.0), (157, 1.0),
        (158, 1.0), (160, 1.0), (161, 1.0), (162, 1.0), (165, 1.0), (167, 1.0),
        (169, 1.0), (170, 1.0), (171, 1.0), (172, 0.0), (173, 0.0), (174, 1.0),
        (175, 1.0), (176, 1.0), (177, 0.0), (178, 1.0), (179, 1.0), (180, 0.0),
        (181, 0.0), (182, 1.0), (183, 1.0), (184, 1.0), (185, 0.0), (186, 1.0),
        (187, 0.0), (188, 1.0), (190, 1.0),
    ] {
        fixings.insert(idx, v);
    }
    let sol = solver.solve_with_fixings(&fixings, &[]).unwrap();
    println!("status {:?} iters {} obj {:.9} prim {:.3e} dual {:.3e}", sol.status, sol.iterations, sol.objective, sol.primal_residual, sol.dual_residual);
}
