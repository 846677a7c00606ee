//! Dev probe: solve the root relaxation of a mid-size instance and time it.
use modplan::formulation::{build_default, INTEGRALITY_TOL};
use modplan::model::{Bounds, Obstacle, ObstacleState, RobotModel, RobotState, Scenario, TerminalMode, Weights};
use modplan::qp::{QpSettings, QpSolver};
use std::time::Instant;

fn main() {
    let obstacles: Vec<Obstacle> = (0..4)
        .map(|i| Obstacle {
            initial: ObstacleState::new(3.0 + 2.0 * (i as f64), (i as f64) - 1.5, 0.0),
            radius: 0.5,
            state_bounds: Bounds {
                lower: vec![-20.0, -20.0, -50.0],
                upper: vec![20.0, 20.0, 50.0],
            },
            velocity_bounds: Bounds::symmetric(3, 2.0),
        })
        .collect();
    let scenario = Scenario {
        model: RobotModel::FirstOrder,
        start: RobotState::Pose { x: 0.0, y: 0.0, theta: 0.0 },
        goal: RobotState::Pose { x: 12.0, y: 0.0, theta: 0.0 },
        robot_radius: 0.4,
        horizon: 20,
        timestep: 0.5,
        state_bounds: Bounds {
            lower: vec![-1.0, -5.0, -50.0],
            upper: vec![13.0, 5.0, 50.0],
        },
        control_bounds: Bounds::symmetric(3, 2.5),
        obstacles,
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    };
    let (problem, layout) = build_default(&scenario).unwrap();
    println!("n = {}, binaries = {}", layout.total(), layout.binary_count());
    let mut solver = QpSolver::new(&problem.qp, QpSettings::default()).unwrap();
    let t0 = Instant::now();
    let sol = solver.solve();
    println!(
        "status {:?} obj {:.6} iters {} in {:?}",
        sol.status, sol.objective, sol.iterations, t0.elapsed()
    );
    let frac = problem
        .binaries
        .iter()
        .filter(|&&b| sol.z[b].min(1.0 - sol.z[b]).abs() > INTEGRALITY_TOL)
        .count();
    println!("fractional binaries: {frac}");

    // Repeat with a few batches to get a steadier per-solve time.
    let t0 = Instant::now();
    for _ in 0..5 {
        let _ = solver.solve();
    }
    println!("5 resolves in {:?}", t0.elapsed());
}
