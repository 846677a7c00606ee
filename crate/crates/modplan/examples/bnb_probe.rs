//! Dev probe: branch-and-bound vs enumeration oracle across sizes.
use modplan::bnb::{enumerate_oracle, solve_miqp, BnbConfig};
use modplan::formulation::build_default;
use modplan::model::{Bounds, Obstacle, ObstacleState, RobotModel, RobotState, Scenario, TerminalMode, Weights};
use std::time::Instant;

fn scenario(t: usize, obstacles: Vec<(f64, f64, f64)>) -> Scenario {
    Scenario {
        model: RobotModel::FirstOrder,
        start: RobotState::Pose { x: 0.0, y: 0.0, theta: 0.0 },
        goal: RobotState::Pose { x: 6.0, y: 0.0, theta: 0.0 },
        robot_radius: 0.4,
        horizon: t,
        timestep: 0.5,
        state_bounds: Bounds { lower: vec![-1.0, -4.0, -50.0], upper: vec![7.0, 4.0, 50.0] },
        control_bounds: Bounds::symmetric(3, 3.0),
        obstacles: obstacles
            .into_iter()
            .map(|(x, y, r)| Obstacle {
                initial: ObstacleState::new(x, y, 0.0),
                radius: r,
                state_bounds: Bounds { lower: vec![-10.0, -10.0, -50.0], upper: vec![10.0, 10.0, 50.0] },
                velocity_bounds: Bounds::symmetric(3, 2.0),
            })
            .collect(),
        weights: Weights::standard(),
        terminal: TerminalMode::Soft,
        heading_in_path_cost: false,
    }
}

fn main() {
    env_logger::init();
    let cases: Vec<(usize, Vec<(f64, f64, f64)>, &str)> = vec![
        (6, vec![(3.0, 0.0, 0.5)], "T=6 1obs"),
        (8, vec![(3.0, 0.0, 0.5)], "T=8 1obs"),
        (6, vec![(2.5, 0.2, 0.5), (4.5, -0.3, 0.5)], "T=6 2obs"),
        (8, vec![(2.5, 0.2, 0.5), (4.5, -0.3, 0.5)], "T=8 2obs"),
    ];
    for (t, obstacles, label) in cases {
        let s = scenario(t, obstacles);
        let (problem, _layout) = build_default(&s).unwrap();
        let mut config = BnbConfig::default();
        config.rel_gap_tol = 1e-9;
        let t0 = Instant::now();
        let result = solve_miqp(&problem, &config).unwrap();
        let bnb_time = t0.elapsed();
        let t0 = Instant::now();
        let oracle = enumerate_oracle(&problem, u64::MAX);
        let oracle_time = t0.elapsed();
        match oracle {
            Ok((value, _)) => println!(
                "{label}: bnb {:.9} ({} nodes, {:.0?}) oracle {:.9} ({:.0?}) diff {:.2e} unresolved {}",
                result.incumbent_value, result.nodes, bnb_time, value, oracle_time,
                (result.incumbent_value - value).abs(), result.unresolved_nodes
            ),
            Err(e) => println!("{label}: oracle error {e}"),
        }
    }
}
