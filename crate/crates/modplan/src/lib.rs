//! Motion planning among movable disc obstacles with minimum total
//! displacement.
//!
//! When every path from start to goal is blocked, a robot can still get
//! through by pushing obstacles aside. This crate plans the robot trajectory
//! and the obstacle displacements jointly, minimizing a weighted sum of the
//! robot path cost and the obstacle displacement cost:
//!
//! ```text
//!     minimize   alpha_r * J_robot + alpha_o * J_obstacle
//!     subject to linear robot and obstacle dynamics,
//!                box bounds on states, controls and velocities,
//!                disc collision avoidance at every step.
//! ```
//!
//! The disc constraint is the only non-convexity; it is linearized with
//! big-M axis separation and four binary selectors per obstacle per step,
//! which turns the problem into a mixed-integer quadratic program solved
//! exactly by branch-and-bound over interior-point relaxations.
//!
//! Exact solves are exponential in the number of binaries, so the crate also
//! implements horizon slicing: the horizon is split into `m` sub-problems
//! chained by state handover, which is dramatically cheaper and comes with a
//! certified optimality gap (see [`slicing`]).
//!
//! # Quick start
//!
//! ```
//! use modplan::scenario::{generate, Family, GenerateParams};
//! use modplan::slicing::solve_sliced;
//! use modplan::bnb::BnbConfig;
//!
//! let params = GenerateParams { count: 1, seed: 3, ..Default::default() };
//! let scenario = generate(Family::Random, &params).unwrap();
//! let run = solve_sliced(&scenario, 1, &BnbConfig::default()).unwrap();
//! println!("total cost {:.4}", run.solution.cost.total);
//! ```

pub mod bnb;
pub mod formulation;
pub mod model;
pub mod qp;
pub mod report;
pub mod scenario;
pub mod slicing;
pub mod svg;

pub mod guide;

pub use model::{
    check_feasibility, evaluate_cost, step_obstacle, step_robot, total_displacement,
    CostBreakdown, Scenario, Solution, SolveStatus,
};
