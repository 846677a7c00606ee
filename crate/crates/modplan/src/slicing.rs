//! Horizon slicing: solve the planning problem as a chain of short
//! sub-problems with certified gap accounting.
//!
//! The horizon of `T` steps is split into `m` contiguous ranges. Sub-problem
//! `i` starts from the final state of sub-problem `i-1` (the first starts
//! from the scenario start), owns the controls of its range, and ends in a
//! shared junction state that seeds the next sub-problem. Every non-final
//! sub-problem replaces the terminal condition with a goal-tracking penalty
//! toward the global goal so the chain keeps making progress; the final
//! sub-problem carries the scenario's own terminal mode.
//!
//! The concatenation of the sub-solutions is feasible for the full problem,
//! so its cost `J_s` can never undercut the exact optimum `J*`. Writing
//! `J_s` and `J*` as sums of per-slice costs with per-slice excesses
//! `delta_i = Js_i - J*_i` gives
//!
//! ```text
//!     J* <= J_s <= J* + m * delta_max,
//! ```
//!
//! so the optimality gap `eps = (J_s - J*) / J*` obeys
//! `eps <= m * delta_max / J*`, and since no sub-problem can deviate by more
//! than the whole optimal cost, slicing is an m-approximation: `eps < m`.
//! [`gap_analysis`] computes all of these quantities.

use std::ops::Range;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::bnb::{solve_miqp, BnbConfig, BnbError, BnbResult};
use crate::formulation::{build, BuildOptions, FormulationError};
use crate::model::{
    evaluate_cost, CostBreakdown, ModelError, ObstacleState, RobotState, Scenario, Solution,
    SolveMeta, SolveStatus, TerminalMode,
};

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("slice count {m} out of range for horizon {horizon} (need 1 <= m <= T-1)")]
    BadSliceCount { m: usize, horizon: usize },
    #[error("slice {index} failed with status {status}")]
    SliceFailed { index: usize, status: SolveStatus },
    #[error("horizon mismatch: solution has {got} states, expected {expected}")]
    HorizonMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Terminal handling of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceTerminal {
    /// Soft goal-tracking penalty toward the global goal (non-final slices).
    GoalTracking,
    /// The scenario's own terminal mode (final slice).
    ScenarioMode,
}

/// Partition of the horizon into contiguous slice ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePlan {
    /// Per-slice ranges of 0-based state indices, covering `0..T`
    /// contiguously. Slice `i` owns the trajectory steps leaving its range.
    pub ranges: Vec<Range<usize>>,
    /// Terminal handling per slice.
    pub terminals: Vec<SliceTerminal>,
}

impl SlicePlan {
    pub fn slice_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn horizon(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    /// Local sub-problem horizon of slice `i`: its range plus the shared
    /// junction state, except for the final slice which ends the horizon.
    pub fn sub_horizon(&self, i: usize) -> usize {
        if i + 1 == self.ranges.len() {
            self.ranges[i].len()
        } else {
            self.ranges[i].len() + 1
        }
    }
}

/// Split `horizon` steps into `m` contiguous slices of equal length, any
/// remainder absorbed by the last slice.
pub fn plan_slices(horizon: usize, m: usize) -> Result<SlicePlan, SliceError> {
    if m < 1 || (horizon < 2) || m > horizon - 1 {
        return Err(SliceError::BadSliceCount { m, horizon });
    }
    let base = horizon / m;
    let mut ranges = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = if i + 1 == m { horizon - start } else { base };
        ranges.push(start..start + len);
        start += len;
    }
    let terminals = (0..m)
        .map(|i| {
            if i + 1 == m {
                SliceTerminal::ScenarioMode
            } else {
                SliceTerminal::GoalTracking
            }
        })
        .collect();
    Ok(SlicePlan { ranges, terminals })
}

/// Outcome of one slice's solve.
#[derive(Debug, Clone)]
pub struct SliceOutcome {
    /// 1-based slice index.
    pub index: usize,
    /// Range of 0-based state indices this slice owns.
    pub range: Range<usize>,
    /// Objective of the sub-problem as solved, goal tracking included.
    pub objective: f64,
    pub nodes: u64,
    pub wall_time: Duration,
    pub status: SolveStatus,
    /// Robot state handed to the next slice (the junction), when any.
    pub handover_robot: RobotState,
    /// Obstacle states handed to the next slice.
    pub handover_obstacles: Vec<ObstacleState>,
}

/// A sliced solve: the composed full-horizon solution plus per-slice
/// metadata.
#[derive(Debug, Clone)]
pub struct SlicedRun {
    pub solution: Solution,
    pub plan: SlicePlan,
    pub slices: Vec<SliceOutcome>,
}

/// Solve the full problem exactly (no slicing).
pub fn solve_exact(
    scenario: &Scenario,
    config: &BnbConfig,
) -> Result<(Solution, BnbResult), SliceError> {
    let initial: Vec<ObstacleState> = scenario.obstacles.iter().map(|o| o.initial).collect();
    let start = scenario.start;
    let options = BuildOptions::for_scenario(scenario);
    let (solution, result) = solve_one(scenario, &start, &initial, &options, config, 1)?;
    Ok((solution, result))
}

fn solve_one(
    scenario: &Scenario,
    initial_robot: &RobotState,
    initial_obstacles: &[ObstacleState],
    options: &BuildOptions,
    config: &BnbConfig,
    slice_index: usize,
) -> Result<(Solution, BnbResult), SliceError> {
    let (problem, layout) = build(scenario, initial_robot, initial_obstacles, options)?;
    let result = solve_miqp(&problem, config)?;
    let Some(incumbent) = &result.incumbent else {
        return Err(SliceError::SliceFailed {
            index: slice_index,
            status: result.status,
        });
    };
    let mut solution = crate::formulation::extract(incumbent.as_slice(), &layout, scenario)?;
    solution.meta = SolveMeta {
        nodes: result.nodes,
        wall_time: result.wall_time,
        status: result.status,
    };
    Ok((solution, result))
}

/// Solve by horizon slicing with `m` sub-problems chained by state
/// handover. `m = 1` is the exact method.
pub fn solve_sliced(
    scenario: &Scenario,
    m: usize,
    config: &BnbConfig,
) -> Result<SlicedRun, SliceError> {
    solve_sliced_with(scenario, m, config, None)
}

/// [`solve_sliced`] with an explicit big-M override for every sub-problem.
pub fn solve_sliced_with(
    scenario: &Scenario,
    m: usize,
    config: &BnbConfig,
    big_m: Option<f64>,
) -> Result<SlicedRun, SliceError> {
    scenario.validate()?;
    let plan = plan_slices(scenario.horizon, m)?;
    let t = scenario.horizon;

    let mut current_robot = scenario.start;
    let mut current_obstacles: Vec<ObstacleState> =
        scenario.obstacles.iter().map(|o| o.initial).collect();

    let mut slices = Vec::with_capacity(m);
    let mut locals: Vec<Solution> = Vec::with_capacity(m);

    for (i, range) in plan.ranges.iter().enumerate() {
        let final_slice = i + 1 == m;
        let options = BuildOptions {
            horizon: Some(plan.sub_horizon(i)),
            terminal_weight: scenario.weights.alpha_re,
            terminal: if final_slice {
                scenario.terminal
            } else {
                TerminalMode::Soft
            },
            big_m,
            // Junction states seed the next slice's pinned first step, so
            // they must satisfy the axiswise separation too.
            collision_at_terminal: !final_slice,
        };
        let (local, result) = solve_one(
            scenario,
            &current_robot,
            &current_obstacles,
            &options,
            config,
            i + 1,
        )?;
        current_robot = *local.robot_states.last().unwrap();
        current_obstacles = local
            .obstacle_states
            .iter()
            .map(|states| *states.last().unwrap())
            .collect();
        slices.push(SliceOutcome {
            index: i + 1,
            range: range.clone(),
            objective: result.incumbent_value,
            nodes: result.nodes,
            wall_time: result.wall_time,
            status: result.status,
            handover_robot: current_robot,
            handover_obstacles: current_obstacles.clone(),
        });
        locals.push(local);
    }

    // Concatenate, dropping each duplicated junction state.
    let n_obs = scenario.obstacle_count();
    let mut robot_states = Vec::with_capacity(t);
    let mut controls = Vec::with_capacity(t - 1);
    let mut obstacle_states: Vec<Vec<ObstacleState>> = vec![Vec::with_capacity(t); n_obs];
    let mut obstacle_velocities = vec![Vec::with_capacity(t - 1); n_obs];
    let mut binaries = Vec::with_capacity(t - 1);
    for (i, local) in locals.iter().enumerate() {
        let skip = usize::from(i > 0);
        robot_states.extend_from_slice(&local.robot_states[skip..]);
        controls.extend_from_slice(&local.controls);
        for (states, local_states) in obstacle_states.iter_mut().zip(&local.obstacle_states) {
            states.extend_from_slice(&local_states[skip..]);
        }
        for (vels, local_vels) in obstacle_velocities
            .iter_mut()
            .zip(&local.obstacle_velocities)
        {
            vels.extend_from_slice(local_vels);
        }
        // Each slice owns the collision steps of its own range; the final
        // slice has none at the last state.
        binaries.extend_from_slice(&local.binaries[..plan.ranges[i].len().min(local.binaries.len())]);
    }
    debug_assert_eq!(robot_states.len(), t);
    debug_assert_eq!(controls.len(), t - 1);
    debug_assert_eq!(binaries.len(), t - 1);

    let mut solution = Solution {
        robot_states,
        controls,
        obstacle_states,
        obstacle_velocities,
        binaries,
        cost: CostBreakdown {
            total: 0.0,
            robot: 0.0,
            obstacle: 0.0,
        },
        meta: SolveMeta::default(),
    };
    solution.cost = evaluate_cost(&solution, scenario)?;
    solution.meta = SolveMeta {
        nodes: slices.iter().map(|s| s.nodes).sum(),
        wall_time: slices.iter().map(|s| s.wall_time).sum(),
        status: slices
            .iter()
            .map(|s| s.status)
            .find(|&s| s != SolveStatus::Optimal)
            .unwrap_or(SolveStatus::Optimal),
    };
    Ok(SlicedRun {
        solution,
        plan,
        slices,
    })
}

/// Objective attributed to each slice: the weighted cost of the steps
/// leaving its range, with the terminal goal penalty charged to the final
/// slice. Goal-tracking terms of intermediate slices are excluded so the
/// numbers compare exactly against an unsliced solve.
pub fn attributed_costs(
    solution: &Solution,
    scenario: &Scenario,
    plan: &SlicePlan,
) -> Result<Vec<CostBreakdown>, SliceError> {
    let t = scenario.horizon;
    if solution.horizon() != t || plan.horizon() != t {
        return Err(SliceError::HorizonMismatch {
            got: solution.horizon().min(plan.horizon()),
            expected: t,
        });
    }
    let w = &scenario.weights;
    let mut out = Vec::with_capacity(plan.slice_count());
    for (i, range) in plan.ranges.iter().enumerate() {
        let mut robot = 0.0;
        let mut obstacle = 0.0;
        for k in range.clone() {
            if k + 1 >= t {
                continue;
            }
            let (ax, ay) = solution.robot_states[k].position();
            let (bx, by) = solution.robot_states[k + 1].position();
            robot += (bx - ax).powi(2) + (by - ay).powi(2);
            if scenario.heading_in_path_cost {
                if let (
                    RobotState::Pose { theta: ta, .. },
                    RobotState::Pose { theta: tb, .. },
                ) = (&solution.robot_states[k], &solution.robot_states[k + 1])
                {
                    robot += (tb - ta).powi(2);
                }
            }
            for velocities in &solution.obstacle_velocities {
                let s = &velocities[k];
                obstacle +=
                    scenario.timestep * (s.sx * s.sx + s.sy * s.sy + s.stheta * s.stheta);
            }
        }
        if i + 1 == plan.slice_count() && scenario.terminal == TerminalMode::Soft {
            let last = solution.robot_states.last().unwrap().to_vec();
            let goal = scenario.goal.to_vec();
            let miss: f64 = last
                .iter()
                .zip(goal.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            robot += w.alpha_re * miss;
        }
        out.push(CostBreakdown {
            total: w.alpha_r * robot + w.alpha_o * obstacle,
            robot,
            obstacle,
        });
    }
    Ok(out)
}

/// Gap diagnostics of a sliced solution, optionally against the exact
/// optimum over the same horizon.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub format_version: u32,
    /// Number of slices.
    pub m: usize,
    /// Total cost of the sliced solution.
    pub sliced_cost: f64,
    /// Total cost of the exact solution, when provided.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_cost: Option<f64>,
    /// Per-slice costs of the sliced solution.
    pub slice_costs: Vec<f64>,
    /// Per-slice costs of the exact solution restricted to the same ranges.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_slice_costs: Option<Vec<f64>>,
    /// Per-slice excess `delta_i` of the sliced over the exact restriction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_excess: Option<Vec<f64>>,
    /// Largest per-slice excess `delta_max` (signed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_excess: Option<f64>,
    /// Optimality gap `eps = (Js - J*) / J*`; absent when `J*` is zero or
    /// unknown.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Certified bound `m * delta_max / J*` on the gap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_bound: Option<f64>,
}

/// Compare a sliced solution against the exact optimum (when available) and
/// report per-slice costs, excesses and the certified gap bound.
pub fn gap_analysis(
    sliced: &Solution,
    optimal: Option<&Solution>,
    scenario: &Scenario,
    plan: &SlicePlan,
) -> Result<GapReport, SliceError> {
    let slice_breakdown = attributed_costs(sliced, scenario, plan)?;
    let slice_costs: Vec<f64> = slice_breakdown.iter().map(|c| c.total).collect();
    let sliced_cost: f64 = slice_costs.iter().sum();
    let m = plan.slice_count();

    let mut report = GapReport {
        format_version: 1,
        m,
        sliced_cost,
        optimal_cost: None,
        slice_costs,
        optimal_slice_costs: None,
        slice_excess: None,
        max_excess: None,
        epsilon: None,
        epsilon_bound: None,
    };
    let Some(optimal) = optimal else {
        return Ok(report);
    };

    let optimal_breakdown = attributed_costs(optimal, scenario, plan)?;
    let optimal_costs: Vec<f64> = optimal_breakdown.iter().map(|c| c.total).collect();
    let optimal_cost: f64 = optimal_costs.iter().sum();
    let excess: Vec<f64> = report
        .slice_costs
        .iter()
        .zip(&optimal_costs)
        .map(|(s, o)| s - o)
        .collect();
    let max_excess = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.optimal_cost = Some(optimal_cost);
    report.optimal_slice_costs = Some(optimal_costs);
    report.slice_excess = Some(excess);
    report.max_excess = Some(max_excess);
    if optimal_cost > 1e-12 {
        report.epsilon = Some((sliced_cost - optimal_cost) / optimal_cost);
        report.epsilon_bound = Some(m as f64 * max_excess / optimal_cost);
    }
    Ok(report)
}
