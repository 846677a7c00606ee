//! Domain types for planning among movable disc obstacles.
//!
//! A [`Scenario`] describes the complete problem: a robot with one of two
//! linear motion models, a horizon of `T` timesteps of duration `tau`, a set
//! of movable disc obstacles, box bounds on every state and input, and the
//! cost weights. A [`Solution`] holds the time-indexed trajectories of the
//! robot and of every obstacle together with the collision binaries chosen by
//! the solver and the cost breakdown.
//!
//! Everything in this module is a plain immutable value and every operation
//! is a pure function, so evaluation is safe from any number of threads.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance used when checking solutions for feasibility.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-6;
/// Tolerance expected of dynamics residuals on solver output.
pub const DYNAMICS_RESIDUAL_TOL: f64 = 1e-9;

/// Errors from domain-level operations.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("robot state/control form does not match the {expected} model")]
    FormMismatch { expected: RobotModel },
    #[error("empty obstacle trajectory")]
    EmptyTrajectory,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// The two supported robot motion models. Both are linear, which is what
/// makes the collision-free planning problem solvable to global optimality
/// once the disc constraint is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobotModel {
    /// Velocity-driven pose integrator: state `(x, y, theta)`, control
    /// `(ux, uy, utheta)` in units of velocity.
    #[serde(rename = "first-order")]
    FirstOrder,
    /// Double integrator: state `(x, y, vx, vy)`, control `(ax, ay)` in
    /// units of acceleration.
    #[serde(rename = "double-integrator")]
    DoubleIntegrator,
}

impl RobotModel {
    pub fn state_dim(self) -> usize {
        match self {
            RobotModel::FirstOrder => 3,
            RobotModel::DoubleIntegrator => 4,
        }
    }

    pub fn control_dim(self) -> usize {
        match self {
            RobotModel::FirstOrder => 3,
            RobotModel::DoubleIntegrator => 2,
        }
    }
}

impl fmt::Display for RobotModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotModel::FirstOrder => write!(f, "first-order"),
            RobotModel::DoubleIntegrator => write!(f, "double-integrator"),
        }
    }
}

/// Robot state; exactly one form is active per scenario, fixed for all
/// timesteps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobotState {
    /// `(x, y, theta)` for the first-order model.
    Pose { x: f64, y: f64, theta: f64 },
    /// `(x, y, vx, vy)` for the double-integrator model.
    Kinodynamic { x: f64, y: f64, vx: f64, vy: f64 },
}

impl RobotState {
    pub fn model(&self) -> RobotModel {
        match self {
            RobotState::Pose { .. } => RobotModel::FirstOrder,
            RobotState::Kinodynamic { .. } => RobotModel::DoubleIntegrator,
        }
    }

    /// Planar position components, common to both forms.
    pub fn position(&self) -> (f64, f64) {
        match *self {
            RobotState::Pose { x, y, .. } => (x, y),
            RobotState::Kinodynamic { x, y, .. } => (x, y),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            RobotState::Pose { x, y, theta } => vec![x, y, theta],
            RobotState::Kinodynamic { x, y, vx, vy } => vec![x, y, vx, vy],
        }
    }

    pub fn from_slice(model: RobotModel, v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != model.state_dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "robot state needs {} components for the {model} model, got {}",
                model.state_dim(),
                v.len()
            )));
        }
        Ok(match model {
            RobotModel::FirstOrder => RobotState::Pose {
                x: v[0],
                y: v[1],
                theta: v[2],
            },
            RobotModel::DoubleIntegrator => RobotState::Kinodynamic {
                x: v[0],
                y: v[1],
                vx: v[2],
                vy: v[3],
            },
        })
    }
}

/// Robot control input, matching the state form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobotControl {
    /// `(ux, uy, utheta)`: velocities for the first-order model.
    Velocity { ux: f64, uy: f64, utheta: f64 },
    /// `(ax, ay)`: accelerations for the double-integrator model.
    Acceleration { ax: f64, ay: f64 },
}

impl RobotControl {
    pub fn model(&self) -> RobotModel {
        match self {
            RobotControl::Velocity { .. } => RobotModel::FirstOrder,
            RobotControl::Acceleration { .. } => RobotModel::DoubleIntegrator,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            RobotControl::Velocity { ux, uy, utheta } => vec![ux, uy, utheta],
            RobotControl::Acceleration { ax, ay } => vec![ax, ay],
        }
    }

    pub fn from_slice(model: RobotModel, v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != model.control_dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "robot control needs {} components for the {model} model, got {}",
                model.control_dim(),
                v.len()
            )));
        }
        Ok(match model {
            RobotModel::FirstOrder => RobotControl::Velocity {
                ux: v[0],
                uy: v[1],
                utheta: v[2],
            },
            RobotModel::DoubleIntegrator => RobotControl::Acceleration { ax: v[0], ay: v[1] },
        })
    }
}

/// Obstacle state: planar position plus an orientation angle. Discs never
/// collide through their orientation; it is carried so that rotation shows up
/// in the displacement cost symmetrically with translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub ox: f64,
    pub oy: f64,
    pub otheta: f64,
}

impl ObstacleState {
    pub fn new(ox: f64, oy: f64, otheta: f64) -> Self {
        Self { ox, oy, otheta }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.ox, self.oy, self.otheta]
    }
}

/// Per-step obstacle velocity `(sx, sy, stheta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleVelocity {
    pub sx: f64,
    pub sy: f64,
    pub stheta: f64,
}

impl ObstacleVelocity {
    pub fn new(sx: f64, sy: f64, stheta: f64) -> Self {
        Self { sx, sy, stheta }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.sx, self.sy, self.stheta]
    }
}

/// Net displacement of one obstacle over a trajectory: the final state minus
/// the initial state, componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Displacement {
    /// Planar displacement magnitude. The angular component is excluded
    /// because it carries different units.
    pub fn magnitude(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Componentwise lower/upper box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        let b = Self { lower, upper };
        b.validate(b.lower.len(), "bounds")?;
        Ok(b)
    }

    /// Symmetric bounds `[-limit, limit]^dim`.
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self {
            lower: vec![-limit; dim],
            upper: vec![limit; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self, expected_dim: usize, what: &str) -> Result<(), ModelError> {
        if self.lower.len() != expected_dim || self.upper.len() != expected_dim {
            return Err(ModelError::InvalidScenario(format!(
                "{what}: expected {expected_dim} components, got {}/{}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..expected_dim {
            if !self.lower[i].is_finite() || !self.upper[i].is_finite() {
                return Err(ModelError::InvalidScenario(format!(
                    "{what}: component {i} is not finite"
                )));
            }
            if self.lower[i] > self.upper[i] {
                return Err(ModelError::InvalidScenario(format!(
                    "{what}: lower bound exceeds upper bound at component {i}"
                )));
            }
        }
        Ok(())
    }

    /// Worst violation of `v` against the box (0 when inside).
    pub fn violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..v.len().min(self.dim()) {
            worst = worst.max(self.lower[i] - v[i]).max(v[i] - self.upper[i]);
        }
        worst
    }
}

/// A movable disc obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub initial: ObstacleState,
    pub radius: f64,
    /// Box bounds on the obstacle state for every timestep.
    pub state_bounds: Bounds,
    /// Box bounds on the obstacle velocity for every step.
    pub velocity_bounds: Bounds,
}

/// Cost weights. `alpha_r` scales the robot term, `alpha_o` the obstacle
/// displacement term, and `alpha_re` the terminal goal penalty inside the
/// robot term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha_r: f64,
    pub alpha_o: f64,
    pub alpha_re: f64,
}

impl Weights {
    /// Benchmark default: displacement strongly penalized relative to path
    /// length, with a firm goal pull.
    pub fn standard() -> Self {
        Self {
            alpha_r: 0.5,
            alpha_o: 100.0,
            alpha_re: 10.0,
        }
    }

    /// Indoor preset that tolerates displacing clutter.
    pub fn light_displacement() -> Self {
        Self {
            alpha_r: 1.0,
            alpha_o: 10.0,
            alpha_re: 1.0,
        }
    }

    /// Indoor preset that strongly avoids displacing anything.
    pub fn heavy_displacement() -> Self {
        Self {
            alpha_r: 1.0,
            alpha_o: 1000.0,
            alpha_re: 1.0,
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::standard()
    }
}

/// How the end of the horizon is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalMode {
    /// Quadratic penalty `alpha_re * ||x_T - goal||^2` inside the robot term.
    Soft,
    /// Equality constraint pinning the final position to the goal position;
    /// the penalty is dropped.
    Hard,
}

/// A complete problem statement.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: RobotModel,
    pub start: RobotState,
    pub goal: RobotState,
    pub robot_radius: f64,
    /// Number of timesteps `T`; the trajectory has states `1..=T`.
    pub horizon: usize,
    /// Step duration in seconds.
    pub timestep: f64,
    pub state_bounds: Bounds,
    pub control_bounds: Bounds,
    pub obstacles: Vec<Obstacle>,
    pub weights: Weights,
    pub terminal: TerminalMode,
    /// Include heading changes in the robot path term (first-order model
    /// only). Off by default: heading changes are not path length.
    pub heading_in_path_cost: bool,
}

impl Scenario {
    pub fn obstacle_count(&self) -> usize {
        self.obstacles.len()
    }

    /// Validate the scenario invariants. Checks structure, positivity of
    /// radii and weights, bound membership of the endpoints, and that the
    /// start is collision-free against every obstacle at its initial state.
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::InvalidScenario(m));
        if self.horizon < 2 {
            return err(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if !(self.timestep > 0.0) || !self.timestep.is_finite() {
            return err(format!("timestep must be positive, got {}", self.timestep));
        }
        if !(self.robot_radius > 0.0) {
            return err(format!(
                "robot_radius must be positive, got {}",
                self.robot_radius
            ));
        }
        for (name, w) in [
            ("alpha_r", self.weights.alpha_r),
            ("alpha_o", self.weights.alpha_o),
            ("alpha_re", self.weights.alpha_re),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return err(format!("weight {name} must be nonnegative, got {w}"));
            }
        }
        if self.start.model() != self.model {
            return err("start state form does not match the robot model".into());
        }
        if self.goal.model() != self.model {
            return err("goal state form does not match the robot model".into());
        }
        self.state_bounds
            .validate(self.model.state_dim(), "state bounds")?;
        self.control_bounds
            .validate(self.model.control_dim(), "control bounds")?;
        if self.state_bounds.violation(&self.start.to_vec()) > 0.0 {
            return err("start state lies outside the state bounds".into());
        }
        if self.state_bounds.violation(&self.goal.to_vec()) > 0.0 {
            return err("goal state lies outside the state bounds".into());
        }
        for (i, obs) in self.obstacles.iter().enumerate() {
            if !(obs.radius > 0.0) {
                return err(format!("obstacle {i}: radius must be positive"));
            }
            obs.state_bounds
                .validate(3, &format!("obstacle {i} state bounds"))?;
            obs.velocity_bounds
                .validate(3, &format!("obstacle {i} velocity bounds"))?;
            if obs.state_bounds.violation(&obs.initial.to_array()) > 0.0 {
                return err(format!(
                    "obstacle {i}: initial state lies outside its state bounds"
                ));
            }
            let (sx, sy) = self.start.position();
            let dist = (sx - obs.initial.ox).hypot(sy - obs.initial.oy);
            if dist < self.robot_radius + obs.radius {
                return err(format!(
                    "start state is in collision with obstacle {i} \
                     (distance {dist:.4} < {:.4})",
                    self.robot_radius + obs.radius
                ));
            }
        }
        Ok(())
    }
}

/// Terminal outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap-limit",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::Infeasible => "infeasible",
        };
        write!(f, "{s}")
    }
}

/// Solver metadata attached to a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveMeta {
    /// Branch-and-bound nodes explored (0 when not applicable).
    pub nodes: u64,
    pub wall_time: Duration,
    pub status: SolveStatus,
}

impl Default for SolveMeta {
    fn default() -> Self {
        Self {
            nodes: 0,
            wall_time: Duration::ZERO,
            status: SolveStatus::Optimal,
        }
    }
}

/// Cost breakdown `total = alpha_r * robot + alpha_o * obstacle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Weighted total objective.
    pub total: f64,
    /// Robot term: squared path steps plus the weighted terminal penalty.
    pub robot: f64,
    /// Obstacle term: time-weighted squared displacement velocities.
    pub obstacle: f64,
}

/// A candidate or solved trajectory for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Robot states `x_1..x_T`.
    pub robot_states: Vec<RobotState>,
    /// Controls `u_1..u_{T-1}`.
    pub controls: Vec<RobotControl>,
    /// Per obstacle, states `o_1..o_T` (outer index: obstacle).
    pub obstacle_states: Vec<Vec<ObstacleState>>,
    /// Per obstacle, velocities `s_1..s_{T-1}` (outer index: obstacle).
    pub obstacle_velocities: Vec<Vec<ObstacleVelocity>>,
    /// Collision binaries per step and obstacle: `binaries[k][i]` holds the
    /// four axis selectors at step `k+1` (steps `1..=T-1`).
    pub binaries: Vec<Vec<[u8; 4]>>,
    pub cost: CostBreakdown,
    pub meta: SolveMeta,
}

impl Solution {
    pub fn horizon(&self) -> usize {
        self.robot_states.len()
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacle_states.len()
    }

    /// Net displacement of obstacle `i`.
    pub fn displacement(&self, i: usize) -> Result<Displacement, ModelError> {
        total_displacement(&self.obstacle_states[i])
    }

    /// Sum of planar displacement magnitudes over all obstacles.
    pub fn total_displacement_magnitude(&self) -> f64 {
        self.obstacle_states
            .iter()
            .filter_map(|traj| total_displacement(traj).ok())
            .map(|d| d.magnitude())
            .sum()
    }
}

/// Worst violation per constraint family for a candidate solution. Values
/// can be negative when there is slack; a solution is feasible at tolerance
/// `tol` when every field is at most `tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    /// Worst absolute residual of the robot and obstacle update equations.
    pub dynamics_residual: f64,
    /// Worst box-bound violation over states, controls and velocities.
    pub bound_violation: f64,
    /// Worst Euclidean clearance deficit `r^r + r^o - dist` over steps
    /// `1..=T-1` and all obstacles.
    pub clearance_deficit: f64,
    /// Start-state mismatch, plus the goal-position mismatch under a hard
    /// terminal.
    pub endpoint_residual: f64,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.dynamics_residual
            .max(self.bound_violation)
            .max(self.clearance_deficit)
            .max(self.endpoint_residual)
    }

    /// True when every family is within `tol`, i.e. the report is empty.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dynamics {:.3e}, bounds {:.3e}, clearance {:.3e}, endpoints {:.3e}",
            self.dynamics_residual,
            self.bound_violation,
            self.clearance_deficit,
            self.endpoint_residual
        )
    }
}

/// Advance the robot state by one step of duration `tau`.
///
/// First-order: every pose component moves by `tau` times its control rate.
/// Double integrator: positions gain `tau * v + tau^2/2 * a`, velocities gain
/// `tau * a`.
pub fn step_robot(
    state: &RobotState,
    control: &RobotControl,
    tau: f64,
    model: RobotModel,
) -> Result<RobotState, ModelError> {
    if state.model() != model || control.model() != model {
        return Err(ModelError::FormMismatch { expected: model });
    }
    Ok(match (*state, *control) {
        (RobotState::Pose { x, y, theta }, RobotControl::Velocity { ux, uy, utheta }) => {
            RobotState::Pose {
                x: x + tau * ux,
                y: y + tau * uy,
                theta: theta + tau * utheta,
            }
        }
        (RobotState::Kinodynamic { x, y, vx, vy }, RobotControl::Acceleration { ax, ay }) => {
            RobotState::Kinodynamic {
                x: x + tau * vx + 0.5 * tau * tau * ax,
                y: y + tau * vy + 0.5 * tau * tau * ay,
                vx: vx + tau * ax,
                vy: vy + tau * ay,
            }
        }
        _ => unreachable!("forms checked above"),
    })
}

/// Advance an obstacle state by one step: each component moves by `tau`
/// times its velocity.
pub fn step_obstacle(state: &ObstacleState, vel: &ObstacleVelocity, tau: f64) -> ObstacleState {
    ObstacleState {
        ox: state.ox + tau * vel.sx,
        oy: state.oy + tau * vel.sy,
        otheta: state.otheta + tau * vel.stheta,
    }
}

/// Net displacement over an obstacle trajectory: final minus initial state.
pub fn total_displacement(trajectory: &[ObstacleState]) -> Result<Displacement, ModelError> {
    let first = trajectory.first().ok_or(ModelError::EmptyTrajectory)?;
    let last = trajectory.last().unwrap();
    Ok(Displacement {
        dx: last.ox - first.ox,
        dy: last.oy - first.oy,
        dtheta: last.otheta - first.otheta,
    })
}

fn check_dims(solution: &Solution, scenario: &Scenario) -> Result<(), ModelError> {
    let t = scenario.horizon;
    let n_obs = scenario.obstacle_count();
    if solution.robot_states.len() != t {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {t} robot states, got {}",
            solution.robot_states.len()
        )));
    }
    if solution.controls.len() != t - 1 {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {} controls, got {}",
            t - 1,
            solution.controls.len()
        )));
    }
    if solution.obstacle_states.len() != n_obs || solution.obstacle_velocities.len() != n_obs {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {n_obs} obstacle trajectories, got {}/{}",
            solution.obstacle_states.len(),
            solution.obstacle_velocities.len()
        )));
    }
    for i in 0..n_obs {
        if solution.obstacle_states[i].len() != t {
            return Err(ModelError::DimensionMismatch(format!(
                "obstacle {i}: expected {t} states, got {}",
                solution.obstacle_states[i].len()
            )));
        }
        if solution.obstacle_velocities[i].len() != t - 1 {
            return Err(ModelError::DimensionMismatch(format!(
                "obstacle {i}: expected {} velocities, got {}",
                t - 1,
                solution.obstacle_velocities[i].len()
            )));
        }
    }
    for state in &solution.robot_states {
        if state.model() != scenario.model {
            return Err(ModelError::FormMismatch {
                expected: scenario.model,
            });
        }
    }
    for control in &solution.controls {
        if control.model() != scenario.model {
            return Err(ModelError::FormMismatch {
                expected: scenario.model,
            });
        }
    }
    Ok(())
}

/// Squared difference of the robot path step `k -> k+1`, positional
/// components only unless the scenario opts heading in.
fn step_cost(a: &RobotState, b: &RobotState, scenario: &Scenario) -> f64 {
    let (ax, ay) = a.position();
    let (bx, by) = b.position();
    let mut c = (bx - ax).powi(2) + (by - ay).powi(2);
    if scenario.heading_in_path_cost {
        if let (RobotState::Pose { theta: ta, .. }, RobotState::Pose { theta: tb, .. }) = (a, b) {
            c += (tb - ta).powi(2);
        }
    }
    c
}

/// Full-state squared terminal deviation from the goal.
fn terminal_cost(last: &RobotState, goal: &RobotState) -> f64 {
    last.to_vec()
        .iter()
        .zip(goal.to_vec().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

/// Evaluate the objective on a candidate solution.
///
/// The robot term sums squared positional path steps and, under a soft
/// terminal, adds `alpha_re` times the squared full-state deviation of the
/// final state from the goal. The obstacle term sums `tau * ||s||^2` over
/// every obstacle and step. The total is the `alpha_r`/`alpha_o` weighted
/// combination.
pub fn evaluate_cost(
    solution: &Solution,
    scenario: &Scenario,
) -> Result<CostBreakdown, ModelError> {
    check_dims(solution, scenario)?;
    let mut robot = 0.0;
    for k in 0..scenario.horizon - 1 {
        robot += step_cost(
            &solution.robot_states[k],
            &solution.robot_states[k + 1],
            scenario,
        );
    }
    if scenario.terminal == TerminalMode::Soft {
        robot += scenario.weights.alpha_re
            * terminal_cost(solution.robot_states.last().unwrap(), &scenario.goal);
    }
    let mut obstacle = 0.0;
    for velocities in &solution.obstacle_velocities {
        for s in velocities {
            obstacle += scenario.timestep * (s.sx * s.sx + s.sy * s.sy + s.stheta * s.stheta);
        }
    }
    Ok(CostBreakdown {
        total: scenario.weights.alpha_r * robot + scenario.weights.alpha_o * obstacle,
        robot,
        obstacle,
    })
}

/// Check a candidate solution against every constraint family and report the
/// worst violation per family.
///
/// Clearance uses the Euclidean disc semantics over steps `1..=T-1`; the
/// final state is unconstrained, matching the formulation's default
/// quantifier.
pub fn check_feasibility(
    solution: &Solution,
    scenario: &Scenario,
    _tol: f64,
) -> Result<FeasibilityReport, ModelError> {
    check_dims(solution, scenario)?;
    let tau = scenario.timestep;
    let t = scenario.horizon;

    let mut dynamics: f64 = 0.0;
    for k in 0..t - 1 {
        let predicted = step_robot(
            &solution.robot_states[k],
            &solution.controls[k],
            tau,
            scenario.model,
        )?;
        for (p, a) in predicted
            .to_vec()
            .iter()
            .zip(solution.robot_states[k + 1].to_vec().iter())
        {
            dynamics = dynamics.max((p - a).abs());
        }
    }
    for i in 0..scenario.obstacle_count() {
        for k in 0..t - 1 {
            let predicted = step_obstacle(
                &solution.obstacle_states[i][k],
                &solution.obstacle_velocities[i][k],
                tau,
            );
            for (p, a) in predicted
                .to_array()
                .iter()
                .zip(solution.obstacle_states[i][k + 1].to_array().iter())
            {
                dynamics = dynamics.max((p - a).abs());
            }
        }
    }

    let mut bounds: f64 = f64::NEG_INFINITY;
    for state in &solution.robot_states {
        bounds = bounds.max(scenario.state_bounds.violation(&state.to_vec()));
    }
    for control in &solution.controls {
        bounds = bounds.max(scenario.control_bounds.violation(&control.to_vec()));
    }
    for (i, obs) in scenario.obstacles.iter().enumerate() {
        for state in &solution.obstacle_states[i] {
            bounds = bounds.max(obs.state_bounds.violation(&state.to_array()));
        }
        for vel in &solution.obstacle_velocities[i] {
            bounds = bounds.max(obs.velocity_bounds.violation(&vel.to_array()));
        }
    }

    let mut clearance = f64::NEG_INFINITY;
    for k in 0..t - 1 {
        let (rx, ry) = solution.robot_states[k].position();
        for (i, obs) in scenario.obstacles.iter().enumerate() {
            let o = &solution.obstacle_states[i][k];
            let dist = (rx - o.ox).hypot(ry - o.oy);
            clearance = clearance.max(scenario.robot_radius + obs.radius - dist);
        }
    }
    if !clearance.is_finite() {
        clearance = 0.0; // no obstacles
    }
    if !bounds.is_finite() {
        bounds = 0.0;
    }

    let mut endpoints: f64 = 0.0;
    for (a, b) in solution.robot_states[0]
        .to_vec()
        .iter()
        .zip(scenario.start.to_vec().iter())
    {
        endpoints = endpoints.max((a - b).abs());
    }
    for (i, obs) in scenario.obstacles.iter().enumerate() {
        for (a, b) in solution.obstacle_states[i][0]
            .to_array()
            .iter()
            .zip(obs.initial.to_array().iter())
        {
            endpoints = endpoints.max((a - b).abs());
        }
    }
    if scenario.terminal == TerminalMode::Hard {
        let (gx, gy) = scenario.goal.position();
        let (fx, fy) = solution.robot_states[t - 1].position();
        endpoints = endpoints.max((fx - gx).abs()).max((fy - gy).abs());
    }

    Ok(FeasibilityReport {
        dynamics_residual: dynamics,
        bound_violation: bounds,
        clearance_deficit: clearance,
        endpoint_residual: endpoints,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn pose(x: f64, y: f64, theta: f64) -> RobotState {
        RobotState::Pose { x, y, theta }
    }

    /// A small scenario used across the unit tests.
    pub fn toy_scenario(horizon: usize, obstacles: Vec<Obstacle>) -> Scenario {
        Scenario {
            model: RobotModel::FirstOrder,
            start: pose(0.0, 0.0, 0.0),
            goal: pose(2.0, 0.0, 0.0),
            robot_radius: 0.5,
            horizon,
            timestep: 0.5,
            state_bounds: Bounds {
                lower: vec![-10.0, -10.0, -100.0],
                upper: vec![10.0, 10.0, 100.0],
            },
            control_bounds: Bounds::symmetric(3, 5.0),
            obstacles,
            weights: Weights {
                alpha_r: 1.0,
                alpha_o: 1.0,
                alpha_re: 10.0,
            },
            terminal: TerminalMode::Soft,
            heading_in_path_cost: false,
        }
    }

    pub fn default_obstacle(ox: f64, oy: f64, radius: f64) -> Obstacle {
        Obstacle {
            initial: ObstacleState::new(ox, oy, 0.0),
            radius,
            state_bounds: Bounds {
                lower: vec![-20.0, -20.0, -100.0],
                upper: vec![20.0, 20.0, 100.0],
            },
            velocity_bounds: Bounds::symmetric(3, 3.0),
        }
    }

    /// Build a dynamics-consistent solution by folding the dynamics.
    pub fn rollout(
        scenario: &Scenario,
        controls: Vec<RobotControl>,
        velocities: Vec<Vec<ObstacleVelocity>>,
    ) -> Solution {
        let t = scenario.horizon;
        let mut robot_states = vec![scenario.start];
        for k in 0..t - 1 {
            robot_states.push(
                step_robot(
                    &robot_states[k],
                    &controls[k],
                    scenario.timestep,
                    scenario.model,
                )
                .unwrap(),
            );
        }
        let mut obstacle_states = Vec::new();
        for (i, obs) in scenario.obstacles.iter().enumerate() {
            let mut states = vec![obs.initial];
            for k in 0..t - 1 {
                states.push(step_obstacle(
                    &states[k],
                    &velocities[i][k],
                    scenario.timestep,
                ));
            }
            obstacle_states.push(states);
        }
        let binaries = vec![vec![[0, 1, 1, 1]; scenario.obstacle_count()]; t - 1];
        let mut solution = Solution {
            robot_states,
            controls,
            obstacle_states,
            obstacle_velocities: velocities,
            binaries,
            cost: CostBreakdown {
                total: 0.0,
                robot: 0.0,
                obstacle: 0.0,
            },
            meta: SolveMeta::default(),
        };
        solution.cost = evaluate_cost(&solution, scenario).unwrap();
        solution
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_robot_first_order_single_axis() {
        let next = step_robot(
            &pose(0.0, 0.0, 0.0),
            &RobotControl::Velocity {
                ux: 1.0,
                uy: 0.0,
                utheta: 0.0,
            },
            0.5,
            RobotModel::FirstOrder,
        )
        .unwrap();
        assert_eq!(next, pose(0.5, 0.0, 0.0));
    }

    #[test]
    fn step_robot_double_integrator_coasts() {
        let next = step_robot(
            &RobotState::Kinodynamic {
                x: 0.0,
                y: 0.0,
                vx: 1.0,
                vy: 0.0,
            },
            &RobotControl::Acceleration { ax: 0.0, ay: 0.0 },
            1.0,
            RobotModel::DoubleIntegrator,
        )
        .unwrap();
        assert_eq!(
            next,
            RobotState::Kinodynamic {
                x: 1.0,
                y: 0.0,
                vx: 1.0,
                vy: 0.0
            }
        );
    }

    #[test]
    fn step_robot_double_integrator_half_tau_squared() {
        let next = step_robot(
            &RobotState::Kinodynamic {
                x: 0.0,
                y: 0.0,
                vx: 0.0,
                vy: 0.0,
            },
            &RobotControl::Acceleration { ax: 2.0, ay: 0.0 },
            1.0,
            RobotModel::DoubleIntegrator,
        )
        .unwrap();
        assert_eq!(
            next,
            RobotState::Kinodynamic {
                x: 1.0,
                y: 0.0,
                vx: 2.0,
                vy: 0.0
            }
        );
    }

    #[test]
    fn step_robot_rejects_mismatched_forms() {
        let err = step_robot(
            &pose(0.0, 0.0, 0.0),
            &RobotControl::Acceleration { ax: 0.0, ay: 0.0 },
            0.5,
            RobotModel::FirstOrder,
        );
        assert!(matches!(err, Err(ModelError::FormMismatch { .. })));
    }

    #[test]
    fn step_obstacle_examples() {
        let zero = ObstacleVelocity::new(0.0, 0.0, 0.0);
        assert_eq!(
            step_obstacle(&ObstacleState::new(1.0, 1.0, 0.0), &zero, 7.0),
            ObstacleState::new(1.0, 1.0, 0.0)
        );
        assert_eq!(
            step_obstacle(
                &ObstacleState::new(0.0, 0.0, 0.0),
                &ObstacleVelocity::new(0.0, 2.0, 0.0),
                0.5
            ),
            ObstacleState::new(0.0, 1.0, 0.0)
        );
        assert_eq!(
            step_obstacle(
                &ObstacleState::new(1.0, 0.0, 0.0),
                &ObstacleVelocity::new(-1.0, 0.0, 1.0),
                1.0
            ),
            ObstacleState::new(0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn total_displacement_examples() {
        let single = vec![ObstacleState::new(0.0, 0.0, 0.0)];
        let d = total_displacement(&single).unwrap();
        assert_eq!((d.dx, d.dy, d.dtheta), (0.0, 0.0, 0.0));

        let telescoped = vec![
            ObstacleState::new(0.0, 0.0, 0.0),
            ObstacleState::new(1.0, 0.0, 0.0),
            ObstacleState::new(1.0, 2.0, 0.0),
        ];
        let d = total_displacement(&telescoped).unwrap();
        assert_eq!((d.dx, d.dy, d.dtheta), (1.0, 2.0, 0.0));

        assert!(matches!(
            total_displacement(&[]),
            Err(ModelError::EmptyTrajectory)
        ));
    }

    #[test]
    fn total_displacement_matches_stepped_trajectory() {
        // Fold step_obstacle five times at unit tau and compare against the
        // hand-computed sum of per-step displacements.
        let vel = ObstacleVelocity::new(0.3, 0.4, 0.0);
        let mut traj = vec![ObstacleState::new(0.0, 0.0, 0.0)];
        for _ in 0..5 {
            traj.push(step_obstacle(traj.last().unwrap(), &vel, 1.0));
        }
        let d = total_displacement(&traj).unwrap();
        assert!((d.dx - 1.5).abs() < 1e-12);
        assert!((d.dy - 2.0).abs() < 1e-12);
        assert_eq!(d.dtheta, 0.0);
        assert!((d.magnitude() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_cost_stationary_at_goal_is_zero() {
        let mut scenario = toy_scenario(3, vec![]);
        scenario.start = scenario.goal;
        let zero = RobotControl::Velocity {
            ux: 0.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let solution = rollout(&scenario, vec![zero; 2], vec![]);
        let c = solution.cost;
        assert_eq!((c.total, c.robot, c.obstacle), (0.0, 0.0, 0.0));
    }

    #[test]
    fn evaluate_cost_two_unit_steps() {
        // Straight path of two unit steps ending exactly at the goal.
        let scenario = toy_scenario(3, vec![]);
        let u = RobotControl::Velocity {
            ux: 2.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let solution = rollout(&scenario, vec![u; 2], vec![]);
        let c = solution.cost;
        assert!((c.robot - 2.0).abs() < 1e-12);
        assert!(c.obstacle.abs() < 1e-15);
    }

    #[test]
    fn evaluate_cost_obstacle_velocity_sum() {
        // One obstacle pushed at unit speed for three steps at tau = 0.5 with
        // alpha_o = 2: obstacle term 3 * 0.5 * 1 = 1.5, contribution 3.0.
        let mut scenario = toy_scenario(4, vec![default_obstacle(5.0, 5.0, 0.5)]);
        scenario.weights.alpha_o = 2.0;
        scenario.weights.alpha_r = 1.0;
        let zero = RobotControl::Velocity {
            ux: 0.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let push = ObstacleVelocity::new(1.0, 0.0, 0.0);
        let solution = rollout(&scenario, vec![zero; 3], vec![vec![push; 3]]);
        let c = solution.cost;
        assert!((c.obstacle - 1.5).abs() < 1e-12);
        assert!((c.total - (scenario.weights.alpha_r * c.robot + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn check_feasibility_flags_overlap_and_dynamics() {
        let scenario = toy_scenario(3, vec![default_obstacle(1.0, 0.0, 0.5)]);
        let zero = RobotControl::Velocity {
            ux: 0.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let still = ObstacleVelocity::new(0.0, 0.0, 0.0);
        let mut solution = rollout(&scenario, vec![zero; 2], vec![vec![still; 2]]);

        // Place the robot exactly at the obstacle center at step 2.
        solution.robot_states[1] = pose(1.0, 0.0, 0.0);
        let report = check_feasibility(&solution, &scenario, 1e-6).unwrap();
        assert!((report.clearance_deficit - 1.0).abs() < 1e-12);
        // The teleport also breaks the dynamics by exactly 1.0 in x.
        assert!((report.dynamics_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn check_feasibility_reports_perturbation() {
        let scenario = toy_scenario(4, vec![]);
        let u = RobotControl::Velocity {
            ux: 1.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let mut solution = rollout(&scenario, vec![u; 3], vec![]);
        if let RobotState::Pose { x, .. } = &mut solution.robot_states[2] {
            *x += 0.1;
        }
        let report = check_feasibility(&solution, &scenario, 1e-6).unwrap();
        assert!((report.dynamics_residual - 0.1).abs() < 1e-12);
        assert!(!report.passes(1e-6));
    }

    #[test]
    fn scenario_validation_catches_bad_fields() {
        let good = toy_scenario(5, vec![default_obstacle(5.0, 0.0, 0.5)]);
        assert!(good.validate().is_ok());

        let mut bad = good.clone();
        bad.horizon = 1;
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.timestep = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.robot_radius = -1.0;
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.weights.alpha_o = -0.5;
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.start = pose(100.0, 0.0, 0.0);
        assert!(bad.validate().is_err());

        // Start inside an obstacle.
        let mut bad = good;
        bad.obstacles[0].initial = ObstacleState::new(0.3, 0.0, 0.0);
        assert!(bad.validate().is_err());
    }

    proptest! {
        /// Dynamics are linear: stepping a scaled combination equals the
        /// scaled combination of the stepped states, for both models.
        #[test]
        fn dynamics_commute_with_linear_combination(
            s1 in proptest::collection::vec(-5.0f64..5.0, 4),
            s2 in proptest::collection::vec(-5.0f64..5.0, 4),
            c1 in proptest::collection::vec(-2.0f64..2.0, 3),
            c2 in proptest::collection::vec(-2.0f64..2.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            tau in 0.05f64..2.0,
        ) {
            for model in [RobotModel::FirstOrder, RobotModel::DoubleIntegrator] {
                let sd = model.state_dim();
                let cd = model.control_dim();
                let x1 = RobotState::from_slice(model, &s1[..sd]).unwrap();
                let x2 = RobotState::from_slice(model, &s2[..sd]).unwrap();
                let u1 = RobotControl::from_slice(model, &c1[..cd]).unwrap();
                let u2 = RobotControl::from_slice(model, &c2[..cd]).unwrap();

                let combo_state: Vec<f64> = x1.to_vec().iter().zip(x2.to_vec())
                    .map(|(p, q)| a * p + b * q).collect();
                let combo_control: Vec<f64> = u1.to_vec().iter().zip(u2.to_vec())
                    .map(|(p, q)| a * p + b * q).collect();
                let stepped_combo = step_robot(
                    &RobotState::from_slice(model, &combo_state).unwrap(),
                    &RobotControl::from_slice(model, &combo_control).unwrap(),
                    tau,
                    model,
                ).unwrap();

                let y1 = step_robot(&x1, &u1, tau, model).unwrap();
                let y2 = step_robot(&x2, &u2, tau, model).unwrap();
                let combined: Vec<f64> = y1.to_vec().iter().zip(y2.to_vec())
                    .map(|(p, q)| a * p + b * q).collect();

                for (lhs, rhs) in stepped_combo.to_vec().iter().zip(combined) {
                    prop_assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }

        /// Total displacement telescopes the per-step velocities.
        #[test]
        fn displacement_telescopes(
            vels in proptest::collection::vec(
                (-2.0f64..2.0, -2.0f64..2.0, -1.0f64..1.0), 1..12),
            tau in 0.05f64..2.0,
        ) {
            let mut traj = vec![ObstacleState::new(0.4, -0.7, 0.1)];
            let (mut sx, mut sy, mut st) = (0.0, 0.0, 0.0);
            for (vx, vy, vt) in &vels {
                let v = ObstacleVelocity::new(*vx, *vy, *vt);
                traj.push(step_obstacle(traj.last().unwrap(), &v, tau));
                sx += tau * vx;
                sy += tau * vy;
                st += tau * vt;
            }
            let d = total_displacement(&traj).unwrap();
            prop_assert!((d.dx - sx).abs() < 1e-12);
            prop_assert!((d.dy - sy).abs() < 1e-12);
            prop_assert!((d.dtheta - st).abs() < 1e-12);
        }

        /// Costs are nonnegative and decompose exactly.
        #[test]
        fn cost_decomposition_is_exact(
            ux in -2.0f64..2.0,
            uy in -2.0f64..2.0,
            sx in -1.0f64..1.0,
            sy in -1.0f64..1.0,
            alpha_r in 0.0f64..10.0,
            alpha_o in 0.0f64..10.0,
        ) {
            let mut scenario = toy_scenario(5, vec![default_obstacle(6.0, 6.0, 0.5)]);
            scenario.weights.alpha_r = alpha_r;
            scenario.weights.alpha_o = alpha_o;
            let u = RobotControl::Velocity { ux, uy, utheta: 0.0 };
            let s = ObstacleVelocity::new(sx, sy, 0.0);
            let solution = rollout(&scenario, vec![u; 4], vec![vec![s; 4]]);
            let c = solution.cost;
            prop_assert!(c.robot >= 0.0);
            prop_assert!(c.obstacle >= 0.0);
            prop_assert_eq!(c.total, alpha_r * c.robot + alpha_o * c.obstacle);
        }
    }
}
