//! Translate a scenario into a standard-form mixed-integer quadratic
//! program.
//!
//! Variables are laid out contiguously: robot states, controls, per-obstacle
//! states, per-obstacle velocities, then the collision binaries. The
//! objective is the weighted sum of squared positional path steps, the
//! terminal goal penalty, and the time-weighted squared obstacle velocities.
//! Equalities pin the initial states and encode the linear dynamics.
//! Inequalities hold the big-M axis-separation rows and, per obstacle and
//! step, the selector row that forces at least one axis constraint active:
//!
//! ```text
//!     -(x_k - ox_k) - M xi1 <= -R        (robot right of obstacle)
//!      (x_k - ox_k) - M xi2 <= -R        (robot left of obstacle)
//!     -(y_k - oy_k) - M xi3 <= -R        (robot above obstacle)
//!      (y_k - oy_k) - M xi4 <= -R        (robot below obstacle)
//!      xi1 + xi2 + xi3 + xi4 <= 3
//! ```
//!
//! with `R = r_robot + r_obstacle`. A selector of 1 relaxes its row by `M`;
//! the last row keeps at least one selector at 0. Any binary choice
//! satisfying these rows separates the discs on some axis, which implies the
//! Euclidean disc constraint. The converse does not hold: diagonal
//! near-contact configurations are Euclidean-clear but have no separating
//! axis, so the linearized feasible set is conservative.

use nalgebra::{DMatrix, DVector};
use serde_json::json;
use thiserror::Error;

use crate::model::{
    evaluate_cost, ModelError, ObstacleState, RobotControl, RobotModel, RobotState, Scenario,
    Solution, SolveMeta, TerminalMode,
};

/// Default tolerance for accepting near-integral binary values in
/// [`extract`].
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial robot state violates the state bounds by {violation:.3e}")]
    InitialStateOutOfBounds { violation: f64 },
    #[error("initial state of obstacle {obstacle} violates its bounds by {violation:.3e}")]
    InitialObstacleOutOfBounds { obstacle: usize, violation: f64 },
    #[error(
        "initial robot position has no separating axis from obstacle {obstacle}; \
         the axiswise collision rows are unsatisfiable at the first step"
    )]
    StartNotAxisSeparated { obstacle: usize },
    #[error(
        "big-M {big_m:.4} too small to admit the initial configuration against \
         obstacle {obstacle} (needs at least {needed:.4})"
    )]
    BigMTooSmall {
        obstacle: usize,
        big_m: f64,
        needed: f64,
    },
    #[error("big-M must be positive, got {0}")]
    NonPositiveBigM(f64),
    #[error("workspace bounds must be finite to derive a big-M constant")]
    UnboundedWorkspace,
    #[error("solution vector has length {got}, layout expects {expected}")]
    VectorLength { got: usize, expected: usize },
    #[error(
        "binary variable {index} has value {value:.6}, farther than {tol:.1e} from 0 or 1"
    )]
    FractionalBinary { index: usize, value: f64, tol: f64 },
    #[error("horizon must be at least 2, got {0}")]
    BadHorizon(usize),
}

/// Index map over the flat variable vector of one problem.
///
/// Ranges are contiguous and disjoint, in order: robot states, controls,
/// obstacle states, obstacle velocities, binaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableLayout {
    pub model: RobotModel,
    /// Number of timesteps `T` in this problem.
    pub horizon: usize,
    pub obstacle_count: usize,
    /// Number of leading states carrying collision rows (`T-1` by default,
    /// `T` when the terminal step is also constrained).
    pub collision_steps: usize,
}

impl VariableLayout {
    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    pub fn robot_state_offset(&self) -> usize {
        0
    }

    pub fn control_offset(&self) -> usize {
        self.horizon * self.state_dim()
    }

    pub fn obstacle_state_offset(&self) -> usize {
        self.control_offset() + (self.horizon - 1) * self.control_dim()
    }

    pub fn obstacle_velocity_offset(&self) -> usize {
        self.obstacle_state_offset() + self.obstacle_count * self.horizon * 3
    }

    pub fn binary_offset(&self) -> usize {
        self.obstacle_velocity_offset() + self.obstacle_count * (self.horizon - 1) * 3
    }

    pub fn binary_count(&self) -> usize {
        4 * self.collision_steps * self.obstacle_count
    }

    pub fn total(&self) -> usize {
        self.binary_offset() + self.binary_count()
    }

    /// Index of component `c` of robot state `k` (0-based step).
    pub fn robot_state(&self, k: usize, c: usize) -> usize {
        debug_assert!(k < self.horizon && c < self.state_dim());
        k * self.state_dim() + c
    }

    /// Index of component `c` of control `k`.
    pub fn control(&self, k: usize, c: usize) -> usize {
        debug_assert!(k < self.horizon - 1 && c < self.control_dim());
        self.control_offset() + k * self.control_dim() + c
    }

    /// Index of component `c` of obstacle `i`'s state at step `k`.
    pub fn obstacle_state(&self, i: usize, k: usize, c: usize) -> usize {
        debug_assert!(i < self.obstacle_count && k < self.horizon && c < 3);
        self.obstacle_state_offset() + i * self.horizon * 3 + k * 3 + c
    }

    /// Index of component `c` of obstacle `i`'s velocity at step `k`.
    pub fn obstacle_velocity(&self, i: usize, k: usize, c: usize) -> usize {
        debug_assert!(i < self.obstacle_count && k < self.horizon - 1 && c < 3);
        self.obstacle_velocity_offset() + i * (self.horizon - 1) * 3 + k * 3 + c
    }

    /// Index of selector `j` for obstacle `i` at collision step `k`.
    pub fn binary(&self, i: usize, k: usize, j: usize) -> usize {
        debug_assert!(i < self.obstacle_count && k < self.collision_steps && j < 4);
        self.binary_offset() + i * self.collision_steps * 4 + k * 4 + j
    }
}

/// Convex quadratic program in standard form:
/// `min 1/2 z'Hz + f'z + c0` over `A z <= b`, `Aeq z = beq`,
/// `lb <= z <= ub`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub c0: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.n();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(format!(
                "H is {}x{}, expected {n}x{n}",
                self.h.nrows(),
                self.h.ncols()
            ));
        }
        if self.a.ncols() != n && self.a.nrows() > 0 {
            return Err(format!("A has {} columns, expected {n}", self.a.ncols()));
        }
        if self.a.nrows() != self.b.len() {
            return Err("A and b row counts differ".into());
        }
        if self.a_eq.ncols() != n && self.a_eq.nrows() > 0 {
            return Err(format!(
                "Aeq has {} columns, expected {n}",
                self.a_eq.ncols()
            ));
        }
        if self.a_eq.nrows() != self.b_eq.len() {
            return Err("Aeq and beq row counts differ".into());
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err("bound vectors must have length n".into());
        }
        Ok(())
    }

    /// Objective value at `z`.
    pub fn objective_at(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.h * z)[(0, 0)] + self.f.dot(z) + self.c0
    }
}

/// A [`QpProblem`] plus the sorted indices of its binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MiqpProblem {
    pub qp: QpProblem,
    pub binaries: Vec<usize>,
}

impl MiqpProblem {
    pub fn validate(&self) -> Result<(), String> {
        self.qp.validate()?;
        let n = self.qp.n();
        let mut last = None;
        for &idx in &self.binaries {
            if idx >= n {
                return Err(format!("binary index {idx} out of range (n = {n})"));
            }
            if last == Some(idx) {
                return Err(format!("duplicate binary index {idx}"));
            }
            if let Some(prev) = last {
                if idx < prev {
                    return Err("binary indices must be sorted".into());
                }
            }
            last = Some(idx);
        }
        Ok(())
    }

    /// Serialize to a solver-independent JSON debug dump. Matrices are in
    /// coordinate-sparse form: parallel `rows`/`cols`/`values` arrays.
    pub fn debug_json(&self) -> serde_json::Value {
        fn coo(m: &DMatrix<f64>) -> serde_json::Value {
            let mut rows = Vec::new();
            let mut cols = Vec::new();
            let mut values = Vec::new();
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let v = m[(r, c)];
                    if v != 0.0 {
                        rows.push(r);
                        cols.push(c);
                        values.push(v);
                    }
                }
            }
            json!({
                "shape": [m.nrows(), m.ncols()],
                "rows": rows,
                "cols": cols,
                "values": values,
            })
        }
        json!({
            "format_version": 1,
            "n": self.qp.n(),
            "h": coo(&self.qp.h),
            "f": self.qp.f.as_slice(),
            "c0": self.qp.c0,
            "a": coo(&self.qp.a),
            "b": self.qp.b.as_slice(),
            "a_eq": coo(&self.qp.a_eq),
            "b_eq": self.qp.b_eq.as_slice(),
            "lb": self.qp.lb.as_slice(),
            "ub": self.qp.ub.as_slice(),
            "binaries": self.binaries,
        })
    }
}

/// Options controlling one build.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Horizon of this problem; defaults to the scenario horizon. Slices
    /// build shorter problems over the same scenario.
    pub horizon: Option<usize>,
    /// Weight of the terminal goal penalty inside the robot term.
    pub terminal_weight: f64,
    pub terminal: TerminalMode,
    /// Big-M constant; derived from the workspace when absent.
    pub big_m: Option<f64>,
    /// Also impose collision rows at the final state. Off by default: the
    /// collision quantifier stops one step short of the terminal state.
    pub collision_at_terminal: bool,
}

impl BuildOptions {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        BuildOptions {
            horizon: None,
            terminal_weight: scenario.weights.alpha_re,
            terminal: scenario.terminal,
            big_m: None,
            collision_at_terminal: false,
        }
    }
}

/// Big-M constant large enough that a relaxed axis row excludes nothing
/// anywhere in the workspace: the sum of the workspace extents plus twice
/// the largest combined radius.
pub fn default_big_m(scenario: &Scenario) -> Result<f64, FormulationError> {
    let lb = &scenario.state_bounds.lower;
    let ub = &scenario.state_bounds.upper;
    for c in 0..2 {
        if !lb[c].is_finite() || !ub[c].is_finite() {
            return Err(FormulationError::UnboundedWorkspace);
        }
    }
    let extent = (ub[0] - lb[0]) + (ub[1] - lb[1]);
    let max_obstacle = scenario
        .obstacles
        .iter()
        .map(|o| o.radius)
        .fold(0.0f64, f64::max);
    let m = extent + 2.0 * (scenario.robot_radius + max_obstacle);
    if m <= 0.0 {
        return Err(FormulationError::NonPositiveBigM(m));
    }
    Ok(m)
}

/// Build the MIQP for a scenario starting from the given initial states.
///
/// `options.terminal_weight` and `options.big_m` override the scenario
/// defaults; [`build_default`] is the plain full-horizon build.
pub fn build(
    scenario: &Scenario,
    initial_robot: &RobotState,
    initial_obstacles: &[ObstacleState],
    options: &BuildOptions,
) -> Result<(MiqpProblem, VariableLayout), FormulationError> {
    scenario.validate()?;
    let t = options.horizon.unwrap_or(scenario.horizon);
    if t < 2 {
        return Err(FormulationError::BadHorizon(t));
    }
    if initial_robot.model() != scenario.model {
        return Err(FormulationError::Model(ModelError::FormMismatch {
            expected: scenario.model,
        }));
    }
    if initial_obstacles.len() != scenario.obstacle_count() {
        return Err(FormulationError::Model(ModelError::DimensionMismatch(
            format!(
                "expected {} initial obstacle states, got {}",
                scenario.obstacle_count(),
                initial_obstacles.len()
            ),
        )));
    }

    // Handover states may sit on a bound up to solver accuracy; clamp the
    // pins inside so the pin equalities stay consistent with the boxes.
    const PIN_TOL: f64 = 1e-6;
    let mut start = initial_robot.to_vec();
    let violation = scenario.state_bounds.violation(&start);
    if violation > PIN_TOL {
        return Err(FormulationError::InitialStateOutOfBounds { violation });
    }
    for (c, v) in start.iter_mut().enumerate() {
        *v = v.clamp(
            scenario.state_bounds.lower[c],
            scenario.state_bounds.upper[c],
        );
    }
    let mut obstacle_pins: Vec<[f64; 3]> = Vec::with_capacity(initial_obstacles.len());
    for (i, (state, obs)) in initial_obstacles
        .iter()
        .zip(&scenario.obstacles)
        .enumerate()
    {
        let mut pin = state.to_array();
        let violation = obs.state_bounds.violation(&pin);
        if violation > PIN_TOL {
            return Err(FormulationError::InitialObstacleOutOfBounds {
                obstacle: i,
                violation,
            });
        }
        for (c, v) in pin.iter_mut().enumerate() {
            *v = v.clamp(obs.state_bounds.lower[c], obs.state_bounds.upper[c]);
        }
        obstacle_pins.push(pin);
    }

    let big_m = match options.big_m {
        Some(m) if m > 0.0 => m,
        Some(m) => return Err(FormulationError::NonPositiveBigM(m)),
        None => default_big_m(scenario)?,
    };

    // The first collision step compares two pinned positions, so it must be
    // satisfiable outright: some axis separated, and the relaxed rows within
    // reach of M.
    const GEOM_TOL: f64 = 1e-9;
    for (i, obs) in scenario.obstacles.iter().enumerate() {
        let radius_sum = scenario.robot_radius + obs.radius;
        let dx = (start[0] - obstacle_pins[i][0]).abs();
        let dy = (start[1] - obstacle_pins[i][1]).abs();
        let linf = dx.max(dy);
        if linf < radius_sum - GEOM_TOL {
            return Err(FormulationError::StartNotAxisSeparated { obstacle: i });
        }
        if big_m < radius_sum + linf - GEOM_TOL {
            return Err(FormulationError::BigMTooSmall {
                obstacle: i,
                big_m,
                needed: radius_sum + linf,
            });
        }
    }

    let n_obs = scenario.obstacle_count();
    let collision_steps = if options.collision_at_terminal { t } else { t - 1 };
    let layout = VariableLayout {
        model: scenario.model,
        horizon: t,
        obstacle_count: n_obs,
        collision_steps,
    };
    let n = layout.total();
    let dim_x = layout.state_dim();
    let dim_u = layout.control_dim();
    let tau = scenario.timestep;
    let w = &scenario.weights;

    // Objective.
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut f = DVector::<f64>::zeros(n);
    let mut c0 = 0.0;

    let path_components: &[usize] =
        if scenario.heading_in_path_cost && scenario.model == RobotModel::FirstOrder {
            &[0, 1, 2]
        } else {
            &[0, 1]
        };
    for k in 0..t - 1 {
        for &c in path_components {
            let a = layout.robot_state(k, c);
            let b = layout.robot_state(k + 1, c);
            h[(a, a)] += 2.0 * w.alpha_r;
            h[(b, b)] += 2.0 * w.alpha_r;
            h[(a, b)] -= 2.0 * w.alpha_r;
            h[(b, a)] -= 2.0 * w.alpha_r;
        }
    }
    if options.terminal == TerminalMode::Soft {
        let goal = scenario.goal.to_vec();
        let wt = w.alpha_r * options.terminal_weight;
        for c in 0..dim_x {
            let idx = layout.robot_state(t - 1, c);
            h[(idx, idx)] += 2.0 * wt;
            f[idx] -= 2.0 * wt * goal[c];
            c0 += wt * goal[c] * goal[c];
        }
    }
    for i in 0..n_obs {
        for k in 0..t - 1 {
            for c in 0..3 {
                let idx = layout.obstacle_velocity(i, k, c);
                h[(idx, idx)] += 2.0 * w.alpha_o * tau;
            }
        }
    }

    // Equalities: initial pins, dynamics, and the hard terminal.
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (c, v) in start.iter().enumerate() {
        eq_rows.push((vec![(layout.robot_state(0, c), 1.0)], *v));
    }
    for (i, pin) in obstacle_pins.iter().enumerate() {
        for (c, v) in pin.iter().enumerate() {
            eq_rows.push((vec![(layout.obstacle_state(i, 0, c), 1.0)], *v));
        }
    }
    for k in 0..t - 1 {
        match scenario.model {
            RobotModel::FirstOrder => {
                for c in 0..3 {
                    eq_rows.push((
                        vec![
                            (layout.robot_state(k + 1, c), 1.0),
                            (layout.robot_state(k, c), -1.0),
                            (layout.control(k, c), -tau),
                        ],
                        0.0,
                    ));
                }
            }
            RobotModel::DoubleIntegrator => {
                for c in 0..2 {
                    eq_rows.push((
                        vec![
                            (layout.robot_state(k + 1, c), 1.0),
                            (layout.robot_state(k, c), -1.0),
                            (layout.robot_state(k, c + 2), -tau),
                            (layout.control(k, c), -0.5 * tau * tau),
                        ],
                        0.0,
                    ));
                }
                for c in 0..2 {
                    eq_rows.push((
                        vec![
                            (layout.robot_state(k + 1, c + 2), 1.0),
                            (layout.robot_state(k, c + 2), -1.0),
                            (layout.control(k, c), -tau),
                        ],
                        0.0,
                    ));
                }
            }
        }
    }
    for i in 0..n_obs {
        for k in 0..t - 1 {
            for c in 0..3 {
                eq_rows.push((
                    vec![
                        (layout.obstacle_state(i, k + 1, c), 1.0),
                        (layout.obstacle_state(i, k, c), -1.0),
                        (layout.obstacle_velocity(i, k, c), -tau),
                    ],
                    0.0,
                ));
            }
        }
    }
    if options.terminal == TerminalMode::Hard {
        let goal = scenario.goal.to_vec();
        for (c, g) in goal.iter().enumerate().take(2) {
            eq_rows.push((vec![(layout.robot_state(t - 1, c), 1.0)], *g));
        }
    }

    // Inequalities: four big-M rows and one selector row per obstacle and
    // collision step. Each row's constant is tightened to the smallest
    // value that stays vacuous when relaxed: within k steps the axis gap
    // cannot grow past its initial value plus the combined top speeds, so a
    // reachability-based M below the workspace-wide constant is still sound
    // and gives the relaxation much stronger bounds.
    let robot_speed = |c: usize| -> f64 {
        match scenario.model {
            RobotModel::FirstOrder => scenario.control_bounds.lower[c]
                .abs()
                .max(scenario.control_bounds.upper[c].abs()),
            RobotModel::DoubleIntegrator => scenario.state_bounds.lower[c + 2]
                .abs()
                .max(scenario.state_bounds.upper[c + 2].abs()),
        }
    };
    let mut ineq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for k in 0..collision_steps {
        for (i, obs) in scenario.obstacles.iter().enumerate() {
            let radius_sum = scenario.robot_radius + obs.radius;
            let row_m = |axis: usize| -> f64 {
                let speed = robot_speed(axis)
                    + obs.velocity_bounds.lower[axis]
                        .abs()
                        .max(obs.velocity_bounds.upper[axis].abs());
                let initial_gap = (start[axis] - obstacle_pins[i][axis]).abs();
                let reach = radius_sum + initial_gap + k as f64 * tau * speed;
                reach.min(big_m)
            };
            let x = layout.robot_state(k, 0);
            let y = layout.robot_state(k, 1);
            let ox = layout.obstacle_state(i, k, 0);
            let oy = layout.obstacle_state(i, k, 1);
            let axis_rows = [
                (x, ox, layout.binary(i, k, 0), -1.0, row_m(0)),
                (x, ox, layout.binary(i, k, 1), 1.0, row_m(0)),
                (y, oy, layout.binary(i, k, 2), -1.0, row_m(1)),
                (y, oy, layout.binary(i, k, 3), 1.0, row_m(1)),
            ];
            for (r_idx, o_idx, xi, orient, m) in axis_rows {
                ineq_rows.push((
                    vec![(r_idx, orient), (o_idx, -orient), (xi, -m)],
                    -radius_sum,
                ));
            }
            ineq_rows.push((
                (0..4).map(|j| (layout.binary(i, k, j), 1.0)).collect(),
                3.0,
            ));
        }
    }

    // Box bounds.
    let mut lb = DVector::<f64>::zeros(n);
    let mut ub = DVector::<f64>::zeros(n);
    for k in 0..t {
        for c in 0..dim_x {
            lb[layout.robot_state(k, c)] = scenario.state_bounds.lower[c];
            ub[layout.robot_state(k, c)] = scenario.state_bounds.upper[c];
        }
    }
    for k in 0..t - 1 {
        for c in 0..dim_u {
            lb[layout.control(k, c)] = scenario.control_bounds.lower[c];
            ub[layout.control(k, c)] = scenario.control_bounds.upper[c];
        }
    }
    for (i, obs) in scenario.obstacles.iter().enumerate() {
        for k in 0..t {
            for c in 0..3 {
                lb[layout.obstacle_state(i, k, c)] = obs.state_bounds.lower[c];
                ub[layout.obstacle_state(i, k, c)] = obs.state_bounds.upper[c];
            }
        }
        for k in 0..t - 1 {
            for c in 0..3 {
                lb[layout.obstacle_velocity(i, k, c)] = obs.velocity_bounds.lower[c];
                ub[layout.obstacle_velocity(i, k, c)] = obs.velocity_bounds.upper[c];
            }
        }
    }
    let mut binaries = Vec::with_capacity(layout.binary_count());
    for i in 0..n_obs {
        for k in 0..collision_steps {
            for j in 0..4 {
                let idx = layout.binary(i, k, j);
                lb[idx] = 0.0;
                ub[idx] = 1.0;
                binaries.push(idx);
            }
        }
    }
    binaries.sort_unstable();

    let mut a = DMatrix::<f64>::zeros(ineq_rows.len(), n);
    let mut b = DVector::<f64>::zeros(ineq_rows.len());
    for (r, (row, rhs)) in ineq_rows.iter().enumerate() {
        for &(c, v) in row {
            a[(r, c)] = v;
        }
        b[r] = *rhs;
    }
    let mut a_eq = DMatrix::<f64>::zeros(eq_rows.len(), n);
    let mut b_eq = DVector::<f64>::zeros(eq_rows.len());
    for (r, (row, rhs)) in eq_rows.iter().enumerate() {
        for &(c, v) in row {
            a_eq[(r, c)] = v;
        }
        b_eq[r] = *rhs;
    }

    let problem = MiqpProblem {
        qp: QpProblem {
            h,
            f,
            c0,
            a,
            b,
            a_eq,
            b_eq,
            lb,
            ub,
        },
        binaries,
    };
    debug_assert!(problem.validate().is_ok());
    Ok((problem, layout))
}

/// Build the full-horizon problem from the scenario's own start, initial
/// obstacle states and weights.
pub fn build_default(
    scenario: &Scenario,
) -> Result<(MiqpProblem, VariableLayout), FormulationError> {
    let initial: Vec<ObstacleState> = scenario.obstacles.iter().map(|o| o.initial).collect();
    let start = scenario.start;
    build(scenario, &start, &initial, &BuildOptions::for_scenario(scenario))
}

/// Recover a [`Solution`] from a flat solution vector.
///
/// Binary entries must lie within `tol` of 0 or 1 and are rounded; anything
/// farther is an error. The cost breakdown is evaluated from the extracted
/// trajectories; solver metadata is left at its default.
pub fn extract_with_tol(
    z: &[f64],
    layout: &VariableLayout,
    scenario: &Scenario,
    tol: f64,
) -> Result<Solution, FormulationError> {
    if z.len() != layout.total() {
        return Err(FormulationError::VectorLength {
            got: z.len(),
            expected: layout.total(),
        });
    }
    let t = layout.horizon;
    let mut robot_states = Vec::with_capacity(t);
    for k in 0..t {
        let vals: Vec<f64> = (0..layout.state_dim())
            .map(|c| z[layout.robot_state(k, c)])
            .collect();
        robot_states.push(RobotState::from_slice(layout.model, &vals)?);
    }
    let mut controls = Vec::with_capacity(t - 1);
    for k in 0..t - 1 {
        let vals: Vec<f64> = (0..layout.control_dim())
            .map(|c| z[layout.control(k, c)])
            .collect();
        controls.push(RobotControl::from_slice(layout.model, &vals)?);
    }
    let mut obstacle_states = Vec::with_capacity(layout.obstacle_count);
    let mut obstacle_velocities = Vec::with_capacity(layout.obstacle_count);
    for i in 0..layout.obstacle_count {
        let states: Vec<ObstacleState> = (0..t)
            .map(|k| {
                ObstacleState::new(
                    z[layout.obstacle_state(i, k, 0)],
                    z[layout.obstacle_state(i, k, 1)],
                    z[layout.obstacle_state(i, k, 2)],
                )
            })
            .collect();
        let vels: Vec<crate::model::ObstacleVelocity> = (0..t - 1)
            .map(|k| {
                crate::model::ObstacleVelocity::new(
                    z[layout.obstacle_velocity(i, k, 0)],
                    z[layout.obstacle_velocity(i, k, 1)],
                    z[layout.obstacle_velocity(i, k, 2)],
                )
            })
            .collect();
        obstacle_states.push(states);
        obstacle_velocities.push(vels);
    }
    let mut binaries = vec![vec![[0u8; 4]; layout.obstacle_count]; layout.collision_steps];
    for i in 0..layout.obstacle_count {
        for k in 0..layout.collision_steps {
            for j in 0..4 {
                let value = z[layout.binary(i, k, j)];
                let rounded = if value.abs() <= tol {
                    0u8
                } else if (value - 1.0).abs() <= tol {
                    1u8
                } else {
                    return Err(FormulationError::FractionalBinary {
                        index: layout.binary(i, k, j),
                        value,
                        tol,
                    });
                };
                binaries[k][i][j] = rounded;
            }
        }
    }

    // The cost is evaluated against a scenario of matching horizon.
    let eval_scenario = if scenario.horizon == t {
        scenario.clone()
    } else {
        let mut s = scenario.clone();
        s.horizon = t;
        s
    };
    let mut solution = Solution {
        robot_states,
        controls,
        obstacle_states,
        obstacle_velocities,
        binaries,
        cost: crate::model::CostBreakdown {
            total: 0.0,
            robot: 0.0,
            obstacle: 0.0,
        },
        meta: SolveMeta::default(),
    };
    solution.cost = evaluate_cost(&solution, &eval_scenario)?;
    Ok(solution)
}

/// [`extract_with_tol`] at the default integrality tolerance.
pub fn extract(
    z: &[f64],
    layout: &VariableLayout,
    scenario: &Scenario,
) -> Result<Solution, FormulationError> {
    extract_with_tol(z, layout, scenario, INTEGRALITY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{default_obstacle, pose, rollout, toy_scenario};
    use crate::model::{Bounds, ObstacleVelocity, Weights};
    use proptest::prelude::*;

    #[test]
    fn zero_obstacle_build_is_a_pure_qp() {
        let scenario = toy_scenario(3, vec![]);
        let (problem, layout) = build_default(&scenario).unwrap();
        assert_eq!(problem.binaries.len(), 0);
        assert_eq!(layout.binary_count(), 0);
        // Dynamics rows plus the initial pin.
        assert_eq!(problem.qp.a_eq.nrows(), 3 * 2 + 3);
        assert_eq!(problem.qp.a.nrows(), 0);
    }

    #[test]
    fn one_obstacle_counts() {
        let scenario = toy_scenario(4, vec![default_obstacle(5.0, 0.0, 0.5)]);
        let (problem, layout) = build_default(&scenario).unwrap();
        assert_eq!(layout.binary_count(), 12);
        assert_eq!(problem.binaries.len(), 12);
        let selector_rows = (0..problem.qp.a.nrows())
            .filter(|&r| problem.qp.b[r] == 3.0)
            .count();
        assert_eq!(selector_rows, 3);
        assert_eq!(problem.qp.a.nrows(), 5 * 3);
    }

    #[test]
    fn double_integrator_variable_total() {
        let mut scenario = toy_scenario(
            11,
            vec![
                default_obstacle(4.0, 1.0, 0.5),
                default_obstacle(6.0, -1.0, 0.5),
            ],
        );
        scenario.model = RobotModel::DoubleIntegrator;
        scenario.start = RobotState::Kinodynamic {
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
        };
        scenario.goal = RobotState::Kinodynamic {
            x: 2.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
        };
        scenario.state_bounds = Bounds {
            lower: vec![-10.0, -10.0, -5.0, -5.0],
            upper: vec![10.0, 10.0, 5.0, 5.0],
        };
        scenario.control_bounds = Bounds::symmetric(2, 3.0);
        let (problem, layout) = build_default(&scenario).unwrap();
        assert_eq!(layout.binary_count(), 80);
        // 11*4 + 10*2 + 11*3*2 + 10*3*2 + 80 = 270.
        assert_eq!(layout.total(), 270);
        assert_eq!(problem.qp.f.len(), 270);
    }

    #[test]
    fn default_big_m_examples() {
        let mut scenario = toy_scenario(4, vec![default_obstacle(5.0, 5.0, 0.5)]);
        scenario.state_bounds = Bounds {
            lower: vec![0.0, 0.0, -100.0],
            upper: vec![10.0, 10.0, 100.0],
        };
        scenario.start = pose(1.0, 1.0, 0.0);
        scenario.goal = pose(9.0, 9.0, 0.0);
        assert!((default_big_m(&scenario).unwrap() - 22.0).abs() < 1e-12);

        let mut small = toy_scenario(4, vec![default_obstacle(0.5, 0.5, 0.1)]);
        small.robot_radius = 0.1;
        small.state_bounds = Bounds {
            lower: vec![0.0, 0.0, -100.0],
            upper: vec![1.0, 1.0, 100.0],
        };
        small.start = pose(0.1, 0.1, 0.0);
        small.goal = pose(0.9, 0.9, 0.0);
        assert!((default_big_m(&small).unwrap() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn default_big_m_relaxed_rows_are_vacuous_at_box_corners() {
        // With every selector at 1, each axis row must hold at any pair of
        // workspace positions: orient*(r - o) + R - M <= 0.
        let mut scenario = toy_scenario(4, vec![default_obstacle(5.0, 5.0, 0.5)]);
        scenario.state_bounds = Bounds {
            lower: vec![0.0, 0.0, -100.0],
            upper: vec![10.0, 10.0, 100.0],
        };
        scenario.start = pose(1.0, 1.0, 0.0);
        scenario.goal = pose(9.0, 9.0, 0.0);
        let m = default_big_m(&scenario).unwrap();
        let radius_sum = scenario.robot_radius + scenario.obstacles[0].radius;
        for rx in [0.0, 10.0] {
            for ox in [0.0, 10.0] {
                for orient in [1.0, -1.0] {
                    assert!(orient * (rx - ox) + radius_sum - m <= 0.0);
                }
            }
        }
    }

    #[test]
    fn build_rejects_axis_blocked_start() {
        // Start is Euclidean-clear of the obstacle but no axis separates:
        // distance 1.13 >= 1.0, |dx| = |dy| = 0.8 < 1.0.
        let scenario = toy_scenario(4, vec![default_obstacle(0.8, 0.8, 0.5)]);
        assert!(scenario.validate().is_ok());
        let err = build_default(&scenario).unwrap_err();
        assert!(matches!(
            err,
            FormulationError::StartNotAxisSeparated { obstacle: 0 }
        ));
    }

    #[test]
    fn build_rejects_tiny_big_m() {
        let scenario = toy_scenario(4, vec![default_obstacle(5.0, 0.0, 0.5)]);
        let mut options = BuildOptions::for_scenario(&scenario);
        options.big_m = Some(1.0);
        let initial: Vec<ObstacleState> = scenario.obstacles.iter().map(|o| o.initial).collect();
        let start = scenario.start;
        let err = build(&scenario, &start, &initial, &options).unwrap_err();
        assert!(matches!(err, FormulationError::BigMTooSmall { .. }));
    }

    #[test]
    fn extract_round_trips_a_hand_built_vector() {
        let mut scenario = toy_scenario(3, vec![]);
        scenario.start = scenario.goal;
        let (_, layout) = build_default(&scenario).unwrap();
        let mut z = vec![0.0; layout.total()];
        let goal = scenario.goal.to_vec();
        for k in 0..scenario.horizon {
            for (c, g) in goal.iter().enumerate() {
                z[layout.robot_state(k, c)] = *g;
            }
        }
        let solution = extract(&z, &layout, &scenario).unwrap();
        assert!(solution.cost.total.abs() < 1e-12);
    }

    #[test]
    fn extract_rejects_fractional_binary() {
        let scenario = toy_scenario(3, vec![default_obstacle(5.0, 0.0, 0.5)]);
        let (_, layout) = build_default(&scenario).unwrap();
        let mut z = vec![0.0; layout.total()];
        z[layout.binary(0, 0, 1)] = 0.4;
        let err = extract(&z, &layout, &scenario).unwrap_err();
        assert!(matches!(err, FormulationError::FractionalBinary { .. }));
    }

    #[test]
    fn objective_matches_evaluate_cost_on_rollouts() {
        // The quadratic form must agree with the domain cost evaluator on
        // dynamics-consistent vectors.
        let mut scenario = toy_scenario(5, vec![default_obstacle(6.0, 2.0, 0.5)]);
        scenario.weights = Weights {
            alpha_r: 0.7,
            alpha_o: 3.0,
            alpha_re: 2.5,
        };
        let (problem, layout) = build_default(&scenario).unwrap();
        let u = RobotControl::Velocity {
            ux: 0.8,
            uy: -0.3,
            utheta: 0.2,
        };
        let s = ObstacleVelocity::new(0.4, 0.1, -0.2);
        let solution = rollout(&scenario, vec![u; 4], vec![vec![s; 4]]);

        let mut z = DVector::<f64>::zeros(layout.total());
        for (k, state) in solution.robot_states.iter().enumerate() {
            for (c, v) in state.to_vec().iter().enumerate() {
                z[layout.robot_state(k, c)] = *v;
            }
        }
        for (k, control) in solution.controls.iter().enumerate() {
            for (c, v) in control.to_vec().iter().enumerate() {
                z[layout.control(k, c)] = *v;
            }
        }
        for (k, state) in solution.obstacle_states[0].iter().enumerate() {
            for (c, v) in state.to_array().iter().enumerate() {
                z[layout.obstacle_state(0, k, c)] = *v;
            }
        }
        for (k, vel) in solution.obstacle_velocities[0].iter().enumerate() {
            for (c, v) in vel.to_array().iter().enumerate() {
                z[layout.obstacle_velocity(0, k, c)] = *v;
            }
        }
        let qp_value = problem.qp.objective_at(&z);
        assert!(
            (qp_value - solution.cost.total).abs() <= 1e-9 * (1.0 + solution.cost.total.abs()),
            "{qp_value} vs {}",
            solution.cost.total
        );
    }

    proptest! {
        /// Closed-form variable and row counts hold for random sizes.
        #[test]
        fn layout_counts_are_closed_form(t in 2usize..12, n_obs in 0usize..4) {
            let obstacles: Vec<_> = (0..n_obs)
                .map(|i| default_obstacle(4.0 + i as f64, 3.0, 0.4))
                .collect();
            let scenario = toy_scenario(t, obstacles);
            let (problem, layout) = build_default(&scenario).unwrap();
            prop_assert_eq!(layout.binary_count(), 4 * (t - 1) * n_obs);
            prop_assert_eq!(
                layout.total(),
                t * 3 + (t - 1) * 3 + t * 3 * n_obs + (t - 1) * 3 * n_obs
                    + 4 * (t - 1) * n_obs
            );
            prop_assert_eq!(problem.qp.a.nrows(), 5 * (t - 1) * n_obs);
            prop_assert_eq!(
                problem.qp.a_eq.nrows(),
                3 + 3 * (t - 1) + n_obs * 3 + n_obs * 3 * (t - 1)
            );
            // Ranges are disjoint and exhaustive: offsets increase and the
            // final offset plus the binary block is the total.
            prop_assert!(layout.control_offset() <= layout.obstacle_state_offset());
            prop_assert!(layout.obstacle_state_offset() <= layout.obstacle_velocity_offset());
            prop_assert!(layout.obstacle_velocity_offset() <= layout.binary_offset());
            prop_assert_eq!(layout.binary_offset() + layout.binary_count(), layout.total());
        }
    }
}
