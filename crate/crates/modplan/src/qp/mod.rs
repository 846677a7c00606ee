//! Convex quadratic programming to high accuracy.
//!
//! This is the continuous engine underneath branch-and-bound: it solves
//!
//! ```text
//!     minimize   1/2 z' H z + f' z + c0
//!     subject to Aeq z  = beq
//!                A z   <= b
//!                lb <= z <= ub
//! ```
//!
//! for symmetric positive semidefinite `H`. The contract is the KKT
//! residual: a result with [`QpStatus::Optimal`] has primal and dual
//! residuals within the requested tolerances, and the reported objective is
//! the quadratic form evaluated at the returned point.
//!
//! A [`QpSolver`] instance owns per-solve scratch state and is not meant to
//! be shared across threads; the underlying [`QpProblem`] is immutable and
//! can back any number of concurrently solving instances.

mod ipm;
mod linalg;

use std::collections::BTreeMap;

use nalgebra::DVector;
use thiserror::Error;

use crate::formulation::QpProblem;
use ipm::{solve_internal, InternalQp, IpmSettings, IpmStatus};
use linalg::{reverse_cuthill_mckee, SkylineLdl, SparseVec};

#[derive(Debug, Error)]
pub enum QpError {
    #[error("H is not symmetric (mismatch at ({0}, {1}))")]
    NotSymmetric(usize, usize),
    #[error("H is not positive semidefinite (pivot {pivot:.3e})")]
    NotPositiveSemidefinite { pivot: f64 },
    #[error("inconsistent problem dimensions: {0}")]
    DimensionMismatch(String),
    #[error("fixing index {index} out of range")]
    FixingOutOfRange { index: usize },
    #[error(
        "conflicting fixing: variable {index} fixed to {value} outside its bounds \
         [{lower}, {upper}]"
    )]
    ConflictingFixing {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
}

/// Primal/dual convergence tolerances.
#[derive(Debug, Clone, Copy)]
pub struct QpTolerances {
    pub primal: f64,
    pub dual: f64,
}

impl Default for QpTolerances {
    fn default() -> Self {
        QpTolerances {
            primal: 1e-8,
            dual: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tolerances: QpTolerances,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tolerances: QpTolerances::default(),
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Result of one QP solve.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// For infeasible/unbounded outcomes: normalized certificate strength,
    /// bounded away from zero.
    pub certificate: f64,
}

/// Reusable solver over one immutable problem.
pub struct QpSolver {
    n: usize,
    h_rows: Vec<SparseVec>,
    f: Vec<f64>,
    c0: f64,
    eq_rows: Vec<(SparseVec, f64)>,
    ineq_rows: Vec<(SparseVec, f64)>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    settings: QpSettings,
}

impl QpSolver {
    /// Validate the problem (dimensions, symmetry, positive
    /// semidefiniteness) and prepare sparse data.
    pub fn new(problem: &QpProblem, settings: QpSettings) -> Result<Self, QpError> {
        problem.validate().map_err(QpError::DimensionMismatch)?;
        let n = problem.n();

        let scale = 1.0
            + (0..n)
                .map(|i| problem.h[(i, i)].abs())
                .fold(0.0f64, f64::max);
        for i in 0..n {
            for j in 0..i {
                if (problem.h[(i, j)] - problem.h[(j, i)]).abs() > 1e-8 * scale {
                    return Err(QpError::NotSymmetric(i, j));
                }
            }
        }

        let mut h_rows: Vec<SparseVec> = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let v = problem.h[(i, j)];
                if v != 0.0 {
                    h_rows[i].push((j, v));
                }
            }
        }
        check_psd(&h_rows, n, scale)?;

        let mut eq_rows = Vec::with_capacity(problem.a_eq.nrows());
        for r in 0..problem.a_eq.nrows() {
            let mut row: SparseVec = Vec::new();
            for c in 0..n {
                let v = problem.a_eq[(r, c)];
                if v != 0.0 {
                    row.push((c, v));
                }
            }
            eq_rows.push((row, problem.b_eq[r]));
        }
        let mut ineq_rows = Vec::with_capacity(problem.a.nrows());
        for r in 0..problem.a.nrows() {
            let mut row: SparseVec = Vec::new();
            for c in 0..n {
                let v = problem.a[(r, c)];
                if v != 0.0 {
                    row.push((c, v));
                }
            }
            ineq_rows.push((row, problem.b[r]));
        }

        Ok(QpSolver {
            n,
            h_rows,
            f: problem.f.as_slice().to_vec(),
            c0: problem.c0,
            eq_rows,
            ineq_rows,
            lb: problem.lb.as_slice().to_vec(),
            ub: problem.ub.as_slice().to_vec(),
            settings,
        })
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Solve the problem as given.
    pub fn solve(&mut self) -> QpSolution {
        self.solve_with_fixings(&BTreeMap::new(), &[])
            .expect("empty fixing set cannot conflict")
    }

    /// Solve with some variables pinned to values and others' bounds
    /// replaced by `[0, 1]`. Fixed variables are eliminated before the
    /// interior-point run and come back exact in the returned vector.
    pub fn solve_with_fixings(
        &mut self,
        fixings: &BTreeMap<usize, f64>,
        relaxed: &[usize],
    ) -> Result<QpSolution, QpError> {
        let n = self.n;
        let mut lb = self.lb.clone();
        let mut ub = self.ub.clone();
        for &idx in relaxed {
            if idx >= n {
                return Err(QpError::FixingOutOfRange { index: idx });
            }
            lb[idx] = 0.0;
            ub[idx] = 1.0;
        }
        for (&idx, &value) in fixings {
            if idx >= n {
                return Err(QpError::FixingOutOfRange { index: idx });
            }
            if value < lb[idx] - 1e-12 || value > ub[idx] + 1e-12 {
                return Err(QpError::ConflictingFixing {
                    index: idx,
                    value,
                    lower: lb[idx],
                    upper: ub[idx],
                });
            }
        }

        // Variables pinned by the caller or by coincident bounds drop out.
        // Singleton constraint rows tighten bounds until a fixpoint; this
        // removes variables forced by the constraints (a selector row with
        // its budget exhausted pins the remaining selector to zero), which
        // would otherwise leave the barrier stuck on a degenerate pinch.
        let mut fixed_value: Vec<Option<f64>> = vec![None; n];
        for (&idx, &value) in fixings {
            fixed_value[idx] = Some(value);
        }
        let feas_tol = 1e-9;
        loop {
            let mut changed = false;
            for i in 0..n {
                if fixed_value[i].is_none() && ub[i] - lb[i] <= feas_tol {
                    if ub[i] < lb[i] - feas_tol {
                        return Ok(self.presolved_infeasible(&fixed_value, lb[i] - ub[i]));
                    }
                    fixed_value[i] = Some(lb[i].max(ub[i].min(0.5 * (lb[i] + ub[i]))));
                    changed = true;
                }
            }
            // Equality singletons pin their variable; inequality singletons
            // tighten one bound.
            for (kind, rows) in [(0u8, &self.eq_rows), (1u8, &self.ineq_rows)] {
                for (row, rhs) in rows.iter() {
                    let mut shift = *rhs;
                    let mut live: Option<(usize, f64)> = None;
                    let mut live_count = 0;
                    for &(j, v) in row {
                        match fixed_value[j] {
                            Some(value) => shift -= v * value,
                            None => {
                                live = Some((j, v));
                                live_count += 1;
                                if live_count > 1 {
                                    break;
                                }
                            }
                        }
                    }
                    if live_count != 1 {
                        continue;
                    }
                    let (j, v) = live.unwrap();
                    let target = shift / v;
                    if kind == 0 {
                        // v * x = shift.
                        if target < lb[j] - feas_tol || target > ub[j] + feas_tol {
                            return Ok(self.presolved_infeasible(
                                &fixed_value,
                                (lb[j] - target).max(target - ub[j]),
                            ));
                        }
                        fixed_value[j] = Some(target.clamp(lb[j], ub[j]));
                        changed = true;
                    } else if v > 0.0 {
                        // v * x <= shift tightens the upper bound.
                        if target < ub[j] - feas_tol {
                            ub[j] = target;
                            changed = true;
                        }
                    } else if target > lb[j] + feas_tol {
                        lb[j] = target;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut keep = Vec::with_capacity(n);
        let mut pos: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            if fixed_value[i].is_none() {
                pos[i] = Some(keep.len());
                keep.push(i);
            }
        }
        let n_red = keep.len();

        // Reduced objective.
        let mut q = vec![0.0; n_red];
        let mut r0 = self.c0;
        for (j, &orig) in keep.iter().enumerate() {
            q[j] = self.f[orig];
        }
        for i in 0..n {
            match fixed_value[i] {
                None => {
                    let ri = pos[i].unwrap();
                    for &(j, v) in &self.h_rows[i] {
                        if let Some(value) = fixed_value[j] {
                            q[ri] += v * value;
                        }
                    }
                }
                Some(vi) => {
                    r0 += self.f[i] * vi;
                    for &(j, v) in &self.h_rows[i] {
                        if let Some(vj) = fixed_value[j] {
                            r0 += 0.5 * v * vi * vj;
                        }
                    }
                }
            }
        }
        let mut p_rows: Vec<SparseVec> = vec![Vec::new(); n_red];
        for (ri, &orig) in keep.iter().enumerate() {
            for &(j, v) in &self.h_rows[orig] {
                if let Some(rj) = pos[j] {
                    p_rows[ri].push((rj, v));
                }
            }
        }

        // Reduced constraints; empty rows become consistency checks.
        let mut eq = Vec::with_capacity(self.eq_rows.len());
        for (row, rhs) in &self.eq_rows {
            let mut reduced: SparseVec = Vec::new();
            let mut shift = *rhs;
            for &(j, v) in row {
                match fixed_value[j] {
                    Some(value) => shift -= v * value,
                    None => reduced.push((pos[j].unwrap(), v)),
                }
            }
            if reduced.is_empty() {
                if shift.abs() > feas_tol * (1.0 + rhs.abs()) {
                    return Ok(self.presolved_infeasible(&fixed_value, shift.abs()));
                }
            } else {
                eq.push((reduced, shift));
            }
        }
        let mut ineq = Vec::with_capacity(self.ineq_rows.len() + 2 * n_red);
        for (row, rhs) in &self.ineq_rows {
            let mut reduced: SparseVec = Vec::new();
            let mut shift = *rhs;
            for &(j, v) in row {
                match fixed_value[j] {
                    Some(value) => shift -= v * value,
                    None => reduced.push((pos[j].unwrap(), v)),
                }
            }
            if reduced.is_empty() {
                if shift < -feas_tol * (1.0 + rhs.abs()) {
                    return Ok(self.presolved_infeasible(&fixed_value, -shift));
                }
            } else {
                ineq.push((reduced, shift));
            }
        }
        for (rj, &orig) in keep.iter().enumerate() {
            if ub[orig].is_finite() {
                ineq.push((vec![(rj, 1.0)], ub[orig]));
            }
            if lb[orig].is_finite() {
                ineq.push((vec![(rj, -1.0)], -lb[orig]));
            }
        }

        let internal = InternalQp {
            n: n_red,
            p_rows,
            q,
            r0,
            eq,
            ineq,
        };
        let result = solve_internal(
            &internal,
            &IpmSettings {
                primal_tol: self.settings.tolerances.primal,
                dual_tol: self.settings.tolerances.dual,
                max_iterations: self.settings.max_iterations,
            },
        );

        let mut z = DVector::<f64>::zeros(n);
        for (rj, &orig) in keep.iter().enumerate() {
            z[orig] = result.z[rj];
        }
        for (i, value) in fixed_value.iter().enumerate() {
            if let Some(v) = value {
                z[i] = *v;
            }
        }
        let objective = self.objective_at(&z);
        Ok(QpSolution {
            z,
            objective,
            status: match result.status {
                IpmStatus::Optimal => QpStatus::Optimal,
                IpmStatus::Infeasible => QpStatus::Infeasible,
                IpmStatus::Unbounded => QpStatus::Unbounded,
                IpmStatus::MaxIterations => QpStatus::MaxIterations,
            },
            iterations: result.iterations,
            primal_residual: result.primal_residual,
            dual_residual: result.dual_residual,
            certificate: result.certificate_measure,
        })
    }

    fn presolved_infeasible(&self, fixed_value: &[Option<f64>], measure: f64) -> QpSolution {
        let mut z = DVector::<f64>::zeros(self.n);
        for (i, value) in fixed_value.iter().enumerate() {
            if let Some(v) = value {
                z[i] = *v;
            }
        }
        QpSolution {
            objective: self.objective_at(&z),
            z,
            status: QpStatus::Infeasible,
            iterations: 0,
            primal_residual: measure,
            dual_residual: 0.0,
            certificate: measure,
        }
    }

    fn objective_at(&self, z: &DVector<f64>) -> f64 {
        let mut v = self.c0;
        for i in 0..self.n {
            let mut acc = 0.0;
            for &(j, c) in &self.h_rows[i] {
                acc += c * z[j];
            }
            v += 0.5 * z[i] * acc + self.f[i] * z[i];
        }
        v
    }
}

/// Positive semidefiniteness probe: factor `H` with an unpivoted sparse
/// LDL'; a significantly negative pivot certifies indefiniteness.
fn check_psd(h_rows: &[SparseVec], n: usize, scale: f64) -> Result<(), QpError> {
    if n == 0 {
        return Ok(());
    }
    let mut entries = Vec::new();
    for i in 0..n {
        entries.push((i, i));
        for &(j, _) in &h_rows[i] {
            if j < i {
                entries.push((i, j));
            }
        }
    }
    let adj = linalg::adjacency_from_entries(n, &entries);
    let order = reverse_cuthill_mckee(&adj);
    let mut posn = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        posn[v] = k;
    }
    let permuted = entries.iter().map(|&(a, b)| (posn[a], posn[b]));
    let mut ldl = SkylineLdl::new(n, permuted, vec![1; n]);
    for i in 0..n {
        for &(j, v) in &h_rows[i] {
            if j <= i {
                let (pa, pb) = (posn[i], posn[j]);
                let (row, col) = if pa >= pb { (pa, pb) } else { (pb, pa) };
                let slot = ldl.slot(row, col);
                ldl.add(slot, v);
            }
        }
    }
    let min_pivot = ldl.factor_reporting_min(1e-13);
    if min_pivot < -1e-7 * scale {
        return Err(QpError::NotPositiveSemidefinite { pivot: min_pivot });
    }
    Ok(())
}

/// Solve a QP with explicit tolerances and iteration cap.
pub fn solve_qp(
    problem: &QpProblem,
    tolerances: QpTolerances,
    max_iterations: usize,
) -> Result<QpSolution, QpError> {
    let mut solver = QpSolver::new(
        problem,
        QpSettings {
            tolerances,
            max_iterations,
        },
    )?;
    Ok(solver.solve())
}

/// Solve a QP with some variables pinned and others box-relaxed to `[0, 1]`,
/// at default settings.
pub fn solve_qp_with_fixings(
    problem: &QpProblem,
    fixings: &BTreeMap<usize, f64>,
    relaxed: &[usize],
) -> Result<QpSolution, QpError> {
    let mut solver = QpSolver::new(problem, QpSettings::default())?;
    solver.solve_with_fixings(fixings, relaxed)
}
