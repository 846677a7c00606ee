//! Branch-and-bound over the binary variables of a mixed-integer QP.
//!
//! Nodes carry partial 0/1 fixings of the binaries; the interior-point
//! relaxation of a node is a valid lower bound for its whole subtree, and an
//! integral relaxation is a candidate incumbent. Branching picks the most
//! fractional binary (ties to the lowest index), node selection is
//! best-bound first with a depth-first fallback once the open set outgrows a
//! memory threshold, and a rounding dive turns fractional relaxations into
//! feasible incumbents early. The search is exact: it terminates with an
//! incumbent proven within the configured gap of the true optimum.
//!
//! [`enumerate_oracle`] is an independent check on the search: it finds the
//! optimum by enumerating admissible binary assignments outright, one QP per
//! assignment, pruned only by monotone bounds. Tests compare the two.

use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use thiserror::Error;

use crate::formulation::MiqpProblem;
use crate::model::SolveStatus;
use crate::qp::{QpError, QpSettings, QpSolution, QpSolver, QpStatus, QpTolerances};

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("invalid MIQP: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("problem is unbounded below")]
    Unbounded,
}

/// Branching rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    /// Branch on the binary farthest from integrality; ties break on the
    /// lowest variable index.
    MostFractional,
}

/// Node selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSelection {
    /// Process the open node with the smallest bound; beyond
    /// `dfs_threshold` open nodes, dive depth-first to cap memory.
    BestBound { dfs_threshold: usize },
}

#[derive(Debug, Clone)]
pub struct BnbConfig {
    /// Distance from 0/1 within which a binary counts as integral.
    pub integrality_tol: f64,
    /// Absolute optimality gap at which the search stops.
    pub abs_gap_tol: f64,
    /// Relative optimality gap at which the search stops.
    pub rel_gap_tol: f64,
    /// Optional coarse gap target; reaching it ends the search with
    /// [`SolveStatus::GapLimit`] before full optimality.
    pub target_gap: Option<f64>,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    pub branching: BranchRule,
    pub node_selection: NodeSelection,
    /// Settings for the per-node relaxation solves.
    pub qp: QpSettings,
    /// Attempt the rounding dive at the root and then every this many
    /// nodes while a better incumbent could still exist.
    pub dive_period: u64,
    /// Emit one debug log line per node.
    pub log_nodes: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            integrality_tol: 1e-6,
            abs_gap_tol: 1e-9,
            rel_gap_tol: 1e-6,
            target_gap: None,
            node_limit: None,
            time_limit: None,
            branching: BranchRule::MostFractional,
            node_selection: NodeSelection::BestBound {
                dfs_threshold: 100_000,
            },
            qp: QpSettings {
                tolerances: QpTolerances::default(),
                // An interior-point relaxation either converges in tens of
                // iterations or is stuck; keep node solves bounded.
                max_iterations: 200,
            },
            dive_period: 25,
            log_nodes: false,
        }
    }
}

/// A search node: partial binary fixings plus the relaxation outcome.
#[derive(Debug, Clone)]
pub struct Node {
    pub fixings: BTreeMap<usize, u8>,
    /// Lower bound for the subtree (parent bound until solved).
    pub bound: f64,
    /// Relaxation optimizer, when the node has been solved.
    pub relaxation: Option<DVector<f64>>,
    pub depth: usize,
}

/// Search outcome.
#[derive(Debug, Clone)]
pub struct BnbResult {
    pub incumbent: Option<DVector<f64>>,
    /// Objective of the incumbent; infinite when none was found.
    pub incumbent_value: f64,
    /// Best proven lower bound on the optimum.
    pub best_bound: f64,
    /// Proven relative gap between incumbent and bound.
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes: u64,
    pub wall_time: Duration,
    /// Worst observed drop of a child bound below its parent bound; stays
    /// within solver noise on a healthy run.
    pub max_bound_regression: f64,
    /// Nodes whose relaxation hit the iteration cap; their subtrees keep
    /// the parent bound and are still branched, so exactness is preserved.
    pub unresolved_nodes: u64,
    /// Children discarded by the fixing-conflict check without a QP solve.
    pub conflict_prunes: u64,
}

struct HeapEntry {
    bound: f64,
    seq: u64,
    depth: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: invert so the smallest bound pops first; ties pop the
        // oldest node for reproducibility.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct DepthEntry {
    depth: usize,
    seq: u64,
}
impl PartialEq for DepthEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for DepthEntry {}
impl Ord for DepthEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on (depth, seq): deepest, newest first.
        self.depth
            .cmp(&other.depth)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}
impl PartialOrd for DepthEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Inequality rows split by whether they touch only binaries.
struct RowView {
    /// Rows over binaries alone, e.g. the axis-selector rows.
    binary_rows: Vec<(Vec<(usize, f64)>, f64)>,
    /// All rows, for incumbent verification.
    all_rows: Vec<(Vec<(usize, f64)>, f64)>,
}

fn split_rows(problem: &MiqpProblem) -> RowView {
    let n = problem.qp.n();
    let mut is_binary = vec![false; n];
    for &b in &problem.binaries {
        is_binary[b] = true;
    }
    let mut binary_rows = Vec::new();
    let mut all_rows = Vec::new();
    for r in 0..problem.qp.a.nrows() {
        let mut row = Vec::new();
        for c in 0..n {
            let v = problem.qp.a[(r, c)];
            if v != 0.0 {
                row.push((c, v));
            }
        }
        let rhs = problem.qp.b[r];
        if !row.is_empty() && row.iter().all(|&(c, _)| is_binary[c]) {
            binary_rows.push((row.clone(), rhs));
        }
        all_rows.push((row, rhs));
    }
    RowView {
        binary_rows,
        all_rows,
    }
}

/// Cheapest possible activity of a row under the fixings, binaries
/// elsewhere free in {0,1}.
fn min_activity(row: &[(usize, f64)], fixings: &BTreeMap<usize, u8>) -> f64 {
    row.iter()
        .map(|&(c, v)| match fixings.get(&c) {
            Some(&val) => v * f64::from(val),
            None => v.min(0.0),
        })
        .sum()
}

/// True when some binary-only row cannot be satisfied under the fixings.
fn fixings_conflict(rows: &RowView, fixings: &BTreeMap<usize, u8>) -> bool {
    rows.binary_rows
        .iter()
        .any(|(row, rhs)| min_activity(row, fixings) > rhs + 1e-9)
}

/// Verify every inequality row at a candidate vector.
fn rows_satisfied(rows: &RowView, z: &DVector<f64>) -> bool {
    rows.all_rows.iter().all(|(row, rhs)| {
        let activity: f64 = row.iter().map(|&(c, v)| v * z[c]).sum();
        activity <= rhs + 1e-6 * (1.0 + rhs.abs())
    })
}

/// Round binaries of a relaxation vector in place.
fn snap_binaries(z: &mut DVector<f64>, binaries: &[usize]) {
    for &b in binaries {
        z[b] = if z[b] >= 0.5 { 1.0 } else { 0.0 };
    }
}

fn binary_pattern(z: &DVector<f64>, binaries: &[usize]) -> Vec<u8> {
    binaries
        .iter()
        .map(|&b| u8::from(z[b] >= 0.5))
        .collect()
}

/// Build dive fixings from a fractional relaxation: for each binary-only
/// row (unit coefficients), keep the largest selectors at 1 while the row
/// allows, forcing the rest to 0; uncovered binaries round to nearest.
fn dive_fixings(
    rows: &RowView,
    binaries: &[usize],
    z: &DVector<f64>,
    existing: &BTreeMap<usize, u8>,
) -> Option<BTreeMap<usize, f64>> {
    let mut fix: BTreeMap<usize, f64> = existing
        .iter()
        .map(|(&i, &v)| (i, f64::from(v)))
        .collect();
    let mut covered: std::collections::BTreeSet<usize> = existing.keys().copied().collect();
    for (row, rhs) in &rows.binary_rows {
        if row.iter().any(|&(_, v)| v <= 0.0) {
            return None; // only budget-style rows are understood here
        }
        let mut members: Vec<(usize, f64)> = row.iter().map(|&(c, v)| (c, v)).collect();
        // Largest relaxation values keep their relaxation first.
        members.sort_by(|a, b| z[b.0].total_cmp(&z[a.0]).then(a.0.cmp(&b.0)));
        let mut budget = *rhs;
        for (c, coef) in members {
            let already = fix.get(&c).copied();
            let want = match already {
                Some(v) => v,
                None => f64::from(u8::from(budget >= coef && z[c] >= 0.5)),
            };
            let value = if want == 1.0 && budget >= coef {
                budget -= coef;
                1.0
            } else if already == Some(1.0) {
                return None; // existing fixing exceeds the row budget
            } else {
                0.0
            };
            if let Some(prev) = already {
                if prev != value {
                    return None;
                }
            }
            fix.insert(c, value);
            covered.insert(c);
        }
    }
    for &b in binaries {
        if !covered.contains(&b) {
            fix.entry(b).or_insert(f64::from(u8::from(z[b] >= 0.5)));
        }
    }
    Some(fix)
}

/// Solve a mixed-integer QP to proven optimality by branch-and-bound.
pub fn solve_miqp(problem: &MiqpProblem, config: &BnbConfig) -> Result<BnbResult, BnbError> {
    problem.validate().map_err(BnbError::InvalidProblem)?;
    let start = Instant::now();
    let mut solver = QpSolver::new(&problem.qp, config.qp)?;
    let binaries = &problem.binaries;
    let rows = split_rows(problem);

    // Pure QP: one relaxation is the answer.
    if binaries.is_empty() {
        let relax = solver.solve();
        return Ok(finish_pure_qp(relax, start));
    }

    let mut incumbent: Option<DVector<f64>> = None;
    let mut incumbent_value = f64::INFINITY;
    let mut incumbent_pattern: Vec<u8> = Vec::new();
    let mut nodes_explored: u64 = 0;
    let mut unresolved: u64 = 0;
    let mut conflict_prunes: u64 = 0;
    let mut max_regression: f64 = 0.0;
    let mut incumbent_updates: u64 = 0;

    // Node arena plus two lazy heaps over it.
    let mut arena: Vec<Option<Node>> = Vec::new();
    let mut by_bound: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut by_depth: BinaryHeap<DepthEntry> = BinaryHeap::new();
    let mut open: usize = 0;

    let mut push_node = |node: Node,
                         arena: &mut Vec<Option<Node>>,
                         by_bound: &mut BinaryHeap<HeapEntry>,
                         by_depth: &mut BinaryHeap<DepthEntry>,
                         open: &mut usize| {
        let seq = arena.len() as u64;
        by_bound.push(HeapEntry {
            bound: node.bound,
            seq,
            depth: node.depth,
        });
        by_depth.push(DepthEntry {
            depth: node.depth,
            seq,
        });
        arena.push(Some(node));
        *open += 1;
    };

    push_node(
        Node {
            fixings: BTreeMap::new(),
            bound: f64::NEG_INFINITY,
            relaxation: None,
            depth: 0,
        },
        &mut arena,
        &mut by_bound,
        &mut by_depth,
        &mut open,
    );

    let NodeSelection::BestBound { dfs_threshold } = config.node_selection;
    let mut status = SolveStatus::Optimal;
    let mut best_bound_on_stop: Option<f64> = None;

    let mut consider_incumbent =
        |candidate: &QpSolution,
         incumbent: &mut Option<DVector<f64>>,
         incumbent_value: &mut f64,
         incumbent_pattern: &mut Vec<u8>,
         incumbent_updates: &mut u64| {
            if candidate.status != QpStatus::Optimal {
                return;
            }
            let mut z = candidate.z.clone();
            snap_binaries(&mut z, binaries);
            if !rows_satisfied(&rows, &z) {
                return;
            }
            let value = candidate.objective;
            let tie_tol = config.abs_gap_tol.max(1e-12);
            if value < *incumbent_value - tie_tol {
                *incumbent_value = value;
                *incumbent_pattern = binary_pattern(&z, binaries);
                *incumbent = Some(z);
                *incumbent_updates += 1;
            } else if (value - *incumbent_value).abs() <= tie_tol {
                // Deterministic tie rule: lexicographically smallest string.
                let pattern = binary_pattern(&z, binaries);
                if pattern < *incumbent_pattern {
                    *incumbent_value = value.min(*incumbent_value);
                    *incumbent_pattern = pattern;
                    *incumbent = Some(z);
                    *incumbent_updates += 1;
                }
            }
        };

    loop {
        // Best open bound decides both termination and the gap.
        let best_open = loop {
            match by_bound.peek() {
                None => break None,
                Some(entry) if arena[entry.seq as usize].is_none() => {
                    by_bound.pop();
                }
                Some(entry) => break Some((entry.bound, entry.seq)),
            }
        };
        let Some((frontier_bound, best_seq)) = best_open else {
            break; // exhausted
        };
        let frontier = if frontier_bound.is_finite() {
            frontier_bound
        } else {
            f64::NEG_INFINITY
        };

        if incumbent.is_some() {
            let slack = config.abs_gap_tol.max(config.rel_gap_tol * incumbent_value.abs());
            if incumbent_value - frontier <= slack {
                best_bound_on_stop = Some(frontier.max(incumbent_value - slack));
                break; // proven optimal within tolerances
            }
            if let Some(target) = config.target_gap {
                let rel = (incumbent_value - frontier) / incumbent_value.abs().max(1e-12);
                if rel <= target {
                    status = SolveStatus::GapLimit;
                    best_bound_on_stop = Some(frontier);
                    break;
                }
            }
        }
        if let Some(limit) = config.node_limit {
            if nodes_explored >= limit {
                status = SolveStatus::NodeLimit;
                best_bound_on_stop = Some(frontier);
                break;
            }
        }
        if let Some(limit) = config.time_limit {
            if start.elapsed() >= limit {
                status = SolveStatus::TimeLimit;
                best_bound_on_stop = Some(frontier);
                break;
            }
        }

        // Pop best-bound, or deepest once the open set is too large.
        let seq = if open > dfs_threshold {
            loop {
                let entry = by_depth.pop().expect("open nodes tracked");
                if arena[entry.seq as usize].is_some() {
                    break entry.seq;
                }
            }
        } else {
            by_bound.pop();
            best_seq
        };
        let mut node = arena[seq as usize].take().expect("live node");
        open -= 1;

        // Prune against the incumbent.
        if incumbent.is_some() {
            let slack = config.abs_gap_tol.max(config.rel_gap_tol * incumbent_value.abs());
            if node.bound >= incumbent_value - slack {
                continue;
            }
        }

        let fixings_f64: BTreeMap<usize, f64> = node
            .fixings
            .iter()
            .map(|(&i, &v)| (i, f64::from(v)))
            .collect();
        let relax = solver.solve_with_fixings(&fixings_f64, &[])?;
        nodes_explored += 1;

        match relax.status {
            QpStatus::Infeasible => continue,
            QpStatus::Unbounded => return Err(BnbError::Unbounded),
            QpStatus::MaxIterations => {
                // Keep the parent bound; branch blind so exactness holds.
                unresolved += 1;
                log::debug!(
                    target: "modplan::bnb",
                    "relaxation unresolved after {} iterations (prim {:.2e}, dual {:.2e}) \
                     with fixings {:?}",
                    relax.iterations,
                    relax.primal_residual,
                    relax.dual_residual,
                    node.fixings,
                );
            }
            QpStatus::Optimal => {
                if node.bound.is_finite() && relax.objective < node.bound {
                    max_regression = max_regression.max(node.bound - relax.objective);
                }
                node.bound = relax.objective.max(node.bound);
            }
        }
        node.relaxation = Some(relax.z.clone());

        if config.log_nodes {
            let frac_count = binaries
                .iter()
                .filter(|&&b| {
                    let v = relax.z[b];
                    v.min(1.0 - v) > config.integrality_tol
                })
                .count();
            log::debug!(
                target: "modplan::bnb",
                "node {nodes_explored} depth {} bound {:.6e} fractional {frac_count} open {open}",
                node.depth,
                node.bound,
            );
        }

        if incumbent.is_some() {
            let slack = config.abs_gap_tol.max(config.rel_gap_tol * incumbent_value.abs());
            if node.bound >= incumbent_value - slack {
                continue;
            }
        }

        // Integral relaxation: candidate incumbent after re-verifying the
        // rows on the rounded values.
        let fractional: Vec<usize> = binaries
            .iter()
            .copied()
            .filter(|&b| {
                let v = relax.z[b];
                v.min(1.0 - v) > config.integrality_tol
            })
            .collect();
        if relax.status == QpStatus::Optimal && fractional.is_empty() {
            let before = incumbent_updates;
            consider_incumbent(
                &relax,
                &mut incumbent,
                &mut incumbent_value,
                &mut incumbent_pattern,
                &mut incumbent_updates,
            );
            if incumbent_updates > before || incumbent.is_some() {
                continue;
            }
        }

        // Rounding dive: a cheap feasible completion of this relaxation.
        let want_dive = relax.status == QpStatus::Optimal
            && (nodes_explored == 1
                || (config.dive_period > 0 && nodes_explored % config.dive_period == 0));
        if want_dive {
            if let Some(dive) = dive_fixings(&rows, binaries, &relax.z, &node.fixings) {
                if let Ok(dived) = solver.solve_with_fixings(&dive, &[]) {
                    consider_incumbent(
                        &dived,
                        &mut incumbent,
                        &mut incumbent_value,
                        &mut incumbent_pattern,
                        &mut incumbent_updates,
                    );
                }
            }
        }

        // Branch.
        let BranchRule::MostFractional = config.branching;
        let branch_var = binaries
            .iter()
            .copied()
            .filter(|b| !node.fixings.contains_key(b))
            .max_by(|&a, &b| {
                let fa = relax.z[a].min(1.0 - relax.z[a]);
                let fb = relax.z[b].min(1.0 - relax.z[b]);
                fa.total_cmp(&fb).then(b.cmp(&a))
            });
        let Some(branch_var) = branch_var else {
            continue; // everything fixed and still not accepted: dead end
        };
        for value in [0u8, 1u8] {
            let mut fixings = node.fixings.clone();
            fixings.insert(branch_var, value);
            if fixings_conflict(&rows, &fixings) {
                conflict_prunes += 1;
                continue;
            }
            push_node(
                Node {
                    fixings,
                    bound: node.bound,
                    relaxation: None,
                    depth: node.depth + 1,
                },
                &mut arena,
                &mut by_bound,
                &mut by_depth,
                &mut open,
            );
        }
    }

    let wall_time = start.elapsed();
    let (status, best_bound, gap) = match (&incumbent, status) {
        (None, SolveStatus::Optimal) => (SolveStatus::Infeasible, f64::INFINITY, 0.0),
        (None, other) => (other, f64::NEG_INFINITY, f64::INFINITY),
        (Some(_), s) => {
            let bound = best_bound_on_stop.unwrap_or(incumbent_value);
            let bound = bound.min(incumbent_value);
            let gap = (incumbent_value - bound) / incumbent_value.abs().max(1e-12);
            (s, bound, gap.max(0.0))
        }
    };
    Ok(BnbResult {
        incumbent,
        incumbent_value,
        best_bound,
        gap,
        status,
        nodes: nodes_explored,
        wall_time,
        max_bound_regression: max_regression,
        unresolved_nodes: unresolved,
        conflict_prunes,
    })
}

fn finish_pure_qp(relax: QpSolution, start: Instant) -> BnbResult {
    let status = match relax.status {
        QpStatus::Optimal => SolveStatus::Optimal,
        QpStatus::Infeasible => SolveStatus::Infeasible,
        QpStatus::Unbounded | QpStatus::MaxIterations => SolveStatus::NodeLimit,
    };
    let feasible = relax.status == QpStatus::Optimal;
    BnbResult {
        incumbent: feasible.then(|| relax.z.clone()),
        incumbent_value: if feasible {
            relax.objective
        } else {
            f64::INFINITY
        },
        best_bound: if feasible {
            relax.objective
        } else {
            f64::INFINITY
        },
        gap: 0.0,
        status,
        nodes: 1,
        wall_time: start.elapsed(),
        max_bound_regression: 0.0,
        unresolved_nodes: u64::from(relax.status == QpStatus::MaxIterations),
        conflict_prunes: 0,
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("admissible assignment count {total:.3e} exceeds the cap {cap}")]
    CapExceeded { total: f64, cap: u64 },
    #[error("binary group of size {0} too large to enumerate")]
    GroupTooLarge(usize),
    #[error("no admissible binary assignment is feasible")]
    Infeasible,
    #[error("invalid MIQP: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Options for [`enumerate_oracle_with_options`].
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Reduce each group to its Pareto-maximal admissible patterns. Sound
    /// whenever binaries are cost-free relaxation selectors (verified
    /// structurally before use); otherwise enumeration stays exhaustive.
    pub use_dominance: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            use_dominance: true,
        }
    }
}

/// Exact optimum by enumerating admissible binary assignments, one QP per
/// assignment, depth-first over the binary groups with monotone-bound
/// pruning. Intended as a test oracle for [`solve_miqp`] on small
/// instances.
///
/// The cap guards the pre-reduction admissible count: the product over
/// groups of the number of 0/1 patterns satisfying the binary-only rows.
pub fn enumerate_oracle(
    problem: &MiqpProblem,
    cap: u64,
) -> Result<(f64, DVector<f64>), OracleError> {
    enumerate_oracle_with_options(problem, cap, &OracleOptions::default())
}

pub fn enumerate_oracle_with_options(
    problem: &MiqpProblem,
    cap: u64,
    options: &OracleOptions,
) -> Result<(f64, DVector<f64>), OracleError> {
    problem.validate().map_err(OracleError::InvalidProblem)?;
    let binaries = &problem.binaries;
    let mut solver = QpSolver::new(&problem.qp, QpSettings::default())?;
    if binaries.is_empty() {
        let relax = solver.solve();
        return match relax.status {
            QpStatus::Optimal => Ok((relax.objective, relax.z)),
            _ => Err(OracleError::Infeasible),
        };
    }
    let rows = split_rows(problem);

    // Group binaries by connected components of the binary-only rows.
    let mut group_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (row, _) in &rows.binary_rows {
        let mut target: Option<usize> = row.iter().find_map(|&(c, _)| group_of.get(&c).copied());
        if target.is_none() {
            target = Some(groups.len());
            groups.push(Vec::new());
        }
        let g = target.unwrap();
        for &(c, _) in row {
            match group_of.get(&c) {
                None => {
                    group_of.insert(c, g);
                    groups[g].push(c);
                }
                Some(&existing) if existing != g => {
                    // Merge components.
                    let moved = std::mem::take(&mut groups[existing]);
                    for &m in &moved {
                        group_of.insert(m, g);
                    }
                    groups[g].extend(moved);
                }
                Some(_) => {}
            }
        }
    }
    for &b in binaries {
        if !group_of.contains_key(&b) {
            group_of.insert(b, groups.len());
            groups.push(vec![b]);
        }
    }
    groups.retain(|g| !g.is_empty());
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();

    // Admissible patterns per group.
    let mut admissible: Vec<Vec<Vec<u8>>> = Vec::with_capacity(groups.len());
    let mut total = 1.0f64;
    for group in &groups {
        if group.len() > 20 {
            return Err(OracleError::GroupTooLarge(group.len()));
        }
        let relevant: Vec<&(Vec<(usize, f64)>, f64)> = rows
            .binary_rows
            .iter()
            .filter(|(row, _)| row.iter().all(|(c, _)| group.contains(c)))
            .collect();
        let mut patterns = Vec::new();
        for mask in 0u32..(1 << group.len()) {
            let pattern: Vec<u8> = (0..group.len()).map(|i| ((mask >> i) & 1) as u8).collect();
            let ok = relevant.iter().all(|(row, rhs)| {
                let activity: f64 = row
                    .iter()
                    .map(|&(c, v)| {
                        let pos = group.iter().position(|&g| g == c).unwrap();
                        v * f64::from(pattern[pos])
                    })
                    .sum();
                activity <= rhs + 1e-9
            });
            if ok {
                patterns.push(pattern);
            }
        }
        total *= patterns.len() as f64;
        admissible.push(patterns);
    }
    if total > cap as f64 {
        return Err(OracleError::CapExceeded { total, cap });
    }

    // Dominance: keep only Pareto-maximal patterns when binaries are pure
    // relaxation selectors (no cost, nonpositive coefficients in every
    // mixed row, unit box).
    let dominance_valid = options.use_dominance && {
        let mut is_binary = vec![false; problem.qp.n()];
        for &b in binaries {
            is_binary[b] = true;
        }
        let cost_free = binaries.iter().all(|&b| {
            problem.qp.f[b] == 0.0
                && (0..problem.qp.n()).all(|j| problem.qp.h[(b, j)] == 0.0)
                && problem.qp.lb[b] == 0.0
                && problem.qp.ub[b] == 1.0
        });
        let relaxing = rows.all_rows.iter().all(|(row, _)| {
            let mixed = row.iter().any(|&(c, _)| !is_binary[c]);
            !mixed || row.iter().all(|&(c, v)| !is_binary[c] || v <= 0.0)
        });
        cost_free && relaxing
    };
    if dominance_valid {
        for patterns in &mut admissible {
            let all = patterns.clone();
            patterns.retain(|p| {
                !all.iter().any(|q| {
                    q != p && q.iter().zip(p.iter()).all(|(a, b)| a >= b)
                })
            });
        }
    }

    // Depth-first over groups with prefix-relaxation pruning.
    let mut best: Option<(f64, DVector<f64>, Vec<u8>)> = None;
    let mut fixings: BTreeMap<usize, f64> = BTreeMap::new();
    dfs(
        &groups,
        &admissible,
        0,
        &mut fixings,
        &mut solver,
        binaries,
        &mut best,
    )?;
    match best {
        Some((value, z, _)) => Ok((value, z)),
        None => Err(OracleError::Infeasible),
    }
}

fn dfs(
    groups: &[Vec<usize>],
    admissible: &[Vec<Vec<u8>>],
    level: usize,
    fixings: &mut BTreeMap<usize, f64>,
    solver: &mut QpSolver,
    binaries: &[usize],
    best: &mut Option<(f64, DVector<f64>, Vec<u8>)>,
) -> Result<(), OracleError> {
    let relax = solver.solve_with_fixings(fixings, &[])?;
    match relax.status {
        QpStatus::Infeasible => return Ok(()),
        QpStatus::Unbounded => return Err(OracleError::InvalidProblem("unbounded".into())),
        QpStatus::MaxIterations if level == groups.len() => return Ok(()),
        _ => {}
    }
    if relax.status == QpStatus::Optimal {
        if let Some((best_value, _, best_pattern)) = best {
            let tie = 1e-12f64.max(1e-12 * best_value.abs());
            if relax.objective > *best_value + tie {
                return Ok(()); // bound: completions only add constraints
            }
            if level == groups.len() {
                let pattern: Vec<u8> = binaries
                    .iter()
                    .map(|&b| u8::from(relax.z[b] >= 0.5))
                    .collect();
                if relax.objective < *best_value - tie
                    || (relax.objective <= *best_value + tie && pattern < *best_pattern)
                {
                    *best = Some((relax.objective.min(*best_value), relax.z, pattern));
                }
                return Ok(());
            }
        } else if level == groups.len() {
            let pattern: Vec<u8> = binaries
                .iter()
                .map(|&b| u8::from(relax.z[b] >= 0.5))
                .collect();
            *best = Some((relax.objective, relax.z, pattern));
            return Ok(());
        }
    } else if level == groups.len() {
        return Ok(());
    }

    // Try patterns closest to the prefix relaxation first: a good leaf
    // early makes the monotone bound prune most of the rest.
    let mut order: Vec<usize> = (0..admissible[level].len()).collect();
    if relax.status == QpStatus::Optimal {
        let score = |pattern: &[u8]| -> f64 {
            groups[level]
                .iter()
                .zip(pattern)
                .map(|(&var, &bit)| (relax.z[var] - f64::from(bit)).abs())
                .sum()
        };
        order.sort_by(|&a, &b| {
            score(&admissible[level][a])
                .total_cmp(&score(&admissible[level][b]))
                .then(a.cmp(&b))
        });
    }
    for idx in order {
        let pattern = &admissible[level][idx];
        for (pos, &var) in groups[level].iter().enumerate() {
            fixings.insert(var, f64::from(pattern[pos]));
        }
        dfs(groups, admissible, level + 1, fixings, solver, binaries, best)?;
        for &var in &groups[level] {
            fixings.remove(&var);
        }
    }
    Ok(())
}
