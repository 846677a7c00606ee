//! Solve orchestration and run reports.
//!
//! [`run`] solves one scenario for a list of slice counts, optionally
//! attaches gap analysis against the exact solve, and emits one report row
//! per `(scenario, m)` cell: CPU seconds, gap, the robot and obstacle cost
//! terms, solver status and node count. Reports serialize to CSV and to an
//! aligned text table; solution JSON and SVG files are written per cell when
//! an output directory is given.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bnb::BnbConfig;
use crate::model::{Scenario, SolveStatus};
use crate::scenario::{save_solution, write_atomic, ScenarioError};
use crate::slicing::{gap_analysis, solve_sliced_with, SliceError, SlicedRun};
use crate::svg::{render_svg, RenderError};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    File(#[from] ScenarioError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// One `(scenario, m)` cell of a run.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub scenario: String,
    pub model: String,
    pub m: usize,
    pub cpu_s: f64,
    /// Optimality gap versus the reference solve, when computed.
    pub gap: Option<f64>,
    pub j_r: f64,
    pub j_o: f64,
    pub status: SolveStatus,
    pub nodes: u64,
    /// Error text for cells whose solve failed; such rows carry no costs.
    pub error: Option<String>,
}

/// Report over all requested cells.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,model,m,cpu_s,gap,j_r,j_o,status,nodes,format_version\n",
        );
        for row in &self.rows {
            let gap = row.gap.map(|g| format!("{g:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{},{:.4},{:.4},{},{},{}",
                row.scenario,
                row.model,
                row.m,
                row.cpu_s,
                gap,
                row.j_r,
                row.j_o,
                row.error
                    .as_deref()
                    .map(|_| "error".to_string())
                    .unwrap_or_else(|| row.status.to_string()),
                row.nodes,
                REPORT_FORMAT_VERSION,
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:<17} {:>3} {:>10} {:>8} {:>10} {:>10} {:>11} {:>8}",
            "scenario", "model", "m", "CPU [s]", "Gap/eps", "J_r", "J_o", "status", "nodes"
        );
        for row in &self.rows {
            let gap = row
                .gap
                .map(|g| format!("{g:.4}"))
                .unwrap_or_else(|| "-".into());
            let status = row
                .error
                .as_deref()
                .map(|_| "error".to_string())
                .unwrap_or_else(|| row.status.to_string());
            let _ = writeln!(
                out,
                "{:<18} {:<17} {:>3} {:>10.3} {:>8} {:>10.4} {:>10.4} {:>11} {:>8}",
                row.scenario, row.model, row.m, row.cpu_s, gap, row.j_r, row.j_o, status, row.nodes
            );
        }
        out
    }
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub m_values: Vec<usize>,
    /// Also solve `m = 1` as the reference and attach gap analysis to every
    /// row.
    pub with_reference: bool,
    pub bnb: BnbConfig,
    /// Big-M override forwarded to the builder.
    pub big_m: Option<f64>,
    /// Directory for solution JSON, SVG and report files.
    pub out_dir: Option<PathBuf>,
    pub render: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            m_values: vec![1],
            with_reference: false,
            bnb: BnbConfig::default(),
            big_m: None,
            out_dir: None,
            render: true,
        }
    }
}

/// Artifacts of one run: the report plus each cell's solve.
pub struct RunArtifacts {
    pub report: RunReport,
    pub runs: Vec<(usize, SlicedRun)>,
}

/// Solve `scenario` for every requested `m`, building the report and
/// writing per-cell files. Solver failures are recorded per row and do not
/// abort the remaining cells.
pub fn run(scenario: &Scenario, name: &str, options: &RunOptions) -> Result<RunArtifacts, ReportError> {
    let mut report = RunReport::default();
    let mut runs = Vec::new();

    // Reference solve for gap analysis.
    let reference = if options.with_reference {
        match solve_sliced_with(scenario, 1, &options.bnb, options.big_m) {
            Ok(run) => Some(run),
            Err(err) => {
                log::warn!(target: "modplan::report", "reference solve failed: {err}");
                None
            }
        }
    } else {
        None
    };

    for &m in &options.m_values {
        let solved = if m == 1 && reference.is_some() {
            Ok(reference.clone().unwrap())
        } else {
            solve_sliced_with(scenario, m, &options.bnb, options.big_m)
        };
        match solved {
            Ok(sliced) => {
                let gap = match &reference {
                    Some(reference) => gap_analysis(
                        &sliced.solution,
                        Some(&reference.solution),
                        scenario,
                        &sliced.plan,
                    )?
                    .epsilon,
                    None => None,
                };
                if let Some(dir) = &options.out_dir {
                    write_cell_files(scenario, name, m, &sliced, dir, options.render)?;
                }
                report.rows.push(RunRow {
                    scenario: name.to_string(),
                    model: scenario.model.to_string(),
                    m,
                    cpu_s: sliced.solution.meta.wall_time.as_secs_f64(),
                    gap,
                    j_r: sliced.solution.cost.robot,
                    j_o: sliced.solution.cost.obstacle,
                    status: sliced.solution.meta.status,
                    nodes: sliced.solution.meta.nodes,
                    error: None,
                });
                runs.push((m, sliced));
            }
            Err(err) => {
                report.rows.push(RunRow {
                    scenario: name.to_string(),
                    model: scenario.model.to_string(),
                    m,
                    cpu_s: 0.0,
                    gap: None,
                    j_r: f64::NAN,
                    j_o: f64::NAN,
                    status: SolveStatus::Infeasible,
                    nodes: 0,
                    error: Some(err.to_string()),
                });
            }
        }
    }

    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
        write_atomic(&dir.join("report.txt"), report.to_table().as_bytes())?;
    }
    Ok(RunArtifacts { report, runs })
}

fn write_cell_files(
    scenario: &Scenario,
    name: &str,
    m: usize,
    sliced: &SlicedRun,
    dir: &Path,
    render: bool,
) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let stem = format!("{name}_m{m}");
    save_solution(
        &sliced.solution,
        scenario.model,
        dir.join(format!("{stem}.solution.json")),
    )?;
    if render {
        render_svg(scenario, &sliced.solution, dir.join(format!("{stem}.svg")))?;
    }
    Ok(())
}
