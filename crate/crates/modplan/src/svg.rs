//! Static SVG renders of a scenario and its solution.
//!
//! The picture shows the workspace frame, start and goal markers, the robot
//! path polyline, every obstacle at its initial position (outline) and final
//! position (filled), and one displacement arrow per moved obstacle. Output
//! bytes are deterministic for identical inputs.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{Scenario, Solution};
use crate::scenario::write_atomic;

pub const SVG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("solution does not match the scenario: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] crate::scenario::ScenarioError),
}

const SCALE: f64 = 40.0;
const MARGIN: f64 = 0.8;

struct Frame {
    x_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_lo + MARGIN) * SCALE, (self.y_hi - y + MARGIN) * SCALE)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render to an SVG string.
pub fn render_svg_string(scenario: &Scenario, solution: &Solution) -> Result<String, RenderError> {
    if solution.horizon() != scenario.horizon
        || solution.obstacle_count() != scenario.obstacle_count()
    {
        return Err(RenderError::Mismatch(format!(
            "horizon {}/{} obstacles {}/{}",
            solution.horizon(),
            scenario.horizon,
            solution.obstacle_count(),
            scenario.obstacle_count()
        )));
    }
    let x_lo = scenario.state_bounds.lower[0];
    let x_hi = scenario.state_bounds.upper[0];
    let y_lo = scenario.state_bounds.lower[1];
    let y_hi = scenario.state_bounds.upper[1];
    let frame = Frame { x_lo, y_hi };
    let width = (x_hi - x_lo + 2.0 * MARGIN) * SCALE;
    let height = (y_hi - y_lo + 2.0 * MARGIN) * SCALE;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}" data-format-version="{SVG_FORMAT_VERSION}">"##,
        fmt(width),
        fmt(height)
    );
    let (fx, fy) = frame.map(x_lo, y_hi);
    let _ = writeln!(
        out,
        r##"  <rect class="workspace" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444" stroke-width="1.5"/>"##,
        fmt(fx),
        fmt(fy),
        fmt((x_hi - x_lo) * SCALE),
        fmt((y_hi - y_lo) * SCALE)
    );

    // Obstacles: initial outline, final filled, arrow when displaced.
    for (i, obs) in scenario.obstacles.iter().enumerate() {
        let first = solution.obstacle_states[i].first().unwrap();
        let last = solution.obstacle_states[i].last().unwrap();
        let (ix, iy) = frame.map(first.ox, first.oy);
        let _ = writeln!(
            out,
            r##"  <circle class="obstacle-initial" cx="{}" cy="{}" r="{}" fill="none" stroke="#999" stroke-dasharray="4 3"/>"##,
            fmt(ix),
            fmt(iy),
            fmt(obs.radius * SCALE)
        );
        let (cx, cy) = frame.map(last.ox, last.oy);
        let _ = writeln!(
            out,
            r##"  <circle class="obstacle-final" cx="{}" cy="{}" r="{}" fill="#19b5c2" fill-opacity="0.55" stroke="#0b7c85"/>"##,
            fmt(cx),
            fmt(cy),
            fmt(obs.radius * SCALE)
        );
        let moved = (last.ox - first.ox).hypot(last.oy - first.oy);
        if moved > 1e-3 {
            let _ = writeln!(
                out,
                r##"  <line class="displacement-arrow" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#0b7c85" stroke-width="2" marker-end="url(#arrowhead)"/>"##,
                fmt(ix),
                fmt(iy),
                fmt(cx),
                fmt(cy)
            );
        }
    }

    // Robot path.
    let mut points = String::new();
    for state in &solution.robot_states {
        let (x, y) = state.position();
        let (px, py) = frame.map(x, y);
        let _ = write!(points, "{},{} ", fmt(px), fmt(py));
    }
    let _ = writeln!(
        out,
        r##"  <polyline class="robot-path" points="{}" fill="none" stroke="#d33636" stroke-width="2"/>"##,
        points.trim_end()
    );

    // Start and goal markers.
    let (sx, sy) = scenario.start.position();
    let (gx, gy) = scenario.goal.position();
    let (sx, sy) = frame.map(sx, sy);
    let (gx, gy) = frame.map(gx, gy);
    let _ = writeln!(
        out,
        r##"  <circle class="start-marker" cx="{}" cy="{}" r="{}" fill="#2f9e44"/>"##,
        fmt(sx),
        fmt(sy),
        fmt(scenario.robot_radius * SCALE)
    );
    let _ = writeln!(
        out,
        r##"  <circle class="goal-marker" cx="{}" cy="{}" r="{}" fill="none" stroke="#2f9e44" stroke-width="2.5"/>"##,
        fmt(gx),
        fmt(gy),
        fmt(scenario.robot_radius * SCALE)
    );

    let _ = writeln!(
        out,
        r##"  <defs><marker id="arrowhead" markerWidth="8" markerHeight="6" refX="7" refY="3" orient="auto"><polygon points="0 0, 8 3, 0 6" fill="#0b7c85"/></marker></defs>"##
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Render to a file, written atomically.
pub fn render_svg(
    scenario: &Scenario,
    solution: &Solution,
    path: impl AsRef<Path>,
) -> Result<(), RenderError> {
    let text = render_svg_string(scenario, solution)?;
    write_atomic(path.as_ref(), text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{rollout, toy_scenario};
    use crate::model::RobotControl;

    #[test]
    fn obstacle_free_render_structure() {
        let scenario = toy_scenario(4, vec![]);
        let u = RobotControl::Velocity {
            ux: 1.0,
            uy: 0.0,
            utheta: 0.0,
        };
        let solution = rollout(&scenario, vec![u; 3], vec![]);
        let svg = render_svg_string(&scenario, &solution).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("start-marker").count(), 1);
        assert_eq!(svg.matches("goal-marker").count(), 1);
        assert_eq!(svg.matches("displacement-arrow").count(), 0);
        // Deterministic bytes.
        let again = render_svg_string(&scenario, &solution).unwrap();
        assert_eq!(svg, again);
    }
}
