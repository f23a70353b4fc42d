//! Navigation and grounding metrics: success, oracle success, SPL, path
//! length and referring-expression success, plus table rendering.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Task, VISIBILITY_RADIUS};
use crate::episode::{Detection, Simulator, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{self, iou};
use crate::par::{self, Exec};

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub nav_success: bool,
    pub oracle_success: bool,
    pub reverie_success: bool,
    pub has_detection: bool,
    /// Meters walked.
    pub path_length: f64,
    /// Shortest start-to-goal distance, meters.
    pub shortest_length: f64,
    pub spl_term: f64,
}

/// Means over tasks. Rates are percentages, length is meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub success: f64,
    pub oracle_success: f64,
    pub spl: f64,
    pub length: f64,
    pub reverie_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub results: Vec<TaskResult>,
    pub aggregates: Aggregates,
}

/// The navigation-success condition at a single viewpoint: the target is
/// within 3 m and survives in at least one of the 36 views.
pub fn success_at(sim: &Simulator, task: &Task, viewpoint: &str) -> bool {
    let env = sim.env();
    let (Some(vp), Some(obj)) = (env.viewpoint(viewpoint), env.object(&task.target_object)) else {
        return false;
    };
    geometry::distance(vp.position, obj.bbox.center) <= VISIBILITY_RADIUS
        && sim.object_visible(viewpoint, &task.target_object)
}

pub fn nav_success(sim: &Simulator, task: &Task, traj: &Trajectory) -> bool {
    success_at(sim, task, traj.stop_viewpoint())
}

pub fn oracle_success(sim: &Simulator, task: &Task, traj: &Trajectory) -> bool {
    traj.path.iter().any(|vp| success_at(sim, task, vp))
}

/// Sum of traversed edge lengths. Folds from +0.0 because `Sum` for floats
/// starts at -0.0, which would print an empty walk as "-0.00".
pub fn path_length(env: &Environment, traj: &Trajectory) -> f64 {
    traj.path
        .windows(2)
        .fold(0.0, |acc, w| acc + env.edge_length(&w[0], &w[1]).unwrap_or(0.0))
}

pub fn shortest_length(env: &Environment, task: &Task) -> Result<f64> {
    env.nearest_goal(task, &task.start_viewpoint).map(|(_, d)| d)
}

pub fn spl_term(success: bool, shortest: f64, walked: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = shortest.max(walked);
    if denom <= 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

/// Grounding success at the detection viewpoint (the final path entry).
pub fn reverie_success(sim: &Simulator, task: &Task, traj: &Trajectory) -> bool {
    let Some(det) = &traj.detection else {
        return false;
    };
    let at = traj.stop_viewpoint();
    if !success_at(sim, task, at) {
        return false;
    }
    match det {
        Detection::CandidateChoice { object } => *object == task.target_object,
        Detection::BboxOutput { view_k, bbox } => {
            if !(1..=geometry::VIEW_COUNT).contains(view_k) {
                return false;
            }
            sim.panorama(at).candidate_objects[view_k - 1]
                .iter()
                .find(|p| p.object == task.target_object)
                .is_some_and(|gt| iou(bbox, &gt.bbox) >= IOU_THRESHOLD)
        }
    }
}

/// Structural checks on an externally supplied trajectory.
pub fn validate_trajectory(env: &Environment, task: &Task, traj: &Trajectory) -> Result<()> {
    let bad = |m: String| Err(Error::Validation(format!("trajectory for `{}`: {m}", traj.task_id)));
    if traj.path.first() != Some(&task.start_viewpoint) {
        return bad("path does not begin at the task start".into());
    }
    for w in traj.path.windows(2) {
        if !env.are_adjacent(&w[0], &w[1]) {
            return bad(format!("`{}` and `{}` are not adjacent", w[0], w[1]));
        }
    }
    Ok(())
}

pub fn evaluate(sim: &Simulator, task: &Task, traj: &Trajectory) -> Result<TaskResult> {
    let env = sim.env();
    let nav = nav_success(sim, task, traj);
    let walked = path_length(env, traj);
    let shortest = shortest_length(env, task)?;
    Ok(TaskResult {
        task_id: task.id.clone(),
        nav_success: nav,
        oracle_success: oracle_success(sim, task, traj),
        reverie_success: reverie_success(sim, task, traj),
        has_detection: traj.detection.is_some(),
        path_length: walked,
        shortest_length: shortest,
        spl_term: spl_term(nav, shortest, walked),
    })
}

/// Scores trajectories against their tasks (matched by task id). Every
/// trajectory must belong to a task of this simulator's environment.
pub fn evaluate_all(
    sim: &Simulator,
    tasks: &[Task],
    trajs: &[Trajectory],
    exec: Exec,
) -> Result<Vec<TaskResult>> {
    let by_id: HashMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let paired: Vec<(&Task, &Trajectory)> = trajs
        .iter()
        .map(|tr| {
            by_id
                .get(tr.task_id.as_str())
                .map(|t| (*t, tr))
                .ok_or_else(|| Error::UnknownTask(tr.task_id.clone()))
        })
        .collect::<Result<_>>()?;
    par::map(exec, &paired, |(task, tr)| {
        validate_trajectory(sim.env(), task, tr)?;
        evaluate(sim, task, tr)
    })
    .into_iter()
    .collect()
}

pub fn spl(results: &[TaskResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(results.iter().fold(0.0, |a, r| a + r.spl_term) / results.len() as f64)
}

pub fn aggregate(results: Vec<TaskResult>) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let n = results.len() as f64;
    let rate = |f: fn(&TaskResult) -> bool| 100.0 * results.iter().filter(|r| f(r)).count() as f64 / n;
    let aggregates = Aggregates {
        success: rate(|r| r.nav_success),
        oracle_success: rate(|r| r.oracle_success),
        spl: 100.0 * spl(&results)?,
        length: results.iter().fold(0.0, |a, r| a + r.path_length) / n,
        reverie_success: rate(|r| r.reverie_success),
    };
    Ok(MetricsReport {
        results,
        aggregates,
    })
}

const COLUMNS: [&str; 5] = ["Succ.", "OSucc.", "SPL", "Length", "REVERIE Succ."];

impl Aggregates {
    fn cells(&self) -> [String; 5] {
        [
            format!("{:.2}", self.success),
            format!("{:.2}", self.oracle_success),
            format!("{:.2}", self.spl),
            format!("{:.2}", self.length),
            format!("{:.2}", self.reverie_success),
        ]
    }
}

/// CSV with one row per named report.
pub fn render_csv(rows: &[(String, &MetricsReport)]) -> String {
    let mut s = String::from("method,succ,osucc,spl,length,reverie_succ\n");
    for (name, r) in rows {
        let c = r.aggregates.cells();
        let _ = writeln!(s, "{name},{}", c.join(","));
    }
    s
}

/// Aligned text table shaped like the usual leaderboard layout.
pub fn render_table(rows: &[(String, &MetricsReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let cells: Vec<[String; 5]> = rows.iter().map(|(_, r)| r.aggregates.cells()).collect();
    let widths: Vec<usize> = (0..5)
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].len())
                .chain(std::iter::once(COLUMNS[i].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    let _ = write!(s, "{:<name_w$}", "Method");
    for (i, col) in COLUMNS.iter().enumerate() {
        let _ = write!(s, " | {:>w$}", col, w = widths[i]);
    }
    s.push('\n');
    let total = name_w + widths.iter().map(|w| w + 3).sum::<usize>();
    s.push_str(&"-".repeat(total));
    s.push('\n');
    for ((name, _), c) in rows.iter().zip(&cells) {
        let _ = write!(s, "{name:<name_w$}");
        for (i, cell) in c.iter().enumerate() {
            let _ = write!(s, " | {:>w$}", cell, w = widths[i]);
        }
        s.push('\n');
    }
    s
}
