//! Episode state machine: observations, move/stop/detect actions, the
//! one-detection rule and trajectory recording.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Task};
use crate::error::{EpisodeError, Error, Result};
use crate::geometry::{
    self, direction_angles, view_feature, visible_objects, BBox2D, CameraIntrinsics,
    ProjectedObject, ViewState, VIEW_COUNT,
};
use crate::par::{self, Exec};

pub const DEFAULT_MAX_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Move budget; reaching it forces navigation to finish.
    pub max_steps: usize,
    /// Length of per-view features. Zero disables feature computation.
    pub feature_dim: usize,
    pub intrinsics: CameraIntrinsics,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: DEFAULT_MAX_STEPS,
            feature_dim: 32,
            intrinsics: CameraIntrinsics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detection {
    BboxOutput { view_k: usize, bbox: BBox2D },
    CandidateChoice { object: String },
}

impl Detection {
    /// A 1x1 box at the image center of the first view, for agents that see
    /// no candidate at all.
    pub fn center_fallback(intr: &CameraIntrinsics) -> Self {
        Detection::BboxOutput {
            view_k: 1,
            bbox: BBox2D::new(intr.width / 2.0 - 0.5, intr.height / 2.0 - 0.5, 1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Move { viewpoint: String },
    Stop,
    Detect { detection: Detection },
}

impl Action {
    pub fn move_to(vp: impl Into<String>) -> Self {
        Action::Move {
            viewpoint: vp.into(),
        }
    }

    pub fn choose(object: impl Into<String>) -> Self {
        Action::Detect {
            detection: Detection::CandidateChoice {
                object: object.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewObservation {
    pub state: ViewState,
    pub feature: Vec<f64>,
}

/// Everything observable at one viewpoint regardless of orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub viewpoint: String,
    pub views: Vec<ViewObservation>,
    /// Per-view candidate objects, indexed by `k - 1`.
    pub candidate_objects: Vec<Vec<ProjectedObject>>,
}

impl Panorama {
    /// Each visible object once, taken from the view where it is closest
    /// (ties: lower view index).
    pub fn unique_candidates(&self) -> Vec<&ProjectedObject> {
        let mut best: Vec<&ProjectedObject> = Vec::new();
        for p in self.candidate_objects.iter().flatten() {
            match best.iter_mut().find(|b| b.object == p.object) {
                Some(b) => {
                    if p.depth < b.depth {
                        *b = p;
                    }
                }
                None => best.push(p),
            }
        }
        best.sort_by(|a, b| a.object.cmp(&b.object));
        best
    }

    pub fn contains_object(&self, object: &str) -> bool {
        self.candidate_objects
            .iter()
            .flatten()
            .any(|p| p.object == object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigableViewpoint {
    pub viewpoint: String,
    /// Heading of the neighbor relative to the agent's heading, in (-pi, pi].
    pub rel_heading: f64,
    pub rel_elevation: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub viewpoint: String,
    pub heading: f64,
    pub elevation: f64,
    pub step: usize,
    pub navigation_finished: bool,
    pub instruction: Vec<String>,
    pub navigable: Vec<NavigableViewpoint>,
    pub panorama: Arc<Panorama>,
}

impl Observation {
    pub fn views(&self) -> &[ViewObservation] {
        &self.panorama.views
    }

    pub fn candidate_objects(&self) -> &[Vec<ProjectedObject>] {
        &self.panorama.candidate_objects
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub task: Task,
    pub current_viewpoint: String,
    pub heading: f64,
    pub elevation: f64,
    pub step_count: usize,
    pub navigation_finished: bool,
    pub done: bool,
    pub detection: Option<Detection>,
    pub path: Vec<String>,
    pub actions: Vec<Action>,
    started: Instant,
}

/// Recorded outcome of one episode; the JSON-lines submission format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub env_id: String,
    pub path: Vec<String>,
    pub actions: Vec<Action>,
    pub detection: Option<Detection>,
    pub steps: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.task_id == other.task_id
            && self.env_id == other.env_id
            && self.path == other.path
            && self.actions == other.actions
            && self.detection == other.detection
            && self.steps == other.steps
    }
}

impl Trajectory {
    pub fn stop_viewpoint(&self) -> &str {
        self.path.last().map(String::as_str).unwrap_or_default()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Continue(Observation),
    Finished(Trajectory),
}

/// Shared, read-only simulator over one environment. Panoramas are cached
/// per viewpoint; the environment itself is never mutated.
#[derive(Debug)]
pub struct Simulator {
    env: Arc<Environment>,
    config: EpisodeConfig,
    panoramas: RwLock<HashMap<String, Arc<Panorama>>>,
}

impl Simulator {
    pub fn new(env: Arc<Environment>, config: EpisodeConfig) -> Self {
        Simulator {
            env,
            config,
            panoramas: RwLock::new(HashMap::new()),
        }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn env_arc(&self) -> &Arc<Environment> {
        &self.env
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn panorama(&self, viewpoint: &str) -> Arc<Panorama> {
        if let Some(p) = self.panoramas.read().expect("cache lock").get(viewpoint) {
            return p.clone();
        }
        let built = Arc::new(self.build_panorama(viewpoint));
        self.panoramas
            .write()
            .expect("cache lock")
            .entry(viewpoint.to_string())
            .or_insert(built)
            .clone()
    }

    fn build_panorama(&self, viewpoint: &str) -> Panorama {
        let intr = &self.config.intrinsics;
        let states = ViewState::all(viewpoint);
        let views = states
            .iter()
            .map(|s| ViewObservation {
                state: s.clone(),
                feature: if self.config.feature_dim > 0 {
                    view_feature(&self.env, s, intr, self.config.feature_dim)
                } else {
                    Vec::new()
                },
            })
            .collect();
        let candidate_objects = states
            .iter()
            .map(|s| visible_objects(&self.env, s, intr))
            .collect();
        Panorama {
            viewpoint: viewpoint.to_string(),
            views,
            candidate_objects,
        }
    }

    /// Whether `object` is visible in at least one view at `viewpoint`.
    pub fn object_visible(&self, viewpoint: &str, object: &str) -> bool {
        self.env.viewpoint(viewpoint).is_some() && self.panorama(viewpoint).contains_object(object)
    }

    pub fn observe(&self, state: &EpisodeState) -> Observation {
        let here = self
            .env
            .viewpoint(&state.current_viewpoint)
            .expect("episode viewpoint exists");
        let navigable = self
            .env
            .neighbors(&state.current_viewpoint)
            .into_iter()
            .map(|(vp, len)| {
                let (h, e) = direction_angles(here.position, vp.position);
                NavigableViewpoint {
                    viewpoint: vp.id.clone(),
                    rel_heading: wrap_angle(h - state.heading),
                    rel_elevation: e - state.elevation,
                    distance: len,
                }
            })
            .collect();
        Observation {
            viewpoint: state.current_viewpoint.clone(),
            heading: state.heading,
            elevation: state.elevation,
            step: state.step_count,
            navigation_finished: state.navigation_finished,
            instruction: state.task.instruction.clone(),
            navigable,
            panorama: self.panorama(&state.current_viewpoint),
        }
    }

    pub fn start_episode(&self, task: &Task) -> Result<(EpisodeState, Observation)> {
        self.env.validate_task(task)?;
        let state = EpisodeState {
            task: task.clone(),
            current_viewpoint: task.start_viewpoint.clone(),
            heading: task.start_heading,
            elevation: task.start_elevation,
            step_count: 0,
            navigation_finished: false,
            done: false,
            detection: None,
            path: vec![task.start_viewpoint.clone()],
            actions: Vec::new(),
            started: Instant::now(),
        };
        let obs = self.observe(&state);
        Ok((state, obs))
    }

    /// Applies one action. On error the state is left untouched.
    pub fn step(
        &self,
        state: &mut EpisodeState,
        action: Action,
    ) -> Result<StepOutcome, EpisodeError> {
        if let Action::Detect { .. } = &action {
            if state.detection.is_some() {
                return Err(EpisodeError::DuplicateDetection);
            }
        }
        if state.done {
            return Err(EpisodeError::Finished);
        }
        match &action {
            Action::Detect { detection } => {
                self.validate_detection(state, detection)?;
                state.detection = Some(detection.clone());
                state.navigation_finished = true;
                state.done = true;
                state.actions.push(action);
                Ok(StepOutcome::Finished(self.trajectory(state)))
            }
            Action::Move { viewpoint } if *viewpoint != state.current_viewpoint => {
                if state.navigation_finished {
                    return Err(EpisodeError::NavigationFinished);
                }
                if state.step_count >= self.config.max_steps {
                    return Err(EpisodeError::StepBudget(self.config.max_steps));
                }
                if !self.env.are_adjacent(&state.current_viewpoint, viewpoint) {
                    return Err(EpisodeError::IllegalMove(viewpoint.clone()));
                }
                let from = self.env.viewpoint(&state.current_viewpoint).expect("current").position;
                let to = self.env.viewpoint(viewpoint).expect("adjacent").position;
                let (heading, _) = direction_angles(from, to);
                state.current_viewpoint = viewpoint.clone();
                state.heading = heading;
                state.elevation = 0.0;
                state.step_count += 1;
                state.path.push(viewpoint.clone());
                if state.step_count >= self.config.max_steps {
                    state.navigation_finished = true;
                }
                state.actions.push(action);
                Ok(StepOutcome::Continue(self.observe(state)))
            }
            // Stop, or Move to the current viewpoint
            _ => {
                state.actions.push(action);
                if state.navigation_finished {
                    // a second stop ends the episode without a detection
                    state.done = true;
                    Ok(StepOutcome::Finished(self.trajectory(state)))
                } else {
                    state.navigation_finished = true;
                    Ok(StepOutcome::Continue(self.observe(state)))
                }
            }
        }
    }

    fn validate_detection(&self, state: &EpisodeState, d: &Detection) -> Result<(), EpisodeError> {
        match d {
            Detection::CandidateChoice { object } => {
                if !self.object_visible(&state.current_viewpoint, object) {
                    return Err(EpisodeError::InvalidDetection(format!(
                        "object `{object}` is not a candidate at `{}`",
                        state.current_viewpoint
                    )));
                }
            }
            Detection::BboxOutput { view_k, bbox } => {
                if !(1..=VIEW_COUNT).contains(view_k) {
                    return Err(EpisodeError::InvalidDetection(format!(
                        "view index {view_k} outside 1..={VIEW_COUNT}"
                    )));
                }
                let vals = [bbox.x, bbox.y, bbox.w, bbox.h];
                if vals.iter().any(|v| !v.is_finite()) || bbox.w < 0.0 || bbox.h < 0.0 {
                    return Err(EpisodeError::InvalidDetection("malformed bounding box".into()));
                }
            }
        }
        Ok(())
    }

    pub fn trajectory(&self, state: &EpisodeState) -> Trajectory {
        Trajectory {
            task_id: state.task.id.clone(),
            env_id: state.task.env_id.clone(),
            path: state.path.clone(),
            actions: state.actions.clone(),
            detection: state.detection.clone(),
            steps: state.step_count,
            wall_time: state.started.elapsed(),
        }
    }

    /// Feeds a recorded action list back through the engine.
    pub fn replay(&self, task: &Task, actions: &[Action]) -> Result<Trajectory> {
        let (mut state, _) = self.start_episode(task)?;
        for a in actions {
            match self.step(&mut state, a.clone()).map_err(|e| Error::Episode {
                task: task.id.clone(),
                source: e,
            })? {
                StepOutcome::Finished(t) => return Ok(t),
                StepOutcome::Continue(_) => {}
            }
        }
        Ok(self.trajectory(&state))
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Anything that maps observations to actions.
pub trait Agent {
    /// Called once before the first observation of each episode. Oracle
    /// baselines may read the task; learned agents should only use the
    /// instruction carried by observations.
    fn begin(&mut self, _sim: &Simulator, _task: &Task) {}

    fn act(&mut self, obs: &Observation) -> Action;
}

impl<F: FnMut(&Observation) -> Action> Agent for F {
    fn act(&mut self, obs: &Observation) -> Action {
        self(obs)
    }
}

/// Runs one episode to completion.
pub fn run_episode(sim: &Simulator, task: &Task, agent: &mut dyn Agent) -> Result<Trajectory> {
    let (mut state, mut obs) = sim.start_episode(task)?;
    agent.begin(sim, task);
    let budget = sim.config().max_steps + 4;
    for _ in 0..budget {
        let action = agent.act(&obs);
        match sim.step(&mut state, action).map_err(|e| Error::Episode {
            task: task.id.clone(),
            source: e,
        })? {
            StepOutcome::Continue(o) => obs = o,
            StepOutcome::Finished(t) => return Ok(t),
        }
    }
    Err(Error::AgentStalled(task.id.clone()))
}

/// Runs `agent` over every task in order.
pub fn run_agent(sim: &Simulator, tasks: &[Task], agent: &mut dyn Agent) -> Result<Vec<Trajectory>> {
    tasks.iter().map(|t| run_episode(sim, t, agent)).collect()
}

/// Batch variant: one fresh agent per task from `make_agent`, episodes
/// fanned out according to `exec`. Output order follows `tasks`.
pub fn run_agent_batch<A, F>(
    sim: &Simulator,
    tasks: &[Task],
    make_agent: F,
    exec: Exec,
) -> Result<Vec<Trajectory>>
where
    A: Agent,
    F: Fn(usize, &Task) -> A + Sync + Send,
{
    par::map_indexed(exec, tasks.len(), |i| {
        let mut agent = make_agent(i, &tasks[i]);
        run_episode(sim, &tasks[i], &mut agent)
    })
    .into_iter()
    .collect()
}

pub fn write_trajectories<W: Write>(mut w: W, trajs: &[Trajectory]) -> std::io::Result<()> {
    for t in trajs {
        writeln!(w, "{}", t.to_json_line())?;
    }
    Ok(())
}

/// Parses a JSON-lines trajectory file. Blank lines are skipped; errors name
/// the 1-based line number.
pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        out.push(t);
    }
    Ok(out)
}

/// Candidate index of a navigable neighbor in the 36-view layout: the level
/// view whose heading is closest to the neighbor's direction.
pub fn view_towards(here: geometry::Vec3, there: geometry::Vec3) -> usize {
    let (h, e) = direction_angles(here, there);
    geometry::view_index(geometry::heading_bucket(h), geometry::elevation_bucket(e))
}
