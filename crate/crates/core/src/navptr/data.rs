//! Turns simulator panoramas into navigator and pointer inputs, and builds
//! teacher-forced training samples along shortest paths.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::seq::IndexedRandom;
use rand::Rng;

use super::config::START_ACTION;
use super::fusion::{candidate_input, CandidateInput};
use super::model::NavPointParams;
use super::navigator::progress_target;
use super::pointer::{build_view_candidates, pointer_encode, score_values, SharedCandidate};
use crate::neural::Tape;
use crate::env::Task;
use crate::episode::{view_towards, Simulator};
use crate::error::{Error, Result};
use crate::geometry::{direction_angles, heading_bucket, VIEW_COUNT};

/// A candidate view before pointer selection. Index 0 of a candidate list is
/// always the stop candidate for the current viewpoint.
#[derive(Debug, Clone)]
pub struct RawCandidate {
    pub viewpoint: String,
    pub is_stop: bool,
    pub base: Vec<f64>,
    pub objects: Vec<SharedCandidate>,
}

/// Pointer candidates of one viewpoint, per view and de-duplicated.
#[derive(Debug)]
pub struct ViewpointObjects {
    pub per_view: Vec<Vec<SharedCandidate>>,
    /// Each visible object once, from the view where it is closest.
    pub unique: Vec<SharedCandidate>,
}

/// Caches pointer candidates per (environment, viewpoint); they depend only
/// on geometry and model dimensions, never on trained weights.
#[derive(Debug, Default)]
pub struct FeatureCache {
    objects: RwLock<HashMap<(String, String), Arc<ViewpointObjects>>>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn objects(&self, sim: &Simulator, p: &NavPointParams, viewpoint: &str) -> Arc<ViewpointObjects> {
        let key = (sim.env().id.clone(), viewpoint.to_string());
        if let Some(v) = self.objects.read().expect("cache lock").get(&key) {
            return v.clone();
        }
        let pano = sim.panorama(viewpoint);
        let env = sim.env();
        let intr = &sim.config().intrinsics;
        let per_view: Vec<Vec<SharedCandidate>> = pano
            .candidate_objects
            .iter()
            .map(|view| {
                build_view_candidates(env, view, intr, p)
                    .into_iter()
                    .map(Arc::new)
                    .collect()
            })
            .collect();
        let unique = pano
            .unique_candidates()
            .into_iter()
            .map(|u| {
                per_view[u.view.k - 1]
                    .iter()
                    .find(|c| c.object == u.object)
                    .expect("unique candidate comes from its view")
                    .clone()
            })
            .collect();
        let built = Arc::new(ViewpointObjects { per_view, unique });
        self.objects
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert(built)
            .clone()
    }

    /// Stop candidate followed by one candidate per neighbor (sorted by id).
    pub fn raw_candidates(&self, sim: &Simulator, p: &NavPointParams, viewpoint: &str) -> Vec<RawCandidate> {
        let env = sim.env();
        let pano = sim.panorama(viewpoint);
        let objs = self.objects(sim, p, viewpoint);
        let dim = p.config.d_visual_base;
        let mut mean = vec![0.0; dim];
        for v in &pano.views {
            assert_eq!(v.feature.len(), dim, "simulator feature_dim must equal d_visual_base");
            for (m, f) in mean.iter_mut().zip(&v.feature) {
                *m += f / VIEW_COUNT as f64;
            }
        }
        let mut out = vec![RawCandidate {
            viewpoint: viewpoint.to_string(),
            is_stop: true,
            base: mean,
            objects: objs.unique.clone(),
        }];
        let here = env.viewpoint(viewpoint).expect("known viewpoint").position;
        for (nb, _) in env.neighbors(viewpoint) {
            let k = view_towards(here, nb.position);
            out.push(RawCandidate {
                viewpoint: nb.id.clone(),
                is_stop: false,
                base: pano.views[k - 1].feature.clone(),
                objects: objs.per_view[k - 1].clone(),
            });
        }
        out
    }
}

/// Heading bucket of the move `from -> to`, used as the previous-action token.
pub fn move_token(sim: &Simulator, from: &str, to: &str) -> usize {
    let env = sim.env();
    let a = env.viewpoint(from).expect("known viewpoint").position;
    let b = env.viewpoint(to).expect("known viewpoint").position;
    heading_bucket(direction_angles(a, b).0)
}

/// Applies pointer top-3 selection with the current weights.
pub fn select_inputs(p: &NavPointParams, tokens: &[usize], raw: &[RawCandidate]) -> Vec<CandidateInput> {
    let mut tape = Tape::new();
    let q = pointer_encode(&mut tape, p, tokens);
    raw.iter()
        .map(|r| {
            let scores = score_values(&mut tape, p, &q, &r.objects);
            candidate_input(p, &r.base, &r.objects, &scores)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StepSample {
    pub raw: Vec<RawCandidate>,
    pub prev_action: usize,
    pub teacher: usize,
    pub progress: f64,
}

/// Pointer supervision for one task at one goal viewpoint.
#[derive(Debug, Clone)]
pub struct GoalObjects {
    pub target: SharedCandidate,
    /// Other candidates visible from the same viewpoint.
    pub distractors: Vec<SharedCandidate>,
}

#[derive(Debug, Clone)]
pub struct TaskSample {
    pub task_id: String,
    pub target_label: String,
    pub tokens: Vec<usize>,
    pub steps: Vec<StepSample>,
    pub goals: Vec<GoalObjects>,
}

/// Teacher-forced sample along the shortest path to the nearest goal.
pub fn task_sample(sim: &Simulator, cache: &FeatureCache, p: &NavPointParams, task: &Task) -> Result<TaskSample> {
    let env = sim.env();
    let (goal, d0) = env.nearest_goal(task, &task.start_viewpoint)?;
    let route = env.shortest_path(&task.start_viewpoint, &goal)?;
    let mut steps = Vec::with_capacity(route.viewpoints.len());
    for (t, vp) in route.viewpoints.iter().enumerate() {
        let raw = cache.raw_candidates(sim, p, vp);
        let teacher = match route.viewpoints.get(t + 1) {
            None => 0,
            Some(next) => raw
                .iter()
                .position(|r| !r.is_stop && &r.viewpoint == next)
                .expect("route follows graph edges"),
        };
        let prev_action = if t == 0 {
            START_ACTION
        } else {
            move_token(sim, &route.viewpoints[t - 1], vp)
        };
        let (_, dt) = env.nearest_goal(task, vp)?;
        steps.push(StepSample { raw, prev_action, teacher, progress: progress_target(d0, dt) });
    }
    let mut goals = Vec::new();
    for g in &task.goal_viewpoints {
        let objs = cache.objects(sim, p, g);
        let Some(target) = objs.unique.iter().find(|c| c.object == task.target_object) else {
            continue;
        };
        goals.push(GoalObjects {
            target: target.clone(),
            distractors: objs
                .unique
                .iter()
                .filter(|c| c.object != task.target_object)
                .cloned()
                .collect(),
        });
    }
    if goals.is_empty() {
        return Err(Error::Validation(format!(
            "task {}: target not visible from any goal viewpoint",
            task.id
        )));
    }
    let target_label = env
        .object(&task.target_object)
        .map(|o| o.label.clone())
        .unwrap_or_default();
    Ok(TaskSample {
        task_id: task.id.clone(),
        target_label,
        tokens: p.vocab.encode(&task.instruction),
        steps,
        goals,
    })
}

/// One ranking example: an expression, its object and optional negatives.
#[derive(Debug, Clone)]
pub struct PointerPair {
    pub tokens: Vec<usize>,
    pub target: SharedCandidate,
    pub neg_tokens: Option<Vec<usize>>,
    pub neg_object: Option<SharedCandidate>,
}

/// Draws a goal view, an in-view distractor and an expression for a
/// different object from the pool.
pub fn sample_pair(samples: &[TaskSample], i: usize, rng: &mut impl Rng) -> PointerPair {
    let s = &samples[i];
    let goal = s.goals.choose(rng).expect("sample has a goal");
    let others: Vec<&TaskSample> = samples
        .iter()
        .filter(|o| o.target_label != s.target_label)
        .collect();
    PointerPair {
        tokens: s.tokens.clone(),
        target: goal.target.clone(),
        neg_tokens: others.choose(rng).map(|o| o.tokens.clone()),
        neg_object: goal.distractors.choose(rng).cloned(),
    }
}
