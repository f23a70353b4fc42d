//! Frontier search with backtracking: one candidate queue keyed by the
//! accumulated log-probability of reaching each viewpoint, and one ending
//! queue of stop scores for every expanded viewpoint.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};
use std::sync::Arc;

use super::data::{move_token, select_inputs, FeatureCache};
use super::fusion::LabelCache;
use super::model::NavPointParams;
use super::navigator::{add_positional, encode_instruction, nav_step, NavContext};
use super::pointer::{argmax_candidate, rank_candidates};
use crate::env::{Environment, Task};
use crate::episode::{Action, Agent, Detection, Observation, Simulator, Trajectory};
use crate::error::Result;
use crate::neural::Tape;

#[derive(Debug, Clone)]
struct Entry<C> {
    score: f64,
    viewpoint: String,
    stop: bool,
    ctx: C,
}

impl<C> PartialEq for Entry<C> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<C> Eq for Entry<C> {}

impl<C> PartialOrd for Entry<C> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap order: higher score, then moves before stops, then the smaller
/// viewpoint id.
impl<C> Ord for Entry<C> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.stop.cmp(&self.stop))
            .then_with(|| other.viewpoint.cmp(&self.viewpoint))
    }
}

/// Everything the search decided, before it is replayed in the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    pub actions: Vec<Action>,
    /// Viewpoints in expansion order.
    pub expanded: Vec<String>,
    /// `(viewpoint, accumulated stop score)` for every expanded viewpoint.
    pub ending: Vec<(String, f64)>,
}

/// Shortest hop route from `from` to `to` over edges incident to `known`
/// viewpoints; ties prefer the lexicographically smaller route.
fn known_route(env: &Environment, known: &HashSet<String>, from: &str, to: &str) -> Option<Vec<String>> {
    if from == to {
        return Some(Vec::new());
    }
    let mut prev: BTreeMap<String, String> = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::from([from.to_string()]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(u) = queue.pop_front() {
        if !known.contains(&u) {
            continue;
        }
        for (nb, _) in env.neighbors(&u) {
            if seen.insert(nb.id.clone()) {
                prev.insert(nb.id.clone(), u.clone());
                if nb.id == to {
                    let mut route = vec![to.to_string()];
                    let mut cur = to.to_string();
                    while let Some(p) = prev.get(&cur) {
                        if p == from {
                            break;
                        }
                        route.push(p.clone());
                        cur = p.clone();
                    }
                    route.reverse();
                    return Some(route);
                }
                queue.push_back(nb.id.clone());
            }
        }
    }
    None
}

/// One expanded viewpoint: log-probability of stopping there, and of moving
/// to each neighbor together with the context that move would carry.
#[derive(Debug, Clone)]
pub struct Expansion<C> {
    pub stop: f64,
    pub moves: Vec<(String, f64, C)>,
}

/// Frontier search from `start`. `expand` scores a viewpoint given the
/// context it was reached with; scores accumulate along the search tree.
/// The search ends when a stop entry is popped or the next expansion would
/// walk past `max_steps / 2` moves. It then walks to the best-scoring
/// expanded viewpoint still reachable within `max_steps` and stops. The
/// returned actions hold moves plus the final stop.
pub fn frontier_search<C: Clone>(
    env: &Environment,
    start: &str,
    max_steps: usize,
    root: C,
    mut expand: impl FnMut(&str, &C) -> Expansion<C>,
) -> SearchPlan {
    let search_budget = max_steps / 2;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { score: 0.0, viewpoint: start.to_string(), stop: false, ctx: root });
    let mut expanded: HashSet<String> = HashSet::new();
    let mut order = Vec::new();
    let mut ending: Vec<(String, f64)> = Vec::new();
    let mut actions = Vec::new();
    let mut current = start.to_string();
    let mut moves = 0usize;

    while let Some(e) = heap.pop() {
        if e.stop {
            break;
        }
        if expanded.contains(&e.viewpoint) {
            continue;
        }
        let Some(route) = known_route(env, &expanded, &current, &e.viewpoint) else {
            continue;
        };
        if moves + route.len() > search_budget {
            break;
        }
        for vp in route {
            actions.push(Action::move_to(vp));
            moves += 1;
        }
        current = e.viewpoint.clone();
        expanded.insert(current.clone());
        order.push(current.clone());

        let ex = expand(&current, &e.ctx);
        let stop_score = e.score + ex.stop;
        ending.push((current.clone(), stop_score));
        heap.push(Entry { score: stop_score, viewpoint: current.clone(), stop: true, ctx: e.ctx.clone() });
        for (vp, logp, ctx) in ex.moves {
            if !expanded.contains(&vp) {
                heap.push(Entry { score: e.score + logp, viewpoint: vp, stop: false, ctx });
            }
        }
    }

    let mut ranked = ending.clone();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (vp, _) in &ranked {
        if let Some(route) = known_route(env, &expanded, &current, vp) {
            if moves + route.len() < max_steps {
                actions.extend(route.into_iter().map(Action::move_to));
                break;
            }
        }
    }
    actions.push(Action::Stop);
    SearchPlan { actions, expanded: order, ending }
}

/// The viewpoint a plan stops at.
pub fn plan_end<'a>(start: &'a str, actions: &'a [Action]) -> &'a str {
    actions
        .iter()
        .rev()
        .find_map(|a| match a {
            Action::Move { viewpoint } => Some(viewpoint.as_str()),
            _ => None,
        })
        .unwrap_or(start)
}

/// Frontier search driven by the navigator, followed by a pointer detection
/// at the chosen viewpoint.
pub fn plan_search(sim: &Simulator, cache: &FeatureCache, p: &NavPointParams, task: &Task) -> SearchPlan {
    let tokens = p.vocab.encode(&task.instruction);
    let x = {
        let mut tape = Tape::new();
        let x = encode_instruction(&mut tape, p, &tokens);
        let pe = add_positional(&mut tape, x);
        tape.value(pe).clone()
    };
    let mut plan = frontier_search(
        sim.env(),
        &task.start_viewpoint,
        sim.config().max_steps,
        NavContext::start(p),
        |here, ctx| {
            let raw = cache.raw_candidates(sim, p, here);
            let inputs = select_inputs(p, &tokens, &raw);
            let mut tape = Tape::new();
            let pe_x = tape.constant(x.clone());
            let h = tape.constant(ctx.h.clone());
            let c = tape.constant(ctx.c.clone());
            let mut labels = LabelCache::default();
            let out = nav_step(&mut tape, p, pe_x, &inputs, ctx.prev_action, h, c, &mut labels);
            let lp = tape.log_softmax(out.logits);
            let logp = tape.value(lp).data.clone();
            let (h, c) = (tape.value(out.h).clone(), tape.value(out.c).clone());
            let moves = raw
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, r)| {
                    let child = NavContext {
                        h: h.clone(),
                        c: c.clone(),
                        prev_action: move_token(sim, here, &r.viewpoint),
                        step: ctx.step + 1,
                    };
                    (r.viewpoint.clone(), logp[k], child)
                })
                .collect();
            Expansion { stop: logp[0], moves }
        },
    );
    let end = plan_end(&task.start_viewpoint, &plan.actions).to_string();
    plan.actions.push(Action::Detect { detection: detect(sim, cache, p, &tokens, &end) });
    plan
}

/// Pointer argmax over every candidate visible from `viewpoint`.
pub fn detect(sim: &Simulator, cache: &FeatureCache, p: &NavPointParams, tokens: &[usize], viewpoint: &str) -> Detection {
    let objs = cache.objects(sim, p, viewpoint);
    let scores = rank_candidates(p, tokens, &objs.unique);
    match argmax_candidate(&objs.unique, &scores) {
        Some(i) => Detection::CandidateChoice { object: objs.unique[i].object.clone() },
        None => Detection::center_fallback(&sim.config().intrinsics),
    }
}

/// Runs the search and replays its plan through the episode engine.
pub fn fast_search(sim: &Simulator, cache: &FeatureCache, p: &NavPointParams, task: &Task) -> Result<Trajectory> {
    let plan = plan_search(sim, cache, p, task);
    sim.replay(task, &plan.actions)
}

/// Trained navigator-pointer behind the [`Agent`] interface. The search is
/// planned when the episode begins and its actions are then played back.
#[derive(Debug, Clone)]
pub struct NavPointAgent {
    params: Arc<NavPointParams>,
    cache: Arc<FeatureCache>,
    pending: VecDeque<Action>,
}

impl NavPointAgent {
    pub fn new(params: Arc<NavPointParams>, cache: Arc<FeatureCache>) -> Self {
        NavPointAgent { params, cache, pending: VecDeque::new() }
    }
}

impl Agent for NavPointAgent {
    fn begin(&mut self, sim: &Simulator, task: &Task) {
        self.pending = plan_search(sim, &self.cache, &self.params, task).actions.into();
    }

    fn act(&mut self, _obs: &Observation) -> Action {
        self.pending.pop_front().unwrap_or(Action::Stop)
    }
}
