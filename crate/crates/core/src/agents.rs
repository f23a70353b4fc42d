//! Baseline agents (random walk, oracle shortest path, stop immediately) and
//! the trained navigator-pointer, behind one agent type for benchmarking.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Task;
use crate::episode::{run_agent_batch, Action, Agent, Detection, Observation, Simulator, Trajectory};
use crate::error::Result;
use crate::geometry::CameraIntrinsics;
use crate::metrics::{aggregate, evaluate_all, MetricsReport};
use crate::navptr::search::detect;
use crate::navptr::{FeatureCache, NavPointAgent, NavPointParams};
use crate::par::Exec;
use crate::seed::Mixer;

pub const MAX_RANDOM_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Random,
    /// Oracle walk to the nearest goal. Without a checkpoint the target is
    /// named directly; with one, the trained pointer picks the object.
    Shortest { pointer: Option<PathBuf> },
    StopNow,
    NavPoint { checkpoint: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub seed: u64,
    pub max_random_steps: usize,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        AgentConfig { kind, seed: 0, max_random_steps: MAX_RANDOM_STEPS }
    }

    pub fn random(seed: u64) -> Self {
        AgentConfig { seed, ..Self::new(AgentKind::Random) }
    }
}

/// Uniformly random moves for a random budget of at most
/// `max_random_steps`, then a uniformly random visible object.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    max_steps: usize,
    rng: ChaCha8Rng,
    budget: usize,
    moves: usize,
    intrinsics: CameraIntrinsics,
}

impl RandomAgent {
    pub fn new(seed: u64, max_steps: usize) -> Self {
        RandomAgent {
            seed,
            max_steps,
            rng: Mixer::new("random-agent").u64(seed).rng(),
            budget: 0,
            moves: 0,
            intrinsics: CameraIntrinsics::default(),
        }
    }
}

impl Agent for RandomAgent {
    // The stream depends only on the seed and the task, so results do not
    // depend on episode order or on how a batch is scheduled.
    fn begin(&mut self, sim: &Simulator, task: &Task) {
        self.rng = Mixer::new("random-agent")
            .u64(self.seed)
            .str(&task.env_id)
            .str(&task.id)
            .rng();
        self.budget = self.rng.random_range(0..=self.max_steps);
        self.moves = 0;
        self.intrinsics = sim.config().intrinsics;
    }

    fn act(&mut self, obs: &Observation) -> Action {
        if !obs.navigation_finished {
            if self.moves < self.budget {
                if let Some(nb) = obs.navigable.choose(&mut self.rng) {
                    self.moves += 1;
                    return Action::move_to(nb.viewpoint.clone());
                }
            }
            return Action::Stop;
        }
        let cands = obs.panorama.unique_candidates();
        let detection = match cands.choose(&mut self.rng) {
            Some(c) => Detection::CandidateChoice { object: c.object.clone() },
            None => Detection::center_fallback(&self.intrinsics),
        };
        Action::Detect { detection }
    }
}

/// How the shortest-path agent names its object once it has arrived.
#[derive(Debug, Clone)]
pub enum Pointer {
    GroundTruth,
    Trained { params: Arc<NavPointParams>, cache: Arc<FeatureCache> },
}

#[derive(Debug, Clone)]
pub struct ShortestAgent {
    pointer: Pointer,
    script: VecDeque<Action>,
}

impl ShortestAgent {
    pub fn new(pointer: Pointer) -> Self {
        ShortestAgent { pointer, script: VecDeque::new() }
    }

    pub fn script(sim: &Simulator, task: &Task, pointer: &Pointer) -> Result<Vec<Action>> {
        let env = sim.env();
        let (goal, _) = env.nearest_goal(task, &task.start_viewpoint)?;
        let route = env.shortest_path(&task.start_viewpoint, &goal)?;
        let mut actions: Vec<Action> = route.viewpoints[1..].iter().map(|v| Action::move_to(v.clone())).collect();
        actions.push(Action::Stop);
        let detection = match pointer {
            Pointer::GroundTruth => Detection::CandidateChoice { object: task.target_object.clone() },
            Pointer::Trained { params, cache } => {
                detect(sim, cache, params, &params.vocab.encode(&task.instruction), &goal)
            }
        };
        actions.push(Action::Detect { detection });
        Ok(actions)
    }
}

impl Agent for ShortestAgent {
    fn begin(&mut self, sim: &Simulator, task: &Task) {
        // A task that failed validation has no route; stopping in place keeps
        // the episode total.
        self.script = Self::script(sim, task, &self.pointer).unwrap_or_default().into();
    }

    fn act(&mut self, _obs: &Observation) -> Action {
        self.script.pop_front().unwrap_or(Action::Stop)
    }
}

/// Stops where it starts and never guesses.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopNowAgent;

impl Agent for StopNowAgent {
    fn act(&mut self, _obs: &Observation) -> Action {
        Action::Stop
    }
}

// one per episode, so the size spread does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum AnyAgent {
    Random(RandomAgent),
    Shortest(ShortestAgent),
    StopNow(StopNowAgent),
    NavPoint(NavPointAgent),
}

impl Agent for AnyAgent {
    fn begin(&mut self, sim: &Simulator, task: &Task) {
        match self {
            AnyAgent::Random(a) => a.begin(sim, task),
            AnyAgent::Shortest(a) => a.begin(sim, task),
            AnyAgent::StopNow(a) => a.begin(sim, task),
            AnyAgent::NavPoint(a) => a.begin(sim, task),
        }
    }

    fn act(&mut self, obs: &Observation) -> Action {
        match self {
            AnyAgent::Random(a) => a.act(obs),
            AnyAgent::Shortest(a) => a.act(obs),
            AnyAgent::StopNow(a) => a.act(obs),
            AnyAgent::NavPoint(a) => a.act(obs),
        }
    }
}

/// An agent config with its checkpoint loaded, ready to spawn one agent
/// per episode.
#[derive(Debug, Clone)]
pub struct AgentFactory {
    pub name: String,
    config: AgentConfig,
    pointer: Pointer,
}

impl AgentFactory {
    pub fn new(config: &AgentConfig) -> Result<Self> {
        let load = |path: &PathBuf| -> Result<Pointer> {
            Ok(Pointer::Trained {
                params: Arc::new(NavPointParams::load(path)?),
                cache: Arc::new(FeatureCache::new()),
            })
        };
        let (name, pointer) = match &config.kind {
            AgentKind::Random => ("Random".to_string(), Pointer::GroundTruth),
            AgentKind::Shortest { pointer: None } => ("Shortest".to_string(), Pointer::GroundTruth),
            AgentKind::Shortest { pointer: Some(p) } => ("Shortest+Pointer".to_string(), load(p)?),
            AgentKind::StopNow => ("StopNow".to_string(), Pointer::GroundTruth),
            AgentKind::NavPoint { checkpoint } => {
                let pointer = load(checkpoint)?;
                let lan_only = matches!(&pointer, Pointer::Trained { params, .. } if params.config.lan_only);
                let name = if lan_only { "NavPoint-Lan-Only" } else { "NavPoint" };
                (name.to_string(), pointer)
            }
        };
        Ok(AgentFactory { name, config: config.clone(), pointer })
    }

    /// Wraps already trained weights without going through a checkpoint.
    pub fn navpoint(name: impl Into<String>, params: Arc<NavPointParams>) -> Self {
        AgentFactory {
            name: name.into(),
            config: AgentConfig::new(AgentKind::NavPoint { checkpoint: PathBuf::new() }),
            pointer: Pointer::Trained { params, cache: Arc::new(FeatureCache::new()) },
        }
    }

    pub fn spawn(&self) -> AnyAgent {
        match (&self.config.kind, &self.pointer) {
            (AgentKind::Random, _) => AnyAgent::Random(RandomAgent::new(self.config.seed, self.config.max_random_steps)),
            (AgentKind::StopNow, _) => AnyAgent::StopNow(StopNowAgent),
            (AgentKind::NavPoint { .. }, Pointer::Trained { params, cache }) => {
                AnyAgent::NavPoint(NavPointAgent::new(params.clone(), cache.clone()))
            }
            (_, pointer) => AnyAgent::Shortest(ShortestAgent::new(pointer.clone())),
        }
    }
}

/// Runs one agent over a suite of worlds, pooling the per-task results.
/// Trajectories come back in suite order.
pub fn run_agent_suite(
    suite: &[(Arc<Simulator>, Vec<Task>)],
    factory: &AgentFactory,
    exec: Exec,
) -> Result<(MetricsReport, Vec<Trajectory>)> {
    let mut results = Vec::new();
    let mut all = Vec::new();
    for (sim, tasks) in suite {
        let trajs = run_agent_batch(sim, tasks, |_, _| factory.spawn(), exec)?;
        results.extend(evaluate_all(sim, tasks, &trajs, exec)?);
        all.extend(trajs);
    }
    Ok((aggregate(results)?, all))
}

pub fn run_suite(suite: &[(Arc<Simulator>, Vec<Task>)], factory: &AgentFactory, exec: Exec) -> Result<MetricsReport> {
    Ok(run_agent_suite(suite, factory, exec)?.0)
}

/// One report per agent, in the given order.
pub fn run_benchmark(
    suite: &[(Arc<Simulator>, Vec<Task>)],
    agents: &[AgentFactory],
    exec: Exec,
) -> Result<Vec<(String, MetricsReport)>> {
    agents
        .iter()
        .map(|f| Ok((f.name.clone(), run_suite(suite, f, exec)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, EpisodeConfig};
    use crate::synth::{generate_synthetic_world, SynthesisParams};

    fn suite(seed: u64) -> Vec<(Arc<Simulator>, Vec<Task>)> {
        let (env, tasks) = generate_synthetic_world(&SynthesisParams::new(seed, 10, 12)).unwrap();
        vec![(Arc::new(Simulator::new(Arc::new(env), EpisodeConfig::default())), tasks)]
    }

    #[test]
    fn random_is_seeded_and_bounded() {
        let s = suite(3);
        let (sim, tasks) = &s[0];
        for seed in 0..5 {
            for t in tasks {
                let mut a = RandomAgent::new(seed, MAX_RANDOM_STEPS);
                let mut b = RandomAgent::new(seed, MAX_RANDOM_STEPS);
                let ta = run_episode(sim, t, &mut a).unwrap();
                let tb = run_episode(sim, t, &mut b).unwrap();
                assert_eq!(ta, tb);
                let moves = ta.actions.iter().filter(|a| matches!(a, Action::Move { .. })).count();
                assert!(moves <= MAX_RANDOM_STEPS);
                assert!(ta.detection.is_some());
            }
        }
    }

    #[test]
    fn baseline_rows() {
        let s = suite(4);
        let rows = run_benchmark(
            &s,
            &[
                AgentFactory::new(&AgentConfig::new(AgentKind::Shortest { pointer: None })).unwrap(),
                AgentFactory::new(&AgentConfig::new(AgentKind::StopNow)).unwrap(),
            ],
            Exec::Sequential,
        )
        .unwrap();
        let short = &rows[0].1.aggregates;
        assert_eq!((short.success, short.oracle_success, short.spl, short.reverie_success), (100.0, 100.0, 100.0, 100.0));
        let stop = &rows[1].1.aggregates;
        assert_eq!(stop.length, 0.0);
        assert_eq!(stop.reverie_success, 0.0);
    }
}
