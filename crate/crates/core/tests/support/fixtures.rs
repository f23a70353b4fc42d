//! Randomized scoring fixtures: a task, a random walk from its start and a
//! random detection that lands on either side of the IoU threshold.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refnav_core::env::Task;
use refnav_core::episode::{Action, Detection, EpisodeConfig, Simulator, Trajectory};
use refnav_core::geometry::BBox2D;
use refnav_core::synth::{generate_synthetic_world, SynthesisParams};

use super::oracle;

pub struct Fixture {
    pub sim: Arc<Simulator>,
    pub task: Task,
    pub traj: Trajectory,
}

fn worlds() -> Vec<(Arc<Simulator>, Vec<Task>)> {
    (0..40)
        .map(|s| {
            let (env, tasks) = generate_synthetic_world(&SynthesisParams::new(s, 8, 14)).unwrap();
            (Arc::new(Simulator::new(Arc::new(env), EpisodeConfig::default())), tasks)
        })
        .filter(|(_, t)| !t.is_empty())
        .collect()
}

fn random_detection(rng: &mut ChaCha8Rng, sim: &Simulator, task: &Task, at: &str) -> Option<Detection> {
    let env = sim.env();
    match rng.random_range(0..6) {
        0 => None,
        1 => Some(Detection::CandidateChoice { object: task.target_object.clone() }),
        2 => {
            let o = &env.objects[rng.random_range(0..env.objects.len())];
            Some(Detection::CandidateChoice { object: o.id.clone() })
        }
        3 | 4 => {
            // jitter around the target's box in a view that shows it, so both
            // sides of the IoU threshold are exercised
            let views = oracle::panorama(env, at);
            let hits: Vec<(usize, [f64; 4])> = views
                .iter()
                .enumerate()
                .filter_map(|(k, v)| v.iter().find(|p| p.0 == task.target_object).map(|p| (k + 1, p.1)))
                .collect();
            if hits.is_empty() {
                return Some(Detection::BboxOutput { view_k: rng.random_range(1..=36), bbox: BBox2D::new(10.0, 10.0, 50.0, 50.0) });
            }
            let (k, b) = hits[rng.random_range(0..hits.len())];
            let j = |rng: &mut ChaCha8Rng, s: f64| s * rng.random_range(-0.6..0.6);
            let bbox = BBox2D::new(b[0] + j(rng, b[2]), b[1] + j(rng, b[3]), b[2] * rng.random_range(0.5..1.5), b[3] * rng.random_range(0.5..1.5));
            let k = if rng.random_bool(0.1) { [0, 37, (k % 36) + 1][rng.random_range(0..3)] } else { k };
            Some(Detection::BboxOutput { view_k: k, bbox })
        }
        _ => Some(Detection::BboxOutput {
            view_k: rng.random_range(0..=37),
            bbox: BBox2D::new(rng.random_range(0.0..600.0), rng.random_range(0.0..440.0), rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)),
        }),
    }
}

pub fn fixtures(n: usize) -> Vec<Fixture> {
    let ws = worlds();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..n)
        .map(|_| {
            let (sim, tasks) = &ws[rng.random_range(0..ws.len())];
            let task = tasks[rng.random_range(0..tasks.len())].clone();
            let mut path = vec![task.start_viewpoint.clone()];
            let mut actions = Vec::new();
            for _ in 0..rng.random_range(0..8) {
                let nb = sim.env().neighbors(path.last().unwrap());
                let next = nb[rng.random_range(0..nb.len())].0.id.clone();
                actions.push(Action::move_to(next.clone()));
                path.push(next);
            }
            actions.push(Action::Stop);
            let detection = random_detection(&mut rng, sim, &task, path.last().unwrap());
            if let Some(d) = &detection {
                actions.push(Action::Detect { detection: d.clone() });
            }
            let traj = Trajectory {
                task_id: task.id.clone(),
                env_id: sim.env().id.clone(),
                steps: actions.len(),
                path,
                actions,
                detection,
                wall_time: Default::default(),
            };
            Fixture { sim: sim.clone(), task, traj }
        })
        .collect()
}

