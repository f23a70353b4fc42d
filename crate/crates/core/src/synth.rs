//! Seeded synthetic world generator: viewpoint graph, oriented object boxes
//! and template instructions whose targets cannot be seen from the start.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Edge, Environment, ObjectAnnotation, Task, Viewpoint, VISIBILITY_RADIUS};
use crate::error::{Error, Result};
use crate::geometry::{self, CameraIntrinsics, OrientedBox3D, HEADING_COUNT, HEADING_STEP};
use crate::seed::Mixer;
use crate::vocab::{InstructionParts, TemplateSet, ATTRIBUTES, CATEGORIES, ROOMS, VERBS};

const MAX_ATTEMPTS: u64 = 64;
const MIN_VIEWPOINT_GAP: f64 = 1.6;
const LINK_RADIUS: f64 = 3.0;
const CAMERA_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub n_viewpoints: usize,
    pub n_objects: usize,
    pub n_categories: usize,
    /// Side of the square floor plan, meters.
    pub room_extent: f64,
    pub rng_seed: u64,
    pub instruction_template_set: TemplateSet,
}

impl SynthesisParams {
    /// Defaults scaled to the viewpoint count (about 2.6 m between
    /// neighboring viewpoints).
    pub fn new(rng_seed: u64, n_viewpoints: usize, n_objects: usize) -> Self {
        SynthesisParams {
            n_viewpoints,
            n_objects,
            n_categories: 12,
            room_extent: (2.6 * (n_viewpoints as f64).sqrt()).max(4.0),
            rng_seed,
            instruction_template_set: TemplateSet::Standard,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_viewpoints < 2 {
            return Err(Error::Generation("need at least 2 viewpoints".into()));
        }
        if self.n_objects < 1 {
            return Err(Error::Generation("need at least 1 object".into()));
        }
        if self.n_categories < 1 || self.n_categories > CATEGORIES.len() {
            return Err(Error::Generation(format!(
                "n_categories must be in 1..={}",
                CATEGORIES.len()
            )));
        }
        if !(self.room_extent.is_finite() && self.room_extent > 0.0) {
            return Err(Error::Generation("room_extent must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a world plus one task per object that admits one. Retries with a
/// derived seed until at least one task exists.
pub fn generate_synthetic_world(params: &SynthesisParams) -> Result<(Environment, Vec<Task>)> {
    params.validate()?;
    let intr = CameraIntrinsics::default();
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = Mixer::new("world")
            .u64(params.rng_seed)
            .u64(attempt)
            .rng();
        let Some(env) = build_environment(params, &mut rng)? else {
            continue;
        };
        let tasks = build_tasks(params, &env, &intr, &mut rng);
        if !tasks.is_empty() {
            return Ok((env, tasks));
        }
    }
    Err(Error::Generation(format!(
        "no feasible task after {MAX_ATTEMPTS} attempts (seed {})",
        params.rng_seed
    )))
}

fn build_environment(params: &SynthesisParams, rng: &mut ChaCha8Rng) -> Result<Option<Environment>> {
    let extent = params.room_extent;
    let width = digits(params.n_viewpoints);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(params.n_viewpoints);
    for _ in 0..params.n_viewpoints {
        let mut placed = false;
        for _ in 0..2000 {
            let p = [
                rng.random_range(0.0..extent),
                rng.random_range(0.0..extent),
                CAMERA_HEIGHT,
            ];
            if positions
                .iter()
                .all(|q| geometry::distance(*q, p) >= MIN_VIEWPOINT_GAP)
            {
                positions.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Ok(None);
        }
    }
    let viewpoints: Vec<Viewpoint> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| Viewpoint {
            id: format!("vp{i:0width$}"),
            position: *p,
        })
        .collect();

    let n = viewpoints.len();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    // Prim's MST keeps the graph connected
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| in_tree[i]) {
            for j in (0..n).filter(|&j| !in_tree[j]) {
                let d = geometry::distance(positions[i], positions[j]);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("tree grows while nodes remain");
        in_tree[j] = true;
        pairs.insert((i.min(j), i.max(j)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if geometry::distance(positions[i], positions[j]) <= LINK_RADIUS {
                pairs.insert((i, j));
            }
        }
    }
    let edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            a: viewpoints[i].id.clone(),
            b: viewpoints[j].id.clone(),
            length: geometry::distance(positions[i], positions[j]),
        })
        .collect();

    // A fixed pool, so worlds generated with the same parameters share a
    // category vocabulary.
    let categories = &CATEGORIES[..params.n_categories];

    let owidth = digits(params.n_objects);
    let mut objects = Vec::with_capacity(params.n_objects);
    for i in 0..params.n_objects {
        let category = *categories.choose(rng).expect("nonempty categories");
        let attribute = *ATTRIBUTES.choose(rng).expect("nonempty attributes");
        let mut placed = None;
        for _ in 0..50 {
            let anchor = positions[rng.random_range(0..n)];
            let angle = rng.random_range(0.0..2.0 * PI);
            let dist = rng.random_range(1.0..2.6);
            let center = [
                anchor[0] + dist * angle.cos(),
                anchor[1] + dist * angle.sin(),
                rng.random_range(0.4..1.9),
            ];
            let radii = [
                rng.random_range(0.12..0.45),
                rng.random_range(0.12..0.45),
                rng.random_range(0.12..0.45),
            ];
            let bbox = OrientedBox3D::yawed(center, rng.random_range(0.0..PI), radii);
            let clear = bbox.bounding_radius() + 0.3;
            if positions.iter().all(|p| geometry::distance(*p, center) > clear) {
                placed = Some(bbox);
                break;
            }
        }
        let Some(bbox) = placed else {
            return Ok(None);
        };
        objects.push(ObjectAnnotation {
            id: format!("obj{i:0owidth$}"),
            label: format!("{attribute} {category}"),
            category: category.to_string(),
            bbox,
        });
    }

    let env = Environment::new(
        format!("synth-{}", params.rng_seed),
        viewpoints,
        edges,
        objects,
        Mixer::new("feature-seed").u64(params.rng_seed).finish() >> 11,
    )?;
    Ok(Some(env))
}

fn build_tasks(
    params: &SynthesisParams,
    env: &Environment,
    intr: &CameraIntrinsics,
    rng: &mut ChaCha8Rng,
) -> Vec<Task> {
    let extent = params.room_extent;
    let mut rooms: Vec<&str> = ROOMS.to_vec();
    rooms.shuffle(rng);
    let room_of = |c: [f64; 3]| {
        let qx = usize::from(c[0] >= extent / 2.0);
        let qy = usize::from(c[1] >= extent / 2.0);
        rooms[2 * qy + qx]
    };

    let mut tasks = Vec::new();
    for obj in &env.objects {
        let mut goals = Vec::new();
        let mut starts = Vec::new();
        for vp in &env.viewpoints {
            let visible = geometry::visible_from(env, &vp.id, &obj.id, intr);
            if visible {
                goals.push(vp.id.clone());
            } else {
                starts.push(vp.id.clone());
            }
        }
        // the verb and heading draws happen for every object so that task
        // content does not depend on feasibility of earlier objects
        let verb = *VERBS.choose(rng).expect("verbs");
        let heading = rng.random_range(0..HEADING_COUNT) as f64 * HEADING_STEP;
        let pick = rng.random_range(0..usize::MAX);
        if goals.is_empty() || starts.is_empty() {
            continue;
        }
        debug_assert!(goals.iter().all(|g| {
            let p = env.viewpoint(g).expect("goal exists").position;
            geometry::distance(p, obj.bbox.center) <= VISIBILITY_RADIUS
        }));
        let start = starts[pick % starts.len()].clone();
        let landmark = env
            .objects
            .iter()
            .filter(|o| o.id != obj.id)
            .min_by(|a, b| {
                geometry::distance(a.bbox.center, obj.bbox.center)
                    .total_cmp(&geometry::distance(b.bbox.center, obj.bbox.center))
                    .then_with(|| a.id.cmp(&b.id))
            })
            .map(|o| o.category.as_str());
        let attribute = geometry::attribute_of(&obj.label, &obj.category);
        let instruction = params.instruction_template_set.render(&InstructionParts {
            room: room_of(obj.bbox.center),
            verb,
            attribute,
            category: &obj.category,
            landmark,
        });
        tasks.push(Task {
            id: format!("{}-{}", env.id, obj.id),
            env_id: env.id.clone(),
            instruction,
            start_viewpoint: start,
            start_heading: heading,
            start_elevation: 0.0,
            target_object: obj.id.clone(),
            goal_viewpoints: goals,
        });
    }
    tasks
}

fn digits(n: usize) -> usize {
    n.max(1).saturating_sub(1).to_string().len().max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let p = SynthesisParams::new(11, 10, 8);
        let (e1, t1) = generate_synthetic_world(&p).unwrap();
        let (e2, t2) = generate_synthetic_world(&p).unwrap();
        assert_eq!(e1.to_json(), e2.to_json());
        assert_eq!(crate::env::tasks_to_json(&t1), crate::env::tasks_to_json(&t2));
        let (e3, _) = generate_synthetic_world(&SynthesisParams::new(12, 10, 8)).unwrap();
        assert_ne!(e1.to_json(), e3.to_json());
    }

    #[test]
    fn smallest_world_has_one_task_away_from_goal() {
        let (env, tasks) = generate_synthetic_world(&SynthesisParams::new(3, 2, 1)).unwrap();
        assert_eq!(env.viewpoints.len(), 2);
        assert_eq!(env.edges.len(), 1);
        assert_eq!(tasks.len(), 1);
        let t = &tasks[0];
        assert!(!t.goal_viewpoints.contains(&t.start_viewpoint));
        env.validate_task(t).unwrap();
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_synthetic_world(&SynthesisParams::new(1, 1, 1)).is_err());
        assert!(generate_synthetic_world(&SynthesisParams::new(1, 4, 0)).is_err());
    }
}
