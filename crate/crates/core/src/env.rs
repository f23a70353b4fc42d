//! Environment data model: viewpoint graph, object annotations and tasks,
//! with validation, shortest paths and proximity queries.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, OrientedBox3D, Vec3};

pub const FORMAT_VERSION: u32 = 1;

/// Proximity threshold used for annotation, success and goal checks (closed).
pub const VISIBILITY_RADIUS: f64 = 3.0;

const EDGE_LENGTH_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: String,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub id: String,
    pub label: String,
    pub category: String,
    #[serde(rename = "box")]
    pub bbox: OrientedBox3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnvironmentFile {
    format_version: u32,
    id: String,
    viewpoints: Vec<Viewpoint>,
    edges: Vec<Edge>,
    objects: Vec<ObjectAnnotation>,
    feature_seed: u64,
}

/// A validated, immutable world. Construct with [`Environment::new`] or
/// [`load_environment`]; both run the full invariant check.
#[derive(Debug, Clone)]
pub struct Environment {
    pub id: String,
    pub viewpoints: Vec<Viewpoint>,
    pub edges: Vec<Edge>,
    pub objects: Vec<ObjectAnnotation>,
    pub feature_seed: u64,
    vp_index: HashMap<String, usize>,
    obj_index: HashMap<String, usize>,
    // neighbor lists sorted by viewpoint id
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.viewpoints == other.viewpoints
            && self.edges == other.edges
            && self.objects == other.objects
            && self.feature_seed == other.feature_seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub env_id: String,
    pub instruction: Vec<String>,
    pub start_viewpoint: String,
    pub start_heading: f64,
    pub start_elevation: f64,
    pub target_object: String,
    pub goal_viewpoints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskFile {
    format_version: u32,
    tasks: Vec<Task>,
}

/// Result of a shortest-path query.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    pub viewpoints: Vec<String>,
    pub length: f64,
}

impl Environment {
    pub fn new(
        id: impl Into<String>,
        viewpoints: Vec<Viewpoint>,
        edges: Vec<Edge>,
        objects: Vec<ObjectAnnotation>,
        feature_seed: u64,
    ) -> Result<Self> {
        let id = id.into();
        let mut vp_index = HashMap::with_capacity(viewpoints.len());
        for (i, vp) in viewpoints.iter().enumerate() {
            if vp.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!(
                    "viewpoint `{}` has a non-finite coordinate",
                    vp.id
                )));
            }
            if vp_index.insert(vp.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate viewpoint id `{}`", vp.id)));
            }
        }
        if viewpoints.is_empty() {
            return Err(Error::Validation("environment has no viewpoints".into()));
        }
        let mut obj_index = HashMap::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            if obj_index.insert(obj.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate object id `{}`", obj.id)));
            }
            if obj.label.trim().is_empty() {
                return Err(Error::Validation(format!("object `{}` has an empty label", obj.id)));
            }
            if obj.category.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "object `{}` has an empty category",
                    obj.id
                )));
            }
            obj.bbox
                .validate()
                .map_err(|e| Error::Validation(format!("object `{}`: {e}", obj.id)))?;
        }

        let mut adjacency = vec![Vec::new(); viewpoints.len()];
        let mut seen = BTreeSet::new();
        for e in &edges {
            let a = *vp_index
                .get(&e.a)
                .ok_or_else(|| Error::Validation(format!("edge references unknown viewpoint `{}`", e.a)))?;
            let b = *vp_index
                .get(&e.b)
                .ok_or_else(|| Error::Validation(format!("edge references unknown viewpoint `{}`", e.b)))?;
            if a == b {
                return Err(Error::Validation(format!("self-loop edge at `{}`", e.a)));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Validation(format!("duplicate edge `{}`-`{}`", e.a, e.b)));
            }
            let d = geometry::distance(viewpoints[a].position, viewpoints[b].position);
            if !e.length.is_finite() || (e.length - d).abs() > EDGE_LENGTH_TOL {
                return Err(Error::Validation(format!(
                    "edge `{}`-`{}` has length {} but endpoints are {} m apart",
                    e.a, e.b, e.length, d
                )));
            }
            adjacency[a].push((b, e.length));
            adjacency[b].push((a, e.length));
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| viewpoints[x.0].id.cmp(&viewpoints[y.0].id));
        }

        let env = Environment {
            id,
            viewpoints,
            edges,
            objects,
            feature_seed,
            vp_index,
            obj_index,
            adjacency,
        };
        if !env.is_connected() {
            return Err(Error::Validation("viewpoint graph is not connected".into()));
        }
        Ok(env)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.viewpoints.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn viewpoint_index(&self, id: &str) -> Option<usize> {
        self.vp_index.get(id).copied()
    }

    pub fn viewpoint(&self, id: &str) -> Option<&Viewpoint> {
        self.viewpoint_index(id).map(|i| &self.viewpoints[i])
    }

    pub fn require_viewpoint(&self, id: &str) -> Result<&Viewpoint> {
        self.viewpoint(id)
            .ok_or_else(|| Error::UnknownViewpoint(id.to_string()))
    }

    pub fn object(&self, id: &str) -> Option<&ObjectAnnotation> {
        self.obj_index.get(id).map(|&i| &self.objects[i])
    }

    pub fn require_object(&self, id: &str) -> Result<&ObjectAnnotation> {
        self.object(id).ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    /// Neighbors of `id` as (viewpoint, edge length), sorted by viewpoint id.
    pub fn neighbors(&self, id: &str) -> Vec<(&Viewpoint, f64)> {
        match self.viewpoint_index(id) {
            Some(i) => self.adjacency[i]
                .iter()
                .map(|&(j, len)| (&self.viewpoints[j], len))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn edge_length(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.viewpoint_index(a)?;
        let ib = self.viewpoint_index(b)?;
        self.adjacency[ia]
            .iter()
            .find(|(j, _)| *j == ib)
            .map(|&(_, len)| len)
    }

    pub fn are_adjacent(&self, a: &str, b: &str) -> bool {
        self.edge_length(a, b).is_some()
    }

    /// Single-source shortest distances (meters), indexed like `viewpoints`.
    pub fn distances_from(&self, from: &str) -> Result<Vec<f64>> {
        let src = self
            .viewpoint_index(from)
            .ok_or_else(|| Error::UnknownViewpoint(from.to_string()))?;
        let mut dist = vec![f64::INFINITY; self.viewpoints.len()];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: src });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(j, len) in &self.adjacency[node] {
                let nd = d + len;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(HeapItem { dist: nd, node: j });
                }
            }
        }
        Ok(dist)
    }

    /// Minimal-length path. Among paths whose lengths agree within 1e-9 m the
    /// lexicographically smallest id sequence wins.
    pub fn shortest_path(&self, from: &str, to: &str) -> Result<GraphPath> {
        let src = self
            .viewpoint_index(from)
            .ok_or_else(|| Error::UnknownViewpoint(from.to_string()))?;
        let dst = self
            .viewpoint_index(to)
            .ok_or_else(|| Error::UnknownViewpoint(to.to_string()))?;
        let n = self.viewpoints.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut route: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut done = vec![false; n];
        dist[src] = 0.0;
        route[src] = Some(vec![src]);
        loop {
            // O(V^2) selection keeps the tie-break exact and simple
            let mut best: Option<usize> = None;
            for i in 0..n {
                if done[i] || !dist[i].is_finite() {
                    continue;
                }
                best = match best {
                    None => Some(i),
                    Some(b) => {
                        if dist[i] < dist[b] - TIE_TOL
                            || ((dist[i] - dist[b]).abs() <= TIE_TOL
                                && self.cmp_routes(route[i].as_ref(), route[b].as_ref())
                                    == Ordering::Less)
                        {
                            Some(i)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            let Some(u) = best else { break };
            done[u] = true;
            if u == dst {
                break;
            }
            let base = route[u].clone().unwrap_or_default();
            for &(v, len) in &self.adjacency[u] {
                if done[v] {
                    continue;
                }
                let nd = dist[u] + len;
                let mut cand = base.clone();
                cand.push(v);
                let better = nd < dist[v] - TIE_TOL
                    || ((nd - dist[v]).abs() <= TIE_TOL
                        && self.cmp_routes(Some(&cand), route[v].as_ref()) == Ordering::Less);
                if better {
                    dist[v] = nd;
                    route[v] = Some(cand);
                }
            }
        }
        match &route[dst] {
            Some(r) if done[dst] => Ok(GraphPath {
                viewpoints: r.iter().map(|&i| self.viewpoints[i].id.clone()).collect(),
                length: dist[dst],
            }),
            _ => Err(Error::Unreachable {
                from: from.to_string(),
                to: to.to_string(),
            }),
        }
    }

    fn cmp_routes(&self, a: Option<&Vec<usize>>, b: Option<&Vec<usize>>) -> Ordering {
        match (a, b) {
            (Some(a), Some(b)) => a
                .iter()
                .map(|&i| self.viewpoints[i].id.as_str())
                .cmp(b.iter().map(|&i| self.viewpoints[i].id.as_str())),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    }

    /// Objects whose box center lies within `radius` of the viewpoint
    /// (closed interval), sorted by distance then id.
    pub fn objects_near(&self, vp: &str, radius: f64) -> Result<Vec<&ObjectAnnotation>> {
        let p = self.require_viewpoint(vp)?.position;
        let mut found: Vec<(f64, &ObjectAnnotation)> = self
            .objects
            .iter()
            .map(|o| (geometry::distance(p, o.bbox.center), o))
            .filter(|(d, _)| *d <= radius)
            .collect();
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(found.into_iter().map(|(_, o)| o).collect())
    }

    /// Checks the Task invariants against this environment.
    pub fn validate_task(&self, task: &Task) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("task `{}`: {msg}", task.id)));
        if task.env_id != self.id {
            return fail(format!("references environment `{}`, not `{}`", task.env_id, self.id));
        }
        if task.instruction.is_empty() {
            return fail("empty instruction".into());
        }
        self.require_viewpoint(&task.start_viewpoint)?;
        let target = self.require_object(&task.target_object)?;
        if task.goal_viewpoints.is_empty() {
            return fail("no goal viewpoints".into());
        }
        for g in &task.goal_viewpoints {
            let vp = self.require_viewpoint(g)?;
            let d = geometry::distance(vp.position, target.bbox.center);
            if d > VISIBILITY_RADIUS {
                return fail(format!("goal viewpoint `{g}` is {d:.3} m from the target"));
            }
        }
        if !task.start_heading.is_finite() || !task.start_elevation.is_finite() {
            return fail("non-finite start orientation".into());
        }
        Ok(())
    }

    /// Shortest distance from the task start to its nearest goal viewpoint,
    /// together with that goal.
    pub fn nearest_goal(&self, task: &Task, from: &str) -> Result<(String, f64)> {
        let dist = self.distances_from(from)?;
        let mut best: Option<(String, f64)> = None;
        for g in &task.goal_viewpoints {
            let i = self
                .viewpoint_index(g)
                .ok_or_else(|| Error::UnknownViewpoint(g.clone()))?;
            let better = match &best {
                None => true,
                Some((bid, bd)) => {
                    dist[i] < bd - TIE_TOL || ((dist[i] - bd).abs() <= TIE_TOL && g < bid)
                }
            };
            if better {
                best = Some((g.clone(), dist[i]));
            }
        }
        match best {
            Some((g, d)) if d.is_finite() => Ok((g, d)),
            _ => Err(Error::Unreachable {
                from: from.to_string(),
                to: task.id.clone(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        let file = EnvironmentFile {
            format_version: FORMAT_VERSION,
            id: self.id.clone(),
            viewpoints: self.viewpoints.clone(),
            edges: self.edges.clone(),
            objects: self.objects.clone(),
            feature_seed: self.feature_seed,
        };
        serde_json::to_string_pretty(&file).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnvironmentFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported environment format_version {}",
                file.format_version
            )));
        }
        Environment::new(file.id, file.viewpoints, file.edges, file.objects, file.feature_seed)
    }
}

#[derive(Debug, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Environment::from_json(&text)
}

pub fn save_environment(env: &Environment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, env.to_json()).map_err(|e| Error::io(path, e))
}

pub fn tasks_to_json(tasks: &[Task]) -> String {
    let file = TaskFile {
        format_version: FORMAT_VERSION,
        tasks: tasks.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("tasks serialize")
}

pub fn tasks_from_json(text: &str) -> Result<Vec<Task>> {
    let file: TaskFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported task format_version {}",
            file.format_version
        )));
    }
    Ok(file.tasks)
}

/// Loads a task file and validates every task against `env`.
pub fn load_tasks(path: impl AsRef<Path>, env: &Environment) -> Result<Vec<Task>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tasks = tasks_from_json(&text)?;
    for t in &tasks {
        env.validate_task(t)?;
    }
    Ok(tasks)
}

pub fn save_tasks(tasks: &[Task], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tasks_to_json(tasks)).map_err(|e| Error::io(path, e))
}
