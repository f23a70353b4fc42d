//! Brute-force reimplementations used as test oracles. Nothing here calls
//! into the library's geometry, graph or metric code; only plain data types
//! are shared.

#![allow(dead_code)]

use std::f64::consts::PI;

use refnav_core::env::{Environment, ObjectAnnotation, Task};
use refnav_core::episode::{Detection, Trajectory};

pub const RADIUS: f64 = 3.0;
const W: f64 = 640.0;
const H: f64 = 480.0;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    dot(sub(a, b), sub(a, b)).sqrt()
}

/// All-pairs shortest path lengths by Floyd-Warshall, indexed like
/// `env.viewpoints`.
pub fn all_pairs(env: &Environment) -> Vec<Vec<f64>> {
    let n = env.viewpoints.len();
    let idx = |id: &str| env.viewpoints.iter().position(|v| v.id == id).unwrap();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &env.edges {
        let (a, b) = (idx(&e.a), idx(&e.b));
        d[a][b] = d[a][b].min(e.length);
        d[b][a] = d[b][a].min(e.length);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Projects a box for the view at heading index `h`, elevation index `e`.
/// Returns `[x, y, w, h]` and the distance to the box center.
pub fn project(obj: &ObjectAnnotation, eye: [f64; 3], h: usize, e: usize) -> Option<([f64; 4], f64)> {
    let heading = h as f64 * PI / 6.0;
    let elev = (e as f64 - 1.0) * PI / 6.0;
    let fwd = [heading.sin() * elev.cos(), heading.cos() * elev.cos(), elev.sin()];
    let up = [-heading.sin() * elev.sin(), -heading.cos() * elev.sin(), elev.cos()];
    let left = [
        up[1] * fwd[2] - up[2] * fwd[1],
        up[2] * fwd[0] - up[0] * fwd[2],
        up[0] * fwd[1] - up[1] * fwd[0],
    ];
    let f = (H / 2.0) / (PI / 6.0).tan();
    let b = &obj.bbox;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    let mut any = false;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let s = [sx, sy, sz];
                let mut p = b.center;
                for ((axis, si), r) in b.axes.iter().zip(s).zip(b.radii) {
                    for (pc, ac) in p.iter_mut().zip(axis) {
                        *pc += si * r * ac;
                    }
                }
                let d = sub(p, eye);
                let z = dot(fwd, d);
                if z <= 0.05 {
                    continue;
                }
                any = true;
                let u = W / 2.0 - f * dot(left, d) / z;
                let v = H / 2.0 - f * dot(up, d) / z;
                x0 = x0.min(u);
                y0 = y0.min(v);
                x1 = x1.max(u);
                y1 = y1.max(v);
            }
        }
    }
    if !any {
        return None;
    }
    let (x0, y0, x1, y1) = (x0.max(0.0), y0.max(0.0), x1.min(W), y1.min(H));
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some(([x0, y0, x1 - x0, y1 - y0], dist(b.center, eye)))
}

fn inside(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && a[0] + a[2] <= b[0] + b[2] && a[1] + a[3] <= b[1] + b[3]
}

/// `(object, bbox, depth)` visible in each of the 36 views, indexed `k - 1`.
pub fn panorama(env: &Environment, viewpoint: &str) -> Vec<Vec<(String, [f64; 4], f64)>> {
    let eye = env.viewpoints.iter().find(|v| v.id == viewpoint).unwrap().position;
    let near: Vec<&ObjectAnnotation> = env.objects.iter().filter(|o| dist(o.bbox.center, eye) <= RADIUS).collect();
    let mut out = Vec::with_capacity(36);
    for k in 1..=36 {
        let (h, e) = ((k - 1) % 12, (k - 1) / 12);
        let projs: Vec<(String, [f64; 4], f64)> = near
            .iter()
            .filter_map(|o| project(o, eye, h, e).map(|(b, d)| (o.id.clone(), b, d)))
            .collect();
        let kept: Vec<_> = projs
            .iter()
            .enumerate()
            .filter(|(i, p)| !projs.iter().enumerate().any(|(j, q)| j != *i && inside(&p.1, &q.1) && p.2 > q.2))
            .map(|(_, p)| p.clone())
            .collect();
        out.push(kept);
    }
    out
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    let inter = ix.max(0.0) * iy.max(0.0);
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

pub fn success_at(env: &Environment, task: &Task, viewpoint: &str) -> bool {
    let eye = env.viewpoints.iter().find(|v| v.id == viewpoint).unwrap().position;
    let obj = env.objects.iter().find(|o| o.id == task.target_object).unwrap();
    dist(eye, obj.bbox.center) <= RADIUS
        && panorama(env, viewpoint).iter().flatten().any(|(id, _, _)| *id == task.target_object)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub nav: bool,
    pub oracle: bool,
    pub reverie: bool,
    pub path_length: f64,
    pub shortest: f64,
    pub spl: f64,
}

pub fn score(env: &Environment, task: &Task, traj: &Trajectory) -> Scores {
    let d = all_pairs(env);
    let idx = |id: &str| env.viewpoints.iter().position(|v| v.id == id).unwrap();
    let start = idx(&task.start_viewpoint);
    let shortest = task.goal_viewpoints.iter().map(|g| d[start][idx(g)]).fold(f64::INFINITY, f64::min);
    let mut path_length = 0.0;
    for w in traj.path.windows(2) {
        let e = env
            .edges
            .iter()
            .find(|e| (e.a == w[0] && e.b == w[1]) || (e.a == w[1] && e.b == w[0]))
            .unwrap();
        path_length += e.length;
    }
    let stop = traj.path.last().unwrap();
    let nav = success_at(env, task, stop);
    let oracle = traj.path.iter().any(|v| success_at(env, task, v));
    let reverie = nav
        && match &traj.detection {
            None => false,
            Some(Detection::CandidateChoice { object }) => *object == task.target_object,
            Some(Detection::BboxOutput { view_k, bbox }) => {
                (1..=36).contains(view_k)
                    && panorama(env, stop)[view_k - 1]
                        .iter()
                        .find(|(id, _, _)| *id == task.target_object)
                        .is_some_and(|(_, gt, _)| iou(&[bbox.x, bbox.y, bbox.w, bbox.h], gt) >= 0.5)
            }
        };
    let spl = if nav { shortest / shortest.max(path_length).max(f64::MIN_POSITIVE) } else { 0.0 };
    let spl = if nav && shortest == 0.0 && path_length == 0.0 { 1.0 } else { spl };
    Scores { nav, oracle, reverie, path_length, shortest, spl }
}
