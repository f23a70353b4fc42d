//! Camera model, 36-view enumeration, oriented-box projection, occlusion
//! filtering and IoU.
//!
//! World frame: x east, y north, z up (meters). A heading of 0 looks along
//! +y and increases clockwise seen from above; positive elevation pitches the
//! optical axis up. Camera frame is right-handed with +z forward and +y up,
//! which puts +x to the camera's left; pixel columns grow to the right and
//! rows grow downward.

pub mod features;
pub mod golden;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, VISIBILITY_RADIUS};

pub use features::{
    attribute_of, category_embedding, object_base_embedding, object_feature, view_feature,
    FEATURE_SIGHT_RADIUS,
};

pub type Vec3 = [f64; 3];

pub const HEADING_COUNT: usize = 12;
pub const ELEVATION_COUNT: usize = 3;
pub const VIEW_COUNT: usize = HEADING_COUNT * ELEVATION_COUNT;
pub const HEADING_STEP: f64 = PI / 6.0;
pub const ELEVATION_STEP: f64 = PI / 6.0;
/// Vertices at or behind this camera-space depth are culled.
pub const Z_NEAR: f64 = 0.05;

const ORTHO_TOL: f64 = 1e-6;

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// 3D box given by its center, three orthonormal axis directions and the
/// half-extent along each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox3D {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub radii: Vec3,
}

impl OrientedBox3D {
    pub fn axis_aligned(center: Vec3, radii: Vec3) -> Self {
        OrientedBox3D {
            center,
            axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            radii,
        }
    }

    /// Box rotated by `yaw` radians about the world up axis.
    pub fn yawed(center: Vec3, yaw: f64, radii: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        OrientedBox3D {
            center,
            axes: [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]],
            radii,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err("box center is not finite".into());
        }
        for (i, r) in self.radii.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(format!("box radius {i} must be positive, got {r}"));
            }
        }
        for (i, a) in self.axes.iter().enumerate() {
            if (norm(*a) - 1.0).abs() > ORTHO_TOL {
                return Err(format!("box axis {i} is not unit length"));
            }
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            if dot(self.axes[i], self.axes[j]).abs() > ORTHO_TOL {
                return Err(format!("box axes {i} and {j} are not orthogonal"));
            }
        }
        Ok(())
    }

    /// Radius of the sphere enclosing the box.
    pub fn bounding_radius(&self) -> f64 {
        norm(self.radii)
    }
}

/// The eight corners `center + sum_i s_i r_i d_i` in sign-lexicographic
/// order: (-,-,-), (-,-,+), (-,+,-), ... , (+,+,+).
pub fn box_vertices(b: &OrientedBox3D) -> [Vec3; 8] {
    let mut out = [[0.0; 3]; 8];
    for (n, v) in out.iter_mut().enumerate() {
        let signs = [
            if n & 4 == 0 { -1.0 } else { 1.0 },
            if n & 2 == 0 { -1.0 } else { 1.0 },
            if n & 1 == 0 { -1.0 } else { 1.0 },
        ];
        let mut p = b.center;
        for ((axis, s), r) in b.axes.iter().zip(signs).zip(b.radii) {
            p = add(p, scale(*axis, s * r));
        }
        *v = p;
    }
    out
}

/// One of the 36 discrete camera orientations at a viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub viewpoint: String,
    pub heading: f64,
    pub elevation: f64,
    /// 1-based view index, `12 * elevation_index + heading_index + 1`.
    pub k: usize,
}

impl ViewState {
    pub fn from_index(viewpoint: impl Into<String>, k: usize) -> Self {
        assert!((1..=VIEW_COUNT).contains(&k), "view index {k} out of range");
        let h = (k - 1) % HEADING_COUNT;
        let e = (k - 1) / HEADING_COUNT;
        ViewState {
            viewpoint: viewpoint.into(),
            heading: h as f64 * HEADING_STEP,
            elevation: (e as f64 - 1.0) * ELEVATION_STEP,
            k,
        }
    }

    pub fn all(viewpoint: &str) -> Vec<ViewState> {
        (1..=VIEW_COUNT)
            .map(|k| ViewState::from_index(viewpoint, k))
            .collect()
    }

    pub fn heading_index(&self) -> usize {
        (self.k - 1) % HEADING_COUNT
    }

    pub fn elevation_index(&self) -> usize {
        (self.k - 1) / HEADING_COUNT
    }
}

pub fn view_index(heading_index: usize, elevation_index: usize) -> usize {
    HEADING_COUNT * elevation_index + heading_index + 1
}

/// Nearest discrete heading bucket for an arbitrary heading in radians.
pub fn heading_bucket(heading: f64) -> usize {
    let steps = (heading / HEADING_STEP).round() as i64;
    steps.rem_euclid(HEADING_COUNT as i64) as usize
}

pub fn elevation_bucket(elevation: f64) -> usize {
    let steps = (elevation / ELEVATION_STEP).round() as i64 + 1;
    steps.clamp(0, ELEVATION_COUNT as i64 - 1) as usize
}

/// Heading and elevation of the ray from `from` to `to`.
pub fn direction_angles(from: Vec3, to: Vec3) -> (f64, f64) {
    let d = sub(to, from);
    let heading = d[0].atan2(d[1]).rem_euclid(2.0 * PI);
    let horizontal = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let elevation = d[2].atan2(horizontal);
    (heading, elevation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: f64,
    pub height: f64,
    pub vertical_fov: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            width: 640.0,
            height: 480.0,
            vertical_fov: PI / 3.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn focal(&self) -> f64 {
        (self.height / 2.0) / (self.vertical_fov / 2.0).tan()
    }
}

/// Axis-aligned image box: left-top corner plus width and height, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox2D {
    fn from(v: [f64; 4]) -> Self {
        BBox2D {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        }
    }
}

impl From<BBox2D> for [f64; 4] {
    fn from(b: BBox2D) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox2D { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Closed containment: `other` lies inside `self`.
    pub fn contains(&self, other: &BBox2D) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

pub fn iou(a: &BBox2D, b: &BBox2D) -> f64 {
    // areas from corner differences, like the intersection, so that a box
    // compared with itself gives exactly 1
    let span = |lo: f64, hi: f64| (hi - lo).max(0.0);
    let area = |r: &BBox2D| span(r.x, r.right()) * span(r.y, r.bottom());
    let inter = span(a.x.max(b.x), a.right().min(b.right())) * span(a.y.max(b.y), a.bottom().min(b.bottom()));
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    /// Rows are the camera x (left), y (up) and z (forward) axes in world
    /// coordinates.
    pub rotation: [Vec3; 3],
}

impl CameraPose {
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.position);
        [
            dot(self.rotation[0], d),
            dot(self.rotation[1], d),
            dot(self.rotation[2], d),
        ]
    }
}

pub fn camera_pose(position: Vec3, heading: f64, elevation: f64) -> CameraPose {
    let (sh, ch) = heading.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let forward = [sh * ce, ch * ce, se];
    let up = [-sh * se, -ch * se, ce];
    let left = cross(up, forward);
    CameraPose {
        position,
        rotation: [left, up, forward],
    }
}

pub fn view_pose(env: &Environment, state: &ViewState) -> Option<CameraPose> {
    env.viewpoint(&state.viewpoint)
        .map(|vp| camera_pose(vp.position, state.heading, state.elevation))
}

/// Projects a box through a pinhole camera. Returns the clipped hull of the
/// projected vertices and the camera-space distance to the box center, or
/// `None` when nothing lands on the image.
pub fn project_box(
    b: &OrientedBox3D,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Option<(BBox2D, f64)> {
    let f = intr.focal();
    let (cx, cy) = (intr.width / 2.0, intr.height / 2.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for v in box_vertices(b) {
        let c = pose.to_camera(v);
        if c[2] <= Z_NEAR {
            continue;
        }
        any = true;
        let u = cx - f * c[0] / c[2];
        let w = cy - f * c[1] / c[2];
        lo[0] = lo[0].min(u);
        lo[1] = lo[1].min(w);
        hi[0] = hi[0].max(u);
        hi[1] = hi[1].max(w);
    }
    if !any {
        return None;
    }
    let x0 = lo[0].max(0.0);
    let y0 = lo[1].max(0.0);
    let x1 = hi[0].min(intr.width);
    let y1 = hi[1].min(intr.height);
    if x1 - x0 <= 0.0 || y1 - y0 <= 0.0 {
        return None;
    }
    let depth = norm(pose.to_camera(b.center));
    Some((BBox2D::new(x0, y0, x1 - x0, y1 - y0), depth))
}

/// Pixel position of a world point, or `None` when it is behind the camera
/// or off the image.
pub fn project_point(p: Vec3, pose: &CameraPose, intr: &CameraIntrinsics) -> Option<(f64, f64)> {
    let c = pose.to_camera(p);
    if c[2] <= Z_NEAR {
        return None;
    }
    let f = intr.focal();
    let u = intr.width / 2.0 - f * c[0] / c[2];
    let v = intr.height / 2.0 - f * c[1] / c[2];
    ((0.0..=intr.width).contains(&u) && (0.0..=intr.height).contains(&v)).then_some((u, v))
}

/// An object as it appears in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedObject {
    pub object: String,
    pub bbox: BBox2D,
    pub depth: f64,
    pub view: ViewState,
}

/// Drops every projection fully contained in another one that is strictly
/// closer. Input order is preserved.
pub fn occlusion_filter(projs: Vec<ProjectedObject>) -> Vec<ProjectedObject> {
    let occluded: Vec<bool> = projs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            projs
                .iter()
                .enumerate()
                .any(|(j, q)| i != j && q.bbox.contains(&p.bbox) && p.depth > q.depth)
        })
        .collect();
    projs
        .into_iter()
        .zip(occluded)
        .filter(|(_, occ)| !occ)
        .map(|(p, _)| p)
        .collect()
}

/// Objects annotated in a view: proximity within 3 m, projection, then
/// occlusion. Sorted by depth then id.
pub fn visible_objects(
    env: &Environment,
    state: &ViewState,
    intr: &CameraIntrinsics,
) -> Vec<ProjectedObject> {
    visible_objects_within(env, state, intr, VISIBILITY_RADIUS)
}

pub fn visible_objects_within(
    env: &Environment,
    state: &ViewState,
    intr: &CameraIntrinsics,
    radius: f64,
) -> Vec<ProjectedObject> {
    let Some(pose) = view_pose(env, state) else {
        return Vec::new();
    };
    let near = env.objects_near(&state.viewpoint, radius).unwrap_or_default();
    let projs: Vec<ProjectedObject> = near
        .into_iter()
        .filter_map(|o| {
            project_box(&o.bbox, &pose, intr).map(|(bbox, depth)| ProjectedObject {
                object: o.id.clone(),
                bbox,
                depth,
                view: state.clone(),
            })
        })
        .collect();
    let mut kept = occlusion_filter(projs);
    kept.sort_by(|a, b| a.depth.total_cmp(&b.depth).then_with(|| a.object.cmp(&b.object)));
    kept
}

/// The 36 per-view visible lists at a viewpoint, indexed by `k - 1`.
pub fn panorama(env: &Environment, viewpoint: &str, intr: &CameraIntrinsics) -> Vec<Vec<ProjectedObject>> {
    ViewState::all(viewpoint)
        .iter()
        .map(|s| visible_objects(env, s, intr))
        .collect()
}

/// Whether `object` survives in at least one of the 36 views at `viewpoint`.
pub fn visible_from(env: &Environment, viewpoint: &str, object: &str, intr: &CameraIntrinsics) -> bool {
    let (Some(vp), Some(obj)) = (env.viewpoint(viewpoint), env.object(object)) else {
        return false;
    };
    if distance(vp.position, obj.bbox.center) > VISIBILITY_RADIUS {
        return false;
    }
    ViewState::all(viewpoint)
        .iter()
        .any(|s| visible_objects(env, s, intr).iter().any(|p| p.object == object))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn proj(id: &str, bbox: BBox2D, depth: f64) -> ProjectedObject {
        ProjectedObject {
            object: id.into(),
            bbox,
            depth,
            view: ViewState::from_index("v", 1),
        }
    }

    #[test]
    fn unit_box_vertices() {
        let b = OrientedBox3D::axis_aligned([0.0; 3], [1.0; 3]);
        let vs = box_vertices(&b);
        assert_eq!(vs[0], [-1.0, -1.0, -1.0]);
        assert_eq!(vs[1], [-1.0, -1.0, 1.0]);
        assert_eq!(vs[7], [1.0, 1.0, 1.0]);
        for v in vs {
            assert!(v.iter().all(|c| c.abs() == 1.0));
        }
    }

    #[test]
    fn elongated_and_rotated_vertices() {
        let b = OrientedBox3D::axis_aligned([0.0; 3], [2.0, 1.0, 1.0]);
        let xs: Vec<f64> = box_vertices(&b).iter().map(|v| v[0]).collect();
        assert_eq!(xs.iter().cloned().fold(f64::MIN, f64::max), 2.0);
        assert_eq!(xs.iter().cloned().fold(f64::MAX, f64::min), -2.0);

        // axes rotated 90 degrees about z: the long axis now points along y
        let r = OrientedBox3D {
            center: [0.0; 3],
            axes: [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            radii: [2.0, 1.0, 1.0],
        };
        let vs = box_vertices(&r);
        let ymax = vs.iter().map(|v| v[1]).fold(f64::MIN, f64::max);
        let xmax = vs.iter().map(|v| v[0]).fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(ymax, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xmax, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn camera_pose_examples() {
        let ahead = [0.0, 2.0, 0.0];
        let c = camera_pose([0.0; 3], 0.0, 0.0).to_camera(ahead);
        assert_abs_diff_eq!(c[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2], 2.0, epsilon = 1e-12);

        let back = camera_pose([0.0; 3], PI, 0.0).to_camera(ahead);
        assert_abs_diff_eq!(back[2], -2.0, epsilon = 1e-12);

        let up = camera_pose([0.0; 3], 0.0, PI / 6.0).to_camera(ahead);
        assert_abs_diff_eq!(up[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(up[2], 2.0 * (PI / 6.0).cos(), epsilon = 1e-12);
    }

    #[test]
    fn heading_turns_clockwise() {
        // facing east, a point to the east is straight ahead
        let c = camera_pose([0.0; 3], PI / 2.0, 0.0).to_camera([3.0, 0.0, 0.0]);
        assert_abs_diff_eq!(c[2], 3.0, epsilon = 1e-12);
        // facing north, an eastern point is on the right half of the image
        let b = OrientedBox3D::axis_aligned([1.0, 3.0, 0.0], [0.1; 3]);
        let (bb, _) =
            project_box(&b, &camera_pose([0.0; 3], 0.0, 0.0), &CameraIntrinsics::default()).unwrap();
        assert!(bb.center().0 > 320.0);
    }

    #[test]
    fn projection_of_centered_box() {
        let intr = CameraIntrinsics::default();
        // f = 240 / tan(30 deg)
        let f = 240.0 / (PI / 6.0).tan();
        assert_abs_diff_eq!(intr.focal(), f, epsilon = 1e-9);
        assert_abs_diff_eq!(f, 415.692_193_816_530_5, epsilon = 1e-9);
        let b = OrientedBox3D::axis_aligned([0.0, 2.0, 0.0], [0.1; 3]);
        let (bb, depth) = project_box(&b, &camera_pose([0.0; 3], 0.0, 0.0), &intr).unwrap();
        let (cx, cy) = bb.center();
        assert_abs_diff_eq!(cx, 320.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cy, 240.0, epsilon = 1e-9);
        // nearest face at 1.9 m: half-width f * 0.1 / 1.9
        assert_abs_diff_eq!(bb.w, 2.0 * f * 0.1 / 1.9, epsilon = 1e-9);
        assert_abs_diff_eq!(bb.w, 43.757, epsilon = 1e-3);
        assert_abs_diff_eq!(depth, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn box_behind_camera_is_absent() {
        let b = OrientedBox3D::axis_aligned([0.0, -2.0, 0.0], [0.1; 3]);
        assert!(project_box(&b, &camera_pose([0.0; 3], 0.0, 0.0), &CameraIntrinsics::default()).is_none());
    }

    #[test]
    fn occlusion_truth_table() {
        let outer = BBox2D::new(0.0, 0.0, 100.0, 100.0);
        let inner = BBox2D::new(10.0, 10.0, 20.0, 20.0);

        let kept = occlusion_filter(vec![proj("a", outer, 1.0), proj("b", inner, 2.0)]);
        assert_eq!(kept.iter().map(|p| p.object.as_str()).collect::<Vec<_>>(), ["a"]);

        let kept = occlusion_filter(vec![proj("a", outer, 2.0), proj("b", inner, 1.0)]);
        assert_eq!(kept.len(), 2);

        let kept = occlusion_filter(vec![proj("a", inner, 1.0), proj("b", inner, 1.0)]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn iou_examples() {
        let a = BBox2D::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox2D::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox2D::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert_abs_diff_eq!(iou(&a, &b), 25.0 / 175.0, epsilon = 1e-12);
        assert_eq!(iou(&BBox2D::new(0.0, 0.0, 0.0, 0.0), &BBox2D::new(0.0, 0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn view_indexing() {
        let views = ViewState::all("v");
        assert_eq!(views.len(), VIEW_COUNT);
        for v in &views {
            assert_eq!(v.k, view_index(v.heading_index(), v.elevation_index()));
        }
        assert_abs_diff_eq!(views[0].elevation, -PI / 6.0);
        assert_abs_diff_eq!(views[12].elevation, 0.0);
        assert_eq!(heading_bucket(2.0 * PI - 0.01), 0);
        assert_eq!(heading_bucket(PI / 2.0), 3);
        assert_eq!(elevation_bucket(0.0), 1);
    }
}
