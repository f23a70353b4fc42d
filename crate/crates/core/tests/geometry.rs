mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use refnav_core::env::{load_environment, Environment, ObjectAnnotation, Viewpoint};
use refnav_core::geometry::golden::{golden_entries, parse_golden};
use refnav_core::geometry::{
    camera_pose, iou, occlusion_filter, project_box, view_feature, visible_objects, BBox2D, CameraIntrinsics,
    OrientedBox3D, ProjectedObject, ViewState, HEADING_COUNT,
};
use refnav_core::synth::{generate_synthetic_world, SynthesisParams};
use support::oracle;

fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn visible_objects_match_the_recorded_golden_file() {
    let env = load_environment(data("golden_env.json")).unwrap();
    let want = parse_golden(&std::fs::read_to_string(data("golden_visible.json")).unwrap()).unwrap();
    let got = golden_entries(&env, &CameraIntrinsics::default());
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!((&g.viewpoint, &g.object, g.view_k), (&w.viewpoint, &w.object, w.view_k));
        for (a, b) in g.bbox.iter().zip(&w.bbox) {
            assert!((a - b).abs() <= 1e-5, "{g:?} vs {w:?}");
        }
        assert!((g.depth - w.depth).abs() <= 1e-5);
    }
}

#[test]
fn hand_projection_example() {
    let intr = CameraIntrinsics::default();
    assert!((intr.focal() - 415.692).abs() < 1e-3);
    // 0.2 m cube two meters ahead along +y
    let b = OrientedBox3D::axis_aligned([0.0, 2.0, 1.5], [0.1, 0.1, 0.1]);
    let pose = camera_pose([0.0, 0.0, 1.5], 0.0, 0.0);
    let (bbox, depth) = project_box(&b, &pose, &intr).unwrap();
    let (cx, cy) = bbox.center();
    assert!((cx - 320.0).abs() < 0.5 && (cy - 240.0).abs() < 0.5);
    // the near face at 1.9 m sets the hull: 415.69 * 0.1 / 1.9 on each side
    let half = 415.692 * 0.1 / 1.9;
    assert!((bbox.w - 2.0 * half).abs() < 0.5, "{bbox:?}");
    assert!((bbox.h - 2.0 * half).abs() < 0.5);
    assert!((depth - 2.0).abs() < 1e-12);

    let behind = camera_pose([0.0, 0.0, 1.5], std::f64::consts::PI, 0.0);
    assert!(project_box(&b, &behind, &intr).is_none());
}

fn proj(id: &str, b: [f64; 4], depth: f64) -> ProjectedObject {
    ProjectedObject { object: id.into(), bbox: b.into(), depth, view: ViewState::from_index("v", 1) }
}

fn ids(v: &[ProjectedObject]) -> Vec<&str> {
    v.iter().map(|p| p.object.as_str()).collect()
}

#[test]
fn occlusion_truth_table() {
    let a = [10.0, 10.0, 100.0, 100.0];
    let b = [20.0, 20.0, 30.0, 30.0];
    assert_eq!(ids(&occlusion_filter(vec![proj("A", a, 1.0), proj("B", b, 2.0)])), ["A"]);
    assert_eq!(ids(&occlusion_filter(vec![proj("A", a, 2.0), proj("B", b, 1.0)])), ["A", "B"]);
    assert_eq!(ids(&occlusion_filter(vec![proj("A", a, 1.0), proj("B", a, 1.0)])), ["A", "B"]);
}

#[test]
fn iou_examples() {
    let a = BBox2D::new(0.0, 0.0, 10.0, 10.0);
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(iou(&a, &BBox2D::new(20.0, 20.0, 5.0, 5.0)), 0.0);
    assert!((iou(&a, &BBox2D::new(5.0, 5.0, 10.0, 10.0)) - 25.0 / 175.0).abs() < 1e-12);
    let empty = BBox2D::new(3.0, 3.0, 0.0, 0.0);
    assert_eq!(iou(&empty, &empty), 0.0);
}

fn union_at(env: &Environment, vp: &str, shift: usize) -> BTreeSet<String> {
    let intr = CameraIntrinsics::default();
    let mut out = BTreeSet::new();
    for s in ViewState::all(vp) {
        // relabel: view k looks where view k + shift used to
        let h = (s.heading_index() + shift) % HEADING_COUNT;
        let k = 12 * s.elevation_index() + h + 1;
        out.extend(visible_objects(env, &ViewState::from_index(vp, k), &intr).into_iter().map(|p| p.object));
    }
    out
}

#[test]
fn panorama_union_is_invariant_under_heading_relabeling() {
    for seed in 0..100 {
        let (env, _) = generate_synthetic_world(&SynthesisParams::new(seed, 6, 12)).unwrap();
        for vp in &env.viewpoints {
            let base = union_at(&env, &vp.id, 0);
            let via_oracle: BTreeSet<String> =
                oracle::panorama(&env, &vp.id).into_iter().flatten().map(|(o, _, _)| o).collect();
            assert_eq!(base, via_oracle, "seed {seed} at {}", vp.id);
            for shift in [1, 5, 11] {
                assert_eq!(union_at(&env, &vp.id, shift), base);
            }
        }
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn rotated_box() -> impl Strategy<Value = OrientedBox3D> {
    (
        prop::array::uniform3(-3.0..3.0f64),
        prop::array::uniform3(0.05..1.0f64),
        0.0..std::f64::consts::TAU,
        -1.0..1.0f64,
    )
        .prop_map(|(c, r, yaw, tilt)| {
            let a0 = unit([yaw.cos(), yaw.sin(), tilt]);
            let a1 = unit([-yaw.sin(), yaw.cos(), 0.0]);
            // make a1 orthogonal to a0
            let d = a0[0] * a1[0] + a0[1] * a1[1] + a0[2] * a1[2];
            let a1 = unit([a1[0] - d * a0[0], a1[1] - d * a0[1], a1[2] - d * a0[2]]);
            let a2 = [
                a0[1] * a1[2] - a0[2] * a1[1],
                a0[2] * a1[0] - a0[0] * a1[2],
                a0[0] * a1[1] - a0[1] * a1[0],
            ];
            OrientedBox3D { center: c, axes: [a0, a1, a2], radii: r }
        })
}

fn bbox_strategy() -> impl Strategy<Value = BBox2D> {
    (0.0..600.0f64, 0.0..400.0f64, 0.0..200.0f64, 0.0..200.0f64).prop_map(|(x, y, w, h)| BBox2D::new(x, y, w, h))
}

proptest! {
    #[test]
    fn project_box_ignores_axis_order(b in rotated_box(), perm in 0usize..6, heading in 0usize..12, elev in 0usize..3) {
        let order = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let shuffled = OrientedBox3D {
            center: b.center,
            axes: order.map(|i| b.axes[i]),
            radii: order.map(|i| b.radii[i]),
        };
        let s = ViewState::from_index("v", 12 * elev + heading + 1);
        let pose = camera_pose([0.0, 0.0, 1.5], s.heading, s.elevation);
        let intr = CameraIntrinsics::default();
        let (p, q) = (project_box(&b, &pose, &intr), project_box(&shuffled, &pose, &intr));
        prop_assert_eq!(p.is_some(), q.is_some());
        if let (Some((p, dp)), Some((q, dq))) = (p, q) {
            for (a, c) in <[f64; 4]>::from(p).iter().zip(<[f64; 4]>::from(q)) {
                prop_assert!((a - c).abs() < 1e-9);
            }
            prop_assert!((dp - dq).abs() < 1e-12);
        }
    }

    #[test]
    fn occlusion_filter_is_a_subset_and_idempotent(
        boxes in prop::collection::vec((bbox_strategy(), 0.5..5.0f64), 0..12),
    ) {
        let input: Vec<ProjectedObject> = boxes
            .iter()
            .enumerate()
            .map(|(i, (b, d))| proj(&format!("o{i}"), (*b).into(), *d))
            .collect();
        let once = occlusion_filter(input.clone());
        prop_assert!(once.iter().all(|p| input.contains(p)));
        let twice = occlusion_filter(once.clone());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox_strategy(), b in bbox_strategy()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((v - oracle::iou(&a.into(), &b.into())).abs() < 1e-12);
        if a.area() > 0.0 {
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }

    #[test]
    fn features_are_reproducible(seed in 0u64..1000, k in 1usize..=36) {
        let (env, _) = generate_synthetic_world(&SynthesisParams::new(seed, 4, 6)).unwrap();
        let (again, _) = generate_synthetic_world(&SynthesisParams::new(seed, 4, 6)).unwrap();
        let intr = CameraIntrinsics::default();
        let s = ViewState::from_index(env.viewpoints[0].id.clone(), k);
        let a = view_feature(&env, &s, &intr, 32);
        let b = view_feature(&again, &s, &intr, 32);
        prop_assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((0.5..=2.0).contains(&n), "norm {}", n);
    }
}

#[test]
fn empty_room_sees_nothing() {
    let env = Environment::new(
        "empty",
        vec![
            Viewpoint { id: "a".into(), position: [0.0, 0.0, 1.5] },
            Viewpoint { id: "b".into(), position: [2.0, 0.0, 1.5] },
        ],
        vec![refnav_core::env::Edge { a: "a".into(), b: "b".into(), length: 2.0 }],
        Vec::<ObjectAnnotation>::new(),
        3,
    )
    .unwrap();
    for s in ViewState::all("a") {
        assert!(visible_objects(&env, &s, &CameraIntrinsics::default()).is_empty());
    }
}
