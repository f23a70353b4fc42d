mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refnav_core::episode::Detection;
use refnav_core::geometry::{iou, BBox2D};
use refnav_core::metrics::{aggregate, evaluate, evaluate_all, spl_term};
use refnav_core::par::Exec;
use support::fixtures::fixtures;
use support::oracle;

#[test]
fn metrics_match_brute_force_on_random_fixtures() {
    let fx = fixtures(1000);
    let (mut succ, mut reverie, mut bbox_hits) = (0, 0, 0);
    for f in &fx {
        let got = evaluate(&f.sim, &f.task, &f.traj).unwrap();
        let want = oracle::score(f.sim.env(), &f.task, &f.traj);
        let ctx = format!("{:?}", f.traj);
        assert_eq!(got.nav_success, want.nav, "{ctx}");
        assert_eq!(got.oracle_success, want.oracle, "{ctx}");
        assert_eq!(got.reverie_success, want.reverie, "{ctx}");
        assert!((got.path_length - want.path_length).abs() <= 1e-9, "{ctx}");
        assert!((got.shortest_length - want.shortest).abs() <= 1e-9, "{ctx}");
        assert!((got.spl_term - want.spl).abs() <= 1e-9, "{ctx}");
        // with identical inputs the SPL term is pure arithmetic
        let again = spl_term(want.nav, want.shortest, want.path_length);
        assert!((again - want.spl).abs() <= 1e-12);
        succ += want.nav as usize;
        reverie += want.reverie as usize;
        bbox_hits += (want.reverie && matches!(f.traj.detection, Some(Detection::BboxOutput { .. }))) as usize;
    }
    // the fixtures are only useful if they cover both outcomes
    assert!(succ > 50 && succ < 950, "nav successes {succ}");
    assert!(reverie > 20, "reverie successes {reverie}");
    assert!(bbox_hits > 5, "box detections that succeed {bbox_hits}");
}

#[test]
fn iou_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let mut r = || [rng.random_range(0.0..600.0), rng.random_range(0.0..440.0), rng.random_range(0.0..150.0), rng.random_range(0.0..150.0)];
        let (a, b) = (r(), r());
        let b = if rng.random_bool(0.3) { [a[0] + 3.0, a[1] - 2.0, a[2], a[3] * 0.8] } else { b };
        let got = iou(&BBox2D::new(a[0], a[1], a[2], a[3]), &BBox2D::new(b[0], b[1], b[2], b[3]));
        assert!((got - oracle::iou(&a, &b)).abs() <= 1e-12);
    }
}

#[test]
fn reports_are_ordered() {
    let fx = fixtures(300);
    for chunk in fx.chunks(30) {
        let results = chunk.iter().map(|f| evaluate(&f.sim, &f.task, &f.traj).unwrap()).collect();
        let a = aggregate(results).unwrap().aggregates;
        assert!(a.success <= a.oracle_success);
        assert!(a.spl <= a.success + 1e-12);
        assert!(a.reverie_success <= a.success);
    }
}

#[test]
fn evaluate_all_rejects_foreign_and_broken_trajectories() {
    let fx = fixtures(4);
    let f = &fx[0];
    let tasks = vec![f.task.clone()];
    let mut foreign = f.traj.clone();
    foreign.task_id = "nope".into();
    assert!(evaluate_all(&f.sim, &tasks, &[foreign], Exec::Sequential).is_err());
    let mut jump = f.traj.clone();
    let far = f
        .sim
        .env()
        .viewpoints
        .iter()
        .find(|v| v.id != f.task.start_viewpoint && !f.sim.env().are_adjacent(&f.task.start_viewpoint, &v.id))
        .map(|v| v.id.clone());
    if let Some(far) = far {
        jump.path = vec![f.task.start_viewpoint.clone(), far];
        assert!(evaluate_all(&f.sim, &tasks, &[jump], Exec::Sequential).is_err());
    }
    let mut late = f.traj.clone();
    late.path[0] = "elsewhere".into();
    assert!(evaluate_all(&f.sim, &tasks, &[late], Exec::Sequential).is_err());
}
