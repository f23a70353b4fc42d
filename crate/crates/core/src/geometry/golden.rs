//! Golden-file format for `visible_objects` fixtures: a JSON list of
//! `{viewpoint, object, view_k, bbox:[x,y,w,h], depth}` with six-decimal fixed
//! formatting so fixture diffs stay readable.

use serde::Deserialize;

use crate::env::Environment;

use super::{visible_objects, CameraIntrinsics, ViewState};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GoldenEntry {
    pub viewpoint: String,
    pub object: String,
    pub view_k: usize,
    pub bbox: [f64; 4],
    pub depth: f64,
}

/// Every visible projection in the world, viewpoints in file order and
/// views in index order.
pub fn golden_entries(env: &Environment, intr: &CameraIntrinsics) -> Vec<GoldenEntry> {
    let mut out = Vec::new();
    for vp in &env.viewpoints {
        for state in ViewState::all(&vp.id) {
            for p in visible_objects(env, &state, intr) {
                out.push(GoldenEntry {
                    viewpoint: vp.id.clone(),
                    object: p.object,
                    view_k: state.k,
                    bbox: p.bbox.into(),
                    depth: p.depth,
                });
            }
        }
    }
    out
}

pub fn format_golden(entries: &[GoldenEntry]) -> String {
    let mut s = String::from("[\n");
    for (i, e) in entries.iter().enumerate() {
        s.push_str(&format!(
            "  {{\"viewpoint\": {}, \"object\": {}, \"view_k\": {}, \"bbox\": [{:.6}, {:.6}, {:.6}, {:.6}], \"depth\": {:.6}}}",
            serde_json::to_string(&e.viewpoint).expect("string"),
            serde_json::to_string(&e.object).expect("string"),
            e.view_k,
            e.bbox[0],
            e.bbox[1],
            e.bbox[2],
            e.bbox[3],
            e.depth
        ));
        s.push_str(if i + 1 < entries.len() { ",\n" } else { "\n" });
    }
    s.push_str("]\n");
    s
}

pub fn parse_golden(text: &str) -> serde_json::Result<Vec<GoldenEntry>> {
    serde_json::from_str(text)
}
