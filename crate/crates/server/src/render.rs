use refnav_core::episode::{Observation, Simulator};
use refnav_core::geometry::{camera_pose, project_point};

use crate::wire::{RenderBox, RenderMarker, RenderPayload, RenderView};

/// Labeled boxes and neighbor markers for each of the 36 views. Markers are
/// drawn at the neighbor's floor position.
pub fn render(sim: &Simulator, obs: &Observation) -> RenderPayload {
    let env = sim.env();
    let intr = sim.config().intrinsics;
    let here = env.viewpoint(&obs.viewpoint).map(|v| v.position).unwrap_or_default();
    let views = obs
        .views()
        .iter()
        .zip(obs.candidate_objects())
        .map(|(view, objs)| {
            let st = &view.state;
            let pose = camera_pose(here, st.heading, st.elevation);
            let markers = obs
                .navigable
                .iter()
                .filter_map(|n| {
                    let p = env.viewpoint(&n.viewpoint)?.position;
                    let (x, y) = project_point(p, &pose, &intr)?;
                    Some(RenderMarker { viewpoint: n.viewpoint.clone(), x, y })
                })
                .collect();
            RenderView {
                k: st.k,
                heading: st.heading,
                elevation: st.elevation,
                boxes: objs
                    .iter()
                    .map(|o| RenderBox {
                        object: o.object.clone(),
                        label: env.object(&o.object).map(|a| a.label.clone()).unwrap_or_default(),
                        bbox: o.bbox,
                    })
                    .collect(),
                markers,
            }
        })
        .collect();
    RenderPayload { width: intr.width, height: intr.height, views }
}
