//! JSON bodies exchanged with clients.

use serde::{Deserialize, Serialize};

use refnav_core::episode::{Action, Observation, Trajectory};
use refnav_core::geometry::BBox2D;
use refnav_core::metrics::TaskResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub env_id: String,
    pub task_id: String,
}

/// An engine observation plus a schematic drawing of every view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    #[serde(flatten)]
    pub observation: Observation,
    pub render: RenderPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPayload {
    pub width: f64,
    pub height: f64,
    /// All 36 views, ordered by view index.
    pub views: Vec<RenderView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderView {
    pub k: usize,
    pub heading: f64,
    pub elevation: f64,
    pub boxes: Vec<RenderBox>,
    pub markers: Vec<RenderMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderBox {
    pub object: String,
    pub label: String,
    pub bbox: BBox2D,
}

/// Screen position of a navigable neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderMarker {
    pub viewpoint: String,
    pub x: f64,
    pub y: f64,
}

/// Current state of a live session. `seq` counts accepted actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub seq: u64,
    pub observation: WireObservation,
}

/// `seq`, when present, must equal the session's count of accepted actions;
/// a stale or repeated submission is rejected instead of applied twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    #[serde(default)]
    pub seq: Option<u64>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ActionResponse {
    Continue(SessionView),
    Finished(WireResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub session_id: String,
    pub seq: u64,
    pub trajectory: Trajectory,
    pub metrics: TaskResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskListing {
    pub env_id: String,
    pub task_id: String,
    pub instruction: String,
    pub start_viewpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
