//! Deterministic pseudo-visual features standing in for CNN activations.
//!
//! Category and attribute embeddings depend only on their names, so features
//! carry the same meaning across worlds; view and object identity add a
//! world-specific hashed component.

use crate::env::Environment;
use crate::seed::{scaled_vector, Mixer};

use super::{visible_objects_within, CameraIntrinsics, ProjectedObject, ViewState};

/// Objects up to this far away contribute to a view's appearance, even
/// though only those within 3 m are annotated as candidates.
pub const FEATURE_SIGHT_RADIUS: f64 = 10.0;

const POSITIONAL_NORM: f64 = 0.55;
const BAG_NORM: f64 = 1.1;
const ATTRIBUTE_WEIGHT: f64 = 0.5;
const IDENTITY_WEIGHT: f64 = 0.2;
const CELL_NOISE: f64 = 0.3;

pub fn category_embedding(category: &str, dim: usize) -> Vec<f64> {
    scaled_vector(Mixer::new("category").str(category).u64(dim as u64), dim, 1.0)
}

fn attribute_embedding(attribute: &str, dim: usize) -> Vec<f64> {
    scaled_vector(Mixer::new("attribute").str(attribute).u64(dim as u64), dim, 1.0)
}

/// The label with its trailing category word(s) removed.
pub fn attribute_of<'a>(label: &'a str, category: &str) -> &'a str {
    label.strip_suffix(category).unwrap_or(label).trim()
}

/// View feature: hashed positional part of norm 0.55 plus an inverse-depth
/// weighted bag of the objects seen in the view (their base embeddings),
/// rescaled to norm 1.1.
/// The total norm therefore lies in [0.55, 1.65].
pub fn view_feature(
    env: &Environment,
    state: &ViewState,
    intr: &CameraIntrinsics,
    dim: usize,
) -> Vec<f64> {
    assert!(dim >= 8, "view features need at least 8 dimensions");
    let mut out = scaled_vector(
        Mixer::new("view")
            .u64(env.feature_seed)
            .str(&state.viewpoint)
            .u64(state.k as u64)
            .u64(dim as u64),
        dim,
        POSITIONAL_NORM,
    );
    let seen = visible_objects_within(env, state, intr, FEATURE_SIGHT_RADIUS);
    let mut bag = vec![0.0; dim];
    for p in &seen {
        let Some(obj) = env.object(&p.object) else { continue };
        let w = 1.0 / p.depth.max(1.0);
        for (b, e) in bag
            .iter_mut()
            .zip(object_base_embedding(&obj.id, &obj.category, &obj.label, dim))
        {
            *b += w * e;
        }
    }
    let n = bag.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for (o, b) in out.iter_mut().zip(&bag) {
            *o += BAG_NORM * b / n;
        }
    }
    out
}

/// Embedding of an object independent of where it is seen from.
pub fn object_base_embedding(id: &str, category: &str, label: &str, dim: usize) -> Vec<f64> {
    let cat = category_embedding(category, dim);
    let attr = attribute_embedding(attribute_of(label, category), dim);
    let ident = scaled_vector(Mixer::new("object").str(id).u64(dim as u64), dim, 1.0);
    cat.iter()
        .zip(&attr)
        .zip(&ident)
        .map(|((c, a), i)| c + ATTRIBUTE_WEIGHT * a + IDENTITY_WEIGHT * i)
        .collect()
}

/// Per-cell features over a `grid x grid` partition of the object's box,
/// row-major. Cells deviate from the base embedding in proportion to their
/// distance from the box center, so a 1x1 grid returns the base embedding.
pub fn object_feature(
    env: &Environment,
    object: &str,
    proj: &ProjectedObject,
    grid: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    assert!(grid >= 1, "grid must be at least 1");
    let (category, label) = env
        .object(object)
        .map(|o| (o.category.as_str(), o.label.as_str()))
        .unwrap_or(("", ""));
    let base = object_base_embedding(object, category, label, dim);
    let mut cells = Vec::with_capacity(grid * grid);
    for row in 0..grid {
        for col in 0..grid {
            let cy = (row as f64 + 0.5) / grid as f64;
            let cx = (col as f64 + 0.5) / grid as f64;
            let r = 2.0 * ((cx - 0.5).powi(2) + (cy - 0.5).powi(2)).sqrt();
            if r == 0.0 {
                cells.push(base.clone());
                continue;
            }
            let noise = scaled_vector(
                Mixer::new("cell")
                    .str(object)
                    .str(category)
                    .u64(proj.view.k as u64)
                    .f64(cx)
                    .f64(cy)
                    .u64(dim as u64),
                dim,
                1.0,
            );
            cells.push(
                base.iter()
                    .zip(&noise)
                    .map(|(b, n)| b + CELL_NOISE * r * n)
                    .collect(),
            );
        }
    }
    cells
}
