//! Modular pointer: subject, location and relationship modules scored
//! against phrase embeddings pulled out of the instruction.

use std::sync::Arc;

use super::config::{LOC_DIM, LOC_NEIGHBORS, REL_NEIGHBORS};
use super::model::NavPointParams;
use crate::env::Environment;
use crate::geometry::features::object_feature;
use crate::geometry::{BBox2D, CameraIntrinsics, ProjectedObject};
use crate::neural::{bilstm_encode, mlp2, Tape, Tensor2, Var};
use crate::vocab::tokenize;

pub const SUBJ: usize = 0;
pub const LOC: usize = 1;
pub const REL: usize = 2;

/// Everything the pointer looks at for one object seen in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCandidate {
    pub object: String,
    pub label_tokens: Vec<usize>,
    /// `grid^2 x d_obj` in-box cell features.
    pub cells: Tensor2,
    pub mean_cell: Vec<f64>,
    pub loc: Vec<f64>,
    /// `[mean cell of neighbor, 5-d offset]` for up to five nearest objects.
    pub rel: Vec<Vec<f64>>,
}

const OFFSET_CLAMP: f64 = 4.0;

fn layout(b: &BBox2D, intr: &CameraIntrinsics) -> [f64; 5] {
    let (w, h) = (intr.width, intr.height);
    [b.x / w, b.y / h, b.right() / w, b.bottom() / h, b.area() / (w * h)]
}

fn offset(own: &BBox2D, other: &BBox2D) -> [f64; 5] {
    let (cx, cy) = own.center();
    let w = own.w.max(1.0);
    let h = own.h.max(1.0);
    let c = |v: f64| v.clamp(-OFFSET_CLAMP, OFFSET_CLAMP);
    [
        c((other.x - cx) / w),
        c((other.y - cy) / h),
        c((other.right() - cx) / w),
        c((other.bottom() - cy) / h),
        c(other.area() / (w * h)),
    ]
}

fn center_distance(a: &BBox2D, b: &BBox2D) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Candidates for every object of one view; location and relationship
/// context come from the other objects in that same view.
pub fn build_view_candidates(
    env: &Environment,
    view: &[ProjectedObject],
    intr: &CameraIntrinsics,
    params: &NavPointParams,
) -> Vec<ObjectCandidate> {
    let cfg = &params.config;
    let cells: Vec<Tensor2> = view
        .iter()
        .map(|p| Tensor2::from_rows(&object_feature(env, &p.object, p, cfg.grid, cfg.d_obj)))
        .collect();
    let means: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| {
            let mut m = vec![0.0; c.cols];
            for r in 0..c.rows {
                for (a, b) in m.iter_mut().zip(c.row(r)) {
                    *a += b / c.rows as f64;
                }
            }
            m
        })
        .collect();
    let category = |id: &str| env.object(id).map(|o| o.category.as_str()).unwrap_or("");

    view.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut others: Vec<usize> = (0..view.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                center_distance(&p.bbox, &view[a].bbox)
                    .total_cmp(&center_distance(&p.bbox, &view[b].bbox))
                    .then_with(|| view[a].object.cmp(&view[b].object))
            });
            let mut loc = layout(&p.bbox, intr).to_vec();
            let cat = category(&p.object);
            for &j in others
                .iter()
                .filter(|&&j| category(&view[j].object) == cat)
                .take(LOC_NEIGHBORS)
            {
                loc.extend(offset(&p.bbox, &view[j].bbox));
            }
            loc.resize(LOC_DIM, 0.0);
            let rel = others
                .iter()
                .take(REL_NEIGHBORS)
                .map(|&j| {
                    let mut r = means[j].clone();
                    r.extend(offset(&p.bbox, &view[j].bbox));
                    r
                })
                .collect();
            let label = env.object(&p.object).map(|o| o.label.as_str()).unwrap_or("");
            ObjectCandidate {
                object: p.object.clone(),
                label_tokens: params.vocab.encode(&tokenize(label)),
                cells: cells[i].clone(),
                mean_cell: means[i].clone(),
                loc,
                rel,
            }
        })
        .collect()
}

/// Phrase embeddings and module weights for one expression.
#[derive(Debug, Clone)]
pub struct PointerQuery {
    /// `L x E` word embeddings.
    pub e: Var,
    /// Per-module word attention, each `L x 1`.
    pub attn: [Var; 3],
    /// Per-module phrase embedding, each `E x 1`.
    pub q: [Var; 3],
    /// Module weights, `3 x 1`.
    pub w: Var,
}

pub fn pointer_encode(tape: &mut Tape, p: &NavPointParams, tokens: &[usize]) -> PointerQuery {
    assert!(!tokens.is_empty(), "expression must have at least one token");
    let s = &p.store;
    let emb: Vec<Var> = tokens
        .iter()
        .map(|&t| p.ptr.word_emb.lookup(tape, s, t))
        .collect();
    let enc = bilstm_encode(tape, s, &p.ptr.bilstm, &emb);
    let e = tape.stack_rows(&enc.states);
    let et = tape.transpose(e);
    let mut attn = Vec::with_capacity(3);
    let mut q = Vec::with_capacity(3);
    for m in 0..3 {
        let wm = tape.param(s, p.ptr.attn[m].w);
        let wmt = tape.transpose(wm);
        let scores = tape.matmul(e, wmt);
        let a = tape.softmax(scores);
        q.push(tape.matmul(et, a));
        attn.push(a);
    }
    let ends = tape.concat(&[enc.h_first, enc.h_last]);
    let logits = p.ptr.module_weights.forward(tape, s, ends);
    let w = tape.softmax(logits);
    PointerQuery {
        e,
        attn: [attn[0], attn[1], attn[2]],
        q: [q[0], q[1], q[2]],
        w,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointerScore {
    pub total: Var,
    pub modules: [Var; 3],
}

/// `F_m(v, q) = mlp2(P_m v * q)`.
fn module_f(tape: &mut Tape, p: &NavPointParams, m: usize, v: Var, q: Var) -> Var {
    let pv = p.ptr.proj[m].forward(tape, &p.store, v);
    let x = tape.mul(pv, q);
    mlp2(tape, &p.store, &p.ptr.f[m], x)
}

pub fn pointer_score(
    tape: &mut Tape,
    p: &NavPointParams,
    query: &PointerQuery,
    cand: &ObjectCandidate,
) -> PointerScore {
    let s = &p.store;

    let cells = tape.constant(cand.cells.clone());
    let wc = tape.param(s, p.ptr.subj_cell.w);
    let wct = tape.transpose(wc);
    let keys = tape.matmul(cells, wct);
    let att = tape.matmul(keys, query.q[SUBJ]);
    let att = tape.softmax(att);
    let cells_t = tape.transpose(cells);
    let v_subj = tape.matmul(cells_t, att);
    let s_subj = module_f(tape, p, SUBJ, v_subj, query.q[SUBJ]);

    let loc = tape.column(cand.loc.clone());
    let s_loc = module_f(tape, p, LOC, loc, query.q[LOC]);

    let s_rel = if cand.rel.is_empty() {
        let zero = tape.constant(Tensor2::zeros(p.config.ptr_e_dim(), 1));
        mlp2(tape, s, &p.ptr.f[REL], zero)
    } else {
        let per: Vec<Var> = cand
            .rel
            .iter()
            .map(|r| {
                let r = tape.column(r.clone());
                module_f(tape, p, REL, r, query.q[REL])
            })
            .collect();
        tape.max_of(&per)
    };

    let stacked = tape.concat(&[s_subj, s_loc, s_rel]);
    let wt = tape.transpose(query.w);
    let total = tape.matmul(wt, stacked);
    PointerScore { total, modules: [s_subj, s_loc, s_rel] }
}

/// Pointer scores of every candidate, forward only.
pub fn rank_candidates(p: &NavPointParams, tokens: &[usize], cands: &[impl AsRef<ObjectCandidate>]) -> Vec<f64> {
    if cands.is_empty() {
        return Vec::new();
    }
    let mut tape = Tape::new();
    let q = pointer_encode(&mut tape, p, tokens);
    score_values(&mut tape, p, &q, cands)
}

/// Scores under an already encoded query.
pub fn score_values(
    tape: &mut Tape,
    p: &NavPointParams,
    q: &PointerQuery,
    cands: &[impl AsRef<ObjectCandidate>],
) -> Vec<f64> {
    cands
        .iter()
        .map(|c| {
            let sc = pointer_score(tape, p, q, c.as_ref());
            tape.scalar(sc.total)
        })
        .collect()
}

/// Index of the best-scoring candidate; ties go to the smaller object id.
pub fn argmax_candidate(cands: &[impl AsRef<ObjectCandidate>], scores: &[f64]) -> Option<usize> {
    (0..cands.len()).max_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then_with(|| cands[b].as_ref().object.cmp(&cands[a].as_ref().object))
    })
}

impl AsRef<ObjectCandidate> for ObjectCandidate {
    fn as_ref(&self) -> &ObjectCandidate {
        self
    }
}

/// Shared handle used by caches.
pub type SharedCandidate = Arc<ObjectCandidate>;
