//! Interaction fusion: each candidate view is augmented with the labels and
//! mean visual feature of its top-ranked objects.

use std::collections::HashMap;

use super::config::TOP_K;
use super::model::NavPointParams;
use super::pointer::SharedCandidate;
use crate::neural::{bilstm_encode, Tape, Tensor2, Var};

/// Navigator input for one candidate view, before the label encoder runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInput {
    pub base: Vec<f64>,
    /// Label tokens of the selected objects, padded with the NULL label.
    pub labels: Vec<Vec<usize>>,
    /// Mean of the selected objects' mean cell features; padding counts as zero.
    pub obj_visual: Vec<f64>,
}

/// Indices of up to three best-scoring objects, ties by object id.
pub fn select_top(cands: &[SharedCandidate], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| cands[a].object.cmp(&cands[b].object))
    });
    idx.truncate(TOP_K);
    idx
}

pub fn candidate_input(
    p: &NavPointParams,
    base: &[f64],
    cands: &[SharedCandidate],
    scores: &[f64],
) -> CandidateInput {
    let cfg = &p.config;
    let null = vec![p.vocab.null_id()];
    if cfg.lan_only {
        return CandidateInput {
            base: vec![0.0; cfg.d_visual_base],
            labels: vec![null; TOP_K],
            obj_visual: vec![0.0; cfg.d_obj],
        };
    }
    let top = select_top(cands, scores);
    let mut labels: Vec<Vec<usize>> = top.iter().map(|&i| cands[i].label_tokens.clone()).collect();
    labels.resize(TOP_K, null);
    let mut obj_visual = vec![0.0; cfg.d_obj];
    for &i in &top {
        for (o, v) in obj_visual.iter_mut().zip(&cands[i].mean_cell) {
            *o += v / TOP_K as f64;
        }
    }
    assert_eq!(base.len(), cfg.d_visual_base, "view feature width does not match the model");
    CandidateInput { base: base.to_vec(), labels, obj_visual }
}

/// Memoizes label encodings on one tape; the same triples recur across
/// neighboring candidate views.
#[derive(Debug, Default)]
pub struct LabelCache {
    encoded: HashMap<Vec<Vec<usize>>, Var>,
}

fn encode_labels(tape: &mut Tape, p: &NavPointParams, labels: &[Vec<usize>]) -> Var {
    let s = &p.store;
    let seq: Vec<Var> = labels
        .iter()
        .map(|toks| {
            let rows: Vec<Var> = toks.iter().map(|&t| p.fuse.label_emb.lookup(tape, s, t)).collect();
            let sum = tape.sum_all(&rows);
            tape.scale(sum, 1.0 / rows.len() as f64)
        })
        .collect();
    let enc = bilstm_encode(tape, s, &p.fuse.label_lstm, &seq);
    tape.concat(&[enc.h_last, enc.h_first])
}

/// Fused feature `[v_base, label encoding, object visual]` as a column.
/// Under the language-only ablation the whole fused vector is zero.
pub fn fuse(tape: &mut Tape, p: &NavPointParams, c: &CandidateInput, cache: &mut LabelCache) -> Var {
    if p.config.lan_only {
        return tape.constant(Tensor2::zeros(p.config.fused_dim(), 1));
    }
    let labels = match cache.encoded.get(&c.labels) {
        Some(&v) => v,
        None => {
            let v = encode_labels(tape, p, &c.labels);
            cache.encoded.insert(c.labels.clone(), v);
            v
        }
    };
    let base = tape.constant(Tensor2::column(c.base.clone()));
    let obj = tape.constant(Tensor2::column(c.obj_visual.clone()));
    tape.concat(&[base, labels, obj])
}
