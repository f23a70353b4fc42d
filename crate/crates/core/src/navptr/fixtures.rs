//! Small hand-built model inputs, independent of any simulator. Used for
//! gradient checks and for unit tests of the loss and attention code.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{NavPointConfig, LOC_DIM, START_ACTION, TOP_K};
use super::data::PointerPair;
use super::fusion::candidate_input;
use super::loss::{NavEpisodeInput, NavStepInput};
use super::model::NavPointParams;
use super::pointer::{ObjectCandidate, SharedCandidate};
use crate::neural::Tensor2;
use crate::seed::Mixer;
use crate::vocab::tokenize;

/// Tiny dimensions; every tensor has only a handful of entries.
pub fn toy_config() -> NavPointConfig {
    NavPointConfig {
        d_word: 4,
        d_text: 5,
        d_hidden: 5,
        d_visual_base: 8,
        d_label_word: 3,
        d_label: 4,
        d_obj: 3,
        d_g: 4,
        d_action: 2,
        ptr_d_word: 3,
        ptr_hidden: 3,
        ptr_d_f: 4,
        grid: 2,
        ..NavPointConfig::desk()
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// An object with random features. `n_rel` relationship neighbors.
pub fn toy_object(p: &NavPointParams, id: &str, label: &str, n_rel: usize, rng: &mut ChaCha8Rng) -> ObjectCandidate {
    let c = &p.config;
    let cells = Tensor2::new(c.grid * c.grid, c.d_obj, uniform(rng, c.grid * c.grid * c.d_obj));
    let mut mean_cell = vec![0.0; c.d_obj];
    for r in 0..cells.rows {
        for (m, v) in mean_cell.iter_mut().zip(cells.row(r)) {
            *m += v / cells.rows as f64;
        }
    }
    ObjectCandidate {
        object: id.to_string(),
        label_tokens: p.vocab.encode(&tokenize(label)),
        cells,
        mean_cell,
        loc: uniform(rng, LOC_DIM),
        rel: (0..n_rel).map(|_| uniform(rng, c.d_obj + 5)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ToyEpisode {
    pub objects: Vec<SharedCandidate>,
    pub episode: NavEpisodeInput,
    pub pairs: Vec<PointerPair>,
}

/// Two teacher-forced steps over three candidate views each (stop plus two
/// moves), four objects, and one ranking pair with both negatives.
pub fn toy_episode(p: &NavPointParams, seed: u64) -> ToyEpisode {
    let mut rng = Mixer::new("toy-episode").u64(seed).rng();
    let labels = ["red chair", "blue lamp", "wooden table", "small vase"];
    let objects: Vec<SharedCandidate> = labels
        .iter()
        .enumerate()
        // at least one neighbor each: the empty-context branch feeds zeros into
        // a relu with zero-initialized bias, which sits exactly on its kink
        .map(|(i, l)| Arc::new(toy_object(p, &format!("o{i}"), l, 1 + i % 3, &mut rng)))
        .collect();
    let tokens = p.vocab.encode(&tokenize("go to the kitchen and find the red chair"));
    let other = p.vocab.encode(&tokenize("find the small vase"));
    let view = |rng: &mut ChaCha8Rng, picks: &[usize]| {
        let objs: Vec<SharedCandidate> = picks.iter().map(|&i| objects[i].clone()).collect();
        let scores = uniform(rng, objs.len());
        let base = uniform(rng, p.config.d_visual_base);
        candidate_input(p, &base, &objs, &scores)
    };
    let steps = vec![
        NavStepInput {
            candidates: vec![view(&mut rng, &[0, 1, 2, 3]), view(&mut rng, &[1, 2]), view(&mut rng, &[3])],
            prev_action: START_ACTION,
            teacher: 1,
            progress: 0.0,
        },
        NavStepInput {
            candidates: vec![view(&mut rng, &[0, 1, 3]), view(&mut rng, &[]), view(&mut rng, &[2, 0])],
            prev_action: 4,
            teacher: 0,
            progress: 1.0,
        },
    ];
    debug_assert!(steps.iter().all(|s| s.candidates.iter().all(|c| c.labels.len() == TOP_K)));
    let pairs = vec![PointerPair {
        tokens: tokens.clone(),
        target: objects[0].clone(),
        neg_tokens: Some(other),
        neg_object: Some(objects[1].clone()),
    }];
    ToyEpisode { objects, episode: NavEpisodeInput { tokens, steps }, pairs }
}
