//! Co-grounding navigator: instruction encoder, textual and visual
//! attention, context LSTM, action scoring and progress monitor.

use super::config::START_ACTION;
use super::fusion::{fuse, CandidateInput, LabelCache};
use super::model::NavPointParams;
use crate::neural::{lstm_encode, lstm_step, positional_encoding, Tape, Tensor2, Var};

/// Per-token instruction LSTM states as an `L x d_text` matrix.
pub fn encode_instruction(tape: &mut Tape, p: &NavPointParams, tokens: &[usize]) -> Var {
    assert!(!tokens.is_empty(), "instruction must have at least one token");
    let s = &p.store;
    let emb: Vec<Var> = tokens
        .iter()
        .map(|&t| p.nav.inst_emb.lookup(tape, s, t))
        .collect();
    let states = lstm_encode(tape, s, &p.nav.inst_lstm, &emb);
    tape.stack_rows(&states)
}

/// `X + P` with the sinusoidal table `P`.
pub fn add_positional(tape: &mut Tape, x: Var) -> Var {
    let (l, d) = tape.value(x).shape();
    let pe = tape.constant(positional_encoding(l, d));
    tape.add(x, pe)
}

#[derive(Debug, Clone, Copy)]
pub struct CoGround {
    pub alpha: Var,
    pub beta: Var,
    pub x_hat: Var,
    pub v_hat: Var,
    /// `g(V')`, one row per candidate.
    pub g: Var,
}

/// Textual and visual attention driven by the previous context `h_prev`.
/// `pe_x` is `L x d_text`, `v_prime` is `K x d_fused`.
pub fn co_ground(tape: &mut Tape, p: &NavPointParams, pe_x: Var, v_prime: Var, h_prev: Var) -> CoGround {
    let s = &p.store;
    let qx = p.nav.w_x.forward(tape, s, h_prev);
    let ax = tape.matmul(pe_x, qx);
    let alpha = tape.softmax(ax);
    let pe_t = tape.transpose(pe_x);
    let x_hat = tape.matmul(pe_t, alpha);

    let k = tape.value(v_prime).rows;
    let rows: Vec<Var> = (0..k)
        .map(|i| {
            let v = tape.row(v_prime, i);
            let z = p.nav.g.forward(tape, s, v);
            tape.tanh(z)
        })
        .collect();
    let g = tape.stack_rows(&rows);
    let qv = p.nav.w_v.forward(tape, s, h_prev);
    let av = tape.matmul(g, qv);
    let beta = tape.softmax(av);
    let vt = tape.transpose(v_prime);
    let v_hat = tape.matmul(vt, beta);
    CoGround { alpha, beta, x_hat, v_hat, g }
}

/// LSTM over `[x_hat, v_hat, a_prev]`.
pub fn context_update(
    tape: &mut Tape,
    p: &NavPointParams,
    cg: &CoGround,
    prev_action: usize,
    h: Var,
    c: Var,
) -> (Var, Var) {
    let a = p.nav.action_emb.lookup(tape, &p.store, prev_action);
    let input = tape.concat(&[cg.x_hat, cg.v_hat, a]);
    lstm_step(tape, &p.store, &p.nav.ctx_lstm, input, h, c)
}

/// `l_k = (W_a [h, x_hat])^T g(v'_k)` for every candidate.
pub fn action_logits(tape: &mut Tape, p: &NavPointParams, h: Var, x_hat: Var, g: Var) -> Var {
    let hx = tape.concat(&[h, x_hat]);
    let u = p.nav.w_a.forward(tape, &p.store, hx);
    tape.matmul(g, u)
}

pub fn progress_monitor(tape: &mut Tape, p: &NavPointParams, h: Var, x_hat: Var) -> Var {
    let hx = tape.concat(&[h, x_hat]);
    let z = p.nav.progress.forward(tape, &p.store, hx);
    tape.sigmoid(z)
}

/// Progress target `clamp((d0 - dt) / d0, 0, 1)`; a zero-length route counts
/// as complete.
pub fn progress_target(d0: f64, dt: f64) -> f64 {
    if d0 <= 0.0 {
        return 1.0;
    }
    ((d0 - dt) / d0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct NavStepOut {
    pub h: Var,
    pub c: Var,
    pub logits: Var,
    pub progress: Var,
    pub co: CoGround,
}

/// One decision over `cands` (index 0 is stop).
#[allow(clippy::too_many_arguments)]
pub fn nav_step(
    tape: &mut Tape,
    p: &NavPointParams,
    pe_x: Var,
    cands: &[CandidateInput],
    prev_action: usize,
    h: Var,
    c: Var,
    cache: &mut LabelCache,
) -> NavStepOut {
    let fused: Vec<Var> = cands.iter().map(|ci| fuse(tape, p, ci, cache)).collect();
    let v_prime = tape.stack_rows(&fused);
    let co = co_ground(tape, p, pe_x, v_prime, h);
    let (h, c) = context_update(tape, p, &co, prev_action, h, c);
    let logits = action_logits(tape, p, h, co.x_hat, co.g);
    let progress = progress_monitor(tape, p, h, co.x_hat);
    NavStepOut { h, c, logits, progress, co }
}

/// Context carried between steps, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct NavContext {
    pub h: Tensor2,
    pub c: Tensor2,
    pub prev_action: usize,
    pub step: usize,
}

impl NavContext {
    pub fn start(p: &NavPointParams) -> Self {
        NavContext {
            h: Tensor2::zeros(p.config.d_hidden, 1),
            c: Tensor2::zeros(p.config.d_hidden, 1),
            prev_action: START_ACTION,
            step: 0,
        }
    }
}
