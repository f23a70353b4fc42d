use super::data::PointerPair;
use super::fusion::{CandidateInput, LabelCache};
use super::model::NavPointParams;
use super::navigator::{add_positional, encode_instruction, nav_step};
use super::pointer::{pointer_encode, pointer_score, PointerQuery};
use crate::neural::{Tape, Tensor2, Var};

/// One teacher-forced decision with its candidate views already fused-ready.
#[derive(Debug, Clone, PartialEq)]
pub struct NavStepInput {
    pub candidates: Vec<CandidateInput>,
    pub prev_action: usize,
    pub teacher: usize,
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavEpisodeInput {
    pub tokens: Vec<usize>,
    pub steps: Vec<NavStepInput>,
}

/// `-l1 * sum_t log softmax(l_t)[y_t] + (1 - l1) * sum_t (y_pm - p_pm)^2`.
pub fn loss_nav(tape: &mut Tape, p: &NavPointParams, ep: &NavEpisodeInput) -> Var {
    let l1 = p.config.lambda1;
    let x = encode_instruction(tape, p, &ep.tokens);
    let pe_x = add_positional(tape, x);
    let mut h = tape.constant(Tensor2::zeros(p.config.d_hidden, 1));
    let mut c = tape.constant(Tensor2::zeros(p.config.d_hidden, 1));
    let mut cache = LabelCache::default();
    let mut terms = Vec::with_capacity(2 * ep.steps.len());
    for st in &ep.steps {
        let out = nav_step(tape, p, pe_x, &st.candidates, st.prev_action, h, c, &mut cache);
        (h, c) = (out.h, out.c);
        let lp = tape.log_softmax(out.logits);
        let pick = tape.pick(lp, st.teacher);
        terms.push(tape.scale(pick, -l1));
        let diff = tape.add_const(out.progress, -st.progress);
        let sq = tape.square(diff);
        terms.push(tape.scale(sq, 1.0 - l1));
    }
    if terms.is_empty() {
        return tape.constant(Tensor2::scalar(0.0));
    }
    tape.sum_all(&terms)
}

fn hinge(tape: &mut Tape, margin: f64, neg: Var, pos: Var) -> Var {
    let d = tape.sub(neg, pos);
    let d = tape.add_const(d, margin);
    tape.relu(d)
}

/// Ranking loss over expression and object negatives; missing negatives
/// drop their term.
pub fn loss_exp(tape: &mut Tape, p: &NavPointParams, pairs: &[PointerPair]) -> Var {
    let cfg = &p.config;
    let mut terms = Vec::new();
    for pair in pairs {
        let q: PointerQuery = pointer_encode(tape, p, &pair.tokens);
        let pos = pointer_score(tape, p, &q, &pair.target).total;
        if let Some(neg_tokens) = &pair.neg_tokens {
            let qn = pointer_encode(tape, p, neg_tokens);
            let neg = pointer_score(tape, p, &qn, &pair.target).total;
            let h = hinge(tape, cfg.margin, neg, pos);
            terms.push(tape.scale(h, cfg.lambda2));
        }
        if let Some(neg_obj) = &pair.neg_object {
            let neg = pointer_score(tape, p, &q, neg_obj).total;
            let h = hinge(tape, cfg.margin, neg, pos);
            terms.push(tape.scale(h, cfg.lambda3));
        }
    }
    if terms.is_empty() {
        return tape.constant(Tensor2::scalar(0.0));
    }
    tape.sum_all(&terms)
}

pub fn loss_total(tape: &mut Tape, p: &NavPointParams, ep: &NavEpisodeInput, pairs: &[PointerPair]) -> Var {
    let nav = loss_nav(tape, p, ep);
    let exp = loss_exp(tape, p, pairs);
    let exp = tape.scale(exp, p.config.lambda4);
    tape.add(nav, exp)
}
