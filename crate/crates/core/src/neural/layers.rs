use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor2;

/// Numerically stable softmax of a plain vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Sinusoidal table `P` with `P[pos, 2i] = sin(pos / 10000^(2i/d))` and
/// `P[pos, 2i+1] = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor2 {
    let mut p = Tensor2::zeros(len, d);
    for pos in 0..len {
        for j in 0..d {
            let i2 = (j - j % 2) as f64;
            let angle = pos as f64 / 10000f64.powf(i2 / d as f64);
            p.set(pos, j, if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    p
}

/// `y = W x (+ b)`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.register_glorot(format!("{name}.w"), output, input, rng);
        let b = bias.then(|| store.register(format!("{name}.b"), Tensor2::zeros(output, 1)));
        Linear { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let y = tape.matmul(w, x);
        match self.b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add(y, b)
            }
            None => y,
        }
    }
}

/// Lookup table, one row per token.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let data = (0..vocab * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let table = store.register(format!("{name}.table"), Tensor2::new(vocab, dim, data));
        Embedding { table, dim }
    }

    pub fn lookup(&self, tape: &mut Tape, store: &ParamStore, token: usize) -> Var {
        let t = tape.param(store, self.table);
        tape.row(t, token)
    }
}

/// Standard LSTM cell. Gate rows are stacked as input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_x = store.register_glorot(format!("{name}.w_x"), 4 * hidden, input, rng);
        let w_h = store.register_glorot(format!("{name}.w_h"), 4 * hidden, hidden, rng);
        let mut bias = Tensor2::zeros(4 * hidden, 1);
        for j in hidden..2 * hidden {
            bias.data[j] = 1.0;
        }
        let b = store.register(format!("{name}.b"), bias);
        LstmParams { w_x, w_h, b, input, hidden }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (Var, Var) {
        let h = tape.constant(Tensor2::zeros(self.hidden, 1));
        let c = tape.constant(Tensor2::zeros(self.hidden, 1));
        (h, c)
    }
}

pub fn lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    p: &LstmParams,
    x: Var,
    h: Var,
    c: Var,
) -> (Var, Var) {
    let n = p.hidden;
    let wx = tape.param(store, p.w_x);
    let wh = tape.param(store, p.w_h);
    let b = tape.param(store, p.b);
    let zx = tape.matmul(wx, x);
    let zh = tape.matmul(wh, h);
    let z = tape.add(zx, zh);
    let z = tape.add(z, b);
    let zi = tape.slice(z, 0, n);
    let zf = tape.slice(z, n, n);
    let zg = tape.slice(z, 2 * n, n);
    let zo = tape.slice(z, 3 * n, n);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c2 = tape.add(fc, ig);
    let tc = tape.tanh(c2);
    let h2 = tape.mul(o, tc);
    (h2, c2)
}

/// Runs a unidirectional LSTM from the zero state; returns every hidden state.
pub fn lstm_encode(tape: &mut Tape, store: &ParamStore, p: &LstmParams, seq: &[Var]) -> Vec<Var> {
    let (mut h, mut c) = p.zero_state(tape);
    let mut out = Vec::with_capacity(seq.len());
    for &x in seq {
        (h, c) = lstm_step(tape, store, p, x, h, c);
        out.push(h);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            fwd: LstmParams::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: LstmParams::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// `[forward_t; backward_t]` for every token.
    pub states: Vec<Var>,
    /// Final state of the backward pass (it ends on the first token).
    pub h_first: Var,
    /// Final state of the forward pass (it ends on the last token).
    pub h_last: Var,
}

pub fn bilstm_encode(tape: &mut Tape, store: &ParamStore, p: &BiLstm, seq: &[Var]) -> BiLstmOutput {
    assert!(!seq.is_empty(), "bilstm_encode needs at least one token");
    let fwd = lstm_encode(tape, store, &p.fwd, seq);
    let rev: Vec<Var> = seq.iter().rev().copied().collect();
    let mut bwd = lstm_encode(tape, store, &p.bwd, &rev);
    bwd.reverse();
    let states = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect();
    BiLstmOutput {
        states,
        h_first: bwd[0],
        h_last: *fwd.last().unwrap(),
    }
}

/// linear -> ReLU -> linear.
#[derive(Debug, Clone, Copy)]
pub struct MlpParams {
    pub l1: Linear,
    pub l2: Linear,
}

impl MlpParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        MlpParams {
            l1: Linear::new(store, &format!("{name}.l1"), input, hidden, true, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, output, true, rng),
        }
    }
}

pub fn mlp2(tape: &mut Tape, store: &ParamStore, p: &MlpParams, x: Var) -> Var {
    let h = p.l1.forward(tape, store, x);
    let h = tape.relu(h);
    p.l2.forward(tape, store, h)
}
