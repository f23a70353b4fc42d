//! Small dense numerical kernel with reverse-mode gradients.

pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    bilstm_encode, lstm_encode, lstm_step, mlp2, positional_encoding, softmax, BiLstm, BiLstmOutput,
    Embedding, Linear, LstmParams, MlpParams,
};
pub use params::{Checkpoint, Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor2;
