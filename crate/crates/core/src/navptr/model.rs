use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{NavPointConfig, ACTION_VOCAB, LOC_DIM};
use crate::error::{Error, Result};
use crate::neural::{BiLstm, Checkpoint, Embedding, Linear, LstmParams, MlpParams, ParamStore};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone)]
pub struct NavigatorParams {
    pub inst_emb: Embedding,
    pub inst_lstm: LstmParams,
    pub w_x: Linear,
    /// One-layer MLP `g`, shared by visual attention and action scoring.
    pub g: Linear,
    pub w_v: Linear,
    pub ctx_lstm: LstmParams,
    pub w_a: Linear,
    pub progress: Linear,
    pub action_emb: Embedding,
}

#[derive(Debug, Clone)]
pub struct PointerParams {
    pub word_emb: Embedding,
    pub bilstm: BiLstm,
    /// Per-module word attention scorers (subject, location, relationship).
    pub attn: [Linear; 3],
    pub module_weights: Linear,
    pub subj_cell: Linear,
    pub proj: [Linear; 3],
    pub f: [MlpParams; 3],
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub label_emb: Embedding,
    pub label_lstm: BiLstm,
}

/// Every learnable tensor of the navigator, pointer and fusion encoder, held
/// in one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct NavPointParams {
    pub config: NavPointConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub nav: NavigatorParams,
    pub ptr: PointerParams,
    pub fuse: FusionParams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: NavPointConfig,
    checkpoint: Checkpoint,
}

impl NavPointParams {
    pub fn new(config: NavPointConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::standard();
        let v = vocab.len();
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut s = ParamStore::new();
        let r = &mut rng;

        let nav = NavigatorParams {
            inst_emb: Embedding::new(&mut s, "nav.inst_emb", v, c.d_word, r),
            inst_lstm: LstmParams::new(&mut s, "nav.inst_lstm", c.d_word, c.d_text, r),
            w_x: Linear::new(&mut s, "nav.w_x", c.d_hidden, c.d_text, false, r),
            g: Linear::new(&mut s, "nav.g", c.fused_dim(), c.d_g, true, r),
            w_v: Linear::new(&mut s, "nav.w_v", c.d_hidden, c.d_g, false, r),
            ctx_lstm: LstmParams::new(
                &mut s,
                "nav.ctx_lstm",
                c.d_text + c.fused_dim() + c.d_action,
                c.d_hidden,
                r,
            ),
            w_a: Linear::new(&mut s, "nav.w_a", c.d_hidden + c.d_text, c.d_g, false, r),
            progress: Linear::new(&mut s, "nav.progress", c.d_hidden + c.d_text, 1, true, r),
            action_emb: Embedding::new(&mut s, "nav.action_emb", ACTION_VOCAB, c.d_action, r),
        };

        let e = c.ptr_e_dim();
        let ptr = PointerParams {
            word_emb: Embedding::new(&mut s, "ptr.word_emb", v, c.ptr_d_word, r),
            bilstm: BiLstm::new(&mut s, "ptr.bilstm", c.ptr_d_word, c.ptr_hidden, r),
            attn: [
                Linear::new(&mut s, "ptr.attn_subj", e, 1, false, r),
                Linear::new(&mut s, "ptr.attn_loc", e, 1, false, r),
                Linear::new(&mut s, "ptr.attn_rel", e, 1, false, r),
            ],
            module_weights: Linear::new(&mut s, "ptr.module_weights", e, 3, true, r),
            subj_cell: Linear::new(&mut s, "ptr.subj_cell", c.d_obj, e, false, r),
            proj: [
                Linear::new(&mut s, "ptr.proj_subj", c.d_obj, e, true, r),
                Linear::new(&mut s, "ptr.proj_loc", LOC_DIM, e, true, r),
                Linear::new(&mut s, "ptr.proj_rel", c.d_obj + 5, e, true, r),
            ],
            f: [
                MlpParams::new(&mut s, "ptr.f_subj", e, c.ptr_d_f, 1, r),
                MlpParams::new(&mut s, "ptr.f_loc", e, c.ptr_d_f, 1, r),
                MlpParams::new(&mut s, "ptr.f_rel", e, c.ptr_d_f, 1, r),
            ],
        };

        let fuse = FusionParams {
            label_emb: Embedding::new(&mut s, "fuse.label_emb", v, c.d_label_word, r),
            label_lstm: BiLstm::new(&mut s, "fuse.label_lstm", c.d_label_word, c.d_label / 2, r),
        };

        Ok(NavPointParams { config, vocab, store: s, nav, ptr, fuse })
    }

    /// Writes config and every tensor as one JSON document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            config: self.config.clone(),
            checkpoint: self.store.to_checkpoint(),
        };
        let text = serde_json::to_string(&file).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut params = NavPointParams::new(file.config)?;
        params.store.load_checkpoint(&file.checkpoint)?;
        Ok(params)
    }
}
