use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objects fused into each candidate view.
pub const TOP_K: usize = 3;
/// Location feature: own 5-d layout plus up to five same-category neighbors.
pub const LOC_NEIGHBORS: usize = 5;
pub const LOC_DIM: usize = 5 + 5 * LOC_NEIGHBORS;
/// Relationship context: up to five nearest objects of any category.
pub const REL_NEIGHBORS: usize = 5;
/// Twelve heading buckets of the previous move, plus the episode start.
pub const ACTION_VOCAB: usize = 13;
pub const START_ACTION: usize = 12;

/// Model dimensions and loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPointConfig {
    pub d_word: usize,
    pub d_text: usize,
    pub d_hidden: usize,
    pub d_visual_base: usize,
    pub d_label_word: usize,
    /// Output of the label bi-LSTM (twice its hidden size).
    pub d_label: usize,
    pub d_obj: usize,
    pub d_g: usize,
    pub d_action: usize,
    pub ptr_d_word: usize,
    pub ptr_hidden: usize,
    pub ptr_d_f: usize,
    pub grid: usize,
    pub margin: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Zero every visual input of the navigator (language-only ablation).
    pub lan_only: bool,
    pub init_seed: u64,
}

impl NavPointConfig {
    /// Small dimensions that train in minutes on a laptop.
    pub fn desk() -> Self {
        NavPointConfig {
            d_word: 16,
            d_text: 32,
            d_hidden: 32,
            d_visual_base: 32,
            d_label_word: 16,
            d_label: 16,
            d_obj: 16,
            d_g: 32,
            d_action: 8,
            ptr_d_word: 16,
            ptr_hidden: 16,
            ptr_d_f: 16,
            grid: 3,
            margin: 0.1,
            lambda1: 0.5,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            lan_only: false,
            init_seed: 0,
        }
    }

    /// Full-size shapes: 512-d text and a 2176 + 512 + 2048 = 4736-d fused view.
    pub fn full() -> Self {
        NavPointConfig {
            d_word: 300,
            d_text: 512,
            d_hidden: 512,
            d_visual_base: 2176,
            d_label_word: 300,
            d_label: 512,
            d_obj: 2048,
            d_g: 512,
            d_action: 64,
            ptr_d_word: 300,
            ptr_hidden: 256,
            ptr_d_f: 512,
            grid: 14,
            ..Self::desk()
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.d_visual_base + self.d_label + self.d_obj
    }

    /// Width of the pointer's word embeddings `e_j`.
    pub fn ptr_e_dim(&self) -> usize {
        2 * self.ptr_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.d_word,
            self.d_text,
            self.d_hidden,
            self.d_label_word,
            self.d_obj,
            self.d_g,
            self.d_action,
            self.ptr_d_word,
            self.ptr_hidden,
            self.ptr_d_f,
            self.grid,
        ];
        if dims.contains(&0) {
            return Err(Error::Validation("model dimensions must be positive".into()));
        }
        if self.d_visual_base < 8 {
            return Err(Error::Validation("d_visual_base must be at least 8".into()));
        }
        if self.d_label == 0 || !self.d_label.is_multiple_of(2) {
            return Err(Error::Validation("d_label must be a positive even number".into()));
        }
        for (name, v) in [
            ("margin", self.margin),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!("{name} must be finite and >= 0")));
            }
        }
        if self.lambda1 > 1.0 {
            return Err(Error::Validation("lambda1 must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for NavPointConfig {
    fn default() -> Self {
        Self::desk()
    }
}
