//! Toy decoder-only transformer used as the frozen base model.
//!
//! Layout per block (pre-norm, Llama family):
//!
//! ```text
//! h  = rmsnorm(x) * g_attn
//! x += Wo · attention(Wq h, Wk h, Wv h)        causal, n_heads heads
//! h  = rmsnorm(x) * g_mlp
//! x += Wdown · (silu(Wgate h) ⊙ Wup h)
//! ```
//!
//! Positions use learned absolute embeddings added to the token embeddings.
//! The output head is untied from the token embedding. All linear maps are
//! bias-free and stored as `out × in` matrices, so `y = W x`.

mod forward;
mod loss;
mod optim;
mod params;
mod pretrain;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

pub use forward::{ForwardCache, GradTarget};
pub use loss::{
    document_nll, lm_loss, lm_loss_grad, log_softmax_rows, perplexity, windows, IGNORE_INDEX,
};
pub use optim::{clip_grad_norm, cosine_lr, AdamW, AdamWParams};
pub use params::{BaseModel, BaseParams, BlockParams, PROJECTIONS};
pub use pretrain::{accumulate_gradient, batch_gradient, predicted_tokens, pretrain_base, PretrainConfig};

use crate::corpus::VOCAB_SIZE;
use crate::error::{Error, Result};

/// Float type the model can run in. Checkpoints are always f32; f64 exists
/// for gradient checking.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub mlp_hidden: usize,
    pub rms_norm_eps: f64,
    pub init_seed: u64,
}

impl Default for BaseModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            context_len: 128,
            mlp_hidden: 256,
            rms_norm_eps: 1e-5,
            init_seed: 0,
        }
    }
}

impl BaseModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab_size,
            self.d_model,
            self.n_layers,
            self.n_heads,
            self.context_len,
            self.mlp_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("model dimensions must be >= 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.rms_norm_eps > 0.0) {
            return Err(Error::InvalidConfig("rms_norm_eps must be > 0".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
