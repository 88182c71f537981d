//! Transformer encoder stack with per-head projections and head gates.
//!
//! Every attention head owns its query/key/value projections so a single
//! head's context can be retained, replaced, or zeroed without touching its
//! siblings. Sublayers use residual connections followed by row
//! standardization with a learned affine (post-norm).

use alloc::vec::Vec;

use crate::graph::{Graph, TensorId};
use crate::model::{Dropout, ModelError};

/// Variance floor inside row standardization.
pub const NORM_EPS: f64 = 1e-5;

/// Additive attention penalty for padded key positions. Large enough that
/// the stabilized softmax underflows those columns to exactly zero.
pub const PAD_PENALTY: f64 = -1e9;

/// Graph ids for one attention head's projections.
#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub wq: TensorId,
    pub bq: TensorId,
    pub wk: TensorId,
    pub bk: TensorId,
    pub wv: TensorId,
    pub bv: TensorId,
}

/// Graph ids for one encoder layer.
#[derive(Debug, Clone)]
pub struct LayerIds {
    pub heads: Vec<HeadIds>,
    pub wo: TensorId,
    pub bo: TensorId,
    pub norm1_gamma: TensorId,
    pub norm1_beta: TensorId,
    pub ffn_w1: TensorId,
    pub ffn_b1: TensorId,
    pub ffn_w2: TensorId,
    pub ffn_b2: TensorId,
    pub norm2_gamma: TensorId,
    pub norm2_beta: TensorId,
}

/// Per-head tensors surfaced by a forward pass, indexed `[layer][head]`.
pub struct EncoderDetail {
    /// Final hidden states, `[seq, d_model]`.
    pub hidden: TensorId,
    /// Pre-gate head contexts, `[seq, d_head]` each.
    pub head_ctx: Vec<Vec<TensorId>>,
    /// Attention weight matrices, `[seq, seq]` each.
    pub attn: Vec<Vec<TensorId>>,
}

/// Replace the context of one head with fixed values during forward.
#[derive(Debug, Clone)]
pub struct HeadOverride {
    pub layer: usize,
    pub head: usize,
    pub values: Vec<f64>,
}

pub struct EncoderOptions<'a> {
    /// Keep gradients on every head context after backward.
    pub retain_heads: bool,
    /// Gate values in `[layer][head]` order; a head multiplied by zero
    /// contributes nothing downstream. Gate 1.0 applies no node at all.
    pub gates: &'a [Vec<f64>],
    pub head_override: Option<&'a HeadOverride>,
}

/// Row standardization followed by a learned per-column gain and shift.
pub fn affine_norm(
    g: &mut Graph,
    x: TensorId,
    gamma: TensorId,
    beta: TensorId,
) -> Result<TensorId, ModelError> {
    let n = g.normalize(x, NORM_EPS)?;
    let scaled = g.mul_bias(n, gamma)?;
    Ok(g.add_bias(scaled, beta)?)
}

fn inv_sqrt(n: usize) -> f64 {
    1.0 / crate::math::sqrt(n as f64)
}

/// Run the encoder stack over `x` (`[seq, d_model]`). `key_mask` holds one
/// additive term per position: 0 for real tokens, [`PAD_PENALTY`] for pads.
pub fn encoder_forward(
    g: &mut Graph,
    layers: &[LayerIds],
    x: TensorId,
    key_mask: &[f64],
    d_head: usize,
    opts: &EncoderOptions<'_>,
    dropout: &mut Dropout<'_>,
) -> Result<EncoderDetail, ModelError> {
    let seq = g.shape(x)[0];
    let mut h = x;
    let mut all_ctx: Vec<Vec<TensorId>> = Vec::with_capacity(layers.len());
    let mut all_attn: Vec<Vec<TensorId>> = Vec::with_capacity(layers.len());
    for (li, layer) in layers.iter().enumerate() {
        let mut merged_parts = Vec::with_capacity(layer.heads.len());
        let mut layer_ctx = Vec::with_capacity(layer.heads.len());
        let mut layer_attn = Vec::with_capacity(layer.heads.len());
        for (hi, head) in layer.heads.iter().enumerate() {
            let q0 = g.matmul(h, head.wq)?;
            let q = g.add_bias(q0, head.bq)?;
            let k0 = g.matmul(h, head.wk)?;
            let k = g.add_bias(k0, head.bk)?;
            let v0 = g.matmul(h, head.wv)?;
            let v = g.add_bias(v0, head.bv)?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scaled = g.scale(scores, inv_sqrt(d_head));
            let attn = g.softmax_rows(scaled, Some(key_mask))?;
            let mut ctx = g.matmul(attn, v)?;
            if let Some(ov) = opts.head_override {
                if ov.layer == li && ov.head == hi {
                    if ov.values.len() != seq * d_head {
                        return Err(ModelError::OverrideShape {
                            expected: seq * d_head,
                            got: ov.values.len(),
                        });
                    }
                    ctx = g.constant(ov.values.clone(), alloc::vec![seq, d_head])?;
                }
            }
            if opts.retain_heads {
                g.retain_grad(ctx);
            }
            let gate = opts.gates[li][hi];
            let gated = if gate == 1.0 { ctx } else { g.scale(ctx, gate) };
            layer_ctx.push(ctx);
            layer_attn.push(attn);
            merged_parts.push(gated);
        }
        let merged = g.concat_cols(&merged_parts)?;
        let proj0 = g.matmul(merged, layer.wo)?;
        let proj1 = g.add_bias(proj0, layer.bo)?;
        let proj = dropout.apply(g, proj1)?;
        let res1 = g.add(h, proj)?;
        let normed1 = affine_norm(g, res1, layer.norm1_gamma, layer.norm1_beta)?;
        let ff0 = g.matmul(normed1, layer.ffn_w1)?;
        let ff1 = g.add_bias(ff0, layer.ffn_b1)?;
        let act = g.gelu(ff1);
        let ff2 = g.matmul(act, layer.ffn_w2)?;
        let ff3 = g.add_bias(ff2, layer.ffn_b2)?;
        let ff = dropout.apply(g, ff3)?;
        let res2 = g.add(normed1, ff)?;
        h = affine_norm(g, res2, layer.norm2_gamma, layer.norm2_beta)?;
        all_ctx.push(layer_ctx);
        all_attn.push(layer_attn);
    }
    Ok(EncoderDetail {
        hidden: h,
        head_ctx: all_ctx,
        attn: all_attn,
    })
}
