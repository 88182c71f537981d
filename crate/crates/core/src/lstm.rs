//! Stacked bidirectional LSTM over a sequence of row tensors.
//!
//! Directions are untied. Each layer consumes the per-position concatenation
//! of the previous layer's forward and backward states; the classifier feature
//! is the final-position forward state next to the first-position backward
//! state of the top layer.

use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{Graph, TensorId};
use crate::model::ModelError;

/// Graph ids for one direction of one LSTM layer: per-gate input and
/// recurrent matrices plus biases, gates ordered input/forget/cell/output.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirIds {
    pub wxi: TensorId,
    pub wxf: TensorId,
    pub wxg: TensorId,
    pub wxo: TensorId,
    pub whi: TensorId,
    pub whf: TensorId,
    pub whg: TensorId,
    pub who: TensorId,
    pub bi: TensorId,
    pub bf: TensorId,
    pub bg: TensorId,
    pub bo: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmLayerIds {
    pub fwd: LstmDirIds,
    pub bwd: LstmDirIds,
}

fn cell(
    g: &mut Graph,
    p: &LstmDirIds,
    x: TensorId,
    h: TensorId,
    c: TensorId,
) -> Result<(TensorId, TensorId), ModelError> {
    let gate = |g: &mut Graph, wx, wh, b| -> Result<TensorId, ModelError> {
        let xa = g.matmul(x, wx)?;
        let ha = g.matmul(h, wh)?;
        let s = g.add(xa, ha)?;
        Ok(g.add_bias(s, b)?)
    };
    let i_pre = gate(g, p.wxi, p.whi, p.bi)?;
    let f_pre = gate(g, p.wxf, p.whf, p.bf)?;
    let g_pre = gate(g, p.wxg, p.whg, p.bg)?;
    let o_pre = gate(g, p.wxo, p.who, p.bo)?;
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let cand = g.tanh(g_pre);
    let o = g.sigmoid(o_pre);
    let fc = g.mul(f, c)?;
    let ig = g.mul(i, cand)?;
    let c_next = g.add(fc, ig)?;
    let ct = g.tanh(c_next);
    let h_next = g.mul(o, ct)?;
    Ok((h_next, c_next))
}

fn run_direction(
    g: &mut Graph,
    p: &LstmDirIds,
    inputs: &[TensorId],
    hidden: usize,
    reverse: bool,
) -> Result<Vec<TensorId>, ModelError> {
    let zeros = alloc::vec![0.0; hidden];
    let mut h = g.constant(zeros.clone(), alloc::vec![1, hidden])?;
    let mut c = g.constant(zeros, alloc::vec![1, hidden])?;
    let mut states = alloc::vec![TensorId(0); inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let (h2, c2) = cell(g, p, inputs[t], h, c)?;
        h = h2;
        c = c2;
        states[t] = h;
    }
    Ok(states)
}

/// Sequence of per-position hidden states for the full stack. `inputs` holds
/// one `[1, width]` row per position.
pub fn bilstm_states(
    g: &mut Graph,
    layers: &[LstmLayerIds],
    inputs: &[TensorId],
    hidden: usize,
) -> Result<Vec<TensorId>, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut rows: Vec<TensorId> = inputs.to_vec();
    for layer in layers {
        let fwd = run_direction(g, &layer.fwd, &rows, hidden, false)?;
        let bwd = run_direction(g, &layer.bwd, &rows, hidden, true)?;
        let mut next = Vec::with_capacity(rows.len());
        for t in 0..rows.len() {
            next.push(g.concat_cols(&[fwd[t], bwd[t]])?);
        }
        rows = next;
    }
    Ok(rows)
}

/// Classifier feature: `[h_fwd(last) ; h_bwd(first)]` of the top layer, a
/// `[1, 2*hidden]` row.
pub fn bilstm_forward(
    g: &mut Graph,
    layers: &[LstmLayerIds],
    inputs: &[TensorId],
    hidden: usize,
) -> Result<TensorId, ModelError> {
    let rows = bilstm_states(g, layers, inputs, hidden)?;
    let last = rows[rows.len() - 1];
    let first = rows[0];
    // Each row is [fwd ; bwd]; take the forward half of the last position and
    // the backward half of the first.
    let fwd_last = slice_cols(g, last, 0, hidden)?;
    let bwd_first = slice_cols(g, first, hidden, 2 * hidden)?;
    Ok(g.concat_cols(&[fwd_last, bwd_first])?)
}

/// Column range of a `[1, w]` row via transpose + row slice.
fn slice_cols(
    g: &mut Graph,
    row: TensorId,
    start: usize,
    end: usize,
) -> Result<TensorId, ModelError> {
    let t = g.transpose(row)?;
    let part = g.slice_rows(t, start, end)?;
    Ok(g.transpose(part)?)
}

/// Parameter names for one LSTM layer direction, in declaration order.
pub fn dir_param_names(layer: usize, dir: &str) -> [String; 12] {
    let base = alloc::format!("lstm{layer}.{dir}");
    [
        alloc::format!("{base}.wxi"),
        alloc::format!("{base}.wxf"),
        alloc::format!("{base}.wxg"),
        alloc::format!("{base}.wxo"),
        alloc::format!("{base}.whi"),
        alloc::format!("{base}.whf"),
        alloc::format!("{base}.whg"),
        alloc::format!("{base}.who"),
        alloc::format!("{base}.bi"),
        alloc::format!("{base}.bf"),
        alloc::format!("{base}.bg"),
        alloc::format!("{base}.bo"),
    ]
}
