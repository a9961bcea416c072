//! Everything between token ids and the capsule layer: embedding lookup,
//! the BiLSTM feature extractor, its ablation substitutes (bidirectional
//! GRU, same-length conv), and inverted dropout.

use crate::data::Vocab;
use crate::error::{CcnlError, Result};
use crate::numerics::{ParamId, ParamStore, Parameter, Tape, TapeBinding, Tensor, Var};
use crate::rng::SeededRng;

/// Vocabulary-indexed word-vector table, shape [V, e]. Row 0 is the
/// padding row and stays zero.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub vectors: Parameter,
    pub vocab: Vocab,
    pub trainable: bool,
}

impl EmbeddingMatrix {
    pub fn new(matrix: Tensor, vocab: Vocab, trainable: bool) -> Self {
        assert_eq!(matrix.rows(), vocab.len());
        EmbeddingMatrix {
            vectors: Parameter::new("embedding", matrix),
            vocab,
            trainable,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.value.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.value.row(i)
    }
}

/// Row-gather of token ids from an embedding leaf already on the tape.
pub fn embed(tape: &mut Tape, embedding: Var, tokens: &[usize]) -> Result<Var> {
    let vocab_size = tape.value(embedding).rows();
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(CcnlError::Vocabulary(format!(
            "token id {bad} out of range for vocabulary of size {vocab_size}"
        )));
    }
    Ok(tape.gather_rows(embedding, tokens))
}

fn glorot(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut t = Tensor::zeros(&[rows, cols]);
    for v in t.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
    t
}

fn recurrent_init(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for v in t.data_mut() {
        *v = rng.uniform(-0.08, 0.08);
    }
    t
}

/// One LSTM direction: gate layout along the 4k axis is [i, f, g, o].
#[derive(Debug, Clone)]
pub struct LstmDirParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub fwd: LstmDirParams,
    pub bwd: LstmDirParams,
    pub hidden: usize,
}

impl BiLstmParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let dir = |tag: &str, store: &mut ParamStore, rng: &mut SeededRng| {
            let wx = store.add(format!("{prefix}.{tag}.wx"), recurrent_init(rng, input_dim, 4 * hidden));
            let wh = store.add(format!("{prefix}.{tag}.wh"), recurrent_init(rng, hidden, 4 * hidden));
            // forget-gate bias starts at 1
            let mut b = Tensor::zeros(&[1, 4 * hidden]);
            for j in hidden..2 * hidden {
                b.set2(0, j, 1.0);
            }
            let bias = store.add(format!("{prefix}.{tag}.b"), b);
            LstmDirParams { wx, wh, bias }
        };
        let fwd = dir("fwd", store, rng);
        let bwd = dir("bwd", store, rng);
        BiLstmParams { fwd, bwd, hidden }
    }
}

fn lstm_direction(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    x_rows: &[Var],
    dir: &LstmDirParams,
    hidden: usize,
    reverse: bool,
) -> Vec<Var> {
    let wx = bind.bind(tape, store, dir.wx);
    let wh = bind.bind(tape, store, dir.wh);
    let bias = bind.bind(tape, store, dir.bias);
    let t_len = x_rows.len();
    let mut h = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut c = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut outputs = vec![h; t_len];
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let xg = tape.matmul(x_rows[t], wx);
        let hg = tape.matmul(h, wh);
        let pre = tape.add(xg, hg);
        let pre = tape.add_row_broadcast(pre, bias);
        let i_pre = tape.slice_cols(pre, 0, hidden);
        let f_pre = tape.slice_cols(pre, hidden, 2 * hidden);
        let g_pre = tape.slice_cols(pre, 2 * hidden, 3 * hidden);
        let o_pre = tape.slice_cols(pre, 3 * hidden, 4 * hidden);
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        c = tape.add(fc, ig);
        let ct = tape.tanh(c);
        h = tape.mul(o, ct);
        outputs[t] = h;
    }
    outputs
}

/// Standard BiLSTM over [T, e] input rows; output [T, 2*hidden] with the
/// forward block in the first `hidden` columns.
pub fn bilstm_forward(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    x: Var,
    params: &BiLstmParams,
) -> Var {
    let t_len = tape.value(x).rows();
    let x_rows: Vec<Var> = (0..t_len).map(|t| tape.gather_rows(x, &[t])).collect();
    let fwd = lstm_direction(tape, bind, store, &x_rows, &params.fwd, params.hidden, false);
    let bwd = lstm_direction(tape, bind, store, &x_rows, &params.bwd, params.hidden, true);
    let fwd_stack = tape.concat_rows(&fwd);
    let bwd_stack = tape.concat_rows(&bwd);
    tape.concat_cols(&[fwd_stack, bwd_stack])
}

/// One GRU direction: gate layout along the 3k axis is [z, r, n].
#[derive(Debug, Clone)]
pub struct GruDirParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct BiGruParams {
    pub fwd: GruDirParams,
    pub bwd: GruDirParams,
    pub hidden: usize,
}

impl BiGruParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let dir = |tag: &str, store: &mut ParamStore, rng: &mut SeededRng| GruDirParams {
            wx: store.add(format!("{prefix}.{tag}.wx"), recurrent_init(rng, input_dim, 3 * hidden)),
            wh: store.add(format!("{prefix}.{tag}.wh"), recurrent_init(rng, hidden, 3 * hidden)),
            bias: store.add(format!("{prefix}.{tag}.b"), Tensor::zeros(&[1, 3 * hidden])),
        };
        let fwd = dir("fwd", store, rng);
        let bwd = dir("bwd", store, rng);
        BiGruParams { fwd, bwd, hidden }
    }
}

fn gru_direction(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    x_rows: &[Var],
    dir: &GruDirParams,
    hidden: usize,
    reverse: bool,
) -> Vec<Var> {
    let wx = bind.bind(tape, store, dir.wx);
    let wh = bind.bind(tape, store, dir.wh);
    let bias = bind.bind(tape, store, dir.bias);
    let t_len = x_rows.len();
    let mut h = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut outputs = vec![h; t_len];
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let xg = tape.matmul(x_rows[t], wx);
        let xg = tape.add_row_broadcast(xg, bias);
        let hg = tape.matmul(h, wh);
        let z_pre = {
            let a = tape.slice_cols(xg, 0, hidden);
            let b = tape.slice_cols(hg, 0, hidden);
            tape.add(a, b)
        };
        let r_pre = {
            let a = tape.slice_cols(xg, hidden, 2 * hidden);
            let b = tape.slice_cols(hg, hidden, 2 * hidden);
            tape.add(a, b)
        };
        let z = tape.sigmoid(z_pre);
        let r = tape.sigmoid(r_pre);
        let n_pre = {
            let a = tape.slice_cols(xg, 2 * hidden, 3 * hidden);
            let hn = tape.slice_cols(hg, 2 * hidden, 3 * hidden);
            let gated = tape.mul(r, hn);
            tape.add(a, gated)
        };
        let n = tape.tanh(n_pre);
        // h' = (1 - z) * n + z * h
        let zn = tape.mul(z, n);
        let zh = tape.mul(z, h);
        let n_minus_zn = {
            let neg = tape.scale(zn, -1.0);
            tape.add(n, neg)
        };
        h = tape.add(n_minus_zn, zh);
        outputs[t] = h;
    }
    outputs
}

/// Bidirectional GRU with the same [T, 2*hidden] interface as the BiLSTM.
pub fn gru_forward(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    x: Var,
    params: &BiGruParams,
) -> Var {
    let t_len = tape.value(x).rows();
    let x_rows: Vec<Var> = (0..t_len).map(|t| tape.gather_rows(x, &[t])).collect();
    let fwd = gru_direction(tape, bind, store, &x_rows, &params.fwd, params.hidden, false);
    let bwd = gru_direction(tape, bind, store, &x_rows, &params.bwd, params.hidden, true);
    let fwd_stack = tape.concat_rows(&fwd);
    let bwd_stack = tape.concat_rows(&bwd);
    tape.concat_cols(&[fwd_stack, bwd_stack])
}

/// Same-length 1-D convolution with ReLU. One kernel matrix of shape
/// [width * e, filters], sliced per offset.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub filters: usize,
}

impl ConvParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        width: usize,
        filters: usize,
        rng: &mut SeededRng,
    ) -> Self {
        ConvParams {
            kernel: store.add(format!("{prefix}.kernel"), glorot(rng, width * input_dim, filters)),
            bias: store.add(format!("{prefix}.b"), Tensor::zeros(&[1, filters])),
            width,
            filters,
        }
    }
}

pub fn conv1d_forward(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    x: Var,
    params: &ConvParams,
) -> Var {
    let kernel = bind.bind(tape, store, params.kernel);
    let bias = bind.bind(tape, store, params.bias);
    let t_len = tape.value(x).rows();
    let e = tape.value(x).cols();
    let half = params.width / 2;
    let pad = tape.leaf(Tensor::zeros(&[1, e]));
    let mut acc: Option<Var> = None;
    for w in 0..params.width {
        // row t of the shifted input is x[t + w - half], zero outside range
        let rows: Vec<Var> = (0..t_len)
            .map(|t| {
                let src = t as isize + w as isize - half as isize;
                if src < 0 || src >= t_len as isize {
                    pad
                } else {
                    tape.gather_rows(x, &[src as usize])
                }
            })
            .collect();
        let shifted = tape.concat_rows(&rows);
        let k_w = {
            let rows: Vec<usize> = (w * e..(w + 1) * e).collect();
            tape.gather_rows(kernel, &rows)
        };
        let term = tape.matmul(shifted, k_w);
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term),
        });
    }
    let pre = tape.add_row_broadcast(acc.unwrap(), bias);
    tape.relu(pre)
}

/// Inverted dropout: scales kept activations by 1/(1-rate) in training
/// mode, identity at inference.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, training: bool, rng: &mut SeededRng) -> Var {
    assert!((0.0..1.0).contains(&rate));
    if !training || rate == 0.0 {
        return x;
    }
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let keep = 1.0 - rate;
    let mask_data: Vec<f64> = (0..n)
        .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
        .collect();
    tape.mul_mask(x, Tensor::new(shape, mask_data))
}
