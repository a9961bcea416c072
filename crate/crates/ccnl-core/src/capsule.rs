//! Primary capsule projection, the squash nonlinearity, and dynamic
//! routing between the primary and convolutional capsule layers.

use crate::numerics::{ParamId, ParamStore, Tape, TapeBinding, Tensor, Var};
use crate::rng::SeededRng;

/// g(s) = (|s|^2 / (1 + |s|^2)) * s / |s|, with g(0) = 0.
pub fn squash(s: &[f64]) -> Vec<f64> {
    let n2: f64 = s.iter().map(|v| v * v).sum();
    if n2 < 1e-30 {
        return vec![0.0; s.len()];
    }
    let alpha = n2.sqrt() / (1.0 + n2);
    s.iter().map(|v| v * alpha).collect()
}

/// Per-channel primary transforms plus per-pair routing matrices.
#[derive(Debug, Clone)]
pub struct CapsuleLayerParams {
    /// W_i: [feature_dim, d] and bias [1, d], one per primary channel.
    pub primary: Vec<(ParamId, ParamId)>,
    /// W_ij: [d, d] prediction matrix per (channel i, output capsule j).
    pub routing: Vec<Vec<ParamId>>,
    pub capsule_dim: usize,
    pub out_capsules: usize,
}

impl CapsuleLayerParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        capsule_dim: usize,
        channels: usize,
        out_capsules: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let glorot = |rng: &mut SeededRng, rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let mut t = Tensor::zeros(&[rows, cols]);
            for v in t.data_mut() {
                *v = rng.uniform(-bound, bound);
            }
            t
        };
        let primary = (0..channels)
            .map(|i| {
                let w = store.add(format!("{prefix}.primary.{i}.w"), glorot(rng, feature_dim, capsule_dim));
                let b = store.add(format!("{prefix}.primary.{i}.b"), Tensor::zeros(&[1, capsule_dim]));
                (w, b)
            })
            .collect();
        let routing = (0..channels)
            .map(|i| {
                (0..out_capsules)
                    .map(|j| {
                        store.add(format!("{prefix}.route.{i}.{j}"), glorot(rng, capsule_dim, capsule_dim))
                    })
                    .collect()
            })
            .collect();
        CapsuleLayerParams {
            primary,
            routing,
            capsule_dim,
            out_capsules,
        }
    }

    pub fn channels(&self) -> usize {
        self.primary.len()
    }
}

/// p_{t,i} = squash(W_i^T h_t + b_i) for every timestep and channel.
/// Returns one [T, d] tensor per channel; stacking them channel-major
/// gives the N_in = T * channels input capsules.
pub fn primary_capsules(
    tape: &mut Tape,
    bind: &mut TapeBinding,
    store: &ParamStore,
    features: Var,
    params: &CapsuleLayerParams,
) -> Vec<Var> {
    params
        .primary
        .iter()
        .map(|&(w, b)| {
            let wv = bind.bind(tape, store, w);
            let bv = bind.bind(tape, store, b);
            let proj = tape.matmul(features, wv);
            let proj = tape.add_row_broadcast(proj, bv);
            tape.squash_rows(proj)
        })
        .collect()
}

/// Couplings, logits, predictions, and output capsules of one routing run.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub logits: Tensor,
    pub couplings: Tensor,
    /// [N_in, N_out, d] prediction vectors u_{j|i}.
    pub predictions: Tensor,
    pub outputs: Tensor,
    pub iterations: usize,
    /// Coupling matrix as of each iteration, for invariant checks.
    pub coupling_history: Vec<Tensor>,
}

/// Agreement routing over precomputed prediction stacks.
///
/// `predictions[j]` holds u_{j|i} for all input capsules i as an
/// [N_in, d] tensor. Logits start at zero; each iteration applies
/// softmax over output capsules, weighted-sum + squash, then the
/// agreement update (skipped after the final iteration). Gradients flow
/// through every iteration.
pub fn route_predictions(
    tape: &mut Tape,
    predictions: &[Var],
    iterations: usize,
) -> (Var, RoutingState) {
    assert!(iterations >= 1);
    let n_out = predictions.len();
    let n_in = tape.value(predictions[0]).rows();
    let d = tape.value(predictions[0]).cols();

    let mut logits = tape.leaf(Tensor::zeros(&[n_in, n_out]));
    let mut coupling_history = Vec::with_capacity(iterations);
    let mut couplings = logits;
    let mut out_caps: Vec<Var> = Vec::new();
    for iter in 0..iterations {
        couplings = tape.softmax(logits, 1);
        coupling_history.push(tape.value(couplings).clone());
        out_caps = (0..n_out)
            .map(|j| {
                let col = tape.slice_cols(couplings, j, j + 1);
                let row = tape.transpose(col);
                let s = tape.matmul(row, predictions[j]);
                tape.squash_rows(s)
            })
            .collect();
        if iter + 1 < iterations {
            let agreements: Vec<Var> = (0..n_out)
                .map(|j| {
                    let vt = tape.transpose(out_caps[j]);
                    tape.matmul(predictions[j], vt)
                })
                .collect();
            let delta = tape.concat_cols(&agreements);
            logits = tape.add(logits, delta);
        }
    }
    let outputs = tape.concat_rows(&out_caps);

    let mut pred_value = Tensor::zeros(&[n_in, n_out, d]);
    for (j, &p) in predictions.iter().enumerate() {
        let pv = tape.value(p);
        for i in 0..n_in {
            for k in 0..d {
                pred_value.data_mut()[(i * n_out + j) * d + k] = pv.at2(i, k);
            }
        }
    }
    let state = RoutingState {
        logits: tape.value(logits).clone(),
        couplings: tape.value(couplings).clone(),
        predictions: pred_value,
        outputs: tape.value(outputs).clone(),
        iterations,
        coupling_history,
    };
    (outputs, state)
}

/// Standalone routing over explicit input capsules, one channel per
/// capsule, with per-pair prediction matrices (`None` for identity).
pub fn dynamic_routing(
    input_capsules: &Tensor,
    prediction_mats: Option<&[Vec<Tensor>]>,
    out_capsules: usize,
    iterations: usize,
) -> RoutingState {
    let n_in = input_capsules.rows();
    let d = input_capsules.cols();
    let mut tape = Tape::new();
    let u = tape.leaf(input_capsules.clone());
    let u_rows: Vec<Var> = (0..n_in).map(|i| tape.gather_rows(u, &[i])).collect();
    let predictions: Vec<Var> = (0..out_capsules)
        .map(|j| {
            let rows: Vec<Var> = (0..n_in)
                .map(|i| match prediction_mats {
                    None => u_rows[i],
                    Some(mats) => {
                        let w = tape.leaf(mats[i][j].clone());
                        tape.matmul(u_rows[i], w)
                    }
                })
                .collect();
            tape.concat_rows(&rows)
        })
        .collect();
    let (_, state) = route_predictions(&mut tape, &predictions, iterations);
    let _ = d;
    state
}

/// Row-major flatten of the [N_out, d] output capsules.
pub fn flatten_capsules(tape: &mut Tape, outputs: Var) -> Var {
    let n = tape.value(outputs).len();
    tape.reshape(outputs, vec![1, n])
}
