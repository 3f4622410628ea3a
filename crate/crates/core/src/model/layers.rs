//! Building blocks of the forward pass, each recorded on a [`Tape`].

use std::sync::Arc;

use super::{Activation, EdgeWeightMode, LossForm};
use crate::autodiff::{Axis, Csr, Matrix, Tape, TensorError, Var};
use crate::graph::SubgraphView;

/// Lower bound applied to a probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn activate(tape: &mut Tape, x: Var, act: Activation, leaky_slope: f64) -> Result<Var, TensorError> {
    match act {
        Activation::Elu => tape.elu(x, 1.0),
        Activation::LeakyRelu => tape.leaky_relu(x, leaky_slope),
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => Ok(x),
    }
}

/// `(X + X⁰) · Mᵀ`: node-major projection into the shared space.
pub fn project(tape: &mut Tape, x: Var, offset: Var, m: Var) -> Result<Var, TensorError> {
    let shifted = tape.add(x, offset)?;
    let mt = tape.transpose(m)?;
    tape.matmul(shifted, mt)
}

/// Parameters of one attention head: `w` is `D_out x D_in`, `a` is
/// `2·D_out x 1` (source half first).
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w: Var,
    pub a: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOptions {
    pub leaky_slope: f64,
    pub aggregation: Activation,
    pub edge_weight_mode: EdgeWeightMode,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// `n x (K·D_out)` concatenated head outputs.
    pub output: Var,
    /// Per head, `1 x nnz` coefficients aligned with the view's neighbor
    /// slots.
    pub coefficients: Vec<Var>,
}

/// Multi-head masked attention over `view`.
///
/// For head `k`: `h = X W_kᵀ`, `e_ij = LeakyReLU(a_srcᵀ h_i + a_dstᵀ h_j)`
/// for `j ∈ N(i)`, `α = softmax_N(i)(e)`, `out_i = σ(Σ_j α_ij h_j)`.
pub fn attention_layer(
    tape: &mut Tape,
    view: &SubgraphView,
    x: Var,
    heads: &[HeadVars],
    opts: &AttentionOptions,
) -> Result<AttentionOutput, TensorError> {
    let nbrs: &Arc<Csr> = &view.neighbors;
    if tape.shape(x).0 != view.n_nodes() {
        return Err(TensorError::ShapeMismatch {
            op: "attention_layer",
            left: tape.shape(x),
            right: (view.n_nodes(), tape.shape(x).1),
        });
    }
    let log_weights = match opts.edge_weight_mode {
        EdgeWeightMode::Mask => None,
        EdgeWeightMode::LogWeight => {
            let lw = view.weights.iter().map(|w| w.ln()).collect();
            Some(tape.constant(Matrix::from_vec(1, view.weights.len(), lw)?)?)
        }
    };

    let mut outputs = Vec::with_capacity(heads.len());
    let mut coefficients = Vec::with_capacity(heads.len());
    for head in heads {
        let d_out = tape.shape(head.w).0;
        if tape.shape(head.a) != (2 * d_out, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "attention_layer",
                left: tape.shape(head.a),
                right: (2 * d_out, 1),
            });
        }
        let wt = tape.transpose(head.w)?;
        let h = tape.matmul(x, wt)?;
        let src_rows: Vec<usize> = (0..d_out).collect();
        let dst_rows: Vec<usize> = (d_out..2 * d_out).collect();
        let a_src = tape.gather_rows(head.a, &src_rows)?;
        let a_dst = tape.gather_rows(head.a, &dst_rows)?;
        let s_src = tape.matmul(h, a_src)?;
        let s_dst = tape.matmul(h, a_dst)?;
        let e = tape.edge_scores(s_src, s_dst, nbrs)?;
        let mut e = tape.leaky_relu(e, opts.leaky_slope)?;
        if let Some(lw) = log_weights {
            e = tape.add(e, lw)?;
        }
        let alpha = tape.masked_neighbor_softmax(e, nbrs)?;
        let agg = tape.neighbor_aggregate(alpha, h, nbrs)?;
        outputs.push(activate(tape, agg, opts.aggregation, opts.leaky_slope)?);
        coefficients.push(alpha);
    }
    let output = tape.concat(&outputs, Axis::Cols)?;
    Ok(AttentionOutput { output, coefficients })
}

/// `w = mean_i a_subᵀ tanh(W_sub x_i)` over the rows of `x`.
pub fn subgraph_importance(tape: &mut Tape, x: Var, w_sub: Var, a_sub: Var) -> Result<Var, TensorError> {
    let wt = tape.transpose(w_sub)?;
    let hidden = tape.matmul(x, wt)?;
    let hidden = tape.tanh(hidden)?;
    let scores = tape.matmul(hidden, a_sub)?;
    tape.mean(scores, Axis::Rows)
}

/// Softmax-normalizes the two importances into `β = (β_tw, β_tu)` and
/// returns `β_tw · x_tw + β_tu · x_tu` with `β` as a `1 x 2` row.
pub fn fuse(tape: &mut Tape, x_tw: Var, x_tu: Var, w_tw: Var, w_tu: Var) -> Result<(Var, Var), TensorError> {
    let w = tape.concat(&[w_tw, w_tu], Axis::Cols)?;
    let beta = tape.row_softmax(w)?;
    let b_tw = tape.pick(beta, &[(0, 0)])?;
    let b_tu = tape.pick(beta, &[(0, 1)])?;
    let a = tape.mul_scalar(b_tw, x_tw)?;
    let b = tape.mul_scalar(b_tu, x_tu)?;
    Ok((tape.add(a, b)?, beta))
}

/// One-layer classifier: returns `(logits, probabilities)` with
/// `logits = X W + b`.
pub fn classify(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<(Var, Var), TensorError> {
    let z = tape.matmul(x, w)?;
    let logits = tape.add_row(z, b)?;
    let probs = tape.row_softmax(logits)?;
    Ok((logits, probs))
}

/// Batch-mean classification loss plus `λ Σ ‖θ‖²` over `regularized`.
/// `targets` holds `(row, class)` pairs of the batch.
pub fn loss(
    tape: &mut Tape,
    probs: Var,
    targets: &[(usize, usize)],
    regularized: &[Var],
    lambda: f64,
    form: LossForm,
) -> Result<Var, TensorError> {
    if targets.is_empty() {
        return Err(TensorError::EmptyInput { op: "loss" });
    }
    let picked = tape.pick(probs, targets)?;
    let data = match form {
        LossForm::CrossEntropy => {
            let clamped = tape.clamp_min(picked, PROB_FLOOR)?;
            let logs = tape.ln(clamped)?;
            let m = tape.mean(logs, Axis::Cols)?;
            tape.scale(m, -1.0)?
        }
        LossForm::Literal => {
            let m = tape.mean(picked, Axis::Cols)?;
            tape.scale(m, -1.0)?
        }
    };
    if lambda == 0.0 || regularized.is_empty() {
        return Ok(data);
    }
    let mut reg = tape.sum_squares(regularized[0])?;
    for &p in &regularized[1..] {
        let s = tape.sum_squares(p)?;
        reg = tape.add(reg, s)?;
    }
    let reg = tape.scale(reg, lambda)?;
    tape.add(data, reg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(t: &mut Tape, rows: &[Vec<f64>]) -> Var {
        t.constant(Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn projection_identity_and_annihilation() {
        let mut t = Tape::new();
        let x = c(&mut t, &[vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let zero = t.constant(Matrix::zeros(2, 2)).unwrap();
        let eye = t.constant(Matrix::identity(2)).unwrap();
        let y = project(&mut t, x, zero, eye).unwrap();
        assert_eq!(t.value(y), t.value(x));
        let neg = t.scale(x, -1.0).unwrap();
        let y = project(&mut t, x, neg, eye).unwrap();
        assert!(t.value(y).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_matches_dense_product() {
        let mut t = Tape::new();
        let xv = vec![vec![0.3, -1.0, 2.0], vec![1.5, 0.0, -0.5], vec![0.2, 0.7, 0.1]];
        let ov = vec![vec![0.1, 0.1, 0.0], vec![0.0, -0.2, 0.3], vec![1.0, 0.0, 0.0]];
        let mv = vec![vec![1.0, 2.0, 0.5], vec![-1.0, 0.0, 0.25]];
        let (x, o, m) = (c(&mut t, &xv), c(&mut t, &ov), c(&mut t, &mv));
        let y = project(&mut t, x, o, m).unwrap();
        for i in 0..3 {
            for d in 0..2 {
                let expect: f64 = (0..3).map(|k| mv[d][k] * (xv[i][k] + ov[i][k])).sum();
                assert!((t.value(y).get(i, d) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn importance_zero_vector_gives_zero() {
        let mut t = Tape::new();
        let x = c(&mut t, &[vec![1.0, 2.0], vec![0.5, -1.0]]);
        let w = c(&mut t, &[vec![0.3, 0.1], vec![-0.2, 0.4], vec![1.0, 1.0]]);
        let a = t.constant(Matrix::zeros(3, 1)).unwrap();
        let s = subgraph_importance(&mut t, x, w, a).unwrap();
        assert_eq!(t.scalar(s), 0.0);
    }

    #[test]
    fn importance_single_node_is_its_score() {
        let mut t = Tape::new();
        let x = c(&mut t, &[vec![1.0, -2.0]]);
        let w = c(&mut t, &[vec![0.5, 0.25]]);
        let a = c(&mut t, &[vec![2.0]]);
        let s = subgraph_importance(&mut t, x, w, a).unwrap();
        assert!((t.scalar(s) - 2.0 * 0.0f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn fusion_weights() {
        let mut t = Tape::new();
        let x1 = c(&mut t, &[vec![1.0, 0.0]]);
        let x2 = c(&mut t, &[vec![0.0, 1.0]]);
        let w = c(&mut t, &[vec![0.7]]);
        let (f, beta) = fuse(&mut t, x1, x2, w, w).unwrap();
        assert_eq!(t.value(beta).as_slice(), &[0.5, 0.5]);
        assert_eq!(t.value(f).as_slice(), &[0.5, 0.5]);

        let w1 = c(&mut t, &[vec![3f64.ln()]]);
        let w2 = c(&mut t, &[vec![0.0]]);
        let (_, beta) = fuse(&mut t, x1, x2, w1, w2).unwrap();
        let b = t.value(beta);
        assert!((b.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((b.get(0, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn classifier_uniform_shift_and_saturation() {
        let mut t = Tape::new();
        let x = c(&mut t, &[vec![1.0, -1.0], vec![2.0, 0.5]]);
        let w = t.constant(Matrix::zeros(2, 4)).unwrap();
        let b = t.constant(Matrix::zeros(1, 4)).unwrap();
        let (_, p) = classify(&mut t, x, w, b).unwrap();
        assert!(t.value(p).as_slice().iter().all(|&v| v == 0.25));

        let b = c(&mut t, &[vec![50.0, 0.0, 0.0, 0.0]]);
        let (_, p) = classify(&mut t, x, w, b).unwrap();
        assert!(t.value(p).get(0, 0) > 1.0 - 1e-15);

        let wv = c(&mut t, &[vec![0.3, -0.2, 0.1, 0.9], vec![1.0, 0.4, -0.6, 0.0]]);
        let b0 = c(&mut t, &[vec![0.1, 0.2, 0.3, 0.4]]);
        let b1 = c(&mut t, &[vec![5.1, 5.2, 5.3, 5.4]]);
        let (_, p0) = classify(&mut t, x, wv, b0).unwrap();
        let (_, p1) = classify(&mut t, x, wv, b1).unwrap();
        assert!(t.value(p0).max_abs_diff(t.value(p1)) < 1e-12 * 4.0);
        for r in 0..2 {
            assert_eq!(t.value(p0).argmax_row(r), t.value(p1).argmax_row(r));
        }
    }

    #[test]
    fn loss_closed_forms() {
        let mut t = Tape::new();
        let perfect = c(&mut t, &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]);
        let l = loss(&mut t, perfect, &[(0, 0), (1, 2)], &[], 0.0, LossForm::CrossEntropy).unwrap();
        assert_eq!(t.scalar(l), 0.0);

        let uniform = t.constant(Matrix::filled(3, 4, 0.25)).unwrap();
        let l = loss(&mut t, uniform, &[(0, 1), (1, 3), (2, 0)], &[], 0.0, LossForm::CrossEntropy).unwrap();
        assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-15);

        let zeros = t.constant(Matrix::zeros(3, 3)).unwrap();
        let l = loss(&mut t, uniform, &[(0, 1)], &[zeros], 10.0, LossForm::CrossEntropy).unwrap();
        assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-15);

        // Zero probability at the true class is clamped, not -inf.
        let l = loss(&mut t, perfect, &[(0, 1)], &[], 0.0, LossForm::CrossEntropy).unwrap();
        assert!((t.scalar(l) + PROB_FLOOR.ln()).abs() < 1e-9);

        let l = loss(&mut t, uniform, &[(0, 1)], &[], 0.0, LossForm::Literal).unwrap();
        assert_eq!(t.scalar(l), -0.25);
        assert!(loss(&mut t, uniform, &[], &[], 0.0, LossForm::Literal).is_err());
    }
}
