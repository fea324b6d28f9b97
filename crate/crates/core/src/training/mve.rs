//! Margin-embedding loss: a symmetric triplet hinge on cosine similarity.
//!
//! Both branch outputs arrive as one d×2b matrix whose first b columns are
//! the batch items and last b columns their sampled non-paired partners
//! (column b+i is item i's negative). Per item, with margin m,
//!
//! ```text
//! L_i = max(0, m − cos(a_i, t_i) + cos(a_i, t̄_i))
//!     + max(0, m − cos(t_i, a_i) + cos(t_i, ā_i))
//! ```
//!
//! where t̄/ā are the negative columns. The batch objective is the mean of
//! L_i; gradients flow into the negative columns as well, which is why the
//! negatives ride along in the same forward pass (batch-norm statistics
//! then cover exactly the tensors the loss sees).

use crate::linalg::Matrix;

/// Mean hinge loss and its gradients with respect to both d×2b embedding
/// blocks. Zero-norm columns contribute similarity 0 and no gradient.
pub(crate) fn mve_batch(
    audio: &Matrix,
    text: &Matrix,
    items: usize,
    margin: f64,
) -> (f64, Matrix, Matrix) {
    debug_assert_eq!(audio.cols(), 2 * items);
    debug_assert_eq!(text.cols(), 2 * items);
    let mut grad_audio = Matrix::zeros(audio.rows(), audio.cols());
    let mut grad_text = Matrix::zeros(text.rows(), text.cols());
    let scale = 1.0 / items as f64;
    let mut total = 0.0;

    for i in 0..items {
        let neg = items + i;
        // Audio anchor: pull its text, push the negative text.
        total += hinge_term(
            margin,
            scale,
            (audio, i),
            (text, i, neg),
            &mut grad_audio,
            &mut grad_text,
        );
        // Text anchor: pull its audio, push the negative audio.
        total += hinge_term(
            margin,
            scale,
            (text, i),
            (audio, i, neg),
            &mut grad_text,
            &mut grad_audio,
        );
    }
    (total, grad_audio, grad_text)
}

/// One hinge `max(0, m − cos(anchor, pos) + cos(anchor, neg))`. The pos
/// and neg columns live in the same "other view" matrix; its scaled
/// gradient is added to all three columns when active.
fn hinge_term(
    margin: f64,
    scale: f64,
    (anchor_m, anchor): (&Matrix, usize),
    (other_m, pos, neg): (&Matrix, usize, usize),
    grad_anchor: &mut Matrix,
    grad_other: &mut Matrix,
) -> f64 {
    let (cos_pos, da_pos, dp_pos) = cosine_with_grads(anchor_m, anchor, other_m, pos);
    let (cos_neg, da_neg, dn_neg) = cosine_with_grads(anchor_m, anchor, other_m, neg);
    let value = margin - cos_pos + cos_neg;
    if value <= 0.0 {
        return 0.0;
    }
    let d = anchor_m.rows();
    for r in 0..d {
        grad_anchor[(r, anchor)] += scale * (da_neg[r] - da_pos[r]);
        grad_other[(r, pos)] += scale * (-dp_pos[r]);
        grad_other[(r, neg)] += scale * dn_neg[r];
    }
    scale * value
}

/// Cosine of two columns plus its gradient with respect to each column.
fn cosine_with_grads(
    um: &Matrix,
    uc: usize,
    vm: &Matrix,
    vc: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = um.rows();
    let mut dot = 0.0;
    let mut nu2 = 0.0;
    let mut nv2 = 0.0;
    for r in 0..d {
        let (a, b) = (um[(r, uc)], vm[(r, vc)]);
        dot += a * b;
        nu2 += a * a;
        nv2 += b * b;
    }
    let (nu, nv) = (nu2.sqrt(), nv2.sqrt());
    if nu < 1e-12 || nv < 1e-12 {
        return (0.0, vec![0.0; d], vec![0.0; d]);
    }
    let c = dot / (nu * nv);
    let mut du = vec![0.0; d];
    let mut dv = vec![0.0; d];
    for r in 0..d {
        let (a, b) = (um[(r, uc)], vm[(r, vc)]);
        du[r] = b / (nu * nv) - c * a / nu2;
        dv[r] = a / (nu * nv) - c * b / nv2;
    }
    (c, du, dv)
}
