//! Self-supervised objectives: hypergraph infomax against region-shuffled
//! negatives, and local/global InfoNCE across regions.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var, NORM_EPS};

/// Logits are clamped to this magnitude before the sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Row order of a region-block shuffle of an `[R·C × d]` matrix: every
/// block of `C` category rows moves as a unit.
pub fn corrupt_indices(regions: usize, categories: usize, rng: &mut Rng) -> Vec<usize> {
    let perm = rng.permutation(regions);
    perm.iter()
        .flat_map(|&src| (0..categories).map(move |c| src * categories + c))
        .collect()
}

/// Shuffles the region blocks of `e_t` (`[R·C × d]`).
pub fn corrupt(
    tape: &mut Tape,
    e_t: Var,
    regions: usize,
    categories: usize,
    rng: &mut Rng,
) -> Result<Var> {
    let idx = corrupt_indices(regions, categories, rng);
    tape.gather_rows(e_t, &idx)
}

/// Mean over regions of `[R × d]`.
pub fn readout(tape: &mut Tape, gamma: Var) -> Result<Var> {
    tape.reduce_mean(gamma, 0)
}

/// `-Σ_r [log sigm(Ψᵀ W Γ_r) + log(1 - sigm(Ψᵀ W Γ̃_r))]`.
pub fn infomax_loss(
    tape: &mut Tape,
    gamma: Var,
    gamma_corrupt: Var,
    psi: Var,
    bilinear: Var,
) -> Result<Var> {
    let d = tape.shape(psi)[0];
    let psi_row = tape.reshape(psi, &[1, d])?;
    let query = tape.matmul(psi_row, bilinear)?;
    let query = tape.transpose(query)?;
    let pos = tape.matmul(gamma, query)?;
    let neg = tape.matmul(gamma_corrupt, query)?;
    let pos = tape.clamp(pos, -LOGIT_CLAMP, LOGIT_CLAMP);
    let neg = tape.clamp(neg, -LOGIT_CLAMP, LOGIT_CLAMP);
    let p_pos = tape.sigmoid(pos);
    let log_pos = tape.log(p_pos)?;
    // 1 - sigm(x) == sigm(-x)
    let flipped = tape.scale(neg, -1.0);
    let p_neg = tape.sigmoid(flipped);
    let log_neg = tape.log(p_neg)?;
    let both = tape.add(log_pos, log_neg)?;
    let total = tape.sum(both);
    Ok(tape.scale(total, -1.0))
}

/// InfoNCE between the time-pooled global (`[R × C × d]`) and local views.
///
/// For every `(r, c)` the anchor is the global embedding; the positive is
/// the local embedding of the same unit and the denominator ranges over
/// the local embeddings of all regions at category `c`. Returns the mean
/// of the `R·C` negated log-ratios.
pub fn contrastive_loss(tape: &mut Tape, global: Var, local: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    let s = tape.shape(global).to_vec();
    if s.len() != 3 || tape.shape(local) != s.as_slice() {
        return Err(Error::shape("contrastive_loss", &s, tape.shape(local)));
    }
    let (r_n, c_n) = (s[0], s[1]);
    let mut terms = Vec::with_capacity(c_n);
    for c in 0..c_n {
        let a = tape.select(global, 1, c)?;
        let a = tape.normalize_rows(a)?;
        let b = tape.select(local, 1, c)?;
        let b = tape.normalize_rows(b)?;
        let bt = tape.transpose(b)?;
        let sim = tape.matmul(a, bt)?;
        let logits = tape.scale(sim, 1.0 / tau);
        let log_p = tape.log_softmax_rows(logits)?;
        let positives = tape.diag(log_p)?;
        terms.push(tape.sum(positives));
    }
    let all = tape.stack(&terms)?;
    let total = tape.sum(all);
    Ok(tape.scale(total, -1.0 / (r_n * c_n) as f64))
}

fn unit(v: &[f64], which: &str) -> Result<Vec<f64>> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n <= NORM_EPS {
        return Err(Error::Numeric {
            op: "hard_negative_norm",
            detail: format!("{which} vector has norm {n}"),
        });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// For unit-normalized anchor `ã` and negative `ñ`, returns `s = ãᵀñ` and
/// `‖ñ - s·ã‖₂`, the magnitude of the negative's gradient direction.
pub fn hard_negative_norm(anchor: &[f64], negative: &[f64]) -> Result<(f64, f64)> {
    if anchor.len() != negative.len() {
        return Err(Error::shape(
            "hard_negative_norm",
            &[anchor.len()],
            &[negative.len()],
        ));
    }
    let a = unit(anchor, "anchor")?;
    let n = unit(negative, "negative")?;
    let s: f64 = a.iter().zip(&n).map(|(x, y)| x * y).sum();
    let norm = libm::sqrt(
        a.iter()
            .zip(&n)
            .map(|(x, y)| (y - s * x) * (y - s * x))
            .sum(),
    );
    Ok((s, norm))
}

/// Gradient contributed to the anchor by one negative of a single-anchor
/// InfoNCE term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeGradient {
    pub similarity: f64,
    /// Softmax weight of the negative in the denominator.
    pub weight: f64,
    pub grad_norm: f64,
}

/// Differentiates `-log(exp(cos(a,p)/τ) / Σ_k exp(cos(a,n_k)/τ))` (the
/// denominator also contains the positive) and measures, for each
/// negative, the norm of the anchor gradient flowing through that
/// negative's logit alone.
pub fn per_negative_gradients(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<Vec<NegativeGradient>> {
    use crate::array::DenseArray;
    let mut tape = Tape::new();
    let pos = tape.constant(DenseArray::from_vec(positive.to_vec()));
    let a0 = tape.leaf(DenseArray::from_vec(anchor.to_vec()));
    let first = tape.cosine(a0, pos)?;
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(first);
    let mut copies = Vec::with_capacity(negatives.len());
    for n in negatives {
        let nv = tape.constant(DenseArray::from_vec(n.to_vec()));
        let ak = tape.leaf(DenseArray::from_vec(anchor.to_vec()));
        logits.push(tape.cosine(ak, nv)?);
        copies.push(ak);
    }
    let row = tape.stack(&logits)?;
    let row = tape.reshape(row, &[1, negatives.len() + 1])?;
    let row = tape.scale(row, 1.0 / tau);
    let log_p = tape.log_softmax_rows(row)?;
    let lp = tape.value(log_p).data().to_vec();
    let picked = tape.select(log_p, 1, 0)?;
    let loss = tape.scale(picked, -1.0);
    tape.backward(loss)?;
    copies
        .iter()
        .zip(negatives)
        .enumerate()
        .map(|(k, (&ak, n))| {
            let (similarity, _) = hard_negative_norm(anchor, n)?;
            let g = tape.grad(ak);
            Ok(NegativeGradient {
                similarity,
                weight: libm::exp(lp[k + 1]),
                grad_norm: libm::sqrt(g.sum_squares()),
            })
        })
        .collect()
}
