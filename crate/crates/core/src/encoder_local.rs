//! Category embedding and the local spatial/temporal convolutional encoders.
//!
//! All tensors here use the `[R × T × C × d]` layout (region, window slot,
//! category, latent).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::head::Mode;
use crate::params::{self, ModelShape, ParamVars};
use crate::tape::{Tape, Var};

/// `E[r,t,c,:] = ((x[r,t,c] - mu) / sigma) · e_c`.
pub fn embed(
    tape: &mut Tape,
    window: &DenseArray,
    mu: f64,
    sigma: f64,
    embedding: Var,
) -> Result<Var> {
    if !(sigma > 0.0) {
        return Err(Error::Config("z-score sigma must be positive".into()));
    }
    let ws = window.shape().to_vec();
    let es = tape.shape(embedding).to_vec();
    if ws.len() != 3 || es.len() != 2 || es[0] != ws[2] {
        return Err(Error::shape("embed", &ws, &es));
    }
    let (c_n, d) = (es[0], es[1]);
    let z: Vec<f64> = window.data().iter().map(|x| (x - mu) / sigma).collect();
    let e = tape.value(embedding).data();
    let mut out = Vec::with_capacity(z.len() * d);
    for (k, zk) in z.iter().enumerate() {
        let c = k % c_n;
        out.extend(e[c * d..(c + 1) * d].iter().map(|v| zk * v));
    }
    let value = DenseArray::new(&[ws[0], ws[1], ws[2], d], out)?;
    Ok(tape.push(
        value,
        &[embedding],
        Box::new(move |g, _, _| {
            let mut ge = vec![0.0; c_n * d];
            for (k, (zk, gk)) in z.iter().zip(g.data().chunks(d)).enumerate() {
                let c = k % c_n;
                for (acc, gv) in ge[c * d..(c + 1) * d].iter_mut().zip(gk) {
                    *acc += zk * gv;
                }
            }
            vec![DenseArray::new(&[c_n, d], ge).expect("embedding shape")]
        }),
    ))
}

fn dims(tape: &Tape, x: Var) -> Result<[usize; 4]> {
    match *tape.shape(x) {
        [r, t, c, d] => Ok([r, t, c, d]),
        ref s => Err(Error::shape("local encoder", s, &[0, 0, 0, 0])),
    }
}

/// Stacked type-aware spatial convolutions with residual connections.
///
/// Per layer, slot `t` and output category `c`:
/// `H[t,c] = leaky(dropout(W_c * X_t + b_c) + X[t,c])`, where `X` is the
/// previous layer's output.
pub fn spatial_encode(
    tape: &mut Tape,
    e: Var,
    pv: &ParamVars,
    shape: ModelShape,
    layers: usize,
    alpha: f64,
    mode: &mut Mode,
) -> Result<Var> {
    let [r_n, t_n, c_n, d] = dims(tape, e)?;
    if r_n != shape.regions() {
        return Err(Error::Config(alloc::format!(
            "{r_n} regions cannot be arranged on a {}x{} grid",
            shape.rows,
            shape.cols
        )));
    }
    let mut cur = tape.permute(e, &[1, 0, 2, 3])?;
    for layer in 0..layers {
        let mut slots = Vec::with_capacity(t_n);
        for t in 0..t_n {
            let x_t = tape.select(cur, 0, t)?;
            let grid = tape.reshape(x_t, &[shape.rows, shape.cols, c_n, d])?;
            let mut cats = Vec::with_capacity(c_n);
            for c in 0..c_n {
                let k = pv.get(&params::spatial_kernel(layer, c))?;
                let b = pv.get(&params::spatial_bias(layer, c))?;
                let conv = tape.conv2d_grid(grid, k, b)?;
                let conv = tape.reshape(conv, &[r_n, d])?;
                let conv = mode.dropout(tape, conv)?;
                let residual = tape.select(x_t, 1, c)?;
                let pre = tape.add(conv, residual)?;
                cats.push(tape.leaky_relu(pre, alpha));
            }
            let stacked = tape.stack(&cats)?;
            slots.push(tape.permute(stacked, &[1, 0, 2])?);
        }
        cur = tape.stack(&slots)?;
    }
    tape.permute(cur, &[1, 0, 2, 3])
}

/// Stacked type-aware temporal convolutions with residual connections,
/// applied per region along the window axis.
pub fn temporal_encode(
    tape: &mut Tape,
    h: Var,
    pv: &ParamVars,
    layers: usize,
    alpha: f64,
    mode: &mut Mode,
) -> Result<Var> {
    let [r_n, t_n, c_n, _] = dims(tape, h)?;
    let mut cur = h;
    for layer in 0..layers {
        let mut regions = Vec::with_capacity(r_n);
        for r in 0..r_n {
            let x_r = tape.select(cur, 0, r)?;
            let mut cats = Vec::with_capacity(c_n);
            for c in 0..c_n {
                let k = pv.get(&params::temporal_kernel(layer, c))?;
                let b = pv.get(&params::temporal_bias(layer, c))?;
                let conv = tape.conv1d_time(x_r, k, b)?;
                let conv = mode.dropout(tape, conv)?;
                let residual = tape.select(x_r, 1, c)?;
                let pre = tape.add(conv, residual)?;
                cats.push(tape.leaky_relu(pre, alpha));
            }
            let stacked = tape.stack(&cats)?;
            regions.push(tape.permute(stacked, &[1, 0, 2])?);
        }
        cur = tape.stack(&regions)?;
    }
    debug_assert_eq!(tape.shape(cur)[1], t_n);
    Ok(cur)
}
