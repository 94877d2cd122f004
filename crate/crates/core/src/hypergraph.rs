//! Learnable hypergraph propagation across all region-category units and
//! the global temporal convolution stack.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::head::Mode;
use crate::params::{self, ModelShape, ParamVars};
use crate::ssl;
use crate::tape::{Tape, Var};

/// `leaky(Hᵀ · leaky(H · E))` for one window slot.
///
/// `e_t` is `[R·C × d]` with rows ordered `r·C + c`; `incidence` is `[H × R·C]`.
pub fn hyper_propagate(tape: &mut Tape, e_t: Var, incidence: Var, alpha: f64) -> Result<Var> {
    let hub = tape.matmul(incidence, e_t)?;
    let hub = tape.leaky_relu(hub, alpha);
    let back = tape.transpose(incidence)?;
    let out = tape.matmul(back, hub)?;
    Ok(tape.leaky_relu(out, alpha))
}

/// Per-slot outputs of the global branch.
pub struct GlobalSlots {
    /// `Γ^(R)` as `[R × T × C × d]`.
    pub gamma: Var,
    /// `Γ^(R)_t` as `[R·C × d]`, one per slot.
    pub slots: Vec<Var>,
    /// Propagation of the region-shuffled input, one per slot; empty when
    /// no corruption was requested.
    pub corrupted: Vec<Var>,
}

/// Runs [`hyper_propagate`] on every slot of `local` (`[R × T × C × d]`),
/// optionally also on a region-shuffled copy for infomax negatives.
///
/// With `use_hypergraph` off the propagation is the identity, so the
/// output does not depend on the incidence parameters.
pub fn global_propagate(
    tape: &mut Tape,
    local: Var,
    pv: &ParamVars,
    alpha: f64,
    use_hypergraph: bool,
    corrupt: bool,
    mode: &mut Mode,
) -> Result<GlobalSlots> {
    let [r_n, t_n, c_n, d] = match *tape.shape(local) {
        [r, t, c, d] => [r, t, c, d],
        ref s => return Err(Error::shape("global_propagate", s, &[0, 0, 0, 0])),
    };
    let by_slot = tape.permute(local, &[1, 0, 2, 3])?;
    let incidence = if use_hypergraph {
        let inc = pv.get(params::INCIDENCE)?;
        let s = tape.shape(inc);
        if s.len() != 3 || s[0] != t_n || s[2] != r_n * c_n {
            return Err(Error::shape("hyper.incidence", s, &[t_n, 0, r_n * c_n]));
        }
        Some(inc)
    } else {
        None
    };
    let mut slots = Vec::with_capacity(t_n);
    let mut corrupted = Vec::new();
    for t in 0..t_n {
        let e_t = tape.select(by_slot, 0, t)?;
        let e_t = tape.reshape(e_t, &[r_n * c_n, d])?;
        let h_t = match incidence {
            Some(inc) => Some(tape.select(inc, 0, t)?),
            None => None,
        };
        let propagate = |tape: &mut Tape, x: Var| match h_t {
            Some(h) => hyper_propagate(tape, x, h, alpha),
            None => Ok(x),
        };
        slots.push(propagate(tape, e_t)?);
        if corrupt {
            let shuffled = ssl::corrupt(tape, e_t, r_n, c_n, &mut mode.corruption)?;
            corrupted.push(propagate(tape, shuffled)?);
        }
    }
    let stacked = tape.stack(&slots)?;
    let stacked = tape.reshape(stacked, &[t_n, r_n, c_n, d])?;
    let gamma = tape.permute(stacked, &[1, 0, 2, 3])?;
    Ok(GlobalSlots {
        gamma,
        slots,
        corrupted,
    })
}

/// Stacked 1-D convolutions along the window for every region-category
/// series, each followed by dropout then LeakyReLU. No residual.
pub fn global_temporal(
    tape: &mut Tape,
    gamma: Var,
    pv: &ParamVars,
    layers: usize,
    alpha: f64,
    mode: &mut Mode,
) -> Result<Var> {
    let [r_n, t_n, c_n, d] = match *tape.shape(gamma) {
        [r, t, c, d] => [r, t, c, d],
        ref s => return Err(Error::shape("global_temporal", s, &[0, 0, 0, 0])),
    };
    let series = tape.permute(gamma, &[0, 2, 1, 3])?;
    let series = tape.reshape(series, &[r_n * c_n, t_n, d])?;
    let kernels: Vec<(Var, Var)> = (0..layers)
        .map(|l| {
            Ok((
                pv.get(&params::global_kernel(l))?,
                pv.get(&params::global_bias(l))?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut outs = Vec::with_capacity(r_n * c_n);
    for rc in 0..r_n * c_n {
        let mut x = tape.select(series, 0, rc)?;
        for &(k, b) in &kernels {
            let input = tape.reshape(x, &[t_n, 1, d])?;
            let y = tape.conv1d_time(input, k, b)?;
            let y = mode.dropout(tape, y)?;
            x = tape.leaky_relu(y, alpha);
        }
        outs.push(x);
    }
    let stacked = tape.stack(&outs)?;
    let stacked = tape.reshape(stacked, &[r_n, c_n, t_n, d])?;
    tape.permute(stacked, &[0, 2, 1, 3])
}

/// One entry of a hyperedge's relevance ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relevance {
    pub flat: usize,
    pub region: usize,
    pub category: usize,
    pub score: f64,
}

/// All region-category units ranked by `|H_t[e, ·]|`, descending, ties by
/// ascending flat index.
pub fn hyperedge_relevance(
    incidence: &DenseArray,
    shape: ModelShape,
    t: usize,
    e: usize,
) -> Result<Vec<Relevance>> {
    let s = incidence.shape();
    if s.len() != 3 || s[2] != shape.regions() * shape.categories {
        return Err(Error::shape(
            "hyperedge_relevance",
            s,
            &[shape.window, 0, shape.regions() * shape.categories],
        ));
    }
    if t >= s[0] || e >= s[1] {
        return Err(Error::Index(format!(
            "slot {t} / hyperedge {e} outside {} slots × {} hyperedges",
            s[0], s[1]
        )));
    }
    let width = s[2];
    let start = (t * s[1] + e) * width;
    let row = &incidence.data()[start..start + width];
    let mut ranked: Vec<Relevance> = row
        .iter()
        .enumerate()
        .map(|(flat, v)| Relevance {
            flat,
            region: flat / shape.categories,
            category: flat % shape.categories,
            score: libm::fabs(*v),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.flat.cmp(&b.flat))
    });
    Ok(ranked)
}
