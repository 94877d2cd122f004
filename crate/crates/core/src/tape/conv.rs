//! Same-padded correlations whose kernels are shared across the latent
//! dimension and summed over input channels.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;

use super::{Tape, Var};
use crate::array::DenseArray;
use crate::error::{Error, Result};

fn odd(op: &'static str, size: usize) -> Result<()> {
    if size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "{op}: kernel size {size} must be odd"
        )));
    }
    Ok(())
}

impl Tape {
    /// `x [I×J×C_in×d]`, `kernel [L_I×L_J×C_in]`, `bias [d]` → `[I×J×d]`.
    ///
    /// `out[i,j,:] = bias + Σ kernel[a,b,c] · x[i+a-p_i, j+b-p_j, c, :]`
    /// with zero padding outside the grid.
    pub fn conv2d_grid(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        let bs = self.shape(bias).to_vec();
        if xs.len() != 4 || ks.len() != 3 || ks[2] != xs[2] {
            return Err(Error::shape("conv2d_grid", &xs, &ks));
        }
        if bs != [xs[3]] {
            return Err(Error::shape("conv2d_grid bias", &bs, &xs[3..]));
        }
        odd("conv2d_grid", ks[0])?;
        odd("conv2d_grid", ks[1])?;
        let (ni, nj, nc, d) = (xs[0], xs[1], xs[2], xs[3]);
        let (li, lj) = (ks[0], ks[1]);
        let (pi, pj) = (li / 2, lj / 2);

        // Visits every (output cell, kernel tap, input cell) triple inside the grid.
        let taps = move |f: &mut dyn FnMut(usize, usize, usize)| {
            for i in 0..ni {
                for a in 0..li {
                    let Some(si) = (i + a).checked_sub(pi).filter(|&s| s < ni) else {
                        continue;
                    };
                    for j in 0..nj {
                        for b in 0..lj {
                            let Some(sj) = (j + b).checked_sub(pj).filter(|&s| s < nj) else {
                                continue;
                            };
                            for c in 0..nc {
                                f(i * nj + j, (a * lj + b) * nc + c, (si * nj + sj) * nc + c);
                            }
                        }
                    }
                }
            }
        };

        let (xv, kv, bv) = (
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let mut out = vec![0.0; ni * nj * d];
        for cell in 0..ni * nj {
            out[cell * d..(cell + 1) * d].copy_from_slice(bv);
        }
        taps(&mut |o, k, s| {
            let w = kv[k];
            for e in 0..d {
                out[o * d + e] += w * xv[s * d + e];
            }
        });
        let value = DenseArray::new(&[ni, nj, d], out)?;
        Ok(self.push(
            value,
            &[x, kernel, bias],
            Box::new(move |g, p, _| {
                let (xv, kv, gv) = (p[0].data(), p[1].data(), g.data());
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                let mut gb = vec![0.0; d];
                for cell in gv.chunks(d) {
                    for (acc, v) in gb.iter_mut().zip(cell) {
                        *acc += v;
                    }
                }
                taps(&mut |o, k, s| {
                    let go = &gv[o * d..(o + 1) * d];
                    let xs = &xv[s * d..(s + 1) * d];
                    let w = kv[k];
                    let mut dot = 0.0;
                    for e in 0..d {
                        gx[s * d + e] += w * go[e];
                        dot += go[e] * xs[e];
                    }
                    gk[k] += dot;
                });
                vec![
                    DenseArray::new(p[0].shape(), gx).expect("input shape"),
                    DenseArray::new(p[1].shape(), gk).expect("kernel shape"),
                    DenseArray::new(&[d], gb).expect("bias shape"),
                ]
            }),
        ))
    }

    /// `x [T×C_in×d]`, `kernel [L_T×C_in]`, `bias [d]` → `[T×d]`, a 1-D
    /// zero-padded correlation along time.
    pub fn conv1d_time(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        let bs = self.shape(bias).to_vec();
        if xs.len() != 3 || ks.len() != 2 || ks[1] != xs[1] {
            return Err(Error::shape("conv1d_time", &xs, &ks));
        }
        if bs != [xs[2]] {
            return Err(Error::shape("conv1d_time bias", &bs, &xs[2..]));
        }
        odd("conv1d_time", ks[0])?;
        let (nt, nc, d) = (xs[0], xs[1], xs[2]);
        let lt = ks[0];
        let pad = lt / 2;

        let taps = move |f: &mut dyn FnMut(usize, usize, usize)| {
            for t in 0..nt {
                for a in 0..lt {
                    let Some(s) = (t + a).checked_sub(pad).filter(|&s| s < nt) else {
                        continue;
                    };
                    for c in 0..nc {
                        f(t, a * nc + c, s * nc + c);
                    }
                }
            }
        };

        let (xv, kv, bv) = (
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let mut out = vec![0.0; nt * d];
        for t in 0..nt {
            out[t * d..(t + 1) * d].copy_from_slice(bv);
        }
        taps(&mut |o, k, s| {
            let w = kv[k];
            for e in 0..d {
                out[o * d + e] += w * xv[s * d + e];
            }
        });
        let value = DenseArray::new(&[nt, d], out)?;
        Ok(self.push(
            value,
            &[x, kernel, bias],
            Box::new(move |g, p, _| {
                let (xv, kv, gv) = (p[0].data(), p[1].data(), g.data());
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                let mut gb = vec![0.0; d];
                for row in gv.chunks(d) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                taps(&mut |o, k, s| {
                    let w = kv[k];
                    let mut dot = 0.0;
                    for e in 0..d {
                        gx[s * d + e] += w * gv[o * d + e];
                        dot += gv[o * d + e] * xv[s * d + e];
                    }
                    gk[k] += dot;
                });
                vec![
                    DenseArray::new(p[0].shape(), gx).expect("input shape"),
                    DenseArray::new(p[1].shape(), gk).expect("kernel shape"),
                    DenseArray::new(&[d], gb).expect("bias shape"),
                ]
            }),
        ))
    }
}
