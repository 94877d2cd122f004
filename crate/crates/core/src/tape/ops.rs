use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Fault, Tape, Var};
use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Norms below this are rejected by the normalizing operations.
pub const NORM_EPS: f64 = 1e-12;

/// `a [m×k] · b [k×n]`.
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a [m×k] · bᵀ` with `b [n×k]`.
fn mm_abt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b` with `a [k×m]`, `b [k×n]`.
fn mm_atb(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn arr(shape: &[usize], data: Vec<f64>) -> DenseArray {
    DenseArray::new(shape, data).expect("shape computed by the operation")
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_data(x: &DenseArray, axes: &[usize]) -> DenseArray {
    let in_shape = x.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    let src = x.data();
    for _ in 0..n {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(src[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    arr(&out_shape, out)
}

/// `(outer, len, inner)` split of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn without_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let value = self.value(x).map(f);
        self.push(
            value,
            &[x],
            Box::new(move |g, p, out| {
                let d = p[0]
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
                    .collect();
                vec![arr(g.shape(), d)]
            }),
        )
    }

    /// Standard matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = mm(self.value(a).data(), self.value(b).data(), m, k, n);
        let factor = match self.fault() {
            Some(Fault::MatmulGradScale) => 1.01,
            None => 1.0,
        };
        Ok(self.push(
            arr(&[m, n], out),
            &[a, b],
            Box::new(move |g, p, _| {
                let mut ga = mm_abt(g.data(), p[1].data(), m, n, k);
                let mut gb = mm_atb(p[0].data(), g.data(), m, k, n);
                if factor != 1.0 {
                    ga.iter_mut()
                        .chain(gb.iter_mut())
                        .for_each(|v| *v *= factor);
                }
                vec![arr(&[m, k], ga), arr(&[k, n], gb)]
            }),
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return Err(Error::shape("transpose", self.shape(x), &[0, 0]));
        }
        self.permute(x, &[1, 0])
    }

    /// Reorders axes so that output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || core::mem::replace(&mut seen[a], true))
        {
            return Err(Error::shape("permute", &shape, axes));
        }
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let value = permute_data(self.value(x), axes);
        Ok(self.push(
            value,
            &[x],
            Box::new(move |g, _, _| vec![permute_data(g, &inverse)]),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let value = self
            .value(x)
            .reshape(shape)
            .map_err(|_| Error::shape("reshape", &in_shape, shape))?;
        Ok(self.push(
            value,
            &[x],
            Box::new(move |g, _, _| vec![arr(&in_shape, g.data().to_vec())]),
        ))
    }

    /// Picks index `index` along `axis`, dropping that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || index >= shape[axis] {
            return Err(Error::Index(format!(
                "select axis {axis} index {index} on shape {shape:?}"
            )));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * len + index) * inner;
            out.extend_from_slice(&src[base..base + inner]);
        }
        let out_shape = without_axis(&shape, axis);
        Ok(self.push(
            arr(&out_shape, out),
            &[x],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let base = (o * len + index) * inner;
                    gx[base..base + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
                vec![arr(&shape, gx)]
            }),
        ))
    }

    /// Stacks equally shaped arrays along a new leading axis.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Contract("stack of zero arrays".into()))?;
        let shape = self.shape(*first).to_vec();
        let mut data = Vec::with_capacity(shape.iter().product::<usize>() * xs.len());
        for &x in xs {
            if self.shape(x) != shape.as_slice() {
                return Err(Error::shape("stack", &shape, self.shape(x)));
            }
            data.extend_from_slice(self.value(x).data());
        }
        let mut out_shape = vec![xs.len()];
        out_shape.extend_from_slice(&shape);
        let n = xs.len();
        Ok(self.push(
            arr(&out_shape, data),
            xs,
            Box::new(move |g, _, _| {
                let chunk = g.len() / n;
                g.data()
                    .chunks(chunk)
                    .map(|c| arr(&shape, c.to_vec()))
                    .collect()
            }),
        ))
    }

    /// Rows of `x` (axis 0) in the order given by `indices`.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rows = shape[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Index(format!("gather row {bad} of {rows}")));
        }
        if indices.is_empty() {
            return Err(Error::Contract("gather of zero rows".into()));
        }
        let width: usize = shape[1..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            out.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        let indices = indices.to_vec();
        Ok(self.push(
            arr(&out_shape, out),
            &[x],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; rows * width];
                for (k, &i) in indices.iter().enumerate() {
                    for (dst, src) in gx[i * width..(i + 1) * width]
                        .iter_mut()
                        .zip(&g.data()[k * width..(k + 1) * width])
                    {
                        *dst += src;
                    }
                }
                vec![arr(&shape, gx)]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(
            value,
            &[a, b],
            Box::new(|g, _, _| vec![g.clone(), g.clone()]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(
            value,
            &[a, b],
            Box::new(|g, _, _| vec![g.clone(), g.map(|v| -v)]),
        ))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(
            value,
            &[a, b],
            Box::new(|g, p, _| {
                vec![
                    g.zip_map(p[1], |gi, bi| gi * bi),
                    g.zip_map(p[0], |gi, ai| gi * ai),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, move |v| k * v, move |_, _| k)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(
            x,
            move |v| if v >= 0.0 { v } else { alpha * v },
            move |v, _| if v >= 0.0 { 1.0 } else { alpha },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, libm::exp, |_, y| y)
    }

    /// Natural logarithm; every entry must be positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Numeric {
                op: "log",
                detail: format!("non-positive argument {bad}"),
            });
        }
        Ok(self.unary(x, libm::log, |v, _| 1.0 / v))
    }

    /// Clamps to `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(
            x,
            move |v| v.clamp(lo, hi),
            move |v, _| if v < lo || v > hi { 0.0 } else { 1.0 },
        )
    }

    /// Inverted dropout. The identity unless `training` is set and `p > 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let mask = arr(self.shape(x), mask);
        self.dropout_with_mask(x, mask)
    }

    /// Multiplies by a fixed mask (already scaled by `1/(1-p)`).
    pub fn dropout_with_mask(&mut self, x: Var, mask: DenseArray) -> Result<Var> {
        if mask.shape() != self.shape(x) {
            return Err(Error::shape("dropout", self.shape(x), mask.shape()));
        }
        let value = self.value(x).zip_map(&mask, |v, m| v * m);
        Ok(self.push(
            value,
            &[x],
            Box::new(move |g, _, _| vec![g.zip_map(&mask, |gi, m| gi * m)]),
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.push(
            DenseArray::scalar(total),
            &[x],
            Box::new(|g, p, _| vec![DenseArray::full(p[0].shape(), g.item())]),
        )
    }

    /// Arithmetic mean along `axis`, dropping it.
    pub fn reduce_mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Index(format!("mean axis {axis} on shape {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let out_shape = without_axis(&shape, axis);
        Ok(self.push(
            arr(&out_shape, out),
            &[x],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            gx[base + i] = g.data()[o * inner + i] * inv;
                        }
                    }
                }
                vec![arr(&shape, gx)]
            }),
        ))
    }

    /// Cosine similarity of two vectors of equal length.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine", a, b)?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let (na, nb) = (norm(av), norm(bv));
        for (name, n) in [("first", na), ("second", nb)] {
            if n <= NORM_EPS {
                return Err(Error::Numeric {
                    op: "cosine",
                    detail: format!("{name} argument has norm {n}"),
                });
            }
        }
        let dot: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let cos = dot / (na * nb);
        Ok(self.push(
            DenseArray::scalar(cos),
            &[a, b],
            Box::new(move |g, p, _| {
                let g = g.item();
                let (a, b) = (p[0], p[1]);
                let ga = a.zip_map(b, |ai, bi| g * (bi / (na * nb) - cos * ai / (na * na)));
                let gb = b.zip_map(a, |bi, ai| g * (ai / (na * nb) - cos * bi / (nb * nb)));
                vec![ga, gb]
            }),
        ))
    }

    /// Scales each row of a 2-D array to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("normalize_rows", &shape, &[0, 0]));
        }
        let (n, d) = (shape[0], shape[1]);
        let src = self.value(x).data();
        let mut norms = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n * d);
        for (r, row) in src.chunks(d).enumerate() {
            let nr = norm(row);
            if nr <= NORM_EPS {
                return Err(Error::Numeric {
                    op: "normalize_rows",
                    detail: format!("row {r} has norm {nr}"),
                });
            }
            norms.push(nr);
            out.extend(row.iter().map(|v| v / nr));
        }
        Ok(self.push(
            arr(&shape, out),
            &[x],
            Box::new(move |g, _, y| {
                let mut gx = Vec::with_capacity(n * d);
                for r in 0..n {
                    let yr = &y.data()[r * d..(r + 1) * d];
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    gx.extend(
                        yr.iter()
                            .zip(gr)
                            .map(|(yi, gi)| (gi - yi * proj) / norms[r]),
                    );
                }
                vec![arr(&shape, gx)]
            }),
        ))
    }

    /// Row-wise `log softmax` of a 2-D array.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("log_softmax_rows", &shape, &[0, 0]));
        }
        let m = shape[1];
        let mut out = Vec::with_capacity(self.value(x).len());
        for row in self.value(x).data().chunks(m) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            out.extend(row.iter().map(|v| v - lse));
        }
        Ok(self.push(
            arr(&shape, out),
            &[x],
            Box::new(move |g, _, y| {
                let mut gx = Vec::with_capacity(g.len());
                for (gr, yr) in g.data().chunks(m).zip(y.data().chunks(m)) {
                    let total: f64 = gr.iter().sum();
                    gx.extend(
                        gr.iter()
                            .zip(yr)
                            .map(|(gi, yi)| gi - libm::exp(*yi) * total),
                    );
                }
                vec![arr(&shape, gx)]
            }),
        ))
    }

    /// Main diagonal of a square matrix.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(Error::shape("diag", &shape, &[shape[0], shape[0]]));
        }
        let n = shape[0];
        let out: Vec<f64> = (0..n).map(|i| self.value(x).data()[i * n + i]).collect();
        Ok(self.push(
            arr(&[n], out),
            &[x],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; n * n];
                for i in 0..n {
                    gx[i * n + i] = g.data()[i];
                }
                vec![arr(&[n, n], gx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| libm::fabs(x - y) <= tol)
    }

    #[test]
    fn matmul_identity_and_selector() {
        let mut t = Tape::new();
        let i2 = t.constant(DenseArray::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let m = t.constant(DenseArray::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let p = t.matmul(i2, m).unwrap();
        assert_eq!(t.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let sel = t.constant(DenseArray::from_rows(&[&[1.0, 0.0]]).unwrap());
        let col = t.constant(DenseArray::from_rows(&[&[5.0], &[7.0]]).unwrap());
        let p = t.matmul(sel, col).unwrap();
        assert_eq!(t.value(p).data(), &[5.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(DenseArray::zeros(&[2, 3]));
        let b = t.constant(DenseArray::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::Shape { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn pointwise_definitions() {
        let mut t = Tape::new();
        let x = t.constant(DenseArray::from_vec(vec![-1.0, 2.0]));
        let y = t.leaky_relu(x, 0.01);
        assert!(close(t.value(y).data(), &[-0.01, 2.0], 1e-15));
        let z = t.constant(DenseArray::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).item(), 0.5);
    }

    #[test]
    fn dropout_degenerate_and_invalid() {
        let mut t = Tape::new();
        let mut rng = Rng::new(3);
        let x = t.leaf(DenseArray::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(t.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(t.dropout(x, 0.5, &mut rng, false).unwrap(), x);
        assert!(matches!(
            t.dropout(x, 1.0, &mut rng, true),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            t.dropout(x, -0.1, &mut rng, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut t = Tape::new();
        let mut rng = Rng::new(11);
        let x = t.leaf(DenseArray::full(&[1000], 1.0));
        let y = t.dropout(x, 0.2, &mut rng, true).unwrap();
        let vals = t.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
        let zeros = vals.iter().filter(|&&v| v == 0.0).count();
        assert!((120..280).contains(&zeros), "{zeros}");
    }

    #[test]
    fn reduce_mean_examples() {
        let mut t = Tape::new();
        let x = t.constant(DenseArray::from_rows(&[&[1.0, 3.0], &[5.0, 7.0]]).unwrap());
        let m = t.reduce_mean(x, 0).unwrap();
        assert_eq!(t.value(m).data(), &[3.0, 5.0]);
        let m = t.reduce_mean(x, 1).unwrap();
        assert_eq!(t.value(m).data(), &[2.0, 6.0]);
        let c = t.constant(DenseArray::full(&[3, 4], 2.5));
        let m = t.reduce_mean(c, 1).unwrap();
        assert_eq!(t.value(m).data(), &[2.5; 3]);
        assert!(t.reduce_mean(c, 2).is_err());
    }

    #[test]
    fn cosine_examples() {
        let mut t = Tape::new();
        let a = t.constant(DenseArray::from_vec(vec![1.0, 0.0]));
        let b = t.constant(DenseArray::from_vec(vec![1.0, 1.0]));
        let c = t.cosine(a, b).unwrap();
        assert!((t.value(c).item() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let same = t.cosine(b, b).unwrap();
        assert!((t.value(same).item() - 1.0).abs() < 1e-15);
        let e2 = t.constant(DenseArray::from_vec(vec![0.0, 1.0]));
        let orth = t.cosine(a, e2).unwrap();
        assert_eq!(t.value(orth).item(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_names_argument() {
        let mut t = Tape::new();
        let a = t.constant(DenseArray::from_vec(vec![1.0, 0.0]));
        let z = t.constant(DenseArray::zeros(&[2]));
        match t.cosine(a, z) {
            Err(Error::Numeric { detail, .. }) => assert!(detail.contains("second")),
            other => panic!("{other:?}"),
        }
        match t.cosine(z, a) {
            Err(Error::Numeric { detail, .. }) => assert!(detail.contains("first")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn permute_and_select() {
        let mut t = Tape::new();
        let x = t.constant(DenseArray::new(&[2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let p = t.permute(x, &[2, 0, 1]).unwrap();
        assert_eq!(t.shape(p), &[2, 2, 3]);
        assert_eq!(t.value(p).get(&[1, 1, 2]), t.value(x).get(&[1, 2, 1]));
        let s = t.select(x, 1, 2).unwrap();
        assert_eq!(t.value(s).data(), &[4.0, 5.0, 10.0, 11.0]);
    }

    #[test]
    fn gather_and_stack() {
        let mut t = Tape::new();
        let x = t.leaf(DenseArray::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap());
        let g = t.gather_rows(x, &[2, 0, 2]).unwrap();
        assert_eq!(t.value(g).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = t.sum(g);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);

        let a = t.constant(DenseArray::from_vec(vec![1.0, 2.0]));
        let b = t.constant(DenseArray::from_vec(vec![3.0, 4.0]));
        let st = t.stack(&[a, b]).unwrap();
        assert_eq!(t.shape(st), &[2, 2]);
        assert_eq!(t.value(st).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn log_softmax_uniform_row() {
        let mut t = Tape::new();
        let x = t.constant(DenseArray::full(&[2, 4], 0.3));
        let y = t.log_softmax_rows(x).unwrap();
        let expect = -libm::log(4.0);
        assert!(t.value(y).data().iter().all(|v| (v - expect).abs() < 1e-15));
    }
}
