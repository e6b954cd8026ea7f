//! Forward and backward kernels for every primitive the tape records.
//!
//! Every spatial kernel computes each output column with an accumulation
//! order that does not depend on the column index, and every reduction
//! across columns goes through [`column_sorted_sum`] or [`sorted_sum`].
//! Cyclic column shifts of the input therefore produce bit-identical,
//! shifted outputs.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator offset of instance normalization: `(x - mean) / (std + NORM_EPS)`.
pub const NORM_EPS: f64 = 1e-5;

/// Sum whose result depends only on the multiset of values.
pub(crate) fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().fold(0.0, |acc, v| acc + v)
}

/// Sum of `f(v)` over an `h x w` plane that is invariant to cyclic column
/// shifts: each column is summed top to bottom, then the column totals are
/// added in sorted order.
pub(crate) fn column_sorted_sum(plane: &[f64], h: usize, w: usize, f: impl Fn(f64) -> f64) -> f64 {
    let mut cols: Vec<f64> = (0..w)
        .map(|c| (0..h).fold(0.0, |acc, r| acc + f(plane[r * w + c])))
        .collect();
    sorted_sum(&mut cols)
}

/// `out[o] += wgt * row[(o * stride + off) mod W]`.
#[inline]
fn axpy_circular(out: &mut [f64], row: &[f64], wgt: f64, off: isize, stride: usize) {
    let w = row.len();
    if stride == 1 {
        let s = off.rem_euclid(w as isize) as usize;
        let (head, tail) = out.split_at_mut(w - s);
        for (o, r) in head.iter_mut().zip(&row[s..]) {
            *o += wgt * r;
        }
        for (o, r) in tail.iter_mut().zip(&row[..s]) {
            *o += wgt * r;
        }
    } else {
        for (o, out) in out.iter_mut().enumerate() {
            let iw = ((o * stride) as isize + off).rem_euclid(w as isize) as usize;
            *out += wgt * row[iw];
        }
    }
}

/// `sum_o g[o] * row[(o * stride + off) mod W]`.
#[inline]
fn dot_circular(g: &[f64], row: &[f64], off: isize, stride: usize) -> f64 {
    let w = row.len();
    if stride == 1 {
        let s = off.rem_euclid(w as isize) as usize;
        let a: f64 = g[..w - s].iter().zip(&row[s..]).map(|(x, y)| x * y).sum();
        let b: f64 = g[w - s..].iter().zip(&row[..s]).map(|(x, y)| x * y).sum();
        a + b
    } else {
        g.iter()
            .enumerate()
            .map(|(o, gv)| gv * row[((o * stride) as isize + off).rem_euclid(w as isize) as usize])
            .sum()
    }
}

/// `row[(o * stride + off) mod W] += wgt * g[o]`.
#[inline]
fn scatter_circular(row: &mut [f64], g: &[f64], wgt: f64, off: isize, stride: usize) {
    let w = row.len();
    if stride == 1 {
        let s = off.rem_euclid(w as isize) as usize;
        let (lo, hi) = row.split_at_mut(s);
        for (r, gv) in hi.iter_mut().zip(&g[..w - s]) {
            *r += wgt * gv;
        }
        for (r, gv) in lo.iter_mut().zip(&g[w - s..]) {
            *r += wgt * gv;
        }
    } else {
        for (o, gv) in g.iter().enumerate() {
            row[((o * stride) as isize + off).rem_euclid(w as isize) as usize] += wgt * gv;
        }
    }
}

/// Geometry of a circular-in-width, zero-in-height, "same"-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvShape {
    pub fn new(x: &Tensor, kernel: &Tensor, sh: usize, sw: usize) -> Result<Self> {
        let (c_in, h, w) = x.dims3()?;
        let [c_out, kc, kh, kw] = *kernel.shape() else {
            return Err(Error::Shape(format!("kernel must be 4-D, got {:?}", kernel.shape())));
        };
        if kc != c_in {
            return Err(Error::Shape(format!("kernel expects {kc} input channels, input has {c_in}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Shape(format!("kernel size {kh}x{kw} must be odd")));
        }
        if sh == 0 || sw == 0 || w == 0 || w % sw != 0 {
            return Err(Error::Shape(format!("width {w} not divisible by azimuth stride {sw}")));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            sh,
            sw,
            ho: h.div_ceil(sh),
            wo: w / sw,
        })
    }

    fn input_row(&self, oh: usize, a: usize) -> Option<usize> {
        let ih = (oh * self.sh + a) as isize - ((self.kh - 1) / 2) as isize;
        (0..self.h as isize).contains(&ih).then_some(ih as usize)
    }

    fn col_offset(&self, b: usize) -> isize {
        b as isize - ((self.kw - 1) / 2) as isize
    }
}

pub fn conv2d_forward(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, sh: usize, sw: usize) -> Result<Tensor> {
    let s = ConvShape::new(x, kernel, sh, sw)?;
    if let Some(b) = bias {
        if b.shape() != [s.c_out] {
            return Err(Error::Shape(format!("bias shape {:?}, expected [{}]", b.shape(), s.c_out)));
        }
    }
    let (xd, kd) = (x.data(), kernel.data());
    let mut out = Tensor::zeros(&[s.c_out, s.ho, s.wo]);
    let plane_len = s.ho * s.wo;
    for (co, plane) in out.data_mut().chunks_mut(plane_len).enumerate() {
        if let Some(b) = bias {
            plane.fill(b.data()[co]);
        }
        for ci in 0..s.c_in {
            for a in 0..s.kh {
                for b in 0..s.kw {
                    let wgt = kd[((co * s.c_in + ci) * s.kh + a) * s.kw + b];
                    let off = s.col_offset(b);
                    for oh in 0..s.ho {
                        let Some(ih) = s.input_row(oh, a) else { continue };
                        let row = &xd[(ci * s.h + ih) * s.w..][..s.w];
                        axpy_circular(&mut plane[oh * s.wo..][..s.wo], row, wgt, off, s.sw);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_kernel, grad_bias)`.
pub fn conv2d_backward(x: &Tensor, kernel: &Tensor, sh: usize, sw: usize, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let s = ConvShape::new(x, kernel, sh, sw)?;
    let (xd, kd, gd) = (x.data(), kernel.data(), g.data());
    let mut gx = Tensor::zeros(x.shape());
    let mut gk = Tensor::zeros(kernel.shape());
    let plane_len = s.ho * s.wo;
    let gb = Tensor::vector(gd.chunks(plane_len).map(|p| p.iter().sum()).collect());
    for co in 0..s.c_out {
        for ci in 0..s.c_in {
            for a in 0..s.kh {
                for b in 0..s.kw {
                    let kidx = ((co * s.c_in + ci) * s.kh + a) * s.kw + b;
                    let wgt = kd[kidx];
                    let off = s.col_offset(b);
                    let mut acc = 0.0;
                    for oh in 0..s.ho {
                        let Some(ih) = s.input_row(oh, a) else { continue };
                        let grow = &gd[co * plane_len + oh * s.wo..][..s.wo];
                        let base = (ci * s.h + ih) * s.w;
                        acc += dot_circular(grow, &xd[base..base + s.w], off, s.sw);
                        scatter_circular(&mut gx.data_mut()[base..base + s.w], grow, wgt, off, s.sw);
                    }
                    gk.data_mut()[kidx] = acc;
                }
            }
        }
    }
    Ok((gx, gk, gb))
}

/// Per-channel spatial statistics cached for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn instance_norm_forward(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, NormCache)> {
    let (c, h, w) = x.dims3()?;
    let n = h * w;
    if n < 2 {
        return Err(Error::Shape("instance norm needs at least two spatial positions".into()));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape(format!("norm affine parameters must be [{c}]")));
    }
    let mut out = Tensor::zeros(x.shape());
    let mut cache = NormCache {
        mean: Vec::with_capacity(c),
        std: Vec::with_capacity(c),
    };
    for (ch, (src, dst)) in x.data().chunks(n).zip(out.data_mut().chunks_mut(n)).enumerate() {
        let mean = column_sorted_sum(src, h, w, |v| v) / n as f64;
        let var = column_sorted_sum(src, h, w, |v| (v - mean) * (v - mean)) / n as f64;
        let std = var.sqrt();
        let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
        let denom = std + NORM_EPS;
        for (o, v) in dst.iter_mut().zip(src) {
            *o = gm * ((v - mean) / denom) + bt;
        }
        cache.mean.push(mean);
        cache.std.push(std);
    }
    Ok((out, cache))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn instance_norm_backward(x: &Tensor, gamma: &Tensor, cache: &NormCache, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, h, w) = x.dims3()?;
    let n = h * w;
    let nf = n as f64;
    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for ch in 0..c {
        let xs = &x.data()[ch * n..][..n];
        let gs = &g.data()[ch * n..][..n];
        let (mean, std) = (cache.mean[ch], cache.std[ch]);
        let s = std + NORM_EPS;
        let gm = gamma.data()[ch];
        let mut sum_gy = 0.0;
        let mut sum_gy_d = 0.0;
        for (xv, gv) in xs.iter().zip(gs) {
            let d = xv - mean;
            gbeta[ch] += gv;
            ggamma[ch] += gv * d / s;
            sum_gy += gv * gm;
            sum_gy_d += gv * gm * d;
        }
        let mean_gy = sum_gy / nf;
        let g_s = -sum_gy_d / (s * s);
        let dst = &mut gx.data_mut()[ch * n..][..n];
        for ((o, xv), gv) in dst.iter_mut().zip(xs).zip(gs) {
            let d = xv - mean;
            let via_std = if std > 0.0 { g_s * d / (nf * std) } else { 0.0 };
            *o = (gv * gm - mean_gy) / s + via_std;
        }
    }
    Ok((gx, Tensor::vector(ggamma), Tensor::vector(gbeta)))
}

/// Per-column scaled dot-product attention. Returns the output and the
/// attention probabilities laid out as `[W, heads, H_q, H_k]`.
pub fn attention_forward(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<(Tensor, Vec<f64>)> {
    let (c, hq, w) = q.dims3()?;
    let (kc, hk, kw) = k.dims3()?;
    if k.shape() != v.shape() || kc != c || kw != w {
        return Err(Error::Shape(format!(
            "attention Q {:?}, K {:?}, V {:?} must share channels and width",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::Shape(format!("{c} channels do not split into {heads} heads")));
    }
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = Tensor::zeros(q.shape());
    let mut probs = vec![0.0; w * heads * hq * hk];
    let mut logits = vec![0.0; hk];
    for col in 0..w {
        for hd in 0..heads {
            let chans = hd * dh..(hd + 1) * dh;
            for i in 0..hq {
                for (j, l) in logits.iter_mut().enumerate() {
                    *l = chans
                        .clone()
                        .fold(0.0, |acc, ch| acc + qd[(ch * hq + i) * w + col] * kd[(ch * hk + j) * w + col])
                        * scale;
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let p = &mut probs[((col * heads + hd) * hq + i) * hk..][..hk];
                let mut total = 0.0;
                for (pj, l) in p.iter_mut().zip(&logits) {
                    *pj = (l - max).exp();
                    total += *pj;
                }
                for pj in p.iter_mut() {
                    *pj /= total;
                }
                for ch in chans.clone() {
                    out.data_mut()[(ch * hq + i) * w + col] =
                        p.iter().enumerate().fold(0.0, |acc, (j, pj)| acc + pj * vd[(ch * hk + j) * w + col]);
                }
            }
        }
    }
    Ok((out, probs))
}

/// Returns `(grad_q, grad_k, grad_v)`.
pub fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    probs: &[f64],
    g: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, hq, w) = q.dims3()?;
    let (_, hk, _) = k.dims3()?;
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), g.data());
    let mut gq = Tensor::zeros(q.shape());
    let mut gk = Tensor::zeros(k.shape());
    let mut gv = Tensor::zeros(v.shape());
    let mut dp = vec![0.0; hk];
    for col in 0..w {
        for hd in 0..heads {
            let chans = hd * dh..(hd + 1) * dh;
            for i in 0..hq {
                let p = &probs[((col * heads + hd) * hq + i) * hk..][..hk];
                for (j, d) in dp.iter_mut().enumerate() {
                    *d = chans
                        .clone()
                        .map(|ch| gd[(ch * hq + i) * w + col] * vd[(ch * hk + j) * w + col])
                        .sum();
                }
                for ch in chans.clone() {
                    let gval = gd[(ch * hq + i) * w + col];
                    for (j, pj) in p.iter().enumerate() {
                        gv.data_mut()[(ch * hk + j) * w + col] += pj * gval;
                    }
                }
                let inner: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                for j in 0..hk {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    for ch in chans.clone() {
                        gq.data_mut()[(ch * hq + i) * w + col] += ds * kd[(ch * hk + j) * w + col];
                        gk.data_mut()[(ch * hk + j) * w + col] += ds * qd[(ch * hq + i) * w + col];
                    }
                }
            }
        }
    }
    Ok((gq, gk, gv))
}

pub fn softmax_rows_forward(x: &Tensor) -> Result<Tensor> {
    let (_, l) = x.dims2()?;
    if l == 0 {
        return Err(Error::Shape("softmax over empty rows".into()));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(l) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

pub fn softmax_rows_backward(y: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (_, l) = y.dims2()?;
    let mut gx = Tensor::zeros(y.shape());
    for ((dst, yr), gr) in gx.data_mut().chunks_mut(l).zip(y.data().chunks(l)).zip(g.data().chunks(l)) {
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((d, yv), gv) in dst.iter_mut().zip(yr).zip(gr) {
            *d = yv * (gv - inner);
        }
    }
    Ok(gx)
}

/// Row-wise L2 normalization of a `[R, L]` tensor (a vector is one row).
/// Zero rows stay zero; the returned norms let callers flag them.
pub fn l2_rows_forward(x: &Tensor, row_len: usize) -> (Tensor, Vec<f64>) {
    let mut out = x.clone();
    let mut norms = Vec::new();
    for row in out.data_mut().chunks_mut(row_len.max(1)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        norms.push(norm);
    }
    (out, norms)
}

pub fn l2_rows_backward(y: &Tensor, norms: &[f64], row_len: usize, g: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(y.shape());
    let rows = gx.data_mut().chunks_mut(row_len.max(1)).zip(y.data().chunks(row_len.max(1)));
    for (((dst, yr), gr), &norm) in rows.zip(g.data().chunks(row_len.max(1))).zip(norms) {
        if norm == 0.0 {
            continue;
        }
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((d, yv), gv) in dst.iter_mut().zip(yr).zip(gr) {
            *d = (gv - yv * inner) / norm;
        }
    }
    gx
}

/// `y = W x + b` for a vector `x`.
pub fn linear_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (dout, din) = weight.dims2()?;
    if x.numel() != din || bias.shape() != [dout] {
        return Err(Error::Shape(format!(
            "linear {dout}x{din} with input {:?} and bias {:?}",
            x.shape(),
            bias.shape()
        )));
    }
    let out = weight
        .data()
        .chunks(din)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x.data()).fold(*b, |acc, (w, v)| acc + w * v))
        .collect();
    Ok(Tensor::vector(out))
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn linear_backward(x: &Tensor, weight: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (dout, din) = weight.dims2()?;
    let mut gx = vec![0.0; din];
    let mut gw = Tensor::zeros(&[dout, din]);
    for (o, (row, grow)) in weight.data().chunks(din).zip(gw.data_mut().chunks_mut(din)).enumerate() {
        let go = g.data()[o];
        for ((gxv, w), (gwv, xv)) in gx.iter_mut().zip(row).zip(grow.iter_mut().zip(x.data())) {
            *gxv += go * w;
            *gwv = go * xv;
        }
    }
    Ok((Tensor::new(x.shape(), gx)?, gw, g.reshape(&[dout])?))
}

/// NetVLAD residual aggregation.
///
/// `x` is `[D, N]` (one local feature per column), `assign` is `[N, K]`
/// soft assignments, `centers` is `[K, D]`. Output row `k` is
/// `sum_n assign[n, k] * (x[:, n] - centers[k])`, summed in sorted order
/// so any permutation of the columns gives the identical result.
pub fn vlad_forward(x: &Tensor, assign: &Tensor, centers: &Tensor) -> Result<Tensor> {
    let (d, n) = x.dims2()?;
    let (an, k) = assign.dims2()?;
    if an != n || centers.shape() != [k, d] {
        return Err(Error::Shape(format!(
            "VLAD features {:?}, assignments {:?}, centers {:?}",
            x.shape(),
            assign.shape(),
            centers.shape()
        )));
    }
    let (xd, ad, cd) = (x.data(), assign.data(), centers.data());
    let mut out = Tensor::zeros(&[k, d]);
    let mut terms = vec![0.0; n];
    for kk in 0..k {
        for dd in 0..d {
            let c = cd[kk * d + dd];
            for (nn, t) in terms.iter_mut().enumerate() {
                *t = ad[nn * k + kk] * (xd[dd * n + nn] - c);
            }
            out.data_mut()[kk * d + dd] = sorted_sum(&mut terms);
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_assign, grad_centers)`.
pub fn vlad_backward(x: &Tensor, assign: &Tensor, centers: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (d, n) = x.dims2()?;
    let (_, k) = assign.dims2()?;
    let (xd, ad, cd, gd) = (x.data(), assign.data(), centers.data(), g.data());
    let mut gx = Tensor::zeros(x.shape());
    let mut ga = Tensor::zeros(assign.shape());
    let mut gc = Tensor::zeros(centers.shape());
    let mass: Vec<f64> = (0..k).map(|kk| (0..n).map(|nn| ad[nn * k + kk]).sum()).collect();
    for kk in 0..k {
        for dd in 0..d {
            let gv = gd[kk * d + dd];
            let c = cd[kk * d + dd];
            gc.data_mut()[kk * d + dd] = -gv * mass[kk];
            for nn in 0..n {
                gx.data_mut()[dd * n + nn] += gv * ad[nn * k + kk];
                ga.data_mut()[nn * k + kk] += gv * (xd[dd * n + nn] - c);
            }
        }
    }
    Ok((gx, ga, gc))
}

/// Vertical average pooling `[C, H, W] -> [C, 1, W]`.
pub fn mean_h_forward(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    let mut out = Tensor::zeros(&[c, 1, w]);
    for ch in 0..c {
        for col in 0..w {
            let s = (0..h).fold(0.0, |acc, r| acc + x.data()[(ch * h + r) * w + col]);
            out.data_mut()[ch * w + col] = s / h as f64;
        }
    }
    Ok(out)
}

pub fn mean_h_backward(shape: &[usize], g: &Tensor) -> Result<Tensor> {
    let [c, h, w] = *shape else {
        return Err(Error::Shape(format!("mean_h input must be 3-D, got {shape:?}")));
    };
    let mut gx = Tensor::zeros(shape);
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                gx.data_mut()[(ch * h + r) * w + col] = g.data()[ch * w + col] / h as f64;
            }
        }
    }
    Ok(gx)
}

/// Concatenates `[C, H, W_i]` tensors along the width axis.
pub fn concat_w_forward(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::Empty("concatenation"))?;
    let (c, h, _) = first.dims3()?;
    let mut total = 0;
    for p in parts {
        let (pc, ph, pw) = p.dims3()?;
        if pc != c || ph != h {
            return Err(Error::Shape(format!("cannot concatenate {:?} with {:?}", first.shape(), p.shape())));
        }
        total += pw;
    }
    let mut out = Vec::with_capacity(c * h * total);
    for row in 0..c * h {
        for p in parts {
            let pw = p.shape()[2];
            out.extend_from_slice(&p.data()[row * pw..][..pw]);
        }
    }
    Tensor::new(&[c, h, total], out)
}

pub fn concat_w_backward(widths: &[usize], g: &Tensor) -> Result<Vec<Tensor>> {
    let (c, h, total) = g.dims3()?;
    let mut parts: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(c * h * w)).collect();
    for row in g.data().chunks(total) {
        let mut start = 0;
        for (part, &w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&row[start..start + w]);
            start += w;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::new(&[c, h, w], d))
        .collect()
}

pub fn transpose_forward(x: &Tensor) -> Result<Tensor> {
    let (r, l) = x.dims2()?;
    let mut out = Tensor::zeros(&[l, r]);
    for i in 0..r {
        for j in 0..l {
            out.data_mut()[j * r + i] = x.data()[i * l + j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circular_conv_wraps() {
        let x = Tensor::new(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(&[1, 1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = conv2d_forward(&x, &k, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[7.0, 6.0, 9.0, 8.0]);
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(&[1, 2, 3], vec![1.0, -2.0, 3.5, 0.0, 9.0, -1.0]).unwrap();
        let k = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, None, 1, 1).unwrap(), x);
    }

    #[test]
    fn zero_padding_in_height_and_strides() {
        // 3x1 vertical box filter over a single column of ones
        let x = Tensor::full(&[1, 4, 2], 1.0);
        let k = Tensor::full(&[1, 1, 3, 1], 1.0);
        let y = conv2d_forward(&x, &k, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 2.0, 2.0]);
        let y = conv2d_forward(&x, &k, None, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(y.data(), &[2.0, 3.0]);
        // odd height rounds up
        let x = Tensor::full(&[1, 5, 2], 1.0);
        assert_eq!(conv2d_forward(&x, &k, None, 2, 1).unwrap().shape(), &[1, 3, 2]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(&[2, 4, 6]);
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 3, 3, 3]), None, 1, 1).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 2, 3]), None, 1, 1).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 3, 3]), None, 1, 4).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 3, 3]), Some(&Tensor::zeros(&[2])), 1, 1).is_err());
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::full(&[1, 3, 4], 2.5);
        let (y, cache) = instance_norm_forward(&x, &Tensor::vector(vec![1.0]), &Tensor::vector(vec![0.0])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(cache.std, vec![0.0]);
    }

    #[test]
    fn uniform_logits_average_values() {
        let q = Tensor::new(&[2, 3, 1], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let k = Tensor::full(&[2, 4, 1], 0.7);
        let v = Tensor::new(&[2, 4, 1], vec![1.0, 2.0, 3.0, 6.0, 0.0, 0.0, 4.0, 4.0]).unwrap();
        let (out, _) = attention_forward(&q, &k, &v, 1).unwrap();
        for i in 0..3 {
            assert!((out.data()[i] - 3.0).abs() < 1e-12);
            assert!((out.data()[3 + i] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_key_broadcasts_value() {
        let q = Tensor::new(&[1, 3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = Tensor::new(&[1, 1, 2], vec![0.3, -0.2]).unwrap();
        let v = Tensor::new(&[1, 1, 2], vec![7.0, -8.0]).unwrap();
        let (out, _) = attention_forward(&q, &k, &v, 1).unwrap();
        assert_eq!(out.data(), &[7.0, -8.0, 7.0, -8.0, 7.0, -8.0]);
    }

    #[test]
    fn softmax_and_l2_examples() {
        let y = softmax_rows_forward(&Tensor::new(&[1, 4], vec![3.0; 4]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.25; 4]);
        let (n, norms) = l2_rows_forward(&Tensor::vector(vec![3.0, 4.0]), 2);
        assert_eq!(n.data(), &[0.6, 0.8]);
        assert_eq!(norms, vec![5.0]);
        let (z, norms) = l2_rows_forward(&Tensor::vector(vec![0.0, 0.0]), 2);
        assert_eq!(z.data(), &[0.0, 0.0]);
        assert_eq!(norms, vec![0.0]);
    }

    #[test]
    fn vlad_matches_direct_sum() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let a = Tensor::new(&[3, 2], vec![0.5, 0.5, 1.0, 0.0, 0.25, 0.75]).unwrap();
        let c = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = vlad_forward(&x, &a, &c).unwrap();
        // cluster 0: 0.5*(0,-1) + 1*(1,0) + 0.25*(2,1)
        assert_eq!(v.data()[..2], [1.5, -0.25]);
        // cluster 1: 0.5*(1,-2) + 0*(2,-1) + 0.75*(3,0)
        assert_eq!(v.data()[2..], [2.75, -1.0]);
    }

    #[test]
    fn concat_and_transpose() {
        let a = Tensor::new(&[2, 1, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = concat_w_forward(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let parts = concat_w_backward(&[1, 2], &c).unwrap();
        assert_eq!(parts, vec![a, b]);
        let t = transpose_forward(&Tensor::new(&[2, 3], (0..6).map(f64::from).collect()).unwrap()).unwrap();
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }
}
