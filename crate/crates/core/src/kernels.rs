//! Raw forward and backward kernels over flat row-major buffers.
//!
//! Shapes are validated by the callers in [`crate::graph`]; these functions assume them.

/// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` of size `m x k` and `op(b)` of size `k x n`.
/// Strides are given in elements so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the strides address `a` as an m x k matrix and `b` as k x n, both in bounds for
    // the slices the callers pass; `c` is a dense m x n row-major buffer of sufficient length.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Strides for reading a row-major buffer with `cols` columns as stored.
pub(crate) fn row_major(cols: usize) -> (isize, isize) {
    (cols as isize, 1)
}

/// Strides for reading a row-major buffer with `stored_cols` columns as its transpose.
pub(crate) fn transposed(stored_cols: usize) -> (isize, isize) {
    (1, stored_cols as isize)
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a, row_major(k), b, row_major(n), 0.0, &mut out);
    out
}

/// Output extent of a stride-equals-kernel pooling window with a ragged tail.
pub(crate) fn pooled_extent(len: usize, kernel: usize) -> usize {
    len.div_ceil(kernel)
}

pub(crate) fn avg_pool_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let (oh, ow) = (pooled_extent(h, kh), pooled_extent(w, kw));
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        let (y0, y1) = (oy * kh, ((oy + 1) * kh).min(h));
        for ox in 0..ow {
            let (x0, x1) = (ox * kw, ((ox + 1) * kw).min(w));
            let cell = &mut out[(oy * ow + ox) * c..][..c];
            for y in y0..y1 {
                for xx in x0..x1 {
                    let src = &x[(y * w + xx) * c..][..c];
                    for (o, s) in cell.iter_mut().zip(src) {
                        *o += s;
                    }
                }
            }
            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
            cell.iter_mut().for_each(|v| *v *= inv);
        }
    }
    out
}

pub(crate) fn avg_pool_backward(
    grad_out: &[f64],
    (h, w, c): (usize, usize, usize),
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let (oh, ow) = (pooled_extent(h, kh), pooled_extent(w, kw));
    let mut dx = vec![0.0; h * w * c];
    for oy in 0..oh {
        let (y0, y1) = (oy * kh, ((oy + 1) * kh).min(h));
        for ox in 0..ow {
            let (x0, x1) = (ox * kw, ((ox + 1) * kw).min(w));
            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
            let g = &grad_out[(oy * ow + ox) * c..][..c];
            for y in y0..y1 {
                for xx in x0..x1 {
                    let dst = &mut dx[(y * w + xx) * c..][..c];
                    for (d, gv) in dst.iter_mut().zip(g) {
                        *d += gv * inv;
                    }
                }
            }
        }
    }
    dx
}

/// Unfolds `x` (h x w x cin) into an `(h*w) x (kh*kw*cin)` patch matrix with zero "same" padding.
pub(crate) fn im2col(x: &[f64], (h, w, cin): (usize, usize, usize), kh: usize, kw: usize) -> Vec<f64> {
    let (ph, pw) = (kh / 2, kw / 2);
    let kdim = kh * kw * cin;
    let mut cols = vec![0.0; h * w * kdim];
    for y in 0..h {
        for xx in 0..w {
            let row = &mut cols[(y * w + xx) * kdim..][..kdim];
            for dy in 0..kh {
                let sy = y as isize + dy as isize - ph as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in 0..kw {
                    let sx = xx as isize + dx as isize - pw as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = &x[(sy as usize * w + sx as usize) * cin..][..cin];
                    row[(dy * kw + dx) * cin..][..cin].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input grid.
pub(crate) fn col2im(
    dcols: &[f64],
    (h, w, cin): (usize, usize, usize),
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let (ph, pw) = (kh / 2, kw / 2);
    let kdim = kh * kw * cin;
    let mut dx = vec![0.0; h * w * cin];
    for y in 0..h {
        for xx in 0..w {
            let row = &dcols[(y * w + xx) * kdim..][..kdim];
            for dy in 0..kh {
                let sy = y as isize + dy as isize - ph as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx_ in 0..kw {
                    let sx = xx as isize + dx_ as isize - pw as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let dst = &mut dx[(sy as usize * w + sx as usize) * cin..][..cin];
                    for (d, g) in dst.iter_mut().zip(&row[(dy * kw + dx_) * cin..][..cin]) {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

/// Interpolation taps for one axis under half-pixel centers (align-corners off).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_hi: f64,
}

pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            if src == dst {
                return Tap { lo: i, hi: i, w_hi: 0.0 };
            }
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            Tap {
                lo,
                hi,
                w_hi: pos - lo as f64,
            }
        })
        .collect()
}

pub(crate) fn bilinear_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    if (h, w) == (out_h, out_w) {
        return x.to_vec();
    }
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut out = vec![0.0; out_h * out_w * c];
    for (oy, a) in ty.iter().enumerate() {
        for (ox, b) in tx.iter().enumerate() {
            let corners = [
                (a.lo, b.lo, (1.0 - a.w_hi) * (1.0 - b.w_hi)),
                (a.lo, b.hi, (1.0 - a.w_hi) * b.w_hi),
                (a.hi, b.lo, a.w_hi * (1.0 - b.w_hi)),
                (a.hi, b.hi, a.w_hi * b.w_hi),
            ];
            let dst = &mut out[(oy * out_w + ox) * c..][..c];
            for (sy, sx, wt) in corners {
                if wt == 0.0 {
                    continue;
                }
                let src = &x[(sy * w + sx) * c..][..c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
    }
    out
}

pub(crate) fn bilinear_backward(
    grad_out: &[f64],
    (h, w, c): (usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    if (h, w) == (out_h, out_w) {
        return grad_out.to_vec();
    }
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut dx = vec![0.0; h * w * c];
    for (oy, a) in ty.iter().enumerate() {
        for (ox, b) in tx.iter().enumerate() {
            let corners = [
                (a.lo, b.lo, (1.0 - a.w_hi) * (1.0 - b.w_hi)),
                (a.lo, b.hi, (1.0 - a.w_hi) * b.w_hi),
                (a.hi, b.lo, a.w_hi * (1.0 - b.w_hi)),
                (a.hi, b.hi, a.w_hi * b.w_hi),
            ];
            let g = &grad_out[(oy * out_w + ox) * c..][..c];
            for (sy, sx, wt) in corners {
                if wt == 0.0 {
                    continue;
                }
                let dst = &mut dx[(sy * w + sx) * c..][..c];
                for (d, gv) in dst.iter_mut().zip(g) {
                    *d += wt * gv;
                }
            }
        }
    }
    dx
}

pub(crate) fn softmax_rows(x: &[f64], row: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for r in out.chunks_mut(row) {
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        r.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

pub(crate) fn softmax_rows_backward(y: &[f64], dy: &[f64], row: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for ((yr, gr), dr) in y.chunks(row).zip(dy.chunks(row)).zip(dx.chunks_mut(row)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((d, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
            *d = yv * (gv - dot);
        }
    }
    dx
}

pub(crate) const L2_EPS: f64 = 1e-12;

/// Returns the normalized rows and the per-row divisors `max(||row||, eps)`.
pub(crate) fn l2_normalize_rows(x: &[f64], row: usize) -> (Vec<f64>, Vec<f64>) {
    let mut out = x.to_vec();
    let mut divisors = Vec::with_capacity(x.len() / row.max(1));
    for r in out.chunks_mut(row) {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(L2_EPS);
        r.iter_mut().for_each(|v| *v /= norm);
        divisors.push(norm);
    }
    (out, divisors)
}

pub(crate) fn l2_normalize_rows_backward(
    y: &[f64],
    divisors: &[f64],
    dy: &[f64],
    row: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for (((yr, gr), dr), &n) in y
        .chunks(row)
        .zip(dy.chunks(row))
        .zip(dx.chunks_mut(row))
        .zip(divisors)
    {
        if n > L2_EPS {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((d, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                *d = (gv - yv * dot) / n;
            }
        } else {
            // clamped divisor is constant
            for (d, gv) in dr.iter_mut().zip(gr) {
                *d = gv / n;
            }
        }
    }
    dx
}
