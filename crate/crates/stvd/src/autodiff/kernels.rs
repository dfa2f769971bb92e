//! Dense compute kernels behind the tape ops.
//!
//! All kernels use fixed sequential reduction orders; parallelism is only
//! over disjoint output planes, so results are bit-identical to sequential
//! execution regardless of thread count. Backward kernels accumulate (`+=`)
//! into their output buffers.

use rayon::prelude::*;

use super::Scalar;

/// Cross-correlation, stride 1. `x` is `(n, ci, h, w)`, `wgt` is
/// `(co, ci, kh, kw)`, `bias` is `(co)`, output `(n, co, oh, ow)` with
/// `oh = h + 2*pad - kh + 1`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_fwd<S: Scalar>(
    x: &[S],
    _n: usize,
    ci: usize,
    h: usize,
    w: usize,
    wgt: &[S],
    bias: &[S],
    co: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    y: &mut [S],
) {
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    y.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, yp)| {
        let nn = plane / co;
        let oc = plane % co;
        yp.fill(bias[oc]);
        for ic in 0..ci {
            let xp = &x[(nn * ci + ic) * h * w..][..h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wgt[((oc * ci + ic) * kh + ky) * kw + kx];
                    let (oy_lo, oy_hi) = valid_range(oh, h, ky, pad);
                    let (ox_lo, ox_hi) = valid_range(ow, w, kx, pad);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let len = ox_hi - ox_lo;
                    for oy in oy_lo..oy_hi {
                        let iy = oy + ky - pad;
                        let ix0 = ox_lo + kx - pad;
                        let yrow = &mut yp[oy * ow + ox_lo..][..len];
                        let xrow = &xp[iy * w + ix0..][..len];
                        for (a, &b) in yrow.iter_mut().zip(xrow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    });
}

/// Output positions `o` with `o + k - pad` inside `[0, input_dim)`.
fn valid_range(out_dim: usize, in_dim: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (in_dim + pad).saturating_sub(k).min(out_dim);
    (lo, hi.max(lo))
}

/// Gradient wrt the convolution input. Accumulates into `dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_input<S: Scalar>(
    dy: &[S],
    _n: usize,
    ci: usize,
    h: usize,
    w: usize,
    wgt: &[S],
    co: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    dx: &mut [S],
) {
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dxp)| {
        let nn = plane / ci;
        let ic = plane % ci;
        for oc in 0..co {
            let dyp = &dy[(nn * co + oc) * oh * ow..][..oh * ow];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wgt[((oc * ci + ic) * kh + ky) * kw + kx];
                    let (oy_lo, oy_hi) = valid_range(oh, h, ky, pad);
                    let (ox_lo, ox_hi) = valid_range(ow, w, kx, pad);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let len = ox_hi - ox_lo;
                    for oy in oy_lo..oy_hi {
                        let iy = oy + ky - pad;
                        let ix0 = ox_lo + kx - pad;
                        let drow = &mut dxp[iy * w + ix0..][..len];
                        let dyrow = &dyp[oy * ow + ox_lo..][..len];
                        for (a, &g) in drow.iter_mut().zip(dyrow) {
                            *a += wv * g;
                        }
                    }
                }
            }
        }
    });
}

/// Gradients wrt convolution weights and bias. Accumulates into `dw`/`db`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_params<S: Scalar>(
    x: &[S],
    dy: &[S],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    dw: &mut [S],
    db: &mut [S],
) {
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    dw.par_chunks_mut(ci * kh * kw)
        .zip(db.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (dwc, dbc))| {
            for nn in 0..n {
                let dyp = &dy[(nn * co + oc) * oh * ow..][..oh * ow];
                let mut bsum = S::zero();
                for &g in dyp {
                    bsum += g;
                }
                *dbc += bsum;
                for ic in 0..ci {
                    let xp = &x[(nn * ci + ic) * h * w..][..h * w];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let (oy_lo, oy_hi) = valid_range(oh, h, ky, pad);
                            let (ox_lo, ox_hi) = valid_range(ow, w, kx, pad);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let len = ox_hi - ox_lo;
                            let mut acc = S::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - pad;
                                let ix0 = ox_lo + kx - pad;
                                let xrow = &xp[iy * w + ix0..][..len];
                                let dyrow = &dyp[oy * ow + ox_lo..][..len];
                                for (&xv, &g) in xrow.iter().zip(dyrow) {
                                    acc += xv * g;
                                }
                            }
                            dwc[(ic * kh + ky) * kw + kx] += acc;
                        }
                    }
                }
            }
        });
}

/// Transposed convolution with square kernel `k` and stride `k` (disjoint
/// tiling). `x` is `(n, ci, h, w)`, `wgt` is `(ci, co, k, k)`, output
/// `(n, co, h*k, w*k)`.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_fwd<S: Scalar>(
    x: &[S],
    _n: usize,
    ci: usize,
    h: usize,
    w: usize,
    wgt: &[S],
    bias: &[S],
    co: usize,
    k: usize,
    y: &mut [S],
) {
    let (oh, ow) = (h * k, w * k);
    y.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, yp)| {
        let nn = plane / co;
        let oc = plane % co;
        yp.fill(bias[oc]);
        for ic in 0..ci {
            let xp = &x[(nn * ci + ic) * h * w..][..h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wgt[((ic * co + oc) * k + ky) * k + kx];
                    for iy in 0..h {
                        let xrow = &xp[iy * w..][..w];
                        let yrow = &mut yp[(iy * k + ky) * ow..][..ow];
                        for (ix, &xv) in xrow.iter().enumerate() {
                            yrow[ix * k + kx] += wv * xv;
                        }
                    }
                }
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_bwd_input<S: Scalar>(
    dy: &[S],
    _n: usize,
    ci: usize,
    h: usize,
    w: usize,
    wgt: &[S],
    co: usize,
    k: usize,
    dx: &mut [S],
) {
    let (oh, ow) = (h * k, w * k);
    dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dxp)| {
        let nn = plane / ci;
        let ic = plane % ci;
        for oc in 0..co {
            let dyp = &dy[(nn * co + oc) * oh * ow..][..oh * ow];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wgt[((ic * co + oc) * k + ky) * k + kx];
                    for iy in 0..h {
                        let dyrow = &dyp[(iy * k + ky) * ow..][..ow];
                        let dxrow = &mut dxp[iy * w..][..w];
                        for (ix, d) in dxrow.iter_mut().enumerate() {
                            *d += wv * dyrow[ix * k + kx];
                        }
                    }
                }
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_bwd_params<S: Scalar>(
    x: &[S],
    dy: &[S],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    dw: &mut [S],
    db: &mut [S],
) {
    let (oh, ow) = (h * k, w * k);
    dw.par_chunks_mut(co * k * k).enumerate().for_each(|(ic, dwc)| {
        for nn in 0..n {
            let xp = &x[(nn * ci + ic) * h * w..][..h * w];
            for oc in 0..co {
                let dyp = &dy[(nn * co + oc) * oh * ow..][..oh * ow];
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = S::zero();
                        for iy in 0..h {
                            let xrow = &xp[iy * w..][..w];
                            let dyrow = &dyp[(iy * k + ky) * ow..][..ow];
                            for (ix, &xv) in xrow.iter().enumerate() {
                                acc += xv * dyrow[ix * k + kx];
                            }
                        }
                        dwc[(oc * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    });
    db.par_iter_mut().enumerate().for_each(|(oc, dbc)| {
        let mut acc = S::zero();
        for nn in 0..n {
            for &g in &dy[(nn * co + oc) * oh * ow..][..oh * ow] {
                acc += g;
            }
        }
        *dbc += acc;
    });
}

/// 2x2 max pooling, stride 2. Records the plane-local flat argmax per
/// output element; ties go to the first index in row-major scan order.
pub fn maxpool2_fwd<S: Scalar>(
    x: &[S],
    planes: usize,
    h: usize,
    w: usize,
    y: &mut [S],
    argmax: &mut [u32],
) {
    let (oh, ow) = (h / 2, w / 2);
    y.par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(plane, (yp, ap))| {
            debug_assert!(plane < planes);
            let xp = &x[plane * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = (2 * oy) * w + 2 * ox;
                    let mut best = xp[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * oy + dy) * w + 2 * ox + dx;
                        if xp[idx] > best {
                            best = xp[idx];
                            best_idx = idx;
                        }
                    }
                    yp[oy * ow + ox] = best;
                    ap[oy * ow + ox] = best_idx as u32;
                }
            }
        });
}

pub fn maxpool2_bwd<S: Scalar>(
    dy: &[S],
    planes: usize,
    h: usize,
    w: usize,
    argmax: &[u32],
    dx: &mut [S],
) {
    let (oh, ow) = (h / 2, w / 2);
    dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dxp)| {
        debug_assert!(plane < planes);
        let dyp = &dy[plane * oh * ow..][..oh * ow];
        let ap = &argmax[plane * oh * ow..][..oh * ow];
        for (i, &g) in dyp.iter().enumerate() {
            dxp[ap[i] as usize] += g;
        }
    });
}
