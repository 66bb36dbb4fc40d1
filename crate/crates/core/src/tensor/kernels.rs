//! Raw convolution and affine kernels over flat slices. Convolutions lower to
//! a matrix product through an im2col buffer per sample.

use super::Element;

/// Output length of a strided, padded convolution along one axis.
pub fn conv_output_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv2dGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dGeom {
    pub fn out_h(&self) -> usize {
        conv_output_len(self.h, self.k, self.stride, self.pad)
    }

    pub fn out_w(&self) -> usize {
        conv_output_len(self.w, self.k, self.stride, self.pad)
    }

    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }
}

fn im2col<S: Element>(x: &[S], g: &Conv2dGeom, cols: &mut [S]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plane = ho * wo;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        dst[oy * wo + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            x[(ci * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            S::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im<S: Element>(cols: &[S], g: &Conv2dGeom, dx: &mut [S]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plane = ho * wo;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dx[(ci * g.h + iy as usize) * g.w + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<S: Element>(x: &[S], wt: &[S], bias: &[S], g: &Conv2dGeom) -> Vec<S> {
    let plane = g.out_h() * g.out_w();
    let patch = g.patch();
    let mut out = vec![S::zero(); g.n * g.o * plane];
    let mut cols = vec![S::zero(); patch * plane];
    for s in 0..g.n {
        im2col(&x[s * g.c * g.h * g.w..(s + 1) * g.c * g.h * g.w], g, &mut cols);
        let y = &mut out[s * g.o * plane..(s + 1) * g.o * plane];
        for (oc, row) in y.chunks_exact_mut(plane).enumerate() {
            row.fill(bias[oc]);
        }
        S::gemm(g.o, patch, plane, S::one(), wt, patch, 1, &cols, plane, 1, S::one(), y, plane, 1);
    }
    out
}

/// Returns `(dx, dw, db)`.
pub(crate) fn conv2d_backward<S: Element>(x: &[S], wt: &[S], dy: &[S], g: &Conv2dGeom) -> (Vec<S>, Vec<S>, Vec<S>) {
    let plane = g.out_h() * g.out_w();
    let patch = g.patch();
    let in_len = g.c * g.h * g.w;
    let mut dx = vec![S::zero(); g.n * in_len];
    let mut dw = vec![S::zero(); g.o * patch];
    let mut db = vec![S::zero(); g.o];
    let mut cols = vec![S::zero(); patch * plane];
    let mut dcols = vec![S::zero(); patch * plane];
    for s in 0..g.n {
        let dys = &dy[s * g.o * plane..(s + 1) * g.o * plane];
        for (oc, row) in dys.chunks_exact(plane).enumerate() {
            db[oc] += row.iter().copied().sum::<S>();
        }
        im2col(&x[s * in_len..(s + 1) * in_len], g, &mut cols);
        // dw += dy · colsᵀ
        S::gemm(g.o, plane, patch, S::one(), dys, plane, 1, &cols, 1, plane, S::one(), &mut dw, patch, 1);
        // dcols = wᵀ · dy
        S::gemm(patch, g.o, plane, S::one(), wt, 1, patch, dys, plane, 1, S::zero(), &mut dcols, plane, 1);
        col2im(&dcols, g, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    (dx, dw, db)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv1dGeom {
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub o: usize,
    pub k: usize,
    pub dilation: usize,
}

/// `cols[(ci·k + i)·l + t] = x[ci, t − dilation·i]`, zero before the start.
fn causal_cols<S: Element>(x: &[S], g: &Conv1dGeom, cols: &mut [S]) {
    for ci in 0..g.c {
        let src = &x[ci * g.l..(ci + 1) * g.l];
        for i in 0..g.k {
            let lag = g.dilation * i;
            let dst = &mut cols[(ci * g.k + i) * g.l..(ci * g.k + i + 1) * g.l];
            let lag = lag.min(g.l);
            dst[..lag].fill(S::zero());
            dst[lag..].copy_from_slice(&src[..g.l - lag]);
        }
    }
}

pub(crate) fn conv1d_forward<S: Element>(x: &[S], wt: &[S], bias: &[S], g: &Conv1dGeom) -> Vec<S> {
    let patch = g.c * g.k;
    let mut out = vec![S::zero(); g.n * g.o * g.l];
    let mut cols = vec![S::zero(); patch * g.l];
    for s in 0..g.n {
        causal_cols(&x[s * g.c * g.l..(s + 1) * g.c * g.l], g, &mut cols);
        let y = &mut out[s * g.o * g.l..(s + 1) * g.o * g.l];
        for (oc, row) in y.chunks_exact_mut(g.l).enumerate() {
            row.fill(bias[oc]);
        }
        S::gemm(g.o, patch, g.l, S::one(), wt, patch, 1, &cols, g.l, 1, S::one(), y, g.l, 1);
    }
    out
}

pub(crate) fn conv1d_backward<S: Element>(x: &[S], wt: &[S], dy: &[S], g: &Conv1dGeom) -> (Vec<S>, Vec<S>, Vec<S>) {
    let patch = g.c * g.k;
    let in_len = g.c * g.l;
    let mut dx = vec![S::zero(); g.n * in_len];
    let mut dw = vec![S::zero(); g.o * patch];
    let mut db = vec![S::zero(); g.o];
    let mut cols = vec![S::zero(); patch * g.l];
    let mut dcols = vec![S::zero(); patch * g.l];
    for s in 0..g.n {
        let dys = &dy[s * g.o * g.l..(s + 1) * g.o * g.l];
        for (oc, row) in dys.chunks_exact(g.l).enumerate() {
            db[oc] += row.iter().copied().sum::<S>();
        }
        causal_cols(&x[s * in_len..(s + 1) * in_len], g, &mut cols);
        S::gemm(g.o, g.l, patch, S::one(), dys, g.l, 1, &cols, 1, g.l, S::one(), &mut dw, patch, 1);
        S::gemm(patch, g.o, g.l, S::one(), wt, 1, patch, dys, g.l, 1, S::zero(), &mut dcols, g.l, 1);
        let dxs = &mut dx[s * in_len..(s + 1) * in_len];
        for ci in 0..g.c {
            for i in 0..g.k {
                let lag = (g.dilation * i).min(g.l);
                let src = &dcols[(ci * g.k + i) * g.l..(ci * g.k + i + 1) * g.l];
                let dst = &mut dxs[ci * g.l..(ci + 1) * g.l];
                for t in lag..g.l {
                    dst[t - lag] += src[t];
                }
            }
        }
    }
    (dx, dw, db)
}

/// `x (n × f) · w (f × o) + b`.
pub(crate) fn dense_forward<S: Element>(x: &[S], wt: &[S], bias: &[S], n: usize, f: usize, o: usize) -> Vec<S> {
    let mut out: Vec<S> = (0..n * o).map(|i| bias[i % o]).collect();
    S::gemm(n, f, o, S::one(), x, f, 1, wt, o, 1, S::one(), &mut out, o, 1);
    out
}

pub(crate) fn dense_backward<S: Element>(
    x: &[S],
    wt: &[S],
    dy: &[S],
    n: usize,
    f: usize,
    o: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut dx = vec![S::zero(); n * f];
    let mut dw = vec![S::zero(); f * o];
    let mut db = vec![S::zero(); o];
    for row in dy.chunks_exact(o) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    // dx = dy · wᵀ, dw = xᵀ · dy
    S::gemm(n, o, f, S::one(), dy, o, 1, wt, 1, o, S::zero(), &mut dx, f, 1);
    S::gemm(f, n, o, S::one(), x, 1, f, dy, o, 1, S::zero(), &mut dw, o, 1);
    (dx, dw, db)
}
