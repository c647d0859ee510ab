//! CPU tensor layers with explicit forward/backward passes.
//!
//! Layers cache whatever the backward pass needs when run through
//! `train_fwd`; `infer` is side-effect free and usable from `&self`.
//! Convolutions lower onto GEMM through an im2col buffer that is chunked by
//! output rows so peak memory stays bounded at large spatial sizes. All
//! reductions run in a fixed order, so identical inputs give bit-identical
//! results.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array4, ArrayViewD, ArrayViewMutD, Axis};
use rand_chacha::ChaCha12Rng;

use super::Element;

/// Upper bound on im2col buffer elements per chunk (~32 MB of f32).
const CHUNK_ELEMS: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Param,
    Buffer,
}

/// Uniform tensor visitation used by the optimizer, checkpoints and tests.
pub(crate) trait Tensors<F: Element> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>));
    /// Visits (parameter, gradient) pairs, parameters mutably.
    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    );
    fn zero_grads(&mut self);
}

fn he_normal<F: Element>(rng: &mut ChaCha12Rng, fan_in: usize) -> F {
    let std = (2.0 / fan_in as f64).sqrt();
    F::standard_normal(rng) * F::from_f64(std)
}

// ---------------------------------------------------------------------------
// Conv2d: k in {1, 3}, stride 1, same padding for k = 3.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct Conv2d<F: Element> {
    pub w: Array4<F>, // (cout, cin, k, k)
    pub b: Array1<F>,
    pub gw: Array4<F>,
    pub gb: Array1<F>,
    k: usize,
    pad: usize,
    cache: Option<Array4<F>>,
}

impl<F: Element> Conv2d<F> {
    pub fn new(cin: usize, cout: usize, k: usize, rng: &mut ChaCha12Rng) -> Self {
        assert!(k == 1 || k == 3, "only 1x1 and 3x3 kernels are used");
        let fan_in = cin * k * k;
        let w = Array4::from_shape_fn((cout, cin, k, k), |_| he_normal(rng, fan_in));
        Self {
            w,
            b: Array1::zeros(cout),
            gw: Array4::zeros((cout, cin, k, k)),
            gb: Array1::zeros(cout),
            k,
            pad: if k == 3 { 1 } else { 0 },
            cache: None,
        }
    }

    /// All-zero weights; used for the final projection so optimization starts
    /// from the uniform prediction.
    pub fn new_zeroed(cin: usize, cout: usize, k: usize) -> Self {
        assert!(k == 1 || k == 3);
        Self {
            w: Array4::zeros((cout, cin, k, k)),
            b: Array1::zeros(cout),
            gw: Array4::zeros((cout, cin, k, k)),
            gb: Array1::zeros(cout),
            k,
            pad: if k == 3 { 1 } else { 0 },
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().1
    }

    fn rows_per_chunk(&self, height: usize, width: usize) -> usize {
        let cin = self.in_channels();
        (CHUNK_ELEMS / (cin * self.k * self.k * width))
            .max(1)
            .min(height)
    }

    fn run(&self, x: &Array4<F>) -> Array4<F> {
        let (n, cin, h, w) = x.dim();
        assert_eq!(cin, self.in_channels(), "conv input channels");
        let cout = self.out_channels();
        let kk = self.k * self.k;
        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, cin * kk))
            .expect("contiguous weights");
        let mut out = Array4::zeros((n, cout, h, w));
        let chunk = self.rows_per_chunk(h, w);
        let mut cols = Array2::zeros((cin * kk, chunk * w));
        for sample in 0..n {
            let mut r0 = 0;
            while r0 < h {
                let rows = chunk.min(h - r0);
                im2col(self.k, self.pad, x, sample, r0, rows, &mut cols);
                let cols_run = cols.slice(s![.., ..rows * w]);
                let mut chunk_out = Array2::zeros((cout, rows * w));
                general_mat_mul(F::one(), &w2, &cols_run, F::zero(), &mut chunk_out);
                chunk_out += &self.b.view().insert_axis(Axis(1));
                out.slice_mut(s![sample, .., r0..r0 + rows, ..]).assign(
                    &chunk_out
                        .into_shape_with_order((cout, rows, w))
                        .expect("chunk output reshape"),
                );
                r0 += rows;
            }
        }
        out
    }

    pub fn infer(&self, x: &Array4<F>) -> Array4<F> {
        self.run(x)
    }

    pub fn train_fwd(&mut self, x: Array4<F>) -> Array4<F> {
        let y = self.run(&x);
        self.cache = Some(x);
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let x = self.cache.take().expect("train_fwd before backward");
        let (n, cin, h, w) = x.dim();
        let cout = self.out_channels();
        let kk = self.k * self.k;

        // Bias gradient: sum over batch and space.
        for co in 0..cout {
            self.gb[co] = self.gb[co] + gy.slice(s![.., co, .., ..]).iter().copied().sum::<F>();
        }

        let chunk = self.rows_per_chunk(h, w);
        let (k, pad) = (self.k, self.pad);
        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, cin * kk))
            .expect("contiguous weights");
        let mut gw2 = self
            .gw
            .view_mut()
            .into_shape_with_order((cout, cin * kk))
            .expect("contiguous weight grads");

        let mut gx = Array4::zeros((n, cin, h, w));
        let mut cols = Array2::zeros((cin * kk, chunk * w));
        for sample in 0..n {
            let mut r0 = 0;
            while r0 < h {
                let rows = chunk.min(h - r0);
                im2col(k, pad, &x, sample, r0, rows, &mut cols);
                let cols_run = cols.slice(s![.., ..rows * w]);
                let gy_chunk = gy
                    .slice(s![sample, .., r0..r0 + rows, ..])
                    .to_owned()
                    .into_shape_with_order((cout, rows * w))
                    .expect("gy chunk reshape");

                // dW += gy . cols^T  (accumulated across samples and chunks)
                general_mat_mul(F::one(), &gy_chunk, &cols_run.t(), F::one(), &mut gw2);

                // dX cols = W^T . gy
                let mut gcols = Array2::zeros((cin * kk, rows * w));
                general_mat_mul(F::one(), &w2.t(), &gy_chunk, F::zero(), &mut gcols);
                col2im(k, pad, &mut gx, sample, r0, rows, &gcols);
                r0 += rows;
            }
        }
        gx
    }
}

/// Fills `cols` (cin*k*k, rows*width) from input rows [r0, r0+rows).
fn im2col<F: Element>(
    k: usize,
    pad: usize,
    x: &Array4<F>,
    n: usize,
    r0: usize,
    rows: usize,
    cols: &mut Array2<F>,
) {
    let (_, cin, h, w) = x.dim();
    cols.slice_mut(s![.., ..rows * w]).fill(F::zero());
    for ci in 0..cin {
        for kr in 0..k {
            for kc in 0..k {
                let row_idx = (ci * k + kr) * k + kc;
                for out_r in r0..r0 + rows {
                    let src_r = out_r as i64 + kr as i64 - pad as i64;
                    if src_r < 0 || src_r >= h as i64 {
                        continue;
                    }
                    // out_c maps to src_c = out_c + kc - pad
                    let shift = kc as i64 - pad as i64;
                    let oc_lo = (-shift).max(0) as usize;
                    let oc_hi = ((w as i64 - shift).min(w as i64)) as usize;
                    if oc_lo >= oc_hi {
                        continue;
                    }
                    let dst_base = (out_r - r0) * w;
                    let src_lo = (oc_lo as i64 + shift) as usize;
                    let src_hi = (oc_hi as i64 + shift) as usize;
                    cols.slice_mut(s![row_idx, dst_base + oc_lo..dst_base + oc_hi])
                        .assign(&x.slice(s![n, ci, src_r as usize, src_lo..src_hi]));
                }
            }
        }
    }
}

/// Scatter-adds `cols` gradients back onto `gx` rows [r0, r0+rows).
fn col2im<F: Element>(
    k: usize,
    pad: usize,
    gx: &mut Array4<F>,
    n: usize,
    r0: usize,
    rows: usize,
    cols: &Array2<F>,
) {
    let (_, cin, h, w) = gx.dim();
    for ci in 0..cin {
        for kr in 0..k {
            for kc in 0..k {
                let row_idx = (ci * k + kr) * k + kc;
                for out_r in r0..r0 + rows {
                    let src_r = out_r as i64 + kr as i64 - pad as i64;
                    if src_r < 0 || src_r >= h as i64 {
                        continue;
                    }
                    let shift = kc as i64 - pad as i64;
                    let oc_lo = (-shift).max(0) as usize;
                    let oc_hi = ((w as i64 - shift).min(w as i64)) as usize;
                    if oc_lo >= oc_hi {
                        continue;
                    }
                    let dst_base = (out_r - r0) * w;
                    let src_lo = (oc_lo as i64 + shift) as usize;
                    let src_hi = (oc_hi as i64 + shift) as usize;
                    let mut target = gx.slice_mut(s![n, ci, src_r as usize, src_lo..src_hi]);
                    target += &cols.slice(s![row_idx, dst_base + oc_lo..dst_base + oc_hi]);
                }
            }
        }
    }
}

impl<F: Element> Tensors<F> for Conv2d<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        f(&format!("{prefix}.weight"), TensorKind::Param, self.w.view().into_dyn());
        f(&format!("{prefix}.bias"), TensorKind::Param, self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        f(&format!("{prefix}.weight"), TensorKind::Param, self.w.view_mut().into_dyn());
        f(&format!("{prefix}.bias"), TensorKind::Param, self.b.view_mut().into_dyn());
    }

    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        f(
            &format!("{prefix}.weight"),
            self.w.view_mut().into_dyn(),
            self.gw.view().into_dyn(),
        );
        f(
            &format!("{prefix}.bias"),
            self.b.view_mut().into_dyn(),
            self.gb.view().into_dyn(),
        );
    }

    fn zero_grads(&mut self) {
        self.gw.fill(F::zero());
        self.gb.fill(F::zero());
    }
}

// ---------------------------------------------------------------------------
// ConvTranspose2x2: learned 2x stride-2 upsampling (no overlap).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct ConvTranspose2x2<F: Element> {
    pub w: Array4<F>, // (cin, cout, 2, 2)
    pub b: Array1<F>,
    pub gw: Array4<F>,
    pub gb: Array1<F>,
    cache: Option<Array4<F>>,
}

impl<F: Element> ConvTranspose2x2<F> {
    pub fn new(cin: usize, cout: usize, rng: &mut ChaCha12Rng) -> Self {
        let fan_in = cin * 4;
        Self {
            w: Array4::from_shape_fn((cin, cout, 2, 2), |_| he_normal(rng, fan_in)),
            b: Array1::zeros(cout),
            gw: Array4::zeros((cin, cout, 2, 2)),
            gb: Array1::zeros(cout),
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn out_channels(&self) -> usize {
        self.w.dim().1
    }

    fn run(&self, x: &Array4<F>) -> Array4<F> {
        let (n, cin, h, w) = x.dim();
        assert_eq!(cin, self.in_channels());
        let cout = self.out_channels();
        let wm = self
            .w
            .view()
            .into_shape_with_order((cin, cout * 4))
            .expect("contiguous weights");
        let mut out = Array4::zeros((n, cout, 2 * h, 2 * w));
        for sample in 0..n {
            let x2 = x
                .slice(s![sample, .., .., ..])
                .into_shape_with_order((cin, h * w))
                .expect("contiguous input");
            let mut m = Array2::zeros((cout * 4, h * w));
            general_mat_mul(F::one(), &wm.t(), &x2, F::zero(), &mut m);
            for co in 0..cout {
                for dr in 0..2 {
                    for dc in 0..2 {
                        let src = m.slice(s![co * 4 + dr * 2 + dc, ..]);
                        let src = src.into_shape_with_order((h, w)).expect("row reshape");
                        let mut dst =
                            out.slice_mut(s![sample, co, dr..2 * h;2, dc..2 * w;2]);
                        dst.assign(&src);
                        dst += self.b[co];
                    }
                }
            }
        }
        out
    }

    pub fn infer(&self, x: &Array4<F>) -> Array4<F> {
        self.run(x)
    }

    pub fn train_fwd(&mut self, x: Array4<F>) -> Array4<F> {
        let y = self.run(&x);
        self.cache = Some(x);
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let x = self.cache.take().expect("train_fwd before backward");
        let (n, cin, h, w) = x.dim();
        let cout = self.out_channels();

        for co in 0..cout {
            self.gb[co] = self.gb[co] + gy.slice(s![.., co, .., ..]).iter().copied().sum::<F>();
        }

        let wm = self
            .w
            .view()
            .into_shape_with_order((cin, cout * 4))
            .expect("contiguous weights");
        let mut gwm = self
            .gw
            .view_mut()
            .into_shape_with_order((cin, cout * 4))
            .expect("contiguous weight grads");

        let mut gx = Array4::zeros((n, cin, h, w));
        for sample in 0..n {
            // Gather gy into the (cout*4, h*w) layout used by the forward GEMM.
            let mut gm = Array2::zeros((cout * 4, h * w));
            for co in 0..cout {
                for dr in 0..2 {
                    for dc in 0..2 {
                        let src = gy.slice(s![sample, co, dr..2 * h;2, dc..2 * w;2]);
                        gm.slice_mut(s![co * 4 + dr * 2 + dc, ..])
                            .assign(&src.to_owned().into_shape_with_order(h * w).unwrap());
                    }
                }
            }
            let x2 = x
                .slice(s![sample, .., .., ..])
                .into_shape_with_order((cin, h * w))
                .expect("contiguous input");
            general_mat_mul(F::one(), &x2, &gm.t(), F::one(), &mut gwm);

            let mut gx2 = Array2::zeros((cin, h * w));
            general_mat_mul(F::one(), &wm, &gm, F::zero(), &mut gx2);
            gx.slice_mut(s![sample, .., .., ..]).assign(
                &gx2.view()
                    .into_shape_with_order((cin, h, w))
                    .expect("gx reshape"),
            );
        }
        gx
    }
}

impl<F: Element> Tensors<F> for ConvTranspose2x2<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        f(&format!("{prefix}.weight"), TensorKind::Param, self.w.view().into_dyn());
        f(&format!("{prefix}.bias"), TensorKind::Param, self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        f(&format!("{prefix}.weight"), TensorKind::Param, self.w.view_mut().into_dyn());
        f(&format!("{prefix}.bias"), TensorKind::Param, self.b.view_mut().into_dyn());
    }

    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        f(
            &format!("{prefix}.weight"),
            self.w.view_mut().into_dyn(),
            self.gw.view().into_dyn(),
        );
        f(
            &format!("{prefix}.bias"),
            self.b.view_mut().into_dyn(),
            self.gb.view().into_dyn(),
        );
    }

    fn zero_grads(&mut self) {
        self.gw.fill(F::zero());
        self.gb.fill(F::zero());
    }
}

// ---------------------------------------------------------------------------
// MaxPool 2x2 stride 2.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub(crate) struct MaxPool2 {
    argmax: Option<Array4<u8>>, // 0..4 encodes (dr, dc); ties take the first
}

impl MaxPool2 {
    pub fn infer<F: Element>(&self, x: &Array4<F>) -> Array4<F> {
        self.pool(x).0
    }

    pub fn train_fwd<F: Element>(&mut self, x: &Array4<F>) -> Array4<F> {
        let (y, argmax) = self.pool(x);
        self.argmax = Some(argmax);
        y
    }

    fn pool<F: Element>(&self, x: &Array4<F>) -> (Array4<F>, Array4<u8>) {
        let (n, c, h, w) = x.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "pool input must be even-sized");
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Array4::zeros((n, c, oh, ow));
        let mut argmax = Array4::zeros((n, c, oh, ow));
        for sn in 0..n {
            for ch in 0..c {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut best = x[(sn, ch, 2 * r, 2 * col)];
                        let mut best_idx = 0u8;
                        for (idx, (dr, dc)) in
                            [(0usize, 1usize), (1, 0), (1, 1)].into_iter().enumerate()
                        {
                            let v = x[(sn, ch, 2 * r + dr, 2 * col + dc)];
                            if v > best {
                                best = v;
                                best_idx = idx as u8 + 1;
                            }
                        }
                        y[(sn, ch, r, col)] = best;
                        argmax[(sn, ch, r, col)] = best_idx;
                    }
                }
            }
        }
        (y, argmax)
    }

    pub fn backward<F: Element>(&mut self, gy: &Array4<F>) -> Array4<F> {
        let argmax = self.argmax.take().expect("train_fwd before backward");
        let (n, c, oh, ow) = gy.dim();
        let mut gx = Array4::zeros((n, c, oh * 2, ow * 2));
        for sn in 0..n {
            for ch in 0..c {
                for r in 0..oh {
                    for col in 0..ow {
                        let idx = argmax[(sn, ch, r, col)] as usize;
                        let (dr, dc) = [(0, 0), (0, 1), (1, 0), (1, 1)][idx];
                        gx[(sn, ch, 2 * r + dr, 2 * col + dc)] = gy[(sn, ch, r, col)];
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling (the "2x2 repeats" scheme).
// ---------------------------------------------------------------------------

pub(crate) fn nearest_up2<F: Element>(x: &Array4<F>) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, 2 * h, 2 * w));
    for dr in 0..2 {
        for dc in 0..2 {
            y.slice_mut(s![.., .., dr..2 * h;2, dc..2 * w;2]).assign(x);
        }
    }
    y
}

pub(crate) fn nearest_up2_backward<F: Element>(gy: &Array4<F>) -> Array4<F> {
    let (n, c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::zeros((n, c, h, w));
    for dr in 0..2 {
        for dc in 0..2 {
            gx += &gy.slice(s![.., .., dr..h2;2, dc..w2;2]);
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// BatchNorm over (N, H, W) per channel.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm2d<F: Element> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub g_gamma: Array1<F>,
    pub g_beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    momentum: F,
    eps: F,
    cache: Option<(Array4<F>, Array1<F>)>, // (xhat, inv_std)
}

impl<F: Element> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: F::from_f64(0.1),
            eps: F::from_f64(1e-5),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn infer(&self, x: &Array4<F>) -> Array4<F> {
        let c = self.channels();
        let mut y = x.clone();
        for ch in 0..c {
            let inv = (self.running_var[ch] + self.eps).sqrt().recip();
            let mean = self.running_mean[ch];
            let gamma = self.gamma[ch];
            let beta = self.beta[ch];
            y.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mean) * inv * gamma + beta);
        }
        y
    }

    pub fn train_fwd(&mut self, x: &Array4<F>) -> Array4<F> {
        let (n, c, h, w) = x.dim();
        let m = F::from_f64((n * h * w) as f64);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(c);
        for ch in 0..c {
            let view = x.slice(s![.., ch, .., ..]);
            let mean = view.iter().copied().sum::<F>() / m;
            let var = view.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / m;
            let inv = (var + self.eps).sqrt().recip();
            inv_std[ch] = inv;
            xhat.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mean) * inv);

            // Running statistics use the unbiased variance.
            let count = (n * h * w) as f64;
            let unbiased = if count > 1.0 {
                var * F::from_f64(count / (count - 1.0))
            } else {
                var
            };
            let keep = F::one() - self.momentum;
            self.running_mean[ch] = keep * self.running_mean[ch] + self.momentum * mean;
            self.running_var[ch] = keep * self.running_var[ch] + self.momentum * unbiased;
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let gamma = self.gamma[ch];
            let beta = self.beta[ch];
            y.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| v * gamma + beta);
        }
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let (xhat, inv_std) = self.cache.take().expect("train_fwd before backward");
        let (n, c, h, w) = gy.dim();
        let m = F::from_f64((n * h * w) as f64);
        let mut gx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let gy_ch = gy.slice(s![.., ch, .., ..]);
            let xhat_ch = xhat.slice(s![.., ch, .., ..]);
            let sum_gy = gy_ch.iter().copied().sum::<F>();
            let sum_gy_xhat = gy_ch
                .iter()
                .zip(xhat_ch.iter())
                .map(|(&g, &xh)| g * xh)
                .sum::<F>();
            self.g_beta[ch] = self.g_beta[ch] + sum_gy;
            self.g_gamma[ch] = self.g_gamma[ch] + sum_gy_xhat;

            let scale = self.gamma[ch] * inv_std[ch] / m;
            let mut gx_ch = gx.slice_mut(s![.., ch, .., ..]);
            ndarray::Zip::from(&mut gx_ch)
                .and(&gy_ch)
                .and(&xhat_ch)
                .for_each(|out, &g, &xh| {
                    *out = scale * (m * g - sum_gy - xh * sum_gy_xhat);
                });
        }
        gx
    }
}

impl<F: Element> Tensors<F> for BatchNorm2d<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        f(&format!("{prefix}.gamma"), TensorKind::Param, self.gamma.view().into_dyn());
        f(&format!("{prefix}.beta"), TensorKind::Param, self.beta.view().into_dyn());
        f(
            &format!("{prefix}.running_mean"),
            TensorKind::Buffer,
            self.running_mean.view().into_dyn(),
        );
        f(
            &format!("{prefix}.running_var"),
            TensorKind::Buffer,
            self.running_var.view().into_dyn(),
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        f(&format!("{prefix}.gamma"), TensorKind::Param, self.gamma.view_mut().into_dyn());
        f(&format!("{prefix}.beta"), TensorKind::Param, self.beta.view_mut().into_dyn());
        f(
            &format!("{prefix}.running_mean"),
            TensorKind::Buffer,
            self.running_mean.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.running_var"),
            TensorKind::Buffer,
            self.running_var.view_mut().into_dyn(),
        );
    }

    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        f(
            &format!("{prefix}.gamma"),
            self.gamma.view_mut().into_dyn(),
            self.g_gamma.view().into_dyn(),
        );
        f(
            &format!("{prefix}.beta"),
            self.beta.view_mut().into_dyn(),
            self.g_beta.view().into_dyn(),
        );
    }

    fn zero_grads(&mut self) {
        self.g_gamma.fill(F::zero());
        self.g_beta.fill(F::zero());
    }
}

// ---------------------------------------------------------------------------
// ReLU and per-pixel log-softmax.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct Relu<F: Element> {
    mask: Option<Array4<F>>,
}

impl<F: Element> Default for Relu<F> {
    fn default() -> Self {
        Self { mask: None }
    }
}

impl<F: Element> Relu<F> {
    pub fn infer(&self, x: &Array4<F>) -> Array4<F> {
        x.mapv(|v| if v > F::zero() { v } else { F::zero() })
    }

    pub fn train_fwd(&mut self, x: &Array4<F>) -> Array4<F> {
        self.mask = Some(x.mapv(|v| if v > F::zero() { F::one() } else { F::zero() }));
        self.infer(x)
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let mask = self.mask.take().expect("train_fwd before backward");
        gy * &mask
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LogSoftmax<F: Element> {
    probs: Option<Array4<F>>,
}

impl<F: Element> Default for LogSoftmax<F> {
    fn default() -> Self {
        Self { probs: None }
    }
}

impl<F: Element> LogSoftmax<F> {
    pub fn run(x: &Array4<F>) -> Array4<F> {
        let (n, c, h, w) = x.dim();
        let mut y = x.clone();
        for sn in 0..n {
            for r in 0..h {
                for col in 0..w {
                    let mut max = x[(sn, 0, r, col)];
                    for ch in 1..c {
                        max = max.max(x[(sn, ch, r, col)]);
                    }
                    let mut sum = F::zero();
                    for ch in 0..c {
                        sum = sum + (x[(sn, ch, r, col)] - max).exp();
                    }
                    let log_z = max + sum.ln();
                    for ch in 0..c {
                        y[(sn, ch, r, col)] = x[(sn, ch, r, col)] - log_z;
                    }
                }
            }
        }
        y
    }

    pub fn train_fwd(&mut self, x: &Array4<F>) -> Array4<F> {
        let y = Self::run(x);
        self.probs = Some(y.mapv(|v| v.exp()));
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let probs = self.probs.take().expect("train_fwd before backward");
        let (n, c, h, w) = gy.dim();
        let mut gx = gy.clone();
        for sn in 0..n {
            for r in 0..h {
                for col in 0..w {
                    let mut total = F::zero();
                    for ch in 0..c {
                        total = total + gy[(sn, ch, r, col)];
                    }
                    for ch in 0..c {
                        gx[(sn, ch, r, col)] =
                            gy[(sn, ch, r, col)] - probs[(sn, ch, r, col)] * total;
                    }
                }
            }
        }
        gx
    }
}
