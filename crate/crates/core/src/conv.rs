//! Strided convolution analysis/synthesis pairs.
//!
//! A [`KernelStack`] holds one dictionary of convolutional kernels together
//! with its stride. [`KernelStack::conv_forward`] is the analysis direction
//! (correlation of the input with every kernel, producing one feature map
//! per kernel); [`KernelStack::conv_transpose`] is the synthesis direction
//! (reconstruction from feature maps). The two are exact linear adjoints:
//! `<conv_forward(x), a> == <x, conv_transpose(a)>` up to rounding, which
//! inference and learning both rely on.
//!
//! Geometry: inputs `[C, H, W]` with `H % stride_h == 0` and
//! `W % stride_w == 0` map to feature maps `[F, H/stride_h, W/stride_w]`.
//! Zero padding of `kernel - stride` total rows/columns (split evenly,
//! extra on the bottom/right) keeps that relationship exact, so the input
//! shape is always recoverable from an activation shape.
//!
//! Every output element is accumulated by a single task in a fixed index
//! order, so results are bitwise identical across thread counts.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{DscError, DscResult};
use crate::tensor::Tensor;

/// Kernel norms below this are considered collapsed and refuse to normalize.
pub const NORM_FLOOR: f64 = 1e-12;

/// A stack of convolutional kernels `[F, C, kh, kw]` plus a stride.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    kernels: Tensor,
    stride: (usize, usize),
}

impl KernelStack {
    /// Wraps a kernel tensor, validating rank and kernel/stride coverage.
    ///
    /// Kernels must be at least as large as the stride in each axis;
    /// otherwise some input samples would never be touched by any kernel
    /// and the geometry would silently drop signal.
    pub fn new(kernels: Tensor, stride: (usize, usize)) -> DscResult<KernelStack> {
        if kernels.shape().len() != 4 {
            return Err(DscError::Geometry(format!(
                "kernel stack must have shape [features, channels, kh, kw], got {:?}",
                kernels.shape()
            )));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(DscError::Geometry(format!(
                "stride must be positive, got ({}, {})",
                sh, sw
            )));
        }
        let kh = kernels.shape()[2];
        let kw = kernels.shape()[3];
        if kh < sh || kw < sw {
            return Err(DscError::Geometry(format!(
                "kernel {}x{} smaller than stride {}x{}: parts of the input would be unreachable",
                kh, kw, sh, sw
            )));
        }
        Ok(KernelStack { kernels, stride })
    }

    /// Gaussian-initialized kernels, each normalized to unit l2 norm.
    pub fn random_unit<R: Rng>(
        features: usize,
        channels: usize,
        kh: usize,
        kw: usize,
        stride: (usize, usize),
        rng: &mut R,
    ) -> DscResult<KernelStack> {
        let len = features * channels * kh * kw;
        let data: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let kernels = Tensor::from_vec(&[features, channels, kh, kw], data)?;
        let mut stack = KernelStack::new(kernels, stride)?;
        stack.normalize_kernels()?;
        Ok(stack)
    }

    pub fn features(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub(crate) fn kernels_mut(&mut self) -> &mut Tensor {
        &mut self.kernels
    }

    /// Top/left zero padding; the bottom/right side gets the remainder.
    pub(crate) fn pad(&self) -> (usize, usize) {
        let (kh, kw) = self.kernel_size();
        let (sh, sw) = self.stride;
        ((kh - sh) / 2, (kw - sw) / 2)
    }

    /// Checks that `shape` is a valid input `[C, H, W]` for this stack.
    pub fn validate_input(&self, shape: &[usize]) -> DscResult<()> {
        if shape.len() != 3 {
            return Err(DscError::Geometry(format!(
                "input must have shape [channels, height, width], got {:?}",
                shape
            )));
        }
        if shape[0] != self.channels() {
            return Err(DscError::Geometry(format!(
                "input has {} channels but kernels expect {}",
                shape[0],
                self.channels()
            )));
        }
        let (sh, sw) = self.stride;
        if shape[1] % sh != 0 || shape[2] % sw != 0 {
            return Err(DscError::Geometry(format!(
                "input {}x{} is not divisible by stride {}x{}",
                shape[1], shape[2], sh, sw
            )));
        }
        Ok(())
    }

    /// Feature-map shape `[F, H/sh, W/sw]` for an input shape `[C, H, W]`.
    pub fn output_shape(&self, input_shape: &[usize]) -> DscResult<Vec<usize>> {
        self.validate_input(input_shape)?;
        let (sh, sw) = self.stride;
        Ok(vec![
            self.features(),
            input_shape[1] / sh,
            input_shape[2] / sw,
        ])
    }

    /// Input shape `[C, ah*sh, aw*sw]` reconstructed by an activation shape.
    pub fn input_shape_for(&self, act_shape: &[usize]) -> DscResult<Vec<usize>> {
        self.validate_activations(act_shape)?;
        let (sh, sw) = self.stride;
        Ok(vec![self.channels(), act_shape[1] * sh, act_shape[2] * sw])
    }

    fn validate_activations(&self, shape: &[usize]) -> DscResult<()> {
        if shape.len() != 3 || shape[0] != self.features() {
            return Err(DscError::Geometry(format!(
                "activations must have shape [{}, h, w], got {:?}",
                self.features(),
                shape
            )));
        }
        Ok(())
    }

    /// Analysis direction: correlates the input with every kernel.
    ///
    /// `out[f, oy, ox] = sum over (c, ky, kx) of
    /// kernels[f, c, ky, kx] * x[c, oy*sh - pad_h + ky, ox*sw - pad_w + kx]`
    /// with zero contribution outside the input. The sum runs in fixed
    /// `(c, ky, kx)` order and each `[oy, ox]` map is owned by one task.
    pub fn conv_forward(&self, x: &Tensor) -> DscResult<Tensor> {
        self.validate_input(x.shape())?;
        let (c_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw) = self.kernel_size();
        let (sh, sw) = self.stride;
        let (pad_h, pad_w) = self.pad();
        let (oh, ow) = (h / sh, w / sw);
        let f_n = self.features();

        let xd = x.data();
        let kd = self.kernels.data();
        let mut out = Tensor::zeros(&[f_n, oh, ow]);
        out.data_mut()
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(f, map)| {
                let kf = &kd[f * c_n * kh * kw..(f + 1) * c_n * kh * kw];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..c_n {
                            let xc = &xd[c * h * w..(c + 1) * h * w];
                            let kc = &kf[c * kh * kw..(c + 1) * kh * kw];
                            for ky in 0..kh {
                                let y = (oy * sh + ky) as isize - pad_h as isize;
                                if y < 0 || y as usize >= h {
                                    continue;
                                }
                                let row = &xc[y as usize * w..(y as usize + 1) * w];
                                let krow = &kc[ky * kw..(ky + 1) * kw];
                                for kx in 0..kw {
                                    let xcol = (ox * sw + kx) as isize - pad_w as isize;
                                    if xcol < 0 || xcol as usize >= w {
                                        continue;
                                    }
                                    acc += krow[kx] * row[xcol as usize];
                                }
                            }
                        }
                        map[oy * ow + ox] = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Synthesis direction: superimposes one scaled kernel per activation.
    ///
    /// Computed in gather form so each input-space element `[c, y, x]` is
    /// accumulated by a single task in fixed `(ky, kx, f)` order, making it
    /// the exact adjoint of [`conv_forward`](Self::conv_forward) while
    /// staying bitwise deterministic under any thread count.
    pub fn conv_transpose(&self, a: &Tensor) -> DscResult<Tensor> {
        self.validate_activations(a.shape())?;
        let (f_n, ah, aw) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        let (kh, kw) = self.kernel_size();
        let (sh, sw) = self.stride;
        let (pad_h, pad_w) = self.pad();
        let (c_n, h, w) = (self.channels(), ah * sh, aw * sw);

        let ad = a.data();
        let kd = self.kernels.data();
        let mut out = Tensor::zeros(&[c_n, h, w]);
        out.data_mut()
            .par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(c, plane)| {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..kh {
                            let t = y + pad_h;
                            if t < ky || (t - ky) % sh != 0 {
                                continue;
                            }
                            let oy = (t - ky) / sh;
                            if oy >= ah {
                                continue;
                            }
                            for kx in 0..kw {
                                let s = x + pad_w;
                                if s < kx || (s - kx) % sw != 0 {
                                    continue;
                                }
                                let ox = (s - kx) / sw;
                                if ox >= aw {
                                    continue;
                                }
                                let kidx = (c * kh + ky) * kw + kx;
                                for f in 0..f_n {
                                    acc += kd[f * c_n * kh * kw + kidx]
                                        * ad[(f * ah + oy) * aw + ox];
                                }
                            }
                        }
                        plane[y * w + x] = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Rescales every kernel to unit l2 norm in place.
    ///
    /// Fails if any kernel norm is below [`NORM_FLOOR`]: a collapsed kernel
    /// cannot be meaningfully renormalized and indicates a broken update.
    pub fn normalize_kernels(&mut self) -> DscResult<()> {
        let per_kernel = self.channels() * self.kernel_size().0 * self.kernel_size().1;
        let features = self.features();
        let data = self.kernels.data_mut();
        for f in 0..features {
            let k = &mut data[f * per_kernel..(f + 1) * per_kernel];
            let norm = k.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
            if norm < NORM_FLOOR {
                return Err(DscError::Geometry(format!(
                    "kernel {} has norm {:.3e}, below the normalization floor",
                    f, norm
                )));
            }
            for v in k.iter_mut() {
                *v /= norm;
            }
        }
        Ok(())
    }

    /// l2 norm of each kernel, in feature order.
    pub fn kernel_norms(&self) -> Vec<f64> {
        let per_kernel = self.channels() * self.kernel_size().0 * self.kernel_size().1;
        let data = self.kernels.data();
        (0..self.features())
            .map(|f| {
                data[f * per_kernel..(f + 1) * per_kernel]
                    .iter()
                    .fold(0.0, |acc, v| acc + v * v)
                    .sqrt()
            })
            .collect()
    }
}
