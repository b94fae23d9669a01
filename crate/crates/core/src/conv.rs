//! im2col-based 2-D convolution and nearest-neighbour upsampling kernels.
//!
//! Activations are `[batch, C·H·W]` (channel-major per sample). Convolution
//! weights are `[out_c, in_c·k·k]`.

use crate::kernels::{self, MatRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn in_features(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_features(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }

    /// Length of one unfolded patch.
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    fn out_hw(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Unfolds one sample into `[out_h·out_w, patch_len]` rows.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (oh, ow, k, p) = (self.out_h(), self.out_w(), self.kernel, self.patch_len());
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut cols[(oy * ow + ox) * p..(oy * ow + ox + 1) * p];
                let mut idx = 0;
                for c in 0..self.in_c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            row[idx] = if iy >= 0
                                && ix >= 0
                                && (iy as usize) < self.in_h
                                && (ix as usize) < self.in_w
                            {
                                x[(c * self.in_h + iy as usize) * self.in_w + ix as usize]
                            } else {
                                0.0
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Folds patch gradients back onto one sample's input gradient.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (oh, ow, k, p) = (self.out_h(), self.out_w(), self.kernel, self.patch_len());
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &cols[(oy * ow + ox) * p..(oy * ow + ox + 1) * p];
                let mut idx = 0;
                for c in 0..self.in_c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0
                                && ix >= 0
                                && (iy as usize) < self.in_h
                                && (ix as usize) < self.in_w
                            {
                                dx[(c * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                    row[idx];
                            }
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Unfolds a whole batch into `[batch·out_hw, patch_len]`.
    pub fn unfold_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let per = self.out_hw() * self.patch_len();
        let inf = self.in_features();
        let mut cols = vec![0.0; batch * per];
        kernels::for_each_chunk(&mut cols, per, batch * per, |i, c| {
            self.im2col(&x[i * inf..(i + 1) * inf], c)
        });
        cols
    }

    /// Forward pass: returns `[batch, out_c·out_h·out_w]`.
    pub fn forward(&self, x: &[f64], batch: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let cols = self.unfold_batch(x, batch);
        let (hw, p, oc) = (self.out_hw(), self.patch_len(), self.out_c);
        // patches[b·hw + s, o] = Σ_p cols[b·hw + s, p] · W[o, p]
        let rows = batch * hw;
        let mut patches = vec![0.0; rows * oc];
        kernels::gemm(
            rows,
            p,
            oc,
            1.0,
            MatRef::new(&cols, p),
            MatRef::transposed(weight, p),
            0.0,
            &mut patches,
        );
        let mut out = vec![0.0; batch * oc * hw];
        kernels::for_each_chunk(&mut out, oc * hw, batch * oc * hw, |b, o| {
            for s in 0..hw {
                let src = &patches[(b * hw + s) * oc..(b * hw + s + 1) * oc];
                for (c, &v) in src.iter().enumerate() {
                    o[c * hw + s] = v + bias[c];
                }
            }
        });
        out
    }

    /// Backward pass. Returns `(dx, dweight, dbias)`.
    pub fn backward(
        &self,
        x: &[f64],
        batch: usize,
        weight: &[f64],
        dout: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (hw, p, oc) = (self.out_hw(), self.patch_len(), self.out_c);
        let rows = batch * hw;
        // Reorder dout to patch-major [b·hw + s, o].
        let mut dpatch = vec![0.0; rows * oc];
        kernels::for_each_chunk(&mut dpatch, hw * oc, rows * oc, |b, d| {
            let src = &dout[b * oc * hw..(b + 1) * oc * hw];
            for s in 0..hw {
                for c in 0..oc {
                    d[s * oc + c] = src[c * hw + s];
                }
            }
        });
        let mut dbias = vec![0.0; oc];
        for r in 0..rows {
            for (c, db) in dbias.iter_mut().enumerate() {
                *db += dpatch[r * oc + c];
            }
        }
        let cols = self.unfold_batch(x, batch);
        // dW[o, p] = Σ_r dpatch[r, o] · cols[r, p]
        let mut dweight = vec![0.0; oc * p];
        kernels::gemm(
            oc,
            rows,
            p,
            1.0,
            MatRef::transposed(&dpatch, oc),
            MatRef::new(&cols, p),
            0.0,
            &mut dweight,
        );
        // dcols[r, p] = Σ_o dpatch[r, o] · W[o, p]
        let mut dcols = vec![0.0; rows * p];
        kernels::gemm(
            rows,
            oc,
            p,
            1.0,
            MatRef::new(&dpatch, oc),
            MatRef::new(weight, p),
            0.0,
            &mut dcols,
        );
        let inf = self.in_features();
        let mut dx = vec![0.0; batch * inf];
        kernels::for_each_chunk(&mut dx, inf, batch * hw * p, |b, d| {
            self.col2im(&dcols[b * hw * p..(b + 1) * hw * p], d)
        });
        (dx, dweight, dbias)
    }
}

/// Nearest-neighbour ×2 upsampling of `[batch, c·h·w]`.
pub fn upsample2x(x: &[f64], batch: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; batch * c * oh * ow];
    kernels::for_each_chunk(&mut out, c * oh * ow, batch * c * oh * ow, |b, o| {
        let src = &x[b * c * h * w..(b + 1) * c * h * w];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    o[(ch * oh + y) * ow + xx] = src[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
    });
    out
}

/// Gradient of [`upsample2x`].
pub fn upsample2x_backward(dout: &[f64], batch: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![0.0; batch * c * h * w];
    kernels::for_each_chunk(&mut dx, c * h * w, batch * c * oh * ow, |b, d| {
        let src = &dout[b * c * oh * ow..(b + 1) * c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    d[(ch * h + y / 2) * w + xx / 2] += src[(ch * oh + y) * ow + xx];
                }
            }
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn direct(g: &ConvGeometry, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
        let mut out = vec![0.0; g.out_features()];
        for o in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..g.in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy as usize >= g.in_h || ix as usize >= g.in_w {
                                    continue;
                                }
                                acc += w[o * g.patch_len() + (c * k + ky) * k + kx]
                                    * x[(c * g.in_h + iy as usize) * g.in_w + ix as usize];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let g = ConvGeometry {
            in_c: 2,
            in_h: 7,
            in_w: 6,
            out_c: 3,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..g.in_features()).map(|i| (i as f64 * 0.3).sin()).collect();
        let w: Vec<f64> = (0..g.out_c * g.patch_len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let got = g.forward(&x, 1, &w, &b);
        let want = direct(&g, &x, &w, &b);
        assert_eq!(got.len(), want.len());
        for (a, e) in got.iter().zip(&want) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_roundtrip_sums() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let up = upsample2x(&x, 1, 1, 2, 2);
        assert_eq!(up.len(), 16);
        assert_eq!(up[0..4], [1.0, 1.0, 2.0, 2.0]);
        let back = upsample2x_backward(&up, 1, 1, 2, 2);
        assert_eq!(back, vec![4.0, 8.0, 12.0, 16.0]);
    }
}
