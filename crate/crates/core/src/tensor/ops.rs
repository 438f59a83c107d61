//! Differentiable ops. Each method computes its output eagerly and registers
//! a backward closure; closures read parent values live (parents are not
//! mutated between forward and backward within a step) and keep private
//! copies of anything else they need.

use super::Tensor;

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

// ── raw matrix kernels ──────────────────────────────────────────────────
// ikj loop order keeps the inner loop a contiguous fused multiply-add, which
// the compiler vectorizes; the accumulation order over k is fixed.

fn mm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a [m,k] @ b^T` where `b` is stored `[n,k]`.
fn mm_a_bt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

/// `a^T @ b` where `a` is stored `[r,m]` and `b` `[r,n]`; accumulates into
/// `out [m,n]` which must be zeroed by the caller.
fn mm_at_b_accum(a: &[f32], b: &[f32], r: usize, m: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    for row in 0..r {
        let arow = &a[row * m..(row + 1) * m];
        let brow = &b[row * n..(row + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) {
    assert!(
        a.shape() == b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

fn sigmoid_stable(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    // ── arithmetic ──────────────────────────────────────────────────────

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, rhs: &Tensor) -> Tensor {
        same_shape("add", self, rhs);
        let data: Vec<f32> = self.with_data(|a| {
            rhs.with_data(|b| a.iter().zip(b).map(|(x, y)| x + y).collect())
        });
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "add",
            vec![self.clone(), rhs.clone()],
            shape,
            data,
            Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        )
    }

    /// Elementwise difference.
    pub fn sub(&self, rhs: &Tensor) -> Tensor {
        same_shape("sub", self, rhs);
        let data: Vec<f32> = self.with_data(|a| {
            rhs.with_data(|b| a.iter().zip(b).map(|(x, y)| x - y).collect())
        });
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "sub",
            vec![self.clone(), rhs.clone()],
            shape,
            data,
            Box::new(|g| {
                vec![
                    Some(g.to_vec()),
                    Some(g.iter().map(|v| -v).collect()),
                ]
            }),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor) -> Tensor {
        same_shape("mul", self, rhs);
        let data: Vec<f32> = self.with_data(|a| {
            rhs.with_data(|b| a.iter().zip(b).map(|(x, y)| x * y).collect())
        });
        let shape = self.shape().to_vec();
        let lhs = self.clone();
        let rhs_c = rhs.clone();
        Tensor::from_op(
            "mul",
            vec![self.clone(), rhs.clone()],
            shape,
            data,
            Box::new(move |g| {
                let ga = rhs_c.with_data(|b| g.iter().zip(b).map(|(gv, bv)| gv * bv).collect());
                let gb = lhs.with_data(|a| g.iter().zip(a).map(|(gv, av)| gv * av).collect());
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    /// Adds a constant to every element.
    pub fn add_scalar(&self, c: f32) -> Tensor {
        let data: Vec<f32> = self.with_data(|a| a.iter().map(|v| v + c).collect());
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "add_scalar",
            vec![self.clone()],
            shape,
            data,
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Multiplies every element by a constant.
    pub fn mul_scalar(&self, c: f32) -> Tensor {
        let data: Vec<f32> = self.with_data(|a| a.iter().map(|v| v * c).collect());
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "mul_scalar",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| vec![Some(g.iter().map(|v| v * c).collect())]),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    /// Broadcast-multiplies by a single-element tensor, differentiable in
    /// both operands. The scale gradient is the full dot product `sum(g * x)`.
    pub fn scale_by(&self, scale: &Tensor) -> Tensor {
        assert!(
            scale.numel() == 1,
            "scale_by: scale must hold one element, got shape {:?}",
            scale.shape()
        );
        let s = scale.item();
        let data: Vec<f32> = self.with_data(|a| a.iter().map(|v| v * s).collect());
        let shape = self.shape().to_vec();
        let lhs = self.clone();
        Tensor::from_op(
            "scale_by",
            vec![self.clone(), scale.clone()],
            shape,
            data,
            Box::new(move |g| {
                let gx = g.iter().map(|v| v * s).collect();
                let gs = lhs.with_data(|a| {
                    let mut acc = 0.0f32;
                    for (gv, av) in g.iter().zip(a) {
                        acc += gv * av;
                    }
                    vec![acc]
                });
                vec![Some(gx), Some(gs)]
            }),
        )
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    pub fn exp(&self) -> Tensor {
        let data: Vec<f32> = self.with_data(|a| a.iter().map(|v| v.exp()).collect());
        let saved = data.clone();
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "exp",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| vec![Some(g.iter().zip(&saved).map(|(gv, yv)| gv * yv).collect())]),
        )
    }

    /// `ln(1 + e^x)`, evaluated in the overflow-safe form.
    pub fn softplus(&self) -> Tensor {
        let data: Vec<f32> =
            self.with_data(|a| a.iter().map(|&v| v.max(0.0) + (-v.abs()).exp().ln_1p()).collect());
        let shape = self.shape().to_vec();
        let x = self.clone();
        Tensor::from_op(
            "softplus",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let gx = x.with_data(|a| {
                    g.iter().zip(a).map(|(gv, &av)| gv * sigmoid_stable(av)).collect()
                });
                vec![Some(gx)]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f32> = self.with_data(|a| a.iter().map(|&v| sigmoid_stable(v)).collect());
        let saved = data.clone();
        let shape = self.shape().to_vec();
        Tensor::from_op(
            "sigmoid",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                vec![Some(
                    g.iter().zip(&saved).map(|(gv, &y)| gv * y * (1.0 - y)).collect(),
                )]
            }),
        )
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Tensor {
        let sig: Vec<f32> = self.with_data(|a| a.iter().map(|&v| sigmoid_stable(v)).collect());
        let data: Vec<f32> = self.with_data(|a| a.iter().zip(&sig).map(|(&v, &s)| v * s).collect());
        let shape = self.shape().to_vec();
        let x = self.clone();
        Tensor::from_op(
            "silu",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let gx = x.with_data(|a| {
                    g.iter()
                        .zip(a)
                        .zip(&sig)
                        .map(|((gv, &av), &s)| gv * s * (1.0 + av * (1.0 - s)))
                        .collect()
                });
                vec![Some(gx)]
            }),
        )
    }

    // ── axis reductions and normalizations ──────────────────────────────

    /// Softmax along `axis`; each lane sums to one.
    pub fn softmax(&self, axis: usize) -> Tensor {
        let (data, _) = self.softmax_lanes(axis, false);
        let saved = data.clone();
        let shape = self.shape().to_vec();
        let lanes = lane_iter(self.shape(), axis);
        Tensor::from_op(
            "softmax",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; g.len()];
                for lane in lanes.clone() {
                    let mut dot = 0.0f32;
                    for i in lane.clone() {
                        dot += g[i] * saved[i];
                    }
                    for i in lane {
                        gx[i] = saved[i] * (g[i] - dot);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Log-softmax along `axis`; numerically stable log of [`Tensor::softmax`].
    pub fn log_softmax(&self, axis: usize) -> Tensor {
        let (data, _) = self.softmax_lanes(axis, true);
        let saved = data.clone();
        let shape = self.shape().to_vec();
        let lanes = lane_iter(self.shape(), axis);
        Tensor::from_op(
            "log_softmax",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; g.len()];
                for lane in lanes.clone() {
                    let mut gsum = 0.0f32;
                    for i in lane.clone() {
                        gsum += g[i];
                    }
                    for i in lane {
                        gx[i] = g[i] - saved[i].exp() * gsum;
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    fn softmax_lanes(&self, axis: usize, log: bool) -> (Vec<f32>, ()) {
        assert!(
            axis < self.rank(),
            "softmax: axis {axis} out of range for shape {:?}",
            self.shape()
        );
        let mut data = self.to_vec();
        for lane in lane_iter(self.shape(), axis) {
            let mut max = f32::NEG_INFINITY;
            for i in lane.clone() {
                max = max.max(data[i]);
            }
            let mut sum = 0.0f32;
            for i in lane.clone() {
                sum += (data[i] - max).exp();
            }
            if log {
                let lse = max + sum.ln();
                for i in lane {
                    data[i] -= lse;
                }
            } else {
                for i in lane {
                    data[i] = (data[i] - max).exp() / sum;
                }
            }
        }
        (data, ())
    }

    /// Group normalization over the trailing axis, statistics per position.
    ///
    /// The channel axis is split into `groups` equal parts; mean and variance
    /// are taken within each part independently for every leading position,
    /// so nothing mixes across positions. `gamma` and `beta` are per-channel.
    pub fn group_norm(&self, groups: usize, gamma: &Tensor, beta: &Tensor, eps: f32) -> Tensor {
        let rank = self.rank();
        assert!(rank >= 1, "group_norm: scalar input");
        let dim = self.shape()[rank - 1];
        assert!(
            groups >= 1 && dim.is_multiple_of(groups),
            "group_norm: {groups} groups do not divide channel width {dim}"
        );
        assert!(
            gamma.shape() == [dim] && beta.shape() == [dim],
            "group_norm: affine shapes {:?}/{:?} do not match channel width {dim}",
            gamma.shape(),
            beta.shape()
        );
        let rows = self.numel() / dim.max(1);
        let m = dim / groups;
        let mut data = self.to_vec();
        let mut xhat = vec![0.0f32; data.len()];
        let mut inv_std = vec![0.0f32; rows * groups];
        gamma.with_data(|gm| {
            beta.with_data(|bt| {
                for r in 0..rows {
                    for gidx in 0..groups {
                        let base = r * dim + gidx * m;
                        let mut mean = 0.0f32;
                        for i in 0..m {
                            mean += data[base + i];
                        }
                        mean /= m as f32;
                        let mut var = 0.0f32;
                        for i in 0..m {
                            let d = data[base + i] - mean;
                            var += d * d;
                        }
                        var /= m as f32;
                        let inv = 1.0 / (var + eps).sqrt();
                        inv_std[r * groups + gidx] = inv;
                        for i in 0..m {
                            let xh = (data[base + i] - mean) * inv;
                            xhat[base + i] = xh;
                            data[base + i] = gm[gidx * m + i] * xh + bt[gidx * m + i];
                        }
                    }
                }
            })
        });
        let shape = self.shape().to_vec();
        let gamma_c = gamma.clone();
        Tensor::from_op(
            "group_norm",
            vec![self.clone(), gamma.clone(), beta.clone()],
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; g.len()];
                let mut ggamma = vec![0.0f32; dim];
                let mut gbeta = vec![0.0f32; dim];
                gamma_c.with_data(|gm| {
                    for r in 0..rows {
                        for gidx in 0..groups {
                            let base = r * dim + gidx * m;
                            let inv = inv_std[r * groups + gidx];
                            let mut mean_gh = 0.0f32;
                            let mut mean_ghx = 0.0f32;
                            for i in 0..m {
                                let gh = g[base + i] * gm[gidx * m + i];
                                mean_gh += gh;
                                mean_ghx += gh * xhat[base + i];
                            }
                            mean_gh /= m as f32;
                            mean_ghx /= m as f32;
                            for i in 0..m {
                                let gh = g[base + i] * gm[gidx * m + i];
                                gx[base + i] =
                                    inv * (gh - mean_gh - xhat[base + i] * mean_ghx);
                                ggamma[gidx * m + i] += g[base + i] * xhat[base + i];
                                gbeta[gidx * m + i] += g[base + i];
                            }
                        }
                    }
                });
                vec![Some(gx), Some(ggamma), Some(gbeta)]
            }),
        )
    }

    // ── linear maps ─────────────────────────────────────────────────────

    /// Rank-2 matrix product `[m,k] x [k,n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        assert!(
            self.rank() == 2 && rhs.rank() == 2,
            "matmul: expected rank-2 operands, got {:?} and {:?}",
            self.shape(),
            rhs.shape()
        );
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (rhs.shape()[0], rhs.shape()[1]);
        assert!(
            k == k2,
            "matmul: inner dimensions differ, {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );
        let mut data = vec![0.0f32; m * n];
        self.with_data(|a| rhs.with_data(|b| mm(a, b, m, k, n, &mut data)));
        let lhs = self.clone();
        let rhs_c = rhs.clone();
        Tensor::from_op(
            "matmul",
            vec![self.clone(), rhs.clone()],
            vec![m, n],
            data,
            Box::new(move |g| {
                let mut ga = vec![0.0f32; m * k];
                let mut gb = vec![0.0f32; k * n];
                rhs_c.with_data(|b| mm_a_bt(g, b, m, n, k, &mut ga));
                lhs.with_data(|a| mm_at_b_accum(a, g, m, k, n, &mut gb));
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    /// Applies `x @ w + b` to the trailing axis: the pointwise (1x1)
    /// convolution. `w` is `[in, out]`, `b` is `[out]`, every leading axis is
    /// treated as a batch of rows.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Tensor {
        let rank = self.rank();
        assert!(rank >= 1, "linear: scalar input");
        let dim_in = self.shape()[rank - 1];
        assert!(
            w.rank() == 2 && w.shape()[0] == dim_in,
            "linear: weight {:?} does not accept inputs with trailing width {dim_in}",
            w.shape()
        );
        let dim_out = w.shape()[1];
        if let Some(bias) = b {
            assert!(
                bias.shape() == [dim_out],
                "linear: bias {:?} does not match output width {dim_out}",
                bias.shape()
            );
        }
        let rows = self.numel() / dim_in.max(1);
        let mut data = vec![0.0f32; rows * dim_out];
        self.with_data(|x| w.with_data(|wv| mm(x, wv, rows, dim_in, dim_out, &mut data)));
        if let Some(bias) = b {
            bias.with_data(|bv| {
                for row in data.chunks_exact_mut(dim_out) {
                    for (o, &add) in row.iter_mut().zip(bv) {
                        *o += add;
                    }
                }
            });
        }
        let mut shape = self.shape()[..rank - 1].to_vec();
        shape.push(dim_out);
        let x_c = self.clone();
        let w_c = w.clone();
        let has_bias = b.is_some();
        let mut parents = vec![self.clone(), w.clone()];
        if let Some(bias) = b {
            parents.push(bias.clone());
        }
        Tensor::from_op(
            "linear",
            parents,
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; rows * dim_in];
                let mut gw = vec![0.0f32; dim_in * dim_out];
                w_c.with_data(|wv| mm_a_bt(g, wv, rows, dim_out, dim_in, &mut gx));
                x_c.with_data(|x| mm_at_b_accum(x, g, rows, dim_in, dim_out, &mut gw));
                let mut grads = vec![Some(gx), Some(gw)];
                if has_bias {
                    let mut gb = vec![0.0f32; dim_out];
                    for row in g.chunks_exact(dim_out) {
                        for (acc, &gv) in gb.iter_mut().zip(row) {
                            *acc += gv;
                        }
                    }
                    grads.push(Some(gb));
                }
                grads
            }),
        )
    }

    /// Depthwise causal 1-d convolution over `[batch, length, channels]`.
    ///
    /// Each channel has its own kernel of `width` taps; position `t` sees
    /// inputs `t-width+1..=t` with zero padding on the left, so output `t`
    /// never depends on later positions.
    pub fn conv1d_depthwise_causal(&self, weight: &Tensor, bias: &Tensor) -> Tensor {
        assert!(
            self.rank() == 3,
            "conv1d_depthwise_causal: expected [batch, length, channels], got {:?}",
            self.shape()
        );
        let (b, l, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        assert!(
            weight.rank() == 2 && weight.shape()[0] == c,
            "conv1d_depthwise_causal: weight {:?} does not match {c} channels",
            weight.shape()
        );
        let width = weight.shape()[1];
        assert!(
            bias.shape() == [c],
            "conv1d_depthwise_causal: bias {:?} does not match {c} channels",
            bias.shape()
        );
        let mut data = vec![0.0f32; b * l * c];
        self.with_data(|x| {
            weight.with_data(|wv| {
                bias.with_data(|bv| {
                    for bb in 0..b {
                        for t in 0..l {
                            let out = &mut data[(bb * l + t) * c..(bb * l + t + 1) * c];
                            for (ch, o) in out.iter_mut().enumerate() {
                                let mut acc = bv[ch];
                                for j in 0..width {
                                    let s = t as isize - (width as isize - 1) + j as isize;
                                    if s >= 0 {
                                        acc += wv[ch * width + j]
                                            * x[(bb * l + s as usize) * c + ch];
                                    }
                                }
                                *o = acc;
                            }
                        }
                    }
                })
            })
        });
        let x_c = self.clone();
        let w_c = weight.clone();
        Tensor::from_op(
            "conv1d_depthwise_causal",
            vec![self.clone(), weight.clone(), bias.clone()],
            vec![b, l, c],
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; b * l * c];
                let mut gw = vec![0.0f32; c * width];
                let mut gb = vec![0.0f32; c];
                x_c.with_data(|x| {
                    w_c.with_data(|wv| {
                        for bb in 0..b {
                            for t in 0..l {
                                for ch in 0..c {
                                    let gv = g[(bb * l + t) * c + ch];
                                    gb[ch] += gv;
                                    for j in 0..width {
                                        let s = t as isize - (width as isize - 1) + j as isize;
                                        if s >= 0 {
                                            let s = s as usize;
                                            gx[(bb * l + s) * c + ch] += gv * wv[ch * width + j];
                                            gw[ch * width + j] += gv * x[(bb * l + s) * c + ch];
                                        }
                                    }
                                }
                            }
                        }
                    })
                });
                vec![Some(gx), Some(gw), Some(gb)]
            }),
        )
    }

    // ── shape manipulation ──────────────────────────────────────────────

    /// Reinterprets the row-major data under a new shape of equal size.
    pub fn reshape(&self, new_shape: &[usize]) -> Tensor {
        let numel: usize = new_shape.iter().product();
        assert!(
            numel == self.numel(),
            "reshape: cannot view {:?} as {:?}",
            self.shape(),
            new_shape
        );
        Tensor::from_op(
            "reshape",
            vec![self.clone()],
            new_shape.to_vec(),
            self.to_vec(),
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Reorders axes; `perm[d]` names the source axis that lands at `d`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        let rank = self.rank();
        assert!(
            perm.len() == rank && {
                let mut seen = vec![false; rank];
                perm.iter().all(|&p| p < rank && !std::mem::replace(&mut seen[p], true))
            },
            "permute: {:?} is not a permutation of {rank} axes",
            perm
        );
        let shape = self.shape().to_vec();
        let data = self.with_data(|x| permute_raw(x, &shape, perm));
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let mut inverse = vec![0usize; rank];
        for (d, &p) in perm.iter().enumerate() {
            inverse[p] = d;
        }
        let out_shape_c = out_shape.clone();
        Tensor::from_op(
            "permute",
            vec![self.clone()],
            out_shape,
            data,
            Box::new(move |g| vec![Some(permute_raw(g, &out_shape_c, &inverse))]),
        )
    }

    /// Copies the half-open range `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Tensor {
        let rank = self.rank();
        assert!(axis < rank, "slice: axis {axis} out of range for shape {:?}", self.shape());
        let len = self.shape()[axis];
        assert!(
            start <= end && end <= len,
            "slice: range {start}..{end} outside axis of length {len}"
        );
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let take = end - start;
        let mut data = vec![0.0f32; outer * take * inner];
        self.with_data(|x| {
            for o in 0..outer {
                let src = (o * len + start) * inner;
                let dst = o * take * inner;
                data[dst..dst + take * inner].copy_from_slice(&x[src..src + take * inner]);
            }
        });
        let mut shape = self.shape().to_vec();
        shape[axis] = take;
        let full = self.numel();
        Tensor::from_op(
            "slice",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; full];
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    let src = o * take * inner;
                    gx[dst..dst + take * inner].copy_from_slice(&g[src..src + take * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Joins tensors along `axis`; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Tensor {
        assert!(!parts.is_empty(), "concat: no tensors given");
        let rank = parts[0].rank();
        assert!(axis < rank, "concat: axis {axis} out of range for rank {rank}");
        for p in parts {
            assert!(
                p.rank() == rank
                    && p.shape()
                        .iter()
                        .zip(parts[0].shape())
                        .enumerate()
                        .all(|(d, (a, b))| d == axis || a == b),
                "concat: incompatible shapes {:?} and {:?} along axis {axis}",
                parts[0].shape(),
                p.shape()
            );
        }
        let outer: usize = parts[0].shape()[..axis].iter().product();
        let inner: usize = parts[0].shape()[axis + 1..].iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0f32; outer * total * inner];
        let mut offset = 0usize;
        for (p, &w) in parts.iter().zip(&widths) {
            p.with_data(|x| {
                for o in 0..outer {
                    let dst = (o * total + offset) * inner;
                    let src = o * w * inner;
                    data[dst..dst + w * inner].copy_from_slice(&x[src..src + w * inner]);
                }
            });
            offset += w;
        }
        let mut shape = parts[0].shape().to_vec();
        shape[axis] = total;
        Tensor::from_op(
            "concat",
            parts.to_vec(),
            shape,
            data,
            Box::new(move |g| {
                let mut grads = Vec::with_capacity(widths.len());
                let mut offset = 0usize;
                for &w in &widths {
                    let mut gp = vec![0.0f32; outer * w * inner];
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * w * inner;
                        gp[dst..dst + w * inner].copy_from_slice(&g[src..src + w * inner]);
                    }
                    grads.push(Some(gp));
                    offset += w;
                }
                grads
            }),
        )
    }

    // ── reductions ──────────────────────────────────────────────────────

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor {
        let total = self.with_data(|x| x.iter().sum::<f32>());
        let n = self.numel();
        Tensor::from_op(
            "sum",
            vec![self.clone()],
            vec![1],
            vec![total],
            Box::new(move |g| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Arithmetic mean of all elements, shape `[1]`.
    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        assert!(n > 0, "mean: empty tensor");
        let total = self.with_data(|x| x.iter().sum::<f32>());
        Tensor::from_op(
            "mean",
            vec![self.clone()],
            vec![1],
            vec![total / n as f32],
            Box::new(move |g| vec![Some(vec![g[0] / n as f32; n])]),
        )
    }

    // ── gathers ─────────────────────────────────────────────────────────

    /// Selects rows (leading-axis slices) by index; duplicates allowed.
    /// Unselected rows receive an exactly zero gradient.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        assert!(self.rank() >= 1, "gather_rows: scalar input");
        let rows = self.shape()[0];
        let width = self.numel() / rows.max(1);
        for (pos, &i) in idx.iter().enumerate() {
            assert!(i < rows, "gather_rows: index {i} at position {pos} outside {rows} rows");
        }
        let mut data = vec![0.0f32; idx.len() * width];
        self.with_data(|x| {
            for (dst, &i) in idx.iter().enumerate() {
                data[dst * width..(dst + 1) * width]
                    .copy_from_slice(&x[i * width..(i + 1) * width]);
            }
        });
        let mut shape = self.shape().to_vec();
        shape[0] = idx.len();
        let idx_c = idx.to_vec();
        let full = self.numel();
        Tensor::from_op(
            "gather_rows",
            vec![self.clone()],
            shape,
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; full];
                for (src, &i) in idx_c.iter().enumerate() {
                    for w in 0..width {
                        gx[i * width + w] += g[src * width + w];
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Picks one column per row of a rank-2 tensor: `out[r] = x[r, cols[r]]`.
    pub fn take_per_row(&self, cols: &[usize]) -> Tensor {
        assert!(
            self.rank() == 2,
            "take_per_row: expected rank-2 input, got {:?}",
            self.shape()
        );
        let (rows, width) = (self.shape()[0], self.shape()[1]);
        assert!(
            cols.len() == rows,
            "take_per_row: {} indices for {rows} rows",
            cols.len()
        );
        for (r, &c) in cols.iter().enumerate() {
            assert!(c < width, "take_per_row: column {c} at row {r} outside width {width}");
        }
        let data = self.with_data(|x| {
            cols.iter().enumerate().map(|(r, &c)| x[r * width + c]).collect::<Vec<f32>>()
        });
        let cols_c = cols.to_vec();
        Tensor::from_op(
            "take_per_row",
            vec![self.clone()],
            vec![rows],
            data,
            Box::new(move |g| {
                let mut gx = vec![0.0f32; rows * width];
                for (r, &c) in cols_c.iter().enumerate() {
                    gx[r * width + c] += g[r];
                }
                vec![Some(gx)]
            }),
        )
    }
}

/// Materializes a permutation of axes on raw data.
fn permute_raw(data: &[f32], shape: &[usize], perm: &[usize]) -> Vec<f32> {
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let out_len: usize = out_shape.iter().product();
    let mut out = vec![0.0f32; out_len];
    // Walk output positions in order, mapping each multi-index back to the
    // source; assignment order is therefore fixed.
    let mut idx = vec![0usize; rank];
    for o in out.iter_mut() {
        let mut src = 0usize;
        for d in 0..rank {
            src += idx[d] * in_strides[perm[d]];
        }
        *o = data[src];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Flat-index ranges that walk one lane along `axis` at a time.
#[derive(Clone)]
pub(crate) struct LaneIter {
    outer: usize,
    len: usize,
    inner: usize,
    next: usize,
}

pub(crate) fn lane_iter(shape: &[usize], axis: usize) -> LaneIter {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    LaneIter { outer, len: shape[axis], inner, next: 0 }
}

impl Iterator for LaneIter {
    type Item = StridedRange;

    fn next(&mut self) -> Option<StridedRange> {
        if self.next >= self.outer * self.inner {
            return None;
        }
        let o = self.next / self.inner;
        let i = self.next % self.inner;
        self.next += 1;
        Some(StridedRange { base: o * self.len * self.inner + i, stride: self.inner, len: self.len, pos: 0 })
    }
}

/// Flat indices `base, base+stride, ...` of one lane.
#[derive(Clone)]
pub(crate) struct StridedRange {
    base: usize,
    stride: usize,
    len: usize,
    pos: usize,
}

impl Iterator for StridedRange {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.pos >= self.len {
            return None;
        }
        let i = self.base + self.pos * self.stride;
        self.pos += 1;
        Some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;

    fn assert_close(got: &[f32], want: &[f32], tol: f32) {
        assert_eq!(got.len(), want.len());
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            assert!(
                (g - w).abs() <= tol,
                "element {i}: got {g}, want {w} (tolerance {tol})"
            );
        }
    }

    #[test]
    fn silu_fixed_points() {
        let x = Tensor::from_vec(vec![0.0, 1.0, -1.0], &[3]);
        let y = x.silu().to_vec();
        assert_eq!(y[0], 0.0);
        assert_close(&[y[1]], &[0.731_058_6], 1e-6);
        assert_close(&[y[2]], &[-0.268_941_4], 1e-6);
    }

    #[test]
    fn softmax_of_constants_is_uniform() {
        let x = Tensor::from_vec(vec![3.5; 8], &[2, 4]);
        let y = x.softmax(1).to_vec();
        assert_close(&y, &[0.25; 8], 1e-6);
    }

    #[test]
    fn softmax_lanes_sum_to_one_any_axis() {
        let x = Tensor::from_vec((0..24).map(|v| (v as f32 * 0.37).sin()).collect(), &[2, 3, 4]);
        for axis in 0..3 {
            let y = x.softmax(axis);
            let shape = y.shape().to_vec();
            let data = y.to_vec();
            for lane in super::lane_iter(&shape, axis) {
                let total: f32 = lane.map(|i| data[i]).sum();
                assert!((total - 1.0).abs() < 1e-6, "axis {axis}: lane sums to {total}");
            }
        }
    }

    #[test]
    fn group_norm_matches_direct_statistics() {
        // One row, two groups of three; compare against a direct evaluation.
        let vals = vec![1.0f32, 2.0, 3.0, 10.0, 20.0, 60.0];
        let x = Tensor::from_vec(vals.clone(), &[1, 6]);
        let gamma = Tensor::from_vec(vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0], &[6]);
        let beta = Tensor::from_vec(vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.0], &[6]);
        let eps = 1e-5;
        let y = x.group_norm(2, &gamma, &beta, eps).to_vec();
        let mut want = vec![0.0f32; 6];
        for g in 0..2 {
            let part = &vals[g * 3..(g + 1) * 3];
            let mean = part.iter().sum::<f32>() / 3.0;
            let var = part.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 3.0;
            for i in 0..3 {
                want[g * 3 + i] = (part[i] - mean) / (var + eps).sqrt();
            }
        }
        want[2] *= 2.0;
        want[1] += 0.5;
        assert_close(&y, &want, 1e-5);
    }

    #[test]
    fn group_norm_rows_do_not_interact() {
        // Changing one row must leave the other row's output bits alone.
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], &[2, 4]);
        let b = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, -9.0, 0.0, 7.0, 3.0], &[2, 4]);
        let gamma = Tensor::from_vec(vec![1.0; 4], &[4]);
        let beta = Tensor::zeros(&[4]);
        let ya = a.group_norm(2, &gamma, &beta, 1e-5).to_vec();
        let yb = b.group_norm(2, &gamma, &beta, 1e-5).to_vec();
        assert_eq!(ya[..4], yb[..4]);
    }

    #[test]
    fn matmul_small_known_product() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::from_vec(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]);
        assert_eq!(a.matmul(&b).to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn linear_broadcasts_over_leading_axes() {
        let x = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0], &[1, 3, 2]);
        let w = Tensor::from_vec(vec![1.0, 10.0, 100.0, 2.0, 20.0, 200.0], &[2, 3]);
        let b = Tensor::from_vec(vec![0.5, 0.0, -1.0], &[3]);
        let y = x.linear(&w, Some(&b));
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(
            y.to_vec(),
            vec![1.5, 10.0, 99.0, 2.5, 20.0, 199.0, 6.5, 60.0, 599.0]
        );
    }

    #[test]
    fn conv1d_is_causal() {
        // Perturbing position t must not change outputs before t.
        let base: Vec<f32> = (0..10).map(|v| (v as f32 * 0.71).cos()).collect();
        let mut bumped = base.clone();
        bumped[6] += 5.0;
        let w = Tensor::from_vec(vec![0.3, -0.2, 0.9, 0.1], &[1, 4]);
        let bias = Tensor::from_vec(vec![0.05], &[1]);
        let ya = Tensor::from_vec(base, &[1, 10, 1]).conv1d_depthwise_causal(&w, &bias).to_vec();
        let yb = Tensor::from_vec(bumped, &[1, 10, 1]).conv1d_depthwise_causal(&w, &bias).to_vec();
        assert_eq!(ya[..6], yb[..6]);
        assert_ne!(ya[6], yb[6]);
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let x = Tensor::from_vec((0..24).map(|v| v as f32).collect(), &[2, 3, 4]);
        let y = x.permute(&[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        let back = y.permute(&[1, 2, 0]);
        assert_eq!(back.to_vec(), x.to_vec());
    }

    #[test]
    fn slice_concat_round_trip() {
        let x = Tensor::from_vec((0..12).map(|v| v as f32).collect(), &[2, 6]);
        let left = x.slice(1, 0, 2);
        let right = x.slice(1, 2, 6);
        let joined = Tensor::concat(&[left, right], 1);
        assert_eq!(joined.to_vec(), x.to_vec());
    }

    #[test]
    fn product_rule_through_mul() {
        // d/dx sum(x*x) = 2x.
        let x = Tensor::param(vec![1.0, 2.0, 3.0], &[3]);
        x.mul(&x).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn gather_leaves_unselected_rows_at_exact_zero() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]);
        x.gather_rows(&[2]).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "add: shape mismatch")]
    fn mismatched_shapes_are_rejected() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        a.add(&b);
    }

    #[test]
    #[should_panic(expected = "group_norm: 5 groups do not divide channel width 12")]
    fn group_norm_rejects_indivisible_groups() {
        let x = Tensor::zeros(&[1, 12]);
        let gamma = Tensor::full(&[12], 1.0);
        let beta = Tensor::zeros(&[12]);
        x.group_norm(5, &gamma, &beta, 1e-5);
    }
}
