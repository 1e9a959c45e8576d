//! Reverse-mode autodiff over [`Tensor`] values.
//!
//! A [`Tape`] is built fresh for every optimization step: leaves are inserted
//! for data and parameters, ops are appended in evaluation order, and
//! [`Tape::backward`] walks the nodes in reverse to produce gradients for
//! every node that (transitively) requires them. Gradient work is skipped for
//! subgraphs that cannot reach a parameter, which is what makes detached
//! discriminator inputs and frozen-network forwards cheap.
//!
//! Every op has a fixed accumulation order, so tape evaluation is
//! bit-deterministic for a given graph; batch items are processed in
//! parallel only where their outputs are disjoint.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, dims: ConvDims },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    Softplus { x: Var },
    InstanceNorm { x: Var, stats: Vec<(T, T)> },
    GlobalAvgPool { x: Var },
    MulChannelGate { x: Var, gate: Var },
    PixelShuffle { x: Var, r: usize },
    MeanAll { x: Var },
    MeanAbs { x: Var },
    /// Broadcast-subtract a one-element tensor.
    SubScalar { x: Var, s: Var },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Numerically stable `log(1 + exp(x))`.
pub fn stable_softplus<T: Element>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
pub fn stable_sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.push(Op::Leaf, value, needs_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(va.shape(), data);
        let needs = self.needs_grad(a) || self.needs_grad(b);
        self.push(Op::Add(a, b), value, needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect();
        let value = Tensor::new(va.shape(), data);
        let needs = self.needs_grad(a) || self.needs_grad(b);
        self.push(Op::Sub(a, b), value, needs)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        let needs = self.needs_grad(x);
        self.push(Op::Scale(x, c), value, needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        let needs = self.needs_grad(x);
        self.push(Op::LeakyRelu { x, slope }, value, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        let needs = self.needs_grad(x);
        self.push(Op::Sigmoid { x }, value, needs)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_softplus);
        let needs = self.needs_grad(x);
        self.push(Op::Softplus { x }, value, needs)
    }

    /// Per-(batch, channel) normalization over the spatial extent, no affine
    /// parameters.
    pub fn instance_norm(&mut self, x: Var, eps: T) -> Var {
        let vx = self.value(x);
        let [b, c, h, w] = vx.shape();
        let n = h * w;
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut data = vec![T::zero(); vx.numel()];
        let mut stats = Vec::with_capacity(b * c);
        for bc in 0..b * c {
            let src = &vx.data()[bc * n..(bc + 1) * n];
            let mut mean = T::zero();
            for &v in src {
                mean += v;
            }
            mean *= inv_n;
            let mut var = T::zero();
            for &v in src {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let inv_std = T::one() / (var + eps).sqrt();
            for (o, &v) in data[bc * n..(bc + 1) * n].iter_mut().zip(src) {
                *o = (v - mean) * inv_std;
            }
            stats.push((mean, inv_std));
        }
        let value = Tensor::new([b, c, h, w], data);
        let needs = self.needs_grad(x);
        self.push(Op::InstanceNorm { x, stats }, value, needs)
    }

    /// `(b, c, h, w)` -> `(b, c, 1, 1)` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let [b, c, h, w] = vx.shape();
        let n = h * w;
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut data = Vec::with_capacity(b * c);
        for bc in 0..b * c {
            let mut acc = T::zero();
            for &v in &vx.data()[bc * n..(bc + 1) * n] {
                acc += v;
            }
            data.push(acc * inv_n);
        }
        let value = Tensor::new([b, c, 1, 1], data);
        let needs = self.needs_grad(x);
        self.push(Op::GlobalAvgPool { x }, value, needs)
    }

    /// Channel-wise gating: `y[b,c,h,w] = x[b,c,h,w] * gate[b,c,0,0]`.
    pub fn mul_channel_gate(&mut self, x: Var, gate: Var) -> Var {
        let (vx, vg) = (self.value(x), self.value(gate));
        let [b, c, h, w] = vx.shape();
        assert_eq!(vg.shape(), [b, c, 1, 1], "gate shape mismatch");
        let n = h * w;
        let mut data = vec![T::zero(); vx.numel()];
        for bc in 0..b * c {
            let g = vg.data()[bc];
            for (o, &v) in data[bc * n..(bc + 1) * n].iter_mut().zip(&vx.data()[bc * n..(bc + 1) * n]) {
                *o = v * g;
            }
        }
        let value = Tensor::new([b, c, h, w], data);
        let needs = self.needs_grad(x) || self.needs_grad(gate);
        self.push(Op::MulChannelGate { x, gate }, value, needs)
    }

    /// Sub-pixel rearrangement `(b, c*r^2, h, w)` -> `(b, c, h*r, w*r)`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Var {
        let vx = self.value(x);
        let [b, c_in, h, w] = vx.shape();
        assert!(c_in % (r * r) == 0, "pixel_shuffle channels {c_in} not divisible by {}", r * r);
        let c = c_in / (r * r);
        let (ho, wo) = (h * r, w * r);
        let mut data = vec![T::zero(); b * c * ho * wo];
        for bi in 0..b {
            for ci in 0..c {
                for dy in 0..r {
                    for dx in 0..r {
                        let src_c = ci * r * r + dy * r + dx;
                        for y in 0..h {
                            let src_row = ((bi * c_in + src_c) * h + y) * w;
                            let dst_row = ((bi * c + ci) * ho + y * r + dy) * wo + dx;
                            for x_ in 0..w {
                                data[dst_row + x_ * r] = vx.data()[src_row + x_];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new([b, c, ho, wo], data);
        let needs = self.needs_grad(x);
        self.push(Op::PixelShuffle { x, r }, value, needs)
    }

    /// Mean over every element, as a `(1,1,1,1)` tensor.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let inv_n = T::one() / T::from_f64(vx.numel() as f64);
        let mut acc = T::zero();
        for &v in vx.data() {
            acc += v;
        }
        let value = Tensor::scalar(acc * inv_n);
        let needs = self.needs_grad(x);
        self.push(Op::MeanAll { x }, value, needs)
    }

    /// Mean of absolute values, as a `(1,1,1,1)` tensor.
    pub fn mean_abs(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let inv_n = T::one() / T::from_f64(vx.numel() as f64);
        let mut acc = T::zero();
        for &v in vx.data() {
            acc += v.abs();
        }
        let value = Tensor::scalar(acc * inv_n);
        let needs = self.needs_grad(x);
        self.push(Op::MeanAbs { x }, value, needs)
    }

    /// Broadcast `x - s` where `s` is a one-element tensor.
    pub fn sub_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let value = self.value(x).map(|v| v - sv);
        let needs = self.needs_grad(x) || self.needs_grad(s);
        self.push(Op::SubScalar { x, s }, value, needs)
    }

    /// 2-D convolution with square kernel, symmetric zero padding and bias.
    ///
    /// `layer` names the op in shape errors.
    pub fn conv2d(&mut self, layer: &str, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let [batch, c_in, h, wd] = vx.shape();
        let [c_out, wc_in, k, k2] = vw.shape();
        if k != k2 {
            return Err(Error::shape(layer, format!("non-square kernel {k}x{k2}")));
        }
        if wc_in != c_in {
            return Err(Error::shape(
                layer,
                format!("input has {c_in} channels but weight expects {wc_in}"),
            ));
        }
        if vb.shape() != [1, c_out, 1, 1] {
            return Err(Error::shape(layer, format!("bias shape {:?} != [1,{c_out},1,1]", vb.shape())));
        }
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::shape(
                layer,
                format!("input {h}x{wd} with pad {pad} smaller than kernel {k}"),
            ));
        }
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (wd + 2 * pad - k) / stride + 1;
        let dims = ConvDims { batch, c_in, h, w: wd, c_out, k, stride, pad, h_out, w_out };

        let mut out = vec![T::zero(); batch * c_out * h_out * w_out];
        let x_data = vx.data();
        let w_data = vw.data();
        let b_data = vb.data();
        let x_stride = c_in * h * wd;
        let item = |bi: usize, out_b: &mut [T]| {
            let cols = im2col(&x_data[bi * x_stride..(bi + 1) * x_stride], &dims);
            T::gemm(c_out, c_in * k * k, h_out * w_out, T::one(), w_data, &cols, T::zero(), out_b);
            for (co, chunk) in out_b.chunks_mut(h_out * w_out).enumerate() {
                let bias = b_data[co];
                for v in chunk {
                    *v += bias;
                }
            }
        };
        // Thread dispatch costs more than it saves on small per-item work.
        if parallel_worthwhile(&dims) {
            out.par_chunks_mut(c_out * h_out * w_out).enumerate().for_each(|(bi, out_b)| item(bi, out_b));
        } else {
            for (bi, out_b) in out.chunks_mut(c_out * h_out * w_out).enumerate() {
                item(bi, out_b);
            }
        }

        let value = Tensor::new([batch, c_out, h_out, w_out], out);
        let needs = self.needs_grad(x) || self.needs_grad(w) || self.needs_grad(b);
        Ok(self.push(Op::Conv2d { x, w, b, dims }, value, needs))
    }

    /// Gradients of a scalar node with respect to every node that requires
    /// them.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).numel(), 1, "backward target must be scalar");
        self.backward_with(loss, Tensor::scalar(T::one()))
    }

    /// Backward pass from an arbitrary node with an explicit output
    /// gradient (e.g. a one-hot seed to probe a single logit's
    /// input-gradient support).
    pub fn backward_with(&self, node: Var, seed: Tensor<T>) -> Grads<T> {
        assert_eq!(self.value(node).shape(), seed.shape(), "seed shape must match node");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.needs_grad(node) {
            return Grads { by_node: grads };
        }
        grads[node.0] = Some(seed);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |_| g.clone());
                    self.accumulate(&mut grads, *b, |_| g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, |_| g.clone());
                    self.accumulate(&mut grads, *b, |_| g.map(|v| -v));
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    self.accumulate(&mut grads, *x, |_| g.map(|v| v * c));
                }
                Op::LeakyRelu { x, slope } => {
                    let slope = *slope;
                    let vx = self.value(*x);
                    self.accumulate(&mut grads, *x, |_| {
                        let data = g
                            .data()
                            .iter()
                            .zip(vx.data())
                            .map(|(&gv, &xv)| if xv > T::zero() { gv } else { gv * slope })
                            .collect();
                        Tensor::new(vx.shape(), data)
                    });
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[i].value;
                    self.accumulate(&mut grads, *x, |_| {
                        let data = g
                            .data()
                            .iter()
                            .zip(y.data())
                            .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                            .collect();
                        Tensor::new(y.shape(), data)
                    });
                }
                Op::Softplus { x } => {
                    let vx = self.value(*x);
                    self.accumulate(&mut grads, *x, |_| {
                        let data = g
                            .data()
                            .iter()
                            .zip(vx.data())
                            .map(|(&gv, &xv)| gv * stable_sigmoid(xv))
                            .collect();
                        Tensor::new(vx.shape(), data)
                    });
                }
                Op::InstanceNorm { x, stats } => {
                    let y = &self.nodes[i].value;
                    let [b, c, h, w] = y.shape();
                    let n = h * w;
                    let inv_n = T::one() / T::from_f64(n as f64);
                    self.accumulate(&mut grads, *x, |_| {
                        let mut data = vec![T::zero(); y.numel()];
                        for bc in 0..b * c {
                            let (_, inv_std) = stats[bc];
                            let gy = &g.data()[bc * n..(bc + 1) * n];
                            let yy = &y.data()[bc * n..(bc + 1) * n];
                            let mut mean_g = T::zero();
                            let mut mean_gy = T::zero();
                            for (&gv, &yv) in gy.iter().zip(yy) {
                                mean_g += gv;
                                mean_gy += gv * yv;
                            }
                            mean_g *= inv_n;
                            mean_gy *= inv_n;
                            for ((o, &gv), &yv) in data[bc * n..(bc + 1) * n].iter_mut().zip(gy).zip(yy) {
                                *o = inv_std * (gv - mean_g - yv * mean_gy);
                            }
                        }
                        Tensor::new([b, c, h, w], data)
                    });
                }
                Op::GlobalAvgPool { x } => {
                    let vx = self.value(*x);
                    let [b, c, h, w] = vx.shape();
                    let n = h * w;
                    let inv_n = T::one() / T::from_f64(n as f64);
                    self.accumulate(&mut grads, *x, |_| {
                        let mut data = vec![T::zero(); vx.numel()];
                        for bc in 0..b * c {
                            let gv = g.data()[bc] * inv_n;
                            for o in &mut data[bc * n..(bc + 1) * n] {
                                *o = gv;
                            }
                        }
                        Tensor::new([b, c, h, w], data)
                    });
                }
                Op::MulChannelGate { x, gate } => {
                    let vx = self.value(*x);
                    let vg = self.value(*gate);
                    let [b, c, h, w] = vx.shape();
                    let n = h * w;
                    self.accumulate(&mut grads, *x, |_| {
                        let mut data = vec![T::zero(); vx.numel()];
                        for bc in 0..b * c {
                            let gv = vg.data()[bc];
                            for (o, &gg) in data[bc * n..(bc + 1) * n].iter_mut().zip(&g.data()[bc * n..(bc + 1) * n]) {
                                *o = gg * gv;
                            }
                        }
                        Tensor::new([b, c, h, w], data)
                    });
                    self.accumulate(&mut grads, *gate, |_| {
                        let mut data = Vec::with_capacity(b * c);
                        for bc in 0..b * c {
                            let mut acc = T::zero();
                            for (&gg, &xv) in g.data()[bc * n..(bc + 1) * n].iter().zip(&vx.data()[bc * n..(bc + 1) * n]) {
                                acc += gg * xv;
                            }
                            data.push(acc);
                        }
                        Tensor::new([b, c, 1, 1], data)
                    });
                }
                Op::PixelShuffle { x, r } => {
                    let r = *r;
                    let vx = self.value(*x);
                    let [b, c_in, h, w] = vx.shape();
                    let c = c_in / (r * r);
                    let (ho, wo) = (h * r, w * r);
                    self.accumulate(&mut grads, *x, |_| {
                        let mut data = vec![T::zero(); vx.numel()];
                        for bi in 0..b {
                            for ci in 0..c {
                                for dy in 0..r {
                                    for dx in 0..r {
                                        let src_c = ci * r * r + dy * r + dx;
                                        for y in 0..h {
                                            let dst_row = ((bi * c_in + src_c) * h + y) * w;
                                            let src_row = ((bi * c + ci) * ho + y * r + dy) * wo + dx;
                                            for x_ in 0..w {
                                                data[dst_row + x_] = g.data()[src_row + x_ * r];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        Tensor::new([b, c_in, h, w], data)
                    });
                }
                Op::MeanAll { x } => {
                    let vx = self.value(*x);
                    let gv = g.item() / T::from_f64(vx.numel() as f64);
                    self.accumulate(&mut grads, *x, |_| Tensor::full(vx.shape(), gv));
                }
                Op::MeanAbs { x } => {
                    let vx = self.value(*x);
                    let gv = g.item() / T::from_f64(vx.numel() as f64);
                    self.accumulate(&mut grads, *x, |_| {
                        let data = vx
                            .data()
                            .iter()
                            .map(|&v| {
                                if v > T::zero() {
                                    gv
                                } else if v < T::zero() {
                                    -gv
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        Tensor::new(vx.shape(), data)
                    });
                }
                Op::SubScalar { x, s } => {
                    self.accumulate(&mut grads, *x, |_| g.clone());
                    self.accumulate(&mut grads, *s, |_| {
                        let mut acc = T::zero();
                        for &gv in g.data() {
                            acc += gv;
                        }
                        Tensor::scalar(-acc)
                    });
                }
                Op::Conv2d { x, w, b, dims } => {
                    self.conv2d_backward(&mut grads, &g, *x, *w, *b, *dims);
                }
            }
        }
        Grads { by_node: grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], target: Var, make: impl FnOnce(&Tensor<T>) -> Tensor<T>) {
        if !self.needs_grad(target) {
            return;
        }
        let delta = make(self.value(target));
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *e += *d;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn conv2d_backward(&self, grads: &mut [Option<Tensor<T>>], g: &Tensor<T>, x: Var, w: Var, b: Var, dims: ConvDims) {
        let ConvDims { batch, c_in, h, w: wd, c_out, k, h_out, w_out, .. } = dims;
        let kk = c_in * k * k;
        let p = h_out * w_out;
        let vx = self.value(x);
        let vw = self.value(w);
        let x_stride = c_in * h * wd;
        let g_stride = c_out * p;

        if self.needs_grad(b) {
            let mut db = vec![T::zero(); c_out];
            for bi in 0..batch {
                for co in 0..c_out {
                    let chunk = &g.data()[bi * g_stride + co * p..bi * g_stride + (co + 1) * p];
                    for &gv in chunk {
                        db[co] += gv;
                    }
                }
            }
            self.accumulate(grads, b, |_| Tensor::new([1, c_out, 1, 1], db));
        }

        if self.needs_grad(w) {
            // dW = sum_b dY_b (c_out, p) @ cols_b^T (p, kk), accumulated in
            // batch order.
            let mut dw = vec![T::zero(); c_out * kk];
            for bi in 0..batch {
                let cols = im2col(&vx.data()[bi * x_stride..(bi + 1) * x_stride], &dims);
                let dy = &g.data()[bi * g_stride..(bi + 1) * g_stride];
                T::gemm_strided(
                    c_out, p, kk,
                    T::one(),
                    dy, p as isize, 1,
                    &cols, 1, p as isize,
                    T::one(),
                    &mut dw, kk as isize, 1,
                );
            }
            self.accumulate(grads, w, |_| Tensor::new([c_out, c_in, k, k], dw));
        }

        if self.needs_grad(x) {
            let mut dx = vec![T::zero(); vx.numel()];
            let item = |bi: usize, dx_b: &mut [T]| {
                // dcols_b = W^T (kk, c_out) @ dY_b (c_out, p)
                let mut dcols = vec![T::zero(); kk * p];
                let dy = &g.data()[bi * g_stride..(bi + 1) * g_stride];
                T::gemm_strided(
                    kk, c_out, p,
                    T::one(),
                    vw.data(), 1, kk as isize,
                    dy, p as isize, 1,
                    T::zero(),
                    &mut dcols, p as isize, 1,
                );
                col2im(&dcols, dx_b, &dims);
            };
            if parallel_worthwhile(&dims) {
                dx.par_chunks_mut(x_stride).enumerate().for_each(|(bi, dx_b)| item(bi, dx_b));
            } else {
                for (bi, dx_b) in dx.chunks_mut(x_stride).enumerate() {
                    item(bi, dx_b);
                }
            }
            self.accumulate(grads, x, |_| Tensor::new([batch, c_in, h, wd], dx));
        }
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

pub struct Grads<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.by_node[v.0].take()
    }
}

/// Parallelize over batch items only when each item carries enough work to
/// amortize the dispatch.
fn parallel_worthwhile(dims: &ConvDims) -> bool {
    let per_item_macs = dims.c_out * dims.c_in * dims.k * dims.k * dims.h_out * dims.w_out;
    dims.batch >= 2 && per_item_macs >= 4_000_000
}

/// Unfold one batch item into a `(c_in*k*k, h_out*w_out)` column matrix.
fn im2col<T: Element>(x: &[T], dims: &ConvDims) -> Vec<T> {
    let ConvDims { c_in, h, w, k, stride, pad, h_out, w_out, .. } = *dims;
    let p = h_out * w_out;
    let mut cols = vec![T::zero(); c_in * k * k * p];
    for ci in 0..c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * p..((ci * k + ky) * k + kx + 1) * p];
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = iy as usize * w;
                    let dst_row = oy * w_out;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        row[dst_row + ox] = plane[src_row + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the column-matrix gradient back onto one input batch item.
fn col2im<T: Element>(dcols: &[T], dx: &mut [T], dims: &ConvDims) {
    let ConvDims { c_in, h, w, k, stride, pad, h_out, w_out, .. } = *dims;
    let p = h_out * w_out;
    for ci in 0..c_in {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &dcols[((ci * k + ky) * k + kx) * p..((ci * k + ky) * k + kx + 1) * p];
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = iy as usize * w;
                    let src_row = oy * w_out;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        plane[dst_row + ix as usize] += row[src_row + ox];
                    }
                }
            }
        }
    }
}
