//! Minimal reverse-mode autodiff over 4-D tensors.
//!
//! The op set is exactly what the denoising network needs: stride-1
//! convolution, 2x stride-2 transposed convolution, 2x2 max pooling, ReLU,
//! channel concatenation, and mean-squared-error loss. A [`Tape`] records
//! executed ops; [`Tape::backward`] walks them in reverse and accumulates
//! gradients. Forward and backward passes are bit-deterministic: every
//! reduction has a fixed order and parallel work is split over disjoint
//! output planes only.
//!
//! Tensors are generic over [`Scalar`]: `f32` is the production dtype,
//! `f64` backs the finite-difference checks in [`crate::gradcheck`].

pub mod kernels;

use crate::error::{Error, Result};

/// Element type of tensors: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// `(n, c, h, w)` for activations; conv weights reuse the four slots as
/// `(out_ch, in_ch, kh, kw)`, transposed-conv weights as
/// `(in_ch, out_ch, k, k)`, biases as `(1, ch, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

enum Op {
    Leaf,
    Conv2d { x: TensorId, w: TensorId, b: TensorId, pad: usize },
    ConvTranspose2d { x: TensorId, w: TensorId, b: TensorId },
    MaxPool2 { x: TensorId, argmax: Vec<u32> },
    Relu { x: TensorId },
    Concat { xs: Vec<TensorId> },
    Mse { pred: TensorId, target: TensorId },
}

struct Node<S> {
    shape: Shape,
    value: Vec<S>,
    grad: Vec<S>, // empty until backward touches it
    op: Op,
}

/// Record of a forward computation, in execution order.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Shape, value: Vec<S>, op: Op) -> TensorId {
        debug_assert_eq!(shape.numel(), value.len());
        self.nodes.push(Node { shape, value, grad: Vec::new(), op });
        TensorId(self.nodes.len() - 1)
    }

    /// Record an input or parameter tensor.
    pub fn leaf(&mut self, shape: Shape, value: Vec<S>) -> TensorId {
        assert_eq!(shape.numel(), value.len(), "leaf value length must match shape");
        self.push(shape, value, Op::Leaf)
    }

    pub fn shape(&self, id: TensorId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[S] {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by `backward`; `None` before any backward pass
    /// reaches this tensor.
    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        let g = &self.nodes[id.0].grad;
        if g.is_empty() {
            None
        } else {
            Some(g)
        }
    }

    /// Stride-1 cross-correlation with square-symmetric padding.
    pub fn conv2d(&mut self, x: TensorId, w: TensorId, b: TensorId, pad: usize) -> Result<TensorId> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let bs = self.shape(b);
        if ws.c != xs.c {
            return Err(Error::Shape(format!("conv2d: input {xs} vs weights {ws}")));
        }
        if bs.c != ws.n || bs.numel() != ws.n {
            return Err(Error::Shape(format!("conv2d: bias {bs} vs weights {ws}")));
        }
        if xs.h + 2 * pad < ws.h || xs.w + 2 * pad < ws.w {
            return Err(Error::Shape(format!("conv2d: kernel {ws} exceeds padded input {xs}")));
        }
        if x == w || x == b || w == b {
            return Err(Error::Shape("conv2d: operands must be distinct tensors".into()));
        }
        let out = Shape::new(xs.n, ws.n, xs.h + 2 * pad + 1 - ws.h, xs.w + 2 * pad + 1 - ws.w);
        let mut y = vec![S::zero(); out.numel()];
        kernels::conv2d_fwd(
            self.value(x),
            xs.n,
            xs.c,
            xs.h,
            xs.w,
            self.value(w),
            self.value(b),
            ws.n,
            ws.h,
            ws.w,
            pad,
            &mut y,
        );
        Ok(self.push(out, y, Op::Conv2d { x, w, b, pad }))
    }

    /// Transposed convolution, kernel `k` and stride `k`; doubles spatial
    /// dims for the network's `k = 2`.
    pub fn conv_transpose2d(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xs = self.shape(x);
        let ws = self.shape(w); // (ci, co, k, k)
        if ws.n != xs.c {
            return Err(Error::Shape(format!("conv_transpose2d: input {xs} vs weights {ws}")));
        }
        if ws.h != ws.w {
            return Err(Error::Shape(format!("conv_transpose2d: kernel must be square, got {ws}")));
        }
        let bs = self.shape(b);
        if bs.numel() != ws.c {
            return Err(Error::Shape(format!("conv_transpose2d: bias {bs} vs weights {ws}")));
        }
        if x == w || x == b || w == b {
            return Err(Error::Shape("conv_transpose2d: operands must be distinct tensors".into()));
        }
        let k = ws.h;
        let out = Shape::new(xs.n, ws.c, xs.h * k, xs.w * k);
        let mut y = vec![S::zero(); out.numel()];
        kernels::conv_transpose2d_fwd(
            self.value(x),
            xs.n,
            xs.c,
            xs.h,
            xs.w,
            self.value(w),
            self.value(b),
            ws.c,
            k,
            &mut y,
        );
        Ok(self.push(out, y, Op::ConvTranspose2d { x, w, b }))
    }

    /// 2x2 max pooling with stride 2. Requires even spatial dims.
    pub fn maxpool2(&mut self, x: TensorId) -> Result<TensorId> {
        let xs = self.shape(x);
        if xs.h % 2 != 0 || xs.w % 2 != 0 {
            return Err(Error::Shape(format!("maxpool2: odd spatial dims {xs}")));
        }
        let out = Shape::new(xs.n, xs.c, xs.h / 2, xs.w / 2);
        let mut y = vec![S::zero(); out.numel()];
        let mut argmax = vec![0u32; out.numel()];
        kernels::maxpool2_fwd(self.value(x), xs.n * xs.c, xs.h, xs.w, &mut y, &mut argmax);
        Ok(self.push(out, y, Op::MaxPool2 { x, argmax }))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let shape = self.shape(x);
        let y = self.value(x).iter().map(|&v| v.max(S::zero())).collect();
        self.push(shape, y, Op::Relu { x })
    }

    /// Concatenate along the channel axis, in argument order.
    pub fn concat_channels(&mut self, xs: &[TensorId]) -> Result<TensorId> {
        assert!(!xs.is_empty(), "concat of zero tensors");
        let first = self.shape(xs[0]);
        let mut channels = 0;
        for &id in xs {
            let s = self.shape(id);
            if s.n != first.n || s.h != first.h || s.w != first.w {
                return Err(Error::Shape(format!("concat_channels: {s} vs {first}")));
            }
            channels += s.c;
        }
        let out = Shape::new(first.n, channels, first.h, first.w);
        let mut y = Vec::with_capacity(out.numel());
        let plane = first.h * first.w;
        for n in 0..first.n {
            for &id in xs {
                let s = self.shape(id);
                let start = n * s.c * plane;
                y.extend_from_slice(&self.value(id)[start..start + s.c * plane]);
            }
        }
        Ok(self.push(out, y, Op::Concat { xs: xs.to_vec() }))
    }

    /// Mean over all elements of the squared difference. The sum is
    /// accumulated in `f64` regardless of `S`.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        let ps = self.shape(pred);
        let ts = self.shape(target);
        if ps != ts {
            return Err(Error::Shape(format!("mse_loss: {ps} vs {ts}")));
        }
        let mut acc = 0.0f64;
        for (&a, &b) in self.value(pred).iter().zip(self.value(target)) {
            let d = (a - b).as_f64();
            acc += d * d;
        }
        let loss = S::from_f64(acc / ps.numel() as f64);
        Ok(self.push(Shape::scalar(), vec![loss], Op::Mse { pred, target }))
    }

    /// Reverse pass from a scalar loss. Gradients accumulate: calling this
    /// twice without clearing doubles every gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.shape(loss).numel() != 1 {
            return Err(Error::Shape("backward: loss must be a scalar".into()));
        }
        let n = loss.0 + 1;
        let mut delta: Vec<Option<Vec<S>>> = (0..n).map(|_| None).collect();
        delta[loss.0] = Some(vec![S::one()]);

        for i in (0..n).rev() {
            let Some(d) = delta[i].take() else { continue };
            self.propagate(i, &d, &mut delta);
            let node = &mut self.nodes[i];
            if node.grad.is_empty() {
                node.grad = d;
            } else {
                for (g, dv) in node.grad.iter_mut().zip(&d) {
                    *g += *dv;
                }
            }
        }
        Ok(())
    }

    /// Push node `i`'s pass-local gradient `d` into its parents' deltas.
    /// Conv ops take their parent buffers out of `delta` and put them back;
    /// the op constructors guarantee the three operands are distinct.
    fn propagate(&self, i: usize, d: &[S], delta: &mut [Option<Vec<S>>]) {
        let take = |delta: &mut [Option<Vec<S>>], id: TensorId, numel: usize| -> Vec<S> {
            delta[id.0].take().unwrap_or_else(|| vec![S::zero(); numel])
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, pad } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let mut dx = take(delta, *x, xs.numel());
                let mut dw = take(delta, *w, ws.numel());
                let mut db = take(delta, *b, ws.n);
                kernels::conv2d_bwd_input(
                    d, xs.n, xs.c, xs.h, xs.w, self.value(*w), ws.n, ws.h, ws.w, *pad, &mut dx,
                );
                kernels::conv2d_bwd_params(
                    self.value(*x),
                    d,
                    xs.n,
                    xs.c,
                    xs.h,
                    xs.w,
                    ws.n,
                    ws.h,
                    ws.w,
                    *pad,
                    &mut dw,
                    &mut db,
                );
                delta[x.0] = Some(dx);
                delta[w.0] = Some(dw);
                delta[b.0] = Some(db);
            }
            Op::ConvTranspose2d { x, w, b } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let k = ws.h;
                let mut dx = take(delta, *x, xs.numel());
                let mut dw = take(delta, *w, ws.numel());
                let mut db = take(delta, *b, ws.c);
                kernels::conv_transpose2d_bwd_input(
                    d, xs.n, xs.c, xs.h, xs.w, self.value(*w), ws.c, k, &mut dx,
                );
                kernels::conv_transpose2d_bwd_params(
                    self.value(*x),
                    d,
                    xs.n,
                    xs.c,
                    xs.h,
                    xs.w,
                    ws.c,
                    k,
                    &mut dw,
                    &mut db,
                );
                delta[x.0] = Some(dx);
                delta[w.0] = Some(dw);
                delta[b.0] = Some(db);
            }
            Op::MaxPool2 { x, argmax } => {
                let xs = self.shape(*x);
                let dx = delta[x.0].get_or_insert_with(|| vec![S::zero(); xs.numel()]);
                kernels::maxpool2_bwd(d, xs.n * xs.c, xs.h, xs.w, argmax, dx);
            }
            Op::Relu { x } => {
                let xs = self.shape(*x);
                let xv = &self.nodes[x.0].value;
                let dx = delta[x.0].get_or_insert_with(|| vec![S::zero(); xs.numel()]);
                for ((dst, &src), &v) in dx.iter_mut().zip(d).zip(xv) {
                    if v > S::zero() {
                        *dst += src;
                    }
                }
            }
            Op::Concat { xs } => {
                let out_shape = self.nodes[i].shape;
                let plane = out_shape.h * out_shape.w;
                for n in 0..out_shape.n {
                    let mut offset = n * out_shape.c * plane;
                    for &id in xs {
                        let s = self.shape(id);
                        let block = s.c * plane;
                        let dx = delta[id.0].get_or_insert_with(|| vec![S::zero(); s.numel()]);
                        let dst = &mut dx[n * block..(n + 1) * block];
                        for (a, &b) in dst.iter_mut().zip(&d[offset..offset + block]) {
                            *a += b;
                        }
                        offset += block;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let ps = self.shape(*pred);
                let numel = S::from_f64(ps.numel() as f64);
                let scale = d[0] * S::from_f64(2.0) / numel;
                let pv = &self.nodes[pred.0].value;
                let tv = &self.nodes[target.0].value;
                {
                    let dp = delta[pred.0].get_or_insert_with(|| vec![S::zero(); ps.numel()]);
                    for ((g, &a), &b) in dp.iter_mut().zip(pv).zip(tv) {
                        *g += scale * (a - b);
                    }
                }
                let dt = delta[target.0].get_or_insert_with(|| vec![S::zero(); ps.numel()]);
                for ((g, &a), &b) in dt.iter_mut().zip(pv).zip(tv) {
                    *g -= scale * (a - b);
                }
            }
        }
    }
}

/// One Adam update with bias correction, in place. `step` is 1-based.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    m: &mut [S],
    v: &mut [S],
    step: u64,
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
) -> Result<()> {
    if grads.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam_step: params {} grads {} m {} v {}",
            params.len(),
            grads.len(),
            m.len(),
            v.len()
        )));
    }
    let one = S::one();
    let bc1 = one - beta1.powi(step as i32);
    let bc2 = one - beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (one - beta1) * g;
        v[i] = beta2 * v[i] + (one - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream_rng(seed, &[0xAD]);
        (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn relu_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Shape::new(1, 1, 1, 4), vec![-1.0, 0.0, 2.0, 0.5]);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &[0.0, 0.0, 2.0, 0.5]);
    }

    #[test]
    fn concat_shapes_and_grad_split() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Shape::new(2, 4, 3, 3), rand_vec(2 * 4 * 9, 1));
        let b = tape.leaf(Shape::new(2, 4, 3, 3), rand_vec(2 * 4 * 9, 2));
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.shape(c), Shape::new(2, 8, 3, 3));
        // single input concat is the identity
        let mut tape2 = Tape::<f64>::new();
        let a2 = tape2.leaf(Shape::new(1, 2, 2, 2), rand_vec(8, 3));
        let c2 = tape2.concat_channels(&[a2]).unwrap();
        assert_eq!(tape2.value(c2), tape2.value(a2));

        // grads split back into the exact blocks
        let target = tape.leaf(Shape::new(2, 8, 3, 3), vec![0.0; 2 * 8 * 9]);
        let loss = tape.mse_loss(c, target).unwrap();
        tape.backward(loss).unwrap();
        let gc: Vec<f64> = {
            let ga = tape.grad(a).unwrap();
            let gb = tape.grad(b).unwrap();
            let mut joined = Vec::new();
            for n in 0..2 {
                joined.extend_from_slice(&ga[n * 36..(n + 1) * 36]);
                joined.extend_from_slice(&gb[n * 36..(n + 1) * 36]);
            }
            joined
        };
        let direct = tape.grad(c).unwrap();
        assert_eq!(gc, direct);
    }

    #[test]
    fn mse_cases() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Shape::new(1, 1, 2, 2), vec![0.6, 0.6, 0.6, 0.6]);
        let b = tape.leaf(Shape::new(1, 1, 2, 2), vec![0.5, 0.5, 0.5, 0.5]);
        let same = tape.mse_loss(a, a).unwrap();
        assert_eq!(tape.value(same)[0], 0.0);
        let l = tape.mse_loss(a, b).unwrap();
        assert!((tape.value(l)[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn backward_accumulates_exact_doubling() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Shape::new(1, 1, 2, 2), vec![0.3, -0.4, 0.9, 0.1]);
        let w = tape.leaf(Shape::new(1, 1, 1, 1), vec![0.7]);
        let b = tape.leaf(Shape::new(1, 1, 1, 1), vec![0.1]);
        let y = tape.conv2d(x, w, b, 0).unwrap();
        let t = tape.leaf(Shape::new(1, 1, 2, 2), vec![0.0; 4]);
        let loss = tape.mse_loss(y, t).unwrap();
        tape.backward(loss).unwrap();
        let g1 = tape.grad(w).unwrap().to_vec();
        tape.backward(loss).unwrap();
        let g2 = tape.grad(w).unwrap().to_vec();
        assert_eq!(g2[0], 2.0 * g1[0]);
    }

    #[test]
    fn zero_loss_graph_zero_grads() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Shape::new(1, 1, 2, 2), vec![0.5; 4]);
        let loss = tape.mse_loss(x, x).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let run = || -> Vec<f32> {
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(
                Shape::new(1, 3, 8, 8),
                rand_vec(3 * 64, 7).iter().map(|&v| v as f32).collect(),
            );
            let w = tape.leaf(
                Shape::new(4, 3, 3, 3),
                rand_vec(4 * 3 * 9, 8).iter().map(|&v| v as f32).collect(),
            );
            let b = tape.leaf(Shape::new(1, 4, 1, 1), vec![0.01; 4]);
            let y = tape.conv2d(x, w, b, 1).unwrap();
            let r = tape.relu(y);
            let p = tape.maxpool2(r).unwrap();
            tape.value(p).to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn tape_replay_grads_bit_identical() {
        let run = || -> Vec<f32> {
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(
                Shape::new(2, 2, 4, 4),
                rand_vec(2 * 2 * 16, 9).iter().map(|&v| v as f32).collect(),
            );
            let w = tape.leaf(
                Shape::new(2, 2, 3, 3),
                rand_vec(2 * 2 * 9, 10).iter().map(|&v| v as f32).collect(),
            );
            let b = tape.leaf(Shape::new(1, 2, 1, 1), vec![0.0; 2]);
            let y = tape.conv2d(x, w, b, 1).unwrap();
            let r = tape.relu(y);
            let t = tape.leaf(Shape::new(2, 2, 4, 4), vec![0.1; 2 * 2 * 16]);
            let loss = tape.mse_loss(r, t).unwrap();
            tape.backward(loss).unwrap();
            tape.grad(w).unwrap().to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut p = vec![0.5f64, -0.25];
        let g = vec![0.0f64, 0.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut p, &g, &mut m, &mut v, 1, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, vec![0.5, -0.25]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        // from m=v=0, bias-corrected first step is -lr * g/(|g| + eps')
        let mut p = vec![1.0f64, 1.0];
        let g = vec![0.3f64, -0.01];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut p, &g, &mut m, &mut v, 1, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn adam_two_steps_match_oracle() {
        let g1 = vec![0.3f64, -0.2, 0.05];
        let g2 = vec![-0.1f64, 0.4, 0.2];
        let (lr, b1, b2, eps) = (1e-2f64, 0.9, 0.999, 1e-8);

        let mut p = vec![0.1f64, 0.2, 0.3];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adam_step(&mut p, &g1, &mut m, &mut v, 1, lr, b1, b2, eps).unwrap();
        adam_step(&mut p, &g2, &mut m, &mut v, 2, lr, b1, b2, eps).unwrap();

        // hand-rolled reference
        let mut p2 = vec![0.1f64, 0.2, 0.3];
        let (mut m2, mut v2) = (vec![0.0f64; 3], vec![0.0f64; 3]);
        for (t, g) in [(1u64, &g1), (2, &g2)] {
            for i in 0..3 {
                m2[i] = b1 * m2[i] + (1.0 - b1) * g[i];
                v2[i] = b2 * v2[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m2[i] / (1.0 - b1.powi(t as i32));
                let vh = v2[i] / (1.0 - b2.powi(t as i32));
                p2[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn adam_shape_mismatch_rejected() {
        let mut p = vec![0.0f64; 2];
        let g = vec![0.0f64; 3];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        assert!(adam_step(&mut p, &g, &mut m, &mut v, 1, 1e-3, 0.9, 0.999, 1e-8).is_err());
    }

    #[test]
    fn op_shape_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Shape::new(1, 2, 4, 4), vec![0.0; 32]);
        let w = tape.leaf(Shape::new(1, 3, 3, 3), vec![0.0; 27]); // wrong in_ch
        let b = tape.leaf(Shape::new(1, 1, 1, 1), vec![0.0]);
        assert!(tape.conv2d(x, w, b, 1).is_err());

        let odd = tape.leaf(Shape::new(1, 1, 3, 4), vec![0.0; 12]);
        assert!(tape.maxpool2(odd).is_err());

        let other = tape.leaf(Shape::new(1, 2, 4, 5), vec![0.0; 40]);
        assert!(tape.concat_channels(&[x, other]).is_err());
        assert!(tape.mse_loss(x, other).is_err());
    }
}
