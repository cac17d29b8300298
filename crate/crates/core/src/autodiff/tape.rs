use super::kernels::{self, ConvGeometry, View};
use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive recorded for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Sum,
    Abs,
    Relu,
    Sigmoid,
    MatMul,
    AddBias,
    Conv2d,
    MaxPool2d,
    GlobalAvgPool,
    PadChannels,
    Reshape,
    BceWithLogits,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Abs(Var),
    Relu(Var),
    Sigmoid(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    PadChannels(Var),
    Reshape(Var),
    BceWithLogits {
        logits: Var,
        targets: Vec<T>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Sum(_) => OpKind::Sum,
            Op::Abs(_) => OpKind::Abs,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::MatMul(..) => OpKind::MatMul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool2d { .. } => OpKind::MaxPool2d,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::PadChannels(_) => OpKind::PadChannels,
            Op::Reshape(_) => OpKind::Reshape,
            Op::BceWithLogits { .. } => OpKind::BceWithLogits,
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
}

/// Ordered record of a forward computation. Nodes are appended as operations
/// run, so insertion order is a topological order.
#[derive(Debug, Default)]
pub struct Tape<T: Float = f32> {
    nodes: Vec<Node<T>>,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Float = f32> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Number of leaves that received a gradient.
    pub fn count(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    /// Op kinds in recording order.
    pub fn ops(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.nodes.iter().map(|n| n.op.kind())
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].shape
    }

    pub fn value(&self, var: Var) -> &[T] {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn to_tensor(&self, var: Var) -> Tensor<T> {
        let n = &self.nodes[var.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    pub fn leaf(&mut self, tensor: &Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape: tensor.shape().to_vec(),
            value: tensor.data().to_vec(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, tensor: &Tensor<T>) -> Var {
        self.leaf(tensor, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: &Tensor<T>) -> Var {
        self.leaf(tensor, false)
    }

    fn push(&mut self, op: Op<T>, inputs: &[Var], shape: Vec<usize>, value: Vec<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn rank(&self, op: &'static str, var: Var, rank: usize) -> Result<&[usize]> {
        let s = self.shape(var);
        if s.len() != rank {
            return Err(Error::shape(op, format!("expected rank {rank}, got {s:?}")));
        }
        Ok(s)
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Vec<T> {
        self.value(a).iter().map(|&x| f(x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), &[a, b], self.shape(a).to_vec(), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), &[a, b], self.shape(a).to_vec(), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), &[a, b], self.shape(a).to_vec(), v))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let c = T::from_f64(factor);
        let v = self.map(a, |x| x * c);
        self.push(Op::Scale(a, c), &[a], self.shape(a).to_vec(), v)
    }

    /// Sum of all elements, accumulated in `f64`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|v| v.as_f64()).sum();
        self.push(Op::Sum(a), &[a], vec![1], vec![T::from_f64(s)])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.abs());
        self.push(Op::Abs(a), &[a], self.shape(a).to_vec(), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        self.push(Op::Relu(a), &[a], self.shape(a).to_vec(), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| T::from_f64(sigmoid(x.as_f64())));
        self.push(Op::Sigmoid(a), &[a], self.shape(a).to_vec(), v)
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.rank("matmul", a, 2)?.to_vec();
        let sb = self.rank("matmul", b, 2)?.to_vec();
        if sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            self.value(a),
            View::row_major(m, k),
            self.value(b),
            View::row_major(k, n),
            &mut out,
            View::row_major(m, n),
            false,
        );
        Ok(self.push(Op::MatMul(a, b), &[a, b], vec![m, n], out))
    }

    /// Adds a per-channel bias along axis 1 of `x` (`[N, C, ...]` + `[C]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias).to_vec();
        if sx.len() < 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::shape("add_bias", format!("{sx:?} + {sb:?}")));
        }
        let inner: usize = sx[2..].iter().product();
        let channels = sx[1];
        let b = self.value(bias).to_vec();
        let mut out = self.value(x).to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v = *v + b[(i / inner) % channels];
        }
        Ok(self.push(Op::AddBias(x, bias), &[x, bias], sx, out))
    }

    /// 2-D convolution: `[N, C, H, W]` with kernel `[O, C, KH, KW]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.rank("conv2d", x, 4)?.to_vec();
        let sk = self.rank("conv2d", kernel, 4)?.to_vec();
        if sk[1] != sx[1] || stride == 0 || sx[2] + 2 * pad < sk[2] || sx[3] + 2 * pad < sk[3] {
            return Err(Error::shape(
                "conv2d",
                format!("input {sx:?}, kernel {sk:?}, stride {stride}, pad {pad}"),
            ));
        }
        let geom = ConvGeometry {
            channels: sx[1],
            height: sx[2],
            width: sx[3],
            kernel_h: sk[2],
            kernel_w: sk[3],
            stride,
            pad,
            out_h: (sx[2] + 2 * pad - sk[2]) / stride + 1,
            out_w: (sx[3] + 2 * pad - sk[3]) / stride + 1,
        };
        let mut out = vec![T::zero(); sx[0] * sk[0] * geom.out_len()];
        kernels::conv2d_forward(self.value(x), sx[0], self.value(kernel), sk[0], &geom, &mut out);
        let shape = vec![sx[0], sk[0], geom.out_h, geom.out_w];
        Ok(self.push(Op::Conv2d { input: x, kernel, geom }, &[x, kernel], shape, out))
    }

    /// Non-overlapping max pooling with a square window.
    pub fn max_pool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let sx = self.rank("max_pool2d", x, 4)?.to_vec();
        if size == 0 || sx[2] < size || sx[3] < size {
            return Err(Error::shape("max_pool2d", format!("input {sx:?}, window {size}")));
        }
        let (oh, ow) = (sx[2] / size, sx[3] / size);
        let mut out = vec![T::zero(); sx[0] * sx[1] * oh * ow];
        let argmax = kernels::max_pool_forward(self.value(x), sx[0] * sx[1], sx[2], sx[3], size, &mut out);
        let shape = vec![sx[0], sx[1], oh, ow];
        Ok(self.push(Op::MaxPool2d { input: x, argmax }, &[x], shape, out))
    }

    /// `[N, C, H, W] → [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let sx = self.rank("global_avg_pool", x, 4)?.to_vec();
        let plane = sx[2] * sx[3];
        let out = self
            .value(x)
            .chunks(plane)
            .map(|c| T::from_f64(c.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64))
            .collect();
        Ok(self.push(Op::GlobalAvgPool(x), &[x], vec![sx[0], sx[1]], out))
    }

    /// Zero-extends the channel axis of `[N, C, H, W]` to `channels`.
    pub fn pad_channels(&mut self, x: Var, channels: usize) -> Result<Var> {
        let sx = self.rank("pad_channels", x, 4)?.to_vec();
        if channels < sx[1] {
            return Err(Error::shape("pad_channels", format!("{sx:?} to {channels} channels")));
        }
        let block = sx[1] * sx[2] * sx[3];
        let out_block = channels * sx[2] * sx[3];
        let mut out = vec![T::zero(); sx[0] * out_block];
        for (n, chunk) in self.value(x).chunks(block).enumerate() {
            out[n * out_block..n * out_block + block].copy_from_slice(chunk);
        }
        Ok(self.push(Op::PadChannels(x), &[x], vec![sx[0], channels, sx[2], sx[3]], out))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if shape.contains(&0) || n != self.value(x).len() {
            return Err(Error::shape("reshape", format!("{:?} to {shape:?}", self.shape(x))));
        }
        let v = self.value(x).to_vec();
        Ok(self.push(Op::Reshape(x), &[x], shape, v))
    }

    /// Mean sigmoid binary cross-entropy over every logit, in the
    /// `max(x, 0) - x*y + ln(1 + e^-|x|)` form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        let sl = self.rank("bce_with_logits", logits, 2)?.to_vec();
        if sl != targets.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {sl:?} vs targets {:?}", targets.shape()),
            ));
        }
        let count = self.value(logits).len() as f64;
        let total: f64 = self
            .value(logits)
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| {
                let (x, y) = (x.as_f64(), y.as_f64());
                x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
            })
            .sum();
        let op = Op::BceWithLogits {
            logits,
            targets: targets.data().to_vec(),
        };
        Ok(self.push(op, &[logits], vec![1], vec![T::from_f64(total / count)]))
    }

    /// Reverse pass from a scalar output. Only leaves created with
    /// `requires_grad` receive gradients.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = &self.nodes[output.0];
        if out.value.len() != 1 {
            return Err(Error::NonScalarOutput(out.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if out.requires_grad {
            grads[output.0] = Some(vec![T::one()]);
        }
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, T::one())] {
                    if let Some(s) = self.slot(grads, v) {
                        s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + sign * d);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, -T::one())] {
                    if let Some(s) = self.slot(grads, v) {
                        s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + sign * d);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).to_vec(), self.value(*b).to_vec());
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * vb[i];
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * va[i];
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + *c * d);
                }
            }
            Op::Sum(a) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().for_each(|s| *s = *s + g[0]);
                }
            }
            Op::Abs(a) => {
                let va = self.value(*a).to_vec();
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..s.len() {
                        // subgradient 0 at the kink
                        let sign = if va[i] > T::zero() {
                            T::one()
                        } else if va[i] < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        s[i] = s[i] + g[i] * sign;
                    }
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a).to_vec();
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..s.len() {
                        if va[i] > T::zero() {
                            s[i] = s[i] + g[i];
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * y[i] * (T::one() - y[i]);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(grads, *a) {
                    kernels::gemm(
                        g,
                        View::row_major(m, n),
                        vb,
                        View::row_major(k, n).t(),
                        s,
                        View::row_major(m, k),
                        true,
                    );
                }
                if let Some(s) = self.slot(grads, *b) {
                    kernels::gemm(
                        va,
                        View::row_major(m, k).t(),
                        g,
                        View::row_major(m, n),
                        s,
                        View::row_major(k, n),
                        true,
                    );
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d);
                }
                let channels = self.shape(*bias)[0];
                let inner: usize = node.shape[2..].iter().product();
                if let Some(s) = self.slot(grads, *bias) {
                    let mut acc = vec![0.0f64; channels];
                    for (i, d) in g.iter().enumerate() {
                        acc[(i / inner) % channels] += d.as_f64();
                    }
                    for (s, a) in s.iter_mut().zip(acc) {
                        *s = *s + T::from_f64(a);
                    }
                }
            }
            Op::Conv2d { input, kernel, geom } => {
                let batch = self.shape(*input)[0];
                let out_channels = self.shape(*kernel)[0];
                let mut gk = self.slot(grads, *kernel).map(std::mem::take);
                let mut gi = self.slot(grads, *input).map(std::mem::take);
                kernels::conv2d_backward(
                    self.value(*input),
                    batch,
                    self.value(*kernel),
                    out_channels,
                    geom,
                    g,
                    gk.as_deref_mut(),
                    gi.as_deref_mut(),
                );
                if let Some(gk) = gk {
                    grads[kernel.0] = Some(gk);
                }
                if let Some(gi) = gi {
                    grads[input.0] = Some(gi);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if let Some(s) = self.slot(grads, *input) {
                    for (o, &src) in argmax.iter().enumerate() {
                        s[src] = s[src] + g[o];
                    }
                }
            }
            Op::GlobalAvgPool(x) => {
                let sx = self.shape(*x);
                let plane = sx[2] * sx[3];
                let inv = T::from_f64(1.0 / plane as f64);
                if let Some(s) = self.slot(grads, *x) {
                    for (i, v) in s.iter_mut().enumerate() {
                        *v = *v + g[i / plane] * inv;
                    }
                }
            }
            Op::PadChannels(x) => {
                let sx = self.shape(*x);
                let block = sx[1] * sx[2] * sx[3];
                let out_block = node.shape[1] * sx[2] * sx[3];
                if let Some(s) = self.slot(grads, *x) {
                    for (n, chunk) in s.chunks_mut(block).enumerate() {
                        for (v, d) in chunk.iter_mut().zip(&g[n * out_block..]) {
                            *v = *v + *d;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d);
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let vx = self.value(*logits);
                let scale = g[0].as_f64() / vx.len() as f64;
                let delta: Vec<T> = vx
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| T::from_f64((sigmoid(x.as_f64()) - y.as_f64()) * scale))
                    .collect();
                if let Some(s) = self.slot(grads, *logits) {
                    s.iter_mut().zip(delta).for_each(|(s, d)| *s = *s + d);
                }
            }
        }
    }
}

/// Runs `program` over `inputs` recorded as trainable leaves and returns the
/// tape, the leaf handles, and the program output.
pub fn forward_eval<T, F>(inputs: &[Tensor<T>], program: F) -> Result<(Tape<T>, Vec<Var>, Var)>
where
    T: Float,
    F: FnOnce(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = program(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Backpropagates from `output` and adds each bound leaf's gradient into its
/// tensor's gradient buffer. Repeated calls accumulate until `zero_grad`.
pub fn backpropagate<T: Float>(
    tape: &Tape<T>,
    output: Var,
    bindings: &mut [(Var, &mut Tensor<T>)],
) -> Result<()> {
    let grads = tape.backward(output)?;
    for (var, tensor) in bindings.iter_mut() {
        if let Some(g) = grads.get(*var) {
            tensor.accumulate_grad(g)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut tape = Tape::new();
        let x = tape.constant(&t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn unit_kernel_1x1_is_identity() {
        let mut tape = Tape::new();
        let img: Vec<f64> = (0..20).map(|v| v as f64 * 0.5 - 3.0).collect();
        let x = tape.constant(&t(&[1, 1, 4, 5], &img));
        let k = tape.constant(&t(&[1, 1, 1, 1], &[1.0]));
        let y = tape.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 4, 5]);
        assert_eq!(tape.value(y), img.as_slice());
    }

    #[test]
    fn all_ones_2x2_kernel_sums_window() {
        let mut tape = Tape::new();
        let x = tape.constant(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let k = tape.constant(&t(&[1, 1, 2, 2], &[1.0; 4]));
        let y = tape.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y), &[10.0]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // 2 input channels, 3 output channels, stride 2, pad 1
        let (n, c, h, w, o, kh, kw, stride, pad) = (2, 2, 5, 4, 3, 3, 2, 2, 1);
        let xs: Vec<f64> = (0..n * c * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let ks: Vec<f64> = (0..o * c * kh * kw).map(|i| ((i * 13 % 7) as f64) * 0.25 - 0.75).collect();
        let mut tape = Tape::new();
        let x = tape.constant(&t(&[n, c, h, w], &xs));
        let k = tape.constant(&t(&[o, c, kh, kw], &ks));
        let y = tape.conv2d(x, k, stride, pad).unwrap();
        let (oh, ow) = ((h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1);
        assert_eq!(tape.shape(y), &[n, o, oh, ow]);
        for ni in 0..n {
            for oi in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = xs[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                    acc += xv * ks[((oi * c + ci) * kh + ki) * kw + kj];
                                }
                            }
                        }
                        let got = tape.value(y)[((ni * o + oi) * oh + oy) * ow + ox];
                        assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn square_gradient() {
        let mut w = t(&[1], &[3.0]);
        let (tape, vars, out) = forward_eval(std::slice::from_ref(&w), |tape, v| tape.mul(v[0], v[0])).unwrap();
        backpropagate(&tape, out, &mut [(vars[0], &mut w)]).unwrap();
        assert_eq!(w.grad().unwrap(), &[6.0]);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut w = t(&[2], &[1.5, -2.0]);
        for _ in 0..2 {
            let (tape, vars, out) = forward_eval(std::slice::from_ref(&w), |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                Ok(tape.sum(sq))
            })
            .unwrap();
            backpropagate(&tape, out, &mut [(vars[0], &mut w)]).unwrap();
        }
        assert_eq!(w.grad().unwrap(), &[6.0, -8.0]);
        w.zero_grad();
        assert_eq!(w.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_only_touch_no_buffers() {
        let mut c = t(&[3], &[1.0, 2.0, 3.0]);
        let mut tape = Tape::new();
        let v = tape.constant(&c);
        let s = tape.sum(v);
        assert_eq!(tape.value(s), &[6.0]);
        backpropagate(&tape, s, &mut [(v, &mut c)]).unwrap();
        assert!(c.grad().is_none());
        assert_eq!(tape.backward(s).unwrap().count(), 0);
    }

    #[test]
    fn bce_gradient_at_zero_logit() {
        let logit = t(&[1, 1], &[0.0]);
        let target = t(&[1, 1], &[1.0]);
        let (tape, vars, out) =
            forward_eval(std::slice::from_ref(&logit), |tape, v| tape.bce_with_logits(v[0], &target)).unwrap();
        assert!((tape.value(out)[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let g = tape.backward(out).unwrap();
        assert_eq!(g.get(vars[0]).unwrap(), &[-0.5]);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let (tape, _, out) = forward_eval(&[t(&[2], &[1.0, 2.0])], |tape, v| Ok(tape.relu(v[0]))).unwrap();
        assert!(matches!(tape.backward(out), Err(Error::NonScalarOutput(_))));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(&t(&[2, 3], &[0.0; 6]));
        let b = tape.constant(&t(&[2, 3], &[0.0; 6]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = tape.constant(&t(&[3], &[0.0; 3]));
        assert!(tape.add(a, c).unwrap_err().to_string().contains("add"));
        let d = tape.constant(&t(&[2], &[0.0; 2]));
        assert!(tape.add_bias(a, d).unwrap_err().to_string().contains("add_bias"));
    }

    #[test]
    fn backward_order_is_reverse_of_recording() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(&t(&[1, 2], &[1.0, -1.0]));
        let r = tape.relu(x);
        let s = tape.sum(r);
        let kinds: Vec<_> = tape.ops().collect();
        assert_eq!(kinds, vec![OpKind::Leaf, OpKind::Relu, OpKind::Sum]);
        assert_eq!(tape.backward(s).unwrap().get(x).unwrap(), &[1.0, 0.0]);
    }
}
