//! Recorded-tape reverse-mode differentiation.
//!
//! A `Tape` owns every tensor produced during one forward pass. Operations
//! append a node holding the result value plus the indices of its inputs;
//! `backward` walks the record once in reverse and accumulates adjoints.
//! Evaluation is sequential and allocation order is fixed, so identical
//! inputs produce bit-identical outputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a node on a tape. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Sigmoid,
    Tanh,
    Relu,
    Neg,
    LogCosh,
    /// 1/sqrt(x); callers must keep x positive.
    Rsqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Hadamard,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    /// 1-D convolution along `axis` with zero padding; the last axis of the
    /// input holds channels and the kernel is `[k, in_ch, out_ch]`.
    Conv1d { x: NodeId, kernel: NodeId, axis: usize },
    Unary { x: NodeId, kind: UnaryKind },
    /// mul * x + add with compile-time constants; covers negate-and-shift
    /// uses like `1 - z` without extra leaves.
    Affine { x: NodeId, mul: f64 },
    Binary { a: NodeId, b: NodeId, kind: BinaryKind },
    Softmax { x: NodeId, axis: usize },
    Reduce { x: NodeId, axis: usize, mean: bool },
    Concat { a: NodeId, b: NodeId, axis: usize },
    Reshape { x: NodeId },
    SliceFrame { x: NodeId, frame: usize },
    StackFrames { frames: Vec<NodeId> },
    /// Per-frame left matmul: out_t = A_t * Z_t.
    BmmLeft { a: NodeId, z: NodeId },
    /// Per-frame product against the transpose: out_t = X_t * Y_t^T.
    BmmNt { x: NodeId, y: NodeId },
    /// Per-frame matrix transpose of a rank-3 tensor.
    TransposeFrames { x: NodeId },
    /// Scalar training loss; `dgrad` is d(loss)/d(pred) at the recorded point.
    Loss { pred: NodeId, dgrad: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Adjoints produced by `Tape::backward`, one tensor per node.
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// ── construction and access ─────────────────────────────────────────────

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Inserts an input tensor as a leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest |v| feeding any relu on this tape, or `None` without relus.
    /// A tiny value means the recorded function sits on a relu kink, where
    /// it is not differentiable and finite differences disagree with the
    /// one-sided derivative the reverse pass returns.
    pub fn min_abs_relu_input(&self) -> Option<f64> {
        let mut min: Option<f64> = None;
        for node in &self.nodes {
            if let Op::Unary { x, kind: UnaryKind::Relu } = node.op {
                for &v in self.nodes[x.0].value.data() {
                    let a = if v < 0.0 { -v } else { v };
                    min = Some(match min {
                        None => a,
                        Some(m) if a < m => a,
                        Some(m) => m,
                    });
                }
            }
        }
        min
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub(crate) fn push_loss(&mut self, pred: NodeId, value: f64, dgrad: f64) -> Result<NodeId> {
        if self.value(pred).numel() != 1 {
            return Err(Error::Contract(format!(
                "loss expects a scalar prediction, got shape {:?}",
                self.shape(pred)
            )));
        }
        Ok(self.push(Op::Loss { pred, dgrad }, Tensor::scalar(value)))
    }
}

// ── forward operations ──────────────────────────────────────────────────

impl Tape {
    /// 2-D matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for l in 0..k {
                let aij = da[i * k + l];
                let brow = &db[l * p..(l + 1) * p];
                let orow = &mut out[i * p..(i + 1) * p];
                for j in 0..p {
                    orow[j] += aij * brow[j];
                }
            }
        }
        Ok(self.push(Op::MatMul { a, b }, Tensor::raw(vec![m, p], out)))
    }

    /// Same-length 1-D convolution along `axis` with zero padding outside the
    /// input. The kernel must be `[k, in_ch, out_ch]` with odd `k`; the last
    /// input axis holds channels.
    pub fn conv1d(&mut self, x: NodeId, kernel: NodeId, axis: usize) -> Result<NodeId> {
        let (sx, sk) = (self.shape(x), self.shape(kernel));
        if sk.len() != 3 {
            return Err(Error::dim(format!("conv1d kernel must be rank 3, got {sk:?}")));
        }
        if sk[0] % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel width {} is even", sk[0])));
        }
        if sx.len() < 2 || axis + 1 >= sx.len() {
            return Err(Error::dim(format!("conv1d axis {axis} out of range for {sx:?}")));
        }
        if sx[sx.len() - 1] != sk[1] {
            return Err(Error::dim(format!(
                "conv1d input channels {sx:?} do not match kernel {sk:?}"
            )));
        }
        let (outer, len, inner, fin) = conv_geometry(sx, axis);
        let (kw, fout) = (sk[0], sk[2]);
        let half = kw / 2;
        let mut oshape = sx.to_vec();
        *oshape.last_mut().unwrap() = fout;
        let (dx, dk) = (self.value(x).data(), self.value(kernel).data());
        let mut out = vec![0.0; outer * len * inner * fout];
        for o in 0..outer {
            for p in 0..len {
                for i in 0..inner {
                    let obase = ((o * len + p) * inner + i) * fout;
                    for t in 0..kw {
                        let q = p + t;
                        if q < half || q - half >= len {
                            continue;
                        }
                        let q = q - half;
                        let xbase = ((o * len + q) * inner + i) * fin;
                        for f in 0..fin {
                            let xv = dx[xbase + f];
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &dk[(t * fin + f) * fout..(t * fin + f + 1) * fout];
                            for fo in 0..fout {
                                out[obase + fo] += xv * krow[fo];
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(Op::Conv1d { x, kernel, axis }, Tensor::raw(oshape, out)))
    }

    pub fn unary(&mut self, x: NodeId, kind: UnaryKind) -> NodeId {
        let dx = self.value(x).data();
        let out: Vec<f64> = dx.iter().map(|&v| unary_eval(kind, v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Unary { x, kind }, Tensor::raw(shape, out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::Tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::Relu)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::Neg)
    }

    pub fn log_cosh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::LogCosh)
    }

    pub fn rsqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, UnaryKind::Rsqrt)
    }

    /// mul * x + add, elementwise with constant coefficients.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| mul * v + add).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Affine { x, mul }, Tensor::raw(shape, out))
    }

    /// Elementwise combine. Shapes must match, or `b` must be broadcastable
    /// to `a`: after left-padding `b`'s shape with singleton axes, every axis
    /// either matches or has length 1 in `b` (a length-1 axis stretches).
    pub fn binary(&mut self, a: NodeId, b: NodeId, kind: BinaryKind) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let plan = BroadcastPlan::new(&sa, &sb)?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; da.len()];
        if plan.identical {
            for ((o, &x), &y) in out.iter_mut().zip(da).zip(db) {
                *o = binary_eval(kind, x, y);
            }
        } else {
            for (flat, o) in out.iter_mut().enumerate() {
                *o = binary_eval(kind, da[flat], db[plan.b_index(flat)]);
            }
        }
        Ok(self.push(Op::Binary { a, b, kind }, Tensor::raw(sa, out)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryKind::Hadamard)
    }

    /// Numerically stable softmax along `axis`; every line sums to one.
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let (outer, len, inner) = axis_geometry(&sx, axis)?;
        let dx = self.value(x).data();
        let mut out = vec![0.0; dx.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |p: usize| (o * len + p) * inner + i;
                let mut hi = f64::NEG_INFINITY;
                for p in 0..len {
                    hi = hi.max(dx[idx(p)]);
                }
                let mut sum = 0.0;
                for p in 0..len {
                    let e = libm::exp(dx[idx(p)] - hi);
                    out[idx(p)] = e;
                    sum += e;
                }
                for p in 0..len {
                    out[idx(p)] /= sum;
                }
            }
        }
        Ok(self.push(Op::Softmax { x, axis }, Tensor::raw(sx, out)))
    }

    fn reduce(&mut self, x: NodeId, axis: usize, mean: bool) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let (outer, len, inner) = axis_geometry(&sx, axis)?;
        let dx = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for p in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += dx[(o * len + p) * inner + i];
                }
            }
        }
        if mean {
            for v in &mut out {
                *v /= len as f64;
            }
        }
        let mut oshape = sx.clone();
        oshape.remove(axis);
        Ok(self.push(Op::Reduce { x, axis, mean }, Tensor::raw(oshape, out)))
    }

    /// Sum along `axis`; the axis is removed from the shape.
    pub fn reduce_sum(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(x, axis, false)
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn reduce_mean(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(x, axis, true)
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(Error::dim(format!("concat of {sa:?} and {sb:?} on axis {axis}")));
        }
        for (ax, (&la, &lb)) in sa.iter().zip(sb.iter()).enumerate() {
            if ax != axis && la != lb {
                return Err(Error::dim(format!(
                    "concat of {sa:?} and {sb:?}: axis {ax} differs"
                )));
            }
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let (la, lb) = (sa[axis], sb[axis]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            out.extend_from_slice(&da[o * la * inner..(o + 1) * la * inner]);
            out.extend_from_slice(&db[o * lb * inner..(o + 1) * lb * inner]);
        }
        let mut oshape = sa.clone();
        oshape[axis] = la + lb;
        Ok(self.push(Op::Concat { a, b, axis }, Tensor::raw(oshape, out)))
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() || shape.iter().any(|&a| a == 0) {
            return Err(Error::dim(format!(
                "reshape of {:?} to {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.value(x).data().to_vec();
        Ok(self.push(Op::Reshape { x }, Tensor::raw(shape, data)))
    }

    /// Extracts frame `t` of a `[T, N, F]` tensor as `[N, F]`.
    pub fn slice_frame(&mut self, x: NodeId, frame: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || frame >= sx[0] {
            return Err(Error::dim(format!("slice of frame {frame} from {sx:?}")));
        }
        let step = sx[1] * sx[2];
        let data = self.value(x).data()[frame * step..(frame + 1) * step].to_vec();
        Ok(self.push(Op::SliceFrame { x, frame }, Tensor::raw(vec![sx[1], sx[2]], data)))
    }

    /// Stacks T rank-2 frames of identical shape into `[T, N, F]`.
    pub fn stack_frames(&mut self, frames: &[NodeId]) -> Result<NodeId> {
        let first = *frames.first().ok_or_else(|| Error::dim("stack of zero frames"))?;
        let sf = self.shape(first).to_vec();
        if sf.len() != 2 {
            return Err(Error::dim(format!("stack expects rank-2 frames, got {sf:?}")));
        }
        let mut out = Vec::with_capacity(frames.len() * sf[0] * sf[1]);
        for &f in frames {
            if self.shape(f) != sf.as_slice() {
                return Err(Error::dim(format!(
                    "stack of mismatched frames {:?} and {sf:?}",
                    self.shape(f)
                )));
            }
            out.extend_from_slice(self.value(f).data());
        }
        let shape = vec![frames.len(), sf[0], sf[1]];
        Ok(self.push(Op::StackFrames { frames: frames.to_vec() }, Tensor::raw(shape, out)))
    }

    /// Per-frame product: out_t = A_t Z_t for `[T,N,M]` against `[T,M,F]`.
    pub fn bmm_left(&mut self, a: NodeId, z: NodeId) -> Result<NodeId> {
        let (sa, sz) = (self.shape(a).to_vec(), self.shape(z).to_vec());
        if sa.len() != 3 || sz.len() != 3 || sa[0] != sz[0] || sa[2] != sz[1] {
            return Err(Error::dim(format!("bmm_left of {sa:?} by {sz:?}")));
        }
        let (t, n, m, f) = (sa[0], sa[1], sa[2], sz[2]);
        let (da, dz) = (self.value(a).data(), self.value(z).data());
        let mut out = vec![0.0; t * n * f];
        for fr in 0..t {
            let ab = fr * n * m;
            let zb = fr * m * f;
            let ob = fr * n * f;
            for i in 0..n {
                for l in 0..m {
                    let av = da[ab + i * m + l];
                    let zrow = &dz[zb + l * f..zb + (l + 1) * f];
                    let orow = &mut out[ob + i * f..ob + (i + 1) * f];
                    for j in 0..f {
                        orow[j] += av * zrow[j];
                    }
                }
            }
        }
        Ok(self.push(Op::BmmLeft { a, z }, Tensor::raw(vec![t, n, f], out)))
    }

    /// Per-frame product against the transpose: out_t = X_t Y_t^T for
    /// `[T,N,D]` against `[T,M,D]`.
    pub fn bmm_nt(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (sx, sy) = (self.shape(x).to_vec(), self.shape(y).to_vec());
        if sx.len() != 3 || sy.len() != 3 || sx[0] != sy[0] || sx[2] != sy[2] {
            return Err(Error::dim(format!("bmm_nt of {sx:?} by {sy:?}")));
        }
        let (t, n, d, m) = (sx[0], sx[1], sx[2], sy[1]);
        let (dx, dy) = (self.value(x).data(), self.value(y).data());
        let mut out = vec![0.0; t * n * m];
        for fr in 0..t {
            let xb = fr * n * d;
            let yb = fr * m * d;
            let ob = fr * n * m;
            for i in 0..n {
                for j in 0..m {
                    let mut acc = 0.0;
                    for l in 0..d {
                        acc += dx[xb + i * d + l] * dy[yb + j * d + l];
                    }
                    out[ob + i * m + j] = acc;
                }
            }
        }
        Ok(self.push(Op::BmmNt { x, y }, Tensor::raw(vec![t, n, m], out)))
    }

    /// Transposes the trailing two axes of a `[T, N, M]` tensor.
    pub fn transpose_frames(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(Error::dim(format!("transpose_frames expects rank 3, got {sx:?}")));
        }
        let (t, n, m) = (sx[0], sx[1], sx[2]);
        let dx = self.value(x).data();
        let mut out = vec![0.0; t * n * m];
        for fr in 0..t {
            for i in 0..n {
                for j in 0..m {
                    out[(fr * m + j) * n + i] = dx[(fr * n + i) * m + j];
                }
            }
        }
        Ok(self.push(Op::TransposeFrames { x }, Tensor::raw(vec![t, m, n], out)))
    }
}

// ── backward ────────────────────────────────────────────────────────────

impl Tape {
    /// Reverse sweep from a scalar node. Visits each node exactly once and
    /// returns adjoints for every node; leaves that do not contribute to the
    /// loss keep zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward expects a scalar loss node, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.numel()]).collect();
        let mut touched = vec![false; n];
        grads[loss.0][0] = 1.0;
        touched[loss.0] = true;

        for i in (0..=loss.0).rev() {
            if !touched[i] {
                continue;
            }
            let g = core::mem::take(&mut grads[i]);
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (m, k, p) = (sa[0], sa[1], sb[1]);
                    let da = self.value(*a).data();
                    let db = self.value(*b).data();
                    {
                        let ga = &mut grads[a.0];
                        for i2 in 0..m {
                            for l in 0..k {
                                let mut acc = 0.0;
                                for j in 0..p {
                                    acc += g[i2 * p + j] * db[l * p + j];
                                }
                                ga[i2 * k + l] += acc;
                            }
                        }
                    }
                    {
                        let gb = &mut grads[b.0];
                        for l in 0..k {
                            for i2 in 0..m {
                                let av = da[i2 * k + l];
                                for j in 0..p {
                                    gb[l * p + j] += av * g[i2 * p + j];
                                }
                            }
                        }
                    }
                    touched[a.0] = true;
                    touched[b.0] = true;
                }
                Op::Conv1d { x, kernel, axis } => {
                    let sx = self.shape(*x);
                    let sk = self.shape(*kernel);
                    let (outer, len, inner, fin) = conv_geometry(sx, *axis);
                    let (kw, fout) = (sk[0], sk[2]);
                    let half = kw / 2;
                    let dx = self.value(*x).data();
                    let dk = self.value(*kernel).data();
                    // Split borrow: kernel and input gradients live in
                    // different slots.
                    let (gx_slot, gk_slot) = (x.0, kernel.0);
                    for o in 0..outer {
                        for p in 0..len {
                            for i2 in 0..inner {
                                let obase = ((o * len + p) * inner + i2) * fout;
                                for t in 0..kw {
                                    let q = p + t;
                                    if q < half || q - half >= len {
                                        continue;
                                    }
                                    let q = q - half;
                                    let xbase = ((o * len + q) * inner + i2) * fin;
                                    for f in 0..fin {
                                        let kbase = (t * fin + f) * fout;
                                        let xv = dx[xbase + f];
                                        let mut gx_acc = 0.0;
                                        for fo in 0..fout {
                                            let gv = g[obase + fo];
                                            gx_acc += dk[kbase + fo] * gv;
                                            grads[gk_slot][kbase + fo] += xv * gv;
                                        }
                                        grads[gx_slot][xbase + f] += gx_acc;
                                    }
                                }
                            }
                        }
                    }
                    touched[x.0] = true;
                    touched[kernel.0] = true;
                }
                Op::Unary { x, kind } => {
                    let dx = self.value(*x).data();
                    let dy = self.nodes[i].value.data();
                    let gx = &mut grads[x.0];
                    for (j, gv) in g.iter().enumerate() {
                        gx[j] += gv * unary_deriv(*kind, dx[j], dy[j]);
                    }
                    touched[x.0] = true;
                }
                Op::Affine { x, mul } => {
                    let gx = &mut grads[x.0];
                    for (j, gv) in g.iter().enumerate() {
                        gx[j] += gv * mul;
                    }
                    touched[x.0] = true;
                }
                Op::Binary { a, b, kind } => {
                    let sa = self.shape(*a).to_vec();
                    let sb = self.shape(*b).to_vec();
                    let plan = BroadcastPlan::new(&sa, &sb).expect("validated at forward");
                    let da = self.value(*a).data();
                    let db = self.value(*b).data();
                    match kind {
                        BinaryKind::Add | BinaryKind::Sub => {
                            let sign = if *kind == BinaryKind::Sub { -1.0 } else { 1.0 };
                            {
                                let ga = &mut grads[a.0];
                                for (j, gv) in g.iter().enumerate() {
                                    ga[j] += gv;
                                }
                            }
                            let gb = &mut grads[b.0];
                            if plan.identical {
                                for (j, gv) in g.iter().enumerate() {
                                    gb[j] += sign * gv;
                                }
                            } else {
                                for (j, gv) in g.iter().enumerate() {
                                    gb[plan.b_index(j)] += sign * gv;
                                }
                            }
                        }
                        BinaryKind::Hadamard => {
                            if plan.identical {
                                {
                                    let ga = &mut grads[a.0];
                                    for (j, gv) in g.iter().enumerate() {
                                        ga[j] += gv * db[j];
                                    }
                                }
                                let gb = &mut grads[b.0];
                                for (j, gv) in g.iter().enumerate() {
                                    gb[j] += gv * da[j];
                                }
                            } else {
                                {
                                    let ga = &mut grads[a.0];
                                    for (j, gv) in g.iter().enumerate() {
                                        ga[j] += gv * db[plan.b_index(j)];
                                    }
                                }
                                let gb = &mut grads[b.0];
                                for (j, gv) in g.iter().enumerate() {
                                    gb[plan.b_index(j)] += gv * da[j];
                                }
                            }
                        }
                    }
                    touched[a.0] = true;
                    touched[b.0] = true;
                }
                Op::Softmax { x, axis } => {
                    let sx = self.shape(*x).to_vec();
                    let (outer, len, inner) = axis_geometry(&sx, *axis).expect("validated");
                    let s = self.nodes[i].value.data();
                    let gx = &mut grads[x.0];
                    for o in 0..outer {
                        for i2 in 0..inner {
                            let idx = |p: usize| (o * len + p) * inner + i2;
                            let mut dot = 0.0;
                            for p in 0..len {
                                dot += g[idx(p)] * s[idx(p)];
                            }
                            for p in 0..len {
                                gx[idx(p)] += s[idx(p)] * (g[idx(p)] - dot);
                            }
                        }
                    }
                    touched[x.0] = true;
                }
                Op::Reduce { x, axis, mean } => {
                    let sx = self.shape(*x).to_vec();
                    let (outer, len, inner) = axis_geometry(&sx, *axis).expect("validated");
                    let scale = if *mean { 1.0 / len as f64 } else { 1.0 };
                    let gx = &mut grads[x.0];
                    for o in 0..outer {
                        for p in 0..len {
                            for i2 in 0..inner {
                                gx[(o * len + p) * inner + i2] += g[o * inner + i2] * scale;
                            }
                        }
                    }
                    touched[x.0] = true;
                }
                Op::Concat { a, b, axis } => {
                    let sa = self.shape(*a).to_vec();
                    let sb = self.shape(*b).to_vec();
                    let outer: usize = sa[..*axis].iter().product();
                    let inner: usize = sa[*axis + 1..].iter().product();
                    let (la, lb) = (sa[*axis], sb[*axis]);
                    let stride = (la + lb) * inner;
                    {
                        let ga = &mut grads[a.0];
                        for o in 0..outer {
                            let src = &g[o * stride..o * stride + la * inner];
                            let dst = &mut ga[o * la * inner..(o + 1) * la * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    let gb = &mut grads[b.0];
                    for o in 0..outer {
                        let src = &g[o * stride + la * inner..(o + 1) * stride];
                        let dst = &mut gb[o * lb * inner..(o + 1) * lb * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    touched[a.0] = true;
                    touched[b.0] = true;
                }
                Op::Reshape { x } => {
                    let gx = &mut grads[x.0];
                    for (j, gv) in g.iter().enumerate() {
                        gx[j] += gv;
                    }
                    touched[x.0] = true;
                }
                Op::SliceFrame { x, frame } => {
                    let step = g.len();
                    let gx = &mut grads[x.0];
                    for (j, gv) in g.iter().enumerate() {
                        gx[frame * step + j] += gv;
                    }
                    touched[x.0] = true;
                }
                Op::StackFrames { frames } => {
                    let step = g.len() / frames.len();
                    for (t, f) in frames.iter().enumerate() {
                        let gf = &mut grads[f.0];
                        for (j, gv) in g[t * step..(t + 1) * step].iter().enumerate() {
                            gf[j] += gv;
                        }
                        touched[f.0] = true;
                    }
                }
                Op::BmmLeft { a, z } => {
                    let (sa, sz) = (self.shape(*a).to_vec(), self.shape(*z).to_vec());
                    let (t, n, m, f) = (sa[0], sa[1], sa[2], sz[2]);
                    let da = self.value(*a).data();
                    let dz = self.value(*z).data();
                    for fr in 0..t {
                        let ab = fr * n * m;
                        let zb = fr * m * f;
                        let ob = fr * n * f;
                        {
                            let ga = &mut grads[a.0];
                            for i2 in 0..n {
                                for l in 0..m {
                                    let mut acc = 0.0;
                                    for j in 0..f {
                                        acc += g[ob + i2 * f + j] * dz[zb + l * f + j];
                                    }
                                    ga[ab + i2 * m + l] += acc;
                                }
                            }
                        }
                        let gz = &mut grads[z.0];
                        for l in 0..m {
                            for i2 in 0..n {
                                let av = da[ab + i2 * m + l];
                                for j in 0..f {
                                    gz[zb + l * f + j] += av * g[ob + i2 * f + j];
                                }
                            }
                        }
                    }
                    touched[a.0] = true;
                    touched[z.0] = true;
                }
                Op::BmmNt { x, y } => {
                    let (sx, sy) = (self.shape(*x).to_vec(), self.shape(*y).to_vec());
                    let (t, n, d, m) = (sx[0], sx[1], sx[2], sy[1]);
                    let dx = self.value(*x).data();
                    let dy = self.value(*y).data();
                    for fr in 0..t {
                        let xb = fr * n * d;
                        let yb = fr * m * d;
                        let ob = fr * n * m;
                        {
                            let gx = &mut grads[x.0];
                            for i2 in 0..n {
                                for j in 0..m {
                                    let gv = g[ob + i2 * m + j];
                                    if gv == 0.0 {
                                        continue;
                                    }
                                    for l in 0..d {
                                        gx[xb + i2 * d + l] += gv * dy[yb + j * d + l];
                                    }
                                }
                            }
                        }
                        let gy = &mut grads[y.0];
                        for i2 in 0..n {
                            for j in 0..m {
                                let gv = g[ob + i2 * m + j];
                                if gv == 0.0 {
                                    continue;
                                }
                                for l in 0..d {
                                    gy[yb + j * d + l] += gv * dx[xb + i2 * d + l];
                                }
                            }
                        }
                    }
                    touched[x.0] = true;
                    touched[y.0] = true;
                }
                Op::TransposeFrames { x } => {
                    let sx = self.shape(*x).to_vec();
                    let (t, n, m) = (sx[0], sx[1], sx[2]);
                    let gx = &mut grads[x.0];
                    for fr in 0..t {
                        for i in 0..n {
                            for j in 0..m {
                                gx[(fr * n + i) * m + j] += g[(fr * m + j) * n + i];
                            }
                        }
                    }
                    touched[x.0] = true;
                }
                Op::Loss { pred, dgrad } => {
                    grads[pred.0][0] += g[0] * dgrad;
                    touched[pred.0] = true;
                }
            }
            grads[i] = g;
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(j, data)| Tensor::raw(self.nodes[j].value.shape().to_vec(), data))
            .collect();
        Ok(Gradients { grads })
    }
}

// ── geometry and scalar kernels ─────────────────────────────────────────

/// Splits `shape` around a spatial `axis`, with the trailing axis treated as
/// channels: (outer, len, inner, channels).
fn conv_geometry(shape: &[usize], axis: usize) -> (usize, usize, usize, usize) {
    let rank = shape.len();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..rank - 1].iter().product();
    (outer, len, inner, shape[rank - 1])
}

/// Splits `shape` around `axis`: (outer, len, inner).
fn axis_geometry(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {axis} out of range for {shape:?}")));
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    if len == 0 {
        return Err(Error::EmptyReduction(format!("axis {axis} of {shape:?}")));
    }
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, len, inner))
}

/// Maps flat indices of the broadcast output back to `b`'s buffer.
struct BroadcastPlan {
    identical: bool,
    /// Per output axis: (output stride, b stride; 0 where b stretches).
    strides: Vec<(usize, usize)>,
}

impl BroadcastPlan {
    fn new(sa: &[usize], sb: &[usize]) -> Result<BroadcastPlan> {
        if sb.len() > sa.len() {
            return Err(Error::dim(format!("cannot broadcast {sb:?} onto {sa:?}")));
        }
        if sa == sb {
            return Ok(BroadcastPlan { identical: true, strides: Vec::new() });
        }
        let pad = sa.len() - sb.len();
        let mut bdims = vec![1usize; pad];
        bdims.extend_from_slice(sb);
        for (ax, (&la, &lb)) in sa.iter().zip(bdims.iter()).enumerate() {
            if lb != la && lb != 1 {
                return Err(Error::dim(format!(
                    "cannot broadcast {sb:?} onto {sa:?}: axis {ax} has {lb} vs {la}"
                )));
            }
        }
        let rank = sa.len();
        let mut b_strides = vec![0usize; rank];
        let mut bs = 1usize;
        for ax in (0..rank).rev() {
            b_strides[ax] = if bdims[ax] == 1 { 0 } else { bs };
            bs *= bdims[ax];
        }
        let mut strides = vec![(0usize, 0usize); rank];
        let mut os = 1usize;
        for ax in (0..rank).rev() {
            strides[ax] = (os, b_strides[ax]);
            os *= sa[ax];
        }
        Ok(BroadcastPlan { identical: false, strides })
    }

    #[inline]
    fn b_index(&self, flat: usize) -> usize {
        let mut rem = flat;
        let mut b = 0usize;
        for &(ostride, bstride) in &self.strides {
            let c = rem / ostride;
            rem -= c * ostride;
            b += c * bstride;
        }
        b
    }
}

fn unary_eval(kind: UnaryKind, x: f64) -> f64 {
    match kind {
        UnaryKind::Sigmoid => {
            if x >= 0.0 {
                1.0 / (1.0 + libm::exp(-x))
            } else {
                let e = libm::exp(x);
                e / (1.0 + e)
            }
        }
        UnaryKind::Tanh => libm::tanh(x),
        UnaryKind::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        UnaryKind::Neg => -x,
        // |x| - ln 2 + ln(1 + exp(-2|x|)): exact for small x, no overflow
        // for large x.
        UnaryKind::LogCosh => {
            let a = libm::fabs(x);
            a - core::f64::consts::LN_2 + libm::log1p(libm::exp(-2.0 * a))
        }
        UnaryKind::Rsqrt => 1.0 / libm::sqrt(x),
    }
}

/// Derivative given the input `x` and the already-computed output `y`.
fn unary_deriv(kind: UnaryKind, x: f64, y: f64) -> f64 {
    match kind {
        UnaryKind::Sigmoid => y * (1.0 - y),
        UnaryKind::Tanh => 1.0 - y * y,
        UnaryKind::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryKind::Neg => -1.0,
        UnaryKind::LogCosh => libm::tanh(x),
        UnaryKind::Rsqrt => -0.5 * y * y * y,
    }
}

fn binary_eval(kind: BinaryKind, a: f64, b: f64) -> f64 {
    match kind {
        BinaryKind::Add => a + b,
        BinaryKind::Sub => a - b,
        BinaryKind::Hadamard => a * b,
    }
}
