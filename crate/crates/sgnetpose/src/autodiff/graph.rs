//! Define-by-run reverse-mode tape.
//!
//! A `Graph` is built fresh for every forward pass: each op evaluates
//! eagerly and records enough provenance to run backward. Node indices
//! grow monotonically, so reverse creation order is a reverse topological
//! order and backward visits each node exactly once.

use num_traits::Float;

use crate::autodiff::rng::RngState;
use crate::autodiff::tensor::TensorOf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Sqrt(NodeId),
    Scale(NodeId, F),
    AddConst(NodeId),
    Clamp(NodeId, F, F),
    Softmax(NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Rows { x: NodeId, start: usize },
    Reshape(NodeId),
    Dropout { x: NodeId, mask: TensorOf<F> },
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Debug)]
struct NodeRecord<F> {
    value: TensorOf<F>,
    grad: Option<TensorOf<F>>,
    needs_grad: bool,
    op: Op<F>,
}

#[derive(Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<NodeRecord<F>>,
    backward_done: bool,
}

impl<F: Float + std::fmt::Debug> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &TensorOf<F> {
        &self.nodes[id.0].value
    }

    /// Populated after `backward` for leaves (and any interior node on a
    /// differentiable path); `None` for nodes the loss never reached.
    pub fn grad(&self, id: NodeId) -> Option<&TensorOf<F>> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Tracked leaf: receives a gradient in backward.
    pub fn param(&mut self, value: TensorOf<F>) -> NodeId {
        self.push(value, true, Op::Leaf)
    }

    /// Untracked leaf: inputs, targets, noise draws.
    pub fn constant(&mut self, value: TensorOf<F>) -> NodeId {
        self.push(value, false, Op::Leaf)
    }

    fn push(&mut self, value: TensorOf<F>, needs_grad: bool, op: Op<F>) -> NodeId {
        self.nodes.push(NodeRecord {
            value,
            grad: None,
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (_, ka) = self.nodes[a.0].value.dims2();
        let (kb, _) = self.nodes[b.0].value.dims2();
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul inner dims disagree: {:?} × {:?}",
                self.nodes[a.0].value.shape(),
                self.nodes[b.0].value.shape()
            )));
        }
        let value = matmul_tt(&self.nodes[a.0].value, &self.nodes[b.0].value, false, false);
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, needs, Op::Matmul(a, b)))
    }

    /// matmul + row-broadcast bias: the FC layer.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.nodes[x.0].value.dims2();
        let src = self.nodes[x.0].value.data();
        let mut data = vec![F::zero(); src.len()];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let needs = self.needs(&[x]);
        self.push(TensorOf::from_raw(vec![c, r], data), needs, Op::Transpose(x))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(F, F) -> F,
        op: Op<F>,
    ) -> Result<NodeId> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(Error::Shape(format!(
                "{} operand shapes disagree: {:?} vs {:?}",
                name,
                self.nodes[a.0].value.shape(),
                self.nodes[b.0].value.shape()
            )));
        }
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, f);
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, needs, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `x [r,c] + bias [c]` broadcast over rows — the only broadcast here.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.nodes[x.0].value.dims2();
        if self.nodes[bias.0].value.numel() != c {
            return Err(Error::Shape(format!(
                "bias of {} entries against {} columns",
                self.nodes[bias.0].value.numel(),
                c
            )));
        }
        let xv = self.nodes[x.0].value.data();
        let bv = self.nodes[bias.0].value.data();
        let mut data = Vec::with_capacity(xv.len());
        for i in 0..r {
            for j in 0..c {
                data.push(xv[i * c + j] + bv[j]);
            }
        }
        let shape = self.nodes[x.0].value.shape().to_vec();
        let needs = self.needs(&[x, bias]);
        Ok(self.push(TensorOf::from_raw(shape, data), needs, Op::AddBias(x, bias)))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(F) -> F, op: Op<F>) -> NodeId {
        let value = map(&self.nodes[x.0].value, f);
        let needs = self.needs(&[x]);
        self.push(value, needs, op)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid_val, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| if v > F::zero() { v } else { F::zero() }, Op::Relu(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> NodeId {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_const(&mut self, x: NodeId, c: F) -> NodeId {
        self.unary(x, |v| v + c, Op::AddConst(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: F, hi: F) -> NodeId {
        self.unary(
            x,
            |v| if v < lo { lo } else if v > hi { hi } else { v },
            Op::Clamp(x, lo, hi),
        )
    }

    /// Flat softmax over all entries, computed with max-subtraction.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.nodes[x.0].value.data();
        let max = xv.iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = xv.iter().map(|&v| (v - max).exp()).collect();
        let total = exps.iter().cloned().fold(F::zero(), |a, b| a + b);
        let data: Vec<F> = exps.iter().map(|&e| e / total).collect();
        let shape = self.nodes[x.0].value.shape().to_vec();
        let needs = self.needs(&[x]);
        self.push(TensorOf::from_raw(shape, data), needs, Op::Softmax(x))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero parts".into()))?;
        if parts.len() == 1 {
            return Ok(*first);
        }
        let base = self.nodes[first.0].value.shape().to_vec();
        let rank = base.len();
        if axis >= rank {
            return Err(Error::Shape(format!("concat axis {} on rank {}", axis, rank)));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.nodes[p.0].value.shape();
            let compatible = s.len() == rank
                && s.iter().enumerate().all(|(d, &n)| d == axis || n == base[d]);
            if !compatible {
                return Err(Error::Shape(format!(
                    "concat part {:?} incompatible with {:?} on axis {}",
                    s, base, axis
                )));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![F::zero(); out_shape.iter().product()];
        let out_block = out_shape[axis] * inner;
        for o in 0..outer {
            let mut offset = 0;
            for &p in parts {
                let pv = &self.nodes[p.0].value;
                let block = pv.shape()[axis] * inner;
                let src = &pv.data()[o * block..(o + 1) * block];
                data[o * out_block + offset..o * out_block + offset + block].copy_from_slice(src);
                offset += block;
            }
        }
        let needs = self.needs(parts);
        Ok(self.push(
            TensorOf::from_raw(out_shape, data),
            needs,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Contiguous row slice of a 2-D tensor.
    pub fn rows(&mut self, x: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let (r, c) = self.nodes[x.0].value.dims2();
        if start + count > r || count == 0 {
            return Err(Error::Shape(format!(
                "rows {}..{} of a {}-row tensor",
                start,
                start + count,
                r
            )));
        }
        let data = self.nodes[x.0].value.data()[start * c..(start + count) * c].to_vec();
        let needs = self.needs(&[x]);
        Ok(self.push(
            TensorOf::from_raw(vec![count, c], data),
            needs,
            Op::Rows { x, start },
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        if shape.iter().product::<usize>() != self.nodes[x.0].value.numel() {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {:?}",
                self.nodes[x.0].value.shape(),
                shape
            )));
        }
        let data = self.nodes[x.0].value.data().to_vec();
        let needs = self.needs(&[x]);
        Ok(self.push(TensorOf::from_raw(shape, data), needs, Op::Reshape(x)))
    }

    /// Inverted dropout: survivors scaled by 1/(1−rate) so expectation is
    /// preserved; identity outside training. Mask draws are f64 so f32 and
    /// f64 graphs consume identical RNG streams.
    pub fn dropout(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut RngState,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0,1)", rate)));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = F::from(1.0 / (1.0 - rate)).expect("float cast");
        let mask_data: Vec<F> = (0..self.nodes[x.0].value.numel())
            .map(|_| if rng.next_f64() < rate { F::zero() } else { keep })
            .collect();
        let mask = TensorOf::from_raw(self.nodes[x.0].value.shape().to_vec(), mask_data);
        let value = zip(&self.nodes[x.0].value, &mask, |v, m| v * m);
        let needs = self.needs(&[x]);
        Ok(self.push(value, needs, Op::Dropout { x, mask }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.nodes[x.0]
            .value
            .data()
            .iter()
            .cloned()
            .fold(F::zero(), |a, b| a + b);
        let needs = self.needs(&[x]);
        self.push(TensorOf::scalar(total), needs, Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = F::from(self.nodes[x.0].value.numel()).expect("float cast");
        let total = self.nodes[x.0]
            .value
            .data()
            .iter()
            .cloned()
            .fold(F::zero(), |a, b| a + b);
        let needs = self.needs(&[x]);
        self.push(TensorOf::scalar(total / n), needs, Op::Mean(x))
    }

    /// Seed d(loss)/d(loss)=1 and sweep the tape once in reverse creation
    /// order, accumulating into every node on a differentiable path.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Usage(
                "backward already ran on this graph; call zero_grads or rebuild".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backward_done = true;
        let seed_shape = self.nodes[loss.0].value.shape().to_vec();
        self.nodes[loss.0].grad = Some(TensorOf::from_raw(
            seed_shape,
            vec![F::one(); 1],
        ));
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            let (inputs, node) = self.nodes.split_at_mut(i);
            let rec = &node[0];
            match &rec.op {
                Op::Leaf => unreachable!(),
                Op::Matmul(a, b) => {
                    let da = matmul_tt(&g, &inputs[b.0].value, false, true);
                    let db = matmul_tt(&inputs[a.0].value, &g, true, false);
                    accum(inputs, *a, da);
                    accum(inputs, *b, db);
                }
                Op::Transpose(x) => {
                    let (r, c) = rec.value.dims2();
                    let mut data = vec![F::zero(); g.numel()];
                    for i2 in 0..r {
                        for j in 0..c {
                            data[j * r + i2] = g.data()[i2 * c + j];
                        }
                    }
                    let shape = inputs[x.0].value.shape().to_vec();
                    accum(inputs, *x, TensorOf::from_raw(shape, data));
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accum(inputs, a, g.clone());
                    accum(inputs, b, g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accum(inputs, a, g.clone());
                    accum(inputs, b, map(&g, |v| -v));
                }
                Op::Mul(a, b) => {
                    let da = zip(&g, &inputs[b.0].value, |gv, bv| gv * bv);
                    let db = zip(&g, &inputs[a.0].value, |gv, av| gv * av);
                    accum(inputs, *a, da);
                    accum(inputs, *b, db);
                }
                Op::AddBias(x, bias) => {
                    let (r, c) = rec.value.dims2();
                    let mut db = vec![F::zero(); c];
                    for i2 in 0..r {
                        for j in 0..c {
                            db[j] = db[j] + g.data()[i2 * c + j];
                        }
                    }
                    let bshape = inputs[bias.0].value.shape().to_vec();
                    let (x, bias) = (*x, *bias);
                    accum(inputs, x, g);
                    accum(inputs, bias, TensorOf::from_raw(bshape, db));
                }
                Op::Tanh(x) => {
                    let d = zip(&g, &rec.value, |gv, y| gv * (F::one() - y * y));
                    accum(inputs, *x, d);
                }
                Op::Sigmoid(x) => {
                    let d = zip(&g, &rec.value, |gv, y| gv * y * (F::one() - y));
                    accum(inputs, *x, d);
                }
                Op::Relu(x) => {
                    let d = zip(&g, &inputs[x.0].value, |gv, xv| {
                        if xv > F::zero() {
                            gv
                        } else {
                            F::zero()
                        }
                    });
                    accum(inputs, *x, d);
                }
                Op::Exp(x) => {
                    let d = zip(&g, &rec.value, |gv, y| gv * y);
                    accum(inputs, *x, d);
                }
                Op::Sqrt(x) => {
                    // 0.5/√x with the denominator floored: keeps the exact
                    // forward value while avoiding an infinite pullback at 0
                    // (RMSE terms can start exactly at zero error).
                    let floor = F::from(1e-12).expect("float cast");
                    let half = F::from(0.5).expect("float cast");
                    let d = zip(&g, &rec.value, |gv, y| gv * half / y.max(floor));
                    accum(inputs, *x, d);
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    let d = map(&g, |gv| gv * c);
                    accum(inputs, *x, d);
                }
                Op::AddConst(x) => {
                    accum(inputs, *x, g);
                }
                Op::Clamp(x, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let d = zip(&g, &inputs[x.0].value, |gv, xv| {
                        if xv > lo && xv < hi {
                            gv
                        } else {
                            F::zero()
                        }
                    });
                    accum(inputs, *x, d);
                }
                Op::Softmax(x) => {
                    let y = rec.value.data();
                    let dot = g
                        .data()
                        .iter()
                        .zip(y)
                        .fold(F::zero(), |acc, (&gv, &yv)| acc + gv * yv);
                    let data: Vec<F> = g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&gv, &yv)| yv * (gv - dot))
                        .collect();
                    let shape = rec.value.shape().to_vec();
                    accum(inputs, *x, TensorOf::from_raw(shape, data));
                }
                Op::Concat { parts, axis } => {
                    let out_shape = rec.value.shape();
                    let outer: usize = out_shape[..*axis].iter().product();
                    let inner: usize = out_shape[*axis + 1..].iter().product();
                    let out_block = out_shape[*axis] * inner;
                    let mut offset = 0;
                    let parts = parts.clone();
                    for p in parts {
                        let pshape = inputs[p.0].value.shape().to_vec();
                        let block = pshape[*axis] * inner;
                        let mut data = vec![F::zero(); pshape.iter().product()];
                        for o in 0..outer {
                            data[o * block..(o + 1) * block].copy_from_slice(
                                &g.data()[o * out_block + offset..o * out_block + offset + block],
                            );
                        }
                        accum(inputs, p, TensorOf::from_raw(pshape, data));
                        offset += block;
                    }
                }
                Op::Rows { x, start } => {
                    let (_, c) = rec.value.dims2();
                    let count = rec.value.shape()[0];
                    let xshape = inputs[x.0].value.shape().to_vec();
                    let mut data = vec![F::zero(); inputs[x.0].value.numel()];
                    data[start * c..(start + count) * c].copy_from_slice(g.data());
                    accum(inputs, *x, TensorOf::from_raw(xshape, data));
                }
                Op::Reshape(x) => {
                    let xshape = inputs[x.0].value.shape().to_vec();
                    accum(inputs, *x, TensorOf::from_raw(xshape, g.data().to_vec()));
                }
                Op::Dropout { x, mask } => {
                    let d = zip(&g, mask, |gv, m| gv * m);
                    accum(inputs, *x, d);
                }
                Op::Sum(x) => {
                    let gv = g.data()[0];
                    let shape = inputs[x.0].value.shape().to_vec();
                    let n = inputs[x.0].value.numel();
                    accum(inputs, *x, TensorOf::from_raw(shape, vec![gv; n]));
                }
                Op::Mean(x) => {
                    let n = inputs[x.0].value.numel();
                    let gv = g.data()[0] / F::from(n).expect("float cast");
                    let shape = inputs[x.0].value.shape().to_vec();
                    accum(inputs, *x, TensorOf::from_raw(shape, vec![gv; n]));
                }
            }
        }
        Ok(())
    }

    /// Clear all gradients so backward may run again on the same tape.
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }
}

fn accum<F: Float>(nodes: &mut [NodeRecord<F>], id: NodeId, delta: TensorOf<F>) {
    let rec = &mut nodes[id.0];
    if !rec.needs_grad {
        return;
    }
    match &mut rec.grad {
        Some(g) => {
            for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                *gv = *gv + *dv;
            }
        }
        None => rec.grad = Some(delta),
    }
}

fn sigmoid_val<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn map<F: Float>(t: &TensorOf<F>, f: impl Fn(F) -> F) -> TensorOf<F> {
    TensorOf::from_raw(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

fn zip<F: Float>(a: &TensorOf<F>, b: &TensorOf<F>, f: impl Fn(F, F) -> F) -> TensorOf<F> {
    debug_assert_eq!(a.shape(), b.shape());
    TensorOf::from_raw(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

/// C = A' × B' where each operand is optionally transposed in place via
/// stride arithmetic (no materialized transpose).
fn matmul_tt<F: Float>(a: &TensorOf<F>, b: &TensorOf<F>, ta: bool, tb: bool) -> TensorOf<F> {
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, kb);
    let av = a.data();
    let bv = b.data();
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aval = if ta { av[p * ac + i] } else { av[i * ac + p] };
            if aval == F::zero() {
                continue;
            }
            let (b_start, b_stride) = if tb { (p, bc) } else { (p * bc, 1) };
            let row = &mut out[i * n..(i + 1) * n];
            for (j, o) in row.iter_mut().enumerate() {
                *o = *o + aval * bv[b_start + j * b_stride];
            }
        }
    }
    TensorOf::from_raw(vec![m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_scalar_fn;
    use crate::autodiff::tensor::Tensor;

    fn t64(shape: Vec<usize>, data: Vec<f64>) -> TensorOf<f64> {
        TensorOf::from_vec(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g: Graph<f32> = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.constant(Tensor::from_vec(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut g: Graph<f32> = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::from_vec(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g: Graph<f32> = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![2, 2]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{}", err);
    }

    /// Weighted-sum head so the scalar loss is sensitive to every output
    /// entry with a distinct coefficient.
    fn weighted_loss(g: &mut Graph<f64>, y: NodeId, wseed: u64) -> NodeId {
        let mut wr = RngState::new(wseed);
        let n = g.value(y).numel();
        let shape = g.value(y).shape().to_vec();
        let w = g.constant(TensorOf::from_raw(
            shape,
            (0..n).map(|_| wr.uniform(0.25, 1.75)).collect(),
        ));
        let p = g.mul(y, w).unwrap();
        g.sum(p)
    }

    /// Max rel. err of analytic vs central-difference gradients for a
    /// single flat parameter vector feeding `f`.
    fn fd_max_err(x0: &[f64], shape: Vec<usize>, f: &dyn Fn(&mut Graph<f64>, NodeId) -> NodeId) -> f64 {
        let shape2 = shape.clone();
        let mut build = move |x: &[f64]| {
            let mut g = Graph::new();
            let p = g.param(TensorOf::from_raw(shape2.clone(), x.to_vec()));
            let y = f(&mut g, p);
            let loss = weighted_loss(&mut g, y, 0x5EED);
            g.backward(loss).unwrap();
            (g.value(loss).item(), g.grad(p).unwrap().data().to_vec())
        };
        check_scalar_fn(&mut build, x0, 1e-3)
    }

    fn rand_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = RngState::new(seed);
        (0..n).map(|_| rng.uniform(lo, hi)).collect()
    }

    /// Values bounded away from zero so kinked ops (relu, clamp) stay on
    /// one linear piece across the ±1e-3 probe.
    fn rand_vec_signed(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngState::new(seed);
        (0..n)
            .map(|_| {
                let mag = rng.uniform(0.1, 1.4);
                if rng.next_u64() & 1 == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect()
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        for seed in 0..20 {
            // 3×4 by 4×2 packed as [5,4]: top 3 rows are A, bottom 2 are Bᵀ.
            let x0 = rand_vec(20, -1.0, 1.0, 100 + seed);
            let err = fd_max_err(&x0, vec![5, 4], &|g, p| {
                let a = g.rows(p, 0, 3).unwrap();
                let bt = g.rows(p, 3, 2).unwrap();
                let b = g.transpose(bt);
                g.matmul(a, b).unwrap()
            });
            assert!(err < 1e-4, "seed {}: rel err {}", seed, err);
        }
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        type OpFn = fn(&mut Graph<f64>, NodeId, NodeId) -> NodeId;
        let binary: [(&str, OpFn); 3] = [
            ("add", |g, a, b| g.add(a, b).unwrap()),
            ("sub", |g, a, b| g.sub(a, b).unwrap()),
            ("mul", |g, a, b| g.mul(a, b).unwrap()),
        ];
        for (name, op) in binary {
            for seed in 0..20 {
                let x0 = rand_vec(12, -1.5, 1.5, 7 * seed + 1);
                let err = fd_max_err(&x0, vec![2, 6], &|g, p| {
                    let a = g.rows(p, 0, 1).unwrap();
                    let b = g.rows(p, 1, 1).unwrap();
                    op(g, a, b)
                });
                assert!(err < 1e-4, "{} seed {}: rel err {}", name, seed, err);
            }
        }
        type UnaryFn = fn(&mut Graph<f64>, NodeId) -> NodeId;
        let smooth: [(&str, UnaryFn); 5] = [
            ("tanh", |g, x| g.tanh(x)),
            ("sigmoid", |g, x| g.sigmoid(x)),
            ("exp", |g, x| g.exp(x)),
            ("scale", |g, x| g.scale(x, -1.7)),
            ("add_const", |g, x| g.add_const(x, 0.3)),
        ];
        for (name, op) in smooth {
            for seed in 0..20 {
                let x0 = rand_vec(9, -1.5, 1.5, 31 * seed + 5);
                let err = fd_max_err(&x0, vec![1, 9], &|g, p| op(g, p));
                assert!(err < 1e-4, "{} seed {}: rel err {}", name, seed, err);
            }
        }
        for seed in 0..20 {
            let x0 = rand_vec_signed(9, 17 * seed + 3);
            let err = fd_max_err(&x0, vec![1, 9], &|g, p| g.relu(p));
            assert!(err < 1e-4, "relu seed {}: rel err {}", seed, err);
            // clamp at ±0.8: signed magnitudes in (0.1,1.4) avoid the kinks
            // at ±0.8 only if we keep a margin; shift range instead.
            let x1: Vec<f64> = x0.iter().map(|v| v * 0.5).collect(); // within (−0.7,0.7)
            let err = fd_max_err(&x1, vec![1, 9], &|g, p| g.clamp(p, -0.8, 0.8));
            assert!(err < 1e-4, "clamp seed {}: rel err {}", seed, err);
            let xpos = rand_vec(9, 0.4, 2.0, 23 * seed + 9);
            let err = fd_max_err(&xpos, vec![1, 9], &|g, p| g.sqrt(p));
            assert!(err < 1e-4, "sqrt seed {}: rel err {}", seed, err);
        }
    }

    #[test]
    fn structural_op_gradients_match_finite_differences() {
        for seed in 0..20 {
            let x0 = rand_vec(12, -1.0, 1.0, 909 + seed);
            let err = fd_max_err(&x0, vec![3, 4], &|g, p| {
                let a = g.rows(p, 0, 2).unwrap();
                let bias = g.rows(p, 2, 1).unwrap();
                let biased = g.add_bias(a, bias).unwrap();
                let t = g.transpose(biased);
                let wide = g.concat(&[t, t], 1).unwrap();
                let flat = g.reshape(wide, vec![1, 16]).unwrap();
                g.mean(flat)
            });
            assert!(err < 1e-4, "seed {}: rel err {}", seed, err);
        }
    }

    #[test]
    fn tanh_and_sigmoid_closed_forms() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0]));
        let t = g.tanh(x);
        let s = g.sigmoid(x);
        assert_eq!(g.value(t).data(), &[0.0]);
        assert_eq!(g.value(s).data(), &[0.5]);
    }

    #[test]
    fn softmax_uniform_logits() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::row(vec![4.2, 4.2, 4.2]));
        let y = g.softmax(x);
        for &v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let total: f32 = g.value(y).data().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_closed_form_quarter() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t64(vec![1, 2], vec![0.0, 3.0f64.ln()]));
        let y = g.softmax(x);
        assert!((g.value(y).data()[0] - 0.25).abs() < 1e-12);
        assert!((g.value(y).data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let x0 = rand_vec(6, -2.0, 2.0, 440 + seed);
            let err = fd_max_err(&x0, vec![1, 6], &|g, p| g.softmax(p));
            assert!(err < 1e-4, "seed {}: rel err {}", seed, err);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::row(vec![1000.0, 1000.0, 999.0]));
        let y = g.softmax(x);
        let total: f32 = g.value(y).data().iter().sum();
        assert!(g.value(y).data().iter().all(|v| v.is_finite() && *v > 0.0));
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn concat_axis0_definition() {
        let mut g: Graph<f32> = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::from_vec(vec![1], vec![3.0]).unwrap());
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).shape(), &[3]);
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn concat_single_part_is_identity() {
        let mut g: Graph<f32> = Graph::new();
        let a = g.constant(Tensor::row(vec![1.0, 2.0]));
        let c = g.concat(&[a], 0).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn concat_routes_gradient_slices() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.param(t64(vec![2], vec![1.0, 2.0]));
        let b = g.param(t64(vec![1], vec![3.0]));
        let c = g.concat(&[a, b], 0).unwrap();
        let w = g.constant(t64(vec![3], vec![10.0, 20.0, 30.0]));
        let p = g.mul(c, w).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[10.0, 20.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[30.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = RngState::new(1);
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let inference = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(inference, x);
        let zero_rate = g.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(zero_rate, x);
        assert!(matches!(
            g.dropout(x, 1.0, true, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_survivor_fraction_near_rate() {
        let mut rng = RngState::new(42);
        let mut g: Graph<f32> = Graph::new();
        let n = 10_000;
        let x = g.constant(Tensor::from_vec(vec![n], vec![1.0; n]).unwrap());
        let y = g.dropout(x, 0.5, true, &mut rng).unwrap();
        let survivors = g.value(y).data().iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "survivor fraction {}", frac);
        // survivors carry the 1/(1−rate) scale
        assert!(g
            .value(y)
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn dropout_backward_passes_scaled_mask() {
        let mut rng = RngState::new(7);
        let mut g: Graph<f64> = Graph::new();
        let n = 64;
        let x = g.param(t64(vec![n], vec![1.0; n]));
        let y = g.dropout(x, 0.25, true, &mut rng).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap().data();
        let scale = 1.0 / 0.75;
        for (gv, yv) in grad.iter().zip(g.value(y).data()) {
            if *yv == 0.0 {
                assert_eq!(*gv, 0.0);
            } else {
                assert!((gv - scale).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(t64(vec![2, 3], vec![1.0, -2.0, 0.5, 4.0, 0.0, 9.0]));
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_square_at_three_is_six() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(TensorOf::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn two_consumer_node_accumulates_both_paths() {
        // z = x⊙y + x ⇒ dz/dx = y + 1, dz/dy = x (hand-derived)
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(TensorOf::scalar(2.0));
        let y = g.param(TensorOf::scalar(5.0));
        let xy = g.mul(x, y).unwrap();
        let z = g.add(xy, x).unwrap();
        g.backward(z).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
        assert_eq!(g.grad(y).unwrap().data(), &[2.0]);
    }

    #[test]
    fn repeated_backward_is_rejected_until_reset() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(TensorOf::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
        g.zero_grads();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(t64(vec![2], vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn same_seed_same_bytes() {
        let run = || {
            let mut rng = RngState::new(99);
            let mut g: Graph<f32> = Graph::new();
            let x = g.constant(Tensor::row(vec![0.3, -0.7, 1.1, 0.05]));
            let d = g.dropout(x, 0.3, true, &mut rng).unwrap();
            let t = g.tanh(d);
            let s = g.softmax(t);
            g.value(s).to_le_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rows_out_of_range_is_shape_error() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::zeros(vec![3, 2]));
        assert!(matches!(g.rows(x, 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_flow_through_rows_and_reshape_chain() {
        // mu/logvar style split: [1,4] -> [2,2] -> two [1,2] halves
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(t64(vec![1, 4], vec![0.1, 0.2, 0.3, 0.4]));
        let m = g.reshape(x, vec![2, 2]).unwrap();
        let top = g.rows(m, 0, 1).unwrap();
        let bot = g.rows(m, 1, 1).unwrap();
        let prod = g.mul(top, bot).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.3, 0.4, 0.1, 0.2]);
    }

    #[test]
    fn full_chain_gradient_in_f64_shadow() {
        // composite expression: softmax(tanh(xW+b)) weighted, plus a
        // clamped-exponential branch — every op class in one tape
        for seed in 0..20 {
            let x0 = rand_vec(2 * 3 + 3 * 4 + 4, -0.9, 0.9, 5000 + seed);
            let mut build = move |x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let xin = g.param(TensorOf::from_raw(vec![2, 3], x[0..6].to_vec()));
                let w = g.param(TensorOf::from_raw(vec![3, 4], x[6..18].to_vec()));
                let b = g.param(TensorOf::from_raw(vec![1, 4], x[18..22].to_vec()));
                let lin = g.linear(xin, w, b).unwrap();
                let t = g.tanh(lin);
                let sm = g.softmax(t);
                let e = g.exp(t);
                let c = g.clamp(e, 0.05, 5.0);
                let both = g.mul(sm, c).unwrap();
                let loss = g.mean(both);
                g.backward(loss).unwrap();
                let mut grads = g.grad(xin).unwrap().data().to_vec();
                grads.extend_from_slice(g.grad(w).unwrap().data());
                grads.extend_from_slice(g.grad(b).unwrap().data());
                (g.value(loss).item(), grads)
            };
            let err = check_scalar_fn(&mut build, &x0, 1e-3);
            assert!(err < 1e-4, "seed {}: rel err {}", seed, err);
        }
    }
}
