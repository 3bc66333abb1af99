use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::Tensor;
use super::{DiffError, Result};

/// One operand of a recorded operation: its forward values, and its node id
/// when it is itself on the tape (detached operands have no id and receive
/// no gradient).
pub(crate) struct Input {
    pub id: Option<usize>,
    pub data: Rc<Vec<f64>>,
}

impl Input {
    pub(crate) fn of(t: &Tensor) -> Input {
        Input {
            id: t.node.as_ref().map(|n| n.id),
            data: Rc::clone(&t.data),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub(crate) enum UnaryKind {
    Exp,
    Log,
    Tanh,
    Elu,
    Softplus,
    Square,
    Negate,
    Sigmoid,
    /// y = c * x
    Scale(f64),
    /// y = x + c
    AddScalar(f64),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum ReduceKind {
    Sum,
    Mean,
}

/// A recorded operation. Saved buffers are whatever the backward rule needs.
pub(crate) enum Op {
    Leaf,
    Matmul {
        a: Input,
        b: Input,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Fused dense layer: y = act(x·w + bias). The saved output is enough
    /// for the ELU derivative (y > 0 iff x > 0, and elu'(x) = y + 1 below).
    Linear {
        x: Input,
        w: Input,
        bias: Input,
        elu: bool,
        out: Rc<Vec<f64>>,
        m: usize,
        k: usize,
        n: usize,
    },
    Binary {
        kind: BinaryKind,
        a: Input,
        b: Input,
    },
    Unary {
        kind: UnaryKind,
        x: Input,
        out: Rc<Vec<f64>>,
    },
    /// Row-broadcast bias add: y[r, c] = x[r, c] + bias[c].
    AddRow {
        x: Input,
        bias: Input,
        rows: usize,
        cols: usize,
    },
    Reduce {
        kind: ReduceKind,
        x: Input,
        in_shape: Vec<usize>,
        axis: Option<usize>,
    },
    LayerNorm {
        x: Input,
        gain: Input,
        bias: Input,
        rows: usize,
        cols: usize,
        /// Normalized rows before the affine map.
        xhat: Rc<Vec<f64>>,
        /// Per-row 1 / sqrt(var + eps).
        inv_std: Rc<Vec<f64>>,
    },
    /// Column-wise concatenation of equal-row-count matrices.
    ConcatCols {
        parts: Vec<(Input, usize)>,
        rows: usize,
    },
    /// Row-wise stacking of equal-width tensors (rank-1 counts as width 1).
    ConcatRows {
        parts: Vec<(Input, usize)>,
    },
    /// Contiguous row range of the input; backward scatters into the range.
    SliceRows {
        x: Input,
        start: usize,
        rows: usize,
        cols: usize,
    },
    /// Contiguous column range of a 2-D input.
    SliceCols {
        x: Input,
        start: usize,
        cols: usize,
        total_cols: usize,
        rows: usize,
    },
    Clamp {
        x: Input,
        lo: f64,
        hi: f64,
    },
}

pub(crate) struct NodeRef {
    pub tape: Tape,
    pub id: usize,
}

impl Clone for NodeRef {
    fn clone(&self) -> Self {
        NodeRef {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

/// Append-only record of operations. Parents of any node precede it, so a
/// single reverse sweep visits each node exactly once.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<Vec<Op>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn ptr_eq(a: &Tape, b: &Tape) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }

    pub(crate) fn push(&self, op: Op) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(op);
        nodes.len() - 1
    }

    /// Put a value on the tape as a gradient-receiving leaf.
    pub fn leaf(&self, t: &Tensor) -> Tensor {
        let id = self.push(Op::Leaf);
        Tensor {
            shape: t.shape.clone(),
            data: Rc::clone(&t.data),
            node: Some(NodeRef {
                tape: self.clone(),
                id,
            }),
        }
    }

    /// Reverse sweep from a scalar loss. Returns the gradient slots for every
    /// node on the tape; leaves unreached by the loss keep `None` (zero).
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.len() != 1 {
            return Err(DiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape
            )));
        }
        let node = loss.node.as_ref().ok_or_else(|| {
            DiffError::Contract("backward on a detached tensor".to_string())
        })?;
        if !Tape::ptr_eq(&node.tape, self) {
            return Err(DiffError::Contract(
                "loss was recorded on a different tape".to_string(),
            ));
        }

        let nodes = self.inner.borrow();
        let mut slots: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        slots[node.id] = Some(vec![1.0]);

        for id in (0..=node.id).rev() {
            let Some(grad) = slots[id].take() else {
                continue;
            };
            let keep = matches!(nodes[id], Op::Leaf);
            backprop(&nodes[id], &grad, &mut slots);
            if keep {
                slots[id] = Some(grad);
            }
        }
        Ok(Gradients { slots })
    }
}

/// Gradient of the loss with respect to every reached tape node, keyed by
/// node handle. After `backward` only leaf slots remain populated.
pub struct Gradients {
    slots: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        let node = t.node.as_ref()?;
        self.slots.get(node.id)?.as_deref()
    }

    pub fn take(&mut self, t: &Tensor) -> Option<Vec<f64>> {
        let node = t.node.as_ref()?;
        self.slots.get_mut(node.id)?.take()
    }

    /// Gradient for a leaf, densified: unreached leaves get zeros.
    pub fn take_or_zeros(&mut self, t: &Tensor) -> Vec<f64> {
        self.take(t).unwrap_or_else(|| vec![0.0; t.len()])
    }
}

fn add_into(slots: &mut [Option<Vec<f64>>], input: &Input, contribution: impl FnOnce(&mut [f64])) {
    let Some(id) = input.id else { return };
    let slot = slots[id].get_or_insert_with(|| vec![0.0; input.data.len()]);
    contribution(slot);
}

fn backprop(op: &Op, dy: &[f64], slots: &mut [Option<Vec<f64>>]) {
    match op {
        Op::Leaf => {}
        Op::Matmul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            // dA += dY . B^T  ;  dB += A^T . dY
            add_into(slots, a, |da| unsafe {
                matrixmultiply::dgemm(
                    m,
                    n,
                    k,
                    1.0,
                    dy.as_ptr(),
                    n as isize,
                    1,
                    b.data.as_ptr(),
                    1,
                    n as isize,
                    1.0,
                    da.as_mut_ptr(),
                    k as isize,
                    1,
                )
            });
            add_into(slots, b, |db| unsafe {
                matrixmultiply::dgemm(
                    k,
                    m,
                    n,
                    1.0,
                    a.data.as_ptr(),
                    1,
                    k as isize,
                    dy.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    db.as_mut_ptr(),
                    n as isize,
                    1,
                )
            });
        }
        Op::Linear {
            x,
            w,
            bias,
            elu,
            out,
            m,
            k,
            n,
        } => {
            let (m, k, n) = (*m, *k, *n);
            // Pre-activation gradient; for the plain affine case this is dy.
            let dpre: Vec<f64> = if *elu {
                dy.iter()
                    .zip(out.iter())
                    .map(|(d, y)| d * if *y > 0.0 { 1.0 } else { y + 1.0 })
                    .collect()
            } else {
                dy.to_vec()
            };
            add_into(slots, x, |dx| unsafe {
                matrixmultiply::dgemm(
                    m,
                    n,
                    k,
                    1.0,
                    dpre.as_ptr(),
                    n as isize,
                    1,
                    w.data.as_ptr(),
                    1,
                    n as isize,
                    1.0,
                    dx.as_mut_ptr(),
                    k as isize,
                    1,
                )
            });
            add_into(slots, w, |dw| unsafe {
                matrixmultiply::dgemm(
                    k,
                    m,
                    n,
                    1.0,
                    x.data.as_ptr(),
                    1,
                    k as isize,
                    dpre.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    dw.as_mut_ptr(),
                    n as isize,
                    1,
                )
            });
            add_into(slots, bias, |db| {
                for row in dpre.chunks_exact(n) {
                    for (g, d) in db.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            });
        }
        Op::Binary { kind, a, b } => {
            let (la, lb) = (a.data.len(), b.data.len());
            match kind {
                BinaryKind::Add => {
                    add_into(slots, a, |da| accumulate(da, dy, la));
                    add_into(slots, b, |db| accumulate(db, dy, lb));
                }
                BinaryKind::Sub => {
                    add_into(slots, a, |da| accumulate(da, dy, la));
                    add_into(slots, b, |db| {
                        if lb == 1 && dy.len() > 1 {
                            db[0] -= dy.iter().sum::<f64>();
                        } else {
                            for (g, d) in db.iter_mut().zip(dy) {
                                *g -= d;
                            }
                        }
                    });
                }
                BinaryKind::Mul => {
                    let bd = &b.data;
                    let ad = &a.data;
                    add_into(slots, a, |da| {
                        if la == 1 && dy.len() > 1 {
                            da[0] += dy.iter().zip(bd.iter()).map(|(d, bv)| d * bv).sum::<f64>();
                        } else if lb == 1 {
                            for (g, d) in da.iter_mut().zip(dy) {
                                *g += d * bd[0];
                            }
                        } else {
                            for ((g, d), bv) in da.iter_mut().zip(dy).zip(bd.iter()) {
                                *g += d * bv;
                            }
                        }
                    });
                    add_into(slots, b, |db| {
                        if lb == 1 && dy.len() > 1 {
                            db[0] += dy.iter().zip(ad.iter()).map(|(d, av)| d * av).sum::<f64>();
                        } else if la == 1 {
                            for (g, d) in db.iter_mut().zip(dy) {
                                *g += d * ad[0];
                            }
                        } else {
                            for ((g, d), av) in db.iter_mut().zip(dy).zip(ad.iter()) {
                                *g += d * av;
                            }
                        }
                    });
                }
            }
        }
        Op::Unary { kind, x, out } => {
            add_into(slots, x, |dx| {
                let xv = &x.data;
                match kind {
                    UnaryKind::Exp => {
                        for ((g, d), y) in dx.iter_mut().zip(dy).zip(out.iter()) {
                            *g += d * y;
                        }
                    }
                    UnaryKind::Log => {
                        for ((g, d), xi) in dx.iter_mut().zip(dy).zip(xv.iter()) {
                            *g += d / xi;
                        }
                    }
                    UnaryKind::Tanh => {
                        for ((g, d), y) in dx.iter_mut().zip(dy).zip(out.iter()) {
                            *g += d * (1.0 - y * y);
                        }
                    }
                    UnaryKind::Elu => {
                        for ((g, d), (xi, y)) in
                            dx.iter_mut().zip(dy).zip(xv.iter().zip(out.iter()))
                        {
                            *g += d * if *xi > 0.0 { 1.0 } else { y + 1.0 };
                        }
                    }
                    UnaryKind::Softplus => {
                        for ((g, d), xi) in dx.iter_mut().zip(dy).zip(xv.iter()) {
                            *g += d * super::fastmath::sigmoid(*xi);
                        }
                    }
                    UnaryKind::Square => {
                        for ((g, d), xi) in dx.iter_mut().zip(dy).zip(xv.iter()) {
                            *g += d * 2.0 * xi;
                        }
                    }
                    UnaryKind::Negate => {
                        for (g, d) in dx.iter_mut().zip(dy) {
                            *g -= d;
                        }
                    }
                    UnaryKind::Sigmoid => {
                        for ((g, d), y) in dx.iter_mut().zip(dy).zip(out.iter()) {
                            *g += d * y * (1.0 - y);
                        }
                    }
                    UnaryKind::Scale(c) => {
                        for (g, d) in dx.iter_mut().zip(dy) {
                            *g += d * c;
                        }
                    }
                    UnaryKind::AddScalar(_) => {
                        for (g, d) in dx.iter_mut().zip(dy) {
                            *g += d;
                        }
                    }
                }
            });
        }
        Op::AddRow { x, bias, rows, cols } => {
            add_into(slots, x, |dx| {
                for (g, d) in dx.iter_mut().zip(dy) {
                    *g += d;
                }
            });
            add_into(slots, bias, |db| {
                for r in 0..*rows {
                    let row = &dy[r * cols..(r + 1) * cols];
                    for (g, d) in db.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            });
        }
        Op::Reduce {
            kind,
            x,
            in_shape,
            axis,
        } => {
            let total: usize = in_shape.iter().product();
            add_into(slots, x, |dx| match axis {
                None => {
                    let d = match kind {
                        ReduceKind::Sum => dy[0],
                        ReduceKind::Mean => dy[0] / total as f64,
                    };
                    for g in dx.iter_mut() {
                        *g += d;
                    }
                }
                Some(ax) => {
                    let (rows, cols) = (in_shape[0], in_shape[1]);
                    let denom = match kind {
                        ReduceKind::Sum => 1.0,
                        ReduceKind::Mean => {
                            if *ax == 0 {
                                rows as f64
                            } else {
                                cols as f64
                            }
                        }
                    };
                    for r in 0..rows {
                        for c in 0..cols {
                            let d = if *ax == 0 { dy[c] } else { dy[r] };
                            dx[r * cols + c] += d / denom;
                        }
                    }
                }
            });
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            rows,
            cols,
            xhat,
            inv_std,
        } => {
            let (rows, cols) = (*rows, *cols);
            add_into(slots, gain, |dg| {
                for r in 0..rows {
                    for c in 0..cols {
                        dg[c] += dy[r * cols + c] * xhat[r * cols + c];
                    }
                }
            });
            add_into(slots, bias, |db| {
                for r in 0..rows {
                    for c in 0..cols {
                        db[c] += dy[r * cols + c];
                    }
                }
            });
            let gv = &gain.data;
            add_into(slots, x, |dx| {
                for r in 0..rows {
                    let row = r * cols;
                    let mut mean_dxh = 0.0;
                    let mut mean_dxh_xh = 0.0;
                    for c in 0..cols {
                        let dxh = dy[row + c] * gv[c];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xhat[row + c];
                    }
                    mean_dxh /= cols as f64;
                    mean_dxh_xh /= cols as f64;
                    for c in 0..cols {
                        let dxh = dy[row + c] * gv[c];
                        dx[row + c] +=
                            inv_std[r] * (dxh - mean_dxh - xhat[row + c] * mean_dxh_xh);
                    }
                }
            });
        }
        Op::ConcatCols { parts, rows } => {
            let total_cols: usize = parts.iter().map(|(_, w)| w).sum();
            let mut offset = 0;
            for (input, width) in parts {
                add_into(slots, input, |dx| {
                    for r in 0..*rows {
                        let src = r * total_cols + offset;
                        let dst = r * width;
                        for c in 0..*width {
                            dx[dst + c] += dy[src + c];
                        }
                    }
                });
                offset += width;
            }
        }
        Op::ConcatRows { parts } => {
            let mut offset = 0;
            for (input, len) in parts {
                add_into(slots, input, |dx| {
                    for (g, d) in dx.iter_mut().zip(&dy[offset..offset + len]) {
                        *g += d;
                    }
                });
                offset += len;
            }
        }
        Op::SliceRows {
            x,
            start,
            rows,
            cols,
        } => {
            add_into(slots, x, |dx| {
                let base = start * cols;
                for (g, d) in dx[base..base + rows * cols].iter_mut().zip(dy) {
                    *g += d;
                }
            });
        }
        Op::SliceCols {
            x,
            start,
            cols,
            total_cols,
            rows,
        } => {
            add_into(slots, x, |dx| {
                for r in 0..*rows {
                    let src = r * cols;
                    let dst = r * total_cols + start;
                    for c in 0..*cols {
                        dx[dst + c] += dy[src + c];
                    }
                }
            });
        }
        Op::Clamp { x, lo, hi } => {
            add_into(slots, x, |dx| {
                for ((g, d), xi) in dx.iter_mut().zip(dy).zip(x.data.iter()) {
                    if *xi >= *lo && *xi <= *hi {
                        *g += d;
                    }
                }
            });
        }
    }
}

/// dst += dy, collapsing to a scalar slot when the operand was broadcast.
fn accumulate(dst: &mut [f64], dy: &[f64], operand_len: usize) {
    if operand_len == 1 && dy.len() > 1 {
        dst[0] += dy.iter().sum::<f64>();
    } else {
        for (g, d) in dst.iter_mut().zip(dy) {
            *g += d;
        }
    }
}

