use std::rc::Rc;

use super::fastmath;
use super::tape::{BinaryKind, Input, NodeRef, Op, ReduceKind, Tape, UnaryKind};
use super::tensor::Tensor;
use super::{DiffError, Result};

fn tape_of(operands: &[&Tensor]) -> Result<Option<Tape>> {
    let mut found: Option<Tape> = None;
    for t in operands {
        if let Some(node) = &t.node {
            match &found {
                None => found = Some(node.tape.clone()),
                Some(tape) => {
                    if !Tape::ptr_eq(tape, &node.tape) {
                        return Err(DiffError::Contract(
                            "operands recorded on different tapes".to_string(),
                        ));
                    }
                }
            }
        }
    }
    Ok(found)
}

fn finish(tape: Option<Tape>, shape: Vec<usize>, data: Rc<Vec<f64>>, op: impl FnOnce() -> Op) -> Tensor {
    match tape {
        Some(tape) => {
            let id = tape.push(op());
            Tensor {
                shape,
                data,
                node: Some(NodeRef { tape, id }),
            }
        }
        None => Tensor {
            shape,
            data,
            node: None,
        },
    }
}

impl Tensor {
    /// 2-D matrix product. Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols("matmul")?;
        let (k2, n) = rhs.rows_cols("matmul")?;
        if k != k2 {
            return Err(DiffError::Dimension {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let tape = tape_of(&[self, rhs])?;
        let mut out = vec![0.0; m * n];
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.data.as_ptr(),
                k as isize,
                1,
                rhs.data.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        let a = Input::of(self);
        let b = Input::of(rhs);
        Ok(finish(tape, vec![m, n], Rc::new(out), || Op::Matmul {
            a,
            b,
            m,
            k,
            n,
        }))
    }

    /// Fused dense layer y = act(x·w + bias), recorded as one node. With
    /// `elu` the activation is applied in place; backward recovers the
    /// derivative from the saved output.
    pub fn linear(&self, w: &Tensor, bias: &Tensor, elu: bool) -> Result<Tensor> {
        let (m, k) = self.rows_cols("linear")?;
        let (k2, n) = w.rows_cols("linear")?;
        if k != k2 || bias.shape() != [n] {
            return Err(DiffError::Dimension {
                op: "linear",
                lhs: self.shape.clone(),
                rhs: w.shape.clone(),
            });
        }
        let tape = tape_of(&[self, w, bias])?;
        let mut out = vec![0.0; m * n];
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.data.as_ptr(),
                k as isize,
                1,
                w.data.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for row in out.chunks_exact_mut(n) {
            for (v, b) in row.iter_mut().zip(bias.data.iter()) {
                *v += b;
            }
        }
        if elu {
            fastmath::elu_slice(&mut out);
        }
        let data = Rc::new(out);
        let saved = Rc::clone(&data);
        let x = Input::of(self);
        let wi = Input::of(w);
        let bi = Input::of(bias);
        Ok(finish(tape, vec![m, n], data, || Op::Linear {
            x,
            w: wi,
            bias: bi,
            elu,
            out: saved,
            m,
            k,
            n,
        }))
    }

    fn binary(&self, rhs: &Tensor, kind: BinaryKind, name: &'static str) -> Result<Tensor> {
        let broadcast_ok =
            self.shape == rhs.shape || self.len() == 1 || rhs.len() == 1;
        if !broadcast_ok {
            return Err(DiffError::Dimension {
                op: name,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let tape = tape_of(&[self, rhs])?;
        let (la, lb) = (self.len(), rhs.len());
        let out_len = la.max(lb);
        let shape = if la >= lb {
            self.shape.clone()
        } else {
            rhs.shape.clone()
        };
        let mut out = Vec::with_capacity(out_len);
        let av = &self.data;
        let bv = &rhs.data;
        for i in 0..out_len {
            let a = av[if la == 1 { 0 } else { i }];
            let b = bv[if lb == 1 { 0 } else { i }];
            out.push(match kind {
                BinaryKind::Add => a + b,
                BinaryKind::Sub => a - b,
                BinaryKind::Mul => a * b,
            });
        }
        let a = Input::of(self);
        let b = Input::of(rhs);
        Ok(finish(tape, shape, Rc::new(out), || Op::Binary { kind, a, b }))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Add, "add")
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Sub, "sub")
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Mul, "mul")
    }

    fn unary(&self, kind: UnaryKind, forward: impl Fn(f64) -> f64) -> Result<Tensor> {
        let tape = tape_of(&[self])?;
        let out: Vec<f64> = self.data.iter().map(|&x| forward(x)).collect();
        let data = Rc::new(out);
        let saved = Rc::clone(&data);
        let x = Input::of(self);
        Ok(finish(tape, self.shape.clone(), data, || Op::Unary {
            kind,
            x,
            out: saved,
        }))
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Exp, f64::exp)
    }

    pub fn log(&self) -> Result<Tensor> {
        if let Some(bad) = self.data.iter().find(|v| **v <= 0.0) {
            return Err(DiffError::Domain {
                op: "log",
                msg: format!("non-positive input {bad}"),
            });
        }
        self.unary(UnaryKind::Log, f64::ln)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Tanh, f64::tanh)
    }

    /// ELU with unit scale: x for x > 0, exp(x) - 1 otherwise.
    pub fn elu(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Elu, fastmath::elu)
    }

    pub fn softplus(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Softplus, fastmath::softplus)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Square, |x| x * x)
    }

    pub fn negate(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Negate, |x| -x)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary(UnaryKind::Sigmoid, fastmath::sigmoid)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.unary(UnaryKind::Scale(c), |x| c * x)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.unary(UnaryKind::AddScalar(c), |x| x + c)
    }

    /// Clamp into [lo, hi]. Gradient passes through inside the interval
    /// (boundary included) and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        if lo > hi {
            return Err(DiffError::Contract(format!("clamp: lo {lo} > hi {hi}")));
        }
        let tape = tape_of(&[self])?;
        let out: Vec<f64> = self.data.iter().map(|&x| x.clamp(lo, hi)).collect();
        let x = Input::of(self);
        Ok(finish(tape, self.shape.clone(), Rc::new(out), || Op::Clamp {
            x,
            lo,
            hi,
        }))
    }

    fn reduce(&self, kind: ReduceKind, axis: Option<usize>, name: &'static str) -> Result<Tensor> {
        match axis {
            None => {
                let total = self.len() as f64;
                let mut s: f64 = self.data.iter().sum();
                if kind == ReduceKind::Mean {
                    s /= total;
                }
                let tape = tape_of(&[self])?;
                let x = Input::of(self);
                let in_shape = self.shape.clone();
                Ok(finish(tape, vec![], Rc::new(vec![s]), || Op::Reduce {
                    kind,
                    x,
                    in_shape,
                    axis: None,
                }))
            }
            Some(ax) => {
                let (rows, cols) = self.rows_cols(name)?;
                if ax > 1 {
                    return Err(DiffError::Dimension {
                        op: name,
                        lhs: self.shape.clone(),
                        rhs: vec![ax],
                    });
                }
                let out_len = if ax == 0 { cols } else { rows };
                let mut out = vec![0.0; out_len];
                for r in 0..rows {
                    for c in 0..cols {
                        let idx = if ax == 0 { c } else { r };
                        out[idx] += self.data[r * cols + c];
                    }
                }
                if kind == ReduceKind::Mean {
                    let denom = if ax == 0 { rows } else { cols } as f64;
                    for v in &mut out {
                        *v /= denom;
                    }
                }
                let tape = tape_of(&[self])?;
                let x = Input::of(self);
                let in_shape = self.shape.clone();
                Ok(finish(tape, vec![out_len], Rc::new(out), || Op::Reduce {
                    kind,
                    x,
                    in_shape,
                    axis: Some(ax),
                }))
            }
        }
    }

    /// Sum of all elements into a scalar.
    pub fn sum_all(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Sum, None, "sum")
    }

    /// Mean of all elements into a scalar.
    pub fn mean_all(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Mean, None, "mean")
    }

    /// Sum along one axis of a 2-D tensor.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce(ReduceKind::Sum, Some(axis), "sum_axis")
    }

    /// Mean along one axis of a 2-D tensor.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce(ReduceKind::Mean, Some(axis), "mean_axis")
    }

    /// Row-broadcast bias add for linear layers: y[r, c] = x[r, c] + bias[c].
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let (rows, cols) = self.rows_cols("add_row")?;
        if bias.shape() != [cols] {
            return Err(DiffError::Dimension {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let tape = tape_of(&[self, bias])?;
        let mut out = Vec::with_capacity(self.len());
        for r in 0..rows {
            for c in 0..cols {
                out.push(self.data[r * cols + c] + bias.data[c]);
            }
        }
        let x = Input::of(self);
        let b = Input::of(bias);
        Ok(finish(tape, self.shape.clone(), Rc::new(out), || Op::AddRow {
            x,
            bias: b,
            rows,
            cols,
        }))
    }

    /// Per-row normalization to zero mean and unit variance (epsilon
    /// stabilized), followed by the affine map `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        const EPS: f64 = 1e-8;
        let (rows, cols) = self.rows_cols("layer_norm")?;
        if cols < 2 {
            return Err(DiffError::Contract(format!(
                "layer_norm needs row width >= 2, got {cols}"
            )));
        }
        if gain.shape() != [cols] || bias.shape() != [cols] {
            return Err(DiffError::Dimension {
                op: "layer_norm",
                lhs: self.shape.clone(),
                rhs: gain.shape.clone(),
            });
        }
        let tape = tape_of(&[self, gain, bias])?;
        let mut xhat = vec![0.0; self.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; self.len()];
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let xh = (row[c] - mean) * is;
                xhat[r * cols + c] = xh;
                out[r * cols + c] = gain.data[c] * xh + bias.data[c];
            }
        }
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let (xh, is) = (Rc::clone(&xhat), Rc::clone(&inv_std));
        let x = Input::of(self);
        let g = Input::of(gain);
        let b = Input::of(bias);
        Ok(finish(tape, self.shape.clone(), Rc::new(out), || Op::LayerNorm {
            x,
            gain: g,
            bias: b,
            rows,
            cols,
            xhat: xh,
            inv_std: is,
        }))
    }

    /// Stack tensors of equal width along the row axis; rank-1 inputs stack
    /// end to end.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(DiffError::Contract("concat_rows of nothing".to_string()));
        }
        let width = |t: &Tensor| -> usize {
            match t.shape.as_slice() {
                [_, c] => *c,
                _ => 1,
            }
        };
        let cols = width(parts[0]);
        let mut total_rows = 0;
        for p in parts {
            if width(p) != cols {
                return Err(DiffError::Dimension {
                    op: "concat_rows",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            total_rows += p.len() / cols;
        }
        let tape = tape_of(parts)?;
        let mut out = Vec::with_capacity(total_rows * cols);
        for p in parts {
            out.extend_from_slice(&p.data);
        }
        let shape = if parts[0].shape.len() == 2 {
            vec![total_rows, cols]
        } else {
            vec![total_rows]
        };
        let inputs: Vec<(Input, usize)> = parts.iter().map(|p| (Input::of(p), p.len())).collect();
        Ok(finish(tape, shape, Rc::new(out), || Op::ConcatRows {
            parts: inputs,
        }))
    }

    /// Gradient-carrying contiguous row slice (rank-1 tensors slice by
    /// element).
    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Tensor> {
        let (rows, cols, rank1) = match self.shape.as_slice() {
            [r, c] => (*r, *c, false),
            [n] => (*n, 1, true),
            _ => {
                return Err(DiffError::Dimension {
                    op: "slice_rows",
                    lhs: self.shape.clone(),
                    rhs: vec![],
                })
            }
        };
        if start + count > rows {
            return Err(DiffError::Contract(format!(
                "slice_rows {start}..{} out of {rows}",
                start + count
            )));
        }
        let tape = tape_of(&[self])?;
        let out = self.data[start * cols..(start + count) * cols].to_vec();
        let shape = if rank1 {
            vec![count]
        } else {
            vec![count, cols]
        };
        let x = Input::of(self);
        Ok(finish(tape, shape, Rc::new(out), || Op::SliceRows {
            x,
            start,
            rows: count,
            cols,
        }))
    }

    /// Gradient-carrying contiguous column slice of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, count: usize) -> Result<Tensor> {
        let (rows, total) = self.rows_cols("slice_cols")?;
        if start + count > total {
            return Err(DiffError::Contract(format!(
                "slice_cols {start}..{} out of {total}",
                start + count
            )));
        }
        let tape = tape_of(&[self])?;
        let mut out = Vec::with_capacity(rows * count);
        for r in 0..rows {
            out.extend_from_slice(&self.data[r * total + start..r * total + start + count]);
        }
        let x = Input::of(self);
        Ok(finish(tape, vec![rows, count], Rc::new(out), || Op::SliceCols {
            x,
            start,
            cols: count,
            total_cols: total,
            rows,
        }))
    }

    /// Concatenate 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(DiffError::Contract("concat_cols of nothing".to_string()));
        }
        let (rows, _) = parts[0].rows_cols("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.rows_cols("concat_cols")?;
            if r != rows {
                return Err(DiffError::Dimension {
                    op: "concat_cols",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(c);
        }
        let tape = tape_of(parts)?;
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        let inputs: Vec<(Input, usize)> = parts
            .iter()
            .zip(&widths)
            .map(|(p, w)| (Input::of(p), *w))
            .collect();
        Ok(finish(tape, vec![rows, total], Rc::new(out), || {
            Op::ConcatCols {
                parts: inputs,
                rows,
            }
        }))
    }
}
