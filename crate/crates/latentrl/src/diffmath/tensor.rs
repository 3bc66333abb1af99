use std::rc::Rc;

use super::tape::NodeRef;
use super::{DiffError, Result};

/// A dense n-dimensional `f64` array in row-major order, optionally attached
/// to a gradient tape.
///
/// Cloning is cheap (the value buffer is shared). A tensor with no node is
/// *detached*: it participates in forward arithmetic but never receives
/// gradient.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<Vec<f64>>,
    pub(crate) node: Option<NodeRef>,
}

impl Tensor {
    /// Detached tensor from raw storage. `shape` must multiply out to `data.len()`.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(DiffError::Contract(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                want,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            node: None,
        })
    }

    /// Detached rank-0 scalar.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: Rc::new(vec![v]),
            node: None,
        }
    }

    /// Detached zero tensor.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: Rc::new(vec![0.0; len]),
            node: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// The sole element of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of len {}", self.data.len());
        self.data[0]
    }

    /// Same values, no tape node. Gradient stops here.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    pub fn is_attached(&self) -> bool {
        self.node.is_some()
    }

    pub(crate) fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(DiffError::Dimension {
                op,
                lhs: self.shape.clone(),
                rhs: vec![],
            }),
        }
    }

    /// Copy a row range of a 2-D tensor out as a detached tensor. Gradient
    /// does not flow back; intended for slicing shared constant planes.
    pub fn rows_detached(&self, start: usize, count: usize) -> Result<Tensor> {
        let (rows, cols) = self.rows_cols("rows_detached")?;
        if start + count > rows {
            return Err(DiffError::Contract(format!(
                "row slice {start}..{} out of {rows}",
                start + count
            )));
        }
        Tensor::from_vec(
            vec![count, cols],
            self.data[start * cols..(start + count) * cols].to_vec(),
        )
    }

    /// Error out if any value is NaN or infinite. Used by the debug-mode
    /// checks after loss evaluation.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(DiffError::NonFinite {
                    what,
                    detail: format!("index {i} = {v}"),
                });
            }
        }
        Ok(())
    }

}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: Vec<f64> = self.data.iter().take(8).copied().collect();
        write!(
            f,
            "Tensor{:?}{}{:?}{}",
            self.shape,
            if self.node.is_some() { "@" } else { " " },
            preview,
            if self.data.len() > 8 { "..." } else { "" }
        )
    }
}
