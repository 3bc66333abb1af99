use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::{DiffError, Result};

/// A named, persistently owned parameter array. Training steps put a copy on
/// the tape as a leaf, run backward, and feed the resulting gradient back
/// into [`Adam::step`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        let want: usize = shape.iter().product();
        assert_eq!(want, data.len(), "param shape/data mismatch");
        Param {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Param::new(name, shape, vec![0.0; len])
    }

    /// Detached tensor view of the current values.
    pub fn tensor(&self) -> Tensor {
        Tensor::from_vec(self.shape.clone(), self.data.clone()).expect("param invariant")
    }
}

/// Bias-corrected Adam over one group of parameters.
///
/// Moment arrays mirror the parameter shapes; the step counter increases by
/// exactly one per `step` call.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Conventional defaults: beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new(params: &[Param], lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    /// First and second moment arrays, aligned with the parameter group.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Overwrite the optimizer state, e.g. when restoring a checkpoint.
    pub fn restore(&mut self, step_count: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(DiffError::Contract(
                "moment group count mismatch on restore".to_string(),
            ));
        }
        for (new, old) in m.iter().zip(&self.m).chain(v.iter().zip(&self.v)) {
            if new.len() != old.len() {
                return Err(DiffError::Contract(
                    "moment length mismatch on restore".to_string(),
                ));
            }
        }
        self.step_count = step_count;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Apply one update in place. `grads` must align one-to-one with `params`.
    pub fn step(&mut self, params: &mut [Param], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(DiffError::Contract(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.data.len() != g.len() {
                return Err(DiffError::Contract(format!(
                    "adam: gradient length {} does not match parameter {} ({})",
                    g.len(),
                    p.name,
                    p.data.len()
                )));
            }
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite {
                    what: "gradient",
                    detail: format!("parameter {}: {bad}", p.name),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scale all gradients by `max_norm / norm` when the joint L2 norm exceeds
/// `max_norm`. Returns the pre-clip global norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let sq: f64 = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

/// target ← (1 − tau)·target + tau·online, elementwise.
pub fn polyak_update(target: &mut [Param], online: &[Param], tau: f64) {
    assert!(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
    assert_eq!(target.len(), online.len(), "polyak: network size mismatch");
    for (t, o) in target.iter_mut().zip(online) {
        debug_assert_eq!(t.data.len(), o.data.len());
        for (tv, ov) in t.data.iter_mut().zip(&o.data) {
            *tv = (1.0 - tau) * *tv + tau * ov;
        }
    }
}
