//! The network building blocks: ELU feed-forward stacks with optional layer
//! normalization after the first linear, and the Gaussian-output net used by
//! encoder and latent model.
//!
//! Every net owns its parameters as a flat `Vec<Param>` in a fixed order, so
//! optimizers, target copies, and checkpoints all operate on plain slices.
//! For a loss evaluation the net is *bound* either onto a tape (trainable
//! this step) or as constants (gradients flow through activations into the
//! inputs but never into the parameters).

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::diffmath::{Param, Result, Tape, Tensor};
use crate::dists::{DiagGaussian, STD_FLOOR};

#[derive(Clone, Copy)]
pub enum Bind<'a> {
    /// Leaf the parameters onto this tape.
    Tape(&'a Tape),
    /// Constants: evaluated but not differentiated.
    Frozen,
}

fn bind_param(p: &Param, mode: Bind) -> Tensor {
    let t = p.tensor();
    match mode {
        Bind::Tape(tape) => tape.leaf(&t),
        Bind::Frozen => t,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum FinalInit {
    Orthogonal,
    Zero,
}

/// Orthogonal(-ish) initialization: Gaussian matrix with the smaller
/// dimension's vectors orthonormalized by modified Gram-Schmidt.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    let (n_vecs, len, stride_major) = if rows <= cols {
        (rows, cols, true) // orthonormalize rows
    } else {
        (cols, rows, false) // orthonormalize columns
    };
    let get = |m: &Vec<f64>, v: usize, i: usize| -> f64 {
        if stride_major {
            m[v * cols + i]
        } else {
            m[i * cols + v]
        }
    };
    let set = |m: &mut Vec<f64>, v: usize, i: usize, val: f64| {
        if stride_major {
            m[v * cols + i] = val;
        } else {
            m[i * cols + v] = val;
        }
    };
    for v in 0..n_vecs {
        for prev in 0..v {
            let dot: f64 = (0..len).map(|i| get(&m, v, i) * get(&m, prev, i)).sum();
            for i in 0..len {
                let val = get(&m, v, i) - dot * get(&m, prev, i);
                set(&mut m, v, i, val);
            }
        }
        let norm: f64 = (0..len).map(|i| get(&m, v, i).powi(2)).sum::<f64>().sqrt();
        let inv = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        for i in 0..len {
            let val = get(&m, v, i) * inv;
            set(&mut m, v, i, val);
        }
    }
    m
}

fn linear_params(
    name: &str,
    fan_in: usize,
    fan_out: usize,
    init: FinalInit,
    rng: &mut ChaCha12Rng,
) -> (Param, Param) {
    let w = match init {
        FinalInit::Orthogonal => orthogonal(fan_in, fan_out, rng),
        FinalInit::Zero => vec![0.0; fan_in * fan_out],
    };
    (
        Param::new(format!("{name}.w"), vec![fan_in, fan_out], w),
        Param::zeros(format!("{name}.b"), vec![fan_out]),
    )
}

/// Feed-forward stack: ELU between layers, linear final layer, optional
/// layer norm right after the first linear.
#[derive(Clone, Debug)]
pub struct DenseNet {
    pub name: String,
    sizes: Vec<usize>,
    layer_norm: bool,
    params: Vec<Param>,
}

impl DenseNet {
    pub fn new(
        name: &str,
        sizes: &[usize],
        layer_norm: bool,
        final_init: FinalInit,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut params = Vec::new();
        for i in 0..sizes.len() - 1 {
            let init = if i == sizes.len() - 2 {
                final_init
            } else {
                FinalInit::Orthogonal
            };
            let (w, b) = linear_params(&format!("{name}.l{i}"), sizes[i], sizes[i + 1], init, rng);
            params.push(w);
            params.push(b);
        }
        if layer_norm {
            let width = sizes[1];
            params.push(Param::new(
                format!("{name}.ln.g"),
                vec![width],
                vec![1.0; width],
            ));
            params.push(Param::zeros(format!("{name}.ln.b"), vec![width]));
        }
        DenseNet {
            name: name.to_string(),
            sizes: sizes.to_vec(),
            layer_norm,
            params,
        }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn bind(&self, mode: Bind) -> BoundDense {
        BoundDense {
            tensors: self.params.iter().map(|p| bind_param(p, mode)).collect(),
            n_layers: self.sizes.len() - 1,
            layer_norm: self.layer_norm,
        }
    }
}

pub struct BoundDense {
    tensors: Vec<Tensor>,
    n_layers: usize,
    layer_norm: bool,
}

impl BoundDense {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for i in 0..self.n_layers {
            let hidden = i + 1 < self.n_layers;
            if i == 0 && self.layer_norm {
                // Norm sits between the affine map and its activation.
                h = h.linear(&self.tensors[0], &self.tensors[1], false)?;
                let g = &self.tensors[2 * self.n_layers];
                let b = &self.tensors[2 * self.n_layers + 1];
                h = h.layer_norm(g, b)?;
                if hidden {
                    h = h.elu()?;
                }
            } else {
                h = h.linear(&self.tensors[2 * i], &self.tensors[2 * i + 1], hidden)?;
            }
        }
        Ok(h)
    }

    /// Scalar-head convenience: `[b, 1]` output flattened to `[b]`.
    pub fn forward_scalar(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)?.sum_axis(1)
    }

    pub fn leaf_tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

/// Trunk with ELU after every layer feeding separate mean and raw-std heads;
/// the output is a diagonal Gaussian with softplus-floored scale.
#[derive(Clone, Debug)]
pub struct GaussianNet {
    pub name: String,
    trunk_sizes: Vec<usize>,
    out_dim: usize,
    params: Vec<Param>,
}

impl GaussianNet {
    pub fn new(name: &str, trunk_sizes: &[usize], out_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        assert!(trunk_sizes.len() >= 2);
        let mut params = Vec::new();
        for i in 0..trunk_sizes.len() - 1 {
            let (w, b) = linear_params(
                &format!("{name}.l{i}"),
                trunk_sizes[i],
                trunk_sizes[i + 1],
                FinalInit::Orthogonal,
                rng,
            );
            params.push(w);
            params.push(b);
        }
        let width = *trunk_sizes.last().unwrap();
        let (w, b) = linear_params(&format!("{name}.mean"), width, out_dim, FinalInit::Orthogonal, rng);
        params.push(w);
        params.push(b);
        let (w, b) = linear_params(&format!("{name}.std"), width, out_dim, FinalInit::Orthogonal, rng);
        params.push(w);
        params.push(b);

        GaussianNet {
            name: name.to_string(),
            trunk_sizes: trunk_sizes.to_vec(),
            out_dim,
            params,
        }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn in_dim(&self) -> usize {
        self.trunk_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Zero the mean head, so the output distribution is centred at the
    /// origin regardless of input. Test hook.
    pub fn zero_mean_head(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 4..n - 2] {
            for v in &mut p.data {
                *v = 0.0;
            }
        }
    }

    pub fn bind(&self, mode: Bind) -> BoundGaussian {
        BoundGaussian {
            tensors: self.params.iter().map(|p| bind_param(p, mode)).collect(),
            n_trunk: self.trunk_sizes.len() - 1,
        }
    }
}

pub struct BoundGaussian {
    tensors: Vec<Tensor>,
    n_trunk: usize,
}

impl BoundGaussian {
    pub fn dist(&self, x: &Tensor) -> Result<DiagGaussian> {
        let mut h = x.clone();
        for i in 0..self.n_trunk {
            h = h.linear(&self.tensors[2 * i], &self.tensors[2 * i + 1], true)?;
        }
        // Both heads in one fused layer, split back afterwards.
        let base = 2 * self.n_trunk;
        let w = Tensor::concat_cols(&[&self.tensors[base], &self.tensors[base + 2]])?;
        let b = Tensor::concat_rows(&[&self.tensors[base + 1], &self.tensors[base + 3]])?;
        let both = h.linear(&w, &b, false)?;
        let out = both.shape()[1] / 2;
        let mean = both.slice_cols(0, out)?;
        let raw_std = both.slice_cols(out, out)?;
        DiagGaussian::from_raw_std(mean, raw_std, STD_FLOOR)
    }

    pub fn leaf_tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

/// Pull dense gradients for a bound net, zeros where unreached.
pub fn collect_grads(
    grads: &mut crate::diffmath::Gradients,
    leaves: &[Tensor],
) -> Vec<Vec<f64>> {
    leaves.iter().map(|t| grads.take_or_zeros(t)).collect()
}
