use super::conv::{col2im, gemm, im2col, ConvGeom};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Running statistics and hyperparameters of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and fold them into the running ones.
    Train,
    /// Normalize with the running statistics.
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a·x + b`; only the slope matters for the gradient.
    Affine(Var, f64),
    Sum(Var),
    Mean(Var),
    Ln(Var),
    Act(Var, Activation),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    MulRow(Var, Var),
    Reshape(Var),
    Pad3d(Var, [usize; 3]),
    Crop3d(Var, [usize; 3]),
    Conv3d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    ConvT3d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    /// Per-channel `gamma · (x − mean) · inv_std + beta`; `batch` marks
    /// whether mean and `inv_std` were computed from `x` itself.
    Norm {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        batch: bool,
    },
}

/// A reverse-mode differentiation graph.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
}

/// `(batch, channels, [t, h, w], batched)` of a 4D `(C,T,H,W)` or 5D
/// `(N,C,T,H,W)` volume.
fn volume_dims(shape: &[usize]) -> Result<(usize, usize, [usize; 3], bool)> {
    match *shape {
        [c, t, h, w] => Ok((1, c, [t, h, w], false)),
        [n, c, t, h, w] => Ok((n, c, [t, h, w], true)),
        _ => Err(shape_err(format!(
            "expected a (C,T,H,W) or (N,C,T,H,W) volume, got {shape:?}"
        ))),
    }
}

fn volume_shape(n: usize, c: usize, d: [usize; 3], batched: bool) -> Vec<usize> {
    if batched {
        vec![n, c, d[0], d[1], d[2]]
    } else {
        vec![c, d[0], d[1], d[2]]
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

fn add_into_with(dst: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let d = dst.get_or_insert_with(|| vec![0.0; len]);
    f(d);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A constant copy of `v`'s current value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.values[v.0].clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    /// Gradient accumulated by the last [`Graph::backward`], if `v` was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0].as_ref().map(|g| Tensor {
            shape: self.values[v.0].shape.clone(),
            data: g.clone(),
        })
    }

    pub fn grad_data(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn shape(&self, v: Var) -> &[usize] {
        &self.values[v.0].shape
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{op}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = &self.values[a.0];
        let vb = &self.values[b.0];
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor {
            shape: va.shape.clone(),
            data,
        };
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Elementwise `scale · x + offset`.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let value = self.values[x.0].map(|v| scale * v + offset);
        let ng = self.needs_grad[x.0];
        self.push(value, Op::Affine(x, scale), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values[x.0].data.iter().sum();
        let ng = self.needs_grad[x.0];
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.values[x.0];
        let m = v.data.iter().sum::<f64>() / v.data.len() as f64;
        let ng = self.needs_grad[x.0];
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    /// Natural logarithm; values must be positive.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        let v = &self.values[x.0];
        if let Some(&bad) = v.data.iter().find(|&&d| !(d > 0.0)) {
            return Err(Error::DomainError(bad));
        }
        let value = v.map(f64::ln);
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::Ln(x), ng))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let value = self.values[x.0].map(|v| act.apply(v));
        let ng = self.needs_grad[x.0];
        self.push(value, Op::Act(x, act), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    /// `(n × k) · (k × m)`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k, m) = match (self.shape(a), self.shape(b)) {
            ([n, k], [k2, m]) if k == k2 => (*n, *k, *m),
            (sa, sb) => return Err(shape_err(format!("matmul: {sa:?} x {sb:?}"))),
        };
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            &self.values[a.0].data,
            false,
            &self.values[b.0].data,
            false,
            &mut out,
            0.0,
        );
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b), ng))
    }

    fn row_broadcast_check(&self, x: Var, v: Var, op: &str) -> Result<usize> {
        let xs = self.shape(x);
        let vs = self.shape(v);
        match (xs.last(), vs) {
            (Some(&m), [m2]) if m == *m2 => Ok(m),
            _ => Err(shape_err(format!("{op}: {xs:?} with {vs:?}"))),
        }
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let m = self.row_broadcast_check(x, bias, "add_row_bias")?;
        let b = self.values[bias.0].data.clone();
        let mut value = self.values[x.0].clone();
        for row in value.data.chunks_mut(m) {
            row.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
        }
        let ng = self.needs_grad[x.0] || self.needs_grad[bias.0];
        Ok(self.push(value, Op::AddRowBias(x, bias), ng))
    }

    /// Multiplies every row of `x` elementwise by a vector (a diagonal
    /// matrix product).
    pub fn mul_row(&mut self, x: Var, v: Var) -> Result<Var> {
        let m = self.row_broadcast_check(x, v, "mul_row")?;
        let d = self.values[v.0].data.clone();
        let mut value = self.values[x.0].clone();
        for row in value.data.chunks_mut(m) {
            row.iter_mut().zip(&d).for_each(|(a, b)| *a *= b);
        }
        let ng = self.needs_grad[x.0] || self.needs_grad[v.0];
        Ok(self.push(value, Op::MulRow(x, v), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.values[x.0].clone().reshape(shape)?;
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::Reshape(x), ng))
    }

    /// Zero-pads the three trailing axes of a volume by `pad` on each side.
    pub fn pad3d(&mut self, x: Var, pad: [usize; 3]) -> Result<Var> {
        let (n, c, d, batched) = volume_dims(self.shape(x))?;
        let od = [d[0] + 2 * pad[0], d[1] + 2 * pad[1], d[2] + 2 * pad[2]];
        let mut out = vec![0.0; n * c * od.iter().product::<usize>()];
        let src = &self.values[x.0].data;
        for nc in 0..n * c {
            for t in 0..d[0] {
                for h in 0..d[1] {
                    let s = ((nc * d[0] + t) * d[1] + h) * d[2];
                    let o = ((nc * od[0] + t + pad[0]) * od[1] + h + pad[1]) * od[2] + pad[2];
                    out[o..o + d[2]].copy_from_slice(&src[s..s + d[2]]);
                }
            }
        }
        let value = Tensor::new(volume_shape(n, c, od, batched), out)?;
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::Pad3d(x, pad), ng))
    }

    /// Removes `crop` voxels from both ends of the three trailing axes.
    pub fn crop3d(&mut self, x: Var, crop: [usize; 3]) -> Result<Var> {
        let (n, c, d, batched) = volume_dims(self.shape(x))?;
        if (0..3).any(|a| 2 * crop[a] >= d[a]) {
            return Err(shape_err(format!("crop {crop:?} too large for {d:?}")));
        }
        let od = [d[0] - 2 * crop[0], d[1] - 2 * crop[1], d[2] - 2 * crop[2]];
        let mut out = vec![0.0; n * c * od.iter().product::<usize>()];
        let src = &self.values[x.0].data;
        for nc in 0..n * c {
            for t in 0..od[0] {
                for h in 0..od[1] {
                    let s = ((nc * d[0] + t + crop[0]) * d[1] + h + crop[1]) * d[2] + crop[2];
                    let o = ((nc * od[0] + t) * od[1] + h) * od[2];
                    out[o..o + od[2]].copy_from_slice(&src[s..s + od[2]]);
                }
            }
        }
        let value = Tensor::new(volume_shape(n, c, od, batched), out)?;
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::Crop3d(x, crop), ng))
    }

    fn check_bias(&self, bias: Option<Var>, len: usize, op: &str) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [len] {
                return Err(shape_err(format!(
                    "{op}: bias shape {:?}, expected [{len}]",
                    self.shape(b)
                )));
            }
        }
        Ok(())
    }

    fn kernel_dims(&self, weight: Var, op: &str) -> Result<(usize, usize, [usize; 3])> {
        match *self.shape(weight) {
            [j, m, kt, kh, kw] => Ok((j, m, [kt, kh, kw])),
            ref s => Err(shape_err(format!(
                "{op}: kernel must be (out, in, kt, kh, kw), got {s:?}"
            ))),
        }
    }

    /// Valid 3D convolution: `out[j][z][y][x] = b[j] + Σ_m Σ_t Σ_h Σ_w
    /// k[j][m][t][h][w] · in[m][z·st + t][y·sh + h][x·sw + w]`.
    ///
    /// `weight` is `(J, M, kt, kh, kw)`; `input` is `(M, T, H, W)` or
    /// `(N, M, T, H, W)`. No padding is applied.
    pub fn conv3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: [usize; 3],
    ) -> Result<Var> {
        let (n, c, d, batched) = volume_dims(self.shape(input))?;
        let (j, m, k) = self.kernel_dims(weight, "conv3d")?;
        if c != m {
            return Err(shape_err(format!(
                "conv3d: input has {c} maps, kernel expects {m}"
            )));
        }
        self.check_bias(bias, j, "conv3d")?;
        let geom = ConvGeom::forward(m, d, k, stride).ok_or_else(|| {
            shape_err(format!(
                "conv3d: kernel {k:?} stride {stride:?} does not fit {d:?}"
            ))
        })?;
        let (rows, cols) = (geom.rows(), geom.cols());
        let x = &self.values[input.0].data;
        let w = &self.values[weight.0].data;
        let mut out = vec![0.0; n * j * cols];
        let mut col = vec![0.0; rows * cols];
        for s in 0..n {
            im2col(&x[s * geom.large_len()..(s + 1) * geom.large_len()], &geom, &mut col);
            gemm(j, rows, cols, w, false, &col, false, &mut out[s * j * cols..(s + 1) * j * cols], 0.0);
        }
        if let Some(b) = bias {
            let b = &self.values[b.0].data;
            for (ch, plane) in out.chunks_mut(cols).enumerate() {
                let bj = b[ch % j];
                plane.iter_mut().for_each(|v| *v += bj);
            }
        }
        let value = Tensor::new(volume_shape(n, j, geom.small, batched), out)?;
        let ng = self.needs_grad[input.0]
            || self.needs_grad[weight.0]
            || bias.is_some_and(|b| self.needs_grad[b.0]);
        Ok(self.push(
            value,
            Op::Conv3d {
                input,
                weight,
                bias,
                geom,
            },
            ng,
        ))
    }

    /// Transposed 3D convolution, the adjoint of [`Graph::conv3d`] with the
    /// same kernel: `input` has `J` maps, the output has `M` maps and
    /// extent `(in − 1)·stride + k` per axis. `bias` has one entry per
    /// output map.
    pub fn conv3d_transposed(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: [usize; 3],
    ) -> Result<Var> {
        let (n, c, d, batched) = volume_dims(self.shape(input))?;
        let (j, m, k) = self.kernel_dims(weight, "conv3d_transposed")?;
        if c != j {
            return Err(shape_err(format!(
                "conv3d_transposed: input has {c} maps, kernel expects {j}"
            )));
        }
        self.check_bias(bias, m, "conv3d_transposed")?;
        let geom = ConvGeom::transposed(m, d, k, stride).ok_or_else(|| {
            shape_err(format!(
                "conv3d_transposed: bad kernel {k:?} / stride {stride:?}"
            ))
        })?;
        let (rows, cols) = (geom.rows(), geom.cols());
        let big = geom.large_len();
        let y = &self.values[input.0].data;
        let w = &self.values[weight.0].data;
        let mut out = vec![0.0; n * big];
        let mut col = vec![0.0; rows * cols];
        for s in 0..n {
            gemm(rows, j, cols, w, true, &y[s * j * cols..(s + 1) * j * cols], false, &mut col, 0.0);
            col2im(&col, &geom, &mut out[s * big..(s + 1) * big]);
        }
        if let Some(b) = bias {
            let b = &self.values[b.0].data;
            let plane = big / m;
            for (ch, p) in out.chunks_mut(plane).enumerate() {
                let bm = b[ch % m];
                p.iter_mut().for_each(|v| *v += bm);
            }
        }
        let value = Tensor::new(volume_shape(n, m, geom.large, batched), out)?;
        let ng = self.needs_grad[input.0]
            || self.needs_grad[weight.0]
            || bias.is_some_and(|b| self.needs_grad[b.0]);
        Ok(self.push(
            value,
            Op::ConvT3d {
                input,
                weight,
                bias,
                geom,
            },
            ng,
        ))
    }

    /// Per-channel batch normalization over `(N, T, H, W)` of an
    /// `(N, C, T, H, W)` (or `(C, T, H, W)`) volume.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        mode: BnMode,
    ) -> Result<Var> {
        let (n, c, d, _) = volume_dims(self.shape(input))?;
        for (v, name) in [(gamma, "gamma"), (beta, "beta")] {
            if self.shape(v) != [c] {
                return Err(shape_err(format!(
                    "batch_norm: {name} shape {:?}, expected [{c}]",
                    self.shape(v)
                )));
            }
        }
        if state.running_mean.len() != c || state.running_var.len() != c {
            return Err(shape_err("batch_norm: running statistics size"));
        }
        let plane: usize = d.iter().product();
        let x = &self.values[input.0].data;
        let (mean, inv_std, batch) = match mode {
            BnMode::Train => {
                let count = (n * plane) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let o = (s * c + ch) * plane;
                        mean[ch] += x[o..o + plane].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for s in 0..n {
                    for ch in 0..c {
                        let o = (s * c + ch) * plane;
                        let mu = mean[ch];
                        var[ch] += x[o..o + plane].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                let mo = state.momentum;
                for ch in 0..c {
                    state.running_mean[ch] = (1.0 - mo) * state.running_mean[ch] + mo * mean[ch];
                    state.running_var[ch] = (1.0 - mo) * state.running_var[ch] + mo * var[ch];
                }
                let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
                (mean, inv, true)
            }
            BnMode::Eval => (
                state.running_mean.clone(),
                state.running_var
                    .iter()
                    .map(|v| 1.0 / (v + state.eps).sqrt())
                    .collect(),
                false,
            ),
        };
        let g = &self.values[gamma.0].data;
        let b = &self.values[beta.0].data;
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let o = (s * c + ch) * plane;
                let (mu, is, gg, bb) = (mean[ch], inv_std[ch], g[ch], b[ch]);
                for (dst, src) in out[o..o + plane].iter_mut().zip(&x[o..o + plane]) {
                    *dst = gg * (src - mu) * is + bb;
                }
            }
        }
        let value = Tensor::new(self.shape(input).to_vec(), out)?;
        let ng = self.needs_grad[input.0] || self.needs_grad[gamma.0] || self.needs_grad[beta.0];
        Ok(self.push(
            value,
            Op::Norm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                batch,
            },
            ng,
        ))
    }

    /// Mean squared difference of two same-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Clears gradients from a previous backward pass.
    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Accumulates `∂loss/∂v` into every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::NotScalar(self.values[loss.0].shape.clone()));
        }
        self.zero_grad();
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(gy) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gy);
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    fn backprop_node(&mut self, i: usize, gy: &[f64]) {
        let op = self.ops[i].clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(v) {
                        add_into(&mut self.grads[v.0], gy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(a) {
                    add_into(&mut self.grads[a.0], gy);
                }
                if self.wants(b) {
                    add_into_with(&mut self.grads[b.0], gy.len(), |d| {
                        d.iter_mut().zip(gy).for_each(|(d, g)| *d -= g)
                    });
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    let other = self.values[b.0].data.clone();
                    add_into_with(&mut self.grads[a.0], gy.len(), |d| {
                        for ((d, g), o) in d.iter_mut().zip(gy).zip(&other) {
                            *d += g * o;
                        }
                    });
                }
                if self.wants(b) {
                    let other = self.values[a.0].data.clone();
                    add_into_with(&mut self.grads[b.0], gy.len(), |d| {
                        for ((d, g), o) in d.iter_mut().zip(gy).zip(&other) {
                            *d += g * o;
                        }
                    });
                }
            }
            Op::Affine(x, s) => {
                if self.wants(x) {
                    add_into_with(&mut self.grads[x.0], gy.len(), |d| {
                        d.iter_mut().zip(gy).for_each(|(d, g)| *d += s * g)
                    });
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                if self.wants(x) {
                    let n = self.values[x.0].len();
                    let g = if matches!(op, Op::Mean(_)) {
                        gy[0] / n as f64
                    } else {
                        gy[0]
                    };
                    add_into_with(&mut self.grads[x.0], n, |d| d.iter_mut().for_each(|d| *d += g));
                }
            }
            Op::Ln(x) => {
                if self.wants(x) {
                    let xs = &self.values[x.0].data;
                    let dst = self.grads[x.0].get_or_insert_with(|| vec![0.0; xs.len()]);
                    for ((d, g), v) in dst.iter_mut().zip(gy).zip(xs) {
                        *d += g / v;
                    }
                }
            }
            Op::Act(x, act) => {
                if self.wants(x) {
                    let xs = &self.values[x.0].data;
                    let ys = &self.values[i].data;
                    let dst = self.grads[x.0].get_or_insert_with(|| vec![0.0; xs.len()]);
                    for (((d, g), xv), yv) in dst.iter_mut().zip(gy).zip(xs).zip(ys) {
                        *d += g * act.derivative(*xv, *yv);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (n, k) = (self.shape(a)[0], self.shape(a)[1]);
                let m = self.shape(b)[1];
                if self.wants(a) {
                    let bv = &self.values[b.0].data;
                    let dst = self.grads[a.0].get_or_insert_with(|| vec![0.0; n * k]);
                    gemm(n, m, k, gy, false, bv, true, dst, 1.0);
                }
                if self.wants(b) {
                    let av = &self.values[a.0].data;
                    let dst = self.grads[b.0].get_or_insert_with(|| vec![0.0; k * m]);
                    gemm(k, n, m, av, true, gy, false, dst, 1.0);
                }
            }
            Op::AddRowBias(x, bias) => {
                if self.wants(x) {
                    add_into(&mut self.grads[x.0], gy);
                }
                if self.wants(bias) {
                    let m = self.values[bias.0].len();
                    add_into_with(&mut self.grads[bias.0], m, |d| {
                        for row in gy.chunks(m) {
                            d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                        }
                    });
                }
            }
            Op::MulRow(x, v) => {
                let m = self.values[v.0].len();
                if self.wants(x) {
                    let vv = &self.values[v.0].data;
                    let dst = self.grads[x.0].get_or_insert_with(|| vec![0.0; gy.len()]);
                    for (drow, grow) in dst.chunks_mut(m).zip(gy.chunks(m)) {
                        for ((d, g), s) in drow.iter_mut().zip(grow).zip(vv) {
                            *d += g * s;
                        }
                    }
                }
                if self.wants(v) {
                    let xv = &self.values[x.0].data;
                    let dst = self.grads[v.0].get_or_insert_with(|| vec![0.0; m]);
                    for (xrow, grow) in xv.chunks(m).zip(gy.chunks(m)) {
                        for ((d, g), s) in dst.iter_mut().zip(grow).zip(xrow) {
                            *d += g * s;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if self.wants(x) {
                    add_into(&mut self.grads[x.0], gy);
                }
            }
            Op::Pad3d(x, pad) => {
                if self.wants(x) {
                    let (n, c, d, _) = volume_dims(self.shape(x)).expect("validated");
                    let od = [d[0] + 2 * pad[0], d[1] + 2 * pad[1], d[2] + 2 * pad[2]];
                    let len = self.values[x.0].len();
                    let dst = self.grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    for nc in 0..n * c {
                        for t in 0..d[0] {
                            for h in 0..d[1] {
                                let s = ((nc * d[0] + t) * d[1] + h) * d[2];
                                let o = ((nc * od[0] + t + pad[0]) * od[1] + h + pad[1]) * od[2]
                                    + pad[2];
                                for (dd, g) in dst[s..s + d[2]].iter_mut().zip(&gy[o..o + d[2]]) {
                                    *dd += g;
                                }
                            }
                        }
                    }
                }
            }
            Op::Crop3d(x, crop) => {
                if self.wants(x) {
                    let (n, c, d, _) = volume_dims(self.shape(x)).expect("validated");
                    let od = [d[0] - 2 * crop[0], d[1] - 2 * crop[1], d[2] - 2 * crop[2]];
                    let len = self.values[x.0].len();
                    let dst = self.grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    for nc in 0..n * c {
                        for t in 0..od[0] {
                            for h in 0..od[1] {
                                let s = ((nc * d[0] + t + crop[0]) * d[1] + h + crop[1]) * d[2]
                                    + crop[2];
                                let o = ((nc * od[0] + t) * od[1] + h) * od[2];
                                for (dd, g) in dst[s..s + od[2]].iter_mut().zip(&gy[o..o + od[2]])
                                {
                                    *dd += g;
                                }
                            }
                        }
                    }
                }
            }
            Op::Conv3d {
                input,
                weight,
                bias,
                geom,
            } => self.backprop_conv(input, weight, bias, &geom, gy),
            Op::ConvT3d {
                input,
                weight,
                bias,
                geom,
            } => self.backprop_conv_t(input, weight, bias, &geom, gy),
            Op::Norm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                batch,
            } => self.backprop_norm(input, gamma, beta, &mean, &inv_std, batch, gy),
        }
    }

    fn backprop_conv(&mut self, input: Var, weight: Var, bias: Option<Var>, g: &ConvGeom, gy: &[f64]) {
        let j = self.shape(weight)[0];
        let (rows, cols) = (g.rows(), g.cols());
        let big = g.large_len();
        let n = self.values[input.0].len() / big;
        if let Some(b) = bias.filter(|&b| self.wants(b)) {
            let dst = self.grads[b.0].get_or_insert_with(|| vec![0.0; j]);
            for (ch, plane) in gy.chunks(cols).enumerate() {
                dst[ch % j] += plane.iter().sum::<f64>();
            }
        }
        let want_w = self.wants(weight);
        let want_x = self.wants(input);
        let mut col = vec![0.0; rows * cols];
        if want_w {
            let mut dw = vec![0.0; j * rows];
            let x = &self.values[input.0].data;
            for s in 0..n {
                im2col(&x[s * big..(s + 1) * big], g, &mut col);
                gemm(j, cols, rows, &gy[s * j * cols..(s + 1) * j * cols], false, &col, true, &mut dw, 1.0);
            }
            add_into(&mut self.grads[weight.0], &dw);
        }
        if want_x {
            let w = &self.values[weight.0].data;
            let len = self.values[input.0].len();
            let dst = self.grads[input.0].get_or_insert_with(|| vec![0.0; len]);
            for s in 0..n {
                gemm(rows, j, cols, w, true, &gy[s * j * cols..(s + 1) * j * cols], false, &mut col, 0.0);
                col2im(&col, g, &mut dst[s * big..(s + 1) * big]);
            }
        }
    }

    fn backprop_conv_t(&mut self, input: Var, weight: Var, bias: Option<Var>, g: &ConvGeom, gy: &[f64]) {
        let j = self.shape(weight)[0];
        let m = g.maps;
        let (rows, cols) = (g.rows(), g.cols());
        let big = g.large_len();
        let n = gy.len() / big;
        if let Some(b) = bias.filter(|&b| self.wants(b)) {
            let plane = big / m;
            let dst = self.grads[b.0].get_or_insert_with(|| vec![0.0; m]);
            for (ch, p) in gy.chunks(plane).enumerate() {
                dst[ch % m] += p.iter().sum::<f64>();
            }
        }
        let want_w = self.wants(weight);
        let want_x = self.wants(input);
        if !want_w && !want_x {
            return;
        }
        let mut col = vec![0.0; rows * cols];
        let mut dw = if want_w { vec![0.0; j * rows] } else { Vec::new() };
        let mut dx = if want_x { vec![0.0; n * j * cols] } else { Vec::new() };
        let w = &self.values[weight.0].data;
        let y = &self.values[input.0].data;
        for s in 0..n {
            im2col(&gy[s * big..(s + 1) * big], g, &mut col);
            if want_x {
                gemm(j, rows, cols, w, false, &col, false, &mut dx[s * j * cols..(s + 1) * j * cols], 0.0);
            }
            if want_w {
                gemm(j, cols, rows, &y[s * j * cols..(s + 1) * j * cols], false, &col, true, &mut dw, 1.0);
            }
        }
        if want_w {
            add_into(&mut self.grads[weight.0], &dw);
        }
        if want_x {
            add_into(&mut self.grads[input.0], &dx);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: &[f64],
        batch: bool,
        gy: &[f64],
    ) {
        let (n, c, d, _) = volume_dims(self.shape(input)).expect("validated");
        let plane: usize = d.iter().product();
        let x = &self.values[input.0].data;
        let gam = &self.values[gamma.0].data;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for s in 0..n {
            for ch in 0..c {
                let o = (s * c + ch) * plane;
                for (g, xv) in gy[o..o + plane].iter().zip(&x[o..o + plane]) {
                    dbeta[ch] += g;
                    dgamma[ch] += g * (xv - mean[ch]) * inv_std[ch];
                }
            }
        }
        if self.wants(input) {
            let mut dx = vec![0.0; x.len()];
            let count = (n * plane) as f64;
            for s in 0..n {
                for ch in 0..c {
                    let o = (s * c + ch) * plane;
                    let is = inv_std[ch];
                    let gg = gam[ch];
                    if batch {
                        // dx = γ·σ⁻¹/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
                        let sum_dy = dbeta[ch];
                        let sum_dy_xhat = dgamma[ch];
                        for ((dxv, g), xv) in dx[o..o + plane].iter_mut().zip(&gy[o..o + plane]).zip(&x[o..o + plane]) {
                            let xhat = (xv - mean[ch]) * is;
                            *dxv = gg * is / count * (count * g - sum_dy - xhat * sum_dy_xhat);
                        }
                    } else {
                        for (dxv, g) in dx[o..o + plane].iter_mut().zip(&gy[o..o + plane]) {
                            *dxv = gg * is * g;
                        }
                    }
                }
            }
            add_into(&mut self.grads[input.0], &dx);
        }
        if self.wants(gamma) {
            add_into(&mut self.grads[gamma.0], &dgamma);
        }
        if self.wants(beta) {
            add_into(&mut self.grads[beta.0], &dbeta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.grad_data(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_data(x).unwrap(), &[2.0]);
    }

    #[test]
    fn not_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros([2]));
        assert!(matches!(g.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_data(x).unwrap(), &[5.0]);
        assert!(g.grad_data(c).is_none());
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::LeakyRelu(0.2).apply(-1.0), -0.2);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert!(Activation::Sigmoid.apply(-800.0) >= 0.0);
        assert!(Activation::Sigmoid.apply(800.0) <= 1.0);
    }

    #[test]
    fn ln_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([2], vec![1.0, 0.0]).unwrap());
        assert!(matches!(g.ln(x), Err(Error::DomainError(_))));
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros([2, 3]));
        let b = g.param(Tensor::zeros([2, 3]));
        assert!(g.matmul(a, b).is_err());
        let c = g.param(Tensor::zeros([3]));
        assert!(g.add(a, c).is_err());
        let vol = g.param(Tensor::zeros([2, 3, 3, 3]));
        let k = g.param(Tensor::zeros([1, 1, 2, 2, 2]));
        assert!(g.conv3d(vol, k, None, [1, 1, 1]).is_err());
    }
}
