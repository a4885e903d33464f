//! Layers with explicit forward/backward passes.
//!
//! Every layer reads its parameters from a [`ParamStore`] by name and, on
//! backward, accumulates parameter gradients into the same store. Forward
//! returns a [`LayerCache`] holding exactly what backward needs.
//!
//! Input contracts (shapes are row-major, last axis = features):
//!
//! | kind            | input                        | output          |
//! |-----------------|------------------------------|-----------------|
//! | embedding       | `[L]` token indices as reals | `[L, dim]`      |
//! | dense           | `[.., in]`                   | `[.., out]`     |
//! | self_attention  | `[L, dim]`                   | `[L, dim]`      |
//! | conv1d          | `[L, c_in]`                  | `[L, c_out]`    |
//! | dropout/softmax | any                          | same as input   |

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::array::{matmul_a_bt_acc, matmul_at_b_acc, matmul_into};
use super::{DenseArray, NumError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Embedding,
    Dense,
    SelfAttention,
    Conv1d,
    Dropout,
    Softmax,
}

impl FromStr for LayerKind {
    type Err = NumError;
    fn from_str(s: &str) -> Result<Self, NumError> {
        Ok(match s {
            "embedding" => LayerKind::Embedding,
            "dense" => LayerKind::Dense,
            "self_attention" => LayerKind::SelfAttention,
            "conv1d" => LayerKind::Conv1d,
            "dropout" => LayerKind::Dropout,
            "softmax" => LayerKind::Softmax,
            other => return Err(NumError::UnknownLayerKind(other.to_string())),
        })
    }
}

/// A layer description. Parameter-bearing layers own a name prefix; their
/// tensors live in the store as `<name>.<tensor>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// `out[t] = W_emb[x_t] + b`.
    Embedding { name: String, vocab: usize, dim: usize },
    Dense {
        name: String,
        input: usize,
        output: usize,
        activation: Activation,
    },
    /// Multi-head scaled dot-product self-attention with output projection.
    SelfAttention { name: String, dim: usize, heads: usize },
    /// Same-padded 1-D convolution over the sequence axis; odd kernel.
    Conv1d {
        name: String,
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Dropout { rate: f64 },
    /// Row-wise softmax over the last axis.
    Softmax,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Embedding {
        indices: Vec<usize>,
    },
    Dense {
        input: DenseArray,
        output: DenseArray,
    },
    SelfAttention(Box<AttentionCache>),
    Conv1d {
        input: DenseArray,
    },
    Dropout {
        shape: Vec<usize>,
        mask: Option<Vec<f64>>,
    },
    Softmax {
        output: DenseArray,
    },
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: DenseArray,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per-head attention weights, `heads × L × L`.
    weights: Vec<f64>,
    /// Concatenated head outputs before the output projection.
    heads_out: Vec<f64>,
}

fn pname(name: &str, tensor: &str) -> String {
    format!("{name}.{tensor}")
}

const ATTN_PROJ: [(&str, &str); 4] = [("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wo", "bo")];

impl Layer {
    pub fn embedding(name: &str, vocab: usize, dim: usize) -> Self {
        Layer::Embedding {
            name: name.into(),
            vocab,
            dim,
        }
    }

    pub fn dense(name: &str, input: usize, output: usize, activation: Activation) -> Self {
        Layer::Dense {
            name: name.into(),
            input,
            output,
            activation,
        }
    }

    pub fn self_attention(name: &str, dim: usize, heads: usize) -> Self {
        Layer::SelfAttention {
            name: name.into(),
            dim,
            heads,
        }
    }

    pub fn conv1d(name: &str, kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Layer::Conv1d {
            name: name.into(),
            kernel,
            in_channels,
            out_channels,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Embedding { .. } => LayerKind::Embedding,
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::SelfAttention { .. } => LayerKind::SelfAttention,
            Layer::Conv1d { .. } => LayerKind::Conv1d,
            Layer::Dropout { .. } => LayerKind::Dropout,
            Layer::Softmax => LayerKind::Softmax,
        }
    }

    /// Registers this layer's parameters. Weights are uniform in
    /// `[-1/√fan_in, 1/√fan_in]`, biases start at zero.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<(), NumError> {
        match self {
            Layer::Embedding { name, vocab, dim } => {
                store.init_uniform(&pname(name, "weight"), &[*vocab, *dim], *vocab, rng);
                store.init_zeros(&pname(name, "bias"), &[*dim]);
            }
            Layer::Dense {
                name,
                input,
                output,
                ..
            } => {
                store.init_uniform(&pname(name, "weight"), &[*input, *output], *input, rng);
                store.init_zeros(&pname(name, "bias"), &[*output]);
            }
            Layer::SelfAttention { name, dim, heads } => {
                if *heads == 0 || dim % heads != 0 {
                    return Err(NumError::InvalidConfig(format!(
                        "attention width {dim} not divisible by {heads} heads"
                    )));
                }
                for (w, b) in ATTN_PROJ {
                    store.init_uniform(&pname(name, w), &[*dim, *dim], *dim, rng);
                    store.init_zeros(&pname(name, b), &[*dim]);
                }
            }
            Layer::Conv1d {
                name,
                kernel,
                in_channels,
                out_channels,
            } => {
                if kernel % 2 == 0 {
                    return Err(NumError::InvalidConfig(format!(
                        "conv1d kernel {kernel} must be odd"
                    )));
                }
                store.init_uniform(
                    &pname(name, "weight"),
                    &[*kernel, *in_channels, *out_channels],
                    kernel * in_channels,
                    rng,
                );
                store.init_zeros(&pname(name, "bias"), &[*out_channels]);
            }
            Layer::Dropout { rate } => check_rate(*rate)?,
            Layer::Softmax => {}
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        input: &DenseArray,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(DenseArray, LayerCache), NumError> {
        match self {
            Layer::Embedding { name, vocab, dim } => {
                embedding_forward(store, name, *vocab, *dim, input)
            }
            Layer::Dense {
                name,
                input: n_in,
                output: n_out,
                activation,
            } => dense_forward(store, name, *n_in, *n_out, *activation, input),
            Layer::SelfAttention { name, dim, heads } => {
                attention_forward(store, name, *dim, *heads, input)
            }
            Layer::Conv1d {
                name,
                kernel,
                in_channels,
                out_channels,
            } => conv_forward(store, name, *kernel, *in_channels, *out_channels, input),
            Layer::Dropout { rate } => dropout_forward(*rate, input, mode, rng),
            Layer::Softmax => {
                let out = softmax_rows(input);
                Ok((out.clone(), LayerCache::Softmax { output: out }))
            }
        }
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &LayerCache,
        upstream: &DenseArray,
    ) -> Result<DenseArray, NumError> {
        let mismatch = || NumError::BackwardBeforeForward(format!("{:?}", self.kind()));
        match (self, cache) {
            (Layer::Embedding { name, dim, .. }, LayerCache::Embedding { indices }) => {
                upstream.expect_shape(&[indices.len(), *dim], "embedding backward")?;
                {
                    let gw = store.grad_mut(&pname(name, "weight"))?.data_mut();
                    for (t, &ix) in indices.iter().enumerate() {
                        for (g, u) in gw[ix * dim..(ix + 1) * dim].iter_mut().zip(upstream.row(t)) {
                            *g += u;
                        }
                    }
                }
                let gb = store.grad_mut(&pname(name, "bias"))?.data_mut();
                for t in 0..indices.len() {
                    for (g, u) in gb.iter_mut().zip(upstream.row(t)) {
                        *g += u;
                    }
                }
                Ok(DenseArray::zeros(&[indices.len()]))
            }
            (
                Layer::Dense {
                    name,
                    input: n_in,
                    output: n_out,
                    activation,
                },
                LayerCache::Dense { input, output },
            ) => dense_backward(store, name, *n_in, *n_out, *activation, input, output, upstream),
            (Layer::SelfAttention { name, dim, heads }, LayerCache::SelfAttention(c)) => {
                attention_backward(store, name, *dim, *heads, c, upstream)
            }
            (
                Layer::Conv1d {
                    name,
                    kernel,
                    in_channels,
                    out_channels,
                },
                LayerCache::Conv1d { input },
            ) => conv_backward(store, name, *kernel, *in_channels, *out_channels, input, upstream),
            (Layer::Dropout { .. }, LayerCache::Dropout { shape, mask }) => {
                upstream.expect_shape(shape, "dropout backward")?;
                Ok(match mask {
                    None => upstream.clone(),
                    Some(mask) => {
                        let data = upstream.data().iter().zip(mask).map(|(u, m)| u * m).collect();
                        DenseArray::from_vec(shape, data)?
                    }
                })
            }
            (Layer::Softmax, LayerCache::Softmax { output }) => {
                upstream.expect_shape(output.shape(), "softmax backward")?;
                let mut grad = DenseArray::zeros(output.shape());
                for r in 0..output.rows() {
                    let y = output.row(r);
                    let dy = upstream.row(r);
                    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for ((g, &yi), &dyi) in grad.row_mut(r).iter_mut().zip(y).zip(dy) {
                        *g = yi * (dyi - dot);
                    }
                }
                Ok(grad)
            }
            _ => Err(mismatch()),
        }
    }
}

/// Seeded single-layer forward pass.
pub fn layer_forward(
    layer: &Layer,
    store: &ParamStore,
    input: &DenseArray,
    mode: Mode,
    seed: u64,
) -> Result<(DenseArray, LayerCache), NumError> {
    layer.forward(store, input, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Backward pass for `layer`; `cache` must come from a forward call on the
/// same layer.
pub fn layer_backward(
    layer: &Layer,
    store: &mut ParamStore,
    cache: Option<&LayerCache>,
    upstream: &DenseArray,
) -> Result<DenseArray, NumError> {
    let cache = cache.ok_or_else(|| NumError::BackwardBeforeForward(format!("{:?}", layer.kind())))?;
    layer.backward(store, cache, upstream)
}

fn check_rate(rate: f64) -> Result<(), NumError> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(NumError::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")))
    }
}

fn embedding_forward(
    store: &ParamStore,
    name: &str,
    vocab: usize,
    dim: usize,
    input: &DenseArray,
) -> Result<(DenseArray, LayerCache), NumError> {
    if input.shape().len() != 1 {
        return Err(NumError::ShapeMismatch {
            context: "embedding input".into(),
            expected: vec![input.len()],
            actual: input.shape().to_vec(),
        });
    }
    let w = store.value(&pname(name, "weight"))?;
    let b = store.value(&pname(name, "bias"))?;
    w.expect_shape(&[vocab, dim], "embedding weight")?;
    let mut indices = Vec::with_capacity(input.len());
    for &x in input.data() {
        if x < 0.0 || x.fract() != 0.0 || x as usize >= vocab {
            return Err(NumError::InvalidInput(format!("token index {x} outside vocabulary of {vocab}")));
        }
        indices.push(x as usize);
    }
    let mut out = DenseArray::zeros(&[indices.len(), dim]);
    for (t, &ix) in indices.iter().enumerate() {
        for ((o, wv), bv) in out.row_mut(t).iter_mut().zip(w.row(ix)).zip(b.data()) {
            *o = wv + bv;
        }
    }
    Ok((out, LayerCache::Embedding { indices }))
}

fn out_shape(input: &DenseArray, last: usize) -> Vec<usize> {
    let mut s = input.shape().to_vec();
    *s.last_mut().unwrap() = last;
    s
}

fn dense_forward(
    store: &ParamStore,
    name: &str,
    n_in: usize,
    n_out: usize,
    act: Activation,
    input: &DenseArray,
) -> Result<(DenseArray, LayerCache), NumError> {
    if input.last_dim() != n_in {
        return Err(NumError::ShapeMismatch {
            context: format!("dense {name} input"),
            expected: out_shape(input, n_in),
            actual: input.shape().to_vec(),
        });
    }
    let w = store.value(&pname(name, "weight"))?;
    let b = store.value(&pname(name, "bias"))?;
    w.expect_shape(&[n_in, n_out], "dense weight")?;
    let rows = input.rows();
    let mut out = DenseArray::zeros(&out_shape(input, n_out));
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(b.data());
    }
    matmul_into(out.data_mut(), input.data(), w.data(), rows, n_in, n_out);
    if act != Activation::Identity {
        out.data_mut().iter_mut().for_each(|x| *x = act.apply(*x));
    }
    Ok((
        out.clone(),
        LayerCache::Dense {
            input: input.clone(),
            output: out,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    store: &mut ParamStore,
    name: &str,
    n_in: usize,
    n_out: usize,
    act: Activation,
    input: &DenseArray,
    output: &DenseArray,
    upstream: &DenseArray,
) -> Result<DenseArray, NumError> {
    upstream.expect_shape(output.shape(), "dense backward")?;
    let rows = input.rows();
    let dz: Vec<f64> = if act == Activation::Identity {
        upstream.data().to_vec()
    } else {
        upstream
            .data()
            .iter()
            .zip(output.data())
            .map(|(u, &y)| u * act.derivative_at_output(y))
            .collect()
    };
    matmul_at_b_acc(
        store.grad_mut(&pname(name, "weight"))?.data_mut(),
        input.data(),
        &dz,
        rows,
        n_in,
        n_out,
    );
    let gb = store.grad_mut(&pname(name, "bias"))?.data_mut();
    for r in 0..rows {
        for (g, d) in gb.iter_mut().zip(&dz[r * n_out..(r + 1) * n_out]) {
            *g += d;
        }
    }
    let w = store.value(&pname(name, "weight"))?;
    let mut dx = DenseArray::zeros(input.shape());
    matmul_a_bt_acc(dx.data_mut(), &dz, w.data(), rows, n_out, n_in);
    Ok(dx)
}

fn project(x: &[f64], w: &[f64], b: &[f64], rows: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    matmul_into(&mut out, x, w, rows, d, d);
    out
}

fn attention_forward(
    store: &ParamStore,
    name: &str,
    dim: usize,
    heads: usize,
    input: &DenseArray,
) -> Result<(DenseArray, LayerCache), NumError> {
    if input.shape().len() != 2 || input.last_dim() != dim {
        return Err(NumError::ShapeMismatch {
            context: format!("self_attention {name} input"),
            expected: vec![input.rows(), dim],
            actual: input.shape().to_vec(),
        });
    }
    let l = input.rows();
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let x = input.data();
    let get = |t: &str| store.value(&pname(name, t)).map(|a| a.data());
    let q = project(x, get("wq")?, get("bq")?, l, dim);
    let k = project(x, get("wk")?, get("bk")?, l, dim);
    let v = project(x, get("wv")?, get("bv")?, l, dim);

    let mut weights = vec![0.0; heads * l * l];
    let mut heads_out = vec![0.0; l * dim];
    for h in 0..heads {
        let off = h * hd;
        let a = &mut weights[h * l * l..(h + 1) * l * l];
        for i in 0..l {
            let qi = &q[i * dim + off..i * dim + off + hd];
            let row = &mut a[i * l..(i + 1) * l];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * dim + off..j * dim + off + hd];
                *s = scale * qi.iter().zip(kj).map(|(p, r)| p * r).sum::<f64>();
            }
            softmax_in_place(row);
            for (j, &aij) in row.iter().enumerate() {
                let vj = &v[j * dim + off..j * dim + off + hd];
                for (o, vv) in heads_out[i * dim + off..i * dim + off + hd].iter_mut().zip(vj) {
                    *o += aij * vv;
                }
            }
        }
    }
    let out = project(&heads_out, get("wo")?, get("bo")?, l, dim);
    Ok((
        DenseArray::from_vec(&[l, dim], out)?,
        LayerCache::SelfAttention(Box::new(AttentionCache {
            input: input.clone(),
            q,
            k,
            v,
            weights,
            heads_out,
        })),
    ))
}

fn attention_backward(
    store: &mut ParamStore,
    name: &str,
    dim: usize,
    heads: usize,
    c: &AttentionCache,
    upstream: &DenseArray,
) -> Result<DenseArray, NumError> {
    let l = c.input.rows();
    upstream.expect_shape(&[l, dim], "self_attention backward")?;
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let dy = upstream.data();

    // Output projection.
    matmul_at_b_acc(store.grad_mut(&pname(name, "wo"))?.data_mut(), &c.heads_out, dy, l, dim, dim);
    col_sum_acc(store.grad_mut(&pname(name, "bo"))?.data_mut(), dy, l, dim);
    let mut d_heads = vec![0.0; l * dim];
    matmul_a_bt_acc(&mut d_heads, dy, store.value(&pname(name, "wo"))?.data(), l, dim, dim);

    let mut dq = vec![0.0; l * dim];
    let mut dk = vec![0.0; l * dim];
    let mut dv = vec![0.0; l * dim];
    let mut da = vec![0.0; l];
    for h in 0..heads {
        let off = h * hd;
        let a = &c.weights[h * l * l..(h + 1) * l * l];
        for i in 0..l {
            let doi = &d_heads[i * dim + off..i * dim + off + hd];
            let arow = &a[i * l..(i + 1) * l];
            for j in 0..l {
                let vj = &c.v[j * dim + off..j * dim + off + hd];
                da[j] = doi.iter().zip(vj).map(|(p, r)| p * r).sum();
                for (g, d) in dv[j * dim + off..j * dim + off + hd].iter_mut().zip(doi) {
                    *g += arow[j] * d;
                }
            }
            let dot: f64 = arow.iter().zip(&da).map(|(p, r)| p * r).sum();
            for j in 0..l {
                let ds = arow[j] * (da[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for cc in 0..hd {
                    dq[i * dim + off + cc] += ds * c.k[j * dim + off + cc];
                    dk[j * dim + off + cc] += ds * c.q[i * dim + off + cc];
                }
            }
        }
    }

    let x = c.input.data();
    let mut dx = DenseArray::zeros(&[l, dim]);
    for ((w, b), d) in ATTN_PROJ[..3].iter().zip([&dq, &dk, &dv]) {
        matmul_at_b_acc(store.grad_mut(&pname(name, w))?.data_mut(), x, d, l, dim, dim);
        col_sum_acc(store.grad_mut(&pname(name, b))?.data_mut(), d, l, dim);
        matmul_a_bt_acc(dx.data_mut(), d, store.value(&pname(name, w))?.data(), l, dim, dim);
    }
    Ok(dx)
}

fn col_sum_acc(out: &mut [f64], x: &[f64], rows: usize, cols: usize) {
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
}

fn conv_forward(
    store: &ParamStore,
    name: &str,
    kernel: usize,
    cin: usize,
    cout: usize,
    input: &DenseArray,
) -> Result<(DenseArray, LayerCache), NumError> {
    if input.shape().len() != 2 || input.last_dim() != cin {
        return Err(NumError::ShapeMismatch {
            context: format!("conv1d {name} input"),
            expected: vec![input.rows(), cin],
            actual: input.shape().to_vec(),
        });
    }
    let w = store.value(&pname(name, "weight"))?;
    w.expect_shape(&[kernel, cin, cout], "conv1d weight")?;
    let b = store.value(&pname(name, "bias"))?.data();
    let w = w.data();
    let l = input.rows();
    let pad = kernel / 2;
    let x = input.data();
    let mut out = DenseArray::zeros(&[l, cout]);
    for t in 0..l {
        let orow = out.row_mut(t);
        orow.copy_from_slice(b);
        for j in 0..kernel {
            let s = t + j;
            if s < pad || s - pad >= l {
                continue;
            }
            let xs = &x[(s - pad) * cin..(s - pad + 1) * cin];
            for (c, &xv) in xs.iter().enumerate() {
                let wrow = &w[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                for (o, wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Ok((
        out,
        LayerCache::Conv1d {
            input: input.clone(),
        },
    ))
}

fn conv_backward(
    store: &mut ParamStore,
    name: &str,
    kernel: usize,
    cin: usize,
    cout: usize,
    input: &DenseArray,
    upstream: &DenseArray,
) -> Result<DenseArray, NumError> {
    let l = input.rows();
    upstream.expect_shape(&[l, cout], "conv1d backward")?;
    let pad = kernel / 2;
    let x = input.data();
    let dy = upstream.data();
    col_sum_acc(store.grad_mut(&pname(name, "bias"))?.data_mut(), dy, l, cout);
    {
        let gw = store.grad_mut(&pname(name, "weight"))?.data_mut();
        for t in 0..l {
            let dyt = &dy[t * cout..(t + 1) * cout];
            for j in 0..kernel {
                let s = t + j;
                if s < pad || s - pad >= l {
                    continue;
                }
                for c in 0..cin {
                    let xv = x[(s - pad) * cin + c];
                    for (g, d) in gw[(j * cin + c) * cout..(j * cin + c + 1) * cout].iter_mut().zip(dyt) {
                        *g += xv * d;
                    }
                }
            }
        }
    }
    let w = store.value(&pname(name, "weight"))?.data();
    let mut dx = DenseArray::zeros(&[l, cin]);
    for t in 0..l {
        let dyt = &dy[t * cout..(t + 1) * cout];
        for j in 0..kernel {
            let s = t + j;
            if s < pad || s - pad >= l {
                continue;
            }
            let dxs = dx.row_mut(s - pad);
            for (c, g) in dxs.iter_mut().enumerate() {
                let wrow = &w[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                *g += wrow.iter().zip(dyt).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    Ok(dx)
}

fn dropout_forward<R: Rng + ?Sized>(
    rate: f64,
    input: &DenseArray,
    mode: Mode,
    rng: &mut R,
) -> Result<(DenseArray, LayerCache), NumError> {
    check_rate(rate)?;
    let shape = input.shape().to_vec();
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), LayerCache::Dropout { shape, mask: None }));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((
        DenseArray::from_vec(&shape, data)?,
        LayerCache::Dropout {
            shape,
            mask: Some(mask),
        },
    ))
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax_rows(input: &DenseArray) -> DenseArray {
    let mut out = input.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Sinusoidal positional encodings, `[len, dim]`.
pub fn sinusoidal_encoding(len: usize, dim: usize) -> DenseArray {
    let mut out = DenseArray::zeros(&[len, dim]);
    for pos in 0..len {
        for (i, v) in out.row_mut(pos).iter_mut().enumerate() {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * freq;
            *v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Mean over rows of a `[L, d]` array, giving `[d]`.
pub fn mean_rows(x: &DenseArray) -> DenseArray {
    let rows = x.rows();
    let mut out = vec![0.0; x.last_dim()];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows as f64);
    DenseArray::vector(out)
}

/// Backward of [`mean_rows`]: spreads `grad[d]` evenly over `rows`.
pub fn mean_rows_backward(grad: &DenseArray, rows: usize) -> DenseArray {
    let d = grad.len();
    let mut out = DenseArray::zeros(&[rows, d]);
    for r in 0..rows {
        for (o, g) in out.row_mut(r).iter_mut().zip(grad.data()) {
            *o = g / rows as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng(1);
        let data: Vec<f64> = (0..40).map(|_| r.gen_range(-50.0..50.0)).collect();
        let x = DenseArray::from_vec(&[4, 10], data).unwrap();
        let (y, _) = layer_forward(&Layer::Softmax, &ParamStore::new(), &x, Mode::Eval, 0).unwrap();
        for i in 0..4 {
            assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let x = DenseArray::vector(vec![1.0, -2.0, 3.0]);
        let store = ParamStore::new();
        let (y, _) = layer_forward(&Layer::Dropout { rate: 0.0 }, &store, &x, Mode::Train, 9).unwrap();
        assert_eq!(y, x);
        let (y, _) = layer_forward(&Layer::Dropout { rate: 0.7 }, &store, &x, Mode::Eval, 9).unwrap();
        assert_eq!(y, x);
        assert!(layer_forward(&Layer::Dropout { rate: 1.0 }, &store, &x, Mode::Train, 9).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = DenseArray::vector(vec![1.0; 100_000]);
        let (y, _) =
            layer_forward(&Layer::Dropout { rate: 0.5 }, &ParamStore::new(), &x, Mode::Train, 4).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn embedding_rows_match_weight() {
        let layer = Layer::embedding("emb", 20, 8);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut rng(3)).unwrap();
        let (y, _) = layer_forward(&layer, &store, &DenseArray::vector(vec![2.0, 2.0]), Mode::Eval, 0).unwrap();
        let w = store.value("emb.weight").unwrap();
        assert_eq!(y.row(0), w.row(2));
        assert_eq!(y.row(1), w.row(2));
        assert!(layer_forward(&layer, &store, &DenseArray::vector(vec![20.0]), Mode::Eval, 0).is_err());
    }

    #[test]
    fn shape_mismatch_reported() {
        let layer = Layer::dense("d", 4, 3, Activation::Tanh);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut rng(3)).unwrap();
        let err = layer_forward(&layer, &store, &DenseArray::zeros(&[2, 5]), Mode::Eval, 0).unwrap_err();
        match err {
            NumError::ShapeMismatch { expected, actual, .. } => {
                assert_eq!(expected, vec![2, 4]);
                assert_eq!(actual, vec![2, 5]);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_backward_before_forward() {
        assert_eq!(
            "lstm".parse::<LayerKind>().unwrap_err(),
            NumError::UnknownLayerKind("lstm".into())
        );
        assert_eq!("conv1d".parse::<LayerKind>().unwrap(), LayerKind::Conv1d);
        let layer = Layer::Softmax;
        let mut store = ParamStore::new();
        assert!(matches!(
            layer_backward(&layer, &mut store, None, &DenseArray::vector(vec![1.0])),
            Err(NumError::BackwardBeforeForward(_))
        ));
        // cache from a different layer kind
        let (_, cache) = layer_forward(&Layer::Dropout { rate: 0.1 }, &store, &DenseArray::vector(vec![1.0]), Mode::Eval, 0).unwrap();
        assert!(layer_backward(&layer, &mut store, Some(&cache), &DenseArray::vector(vec![1.0])).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let layers = [
            Layer::dense("d", 8, 8, Activation::Tanh),
            Layer::self_attention("a", 8, 2),
            Layer::conv1d("c", 3, 8, 8),
        ];
        let mut r = rng(5);
        for layer in &layers {
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut r).unwrap();
            let x = DenseArray::from_vec(&[4, 8], (0..32).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
            let (y, cache) = layer.forward(&store, &x, Mode::Train, &mut r).unwrap();
            let dx = layer.backward(&mut store, &cache, &DenseArray::zeros(y.shape())).unwrap();
            assert_eq!(dx.shape(), x.shape());
            for (_, p) in store.iter() {
                assert!(p.grad.data().iter().all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn positional_encoding_values() {
        let pe = sinusoidal_encoding(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.row(1)[0] - 1f64.sin()).abs() < 1e-15);
        assert!((pe.row(1)[3] - (0.01f64).cos()).abs() < 1e-15);
    }

    /// Checks a layer's input and parameter gradients against central
    /// differences of `loss = Σ c_i y_i` with fixed random coefficients.
    fn check_layer(layer: &Layer, input_shape: &[usize], seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut r).unwrap();
        // Perturb biases away from zero so their gradients are exercised.
        for (_, p) in store.iter_mut() {
            for v in p.value.data_mut() {
                *v += r.gen_range(-0.1..0.1);
            }
        }
        let n: usize = input_shape.iter().product();
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        store.insert("__input", DenseArray::from_vec(input_shape, x).unwrap());
        let (probe, _) = layer.forward(&store, store.value("__input").unwrap(), Mode::Eval, &mut r).unwrap();
        let coeffs: Vec<f64> = (0..probe.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let layer = layer.clone();
        grad_check(
            move |s: &mut ParamStore| -> Result<f64, NumError> {
                let x = s.value("__input")?.clone();
                let (y, cache) = layer.forward(s, &x, Mode::Eval, &mut rng(0))?;
                let loss = y.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
                let up = DenseArray::from_vec(y.shape(), coeffs.clone())?;
                let dx = layer.backward(s, &cache, &up)?;
                s.grad_mut("__input")?.add_assign(&dx);
                Ok(loss)
            },
            &mut store,
            50,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        for act in [Activation::Identity, Activation::Tanh, Activation::Sigmoid] {
            let err = check_layer(&Layer::dense("d", 5, 4, act), &[3, 5], 11);
            assert!(err < 1e-5, "{act:?}: {err}");
        }
    }

    #[test]
    fn attention_gradient_on_toy_input() {
        let err = check_layer(&Layer::self_attention("a", 8, 2), &[4, 8], 12);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conv_and_softmax_gradients() {
        assert!(check_layer(&Layer::conv1d("c", 3, 4, 5), &[6, 4], 13) < 1e-4);
        assert!(check_layer(&Layer::Softmax, &[3, 5], 14) < 1e-4);
        assert!(check_layer(&Layer::Dropout { rate: 0.3 }, &[3, 5], 15) < 1e-4);
    }

    #[test]
    fn randomized_layer_gradients() {
        let mut r = rng(99);
        for trial in 0..20u64 {
            let l = r.gen_range(1..7);
            let d_heads = r.gen_range(1..4);
            let d = d_heads * r.gen_range(1..4);
            let cin = r.gen_range(1..5);
            let cout = r.gen_range(1..5);
            let k = [1, 3, 5][r.gen_range(0..3)];
            let cases = [
                (Layer::dense("d", cin, cout, Activation::Tanh), vec![l, cin]),
                (Layer::self_attention("a", d, d_heads), vec![l, d]),
                (Layer::conv1d("c", k, cin, cout), vec![l, cin]),
                (Layer::Softmax, vec![l, cout]),
            ];
            for (layer, shape) in cases {
                let err = check_layer(&layer, &shape, 1000 + trial);
                assert!(err < 1e-4, "{layer:?} {shape:?}: {err}");
            }
        }
    }

    #[test]
    fn large_inputs_stay_finite() {
        let mut r = rng(21);
        let layers = [
            Layer::dense("d", 8, 8, Activation::Sigmoid),
            Layer::dense("t", 8, 8, Activation::Tanh),
            Layer::self_attention("a", 8, 2),
            Layer::conv1d("c", 3, 8, 8),
            Layer::Softmax,
            Layer::Dropout { rate: 0.5 },
        ];
        for _ in 0..50 {
            for layer in &layers {
                let mut store = ParamStore::new();
                layer.init(&mut store, &mut r).unwrap();
                let x = DenseArray::from_vec(&[5, 8], (0..40).map(|_| r.gen_range(-1e3..1e3)).collect()).unwrap();
                let (y, cache) = layer.forward(&store, &x, Mode::Train, &mut r).unwrap();
                assert!(y.is_finite(), "{layer:?}");
                let up = y.map(|v| v.signum());
                let dx = layer.backward(&mut store, &cache, &up).unwrap();
                assert!(dx.is_finite(), "{layer:?}");
                assert!(store.iter().all(|(_, p)| p.grad.is_finite()));
            }
        }
    }
}
