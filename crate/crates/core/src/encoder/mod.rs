//! A small pre-norm transformer encoder with explicit forward and
//! backward passes. Bidirectional attention, GELU feed-forward, no
//! dropout (kept off so gradient checks are exact). All math is f64.
//!
//! Weight matrices are stored row-major as `[in_dim x out_dim]`:
//! `y[o] = sum_i x[i] * w[i*out+o] + b[o]`.

pub mod adam;
pub mod checkpoint;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use adam::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.max_len == 0 || self.n_layers == 0 {
            return Err(Error::Config(
                "vocab_size, max_len, n_layers must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w_q: Vec<f64>,
    pub b_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub b_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_v: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w_ff1: Vec<f64>,
    pub b_ff1: Vec<f64>,
    pub w_ff2: Vec<f64>,
    pub b_ff2: Vec<f64>,
}

impl LayerParams {
    fn zeros(d: usize) -> LayerParams {
        let ff = 4 * d;
        LayerParams {
            ln1_gain: vec![0.0; d],
            ln1_bias: vec![0.0; d],
            w_q: vec![0.0; d * d],
            b_q: vec![0.0; d],
            w_k: vec![0.0; d * d],
            b_k: vec![0.0; d],
            w_v: vec![0.0; d * d],
            b_v: vec![0.0; d],
            w_o: vec![0.0; d * d],
            b_o: vec![0.0; d],
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
            w_ff1: vec![0.0; d * ff],
            b_ff1: vec![0.0; ff],
            w_ff2: vec![0.0; ff * d],
            b_ff2: vec![0.0; d],
        }
    }

    fn tensors(&self) -> Vec<&Vec<f64>> {
        vec![
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w_q,
            &self.b_q,
            &self.w_k,
            &self.b_k,
            &self.w_v,
            &self.b_v,
            &self.w_o,
            &self.b_o,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w_ff1,
            &self.b_ff1,
            &self.w_ff2,
            &self.b_ff2,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_q,
            &mut self.b_q,
            &mut self.w_k,
            &mut self.b_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w_ff1,
            &mut self.b_ff1,
            &mut self.w_ff2,
            &mut self.b_ff2,
        ]
    }
}

/// All trainable parameters: embeddings, transformer layers, final norm,
/// and the two pretraining heads (token prediction `mlm_w/mlm_b`, pair
/// prediction `pair_w/pair_b`).
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tok_emb: Vec<f64>,
    pub pos_emb: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
    /// Token-prediction head, `d_model x vocab_size` plus a vocab-sized bias.
    pub mlm_w: Vec<f64>,
    pub mlm_b: Vec<f64>,
    /// Pair-prediction head: a single logit over the [CLS] state.
    pub pair_w: Vec<f64>,
    pub pair_b: Vec<f64>,
}

/// Gradient mirror of [`EncoderParams`], identical shapes and tensor order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub config: EncoderConfig,
    pub tok_emb: Vec<f64>,
    pub pos_emb: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
    pub mlm_w: Vec<f64>,
    pub mlm_b: Vec<f64>,
    pub pair_w: Vec<f64>,
    pub pair_b: Vec<f64>,
}

impl EncoderParams {
    /// Random initialization: N(0, 0.02) weights, zero biases, unit norms.
    pub fn init(config: EncoderConfig) -> Result<EncoderParams> {
        config.validate()?;
        let mut rng = Rng::seed_from(config.seed);
        let d = config.d_model;
        let v = config.vocab_size;
        let mut gauss =
            |n: usize| -> Vec<f64> { (0..n).map(|_| 0.02 * rng.next_gaussian()).collect() };
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let ff = config.d_ff();
            layers.push(LayerParams {
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                w_q: gauss(d * d),
                b_q: vec![0.0; d],
                w_k: gauss(d * d),
                b_k: vec![0.0; d],
                w_v: gauss(d * d),
                b_v: vec![0.0; d],
                w_o: gauss(d * d),
                b_o: vec![0.0; d],
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
                w_ff1: gauss(d * ff),
                b_ff1: vec![0.0; ff],
                w_ff2: gauss(ff * d),
                b_ff2: vec![0.0; d],
            });
        }
        Ok(EncoderParams {
            tok_emb: gauss(v * d),
            pos_emb: gauss(config.max_len * d),
            layers,
            final_gain: vec![1.0; d],
            final_bias: vec![0.0; d],
            mlm_w: gauss(d * v),
            mlm_b: vec![0.0; v],
            pair_w: gauss(d),
            pair_b: vec![0.0; 1],
            config,
        })
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.extend([
            &self.final_gain,
            &self.final_bias,
            &self.mlm_w,
            &self.mlm_b,
            &self.pair_w,
            &self.pair_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.extend([
            &mut self.final_gain,
            &mut self.final_bias,
            &mut self.mlm_w,
            &mut self.mlm_b,
            &mut self.pair_w,
            &mut self.pair_b,
        ]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for t in self.tensors() {
            flat.extend_from_slice(t);
        }
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Invalid(format!(
                "flat parameter blob has {} values, expected {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl Gradients {
    pub fn zeros(config: &EncoderConfig) -> Gradients {
        let d = config.d_model;
        Gradients {
            config: *config,
            tok_emb: vec![0.0; config.vocab_size * d],
            pos_emb: vec![0.0; config.max_len * d],
            layers: (0..config.n_layers)
                .map(|_| LayerParams::zeros(d))
                .collect(),
            final_gain: vec![0.0; d],
            final_bias: vec![0.0; d],
            mlm_w: vec![0.0; d * config.vocab_size],
            mlm_b: vec![0.0; config.vocab_size],
            pair_w: vec![0.0; d],
            pair_b: vec![0.0; 1],
        }
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.extend([
            &self.final_gain,
            &self.final_bias,
            &self.mlm_w,
            &self.mlm_b,
            &self.pair_w,
            &self.pair_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.extend([
            &mut self.final_gain,
            &mut self.final_bias,
            &mut self.mlm_w,
            &mut self.mlm_b,
            &mut self.pair_w,
            &mut self.pair_b,
        ]);
        out
    }

    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        let others = other.tensors();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(others) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for t in self.tensors() {
            flat.extend_from_slice(t);
        }
        flat
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |acc: f64, &x| acc.max(x.abs()))
    }
}

struct LayerCache {
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>, // n_heads * n * n
    ctx: Vec<f64>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
    h2: Vec<f64>,
    f1: Vec<f64>,
    gelu_out: Vec<f64>,
}

/// Cached activations from one forward pass; required by `backward`.
pub struct ForwardPass {
    pub ids: Vec<usize>,
    layers: Vec<LayerCache>,
    final_xhat: Vec<f64>,
    final_rstd: Vec<f64>,
    /// Final hidden states, one `d_model` row per position.
    pub hidden: Vec<f64>,
}

impl ForwardPass {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn hidden_at(&self, pos: usize) -> &[f64] {
        let d = self.hidden.len() / self.ids.len();
        &self.hidden[pos * d..(pos + 1) * d]
    }

    /// Mean of the hidden states over all positions.
    pub fn mean_hidden(&self) -> Vec<f64> {
        let n = self.ids.len();
        let d = self.hidden.len() / n;
        let mut out = vec![0.0; d];
        for pos in 0..n {
            for j in 0..d {
                out[j] += self.hidden[pos * d + j] / n as f64;
            }
        }
        out
    }
}

const LN_EPS: f64 = 1e-5;

fn layer_norm(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    n: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            out[i * d + j] = gain[j] * h + bias[j];
        }
    }
    (out, xhat, rstd)
}

/// dL/dx for layer norm, accumulating gain/bias grads.
fn layer_norm_backward(
    d_out: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    gain: &[f64],
    d_gain: &mut [f64],
    d_bias: &mut [f64],
    n: usize,
    d: usize,
) -> Vec<f64> {
    let mut d_x = vec![0.0; n * d];
    for i in 0..n {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let dy = d_out[i * d + j];
            let h = xhat[i * d + j];
            d_gain[j] += dy * h;
            d_bias[j] += dy;
            let dxh = dy * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * h;
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            let dxh = d_out[i * d + j] * gain[j];
            d_x[i * d + j] = rstd[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
        }
    }
    d_x
}

/// y[n x out] = x[n x in] * w[in x out] + b
fn linear(x: &[f64], w: &[f64], b: &[f64], n: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * d_out];
    for i in 0..n {
        let row = &x[i * d_in..(i + 1) * d_in];
        let out = &mut y[i * d_out..(i + 1) * d_out];
        out.copy_from_slice(b);
        for (ii, &xv) in row.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[ii * d_out..(ii + 1) * d_out];
            for o in 0..d_out {
                out[o] += xv * wrow[o];
            }
        }
    }
    y
}

fn linear_backward(
    d_y: &[f64],
    x: &[f64],
    w: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<f64> {
    let mut d_x = vec![0.0; n * d_in];
    for i in 0..n {
        let dy = &d_y[i * d_out..(i + 1) * d_out];
        let xr = &x[i * d_in..(i + 1) * d_in];
        for o in 0..d_out {
            d_b[o] += dy[o];
        }
        for ii in 0..d_in {
            let wrow = &w[ii * d_out..(ii + 1) * d_out];
            let dwrow = &mut d_w[ii * d_out..(ii + 1) * d_out];
            let mut acc = 0.0;
            for o in 0..d_out {
                acc += dy[o] * wrow[o];
                dwrow[o] += xr[ii] * dy[o];
            }
            d_x[i * d_in + ii] = acc;
        }
    }
    d_x
}

fn gelu(x: f64) -> f64 {
    const A: f64 = 0.7978845608028654; // sqrt(2/pi)
    const B: f64 = 0.044715;
    0.5 * x * (1.0 + (A * (x + B * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const A: f64 = 0.7978845608028654;
    const B: f64 = 0.044715;
    let u = A * (x + B * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * A * (1.0 + 3.0 * B * x * x)
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

impl EncoderParams {
    /// Encode a token sequence. Bidirectional self-attention over all
    /// positions; the returned pass caches what `backward` needs.
    pub fn forward(&self, ids: &[usize]) -> Result<ForwardPass> {
        let cfg = &self.config;
        let n = ids.len();
        if n == 0 {
            return Err(Error::Invalid("cannot encode an empty sequence".into()));
        }
        if n > cfg.max_len {
            return Err(Error::Invalid(format!(
                "sequence length {} exceeds max_len {}",
                n, cfg.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(Error::Invalid(format!(
                "token id {} out of vocabulary (size {})",
                bad, cfg.vocab_size
            )));
        }
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = vec![0.0; n * d];
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..d {
                x[i * d + j] = self.tok_emb[id * d + j] + self.pos_emb[i * d + j];
            }
        }

        let mut layer_caches = Vec::with_capacity(cfg.n_layers);
        for layer in &self.layers {
            let (h1, xhat1, rstd1) = layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias, n, d);
            let q = linear(&h1, &layer.w_q, &layer.b_q, n, d, d);
            let k = linear(&h1, &layer.w_k, &layer.b_k, n, d, d);
            let v = linear(&h1, &layer.w_v, &layer.b_v, n, d, d);

            let mut att = vec![0.0; h * n * n];
            let mut ctx = vec![0.0; n * d];
            for head in 0..h {
                let off = head * hd;
                for i in 0..n {
                    let row = &mut att[head * n * n + i * n..head * n * n + i * n + n];
                    for j in 0..n {
                        let mut s = 0.0;
                        for t in 0..hd {
                            s += q[i * d + off + t] * k[j * d + off + t];
                        }
                        row[j] = s * scale;
                    }
                    softmax_in_place(row);
                    for j in 0..n {
                        let a = row[j];
                        if a == 0.0 {
                            continue;
                        }
                        for t in 0..hd {
                            ctx[i * d + off + t] += a * v[j * d + off + t];
                        }
                    }
                }
            }
            let attn_out = linear(&ctx, &layer.w_o, &layer.b_o, n, d, d);
            for i in 0..n * d {
                x[i] += attn_out[i];
            }

            let (h2, xhat2, rstd2) = layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias, n, d);
            let f1 = linear(&h2, &layer.w_ff1, &layer.b_ff1, n, d, cfg.d_ff());
            let gelu_out: Vec<f64> = f1.iter().map(|&v| gelu(v)).collect();
            let ffn_out = linear(&gelu_out, &layer.w_ff2, &layer.b_ff2, n, cfg.d_ff(), d);
            for i in 0..n * d {
                x[i] += ffn_out[i];
            }

            layer_caches.push(LayerCache {
                xhat1,
                rstd1,
                h1,
                q,
                k,
                v,
                att,
                ctx,
                xhat2,
                rstd2,
                h2,
                f1,
                gelu_out,
            });
        }

        let (hidden, final_xhat, final_rstd) =
            layer_norm(&x, &self.final_gain, &self.final_bias, n, d);
        Ok(ForwardPass {
            ids: ids.to_vec(),
            layers: layer_caches,
            final_xhat,
            final_rstd,
            hidden,
        })
    }

    /// Accumulate parameter gradients for one cached pass, given the
    /// loss gradient w.r.t. the final hidden states (`n x d_model`).
    pub fn backward(&self, pass: &ForwardPass, d_hidden: &[f64], grads: &mut Gradients) {
        let cfg = &self.config;
        let n = pass.ids.len();
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        debug_assert_eq!(d_hidden.len(), n * d);

        let mut d_x = layer_norm_backward(
            d_hidden,
            &pass.final_xhat,
            &pass.final_rstd,
            &self.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
            n,
            d,
        );

        for (layer, cache, g) in self
            .layers
            .iter()
            .zip(&pass.layers)
            .zip(&mut grads.layers)
            .map(|((a, b), c)| (a, b, c))
            .rev()
        {
            // FFN branch: x_out = x_mid + W2 gelu(W1 LN2(x_mid)).
            let d_gelu = linear_backward(
                &d_x,
                &cache.gelu_out,
                &layer.w_ff2,
                &mut g.w_ff2,
                &mut g.b_ff2,
                n,
                cfg.d_ff(),
                d,
            );
            let d_f1: Vec<f64> = d_gelu
                .iter()
                .zip(&cache.f1)
                .map(|(dg, &f)| dg * gelu_grad(f))
                .collect();
            let d_h2 = linear_backward(
                &d_f1,
                &cache.h2,
                &layer.w_ff1,
                &mut g.w_ff1,
                &mut g.b_ff1,
                n,
                d,
                cfg.d_ff(),
            );
            let d_from_ln2 = layer_norm_backward(
                &d_h2,
                &cache.xhat2,
                &cache.rstd2,
                &layer.ln2_gain,
                &mut g.ln2_gain,
                &mut g.ln2_bias,
                n,
                d,
            );
            for i in 0..n * d {
                d_x[i] += d_from_ln2[i];
            }

            // Attention branch: x_mid = x_in + W_o ctx.
            let d_ctx = linear_backward(
                &d_x, &cache.ctx, &layer.w_o, &mut g.w_o, &mut g.b_o, n, d, d,
            );
            let mut d_q = vec![0.0; n * d];
            let mut d_k = vec![0.0; n * d];
            let mut d_v = vec![0.0; n * d];
            for head in 0..h {
                let off = head * hd;
                for i in 0..n {
                    let att_row = &cache.att[head * n * n + i * n..head * n * n + i * n + n];
                    // d_att and softmax backward.
                    let mut d_att = vec![0.0; n];
                    for j in 0..n {
                        let mut s = 0.0;
                        for t in 0..hd {
                            s += d_ctx[i * d + off + t] * cache.v[j * d + off + t];
                        }
                        d_att[j] = s;
                        let a = att_row[j];
                        if a != 0.0 {
                            for t in 0..hd {
                                d_v[j * d + off + t] += a * d_ctx[i * d + off + t];
                            }
                        }
                    }
                    let dot: f64 = d_att.iter().zip(att_row).map(|(da, a)| da * a).sum();
                    for j in 0..n {
                        let d_score = att_row[j] * (d_att[j] - dot) * scale;
                        if d_score == 0.0 {
                            continue;
                        }
                        for t in 0..hd {
                            d_q[i * d + off + t] += d_score * cache.k[j * d + off + t];
                            d_k[j * d + off + t] += d_score * cache.q[i * d + off + t];
                        }
                    }
                }
            }
            let mut d_h1 =
                linear_backward(&d_q, &cache.h1, &layer.w_q, &mut g.w_q, &mut g.b_q, n, d, d);
            let d_h1_k =
                linear_backward(&d_k, &cache.h1, &layer.w_k, &mut g.w_k, &mut g.b_k, n, d, d);
            let d_h1_v =
                linear_backward(&d_v, &cache.h1, &layer.w_v, &mut g.w_v, &mut g.b_v, n, d, d);
            for i in 0..n * d {
                d_h1[i] += d_h1_k[i] + d_h1_v[i];
            }
            let d_from_ln1 = layer_norm_backward(
                &d_h1,
                &cache.xhat1,
                &cache.rstd1,
                &layer.ln1_gain,
                &mut g.ln1_gain,
                &mut g.ln1_bias,
                n,
                d,
            );
            for i in 0..n * d {
                d_x[i] += d_from_ln1[i];
            }
        }

        for (i, &id) in pass.ids.iter().enumerate() {
            for j in 0..d {
                grads.tok_emb[id * d + j] += d_x[i * d + j];
                grads.pos_emb[i * d + j] += d_x[i * d + j];
            }
        }
    }

    /// Probability vector over the vocabulary for one hidden state
    /// (softmax of `hidden * mlm_w + mlm_b`).
    pub fn predict_token_distribution(&self, hidden: &[f64]) -> Vec<f64> {
        let v = self.config.vocab_size;
        let d = self.config.d_model;
        let mut logits = self.mlm_b.clone();
        for i in 0..d {
            let hi = hidden[i];
            if hi == 0.0 {
                continue;
            }
            let row = &self.mlm_w[i * v..(i + 1) * v];
            for o in 0..v {
                logits[o] += hi * row[o];
            }
        }
        softmax_in_place(&mut logits);
        logits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 11,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            max_len: 10,
            seed: 42,
        }
    }

    #[test]
    fn forward_shape_and_finite() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        let pass = params.forward(&[1, 2, 3, 4]).unwrap();
        assert_eq!(pass.hidden.len(), 4 * 8);
        assert!(pass.hidden.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        assert!(params.forward(&[99]).is_err());
        assert!(params.forward(&[0; 11]).is_err());
        assert!(params.forward(&[]).is_err());
    }

    #[test]
    fn forward_deterministic() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        let a = params.forward(&[5, 6, 7]).unwrap();
        let b = params.forward(&[5, 6, 7]).unwrap();
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn swapped_positions_swap_states() {
        // Permuting two inputs and swapping their position rows permutes
        // the outputs: bidirectional attention has no other position tie.
        let mut params = EncoderParams::init(tiny_config()).unwrap();
        let a = params.forward(&[3, 9]).unwrap();
        let d = params.config.d_model;
        for j in 0..d {
            params.pos_emb.swap(j, d + j);
        }
        let b = params.forward(&[9, 3]).unwrap();
        for j in 0..d {
            assert!((a.hidden[j] - b.hidden[d + j]).abs() < 1e-12);
            assert!((a.hidden[d + j] - b.hidden[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_sums_to_one() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        let pass = params.forward(&[1, 2]).unwrap();
        let probs = params.predict_token_distribution(pass.hidden_at(0));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_head_gives_uniform() {
        let mut params = EncoderParams::init(tiny_config()).unwrap();
        params.mlm_w.iter_mut().for_each(|x| *x = 0.0);
        params.mlm_b.iter_mut().for_each(|x| *x = 0.0);
        let probs = params.predict_token_distribution(&vec![0.0; 8]);
        for &p in &probs {
            assert!((p - 1.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_matches_logit_max() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        let pass = params.forward(&[4, 7, 1]).unwrap();
        let hidden = pass.hidden_at(1);
        let probs = params.predict_token_distribution(hidden);
        let v = params.config.vocab_size;
        let d = params.config.d_model;
        let mut logits = params.mlm_b.clone();
        for o in 0..v {
            for i in 0..d {
                logits[o] += hidden[i] * params.mlm_w[i * v + o];
            }
        }
        let argmax_p = (0..v).max_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap());
        let argmax_l = (0..v).max_by(|&a, &b| logits[a].partial_cmp(&logits[b]).unwrap());
        assert_eq!(argmax_p, argmax_l);
    }

    #[test]
    fn zero_upstream_gradient_zero_grads() {
        let params = EncoderParams::init(tiny_config()).unwrap();
        let pass = params.forward(&[1, 2, 3]).unwrap();
        let mut grads = Gradients::zeros(&params.config);
        params.backward(&pass, &vec![0.0; 3 * 8], &mut grads);
        assert_eq!(grads.max_abs(), 0.0);
    }

    /// Central finite differences through the full encoder for a simple
    /// scalar loss (sum of squared hidden states).
    #[test]
    fn backward_matches_finite_differences() {
        let cfg = EncoderConfig {
            vocab_size: 7,
            d_model: 4,
            n_layers: 2,
            n_heads: 2,
            max_len: 5,
            seed: 3,
        };
        let ids = [1usize, 4, 2];
        let loss_of = |p: &EncoderParams| -> f64 {
            let pass = p.forward(&ids).unwrap();
            pass.hidden.iter().map(|h| h * h).sum::<f64>()
        };
        let params = EncoderParams::init(cfg).unwrap();
        let pass = params.forward(&ids).unwrap();
        let d_hidden: Vec<f64> = pass.hidden.iter().map(|h| 2.0 * h).collect();
        let mut grads = Gradients::zeros(&cfg);
        params.backward(&pass, &d_hidden, &mut grads);

        let flat_grads = grads.to_flat();
        let flat = params.to_flat();
        let h = 1e-4;
        let mut max_rel = 0.0f64;
        for idx in 0..flat.len() {
            let mut perturbed = params.clone();
            let mut plus = flat.clone();
            plus[idx] += h;
            perturbed.load_flat(&plus).unwrap();
            let up = loss_of(&perturbed);
            let mut minus = flat.clone();
            minus[idx] -= h;
            perturbed.load_flat(&minus).unwrap();
            let down = loss_of(&perturbed);
            let numeric = (up - down) / (2.0 * h);
            let analytic = flat_grads[idx];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-3, "max relative error {}", max_rel);
    }
}
