use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AdError, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Multiplier turning a normalized time into a position for the sinusoidal
/// encoding, so that the 16 input stamps sit roughly one position apart.
pub const TIME_SCALE: f64 = 30.0;

/// Standard sinusoidal encoding of a real position.
pub fn sinusoid(pos: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for j in 0..d / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * j as f64 / d as f64);
        out[2 * j] = (pos * freq).sin();
        out[2 * j + 1] = (pos * freq).cos();
    }
    out
}

/// Encoding of a time value; shared by data snapshots and query locations.
pub fn time_encoding(t: f64, d: usize) -> Vec<f64> {
    sinusoid(TIME_SCALE * t, d)
}

/// Registers parameters with deterministic initialization.
pub(crate) struct Init<'a, T: Real> {
    pub store: &'a mut ParamStore<T>,
    pub rng: ChaCha8Rng,
}

impl<T: Real> Init<'_, T> {
    fn add(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> ParamId {
        let t = Tensor::from_f64(shape, &data).expect("init shape");
        self.store.add(name, t)
    }

    /// Glorot-uniform weight `[fan_in, fan_out]`.
    pub fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-a..a)).collect();
        self.add(name, &[fan_in, fan_out], data)
    }

    pub fn constant(&mut self, name: String, shape: &[usize], v: f64) -> ParamId {
        self.add(name, shape, vec![v; shape.iter().product()])
    }

    pub fn normal(&mut self, name: String, shape: &[usize], std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..shape.iter().product()).map(|_| dist.sample(&mut self.rng)).collect();
        self.add(name, shape, data)
    }

    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.weight(format!("{name}.w"), fan_in, fan_out),
            b: self.constant(format!("{name}.b"), &[fan_out], 0.0),
        }
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.constant(format!("{name}.g"), &[d], 1.0),
            b: self.constant(format!("{name}.b"), &[d], 0.0),
        }
    }

    pub fn attention(&mut self, name: &str, d: usize, heads: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
            heads,
        }
    }

    pub fn ffn(&mut self, name: &str, d: usize, hidden: usize) -> FeedForward {
        FeedForward {
            up: self.linear(&format!("{name}.up"), d, hidden),
            down: self.linear(&format!("{name}.down"), hidden, d),
        }
    }
}

/// Tape plus the parameter handles of the current pass.
pub(crate) struct Cx<'a, T: Real> {
    pub tape: &'a mut Tape<T>,
    pub vars: &'a [Var],
}

impl<T: Real> Cx<'_, T> {
    pub fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward<T: Real>(&self, cx: &mut Cx<T>, x: Var) -> Result<Var, AdError> {
        let y = cx.tape.matmul(x, cx.p(self.w))?;
        cx.tape.add_bias(y, cx.p(self.b))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Norm {
    pub g: ParamId,
    pub b: ParamId,
}

impl Norm {
    pub fn forward<T: Real>(&self, cx: &mut Cx<T>, x: Var) -> Result<Var, AdError> {
        cx.tape.layer_norm(x, cx.p(self.g), cx.p(self.b))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn forward<T: Real>(&self, cx: &mut Cx<T>, x: Var) -> Result<Var, AdError> {
        let h = self.up.forward(cx, x)?;
        let h = cx.tape.gelu(h);
        self.down.forward(cx, h)
    }
}

/// Additive attention mask of shape `[B·H, Lq, Lk]`: keys with
/// `key_valid == false` and, when `causal`, keys after the query are blocked.
pub(crate) fn attention_mask<T: Real>(
    batch: usize,
    heads: usize,
    lq: usize,
    lk: usize,
    key_valid: Option<&[bool]>,
    causal: bool,
) -> Option<Tensor<T>> {
    let any_pad = key_valid.is_some_and(|k| k.iter().any(|v| !v));
    if !any_pad && !causal {
        return None;
    }
    let blocked = T::lit(-1e9);
    let mut data = vec![T::zero(); batch * heads * lq * lk];
    for b in 0..batch {
        for h in 0..heads {
            for i in 0..lq {
                let row = &mut data[((b * heads + h) * lq + i) * lk..][..lk];
                for (j, m) in row.iter_mut().enumerate() {
                    let pad = key_valid.is_some_and(|k| !k[b * lk + j]);
                    if pad || (causal && j > i) {
                        *m = blocked;
                    }
                }
            }
        }
    }
    Some(Tensor {
        shape: vec![batch * heads, lq, lk],
        data,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    fn split<T: Real>(&self, cx: &mut Cx<T>, x: Var) -> Result<Var, AdError> {
        let s = cx.tape.shape(x).to_vec();
        let (b, l, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let x = cx.tape.reshape(x, &[b, l, h, d / h])?;
        let x = cx.tape.swap_axes12(x)?;
        cx.tape.reshape(x, &[b * h, l, d / h])
    }

    /// Multi-head attention of queries `x [B, Lq, D]` over `ctx [B, Lk, D]`.
    pub fn forward<T: Real>(&self, cx: &mut Cx<T>, x: Var, ctx: Var, mask: Option<&Tensor<T>>) -> Result<Var, AdError> {
        let s = cx.tape.shape(x).to_vec();
        let (b, lq, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let q = self.q.forward(cx, x)?;
        let k = self.k.forward(cx, ctx)?;
        let v = self.v.forward(cx, ctx)?;
        let (q, k, v) = (self.split(cx, q)?, self.split(cx, k)?, self.split(cx, v)?);
        let scores = cx.tape.bmm(q, k, true)?;
        let mut scores = cx.tape.scale(scores, T::lit(1.0 / ((d / h) as f64).sqrt()));
        if let Some(m) = mask {
            scores = cx.tape.add_const(scores, m)?;
        }
        let w = cx.tape.softmax(scores);
        let o = cx.tape.bmm(w, v, false)?;
        let o = cx.tape.reshape(o, &[b, h, lq, d / h])?;
        let o = cx.tape.swap_axes12(o)?;
        let o = cx.tape.reshape(o, &[b, lq, d])?;
        self.o.forward(cx, o)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub(crate) struct EncoderBlock {
    pub ln1: Norm,
    pub attn: Attention,
    pub ln2: Norm,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new<T: Real>(init: &mut Init<T>, name: &str, d: usize, heads: usize, hidden: usize) -> Self {
        EncoderBlock {
            ln1: init.layer_norm(&format!("{name}.ln1"), d),
            attn: init.attention(&format!("{name}.attn"), d, heads),
            ln2: init.layer_norm(&format!("{name}.ln2"), d),
            ffn: init.ffn(&format!("{name}.ffn"), d, hidden),
        }
    }

    pub fn forward<T: Real>(&self, cx: &mut Cx<T>, x: Var, mask: Option<&Tensor<T>>) -> Result<Var, AdError> {
        let h = self.ln1.forward(cx, x)?;
        let a = self.attn.forward(cx, h, h, mask)?;
        let x = cx.tape.add(x, a)?;
        let h = self.ln2.forward(cx, x)?;
        let f = self.ffn.forward(cx, h)?;
        cx.tape.add(x, f)
    }
}

/// Pre-norm decoder block: optional self-attention, cross-attention, FFN.
#[derive(Debug, Clone)]
pub(crate) struct DecoderBlock {
    pub self_attn: Option<(Norm, Attention)>,
    pub ln_cross: Norm,
    pub cross: Attention,
    pub ln_ffn: Norm,
    pub ffn: FeedForward,
}

impl DecoderBlock {
    pub fn new<T: Real>(
        init: &mut Init<T>,
        name: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        with_self: bool,
    ) -> Self {
        let self_attn = with_self.then(|| {
            (
                init.layer_norm(&format!("{name}.ln_self"), d),
                init.attention(&format!("{name}.self"), d, heads),
            )
        });
        DecoderBlock {
            self_attn,
            ln_cross: init.layer_norm(&format!("{name}.ln_cross"), d),
            cross: init.attention(&format!("{name}.cross"), d, heads),
            ln_ffn: init.layer_norm(&format!("{name}.ln_ffn"), d),
            ffn: init.ffn(&format!("{name}.ffn"), d, hidden),
        }
    }

    pub fn forward<T: Real>(
        &self,
        cx: &mut Cx<T>,
        mut x: Var,
        ctx: Var,
        self_mask: Option<&Tensor<T>>,
        cross_mask: Option<&Tensor<T>>,
    ) -> Result<Var, AdError> {
        if let Some((ln, attn)) = &self.self_attn {
            let h = ln.forward(cx, x)?;
            let a = attn.forward(cx, h, h, self_mask)?;
            x = cx.tape.add(x, a)?;
        }
        let h = self.ln_cross.forward(cx, x)?;
        let a = self.cross.forward(cx, h, ctx, cross_mask)?;
        let x = cx.tape.add(x, a)?;
        let h = self.ln_ffn.forward(cx, x)?;
        let f = self.ffn.forward(cx, h)?;
        cx.tape.add(x, f)
    }
}
