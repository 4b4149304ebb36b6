//! The five-block operator network: data and symbol encoders, feature
//! fusion, a cross-attention data decoder evaluated at query times, and an
//! autoregressive symbol decoder.
//!
//! [`Prose`] holds the configuration and parameter layout only. Values live in
//! a [`ParamStore`], so the same forward code runs in `f32` for training and
//! `f64` for gradient checks.

mod layers;

pub use layers::{sinusoid, time_encoding, TIME_SCALE};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::expr::{decode_ids, Expr, Vocab, MAX_DECODE_LEN};
use layers::{attention_mask, Cx, DecoderBlock, EncoderBlock, Init, Linear, Norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("d_model {0} not divisible by {1} heads")]
    Heads(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("batch field {field}: expected {expected} values, got {got}")]
    BatchShape {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("token id {0} outside vocabulary of {1}")]
    UnknownToken(u16, usize),
    #[error("mode {0} has no {1}")]
    MissingBlock(Mode, &'static str),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Which modalities go in and come out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "2to2")]
    TwoToTwo,
    #[serde(rename = "2to1")]
    TwoToOne,
    #[serde(rename = "1to1")]
    OneToOne,
}

impl Mode {
    pub fn has_symbol_input(self) -> bool {
        self != Mode::OneToOne
    }

    pub fn has_symbol_output(self) -> bool {
        self == Mode::TwoToTwo
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TwoToTwo => "2to2",
            Mode::TwoToOne => "2to1",
            Mode::OneToOne => "1to1",
        })
    }
}

impl FromStr for Mode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2to2" => Ok(Mode::TwoToTwo),
            "2to1" => Ok(Mode::TwoToOne),
            "1to1" => Ok(Mode::OneToOne),
            _ => Err(ModelError::Config(format!("unknown mode {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCounts {
    pub data_enc: usize,
    pub sym_enc: usize,
    pub fusion: usize,
    pub data_dec: usize,
    pub sym_dec: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub layers: LayerCounts,
    pub ffn: usize,
    pub vocab_size: usize,
    pub mode: Mode,
    /// Longest token sequence including SOS and EOS.
    pub max_symbol_len: usize,
    /// Spatial points per snapshot.
    pub nx: usize,
}

impl ModelConfig {
    pub fn desk(mode: Mode) -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            layers: LayerCounts {
                data_enc: 2,
                sym_enc: 2,
                fusion: 2,
                data_dec: 2,
                sym_dec: 2,
            },
            ffn: 256,
            vocab_size: Vocab::global().len(),
            mode,
            max_symbol_len: MAX_DECODE_LEN + 2,
            nx: crate::pde_zoo::NX,
        }
    }

    pub fn paper(mode: Mode) -> Self {
        ModelConfig {
            d_model: 512,
            n_heads: 8,
            layers: LayerCounts {
                data_enc: 2,
                sym_enc: 4,
                fusion: 8,
                data_dec: 8,
                sym_dec: 8,
            },
            ffn: 2048,
            ..Self::desk(mode)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::Heads(self.d_model, self.n_heads));
        }
        if self.d_model % 2 != 0 {
            return Err(ModelError::Config("d_model must be even".into()));
        }
        if self.ffn == 0 || self.nx == 0 || self.vocab_size < 4 || self.max_symbol_len < 2 {
            return Err(ModelError::Config("zero-sized dimension".into()));
        }
        Ok(())
    }
}

/// One model batch. All arrays are row-major and flattened.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchInput {
    pub batch: usize,
    pub n_in: usize,
    pub nx: usize,
    /// `[B][n_in][nx]` input snapshots.
    pub data: Vec<f64>,
    /// `[B][n_in]` input time stamps.
    pub in_times: Vec<f64>,
    pub sym_len: usize,
    /// `[B][sym_len]` symbol input ids, SOS-prefixed, EOS-terminated, PAD-padded.
    pub sym_tokens: Vec<u16>,
    pub n_query: usize,
    /// `[B][n_query]` query times.
    pub query_times: Vec<f64>,
    /// `[B][n_query][nx]` data labels; empty at inference.
    pub data_target: Vec<f64>,
    pub dec_len: usize,
    /// `[B][dec_len]` teacher-forcing input (target ids without the last).
    pub dec_tokens: Vec<u16>,
    /// `[B][dec_len]` next-token labels, PAD where absent.
    pub token_target: Vec<u16>,
}

/// Pads id sequences to a common length; returns the flat array and length.
pub fn pad_sequences(seqs: &[Vec<u16>], pad: u16) -> (Vec<u16>, usize) {
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(seqs.len() * len);
    for s in seqs {
        out.extend_from_slice(s);
        out.extend(std::iter::repeat_n(pad, len - s.len()));
    }
    (out, len)
}

impl BatchInput {
    /// Fills the teacher-forcing fields from full `SOS … EOS` target sequences.
    pub fn set_symbol_targets(&mut self, targets: &[Vec<u16>], pad: u16) {
        let inputs: Vec<Vec<u16>> = targets.iter().map(|t| t[..t.len().saturating_sub(1)].to_vec()).collect();
        let labels: Vec<Vec<u16>> = targets.iter().map(|t| t.get(1..).unwrap_or(&[]).to_vec()).collect();
        let (dec, len) = pad_sequences(&inputs, pad);
        let (lab, _) = pad_sequences(&labels, pad);
        self.dec_tokens = dec;
        self.token_target = lab;
        self.dec_len = len;
    }

    fn check(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let b = self.batch;
        let need = |field: &'static str, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(ModelError::BatchShape { field, expected, got })
            }
        };
        need("nx", self.nx, cfg.nx)?;
        need("data", self.data.len(), b * self.n_in * self.nx)?;
        need("in_times", self.in_times.len(), b * self.n_in)?;
        need("query_times", self.query_times.len(), b * self.n_query)?;
        if cfg.mode.has_symbol_input() {
            need("sym_tokens", self.sym_tokens.len(), b * self.sym_len)?;
        }
        for &id in self.sym_tokens.iter().chain(&self.dec_tokens) {
            if id as usize >= cfg.vocab_size {
                return Err(ModelError::UnknownToken(id, cfg.vocab_size));
            }
        }
        Ok(())
    }
}

/// Greedy decoding result for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Generated ids after SOS, EOS excluded.
    pub ids: Vec<u16>,
    pub expr: Option<Expr>,
    /// Generation hit EOS and the ids parse as a complete expression.
    pub valid: bool,
}

/// Forward outputs of one pass.
pub struct Outputs {
    /// `[B, Q, nx]`.
    pub data: Var,
    /// `[B·dec_len, V]`; present for 2-to-2 when decoder tokens are given.
    pub logits: Option<Var>,
}

/// Encoder and fusion output.
pub struct Fused {
    /// `[B, n_in, D]`.
    pub data: Var,
    /// `[B, sym_len, D]`.
    pub sym: Option<Var>,
    pub sym_valid: Vec<bool>,
}

#[derive(Debug, Clone)]
struct SymbolPath {
    table: ParamId,
    enc: Vec<EncoderBlock>,
    enc_norm: Norm,
}

#[derive(Debug, Clone)]
struct SymbolDecoder {
    blocks: Vec<DecoderBlock>,
    norm: Norm,
    out: Linear,
}

/// Network layout. Parameter values are held separately.
#[derive(Debug, Clone)]
pub struct Prose {
    pub config: ModelConfig,
    data_embed: Linear,
    data_enc: Vec<EncoderBlock>,
    data_enc_norm: Norm,
    symbols: Option<SymbolPath>,
    modality: ParamId,
    fusion: Vec<EncoderBlock>,
    fusion_norm: Norm,
    query_embed: Linear,
    data_dec: Vec<DecoderBlock>,
    data_dec_norm: Norm,
    data_out: Linear,
    sym_dec: Option<SymbolDecoder>,
}

impl Prose {
    /// Builds the layout and a freshly initialized parameter store.
    pub fn init<T: Real>(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>), ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let c = &config;
        let (d, h, f) = (c.d_model, c.n_heads, c.ffn);
        let enc = |init: &mut Init<T>, prefix: &str, n: usize| -> Vec<EncoderBlock> {
            (0..n).map(|i| EncoderBlock::new(init, &format!("{prefix}.{i}"), d, h, f)).collect()
        };

        let data_embed = init.linear("data_embed", c.nx + 1, d);
        let data_enc = enc(&mut init, "data_enc", c.layers.data_enc);
        let data_enc_norm = init.layer_norm("data_enc.norm", d);
        let symbols = c.mode.has_symbol_input().then(|| {
            let table = init.normal("sym_embed".into(), &[c.vocab_size, d], 1.0);
            let blocks = enc(&mut init, "sym_enc", c.layers.sym_enc);
            SymbolPath {
                table,
                enc: blocks,
                enc_norm: init.layer_norm("sym_enc.norm", d),
            }
        });
        let n_modalities = if c.mode.has_symbol_input() { 2 } else { 1 };
        let modality = init.normal("modality".into(), &[n_modalities, d], 1.0);
        let fusion = enc(&mut init, "fusion", c.layers.fusion);
        let fusion_norm = init.layer_norm("fusion.norm", d);
        let query_embed = init.linear("query_embed", d, d);
        let data_dec = (0..c.layers.data_dec)
            .map(|i| DecoderBlock::new(&mut init, &format!("data_dec.{i}"), d, h, f, false))
            .collect();
        let data_dec_norm = init.layer_norm("data_dec.norm", d);
        let data_out = init.linear("data_out", d, c.nx);
        let sym_dec = c.mode.has_symbol_output().then(|| SymbolDecoder {
            blocks: (0..c.layers.sym_dec)
                .map(|i| DecoderBlock::new(&mut init, &format!("sym_dec.{i}"), d, h, f, true))
                .collect(),
            norm: init.layer_norm("sym_dec.norm", d),
            out: init.linear("sym_out", d, c.vocab_size),
        });

        let model = Prose {
            config,
            data_embed,
            data_enc,
            data_enc_norm,
            symbols,
            modality,
            fusion,
            fusion_norm,
            query_embed,
            data_dec,
            data_dec_norm,
            data_out,
            sym_dec,
        };
        Ok((model, store))
    }

    /// Parameter ids used only by the data decoder (query embedding onward).
    pub fn data_decoder_params<T: Real>(&self, store: &ParamStore<T>) -> Vec<ParamId> {
        ids_with_prefix(store, &["query_embed", "data_dec", "data_out"])
    }

    /// Parameter ids of the encoders and fusion.
    pub fn encoder_params<T: Real>(&self, store: &ParamStore<T>) -> Vec<ParamId> {
        ids_with_prefix(store, &["data_embed", "data_enc", "sym_embed", "sym_enc", "modality", "fusion"])
    }

    fn modality_row<T: Real>(&self, cx: &mut Cx<T>, row: usize) -> Result<Var, AdError> {
        let m = cx.p(self.modality);
        let s = cx.tape.shape(m).to_vec();
        let m = cx.tape.reshape(m, &[1, s[0], s[1]])?;
        let r = cx.tape.slice1(m, row, 1)?;
        cx.tape.reshape(r, &[s[1]])
    }

    fn time_features<T: Real>(&self, times: &[f64]) -> Vec<T> {
        let d = self.config.d_model;
        times.iter().flat_map(|&t| time_encoding(t, d)).map(T::lit).collect()
    }

    fn embed_symbols<T: Real>(&self, cx: &mut Cx<T>, ids: &[u16], batch: usize, len: usize) -> Result<Var, ModelError> {
        let path = self.symbols.as_ref().ok_or(ModelError::MissingBlock(self.config.mode, "symbol embedding"))?;
        let d = self.config.d_model;
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let e = cx.tape.embedding(cx.p(path.table), &idx)?;
        let e = cx.tape.reshape(e, &[batch, len, d])?;
        let pe: Vec<T> = (0..len).flat_map(|p| sinusoid(p as f64, d)).map(T::lit).collect();
        Ok(cx.tape.add_const(e, &Tensor::new(vec![len, d], pe)?)?)
    }

    /// `[u_i ; t_i]` per snapshot through one shared affine map, plus the
    /// time encoding of `t_i`.
    fn embed_data_cx<T: Real>(&self, cx: &mut Cx<T>, input: &BatchInput) -> Result<Var, ModelError> {
        let c = &self.config;
        let (b, n, d) = (input.batch, input.n_in, c.d_model);
        let mut rows = Vec::with_capacity(b * n * (c.nx + 1));
        for (snap, t) in input.data.chunks(c.nx).zip(&input.in_times) {
            rows.extend(snap.iter().map(|&v| T::lit(v)));
            rows.push(T::lit(*t));
        }
        let x = cx.tape.constant(Tensor::new(vec![b, n, c.nx + 1], rows)?);
        let x = self.data_embed.forward(cx, x)?;
        let pe = Tensor::new(vec![b, n, d], self.time_features(&input.in_times))?;
        Ok(cx.tape.add_const(x, &pe)?)
    }

    /// Data features `[B, n_in, D]` before the data encoder.
    pub fn embed_data<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], input: &BatchInput) -> Result<Var, ModelError> {
        input.check(&self.config)?;
        self.embed_data_cx(&mut Cx { tape, vars }, input)
    }

    /// Symbol features `[B, L, D]` before the symbol encoder.
    pub fn embed_symbol_ids<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        ids: &[u16],
        batch: usize,
        len: usize,
    ) -> Result<Var, ModelError> {
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(ModelError::UnknownToken(bad, self.config.vocab_size));
        }
        self.embed_symbols(&mut Cx { tape, vars }, ids, batch, len)
    }

    /// Encoders and fusion; returns the fused-data and fused-symbol slices.
    pub fn fuse<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], input: &BatchInput) -> Result<Fused, ModelError> {
        input.check(&self.config)?;
        self.encode(&mut Cx { tape, vars }, input)
    }

    /// Data and symbol encoders followed by fusion.
    pub(crate) fn encode<T: Real>(&self, cx: &mut Cx<T>, input: &BatchInput) -> Result<Fused, ModelError> {
        let c = &self.config;
        let (b, n, d, h) = (input.batch, input.n_in, c.d_model, c.n_heads);
        let mut x = self.embed_data_cx(cx, input)?;
        for blk in &self.data_enc {
            x = blk.forward(cx, x, None)?;
        }
        let x = self.data_enc_norm.forward(cx, x)?;
        let x = cx.tape.reshape(x, &[b * n, d])?;
        let typed = self.modality_row(cx, 0)?;
        let x = cx.tape.add_bias(x, typed)?;
        let data_feat = cx.tape.reshape(x, &[b, n, d])?;

        let (mut fused, sym_len, sym_valid) = match &self.symbols {
            Some(path) => {
                let l = input.sym_len;
                let pad = Vocab::global().pad_id();
                let valid: Vec<bool> = input.sym_tokens.iter().map(|&t| t != pad).collect();
                let mut s = self.embed_symbols(cx, &input.sym_tokens, b, l)?;
                let mask = attention_mask::<T>(b, h, l, l, Some(&valid), false);
                for blk in &path.enc {
                    s = blk.forward(cx, s, mask.as_ref())?;
                }
                let s = path.enc_norm.forward(cx, s)?;
                let s = cx.tape.reshape(s, &[b * l, d])?;
                let typed = self.modality_row(cx, 1)?;
                let s = cx.tape.add_bias(s, typed)?;
                let s = cx.tape.reshape(s, &[b, l, d])?;
                (cx.tape.concat1(data_feat, s)?, l, valid)
            }
            None => (data_feat, 0, Vec::new()),
        };

        let total = n + sym_len;
        let key_valid: Option<Vec<bool>> = (sym_len > 0).then(|| {
            (0..b)
                .flat_map(|i| {
                    std::iter::repeat_n(true, n).chain(sym_valid[i * sym_len..(i + 1) * sym_len].iter().copied())
                })
                .collect()
        });
        let mask = attention_mask::<T>(b, h, total, total, key_valid.as_deref(), false);
        for blk in &self.fusion {
            fused = blk.forward(cx, fused, mask.as_ref())?;
        }
        let fused = self.fusion_norm.forward(cx, fused)?;
        let data = if sym_len > 0 { cx.tape.slice1(fused, 0, n)? } else { fused };
        let sym = if sym_len > 0 {
            Some(cx.tape.slice1(fused, n, sym_len)?)
        } else {
            None
        };
        Ok(Fused { data, sym, sym_valid })
    }

    /// Cross-attention decoder evaluated independently at each query time.
    pub(crate) fn decode_data<T: Real>(&self, cx: &mut Cx<T>, fused: Var, input: &BatchInput) -> Result<Var, ModelError> {
        let c = &self.config;
        let (b, q, d) = (input.batch, input.n_query, c.d_model);
        let qe = cx.tape.constant(Tensor::new(vec![b, q, d], self.time_features(&input.query_times))?);
        let mut x = self.query_embed.forward(cx, qe)?;
        for blk in &self.data_dec {
            x = blk.forward(cx, x, fused, None, None)?;
        }
        let x = self.data_dec_norm.forward(cx, x)?;
        Ok(self.data_out.forward(cx, x)?)
    }

    /// Teacher-forced symbol decoder logits `[B·L, V]`.
    pub(crate) fn decode_symbols<T: Real>(
        &self,
        cx: &mut Cx<T>,
        fused_sym: Var,
        sym_valid: &[bool],
        dec_tokens: &[u16],
        batch: usize,
        len: usize,
    ) -> Result<Var, ModelError> {
        let dec = self.sym_dec.as_ref().ok_or(ModelError::MissingBlock(self.config.mode, "symbol decoder"))?;
        let (d, h) = (self.config.d_model, self.config.n_heads);
        let lk = cx.tape.shape(fused_sym)[1];
        let mut x = self.embed_symbols(cx, dec_tokens, batch, len)?;
        let causal = attention_mask::<T>(batch, h, len, len, None, true);
        let cross = attention_mask::<T>(batch, h, len, lk, Some(sym_valid), false);
        for blk in &dec.blocks {
            x = blk.forward(cx, x, fused_sym, causal.as_ref(), cross.as_ref())?;
        }
        let x = dec.norm.forward(cx, x)?;
        let x = cx.tape.reshape(x, &[batch * len, d])?;
        Ok(dec.out.forward(cx, x)?)
    }

    /// Full teacher-forced pass. `vars` are the loaded parameters.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], input: &BatchInput) -> Result<Outputs, ModelError> {
        input.check(&self.config)?;
        let mut cx = Cx { tape, vars };
        let fused = self.encode(&mut cx, input)?;
        let data = self.decode_data(&mut cx, fused.data, input)?;
        let logits = match (&fused.sym, self.sym_dec.is_some() && input.dec_len > 0) {
            (Some(s), true) => Some(self.decode_symbols(
                &mut cx,
                *s,
                &fused.sym_valid,
                &input.dec_tokens,
                input.batch,
                input.dec_len,
            )?),
            _ => None,
        };
        Ok(Outputs { data, logits })
    }

    /// Data predictions `[B][Q][nx]` without recording gradients.
    pub fn predict<T: Real>(&self, params: &ParamStore<T>, input: &BatchInput) -> Result<Vec<f64>, ModelError> {
        input.check(&self.config)?;
        let mut tape = Tape::new();
        let vars = params.load_frozen(&mut tape);
        let mut cx = Cx { tape: &mut tape, vars: &vars };
        let fused = self.encode(&mut cx, input)?;
        let out = self.decode_data(&mut cx, fused.data, input)?;
        Ok(tape.value(out).to_f64())
    }

    /// Data predictions plus greedy symbol generation from SOS.
    pub fn predict_with_symbols<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &BatchInput,
    ) -> Result<(Vec<f64>, Vec<Decoded>), ModelError> {
        if self.sym_dec.is_none() {
            return Err(ModelError::MissingBlock(self.config.mode, "symbol decoder"));
        }
        input.check(&self.config)?;
        let mut tape = Tape::new();
        let vars = params.load_frozen(&mut tape);
        let mut cx = Cx { tape: &mut tape, vars: &vars };
        let fused = self.encode(&mut cx, input)?;
        let out = self.decode_data(&mut cx, fused.data, input)?;
        let data = tape.value(out).to_f64();
        let sym = tape.value(fused.sym.expect("symbol input present")).clone();
        let decoded = self.greedy(params, &sym, &fused.sym_valid, input.batch)?;
        Ok((data, decoded))
    }

    fn greedy<T: Real>(
        &self,
        params: &ParamStore<T>,
        fused_sym: &Tensor<T>,
        sym_valid: &[bool],
        batch: usize,
    ) -> Result<Vec<Decoded>, ModelError> {
        let vocab = Vocab::global();
        let (sos, eos) = (vocab.sos_id(), vocab.eos_id());
        let v = self.config.vocab_size;
        let mut seqs: Vec<Vec<u16>> = vec![vec![sos]; batch];
        let mut done = vec![false; batch];
        while seqs[0].len() < self.config.max_symbol_len && done.iter().any(|d| !d) {
            let len = seqs[0].len();
            let flat: Vec<u16> = seqs.iter().flatten().copied().collect();
            let mut tape = Tape::new();
            let vars = params.load_frozen(&mut tape);
            let ctx = tape.constant(fused_sym.clone());
            let mut cx = Cx { tape: &mut tape, vars: &vars };
            let logits = self.decode_symbols(&mut cx, ctx, sym_valid, &flat, batch, len)?;
            let lv = tape.value(logits);
            for (i, seq) in seqs.iter_mut().enumerate() {
                let row = &lv.data[((i + 1) * len - 1) * v..(i + 1) * len * v];
                let next = if done[i] { eos } else { argmax(row) as u16 };
                done[i] |= next == eos;
                seq.push(next);
            }
        }
        Ok(seqs
            .into_iter()
            .map(|s| {
                let body: Vec<u16> = s[1..].iter().copied().take_while(|&t| t != eos).collect();
                let terminated = s[1..].contains(&eos);
                let expr = if terminated { decode_ids(vocab, &s).ok() } else { None };
                Decoded {
                    valid: expr.is_some(),
                    ids: body,
                    expr,
                }
            })
            .collect())
    }
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn ids_with_prefix<T: Real>(store: &ParamStore<T>, prefixes: &[&str]) -> Vec<ParamId> {
    (0..store.len())
        .map(ParamId)
        .filter(|&id| {
            let name = store.name(id);
            prefixes.iter().any(|p| name.split('.').next() == Some(*p))
        })
        .collect()
}
