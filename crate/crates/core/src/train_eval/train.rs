use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{make_batch, BatchSpec, Dataset, Sample, SymbolInput};
use super::EvalError;
use crate::autodiff::{AdamW, AdamWConfig, ParamStore, Real, Tape, Var};
use crate::expr::Vocab;
use crate::model::{BatchInput, Mode, Prose};

/// `ℒ = α·ℒ_data + β·ℒ_symbol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 5.0, beta: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.alpha < 0.0 || self.beta < 0.0 || (self.alpha == 0.0 && self.beta == 0.0) {
            return Err(EvalError::Config(format!(
                "loss weights must be non-negative and not both zero, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Loss nodes of one pass.
pub struct LossVars {
    pub total: Var,
    pub data: Var,
    pub symbol: Option<Var>,
}

/// Builds the weighted loss on `tape` from a forward pass over `input`.
pub fn loss<T: Real>(
    model: &Prose,
    tape: &mut Tape<T>,
    vars: &[Var],
    input: &BatchInput,
    weights: LossWeights,
) -> Result<LossVars, EvalError> {
    let out = model.forward(tape, vars, input)?;
    let target: Vec<T> = input.data_target.iter().map(|&v| T::lit(v)).collect();
    let data = tape.mse(out.data, &target)?;
    let weighted = tape.scale(data, T::lit(weights.alpha));
    match out.logits {
        Some(logits) => {
            let labels: Vec<usize> = input.token_target.iter().map(|&t| t as usize).collect();
            let pad = Vocab::global().pad_id() as usize;
            let sym = tape.cross_entropy(logits, &labels, Some(pad))?;
            let ws = tape.scale(sym, T::lit(weights.beta));
            let total = tape.add(weighted, ws)?;
            Ok(LossVars {
                total,
                data,
                symbol: Some(sym),
            })
        }
        None => Ok(LossVars {
            total: weighted,
            data,
            symbol: None,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub n_in: usize,
    pub symbols: SymbolInput,
    /// Record the running loss every this many steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 10_000,
            batch_size: 8,
            optimizer: AdamWConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            n_in: 16,
            symbols: SymbolInput::Skeleton,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    /// Default schedule with the learning rate raised to 1e-3, which the small
    /// desk model needs to converge within 10k steps.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.optimizer.lr = 1e-3;
        c
    }

    pub fn batch_spec(&self, mode: Mode) -> BatchSpec {
        BatchSpec {
            n_in: self.n_in,
            symbols: if mode.has_symbol_input() { self.symbols } else { SymbolInput::None },
            symbol_targets: mode.has_symbol_output(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub data: f64,
    pub symbol: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Means over each logging window.
    pub records: Vec<LossRecord>,
}

/// Epoch-shuffled minibatches, deterministic for a seed.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Batcher {
            order: (0..n).collect(),
            pos: n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        b.order.shuffle(&mut b.rng);
        b.pos = 0;
        b
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Trains `params` in place. Single-threaded and deterministic for a seed.
pub fn train(
    model: &Prose,
    params: &mut ParamStore<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog, EvalError> {
    cfg.weights.validate()?;
    if data.samples.is_empty() || cfg.batch_size == 0 {
        return Err(EvalError::Config("empty dataset or zero batch size".into()));
    }
    let mut opt_cfg = cfg.optimizer.clone();
    opt_cfg.total_steps = cfg.steps;
    let mut opt = AdamW::new(opt_cfg, params);
    let spec = cfg.batch_spec(model.config.mode);
    let mut batcher = Batcher::new(data.samples.len(), cfg.seed);
    let mut log = TrainLog::default();
    let mut acc = (0.0, 0.0, 0.0, 0.0, 0usize);
    for step in 0..cfg.steps {
        let idx = batcher.next(cfg.batch_size);
        let samples: Vec<&Sample> = idx.iter().map(|&i| &data.samples[i]).collect();
        let (input, _) = make_batch(&samples, &spec);
        let mut tape = Tape::<f32>::new();
        let vars = params.load(&mut tape);
        let l = loss(model, &mut tape, &vars, &input, cfg.weights)?;
        let total = tape.value(l.total).data[0] as f64;
        if !total.is_finite() {
            return Err(EvalError::Diverged { step, loss: total });
        }
        acc.0 += total;
        acc.1 += tape.value(l.data).data[0] as f64;
        if let Some(s) = l.symbol {
            acc.2 += tape.value(s).data[0] as f64;
        }
        let mut g = tape.backward(l.total)?;
        let mut grads = params.collect_grads(&vars, &mut g);
        let lr = opt.config.lr_at(opt.step);
        acc.3 += opt.step(params, &mut grads);
        acc.4 += 1;
        if acc.4 == cfg.log_every.max(1) || step + 1 == cfg.steps {
            let n = acc.4 as f64;
            let rec = LossRecord {
                step: step + 1,
                lr,
                total: acc.0 / n,
                data: acc.1 / n,
                symbol: l.symbol.map(|_| acc.2 / n),
                grad_norm: acc.3 / n,
            };
            log::info!(
                "step {} loss {:.4} data {:.4} symbol {:?} |g| {:.3}",
                rec.step,
                rec.total,
                rec.data,
                rec.symbol,
                rec.grad_norm
            );
            log.records.push(rec);
            acc = (0.0, 0.0, 0.0, 0.0, 0);
        }
    }
    Ok(log)
}
