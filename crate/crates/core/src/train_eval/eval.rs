use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{input_indices, make_batch, normalize_batch, BatchSpec, Dataset, Sample, SymbolInput};
use super::metrics::{r2_sample, relative_l2_sample, MetricReport, SampleOutcome};
use super::EvalError;
use crate::autodiff::ParamStore;
use crate::expr::{symbol_error, ExprError, PolyTestFn, SymbolGrid, Vocab};
use crate::model::{pad_sequences, BatchInput, Prose};
use crate::pde_zoo::{N_INPUT_STAMPS, N_TARGET_STAMPS};
use crate::solvers::{solve, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub n_in: usize,
    pub symbols: SymbolInput,
    pub batch_size: usize,
    /// Run greedy decoding (2-to-2 models only).
    pub decode: bool,
    /// Seed for the polynomial test functions of the symbol metric.
    pub poly_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_in: N_INPUT_STAMPS,
            symbols: SymbolInput::Skeleton,
            batch_size: 32,
            decode: true,
            poly_seed: 0,
        }
    }
}

fn symbol_outcome(sample: &Sample, decoded: &crate::model::Decoded, poly_seed: u64) -> (Option<f64>, bool) {
    let Some(pred) = &decoded.expr else {
        return (None, false);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(poly_seed ^ sample.index.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let p = PolyTestFn::random(&mut rng);
    match symbol_error(&sample.instance.to_expression(), pred, &p, &SymbolGrid::default()) {
        Ok(e) => (Some(100.0 * e), false),
        Err(ExprError::DegenerateMetric(_)) => (None, true),
        Err(_) => (None, false),
    }
}

fn eval_chunk(model: &Prose, params: &ParamStore<f32>, chunk: &[Sample], opts: &EvalOptions) -> Result<Vec<SampleOutcome>, EvalError> {
    let mode = model.config.mode;
    let refs: Vec<&Sample> = chunk.iter().collect();
    let spec = BatchSpec {
        n_in: opts.n_in,
        symbols: if mode.has_symbol_input() { opts.symbols } else { SymbolInput::None },
        symbol_targets: false,
    };
    let (input, stats) = make_batch(&refs, &spec);
    let decode = opts.decode && mode.has_symbol_output();
    let (mut pred, decoded) = if decode {
        let (p, d) = model.predict_with_symbols(params, &input)?;
        (p, Some(d))
    } else {
        (model.predict(params, &input)?, None)
    };
    let m = N_TARGET_STAMPS * input.nx;
    let mut out = Vec::with_capacity(chunk.len());
    for (b, s) in chunk.iter().enumerate() {
        let p = &mut pred[b * m..(b + 1) * m];
        stats[b].invert(p);
        let target: Vec<f64> = s.targets().iter().map(|&v| v as f64).collect();
        let (valid, symbol_error, degenerate) = match &decoded {
            Some(d) => {
                let (e, deg) = symbol_outcome(s, &d[b], opts.poly_seed);
                (Some(d[b].valid), e, deg)
            }
            None => (None, None, false),
        };
        out.push(SampleOutcome {
            family: s.family(),
            rel_l2: relative_l2_sample(p, &target),
            r2: r2_sample(p, &target),
            valid,
            symbol_error,
            degenerate_symbol: degenerate,
        });
    }
    Ok(out)
}

/// Scores `params` on every sample of `data`. Chunks run in parallel; the
/// result does not depend on the worker count.
pub fn evaluate(
    model: &Prose,
    params: &ParamStore<f32>,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<(MetricReport, Vec<SampleOutcome>), EvalError> {
    let chunks: Vec<Result<Vec<SampleOutcome>, EvalError>> = data
        .samples
        .par_chunks(opts.batch_size.max(1))
        .map(|c| eval_chunk(model, params, c, opts))
        .collect();
    let mut outcomes = Vec::with_capacity(data.samples.len());
    for c in chunks {
        outcomes.extend(c?);
    }
    Ok((MetricReport::from_outcomes(&outcomes), outcomes))
}

/// Longest rollout supported, in units of the final time.
pub const MAX_ROLLOUT_HORIZON: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub symbols: SymbolInput,
    pub batch_size: usize,
    /// Feed solver truth instead of predictions into each next window.
    pub oracle: bool,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            symbols: SymbolInput::Known,
            batch_size: 32,
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowError {
    pub window: usize,
    /// Physical time span of the window's predictions, as fractions of `t_f`.
    pub start: f64,
    pub end: f64,
    pub rel_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    /// End time as a multiple of each instance's final time.
    pub t_end: f64,
    /// Mean relative L2 (%) over the stamps in `(t_f, t_end]`, or the plain
    /// test error when `t_end` equals `t_f`.
    pub rel_l2: f64,
    pub windows: Vec<WindowError>,
}

fn input_taus() -> Vec<f64> {
    input_indices(N_INPUT_STAMPS)
        .iter()
        .map(|&i| 0.5 * i as f64 / (N_INPUT_STAMPS - 1) as f64)
        .collect()
}

fn target_taus() -> Vec<f64> {
    (0..N_TARGET_STAMPS).map(|j| 0.5 + 0.5 * (j + 1) as f64 / N_TARGET_STAMPS as f64).collect()
}

/// Predicts raw values at `query` (model time) from raw `inputs` `[B][16·nx]`.
fn predict_window(
    model: &Prose,
    params: &ParamStore<f32>,
    samples: &[&Sample],
    inputs: &[f64],
    query: &[f64],
    symbols: SymbolInput,
) -> Result<Vec<f64>, EvalError> {
    let b = samples.len();
    let nx = samples[0].nx();
    let mut data = inputs.to_vec();
    let mut dummy = vec![0.0; b];
    let stats = normalize_batch(&mut data, &mut dummy, b);
    let sym: Vec<Vec<u16>> = match (model.config.mode.has_symbol_input(), symbols) {
        (true, SymbolInput::Known) => samples.iter().map(|s| s.equation.clone()).collect(),
        (true, SymbolInput::Skeleton) => samples.iter().map(|s| s.skeleton.clone()).collect(),
        _ => Vec::new(),
    };
    let (sym_tokens, sym_len) = pad_sequences(&sym, Vocab::global().pad_id());
    let taus = input_taus();
    let input = BatchInput {
        batch: b,
        n_in: N_INPUT_STAMPS,
        nx,
        data,
        in_times: (0..b).flat_map(|_| taus.iter().copied()).collect(),
        sym_len,
        sym_tokens,
        n_query: query.len(),
        query_times: (0..b).flat_map(|_| query.iter().copied()).collect(),
        ..Default::default()
    };
    let mut pred = model.predict(params, &input)?;
    let m = query.len() * nx;
    for (i, s) in stats.iter().enumerate() {
        s.invert(&mut pred[i * m..(i + 1) * m]);
    }
    Ok(pred)
}

/// Rows of a fresh solve at `(window·0.5 + τ)·t_f` for each requested pair.
fn truth(sample: &Sample, stamps: &[f64]) -> Result<Vec<f64>, EvalError> {
    let tf = sample.instance.t_final;
    let times: Vec<f64> = stamps.iter().map(|s| s * tf).collect();
    let traj = solve(&sample.instance.with_times(times), &SolveConfig::for_family(sample.family()))?;
    Ok(traj.values)
}

/// Feeds predictions on `[t_f/2, t_f]` back as inputs, window after window,
/// and scores the rollout against solver truth up to `t_end·t_f`.
pub fn run_time_marching(
    model: &Prose,
    params: &ParamStore<f32>,
    data: &Dataset,
    t_end: f64,
    opts: &RolloutOptions,
) -> Result<RolloutReport, EvalError> {
    if !(1.0..=MAX_ROLLOUT_HORIZON).contains(&t_end) {
        return Err(EvalError::Config(format!(
            "rollout end {t_end}·t_f outside [1, {MAX_ROLLOUT_HORIZON}]"
        )));
    }
    if data.spec.target_offset != 1.0 {
        return Err(EvalError::Config("time marching needs the default target grid".into()));
    }
    // Window k covers model times shifted by k/2; it predicts (k/2 + 1/2, k/2 + 1].
    let n_windows = ((t_end - 1.0) / 0.5 - 1e-12).ceil().max(0.0) as usize;
    let (in_t, out_t) = (input_taus(), target_taus());
    let nx = data.samples.first().map(|s| s.nx()).unwrap_or(0);

    let per_chunk: Vec<Result<(Vec<f64>, Vec<Vec<f64>>), EvalError>> = data
        .samples
        .par_chunks(opts.batch_size.max(1))
        .map(|chunk| {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let b = refs.len();
            // Absolute stamps (in units of t_f) needed for truth.
            let mut stamps: Vec<f64> = in_t.iter().chain(&out_t).copied().collect();
            for k in 1..=n_windows {
                let s = 0.5 * k as f64;
                stamps.extend(in_t.iter().map(|t| s + t));
                stamps.extend(out_t.iter().map(|t| s + t));
            }
            let truths: Vec<Vec<f64>> = if n_windows > 0 {
                refs.iter().map(|s| truth(s, &stamps)).collect::<Result<_, _>>()?
            } else {
                Vec::new()
            };
            let row_of = |stamp_idx: usize, b: usize| &truths[b][stamp_idx * nx..(stamp_idx + 1) * nx];
            let stride = in_t.len() + out_t.len();

            // Window 0 uses the stored (possibly noisy) inputs.
            let mut inputs: Vec<f64> = refs.iter().flat_map(|s| s.inputs.iter().map(|&v| v as f64)).collect();
            let mut errors = vec![Vec::new(); n_windows + 1];
            let mut rollout_sq = vec![(0.0, 0.0); b];
            for (k, errs) in errors.iter_mut().enumerate() {
                let mut query: Vec<f64> = out_t.clone();
                if k < n_windows {
                    query.extend(in_t.iter().map(|t| t + 0.5));
                }
                let pred = predict_window(model, params, &refs, &inputs, &query, opts.symbols)?;
                let q = query.len();
                let mut next = Vec::with_capacity(b * in_t.len() * nx);
                for (i, s) in refs.iter().enumerate() {
                    let p = &pred[i * q * nx..(i + 1) * q * nx];
                    let (pt, pn) = p.split_at(out_t.len() * nx);
                    let target: Vec<f64> = if k == 0 {
                        s.targets().iter().map(|&v| v as f64).collect()
                    } else {
                        (0..out_t.len()).flat_map(|j| row_of(k * stride + in_t.len() + j, i).to_vec()).collect()
                    };
                    errs.push(relative_l2_sample(pt, &target).unwrap_or(f64::NAN));
                    if k > 0 {
                        for (j, t) in out_t.iter().enumerate() {
                            if 0.5 * k as f64 + t <= t_end + 1e-12 {
                                let row = j * nx..(j + 1) * nx;
                                rollout_sq[i].0 += pt[row.clone()].iter().zip(&target[row.clone()]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                                rollout_sq[i].1 += target[row].iter().map(|v| v * v).sum::<f64>();
                            }
                        }
                    }
                    if k < n_windows {
                        if opts.oracle {
                            for r in 0..in_t.len() {
                                next.extend_from_slice(row_of((k + 1) * stride + r, i));
                            }
                        } else {
                            next.extend_from_slice(pn);
                        }
                    }
                }
                inputs = next;
            }
            let rollout: Vec<f64> = if n_windows == 0 {
                errors[0].clone()
            } else {
                rollout_sq.iter().map(|(num, den)| 100.0 * (num / den).sqrt()).collect()
            };
            Ok((rollout, errors))
        })
        .collect();

    let mut rollout = Vec::new();
    let mut windows = vec![Vec::new(); n_windows + 1];
    for r in per_chunk {
        let (e, w) = r?;
        rollout.extend(e);
        for (dst, src) in windows.iter_mut().zip(w) {
            dst.extend(src);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(RolloutReport {
        t_end,
        rel_l2: mean(&rollout),
        windows: windows
            .iter()
            .enumerate()
            .map(|(k, e)| WindowError {
                window: k,
                start: 0.5 * k as f64 + 0.5,
                end: 0.5 * k as f64 + 1.0,
                rel_l2: mean(e),
            })
            .collect(),
    })
}
