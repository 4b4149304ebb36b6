use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::expr::{encode_ids, Vocab};
use crate::model::{pad_sequences, BatchInput};
use crate::pde_zoo::{
    instance_rng, sample_ic, sample_instance, IcClass, ParamRange, PdeFamily, PdeInstance, N_INPUT_STAMPS,
    N_TARGET_STAMPS,
};
use crate::solvers::{add_noise, solve, SolveConfig, Trajectory};

/// Attempts per instance before generation gives up.
pub const MAX_RESAMPLES: u64 = 8;

/// One block of instances drawn from a single family and IC class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPart {
    pub family: PdeFamily,
    pub count: usize,
    pub ic: IcClass,
    pub range: ParamRange,
}

impl GenPart {
    pub fn new(family: PdeFamily, count: usize) -> Self {
        GenPart {
            family,
            count,
            ic: IcClass::Training,
            range: ParamRange::training(),
        }
    }

    pub fn with_ic(mut self, ic: IcClass) -> Self {
        self.ic = ic;
        self
    }

    pub fn with_range(mut self, range: ParamRange) -> Self {
        self.range = range;
        self
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub parts: Vec<GenPart>,
    pub seed: u64,
    /// Additive input noise relative to each trajectory's standard deviation.
    pub noise: f64,
    /// Target stamps sit at `t_f/2 + (j + target_offset)/16 · t_f/2`; the
    /// default grid uses 1, a midpoint grid 0.5.
    pub target_offset: f64,
    /// Draw the IC once per index and share it across all parts.
    pub shared_ics: bool,
}

impl GenSpec {
    pub fn new(parts: Vec<GenPart>, seed: u64) -> Self {
        GenSpec {
            parts,
            seed,
            noise: 0.0,
            target_offset: 1.0,
            shared_ics: false,
        }
    }

    pub fn families(families: &[PdeFamily], per_family: usize, seed: u64) -> Self {
        Self::new(families.iter().map(|&f| GenPart::new(f, per_family)).collect(), seed)
    }

    pub fn total(&self) -> usize {
        self.parts.iter().map(|p| p.count).sum()
    }
}

/// Stamp times for a final time: 16 inputs on `[0, t_f/2]` and 16 targets.
pub fn stamp_times(t_final: f64, target_offset: f64) -> Vec<f64> {
    let half = 0.5 * t_final;
    let mut t: Vec<f64> = (0..N_INPUT_STAMPS).map(|i| half * i as f64 / (N_INPUT_STAMPS - 1) as f64).collect();
    t.extend((0..N_TARGET_STAMPS).map(|j| half + half * (j as f64 + target_offset) / N_TARGET_STAMPS as f64));
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Stream index used to draw the instance.
    pub index: u64,
    pub instance: PdeInstance,
    /// Clean trajectory `[32][nx]`.
    pub values: Vec<f32>,
    /// Model input snapshots `[16][nx]`, noisy when the spec asks for noise.
    pub inputs: Vec<f32>,
    /// `SOS … EOS` ids of the full equation.
    pub equation: Vec<u16>,
    /// Same with every constant replaced by the placeholder.
    pub skeleton: Vec<u16>,
}

impl Sample {
    pub fn nx(&self) -> usize {
        self.instance.nx
    }

    pub fn family(&self) -> PdeFamily {
        self.instance.family
    }

    pub fn targets(&self) -> &[f32] {
        &self.values[N_INPUT_STAMPS * self.nx()..]
    }

    pub fn target_times(&self) -> &[f64] {
        &self.instance.times[N_INPUT_STAMPS..]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    /// Solver failures that forced a redraw.
    pub solver_failures: usize,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: GenSpec,
    pub samples: Vec<Sample>,
    pub report: GenReport,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn draw_instance(part: &GenPart, spec: &GenSpec, stream: u64, ic_stream: u64) -> Result<PdeInstance, EvalError> {
    let mut rng = instance_rng(spec.seed, stream);
    let mut inst = sample_instance(part.family, &part.range, part.ic, &mut rng)?;
    if spec.shared_ics {
        let mut ic_rng = instance_rng(spec.seed ^ 0x5eed_1c, ic_stream);
        inst.ic = sample_ic(part.family, part.ic, &mut ic_rng);
    }
    inst.times = stamp_times(inst.t_final, spec.target_offset);
    Ok(inst)
}

/// Builds a sample from an already-solved trajectory.
pub fn sample_from_trajectory(index: u64, traj: &Trajectory, noise: f64, noise_seed: u64) -> Result<Sample, EvalError> {
    let vocab = Vocab::global();
    let expr = traj.instance.to_expression();
    let equation = encode_ids(vocab, &expr)?;
    let skeleton = encode_ids(vocab, &expr.skeletonize())?;
    let noisy = add_noise(traj, noise, noise_seed);
    Ok(Sample {
        index,
        instance: traj.instance.clone(),
        values: to_f32(&traj.values),
        inputs: to_f32(noisy.input_rows()),
        equation,
        skeleton,
    })
}

/// Generates one sample; redraws on solver failure. Results depend only on
/// `(spec, index)`, never on scheduling.
fn generate_one(spec: &GenSpec, part: &GenPart, index: u64, local: u64) -> Result<(Sample, usize), EvalError> {
    let mut failures = 0;
    for attempt in 0..MAX_RESAMPLES {
        let stream = index | (attempt << 40);
        let inst = draw_instance(part, spec, stream, local | (attempt << 40))?;
        match solve(&inst, &SolveConfig::for_family(part.family)) {
            Ok(traj) => {
                let noise_seed = spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream;
                return Ok((sample_from_trajectory(index, &traj, spec.noise, noise_seed)?, failures));
            }
            Err(e) => {
                log::warn!("{} instance {index} attempt {attempt}: {e}", part.family);
                failures += 1;
            }
        }
    }
    Err(EvalError::Generation(format!(
        "{} instance {index}: {MAX_RESAMPLES} failed attempts",
        part.family
    )))
}

/// Solves every instance of `spec` in parallel.
pub fn generate(spec: &GenSpec) -> Result<Dataset, EvalError> {
    let mut jobs = Vec::with_capacity(spec.total());
    let mut index = 0u64;
    for part in &spec.parts {
        for local in 0..part.count as u64 {
            jobs.push((part, index, local));
            index += 1;
        }
    }
    let results: Vec<Result<(Sample, usize), EvalError>> = jobs
        .par_iter()
        .map(|&(part, index, local)| generate_one(spec, part, index, local))
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut report = GenReport::default();
    for r in results {
        let (s, fails) = r?;
        report.solver_failures += fails;
        report.resamples += fails;
        samples.push(s);
    }
    Ok(Dataset {
        spec: spec.clone(),
        samples,
        report,
    })
}

/// Per-sample affine normalization from the input snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Mean and standard deviation of `inputs`; a spread below 1e-12 is
    /// replaced by 1.
    pub fn of(inputs: &[f64]) -> Self {
        let n = inputs.len() as f64;
        let mean = inputs.iter().sum::<f64>() / n;
        let var = inputs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        NormStats {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = (*x - self.mean) / self.std);
    }

    pub fn invert(&self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = *x * self.std + self.mean);
    }
}

/// Normalizes each sample's inputs and labels by the inputs' statistics.
/// `inputs` is `[B][n_in·nx]`, `labels` `[B][m]`.
pub fn normalize_batch(inputs: &mut [f64], labels: &mut [f64], batch: usize) -> Vec<NormStats> {
    let ni = inputs.len() / batch.max(1);
    let nl = labels.len() / batch.max(1);
    (0..batch)
        .map(|b| {
            let s = NormStats::of(&inputs[b * ni..(b + 1) * ni]);
            s.apply(&mut inputs[b * ni..(b + 1) * ni]);
            s.apply(&mut labels[b * nl..(b + 1) * nl]);
            s
        })
        .collect()
}

/// Which symbol sequence the encoder sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolInput {
    Known,
    Skeleton,
    None,
}

/// Indices of `n_in` input stamps spread evenly over the 16 available.
pub fn input_indices(n_in: usize) -> Vec<usize> {
    assert!((1..=N_INPUT_STAMPS).contains(&n_in), "input stamp count {n_in}");
    if n_in == 1 {
        return vec![0];
    }
    (0..n_in)
        .map(|i| ((i * (N_INPUT_STAMPS - 1)) as f64 / (n_in - 1) as f64).round() as usize)
        .collect()
}

/// What a batch carries besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSpec {
    pub n_in: usize,
    pub symbols: SymbolInput,
    /// Fill the teacher-forcing fields with the full equation.
    pub symbol_targets: bool,
}

/// Time as seen by the model: fraction of the instance's final time.
pub fn model_time(t: f64, t_final: f64) -> f64 {
    t / t_final
}

/// Assembles a normalized batch. Query times are the samples' target stamps.
pub fn make_batch(samples: &[&Sample], spec: &BatchSpec) -> (BatchInput, Vec<NormStats>) {
    let b = samples.len();
    let nx = samples[0].nx();
    let idx = input_indices(spec.n_in);
    let mut data = Vec::with_capacity(b * spec.n_in * nx);
    let mut in_times = Vec::with_capacity(b * spec.n_in);
    let mut labels = Vec::with_capacity(b * N_TARGET_STAMPS * nx);
    let mut query_times = Vec::with_capacity(b * N_TARGET_STAMPS);
    for s in samples {
        let tf = s.instance.t_final;
        for &i in &idx {
            data.extend(s.inputs[i * nx..(i + 1) * nx].iter().map(|&v| v as f64));
            in_times.push(model_time(s.instance.times[i], tf));
        }
        labels.extend(s.targets().iter().map(|&v| v as f64));
        query_times.extend(s.target_times().iter().map(|&t| model_time(t, tf)));
    }
    let stats = normalize_batch(&mut data, &mut labels, b);
    let pad = Vocab::global().pad_id();
    let sym: Vec<Vec<u16>> = match spec.symbols {
        SymbolInput::Known => samples.iter().map(|s| s.equation.clone()).collect(),
        SymbolInput::Skeleton => samples.iter().map(|s| s.skeleton.clone()).collect(),
        SymbolInput::None => Vec::new(),
    };
    let (sym_tokens, sym_len) = pad_sequences(&sym, pad);
    let mut input = BatchInput {
        batch: b,
        n_in: spec.n_in,
        nx,
        data,
        in_times,
        sym_len,
        sym_tokens,
        n_query: N_TARGET_STAMPS,
        query_times,
        data_target: labels,
        ..Default::default()
    };
    if spec.symbol_targets {
        let targets: Vec<Vec<u16>> = samples.iter().map(|s| s.equation.clone()).collect();
        input.set_symbol_targets(&targets, pad);
    }
    (input, stats)
}
