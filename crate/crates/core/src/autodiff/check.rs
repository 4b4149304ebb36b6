use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{Tape, Var};
use super::optim::ParamStore;
use super::AdError;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest per-coordinate relative error.
    pub max_rel: f64,
    /// `(param index, flat index, analytic, numeric)` for every probe.
    pub probes: Vec<(usize, usize, f64, f64)>,
}

/// Relative difference with a floor on the denominator, so coordinates whose
/// true gradient is zero are judged on absolute error.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h`. Checks every coordinate, or `probes = Some((count, seed))`
/// coordinates drawn uniformly from all parameters.
pub fn gradcheck<F>(params: &ParamStore<f64>, f: F, h: f64, probes: Option<(usize, u64)>) -> Result<GradCheck, AdError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, AdError>,
{
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let loss = f(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic = params.collect_grads(&vars, &mut grads);

    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, (_, t)| {
            let o = *acc;
            *acc += t.len();
            Some(o)
        })
        .collect();
    let total = params.numel();
    let flat: Vec<usize> = match probes {
        Some((count, seed)) if count < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = sample(&mut rng, total, count).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..total).collect(),
    };

    let eval = |p: &ParamStore<f64>| -> Result<f64, AdError> {
        let mut tape = Tape::new();
        let vars = p.load(&mut tape);
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).data[0])
    };

    let mut work = params.clone();
    let mut out = GradCheck {
        max_rel: 0.0,
        probes: Vec::with_capacity(flat.len()),
    };
    for g in flat {
        let pi = offsets.partition_point(|&o| o <= g) - 1;
        let i = g - offsets[pi];
        let id = super::ParamId(pi);
        let orig = work.get(id).data[i];
        work.get_mut(id).data[i] = orig + h;
        let up = eval(&work)?;
        work.get_mut(id).data[i] = orig - h;
        let down = eval(&work)?;
        work.get_mut(id).data[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[pi][i];
        out.max_rel = out.max_rel.max(rel_diff(a, numeric, 1e-6));
        out.probes.push((pi, i, a, numeric));
    }
    Ok(out)
}
