//! Python bindings: PDE generation and solving, the symbol codec, metrics,
//! and a trainable model handle.

use std::path::PathBuf;

use prose_core::expr::{decode_ids, encode_ids, Vocab};
use prose_core::io::{load_checkpoint, save_checkpoint, RunConfig};
use prose_core::model::{Mode, ModelConfig, Prose};
use prose_core::pde_zoo::{nominal_instance, IcClass, PdeFamily, RiemannKind};
use prose_core::solvers::{solve as solve_instance, SolveConfig};
use prose_core::train_eval as te;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(id: &str) -> PyResult<PdeFamily> {
    id.parse().map_err(err)
}

fn ic_class(name: &str) -> PyResult<IcClass> {
    Ok(match name {
        "training" => IcClass::Training,
        "testing" => IcClass::Testing,
        "shock" => IcClass::Riemann(RiemannKind::Shock),
        "rarefaction" => IcClass::Riemann(RiemannKind::Rarefaction),
        "multi-shock" => IcClass::Riemann(RiemannKind::MultiShock),
        _ => return Err(PyValueError::new_err(format!("unknown IC class '{name}'"))),
    })
}

/// Ids of the twenty equation families.
#[pyfunction]
fn families() -> Vec<&'static str> {
    PdeFamily::ALL.iter().map(|f| f.id()).collect()
}

/// Solves a nominal instance; returns `(times, xs, rows)`.
#[pyfunction]
#[pyo3(signature = (family_id, seed=0))]
fn solve(family_id: &str, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let f = family(family_id)?;
    let traj = solve_instance(&nominal_instance(f, seed), &SolveConfig::for_family(f)).map_err(err)?;
    let rows = traj.values.chunks(traj.xs.len()).map(<[f64]>::to_vec).collect();
    Ok((traj.times, traj.xs, rows))
}

/// The residual expression of a nominal instance.
#[pyfunction]
#[pyo3(signature = (family_id, seed=0))]
fn equation(family_id: &str, seed: u64) -> PyResult<String> {
    Ok(nominal_instance(family(family_id)?, seed).to_expression().to_string())
}

/// Token ids (`SOS … EOS`) of a nominal instance's equation.
#[pyfunction]
#[pyo3(signature = (family_id, seed=0))]
fn encode(family_id: &str, seed: u64) -> PyResult<Vec<u16>> {
    let e = nominal_instance(family(family_id)?, seed).to_expression();
    encode_ids(Vocab::global(), &e).map_err(err)
}

/// Decodes token ids back to expression text.
#[pyfunction]
fn decode(ids: Vec<u16>) -> PyResult<String> {
    Ok(decode_ids(Vocab::global(), &ids).map_err(err)?.to_string())
}

#[pyfunction]
fn vocab_size() -> usize {
    Vocab::global().len()
}

/// Relative L2 error in percent for one sample.
#[pyfunction]
fn relative_l2(pred: Vec<f64>, target: Vec<f64>) -> PyResult<Option<f64>> {
    if pred.len() != target.len() {
        return Err(PyValueError::new_err("length mismatch"));
    }
    Ok(te::relative_l2_sample(&pred, &target))
}

#[pyfunction]
fn r2_score(pred: Vec<f64>, target: Vec<f64>) -> PyResult<Option<f64>> {
    if pred.len() != target.len() {
        return Err(PyValueError::new_err("length mismatch"));
    }
    Ok(te::r2_sample(&pred, &target))
}

/// Operator similarity in percent on shared initial conditions.
#[pyfunction]
#[pyo3(signature = (target, other, ic="rarefaction", n=10, seed=0))]
fn similarity(target: &str, other: &str, ic: &str, n: usize, seed: u64) -> PyResult<f64> {
    te::similarity(family(target)?, family(other)?, ic_class(ic)?, n, seed).map_err(err)
}

/// A generated dataset.
#[pyclass(frozen)]
struct Dataset {
    inner: te::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (families, per_family, seed=0, noise=0.0, ic="training"))]
    fn new(families: Vec<String>, per_family: usize, seed: u64, noise: f64, ic: &str) -> PyResult<Self> {
        let class = ic_class(ic)?;
        let parts = families
            .iter()
            .map(|f| Ok(te::GenPart::new(family(f)?, per_family).with_ic(class)))
            .collect::<PyResult<Vec<_>>>()?;
        let mut spec = te::GenSpec::new(parts, seed);
        spec.noise = noise;
        Ok(Dataset {
            inner: te::generate(&spec).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }

    /// Clean trajectory of sample `i` as `[32][nx]` rows.
    fn trajectory(&self, i: usize) -> PyResult<Vec<Vec<f32>>> {
        let s = self.inner.samples.get(i).ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok(s.values.chunks(s.nx()).map(<[f32]>::to_vec).collect())
    }

    fn family(&self, i: usize) -> PyResult<&'static str> {
        let s = self.inner.samples.get(i).ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok(s.family().id())
    }

    fn times(&self, i: usize) -> PyResult<Vec<f64>> {
        let s = self.inner.samples.get(i).ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok(s.instance.times.clone())
    }
}

/// A model with its parameters and run config.
#[pyclass]
struct Model {
    model: Prose,
    params: prose_core::autodiff::ParamStore<f32>,
    config: RunConfig,
}

#[pymethods]
impl Model {
    /// `d_model` below the desk default gives a faster toy model.
    #[new]
    #[pyo3(signature = (mode="2to2", seed=0, d_model=None))]
    fn new(mode: &str, seed: u64, d_model: Option<usize>) -> PyResult<Self> {
        let mode: Mode = mode.parse().map_err(err)?;
        let mut config = RunConfig::default();
        config.mode = mode;
        config.seed = seed;
        let mut mc = ModelConfig::desk(mode);
        if let Some(d) = d_model {
            mc.d_model = d;
            mc.ffn = 4 * d;
        }
        let (model, params) = Prose::init::<f32>(mc, seed).map_err(err)?;
        Ok(Model { model, params, config })
    }

    fn num_parameters(&self) -> usize {
        self.params.numel()
    }

    /// Trains in place; returns the logged mean total loss per window.
    #[pyo3(signature = (data, steps=100, lr=1e-3, batch_size=8))]
    fn train(&mut self, py: Python<'_>, data: &Dataset, steps: usize, lr: f64, batch_size: usize) -> PyResult<Vec<f64>> {
        let mut cfg = te::TrainConfig::desk();
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.optimizer.lr = lr;
        cfg.seed = self.config.seed;
        cfg.log_every = (steps / 20).max(1);
        self.config.train = cfg.clone();
        let (model, params) = (&self.model, &mut self.params);
        let log = py.detach(|| te::train(model, params, &data.inner, &cfg)).map_err(err)?;
        Ok(log.records.iter().map(|r| r.total).collect())
    }

    /// Metrics on `data`: `rel_l2`, `r2` and, for 2-to-2 models, `valid`.
    fn evaluate<'py>(&self, py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let opts = te::EvalOptions {
            decode: self.model.config.mode.has_symbol_output(),
            ..Default::default()
        };
        let (r, _) = py
            .detach(|| te::evaluate(&self.model, &self.params, &data.inner, &opts))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("rel_l2", r.rel_l2())?;
        d.set_item("r2", r.r2())?;
        if let Some(v) = r.overall.valid_fraction {
            d.set_item("valid", v)?;
        }
        Ok(d)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.model, &self.params, &self.config, None).map_err(err)?;
        Ok(())
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = load_checkpoint(&path, None).map_err(err)?;
        let config = RunConfig::from_toml(&ck.manifest.run_config).map_err(err)?;
        Ok(Model {
            model: ck.model,
            params: ck.params,
            config,
        })
    }
}

#[pymodule]
fn prose_pde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(families, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(equation, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(vocab_size, m)?)?;
    m.add_function(wrap_pyfunction!(relative_l2, m)?)?;
    m.add_function(wrap_pyfunction!(r2_score, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}
