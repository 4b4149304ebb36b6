//! Reference solvers that turn a sampled instance into a 32×128 trajectory.

mod fp;
mod fv;
mod mol;
mod spectral;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pde_zoo::{
    nominal_instance, Backend, Boundary, IcSpec, InitialCondition, PdeFamily, PdeInstance, ZooError, N_INPUT_STAMPS,
};

pub use fv::FvSolver;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite value at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("{family} is solved by {expected:?}, config asks for {got:?}")]
    BackendMismatch {
        family: PdeFamily,
        expected: Backend,
        got: Backend,
    },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Ic(#[from] ZooError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Downsample {
    /// Take every r-th internal node.
    Pointwise,
    /// Average the fine cells overlapping each output cell.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub backend: Backend,
    /// Internal spatial resolution; a multiple of the output resolution.
    pub nx_int: usize,
    /// Lower bound on internal steps between consecutive output stamps.
    pub min_substeps: usize,
    /// Fraction of the stability limit used for each step.
    pub cfl: f64,
    pub downsample: Downsample,
    pub max_steps: usize,
}

impl SolveConfig {
    pub fn for_family(family: PdeFamily) -> Self {
        let backend = family.backend();
        let (nx_int, cfl, downsample) = match backend {
            Backend::FiniteVolume => (512, 0.4, Downsample::Conservative),
            _ => (256, 0.5, Downsample::Pointwise),
        };
        SolveConfig {
            backend,
            nx_int,
            min_substeps: 1,
            cfl,
            downsample,
            max_steps: 2_000_000,
        }
    }

    pub fn with_nx(mut self, nx_int: usize) -> Self {
        self.nx_int = nx_int;
        self
    }

    pub fn validate(&self, nx_out: usize) -> Result<(), SolverError> {
        if self.nx_int < 256 || self.nx_int < 2 * nx_out {
            return Err(SolverError::InvalidConfig(format!("nx_int {} below 256", self.nx_int)));
        }
        if self.nx_int % nx_out != 0 {
            return Err(SolverError::InvalidConfig(format!(
                "nx_int {} not a multiple of {nx_out}",
                self.nx_int
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::InvalidConfig(format!("cfl {}", self.cfl)));
        }
        if self.min_substeps == 0 {
            return Err(SolverError::InvalidConfig("min_substeps must be positive".into()));
        }
        Ok(())
    }
}

/// Solution values on the instance grids, row-major `[time][space]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance: PdeInstance,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub noisy: bool,
}

impl Trajectory {
    pub fn nt(&self) -> usize {
        self.times.len()
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[i * nx..(i + 1) * nx]
    }

    pub fn input_rows(&self) -> &[f64] {
        &self.values[..N_INPUT_STAMPS.min(self.nt()) * self.nx()]
    }

    pub fn target_rows(&self) -> &[f64] {
        &self.values[N_INPUT_STAMPS.min(self.nt()) * self.nx()..]
    }

    pub fn std(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// One explicit or semi-implicit time integrator on the internal grid.
trait Stepper {
    /// Largest stable step for the current state.
    fn max_dt(&self) -> f64;
    fn step(&mut self, dt: f64);
    /// Current solution on the internal grid.
    fn snapshot(&self) -> Vec<f64>;
    fn is_finite(&self) -> bool;
}

/// Advances `stepper` through `times`, landing exactly on every stamp.
fn march(
    stepper: &mut dyn Stepper,
    times: &[f64],
    cfg: &SolveConfig,
) -> Result<(Vec<Vec<f64>>, SolveStats), SolverError> {
    let mut out = Vec::with_capacity(times.len());
    let mut stats = SolveStats {
        steps: 0,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
    };
    let mut t = times.first().copied().unwrap_or(0.0).min(0.0);
    for &target in times {
        let interval = target - t;
        let cap = interval / cfg.min_substeps as f64;
        while t < target {
            let remaining = target - t;
            let limit = stepper.max_dt().min(cap);
            let n = (remaining / limit).ceil().max(1.0);
            let dt = remaining / n;
            stepper.step(dt);
            stats.steps += 1;
            stats.min_dt = stats.min_dt.min(dt);
            stats.max_dt = stats.max_dt.max(dt);
            t = if n <= 1.0 { target } else { t + dt };
            if !stepper.is_finite() {
                return Err(SolverError::NonFinite {
                    step: stats.steps,
                    time: t,
                });
            }
            if stats.steps >= cfg.max_steps {
                return Err(SolverError::TooManySteps(cfg.max_steps));
            }
        }
        out.push(stepper.snapshot());
    }
    Ok((out, stats))
}

fn downsample(fine: &[f64], nx_out: usize, policy: Downsample, boundary: Boundary) -> Vec<f64> {
    let n = fine.len();
    let r = n / nx_out;
    match policy {
        Downsample::Pointwise => (0..nx_out).map(|j| fine[j * r]).collect(),
        Downsample::Conservative => {
            let idx = |i: isize| -> f64 {
                match boundary {
                    Boundary::Periodic => fine[i.rem_euclid(n as isize) as usize],
                    _ => fine[i.clamp(0, n as isize - 1) as usize],
                }
            };
            // Output cell j is centered on fine node j·r; with r even its
            // edges bisect the two end cells.
            let half = (r / 2) as isize;
            (0..nx_out)
                .map(|j| {
                    let c = (j * r) as isize;
                    if r % 2 == 0 {
                        let inner: f64 = (c - half + 1..c + half).map(idx).sum();
                        (inner + 0.5 * idx(c - half) + 0.5 * idx(c + half)) / r as f64
                    } else {
                        (c - half..=c + half).map(idx).sum::<f64>() / r as f64
                    }
                })
                .collect()
        }
    }
}

/// Solves `inst` and samples the solution on its output grids.
pub fn solve(inst: &PdeInstance, cfg: &SolveConfig) -> Result<Trajectory, SolverError> {
    let (traj, stats) = solve_with_stats(inst, cfg)?;
    log::debug!(
        "solved {} nx_int={} steps={} dt=[{:.3e}, {:.3e}]",
        inst.family,
        cfg.nx_int,
        stats.steps,
        stats.min_dt,
        stats.max_dt
    );
    Ok(traj)
}

pub fn solve_with_stats(inst: &PdeInstance, cfg: &SolveConfig) -> Result<(Trajectory, SolveStats), SolverError> {
    let expected = inst.family.backend();
    if cfg.backend != expected {
        return Err(SolverError::BackendMismatch {
            family: inst.family,
            expected,
            got: cfg.backend,
        });
    }
    cfg.validate(inst.nx)?;
    let (rows, stats) = fine_rows(inst, cfg)?;
    let values: Vec<f64> = rows
        .iter()
        .flat_map(|r| downsample(r, inst.nx, cfg.downsample, inst.boundary))
        .collect();
    Ok((
        Trajectory {
            instance: inst.clone(),
            times: inst.times.clone(),
            xs: inst.xgrid(),
            values,
            noisy: false,
        },
        stats,
    ))
}

/// Solution rows on the internal grid `x_i = i·x_f/nx_int`.
pub fn solve_fine(inst: &PdeInstance, cfg: &SolveConfig) -> Result<Vec<Vec<f64>>, SolverError> {
    cfg.validate(inst.nx)?;
    Ok(fine_rows(inst, cfg)?.0)
}

fn fine_rows(inst: &PdeInstance, cfg: &SolveConfig) -> Result<(Vec<Vec<f64>>, SolveStats), SolverError> {
    if inst.boundary == Boundary::Neumann && cfg.backend != Backend::FiniteVolume {
        return Err(SolverError::Unsupported(format!("Neumann boundaries for {}", inst.family)));
    }
    let ic = InitialCondition::new(&inst.ic)?;
    let n = cfg.nx_int;
    let h = inst.x_final / n as f64;
    let fine_x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    if cfg.backend == Backend::ExactTransport {
        return Ok((spectral::exact_transport(inst, &ic, &fine_x), SolveStats::default()));
    }
    let u0 = ic.sample(&fine_x);
    match cfg.backend {
        Backend::MethodOfLines => march(mol::stepper(inst, u0, h, cfg.cfl)?.as_mut(), &inst.times, cfg),
        Backend::FiniteVolume => march(&mut FvSolver::new(inst, u0, h, cfg.cfl), &inst.times, cfg),
        Backend::SpectralKdv => march(
            &mut spectral::KdvStepper::new(inst.param("delta"), u0, inst.x_final, cfg.cfl),
            &inst.times,
            cfg,
        ),
        Backend::FpMatrix => march(&mut fp::FpStepper::new(inst, u0, h, cfg.cfl), &inst.times, cfg),
        Backend::ExactTransport => unreachable!(),
    }
}

/// `values + level·σ·ε` on the input stamps, `σ` the trajectory's standard
/// deviation and `ε` standard normal. Panics on a negative level.
pub fn add_noise(traj: &Trajectory, level: f64, seed: u64) -> Trajectory {
    assert!(level >= 0.0, "noise level must be non-negative, got {level}");
    let mut out = traj.clone();
    if level == 0.0 {
        return out;
    }
    let sigma = traj.std();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = N_INPUT_STAMPS.min(traj.nt()) * traj.nx();
    for v in &mut out.values[..n_in] {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += level * sigma * e;
    }
    out.noisy = true;
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    /// Observed order from a resolution triplet.
    Order(f64),
    /// The backend is exact; nothing to estimate.
    Exact,
    /// Successive differences did not decrease.
    Inconclusive { coarse: f64, fine: f64 },
}

/// Observed spatial order from solves at `nx`, `2nx` and `4nx` internal points,
/// compared on the output grid: `p = log2(|u1 - u2| / |u2 - u4|)`.
pub fn convergence_order(family: PdeFamily, u0: &IcSpec) -> Result<Convergence, SolverError> {
    convergence_order_at(family, u0, 256)
}

pub fn convergence_order_at(family: PdeFamily, u0: &IcSpec, nx: usize) -> Result<Convergence, SolverError> {
    if family.backend() == Backend::ExactTransport {
        return Ok(Convergence::Exact);
    }
    let mut inst = nominal_instance(family, 0);
    inst.ic = u0.clone();
    let base = SolveConfig::for_family(family);
    let sols: Vec<Trajectory> = [nx, 2 * nx, 4 * nx]
        .iter()
        .map(|&n| solve(&inst, &base.clone().with_nx(n)))
        .collect::<Result<_, _>>()?;
    let diff = |a: &Trajectory, b: &Trajectory| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let coarse = diff(&sols[0], &sols[1]);
    let fine = diff(&sols[1], &sols[2]);
    if !(fine < coarse) || fine == 0.0 {
        return Ok(Convergence::Inconclusive { coarse, fine });
    }
    Ok(Convergence::Order((coarse / fine).log2()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
