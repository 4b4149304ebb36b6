//! Initial-condition generators and their post-processing pipeline.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ZooError;

/// Number of points the sample-based generators (Gaussian process) are drawn on.
pub const CANONICAL_POINTS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Integer wave number `n`; the angular wavenumber is `2πn / L`.
    pub n: u32,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IcKind {
    SinusoidSuperposition { terms: Vec<SineTerm> },
    /// Zero-mean Gaussian process with RBF covariance `σ² exp(-|x-y|²/(2l²))`.
    GaussianProcess { sigma: f64, length: f64, seed: u64 },
    GaussianMixture { bumps: Vec<Bump> },
    /// Uniform probability density on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `max(A - A (x-μ)²/(2σ²), 0)`.
    QuadraticBump { amplitude: f64, center: f64, width: f64 },
    /// Piecewise-constant data: `levels[i]` on `[jumps[i-1], jumps[i])`.
    Riemann { levels: Vec<f64>, jumps: Vec<f64> },
}

impl IcKind {
    pub fn name(&self) -> &'static str {
        match self {
            IcKind::SinusoidSuperposition { .. } => "sinusoid-superposition",
            IcKind::GaussianProcess { .. } => "gaussian-process",
            IcKind::GaussianMixture { .. } => "gaussian-mixture",
            IcKind::Uniform { .. } => "uniform-random",
            IcKind::QuadraticBump { .. } => "quadratic-bump",
            IcKind::Riemann { .. } => "riemann",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PostProcess {
    /// When set, `u ← s·|u|` with the stored sign `s = ±1`.
    pub abs_sign: Option<f64>,
    /// Smooth window `(x_l, x_r)`: `u ← u · ½(tanh((x-x_l)/w) - tanh((x-x_r)/w))`.
    pub window: Option<(f64, f64)>,
    /// Subtract the line through the endpoint values.
    pub periodize: bool,
    /// Affine map of the sampled range onto `[lo, hi]`.
    pub range_normalize: Option<(f64, f64)>,
    /// Scale so that `Σ u·dx = 1` on the output grid.
    pub probability_normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    #[serde(flatten)]
    pub kind: IcKind,
    pub post: PostProcess,
    pub x_final: f64,
}

/// Window transition width as a fraction of the domain.
const WINDOW_WIDTH: f64 = 0.01;

/// An initial condition ready for evaluation at arbitrary points.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    spec: IcSpec,
    /// Periodic samples for sample-based generators; evaluated by trigonometric interpolation.
    samples: Option<Vec<f64>>,
    fourier: Vec<(f64, f64)>,
    line: (f64, f64),
    shift: f64,
    scale: f64,
    offset: f64,
}

fn rbf_cholesky(xs: &[f64], sigma: f64, length: f64) -> Result<Vec<f64>, ZooError> {
    let n = xs.len();
    let mut jitter = 0.0;
    for attempt in 0..=3 {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = xs[i] - xs[j];
                k[i * n + j] = sigma * sigma * (-d * d / (2.0 * length * length)).exp();
            }
            k[i * n + i] += jitter;
        }
        if cholesky_in_place(&mut k, n) {
            return Ok(k);
        }
        log::debug!("rbf cholesky failed attempt={attempt} jitter={jitter:e}");
        jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
    }
    Err(ZooError::Cholesky { retries: 3 })
}

/// Lower-triangular Cholesky factor in place; false if not positive definite.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Fourier coefficients `(Re, Im)` for `k = 0..=n/2` of `n` periodic samples.
fn dft_half(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    (0..=n / 2)
        .map(|k| {
            samples.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &v)| {
                let a = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Trigonometric interpolant on `[0, period)` from [`dft_half`] coefficients.
fn trig_interp(coeffs: &[(f64, f64)], n: usize, period: f64, x: f64) -> f64 {
    let theta = 2.0 * PI * x / period;
    let half = n / 2;
    let acc: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(k, &(re, im))| {
            let w = if k == 0 || (n % 2 == 0 && k == half) { 1.0 } else { 2.0 };
            let kt = k as f64 * theta;
            w * (re * kt.cos() - im * kt.sin())
        })
        .sum();
    acc / n as f64
}

impl InitialCondition {
    pub fn new(spec: &IcSpec) -> Result<Self, ZooError> {
        let xf = spec.x_final;
        let mut ic = InitialCondition {
            spec: spec.clone(),
            samples: None,
            fourier: Vec::new(),
            line: (0.0, 0.0),
            shift: 0.0,
            scale: 1.0,
            offset: 0.0,
        };
        if let IcKind::GaussianProcess { sigma, length, seed } = spec.kind {
            let n = CANONICAL_POINTS;
            let xs: Vec<f64> = (0..=n).map(|j| xf * j as f64 / n as f64).collect();
            let l = rbf_cholesky(&xs, sigma, length)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut vals: Vec<f64> = (0..=n)
                .map(|i| (0..=i).map(|k| l[i * (n + 1) + k] * z[k]).sum())
                .collect();
            for (v, &x) in vals.iter_mut().zip(&xs) {
                *v = ic.pre_line(*v, x);
            }
            if spec.post.periodize {
                let (a, b) = (vals[0], vals[n]);
                for (v, &x) in vals.iter_mut().zip(&xs) {
                    *v -= a + (b - a) * x / xf;
                }
            }
            vals.truncate(n);
            ic.fourier = dft_half(&vals);
            ic.samples = Some(vals);
        } else if spec.post.periodize {
            ic.line = (ic.pre_line(ic.raw(0.0), 0.0), ic.pre_line(ic.raw(xf), xf));
        }

        let grid: Vec<f64> = (0..CANONICAL_POINTS).map(|j| xf * j as f64 / CANONICAL_POINTS as f64).collect();
        if let Some((target_lo, target_hi)) = spec.post.range_normalize {
            let vals: Vec<f64> = grid.iter().map(|&x| ic.unnormalized(x)).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ic.shift = -lo;
            ic.offset = target_lo;
            ic.scale = if hi - lo > 1e-12 {
                (target_hi - target_lo) / (hi - lo)
            } else {
                0.0
            };
        } else if spec.post.probability_normalize {
            let dx = xf / CANONICAL_POINTS as f64;
            let mass: f64 = grid.iter().map(|&x| ic.unnormalized(x)).sum::<f64>() * dx;
            if mass.abs() < 1e-300 {
                return Err(ZooError::DegenerateIc("zero mass".into()));
            }
            ic.scale = 1.0 / mass;
        }
        Ok(ic)
    }

    pub fn spec(&self) -> &IcSpec {
        &self.spec
    }

    fn raw(&self, x: f64) -> f64 {
        let xf = self.spec.x_final;
        match &self.spec.kind {
            IcKind::SinusoidSuperposition { terms } => terms
                .iter()
                .map(|t| t.amplitude * (2.0 * PI * t.n as f64 * x / xf + t.phase).sin())
                .sum(),
            IcKind::GaussianProcess { .. } => unreachable!("sample-based generator"),
            IcKind::GaussianMixture { bumps } => bumps
                .iter()
                .map(|b| b.amplitude * (-(x - b.center).powi(2) / (2.0 * b.width * b.width)).exp())
                .sum(),
            IcKind::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            IcKind::QuadraticBump { amplitude, center, width } => {
                (amplitude - amplitude * (x - center).powi(2) / (2.0 * width * width)).max(0.0)
            }
            IcKind::Riemann { levels, jumps } => {
                let idx = jumps.iter().take_while(|&&j| x >= j).count();
                levels[idx]
            }
        }
    }

    /// abs/sign and window stages.
    fn pre_line(&self, mut v: f64, x: f64) -> f64 {
        let post = &self.spec.post;
        if let Some(s) = post.abs_sign {
            v = s * v.abs();
        }
        if let Some((xl, xr)) = post.window {
            let w = WINDOW_WIDTH * self.spec.x_final;
            v *= 0.5 * (((x - xl) / w).tanh() - ((x - xr) / w).tanh());
        }
        v
    }

    fn unnormalized(&self, x: f64) -> f64 {
        let xf = self.spec.x_final;
        if let Some(samples) = &self.samples {
            return trig_interp(&self.fourier, samples.len(), xf, x.rem_euclid(xf));
        }
        let x = if self.spec.post.periodize { x.rem_euclid(xf) } else { x };
        let mut v = self.pre_line(self.raw(x), x);
        if self.spec.post.periodize {
            let (a, b) = self.line;
            v -= a + (b - a) * x / xf;
        }
        v
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.unnormalized(x) + self.shift) * self.scale + self.offset
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// Evaluates the initial condition described by `spec` on `xgrid`.
pub fn generate_ic(spec: &IcSpec, xgrid: &[f64]) -> Result<Vec<f64>, ZooError> {
    let ic = InitialCondition::new(spec)?;
    let u = ic.sample(xgrid);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(ZooError::DegenerateIc("non-finite value".into()));
    }
    Ok(u)
}

/// Draws the randomized post-processing flags applied to sinusoid ICs:
/// each of abs/sign and window with 10% probability.
pub fn sample_sine_post(rng: &mut impl Rng, x_final: f64) -> PostProcess {
    let abs_sign = rng
        .random_bool(0.1)
        .then(|| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let window = rng.random_bool(0.1).then(|| {
        (
            rng.random_range(0.1..0.45) * x_final,
            rng.random_range(0.55..0.9) * x_final,
        )
    });
    PostProcess {
        abs_sign,
        window,
        ..Default::default()
    }
}

pub fn sample_sinusoid(rng: &mut impl Rng, n_terms: usize, n_max: u32) -> IcKind {
    let terms = (0..n_terms)
        .map(|_| SineTerm {
            amplitude: rng.random_range(0.0..=1.0),
            n: rng.random_range(1..=n_max),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    IcKind::SinusoidSuperposition { terms }
}

pub fn sample_mixture(rng: &mut impl Rng, n: usize, x_final: f64, center: (f64, f64), width: (f64, f64)) -> IcKind {
    let bumps = (0..n)
        .map(|_| Bump {
            amplitude: rng.random_range(0.5..=1.0),
            center: rng.random_range(center.0..center.1) * x_final,
            width: rng.random_range(width.0..width.1) * x_final,
        })
        .collect();
    IcKind::GaussianMixture { bumps }
}
