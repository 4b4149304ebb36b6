//! The equation zoo: families, coefficient sampling, initial conditions and
//! the map from a sampled instance to its residual expression.

mod ic;

pub use ic::{
    generate_ic, sample_mixture, sample_sine_post, sample_sinusoid, Bump, IcKind, IcSpec, InitialCondition,
    PostProcess, SineTerm, CANONICAL_POINTS,
};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Field, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZooError {
    #[error("RBF Cholesky factorization failed after {retries} jitter retries")]
    Cholesky { retries: usize },
    #[error("degenerate initial condition: {0}")]
    DegenerateIc(String),
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("invalid sampling range: {0}")]
    InvalidRange(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Upper end of the range-normalized initial data.
pub const U_MAX: f64 = 1.0;

/// Output grid sizes.
pub const NX: usize = 128;
pub const N_INPUT_STAMPS: usize = 16;
pub const N_TARGET_STAMPS: usize = 16;
pub const N_STAMPS: usize = N_INPUT_STAMPS + N_TARGET_STAMPS;

// Fokker-Planck physical constants.
pub const BOLTZMANN: f64 = 1.380649e-23;
pub const FP_TEMPERATURE: f64 = 300.0;
pub const FP_RADIUS: f64 = 0.1e-6;
pub const FP_POTENTIAL_AMPLITUDE: f64 = 5e-21;
pub const FP_POTENTIAL_LENGTH: f64 = 0.1e-6;
pub const FP_X_FINAL: f64 = 2e-6;
pub const FP_T_FINAL: f64 = 0.1;

/// The twenty equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeFamily {
    Heat,
    PorousMedium,
    KleinGordon,
    SineGordon,
    CahnHilliard,
    Kdv,
    Advection,
    Wave,
    DiffReactR1,
    DiffReactR2,
    DiffReactR3,
    DiffReactR4,
    ViscousF1,
    ViscousF2,
    ViscousF3,
    ViscousF4,
    InviscidF1,
    InviscidF2,
    InviscidF3,
    FokkerPlanck,
}

/// Flux functions of the conservation-law families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flux {
    /// u²/2
    Burgers,
    /// u
    Linear,
    /// u³/3
    Cubic,
    /// sin(u)
    Sine,
}

impl Flux {
    pub fn f(self, u: f64) -> f64 {
        match self {
            Flux::Burgers => 0.5 * u * u,
            Flux::Linear => u,
            Flux::Cubic => u * u * u / 3.0,
            Flux::Sine => u.sin(),
        }
    }

    pub fn df(self, u: f64) -> f64 {
        match self {
            Flux::Burgers => u,
            Flux::Linear => 1.0,
            Flux::Cubic => u * u,
            Flux::Sine => u.cos(),
        }
    }

    pub fn d2f(self, u: f64) -> f64 {
        match self {
            Flux::Burgers => 1.0,
            Flux::Linear => 0.0,
            Flux::Cubic => 2.0 * u,
            Flux::Sine => -u.sin(),
        }
    }

    /// `f(u)_x` expanded with the chain rule into leaf derivatives.
    fn expanded_derivative(self) -> Expr {
        let u = || Expr::field(Field::U);
        let ux = Expr::field(Field::Ux);
        match self {
            Flux::Burgers => Expr::mul(u(), ux),
            Flux::Linear => ux,
            Flux::Cubic => Expr::mul(Expr::pow(u(), 2), ux),
            Flux::Sine => Expr::mul(Expr::cos(u()), ux),
        }
    }
}

/// Reaction terms of the diffusion-reaction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reaction {
    /// u(1-u)
    R1,
    /// u
    R2,
    /// u²(1-u)
    R3,
    /// u²(1-u)²
    R4,
}

impl Reaction {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Reaction::R1 => u * (1.0 - u),
            Reaction::R2 => u,
            Reaction::R3 => u * u * (1.0 - u),
            Reaction::R4 => u * u * (1.0 - u) * (1.0 - u),
        }
    }

    fn expr(self) -> Expr {
        let u = || Expr::field(Field::U);
        let one_minus_u = || Expr::sub(Expr::c(1.0), u());
        match self {
            Reaction::R1 => Expr::mul(u(), one_minus_u()),
            Reaction::R2 => u(),
            Reaction::R3 => Expr::mul(Expr::pow(u(), 2), one_minus_u()),
            Reaction::R4 => Expr::mul(Expr::pow(u(), 2), Expr::pow(one_minus_u(), 2)),
        }
    }
}

/// Reference solver family, one per row of the solver table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    MethodOfLines,
    FiniteVolume,
    ExactTransport,
    SpectralKdv,
    FpMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    /// Homogeneous Neumann (zero gradient).
    Neumann,
    /// Zero probability flux.
    NoFlux,
}

/// Initial-condition class used for a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcClass {
    /// The family's training generator.
    Training,
    /// The family's evaluation generator (input-function-class shift).
    Testing,
    /// Riemann data with the given wave structure; Neumann boundaries.
    Riemann(RiemannKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiemannKind {
    Shock,
    Rarefaction,
    /// Two shocks that later interact.
    MultiShock,
}

/// Closed interval multipliers `(λ1, λ2)` applied to each coefficient of interest,
/// or a union of such intervals picked with probability proportional to length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub intervals: Vec<(f64, f64)>,
}

impl ParamRange {
    pub fn new(l1: f64, l2: f64) -> Self {
        ParamRange {
            intervals: vec![(l1, l2)],
        }
    }

    pub fn training() -> Self {
        Self::new(0.9, 1.1)
    }

    pub fn out_of_distribution() -> Self {
        ParamRange {
            intervals: vec![(0.8, 0.9), (1.1, 1.2)],
        }
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        if self.intervals.is_empty() {
            return Err(ZooError::InvalidRange("empty".into()));
        }
        for &(a, b) in &self.intervals {
            if !(a <= b) || a < 0.0 {
                return Err(ZooError::InvalidRange(format!("({a}, {b})")));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let total: f64 = self.intervals.iter().map(|(a, b)| b - a).sum();
        if total == 0.0 {
            return self.intervals[0].0;
        }
        let mut r = rng.random_range(0.0..total);
        for &(a, b) in &self.intervals {
            if r < b - a || (a, b) == *self.intervals.last().unwrap() {
                return a + r.min(b - a);
            }
            r -= b - a;
        }
        unreachable!()
    }
}

/// Named coefficient values.
pub type Params = BTreeMap<String, f64>;

/// Registry record for one family; serialized into dataset manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: PdeFamily,
    /// Coefficients of interest with their nominal values `q_c`.
    pub q_c: Params,
    /// Constants that are never randomized.
    pub fixed: Params,
    /// Final time in the instance's (possibly rescaled) time coordinate.
    pub t_final: f64,
    /// Spatial extent in the instance's coordinate.
    pub x_final: f64,
    /// Physical extents before rescaling, when they differ.
    pub physical_t_final: f64,
    pub physical_x_final: f64,
    pub backend: Backend,
    pub train_ic: String,
    pub test_ic: String,
}

impl fmt::Display for PdeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PdeFamily {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PdeFamily::ALL
            .iter()
            .copied()
            .find(|f| f.id() == s)
            .ok_or_else(|| ZooError::UnknownFamily(s.to_string()))
    }
}

fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl PdeFamily {
    pub const ALL: [PdeFamily; 20] = [
        PdeFamily::Heat,
        PdeFamily::PorousMedium,
        PdeFamily::KleinGordon,
        PdeFamily::SineGordon,
        PdeFamily::CahnHilliard,
        PdeFamily::Kdv,
        PdeFamily::Advection,
        PdeFamily::Wave,
        PdeFamily::DiffReactR1,
        PdeFamily::DiffReactR2,
        PdeFamily::DiffReactR3,
        PdeFamily::DiffReactR4,
        PdeFamily::ViscousF1,
        PdeFamily::ViscousF2,
        PdeFamily::ViscousF3,
        PdeFamily::ViscousF4,
        PdeFamily::InviscidF1,
        PdeFamily::InviscidF2,
        PdeFamily::InviscidF3,
        PdeFamily::FokkerPlanck,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PdeFamily::Heat => "heat",
            PdeFamily::PorousMedium => "porous-medium",
            PdeFamily::KleinGordon => "klein-gordon",
            PdeFamily::SineGordon => "sine-gordon",
            PdeFamily::CahnHilliard => "cahn-hilliard",
            PdeFamily::Kdv => "kdv",
            PdeFamily::Advection => "advection",
            PdeFamily::Wave => "wave",
            PdeFamily::DiffReactR1 => "diff-react-r1",
            PdeFamily::DiffReactR2 => "diff-react-r2",
            PdeFamily::DiffReactR3 => "diff-react-r3",
            PdeFamily::DiffReactR4 => "diff-react-r4",
            PdeFamily::ViscousF1 => "viscous-f1",
            PdeFamily::ViscousF2 => "viscous-f2",
            PdeFamily::ViscousF3 => "viscous-f3",
            PdeFamily::ViscousF4 => "viscous-f4",
            PdeFamily::InviscidF1 => "inviscid-f1",
            PdeFamily::InviscidF2 => "inviscid-f2",
            PdeFamily::InviscidF3 => "inviscid-f3",
            PdeFamily::FokkerPlanck => "fokker-planck",
        }
    }

    pub fn flux(self) -> Option<Flux> {
        match self {
            PdeFamily::ViscousF1 | PdeFamily::InviscidF1 => Some(Flux::Burgers),
            PdeFamily::ViscousF2 => Some(Flux::Linear),
            PdeFamily::ViscousF3 | PdeFamily::InviscidF2 => Some(Flux::Cubic),
            PdeFamily::ViscousF4 | PdeFamily::InviscidF3 => Some(Flux::Sine),
            _ => None,
        }
    }

    pub fn is_viscous_conservation(self) -> bool {
        matches!(
            self,
            PdeFamily::ViscousF1 | PdeFamily::ViscousF2 | PdeFamily::ViscousF3 | PdeFamily::ViscousF4
        )
    }

    pub fn is_inviscid_conservation(self) -> bool {
        matches!(self, PdeFamily::InviscidF1 | PdeFamily::InviscidF2 | PdeFamily::InviscidF3)
    }

    pub fn reaction(self) -> Option<Reaction> {
        match self {
            PdeFamily::DiffReactR1 => Some(Reaction::R1),
            PdeFamily::DiffReactR2 => Some(Reaction::R2),
            PdeFamily::DiffReactR3 => Some(Reaction::R3),
            PdeFamily::DiffReactR4 => Some(Reaction::R4),
            _ => None,
        }
    }

    pub fn backend(self) -> Backend {
        match self {
            PdeFamily::Heat
            | PdeFamily::KleinGordon
            | PdeFamily::SineGordon
            | PdeFamily::PorousMedium
            | PdeFamily::CahnHilliard => Backend::MethodOfLines,
            PdeFamily::Advection | PdeFamily::Wave => Backend::ExactTransport,
            PdeFamily::Kdv => Backend::SpectralKdv,
            PdeFamily::FokkerPlanck => Backend::FpMatrix,
            _ => Backend::FiniteVolume,
        }
    }

    /// Second-order-in-time equations (zero initial velocity is assumed).
    pub fn is_second_order_in_time(self) -> bool {
        matches!(self, PdeFamily::KleinGordon | PdeFamily::SineGordon | PdeFamily::Wave)
    }

    pub fn spec(self) -> FamilySpec {
        use PdeFamily::*;
        let (q_c, fixed, t_final) = match self {
            Heat => (params(&[("c", 3e-3)]), params(&[]), 2.0),
            PorousMedium => (params(&[]), params(&[]), 0.1),
            KleinGordon => (params(&[("c", 1.0), ("m", 0.1)]), params(&[]), 1.0),
            SineGordon => (params(&[("c", 1.0)]), params(&[]), 1.0),
            CahnHilliard => (params(&[("eps", 0.01)]), params(&[]), 0.5),
            Kdv => (params(&[("delta", 0.022)]), params(&[]), 1.0),
            Advection => (params(&[("beta", 0.5)]), params(&[]), 2.0),
            Wave => (params(&[("beta", 0.5)]), params(&[]), 1.0),
            DiffReactR1 | DiffReactR3 | DiffReactR4 => (params(&[("nu", 3e-3), ("rho", 1.0)]), params(&[]), 2.0),
            DiffReactR2 => (params(&[("nu", 3e-3), ("rho", 0.1)]), params(&[]), 2.0),
            ViscousF1 | ViscousF2 | ViscousF3 | ViscousF4 => (params(&[("k", 1.0), ("eps", 0.01)]), params(&[]), 2.0),
            InviscidF1 | InviscidF2 | InviscidF3 => (params(&[("k", 1.0)]), params(&[]), 2.0),
            FokkerPlanck => (
                params(&[("eta", 1e-3)]),
                params(&[
                    ("k_B", BOLTZMANN),
                    ("T", FP_TEMPERATURE),
                    ("r", FP_RADIUS),
                    ("c", FP_POTENTIAL_AMPLITUDE),
                    ("L", FP_POTENTIAL_LENGTH),
                ]),
                1.0,
            ),
        };
        let (train_ic, test_ic) = match self {
            Heat | DiffReactR1 | DiffReactR2 | DiffReactR3 | DiffReactR4 | KleinGordon | SineGordon
            | CahnHilliard | ViscousF1 | ViscousF2 | ViscousF3 | ViscousF4 | InviscidF1 | InviscidF2
            | InviscidF3 => ("sinusoid-superposition n_max=2", "gaussian-process sigma=1 l=0.2"),
            Kdv | Advection | Wave => ("sinusoid-superposition n_max=2", "gaussian-mixture N=2"),
            FokkerPlanck => ("gaussian-mixture N=1", "uniform-random"),
            PorousMedium => ("gaussian-mixture N=1", "quadratic-bump"),
        };
        let (physical_t_final, physical_x_final) = match self {
            FokkerPlanck => (FP_T_FINAL, FP_X_FINAL),
            _ => (t_final, 2.0),
        };
        FamilySpec {
            family: self,
            q_c,
            fixed,
            t_final,
            x_final: 2.0,
            physical_t_final,
            physical_x_final,
            backend: self.backend(),
            train_ic: train_ic.into(),
            test_ic: test_ic.into(),
        }
    }

    /// Boundary condition for ordinary (non-Riemann) data.
    pub fn default_boundary(self) -> Boundary {
        match self {
            PdeFamily::FokkerPlanck => Boundary::NoFlux,
            _ => Boundary::Periodic,
        }
    }
}

pub fn registry() -> Vec<FamilySpec> {
    PdeFamily::ALL.iter().map(|f| f.spec()).collect()
}

/// Draws each coefficient of interest from `Uniform[λ1·q_c, λ2·q_c]`.
/// Porous medium draws its exponent `m` uniformly from {2, 3, 4}.
pub fn sample_params(family: PdeFamily, range: &ParamRange, rng: &mut impl Rng) -> Result<Params, ZooError> {
    range.validate()?;
    let spec = family.spec();
    let mut out = Params::new();
    for (name, q) in &spec.q_c {
        let lambda = range.sample(rng);
        out.insert(name.clone(), lambda * q);
    }
    if family == PdeFamily::PorousMedium {
        out.insert("m".into(), rng.random_range(2..=4) as f64);
    }
    Ok(out)
}

/// Counter-based stream: the same `(seed, index)` always yields the same draws,
/// independent of how instances are distributed over workers.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One sampled PDE system: coefficients, initial condition and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeInstance {
    pub family: PdeFamily,
    pub params: Params,
    pub ic: IcSpec,
    pub boundary: Boundary,
    pub x_final: f64,
    pub t_final: f64,
    pub nx: usize,
    /// Output time stamps: the first `N_INPUT_STAMPS` are inputs, the rest targets.
    pub times: Vec<f64>,
}

impl PdeInstance {
    pub fn xgrid(&self) -> Vec<f64> {
        uniform_periodic_grid(self.nx, self.x_final)
    }

    pub fn input_times(&self) -> &[f64] {
        &self.times[..N_INPUT_STAMPS.min(self.times.len())]
    }

    pub fn target_times(&self) -> &[f64] {
        &self.times[N_INPUT_STAMPS.min(self.times.len())..]
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params
            .get(name)
            .copied()
            .unwrap_or_else(|| panic!("{} has no parameter {name}", self.family))
    }

    pub fn with_times(&self, times: Vec<f64>) -> PdeInstance {
        PdeInstance {
            times,
            ..self.clone()
        }
    }

    pub fn to_expression(&self) -> Expr {
        to_expression(self)
    }
}

/// `x_j = j·L/n` for `j = 0..n`.
pub fn uniform_periodic_grid(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|j| length * j as f64 / n as f64).collect()
}

/// 16 input stamps on `[0, t_f/2]` followed by 16 target stamps on `(t_f/2, t_f]`.
pub fn default_times(t_final: f64) -> Vec<f64> {
    let half = 0.5 * t_final;
    let mut t: Vec<f64> = (0..N_INPUT_STAMPS)
        .map(|i| half * i as f64 / (N_INPUT_STAMPS - 1) as f64)
        .collect();
    t.extend((0..N_TARGET_STAMPS).map(|j| half + half * (j + 1) as f64 / N_TARGET_STAMPS as f64));
    t
}

/// Samples an initial condition for `family` from the given class.
pub fn sample_ic(family: PdeFamily, class: IcClass, rng: &mut impl Rng) -> IcSpec {
    use PdeFamily::*;
    let xf = family.spec().x_final;
    let (kind, mut post) = match class {
        IcClass::Riemann(kind) => {
            let flux = family.flux();
            return riemann_ic(kind, flux, xf, rng);
        }
        IcClass::Training => match family {
            FokkerPlanck => (sample_mixture(rng, 1, xf, (0.35, 0.65), (0.025, 0.05)), PostProcess::default()),
            PorousMedium => (sample_mixture(rng, 1, xf, (0.25, 0.75), (0.05, 0.15)), PostProcess::default()),
            Advection | Wave => (sample_sinusoid(rng, 2, 2), PostProcess::default()),
            _ => {
                let kind = sample_sinusoid(rng, 2, 2);
                (kind, sample_sine_post(rng, xf))
            }
        },
        IcClass::Testing => match family {
            FokkerPlanck => {
                let lo = rng.random_range(0.15..0.45) * xf;
                let hi = lo + rng.random_range(0.15..0.35) * xf;
                (IcKind::Uniform { lo, hi }, PostProcess::default())
            }
            PorousMedium => (
                IcKind::QuadraticBump {
                    amplitude: rng.random_range(0.5..=1.0),
                    center: rng.random_range(0.35..0.65) * xf,
                    width: rng.random_range(0.05..0.15) * xf,
                },
                PostProcess::default(),
            ),
            Kdv | Advection | Wave => (sample_mixture(rng, 2, xf, (0.25, 0.75), (0.05, 0.15)), PostProcess::default()),
            _ => (
                IcKind::GaussianProcess {
                    sigma: 1.0,
                    length: 0.2,
                    seed: rng.random(),
                },
                PostProcess::default(),
            ),
        },
    };
    match family {
        FokkerPlanck => post.probability_normalize = true,
        _ => {
            post.periodize = true;
            if matches!(family, PorousMedium | DiffReactR1 | DiffReactR2 | DiffReactR3 | DiffReactR4) {
                post.range_normalize = Some((0.0, U_MAX));
            }
            if family == CahnHilliard {
                // The anti-diffusive term -6 u u_xx is forward parabolic only for u <= 0.
                post.range_normalize = Some((-U_MAX, 0.0));
            }
        }
    }
    IcSpec {
        kind,
        post,
        x_final: xf,
    }
}

/// Step data with levels in `[0, 1]`. Whether a decreasing step is a shock
/// depends on the flux curvature: for convex flux `u_L > u_R` shocks, for
/// concave flux the inequality flips.
pub fn riemann_ic(kind: RiemannKind, flux: Option<Flux>, x_final: f64, rng: &mut impl Rng) -> IcSpec {
    let convex = flux.map(|f| f.d2f(0.5) >= 0.0).unwrap_or(true);
    let mut pair = || {
        let a: f64 = rng.random_range(0.0..=1.0);
        let mut b: f64 = rng.random_range(0.0..=1.0);
        while (a - b).abs() < 0.2 {
            b = rng.random_range(0.0..=1.0);
        }
        (a.max(b), a.min(b))
    };
    let (levels, jumps) = match kind {
        RiemannKind::Shock | RiemannKind::Rarefaction => {
            let (hi, lo) = pair();
            let decreasing = (kind == RiemannKind::Shock) == convex;
            let levels = if decreasing { vec![hi, lo] } else { vec![lo, hi] };
            (levels, vec![rng.random_range(0.25..0.5) * x_final])
        }
        RiemannKind::MultiShock => {
            let mut v = [
                rng.random_range(0.0..=1.0f64),
                rng.random_range(0.0..=1.0f64),
                rng.random_range(0.0..=1.0f64),
            ];
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // Keep both jumps visible.
            v[0] = v[0].max(v[1] + 0.15).min(1.0);
            v[2] = v[2].min(v[1] - 0.15).max(0.0);
            if !convex {
                v.reverse();
            }
            let x0 = rng.random_range(0.15..0.3) * x_final;
            let x1 = x0 + rng.random_range(0.1..0.2) * x_final;
            (v.to_vec(), vec![x0, x1])
        }
    };
    IcSpec {
        kind: IcKind::Riemann { levels, jumps },
        post: PostProcess::default(),
        x_final,
    }
}

/// Samples a full instance for `family`.
pub fn sample_instance(
    family: PdeFamily,
    range: &ParamRange,
    class: IcClass,
    rng: &mut impl Rng,
) -> Result<PdeInstance, ZooError> {
    let spec = family.spec();
    let params = sample_params(family, range, rng)?;
    let ic = sample_ic(family, class, rng);
    let boundary = match class {
        IcClass::Riemann(_) => {
            if family.flux().is_none() {
                return Err(ZooError::Unsupported(format!("Riemann data for {family}")));
            }
            Boundary::Neumann
        }
        _ => family.default_boundary(),
    };
    Ok(PdeInstance {
        family,
        params,
        ic,
        boundary,
        x_final: spec.x_final,
        t_final: spec.t_final,
        nx: NX,
        times: default_times(spec.t_final),
    })
}

/// Fokker-Planck coefficients after rescaling `x̃ = x/(x_f/2)`, `t̃ = t/t_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpCoefficients {
    /// Diffusion coefficient.
    pub diffusion: f64,
    /// Potential `U/(k_B T) = κ cos(ω x̃)`.
    pub kappa: f64,
    pub omega: f64,
}

pub fn fp_coefficients(params: &Params) -> FpCoefficients {
    let eta = params["eta"];
    let kt = BOLTZMANN * FP_TEMPERATURE;
    let gamma = 6.0 * PI * eta * FP_RADIUS;
    let d = kt / gamma;
    let x_scale = FP_X_FINAL / 2.0;
    FpCoefficients {
        diffusion: d * FP_T_FINAL / (x_scale * x_scale),
        kappa: FP_POTENTIAL_AMPLITUDE / kt,
        omega: x_scale / FP_POTENTIAL_LENGTH,
    }
}

/// Residual expression `F(u, u_t, ...) = 0` with coefficients substituted.
pub fn to_expression(inst: &PdeInstance) -> Expr {
    use PdeFamily::*;
    let f = |s: Field| Expr::field(s);
    let c = Expr::c;
    let p = |name: &str| inst.param(name);
    match inst.family {
        Heat => Expr::sub(f(Field::Ut), Expr::mul(c(p("c")), f(Field::Uxx))),
        PorousMedium => {
            // (u^m)_xx = m u^(m-1) u_xx + m(m-1) u^(m-2) u_x²
            let m = p("m").round() as u8;
            let upow = |k: u8| match k {
                0 => None,
                1 => Some(f(Field::U)),
                k => Some(Expr::pow(f(Field::U), k)),
            };
            let term1 = match upow(m - 1) {
                Some(uu) => Expr::mul(Expr::mul(c(m as f64), uu), f(Field::Uxx)),
                None => Expr::mul(c(m as f64), f(Field::Uxx)),
            };
            let ux2 = Expr::pow(f(Field::Ux), 2);
            let k2 = (m as f64) * (m as f64 - 1.0);
            let term2 = match upow(m - 2) {
                Some(uu) => Expr::mul(Expr::mul(c(k2), uu), ux2),
                None => Expr::mul(c(k2), ux2),
            };
            Expr::sub(Expr::sub(f(Field::Ut), term1), term2)
        }
        KleinGordon => {
            let (cc, m) = (p("c"), p("m"));
            Expr::add(
                Expr::sub(f(Field::Utt), Expr::mul(c(cc * cc), f(Field::Uxx))),
                Expr::mul(c(m * m * cc.powi(4)), f(Field::U)),
            )
        }
        SineGordon => Expr::add(
            Expr::sub(f(Field::Utt), f(Field::Uxx)),
            Expr::mul(c(p("c")), Expr::sin(f(Field::U))),
        ),
        CahnHilliard => {
            // 6 (u u_x)_x = 6 (u_x² + u u_xx)
            let eps = p("eps");
            Expr::add(
                Expr::add(f(Field::Ut), Expr::mul(c(eps * eps), f(Field::Uxxxx))),
                Expr::mul(
                    c(6.0),
                    Expr::add(Expr::pow(f(Field::Ux), 2), Expr::mul(f(Field::U), f(Field::Uxx))),
                ),
            )
        }
        Kdv => {
            let d = p("delta");
            Expr::add(
                Expr::add(f(Field::Ut), Expr::mul(c(d * d), f(Field::Uxxx))),
                Expr::mul(f(Field::U), f(Field::Ux)),
            )
        }
        Advection => Expr::add(f(Field::Ut), Expr::mul(c(p("beta")), f(Field::Ux))),
        Wave => Expr::sub(f(Field::Utt), Expr::mul(c(p("beta")), f(Field::Uxx))),
        DiffReactR1 | DiffReactR2 | DiffReactR3 | DiffReactR4 => {
            let r = inst.family.reaction().unwrap();
            Expr::sub(
                Expr::sub(f(Field::Ut), Expr::mul(c(p("nu")), f(Field::Uxx))),
                Expr::mul(c(p("rho")), r.expr()),
            )
        }
        ViscousF1 | ViscousF2 | ViscousF3 | ViscousF4 => {
            let flux = inst.family.flux().unwrap();
            Expr::sub(
                Expr::add(f(Field::Ut), Expr::mul(c(p("k")), flux.expanded_derivative())),
                Expr::mul(c(p("eps") / PI), f(Field::Uxx)),
            )
        }
        InviscidF1 | InviscidF2 | InviscidF3 => {
            let flux = inst.family.flux().unwrap();
            Expr::add(f(Field::Ut), Expr::mul(c(p("k")), flux.expanded_derivative()))
        }
        FokkerPlanck => {
            // u_t = a u_xx - a (φ' u)_x with φ = κ cos(ωx):
            // residual u_t - a u_xx - aκω² cos(ωx) u - aκω sin(ωx) u_x
            let fp = fp_coefficients(&inst.params);
            let a = fp.diffusion;
            let wx = || Expr::mul(c(fp.omega), Expr::var(Var::X));
            Expr::sub(
                Expr::sub(
                    Expr::sub(f(Field::Ut), Expr::mul(c(a), f(Field::Uxx))),
                    Expr::mul(Expr::mul(c(a * fp.kappa * fp.omega * fp.omega), Expr::cos(wx())), f(Field::U)),
                ),
                Expr::mul(Expr::mul(c(a * fp.kappa * fp.omega), Expr::sin(wx())), f(Field::Ux)),
            )
        }
    }
}

/// A representative instance with nominal coefficients, used by tests and tooling.
pub fn nominal_instance(family: PdeFamily, seed: u64) -> PdeInstance {
    let mut rng = instance_rng(seed, 0);
    let mut inst = sample_instance(family, &ParamRange::new(1.0, 1.0), IcClass::Training, &mut rng)
        .expect("nominal range is valid");
    if family == PdeFamily::PorousMedium {
        inst.params.insert("m".into(), 2.0);
    }
    inst
}
