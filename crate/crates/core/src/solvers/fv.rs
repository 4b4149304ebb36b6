//! Finite volumes for conservation laws and diffusion-reaction equations:
//! Rusanov flux, minmod-limited MUSCL reconstruction, central viscous term,
//! pointwise source, SSP-RK2 in time.

use super::{all_finite, Stepper};
use crate::pde_zoo::{Boundary, Flux, PdeInstance, Reaction};

pub struct FvSolver {
    u: Vec<f64>,
    h: f64,
    cfl: f64,
    boundary: Boundary,
    flux: Option<(Flux, f64)>,
    viscosity: f64,
    reaction: Option<(Reaction, f64)>,
    stage: Vec<f64>,
    rate: Vec<f64>,
    ext: Vec<f64>,
    faces: Vec<f64>,
}

const GHOSTS: usize = 2;

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Largest `|f'(u)|` for `u` between `a` and `b`.
fn max_speed(flux: Flux, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    match flux {
        Flux::Burgers => lo.abs().max(hi.abs()),
        Flux::Linear => 1.0,
        Flux::Cubic => (lo * lo).max(hi * hi),
        Flux::Sine => {
            let period = 2.0 * std::f64::consts::PI;
            if (hi / period).floor() * period >= lo {
                1.0
            } else {
                lo.cos().abs().max(hi.cos().abs())
            }
        }
    }
}

fn reaction_slope(r: Reaction, u: f64) -> f64 {
    match r {
        Reaction::R1 => 1.0 - 2.0 * u,
        Reaction::R2 => 1.0,
        Reaction::R3 => 2.0 * u - 3.0 * u * u,
        Reaction::R4 => 2.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
    }
}

impl FvSolver {
    pub fn new(inst: &PdeInstance, u0: Vec<f64>, h: f64, cfl: f64) -> Self {
        let f = inst.family;
        let flux = f.flux().map(|fl| (fl, inst.param("k")));
        let viscosity = if f.is_viscous_conservation() {
            inst.param("eps") / std::f64::consts::PI
        } else if f.reaction().is_some() {
            inst.param("nu")
        } else {
            0.0
        };
        let reaction = f.reaction().map(|r| (r, inst.param("rho")));
        Self::with_terms(u0, h, cfl, inst.boundary, flux, viscosity, reaction)
    }

    pub fn with_terms(
        u0: Vec<f64>,
        h: f64,
        cfl: f64,
        boundary: Boundary,
        flux: Option<(Flux, f64)>,
        viscosity: f64,
        reaction: Option<(Reaction, f64)>,
    ) -> Self {
        let n = u0.len();
        FvSolver {
            u: u0,
            h,
            cfl,
            boundary,
            flux,
            viscosity,
            reaction,
            stage: vec![0.0; n],
            rate: vec![0.0; n],
            ext: vec![0.0; n + 2 * GHOSTS],
            faces: vec![0.0; n + 1],
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.u
    }

    /// `∑ u·h` over the cells.
    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.h
    }

    pub fn advance(&mut self, dt: f64) {
        Stepper::step(self, dt)
    }

    pub fn stable_dt(&self) -> f64 {
        Stepper::max_dt(self)
    }

    fn fill_ghosts(&mut self, u: &[f64]) {
        let n = u.len();
        self.ext[GHOSTS..GHOSTS + n].copy_from_slice(u);
        for g in 0..GHOSTS {
            let (left, right) = match self.boundary {
                Boundary::Periodic => (u[n - GHOSTS + g], u[g]),
                _ => (u[0], u[n - 1]),
            };
            self.ext[g] = left;
            self.ext[GHOSTS + n + g] = right;
        }
    }

    /// Semi-discrete right-hand side written into `self.rate`.
    fn evaluate(&mut self, u: &[f64]) {
        let n = u.len();
        self.fill_ghosts(u);
        let e = &self.ext;
        let slope = |i: usize| minmod(e[i] - e[i - 1], e[i + 1] - e[i]);
        if let Some((flux, k)) = self.flux {
            // Face j separates cells j-1 and j.
            for j in 0..=n {
                let (a, b) = (GHOSTS + j - 1, GHOSTS + j);
                let ul = e[a] + 0.5 * slope(a);
                let ur = e[b] - 0.5 * slope(b);
                let speed = k.abs() * max_speed(flux, ul, ur);
                self.faces[j] = 0.5 * k * (flux.f(ul) + flux.f(ur)) - 0.5 * speed * (ur - ul);
            }
            if self.boundary == Boundary::Periodic {
                // Identical faces; make the telescoping sum exact.
                self.faces[n] = self.faces[0];
            }
        } else {
            self.faces.iter_mut().for_each(|f| *f = 0.0);
        }
        let inv_h = 1.0 / self.h;
        let nu = self.viscosity * inv_h * inv_h;
        for i in 0..n {
            let c = GHOSTS + i;
            let mut r = -(self.faces[i + 1] - self.faces[i]) * inv_h;
            if nu != 0.0 {
                r += nu * (e[c + 1] - 2.0 * e[c] + e[c - 1]);
            }
            if let Some((react, rho)) = self.reaction {
                r += rho * react.eval(u[i]);
            }
            self.rate[i] = r;
        }
    }
}

impl Stepper for FvSolver {
    fn max_dt(&self) -> f64 {
        let (lo, hi) = self
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut rate = 2.0 * self.viscosity / (self.h * self.h);
        if let Some((flux, k)) = self.flux {
            rate += k.abs() * max_speed(flux, lo, hi) / self.h;
        }
        if let Some((react, rho)) = self.reaction {
            let s = self.u.iter().map(|&v| reaction_slope(react, v).abs()).fold(0.0, f64::max);
            rate += rho.abs() * s;
        }
        if rate > 0.0 {
            self.cfl / rate
        } else {
            f64::INFINITY
        }
    }

    fn step(&mut self, dt: f64) {
        let u0 = std::mem::take(&mut self.u);
        self.evaluate(&u0);
        let mut stage = std::mem::take(&mut self.stage);
        for i in 0..u0.len() {
            stage[i] = u0[i] + dt * self.rate[i];
        }
        self.evaluate(&stage);
        let mut next = u0;
        for i in 0..next.len() {
            next[i] = 0.5 * next[i] + 0.5 * (stage[i] + dt * self.rate[i]);
        }
        self.u = next;
        self.stage = stage;
    }

    fn snapshot(&self) -> Vec<f64> {
        self.u.clone()
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.u)
    }
}
