//! Fokker-Planck on the rescaled domain: Scharfetter-Gummel (Chang-Cooper
//! type) fluxes, zero flux through both ends, Crank-Nicolson in time.

use super::{all_finite, Stepper};
use crate::pde_zoo::{fp_coefficients, PdeInstance};

/// `B(z) = z / (e^z - 1)`.
pub(super) fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

pub(super) struct FpStepper {
    u: Vec<f64>,
    /// Tridiagonal operator `A`: `(Au)_i = lower_i u_{i-1} + diag_i u_i + upper_i u_{i+1}`.
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    cfl: f64,
}

impl FpStepper {
    pub(super) fn new(inst: &PdeInstance, u0: Vec<f64>, h: f64, cfl: f64) -> Self {
        let fp = fp_coefficients(&inst.params);
        let a = fp.diffusion;
        // Drift velocity of the flux J = -a u_x + v u.
        let v = |x: f64| -a * fp.kappa * fp.omega * (fp.omega * x).sin();
        Self::from_coefficients(u0, h, a, v, cfl)
    }

    pub(super) fn from_coefficients(u0: Vec<f64>, h: f64, a: f64, v: impl Fn(f64) -> f64, cfl: f64) -> Self {
        let n = u0.len();
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let s = a / (h * h);
        // Interior face between cells i and i+1 at x = (i + 1/2) h.
        for i in 0..n - 1 {
            let pe = v((i as f64 + 0.5) * h) * h / a;
            let out_left = s * bernoulli(-pe);
            let in_right = s * bernoulli(pe);
            diag[i] -= out_left;
            upper[i] += in_right;
            diag[i + 1] -= in_right;
            lower[i + 1] += out_left;
        }
        FpStepper {
            u: u0,
            lower,
            diag,
            upper,
            cfl,
        }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut r = self.diag[i] * u[i];
                if i > 0 {
                    r += self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    r += self.upper[i] * u[i + 1];
                }
                r
            })
            .collect()
    }
}

/// Thomas algorithm for `(sub, main, sup) x = rhs`.
fn solve_tridiagonal(sub: &[f64], main: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = main.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / main[0];
    d[0] = rhs[0] / main[0];
    for i in 1..n {
        let m = main[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl Stepper for FpStepper {
    /// Keeps `I + dt/2 A` nonnegative, which with the M-matrix `I - dt/2 A`
    /// makes every step positivity preserving.
    fn max_dt(&self) -> f64 {
        let worst = self.diag.iter().fold(0.0f64, |m, d| m.max(-d));
        if worst > 0.0 {
            self.cfl * 2.0 / worst
        } else {
            f64::INFINITY
        }
    }

    fn step(&mut self, dt: f64) {
        let au = self.apply(&self.u);
        let rhs: Vec<f64> = self.u.iter().zip(&au).map(|(u, a)| u + 0.5 * dt * a).collect();
        let sub: Vec<f64> = self.lower.iter().map(|l| -0.5 * dt * l).collect();
        let sup: Vec<f64> = self.upper.iter().map(|l| -0.5 * dt * l).collect();
        let main: Vec<f64> = self.diag.iter().map(|d| 1.0 - 0.5 * dt * d).collect();
        self.u = solve_tridiagonal(&sub, &main, &sup, &rhs);
    }

    fn snapshot(&self) -> Vec<f64> {
        self.u.clone()
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.u)
    }
}
