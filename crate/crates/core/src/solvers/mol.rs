//! Method of lines: second-order central differences on a periodic grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{all_finite, max_abs, SolverError, Stepper};
use crate::pde_zoo::{PdeFamily, PdeInstance};

/// Real-axis and imaginary-axis stability extents of classical RK4.
const RK4_REAL: f64 = 2.78;
const RK4_IMAG: f64 = 2.82;

pub(super) fn stepper(inst: &PdeInstance, u0: Vec<f64>, h: f64, cfl: f64) -> Result<Box<dyn Stepper>, SolverError> {
    let n = u0.len();
    let kind = match inst.family {
        PdeFamily::Heat => Kind::Heat { c: inst.param("c") },
        PdeFamily::PorousMedium => Kind::Porous {
            m: inst.param("m").round() as i32,
        },
        PdeFamily::KleinGordon => {
            let (c, m) = (inst.param("c"), inst.param("m"));
            Kind::KleinGordon {
                c2: c * c,
                mass: m * m * c.powi(4),
            }
        }
        PdeFamily::SineGordon => Kind::SineGordon { c: inst.param("c") },
        PdeFamily::CahnHilliard => {
            return Ok(Box::new(CahnHilliard::new(inst.param("eps"), u0, h, cfl)));
        }
        f => return Err(SolverError::Unsupported(format!("{f} on the method-of-lines backend"))),
    };
    let mut state = u0;
    if kind.second_order() {
        // Zero initial velocity.
        state.resize(2 * n, 0.0);
    }
    let len = state.len();
    Ok(Box::new(Rk4 {
        kind,
        h,
        n,
        cfl,
        state,
        k: std::array::from_fn(|_| vec![0.0; len]),
        tmp: vec![0.0; len],
    }))
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Heat { c: f64 },
    Porous { m: i32 },
    KleinGordon { c2: f64, mass: f64 },
    SineGordon { c: f64 },
}

impl Kind {
    fn second_order(self) -> bool {
        matches!(self, Kind::KleinGordon { .. } | Kind::SineGordon { .. })
    }
}

/// `(u[i+1] - 2u[i] + u[i-1]) / h²` with periodic wrap.
fn laplacian(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (h * h);
    for i in 0..n {
        let l = u[(i + n - 1) % n];
        let r = u[(i + 1) % n];
        out[i] = (r - 2.0 * u[i] + l) * inv;
    }
}

struct Rk4 {
    kind: Kind,
    h: f64,
    n: usize,
    cfl: f64,
    state: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        match self.kind {
            Kind::Heat { c } => {
                laplacian(y, self.h, out);
                out.iter_mut().for_each(|v| *v *= c);
            }
            Kind::Porous { m } => {
                // Conservative form on w = u^m; u stays nonnegative.
                let w: Vec<f64> = y.iter().map(|u| u.max(0.0).powi(m)).collect();
                laplacian(&w, self.h, out);
            }
            Kind::KleinGordon { c2, mass } => {
                let (u, v) = y.split_at(n);
                let (du, dv) = out.split_at_mut(n);
                du.copy_from_slice(v);
                laplacian(u, self.h, dv);
                for i in 0..n {
                    dv[i] = c2 * dv[i] - mass * u[i];
                }
            }
            Kind::SineGordon { c } => {
                let (u, v) = y.split_at(n);
                let (du, dv) = out.split_at_mut(n);
                du.copy_from_slice(v);
                laplacian(u, self.h, dv);
                for i in 0..n {
                    dv[i] -= c * u[i].sin();
                }
            }
        }
    }
}

impl Stepper for Rk4 {
    fn max_dt(&self) -> f64 {
        let h2 = self.h * self.h;
        match self.kind {
            Kind::Heat { c } => self.cfl * RK4_REAL * h2 / (4.0 * c),
            Kind::Porous { m } => {
                let umax = max_abs(&self.state);
                let rate = 4.0 * m as f64 * umax.powi(m - 1) / h2;
                if rate > 0.0 {
                    self.cfl * RK4_REAL / rate
                } else {
                    f64::INFINITY
                }
            }
            Kind::KleinGordon { c2, mass } => self.cfl * RK4_IMAG / (4.0 * c2 / h2 + mass).sqrt(),
            Kind::SineGordon { c } => self.cfl * RK4_IMAG / (4.0 / h2 + c.abs()).sqrt(),
        }
    }

    fn step(&mut self, dt: f64) {
        let len = self.state.len();
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);
        self.rhs(&self.state, &mut k[0]);
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..len {
                tmp[i] = self.state[i] + frac * dt * k[stage - 1][i];
            }
            self.rhs(&tmp, &mut k[stage]);
        }
        for i in 0..len {
            self.state[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        self.k = k;
        self.tmp = tmp;
    }

    fn snapshot(&self) -> Vec<f64> {
        self.state[..self.n].to_vec()
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.state)
    }
}

/// `u_t = -ε² D4 u - 3 D2(u²)` with the discrete operators applied in Fourier
/// space. The fourth-order term is Crank-Nicolson, the rest Adams-Bashforth 2.
struct CahnHilliard {
    u: Vec<f64>,
    h: f64,
    cfl: f64,
    /// Symbol of the second-difference operator.
    d2: Vec<f64>,
    lin: Vec<f64>,
    /// Nonlinear term and step size of the previous step.
    prev: Option<(Vec<Complex<f64>>, f64)>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CahnHilliard {
    fn new(eps: f64, u0: Vec<f64>, h: f64, cfl: f64) -> Self {
        let n = u0.len();
        let d2: Vec<f64> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * j as f64 / n as f64;
                -4.0 / (h * h) * theta.sin().powi(2)
            })
            .collect();
        let lin = d2.iter().map(|s| -eps * eps * s * s).collect();
        let mut planner = FftPlanner::new();
        CahnHilliard {
            u: u0,
            h,
            cfl,
            d2,
            lin,
            prev: None,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn nonlinear_hat(&self) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = self.u.iter().map(|u| Complex::new(u * u, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.d2) {
            *b *= -3.0 * s;
        }
        buf
    }
}

impl Stepper for CahnHilliard {
    fn max_dt(&self) -> f64 {
        // Explicit second-order part with coefficient 6|u|.
        let umax = max_abs(&self.u).max(1e-12);
        self.cfl * self.h * self.h / (24.0 * umax)
    }

    fn step(&mut self, dt: f64) {
        let n = self.u.len();
        let nl = self.nonlinear_hat();
        let mut uh: Vec<Complex<f64>> = self.u.iter().map(|&u| Complex::new(u, 0.0)).collect();
        self.fwd.process(&mut uh);
        // Variable-step Adams-Bashforth weights.
        let w = self.prev.as_ref().map(|(_, dt_prev)| 0.5 * dt / dt_prev);
        for j in 0..n {
            let explicit = match (&self.prev, w) {
                (Some((p, _)), Some(w)) => (1.0 + w) * nl[j] - w * p[j],
                _ => nl[j],
            };
            let l = self.lin[j];
            uh[j] = ((1.0 + 0.5 * dt * l) * uh[j] + dt * explicit) / (1.0 - 0.5 * dt * l);
        }
        self.inv.process(&mut uh);
        let scale = 1.0 / n as f64;
        for (u, c) in self.u.iter_mut().zip(&uh) {
            *u = c.re * scale;
        }
        self.prev = Some((nl, dt));
    }

    fn snapshot(&self) -> Vec<f64> {
        self.u.clone()
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.u)
    }
}
