//! Exact transport solutions and the pseudo-spectral KdV integrator.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{all_finite, max_abs, Stepper};
use crate::pde_zoo::{InitialCondition, PdeFamily, PdeInstance};

/// Advection: `u0(x - βt)`. Wave with zero initial velocity:
/// `(u0(x - √β t) + u0(x + √β t)) / 2`. Both wrap periodically.
pub(super) fn exact_transport(inst: &PdeInstance, ic: &InitialCondition, xs: &[f64]) -> Vec<Vec<f64>> {
    let beta = inst.param("beta");
    let l = inst.x_final;
    let at = |x: f64| ic.eval(x.rem_euclid(l));
    inst.times
        .iter()
        .map(|&t| match inst.family {
            PdeFamily::Wave => {
                let s = beta.sqrt() * t;
                xs.iter().map(|&x| 0.5 * (at(x - s) + at(x + s))).collect()
            }
            _ => xs.iter().map(|&x| at(x - beta * t)).collect(),
        })
        .collect()
}

/// `u_t + δ² u_xxx + u u_x = 0`, periodic. The dispersive term is integrated
/// exactly through an integrating factor, the rest with RK4, and the
/// quadratic term is dealiased with the 2/3 rule.
pub(super) struct KdvStepper {
    uh: Vec<Complex<f64>>,
    /// `i k` per mode.
    ik: Vec<f64>,
    /// `δ² k³`: the linear part is `exp(i δ² k³ t)`.
    disp: Vec<f64>,
    mask: Vec<bool>,
    k_max: f64,
    cfl: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    u: Vec<f64>,
}

impl KdvStepper {
    pub(super) fn new(delta: f64, u0: Vec<f64>, length: f64, cfl: f64) -> Self {
        let n = u0.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let wavenumber = |j: usize| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * m / length
        };
        let ik: Vec<f64> = (0..n)
            .map(|j| if j == n / 2 { 0.0 } else { wavenumber(j) })
            .collect();
        let disp = ik.iter().map(|k| delta * delta * k.powi(3)).collect();
        let cutoff = n / 3;
        let mask: Vec<bool> = (0..n).map(|j| j.min(n - j) <= cutoff).collect();
        let mut uh: Vec<Complex<f64>> = u0.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut uh);
        KdvStepper {
            uh,
            ik,
            disp,
            mask,
            k_max: 2.0 * PI * cutoff as f64 / length,
            cfl,
            fwd,
            inv,
            u: u0,
        }
    }

    fn to_physical(&self, vh: &[Complex<f64>]) -> Vec<f64> {
        let mut buf = vh.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / buf.len() as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// `-(u²/2)_x` in Fourier space.
    fn nonlinear(&self, vh: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let u = self.to_physical(vh);
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(0.5 * v * v, 0.0)).collect();
        self.fwd.process(&mut buf);
        for j in 0..buf.len() {
            buf[j] = if self.mask[j] {
                -Complex::new(0.0, self.ik[j]) * buf[j]
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        buf
    }
}

impl Stepper for KdvStepper {
    fn max_dt(&self) -> f64 {
        let umax = max_abs(&self.u).max(1e-12);
        self.cfl * 2.8 / (self.k_max * umax)
    }

    fn step(&mut self, dt: f64) {
        let n = self.uh.len();
        let e: Vec<Complex<f64>> = self.disp.iter().map(|&w| Complex::from_polar(1.0, 0.5 * w * dt)).collect();
        let e2: Vec<Complex<f64>> = e.iter().map(|z| z * z).collect();
        let u = &self.uh;
        let a: Vec<Complex<f64>> = self.nonlinear(u).into_iter().map(|z| z * dt).collect();
        let arg: Vec<Complex<f64>> = (0..n).map(|j| e[j] * (u[j] + 0.5 * a[j])).collect();
        let b: Vec<Complex<f64>> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        let arg: Vec<Complex<f64>> = (0..n).map(|j| e[j] * u[j] + 0.5 * b[j]).collect();
        let c: Vec<Complex<f64>> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        let arg: Vec<Complex<f64>> = (0..n).map(|j| e2[j] * u[j] + e[j] * c[j]).collect();
        let d: Vec<Complex<f64>> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        let next: Vec<Complex<f64>> = (0..n)
            .map(|j| e2[j] * u[j] + (e2[j] * a[j] + 2.0 * e[j] * (b[j] + c[j]) + d[j]) / 6.0)
            .collect();
        self.uh = next;
        self.u = self.to_physical(&self.uh);
    }

    fn snapshot(&self) -> Vec<f64> {
        self.u.clone()
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `3c sech²(√c (x - x0 - ct) / (2δ))` solves `u_t + u u_x + δ² u_xxx = 0`.
    fn soliton(c: f64, delta: f64, x0: f64, x: f64, t: f64, length: f64) -> f64 {
        let mut d = (x - x0 - c * t).rem_euclid(length);
        if d > 0.5 * length {
            d -= length;
        }
        3.0 * c / (c.sqrt() * d / (2.0 * delta)).cosh().powi(2)
    }

    #[test]
    fn kdv_soliton_travels_at_its_speed() {
        let (c, delta, l, n) = (0.5, 0.022, 2.0, 512);
        let xs: Vec<f64> = (0..n).map(|i| l * i as f64 / n as f64).collect();
        let u0 = xs.iter().map(|&x| soliton(c, delta, 0.5, x, 0.0, l)).collect();
        let mut s = KdvStepper::new(delta, u0, l, 0.5);
        let t_end = 1.0;
        let mut t = 0.0;
        while t < t_end {
            let dt = s.max_dt().min(t_end - t);
            s.step(dt);
            t += dt;
        }
        let err = xs
            .iter()
            .zip(&s.u)
            .map(|(&x, &u)| (u - soliton(c, delta, 0.5, x, t_end, l)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3 * 3.0 * c, "{err}");
    }
}
