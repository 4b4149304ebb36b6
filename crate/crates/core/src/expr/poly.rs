use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Expr, Field};
use super::ExprError;

/// Tensorized polynomial `P(x, t) = P1(x) · P2(t)` used to probe decoded
/// differential operators. Coefficients are stored lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTestFn {
    pub space: [f64; 5],
    pub time: [f64; 3],
}

/// Uniform evaluation grid for the symbolic metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolGrid {
    pub nx: usize,
    pub nt: usize,
    pub x_max: f64,
    pub t_max: f64,
}

impl Default for SymbolGrid {
    fn default() -> Self {
        SymbolGrid {
            nx: 128,
            nt: 64,
            x_max: 2.0,
            t_max: 2.0,
        }
    }
}

impl SymbolGrid {
    pub fn x(&self, i: usize) -> f64 {
        self.x_max * i as f64 / (self.nx - 1) as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t_max * j as f64 / (self.nt - 1) as f64
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Coefficients of the `order`-th derivative.
fn derivative(coeffs: &[f64], order: usize) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    for _ in 0..order {
        if c.len() <= 1 {
            return vec![0.0];
        }
        c = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
    }
    c
}

impl PolyTestFn {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut space = [0.0; 5];
        let mut time = [0.0; 3];
        for c in space.iter_mut().chain(time.iter_mut()) {
            *c = rng.random_range(-5.0..=5.0);
        }
        PolyTestFn { space, time }
    }

    /// Exact value of the field symbol `f` applied to `P` at `(x, t)`.
    pub fn eval_field(&self, f: Field, x: f64, t: f64) -> f64 {
        let (ox, ot) = f.orders();
        horner(&derivative(&self.space, ox), x) * horner(&derivative(&self.time, ot), t)
    }
}

/// Values of a residual expression on the grid, stored row-major as `[nt][nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValues {
    pub nt: usize,
    pub nx: usize,
    pub values: Vec<f64>,
}

impl GridValues {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Applies the differential operator `tree` to `p` exactly and evaluates the
/// result at every grid point.
pub fn eval_operator_on_poly(tree: &Expr, p: &PolyTestFn, grid: &SymbolGrid) -> Result<GridValues, ExprError> {
    tree.validate()?;
    // Derivative polynomials once per symbol, then pointwise products.
    let space: Vec<Vec<f64>> = (0..=4).map(|k| derivative(&p.space, k)).collect();
    let time: Vec<Vec<f64>> = (0..=2).map(|k| derivative(&p.time, k)).collect();
    let mut values = Vec::with_capacity(grid.nx * grid.nt);
    for j in 0..grid.nt {
        let t = grid.t(j);
        let tv: Vec<f64> = time.iter().map(|c| horner(c, t)).collect();
        for i in 0..grid.nx {
            let x = grid.x(i);
            let lookup = |f: Field| {
                let (ox, ot) = f.orders();
                horner(&space[ox], x) * tv[ot]
            };
            let v = tree.eval_point(x, t, &lookup)?;
            if !v.is_finite() {
                return Err(ExprError::NonFiniteValue);
            }
            values.push(v);
        }
    }
    Ok(GridValues {
        nt: grid.nt,
        nx: grid.nx,
        values,
    })
}

/// `‖f(P) − f̂(P)‖ / ‖f̂(P)‖`, with `f` the target and `f̂` the prediction.
pub fn symbol_error(target: &Expr, predicted: &Expr, p: &PolyTestFn, grid: &SymbolGrid) -> Result<f64, ExprError> {
    let f = eval_operator_on_poly(target, p, grid)?;
    let g = eval_operator_on_poly(predicted, p, grid)?;
    let denom = g.norm();
    if denom < 1e-12 {
        return Err(ExprError::DegenerateMetric(denom));
    }
    let num = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn p(space: [f64; 5], time: [f64; 3]) -> PolyTestFn {
        PolyTestFn { space, time }
    }

    #[test]
    fn time_derivative_of_t_is_one() {
        let v = eval_operator_on_poly(
            &Expr::field(Field::Ut),
            &p([1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            &SymbolGrid::default(),
        )
        .unwrap();
        assert_eq!(v.values.len(), 128 * 64);
        assert!(v.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn second_derivative_of_linear_vanishes() {
        let v = eval_operator_on_poly(
            &Expr::field(Field::Uxx),
            &p([3.0, -2.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0]),
            &SymbolGrid::default(),
        )
        .unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_derivative_matches_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = PolyTestFn::random(&mut rng);
        let grid = SymbolGrid::default();
        let v = eval_operator_on_poly(&Expr::field(Field::Ux), &q, &grid).unwrap();
        let [_, a1, a2, a3, a4] = q.space;
        let [b0, b1, b2] = q.time;
        for j in 0..grid.nt {
            for i in 0..grid.nx {
                let (x, t) = (grid.x(i), grid.t(j));
                let expect = (a1 + 2.0 * a2 * x + 3.0 * a3 * x * x + 4.0 * a4 * x * x * x) * (b0 + b1 * t + b2 * t * t);
                let got = v.values[j * grid.nx + i];
                assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn symbol_error_cases() {
        let q = p([1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let grid = SymbolGrid::default();
        let ut = Expr::field(Field::Ut);
        assert_eq!(symbol_error(&ut, &ut, &q, &grid).unwrap(), 0.0);
        let two_ut = Expr::mul(Expr::c(2.0), Expr::field(Field::Ut));
        assert!((symbol_error(&ut, &two_ut, &q, &grid).unwrap() - 0.5).abs() < 1e-15);
        let zero = Expr::mul(Expr::c(2.0), Expr::field(Field::Uxx));
        assert!(matches!(symbol_error(&ut, &zero, &q, &grid), Err(ExprError::DegenerateMetric(_))));
    }

    #[test]
    fn division_by_zero_and_placeholder_are_errors() {
        let q = p([1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let grid = SymbolGrid::default();
        let bad = Expr::div(Expr::field(Field::U), Expr::field(Field::Ux));
        assert!(matches!(eval_operator_on_poly(&bad, &q, &grid), Err(ExprError::DivisionByZero)));
        let skel = Expr::mul(Expr::Coeff, Expr::field(Field::U));
        assert!(matches!(eval_operator_on_poly(&skel, &q, &grid), Err(ExprError::PlaceholderEvaluation)));
    }
}
