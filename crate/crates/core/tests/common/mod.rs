//! Independent oracles shared by the acceptance harness and the unit tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use prose_core::expr::{eval_operator_on_poly, Expr, ExprError, Field, PolyTestFn, SymbolGrid};

fn rat(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coefficient")
}

fn int(k: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(k))
}

fn horner(coeffs: &[BigRational], x: &BigRational) -> BigRational {
    coeffs.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
}

/// Central difference weights `(offset, weight)` and the power of `h` in the
/// denominator. All stencils are exact on polynomials of degree <= 4.
fn stencil(order: usize) -> (Vec<(i64, BigRational)>, i32, BigRational) {
    let w = |pairs: &[(i64, i64)]| pairs.iter().map(|&(o, c)| (o, int(c))).collect::<Vec<_>>();
    match order {
        0 => (w(&[(0, 1)]), 0, int(1)),
        1 => (w(&[(-2, 1), (-1, -8), (1, 8), (2, -1)]), 1, int(12)),
        2 => (w(&[(-2, -1), (-1, 16), (0, -30), (1, 16), (2, -1)]), 2, int(12)),
        3 => (w(&[(-3, 1), (-2, -8), (-1, 13), (1, -13), (2, 8), (3, -1)]), 3, int(8)),
        4 => (w(&[(-2, 1), (-1, -4), (0, 6), (1, -4), (2, 1)]), 4, int(1)),
        _ => unreachable!(),
    }
}

/// Three-point stencils in time, exact on quadratics.
fn time_stencil(order: usize) -> (Vec<(i64, BigRational)>, i32, BigRational) {
    match order {
        0 => (vec![(0, int(1))], 0, int(1)),
        1 => (vec![(-1, int(-1)), (1, int(1))], 1, int(2)),
        2 => (vec![(-1, int(1)), (0, int(-2)), (1, int(1))], 2, int(1)),
        _ => unreachable!(),
    }
}

fn apply(
    coeffs: &[BigRational],
    at: &BigRational,
    h: &BigRational,
    (weights, power, denom): (Vec<(i64, BigRational)>, i32, BigRational),
) -> BigRational {
    let mut acc = BigRational::zero();
    for (o, c) in weights {
        acc += c * horner(coeffs, &(at + h * int(o)));
    }
    acc / (denom * num_traits::pow(h.clone(), power as usize))
}

/// Evaluates `tree` on `p` with every derivative replaced by an exact-arithmetic
/// finite difference on a 10x refined spacing. Independent of the
/// coefficient-differentiation path in the library.
pub fn fd_operator_on_poly(tree: &Expr, p: &PolyTestFn, grid: &SymbolGrid) -> Result<Vec<f64>, ExprError> {
    let space: Vec<BigRational> = p.space.iter().map(|&c| rat(c)).collect();
    let time: Vec<BigRational> = p.time.iter().map(|&c| rat(c)).collect();
    let hx = rat(grid.x(1)) / int(10);
    let ht = rat(grid.t(1)) / int(10);
    let xs: Vec<[f64; 5]> = (0..grid.nx)
        .map(|i| {
            let x = rat(grid.x(i));
            std::array::from_fn(|k| apply(&space, &x, &hx, stencil(k)).to_f64().unwrap())
        })
        .collect();
    let ts: Vec<[f64; 3]> = (0..grid.nt)
        .map(|j| {
            let t = rat(grid.t(j));
            std::array::from_fn(|k| apply(&time, &t, &ht, time_stencil(k)).to_f64().unwrap())
        })
        .collect();
    let mut out = Vec::with_capacity(grid.nx * grid.nt);
    for (j, tv) in ts.iter().enumerate() {
        for (i, xv) in xs.iter().enumerate() {
            let lookup = |f: Field| {
                let (ox, ot) = f.orders();
                xv[ox] * tv[ot]
            };
            out.push(tree.eval_point(grid.x(i), grid.t(j), &lookup)?);
        }
    }
    Ok(out)
}

/// True when a relative perturbation of 1e-12 in every field value moves the
/// result by less than 1e-9 in relative L2. Trees such as `sin(u_xx^4 u)` with
/// arguments near 1e13 amplify last-bit differences and are not comparable.
pub fn well_conditioned(tree: &Expr, p: &PolyTestFn, grid: &SymbolGrid) -> bool {
    let eval = |scale: f64| -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.nx * grid.nt);
        for j in 0..grid.nt {
            for i in 0..grid.nx {
                let (x, t) = (grid.x(i), grid.t(j));
                out.push(tree.eval_point(x, t, &|f| p.eval_field(f, x, t) * scale).ok()?);
            }
        }
        Some(out)
    };
    match (eval(1.0), eval(1.0 + 1e-12)) {
        (Some(a), Some(b)) => {
            let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            let den: f64 = a.iter().map(|x| x * x).sum();
            num.is_finite() && (num / den.max(1e-300)).sqrt() < 1e-9
        }
        _ => false,
    }
}

/// Relative L2 distance between the library evaluation and the oracle, or
/// `None` when the library rejects the tree or the tree is ill-conditioned.
pub fn fd_discrepancy(tree: &Expr, p: &PolyTestFn, grid: &SymbolGrid) -> Option<f64> {
    if !well_conditioned(tree, p, grid) {
        return None;
    }
    let lib = eval_operator_on_poly(tree, p, grid).ok()?;
    let fd = fd_operator_on_poly(tree, p, grid).ok()?;
    let num: f64 = lib.values.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = fd.iter().map(|b| b * b).sum();
    Some((num / den.max(1e-300)).sqrt())
}
