use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Sin,
    Cos,
    Exp,
    Neg,
    /// Integer power; only exponents 2..=4 are representable in the vocabulary.
    Pow(u8),
}

/// Independent variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    T,
}

/// The unknown field and its partial derivatives, all treated as leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    U,
    Ut,
    Utt,
    Ux,
    Uxx,
    Uxxx,
    Uxxxx,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::U,
        Field::Ut,
        Field::Utt,
        Field::Ux,
        Field::Uxx,
        Field::Uxxx,
        Field::Uxxxx,
    ];

    /// (order in x, order in t)
    pub fn orders(self) -> (usize, usize) {
        match self {
            Field::U => (0, 0),
            Field::Ut => (0, 1),
            Field::Utt => (0, 2),
            Field::Ux => (1, 0),
            Field::Uxx => (2, 0),
            Field::Uxxx => (3, 0),
            Field::Uxxxx => (4, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::Ut => "u_t",
            Field::Utt => "u_tt",
            Field::Ux => "u_x",
            Field::Uxx => "u_xx",
            Field::Uxxx => "u_xxx",
            Field::Uxxxx => "u_xxxx",
        }
    }
}

/// Expression tree of a PDE residual. Arity is carried by the variant, so a
/// well-typed value always has the right number of children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    /// Placeholder for an unknown coefficient.
    Coeff,
    Var(Var),
    Field(Field),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn c(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn field(f: Field) -> Expr {
        Expr::Field(f)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, a, b)
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, a)
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, a)
    }

    pub fn pow(a: Expr, n: u8) -> Expr {
        Expr::unary(UnaryOp::Pow(n), a)
    }

    /// Checks the invariants the type system cannot express: finite constants
    /// and representable integer powers.
    pub fn validate(&self) -> Result<(), ExprError> {
        match self {
            Expr::Const(v) if !v.is_finite() => Err(ExprError::NonFiniteConstant(*v)),
            Expr::Const(_) | Expr::Coeff | Expr::Var(_) | Expr::Field(_) => Ok(()),
            Expr::Unary(UnaryOp::Pow(n), _) if !(2..=4).contains(n) => {
                Err(ExprError::UnsupportedPower(*n))
            }
            Expr::Unary(_, a) => a.validate(),
            Expr::Binary(_, a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
            _ => 1,
        }
    }

    /// Visits every leaf in pre-order.
    pub fn for_each_leaf(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Expr::Unary(_, a) => a.for_each_leaf(f),
            Expr::Binary(_, a, b) => {
                a.for_each_leaf(f);
                b.for_each_leaf(f);
            }
            leaf => f(leaf),
        }
    }

    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_leaf(&mut |e| {
            if let Expr::Const(v) = e {
                out.push(*v);
            }
        });
        out
    }

    pub fn has_coeff(&self) -> bool {
        let mut found = false;
        self.for_each_leaf(&mut |e| found |= matches!(e, Expr::Coeff));
        found
    }

    /// Highest derivative orders (x, t) appearing in the tree.
    pub fn max_orders(&self) -> (usize, usize) {
        let mut ox = 0;
        let mut ot = 0;
        self.for_each_leaf(&mut |e| {
            if let Expr::Field(f) = e {
                let (x, t) = f.orders();
                ox = ox.max(x);
                ot = ot.max(t);
            }
        });
        (ox, ot)
    }

    /// Replaces every numeric constant by the coefficient placeholder.
    pub fn skeletonize(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Coeff,
            Expr::Unary(op, a) => Expr::unary(*op, a.skeletonize()),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.skeletonize(), b.skeletonize()),
            leaf => leaf.clone(),
        }
    }

    /// Maps every constant through `f`, keeping the structure.
    pub fn map_constants(&self, f: &impl Fn(f64) -> f64) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(f(*v)),
            Expr::Unary(op, a) => Expr::unary(*op, a.map_constants(f)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.map_constants(f), b.map_constants(f)),
            leaf => leaf.clone(),
        }
    }

    /// Pointwise evaluation given the values of the variables and field symbols.
    pub fn eval_point(&self, x: f64, t: f64, fields: &impl Fn(Field) -> f64) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Coeff => return Err(ExprError::PlaceholderEvaluation),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Field(f) => fields(*f),
            Expr::Unary(op, a) => {
                let a = a.eval_point(x, t, fields)?;
                match op {
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Neg => -a,
                    UnaryOp::Pow(n) => a.powi(*n as i32),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_point(x, t, fields)?;
                let b = b.eval_point(x, t, fields)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b.abs() < 1e-12 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Coeff => write!(f, "C"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Field(s) => write!(f, "{}", s.name()),
            Expr::Unary(op, a) => match op {
                UnaryOp::Sin => write!(f, "sin({a})"),
                UnaryOp::Cos => write!(f, "cos({a})"),
                UnaryOp::Exp => write!(f, "exp({a})"),
                UnaryOp::Neg => write!(f, "-({a})"),
                UnaryOp::Pow(n) => write!(f, "({a})^{n}"),
            },
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}
