//! Prefix (Polish) notation codec.
//!
//! Constants are written as three tokens: sign, a three-digit mantissa and a
//! base-10 exponent, so `c = ±m·10^e` with `100 <= m <= 999` on encode.

use super::tree::Expr;
use super::vocab::{Token, MAX_EXPONENT, MIN_EXPONENT};
use super::ExprError;

/// Longest token sequence (without SOS/EOS) accepted by the decoder.
pub const MAX_DECODE_LEN: usize = 64;

pub const MIN_MAGNITUDE: f64 = 1e-10;
pub const MAX_MAGNITUDE: f64 = 1e10;

/// A constant rounded to three significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub negative: bool,
    pub mantissa: u16,
    pub exponent: i8,
}

impl Quantized {
    pub fn value(&self) -> f64 {
        let m = self.mantissa as f64;
        let e = self.exponent as i32;
        // Powers of ten up to 1e22 are exact, so dividing keeps the value as
        // close as possible to the decimal it represents.
        let mag = if e >= 0 { m * 10f64.powi(e) } else { m / 10f64.powi(-e) };
        if self.negative {
            -mag
        } else {
            mag
        }
    }
}

pub fn quantize(c: f64) -> Result<Quantized, ExprError> {
    let mag = c.abs();
    if !mag.is_finite() || !(MIN_MAGNITUDE..=MAX_MAGNITUDE).contains(&mag) {
        return Err(ExprError::ConstantOutOfRange(c));
    }
    let mut exponent = mag.log10().floor() as i32 - 2;
    let scaled = |e: i32| if e >= 0 { mag / 10f64.powi(e) } else { mag * 10f64.powi(-e) };
    let mut m = scaled(exponent).round();
    if m >= 1000.0 {
        exponent += 1;
        m = scaled(exponent).round();
    } else if m < 100.0 {
        exponent -= 1;
        m = scaled(exponent).round();
    }
    debug_assert!((100.0..1000.0).contains(&m), "mantissa {m} for {c}");
    if !(MIN_EXPONENT as i32..=MAX_EXPONENT as i32).contains(&exponent) {
        return Err(ExprError::ConstantOutOfRange(c));
    }
    Ok(Quantized {
        negative: c < 0.0,
        mantissa: m as u16,
        exponent: exponent as i8,
    })
}

/// Value of `c` after the three-significant-digit round trip.
pub fn quantized_value(c: f64) -> Result<f64, ExprError> {
    quantize(c).map(|q| q.value())
}

/// Pre-order serialization of `tree`.
pub fn encode_polish(tree: &Expr) -> Result<Vec<Token>, ExprError> {
    tree.validate()?;
    let mut out = Vec::with_capacity(tree.node_count() * 2);
    encode_into(tree, &mut out)?;
    Ok(out)
}

fn encode_into(tree: &Expr, out: &mut Vec<Token>) -> Result<(), ExprError> {
    match tree {
        Expr::Const(c) => {
            let q = quantize(*c)?;
            out.push(Token::Sign(q.negative));
            out.push(Token::Mantissa(q.mantissa));
            out.push(Token::Exponent(q.exponent));
        }
        Expr::Coeff => out.push(Token::Coeff),
        Expr::Var(v) => out.push(Token::Var(*v)),
        Expr::Field(f) => out.push(Token::Field(*f)),
        Expr::Unary(op, a) => {
            out.push(Token::Unary(*op));
            encode_into(a, out)?;
        }
        Expr::Binary(op, a, b) => {
            out.push(Token::Binary(*op));
            encode_into(a, out)?;
            encode_into(b, out)?;
        }
    }
    Ok(())
}

/// Parses a prefix sequence into a tree. Any sequence is accepted as input;
/// malformed ones produce an error.
pub fn decode_polish(tokens: &[Token]) -> Result<Expr, ExprError> {
    if tokens.is_empty() {
        return Err(ExprError::Truncated);
    }
    if tokens.len() > MAX_DECODE_LEN {
        return Err(ExprError::TooLong(tokens.len()));
    }
    let mut pos = 0;
    let tree = parse(tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(ExprError::TrailingTokens(tokens.len() - pos));
    }
    Ok(tree)
}

fn parse(tokens: &[Token], pos: &mut usize) -> Result<Expr, ExprError> {
    let tok = *tokens.get(*pos).ok_or(ExprError::Truncated)?;
    *pos += 1;
    match tok {
        Token::Binary(op) => {
            let a = parse(tokens, pos)?;
            let b = parse(tokens, pos)?;
            Ok(Expr::binary(op, a, b))
        }
        Token::Unary(op) => Ok(Expr::unary(op, parse(tokens, pos)?)),
        Token::Var(v) => Ok(Expr::Var(v)),
        Token::Field(f) => Ok(Expr::Field(f)),
        Token::Coeff => Ok(Expr::Coeff),
        Token::Sign(negative) => {
            let m = match tokens.get(*pos) {
                Some(Token::Mantissa(m)) => *m,
                Some(_) => return Err(ExprError::MalformedNumber(*pos)),
                None => return Err(ExprError::Truncated),
            };
            let e = match tokens.get(*pos + 1) {
                Some(Token::Exponent(e)) => *e,
                Some(_) => return Err(ExprError::MalformedNumber(*pos + 1)),
                None => return Err(ExprError::Truncated),
            };
            *pos += 2;
            Ok(Expr::Const(
                Quantized {
                    negative,
                    mantissa: m,
                    exponent: e,
                }
                .value(),
            ))
        }
        Token::Mantissa(_) | Token::Exponent(_) => Err(ExprError::MalformedNumber(*pos - 1)),
        Token::Pad | Token::Sos | Token::Eos => Err(ExprError::UnexpectedToken(tok.text(), *pos - 1)),
    }
}

/// Arity scan: returns true iff the sequence is a single complete prefix
/// expression, i.e. the open-slot counter first reaches zero at the last token.
pub fn is_prefix_complete(tokens: &[Token]) -> bool {
    let mut need: i64 = 1;
    let mut i = 0;
    while i < tokens.len() {
        if need == 0 {
            return false;
        }
        match tokens[i] {
            Token::Binary(_) => need += 1,
            Token::Unary(_) => {}
            Token::Sign(_) => {
                if !matches!(tokens.get(i + 1), Some(Token::Mantissa(_)))
                    || !matches!(tokens.get(i + 2), Some(Token::Exponent(_)))
                {
                    return false;
                }
                i += 2;
                need -= 1;
            }
            Token::Var(_) | Token::Field(_) | Token::Coeff => need -= 1,
            _ => return false,
        }
        i += 1;
    }
    need == 0
}
