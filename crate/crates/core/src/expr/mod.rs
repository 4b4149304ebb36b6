//! Expression trees for PDE residuals and their token encoding.

mod codec;
mod poly;
mod tree;
mod vocab;

pub use codec::{
    decode_polish, encode_polish, is_prefix_complete, quantize, quantized_value, Quantized, MAX_DECODE_LEN,
    MAX_MAGNITUDE, MIN_MAGNITUDE,
};
pub use poly::{eval_operator_on_poly, symbol_error, GridValues, PolyTestFn, SymbolGrid};
pub use tree::{BinaryOp, Expr, Field, UnaryOp, Var};
pub use vocab::{Token, Vocab, MAX_EXPONENT, MIN_EXPONENT, VOCAB_VERSION};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("constant {0} outside the encodable magnitude range [1e-10, 1e10]")]
    ConstantOutOfRange(f64),
    #[error("non-finite constant {0}")]
    NonFiniteConstant(f64),
    #[error("integer power {0} not representable")]
    UnsupportedPower(u8),
    #[error("sequence ended before the expression was complete")]
    Truncated,
    #[error("{0} tokens left over after a complete expression")]
    TrailingTokens(usize),
    #[error("malformed number triplet at position {0}")]
    MalformedNumber(usize),
    #[error("unexpected token {0} at position {1}")]
    UnexpectedToken(String, usize),
    #[error("sequence of {0} tokens exceeds the decode limit")]
    TooLong(usize),
    #[error("token id {0} not in vocabulary")]
    UnknownTokenId(u16),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("division by a value below 1e-12 in magnitude")]
    DivisionByZero,
    #[error("coefficient placeholder cannot be evaluated")]
    PlaceholderEvaluation,
    #[error("expression evaluated to a non-finite value")]
    NonFiniteValue,
    #[error("degenerate metric: denominator norm {0:e}")]
    DegenerateMetric(f64),
}

/// Decodes model output ids: strips a leading SOS, stops at the first EOS.
/// A sequence without EOS is reported as truncated.
pub fn decode_ids(vocab: &Vocab, ids: &[u16]) -> Result<Expr, ExprError> {
    let body = match ids.first() {
        Some(&id) if id == vocab.sos_id() => &ids[1..],
        _ => ids,
    };
    let end = body
        .iter()
        .position(|&id| id == vocab.eos_id())
        .ok_or(ExprError::Truncated)?;
    let tokens = vocab.tokens_of(&body[..end])?;
    decode_polish(&tokens)
}

/// `SOS tokens EOS` as vocabulary ids.
pub fn encode_ids(vocab: &Vocab, tree: &Expr) -> Result<Vec<u16>, ExprError> {
    let tokens = encode_polish(tree)?;
    let mut ids = Vec::with_capacity(tokens.len() + 2);
    ids.push(vocab.sos_id());
    ids.extend(tokens.iter().map(|t| vocab.id(*t)));
    ids.push(vocab.eos_id());
    Ok(ids)
}

/// Random tree over the full vocabulary, used by codec property checks.
/// Constants are log-uniform in the encodable range with random sign.
pub fn random_tree(rng: &mut impl Rng, max_depth: usize) -> Expr {
    let leaf = |rng: &mut dyn rand::RngCore| -> Expr {
        match rng.random_range(0..4) {
            0 => {
                let mag = 10f64.powf(rng.random_range(-9.9..9.9));
                Expr::Const(if rng.random_bool(0.5) { mag } else { -mag })
            }
            1 => Expr::Var(if rng.random_bool(0.5) { Var::X } else { Var::T }),
            2 => Expr::Coeff,
            _ => Expr::Field(Field::ALL[rng.random_range(0..Field::ALL.len())]),
        }
    };
    if max_depth <= 1 || rng.random_bool(0.3) {
        return leaf(rng);
    }
    match rng.random_range(0..3) {
        0 => {
            let op = match rng.random_range(0..7) {
                0 => UnaryOp::Sin,
                1 => UnaryOp::Cos,
                2 => UnaryOp::Exp,
                3 => UnaryOp::Neg,
                n => UnaryOp::Pow(n as u8 - 2),
            };
            Expr::unary(op, random_tree(rng, max_depth - 1))
        }
        _ => {
            let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div][rng.random_range(0..4)];
            Expr::binary(op, random_tree(rng, max_depth - 1), random_tree(rng, max_depth - 1))
        }
    }
}
