use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::tree::{BinaryOp, Field, UnaryOp, Var};
use super::ExprError;

pub const VOCAB_VERSION: u32 = 1;
pub const MIN_EXPONENT: i8 = -12;
pub const MAX_EXPONENT: i8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Sos,
    Eos,
    Coeff,
    Binary(BinaryOp),
    Unary(UnaryOp),
    Var(Var),
    Field(Field),
    /// `true` for a negative sign.
    Sign(bool),
    /// Three decimal digits, 0..=999.
    Mantissa(u16),
    /// Base-10 exponent in `MIN_EXPONENT..=MAX_EXPONENT`.
    Exponent(i8),
}

impl Token {
    pub fn text(&self) -> String {
        match self {
            Token::Pad => "<PAD>".into(),
            Token::Sos => "<SOS>".into(),
            Token::Eos => "<EOS>".into(),
            Token::Coeff => "<COEFF>".into(),
            Token::Binary(op) => match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            }
            .into(),
            Token::Unary(op) => match op {
                UnaryOp::Sin => "sin".into(),
                UnaryOp::Cos => "cos".into(),
                UnaryOp::Exp => "exp".into(),
                UnaryOp::Neg => "neg".into(),
                UnaryOp::Pow(n) => format!("pow{n}"),
            },
            Token::Var(Var::X) => "x".into(),
            Token::Var(Var::T) => "t".into(),
            Token::Field(f) => f.name().into(),
            Token::Sign(false) => "+".into(),
            Token::Sign(true) => "-".into(),
            Token::Mantissa(m) => format!("{m:03}"),
            Token::Exponent(e) => format!("E{e}"),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Fixed token vocabulary shared by dataset shards and model checkpoints.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<Token>,
    index: HashMap<Token, u16>,
    by_text: HashMap<String, u16>,
}

impl Vocab {
    fn build() -> Vocab {
        let mut tokens = vec![Token::Pad, Token::Sos, Token::Eos, Token::Coeff];
        for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div] {
            tokens.push(Token::Binary(op));
        }
        for op in [
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Exp,
            UnaryOp::Neg,
            UnaryOp::Pow(2),
            UnaryOp::Pow(3),
            UnaryOp::Pow(4),
        ] {
            tokens.push(Token::Unary(op));
        }
        tokens.push(Token::Var(Var::X));
        tokens.push(Token::Var(Var::T));
        tokens.extend(Field::ALL.iter().map(|f| Token::Field(*f)));
        tokens.push(Token::Sign(false));
        tokens.push(Token::Sign(true));
        tokens.extend((0..1000u16).map(Token::Mantissa));
        tokens.extend((MIN_EXPONENT..=MAX_EXPONENT).map(Token::Exponent));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<Token>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (*t, i as u16)).collect();
        let by_text = tokens.iter().enumerate().map(|(i, t)| (t.text(), i as u16)).collect();
        Vocab {
            tokens,
            index,
            by_text,
        }
    }

    /// The process-wide vocabulary.
    pub fn global() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(Vocab::build)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: Token) -> u16 {
        self.index[&token]
    }

    pub fn token(&self, id: u16) -> Option<Token> {
        self.tokens.get(id as usize).copied()
    }

    pub fn pad_id(&self) -> u16 {
        self.id(Token::Pad)
    }

    pub fn sos_id(&self) -> u16 {
        self.id(Token::Sos)
    }

    pub fn eos_id(&self) -> u16 {
        self.id(Token::Eos)
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<u16> {
        tokens.iter().map(|t| self.id(*t)).collect()
    }

    pub fn tokens_of(&self, ids: &[u16]) -> Result<Vec<Token>, ExprError> {
        ids.iter()
            .map(|&id| self.token(id).ok_or(ExprError::UnknownTokenId(id)))
            .collect()
    }

    pub fn lookup_text(&self, text: &str) -> Option<Token> {
        self.by_text.get(text).map(|&i| self.tokens[i as usize])
    }

    /// Text serialization: a version header line followed by one token per
    /// line, where the token id is its index among the token lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("# prose-vocab v{VOCAB_VERSION}\n");
        for t in &self.tokens {
            s.push_str(&t.text());
            s.push('\n');
        }
        s
    }

    /// Parses a vocabulary file and checks that it matches this build's vocabulary.
    pub fn from_text(text: &str) -> Result<Vocab, ExprError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let expected = format!("# prose-vocab v{VOCAB_VERSION}");
        if header.trim() != expected {
            return Err(ExprError::VocabMismatch(format!(
                "unexpected header {header:?}, want {expected:?}"
            )));
        }
        let reference = Vocab::global();
        let mut tokens = Vec::new();
        for (i, line) in lines.enumerate() {
            let tok = reference
                .lookup_text(line.trim_end())
                .ok_or_else(|| ExprError::VocabMismatch(format!("unknown token {line:?} at id {i}")))?;
            tokens.push(tok);
        }
        if tokens != reference.tokens {
            return Err(ExprError::VocabMismatch("token order differs".into()));
        }
        Ok(Vocab::from_tokens(tokens))
    }

    /// Hex SHA-256 of the text serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_unique() {
        let v = Vocab::global();
        for id in 0..v.len() as u16 {
            let t = v.token(id).unwrap();
            assert_eq!(v.id(t), id);
        }
        assert_eq!(v.pad_id(), 0);
        assert!(v.len() < 2000);
    }

    #[test]
    fn text_roundtrip_and_hash_stable() {
        let v = Vocab::global();
        let text = v.to_text();
        let parsed = Vocab::from_text(&text).unwrap();
        assert_eq!(parsed.hash(), v.hash());
        assert!(Vocab::from_text(&text.replace("cos\n", "cosine\n")).is_err());
        assert!(Vocab::from_text(&text.replace("v1", "v9")).is_err());
    }

    #[test]
    fn sign_tokens_distinct_from_operators() {
        let v = Vocab::global();
        assert_ne!(v.id(Token::Sign(false)), v.id(Token::Binary(BinaryOp::Add)));
        assert_eq!(v.lookup_text("E-5"), Some(Token::Exponent(-5)));
        assert_eq!(v.lookup_text("007"), Some(Token::Mantissa(7)));
    }
}
