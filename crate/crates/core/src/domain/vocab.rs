//! Whitespace-token vocabulary shared by tasks, policies and checkpoints.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::strategy::{hex_digest, Strategy};

pub type TokenId = usize;

pub const MAX_VOCAB: usize = 64;

const SPECIALS: [&str; 6] = ["PAD", "BOS", "SEP", "ANS", "LOCK", "OK"];
const OPERATORS: [&str; 3] = ["+", "-", "*"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("token id {0} out of range")]
    BadId(TokenId),
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

/// Ordered token list with resolved special ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    pub pad: TokenId,
    pub bos: TokenId,
    pub sep: TokenId,
    pub ans: TokenId,
    pub lock: TokenId,
    pub ok: TokenId,
    digits: [TokenId; 10],
    ops: [TokenId; 3],
    markers: [TokenId; 8],
}

impl Vocab {
    /// PAD BOS SEP ANS LOCK OK, digits 0-9, `+ - *`, markers M1..M8.
    pub fn standard() -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..10).map(|d| d.to_string()));
        tokens.extend(OPERATORS.iter().map(|s| s.to_string()));
        tokens.extend((1..=8).map(|k| format!("M{k}")));
        Vocab::from_tokens(tokens).expect("standard vocabulary is valid")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab, VocabError> {
        if tokens.len() > MAX_VOCAB {
            return Err(VocabError::Invalid(format!("{} tokens exceeds {MAX_VOCAB}", tokens.len())));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(VocabError::Invalid(format!("token {t:?} is empty or has whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(VocabError::Invalid(format!("duplicate token {t:?}")));
            }
        }
        let get = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| VocabError::Invalid(format!("missing required token {name:?}")))
        };
        let mut digits = [0; 10];
        for (d, slot) in digits.iter_mut().enumerate() {
            *slot = get(&d.to_string())?;
        }
        let mut ops = [0; 3];
        for (o, slot) in ops.iter_mut().enumerate() {
            *slot = get(OPERATORS[o])?;
        }
        let mut markers = [0; 8];
        for (k, slot) in markers.iter_mut().enumerate() {
            *slot = get(&format!("M{}", k + 1))?;
        }
        Ok(Vocab {
            pad: get("PAD")?,
            bos: get("BOS")?,
            sep: get("SEP")?,
            ans: get("ANS")?,
            lock: get("LOCK")?,
            ok: get("OK")?,
            tokens,
            index,
            digits,
            ops,
            markers,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn digit(&self, d: u8) -> TokenId {
        self.digits[d as usize]
    }

    /// Inverse of [`Vocab::digit`].
    pub fn digit_value(&self, id: TokenId) -> Option<u8> {
        self.digits.iter().position(|&t| t == id).map(|d| d as u8)
    }

    pub fn op(&self, op: Op) -> TokenId {
        self.ops[op as usize]
    }

    pub fn op_of(&self, id: TokenId) -> Option<Op> {
        self.ops.iter().position(|&t| t == id).map(|i| Op::ALL[i])
    }

    pub fn marker(&self, strategy: Strategy) -> Option<TokenId> {
        match strategy {
            Strategy::Termination => None,
            s => Some(self.markers[s.id() - 1]),
        }
    }

    pub fn is_marker(&self, id: TokenId) -> bool {
        self.markers.contains(&id)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        text.split_whitespace()
            .map(|sym| self.id(sym).ok_or_else(|| VocabError::UnknownToken(sym.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, VocabError> {
        let words = ids
            .iter()
            .map(|&id| self.token(id).ok_or(VocabError::BadId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }

    /// Hex SHA-256 of the newline-joined token list.
    pub fn hash(&self) -> String {
        hex_digest(self.tokens.join("\n").as_bytes())
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = VocabError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Add, Op::Sub, Op::Mul];

    /// Applies the operator and reduces to the non-negative residue.
    pub fn apply_mod(self, a: i64, b: i64, modulus: i64) -> i64 {
        let raw = match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
        };
        raw.rem_euclid(modulus)
    }
}
