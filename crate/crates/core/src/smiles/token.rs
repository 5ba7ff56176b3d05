use std::fmt;

use super::SmilesError;

/// Lexical class of a SMILES token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    /// Organic-subset atom (`C`, `Cl`, `c`) or a bracket expression (`[NH3+]`).
    Atom,
    /// One of `- = # : / \`.
    Bond,
    /// `1`..`9` or `%nn`.
    RingClosure,
    BranchOpen,
    BranchClose,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset of the first character in the source string.
    pub position: usize,
}

impl Token {
    /// Ring label for `RingClosure` tokens.
    pub fn ring_label(&self) -> Option<u32> {
        if self.kind != TokenKind::RingClosure {
            return None;
        }
        self.text.trim_start_matches('%').parse().ok()
    }

    pub fn is_bracket_atom(&self) -> bool {
        self.kind == TokenKind::Atom && self.text.starts_with('[')
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TokenKind::Atom if self.is_bracket_atom() => "BracketAtom",
            TokenKind::Atom => "Atom",
            TokenKind::Bond => "Bond",
            TokenKind::RingClosure => "Ring",
            TokenKind::BranchOpen => "BranchOpen",
            TokenKind::BranchClose => "BranchClose",
            TokenKind::Dot => "Dot",
        };
        write!(f, "{kind}({})", self.text)
    }
}

/// Ordered token stream for one SMILES string.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq(pub Vec<Token>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.0.iter()
    }

    /// Token texts, in order. Concatenating them reproduces the input.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|t| t.text.as_str())
    }

    pub fn concat(&self) -> String {
        self.texts().collect()
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Split a SMILES string into atom, bond, ring, branch and dot tokens.
pub fn tokenize(smiles: &str) -> Result<TokenSeq, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::Empty);
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let kind = match bytes[i] {
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&b| b == b']')
                    .ok_or(SmilesError::UnterminatedBracket { position: start })?;
                if bytes[i + 1..i + close].contains(&b'[') {
                    return Err(SmilesError::UnterminatedBracket { position: start });
                }
                i += close + 1;
                TokenKind::Atom
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => {
                i += 2;
                TokenKind::Atom
            }
            b'B' if bytes.get(i + 1) == Some(&b'r') => {
                i += 2;
                TokenKind::Atom
            }
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'b' | b'c' | b'n' | b'o' | b's' | b'p' => {
                i += 1;
                TokenKind::Atom
            }
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                i += 1;
                TokenKind::Bond
            }
            b'0'..=b'9' => {
                i += 1;
                TokenKind::RingClosure
            }
            b'%' => {
                let digits = bytes.get(i + 1..i + 3);
                match digits {
                    Some(d) if d.iter().all(u8::is_ascii_digit) => {
                        i += 3;
                        TokenKind::RingClosure
                    }
                    _ => return Err(SmilesError::UnknownCharacter { position: start }),
                }
            }
            b'(' => {
                i += 1;
                TokenKind::BranchOpen
            }
            b')' => {
                i += 1;
                TokenKind::BranchClose
            }
            b'.' => {
                i += 1;
                TokenKind::Dot
            }
            _ => return Err(SmilesError::UnknownCharacter { position: start }),
        };
        tokens.push(Token {
            kind,
            text: smiles[start..i].to_string(),
            position: start,
        });
    }
    Ok(TokenSeq(tokens))
}
