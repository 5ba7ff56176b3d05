//! SMILES tokenization and heavy-atom graph construction.
//!
//! Supported grammar: organic-subset atoms (`B C N O P S F Cl Br I`), aromatic
//! `b c n o s p`, bracket atoms with isotope, chirality, hydrogen count, charge
//! and atom class, bonds `- = # : / \`, branches, ring closures (`1`..`9`,
//! `%nn`) and dot-separated components. Stereo markers are accepted and dropped.

mod graph;
mod parser;
mod token;

pub use graph::{AtomNode, Bond, BondOrder, MolecularGraph};
pub use parser::parse;
pub use token::{tokenize, Token, TokenKind, TokenSeq};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unknown character at position {position}")]
    UnknownCharacter { position: usize },
    #[error("unterminated bracket atom starting at position {position}")]
    UnterminatedBracket { position: usize },
    #[error("invalid bracket atom at position {position}")]
    InvalidBracketAtom { position: usize },
    #[error("ring closure opened at position {position} is never closed")]
    UnmatchedRingClosure { position: usize },
    #[error("unmatched parenthesis at position {position}")]
    UnmatchedParenthesis { position: usize },
    #[error("bond at position {position} has no preceding atom")]
    BondAtStart { position: usize },
    #[error("bond at position {position} is not followed by an atom")]
    TrailingBond { position: usize },
    #[error("unexpected token at position {position}")]
    UnexpectedToken { position: usize },
    #[error("ring closure at position {position} duplicates an existing bond")]
    DuplicateBond { position: usize },
    #[error("conflicting bond orders on ring closure at position {position}")]
    RingBondMismatch { position: usize },
}

impl SmilesError {
    pub fn position(&self) -> Option<usize> {
        match *self {
            SmilesError::Empty => None,
            SmilesError::UnknownCharacter { position }
            | SmilesError::UnterminatedBracket { position }
            | SmilesError::InvalidBracketAtom { position }
            | SmilesError::UnmatchedRingClosure { position }
            | SmilesError::UnmatchedParenthesis { position }
            | SmilesError::BondAtStart { position }
            | SmilesError::TrailingBond { position }
            | SmilesError::UnexpectedToken { position }
            | SmilesError::DuplicateBond { position }
            | SmilesError::RingBondMismatch { position } => Some(position),
        }
    }
}
