//! Drug-target binding affinity regression from SMILES strings and protein sequences.
//!
//! The pipeline parses SMILES into heavy-atom graphs ([`smiles`]), derives
//! Weisfeiler-Lehman fingerprints ([`fingerprint`]), maps tokens and protein
//! 3-grams to vectors ([`embedding`]), and combines a graph-attention branch,
//! a BiGRU branch and a CNN branch in [`model::DeepGS`]. The network runs on a
//! small reverse-mode differentiation core ([`nn`]).

pub mod data;
pub mod embedding;
pub mod fingerprint;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod smiles;

pub use data::{AffinityDataset, AffinityKind, DataError, Folds};
pub use embedding::{EmbeddingError, EmbeddingTable, SequenceMatrix};
pub use fingerprint::{FingerprintVocab, NodeFeatures, VocabError};
pub use metrics::{MetricsError, MetricsReport};
pub use model::{Bundle, DeepGS, DeepGSConfig, Featurizer, History, ModelError, Variant};
pub use nn::{NnError, ParamStore, Tensor};
pub use smiles::{MolecularGraph, SmilesError, Token, TokenKind, TokenSeq};
