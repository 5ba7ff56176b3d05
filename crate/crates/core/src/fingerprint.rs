//! Per-atom r-radius subgraph identifiers and degree features.
//!
//! Signatures are built by Weisfeiler-Lehman relabeling. Round 0 is the atom
//! label; every further round appends the sorted multiset of
//! `(bond symbol, neighbor signature)` from the previous round, so a radius-k
//! signature always contains its radius-(k-1) signature as a prefix.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::smiles::MolecularGraph;

/// Largest degree with its own one-hot slot; higher degrees are clamped.
pub const MAX_DEGREE: usize = 6;
/// Width of the degree one-hot encoding.
pub const DEGREE_FEATURES: usize = MAX_DEGREE + 1;
/// Signature reserved for substructures not seen while building the vocabulary.
pub const UNK_SIGNATURE: &str = "<unk>";
pub const UNK_ID: usize = 0;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected `id<TAB>signature`")]
    Malformed { line: usize },
    #[error("line {line}: id {id} out of order (expected {expected})")]
    NonDenseId { line: usize, id: usize, expected: usize },
}

/// Signature to dense id dictionary. Id 0 is always [`UNK_SIGNATURE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintVocab {
    ids: HashMap<String, usize>,
    signatures: Vec<String>,
    frozen: bool,
}

impl Default for FingerprintVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl FingerprintVocab {
    pub fn new() -> Self {
        let mut ids = HashMap::new();
        ids.insert(UNK_SIGNATURE.to_string(), UNK_ID);
        Self {
            ids,
            signatures: vec![UNK_SIGNATURE.to_string()],
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn get(&self, signature: &str) -> Option<usize> {
        self.ids.get(signature).copied()
    }

    pub fn signature(&self, id: usize) -> Option<&str> {
        self.signatures.get(id).map(String::as_str)
    }

    /// Id for `signature`, inserting it when the vocabulary is not frozen.
    /// A frozen miss yields [`UNK_ID`].
    pub fn lookup_or_insert(&mut self, signature: &str) -> usize {
        if let Some(&id) = self.ids.get(signature) {
            return id;
        }
        if self.frozen {
            return UNK_ID;
        }
        let id = self.signatures.len();
        self.signatures.push(signature.to_string());
        self.ids.insert(signature.to_string(), id);
        id
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (id, sig) in self.signatures.iter().enumerate() {
            writeln!(w, "{id}\t{sig}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }

    /// Reads a vocabulary written by [`FingerprintVocab::write_to`]; the result is frozen.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self, VocabError> {
        let mut vocab = FingerprintVocab {
            ids: HashMap::new(),
            signatures: Vec::new(),
            frozen: false,
        };
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, sig) = line.split_once('\t').ok_or(VocabError::Malformed { line: n + 1 })?;
            let id: usize = id.parse().map_err(|_| VocabError::Malformed { line: n + 1 })?;
            if id != vocab.signatures.len() {
                return Err(VocabError::NonDenseId {
                    line: n + 1,
                    id,
                    expected: vocab.signatures.len(),
                });
            }
            vocab.lookup_or_insert(sig);
        }
        if vocab.signature(UNK_ID) != Some(UNK_SIGNATURE) {
            return Err(VocabError::Malformed { line: 1 });
        }
        vocab.freeze();
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let file = fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }
}

/// Per-node inputs to the graph branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFeatures {
    pub fingerprint_ids: Vec<usize>,
    pub degrees: Vec<usize>,
}

/// Node degrees clamped to `[0, MAX_DEGREE]`.
pub fn extract_adjacency(graph: &MolecularGraph) -> Vec<usize> {
    (0..graph.atom_count())
        .map(|i| graph.degree(i).min(MAX_DEGREE))
        .collect()
}

/// Canonical radius-`radius` signature strings for every node.
pub fn signatures(graph: &MolecularGraph, radius: usize) -> Vec<String> {
    let mut current: Vec<String> = graph.atoms().iter().map(|a| a.label()).collect();
    for _ in 0..radius {
        let next = (0..graph.atom_count())
            .map(|v| {
                let mut neigh: Vec<String> = graph
                    .neighbor_bonds(v)
                    .map(|(u, order)| format!("{}{}", order.symbol(), current[u]))
                    .collect();
                neigh.sort_unstable();
                format!("{}{{{}}}", current[v], neigh.join(","))
            })
            .collect();
        current = next;
    }
    current
}

/// Fingerprint ids for every node. Unfrozen vocabularies grow in first-seen
/// order; frozen ones map unseen signatures to [`UNK_ID`].
pub fn extract_fingerprints(graph: &MolecularGraph, radius: usize, vocab: &mut FingerprintVocab) -> Vec<usize> {
    signatures(graph, radius)
        .iter()
        .map(|s| vocab.lookup_or_insert(s))
        .collect()
}

/// Read-only variant for frozen vocabularies; safe to share across threads.
pub fn lookup_fingerprints(graph: &MolecularGraph, radius: usize, vocab: &FingerprintVocab) -> Vec<usize> {
    signatures(graph, radius)
        .iter()
        .map(|s| vocab.get(s).unwrap_or(UNK_ID))
        .collect()
}

pub fn node_features(graph: &MolecularGraph, radius: usize, vocab: &mut FingerprintVocab) -> NodeFeatures {
    NodeFeatures {
        fingerprint_ids: extract_fingerprints(graph, radius, vocab),
        degrees: extract_adjacency(graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    fn distinct(ids: &[usize]) -> usize {
        let mut v = ids.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    #[test]
    fn degrees() {
        assert_eq!(extract_adjacency(&parse("C").unwrap()), [0]);
        assert_eq!(extract_adjacency(&parse("CCO").unwrap()), [1, 2, 1]);
        assert_eq!(extract_adjacency(&parse("c1ccccc1").unwrap()), [2; 6]);
    }

    #[test]
    fn degree_clamped() {
        // sulfur hexafluoride-like hub: S with 6 neighbors plus one more
        let g = parse("FS(F)(F)(F)(F)(F)C").unwrap();
        assert_eq!(extract_adjacency(&g)[1], MAX_DEGREE);
        assert_eq!(g.degree(1), 7);
    }

    #[test]
    fn radius_zero_is_atom_label() {
        let mut vocab = FingerprintVocab::new();
        let ids = extract_fingerprints(&parse("CCO").unwrap(), 0, &mut vocab);
        assert_eq!(distinct(&ids), 2);
        assert_eq!(ids[0], ids[1]);
    }

    #[test]
    fn radius_one_separates_terminal_and_central_carbon() {
        let mut vocab = FingerprintVocab::new();
        let ids = extract_fingerprints(&parse("CCO").unwrap(), 1, &mut vocab);
        assert_eq!(distinct(&ids), 3);
    }

    #[test]
    fn benzene_single_id_at_radius_two() {
        let mut vocab = FingerprintVocab::new();
        let ids = extract_fingerprints(&parse("c1ccccc1").unwrap(), 2, &mut vocab);
        assert_eq!(distinct(&ids), 1);
        assert_ne!(ids[0], UNK_ID);
    }

    #[test]
    fn first_seen_order_and_freeze() {
        let mut vocab = FingerprintVocab::new();
        let ids = extract_fingerprints(&parse("CO").unwrap(), 0, &mut vocab);
        assert_eq!(ids, [1, 2]);
        vocab.freeze();
        let ids = extract_fingerprints(&parse("CN").unwrap(), 0, &mut vocab);
        assert_eq!(ids, [1, UNK_ID]);
        assert_eq!(vocab.len(), 3);
    }

    #[test]
    fn bond_order_distinguishes() {
        let mut vocab = FingerprintVocab::new();
        let a = extract_fingerprints(&parse("CC").unwrap(), 1, &mut vocab);
        let b = extract_fingerprints(&parse("C=C").unwrap(), 1, &mut vocab);
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn vocab_round_trip() {
        let mut vocab = FingerprintVocab::new();
        extract_fingerprints(&parse("CC(=O)Nc1ccccc1").unwrap(), 2, &mut vocab);
        let mut buf = Vec::new();
        vocab.write_to(&mut buf).unwrap();
        let back = FingerprintVocab::read_from(&buf[..]).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.signatures, vocab.signatures);
    }

    #[test]
    fn vocab_rejects_gaps() {
        let text = "0\t<unk>\n2\tC\n";
        assert!(matches!(
            FingerprintVocab::read_from(text.as_bytes()),
            Err(VocabError::NonDenseId { line: 2, .. })
        ));
    }
}
