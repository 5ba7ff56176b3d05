//! Affinity datasets: tab-separated loaders and the k-fold split.
//!
//! Formats (UTF-8, one record per line, blank lines ignored):
//! - drugs: `id<TAB>smiles`
//! - proteins: `id<TAB>sequence`
//! - affinities: `drug_id<TAB>protein_id<TAB>value`

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::metrics::{self, DAVIS_THRESHOLD, KIBA_THRESHOLD};
use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    MalformedLine { file: String, line: usize, reason: String },
    #[error("{file}:{line}: unknown id `{id}`")]
    DanglingReference { file: String, line: usize, id: String },
    #[error("{file}:{line}: duplicate id `{id}`")]
    DuplicateId { file: String, line: usize, id: String },
    #[error("{0} contains no records")]
    Empty(String),
    #[error("k must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("fold {fold} out of range for {k} folds")]
    FoldOutOfRange { fold: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffinityKind {
    /// Raw Kd in nM, stored as pKd.
    Davis,
    /// KIBA scores, stored unchanged.
    Kiba,
}

impl AffinityKind {
    pub fn threshold(self) -> f64 {
        match self {
            AffinityKind::Davis => DAVIS_THRESHOLD,
            AffinityKind::Kiba => KIBA_THRESHOLD,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AffinityKind::Davis => "davis",
            AffinityKind::Kiba => "kiba",
        }
    }
}

impl fmt::Display for AffinityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AffinityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "davis" => Ok(AffinityKind::Davis),
            "kiba" => Ok(AffinityKind::Kiba),
            other => Err(format!("unknown dataset kind `{other}` (expected davis or kiba)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub drug: usize,
    pub protein: usize,
    pub affinity: f64,
}

#[derive(Debug, Clone)]
pub struct Record {
    pub id: String,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct AffinityDataset {
    pub drugs: Vec<Record>,
    pub proteins: Vec<Record>,
    pub triples: Vec<Triple>,
    pub kind: AffinityKind,
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn fields(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split('\t').collect()
}

fn parse_records(text: &str, file: &str) -> Result<(Vec<Record>, HashMap<String, usize>), DataError> {
    let mut records = Vec::new();
    let mut index = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line);
        let (id, value) = match f.as_slice() {
            [id, value] if !id.is_empty() && !value.is_empty() => (id.to_string(), value.trim().to_string()),
            _ => {
                return Err(DataError::MalformedLine {
                    file: file.to_string(),
                    line: i + 1,
                    reason: "expected `id<TAB>string`".into(),
                })
            }
        };
        if index.insert(id.clone(), records.len()).is_some() {
            return Err(DataError::DuplicateId {
                file: file.to_string(),
                line: i + 1,
                id,
            });
        }
        records.push(Record { id, value });
    }
    if records.is_empty() {
        return Err(DataError::Empty(file.to_string()));
    }
    Ok((records, index))
}

impl AffinityDataset {
    pub fn load(
        drugs_path: impl AsRef<Path>,
        proteins_path: impl AsRef<Path>,
        affinities_path: impl AsRef<Path>,
        kind: AffinityKind,
    ) -> Result<Self, DataError> {
        let (dp, pp, ap) = (drugs_path.as_ref(), proteins_path.as_ref(), affinities_path.as_ref());
        Self::parse(
            &read(dp)?,
            &read(pp)?,
            &read(ap)?,
            kind,
            [&file_name(dp), &file_name(pp), &file_name(ap)],
        )
    }

    /// Parses the three files from memory; `names` label errors.
    pub fn parse(
        drugs: &str,
        proteins: &str,
        affinities: &str,
        kind: AffinityKind,
        names: [&str; 3],
    ) -> Result<Self, DataError> {
        let (drugs, drug_index) = parse_records(drugs, names[0])?;
        let (proteins, protein_index) = parse_records(proteins, names[1])?;
        let file = names[2];
        let mut triples = Vec::new();
        for (i, line) in affinities.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| DataError::MalformedLine {
                file: file.to_string(),
                line: i + 1,
                reason,
            };
            let f = fields(line);
            let [d, p, v] = f.as_slice() else {
                return Err(malformed("expected `drug_id<TAB>protein_id<TAB>value`".into()));
            };
            let raw: f64 = v
                .trim()
                .parse()
                .map_err(|_| malformed(format!("invalid number `{v}`")))?;
            if !raw.is_finite() {
                return Err(malformed(format!("non-finite value `{v}`")));
            }
            let affinity = match kind {
                AffinityKind::Davis => metrics::pkd_transform(raw).map_err(|e| malformed(e.to_string()))?,
                AffinityKind::Kiba => raw,
            };
            let lookup = |index: &HashMap<String, usize>, id: &str| {
                index.get(id).copied().ok_or_else(|| DataError::DanglingReference {
                    file: file.to_string(),
                    line: i + 1,
                    id: id.to_string(),
                })
            };
            triples.push(Triple {
                drug: lookup(&drug_index, d)?,
                protein: lookup(&protein_index, p)?,
                affinity,
            });
        }
        if triples.is_empty() {
            return Err(DataError::Empty(file.to_string()));
        }
        Ok(Self {
            drugs,
            proteins,
            triples,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn smiles(&self, triple: usize) -> &str {
        &self.drugs[self.triples[triple].drug].value
    }

    pub fn sequence(&self, triple: usize) -> &str {
        &self.proteins[self.triples[triple].protein].value
    }

    pub fn affinity(&self, triple: usize) -> f64 {
        self.triples[triple].affinity
    }

    pub fn affinities(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.affinity(i)).collect()
    }
}

/// Assignment of triple indices to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

/// Seeded shuffle of `0..n` followed by round-robin assignment.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<Folds, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let mut fold_of = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % k;
    }
    Ok(Folds { k, fold_of })
}

impl Folds {
    fn check(&self, fold: usize) -> Result<(), DataError> {
        if fold >= self.k {
            return Err(DataError::FoldOutOfRange { fold, k: self.k });
        }
        Ok(())
    }

    pub fn test_indices(&self, fold: usize) -> Result<Vec<usize>, DataError> {
        self.check(fold)?;
        Ok((0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect())
    }

    pub fn train_indices(&self, fold: usize) -> Result<Vec<usize>, DataError> {
        self.check(fold)?;
        Ok((0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DRUGS: &str = "a\tCCO\nb\tc1ccccc1\n";
    const PROTEINS: &str = "p\tMKKFFDSRR\n";
    const NAMES: [&str; 3] = ["drugs", "proteins", "affinities"];

    #[test]
    fn davis_values_become_pkd() {
        let ds =
            AffinityDataset::parse(DRUGS, PROTEINS, "a\tp\t100\nb\tp\t10000\n", AffinityKind::Davis, NAMES).unwrap();
        assert_eq!(ds.affinities(&[0, 1]), [7.0, 5.0]);
        assert_eq!(ds.smiles(1), "c1ccccc1");
        assert_eq!(ds.sequence(0), "MKKFFDSRR");
    }

    #[test]
    fn kiba_values_unchanged() {
        let ds = AffinityDataset::parse(DRUGS, PROTEINS, "a\tp\t11.5\n", AffinityKind::Kiba, NAMES).unwrap();
        assert_eq!(ds.affinity(0), 11.5);
    }

    #[test]
    fn errors() {
        let e = AffinityDataset::parse(DRUGS, PROTEINS, "zz\tp\t1\n", AffinityKind::Kiba, NAMES).unwrap_err();
        assert!(matches!(e, DataError::DanglingReference { ref id, line: 1, .. } if id == "zz"));
        let e = AffinityDataset::parse(DRUGS, PROTEINS, "a\tp\n", AffinityKind::Kiba, NAMES).unwrap_err();
        assert!(matches!(e, DataError::MalformedLine { line: 1, .. }));
        let e = AffinityDataset::parse(DRUGS, PROTEINS, "a\tp\t-3\n", AffinityKind::Davis, NAMES).unwrap_err();
        assert!(matches!(e, DataError::MalformedLine { .. }));
        let e = AffinityDataset::parse("a\tC\na\tN\n", PROTEINS, "a\tp\t1\n", AffinityKind::Kiba, NAMES).unwrap_err();
        assert!(matches!(e, DataError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn twelve_triples_six_folds() {
        let f = split_folds(12, 6, 3).unwrap();
        assert_eq!(f.sizes(), [2; 6]);
        assert_eq!(f, split_folds(12, 6, 3).unwrap());
        assert!(split_folds(12, 1, 3).is_err());
    }

    #[test]
    fn full_davis_fold_sizes() {
        let s = split_folds(30_056, 6, 0).unwrap().sizes();
        assert!(s.iter().all(|&x| x == 5009 || x == 5010));
        assert_eq!(s.iter().sum::<usize>(), 30_056);
    }

    proptest! {
        #[test]
        fn folds_partition(n in 0usize..300, k in 2usize..9, seed: u64) {
            let f = split_folds(n, k, seed).unwrap();
            let s = f.sizes();
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            for fold in 0..k {
                let (tr, te) = (f.train_indices(fold).unwrap(), f.test_indices(fold).unwrap());
                prop_assert_eq!(tr.len() + te.len(), n);
                prop_assert!(te.iter().all(|i| !tr.contains(i)));
            }
        }
    }
}
