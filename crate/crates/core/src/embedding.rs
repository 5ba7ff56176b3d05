//! Token and 3-gram embedding dictionaries, fixed-length sequence matrices
//! and the one-hot encoders used by the context-free ablation.
//!
//! Dictionary files are UTF-8 text: one entry per line, the token followed by
//! `dim` whitespace-separated floats.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::RwLock;

use rand::Rng;
use thiserror::Error;

use crate::rng;
use crate::smiles::TokenSeq;

/// OOV vectors are uniform in `[-OOV_SCALE, OOV_SCALE]`.
pub const OOV_SCALE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid number `{value}`")]
    InvalidNumber { line: usize, value: String },
    #[error("duplicate token `{0}`")]
    DuplicateToken(String),
    #[error("token `{0}` has {1} values, table dimension is {2}")]
    WrongWidth(String, usize, usize),
}

/// Token to vector dictionary with a deterministic out-of-vocabulary policy.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov_seed: u64,
    oov_cache: RwLock<HashMap<String, Vec<f64>>>,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.clone(),
            oov_seed: self.oov_seed,
            oov_cache: RwLock::new(self.oov_cache.read().expect("oov cache").clone()),
        }
    }
}

impl EmbeddingTable {
    /// Empty table: every token is out of vocabulary.
    pub fn empty(dim: usize, oov_seed: u64) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
            oov_seed,
            oov_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn from_entries(
        dim: usize,
        oov_seed: u64,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut table = Self::empty(dim, oov_seed);
        for (token, vec) in entries {
            if vec.len() != dim {
                return Err(EmbeddingError::WrongWidth(token, vec.len(), dim));
            }
            if table.entries.insert(token.clone(), vec).is_some() {
                return Err(EmbeddingError::DuplicateToken(token));
            }
        }
        Ok(table)
    }

    pub fn parse(text: &str, dim: usize, oov_seed: u64) -> Result<Self, EmbeddingError> {
        let mut table = Self::empty(dim, oov_seed);
        for (n, line) in text.lines().enumerate() {
            if n == 0 && dim != 1 && is_word2vec_header(line) {
                continue;
            }
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(|v| {
                    v.parse::<f64>().map_err(|_| EmbeddingError::InvalidNumber {
                        line: n + 1,
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: n + 1,
                    expected: dim,
                    found: values.len(),
                });
            }
            if table.entries.insert(token.to_string(), values).is_some() {
                return Err(EmbeddingError::DuplicateToken(token.to_string()));
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>, dim: usize, oov_seed: u64) -> Result<Self, EmbeddingError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, dim, oov_seed)
    }

    /// Vector width of the first entry, for files whose dimension is not known up front.
    pub fn infer_dim(path: impl AsRef<Path>) -> Result<Option<usize>, EmbeddingError> {
        let text = fs::read_to_string(path)?;
        Ok(text
            .lines()
            .find(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().count() - 1))
    }

    /// Writes entries sorted by token.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let sorted: BTreeMap<_, _> = self.entries.iter().collect();
        for (token, vec) in sorted {
            write!(w, "{token}")?;
            for v in vec {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Dictionary vector, or the OOV vector derived from `(oov_seed, token)`.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.entries.get(token) {
            return v.clone();
        }
        if let Some(v) = self.oov_cache.read().expect("oov cache").get(token) {
            return v.clone();
        }
        let v = self.oov_vector(token);
        self.oov_cache
            .write()
            .expect("oov cache")
            .entry(token.to_string())
            .or_insert(v)
            .clone()
    }

    fn oov_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = rng::stream(self.oov_seed, &format!("oov:{token}"));
        (0..self.dim).map(|_| rng.gen_range(-OOV_SCALE..=OOV_SCALE)).collect()
    }
}

/// `<count> <dim>` first line of word2vec text files.
fn is_word2vec_header(line: &str) -> bool {
    let fields: Vec<&str> = line.split_whitespace().collect();
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

/// Fixed-length `rows x dim` matrix; rows at and after `valid_rows` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub valid_rows: usize,
}

impl SequenceMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            valid_rows: 0,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn from_rows<I, V>(rows: usize, dim: usize, vectors: I) -> Self
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f64]>,
    {
        let mut m = Self::zeros(rows, dim);
        for (i, v) in vectors.into_iter().take(rows).enumerate() {
            m.data[i * dim..(i + 1) * dim].copy_from_slice(v.as_ref());
            m.valid_rows = i + 1;
        }
        m
    }
}

fn embed_words<'a>(words: impl IntoIterator<Item = &'a str>, table: &EmbeddingTable, rows: usize) -> SequenceMatrix {
    SequenceMatrix::from_rows(rows, table.dim(), words.into_iter().map(|w| table.lookup(w)))
}

/// Row-stacked token embeddings, truncated or zero-padded to `m` rows.
pub fn embed_smiles(tokens: &TokenSeq, table: &EmbeddingTable, m: usize) -> SequenceMatrix {
    embed_words(tokens.texts(), table, m)
}

/// Consecutive non-overlapping `n`-grams; a trailing remainder shorter than `n` is dropped.
pub fn split_ngrams(sequence: &str, n: usize) -> Vec<String> {
    assert!(n >= 1, "n-gram size must be positive");
    let chars: Vec<char> = sequence.chars().collect();
    chars.chunks_exact(n).map(|c| c.iter().collect()).collect()
}

/// Rows for a protein of fixed residue length `l_ps` split into `n`-grams.
pub fn protein_rows(l_ps: usize, n: usize) -> usize {
    l_ps / n
}

/// Embedding matrix with `floor(l_ps / n)` rows.
pub fn embed_protein(words: &[String], table: &EmbeddingTable, l_ps: usize, n: usize) -> SequenceMatrix {
    embed_words(words.iter().map(String::as_str), table, protein_rows(l_ps, n))
}

/// Token-to-column one-hot encoder of fixed width.
///
/// The most frequent `width - 1` training tokens get their own column (ties
/// broken lexicographically); everything else shares the last column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotEncoder {
    width: usize,
    columns: HashMap<String, usize>,
}

impl OneHotEncoder {
    pub fn fit<'a>(width: usize, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        assert!(width >= 2, "one-hot width must leave room for the shared column");
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let columns = ranked
            .into_iter()
            .take(width - 1)
            .enumerate()
            .map(|(i, (t, _))| (t.to_string(), i))
            .collect();
        Self { width, columns }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn column(&self, token: &str) -> usize {
        self.columns.get(token).copied().unwrap_or(self.width - 1)
    }

    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>, rows: usize) -> SequenceMatrix {
        let mut m = SequenceMatrix::zeros(rows, self.width);
        for (i, w) in words.into_iter().take(rows).enumerate() {
            m.data[i * self.width + self.column(w)] = 1.0;
            m.valid_rows = i + 1;
        }
        m
    }

    /// `token<TAB>column` lines sorted by column; the shared column is implicit.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "#width\t{}", self.width)?;
        let mut cols: Vec<_> = self.columns.iter().collect();
        cols.sort_by_key(|(_, &c)| c);
        for (t, c) in cols {
            writeln!(w, "{t}\t{c}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let width = lines.next()?.strip_prefix("#width\t")?.parse().ok()?;
        let mut columns = HashMap::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (t, c) = line.split_once('\t')?;
            columns.insert(t.to_string(), c.parse().ok()?);
        }
        Some(Self { width, columns })
    }
}
