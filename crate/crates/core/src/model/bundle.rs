//! A trained model together with everything needed to featurize new inputs.
//!
//! Directory layout:
//!
//! ```text
//! meta.txt          format line, root seed, OOV seeds
//! config.txt        `key = value` configuration
//! params.txt        parameter checkpoint
//! fingerprints.tsv  frozen fingerprint vocabulary
//! smiles.vec / protein.vec        embedding tables (embedding variants)
//! smiles.onehot / protein.onehot  one-hot columns (one-hot variant)
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::{DeepGS, DeepGSConfig, Featurizer, ModelError, SequenceEncoder};
use crate::embedding::{EmbeddingTable, OneHotEncoder};
use crate::fingerprint::FingerprintVocab;
use crate::nn::ParamStore;

const FORMAT: &str = "deepgs-bundle v1";

#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: DeepGS,
    pub featurizer: Featurizer,
    pub seed: u64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ModelError {
    ModelError::Bundle(format!("{}: {e}", path.display()))
}

fn write_encoder(dir: &Path, name: &str, enc: &SequenceEncoder) -> Result<(), ModelError> {
    match enc {
        SequenceEncoder::Embedding(t) => {
            let p = dir.join(format!("{name}.vec"));
            t.save(&p).map_err(|e| io_err(&p, e))
        }
        SequenceEncoder::OneHot(o) => {
            let p = dir.join(format!("{name}.onehot"));
            let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
            o.write_to(BufWriter::new(f)).map_err(|e| io_err(&p, e))
        }
    }
}

fn read_encoder(
    dir: &Path,
    name: &str,
    dim: usize,
    oov_seed: u64,
    one_hot: bool,
) -> Result<SequenceEncoder, ModelError> {
    if one_hot {
        let p = dir.join(format!("{name}.onehot"));
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let o = OneHotEncoder::parse(&text).ok_or_else(|| io_err(&p, "malformed one-hot columns"))?;
        Ok(SequenceEncoder::OneHot(o))
    } else {
        let p = dir.join(format!("{name}.vec"));
        let t = EmbeddingTable::load(&p, dim, oov_seed).map_err(|e| io_err(&p, e))?;
        Ok(SequenceEncoder::Embedding(t))
    }
}

fn oov_seed(enc: &SequenceEncoder) -> u64 {
    match enc {
        SequenceEncoder::Embedding(t) => t.oov_seed(),
        SequenceEncoder::OneHot(_) => 0,
    }
}

impl Bundle {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ModelError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| io_err(&p, e))
        };
        write(
            "meta.txt",
            format!(
                "{FORMAT}\nseed = {}\nsmiles_oov_seed = {}\nprotein_oov_seed = {}\n",
                self.seed,
                oov_seed(&self.featurizer.smiles),
                oov_seed(&self.featurizer.protein)
            ),
        )?;
        write("config.txt", self.model.config.to_text())?;
        write("params.txt", self.model.params.to_text())?;
        let p = dir.join("fingerprints.tsv");
        self.featurizer.fingerprints.save(&p).map_err(|e| io_err(&p, e))?;
        write_encoder(dir, "smiles", &self.featurizer.smiles)?;
        write_encoder(dir, "protein", &self.featurizer.protein)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ModelError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| io_err(&p, e))
        };
        let meta = read("meta.txt")?;
        let mut lines = meta.lines();
        if lines.next() != Some(FORMAT) {
            return Err(io_err(&dir.join("meta.txt"), "unsupported bundle format"));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once('=') {
                let v: u64 = v
                    .trim()
                    .parse()
                    .map_err(|_| io_err(&dir.join("meta.txt"), format!("bad value in `{line}`")))?;
                fields.insert(k.trim().to_string(), v);
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| io_err(&dir.join("meta.txt"), format!("missing `{k}`")))
        };
        let config = DeepGSConfig::from_text(&read("config.txt")?)?;
        let p = dir.join("fingerprints.tsv");
        let fingerprints = FingerprintVocab::load(&p).map_err(|e| io_err(&p, e))?;
        let one_hot = config.variant.uses_one_hot();
        let featurizer = Featurizer {
            radius: config.radius,
            ngram: config.ngram,
            l_ds: config.l_ds,
            l_ps: config.l_ps,
            smiles: read_encoder(dir, "smiles", config.embed_dim, get("smiles_oov_seed")?, one_hot)?,
            protein: read_encoder(dir, "protein", config.embed_dim, get("protein_oov_seed")?, one_hot)?,
            fingerprints,
        };
        let seed = get("seed")?;
        let mut model = DeepGS::new(config, featurizer.fingerprints.len(), seed)?;
        let stored = ParamStore::from_text(&read("params.txt")?)?;
        if stored.len() != model.params.len() {
            return Err(io_err(
                &dir.join("params.txt"),
                format!("{} parameters stored, model has {}", stored.len(), model.params.len()),
            ));
        }
        model.params.copy_from(&stored)?;
        Ok(Self {
            model,
            featurizer,
            seed,
        })
    }
}
