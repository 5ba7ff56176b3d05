#![allow(dead_code)]

use std::path::PathBuf;

use deepgs::model::{DeepGSConfig, Featurizer, PreparedData, Variant};
use deepgs::{AffinityDataset, AffinityKind, EmbeddingTable};
use rand::seq::SliceRandom;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn davis() -> AffinityDataset {
    let d = data_dir().join("davis_mini");
    AffinityDataset::load(
        d.join("drugs.tsv"),
        d.join("proteins.tsv"),
        d.join("affinities.tsv"),
        AffinityKind::Davis,
    )
    .expect("davis fixture")
}

/// Small enough for a few milliseconds per step on one core.
pub fn tiny_config() -> DeepGSConfig {
    DeepGSConfig {
        cnn_kernel: 3,
        cnn_channels: vec![4, 8, 12],
        bigru_hidden: 8,
        gat_heads: 2,
        gat_hidden: 8,
        fp_dim: 8,
        embed_dim: 10,
        l_ds: 50,
        l_ps: 300,
        fusion_hidden: vec![32, 16],
        lr: 5e-3,
        epochs: 200,
        ..DeepGSConfig::default()
    }
}

/// Just large enough to exercise every layer with a nontrivial shape.
pub fn micro_config() -> DeepGSConfig {
    DeepGSConfig {
        cnn_kernel: 2,
        cnn_channels: vec![2, 2, 2],
        bigru_hidden: 3,
        gat_heads: 2,
        gat_hidden: 4,
        fp_dim: 3,
        embed_dim: 4,
        l_ds: 12,
        l_ps: 30,
        fusion_hidden: vec![6, 5],
        ..DeepGSConfig::default()
    }
}

/// Seeded disjoint `(train, test)` index sets of the given sizes.
pub fn subset(ds: &AffinityDataset, seed: u64, n_train: usize, n_test: usize) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut deepgs::rng::stream(seed, "subset"));
    (idx[..n_train].to_vec(), idx[n_train..n_train + n_test].to_vec())
}

/// Featurizer fitted on `train` with empty embedding tables (every token OOV).
pub fn featurize(
    ds: &AffinityDataset,
    config: &DeepGSConfig,
    train: &[usize],
    all: &[usize],
) -> (Featurizer, PreparedData) {
    let f = Featurizer::fit(
        config,
        train.iter().map(|&i| ds.smiles(i)),
        train.iter().map(|&i| ds.sequence(i)),
        EmbeddingTable::empty(config.embed_dim, 11),
        EmbeddingTable::empty(config.embed_dim, 12),
    )
    .expect("featurizer");
    let data = PreparedData::new(ds, &f, all).expect("prepared data");
    (f, data)
}

pub fn variant(config: &DeepGSConfig, v: Variant) -> DeepGSConfig {
    config.clone().with_variant(v)
}
