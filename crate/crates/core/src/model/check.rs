use super::{DeepGS, DeepGSConfig, Featurizer, ModelError, Variant};
use crate::embedding::EmbeddingTable;
use crate::nn::gradcheck::{self, GradcheckOptions, GradcheckReport};

const SMILES: &str = "CC(=O)Nc1ccc(O)cc1";
const SEQUENCE: &str = "MKKFFDSRREQAAAGGGLLLKKKPPPWWWY";

/// A configuration small enough for finite differences over every parameter.
pub fn gradcheck_config(variant: Variant) -> DeepGSConfig {
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
        variant,
        ..DeepGSConfig::default()
    }
}

/// End-to-end finite-difference check of the full network on one pair.
pub fn model_gradcheck(variant: Variant, seed: u64) -> Result<GradcheckReport, ModelError> {
    let config = gradcheck_config(variant);
    let f = Featurizer::fit(
        &config,
        [SMILES],
        [SEQUENCE],
        EmbeddingTable::empty(config.embed_dim, seed),
        EmbeddingTable::empty(config.embed_dim, seed.wrapping_add(1)),
    )?;
    let m = DeepGS::new(config, f.fingerprints.len(), seed)?;
    let (d, p) = (f.drug(SMILES)?, f.protein(SEQUENCE));
    let opts = GradcheckOptions {
        max_per_param: 20,
        seed,
        ..GradcheckOptions::default()
    };
    // Surfaces non-differentiation errors before the closure has to map them.
    m.forward(&mut crate::nn::Graph::new(&m.params), &d, &p)?;
    let report = gradcheck::check(&m.params, opts, |g| {
        m.forward(g, &d, &p).map_err(|e| match e {
            ModelError::Nn(e) => e,
            other => unreachable!("forward succeeded above: {other}"),
        })
    })?;
    Ok(report)
}
