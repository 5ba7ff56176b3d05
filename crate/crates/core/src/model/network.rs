use rayon::prelude::*;

use super::{DeepGSConfig, ModelError, Variant};
use crate::embedding::{self, EmbeddingTable, OneHotEncoder, SequenceMatrix};
use crate::fingerprint::{self, FingerprintVocab, DEGREE_FEATURES};
use crate::nn::{BiGru, Conv2d, Dense, GatLayer, GnnLayer, Graph, ParamId, ParamStore, Tensor, Var};
use crate::smiles;

/// Maps tokens to matrix rows for one sequence branch.
#[derive(Debug, Clone)]
pub enum SequenceEncoder {
    Embedding(EmbeddingTable),
    OneHot(OneHotEncoder),
}

impl SequenceEncoder {
    pub fn width(&self) -> usize {
        match self {
            SequenceEncoder::Embedding(t) => t.dim(),
            SequenceEncoder::OneHot(o) => o.width(),
        }
    }

    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>, rows: usize) -> SequenceMatrix {
        match self {
            SequenceEncoder::Embedding(t) => {
                SequenceMatrix::from_rows(rows, t.dim(), words.into_iter().map(|w| t.lookup(w)))
            }
            SequenceEncoder::OneHot(o) => o.encode(words, rows),
        }
    }
}

/// Everything the network needs about one drug.
#[derive(Debug, Clone)]
pub struct DrugInput {
    pub fingerprint_ids: Vec<usize>,
    /// `[atoms, DEGREE_FEATURES]` one-hot degrees.
    pub degree_one_hot: Tensor,
    /// Neighbor lists including the node itself.
    pub attention_neighbors: Vec<Vec<usize>>,
    /// Neighbor lists excluding the node itself.
    pub neighbors: Vec<Vec<usize>>,
    pub sequence: SequenceMatrix,
}

#[derive(Debug, Clone)]
pub struct ProteinInput {
    pub matrix: SequenceMatrix,
}

/// Turns raw SMILES and amino-acid strings into network inputs.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub radius: usize,
    pub ngram: usize,
    pub l_ds: usize,
    pub l_ps: usize,
    pub fingerprints: FingerprintVocab,
    pub smiles: SequenceEncoder,
    pub protein: SequenceEncoder,
}

impl Featurizer {
    /// Builds the frozen fingerprint vocabulary from `train_smiles` and, for
    /// the one-hot variant, the token columns from the training sequences.
    /// Embedding variants use the supplied tables.
    pub fn fit<'a>(
        config: &DeepGSConfig,
        train_smiles: impl IntoIterator<Item = &'a str>,
        train_proteins: impl IntoIterator<Item = &'a str>,
        smiles_table: EmbeddingTable,
        protein_table: EmbeddingTable,
    ) -> Result<Self, ModelError> {
        let mut vocab = FingerprintVocab::new();
        let mut smiles_tokens = Vec::new();
        for s in train_smiles {
            let g = smiles::parse(s).map_err(|source| ModelError::Smiles {
                smiles: s.to_string(),
                source,
            })?;
            fingerprint::extract_fingerprints(&g, config.radius, &mut vocab);
            if config.variant.uses_one_hot() {
                let toks = smiles::tokenize(s).expect("parsed above");
                smiles_tokens.extend(toks.texts().take(config.l_ds).map(str::to_string));
            }
        }
        vocab.freeze();
        let (smiles, protein) = if config.variant.uses_one_hot() {
            let rows = config.protein_rows();
            let words: Vec<String> = train_proteins
                .into_iter()
                .flat_map(|p| embedding::split_ngrams(p, config.ngram).into_iter().take(rows))
                .collect();
            (
                SequenceEncoder::OneHot(OneHotEncoder::fit(
                    config.embed_dim,
                    smiles_tokens.iter().map(String::as_str),
                )),
                SequenceEncoder::OneHot(OneHotEncoder::fit(config.embed_dim, words.iter().map(String::as_str))),
            )
        } else {
            for (name, t) in [("SMILES", &smiles_table), ("protein", &protein_table)] {
                if t.dim() != config.embed_dim {
                    return Err(ModelError::Config(format!(
                        "{name} embedding width {} differs from embed_dim {}",
                        t.dim(),
                        config.embed_dim
                    )));
                }
            }
            (
                SequenceEncoder::Embedding(smiles_table),
                SequenceEncoder::Embedding(protein_table),
            )
        };
        Ok(Self {
            radius: config.radius,
            ngram: config.ngram,
            l_ds: config.l_ds,
            l_ps: config.l_ps,
            fingerprints: vocab,
            smiles,
            protein,
        })
    }

    pub fn drug(&self, smiles_str: &str) -> Result<DrugInput, ModelError> {
        let err = |source| ModelError::Smiles {
            smiles: smiles_str.to_string(),
            source,
        };
        let tokens = smiles::tokenize(smiles_str).map_err(err)?;
        let graph = smiles::parse(smiles_str).map_err(err)?;
        if graph.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        let ids = fingerprint::lookup_fingerprints(&graph, self.radius, &self.fingerprints);
        let degrees = fingerprint::extract_adjacency(&graph);
        let n = graph.atom_count();
        let mut one_hot = vec![0.0; n * DEGREE_FEATURES];
        for (i, &d) in degrees.iter().enumerate() {
            one_hot[i * DEGREE_FEATURES + d] = 1.0;
        }
        let neighbors = graph.adjacency_lists();
        let attention_neighbors = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| std::iter::once(i).chain(nb.iter().copied()).collect())
            .collect();
        Ok(DrugInput {
            fingerprint_ids: ids,
            degree_one_hot: Tensor::matrix(n, DEGREE_FEATURES, one_hot)?,
            attention_neighbors,
            neighbors,
            sequence: self.smiles.encode(tokens.texts(), self.l_ds),
        })
    }

    pub fn protein(&self, sequence: &str) -> ProteinInput {
        let words = embedding::split_ngrams(sequence, self.ngram);
        let rows = embedding::protein_rows(self.l_ps, self.ngram);
        ProteinInput {
            matrix: self.protein.encode(words.iter().map(String::as_str), rows),
        }
    }
}

/// Intermediate representations of one drug-protein pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBundle {
    pub y_molecule: Vec<f64>,
    pub y_smiles: Vec<f64>,
    pub y_protein: Vec<f64>,
}

/// Largest kernel not above `kernel` such that `layers` valid convolutions fit
/// into `extent`, or `None` when not even a 2-wide kernel fits.
pub fn fitted_kernel(kernel: usize, layers: usize, extent: usize) -> Option<usize> {
    if layers == 0 {
        return Some(kernel);
    }
    let max = extent.saturating_sub(1) / layers + 1;
    let k = kernel.min(max);
    (k >= kernel.min(2)).then_some(k)
}

#[derive(Debug, Clone)]
enum GraphLayers {
    Attention(Vec<GatLayer>),
    Sum(Vec<GnnLayer>),
}

#[derive(Debug, Clone)]
pub struct DeepGS {
    pub config: DeepGSConfig,
    pub params: ParamStore,
    fp_embed: ParamId,
    input: Dense,
    graph: GraphLayers,
    bigru: BiGru,
    convs: Vec<Conv2d>,
    fusion: Vec<Dense>,
}

impl DeepGS {
    /// `fingerprint_vocab` is the size of the frozen fingerprint vocabulary.
    pub fn new(config: DeepGSConfig, fingerprint_vocab: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let c = &config;
        let fp_embed = ps.add_uniform("graph.fp_embed", &[fingerprint_vocab.max(1), c.fp_dim], c.fp_dim, seed);
        let input = Dense::new(&mut ps, "graph.input", DEGREE_FEATURES + c.fp_dim, c.gat_hidden, seed);
        let graph = match c.variant {
            Variant::DeepGS | Variant::DeepGS1 => GraphLayers::Attention(
                (0..c.gat_depth)
                    .map(|i| {
                        GatLayer::new(
                            &mut ps,
                            &format!("graph.gat{i}"),
                            c.gat_hidden,
                            c.gat_hidden,
                            c.gat_heads,
                            true,
                            seed,
                        )
                    })
                    .collect(),
            ),
            Variant::DeepGS2 => GraphLayers::Sum(
                (0..c.gat_depth)
                    .map(|i| GnnLayer::new(&mut ps, &format!("graph.gnn{i}"), c.gat_hidden, seed))
                    .collect(),
            ),
        };
        let bigru = BiGru::new(&mut ps, "smiles.bigru", c.embed_dim, c.bigru_hidden, seed);

        let layers = c.cnn_channels.len();
        let rows = c.protein_rows();
        let extent = rows.min(c.embed_dim);
        let kernel = fitted_kernel(c.cnn_kernel, layers, extent).ok_or(ModelError::SequenceTooShortForKernel {
            rows,
            width: c.embed_dim,
            kernel: c.cnn_kernel,
            layers,
        })?;
        if kernel != c.cnn_kernel {
            log::warn!(
                "protein matrix {rows}x{} too small for {layers} convolutions of kernel {}; using kernel {kernel}",
                c.embed_dim,
                c.cnn_kernel
            );
        }
        let mut convs = Vec::with_capacity(layers);
        let mut c_in = 1;
        for (i, &c_out) in c.cnn_channels.iter().enumerate() {
            convs.push(Conv2d::new(
                &mut ps,
                &format!("protein.conv{i}"),
                c_in,
                c_out,
                kernel,
                seed,
            ));
            c_in = c_out;
        }

        let mut fusion = Vec::new();
        let mut width = c.gat_hidden + 2 * c.bigru_hidden + c_in;
        for (i, &h) in c.fusion_hidden.iter().chain(std::iter::once(&1)).enumerate() {
            fusion.push(Dense::new(&mut ps, &format!("fusion.{i}"), width, h, seed));
            width = h;
        }
        Ok(Self {
            config,
            params: ps,
            fp_embed,
            input,
            graph,
            bigru,
            convs,
            fusion,
        })
    }

    pub fn kernel(&self) -> usize {
        self.convs[0].kernel
    }

    /// `(rows, cols)` of the protein input followed by each convolution output.
    pub fn protein_shapes(&self) -> Vec<(usize, usize)> {
        let k = self.kernel();
        let mut s = vec![(self.config.protein_rows(), self.config.embed_dim)];
        for _ in &self.convs {
            let (r, c) = *s.last().expect("non-empty");
            s.push((r + 1 - k, c + 1 - k));
        }
        s
    }

    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (
            self.config.gat_hidden,
            self.bigru.output_dim(),
            self.convs.last().map_or(0, |c| c.c_out),
        )
    }

    /// Bias of the final output unit.
    pub fn output_bias(&self) -> ParamId {
        self.fusion.last().expect("output layer").b
    }

    pub fn encode_drug_graph(&self, g: &mut Graph, drug: &DrugInput) -> Result<Var, ModelError> {
        if drug.fingerprint_ids.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        let table = g.param(self.fp_embed);
        let fp = g.gather_rows(table, &drug.fingerprint_ids)?;
        let deg = g.input(drug.degree_one_hot.clone());
        let x = g.concat(&[deg, fp])?;
        let mut h = self.input.forward(g, x)?;
        match &self.graph {
            GraphLayers::Attention(layers) => {
                for l in layers {
                    h = l.forward(g, h, &drug.attention_neighbors)?;
                }
            }
            GraphLayers::Sum(layers) => {
                for l in layers {
                    h = l.forward(g, h, &drug.neighbors)?;
                }
            }
        }
        Ok(g.sum_rows(h)?)
    }

    pub fn encode_drug_sequence(&self, g: &mut Graph, drug: &DrugInput) -> Result<Var, ModelError> {
        let m = &drug.sequence;
        let x = g.input(Tensor::matrix(m.rows, m.dim, m.data.clone())?);
        Ok(self.bigru.forward(g, x)?)
    }

    pub fn encode_protein(&self, g: &mut Graph, protein: &ProteinInput) -> Result<Var, ModelError> {
        let m = &protein.matrix;
        let mut h = g.input(Tensor::new(vec![1, m.rows, m.dim], m.data.clone())?);
        for conv in &self.convs {
            h = conv.forward(g, h)?;
            h = g.relu(h);
        }
        Ok(g.global_max_pool(h)?)
    }

    /// Returns the scalar prediction (shape `[1]`).
    pub fn forward(&self, g: &mut Graph, drug: &DrugInput, protein: &ProteinInput) -> Result<Var, ModelError> {
        let ym = self.encode_drug_graph(g, drug)?;
        let ys = self.encode_drug_sequence(g, drug)?;
        let yp = self.encode_protein(g, protein)?;
        self.fuse(g, ym, ys, yp)
    }

    fn fuse(&self, g: &mut Graph, ym: Var, ys: Var, yp: Var) -> Result<Var, ModelError> {
        let mut h = g.concat(&[ym, ys, yp])?;
        let last = self.fusion.len() - 1;
        for (i, layer) in self.fusion.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    pub fn latents(&self, drug: &DrugInput, protein: &ProteinInput) -> Result<LatentBundle, ModelError> {
        let mut g = Graph::new(&self.params);
        let ym = self.encode_drug_graph(&mut g, drug)?;
        let ys = self.encode_drug_sequence(&mut g, drug)?;
        let yp = self.encode_protein(&mut g, protein)?;
        Ok(LatentBundle {
            y_molecule: g.value(ym).data().to_vec(),
            y_smiles: g.value(ys).data().to_vec(),
            y_protein: g.value(yp).data().to_vec(),
        })
    }

    pub fn predict(&self, drug: &DrugInput, protein: &ProteinInput) -> Result<f64, ModelError> {
        let mut g = Graph::new(&self.params);
        let y = self.forward(&mut g, drug, protein)?;
        Ok(g.value(y).item())
    }

    /// Predictions for many pairs, evaluated in parallel against the current parameters.
    pub fn predict_many(&self, pairs: &[(&DrugInput, &ProteinInput)]) -> Result<Vec<f64>, ModelError> {
        pairs.par_iter().map(|(d, p)| self.predict(d, p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DeepGSConfig {
        DeepGSConfig {
            cnn_kernel: 3,
            cnn_channels: vec![2, 3],
            bigru_hidden: 3,
            gat_depth: 2,
            gat_heads: 2,
            gat_hidden: 4,
            fp_dim: 3,
            embed_dim: 6,
            l_ds: 12,
            l_ps: 30,
            fusion_hidden: vec![5],
            ..DeepGSConfig::default()
        }
    }

    fn featurizer(c: &DeepGSConfig) -> Featurizer {
        Featurizer::fit(
            c,
            ["CCO", "c1ccccc1N"],
            ["MKKFFDSRR"],
            EmbeddingTable::empty(c.embed_dim, 1),
            EmbeddingTable::empty(c.embed_dim, 2),
        )
        .unwrap()
    }

    #[test]
    fn fitted_kernel_cases() {
        assert_eq!(fitted_kernel(23, 3, 100), Some(23));
        assert_eq!(fitted_kernel(23, 3, 34), Some(12));
        assert_eq!(fitted_kernel(23, 3, 3), None);
        assert_eq!(fitted_kernel(2, 3, 4), Some(2));
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let c = tiny();
        let f = featurizer(&c);
        let mut m = DeepGS::new(c, f.fingerprints.len(), 3).unwrap();
        m.params.fill(0.0);
        let y = m
            .predict(&f.drug("CC(=O)O").unwrap(), &f.protein("MKKFFDSRREQ"))
            .unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn graph_latent_is_permutation_invariant_and_additive() {
        let c = tiny();
        let f = featurizer(&c);
        let m = DeepGS::new(c, f.fingerprints.len(), 3).unwrap();
        let p = f.protein("MKKFFDSRREQ");
        let a = m.latents(&f.drug("OCC(N)c1ccccc1").unwrap(), &p).unwrap().y_molecule;
        let b = m.latents(&f.drug("c1ccc(cc1)C(N)CO").unwrap(), &p).unwrap().y_molecule;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        let parts = m.latents(&f.drug("CCO.c1ccccc1").unwrap(), &p).unwrap().y_molecule;
        let l = m.latents(&f.drug("CCO").unwrap(), &p).unwrap().y_molecule;
        let r = m.latents(&f.drug("c1ccccc1").unwrap(), &p).unwrap().y_molecule;
        for i in 0..parts.len() {
            assert!((parts[i] - l[i] - r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_is_reduced_when_protein_is_short() {
        let c = DeepGSConfig { l_ps: 60, ..tiny() };
        let m = DeepGS::new(c, 4, 0).unwrap();
        assert_eq!(m.kernel(), 3);
        let c = DeepGSConfig {
            cnn_kernel: 23,
            ..tiny()
        };
        let m = DeepGS::new(c, 4, 0).unwrap();
        assert_eq!(m.kernel(), 3);
        assert_eq!(m.protein_shapes(), [(10, 6), (8, 4), (6, 2)]);
        let c = DeepGSConfig { l_ps: 6, ..tiny() };
        assert!(matches!(
            DeepGS::new(c, 4, 0),
            Err(ModelError::SequenceTooShortForKernel { .. })
        ));
    }

    #[test]
    fn predictions_are_deterministic() {
        let c = tiny();
        let f = featurizer(&c);
        let m = DeepGS::new(c, f.fingerprints.len(), 9).unwrap();
        let d = f.drug("CN1CCN(CC1)c1ccccc1").unwrap();
        let p = f.protein("MKKFFDSRREQAAAGGG");
        assert_eq!(m.predict(&d, &p).unwrap(), m.predict(&d, &p).unwrap());
        assert!(m.predict(&d, &p).unwrap().is_finite());
    }
}
