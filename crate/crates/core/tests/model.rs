mod common;

use deepgs::model::{self, DeepGS, DrugInput, PreparedData, TrainOptions, Variant};
use deepgs::nn::{Adam, ParamStore, Tensor};
use deepgs::{Bundle, EmbeddingTable};
use rand::seq::SliceRandom;

const SMILES: &str = "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(-c2cccnc2)n1";
const SEQ: &str = "MSLLKKRLAAEGHWTPVNNQEVALKVLDKSTGEQYAIKLFRRGSVEA";

fn model_for(v: Variant) -> (model::Featurizer, DeepGS) {
    let config = common::variant(&common::micro_config(), v);
    let f = model::Featurizer::fit(
        &config,
        [SMILES, "CCO"],
        [SEQ],
        EmbeddingTable::empty(config.embed_dim, 5),
        EmbeddingTable::empty(config.embed_dim, 6),
    )
    .unwrap();
    let m = DeepGS::new(config, f.fingerprints.len(), 21).unwrap();
    (f, m)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn variants_share_untouched_branches_bit_exactly() {
    let (f0, full) = model_for(Variant::DeepGS);
    let (f1, one_hot) = model_for(Variant::DeepGS1);
    let (f2, no_attention) = model_for(Variant::DeepGS2);
    let l0 = full.latents(&f0.drug(SMILES).unwrap(), &f0.protein(SEQ)).unwrap();
    let l1 = one_hot.latents(&f1.drug(SMILES).unwrap(), &f1.protein(SEQ)).unwrap();
    let l2 = no_attention
        .latents(&f2.drug(SMILES).unwrap(), &f2.protein(SEQ))
        .unwrap();

    assert_eq!(bits(&l0.y_molecule), bits(&l1.y_molecule));
    assert_ne!(bits(&l0.y_smiles), bits(&l1.y_smiles));
    assert_eq!(bits(&l0.y_smiles), bits(&l2.y_smiles));
    assert_eq!(bits(&l0.y_protein), bits(&l2.y_protein));
    assert_ne!(bits(&l0.y_molecule), bits(&l2.y_molecule));
}

fn permute_drug(d: &DrugInput, perm: &[usize]) -> DrugInput {
    let n = perm.len();
    let mut ids = vec![0; n];
    let cols = d.degree_one_hot.shape()[1];
    let mut deg = vec![0.0; n * cols];
    let mut neighbors = vec![Vec::new(); n];
    let mut attention = vec![Vec::new(); n];
    for old in 0..n {
        let new = perm[old];
        ids[new] = d.fingerprint_ids[old];
        deg[new * cols..(new + 1) * cols].copy_from_slice(&d.degree_one_hot.data()[old * cols..(old + 1) * cols]);
        neighbors[new] = d.neighbors[old].iter().map(|&u| perm[u]).collect();
        attention[new] = d.attention_neighbors[old].iter().map(|&u| perm[u]).collect();
    }
    DrugInput {
        fingerprint_ids: ids,
        degree_one_hot: Tensor::matrix(n, cols, deg).unwrap(),
        attention_neighbors: attention,
        neighbors,
        sequence: d.sequence.clone(),
    }
}

#[test]
fn graph_latent_is_permutation_invariant() {
    let mut rng = deepgs::rng::stream(2, "perm");
    for v in [Variant::DeepGS, Variant::DeepGS2] {
        let (f, m) = model_for(v);
        let d = f.drug(SMILES).unwrap();
        let p = f.protein(SEQ);
        let base = m.latents(&d, &p).unwrap().y_molecule;
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..d.fingerprint_ids.len()).collect();
            perm.shuffle(&mut rng);
            let moved = m.latents(&permute_drug(&d, &perm), &p).unwrap().y_molecule;
            for (a, b) in base.iter().zip(&moved) {
                assert!((a - b).abs() <= 1e-6, "{v}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn unseen_fingerprints_map_to_unknown() {
    let (f, m) = model_for(Variant::DeepGS);
    let d = f.drug("FC(F)(F)Br").unwrap();
    assert!(d.fingerprint_ids.iter().all(|&i| i == deepgs::fingerprint::UNK_ID));
    assert!(m.predict(&d, &f.protein(SEQ)).unwrap().is_finite());
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let ds = common::davis();
    let mut config = common::micro_config();
    config.epochs = 1;
    for v in Variant::ALL {
        let config = common::variant(&config, v);
        let (train, test) = common::subset(&ds, 3, 20, 10);
        let all: Vec<usize> = train.iter().chain(&test).copied().collect();
        let (f, data) = common::featurize(&ds, &config, &train, &all);
        let mut m = DeepGS::new(config, f.fingerprints.len(), 4).unwrap();
        model::train(&mut m, &ds, &data, &train, &test, 4, TrainOptions::default(), |_| {}).unwrap();
        let before = model::predict_indices(&m, &ds, &data, &test).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let bundle = Bundle {
            model: m,
            featurizer: f,
            seed: 4,
        };
        bundle.save(dir.path()).unwrap();
        let loaded = Bundle::load(dir.path()).unwrap();
        let data = PreparedData::new(&ds, &loaded.featurizer, &all).unwrap();
        let after = model::predict_indices(&loaded.model, &ds, &data, &test).unwrap();
        assert_eq!(bits(&before), bits(&after), "{v}");
    }
}

#[test]
fn bundle_with_missing_files_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Bundle::load(dir.path()).is_err());
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let ds = common::davis();
    let config = common::tiny_config();
    let (train, test) = common::subset(&ds, 9, 48, 16);
    let all: Vec<usize> = train.iter().chain(&test).copied().collect();
    let (f, data) = common::featurize(&ds, &config, &train, &all);
    let run = || {
        let mut m = DeepGS::new(config.clone(), f.fingerprints.len(), 9).unwrap();
        let opts = TrainOptions {
            max_steps: Some(150),
            skip_test_eval: false,
            ..TrainOptions::default()
        };
        let mut seen = 0;
        let h = model::train(&mut m, &ds, &data, &train, &test, 9, opts, |_| seen += 1).unwrap();
        assert_eq!(seen, h.epochs.len());
        let preds = model::predict_indices(&m, &ds, &data, &train).unwrap();
        (h, deepgs::metrics::mse(&preds, &ds.affinities(&train)).unwrap())
    };
    let ((a, mse), (b, _)) = (run(), run());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.steps, 150);
    let labels = ds.affinities(&train);
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let var = labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / labels.len() as f64;
    assert!(mse < var, "train mse {mse} vs label variance {var}");
    assert!(a.to_csv().starts_with("epoch,train_mse,test_mse,test_ci\n"));
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let ds = common::davis();
    let mut config = common::tiny_config();
    config.epochs = 3;
    let (train, test) = common::subset(&ds, 5, 24, 8);
    let all: Vec<usize> = train.iter().chain(&test).copied().collect();
    let (f, data) = common::featurize(&ds, &config, &train, &all);

    let mut whole = DeepGS::new(config.clone(), f.fingerprints.len(), 5).unwrap();
    let full = model::train(
        &mut whole,
        &ds,
        &data,
        &train,
        &test,
        5,
        TrainOptions::default(),
        |_| {},
    )
    .unwrap();

    let mut first = DeepGS::new(config.clone(), f.fingerprints.len(), 5).unwrap();
    let mut opt = Adam::new(config.adam(), &first.params);
    let mut saved = None;
    let opts = TrainOptions {
        max_steps: Some(2 * train.len()),
        ..TrainOptions::default()
    };
    let head = model::train_with(&mut first, &mut opt, &ds, &data, &train, &test, 5, opts, |_, m, o| {
        saved = Some((m.params.to_text(), o.state(&m.params).to_text()));
        Ok(())
    })
    .unwrap();
    let (params, state) = saved.unwrap();

    let mut resumed = DeepGS::new(config.clone(), f.fingerprints.len(), 5).unwrap();
    resumed
        .params
        .copy_from(&ParamStore::from_text(&params).unwrap())
        .unwrap();
    let mut opt = Adam::new(config.adam(), &resumed.params);
    opt.restore(&resumed.params, &ParamStore::from_text(&state).unwrap())
        .unwrap();
    let opts = TrainOptions {
        start_epoch: head.epochs.len(),
        ..TrainOptions::default()
    };
    let tail = model::train_with(&mut resumed, &mut opt, &ds, &data, &train, &test, 5, opts, |_, _, _| {
        Ok(())
    })
    .unwrap();

    let joined: Vec<_> = head.epochs.iter().chain(&tail.epochs).copied().collect();
    assert_eq!(joined, full.epochs);
    assert_eq!(resumed.params.to_text(), whole.params.to_text());
}
