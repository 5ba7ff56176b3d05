use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use deepgs::data::split_folds;
use deepgs::model::{self, Featurizer, PreparedData, TrainOptions};
use deepgs::nn::{Adam, ParamStore};
use deepgs::{
    rng, AffinityDataset, AffinityKind, Bundle, DeepGS, DeepGSConfig, EmbeddingTable, History, MetricsReport,
};

use crate::args::{DataArgs, ModelArgs};
use crate::error::CliError;
use crate::manifest::{self, RunManifest, RunStatus};

pub const MODEL_DIR: &str = "model";
const OPTIMIZER: &str = "optimizer.txt";
const HISTORY: &str = "history.csv";
const STATUS: &str = "status.json";

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Defaults, then the config file, then individual flags.
pub fn resolve_config(m: &ModelArgs) -> Result<DeepGSConfig, CliError> {
    let mut c = DeepGSConfig::default();
    if let Some(p) = &m.config {
        c.apply_text(&read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    }
    if let Some(v) = m.variant {
        c.variant = v;
    }
    if let Some(v) = m.lds {
        c.l_ds = v;
    }
    if let Some(v) = m.lps {
        c.l_ps = v;
    }
    if let Some(v) = m.epochs {
        c.epochs = v;
    }
    for kv in &m.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k.trim(), v)?;
    }
    c.validate()?;
    Ok(c)
}

pub struct Split {
    pub ds: AffinityDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn load_split(d: &DataArgs) -> Result<Split, CliError> {
    let ds = AffinityDataset::load(&d.drugs, &d.proteins, &d.affinities, d.kind.into())?;
    let folds = split_folds(ds.len(), d.folds, d.seed)?;
    Ok(Split {
        train: folds.train_indices(d.fold)?,
        test: folds.test_indices(d.fold)?,
        ds,
    })
}

fn embedding_table(
    path: Option<&PathBuf>,
    flag: &str,
    allow_random: bool,
    dim: usize,
    oov_seed: u64,
) -> Result<EmbeddingTable, CliError> {
    match path {
        Some(p) if p.exists() => EmbeddingTable::load(p, dim, oov_seed).map_err(|e| CliError::io(p, e)),
        _ if allow_random => {
            log::warn!("no {flag} vectors; every token is out of vocabulary");
            Ok(EmbeddingTable::empty(dim, oov_seed))
        }
        Some(p) => Err(CliError::Data(format!(
            "{}: no such file (pass --allow-random-embeddings to train without it)",
            p.display()
        ))),
        None => Err(CliError::Usage(format!(
            "--{flag} is required unless --allow-random-embeddings is given"
        ))),
    }
}

fn embedding_tables(
    m: &ModelArgs,
    config: &DeepGSConfig,
    seed: u64,
) -> Result<(EmbeddingTable, EmbeddingTable), CliError> {
    let (s_seed, p_seed) = (
        rng::derive_seed(seed, "oov:smiles"),
        rng::derive_seed(seed, "oov:protein"),
    );
    if config.variant.uses_one_hot() {
        return Ok((
            EmbeddingTable::empty(config.embed_dim, s_seed),
            EmbeddingTable::empty(config.embed_dim, p_seed),
        ));
    }
    let allow = m.allow_random_embeddings;
    Ok((
        embedding_table(m.smi2vec.as_ref(), "smi2vec", allow, config.embed_dim, s_seed)?,
        embedding_table(m.prot2vec.as_ref(), "prot2vec", allow, config.embed_dim, p_seed)?,
    ))
}

fn build_manifest(d: &DataArgs, m: &ModelArgs, config: &DeepGSConfig) -> Result<RunManifest, CliError> {
    let mut inputs = BTreeMap::new();
    for (k, p) in [
        ("drugs", &d.drugs),
        ("proteins", &d.proteins),
        ("affinities", &d.affinities),
    ] {
        inputs.insert(k.to_string(), manifest::input_file(p)?);
    }
    if !config.variant.uses_one_hot() {
        for (k, p) in [("smi2vec", &m.smi2vec), ("prot2vec", &m.prot2vec)] {
            if let Some(p) = p.as_ref().filter(|p| p.exists()) {
                inputs.insert(k.to_string(), manifest::input_file(p)?);
            }
        }
    }
    Ok(RunManifest {
        version: concat!("deepgs ", env!("CARGO_PKG_VERSION")).to_string(),
        seed: d.seed,
        kind: AffinityKind::from(d.kind).as_str().to_string(),
        fold: d.fold,
        folds: d.folds,
        config: manifest::config_map(&config.to_text()),
        inputs,
        started_at_unix: manifest::now_unix(),
    })
}

/// Result of a finished `train` run.
pub struct Trained {
    pub bundle: Bundle,
    pub split: Split,
    pub data: PreparedData,
    pub epochs_completed: usize,
}

/// Trains into `out`, writing the manifest first and a full checkpoint after
/// every epoch. With `resume`, continues the run already in `out`.
pub fn train(d: &DataArgs, m: &ModelArgs, out: &Path, resume: bool) -> Result<Trained, CliError> {
    let config = resolve_config(m)?;
    let split = load_split(d)?;
    let current = build_manifest(d, m, &config)?;
    let has_run = out.join(manifest::FILE).exists();

    let (mut bundle, mut opt, mut history_text) = if resume {
        if !has_run {
            return Err(CliError::Usage(format!("{}: no run to resume", out.display())));
        }
        RunManifest::load(out)?.check_resume(&current)?;
        let mut bundle = Bundle::load(out.join(MODEL_DIR))?;
        bundle.model.config.epochs = config.epochs;
        let state =
            ParamStore::from_text(&read(&out.join(OPTIMIZER))?).map_err(|e| CliError::io(&out.join(OPTIMIZER), e))?;
        let mut opt = Adam::new(bundle.model.config.adam(), &bundle.model.params);
        opt.restore(&bundle.model.params, &state)
            .map_err(|e| CliError::io(&out.join(OPTIMIZER), e))?;
        (bundle, opt, read(&out.join(HISTORY))?)
    } else {
        if has_run {
            return Err(CliError::Usage(format!(
                "{} already holds a run; pass --resume or choose another --out",
                out.display()
            )));
        }
        let (smiles_table, protein_table) = embedding_tables(m, &config, d.seed)?;
        let ds = &split.ds;
        let mut drugs: Vec<usize> = split.train.iter().map(|&i| ds.triples[i].drug).collect();
        let mut proteins: Vec<usize> = split.train.iter().map(|&i| ds.triples[i].protein).collect();
        drugs.sort_unstable();
        drugs.dedup();
        proteins.sort_unstable();
        proteins.dedup();
        let featurizer = Featurizer::fit(
            &config,
            drugs.iter().map(|&i| ds.drugs[i].value.as_str()),
            proteins.iter().map(|&i| ds.proteins[i].value.as_str()),
            smiles_table,
            protein_table,
        )?;
        let model = DeepGS::new(config.clone(), featurizer.fingerprints.len(), d.seed)?;
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        current.save(out)?;
        let opt = Adam::new(model.config.adam(), &model.params);
        let bundle = Bundle {
            model,
            featurizer,
            seed: d.seed,
        };
        (bundle, opt, format!("{}\n", History::CSV_HEADER))
    };

    let done = history_text.lines().count().saturating_sub(1);
    let all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    let data = PreparedData::new(&split.ds, &bundle.featurizer, &all)?;
    log::info!(
        "training {} on {} pairs, testing on {}, epochs {}..{}",
        config.variant,
        split.train.len(),
        split.test.len(),
        done,
        config.epochs
    );
    let opts = TrainOptions {
        start_epoch: done,
        ..TrainOptions::default()
    };
    let featurizer = bundle.featurizer.clone();
    let history = model::train_with(
        &mut bundle.model,
        &mut opt,
        &split.ds,
        &data,
        &split.train,
        &split.test,
        d.seed,
        opts,
        |record, model, opt| {
            let io = |e: CliError| deepgs::ModelError::Bundle(e.to_string());
            log::info!(
                "epoch {} train_mse {:.4} test_mse {:.4} test_ci {:.4}",
                record.epoch,
                record.train_mse,
                record.test_mse,
                record.test_ci
            );
            let snapshot = Bundle {
                model: model.clone(),
                featurizer: featurizer.clone(),
                seed: d.seed,
            };
            snapshot.save(out.join(MODEL_DIR))?;
            write(&out.join(OPTIMIZER), &opt.state(&model.params).to_text()).map_err(io)?;
            let _ = writeln!(history_text, "{}", record.csv_row());
            write(&out.join(HISTORY), &history_text).map_err(io)
        },
    )?;
    let epochs_completed = done + history.epochs.len();
    if history.epochs.is_empty() {
        // Nothing ran (epochs = 0 or already complete): still leave a loadable model.
        bundle.save(out.join(MODEL_DIR))?;
        if !out.join(HISTORY).exists() {
            write(&out.join(HISTORY), &history_text)?;
        }
    }
    let status = RunStatus {
        finished_at_unix: manifest::now_unix(),
        epochs_completed,
        steps: history.steps,
    };
    let text = serde_json::to_string_pretty(&status).map_err(|e| CliError::io(&out.join(STATUS), e))?;
    write(&out.join(STATUS), &(text + "\n"))?;
    Ok(Trained {
        bundle,
        split,
        data,
        epochs_completed,
    })
}

/// Metrics of `bundle` on `indices`, with the dataset's AUPR threshold.
pub fn score(
    bundle: &Bundle,
    ds: &AffinityDataset,
    data: &PreparedData,
    indices: &[usize],
) -> Result<MetricsReport, CliError> {
    if indices.is_empty() {
        return Err(CliError::Data("no pairs to evaluate".into()));
    }
    let preds = model::predict_indices(&bundle.model, ds, data, indices)?;
    let labels = ds.affinities(indices);
    MetricsReport::compute(&preds, &labels, Some(ds.kind.threshold())).map_err(|e| CliError::Numeric(e.to_string()))
}

/// Accepts either a `train --out` directory or a bundle directory.
pub fn load_bundle(path: &Path) -> Result<Bundle, CliError> {
    let nested = path.join(MODEL_DIR);
    let dir = if nested.is_dir() { nested } else { path.to_path_buf() };
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{}: no such model directory", path.display())));
    }
    Ok(Bundle::load(dir)?)
}
