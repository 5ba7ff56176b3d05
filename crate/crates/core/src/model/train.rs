use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::{DeepGS, DrugInput, Featurizer, ModelError, ProteinInput};
use crate::data::AffinityDataset;
use crate::metrics;
use crate::nn::{Adam, Graph};
use crate::rng;

/// Featurized drugs and proteins of a dataset, indexed like the dataset's records.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub drugs: Vec<Option<DrugInput>>,
    pub proteins: Vec<Option<ProteinInput>>,
}

impl PreparedData {
    /// Featurizes every drug and protein referenced by `indices`.
    pub fn new(ds: &AffinityDataset, featurizer: &Featurizer, indices: &[usize]) -> Result<Self, ModelError> {
        let mut drugs = vec![None; ds.drugs.len()];
        let mut proteins = vec![None; ds.proteins.len()];
        for &i in indices {
            let t = ds.triples[i];
            if drugs[t.drug].is_none() {
                drugs[t.drug] = Some(featurizer.drug(&ds.drugs[t.drug].value)?);
            }
            if proteins[t.protein].is_none() {
                proteins[t.protein] = Some(featurizer.protein(&ds.proteins[t.protein].value));
            }
        }
        Ok(Self { drugs, proteins })
    }

    pub fn pair(&self, ds: &AffinityDataset, triple: usize) -> (&DrugInput, &ProteinInput) {
        let t = ds.triples[triple];
        (
            self.drugs[t.drug].as_ref().expect("drug prepared"),
            self.proteins[t.protein].as_ref().expect("protein prepared"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-step loss over the epoch.
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_ci: f64,
}

impl EpochRecord {
    /// One `epoch,train_mse,test_mse,test_ci` line without the newline.
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.train_mse, self.test_mse, self.test_ci)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
    /// Loss of every step in order.
    pub step_losses: Vec<f64>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_mse,test_mse,test_ci";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Skip the per-epoch test evaluation.
    pub skip_test_eval: bool,
    /// First epoch to run; earlier epochs are assumed done (resume).
    pub start_epoch: usize,
}

/// Predictions for `indices`, computed in parallel.
pub fn predict_indices(
    model: &DeepGS,
    ds: &AffinityDataset,
    data: &PreparedData,
    indices: &[usize],
) -> Result<Vec<f64>, ModelError> {
    let pairs: Vec<_> = indices.iter().map(|&i| data.pair(ds, i)).collect();
    model.predict_many(&pairs)
}

/// Test MSE and CI; NaN where a metric is undefined.
fn evaluate(
    model: &DeepGS,
    ds: &AffinityDataset,
    data: &PreparedData,
    test: &[usize],
) -> Result<(f64, f64), ModelError> {
    if test.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let preds = predict_indices(model, ds, data, test)?;
    let labels = ds.affinities(test);
    let mse = metrics::mse(&preds, &labels)?;
    let ci = metrics::concordance_index(&preds, &labels).unwrap_or(f64::NAN);
    Ok((mse, ci))
}

/// Batch-size-1 ADAM training over `train` in a freshly shuffled order each
/// epoch. `on_epoch` sees every finished epoch.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut DeepGS,
    ds: &AffinityDataset,
    data: &PreparedData,
    train: &[usize],
    test: &[usize],
    seed: u64,
    opts: TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History, ModelError> {
    let mut opt = Adam::new(model.config.adam(), &model.params);
    train_with(model, &mut opt, ds, data, train, test, seed, opts, |r, _, _| {
        on_epoch(r);
        Ok(())
    })
}

/// [`train`] with a caller-owned optimizer. `on_epoch` also sees the model
/// and optimizer after each epoch, e.g. to checkpoint them. A run split at an
/// epoch boundary and resumed with the saved optimizer state reproduces the
/// uninterrupted run bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn train_with(
    model: &mut DeepGS,
    opt: &mut Adam,
    ds: &AffinityDataset,
    data: &PreparedData,
    train: &[usize],
    test: &[usize],
    seed: u64,
    opts: TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord, &DeepGS, &Adam) -> Result<(), ModelError>,
) -> Result<History, ModelError> {
    let mut history = History::default();
    let epochs = model.config.epochs;
    if opts.start_epoch >= epochs || train.is_empty() || opts.max_steps == Some(0) {
        return Ok(history);
    }
    if model.config.init_bias_to_mean && opts.start_epoch == 0 {
        let mean = ds.affinities(train).iter().sum::<f64>() / train.len() as f64;
        let b = model.output_bias();
        model.params.get_mut(b).data_mut()[0] = mean;
    }
    let mut order = train.to_vec();
    'epochs: for epoch in opts.start_epoch..epochs {
        opt.set_epoch(epoch);
        order.copy_from_slice(train);
        order.shuffle(&mut rng::stream(seed, &format!("shuffle:{epoch}")));
        let (mut sum, mut count) = (0.0, 0usize);
        let mut stop = false;
        for &i in &order {
            let (drug, protein) = data.pair(ds, i);
            let label = ds.affinity(i);
            let grads = {
                let mut g = Graph::new(&model.params);
                let y = model.forward(&mut g, drug, protein)?;
                let l = g.mse(y, &[label])?;
                let loss = g.value(l).item();
                if !loss.is_finite() {
                    return Err(ModelError::NonFiniteLoss {
                        epoch,
                        step: history.steps,
                        loss,
                    });
                }
                sum += loss;
                count += 1;
                history.step_losses.push(loss);
                g.backward(l)?
            };
            opt.step(&mut model.params, &grads)?;
            history.steps += 1;
            if opts.max_steps.is_some_and(|m| history.steps >= m) {
                stop = true;
                break;
            }
        }
        let (test_mse, test_ci) = if opts.skip_test_eval {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(model, ds, data, test)?
        };
        let record = EpochRecord {
            epoch,
            train_mse: sum / count as f64,
            test_mse,
            test_ci,
        };
        on_epoch(&record, model, opt)?;
        history.epochs.push(record);
        if stop {
            break 'epochs;
        }
    }
    Ok(history)
}
