//! Mini-batch SGD with classical momentum, step learning-rate decay and
//! per-modality model fitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EngagementLevel, ModalityTag, VideoSample};
use crate::error::{Error, Result};
use crate::losses::{crl_loss, mse_loss, total_loss, CenterBank, CrlLoss, RankConfig, DEFAULT_ALPHA};
use crate::model::{aggregate_scores, init_model, ForwardTrace, HeadMode, ModelDims, RegressionModel};
use crate::numcore::{seeded_rng, Matrix, Parameterized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Videos per mini-batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr0: 0.01,
            lr_decay: 0.1,
            lr_step: 20,
            epochs: 60,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, "must be a non-negative number"))
            }
        };
        nonneg("lr0", self.lr0)?;
        nonneg("lr_decay", self.lr_decay)?;
        nonneg("momentum", self.momentum)?;
        nonneg("weight_decay", self.weight_decay)?;
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.lr_step == 0 {
            return Err(Error::config("lr_step", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Learning rate for a zero-based epoch: `lr0 * lr_decay^(epoch / lr_step)`.
pub fn lr_at(epoch: usize, config: &OptimConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            epochs: config.epochs,
        });
    }
    Ok(config.lr0 * config.lr_decay.powi((epoch / config.lr_step) as i32))
}

/// One classical-momentum update:
/// `v <- momentum * v - lr * (g + weight_decay * w)`, then `w <- w + v`.
pub fn sgd_step(
    value: &mut Matrix,
    grad: &Matrix,
    velocity: &mut Matrix,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    for other in [grad.shape(), velocity.shape()] {
        if other != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left: value.shape(),
                right: other,
            });
        }
    }
    for ((w, g), v) in value
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(velocity.as_mut_slice())
    {
        *v = momentum * *v - lr * (g + weight_decay * *w);
        *w += *v;
    }
    Ok(())
}

/// Momentum buffers for every parameter of a model.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocity: Vec<Matrix>,
    decays: Vec<bool>,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn for_model(model: &RegressionModel, momentum: f64, weight_decay: f64) -> Self {
        let named = model.named_params();
        Sgd {
            velocity: named
                .iter()
                .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
            decays: named
                .iter()
                .map(|(n, _)| !RegressionModel::is_bias_name(n))
                .collect(),
            momentum,
            weight_decay,
        }
    }

    pub fn step(&mut self, model: &mut RegressionModel, lr: f64) -> Result<()> {
        for ((p, v), decays) in model
            .params_mut()
            .into_iter()
            .zip(&mut self.velocity)
            .zip(&self.decays)
        {
            let wd = if *decays { self.weight_decay } else { 0.0 };
            sgd_step(&mut p.value, &p.grad, v, lr, self.momentum, wd)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dims: ModelDims,
    pub optim: OptimConfig,
    pub rank: RankConfig,
    /// Center-bank update rate.
    pub alpha: f64,
    pub head_mode: HeadMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: ModelDims::default(),
            optim: OptimConfig::default(),
            rank: RankConfig::default(),
            alpha: DEFAULT_ALPHA,
            head_mode: HeadMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_mse,val_mse";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.lr, r.train_loss, r.train_mse, r.val_mse
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RegressionModel,
    pub bank: CenterBank,
    pub history: TrainHistory,
}

pub fn predict_all(model: &RegressionModel, samples: &[&VideoSample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| model.predict_video(s)).collect()
}

pub fn samples_mse(model: &RegressionModel, samples: &[&VideoSample]) -> Result<f64> {
    let preds = predict_all(model, samples)?;
    let labels: Vec<f64> = samples.iter().map(|s| s.label().value()).collect();
    Ok(mse_loss(&preds, &labels)?.0)
}

/// Everything the forward half of one mini-batch step produces.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// `mse + lambda * crl`.
    pub loss: f64,
    pub mse: f64,
    pub crl: CrlLoss,
    pub traces: Vec<ForwardTrace>,
    pub predictions: Vec<f64>,
    pub embeddings: Vec<Vec<f64>>,
    pub levels: Vec<EngagementLevel>,
    pub d_predictions: Vec<f64>,
}

/// Forward pass and total objective over a batch of videos.
pub fn batch_forward(
    model: &RegressionModel,
    batch: &[&VideoSample],
    bank: &CenterBank,
    rank: &RankConfig,
) -> Result<BatchEval> {
    let modality = model.modality();
    let mut traces = Vec::with_capacity(batch.len());
    let mut predictions = Vec::with_capacity(batch.len());
    for s in batch {
        let trace = model.forward(s.features(modality)?)?;
        predictions.push(aggregate_scores(&trace.scores(), model.head_mode()));
        traces.push(trace);
    }
    let labels: Vec<f64> = batch.iter().map(|s| s.label().value()).collect();
    let levels: Vec<EngagementLevel> = batch.iter().map(|s| s.label()).collect();
    let embeddings: Vec<Vec<f64>> = traces.iter().map(|t| t.embedding.clone()).collect();
    let (mse, d_predictions) = mse_loss(&predictions, &labels)?;
    let crl = crl_loss(&embeddings, &levels, bank, rank.delta)?;
    Ok(BatchEval {
        loss: total_loss(mse, crl.total(), rank.lambda_crl),
        mse,
        crl,
        traces,
        predictions,
        embeddings,
        levels,
        d_predictions,
    })
}

/// Accumulates the gradient of `eval.loss` into the model, videos in batch
/// order.
pub fn batch_backward(model: &mut RegressionModel, eval: &BatchEval, lambda: f64) -> Result<()> {
    for (j, trace) in eval.traces.iter().enumerate() {
        let d_scores = model.score_upstream(trace.k(), eval.d_predictions[j]);
        let d_embed: Vec<f64> = eval.crl.d_embeddings[j].iter().map(|g| lambda * g).collect();
        model.backward(trace, &d_scores, &d_embed)?;
    }
    Ok(())
}

/// Fits one modality's model on `train` (a multiset: repeats allowed),
/// reporting validation MSE on `val` after every epoch. The final-epoch
/// model is returned.
pub fn train_modality(
    train: &[&VideoSample],
    val: &[&VideoSample],
    modality: ModalityTag,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.optim.validate()?;
    config.rank.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    for s in train.iter().chain(val) {
        s.features(modality)?;
    }

    let optim = &config.optim;
    let mut model = init_model(modality, config.dims, optim.seed)?;
    model.set_head_mode(config.head_mode);
    let mut bank = CenterBank::new(config.dims.h2, config.alpha)?;
    let mut sgd = Sgd::for_model(&model, optim.momentum, optim.weight_decay);
    let mut rng = seeded_rng(optim.seed.wrapping_add(0x5eed_0f5b_u64));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..optim.epochs {
        let lr = lr_at(epoch, optim)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut sq_err_sum = 0.0;

        for (batch_idx, batch) in order.chunks(optim.batch_size).enumerate() {
            let samples: Vec<&VideoSample> = batch.iter().map(|&i| train[i]).collect();
            model.zero_grads();
            let eval = batch_forward(&model, &samples, &bank, &config.rank)?;
            if !eval.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            batch_backward(&mut model, &eval, config.rank.lambda_crl)?;
            sgd.step(&mut model, lr)?;
            bank.update(&eval.embeddings, &eval.levels)?;
            let (loss, mse) = (eval.loss, eval.mse);

            loss_sum += loss * batch.len() as f64;
            sq_err_sum += mse * batch.len() as f64;
        }

        let n = train.len() as f64;
        let val_mse = samples_mse(&model, val)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        log::debug!(
            "{modality} epoch {epoch}: lr {lr} train_loss {:.6} val_mse {val_mse:.6}",
            loss_sum / n
        );
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_mse: sq_err_sum / n,
            val_mse,
        });
    }
    Ok(TrainOutcome {
        model,
        bank,
        history,
    })
}

/// [`train_modality`] over whole datasets.
pub fn train_on_datasets(
    train: &Dataset,
    val: &Dataset,
    modality: ModalityTag,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !train.is_empty() && !train.has_modality(modality) {
        return Err(missing_modality(train, modality));
    }
    if !val.is_empty() && !val.has_modality(modality) {
        return Err(missing_modality(val, modality));
    }
    let t: Vec<&VideoSample> = train.samples().iter().collect();
    let v: Vec<&VideoSample> = val.samples().iter().collect();
    train_modality(&t, &v, modality, config)
}

fn missing_modality(ds: &Dataset, modality: ModalityTag) -> Error {
    let s = ds
        .samples()
        .iter()
        .find(|s| s.features(modality).is_err())
        .expect("some sample lacks the modality");
    Error::MissingModality {
        video_id: s.video_id().to_string(),
        modality: modality.to_string(),
    }
}
