use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Example, Model};
use super::spec::Backbone;
use crate::corpus::{CorpusItem, NormStats};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, AdamConfig, AdamState, Loss};
use crate::scalar::Real;
use crate::seed::derive_seed;

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: Loss,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a lower training loss.
    pub patience: Option<usize>,
    pub clip_norm: f64,
}

impl TrainConfig {
    /// L2 at 1e-3 for waveform models, L1 at 1e-4 for spectral ones.
    pub fn for_backbone(backbone: Backbone) -> Self {
        let (loss, lr) = match backbone {
            Backbone::Fcn => (Loss::L2, 1e-3),
            Backbone::Tdnn | Backbone::Blstm => (Loss::L1, 1e-4),
        };
        Self {
            loss,
            lr,
            epochs: 10,
            seed: 0,
            patience: None,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        Ok(())
    }
}

/// Mean per-utterance loss of every completed epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainLog {
    /// `epoch<TAB>loss` lines.
    pub fn render(&self) -> String {
        let mut s = String::from("# epoch\tloss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{}\t{l:.10e}\n", i + 1));
        }
        s
    }
}

/// Fits z-score statistics over the spec's sensors of the training items.
pub fn fit_norm<T: Real>(model: &Model<T>, items: &[CorpusItem<T>]) -> Result<NormStats> {
    let sensors = &model.spec().sensors;
    let tracks = items
        .iter()
        .map(|it| Ok((it.speaker_id.as_str(), it.track.select_sensors(sensors)?)))
        .collect::<Result<Vec<_>>>()?;
    NormStats::fit(tracks.iter().map(|(s, t)| (*s, t)))
}

/// Per-utterance Adam training over precomputed examples. The visiting
/// order is reshuffled every epoch from the run seed.
pub fn train<T: Real>(model: &mut Model<T>, examples: &[Example<T>], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    let mut adam = AdamState::<T>::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["shuffle"]));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog::default();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let ex = &examples[k];
            let ctx = |e: Error| e.context(&format!("epoch {} utterance {}", epoch + 1, ex.id));
            model.zero_grad();
            let y = model.forward(&ex.features).map_err(ctx)?;
            let (loss, grad) = cfg.loss.eval(y.values(), ex.target.values()).map_err(ctx)?;
            if !loss.to_f64_lossy().is_finite() {
                return Err(ctx(Error::Numerical("loss is not finite".into())));
            }
            let dy = crate::nn::Tensor::new(y.shape().to_vec(), grad)?;
            model.backward(&dy).map_err(ctx)?;
            let mut params = model.params_mut();
            clip_global_norm(&mut params, cfg.clip_norm);
            adam.step(&mut params).map_err(ctx)?;
            total += loss.to_f64_lossy();
        }
        let mean = total / examples.len() as f64;
        log::info!("epoch {} loss {mean:.6e}", epoch + 1);
        log.epoch_losses.push(mean);
        if mean < best {
            best = mean;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok(log)
}

/// Fits normalization on `items`, builds examples and trains.
pub fn train_items<T: Real>(model: &mut Model<T>, items: &[CorpusItem<T>], cfg: &TrainConfig) -> Result<TrainLog> {
    if model.spec().fusion.uses_emma() {
        let norm = fit_norm(model, items)?;
        model.set_norm(norm)?;
    }
    let examples = items.iter().map(|it| model.example(it)).collect::<Result<Vec<_>>>()?;
    train(model, &examples, cfg)
}
