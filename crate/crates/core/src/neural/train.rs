use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{l2_loss, l2_loss_grad, Adam, AdamConfig, GcnModel, Network, Precision, Scalar};
use crate::dataset::ViewSample;
use crate::parallel;
use crate::view::LabelImage;
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub spiral_len: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<u64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            seed: 0,
            precision: Precision::F32,
            spiral_len: 9,
            max_steps: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.spiral_len < 2 {
            return Err(Error::Config("spiral_len must be at least 2".into()));
        }
        self.adam.validate()
    }
}

/// Labels 0..=4 mapped to `[0, 1]`.
pub fn image_to_input<T: Scalar>(image: &LabelImage) -> Vec<T> {
    image.pixels.iter().map(|&p| T::of(p as f64 / 4.0)).collect()
}

/// Network-ready input and target (coordinates divided by the image size).
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
}

impl<T: Scalar> PreparedSample<T> {
    pub fn from_sample(sample: &ViewSample) -> Self {
        let inv = 1.0 / sample.image.size as f64;
        PreparedSample {
            input: image_to_input(&sample.image),
            target: sample.gt_coords.iter().flat_map(|p| [p.x, p.y, p.z]).map(|c| T::of(c * inv)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Mini-batch Adam over a model; owns the only mutable copy of the weights.
pub struct Trainer<T: Scalar> {
    pub model: GcnModel<T>,
    pub config: TrainConfig,
    pub steps: u64,
    /// Mean batch loss observed before each optimizer step.
    pub step_losses: Vec<f64>,
    opt: Adam<T>,
    shuffle: ChaCha8Rng,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: GcnModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let shapes: Vec<usize> = model.net.tensors().iter().map(|t| t.len()).collect();
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle.set_stream(1);
        Ok(Trainer {
            opt: Adam::new(config.adam, &shapes),
            model,
            config,
            steps: 0,
            step_losses: Vec::new(),
            shuffle,
        })
    }

    fn sample_gradient(&self, s: &PreparedSample<T>) -> Result<(Network<T>, f64)> {
        let cache = self.model.forward_cached(&s.input)?;
        if cache.output.len() != s.target.len() {
            return Err(Error::Shape(format!(
                "target has {} values, model emits {}",
                s.target.len(),
                cache.output.len()
            )));
        }
        let loss = l2_loss(&cache.output, &s.target).as_f64();
        let d = l2_loss_grad(&cache.output, &s.target);
        let mut g = Network::zeros(&self.model.arch);
        self.model.backward(&cache, &d, &mut g);
        Ok((g, loss))
    }

    /// Mean loss and mean gradient over a batch. Per-sample work runs in
    /// parallel; the reduction is in batch order so results do not depend
    /// on the thread count.
    pub fn batch_gradient(&self, batch: &[&PreparedSample<T>]) -> Result<(Network<T>, f64)> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let parts = parallel::map_slice(batch, |s| self.sample_gradient(s));
        let mut total: Option<Network<T>> = None;
        let mut loss = 0.0;
        for part in parts {
            let (g, l) = part?;
            loss += l;
            match &mut total {
                Some(t) => t.accumulate(&g),
                None => total = Some(g),
            }
        }
        let mut g = total.unwrap();
        let n = batch.len() as f64;
        g.scale(T::of(1.0 / n));
        Ok((g, loss / n))
    }

    pub fn step(&mut self, batch: &[&PreparedSample<T>]) -> Result<f64> {
        let (g, loss) = self.batch_gradient(batch)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training diverged at step {}: loss {loss}", self.steps + 1)));
        }
        self.opt.update(self.model.net.tensors_mut(), g.tensors())?;
        self.steps += 1;
        self.step_losses.push(loss);
        Ok(loss)
    }

    fn budget_left(&self) -> bool {
        self.config.max_steps.is_none_or(|m| self.steps < m)
    }

    /// One pass over `data` in seeded shuffled order. Returns the
    /// sample-weighted mean of the pre-update batch losses.
    pub fn run_epoch(&mut self, data: &[PreparedSample<T>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Validation("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            if !self.budget_left() {
                break;
            }
            let batch: Vec<&PreparedSample<T>> = chunk.iter().map(|&i| &data[i]).collect();
            sum += self.step(&batch)? * batch.len() as f64;
            count += batch.len();
        }
        Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
    }

    /// Mean loss over `data` without updating anything.
    pub fn evaluate(&self, data: &[PreparedSample<T>]) -> Result<f64> {
        evaluate_loss(&self.model, data)
    }
}

pub fn evaluate_loss<T: Scalar>(model: &GcnModel<T>, data: &[PreparedSample<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Validation("evaluation set is empty".into()));
    }
    let losses = parallel::map_slice(data, |s| model.forward(&s.input).map(|p| l2_loss(&p, &s.target).as_f64()));
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / data.len() as f64)
}

/// Predicted vertex positions in pixel units.
pub fn predict_coords<T: Scalar>(model: &GcnModel<T>, input: &[T]) -> Result<Vec<Vec3>> {
    let size = model.arch.image_size as f64;
    Ok(model
        .forward(input)?
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0].as_f64(), c[1].as_f64(), c[2].as_f64()) * size)
        .collect())
}

pub struct TrainOutcome<T: Scalar> {
    pub history: Vec<EpochLoss>,
    /// Epoch (1-based) with the lowest validation loss, or the lowest
    /// training loss when there is no validation set.
    pub best_epoch: usize,
    pub best_weights: Network<T>,
    pub trainer: Trainer<T>,
}

pub fn train<T: Scalar>(
    model: GcnModel<T>,
    config: &TrainConfig,
    train_set: &[PreparedSample<T>],
    val_set: &[PreparedSample<T>],
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network<T>)> = None;
    for epoch in 1..=config.epochs {
        if !trainer.budget_left() {
            break;
        }
        let train_loss = trainer.run_epoch(train_set)?;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(trainer.evaluate(val_set)?)
        };
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, trainer.model.net.clone()));
        }
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    let (_, best_epoch, best_weights) = best.ok_or_else(|| Error::Config("no training epoch ran".into()))?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_weights,
        trainer,
    })
}

pub fn write_loss_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for e in history {
        let val = e.val_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
        writeln!(s, "{},{:.9e},{}", e.epoch, e.train_loss, val).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::tests::small_model;

    fn synthetic(n: usize, model: &GcnModel<f32>, seed: u64) -> Vec<PreparedSample<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = model.arch.image_size;
        let nv = model.arch.vertex_count;
        (0..n)
            .map(|_| {
                use rand::Rng;
                let input = (0..size * size).map(|_| rng.random_range(0..5u8) as f32 / 4.0).collect();
                let target = (0..nv * 3).map(|_| rng.random_range(-0.5f32..0.5)).collect();
                PreparedSample { input, target }
            })
            .collect()
    }

    #[test]
    fn memorises_one_sample() {
        let model: GcnModel<f32> = small_model(5);
        let data = synthetic(1, &model, 1);
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 1,
            adam: AdamConfig {
                lr: 4e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train(model, &cfg, &data, &[]).unwrap();
        assert_eq!(out.trainer.steps, 500);
        let last = *out.trainer.step_losses.last().unwrap();
        assert!(last < 1e-3, "final loss {last}");
    }

    #[test]
    fn same_seed_same_curve() {
        let run = || {
            let model: GcnModel<f32> = small_model(5);
            let data = synthetic(6, &model, 2);
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 4,
                seed: 11,
                ..TrainConfig::default()
            };
            let out = train(model, &cfg, &data[..4], &data[4..]).unwrap();
            (out.history, out.trainer.step_losses, out.best_weights)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn max_steps_caps_training() {
        let model: GcnModel<f32> = small_model(5);
        let data = synthetic(5, &model, 3);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 2,
            max_steps: Some(4),
            ..TrainConfig::default()
        };
        let out = train(model, &cfg, &data, &[]).unwrap();
        assert_eq!(out.trainer.steps, 4);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn loss_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let h = vec![
            EpochLoss {
                epoch: 1,
                train_loss: 0.5,
                val_loss: Some(0.25),
            },
            EpochLoss {
                epoch: 2,
                train_loss: 0.125,
                val_loss: None,
            },
        ];
        write_loss_csv(&p, &h).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert_eq!(s, "epoch,train_loss,val_loss\n1,5.000000000e-1,2.500000000e-1\n2,1.250000000e-1,\n");
    }

    #[test]
    fn invalid_config_rejected() {
        let model: GcnModel<f32> = small_model(5);
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(Trainer::new(model, cfg), Err(Error::Config(_))));
    }
}
