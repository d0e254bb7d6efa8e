use std::borrow::Cow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    augment, init_model, logit, loss_and_grad, lr_at, sgd_step, sigmoid, ArchConfig, ModelError, ModelState,
    TrainConfig,
};
use crate::data::{Class, Dataset, Example, Group, Layout};
use crate::rng::substream;

/// One test example's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub true_class: Class,
    pub predicted_class: Class,
    /// `max(p, 1 - p)` for the positive-class probability `p`.
    pub confidence: f64,
    pub group: Group,
}

impl PredictionRecord {
    /// Hard label `+1` iff `p >= 0.5`.
    pub fn from_probability(p: f64, true_class: Class, group: Group) -> Self {
        let predicted_class = if p >= 0.5 { Class::Positive } else { Class::Negative };
        PredictionRecord { true_class, predicted_class, confidence: p.max(1.0 - p), group }
    }

    pub fn correct(&self) -> bool {
        self.true_class == self.predicted_class
    }
}

/// State handed to the per-epoch hook.
pub struct Snapshot<'a> {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub state: &'a ModelState,
}

/// Trains a fresh model for `cfg.effective_epochs()` epochs and calls `hook`
/// after every epoch. The whole trajectory is a function of the inputs and
/// `seed`: initialization, shuffling and augmentation each use their own
/// substream.
pub fn train<F, E>(
    arch: &ArchConfig,
    cfg: &TrainConfig,
    dataset: &Dataset,
    seed: u64,
    mut hook: F,
) -> Result<ModelState, E>
where
    F: FnMut(&Snapshot<'_>) -> Result<(), E>,
    E: From<ModelError>,
{
    cfg.validate()?;
    arch.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::Empty.into());
    }
    let dim = dataset.layout.input_dimension();
    if dim != arch.input_dimension {
        return Err(ModelError::Dimension { expected: arch.input_dimension, actual: dim }.into());
    }
    let inputs = dataset.model_inputs();
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("training features".into()).into());
    }
    let labels: Vec<Class> = dataset.examples.iter().map(|e| e.class).collect();
    let augmentation = match (&dataset.layout, cfg.augmentation) {
        (Layout::Image { shape, augment: Some(kind) }, true) => Some((*shape, *kind)),
        _ => None,
    };

    let mut state = init_model(arch, seed)?;
    let mut shuffle_rng = substream("train/shuffle", seed);
    let mut augment_rng = substream("train/augment", seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.effective_epochs() {
        let lr = lr_at(cfg, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Cow<'_, [f64]>> = chunk
                .iter()
                .map(|&i| match augmentation {
                    Some((shape, kind)) => Cow::Owned(augment(&inputs[i], &shape, kind, &mut augment_rng)),
                    None => Cow::Borrowed(inputs[i].as_slice()),
                })
                .collect();
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let (loss, grads) = loss_and_grad(&state.params, &batch, &batch_labels, cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch, loss }.into());
            }
            sgd_step(&mut state, &grads, lr, cfg.momentum).map_err(|e| match e {
                ModelError::NonFinite(_) => ModelError::Diverged { epoch, loss: f64::NAN },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
        }
        state.epoch = epoch;
        hook(&Snapshot { epoch, lr, train_loss: loss_sum / inputs.len() as f64, state: &state })?;
    }
    Ok(state)
}

/// Records for precomputed model inputs; `inputs[i]` belongs to `examples[i]`.
pub fn predict_inputs(
    model: &ModelState,
    inputs: &[Vec<f64>],
    examples: &[Example],
) -> Result<Vec<PredictionRecord>, ModelError> {
    inputs
        .iter()
        .zip(examples)
        .map(|(x, e)| {
            if x.len() != model.arch.input_dimension {
                return Err(ModelError::Dimension { expected: model.arch.input_dimension, actual: x.len() });
            }
            let p = sigmoid(logit(&model.params, x));
            if !p.is_finite() {
                return Err(ModelError::NonFinite("prediction".into()));
            }
            Ok(PredictionRecord::from_probability(p, e.class, e.group))
        })
        .collect()
}

/// One record per example, in order. The dataset's normalization stats are
/// applied; no augmentation.
pub fn predict(model: &ModelState, dataset: &Dataset) -> Result<Vec<PredictionRecord>, ModelError> {
    predict_inputs(model, &dataset.model_inputs(), &dataset.examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, BiasConfig, GroupConvention, SynthConfig};

    fn separable() -> (Dataset, Dataset) {
        let cfg = SynthConfig {
            dimension: 3,
            class_margin: 1.0,
            group_margin: 0.5,
            noise_sigma: 0.0,
            train_size: 200,
            test_size: 100,
        };
        let bias = BiasConfig::new(0.1, GroupConvention::Inversion).unwrap();
        let s = synth_generate(&cfg, &bias, 0).unwrap();
        (s.train, s.test)
    }

    #[test]
    fn tie_predicts_positive() {
        let r = PredictionRecord::from_probability(0.5, Class::Negative, Group::A);
        assert_eq!(r.predicted_class, Class::Positive);
        assert_eq!(r.confidence, 0.5);
        assert!(!r.correct());
        let r = PredictionRecord::from_probability(0.2, Class::Negative, Group::A);
        assert_eq!(r.predicted_class, Class::Negative);
        assert!((r.confidence - 0.8).abs() < 1e-15);
    }

    #[test]
    fn linear_model_separates_noiseless_data() {
        let (train_ds, test_ds) = separable();
        let arch = ArchConfig::linear(3);
        let cfg = TrainConfig::with_epochs(20);
        let mut epochs = Vec::new();
        let model = train::<_, ModelError>(&arch, &cfg, &train_ds, 1, |s| {
            epochs.push((s.epoch, s.lr));
            Ok(())
        })
        .unwrap();
        assert_eq!(epochs.len(), 20);
        assert_eq!(epochs[0], (1, 0.01));
        assert_eq!(model.epoch, 20);
        for records in [predict(&model, &train_ds).unwrap(), predict(&model, &test_ds).unwrap()] {
            assert!(records.iter().all(|r| r.correct()));
            assert!(records.iter().all(|r| (0.5..=1.0).contains(&r.confidence)));
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (train_ds, _) = separable();
        let arch = ArchConfig::mlp(3, 1, 8);
        let mut cfg = TrainConfig::with_epochs(3);
        cfg.batch_size = 16;
        let a = train::<_, ModelError>(&arch, &cfg, &train_ds, 9, |_| Ok(())).unwrap();
        let b = train::<_, ModelError>(&arch, &cfg, &train_ds, 9, |_| Ok(())).unwrap();
        let bits = |m: &ModelState| m.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = train::<_, ModelError>(&arch, &cfg, &train_ds, 10, |_| Ok(())).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn prediction_permutes_with_input() {
        let (train_ds, mut test_ds) = separable();
        let model =
            train::<_, ModelError>(&ArchConfig::mlp(3, 1, 4), &TrainConfig::with_epochs(2), &train_ds, 2, |_| Ok(()))
                .unwrap();
        let before = predict(&model, &test_ds).unwrap();
        test_ds.examples.reverse();
        let mut after = predict(&model, &test_ds).unwrap();
        after.reverse();
        assert_eq!(before, after);
    }

    #[test]
    fn divergence_reports_epoch() {
        let (mut train_ds, _) = separable();
        for e in &mut train_ds.examples {
            e.features[0] *= 1e150;
        }
        let mut cfg = TrainConfig::with_epochs(5);
        cfg.warmup_lr = 1e10;
        let err = train::<_, ModelError>(&ArchConfig::mlp(3, 2, 4), &cfg, &train_ds, 0, |_| Ok(())).unwrap_err();
        assert!(matches!(err, ModelError::Diverged { .. } | ModelError::NonFinite(_)), "{err:?}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (train_ds, _) = separable();
        let err =
            train::<_, ModelError>(&ArchConfig::linear(4), &TrainConfig::with_epochs(1), &train_ds, 0, |_| Ok(()))
                .unwrap_err();
        assert!(matches!(err, ModelError::Dimension { expected: 4, actual: 3 }));
    }
}
