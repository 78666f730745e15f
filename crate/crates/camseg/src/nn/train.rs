//! Mini-batch training with adaptive moments, early stopping on validation
//! accuracy, and accuracy evaluation.
//!
//! Every stochastic choice (split membership, epoch shuffles) draws from a
//! stream derived off the config seed, and in-batch parallelism folds
//! per-sample results in sample order, so a run is bit-reproducible for any
//! worker count.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::network::{Network, ParamGrads};
use super::spec::{NnError, TrainConfig};
use crate::data::{image_to_tensor, RoiSample};
use crate::rng::derive_rng;
use crate::scalar::Element;
use crate::tensor::{softmax_cross_entropy, Tensor};

/// Per-epoch training record kept in checkpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Resolves a worker-count request: explicit value, else the
/// `CAMSEG_THREADS` environment variable, else the CPU count.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("CAMSEG_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(rayon::current_num_threads)
        .max(1)
}

/// Builds a dedicated pool when more than one worker is requested.
pub(crate) fn worker_pool(threads: usize) -> Option<rayon::ThreadPool> {
    (threads > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool construction")
    })
}

/// Adaptive moment estimation over a fixed list of parameter tensors.
struct Adam<T: Element> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Element> Adam<T> {
    fn new(lr: f64, shapes: &[Vec<usize>]) -> Self {
        Self {
            lr: T::from_f64_value(lr),
            beta1: T::from_f64_value(0.9),
            beta2: T::from_f64_value(0.999),
            eps: T::from_f64_value(1e-8),
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    fn apply(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) {
        self.step += 1;
        let bias1 = T::one() - self.beta1.powi(self.step);
        let bias2 = T::one() - self.beta2.powi(self.step);
        for ((param, grad), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            for i in 0..grad.len() {
                let g = grad.data()[i];
                let mi = self.beta1 * m.data()[i] + (T::one() - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (T::one() - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = self.lr * (mi / bias1) / ((vi / bias2).sqrt() + self.eps);
                param.data_mut()[i] -= update;
            }
        }
    }
}

/// Splits sample indices into train/validation, stratified by class.
///
/// Each class is shuffled by a seed-derived stream and cut at
/// `round(split · n)` (clamped so neither side loses a class entirely when
/// the class has two or more samples). If validation ends up empty — only
/// possible when every class is a singleton — one sample is moved over so
/// early stopping always has something to score.
fn stratified_split(
    dataset: &[RoiSample],
    split: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = derive_rng(seed, "split", &format!("class{class}"));
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = if n == 1 {
            1
        } else {
            ((split * n as f64).round() as usize).clamp(1, n - 1)
        };
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..]);
    }
    if val.is_empty() {
        // Both classes are singletons; surrender the higher-labeled sample.
        let idx = *train
            .iter()
            .max_by_key(|&&i| dataset[i].label)
            .expect("train split is nonempty");
        train.retain(|&i| i != idx);
        val.push(idx);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn check_dataset(dataset: &[RoiSample]) -> Result<(), NnError> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if let Some(s) = dataset.iter().find(|s| s.label > 1) {
        return Err(NnError::BadLabel(s.label));
    }
    let first = dataset[0].label;
    if dataset.iter().all(|s| s.label == first) {
        return Err(NnError::SingleClass(first));
    }
    Ok(())
}

struct SampleResult<T: Element> {
    loss: T,
    correct: bool,
    grads: ParamGrads<T>,
}

/// Forward + loss + full backward for one sample.
fn sample_step<T: Element>(
    network: &Network<T>,
    input: &Tensor<T>,
    label: u8,
) -> Result<SampleResult<T>, NnError> {
    let acts = network.forward(input)?;
    let (loss, logit_grad) = softmax_cross_entropy(acts.logits(), label as usize)?;
    let correct = acts.predicted_class() == label as usize;
    let (grads, _) = network.backward(&acts, logit_grad)?;
    Ok(SampleResult {
        loss,
        correct,
        grads,
    })
}

/// Trains in place and returns the best-validation-epoch checkpoint.
///
/// The network is left holding the best epoch's weights (the same ones the
/// checkpoint records), not the final epoch's.
pub fn train<T: Element>(
    network: &mut Network<T>,
    dataset: &[RoiSample],
    config: &TrainConfig,
) -> Result<Checkpoint<T>, NnError> {
    config.validate()?;
    check_dataset(dataset)?;
    let (train_idx, val_idx) = stratified_split(dataset, config.split, config.seed);

    let inputs: Vec<Tensor<T>> = dataset.iter().map(|s| image_to_tensor(&s.image)).collect();
    let labels: Vec<u8> = dataset.iter().map(|s| s.label).collect();
    let pool = worker_pool(resolve_threads(config.threads));

    let shapes: Vec<Vec<usize>> = network
        .named_tensors()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);

    let mut history = Vec::new();
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_tensors = network.named_tensors();
    let mut epochs_since_improvement = 0usize;

    for epoch in 1..=config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut derive_rng(config.seed, "shuffle", &epoch.to_string()));

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            // Parallelism stops at the per-sample map: results come back in
            // sample order and are folded sequentially, so the update is
            // identical for any worker count.
            let results: Result<Vec<SampleResult<T>>, NnError> = match &pool {
                Some(pool) => pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&i| sample_step(network, &inputs[i], labels[i]))
                        .collect()
                }),
                None => batch
                    .iter()
                    .map(|&i| sample_step(network, &inputs[i], labels[i]))
                    .collect(),
            };
            let results = results?;

            let mut grad_sum: Option<ParamGrads<T>> = None;
            for r in &results {
                loss_sum += r.loss.to_f64_value();
                correct += r.correct as usize;
                match &mut grad_sum {
                    None => grad_sum = Some(r.grads.clone()),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&r.grads) {
                            if let (Some((aw, ab)), Some((gw, gb))) = (a.as_mut(), g.as_ref()) {
                                aw.add_assign_tensor(gw);
                                ab.add_assign_tensor(gb);
                            }
                        }
                    }
                }
            }
            let mut grad_sum = grad_sum.expect("batches are nonempty");
            let inv = T::one() / T::from_count(results.len());
            let mut flat = Vec::with_capacity(shapes.len());
            for entry in &mut grad_sum {
                if let Some((w, b)) = entry {
                    w.scale(inv);
                    b.scale(inv);
                    flat.push(w.clone());
                    flat.push(b.clone());
                }
            }
            adam.apply(network.trainable_mut(), &flat);
        }

        let val_acc = eval_indices(network, &inputs, &labels, &val_idx, pool.as_ref())?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            train_acc: correct as f64 / train_idx.len() as f64,
            val_acc,
        });

        if val_acc > best_val_acc {
            best_val_acc = val_acc;
            best_epoch = epoch;
            best_tensors = network.named_tensors();
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= config.patience {
                break;
            }
        }
    }

    network.load_tensors(&best_tensors)?;
    Ok(Checkpoint {
        spec: network.spec().clone(),
        tensors: best_tensors,
        best_val_acc,
        best_epoch,
        history,
        seed: config.seed,
        val_ids: val_idx.iter().map(|&i| dataset[i].id.clone()).collect(),
    })
}

fn eval_indices<T: Element>(
    network: &Network<T>,
    inputs: &[Tensor<T>],
    labels: &[u8],
    indices: &[usize],
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64, NnError> {
    if indices.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let predict = |i: usize| -> Result<bool, NnError> {
        let acts = network.forward(&inputs[i])?;
        Ok(acts.predicted_class() == labels[i] as usize)
    };
    let hits: Result<Vec<bool>, NnError> = match pool {
        Some(pool) => pool.install(|| indices.par_iter().map(|&i| predict(i)).collect()),
        None => indices.iter().map(|&i| predict(i)).collect(),
    };
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / indices.len() as f64)
}

/// Fraction of samples whose argmax logit matches their label.
pub fn evaluate<T: Element>(
    network: &Network<T>,
    dataset: &[RoiSample],
) -> Result<f64, NnError> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let inputs: Vec<Tensor<T>> = dataset.iter().map(|s| image_to_tensor(&s.image)).collect();
    let labels: Vec<u8> = dataset.iter().map(|s| s.label).collect();
    let indices: Vec<usize> = (0..dataset.len()).collect();
    eval_indices(network, &inputs, &labels, &indices, None)
}
