//! The buyer-side learner: empirical risk on a linear model, the potential
//! function used to score data, marginal-contribution data typing, and the
//! buyer's least-squares type-estimation attack.
//!
//! Losses are squared residuals of a linear model, which keeps gradients
//! Lipschitz and makes a closed-form least-squares oracle available to the
//! tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::synth::SellerDataset;

/// Parameters of the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        ModelParams { w: vec![0.0; dim] }
    }
}

/// One labeled sample, self-contained so subsets can be resampled freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: f64,
}

impl SellerDataset {
    /// Materialize the dataset as owned samples.
    pub fn samples(&self) -> Vec<Sample> {
        self.sample_ids
            .iter()
            .zip(self.features.iter())
            .zip(self.labels.iter())
            .map(|((id, x), y)| Sample {
                id: *id,
                features: x.clone(),
                label: *y,
            })
            .collect()
    }
}

/// A device's exposed data type: privacy preference `xi` gating the average
/// marginal contribution `theta`, quantized into one of `K` levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataType {
    pub theta: f64,
    pub xi: f64,
    pub phi: f64,
    pub level: usize,
}

fn predict(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(wk, xk)| wk * xk).sum()
}

fn residual(w: &[f64], s: &Sample) -> f64 {
    predict(w, &s.features) - s.label
}

/// Mean squared residual over the dataset.
pub fn local_loss(params: &ModelParams, dataset: &SellerDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(
            "local_loss of an empty dataset is undefined".into(),
        ));
    }
    if dataset.feature_dim() != params.w.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} weights, dataset rows have {} features",
            params.w.len(),
            dataset.feature_dim()
        )));
    }
    let sum: f64 = dataset
        .features
        .iter()
        .zip(&dataset.labels)
        .map(|(x, y)| (predict(&params.w, x) - y).powi(2))
        .sum();
    Ok(sum / dataset.len() as f64)
}

/// Sample-count weighted mean of the local losses.
pub fn global_loss(params: &ModelParams, datasets: &[SellerDataset]) -> Result<f64> {
    if datasets.is_empty() {
        return Err(Error::InvalidInput("no datasets".into()));
    }
    let total: usize = datasets.iter().map(SellerDataset::len).sum();
    if total == 0 {
        return Err(Error::InvalidInput("all datasets empty".into()));
    }
    let mut loss = 0.0;
    for ds in datasets {
        if ds.is_empty() {
            continue;
        }
        loss += ds.len() as f64 / total as f64 * local_loss(params, ds)?;
    }
    Ok(loss)
}

fn loss_of_samples(w: &[f64], samples: &[&Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| residual(w, s).powi(2)).sum::<f64>() / samples.len() as f64
}

fn gradient_of_samples(w: &[f64], samples: &[&Sample]) -> Vec<f64> {
    let dim = w.len();
    let mut grad = vec![0.0; dim];
    if samples.is_empty() {
        return grad;
    }
    for s in samples {
        let r = residual(w, s);
        for (g, x) in grad.iter_mut().zip(&s.features) {
            *g += 2.0 * r * x;
        }
    }
    for g in &mut grad {
        *g /= samples.len() as f64;
    }
    grad
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of the loss Hessian `2 X^T X / n`, the gradient
/// Lipschitz constant of the squared loss on `samples`.
fn lipschitz_constant(samples: &[&Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let dim = samples[0].features.len();
    let n = samples.len() as f64;
    let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        for i in 0..dim {
            for j in 0..dim {
                h[(i, j)] += 2.0 * s.features[i] * s.features[j] / n;
            }
        }
    }
    h.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
}

/// Gradient descent on the weighted global loss. Deterministic per seed;
/// reports divergence (non-finite loss) with the offending step.
pub fn train(
    datasets: &[SellerDataset],
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<ModelParams> {
    if datasets.is_empty() || datasets.iter().all(SellerDataset::is_empty) {
        return Err(Error::InvalidInput("nothing to train on".into()));
    }
    let dim = datasets
        .iter()
        .find(|d| !d.is_empty())
        .map(|d| d.feature_dim())
        .unwrap_or(0);
    for ds in datasets {
        if !ds.is_empty() && ds.feature_dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "device {} has feature dim {}, expected {dim}",
                ds.device_id,
                ds.feature_dim()
            )));
        }
    }
    let mut init_rng = rng::stream_rng(seed, 0);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let mut params = ModelParams {
        w: (0..dim).map(|_| normal.sample(&mut init_rng)).collect(),
    };

    let total: usize = datasets.iter().map(SellerDataset::len).sum();
    let all: Vec<Sample> = datasets.iter().flat_map(|d| d.samples()).collect();
    let refs: Vec<&Sample> = all.iter().collect();
    debug_assert_eq!(refs.len(), total);

    for step in 0..steps {
        let grad = gradient_of_samples(&params.w, &refs);
        for (w, g) in params.w.iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        let loss = loss_of_samples(&params.w, &refs);
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
    }
    Ok(params)
}

/// Gradient-norm contraction ratio after one full-batch epoch on `subset`,
/// clipped to `[0, 1]`. The step size is `1/L` for the subset's Lipschitz
/// constant, so on the quadratic loss the pre-clip ratio cannot exceed 1.
///
/// Conventions: empty subset -> 1 (no update possible); zero gradient at
/// the baseline -> 0 (already optimal).
pub fn potential(subset: &[&Sample], baseline: &ModelParams) -> f64 {
    if subset.is_empty() {
        return 1.0;
    }
    let grad_before = gradient_of_samples(&baseline.w, subset);
    let norm_before = norm(&grad_before);
    if norm_before == 0.0 {
        return 0.0;
    }
    let lip = lipschitz_constant(subset);
    if lip <= 0.0 {
        return 0.0;
    }
    let step = 1.0 / lip;
    let w_after: Vec<f64> = baseline
        .w
        .iter()
        .zip(&grad_before)
        .map(|(w, g)| w - step * g)
        .collect();
    let norm_after = norm(&gradient_of_samples(&w_after, subset));
    (norm_after / norm_before).clamp(0.0, 1.0)
}

/// Improvement potential `1 - epsilon`: maps subsets to `[0, 1]` with
/// larger values meaning faster convergence. This is the set function the
/// typing pipeline feeds to [`marginal_contribution`], so useful data gets
/// a positive average marginal contribution.
pub fn improvement_potential(baseline: &ModelParams) -> impl Fn(&[&Sample]) -> f64 + '_ {
    move |subset| 1.0 - potential(subset, baseline)
}

/// Monte Carlo estimate of the expected marginal contribution of the batch
/// `z` to random i.i.d. sub-batches of `data`: draw `i ~ U{1..batch}`, then
/// `i - 1` samples with replacement, and average
/// `potential_fn(subset + z) - potential_fn(subset)`.
///
/// Per-draw RNG streams are derived from `(seed, draw index)`, so draws can
/// be evaluated in any order (or concurrently) with bit-identical results.
pub fn marginal_contribution<F>(
    z: &[Sample],
    data: &[Sample],
    batch: usize,
    draws: usize,
    seed: u64,
    potential_fn: F,
) -> Result<f64>
where
    F: Fn(&[&Sample]) -> f64,
{
    if batch == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be >= 1".into()));
    }
    let mut acc = 0.0;
    for draw in 0..draws {
        let mut draw_rng = rng::stream_rng(seed, draw as u64);
        let i = draw_rng.random_range(1..=batch);
        let mut subset: Vec<&Sample> = Vec::with_capacity(i - 1 + z.len());
        if !data.is_empty() {
            for _ in 0..i - 1 {
                subset.push(&data[draw_rng.random_range(0..data.len())]);
            }
        }
        let base = potential_fn(&subset);
        subset.extend(z.iter());
        let with_z = potential_fn(&subset);
        acc += with_z - base;
    }
    Ok(acc / draws as f64)
}

/// Uniform quantizer on `[0, 1]`: `ceil(phi * K)` clamped to `[1, K]`, so
/// `phi = 0` lands in level 1.
pub fn quantize_level(phi: f64, levels: usize) -> usize {
    ((phi * levels as f64).ceil() as usize).clamp(1, levels)
}

/// Compose `theta` and the privacy preference `xi` into the exposed data
/// type `phi = xi * theta`, quantized to `level = ceil(phi * K)` clamped to
/// `[1, K]`. `theta` is clamped to `[0, 1]`; `xi` outside `[0, 1]` is an
/// error.
pub fn data_type(theta: f64, xi: f64, levels: usize) -> Result<DataType> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidInput(format!(
            "privacy preference xi must be in [0, 1], got {xi}"
        )));
    }
    if levels == 0 {
        return Err(Error::InvalidInput("levels must be >= 1".into()));
    }
    let theta = theta.clamp(0.0, 1.0);
    let phi = xi * theta;
    let level = quantize_level(phi, levels);
    Ok(DataType {
        theta,
        xi,
        phi,
        level,
    })
}

/// The traded signal `S = xi + N(0, 1)`: the device's type through the
/// identity mapping plus unit Gaussian noise, observed once per round.
pub fn trade_signals(xi: f64, observations: usize, seed: u64) -> Vec<f64> {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut signal_rng = rng::rng(seed);
    (0..observations)
        .map(|_| xi + noise.sample(&mut signal_rng))
        .collect()
}

/// The buyer's type-estimation attack: least-squares fit of `xi` from the
/// traded signals. With the identity signal map the minimizer is the sample
/// mean; devices with no observations stay unestimated.
pub fn estimate_types(signals: &[Vec<f64>]) -> Vec<Option<f64>> {
    signals
        .iter()
        .map(|obs| {
            if obs.is_empty() {
                None
            } else {
                Some(obs.iter().sum::<f64>() / obs.len() as f64)
            }
        })
        .collect()
}
