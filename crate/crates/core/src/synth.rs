//! Correlated seller-dataset generation.
//!
//! Every downstream quantity (correlation estimates, data types, coalition
//! values) is computed from datasets produced here, so generation is a pure
//! function of `(spec, seed)`: identical inputs give bit-identical datasets.
//!
//! Each device observes a scalar signal stream; signals across devices are
//! drawn jointly from a multivariate normal per time step, which is how we
//! realize correlated data types. The signal is the first feature column;
//! remaining columns are independent noise, and labels come from a fixed
//! linear ground-truth model so the learner has a solvable task.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// Standard deviation of the Gaussian label noise added by generators.
pub const LABEL_NOISE_SIGMA: f64 = 0.05;

/// Namespace for id-keyed rows so shared sample ids hash identically
/// across devices and calls.
const SHARED_ROW_NAMESPACE: u64 = 0x5eed_0f_04e71a9;

/// Fixed ground-truth weights for label generation: alternating sign,
/// harmonically decaying.
pub fn ground_truth_weights(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (k + 1) as f64)
        .collect()
}

/// Generative description of a correlated multi-seller scenario.
#[derive(Debug, Clone)]
pub struct CorrelationSpec {
    pub num_devices: usize,
    /// Per-device signal means, length `num_devices`.
    pub mean_vector: Vec<f64>,
    /// Signal covariance across devices, `num_devices x num_devices`,
    /// symmetric positive semi-definite.
    pub covariance: Vec<Vec<f64>>,
    /// Samples per device, each >= 1.
    pub samples_per_device: Vec<usize>,
    /// Feature dimension; column 0 carries the correlated signal.
    pub feature_dim: usize,
    /// Explicit per-device sample-id sets for overlap scenarios. When
    /// present, rows are a pure function of the global sample id, so a
    /// shared id yields bit-identical rows on every device holding it.
    pub shared_sample_ids: Option<Vec<BTreeSet<u64>>>,
}

impl CorrelationSpec {
    /// Independent unit-variance signals; the simplest valid spec.
    pub fn independent(num_devices: usize, samples: usize, feature_dim: usize) -> Self {
        let covariance = (0..num_devices)
            .map(|i| {
                (0..num_devices)
                    .map(|j| if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        CorrelationSpec {
            num_devices,
            mean_vector: vec![0.0; num_devices],
            covariance,
            samples_per_device: vec![samples; num_devices],
            feature_dim,
            shared_sample_ids: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.num_devices;
        if m == 0 {
            return Err(Error::InvalidInput("num_devices must be >= 1".into()));
        }
        if self.mean_vector.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "mean_vector has length {}, expected {}",
                self.mean_vector.len(),
                m
            )));
        }
        if self.covariance.len() != m || self.covariance.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be {m}x{m}"
            )));
        }
        for i in 0..m {
            for j in 0..i {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if self.samples_per_device.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "samples_per_device has length {}, expected {}",
                self.samples_per_device.len(),
                m
            )));
        }
        if self.samples_per_device.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput(
                "samples_per_device entries must be >= 1".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidInput("feature_dim must be >= 1".into()));
        }
        if let Some(sets) = &self.shared_sample_ids {
            if sets.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "shared_sample_ids has length {}, expected {}",
                    sets.len(),
                    m
                )));
            }
        }
        Ok(())
    }
}

/// One seller's local dataset. `sample_ids[i]` identifies row `i` of
/// `features`; ids are unique within a device and global across the market,
/// so intersections and unions are exact set operations.
#[derive(Debug, Clone, PartialEq)]
pub struct SellerDataset {
    pub device_id: usize,
    pub sample_ids: Vec<u64>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl SellerDataset {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Sample ids as a set, for valuation arithmetic.
    pub fn id_set(&self) -> BTreeSet<u64> {
        self.sample_ids.iter().copied().collect()
    }

    /// The correlated scalar signal (first feature column), the stream
    /// revealed sample-by-sample to the buyer.
    pub fn signal_stream(&self) -> Vec<f64> {
        self.features.iter().map(|row| row[0]).collect()
    }
}

/// Lower-ish factor A with A*A^T = covariance, via symmetric eigen
/// decomposition so PSD-singular matrices are accepted. Rejects matrices
/// with a meaningfully negative eigenvalue, naming the offender.
fn psd_factor(covariance: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = covariance.len();
    let mat = DMatrix::from_fn(m, m, |i, j| covariance[i][j]);
    let scale = mat.amax().max(1.0);
    let eig = mat.symmetric_eigen();
    let mut min_idx = 0;
    for (idx, &val) in eig.eigenvalues.iter().enumerate() {
        if val < eig.eigenvalues[min_idx] {
            min_idx = idx;
        }
    }
    let min_val = eig.eigenvalues[min_idx];
    if min_val < -1e-9 * scale {
        return Err(Error::NotPsd {
            index: min_idx,
            value: min_val,
        });
    }
    let sqrt_vals = DVector::from_iterator(m, eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Deterministic feature row + label for a global sample id. Identical
/// across devices and calls, which is what makes declared overlaps real.
fn id_keyed_row(id: u64, feature_dim: usize) -> (Vec<f64>, f64) {
    let mut row_rng = rng::stream_rng(SHARED_ROW_NAMESPACE, id);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let row: Vec<f64> = (0..feature_dim).map(|_| normal.sample(&mut row_rng)).collect();
    let w = ground_truth_weights(feature_dim);
    let noise: f64 = normal.sample(&mut row_rng) * LABEL_NOISE_SIGMA;
    let label = row.iter().zip(&w).map(|(x, wk)| x * wk).sum::<f64>() + noise;
    (row, label)
}

/// Generate one dataset per device with signals drawn i.i.d. per time step
/// from `N(mean_vector, covariance)`.
///
/// Deterministic for a fixed `(spec, seed)`. With `shared_sample_ids`
/// present, rows are id-keyed instead (see [`CorrelationSpec`]); otherwise
/// sample ids are globally unique, so device id-sets are disjoint.
pub fn generate_correlated_profiles(
    spec: &CorrelationSpec,
    seed: u64,
) -> Result<Vec<SellerDataset>> {
    spec.validate()?;
    let m = spec.num_devices;

    if let Some(sets) = &spec.shared_sample_ids {
        let datasets = sets
            .iter()
            .enumerate()
            .map(|(device, ids)| {
                let mut sample_ids = Vec::with_capacity(ids.len());
                let mut features = Vec::with_capacity(ids.len());
                let mut labels = Vec::with_capacity(ids.len());
                for &id in ids {
                    let (row, label) = id_keyed_row(id, spec.feature_dim);
                    sample_ids.push(id);
                    features.push(row);
                    labels.push(label);
                }
                SellerDataset {
                    device_id: device,
                    sample_ids,
                    features,
                    labels,
                }
            })
            .collect();
        return Ok(datasets);
    }

    let factor = psd_factor(&spec.covariance)?;
    let rounds = spec.samples_per_device.iter().copied().max().unwrap_or(0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let w = ground_truth_weights(spec.feature_dim);

    let mut signal_rng = rng::stream_rng(seed, 0);
    let mut noise_rng = rng::stream_rng(seed, 1);

    let mut datasets: Vec<SellerDataset> = (0..m)
        .map(|device| SellerDataset {
            device_id: device,
            sample_ids: Vec::new(),
            features: Vec::new(),
            labels: Vec::new(),
        })
        .collect();

    for t in 0..rounds {
        let z = DVector::from_fn(m, |_, _| normal.sample(&mut signal_rng));
        let signals = &factor * z;
        for device in 0..m {
            if t >= spec.samples_per_device[device] {
                continue;
            }
            let mut row = Vec::with_capacity(spec.feature_dim);
            row.push(signals[device] + spec.mean_vector[device]);
            for _ in 1..spec.feature_dim {
                row.push(normal.sample(&mut noise_rng));
            }
            let label = row.iter().zip(&w).map(|(x, wk)| x * wk).sum::<f64>()
                + normal.sample(&mut noise_rng) * LABEL_NOISE_SIGMA;
            let ds = &mut datasets[device];
            ds.sample_ids.push((t * m + device) as u64);
            ds.features.push(row);
            ds.labels.push(label);
        }
    }
    Ok(datasets)
}

/// The three-seller correlated scenario: sellers carry streams of
/// `X ~ N(mu_x, sigma_x^2)`, `Y ~ N(mu_y, sigma_y^2)` and `Z = 0.5 X + Y`.
pub fn make_three_seller_scenario(
    mu_x: f64,
    sigma_x: f64,
    mu_y: f64,
    sigma_y: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<SellerDataset>> {
    if sigma_x <= 0.0 || sigma_y <= 0.0 {
        return Err(Error::InvalidInput(
            "sigma_x and sigma_y must be positive".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "three-seller scenario needs at least one sample".into(),
        ));
    }
    // Z's mean/covariance follow from the linear combination, so we build
    // the joint draw directly instead of going through a covariance matrix.
    let dist_x = Normal::new(mu_x, sigma_x).expect("valid normal");
    let dist_y = Normal::new(mu_y, sigma_y).expect("valid normal");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let feature_dim = 2;
    let w = ground_truth_weights(feature_dim);

    let mut signal_rng = rng::stream_rng(seed, 0);
    let mut noise_rng = rng::stream_rng(seed, 1);

    let mut datasets: Vec<SellerDataset> = (0..3)
        .map(|device| SellerDataset {
            device_id: device,
            sample_ids: Vec::new(),
            features: Vec::new(),
            labels: Vec::new(),
        })
        .collect();

    for t in 0..n {
        let x = dist_x.sample(&mut signal_rng);
        let y = dist_y.sample(&mut signal_rng);
        let z = 0.5 * x + y;
        for (device, signal) in [(0usize, x), (1, y), (2, z)] {
            let mut row = Vec::with_capacity(feature_dim);
            row.push(signal);
            for _ in 1..feature_dim {
                row.push(normal.sample(&mut noise_rng));
            }
            let label = row.iter().zip(&w).map(|(v, wk)| v * wk).sum::<f64>()
                + normal.sample(&mut noise_rng) * LABEL_NOISE_SIGMA;
            let ds = &mut datasets[device];
            ds.sample_ids.push((t * 3 + device) as u64);
            ds.features.push(row);
            ds.labels.push(label);
        }
    }
    Ok(datasets)
}

/// Build datasets from explicit sample-id sets. Rows for a shared id are
/// bit-identical across devices.
pub fn make_overlap_scenario(sample_sets: &[BTreeSet<u64>]) -> Vec<SellerDataset> {
    sample_sets
        .iter()
        .enumerate()
        .map(|(device, ids)| {
            let mut sample_ids = Vec::with_capacity(ids.len());
            let mut features = Vec::with_capacity(ids.len());
            let mut labels = Vec::with_capacity(ids.len());
            for &id in ids {
                let (row, label) = id_keyed_row(id, 2);
                sample_ids.push(id);
                features.push(row);
                labels.push(label);
            }
            SellerDataset {
                device_id: device,
                sample_ids,
                features,
                labels,
            }
        })
        .collect()
}

/// Pearson correlation of two equal-length slices. Returns `None` when a
/// slice has zero variance.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn z_spec(n: usize) -> CorrelationSpec {
        // (X, Y, Z) with Z = 0.5 X + Y for independent standard normals:
        // cov(X,Z)=0.5, cov(Y,Z)=1, var(Z)=1.25.
        CorrelationSpec {
            num_devices: 3,
            mean_vector: vec![0.0; 3],
            covariance: vec![
                vec![1.0, 0.0, 0.5],
                vec![0.0, 1.0, 1.0],
                vec![0.5, 1.0, 1.25],
            ],
            samples_per_device: vec![n; 3],
            feature_dim: 2,
            shared_sample_ids: None,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = z_spec(64);
        let a = generate_correlated_profiles(&spec, 9).unwrap();
        let b = generate_correlated_profiles(&spec, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn independent_case_has_near_zero_cross_correlation() {
        let spec = CorrelationSpec::independent(2, 10_000, 2);
        let ds = generate_correlated_profiles(&spec, 11).unwrap();
        let r = sample_correlation(&ds[0].signal_stream(), &ds[1].signal_stream()).unwrap();
        assert!(r.abs() < 0.05, "expected |r| < 0.05, got {r}");
    }

    #[test]
    fn linear_combination_recovers_analytic_correlations() {
        let ds = generate_correlated_profiles(&z_spec(10_000), 3).unwrap();
        let r_xz = sample_correlation(&ds[0].signal_stream(), &ds[2].signal_stream()).unwrap();
        let r_yz = sample_correlation(&ds[1].signal_stream(), &ds[2].signal_stream()).unwrap();
        // 3/sqrt(n) statistical tolerance.
        let tol = 3.0 / (10_000f64).sqrt();
        assert_abs_diff_eq!(r_xz, 0.5 / 1.25f64.sqrt(), epsilon = tol);
        assert_abs_diff_eq!(r_yz, 1.0 / 1.25f64.sqrt(), epsilon = tol);
    }

    #[test]
    fn different_seeds_same_limits() {
        let a = generate_correlated_profiles(&z_spec(10_000), 1).unwrap();
        let b = generate_correlated_profiles(&z_spec(10_000), 2).unwrap();
        assert_ne!(a[0].features, b[0].features);
        let ra = sample_correlation(&a[0].signal_stream(), &a[2].signal_stream()).unwrap();
        let rb = sample_correlation(&b[0].signal_stream(), &b[2].signal_stream()).unwrap();
        assert!((ra - rb).abs() < 0.02, "seed drift too large: {ra} vs {rb}");
    }

    #[test]
    fn non_psd_covariance_rejected_with_eigenvalue() {
        let mut spec = CorrelationSpec::independent(2, 4, 2);
        spec.covariance = vec![vec![1.0, 2.0], vec![2.0, 1.0]]; // eigenvalues 3, -1
        match generate_correlated_profiles(&spec, 0) {
            Err(Error::NotPsd { value, .. }) => assert!(value < -0.5),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn three_seller_shapes_and_moments() {
        let ds = make_three_seller_scenario(0.0, 1.0, 0.0, 1.0, 1000, 5).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.iter().all(|d| d.len() == 1000));

        let big = make_three_seller_scenario(0.0, 1.0, 0.0, 1.0, 200_000, 5).unwrap();
        let z = big[2].signal_stream();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert_abs_diff_eq!(var, 1.25, epsilon = 0.02);

        let shifted = make_three_seller_scenario(5.0, 1.0, 0.0, 1.0, 200_000, 6).unwrap();
        let zs = shifted[2].signal_stream();
        let mean_s = zs.iter().sum::<f64>() / zs.len() as f64;
        assert_abs_diff_eq!(mean_s, 2.5, epsilon = 0.02);
    }

    #[test]
    fn three_seller_rejects_empty() {
        assert!(matches!(
            make_three_seller_scenario(0.0, 1.0, 0.0, 1.0, 0, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn overlap_scenario_set_arithmetic() {
        let d1: BTreeSet<u64> = [1, 2, 3, 4, 5].into_iter().collect();
        let d2: BTreeSet<u64> = [1, 2].into_iter().collect();
        let ds = make_overlap_scenario(&[d1.clone(), d2.clone()]);
        assert_eq!(d1.intersection(&d2).count(), 2);

        // Shared ids carry bit-identical rows.
        for (i, &id) in ds[1].sample_ids.iter().enumerate() {
            let j = ds[0].sample_ids.iter().position(|&x| x == id).unwrap();
            assert_eq!(ds[0].features[j], ds[1].features[i]);
            assert_eq!(ds[0].labels[j], ds[1].labels[i]);
        }

        let disjoint = make_overlap_scenario(&[
            [1].into_iter().collect(),
            [2].into_iter().collect(),
        ]);
        let ids0 = disjoint[0].id_set();
        let ids1 = disjoint[1].id_set();
        assert_eq!(ids0.intersection(&ids1).count(), 0);

        let identical = make_overlap_scenario(&[
            [1, 2].into_iter().collect(),
            [1, 2].into_iter().collect(),
        ]);
        let a = identical[0].id_set();
        let b = identical[1].id_set();
        assert_eq!(a.intersection(&b).count(), 2);
        assert_eq!(a.union(&b).count(), 2);
    }
}
