//! Seed-addressable regression dataset.
//!
//! Samples are never stored. Sample `i` is a pure function of `(seed, i)`:
//! a dedicated ChaCha8 stream (key from the dataset seed, stream id `i`)
//! yields `N` uniform inputs followed by `N'` standard normals for the output
//! noise, so any sample can be rebuilt bit-identically in O(1).

use crate::dln::{composite_matrix, Batch, DlnParams};
use crate::seeds;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset must contain at least one sample")]
    Empty,
    #[error("input bounds [{low}, {high}] do not form an interval")]
    BadInputBounds { low: f64, high: f64 },
    #[error("noise variance must be finite and nonnegative, got {0}")]
    BadNoiseVariance(f64),
    #[error("batch size {m} exceeds dataset size {n}")]
    BatchTooLarge { m: usize, n: usize },
    #[error("batch size must be positive")]
    EmptyBatch,
}

/// A generated learning problem's data distribution plus the seed that
/// addresses its realization.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n: usize,
    pub input_low: f64,
    pub input_high: f64,
    pub noise_variance: f64,
    pub seed: u64,
    true_params: DlnParams,
    // Composite true matrix, cached so targets cost one mat-vec.
    composite: Array2<f64>,
}

impl DatasetSpec {
    pub fn new(
        n: usize,
        input_low: f64,
        input_high: f64,
        noise_variance: f64,
        seed: u64,
        true_params: DlnParams,
    ) -> Result<Self, DatasetError> {
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if !(input_low < input_high) || !input_low.is_finite() || !input_high.is_finite() {
            return Err(DatasetError::BadInputBounds {
                low: input_low,
                high: input_high,
            });
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(DatasetError::BadNoiseVariance(noise_variance));
        }
        let composite = composite_matrix(&true_params);
        Ok(Self {
            n,
            input_low,
            input_high,
            noise_variance,
            seed,
            true_params,
            composite,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.true_params.arch().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.true_params.arch().output_dim()
    }

    pub fn true_params(&self) -> &DlnParams {
        &self.true_params
    }

    pub fn true_composite(&self) -> &Array2<f64> {
        &self.composite
    }

    fn sample_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = seeds::stream("dataset-samples", &[self.seed]);
        rng.set_stream(index as u64);
        rng.set_word_pos(0);
        rng
    }

    /// Regenerate sample `i`: `X_i ~ Uniform[low, high]^N`,
    /// `Y_i = W_0 X_i + N_i` with `N_i ~ Normal(0, noise_variance I)`.
    pub fn sample(&self, index: usize) -> (Array1<f64>, Array1<f64>) {
        debug_assert!(index < self.n);
        let mut rng = self.sample_rng(index);
        let x: Array1<f64> = (0..self.input_dim())
            .map(|_| rng.gen_range(self.input_low..self.input_high))
            .collect();
        let sigma = self.noise_variance.sqrt();
        let noise: Array1<f64> = (0..self.output_dim())
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let y = self.composite.dot(&x) + noise;
        (x, y)
    }

    /// Materialize the given dataset indices as a batch.
    pub fn batch_from_indices(&self, indices: &[usize]) -> Result<Batch, DatasetError> {
        if indices.is_empty() {
            return Err(DatasetError::EmptyBatch);
        }
        let m = indices.len();
        let mut inputs = Array2::zeros((m, self.input_dim()));
        let mut targets = Array2::zeros((m, self.output_dim()));
        for (row, &i) in indices.iter().enumerate() {
            let (x, y) = self.sample(i);
            inputs.row_mut(row).assign(&x);
            targets.row_mut(row).assign(&y);
        }
        Ok(Batch::new(inputs, targets, indices.to_vec()).expect("rows match by construction"))
    }

    /// Empirical loss over the whole dataset, streamed in chunks.
    pub fn full_loss(&self, params: &DlnParams) -> f64 {
        const CHUNK: usize = 2048;
        let mut total = 0.0;
        let mut lo = 0;
        while lo < self.n {
            let hi = (lo + CHUNK).min(self.n);
            let indices: Vec<usize> = (lo..hi).collect();
            let batch = self.batch_from_indices(&indices).expect("nonempty chunk");
            let chunk_mean = crate::dln::batch_loss(params, &batch)
                .expect("params and dataset share an architecture");
            total += chunk_mean * (hi - lo) as f64;
            lo = hi;
        }
        total / self.n as f64
    }
}

/// Draw batch `t` of a chain: `m` indices uniform with replacement, a pure
/// function of `(dataset seed, chain seed, t)`.
pub fn sample_batch(
    ds: &DatasetSpec,
    m: usize,
    step: u64,
    chain_seed: u64,
) -> Result<Batch, DatasetError> {
    if m == 0 {
        return Err(DatasetError::EmptyBatch);
    }
    if m > ds.n {
        return Err(DatasetError::BatchTooLarge { m, n: ds.n });
    }
    let mut rng = seeds::stream("batch-indices", &[ds.seed, chain_seed, step]);
    let indices: Vec<usize> = (0..m).map(|_| rng.gen_range(0..ds.n)).collect();
    ds.batch_from_indices(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dln::DlnArchitecture;
    use crate::taskgen;

    fn small_dataset(seed: u64) -> DatasetSpec {
        let arch = DlnArchitecture::new(vec![3, 2]).unwrap();
        let params = taskgen::xavier_params(&arch, 99);
        DatasetSpec::new(50, -10.0, 10.0, 0.25, seed, params).unwrap()
    }

    #[test]
    fn rejects_bad_configs() {
        let arch = DlnArchitecture::new(vec![2, 2]).unwrap();
        let p = taskgen::xavier_params(&arch, 1);
        assert!(matches!(
            DatasetSpec::new(0, -1.0, 1.0, 0.1, 0, p.clone()),
            Err(DatasetError::Empty)
        ));
        assert!(matches!(
            DatasetSpec::new(5, 1.0, 1.0, 0.1, 0, p.clone()),
            Err(DatasetError::BadInputBounds { .. })
        ));
        assert!(matches!(
            DatasetSpec::new(5, -1.0, 1.0, -0.5, 0, p),
            Err(DatasetError::BadNoiseVariance(_))
        ));
    }

    #[test]
    fn samples_are_bit_identical_on_regeneration() {
        let ds = small_dataset(7);
        for i in [0usize, 1, 17, 49] {
            let (x1, y1) = ds.sample(i);
            let (x2, y2) = ds.sample(i);
            assert!(x1.iter().zip(x2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(y1.iter().zip(y2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn samples_stay_in_bounds_and_differ() {
        let ds = small_dataset(8);
        let (x0, _) = ds.sample(0);
        let (x1, _) = ds.sample(1);
        assert!(x0.iter().all(|v| (-10.0..10.0).contains(v)));
        assert_ne!(x0, x1);
    }

    #[test]
    fn noiseless_targets_follow_composite() {
        let arch = DlnArchitecture::new(vec![3, 2, 2]).unwrap();
        let params = taskgen::xavier_params(&arch, 5);
        let ds = DatasetSpec::new(10, -10.0, 10.0, 0.0, 3, params.clone()).unwrap();
        let (x, y) = ds.sample(4);
        let expected = composite_matrix(&params).dot(&x);
        assert!(y.iter().zip(expected.iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn batch_is_deterministic_in_seeds_and_step() {
        let ds = small_dataset(3);
        let a = sample_batch(&ds, 8, 5, 1234).unwrap();
        let b = sample_batch(&ds, 8, 5, 1234).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        let c = sample_batch(&ds, 8, 6, 1234).unwrap();
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn degenerate_dataset_only_has_index_zero() {
        let arch = DlnArchitecture::new(vec![2, 2]).unwrap();
        let params = taskgen::xavier_params(&arch, 1);
        let ds = DatasetSpec::new(1, -10.0, 10.0, 0.25, 11, params).unwrap();
        let batch = sample_batch(&ds, 1, 9, 0).unwrap();
        assert_eq!(batch.indices, vec![0]);
    }

    #[test]
    fn batch_larger_than_dataset_is_rejected() {
        let ds = small_dataset(4);
        assert_eq!(
            sample_batch(&ds, 51, 0, 0).unwrap_err(),
            DatasetError::BatchTooLarge { m: 51, n: 50 }
        );
    }

    #[test]
    fn index_histogram_is_uniform() {
        // 1e5 draws over n = 10; each bin within 3 sigma of the multinomial
        // expectation.
        let arch = DlnArchitecture::new(vec![1, 1]).unwrap();
        let params = taskgen::xavier_params(&arch, 2);
        let ds = DatasetSpec::new(10, -10.0, 10.0, 0.25, 21, params).unwrap();
        let mut counts = [0usize; 10];
        let draws = 100_000;
        let per_batch = 10;
        for t in 0..(draws / per_batch) {
            let batch = sample_batch(&ds, per_batch, t as u64, 77).unwrap();
            for &i in &batch.indices {
                counts[i] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        let mut chi_square = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "bin {i}: {c} vs {expected} +- {sigma}"
            );
            chi_square += (c as f64 - expected) * (c as f64 - expected) / expected;
        }
        // 99.9th percentile of chi-square with 9 degrees of freedom.
        assert!(chi_square < 27.88, "chi-square statistic {chi_square}");
    }
}
