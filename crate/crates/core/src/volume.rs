//! Monte-Carlo volume-scaling oracle.
//!
//! The population loss of a deep linear network under box-uniform inputs has
//! a closed form in the input second moments, so sublevel-set volumes around
//! the true parameter can be estimated by rejection sampling with no dataset
//! noise. The log-log slope of volume against the level is an independent
//! check on the analytic coefficient for tiny instances.

use crate::dln::{composite_matrix, DlnParams};
use crate::seeds;
use crate::taskgen::TaskSpec;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Rejection sampling needs hit counts that scale like `eps^(d/2)`; past a
/// dozen dimensions the oracle is hopeless.
pub const MAX_VOLUME_DIM: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("parameter dimension {0} exceeds the Monte-Carlo limit {MAX_VOLUME_DIM}")]
    DimensionTooLarge(usize),
    #[error("level grid must have at least two positive, strictly decreasing entries")]
    BadLevelGrid,
    #[error("level grid spans {0:.2} decades; at least two are required")]
    GridTooNarrow(f64),
    #[error("no hits at level {eps:.3e}; widen the levels or raise samples_per_eps")]
    InsufficientSamples { eps: f64 },
    #[error("box radius must be positive and finite")]
    BadBoxRadius,
    #[error("samples_per_eps must be positive")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeConfig {
    /// Levels `eps`, strictly decreasing, spanning at least two decades.
    pub eps_grid: Vec<f64>,
    pub samples_per_eps: usize,
    /// Half-width of the sampling box around the true parameter (sup norm).
    pub box_radius: f64,
    pub seed: u64,
}

impl VolumeConfig {
    /// Log-spaced levels from `hi` down to `lo`.
    pub fn log_spaced(hi: f64, lo: f64, points: usize, samples_per_eps: usize, box_radius: f64, seed: u64) -> Self {
        assert!(points >= 2 && hi > lo && lo > 0.0);
        let step = (hi / lo).ln() / (points - 1) as f64;
        let eps_grid = (0..points).map(|k| hi * (-(k as f64) * step).exp()).collect();
        Self {
            eps_grid,
            samples_per_eps,
            box_radius,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumePoint {
    pub eps: f64,
    pub hits: usize,
    /// Hit fraction times the box volume `(2 R)^d`.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    /// Least-squares slope of `ln volume` against `ln eps`.
    pub slope: f64,
    pub points: Vec<VolumePoint>,
}

/// Exact population loss evaluator for one task.
///
/// For iid inputs with per-coordinate mean `mu` and raw second moment `s2`,
/// `E || (W - W0) x ||^2 = (s2 - mu^2) ||D||_F^2 + mu^2 || D 1 ||^2` with
/// `D = W - W0`. Composite products run on scratch buffers so the rejection
/// loop does not allocate.
pub struct PopulationLoss {
    sizes: Vec<usize>,
    true_composite: Vec<f64>, // row-major H_M x H_0
    centered_second_moment: f64,
    mean: f64,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl PopulationLoss {
    pub fn new(task: &TaskSpec) -> Self {
        let ds = &task.dataset;
        let arch = task.architecture();
        let mean = 0.5 * (ds.input_low + ds.input_high);
        let width = ds.input_high - ds.input_low;
        let variance = width * width / 12.0;
        let max_size = arch.sizes().iter().copied().max().unwrap();
        PopulationLoss {
            sizes: arch.sizes().to_vec(),
            true_composite: ds.true_composite().iter().copied().collect(),
            centered_second_moment: variance,
            mean,
            scratch_a: vec![0.0; max_size * max_size],
            scratch_b: vec![0.0; max_size * max_size],
        }
    }

    /// `L(w)`; zero exactly at parameters with the true composite matrix.
    pub fn evaluate(&mut self, flat_params: &[f64]) -> f64 {
        let layer_count = self.sizes.len() - 1;
        // Composite = W_{M-1} ... W_0 as flat row-major products.
        let mut rows = self.sizes[1];
        let cols = self.sizes[0];
        let mut offset = 0;
        self.scratch_a[..rows * cols].copy_from_slice(&flat_params[..rows * cols]);
        offset += rows * cols;
        for l in 1..layer_count {
            let next_rows = self.sizes[l + 1];
            let layer = &flat_params[offset..offset + next_rows * rows];
            offset += next_rows * rows;
            // scratch_b = layer (next_rows x rows) * scratch_a (rows x cols)
            for i in 0..next_rows {
                for j in 0..cols {
                    let mut acc = 0.0;
                    for k in 0..rows {
                        acc += layer[i * rows + k] * self.scratch_a[k * cols + j];
                    }
                    self.scratch_b[i * cols + j] = acc;
                }
            }
            std::mem::swap(&mut self.scratch_a, &mut self.scratch_b);
            rows = next_rows;
        }

        let mut frobenius = 0.0;
        let mut mean_image = 0.0;
        for i in 0..rows {
            let mut row_sum = 0.0;
            for j in 0..cols {
                let diff = self.scratch_a[i * cols + j] - self.true_composite[i * cols + j];
                frobenius += diff * diff;
                row_sum += diff;
            }
            mean_image += row_sum * row_sum;
        }
        self.centered_second_moment * frobenius + self.mean * self.mean * mean_image
    }
}

/// Convenience evaluation through the ndarray path; the scratch evaluator is
/// checked against this in tests.
pub fn population_loss(task: &TaskSpec, params: &DlnParams) -> f64 {
    let ds = &task.dataset;
    let mean = 0.5 * (ds.input_low + ds.input_high);
    let width = ds.input_high - ds.input_low;
    let variance = width * width / 12.0;
    let diff = composite_matrix(params) - ds.true_composite();
    let frobenius: f64 = diff.iter().map(|v| v * v).sum();
    let mean_image: f64 = diff
        .rows()
        .into_iter()
        .map(|row| {
            let s: f64 = row.sum();
            s * s
        })
        .sum();
    variance * frobenius + mean * mean * mean_image
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}

/// Estimate the volume-scaling exponent of `{ w : L(w) <= eps }` around the
/// true parameter. Workers own one RNG stream per level, so the result does
/// not depend on scheduling.
pub fn mc_volume_exponent(task: &TaskSpec, cfg: &VolumeConfig) -> Result<VolumeEstimate, VolumeError> {
    let dim = task.param_dim();
    if dim > MAX_VOLUME_DIM {
        return Err(VolumeError::DimensionTooLarge(dim));
    }
    if cfg.samples_per_eps == 0 {
        return Err(VolumeError::NoSamples);
    }
    if !(cfg.box_radius > 0.0) || !cfg.box_radius.is_finite() {
        return Err(VolumeError::BadBoxRadius);
    }
    if cfg.eps_grid.len() < 2
        || cfg.eps_grid.iter().any(|&e| !(e > 0.0))
        || cfg.eps_grid.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(VolumeError::BadLevelGrid);
    }
    let decades = (cfg.eps_grid[0] / cfg.eps_grid[cfg.eps_grid.len() - 1]).log10();
    if decades < 2.0 - 1e-9 {
        return Err(VolumeError::GridTooNarrow(decades));
    }

    let anchor = task.true_params().as_slice().to_vec();
    let box_volume = (2.0 * cfg.box_radius).powi(dim as i32);

    let points: Vec<Result<VolumePoint, VolumeError>> = cfg
        .eps_grid
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| {
            let mut rng = seeds::stream("volume", &[cfg.seed, k as u64]);
            let mut loss = PopulationLoss::new(task);
            let mut candidate = vec![0.0; dim];
            let mut hits = 0usize;
            for _ in 0..cfg.samples_per_eps {
                for (c, a) in candidate.iter_mut().zip(anchor.iter()) {
                    *c = a + rng.gen_range(-cfg.box_radius..cfg.box_radius);
                }
                if loss.evaluate(&candidate) <= eps {
                    hits += 1;
                }
            }
            if hits == 0 {
                return Err(VolumeError::InsufficientSamples { eps });
            }
            Ok(VolumePoint {
                eps,
                hits,
                volume: hits as f64 / cfg.samples_per_eps as f64 * box_volume,
            })
        })
        .collect();
    let points: Vec<VolumePoint> = points.into_iter().collect::<Result<_, _>>()?;

    let xs: Vec<f64> = points.iter().map(|p| p.eps.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.volume.ln()).collect();
    Ok(VolumeEstimate {
        slope: least_squares_slope(&xs, &ys),
        points,
    })
}
