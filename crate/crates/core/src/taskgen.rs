//! Random benchmark problem generation: architecture sampling per model
//! class, low-rank true parameters, numerical rank, and the assembled task.

use crate::dataset::{DatasetError, DatasetSpec};
use crate::dln::{composite_matrix, DlnArchitecture, DlnError, DlnParams};
use crate::llc::{analytic_llc, LlcValue, SigmaError};
use crate::seeds;
use ndarray::ArrayViewMut2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error(transparent)]
    Llc(#[from] SigmaError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dln(#[from] DlnError),
    #[error("task document is inconsistent: {0}")]
    CorruptDoc(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("parameters contain non-finite entries")]
    NonFinite,
}

/// An architecture family: bounds on the layer count and on every layer size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelClass {
    pub name: String,
    pub m_min: usize,
    pub m_max: usize,
    pub h_min: usize,
    pub h_max: usize,
    /// Whether the class comes from the published benchmark tables; the
    /// desk-scale "1K" class is harness-defined.
    pub paper: bool,
}

impl ModelClass {
    fn new(name: &str, m_min: usize, m_max: usize, h_min: usize, h_max: usize, paper: bool) -> Self {
        assert!(1 <= m_min && m_min <= m_max);
        assert!(1 <= h_min && h_min <= h_max);
        Self {
            name: name.to_string(),
            m_min,
            m_max,
            h_min,
            h_max,
            paper,
        }
    }
}

/// The four published classes plus the desk-scale "1K" class.
pub fn builtin_classes() -> Vec<ModelClass> {
    vec![
        ModelClass::new("1K", 2, 4, 4, 12, false),
        ModelClass::new("100K", 2, 10, 50, 500, true),
        ModelClass::new("1M", 2, 20, 100, 1000, true),
        ModelClass::new("10M", 2, 20, 500, 2000, true),
        ModelClass::new("100M", 2, 40, 500, 3000, true),
    ]
}

pub fn builtin_class(name: &str) -> Option<ModelClass> {
    builtin_classes().into_iter().find(|c| c.name == name)
}

/// Draw `M` uniformly from the class layer range, then every size
/// `H_0 ..= H_M` (input and output included) uniformly from the size range.
pub fn sample_architecture(class: &ModelClass, seed: u64) -> DlnArchitecture {
    let mut rng = seeds::stream("architecture", &[seed]);
    let m = rng.gen_range(class.m_min..=class.m_max);
    let sizes: Vec<usize> = (0..=m).map(|_| rng.gen_range(class.h_min..=class.h_max)).collect();
    DlnArchitecture::new(sizes).expect("class bounds guarantee a valid architecture")
}

/// Xavier-normal parameters: layer `l` entries are iid
/// `Normal(0, 2 / (H_{l+1} + H_l))`, drawn layer by layer, row-major.
pub fn xavier_params(arch: &DlnArchitecture, seed: u64) -> DlnParams {
    let mut rng = seeds::stream("xavier", &[seed]);
    let mut params = DlnParams::zeros(arch.clone());
    for l in 0..arch.layer_count() {
        let (rows, cols) = arch.layer_shape(l);
        let normal = Normal::new(0.0, (2.0 / (rows + cols) as f64).sqrt()).unwrap();
        for v in params.layer_mut(l).iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    params
}

/// Zero trailing rows (or columns) of a layer so its rank is at most
/// `target`.
pub fn reduce_layer_rank(mut layer: ArrayViewMut2<'_, f64>, target: usize, zero_rows: bool) {
    if zero_rows {
        for i in target..layer.nrows() {
            layer.row_mut(i).fill(0.0);
        }
    } else {
        for j in target..layer.ncols() {
            layer.column_mut(j).fill(0.0);
        }
    }
}

/// Xavier parameters with random per-layer rank reduction: each layer is
/// independently reduced with probability one half, to a rank drawn uniformly
/// from `0..=min(rows, cols)`, by zeroing trailing rows or columns (fair coin).
pub fn sample_true_params(arch: &DlnArchitecture, seed: u64) -> DlnParams {
    let mut params = xavier_params(arch, seed);
    let mut rng = seeds::stream("rank-reduction", &[seed]);
    for l in 0..arch.layer_count() {
        if !rng.gen_bool(0.5) {
            continue;
        }
        let (rows, cols) = arch.layer_shape(l);
        let target = rng.gen_range(0..=rows.min(cols));
        let zero_rows = rng.gen_bool(0.5);
        reduce_layer_rank(params.layer_mut(l), target, zero_rows);
    }
    params
}

/// Numerical rank of the composite matrix: singular values above
/// `max(rows, cols) * eps * sigma_max`.
pub fn true_rank(params: &DlnParams) -> Result<usize, RankError> {
    if !params.all_finite() {
        return Err(RankError::NonFinite);
    }
    let w = composite_matrix(params);
    let (rows, cols) = w.dim();
    let mat = nalgebra::DMatrix::from_row_iterator(rows, cols, w.iter().copied());
    let svd = mat
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or(RankError::SvdFailed)?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    Ok(svd.singular_values.iter().filter(|&&s| s > tol).count())
}

/// How a task's true parameters are reconstructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsSource {
    /// Regenerate via [`sample_true_params`] with this seed.
    Seed(u64),
    /// Explicit flat parameter vector (hand-built tasks).
    Explicit(Vec<f64>),
}

/// Dataset shape shared by every task of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataParams {
    pub n: usize,
    pub noise_variance: f64,
    pub input_low: f64,
    pub input_high: f64,
}

/// A fully determined learning problem with its exact ground truth.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub id: String,
    pub class: String,
    pub params_source: ParamsSource,
    pub true_rank: usize,
    pub true_llc: LlcValue,
    pub dataset: DatasetSpec,
}

impl TaskSpec {
    /// Assemble a task from explicit parameters, computing rank and the
    /// exact coefficient. Fails when the coefficient is undefined for the
    /// instance; callers skip or regenerate.
    pub fn from_params(
        id: impl Into<String>,
        class: impl Into<String>,
        params_source: ParamsSource,
        true_params: DlnParams,
        data: &DataParams,
        data_seed: u64,
    ) -> Result<Self, TaskGenError> {
        let rank = true_rank(&true_params)?;
        let llc = analytic_llc(true_params.arch(), rank)?;
        let dataset = DatasetSpec::new(
            data.n,
            data.input_low,
            data.input_high,
            data.noise_variance,
            data_seed,
            true_params,
        )?;
        Ok(Self {
            id: id.into(),
            class: class.into(),
            params_source,
            true_rank: rank,
            true_llc: llc,
            dataset,
        })
    }

    pub fn architecture(&self) -> &DlnArchitecture {
        self.dataset.true_params().arch()
    }

    pub fn param_dim(&self) -> usize {
        self.architecture().param_dim()
    }

    pub fn true_params(&self) -> &DlnParams {
        self.dataset.true_params()
    }

    pub fn to_doc(&self) -> TaskDoc {
        TaskDoc {
            id: self.id.clone(),
            class: self.class.clone(),
            sizes: self.architecture().sizes().to_vec(),
            params: self.params_source.clone(),
            true_rank: self.true_rank,
            true_llc: self.true_llc.clone(),
            n: self.dataset.n,
            input_low: self.dataset.input_low,
            input_high: self.dataset.input_high,
            noise_variance: self.dataset.noise_variance,
            data_seed: self.dataset.seed,
        }
    }

    pub fn from_doc(doc: TaskDoc) -> Result<Self, TaskGenError> {
        let arch = DlnArchitecture::new(doc.sizes)?;
        let params = match &doc.params {
            ParamsSource::Seed(seed) => sample_true_params(&arch, *seed),
            ParamsSource::Explicit(flat) => DlnParams::from_flat(arch, flat.clone())?,
        };
        let data = DataParams {
            n: doc.n,
            noise_variance: doc.noise_variance,
            input_low: doc.input_low,
            input_high: doc.input_high,
        };
        let task = Self::from_params(doc.id, doc.class, doc.params, params, &data, doc.data_seed)?;
        if task.true_rank != doc.true_rank {
            return Err(TaskGenError::CorruptDoc(format!(
                "recomputed rank {} != stored rank {}",
                task.true_rank, doc.true_rank
            )));
        }
        if task.true_llc != doc.true_llc {
            return Err(TaskGenError::CorruptDoc(format!(
                "recomputed coefficient {} != stored {}",
                task.true_llc, doc.true_llc
            )));
        }
        Ok(task)
    }
}

/// Serialized form of a task; parameters ship as a seed when generated or as
/// an explicit vector when hand-built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDoc {
    pub id: String,
    pub class: String,
    pub sizes: Vec<usize>,
    pub params: ParamsSource,
    pub true_rank: usize,
    pub true_llc: LlcValue,
    pub n: usize,
    pub input_low: f64,
    pub input_high: f64,
    pub noise_variance: f64,
    pub data_seed: u64,
}

/// Generate one random task of a class. `arch_seed` and `params_seed` drive
/// the architecture and parameter draws; `data_seed` addresses the dataset.
pub fn generate_task(
    class: &ModelClass,
    id: impl Into<String>,
    arch_seed: u64,
    params_seed: u64,
    data_seed: u64,
    data: &DataParams,
) -> Result<TaskSpec, TaskGenError> {
    let arch = sample_architecture(class, arch_seed);
    let params = sample_true_params(&arch, params_seed);
    TaskSpec::from_params(
        id,
        class.name.clone(),
        ParamsSource::Seed(params_seed),
        params,
        data,
        data_seed,
    )
}
