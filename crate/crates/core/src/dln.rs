//! Deep linear network model: `f(x; w) = W_M ... W_1 x`.
//!
//! Parameters are stored as one flat `Vec<f64>` (layer-major, row-major within
//! a layer) so samplers can treat them as a plain coordinate vector while loss
//! and gradient code views each layer as a matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DlnError {
    #[error("architecture needs at least two layer sizes, got {0}")]
    TooFewSizes(usize),
    #[error("layer sizes must be positive")]
    ZeroLayerSize,
    #[error("parameter vector has length {got}, architecture requires {want}")]
    ParamLength { got: usize, want: usize },
    #[error("layer {layer} has shape {got:?}, architecture requires {want:?}")]
    LayerShape {
        layer: usize,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("wrong number of layers: got {got}, architecture has {want}")]
    LayerCount { got: usize, want: usize },
    #[error("input vector has length {got}, network expects {want}")]
    InputLength { got: usize, want: usize },
    #[error("batch has {inputs} input and {targets} target rows")]
    BatchRows { inputs: usize, targets: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch columns {got:?} do not match network dims ({in_dim}, {out_dim})")]
    BatchColumns {
        got: (usize, usize),
        in_dim: usize,
        out_dim: usize,
    },
}

/// Layer structure of a deep linear network: sizes `H_0 ..= H_M`.
///
/// Weight matrices are indexed `0..M`; weight `l` maps layer `l` to layer
/// `l + 1` and has shape `H_{l+1} x H_l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DlnArchitecture {
    sizes: Vec<usize>,
}

impl DlnArchitecture {
    pub fn new(sizes: Vec<usize>) -> Result<Self, DlnError> {
        if sizes.len() < 2 {
            return Err(DlnError::TooFewSizes(sizes.len()));
        }
        if sizes.iter().any(|&h| h == 0) {
            return Err(DlnError::ZeroLayerSize);
        }
        Ok(Self { sizes })
    }

    /// Number of weight matrices, `M`.
    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Layer sizes `H_0 ..= H_M`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Smallest layer size, an upper bound on the composite rank.
    pub fn min_size(&self) -> usize {
        *self.sizes.iter().min().unwrap()
    }

    /// Shape `(rows, cols)` of weight `l`, i.e. `(H_{l+1}, H_l)`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.sizes[l + 1], self.sizes[l])
    }

    /// Offset of weight `l` in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.sizes[k + 1] * self.sizes[k]).sum()
    }

    /// Total parameter count `d`.
    pub fn param_dim(&self) -> usize {
        self.layer_offset(self.layer_count())
    }
}

/// A parameter point: the weight matrices of one network, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct DlnParams {
    arch: DlnArchitecture,
    data: Vec<f64>,
}

impl DlnParams {
    pub fn zeros(arch: DlnArchitecture) -> Self {
        let d = arch.param_dim();
        Self {
            arch,
            data: vec![0.0; d],
        }
    }

    pub fn from_flat(arch: DlnArchitecture, data: Vec<f64>) -> Result<Self, DlnError> {
        let want = arch.param_dim();
        if data.len() != want {
            return Err(DlnError::ParamLength {
                got: data.len(),
                want,
            });
        }
        Ok(Self { arch, data })
    }

    pub fn from_layers(arch: DlnArchitecture, layers: &[Array2<f64>]) -> Result<Self, DlnError> {
        if layers.len() != arch.layer_count() {
            return Err(DlnError::LayerCount {
                got: layers.len(),
                want: arch.layer_count(),
            });
        }
        let mut data = Vec::with_capacity(arch.param_dim());
        for (l, w) in layers.iter().enumerate() {
            let want = arch.layer_shape(l);
            if w.dim() != want {
                return Err(DlnError::LayerShape {
                    layer: l,
                    got: w.dim(),
                    want,
                });
            }
            data.extend(w.iter().copied());
        }
        Ok(Self { arch, data })
    }

    pub fn arch(&self) -> &DlnArchitecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// View of weight `l` as an `H_{l+1} x H_l` matrix.
    pub fn layer(&self, l: usize) -> ArrayView2<'_, f64> {
        let (rows, cols) = self.arch.layer_shape(l);
        let off = self.arch.layer_offset(l);
        ArrayView2::from_shape((rows, cols), &self.data[off..off + rows * cols]).unwrap()
    }

    pub fn layer_mut(&mut self, l: usize) -> ArrayViewMut2<'_, f64> {
        let (rows, cols) = self.arch.layer_shape(l);
        let off = self.arch.layer_offset(l);
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[off..off + rows * cols]).unwrap()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A minibatch: `m` input rows, `m` target rows and the dataset indices they
/// were drawn from.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn new(
        inputs: Array2<f64>,
        targets: Array2<f64>,
        indices: Vec<usize>,
    ) -> Result<Self, DlnError> {
        if inputs.nrows() == 0 {
            return Err(DlnError::EmptyBatch);
        }
        if inputs.nrows() != targets.nrows() || inputs.nrows() != indices.len() {
            return Err(DlnError::BatchRows {
                inputs: inputs.nrows(),
                targets: targets.nrows(),
            });
        }
        Ok(Self {
            inputs,
            targets,
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    fn check_dims(&self, arch: &DlnArchitecture) -> Result<(), DlnError> {
        if self.inputs.ncols() != arch.input_dim() || self.targets.ncols() != arch.output_dim() {
            return Err(DlnError::BatchColumns {
                got: (self.inputs.ncols(), self.targets.ncols()),
                in_dim: arch.input_dim(),
                out_dim: arch.output_dim(),
            });
        }
        Ok(())
    }
}

/// Ordered product `W = W_M ... W_1`, an `H_M x H_0` matrix.
pub fn composite_matrix(params: &DlnParams) -> Array2<f64> {
    let mut acc = params.layer(0).to_owned();
    for l in 1..params.arch.layer_count() {
        acc = params.layer(l).dot(&acc);
    }
    acc
}

/// Apply the network to a single input vector.
pub fn forward(params: &DlnParams, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, DlnError> {
    if x.len() != params.arch.input_dim() {
        return Err(DlnError::InputLength {
            got: x.len(),
            want: params.arch.input_dim(),
        });
    }
    let mut y = params.layer(0).dot(&x);
    for l in 1..params.arch.layer_count() {
        y = params.layer(l).dot(&y);
    }
    Ok(y)
}

/// Apply the network to a batch of row vectors. Rows of the result are the
/// network outputs for the corresponding input rows.
fn forward_batch(params: &DlnParams, inputs: &Array2<f64>) -> Array2<f64> {
    let mut act = inputs.dot(&params.layer(0).t());
    for l in 1..params.arch.layer_count() {
        act = act.dot(&params.layer(l).t());
    }
    act
}

/// Mean squared residual over a batch: `(1/m) sum_j ||f(X_j; w) - Y_j||^2`.
///
/// Non-finite parameters or data propagate into a non-finite loss; callers
/// treat that as divergence, not as an error.
pub fn batch_loss(params: &DlnParams, batch: &Batch) -> Result<f64, DlnError> {
    batch.check_dims(&params.arch)?;
    let residual = forward_batch(params, &batch.inputs) - &batch.targets;
    Ok(residual.iter().map(|r| r * r).sum::<f64>() / batch.len() as f64)
}

/// Gradient of [`batch_loss`] with respect to every weight matrix.
pub fn batch_loss_gradient(params: &DlnParams, batch: &Batch) -> Result<DlnParams, DlnError> {
    batch_loss_and_gradient(params, batch).map(|(_, g)| g)
}

/// Loss and gradient in one pass; the chain runner records the loss of the
/// same batch it steps on, so the activations are shared.
pub fn batch_loss_and_gradient(
    params: &DlnParams,
    batch: &Batch,
) -> Result<(f64, DlnParams), DlnError> {
    batch.check_dims(&params.arch)?;
    let layer_count = params.arch.layer_count();
    let m = batch.len() as f64;

    // Activations A_0 = X, A_{l+1} = A_l W_l^T.
    let mut activations = Vec::with_capacity(layer_count + 1);
    activations.push(batch.inputs.clone());
    for l in 0..layer_count {
        let next = activations[l].dot(&params.layer(l).t());
        activations.push(next);
    }

    let residual = &activations[layer_count] - &batch.targets;
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / m;

    // Backpropagate G_M = (2/m) R through the linear layers:
    // dL/dW_l = G_{l+1}^T A_l, G_l = G_{l+1} W_l.
    let mut grad = DlnParams::zeros(params.arch.clone());
    let mut upstream = residual * (2.0 / m);
    for l in (0..layer_count).rev() {
        let layer_grad = upstream.t().dot(&activations[l]);
        grad.layer_mut(l).assign(&layer_grad);
        if l > 0 {
            upstream = upstream.dot(&params.layer(l));
        }
    }
    Ok((loss, grad))
}
