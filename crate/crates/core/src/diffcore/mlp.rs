//! Shared multilayer perceptron applied row-wise to a batch matrix.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Default hidden nonlinearity: leaky rectifier with this slope.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Layer widths of a fully-connected stack; hidden layers use the leaky
/// rectifier, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        assert!(widths.iter().all(|&w| w >= 1), "all widths must be >= 1");
        MlpSpec { widths }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn layer_dims(&self, layer: usize) -> (usize, usize) {
        (self.widths[layer], self.widths[layer + 1])
    }

    pub fn weight_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.l{layer}.w")
    }

    pub fn bias_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.l{layer}.b")
    }

    /// Register this MLP's weights and biases under `prefix`. Weights get
    /// seeded symmetric-uniform init, biases start at zero.
    pub fn register(&self, store: &mut ParamStore, prefix: &str, seed: u64) {
        for layer in 0..self.layers() {
            let (fan_in, fan_out) = self.layer_dims(layer);
            store.insert_xavier(&Self::weight_name(prefix, layer), fan_in, fan_out, seed);
            store.insert(
                &Self::bias_name(prefix, layer),
                super::tensor::Tensor::zeros(1, fan_out),
            );
        }
    }
}

/// Apply the MLP to a batch-by-input matrix, recording onto `g`.
pub fn forward_mlp(
    g: &Graph,
    spec: &MlpSpec,
    store: &ParamStore,
    prefix: &str,
    input: Var,
) -> Result<Var> {
    let (_, in_width) = g.shape(input);
    if in_width != spec.input_width() {
        return Err(Error::Dimension(format!(
            "{prefix}: input width {in_width} does not match layer 0 width {}",
            spec.input_width()
        )));
    }
    let mut x = input;
    for layer in 0..spec.layers() {
        let wname = MlpSpec::weight_name(prefix, layer);
        let bname = MlpSpec::bias_name(prefix, layer);
        let w = g
            .param(store, &wname)
            .map_err(|_| Error::Dimension(format!("missing parameters for layer {wname}")))?;
        let b = g
            .param(store, &bname)
            .map_err(|_| Error::Dimension(format!("missing parameters for layer {bname}")))?;
        let (wr, wc) = g.shape(w);
        let (expect_in, expect_out) = spec.layer_dims(layer);
        if (wr, wc) != (expect_in, expect_out) {
            return Err(Error::Dimension(format!(
                "layer {wname}: stored shape {wr}x{wc}, spec wants {expect_in}x{expect_out}"
            )));
        }
        x = g.add_row(g.matmul(x, w), b);
        if layer + 1 < spec.layers() {
            x = g.leaky_relu(x, LEAKY_SLOPE);
        }
    }
    Ok(x)
}
