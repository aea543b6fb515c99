//! Learned correlation between unlabeled and labeled points: per-pair feature
//! and geometric difference descriptors scored by two MLPs, row-softmax
//! normalization, and label propagation by weighted blending.

use crate::diffcore::{forward_mlp, Graph, MlpSpec, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::flowinit::LabelSet;

/// Pairwise difference descriptors for every (unlabeled, labeled) pair, laid
/// out row-major: row = unlabeled index * n_labeled + labeled index.
#[derive(Debug, Clone)]
pub struct PairDescriptors {
    pub u: Var,
    pub g: Var,
    pub n_unlabeled: usize,
    pub n_labeled: usize,
}

/// Build descriptors on the tape from per-point features (n x d, labeled and
/// unlabeled rows selected by index) and per-point position blocks (n x 6:
/// original position || warped position).
pub fn build_descriptors(
    g: &Graph,
    features: Var,
    positions6: Var,
    unlabeled: &[usize],
    labeled: &[usize],
) -> PairDescriptors {
    let n_u = unlabeled.len();
    let n_l = labeled.len();
    let mut rows_u = Vec::with_capacity(n_u * n_l);
    let mut rows_l = Vec::with_capacity(n_u * n_l);
    for &ui in unlabeled {
        for &li in labeled {
            rows_u.push(ui);
            rows_l.push(li);
        }
    }
    let u = g.sub(g.gather_rows(features, &rows_u), g.gather_rows(features, &rows_l));
    let geo = g.sub(g.gather_rows(positions6, &rows_u), g.gather_rows(positions6, &rows_l));
    PairDescriptors { u, g: geo, n_unlabeled: n_u, n_labeled: n_l }
}

/// Raw similarity scores: MLP(u) + MLP(g), one scalar per pair, reshaped to
/// an (unlabeled x labeled) matrix.
pub fn pair_scores(
    g: &Graph,
    desc: &PairDescriptors,
    mlp_u: &MlpSpec,
    mlp_g: &MlpSpec,
    store: &ParamStore,
    prefix_u: &str,
    prefix_g: &str,
) -> Result<Var> {
    if mlp_u.output_width() != 1 || mlp_g.output_width() != 1 {
        return Err(Error::Contract("score MLPs must have scalar output".into()));
    }
    let su = forward_mlp(g, mlp_u, store, prefix_u, desc.u)?;
    let sg = forward_mlp(g, mlp_g, store, prefix_g, desc.g)?;
    let s = g.add(su, sg);
    Ok(g.reshape(s, desc.n_unlabeled, desc.n_labeled))
}

/// Row-wise softmax over labeled points (max-subtraction stabilized).
pub fn normalize_rows(g: &Graph, scores: Var) -> Result<Var> {
    let (_, cols) = g.shape(scores);
    if cols == 0 {
        return Err(Error::Contract("normalize_rows needs at least one labeled column".into()));
    }
    Ok(g.softmax_rows(scores))
}

/// Pseudo-labels for the unlabeled points: weight-blended labeled flows.
pub fn propagate_labels(g: &Graph, corr: Var, labels: &LabelSet) -> Var {
    let (_, cols) = g.shape(corr);
    assert_eq!(cols, labels.len(), "correlation columns must equal labeled count");
    let flows = Tensor::from_rows(
        &labels.flows().iter().map(|f| f.to_vec()).collect::<Vec<_>>(),
    );
    g.matmul(corr, g.leaf(flows))
}

/// Row-stochastic weights between unlabeled (rows) and labeled (columns)
/// points, extracted from the tape for inspection.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    weights: Tensor,
}

impl CorrelationMatrix {
    pub fn from_tensor(weights: Tensor) -> Result<Self> {
        for r in 0..weights.rows() {
            let row = weights.row(r);
            if row.iter().any(|&w| w < 0.0) {
                return Err(Error::Contract(format!("negative correlation weight in row {r}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("row {r} sums to {sum}, not 1")));
            }
        }
        Ok(CorrelationMatrix { weights })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}
