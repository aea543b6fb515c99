//! Coarse flow initialization: inverse-distance-weighted propagation of the
//! sparse labeled flows to every point.

use crate::error::{Error, Result};
use crate::geometry::{knn, PointSet};

/// Per-point 3-D motion vectors.
pub type FlowField = Vec<[f64; 3]>;

/// Sparse ground-truth flow annotations on a subset of the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    indices: Vec<usize>,
    flows: Vec<[f64; 3]>,
}

impl LabelSet {
    /// `indices` must be unique, in range for a cloud of `n` points, and
    /// strictly fewer than `n` (some points must remain unlabeled).
    pub fn new(indices: Vec<usize>, flows: Vec<[f64; 3]>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Contract("label set must contain at least one label".into()));
        }
        if indices.len() != flows.len() {
            return Err(Error::Contract(format!(
                "label set has {} indices but {} flows",
                indices.len(),
                flows.len()
            )));
        }
        if indices.len() >= n {
            return Err(Error::Contract(format!(
                "labeled count {} must be strictly less than point count {n}",
                indices.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::Contract(format!("label index {i} out of range for n={n}")));
            }
            if seen[i] {
                return Err(Error::Contract(format!("duplicate label index {i}")));
            }
            seen[i] = true;
        }
        Ok(LabelSet { indices, flows })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn flows(&self) -> &[[f64; 3]] {
        &self.flows
    }

    /// Indices of `0..n` that carry no label, in ascending order.
    pub fn unlabeled_indices(&self, n: usize) -> Vec<usize> {
        let mut labeled = vec![false; n];
        for &i in &self.indices {
            labeled[i] = true;
        }
        (0..n).filter(|&i| !labeled[i]).collect()
    }

    /// Positions of the labeled points within `pts`.
    pub fn labeled_points(&self, pts: &PointSet) -> PointSet {
        PointSet::new(self.indices.iter().map(|&i| pts.point(i)).collect()).unwrap()
    }
}

/// Inverse-distance-weighted upsampling of labeled flows over the k nearest
/// labeled points. Labeled points keep their own label verbatim; a query
/// coincident with labeled points copies (the average of) their flows.
pub fn coarse_upsample(pts: &PointSet, labels: &LabelSet, k: usize) -> Result<FlowField> {
    if k == 0 || k > labels.len() {
        return Err(Error::Query(format!(
            "coarse_upsample: k={k} but only {} labeled points",
            labels.len()
        )));
    }
    let n = pts.len();
    let labeled_pts = labels.labeled_points(pts);
    let mut out: FlowField = vec![[0.0; 3]; n];
    let mut is_labeled = vec![false; n];
    for (&i, &f) in labels.indices().iter().zip(labels.flows()) {
        out[i] = f;
        is_labeled[i] = true;
    }

    let unlabeled: Vec<usize> = (0..n).filter(|&i| !is_labeled[i]).collect();
    if unlabeled.is_empty() {
        return Ok(out);
    }
    let queries = PointSet::new(unlabeled.iter().map(|&i| pts.point(i)).collect()).unwrap();
    let nn = knn(&queries, &labeled_pts, k, false)?;

    for (qi, &pi) in unlabeled.iter().enumerate() {
        let neighbors = &nn.lists[qi];
        let coincident: Vec<_> = neighbors.iter().filter(|nb| nb.distance == 0.0).collect();
        let flow = if !coincident.is_empty() {
            let mut f = [0.0; 3];
            for nb in &coincident {
                for c in 0..3 {
                    f[c] += labels.flows()[nb.index][c];
                }
            }
            for c in &mut f {
                *c /= coincident.len() as f64;
            }
            f
        } else {
            let total: f64 = neighbors.iter().map(|nb| 1.0 / nb.distance).sum();
            let mut f = [0.0; 3];
            for nb in neighbors {
                let w = (1.0 / nb.distance) / total;
                for c in 0..3 {
                    f[c] += w * labels.flows()[nb.index][c];
                }
            }
            f
        };
        out[pi] = flow;
    }
    Ok(out)
}
