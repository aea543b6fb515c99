//! Training losses: bidirectional squared-distance chamfer, label-weighted
//! neighborhood flow smoothness, and their weighted combination.

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::flowinit::LabelSet;
use crate::geometry::{nearest_indices, radius_neighbors, PointSet, SearchMode};

/// Loss weighting: alpha/beta combine the two losses (0.75 / 0.25 defaults),
/// beta1/beta2 weight unlabeled- and labeled-centered smooth neighborhoods,
/// r_smooth is the neighborhood radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub r_smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.75, beta: 0.25, beta1: 1.0, beta2: 2.0, r_smooth: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.alpha, self.beta, self.beta1, self.beta2, self.r_smooth];
        if vals.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Contract("loss weights must be nonnegative and finite".into()));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::Contract("alpha + beta must be positive".into()));
        }
        Ok(())
    }
}

fn pointset_from_var(g: &Graph, v: Var) -> PointSet {
    let t = g.value(v);
    assert_eq!(t.cols(), 3, "expected an n x 3 matrix of points");
    PointSet::new((0..t.rows()).map(|r| [t.get(r, 0), t.get(r, 1), t.get(r, 2)]).collect())
        .expect("finite points")
}

pub fn pointset_leaf(g: &Graph, pts: &PointSet) -> Var {
    g.leaf(Tensor::from_rows(
        &pts.points().iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
    ))
}

/// Bidirectional sum of squared nearest-neighbor distances between the
/// warped cloud (a tape variable, n x 3) and the target cloud. The
/// nearest-neighbor assignment is recomputed from the current values and
/// treated as fixed during backward. `mean_normalized` divides each
/// directional term by its cloud size for cross-size comparability.
pub fn chamfer_loss(g: &Graph, p_warped: Var, q: &PointSet, mean_normalized: bool) -> Result<Var> {
    let (n, cols) = g.shape(p_warped);
    if cols != 3 {
        return Err(Error::Dimension(format!("chamfer_loss: warped cloud is {n}x{cols}, expected n x 3")));
    }
    if n == 0 || q.is_empty() {
        return Err(Error::Contract("chamfer_loss: point sets must be non-empty".into()));
    }
    let pw = pointset_from_var(g, p_warped);
    let q_leaf = pointset_leaf(g, q);

    // forward direction: each warped point to its nearest target point
    let fw_idx = nearest_indices(&pw, q);
    let d1 = g.sub(p_warped, g.gather_rows(q_leaf, &fw_idx));
    let t1 = g.sum(g.mul(d1, d1));

    // backward direction: each target point to its nearest warped point
    let bw_idx = nearest_indices(q, &pw);
    let d2 = g.sub(q_leaf, g.gather_rows(p_warped, &bw_idx));
    let t2 = g.sum(g.mul(d2, d2));

    let loss = if mean_normalized {
        g.add(g.scale(t1, 1.0 / n as f64), g.scale(t2, 1.0 / q.len() as f64))
    } else {
        g.add(t1, t2)
    };
    Ok(loss)
}

/// Index pairs of the smooth-loss neighborhoods around a set of centers:
/// (center, neighbor) pairs over all points within `r`, self excluded, plus
/// the per-pair 1/|N_center| averaging factors. Centers with empty
/// neighborhoods contribute nothing.
fn neighborhood_pairs(
    pts: &PointSet,
    centers: &[usize],
    r: f64,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let center_pts = PointSet::new(centers.iter().map(|&i| pts.point(i)).collect()).unwrap();
    let nn = radius_neighbors(&center_pts, pts, r, usize::MAX, SearchMode::Grid);
    let mut ci = Vec::new();
    let mut nj = Vec::new();
    let mut factors = Vec::new();
    for (local, list) in nn.lists.iter().enumerate() {
        let center = centers[local];
        let members: Vec<usize> =
            list.iter().map(|nb| nb.index).filter(|&j| j != center).collect();
        if members.is_empty() {
            continue;
        }
        let inv = 1.0 / members.len() as f64;
        for j in members {
            ci.push(center);
            nj.push(j);
            factors.push(inv);
        }
    }
    (ci, nj, factors)
}

/// Neighborhood flow-consistency penalty with separate weights for
/// unlabeled-centered (beta1) and labeled-centered (beta2) neighborhoods.
/// Per center: the mean unsquared Euclidean norm of flow differences to its
/// strict-radius neighbors.
pub fn weighted_smooth_loss(
    g: &Graph,
    pts: &PointSet,
    flow: Var,
    labels: &LabelSet,
    w: &LossWeights,
) -> Result<Var> {
    let (n, cols) = g.shape(flow);
    if n != pts.len() || cols != 3 {
        return Err(Error::Dimension(format!(
            "weighted_smooth_loss: flow is {n}x{cols} for {} points",
            pts.len()
        )));
    }
    let unlabeled = labels.unlabeled_indices(pts.len());
    let mut loss = g.scalar(0.0);
    for (centers, beta) in [(&unlabeled, w.beta1), (&labels.indices().to_vec(), w.beta2)] {
        if beta == 0.0 || centers.is_empty() {
            continue;
        }
        let (ci, nj, factors) = neighborhood_pairs(pts, centers, w.r_smooth);
        if ci.is_empty() {
            continue;
        }
        let diff = g.sub(g.gather_rows(flow, &ci), g.gather_rows(flow, &nj));
        let norms = g.row_norm(diff);
        let term = g.sum(g.row_scale(norms, &factors));
        loss = g.add(loss, g.scale(term, beta));
    }
    Ok(loss)
}

/// Combined objective: alpha * chamfer(P + F, Q) + beta * smooth(P, F).
pub fn total_loss(
    g: &Graph,
    pts: &PointSet,
    flow: Var,
    q: &PointSet,
    labels: &LabelSet,
    w: &LossWeights,
    mean_normalized_chamfer: bool,
) -> Result<Var> {
    w.validate()?;
    let p_leaf = pointset_leaf(g, pts);
    let warped = g.add(p_leaf, flow);
    let chamfer = chamfer_loss(g, warped, q, mean_normalized_chamfer)?;
    let smooth = weighted_smooth_loss(g, pts, flow, labels, w)?;
    Ok(g.add(g.scale(chamfer, w.alpha), g.scale(smooth, w.beta)))
}
