//! Flow-graph feature encoder: radius-graph edge features within frame one
//! and across the coarse-flow warp into frame two, pushed through a stack of
//! setconv stages (shared per-edge transform, max-pool, FPS downsample with
//! nearest-point re-propagation).

use crate::diffcore::{Graph, MlpSpec, ParamStore, Tensor, Var, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::flowinit::FlowField;
use crate::geometry::{
    farthest_point_sample, lex_min_index, nearest_indices, radius_neighbors, PointSet, SearchMode,
};

/// One edge of the point graph. `feature` is the concatenation
/// delta-position(3) || feature_i || feature_j.
#[derive(Debug, Clone)]
pub struct Edge {
    pub neighbor: usize,
    pub delta: [f64; 3],
    pub distance: f64,
    pub feature: Vec<f64>,
}

/// Radius-graph edges, per query point, plus the query positions later
/// stages and FPS need.
#[derive(Debug, Clone)]
pub struct EdgeSet {
    pub query_positions: PointSet,
    pub edges: Vec<Vec<Edge>>,
    pub feature_width: usize,
    pub truncated: bool,
}

impl EdgeSet {
    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetconvStage {
    pub width: usize,
    pub radius: f64,
    pub ratio: f64,
}

/// Stage layout of the encoder stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SetconvSpec {
    pub stages: Vec<SetconvStage>,
}

impl SetconvSpec {
    pub fn new(stages: Vec<SetconvStage>) -> Self {
        assert!(!stages.is_empty(), "setconv spec needs at least one stage");
        for s in &stages {
            assert!(s.width >= 1 && s.radius > 0.0, "stage widths and radii must be positive");
            assert!(s.ratio > 0.0 && s.ratio <= 1.0, "stage ratio must be in (0, 1]");
        }
        SetconvSpec { stages }
    }

    /// Desk-scale default: 3 stages, widths (16, 32, 32), radii
    /// (0.25, 0.5, 1.0) in scene units, ratios (1.0, 0.5, 0.5).
    pub fn desk_default() -> Self {
        SetconvSpec::new(vec![
            SetconvStage { width: 16, radius: 0.25, ratio: 1.0 },
            SetconvStage { width: 32, radius: 0.5, ratio: 0.5 },
            SetconvStage { width: 32, radius: 1.0, ratio: 0.5 },
        ])
    }

    pub fn output_width(&self) -> usize {
        self.stages.last().unwrap().width
    }

    /// Edge-feature input width of stage `i` for `d`-wide point features.
    pub fn stage_input_width(&self, i: usize, point_feature_width: usize) -> usize {
        if i == 0 {
            3 + 2 * point_feature_width
        } else {
            3 + 2 * self.stages[i - 1].width
        }
    }

    fn stage_prefix(prefix: &str, i: usize) -> String {
        format!("{prefix}.s{i}")
    }

    /// Register one linear layer per stage (leaky rectifier applied after).
    pub fn register(&self, store: &mut ParamStore, prefix: &str, point_feature_width: usize, seed: u64) {
        for (i, stage) in self.stages.iter().enumerate() {
            let spec = MlpSpec::new(vec![self.stage_input_width(i, point_feature_width), stage.width]);
            spec.register(store, &Self::stage_prefix(prefix, i), seed);
        }
    }
}

/// Intra-frame edges: all strict-radius pairs including the self-edge,
/// feature = (p_i - p_j || feature_i || feature_j).
pub fn build_intra_edges(
    pts: &PointSet,
    features: &[Vec<f64>],
    r: f64,
    max_neighbors: usize,
) -> Result<EdgeSet> {
    if features.len() != pts.len() {
        return Err(Error::Dimension(format!(
            "build_intra_edges: {} feature rows for {} points",
            features.len(),
            pts.len()
        )));
    }
    build_edges(pts, pts, features, features, r, max_neighbors)
}

/// Cross-frame spatial-memory edges: warp each first-frame point by its
/// coarse flow, then connect to strict-radius second-frame neighbors.
pub fn build_memory_edges(
    pts: &PointSet,
    coarse: &FlowField,
    q: &PointSet,
    feats_p: &[Vec<f64>],
    feats_q: &[Vec<f64>],
    r: f64,
    max_neighbors: usize,
) -> Result<EdgeSet> {
    if coarse.len() != pts.len() {
        return Err(Error::Dimension(format!(
            "build_memory_edges: coarse flow length {} for {} points",
            coarse.len(),
            pts.len()
        )));
    }
    let warped = warp(pts, coarse);
    build_edges(&warped, q, feats_p, feats_q, r, max_neighbors)
}

/// P advected by a flow field.
pub fn warp(pts: &PointSet, flow: &FlowField) -> PointSet {
    PointSet::new(
        pts.points()
            .iter()
            .zip(flow)
            .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
            .collect(),
    )
    .expect("finite warp")
}

fn build_edges(
    query: &PointSet,
    reference: &PointSet,
    feats_q: &[Vec<f64>],
    feats_r: &[Vec<f64>],
    r: f64,
    max_neighbors: usize,
) -> Result<EdgeSet> {
    let fw_q = feats_q.first().map_or(0, Vec::len);
    let fw_r = feats_r.first().map_or(0, Vec::len);
    if fw_q != fw_r {
        return Err(Error::Dimension(format!(
            "edge endpoints carry different feature widths ({fw_q} vs {fw_r})"
        )));
    }
    let nn = radius_neighbors(query, reference, r, max_neighbors, SearchMode::Grid);
    let mut edges = Vec::with_capacity(query.len());
    for (qi, list) in nn.lists.iter().enumerate() {
        let qp = query.point(qi);
        let mut per_point = Vec::with_capacity(list.len());
        for nb in list {
            let rp = reference.point(nb.index);
            let delta = [qp[0] - rp[0], qp[1] - rp[1], qp[2] - rp[2]];
            let mut feature = Vec::with_capacity(3 + 2 * fw_q);
            feature.extend_from_slice(&delta);
            feature.extend_from_slice(&feats_q[qi]);
            feature.extend_from_slice(&feats_r[nb.index]);
            per_point.push(Edge { neighbor: nb.index, delta, distance: nb.distance, feature });
        }
        edges.push(per_point);
    }
    Ok(EdgeSet {
        query_positions: query.clone(),
        edges,
        feature_width: 3 + 2 * fw_q,
        truncated: nn.truncated,
    })
}

/// Flatten stage-1 edge features into a tape leaf (edges in query order).
pub fn stage1_feature_leaf(g: &Graph, edges: &EdgeSet) -> Var {
    let m = edges.edge_count();
    let mut data = Vec::with_capacity(m * edges.feature_width);
    for list in &edges.edges {
        for e in list {
            data.extend_from_slice(&e.feature);
        }
    }
    g.leaf(Tensor::new(m, edges.feature_width, data))
}

fn segment_ids(edges: &EdgeSet) -> Vec<usize> {
    let mut seg = Vec::with_capacity(edges.edge_count());
    for (i, list) in edges.edges.iter().enumerate() {
        seg.extend(std::iter::repeat(i).take(list.len()));
    }
    seg
}

/// Encode an edge set through the setconv stack. Stage one consumes the
/// edge set's features; later stages rebuild intra edges over the query
/// positions at their own radius using the pooled features.
pub fn encode(
    g: &Graph,
    edges: &EdgeSet,
    spec: &SetconvSpec,
    store: &ParamStore,
    prefix: &str,
    max_neighbors: usize,
) -> Result<Var> {
    let s1 = stage1_feature_leaf(g, edges);
    encode_with_stage1(g, edges, s1, spec, store, prefix, max_neighbors)
}

/// As `encode`, but with the stage-1 edge-feature matrix supplied as a tape
/// variable so gradients can flow into it (e.g. through the coarse-flow warp).
pub fn encode_with_stage1(
    g: &Graph,
    edges: &EdgeSet,
    stage1_features: Var,
    spec: &SetconvSpec,
    store: &ParamStore,
    prefix: &str,
    max_neighbors: usize,
) -> Result<Var> {
    let n = edges.query_positions.len();
    let (m, fw) = g.shape(stage1_features);
    if m != edges.edge_count() || fw != edges.feature_width {
        return Err(Error::Dimension(format!(
            "stage-1 features are {m}x{fw}, edge set implies {}x{}",
            edges.edge_count(),
            edges.feature_width
        )));
    }

    let mut feats = apply_stage(
        g,
        store,
        &SetconvSpec::stage_prefix(prefix, 0),
        &MlpSpec::new(vec![spec.stage_input_width(0, (fw - 3) / 2), spec.stages[0].width]),
        stage1_features,
        &segment_ids(edges),
        n,
    )?;
    feats = fps_repropagate(g, feats, &edges.query_positions, spec.stages[0].ratio)?;

    for (i, stage) in spec.stages.iter().enumerate().skip(1) {
        let intra = radius_neighbors(
            &edges.query_positions,
            &edges.query_positions,
            stage.radius,
            max_neighbors,
            SearchMode::Grid,
        );
        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        let mut deltas = Vec::new();
        for (ci, list) in intra.lists.iter().enumerate() {
            let cp = edges.query_positions.point(ci);
            for nb in list {
                let np = edges.query_positions.point(nb.index);
                centers.push(ci);
                neighbors.push(nb.index);
                deltas.extend_from_slice(&[cp[0] - np[0], cp[1] - np[1], cp[2] - np[2]]);
            }
        }
        let delta_leaf = g.leaf(Tensor::new(centers.len(), 3, deltas));
        let input = g.concat_cols(&[
            delta_leaf,
            g.gather_rows(feats, &centers),
            g.gather_rows(feats, &neighbors),
        ]);
        feats = apply_stage(
            g,
            store,
            &SetconvSpec::stage_prefix(prefix, i),
            &MlpSpec::new(vec![spec.stage_input_width(i, 0), stage.width]),
            input,
            &centers,
            n,
        )?;
        feats = fps_repropagate(g, feats, &edges.query_positions, stage.ratio)?;
    }
    Ok(feats)
}

fn apply_stage(
    g: &Graph,
    store: &ParamStore,
    stage_prefix: &str,
    spec: &MlpSpec,
    edge_input: Var,
    seg: &[usize],
    n: usize,
) -> Result<Var> {
    if seg.is_empty() {
        // no edges at all: every point pools to the zero vector
        return Ok(g.leaf(Tensor::zeros(n, spec.output_width())));
    }
    let hidden = crate::diffcore::forward_mlp(g, spec, store, stage_prefix, edge_input)?;
    let activated = g.leaky_relu(hidden, LEAKY_SLOPE);
    Ok(g.segment_max(activated, seg, n))
}

fn fps_repropagate(g: &Graph, feats: Var, positions: &PointSet, ratio: f64) -> Result<Var> {
    if ratio >= 1.0 {
        return Ok(feats);
    }
    let n = positions.len();
    let m = ((n as f64 * ratio).ceil() as usize).clamp(1, n);
    if m == n {
        return Ok(feats);
    }
    let retained = farthest_point_sample(positions, m, lex_min_index(positions))?;
    let retained_pts = PointSet::new(retained.iter().map(|&i| positions.point(i)).collect()).unwrap();
    let nearest = nearest_indices(positions, &retained_pts);
    let gather: Vec<usize> = nearest.into_iter().map(|local| retained[local]).collect();
    Ok(g.gather_rows(feats, &gather))
}
