//! Central finite-difference verification of every differentiable operation
//! and of the composed training objective.

use rand::Rng;

use crate::config::PipelineConfig;
use crate::diffcore::{forward_mlp, Graph, MlpSpec, ParamStore, Tensor, Var};
use crate::encoder::{SetconvSpec, SetconvStage};
use crate::error::Result;
use crate::flowinit::coarse_upsample;
use crate::objectives::{chamfer_loss, total_loss, weighted_smooth_loss, LossWeights};
use crate::pipeline::{normalize_scene, with_sampled_labels};
use crate::rngstream;
use crate::synth::{generate_synthetic_scene, SynthSpec};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Narrow stencil used to re-measure entries that fail at `FD_STEP`: near a
/// max/rectifier kink the wide stencil straddles the corner and central
/// differences are legitimately off; if the narrow stencil agrees with the
/// analytic gradient the point is non-smooth, not wrong.
const FD_STEP_NARROW: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3)
}

fn random_tensor(rows: usize, cols: usize, seed: u64, name: &str) -> Tensor {
    let mut rng = rngstream::stream(seed, &format!("gradcheck.{name}"));
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn jitter_params(store: &mut ParamStore, seed: u64) {
    let mut rng = rngstream::stream(seed, "gradcheck.jitter");
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        for v in store.get_mut(&name).unwrap().data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
}

/// Check d(loss)/d(params) for a loss built from a parameter store.
fn check_params(
    name: &str,
    store: &ParamStore,
    build: impl Fn(&Graph, &ParamStore) -> Result<Var>,
    corrupt: bool,
) -> Result<CheckResult> {
    let mut store = store.clone();
    let g = Graph::new();
    let loss = build(&g, &store)?;
    store.zero_grads();
    g.backward(loss, &mut store)?;

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut max_err: f64 = 0.0;
    let mut first = corrupt;
    for pname in &names {
        let grad = store.grad(pname).unwrap().clone();
        for idx in 0..grad.len() {
            let eval = |store: &mut ParamStore, delta: f64| -> Result<f64> {
                store.get_mut(pname).unwrap().data_mut()[idx] += delta;
                let g = Graph::new();
                let loss = build(&g, store)?;
                let v = g.value(loss).scalar_value();
                store.get_mut(pname).unwrap().data_mut()[idx] -= delta;
                Ok(v)
            };
            let mut analytic = grad.data()[idx];
            if first {
                // test hook: deliberately corrupt the first gradient entry
                analytic += 1.0;
                first = false;
            }
            let fd = (eval(&mut store, FD_STEP)? - eval(&mut store, -FD_STEP)?) / (2.0 * FD_STEP);
            let mut err = rel_err(analytic, fd);
            if err >= REL_TOL {
                let fd = (eval(&mut store, FD_STEP_NARROW)? - eval(&mut store, -FD_STEP_NARROW)?)
                    / (2.0 * FD_STEP_NARROW);
                err = err.min(rel_err(analytic, fd));
            }
            max_err = max_err.max(err);
        }
    }
    Ok(CheckResult { name: name.to_string(), max_rel_err: max_err, pass: max_err < REL_TOL })
}

/// Check d(loss)/d(input) for a loss built from one input leaf.
fn check_input(
    name: &str,
    base: &Tensor,
    build: impl Fn(&Graph, Var) -> Result<Var>,
) -> Result<CheckResult> {
    let g = Graph::new();
    let leaf = g.leaf(base.clone());
    let loss = build(&g, leaf)?;
    let grads = g.backward_no_store(loss)?;
    let analytic = grads.grad(&g, leaf);

    let mut max_err: f64 = 0.0;
    let mut work = base.clone();
    for idx in 0..base.len() {
        let mut eval = |delta: f64| -> Result<f64> {
            work.data_mut()[idx] += delta;
            let g = Graph::new();
            let leaf = g.leaf(work.clone());
            let loss = build(&g, leaf)?;
            let v = g.value(loss).scalar_value();
            work.data_mut()[idx] -= delta;
            Ok(v)
        };
        let fd = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
        let mut err = rel_err(analytic.data()[idx], fd);
        if err >= REL_TOL {
            let fd = (eval(FD_STEP_NARROW)? - eval(-FD_STEP_NARROW)?) / (2.0 * FD_STEP_NARROW);
            err = err.min(rel_err(analytic.data()[idx], fd));
        }
        max_err = max_err.max(err);
    }
    Ok(CheckResult { name: name.to_string(), max_rel_err: max_err, pass: max_err < REL_TOL })
}

/// Tiny model configuration used by the composed checks.
fn small_config(seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.seed = seed;
    config.setconv = SetconvSpec::new(vec![
        SetconvStage { width: 4, radius: 0.6, ratio: 1.0 },
        SetconvStage { width: 8, radius: 1.0, ratio: 0.5 },
    ]);
    config.corr_hidden = 8;
    config.label_ratio = 0.25;
    config
}

/// Run the whole battery. `corrupt` flips one gradient to prove the harness
/// detects failures.
pub fn run_all(seed: u64, corrupt: bool) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();

    // elementwise and structural tape ops, each isolated on a single input
    let x = random_tensor(5, 4, seed, "ops.x");
    let y = random_tensor(5, 4, seed, "ops.y");
    let w = random_tensor(4, 3, seed, "ops.w");
    results.push(check_input("op.matmul", &x, |g, v| Ok(g.sum(g.matmul(v, g.leaf(w.clone())))))?);
    results.push(check_input("op.add", &x, |g, v| Ok(g.sum(g.add(v, g.leaf(y.clone())))))?);
    results.push(check_input("op.sub", &x, |g, v| Ok(g.sum(g.sub(g.leaf(y.clone()), v))))?);
    results.push(check_input("op.mul", &x, |g, v| Ok(g.sum(g.mul(v, g.leaf(y.clone())))))?);
    results.push(check_input("op.add_row", &x, |g, v| {
        Ok(g.sum(g.mul(g.add_row(v, g.leaf(random_tensor(1, 4, seed, "ops.row"))), g.leaf(y.clone()))))
    })?);
    results.push(check_input("op.scale", &x, |g, v| Ok(g.sum(g.scale(v, -1.7))))?);
    // keep inputs away from the rectifier kink
    let x_off = {
        let mut t = x.clone();
        for v in t.data_mut() {
            if v.abs() < 1e-3 {
                *v += 0.01;
            }
        }
        t
    };
    results.push(check_input("op.leaky_relu", &x_off, |g, v| {
        Ok(g.sum(g.mul(g.leaky_relu(v, 0.1), g.leaf(y.clone()))))
    })?);
    results.push(check_input("op.concat_cols", &x, |g, v| {
        Ok(g.sum(g.mul(
            g.concat_cols(&[v, g.leaf(y.clone())]),
            g.leaf(random_tensor(5, 8, seed, "ops.cc")),
        )))
    })?);
    results.push(check_input("op.gather_rows", &x, |g, v| {
        Ok(g.sum(g.mul(
            g.gather_rows(v, &[0, 2, 2, 4]),
            g.leaf(random_tensor(4, 4, seed, "ops.gr")),
        )))
    })?);
    results.push(check_input("op.scatter_rows", &x, |g, v| {
        Ok(g.sum(g.mul(
            g.scatter_rows(v, &[1, 3, 5, 6, 0], 8),
            g.leaf(random_tensor(8, 4, seed, "ops.sr")),
        )))
    })?);
    results.push(check_input("op.segment_max", &x, |g, v| {
        Ok(g.sum(g.mul(
            g.segment_max(v, &[0, 0, 1, 1, 2], 3),
            g.leaf(random_tensor(3, 4, seed, "ops.sm")),
        )))
    })?);
    results.push(check_input("op.segment_sum", &x, |g, v| {
        Ok(g.sum(g.mul(
            g.segment_sum(v, &[0, 0, 1, 2, 2], 3),
            g.leaf(random_tensor(3, 4, seed, "ops.ss")),
        )))
    })?);
    results.push(check_input("op.row_scale", &x, |g, v| {
        Ok(g.sum(g.mul(g.row_scale(v, &[0.5, -1.0, 2.0, 0.25, 3.0]), g.leaf(y.clone()))))
    })?);
    results.push(check_input("op.softmax_rows", &x, |g, v| {
        Ok(g.sum(g.mul(g.softmax_rows(v), g.leaf(y.clone()))))
    })?);
    results.push(check_input("op.row_norm", &x, |g, v| {
        Ok(g.sum(g.mul(g.row_norm(v), g.leaf(random_tensor(5, 1, seed, "ops.rn")))))
    })?);
    results.push(check_input("op.reshape", &x, |g, v| {
        Ok(g.sum(g.mul(g.reshape(v, 4, 5), g.leaf(random_tensor(4, 5, seed, "ops.rs")))))
    })?);

    // MLP forward/backward through hidden nonlinearity
    {
        let spec = MlpSpec::new(vec![4, 6, 1]);
        let mut store = ParamStore::new();
        spec.register(&mut store, "mlp", seed);
        let input = random_tensor(7, 4, seed, "mlp.in");
        results.push(check_params(
            "mlp.forward",
            &store,
            |g, store| {
                let v = forward_mlp(g, &spec, store, "mlp", g.leaf(input.clone()))?;
                Ok(g.sum(v))
            },
            false,
        )?);
    }

    // spatial-memory warp: gradients flow through stage-1 edge features
    {
        let config = small_config(seed);
        let mut store = ParamStore::new();
        config.setconv.register(&mut store, "enc", 3, seed);
        let spec = SynthSpec { shapes: 1, points: 12, seed, ..Default::default() };
        let scene = with_sampled_labels(&generate_synthetic_scene(&spec), 0.3, seed)?;
        let (norm, _) = normalize_scene(&scene);
        let labels = norm.labels.clone().unwrap();
        let coarse = coarse_upsample(&norm.p, &labels, 2)?;
        let feats_p: Vec<Vec<f64>> = norm.p.points().iter().map(|p| p.to_vec()).collect();
        let feats_q: Vec<Vec<f64>> = norm.q.points().iter().map(|p| p.to_vec()).collect();
        let edges = crate::encoder::build_memory_edges(
            &norm.p, &coarse, &norm.q, &feats_p, &feats_q, 2.0, config.max_neighbors,
        )?;
        let base = {
            let g = Graph::new();
            g.value(crate::encoder::stage1_feature_leaf(&g, &edges))
        };
        let probe = random_tensor(norm.p.len(), config.setconv.output_width(), seed, "warp.probe");
        results.push(check_input("encoder.warp_features", &base, |g, v| {
            let feats = crate::encoder::encode_with_stage1(
                g, &edges, v, &config.setconv, &store, "enc", config.max_neighbors,
            )?;
            Ok(g.sum(g.mul(feats, g.leaf(probe.clone()))))
        })?);
    }

    // losses w.r.t. the flow field
    let scene = {
        let spec = SynthSpec { shapes: 2, points: 30, seed, ..Default::default() };
        with_sampled_labels(&generate_synthetic_scene(&spec), 0.25, seed)?
    };
    let (norm, _) = normalize_scene(&scene);
    let labels = norm.labels.clone().unwrap();
    let flow0 = {
        let coarse = coarse_upsample(&norm.p, &labels, 4)?;
        let mut t = Tensor::from_rows(&coarse.iter().map(|f| f.to_vec()).collect::<Vec<_>>());
        // coarse flows can coincide between neighbors, putting pairwise flow
        // differences inside the FD interval of the norm's kink; check at a
        // generic flow field instead
        let noise = random_tensor(t.rows(), t.cols(), seed, "loss.flow-jitter");
        for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
            *v += 0.2 * n;
        }
        t
    };
    let weights = LossWeights::default();
    {
        let q = norm.q.clone();
        let p = norm.p.clone();
        results.push(check_input("loss.chamfer", &flow0, |g, v| {
            let warped = g.add(crate::objectives::pointset_leaf(g, &p), v);
            chamfer_loss(g, warped, &q, false)
        })?);
    }
    {
        let p = norm.p.clone();
        let labels = labels.clone();
        results.push(check_input("loss.smooth", &flow0, |g, v| {
            weighted_smooth_loss(g, &p, v, &labels, &weights)
        })?);
    }
    {
        let p = norm.p.clone();
        let q = norm.q.clone();
        let labels = labels.clone();
        results.push(check_input("loss.total", &flow0, |g, v| {
            total_loss(g, &p, v, &q, &labels, &weights, false)
        })?);
    }

    // composed objective through the full generator, w.r.t. all parameters
    let config = small_config(seed);
    let mut store = crate::pipeline::init_params(&config, seed);
    // A fresh init is a degenerate check point: points with no in-radius
    // neighbors pool to exactly-zero features, whose next-stage activation is
    // exactly the (zero-initialized) bias -- the rectifier kink, where finite
    // differences and the subgradient legitimately disagree. Jitter every
    // parameter to a generic nearby point first.
    jitter_params(&mut store, seed);
    results.push(check_params(
        "pipeline.objective",
        &store,
        |g, store| crate::pipeline::training_loss_var(g, &scene, store, &config),
        corrupt,
    )?);

    Ok(results)
}

/// Render results as a fixed-width table.
pub fn table(results: &[CheckResult]) -> String {
    let mut out = String::from("check                         max_rel_err   status\n");
    for r in results {
        out.push_str(&format!("{:<28}  {:>12.3e}  {}\n", r.name, r.max_rel_err, if r.pass { "ok" } else { "FAIL" }));
    }
    out
}
