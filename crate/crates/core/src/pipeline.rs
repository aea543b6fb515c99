//! End-to-end orchestration: label sampling, the pseudo-label generator,
//! the training loop, evaluation, and the ablation harness.

use std::time::Instant;

use rand::seq::index::sample as index_sample;

use crate::config::PipelineConfig;
use crate::correlation::{build_descriptors, normalize_rows, pair_scores, propagate_labels};
use crate::diffcore::{Graph, MlpSpec, ParamStore, Tensor, Var};
use crate::encoder::{build_intra_edges, build_memory_edges, encode, warp};
use crate::error::{Error, Result};
use crate::flowinit::{coarse_upsample, FlowField, LabelSet};
use crate::geometry::PointSet;
use crate::metrics::{evaluate, exclude_labels_mask, FlowMetrics};
use crate::objectives::{total_loss, LossWeights};
use crate::rngstream;

/// Two frames of one scene, with optional ground truth and labels.
#[derive(Debug, Clone)]
pub struct ScenePair {
    pub id: String,
    pub p: PointSet,
    pub q: PointSet,
    pub f_gt: Option<FlowField>,
    pub labels: Option<LabelSet>,
}

impl ScenePair {
    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.q.len() {
            return Err(Error::Contract(format!(
                "scene {}: P has {} points but Q has {}",
                self.id,
                self.p.len(),
                self.q.len()
            )));
        }
        if let Some(flow) = &self.f_gt {
            if flow.len() != self.p.len() {
                return Err(Error::Contract(format!(
                    "scene {}: flow length {} for {} points",
                    self.id,
                    flow.len(),
                    self.p.len()
                )));
            }
        }
        if self.labels.is_some() && self.f_gt.is_none() {
            return Err(Error::Contract(format!("scene {}: labels without ground-truth flow", self.id)));
        }
        Ok(())
    }
}

/// Similarity transform recorded during scene normalization; `scale` maps
/// original units to normalized ones.
#[derive(Debug, Clone, Copy)]
pub struct NormTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormTransform {
    pub fn identity() -> Self {
        NormTransform { center: [0.0; 3], scale: 1.0 }
    }

    pub fn flow_to_original(&self, f: [f64; 3]) -> [f64; 3] {
        [f[0] / self.scale, f[1] / self.scale, f[2] / self.scale]
    }
}

/// Center the joint P/Q bounding box at the origin and scale its longest
/// side to 4 scene units, so the default radii are meaningful.
pub fn normalize_scene(scene: &ScenePair) -> (ScenePair, NormTransform) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in scene.p.points().iter().chain(scene.q.points()) {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]);
    let scale = if extent > 0.0 { 4.0 / extent } else { 1.0 };
    let tf = NormTransform { center, scale };

    let map_pts = |pts: &PointSet| {
        PointSet::new(
            pts.points()
                .iter()
                .map(|p| {
                    [
                        (p[0] - center[0]) * scale,
                        (p[1] - center[1]) * scale,
                        (p[2] - center[2]) * scale,
                    ]
                })
                .collect(),
        )
        .unwrap()
    };
    let map_flow = |flow: &FlowField| -> FlowField {
        flow.iter().map(|f| [f[0] * scale, f[1] * scale, f[2] * scale]).collect()
    };

    let f_gt = scene.f_gt.as_ref().map(map_flow);
    let labels = scene.labels.as_ref().map(|l| {
        let flows = l.flows().iter().map(|f| [f[0] * tf.scale, f[1] * tf.scale, f[2] * tf.scale]).collect();
        LabelSet::new(l.indices().to_vec(), flows, scene.p.len()).unwrap()
    });
    (
        ScenePair { id: scene.id.clone(), p: map_pts(&scene.p), q: map_pts(&scene.q), f_gt, labels },
        tf,
    )
}

/// Uniform random labels without replacement: floor(ratio * N) indices.
pub fn sample_labels(scene: &ScenePair, ratio: f64, seed: u64) -> Result<LabelSet> {
    let flow = scene
        .f_gt
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("scene {}: cannot sample labels without ground truth", scene.id)))?;
    let n = scene.p.len();
    let m = (ratio * n as f64).floor() as usize;
    if m < 1 {
        return Err(Error::Contract(format!(
            "label ratio {ratio} yields no labels for {n} points"
        )));
    }
    if m >= n {
        return Err(Error::Contract(format!(
            "label ratio {ratio} labels all {n} points; some must remain unlabeled"
        )));
    }
    let mut rng = rngstream::stream(seed, &format!("labels.{}", scene.id));
    let mut indices: Vec<usize> = index_sample(&mut rng, n, m).into_iter().collect();
    indices.sort_unstable();
    let flows = indices.iter().map(|&i| flow[i]).collect();
    LabelSet::new(indices, flows, n)
}

/// Attach sampled labels to a scene.
pub fn with_sampled_labels(scene: &ScenePair, ratio: f64, seed: u64) -> Result<ScenePair> {
    let labels = sample_labels(scene, ratio, seed)?;
    Ok(ScenePair { labels: Some(labels), ..scene.clone() })
}

fn corr_u_width(config: &PipelineConfig) -> usize {
    let d = config.setconv.output_width();
    if config.use_memory {
        2 * d
    } else {
        d
    }
}

fn corr_u_spec(config: &PipelineConfig) -> MlpSpec {
    MlpSpec::new(vec![corr_u_width(config), config.corr_hidden, 1])
}

fn corr_g_spec(config: &PipelineConfig) -> MlpSpec {
    MlpSpec::new(vec![6, config.corr_hidden, 1])
}

/// Register every trainable parameter for the configured model.
pub fn init_params(config: &PipelineConfig, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    if config.use_correlation {
        config.setconv.register(&mut store, "enc.intra", 3, seed);
        if config.use_memory {
            config.setconv.register(&mut store, "enc.mem", 3, seed);
        }
        corr_u_spec(config).register(&mut store, "corr.u", seed);
        corr_g_spec(config).register(&mut store, "corr.g", seed);
    }
    store
}

fn raw_features(pts: &PointSet) -> Vec<Vec<f64>> {
    pts.points().iter().map(|p| p.to_vec()).collect()
}

/// Build the full pseudo-label flow field on the tape: correlation-propagated
/// flows at unlabeled rows, ground-truth labels at labeled rows. Inputs are
/// assumed already normalized.
fn pseudo_label_var(
    g: &Graph,
    p: &PointSet,
    q: &PointSet,
    labels: &LabelSet,
    coarse: &FlowField,
    store: &ParamStore,
    config: &PipelineConfig,
) -> Result<Var> {
    let n = p.len();
    let feats_p = raw_features(p);
    let stage0_r = config.setconv.stages[0].radius;

    let intra = build_intra_edges(p, &feats_p, stage0_r, config.max_neighbors)?;
    let x = encode(g, &intra, &config.setconv, store, "enc.intra", config.max_neighbors)?;
    let features = if config.use_memory {
        let feats_q = raw_features(q);
        let mem = build_memory_edges(p, coarse, q, &feats_p, &feats_q, stage0_r, config.max_neighbors)?;
        let xw = encode(g, &mem, &config.setconv, store, "enc.mem", config.max_neighbors)?;
        g.concat_cols(&[x, xw])
    } else {
        x
    };

    let warped = warp(p, coarse);
    let positions6 = g.leaf(Tensor::from_rows(
        &(0..n)
            .map(|i| {
                let a = p.point(i);
                let b = warped.point(i);
                vec![a[0], a[1], a[2], b[0], b[1], b[2]]
            })
            .collect::<Vec<_>>(),
    ));

    let unlabeled = labels.unlabeled_indices(n);
    let desc = build_descriptors(g, features, positions6, &unlabeled, labels.indices());
    let scores = pair_scores(g, &desc, &corr_u_spec(config), &corr_g_spec(config), store, "corr.u", "corr.g")?;
    let corr = normalize_rows(g, scores)?;
    let unlabeled_flows = propagate_labels(g, corr, labels);

    // labeled rows carry the ground truth verbatim
    let mut labeled_full = Tensor::zeros(n, 3);
    for (&i, f) in labels.indices().iter().zip(labels.flows()) {
        for c in 0..3 {
            labeled_full.set(i, c, f[c]);
        }
    }
    Ok(g.add(g.scatter_rows(unlabeled_flows, &unlabeled, n), g.leaf(labeled_full)))
}

/// Run the label generator end to end for one scene: coarse upsampling,
/// two-frame encoding, correlation, propagation. Returns the full-length
/// flow field in original units with labeled entries equal to the labels
/// bitwise. With correlation disabled this is the coarse baseline.
pub fn generate_pseudo_labels(
    scene: &ScenePair,
    store: &ParamStore,
    config: &PipelineConfig,
) -> Result<FlowField> {
    scene.validate()?;
    let labels = scene
        .labels
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("scene {}: no labels present", scene.id)))?;

    let (norm, tf) = if config.normalize_scenes {
        normalize_scene(scene)
    } else {
        (scene.clone(), NormTransform::identity())
    };
    let norm_labels = norm.labels.as_ref().unwrap();
    let coarse = coarse_upsample(&norm.p, norm_labels, config.knn_k.min(norm_labels.len()))?;

    let mut flow: FlowField = if config.use_correlation {
        let g = Graph::new();
        let full = pseudo_label_var(&g, &norm.p, &norm.q, norm_labels, &coarse, store, config)?;
        let t = g.value(full);
        t.check_finite("pseudo-label flow")?;
        (0..t.rows()).map(|r| tf.flow_to_original([t.get(r, 0), t.get(r, 1), t.get(r, 2)])).collect()
    } else {
        coarse.iter().map(|f| tf.flow_to_original(*f)).collect()
    };

    // exactness at labeled rows regardless of the normalization round trip
    for (&i, f) in labels.indices().iter().zip(labels.flows()) {
        flow[i] = *f;
    }
    Ok(flow)
}

/// Build the full training objective for one scene on the tape: pseudo-label
/// field through the generator, then the combined chamfer/smooth loss.
pub fn training_loss_var(
    g: &Graph,
    scene: &ScenePair,
    store: &ParamStore,
    config: &PipelineConfig,
) -> Result<Var> {
    let prepared = prepare(scene, config)?;
    let flow = pseudo_label_var(g, &prepared.p, &prepared.q, &prepared.labels, &prepared.coarse, store, config)?;
    total_loss(g, &prepared.p, flow, &prepared.q, &prepared.labels, &effective_weights(config), config.mean_chamfer)
}

/// Per-epoch losses plus run metadata.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_metrics: Option<FlowMetrics>,
    pub wall_secs: f64,
    pub config_echo: String,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# train report\n## config\n");
        out.push_str(&self.config_echo);
        out.push_str("## epochs\n");
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("epoch={i} loss={loss}\n"));
        }
        if let Some(m) = &self.final_metrics {
            out.push_str("## metrics\n");
            out.push_str(&m.to_kv_block());
        }
        out.push_str(&format!("wall_secs={:.3}\n", self.wall_secs));
        out
    }
}

fn effective_weights(config: &PipelineConfig) -> LossWeights {
    let mut w = config.loss;
    if !config.use_weighted_smooth {
        // uniform smooth ablation: same weight on both neighborhood sums
        w.beta2 = w.beta1;
    }
    w
}

struct PreparedScene {
    p: PointSet,
    q: PointSet,
    labels: LabelSet,
    coarse: FlowField,
}

fn prepare(scene: &ScenePair, config: &PipelineConfig) -> Result<PreparedScene> {
    scene.validate()?;
    if scene.labels.is_none() {
        return Err(Error::Contract(format!("scene {}: training requires labels", scene.id)));
    }
    let (norm, _) = if config.normalize_scenes {
        normalize_scene(scene)
    } else {
        (scene.clone(), NormTransform::identity())
    };
    let labels = norm.labels.clone().unwrap();
    let coarse = coarse_upsample(&norm.p, &labels, config.knn_k.min(labels.len()))?;
    Ok(PreparedScene { p: norm.p, q: norm.q, labels, coarse })
}

/// Train the generator on labeled scenes with Adam and the configured step
/// schedule. One optimizer step per scene, scenes visited in dataset order;
/// fully deterministic given (seed, config, dataset).
pub fn train(dataset: &[ScenePair], config: &PipelineConfig) -> Result<(ParamStore, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let mut store = init_params(config, config.seed);
    let weights = effective_weights(config);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    if config.use_correlation && config.epochs > 0 {
        let prepared: Vec<PreparedScene> =
            dataset.iter().map(|s| prepare(s, config)).collect::<Result<_>>()?;
        for epoch in 0..config.epochs {
            let lr = config.lr_at_epoch(epoch);
            let mut epoch_loss = 0.0;
            for (si, scene) in prepared.iter().enumerate() {
                let g = Graph::new();
                let flow = pseudo_label_var(&g, &scene.p, &scene.q, &scene.labels, &scene.coarse, &store, config)?;
                let loss = total_loss(&g, &scene.p, flow, &scene.q, &scene.labels, &weights, config.mean_chamfer)?;
                let loss_value = g.value(loss).scalar_value();
                if !loss_value.is_finite() {
                    return Err(Error::Train(format!(
                        "non-finite loss at epoch {epoch}, scene index {si} ({})",
                        dataset[si].id
                    )));
                }
                g.backward(loss, &mut store)?;
                store.adam_step(lr, Default::default())?;
                store.zero_grads();
                epoch_loss += loss_value;
            }
            epoch_losses.push(epoch_loss / prepared.len().max(1) as f64);
        }
    }

    let report = TrainReport {
        epoch_losses,
        final_metrics: None,
        wall_secs: start.elapsed().as_secs_f64(),
        config_echo: config.echo(),
    };
    Ok((store, report))
}

/// Pseudo-label every scene and pool metrics over unlabeled points.
pub fn evaluate_scenes(
    scenes: &[ScenePair],
    store: &ParamStore,
    config: &PipelineConfig,
) -> Result<FlowMetrics> {
    if scenes.is_empty() {
        return Err(Error::Contract("evaluate_scenes: no scenes".into()));
    }
    let mut total = 0usize;
    let mut epe = 0.0;
    let mut acc_s = 0.0;
    let mut acc_r = 0.0;
    let mut out = 0.0;
    for scene in scenes {
        let labels = scene
            .labels
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("scene {}: no labels to evaluate against", scene.id)))?;
        let gt = scene
            .f_gt
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("scene {}: no ground truth", scene.id)))?;
        let pred = generate_pseudo_labels(scene, store, config)?;
        let mask = exclude_labels_mask(scene.p.len(), labels)?;
        let m = evaluate(&pred, gt, &mask)?;
        let w = m.n_evaluated as f64;
        total += m.n_evaluated;
        epe += m.epe * w;
        acc_s += m.acc_strict * w;
        acc_r += m.acc_relax * w;
        out += m.outliers * w;
    }
    let w = total as f64;
    Ok(FlowMetrics {
        epe: epe / w,
        acc_strict: acc_s / w,
        acc_relax: acc_r / w,
        outliers: out / w,
        n_evaluated: total,
    })
}

/// One row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub use_correlation: bool,
    pub use_memory: bool,
    pub use_weighted_smooth: bool,
    pub metrics: FlowMetrics,
}

/// Train and evaluate the five module combinations under identical seeds:
/// coarse baseline, correlation only, correlation+memory,
/// correlation+weighted smooth, and the full model.
pub fn run_ablation(
    train_scenes: &[ScenePair],
    eval_scenes: &[ScenePair],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let combos: [(&'static str, bool, bool, bool); 5] = [
        ("baseline", false, false, false),
        ("corr", true, false, false),
        ("corr+mem", true, true, false),
        ("corr+smooth", true, false, true),
        ("corr+mem+smooth", true, true, true),
    ];
    let mut rows = Vec::with_capacity(combos.len());
    for (name, corr, mem, smooth) in combos {
        let mut config = base.clone();
        config.use_correlation = corr;
        config.use_memory = mem;
        config.use_weighted_smooth = smooth;
        if !corr {
            // the coarse baseline ignores every learned parameter, so
            // training it would only burn time without changing the row
            config.epochs = 0;
        }
        let (store, _) = train(train_scenes, &config)?;
        let metrics = evaluate_scenes(eval_scenes, &store, &config)?;
        rows.push(AblationRow {
            name,
            use_correlation: corr,
            use_memory: mem,
            use_weighted_smooth: smooth,
            metrics,
        });
    }
    Ok(rows)
}

/// Render the ablation table.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("corr  mem   smooth  epe       as        ar        out\n");
    for row in rows {
        let mark = |b: bool| if b { "yes " } else { "-   " };
        out.push_str(&format!(
            "{}  {}  {}    {:.6}  {:.6}  {:.6}  {:.6}  ({})\n",
            mark(row.use_correlation),
            mark(row.use_memory),
            mark(row.use_weighted_smooth),
            row.metrics.epe,
            row.metrics.acc_strict,
            row.metrics.acc_relax,
            row.metrics.outliers,
            row.name,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_scene, SynthSpec};
    use rand::Rng;

    fn small_scene(seed: u64, points: usize) -> ScenePair {
        generate_synthetic_scene(&SynthSpec { points, seed, noise_sigma: 0.002, ..Default::default() })
    }

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.set("setconv_widths", "4,8").unwrap();
        cfg.set("setconv_radii", "0.5,1.0").unwrap();
        cfg.set("setconv_ratios", "1.0,0.5").unwrap();
        cfg.corr_hidden = 8;
        cfg.max_neighbors = 16;
        cfg.label_ratio = 0.125;
        cfg
    }

    #[test]
    fn sample_labels_counting_and_errors() {
        let scene = small_scene(0, 64);
        let labels = sample_labels(&scene, 1.0 / 8.0, 0).unwrap();
        assert_eq!(labels.len(), 8);
        let mut sorted = labels.indices().to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
        // ratio 1 would label every point
        assert!(sample_labels(&scene, 1.0, 0).is_err());
        // too small a ratio yields zero labels
        assert!(sample_labels(&scene, 1.0 / 128.0, 0).is_err());
        // replay is identical
        let again = sample_labels(&scene, 1.0 / 8.0, 0).unwrap();
        assert_eq!(labels, again);
        let other_seed = sample_labels(&scene, 1.0 / 8.0, 1).unwrap();
        assert_ne!(labels, other_seed);
    }

    #[test]
    fn normalize_scene_fits_four_unit_cube() {
        let scene = small_scene(1, 48);
        let (norm, tf) = normalize_scene(&scene);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in norm.p.points().iter().chain(norm.q.points()) {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let extent = (0..3).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
        assert!((extent - 4.0).abs() < 1e-9);
        // flows transform consistently with coordinates
        let f = [0.3, -0.2, 0.9];
        let fwd = [f[0] * tf.scale, f[1] * tf.scale, f[2] * tf.scale];
        let back = tf.flow_to_original(fwd);
        for c in 0..3 {
            assert!((back[c] - f[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_epoch_training_is_a_no_op() {
        let scenes = vec![with_sampled_labels(&small_scene(2, 64), 0.125, 0).unwrap()];
        let mut cfg = small_config();
        cfg.epochs = 0;
        let (store, report) = train(&scenes, &cfg).unwrap();
        assert!(report.epoch_losses.is_empty());
        let init = init_params(&cfg, cfg.seed);
        assert_eq!(store.len(), init.len());
        for name in init.names() {
            assert_eq!(store.get(name), init.get(name), "{name}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let scenes: Vec<ScenePair> = (0..2)
            .map(|s| with_sampled_labels(&small_scene(10 + s, 96), 0.125, 0).unwrap())
            .collect();
        let mut cfg = small_config();
        cfg.epochs = 2;
        let (s1, r1) = train(&scenes, &cfg).unwrap();
        let (s2, r2) = train(&scenes, &cfg).unwrap();
        assert_eq!(r1.epoch_losses, r2.epoch_losses);
        for name in s1.names() {
            assert_eq!(s1.get(name), s2.get(name), "{name}");
        }
    }

    #[test]
    fn loss_decreases_over_short_run() {
        let scenes: Vec<ScenePair> = (0..2)
            .map(|s| with_sampled_labels(&small_scene(20 + s, 128), 0.125, 0).unwrap())
            .collect();
        let mut cfg = small_config();
        cfg.epochs = 10;
        cfg.lr = 0.01;
        let (_, report) = train(&scenes, &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 10);
        let head: f64 = report.epoch_losses[..3].iter().sum::<f64>() / 3.0;
        let tail: f64 = report.epoch_losses[7..].iter().sum::<f64>() / 3.0;
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    }

    #[test]
    fn pseudo_labels_preserve_labels_bitwise() {
        let scene = with_sampled_labels(&small_scene(3, 80), 0.125, 0).unwrap();
        let cfg = small_config();
        let store = init_params(&cfg, 42);
        let flow = generate_pseudo_labels(&scene, &store, &cfg).unwrap();
        let labels = scene.labels.as_ref().unwrap();
        for (&i, &f) in labels.indices().iter().zip(labels.flows()) {
            assert_eq!(flow[i], f, "label {i}");
        }
    }

    #[test]
    fn uniform_translation_yields_exact_pseudo_labels() {
        let mut rng = crate::rngstream::stream(8, "test.pipeline.uniform");
        let n = 60;
        let t = [0.4, -0.3, 0.2];
        let p: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let q: Vec<[f64; 3]> = p.iter().map(|x| [x[0] + t[0], x[1] + t[1], x[2] + t[2]]).collect();
        let scene = ScenePair {
            id: "uniform".into(),
            p: PointSet::new(p).unwrap(),
            q: PointSet::new(q).unwrap(),
            f_gt: Some(vec![t; n]),
            labels: None,
        };
        let scene = with_sampled_labels(&scene, 0.2, 0).unwrap();
        let cfg = small_config();
        let store = init_params(&cfg, 7);
        let flow = generate_pseudo_labels(&scene, &store, &cfg).unwrap();
        for f in &flow {
            for c in 0..3 {
                assert!((f[c] - t[c]).abs() < 1e-12, "{f:?} vs {t:?}");
            }
        }
    }

    #[test]
    fn correlation_bypass_returns_the_coarse_flow() {
        let scene = with_sampled_labels(&small_scene(4, 72), 0.125, 0).unwrap();
        let mut cfg = small_config();
        cfg.use_correlation = false;
        cfg.normalize_scenes = false;
        let store = init_params(&cfg, 0);
        let flow = generate_pseudo_labels(&scene, &store, &cfg).unwrap();
        let coarse = crate::flowinit::coarse_upsample(
            &scene.p,
            scene.labels.as_ref().unwrap(),
            cfg.knn_k.min(scene.labels.as_ref().unwrap().len()),
        )
        .unwrap();
        assert_eq!(flow, coarse);
    }

    #[test]
    fn pseudo_labels_stay_in_label_hull() {
        let scene = with_sampled_labels(&small_scene(5, 64), 0.25, 0).unwrap();
        let cfg = small_config();
        let store = init_params(&cfg, 99);
        let flow = generate_pseudo_labels(&scene, &store, &cfg).unwrap();
        let labels = scene.labels.as_ref().unwrap();
        for c in 0..3 {
            let lo = labels.flows().iter().map(|f| f[c]).fold(f64::INFINITY, f64::min);
            let hi = labels.flows().iter().map(|f| f[c]).fold(f64::NEG_INFINITY, f64::max);
            for i in labels.unlabeled_indices(scene.p.len()) {
                assert!(flow[i][c] >= lo - 1e-9 && flow[i][c] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn evaluated_mask_grows_with_ratio() {
        let scene = small_scene(6, 256);
        let mut last = 0;
        for ratio in [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0] {
            let labeled = with_sampled_labels(&scene, ratio, 0).unwrap();
            let mask = crate::metrics::exclude_labels_mask(256, labeled.labels.as_ref().unwrap()).unwrap();
            let labeled_count = 256 - mask.len();
            assert!(labeled_count > last);
            last = labeled_count;
        }
    }

    #[test]
    fn ablation_table_has_five_rows() {
        let rows: Vec<AblationRow> = [
            ("baseline", false, false, false),
            ("corr", true, false, false),
            ("corr+mem", true, true, false),
            ("corr+smooth", true, false, true),
            ("corr+mem+smooth", true, true, true),
        ]
        .iter()
        .map(|&(name, c, m, s)| AblationRow {
            name,
            use_correlation: c,
            use_memory: m,
            use_weighted_smooth: s,
            metrics: crate::metrics::FlowMetrics { epe: 0.1, acc_strict: 0.5, acc_relax: 0.6, outliers: 0.2, n_evaluated: 10 },
        })
        .collect();
        let table = ablation_table(&rows);
        assert_eq!(table.lines().count(), 6); // header + 5 rows
        assert!(table.contains("corr+mem+smooth"));
    }

    #[test]
    fn scene_validation_errors() {
        let scene = small_scene(7, 16);
        let bad = ScenePair { q: PointSet::new(vec![[0.0; 3]]).unwrap(), ..scene.clone() };
        assert!(bad.validate().is_err());
        let bad = ScenePair { f_gt: Some(vec![[0.0; 3]; 3]), ..scene.clone() };
        assert!(bad.validate().is_err());
        // labels without ground truth are rejected
        let labeled = with_sampled_labels(&scene, 0.25, 0).unwrap();
        let bad = ScenePair { f_gt: None, ..labeled };
        assert!(bad.validate().is_err());
        assert!(scene.validate().is_ok());
    }
}
