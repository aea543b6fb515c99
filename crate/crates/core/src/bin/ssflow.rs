//! Command-line front end: scene generation, training, pseudo-label
//! generation, evaluation, gradient checking, and the ablation table.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssflow::config::{parse_ratio, PipelineConfig};
use ssflow::diffcore::ParamStore;
use ssflow::error::Error;
use ssflow::gradcheck;
use ssflow::metrics::{evaluate, exclude_labels_mask};
use ssflow::pipeline::{
    ablation_table, generate_pseudo_labels, run_ablation, train, with_sampled_labels, ScenePair,
};
use ssflow::sceneio::{read_scene, read_scene_csv, write_scene, write_scene_csv};
use ssflow::synth::{generate_synthetic_scene, SynthSpec};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ARTIFACT: u8 = 4;

#[derive(Parser)]
#[command(name = "ssflow", version, about = "Scene-flow pseudo-label generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (flat key=value lines, # comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual key=value overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root random seed (overrides config)
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for item in &self.overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("--set {item:?}: expected KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic rigid-motion scene files
    Gen {
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        /// Points per scene
        #[arg(long, default_value_t = 1024)]
        points: usize,
        /// Rigid shapes per scene
        #[arg(long, default_value_t = 4)]
        shapes: usize,
        /// Gaussian jitter sigma applied to the second frame
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Per-shape rotation bound, degrees
        #[arg(long, default_value_t = 15.0)]
        max_rotation_deg: f64,
        /// Per-shape translation bound, scene units
        #[arg(long, default_value_t = 1.0)]
        max_translation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a CSV next to each binary scene
        #[arg(long, default_value_t = false)]
        csv: bool,
    },
    /// Train the pseudo-label generator on a scene directory
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Label ratio, e.g. 1/16 or 0.0625 (overrides config)
        #[arg(long)]
        ratio: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Train report path (default: <out>.report.txt)
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate pseudo-labels for one scene with a trained checkpoint
    Label {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Label ratio used when the scene carries no labels
        #[arg(long)]
        ratio: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Disable the spatial-memory branch
        #[arg(long = "no-memory", default_value_t = false)]
        no_memory: bool,
        /// Bypass the correlation matrix (coarse baseline)
        #[arg(long = "no-correlation", default_value_t = false)]
        no_correlation: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare a predicted-flow scene file against a ground-truth one
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Finite-difference checks on every differentiable operation
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test hook: corrupt one gradient to prove detection
        #[arg(long, hide = true, default_value_t = false)]
        corrupt: bool,
    },
    /// Train/evaluate the five module combinations and print the table
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Scenes held out for evaluation (taken from the end)
        #[arg(long, default_value_t = 0)]
        eval_scenes: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Contract(_) | Error::Query(_) => EXIT_USAGE,
        Error::Train(_) => EXIT_NUMERIC,
        Error::Dimension(_) | Error::Format(_) => EXIT_ARTIFACT,
        Error::Io(_) => 1,
    }
}

fn read_any_scene(path: &Path) -> Result<ScenePair, Error> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_scene_csv(path)
    } else {
        read_scene(path)
    }
}

fn load_scene_dir(dir: &Path) -> Result<Vec<ScenePair>, Error> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ssfl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format(format!("{}: no .ssfl scene files", dir.display())));
    }
    paths.iter().map(|p| read_scene(p)).collect()
}

fn ensure_labels(scenes: Vec<ScenePair>, cfg: &PipelineConfig) -> Result<Vec<ScenePair>, Error> {
    scenes
        .into_iter()
        .map(|s| {
            if s.labels.is_some() {
                Ok(s)
            } else {
                with_sampled_labels(&s, cfg.label_ratio, cfg.seed)
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { scenes, points, shapes, noise, max_rotation_deg, max_translation, seed, out, csv } => {
            if scenes == 0 || points == 0 || shapes == 0 || points < shapes {
                return Err(Error::Contract(format!(
                    "gen: need scenes >= 1 and points >= shapes >= 1 (got scenes={scenes}, points={points}, shapes={shapes})"
                )));
            }
            std::fs::create_dir_all(&out)?;
            println!("# resolved generation settings");
            println!(
                "scenes={scenes}\npoints={points}\nshapes={shapes}\nnoise={noise}\n\
                 max_rotation_deg={max_rotation_deg}\nmax_translation={max_translation}\nseed={seed}"
            );
            println!("# manifest");
            for i in 0..scenes {
                let spec = SynthSpec {
                    shapes,
                    points,
                    noise_sigma: noise,
                    max_rotation_deg,
                    max_translation,
                    seed: seed.wrapping_add(i as u64),
                    ..Default::default()
                };
                let scene = generate_synthetic_scene(&spec);
                let path = out.join(format!("scene-{:04}.ssfl", i));
                write_scene(&path, &scene)?;
                println!("{} n={} seed={}", path.display(), scene.p.len(), spec.seed);
                if csv {
                    write_scene_csv(&out.join(format!("scene-{:04}.csv", i)), &scene)?;
                }
            }
            Ok(())
        }
        Command::Train { data, ratio, out, report, config } => {
            let mut cfg = config.resolve()?;
            if let Some(r) = ratio {
                cfg.label_ratio = parse_ratio(&r)?;
                cfg.validate()?;
            }
            print!("# resolved config\n{}", cfg.echo());
            let scenes = ensure_labels(load_scene_dir(&data)?, &cfg)?;
            let (store, train_report) = train(&scenes, &cfg)?;
            store.save(&out)?;
            let report_path = report.unwrap_or_else(|| {
                let mut p = out.clone();
                p.set_extension("report.txt");
                p
            });
            std::fs::write(&report_path, train_report.to_text())?;
            let last = train_report.epoch_losses.last().copied();
            println!(
                "trained {} epochs on {} scenes, final loss {}",
                train_report.epoch_losses.len(),
                scenes.len(),
                last.map_or("n/a".to_string(), |l| format!("{l:.6}")),
            );
            println!("checkpoint: {}", out.display());
            println!("report: {}", report_path.display());
            Ok(())
        }
        Command::Label { data, ckpt, ratio, out, no_memory, no_correlation, config } => {
            let mut cfg = config.resolve()?;
            if let Some(r) = ratio {
                cfg.label_ratio = parse_ratio(&r)?;
                cfg.validate()?;
            }
            if no_memory {
                cfg.use_memory = false;
            }
            if no_correlation {
                cfg.use_correlation = false;
            }
            print!("# resolved config\n{}", cfg.echo());
            let store = ParamStore::load(&ckpt)?;
            let scene = read_any_scene(&data)?;
            let scene = if scene.labels.is_some() {
                scene
            } else {
                with_sampled_labels(&scene, cfg.label_ratio, cfg.seed)?
            };
            let pseudo = generate_pseudo_labels(&scene, &store, &cfg)?;
            if let Some(gt) = &scene.f_gt {
                let mask = exclude_labels_mask(scene.p.len(), scene.labels.as_ref().unwrap())?;
                let metrics = evaluate(&pseudo, gt, &mask)?;
                println!("{}", metrics.to_line());
            }
            let labeled = ScenePair { f_gt: Some(pseudo), ..scene };
            if out.extension().is_some_and(|e| e == "csv") {
                write_scene_csv(&out, &labeled)?;
            } else {
                write_scene(&out, &labeled)?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Eval { pred, gt } => {
            let pred_scene = read_any_scene(&pred)?;
            let gt_scene = read_any_scene(&gt)?;
            if pred_scene.p.len() != gt_scene.p.len() {
                return Err(Error::Contract(format!(
                    "point count mismatch: {} vs {}",
                    pred_scene.p.len(),
                    gt_scene.p.len()
                )));
            }
            let pred_flow = pred_scene
                .f_gt
                .ok_or_else(|| Error::Format(format!("{}: no flow field", pred.display())))?;
            let gt_flow = gt_scene
                .f_gt
                .ok_or_else(|| Error::Format(format!("{}: no flow field", gt.display())))?;
            let mask: Vec<usize> = match &gt_scene.labels {
                Some(labels) => exclude_labels_mask(gt_scene.p.len(), labels)?,
                None => (0..gt_scene.p.len()).collect(),
            };
            let metrics = evaluate(&pred_flow, &gt_flow, &mask)?;
            println!("{}", metrics.to_line());
            Ok(())
        }
        Command::Gradcheck { seed, corrupt } => {
            let results = gradcheck::run_all(seed, corrupt)?;
            print!("{}", gradcheck::table(&results));
            if results.iter().any(|r| !r.pass) {
                return Err(Error::Train("gradient check failed".into()));
            }
            Ok(())
        }
        Command::Ablate { data, eval_scenes, config } => {
            let cfg = config.resolve()?;
            print!("# resolved config\n{}", cfg.echo());
            let scenes = ensure_labels(load_scene_dir(&data)?, &cfg)?;
            let n_eval = if eval_scenes > 0 { eval_scenes } else { (scenes.len() / 5).max(1) };
            if n_eval >= scenes.len() {
                return Err(Error::Contract(format!(
                    "ablate: {n_eval} eval scenes leaves no training scenes (have {})",
                    scenes.len()
                )));
            }
            let split = scenes.len() - n_eval;
            let rows = run_ablation(&scenes[..split], &scenes[split..], &cfg)?;
            print!("{}", ablation_table(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
