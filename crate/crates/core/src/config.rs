//! Pipeline configuration: defaults, flat key=value config files, and the
//! resolved-config echo that makes every run replayable.

use std::path::Path;

use crate::encoder::{SetconvSpec, SetconvStage};
use crate::error::{Error, Result};
use crate::objectives::LossWeights;

/// Everything a pipeline run depends on besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub label_ratio: f64,
    /// k for coarse inverse-distance upsampling.
    pub knn_k: usize,
    /// Cap on radius-query neighbors per point.
    pub max_neighbors: usize,
    pub setconv: SetconvSpec,
    /// Hidden width of the two correlation score MLPs.
    pub corr_hidden: usize,
    pub loss: LossWeights,
    /// Divide chamfer terms by cloud size (off: printed sum form).
    pub mean_chamfer: bool,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every_epochs: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_correlation: bool,
    pub use_memory: bool,
    pub use_weighted_smooth: bool,
    /// Center and scale scenes into a 4-unit cube before processing.
    pub normalize_scenes: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            label_ratio: 1.0 / 16.0,
            knn_k: 8,
            max_neighbors: 64,
            setconv: SetconvSpec::desk_default(),
            corr_hidden: 32,
            loss: LossWeights::default(),
            mean_chamfer: false,
            lr: 0.001,
            lr_decay: 0.7,
            decay_every_epochs: 25,
            epochs: 50,
            seed: 0,
            use_correlation: true,
            use_memory: true,
            use_weighted_smooth: true,
            normalize_scenes: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.label_ratio > 0.0 && self.label_ratio < 1.0) {
            return Err(Error::Contract(format!("label_ratio {} must lie in (0, 1)", self.label_ratio)));
        }
        if self.lr <= 0.0 {
            return Err(Error::Contract("lr must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Contract("lr_decay must lie in (0, 1]".into()));
        }
        if self.knn_k == 0 || self.max_neighbors == 0 || self.corr_hidden == 0 {
            return Err(Error::Contract("knn_k, max_neighbors and corr_hidden must be >= 1".into()));
        }
        if self.decay_every_epochs == 0 {
            return Err(Error::Contract("decay_every_epochs must be >= 1".into()));
        }
        self.loss.validate()
    }

    /// Learning rate in effect at a 0-based epoch index.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every_epochs) as i32)
    }

    /// Parse a flat key=value file with `#` comments over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key=value override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Format(format!("config key {key}: bad {what} {value:?}"));
        match key {
            "label_ratio" => self.label_ratio = parse_ratio(value)?,
            "knn_k" => self.knn_k = value.parse().map_err(|_| bad("integer"))?,
            "max_neighbors" => self.max_neighbors = value.parse().map_err(|_| bad("integer"))?,
            "corr_hidden" => self.corr_hidden = value.parse().map_err(|_| bad("integer"))?,
            "alpha" => self.loss.alpha = value.parse().map_err(|_| bad("float"))?,
            "beta" => self.loss.beta = value.parse().map_err(|_| bad("float"))?,
            "beta1" => self.loss.beta1 = value.parse().map_err(|_| bad("float"))?,
            "beta2" => self.loss.beta2 = value.parse().map_err(|_| bad("float"))?,
            "r_smooth" => self.loss.r_smooth = value.parse().map_err(|_| bad("float"))?,
            "mean_chamfer" => self.mean_chamfer = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("float"))?,
            "lr_decay" => self.lr_decay = value.parse().map_err(|_| bad("float"))?,
            "decay_every_epochs" => {
                self.decay_every_epochs = value.parse().map_err(|_| bad("integer"))?
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "use_correlation" => self.use_correlation = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "use_memory" => self.use_memory = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "use_weighted_smooth" => {
                self.use_weighted_smooth = parse_bool(value).ok_or_else(|| bad("bool"))?
            }
            "normalize_scenes" => {
                self.normalize_scenes = parse_bool(value).ok_or_else(|| bad("bool"))?
            }
            "setconv_widths" => {
                let widths = parse_list::<usize>(value).ok_or_else(|| bad("width list"))?;
                self.resize_setconv(widths.len());
                for (s, w) in self.setconv.stages.iter_mut().zip(widths) {
                    s.width = w;
                }
            }
            "setconv_radii" => {
                let radii = parse_list::<f64>(value).ok_or_else(|| bad("radius list"))?;
                self.resize_setconv(radii.len());
                for (s, r) in self.setconv.stages.iter_mut().zip(radii) {
                    s.radius = r;
                }
            }
            "setconv_ratios" => {
                let ratios = parse_list::<f64>(value).ok_or_else(|| bad("ratio list"))?;
                self.resize_setconv(ratios.len());
                for (s, r) in self.setconv.stages.iter_mut().zip(ratios) {
                    s.ratio = r;
                }
            }
            other => return Err(Error::Format(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    fn resize_setconv(&mut self, n: usize) {
        let last = *self.setconv.stages.last().unwrap();
        self.setconv.stages.resize(n.max(1), last);
    }

    /// Fully-resolved key=value block; feeding it back reproduces the run.
    pub fn echo(&self) -> String {
        let list = |f: fn(&SetconvStage) -> String| -> String {
            self.setconv.stages.iter().map(f).collect::<Vec<_>>().join(",")
        };
        format!(
            "label_ratio={}\nknn_k={}\nmax_neighbors={}\nsetconv_widths={}\nsetconv_radii={}\n\
             setconv_ratios={}\ncorr_hidden={}\nalpha={}\nbeta={}\nbeta1={}\nbeta2={}\nr_smooth={}\n\
             mean_chamfer={}\nlr={}\nlr_decay={}\ndecay_every_epochs={}\nepochs={}\nseed={}\n\
             use_correlation={}\nuse_memory={}\nuse_weighted_smooth={}\nnormalize_scenes={}\n",
            self.label_ratio,
            self.knn_k,
            self.max_neighbors,
            list(|s| s.width.to_string()),
            list(|s| s.radius.to_string()),
            list(|s| s.ratio.to_string()),
            self.corr_hidden,
            self.loss.alpha,
            self.loss.beta,
            self.loss.beta1,
            self.loss.beta2,
            self.loss.r_smooth,
            self.mean_chamfer,
            self.lr,
            self.lr_decay,
            self.decay_every_epochs,
            self.epochs,
            self.seed,
            self.use_correlation,
            self.use_memory,
            self.use_weighted_smooth,
            self.normalize_scenes,
        )
    }
}

/// Accept either a plain fraction ("0.0625") or a ratio ("1/16").
pub fn parse_ratio(value: &str) -> Result<f64> {
    let v = if let Some((num, den)) = value.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::Format(format!("bad ratio {value:?}")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::Format(format!("bad ratio {value:?}")))?;
        if d == 0.0 {
            return Err(Error::Format(format!("bad ratio {value:?}")));
        }
        n / d
    } else {
        value.parse().map_err(|_| Error::Format(format!("bad ratio {value:?}")))?
    };
    Ok(v)
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    let items: Option<Vec<T>> = value.split(',').map(|s| s.trim().parse().ok()).collect();
    items.filter(|v| !v.is_empty())
}
