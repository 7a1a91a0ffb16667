//! Flag resolution: command line, then `--config` file, then built-in defaults.

use std::path::Path;

use hotcold::dataset::{load_split, AnnotatedScene, SynthParams, MIN_PERSON_HEIGHT};
use hotcold::detector::{DetectorConfig, DetectorKind, ToyParams};
use hotcold::evaluation::EvalConfig;
use hotcold::grid::GenomeCodec;
use hotcold::objective::LossConfig;
use hotcold::optimizer::{GenomeTemplate, OptimizeOptions, PsoParams};
use hotcold::{Error, Result};
use serde::Deserialize;

use crate::args::{CommonArgs, DetectorChoice, SearchArgs};

pub const DETECTOR_CMD_ENV: &str = "SSP_DETECTOR_CMD";

pub const DEFAULT_M: usize = 4;
pub const DEFAULT_L: f64 = 0.12;
pub const DEFAULT_LAMBDA: f64 = 3.0;
pub const DEFAULT_PIXEL_VALUE: f64 = 0.2;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_SEED: u64 = 0;

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    pub detector: Option<String>,
    pub detector_cmd: Option<String>,
    pub pool_size: Option<usize>,
    pub score_threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
    pub min_person_height: Option<f64>,
    pub m: Option<usize>,
    pub l: Option<f64>,
    pub lambda: Option<f64>,
    pub pixel_value: Option<f64>,
    pub pop: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub batch_size: Option<usize>,
    pub position_grid: Option<usize>,
    pub toy: Option<ToyParams>,
    pub pso: Option<PsoParams>,
    pub synth: Option<SynthParams>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Argument(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub common: CommonArgs,
    pub file: FileConfig,
}

/// Resolved search settings for one attack.
#[derive(Debug, Clone)]
pub struct Search {
    pub loss: LossConfig,
    pub options: OptimizeOptions,
    pub epochs: usize,
    pub seed: u64,
    pub pixel_value: f64,
}

impl Search {
    pub fn template(&self, m: usize, l: f64) -> Result<GenomeTemplate> {
        GenomeCodec::new(m, l, self.pixel_value)?.with_position_grid(self.options.position_grid)?;
        Ok(GenomeTemplate {
            m,
            l,
            pixel_value: self.pixel_value,
        })
    }
}

impl Settings {
    pub fn new(common: CommonArgs) -> Result<Self> {
        let file = match &common.config {
            Some(path) => FileConfig::read(path)?,
            None => FileConfig::default(),
        };
        Ok(Self { common, file })
    }

    pub fn jobs(&self) -> Option<usize> {
        self.common.jobs.or(self.file.jobs)
    }

    pub fn detector(&self) -> Result<DetectorConfig> {
        let kind = match (self.common.detector, self.file.detector.as_deref()) {
            (Some(DetectorChoice::Toy), _) => DetectorKind::Toy,
            (Some(DetectorChoice::External), _) => DetectorKind::External,
            (None, None | Some("toy")) => DetectorKind::Toy,
            (None, Some("external")) => DetectorKind::External,
            (None, Some(other)) => {
                return Err(Error::Argument(format!(
                    "unknown detector `{other}` (expected toy or external)"
                )))
            }
        };
        let defaults = DetectorConfig::default();
        let cfg = DetectorConfig {
            kind,
            score_threshold: self
                .common
                .score_threshold
                .or(self.file.score_threshold)
                .unwrap_or(defaults.score_threshold),
            iou_threshold: self
                .common
                .iou_threshold
                .or(self.file.iou_threshold)
                .unwrap_or(defaults.iou_threshold),
            command: self
                .common
                .detector_cmd
                .clone()
                .or_else(|| self.file.detector_cmd.clone())
                .or_else(|| std::env::var(DETECTOR_CMD_ENV).ok().filter(|c| !c.is_empty())),
            pool_size: self
                .common
                .pool_size
                .or(self.file.pool_size)
                .unwrap_or(defaults.pool_size),
            toy: self.file.toy.clone().unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        let d = self.detector()?;
        Ok(EvalConfig {
            score_threshold: d.score_threshold,
            iou_threshold: d.iou_threshold,
        })
    }

    pub fn min_person_height(&self) -> Result<f64> {
        let h = self
            .common
            .min_person_height
            .or(self.file.min_person_height)
            .unwrap_or(MIN_PERSON_HEIGHT);
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!(
                "minimum person height {h} must be non-negative"
            )));
        }
        Ok(h)
    }

    pub fn m(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.m).unwrap_or(DEFAULT_M)
    }

    pub fn l(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.l).unwrap_or(DEFAULT_L)
    }

    pub fn pixel_value(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.pixel_value).unwrap_or(DEFAULT_PIXEL_VALUE)
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn synth(&self) -> SynthParams {
        self.file.synth.clone().unwrap_or_default()
    }

    pub fn search(&self, a: &SearchArgs) -> Result<Search> {
        let epochs = a.epochs.or(self.file.epochs).unwrap_or(DEFAULT_EPOCHS);
        if epochs == 0 {
            return Err(Error::Argument("--epochs must be at least 1".into()));
        }
        let mut pso = self.file.pso.clone().unwrap_or_default();
        if let Some(pop) = a.pop.or(self.file.pop) {
            pso.swarm_size = pop;
        }
        pso.validate()?;
        let loss = LossConfig {
            lambda: a.lambda.or(self.file.lambda).unwrap_or(DEFAULT_LAMBDA),
            iou_threshold: self.detector()?.iou_threshold,
            batch_size: a.batch_size.or(self.file.batch_size),
        };
        loss.validate()?;
        let pixel_value = self.pixel_value(a.pixel_value);
        if !(0.0..=1.0).contains(&pixel_value) {
            return Err(Error::Argument(format!("pixel value {pixel_value} outside [0, 1]")));
        }
        Ok(Search {
            loss,
            options: OptimizeOptions {
                pso,
                position_grid: a.position_grid.or(self.file.position_grid),
            },
            epochs,
            seed: self.seed(a.seed),
            pixel_value,
        })
    }

    /// Loads a manifest and refuses splits with nothing left to attack.
    pub fn load(&self, manifest: &Path) -> Result<Vec<AnnotatedScene>> {
        let split = load_split(manifest, self.min_person_height()?)?;
        if split.scenes.is_empty() {
            return Err(Error::Load {
                entry: manifest.display().to_string(),
                reason: format!(
                    "no scene has a person taller than {} px ({} scenes dropped)",
                    self.min_person_height()?,
                    split.stats.dropped_scenes
                ),
            });
        }
        Ok(split.scenes)
    }
}
