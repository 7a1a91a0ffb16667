//! Attack-then-evaluate cells used by parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselineSpec};
use crate::dataset::AnnotatedScene;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Attack, EvalConfig, EvalReport};
use crate::grid::Genome;
use crate::objective::LossConfig;
use crate::optimizer::{optimize, GenomeTemplate, OptimizeOptions, OptimizeResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "HCB")]
    HotCold,
    R,
    MR,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::HotCold => "HCB",
            Method::R => "R",
            Method::MR => "MR",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HCB" => Ok(Method::HotCold),
            "R" => Ok(Method::R),
            "MR" => Ok(Method::MR),
            _ => Err(Error::Argument(format!("unknown method `{s}` (expected HCB, R or MR)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub report: EvalReport,
    /// Present for optimized attacks.
    pub optimized: Option<OptimizeResult>,
}

impl AttackOutcome {
    pub fn genome(&self) -> Option<&Genome> {
        self.optimized.as_ref().map(|o| &o.genome)
    }
}

pub struct CellSetup<'a> {
    pub train: &'a [AnnotatedScene],
    pub test: &'a [AnnotatedScene],
    pub detector: &'a dyn Detector,
    pub template: GenomeTemplate,
    pub loss: LossConfig,
    pub options: OptimizeOptions,
    pub epochs: usize,
    pub eval: EvalConfig,
}

/// Optimizes on the training scenes (HCB) or samples random blocks (R, MR),
/// then evaluates on the test scenes.
pub fn run_cell(setup: &CellSetup<'_>, method: Method, seed: u64) -> Result<AttackOutcome> {
    let t = setup.template;
    match method {
        Method::HotCold => {
            let result = optimize(
                setup.train,
                t,
                setup.epochs,
                &setup.loss,
                setup.detector,
                seed,
                &setup.options,
            )?;
            let report = evaluate(
                setup.test,
                setup.detector,
                Attack::Universal(&result.genome),
                &setup.eval,
            )?;
            Ok(AttackOutcome {
                report,
                optimized: Some(result),
            })
        }
        Method::R | Method::MR => {
            let spec = BaselineSpec {
                kind: if method == Method::R {
                    BaselineKind::Random
                } else {
                    BaselineKind::ManualRandom
                },
                m: t.m,
                l: t.l,
                pixel_value: t.pixel_value,
                seed,
            };
            let report = evaluate(setup.test, setup.detector, Attack::Baseline(&spec), &setup.eval)?;
            Ok(AttackOutcome {
                report,
                optimized: None,
            })
        }
    }
}
