//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use polysign::domain::{DomainSpec, GridDomain, GridFunction};
use polysign::experiments::{trial_source, Bump, BumpSource, ExperimentConfig, ExperimentKind, MIN_TRIALS};
use polysign::green::SandwichOptions;
use polysign::pipeline::{GreenStorage, PipelineOptions};
use polysign::{Error, Result};
use serde::Deserialize;

fn default_exponent() -> f64 {
    2.0
}

fn default_trials() -> usize {
    MIN_TRIALS
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Option<DomainSpec>,
    pub m: Option<usize>,
    /// Overrides `domain.cells`.
    pub cells: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub storage: GreenStorage,
    /// Exclusion radius for the sandwich ratios, in multiples of `h`.
    pub exclusion_radius: Option<f64>,
    pub c2_floor: Option<f64>,
    /// Replaces the estimated correction constant in `decompose`.
    pub c2_used: Option<f64>,
    pub source: Option<SourceSpec>,
    pub experiment: Option<ExperimentBlock>,
    #[serde(default)]
    pub verify: VerifyBlock,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    Constant { value: f64 },
    Bumps { bumps: Vec<Bump> },
    /// Seeded random bump source, drawn like the experiment trials.
    Random {
        #[serde(default)]
        trial: usize,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: ExperimentKind,
    #[serde(default = "default_exponent")]
    pub p_plus: f64,
    #[serde(default = "default_exponent")]
    pub p_minus: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub q_cap: Option<f64>,
    #[serde(default)]
    pub refine: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default)]
    pub corrupt_c2_used: bool,
    /// Subset of checks `1..=12`; all thirteen when absent.
    pub checks: Option<Vec<u32>>,
    /// Run the suite a second time for the determinism check.
    #[serde(default = "default_true")]
    pub repeat: bool,
}

impl RunConfig {
    pub fn empty() -> Self {
        serde_json::from_str("{}").expect("empty config")
    }

    /// Reads a config; it is validated once command line overrides are applied.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(spec) = self.domain_spec_opt() {
            spec.validate()?;
        }
        if let Some(r) = self.exclusion_radius {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::Configuration(format!("exclusion_radius must be a finite multiple of h >= 0, got {r}")));
            }
        }
        for (name, v) in [("c2_floor", self.c2_floor), ("c2_used", self.c2_used)] {
            if let Some(c) = v {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Configuration(format!("{name} must be finite and >= 0, got {c}")));
                }
            }
        }
        if let Some(e) = &self.experiment {
            for (name, p) in [("p_plus", e.p_plus), ("p_minus", e.p_minus)] {
                if !(p > 1.0 && p.is_finite()) {
                    return Err(Error::Configuration(format!("{name} must lie in (1, ∞), got {p}")));
                }
            }
            if e.trials > 0 && self.seed.is_none() {
                return Err(Error::Configuration("experiment trials need a master seed".into()));
            }
        }
        if matches!(self.source, Some(SourceSpec::Random { .. })) && self.seed.is_none() {
            return Err(Error::Configuration("a random source needs a seed".into()));
        }
        if let Some(ids) = &self.verify.checks {
            if let Some(bad) = ids.iter().find(|&&id| !(1..=12).contains(&id)) {
                return Err(Error::Configuration(format!("verify checks are numbered 1 to 12, got {bad}")));
            }
        }
        Ok(())
    }

    fn domain_spec_opt(&self) -> Option<DomainSpec> {
        let spec = self.domain.clone()?;
        Some(match self.cells {
            Some(c) => spec.with_cells(c),
            None => spec,
        })
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        self.domain_spec_opt().ok_or_else(|| Error::Configuration("missing `domain`".into()))
    }

    pub fn order(&self) -> Result<usize> {
        self.m.ok_or_else(|| Error::Configuration("missing `m`".into()))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, cells: Option<usize>, out: Option<PathBuf>) -> Result<()> {
        if seed.is_some() {
            self.seed = seed;
        }
        if cells.is_some() {
            self.cells = cells;
        }
        if out.is_some() {
            self.out = out;
        }
        self.validate()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn pipeline_options(&self, storage: GreenStorage, h: f64) -> PipelineOptions {
        PipelineOptions {
            storage,
            sandwich: SandwichOptions {
                exclusion_radius: self.exclusion_radius.map(|k| k * h),
                c2_floor: self.c2_floor.unwrap_or(0.0),
            },
        }
    }

    pub fn source(&self, domain: &Arc<GridDomain>) -> Result<GridFunction> {
        let spec = self
            .source
            .as_ref()
            .ok_or_else(|| Error::Configuration("missing `source`".into()))?;
        Ok(match spec {
            SourceSpec::Zero => GridFunction::zeros(domain.clone()),
            SourceSpec::Constant { value } => GridFunction::constant(domain.clone(), *value),
            SourceSpec::Bumps { bumps } => BumpSource { bumps: bumps.clone() }.sample(domain),
            SourceSpec::Random { trial } => {
                let seed = self.seed.ok_or_else(|| Error::Configuration("a random source needs a seed".into()))?;
                trial_source(domain, seed, *trial).sample(domain)
            }
        })
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let block = self
            .experiment
            .as_ref()
            .ok_or_else(|| Error::Configuration("missing `experiment`".into()))?;
        let seed = self.seed.ok_or_else(|| Error::Configuration("experiment trials need a master seed".into()))?;
        let mut config = ExperimentConfig::new(block.kind, self.domain_spec()?, self.order()?, seed);
        config.p_plus = block.p_plus;
        config.p_minus = block.p_minus;
        config.trials = block.trials;
        config.q_cap = block.q_cap;
        config.refine = block.refine;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let c = RunConfig::parse(
            r#"{"domain": {"shape": "rectangle", "lx": 5, "ly": 1, "cells": 40}, "m": 2, "seed": 7,
                "cells": 80, "exclusion_radius": 3, "source": {"kind": "random", "trial": 2},
                "experiment": {"kind": "theorem1_plus", "refine": true}}"#,
        )
        .unwrap();
        assert_eq!(c.domain_spec().unwrap(), DomainSpec::rectangle(5.0, 1.0, 80));
        let e = c.experiment_config().unwrap();
        assert_eq!((e.trials, e.p_plus, e.seed, e.refine), (20, 2.0, 7, true));
        assert_eq!(c.pipeline_options(GreenStorage::Dense, 0.5).sandwich.exclusion_radius, Some(1.5));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "{",
            r#"{"unknown": 1}"#,
            r#"{"domain": {"shape": "disk", "radius": 1, "cells": 2}}"#,
            r#"{"domain": {"shape": "disk", "radius": 1, "cells": 16}, "m": 1, "experiment": {"kind": "hls_lemma"}}"#,
            r#"{"seed": 1, "experiment": {"kind": "hls_lemma", "p_plus": 1.0}}"#,
            r#"{"source": {"kind": "random"}}"#,
            r#"{"verify": {"checks": [13]}}"#,
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Configuration(_) | Error::Validation(_))), "{text}");
        }
    }
}
