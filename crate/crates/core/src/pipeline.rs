//! Operator, Green kernel, weight and kernel estimate for one domain and order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_operator, torsion_with, DiscreteOperator, WeightFunction};
use crate::domain::{build_domain, DomainSpec, GridDomain, GridFunction};
use crate::error::Result;
use crate::green::{estimate_sandwich_constants, green_matrix, GreenColumns, KernelEstimate, SandwichOptions, StreamingGreen};
use crate::signed::{apply_h, decompose_unchecked, signed_decompose, SignedSolution};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenStorage {
    /// Dense matrix, limited to [`crate::green::DENSE_CAP`] points.
    Dense,
    /// Columns solved on demand; kernel scans use the symmetric subset.
    #[default]
    Streaming,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineOptions {
    pub storage: GreenStorage,
    pub sandwich: SandwichOptions,
}

pub struct Pipeline {
    pub domain: Arc<GridDomain>,
    pub m: usize,
    pub operator: Arc<DiscreteOperator>,
    pub green: Arc<dyn GreenColumns + Send>,
    pub weight: WeightFunction,
    pub estimate: KernelEstimate,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("domain", &self.domain.spec().label())
            .field("m", &self.m)
            .field("estimate", &self.estimate)
            .finish()
    }
}

impl Pipeline {
    pub fn build(spec: &DomainSpec, m: usize, options: &PipelineOptions) -> Result<Self> {
        let domain = build_domain(spec)?;
        let operator = Arc::new(assemble_operator(&domain, m)?);
        let laplacian = if m == 1 { operator.clone() } else { Arc::new(assemble_operator(&domain, 1)?) };
        let weight = WeightFunction::from_torsion(torsion_with(&laplacian)?, m)?;
        let green: Arc<dyn GreenColumns + Send> = match options.storage {
            GreenStorage::Dense => Arc::new(green_matrix(&operator)?),
            GreenStorage::Streaming => Arc::new(StreamingGreen::new(operator.clone())),
        };
        let estimate = estimate_sandwich_constants(green.as_ref(), &weight, &options.sandwich)?;
        Ok(Self {
            domain,
            m,
            operator,
            green,
            weight,
            estimate,
        })
    }

    pub fn cells(&self) -> usize {
        self.domain.spec().cells
    }

    pub fn apply_h(&self, f: &GridFunction) -> Result<GridFunction> {
        apply_h(self.green.as_ref(), &self.estimate, &self.weight, f)
    }

    pub fn decompose(&self, f: &GridFunction) -> Result<SignedSolution> {
        signed_decompose(&self.operator, self.green.as_ref(), &self.estimate, &self.weight, f)
    }

    /// Decomposition with a replaced correction constant, without invariant checks.
    pub fn decompose_with_c2(&self, f: &GridFunction, c2_used: f64) -> Result<SignedSolution> {
        let est = self.estimate.with_c2_used(c2_used);
        decompose_unchecked(&self.operator, self.green.as_ref(), &est, &self.weight, f)
    }
}
