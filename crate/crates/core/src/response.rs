//! The reply returned for every handled prompt, and its route contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::Diagnosis;
use crate::router::RoutePath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub chunk_id: String,
    pub source_doc: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub route: RoutePath,
    pub text: String,
    pub diagnosis: Option<Diagnosis>,
    pub provenance: Vec<Provenance>,
    pub disclaimer_included: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractViolation {
    #[error("expert_diagnosis response without a diagnosis")]
    DiagnosisMissing,
    #[error("expert_diagnosis response without its disclaimer")]
    DisclaimerMissing,
    #[error("expert_knowledge response without provenance")]
    ProvenanceMissing,
    #[error("fallback response carries provenance")]
    FallbackWithProvenance,
    #[error("fallback response carries a diagnosis")]
    FallbackWithDiagnosis,
}

impl AgentResponse {
    /// Checks the per-route field invariants.
    pub fn validate(&self) -> Result<(), ContractViolation> {
        match self.route {
            RoutePath::ExpertDiagnosis => {
                let diagnosis = self.diagnosis.as_ref().ok_or(ContractViolation::DiagnosisMissing)?;
                if !self.disclaimer_included
                    || diagnosis.disclaimer.trim().is_empty()
                    || !self.text.contains(&diagnosis.disclaimer)
                {
                    return Err(ContractViolation::DisclaimerMissing);
                }
            }
            RoutePath::ExpertKnowledge => {
                if self.provenance.is_empty() {
                    return Err(ContractViolation::ProvenanceMissing);
                }
            }
            RoutePath::Fallback => {
                if !self.provenance.is_empty() {
                    return Err(ContractViolation::FallbackWithProvenance);
                }
                if self.diagnosis.is_some() {
                    return Err(ContractViolation::FallbackWithDiagnosis);
                }
            }
        }
        Ok(())
    }
}
