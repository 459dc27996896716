//! Versioned plan artifacts: the conflict product and amalgamated policy,
//! serialized together with a hash of the inputs they were planned from, so
//! the expensive pipeline runs once per configuration and the executor can
//! refuse to run a stale artifact against changed inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::planner::{AmalgamatedPolicy, ConflictProduct};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact version {found} is not supported (expected {ARTIFACT_VERSION})")]
    BadVersion { found: u32 },
    #[error("artifact is not valid JSON: {0}")]
    Malformed(String),
    #[error("artifact input hash {artifact} does not match current inputs {current}; re-plan")]
    HashMismatch { artifact: String, current: String },
}

/// SHA-256 over length-prefixed parts, hex-encoded. Length prefixes keep
/// concatenations unambiguous (["ab","c"] hashes differently from ["a","bc"]).
pub fn input_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(u64::to_le_bytes(p.len() as u64));
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Everything the executor needs, reloadable without replanning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanArtifact {
    pub version: u32,
    pub input_hash: String,
    pub product: ConflictProduct,
    pub policy: AmalgamatedPolicy,
}

impl PlanArtifact {
    pub fn new(input_hash: String, product: ConflictProduct, policy: AmalgamatedPolicy) -> Self {
        PlanArtifact { version: ARTIFACT_VERSION, input_hash, product, policy }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan artifact serializes")
    }

    /// Parses, checks the version, and rebuilds the product's state index
    /// (which is not serialized).
    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let mut a: PlanArtifact =
            serde_json::from_str(text).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
        if a.version != ARTIFACT_VERSION {
            return Err(ArtifactError::BadVersion { found: a.version });
        }
        a.product.rebuild_index();
        Ok(a)
    }

    pub fn check_hash(&self, current: &str) -> Result<(), ArtifactError> {
        if self.input_hash != current {
            return Err(ArtifactError::HashMismatch {
                artifact: self.input_hash.clone(),
                current: current.to_string(),
            });
        }
        Ok(())
    }
}
