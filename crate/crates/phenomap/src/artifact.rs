//! Versioned on-disk container for a fitted pipeline.
//!
//! Layout: 8-byte magic `PHENOMAP`, format version (u32 LE), payload length
//! (u64 LE), SHA-256 of the payload (32 bytes), bincode payload.

use std::io::{Read, Write};
use std::path::Path;

use phenomap_core::dataset::{Preprocessor, SplitPlan, Table};
use phenomap_core::gmm::{MixtureModel, Partition};
use phenomap_core::phenotype::{ClusterProfile, PhenotypeSummary};
use phenomap_core::stability::{Reducer, SweepConfig, SweepGrid, SweepReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::schema::SchemaConfig;

pub const MAGIC: &[u8; 8] = b"PHENOMAP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

/// One leave-one-fold-out model of the selected configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub fold: usize,
    pub preprocessor: Preprocessor,
    pub reducer: Reducer,
    pub mixture: MixtureModel,
    /// Source rows (indices into the ingested table) the fold was trained on.
    pub training_rows: Vec<usize>,
    pub train_coords: Vec<[f64; 2]>,
    pub train_labels: Vec<u32>,
    pub train_truth: Option<Vec<u32>>,
    pub test_coords: Vec<[f64; 2]>,
    pub test_partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub config: SweepConfig,
    pub primary_fold: usize,
    pub folds: Vec<FoldModel>,
    /// Per fold, profiles of that fold's non-null clusters on the test set.
    pub profiles: Vec<Vec<ClusterProfile>>,
    pub summary: PhenotypeSummary,
}

impl SelectedModel {
    pub fn primary(&self) -> &FoldModel {
        &self.folds[self.primary_fold]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineArtifact {
    pub tool_version: String,
    pub seed: u64,
    /// False when the layout used unsynchronised parallel updates.
    pub deterministic: bool,
    pub schema: SchemaConfig,
    pub split: SplitPlan,
    pub grid: SweepGrid,
    pub report: SweepReport,
    /// The shared test rows, in the order used by every fold-model.
    pub test_table: Table,
    pub test_rows: Vec<usize>,
    pub test_truth: Option<Vec<u32>>,
    pub test_outcome: Option<Vec<Option<bool>>>,
    /// `None` marks a sweep with no stable clustering.
    pub model: Option<SelectedModel>,
}

impl PipelineArtifact {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = bincode::serialize(self).map_err(|e| PipelineError::Artifact(e.to_string()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&payload));
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| PipelineError::Artifact(m.to_owned());
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a phenomap artifact"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(PipelineError::Artifact(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != len {
            return Err(PipelineError::Artifact(format!(
                "payload is {} bytes, header says {len}",
                payload.len()
            )));
        }
        if Sha256::digest(payload).as_slice() != &bytes[20..52] {
            return Err(bad("checksum mismatch"));
        }
        bincode::deserialize(payload).map_err(|e| PipelineError::Artifact(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| PipelineError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| PipelineError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn require_model(&self) -> Result<&SelectedModel> {
        self.model.as_ref().ok_or(PipelineError::NoStableClustering)
    }
}
