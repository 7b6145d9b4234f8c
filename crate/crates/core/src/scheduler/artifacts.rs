//! On-disk store of accepted candidates:
//! `artifacts/<operator>/<run_id>.src` plus a `<run_id>.json` sidecar.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::write_atomic;
use crate::fsm::sanitize_component;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub operator: String,
    pub run_id: String,
    pub catalog_fingerprint: String,
    pub source_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls_to_success: Option<u32>,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct StoredArtifact {
    pub meta: ArtifactMeta,
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, operator: &str) -> PathBuf {
        self.root.join(sanitize_component(operator))
    }

    pub fn save(&self, meta: &ArtifactMeta, source: &str) -> anyhow::Result<PathBuf> {
        let dir = self.dir(&meta.operator);
        let run = sanitize_component(&meta.run_id);
        let src = dir.join(format!("{run}.src"));
        write_atomic(&src, source.as_bytes()).with_context(|| format!("writing {}", src.display()))?;
        let mut sidecar = serde_json::to_string_pretty(meta)?;
        sidecar.push('\n');
        write_atomic(&dir.join(format!("{run}.json")), sidecar.as_bytes())?;
        Ok(src)
    }

    pub fn load(&self, operator: &str, run_id: &str) -> anyhow::Result<StoredArtifact> {
        let dir = self.dir(operator);
        let run = sanitize_component(run_id);
        let src_path = dir.join(format!("{run}.src"));
        let source = std::fs::read_to_string(&src_path).with_context(|| format!("reading {}", src_path.display()))?;
        let meta_path = dir.join(format!("{run}.json"));
        let meta: ArtifactMeta = serde_json::from_str(
            &std::fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
        )
        .with_context(|| format!("parsing {}", meta_path.display()))?;
        anyhow::ensure!(
            meta.source_sha256 == sha256_hex(&source),
            "{} does not match the hash in its sidecar",
            src_path.display()
        );
        Ok(StoredArtifact { meta, source })
    }

    /// Run ids stored for `operator`, sorted.
    pub fn runs(&self, operator: &str) -> Vec<String> {
        let Ok(entries) = std::fs::read_dir(self.dir(operator)) else {
            return vec![];
        };
        let mut runs: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".src").map(str::to_string)
            })
            .collect();
        runs.sort();
        runs
    }

    /// The stored candidate that needed the fewest calls, ties broken by run
    /// id. Used to seed refinement sessions.
    pub fn best(&self, operator: &str) -> Option<StoredArtifact> {
        self.runs(operator)
            .iter()
            .filter_map(|r| match self.load(operator, r) {
                Ok(a) => Some(a),
                Err(e) => {
                    tracing::warn!(operator, run = %r, error = %e, "skipping unreadable artifact");
                    None
                }
            })
            .min_by_key(|a| (a.meta.calls_to_success.unwrap_or(u32::MAX), a.meta.run_id.clone()))
    }
}
