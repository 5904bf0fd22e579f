use std::path::{Path, PathBuf};

use feasicap_core::recording::{compute_stats, read_episode, Episode, EpisodeFormat, FeasibilityStats};
use serde::{Deserialize, Serialize};

use crate::TransportError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: String,
    pub file: String,
    pub format: String,
    pub bytes: u64,
}

/// Finished episodes in a directory, one file each, named by id. In-progress recordings are
/// dot-files and never listed.
#[derive(Debug, Clone)]
pub struct EpisodeStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl EpisodeStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(EpisodeStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn list(&self) -> Result<Vec<EpisodeSummary>, TransportError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let entry = entry?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some((id, ext)) = name.rsplit_once('.') else { continue };
            if !valid_id(id) || !matches!(ext, "mcap" | "ndjson") || !path.is_file() {
                continue;
            }
            out.push(EpisodeSummary { id: id.to_string(), file: name.clone(), format: ext.to_string(), bytes: entry.metadata()?.len() });
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn path(&self, id: &str) -> Option<PathBuf> {
        if !valid_id(id) {
            return None;
        }
        [EpisodeFormat::Mcap, EpisodeFormat::Ndjson]
            .into_iter()
            .map(|f| self.dir.join(format!("{id}.{}", f.extension())))
            .find(|p| p.is_file())
    }

    pub fn read(&self, id: &str) -> Result<Option<Episode>, TransportError> {
        let Some(path) = self.path(id) else { return Ok(None) };
        read_episode(&path).map(Some).map_err(|e| TransportError::Episode(e.to_string()))
    }

    pub fn stats(&self, id: &str) -> Result<Option<FeasibilityStats>, TransportError> {
        match self.read(id)? {
            Some(ep) => compute_stats(&ep).map(Some).map_err(|e| TransportError::Episode(e.to_string())),
            None => Ok(None),
        }
    }
}
