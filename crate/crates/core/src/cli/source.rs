//! The single randomness source of a CLI run.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::SourceSpec;
use super::CliError;
use crate::qrngclient::{obtain_bytes, Transport};
use crate::randsource::{ByteStreamSource, RandomSource, SeededGenerator, SourceError};

/// Provenance written to `metadata.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceInfo {
    pub tag: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_consumed: Option<usize>,
}

#[derive(Debug)]
pub enum RunSource {
    Seeded(SeededGenerator),
    Bytes {
        stream: ByteStreamSource,
        sha256: String,
    },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunSource {
    pub fn from_bytes(bytes: Vec<u8>, label: impl Into<String>) -> Self {
        let sha256 = sha256_hex(&bytes);
        RunSource::Bytes {
            stream: ByteStreamSource::with_label(bytes, label),
            sha256,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::Config(format!("cannot read quantum byte file {}: {e}", path.display()))
        })?;
        Ok(Self::from_bytes(bytes, path.display().to_string()))
    }

    /// Builds the source a config names, fetching remote bytes if needed.
    pub fn open(spec: &SourceSpec, transport: &mut dyn Transport) -> Result<Self, CliError> {
        match spec {
            SourceSpec::Seed(seed) => Ok(RunSource::Seeded(SeededGenerator::new(*seed))),
            SourceSpec::Qbytes(path) => Self::from_file(path),
            SourceSpec::Remote(r) => {
                let bytes = obtain_bytes(transport, &r.endpoint, r.count, Some(&r.cache), r.offline)?;
                Ok(Self::from_bytes(bytes, r.cache.display().to_string()))
            }
        }
    }

    /// Parses `seed:N` or `qbytes:FILE`.
    pub fn parse(text: &str) -> Result<SourceSpec, CliError> {
        if let Some(seed) = text.strip_prefix("seed:") {
            super::parse_seed(seed).map(SourceSpec::Seed).map_err(CliError::Config)
        } else if let Some(path) = text.strip_prefix("qbytes:") {
            Ok(SourceSpec::Qbytes(path.into()))
        } else {
            Err(CliError::Config(format!(
                "source {text:?} must be seed:N or qbytes:FILE"
            )))
        }
    }

    pub fn sha256(&self) -> Option<&str> {
        match self {
            RunSource::Seeded(_) => None,
            RunSource::Bytes { sha256, .. } => Some(sha256),
        }
    }

    pub fn info(&self) -> SourceInfo {
        match self {
            RunSource::Seeded(g) => SourceInfo {
                tag: g.tag(),
                sha256: None,
                bytes_consumed: None,
            },
            RunSource::Bytes { stream, sha256 } => SourceInfo {
                tag: stream.tag(),
                sha256: Some(sha256.clone()),
                bytes_consumed: Some(stream.cursor()),
            },
        }
    }
}

impl RandomSource for RunSource {
    fn next_word(&mut self) -> Result<u64, SourceError> {
        match self {
            RunSource::Seeded(g) => g.next_word(),
            RunSource::Bytes { stream, .. } => stream.next_word(),
        }
    }

    fn tag(&self) -> String {
        match self {
            RunSource::Seeded(g) => g.tag(),
            RunSource::Bytes { stream, .. } => stream.tag(),
        }
    }
}
