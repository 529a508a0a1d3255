//! Content digests and the run manifest written before training starts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedround_core::ingest::{
    load_idx, to_dataset, MNIST_CLASSES, MNIST_FILES, MNIST_TEST_COUNT, MNIST_TRAIN_COUNT,
};
use fedround_core::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetKind, RunConfig};
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|source| {
        CliError::Data(fedround_core::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    Ok(FileDigest {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::output(&tmp, e))?;
    f.write_all(contents)
        .and_then(|_| f.sync_all())
        .map_err(|e| CliError::output(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::output(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e.into()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub name: String,
    pub items: usize,
    pub dims: Vec<usize>,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataManifest {
    pub files: Vec<DataFile>,
}

/// Checks the four MNIST files in `dir` (magic numbers, counts, label
/// range) and digests them.
pub fn inspect_mnist(dir: &Path) -> Result<DataManifest> {
    let mut files = Vec::new();
    let mut tensors = Vec::new();
    for (i, name) in MNIST_FILES.iter().enumerate() {
        let path = dir.join(name);
        let t = load_idx(&path).map_err(CliError::Data)?;
        let expected = if i < 2 {
            MNIST_TRAIN_COUNT
        } else {
            MNIST_TEST_COUNT
        };
        if t.count() != expected {
            return Err(CliError::Data(fedround_core::Error::Format {
                path,
                msg: format!("expected {expected} items, found {}", t.count()),
            }));
        }
        let digest = digest_file(&path)?;
        files.push(DataFile {
            name: name.to_string(),
            items: t.count(),
            dims: t.dims.clone(),
            bytes: digest.bytes,
            sha256: digest.sha256,
        });
        tensors.push(t);
    }
    for pair in tensors.chunks(2) {
        to_dataset::<f32>(&pair[0], &pair[1], MNIST_CLASSES).map_err(CliError::Data)?;
    }
    Ok(DataManifest { files })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub partition: u64,
    pub bootstrap: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<u64>,
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub seeds: Seeds,
}

impl RunManifest {
    pub fn new(
        cfg: &RunConfig,
        experiment: Option<ExperimentConfig>,
        data_dir: &Path,
        outputs: &[&str],
    ) -> Result<Self> {
        let (data_dir, inputs) = match cfg.dataset {
            DatasetKind::Mnist => (
                Some(data_dir.to_path_buf()),
                MNIST_FILES
                    .iter()
                    .map(|f| digest_file(&data_dir.join(f)))
                    .collect::<Result<_>>()?,
            ),
            DatasetKind::Synth => (None, Vec::new()),
        };
        Ok(Self {
            name: cfg.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: cfg.clone(),
            experiment,
            data_dir,
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            seeds: Seeds {
                master: cfg.seed,
                partition: cfg.partition_seed,
                bootstrap: cfg.bootstrap_seed,
                synthetic: (cfg.dataset == DatasetKind::Synth).then_some(cfg.synth_seed),
            },
        })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
