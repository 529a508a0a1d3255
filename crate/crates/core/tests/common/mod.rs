#![allow(dead_code)]

use std::path::PathBuf;

use fedround_core::ingest::{load_mnist, Mnist, MNIST_FILES};

/// `FEDROUND_DATA_DIR`, falling back to `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("FEDROUND_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist() -> Option<Mnist> {
    let dir = mnist_dir();
    if !MNIST_FILES.iter().all(|f| dir.join(f).is_file()) {
        eprintln!("MNIST not found under {}; skipping", dir.display());
        return None;
    }
    Some(load_mnist(&dir).expect("MNIST files present but unreadable"))
}
