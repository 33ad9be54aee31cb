//! Dataset directories: one PGM per sample plus a `labels.csv` index.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beckman::pipeline::LabeledDataset;

use crate::csvio;
use crate::pnm;

pub fn save(dir: &Path, dataset: &LabeledDataset) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let name = format!("img_{i:05}.pgm");
        pnm::write_image(&dir.join(&name), dataset.image(i))?;
        entries.push((name, dataset.label(i)));
    }
    csvio::write_labels(&dir.join("labels.csv"), &entries)
}

pub fn load(dir: &Path) -> Result<LabeledDataset> {
    let entries = csvio::read_labels(&dir.join("labels.csv"))?;
    if entries.is_empty() {
        bail!("{}: labels.csv lists no samples", dir.display());
    }
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for (name, label) in entries {
        images.push(pnm::read_image(&dir.join(&name))?);
        labels.push(label);
    }
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(LabeledDataset::new(images, labels, class_count.max(2))?)
}
