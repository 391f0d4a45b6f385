//! `generate-data`: build (or ingest) the dataset file a config describes.

use std::path::Path;

use anyhow::{Context, Result};

use id_distill_core::data::{
    apply_variant, generate_dsprites, ingest_image_folder, load_dataset, save_dataset,
    DatasetHandle, VariantKind,
};

use crate::config::ExperimentConfig;

/// Build the dataset described by `cfg.dataset` in memory.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<DatasetHandle> {
    match cfg.dataset.source.as_str() {
        "dsprites" => {
            let space = cfg.dataset.factor_space()?;
            let plain = generate_dsprites(&space, cfg.dataset.resolution)
                .map_err(|e| anyhow::anyhow!("generating sprites: {e}"))?;
            let variant = cfg.dataset.variant_config()?;
            if variant.kind == VariantKind::Plain {
                Ok(plain)
            } else {
                apply_variant(&plain, variant).map_err(|e| anyhow::anyhow!("variant: {e}"))
            }
        }
        "folder" => {
            let folder = cfg.dataset.folder.as_ref().expect("validated");
            let (dataset, skipped) = ingest_image_folder(Path::new(folder), cfg.dataset.resolution)
                .map_err(|e| anyhow::anyhow!("ingesting {folder}: {e}"))?;
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} unreadable files in {folder}");
            }
            Ok(dataset)
        }
        other => anyhow::bail!("dataset.source: unknown source `{other}`"),
    }
}

/// Write the dataset file and print its shape; a rerun with the same config
/// produces a byte-identical file.
pub fn cmd_generate_data(cfg: &ExperimentConfig, out_root: &Path) -> Result<std::path::PathBuf> {
    let dataset = build_dataset(cfg)?;
    let path = cfg.dataset.resolve_file(out_root);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_dataset(&dataset, &path)
        .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    println!(
        "wrote {}: {} images, {}x{}, variant {}",
        path.display(),
        dataset.len(),
        dataset.resolution(),
        dataset.resolution(),
        cfg.dataset.variant
    );
    Ok(path)
}

/// Load the dataset file, generating it first if it does not exist yet.
pub fn load_or_generate(cfg: &ExperimentConfig, out_root: &Path) -> Result<DatasetHandle> {
    let path = cfg.dataset.resolve_file(out_root);
    if !path.exists() {
        cmd_generate_data(cfg, out_root)?;
    }
    load_dataset(&path).with_context(|| format!("loading dataset {}", path.display()))
}
