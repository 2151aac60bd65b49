//! Image manifest loading: one JSON object per line, `{id, path, width,
//! height}`. Relative pixel paths resolve against the manifest's directory,
//! so a dataset directory stays relocatable.

use anyhow::{bail, Context, Result};
use pictext::model::ImageRef;
use serde::Deserialize;
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRow {
    id: String,
    path: String,
    width: u32,
    height: u32,
}

/// Ids name cache files, so they must be safe as file names on their own.
fn filename_safe(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub fn load_manifest(path: &Path) -> Result<Vec<ImageRef>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut images = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let place = format!("{}:{}", path.display(), index + 1);
        let row: ManifestRow =
            serde_json::from_str(line).with_context(|| format!("{place}: bad manifest row"))?;
        if !filename_safe(&row.id) {
            bail!("{place}: id {:?} is not filename-safe", row.id);
        }
        if !seen.insert(row.id.clone()) {
            bail!("{place}: duplicate id {:?}", row.id);
        }
        let is_url = row.path.starts_with("http://") || row.path.starts_with("https://");
        let pixel_source = if is_url || Path::new(&row.path).is_absolute() {
            row.path
        } else {
            base.join(&row.path).display().to_string()
        };
        images.push(
            ImageRef::new(row.id, row.width, row.height, pixel_source)
                .with_context(|| format!("{place}: invalid image"))?,
        );
    }
    if images.is_empty() {
        bail!("manifest {} lists no images", path.display());
    }
    Ok(images)
}
