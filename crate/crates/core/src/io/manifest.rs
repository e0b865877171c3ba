use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::pnm::{load_image, load_mask};
use crate::par::map_range;
use crate::train::Sample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub fov: Option<PathBuf>,
    /// 1-based line in the manifest file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Parses tab-separated `image<TAB>mask[<TAB>fov]` lines. Relative paths are
/// resolved against `base`; blank lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, base: &Path, path: &Path) -> Result<DatasetManifest> {
    let err = |line, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&cols.len()) {
            return Err(err(line, format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        if let Some(k) = cols.iter().position(|c| c.is_empty()) {
            return Err(err(line, format!("column {} is empty", k + 1)));
        }
        let resolve = |c: &str| base.join(c);
        entries.push(ManifestEntry {
            image: resolve(cols[0]),
            mask: resolve(cols[1]),
            fov: cols.get(2).map(|c| resolve(c)),
            line,
        });
    }
    Ok(DatasetManifest {
        path: path.to_path_buf(),
        entries,
    })
}

/// Reads and parses a manifest and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let manifest = parse_manifest(&text, base, path)?;
    for e in &manifest.entries {
        for f in [Some(&e.image), Some(&e.mask), e.fov.as_ref()].into_iter().flatten() {
            if !f.is_file() {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    line: e.line,
                    message: format!("file not found: {}", f.display()),
                });
            }
        }
    }
    Ok(manifest)
}

/// Decodes every entry, in parallel where enabled, keeping manifest order.
pub fn load_samples(manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    map_range(manifest.entries.len(), |i| {
        let e = &manifest.entries[i];
        let image = load_image(&e.image)?;
        let mask = load_mask(&e.mask)?;
        let fov = e.fov.as_ref().map(load_mask).transpose()?;
        Sample::new(image, mask, fov, &e.image)
    })
    .into_iter()
    .collect()
}
