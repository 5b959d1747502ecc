use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use structcov::io::{hstack, write_pgm};

/// Writes `path` through a sibling temp file that is renamed into place
/// once `body` succeeds.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Draws a 1-D signal as a white polyline on black, `height` rows tall,
/// with `[lo, hi]` spanning the full height.
pub fn plot_signal(values: &[f64], lo: f64, hi: f64, height: usize) -> Vec<f64> {
    let w = values.len();
    let mut img = vec![-1.0; w * height];
    let span = if hi > lo { hi - lo } else { 1.0 };
    let row = |v: f64| {
        let t = ((hi - v) / span).clamp(0.0, 1.0) * (height - 1) as f64;
        t.round() as usize
    };
    for (c, &v) in values.iter().enumerate() {
        let r = row(v);
        let prev = if c > 0 { row(values[c - 1]) } else { r };
        for rr in r.min(prev)..=r.max(prev) {
            img[rr * w + c] = 1.0;
        }
    }
    img
}

/// Renders equally sized panels side by side into one PGM file.
pub fn write_panels(path: &Path, width: usize, height: usize, panels: &[&[f64]]) -> Result<()> {
    let pixels = hstack(width, height, panels);
    write_atomic(path, |w| Ok(write_pgm(w, width * panels.len(), height, &pixels)?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}
