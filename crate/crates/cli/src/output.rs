use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use tempfile::NamedTempFile;

/// Writes `path` through a temporary file in the same directory, renamed into
/// place only after `fill` succeeds. A failed write leaves no file behind.
pub fn write_atomic<E>(path: &Path, fill: impl FnOnce(&mut BufWriter<&File>) -> Result<(), E>) -> Result<(), String>
where
    E: std::fmt::Display,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        w.flush()
            .map_err(|e: io::Error| format!("cannot write {}: {e}", path.display()))?;
    }
    tmp.persist(path)
        .map_err(|e| format!("cannot write {}: {}", path.display(), e.error))?;
    Ok(())
}
