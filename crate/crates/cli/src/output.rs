use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Class, ClassExt, CliResult};

/// Writes through a temp file in the same directory, then renames it over
/// `path`, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).class_ctx(Class::Internal, format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).class_ctx(Class::Internal, "creating temp file")?;
    tmp.write_all(bytes).class_ctx(Class::Internal, format!("writing {}", path.display()))?;
    tmp.as_file().sync_all().class(Class::Internal)?;
    tmp.persist(path).map_err(|e| e.error).class_ctx(Class::Internal, format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).class(Class::Internal)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serializes `rows` as CSV with the given header.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).class(Class::Internal)?;
    for r in rows {
        w.serialize(r).class(Class::Internal)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}")).class(Class::Internal)?;
    write_atomic(path, &bytes)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).class_ctx(Class::Input, format!("reading {}", path.display()))
}
