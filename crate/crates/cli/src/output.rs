//! Atomic CSV and JSON writers.

use std::io::Write;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use anyhow::Context;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# wvn <version> config=<sha256>`
pub fn header(config_hash: &str) -> String {
    format!("# wvn {VERSION} config={config_hash}")
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".wvn-")
        .permissions(std::fs::Permissions::from_mode(0o644))
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(config_hash: &str, columns: &str) -> Self {
        Self {
            buf: format!("{}\n{columns}\n", header(config_hash)),
        }
    }

    /// Floats use the shortest representation that parses back exactly.
    pub fn row<I, D>(&mut self, fields: I)
    where
        I: IntoIterator<Item = D>,
        D: std::fmt::Display,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            self.buf.push_str(&f.to_string());
        }
        self.buf.push('\n');
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

pub fn save_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Parses a CSV written by [`Csv`], skipping the header and column lines.
pub fn read_csv(path: &Path) -> anyhow::Result<(String, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default().to_string();
    lines.next();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|f| f.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((head, rows))
}
