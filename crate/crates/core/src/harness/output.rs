use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Schema version written into every CSV header comment.
pub const SCHEMA_VERSION: u32 = 1;

/// Seed and configuration digest stamped on every output row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

/// Render rows as CSV preceded by `# olrx <schema> v<N> seed=<s> config=<h>`.
pub fn render_csv<T: Serialize>(schema: &str, prov: &Provenance, rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "# olrx {schema} v{SCHEMA_VERSION} seed={} config={}",
        prov.seed, prov.config_hash
    )?;
    let mut w = csv::Writer::from_writer(buf);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidState(format!("csv: {other:?}")),
    }
}

pub fn write_csv<T: Serialize>(
    path: &Path,
    schema: &str,
    prov: &Provenance,
    rows: &[T],
) -> Result<PathBuf> {
    std::fs::write(path, render_csv(schema, prov, rows)?)?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidState(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        seed: u64,
        x: f64,
        y: Option<f64>,
        flag: bool,
    }

    #[test]
    fn header_and_rows() {
        let prov = Provenance {
            seed: 3,
            config_hash: "abc".into(),
        };
        let rows = [
            Row {
                seed: 3,
                x: 0.1,
                y: None,
                flag: true,
            },
            Row {
                seed: 3,
                x: 2.5e-7,
                y: Some(1.0),
                flag: false,
            },
        ];
        let text = String::from_utf8(render_csv("demo", &prov, &rows).unwrap()).unwrap();
        assert_eq!(
            text,
            "# olrx demo v1 seed=3 config=abc\nseed,x,y,flag\n3,0.1,,true\n3,2.5e-7,1.0,false\n"
        );
    }
}
