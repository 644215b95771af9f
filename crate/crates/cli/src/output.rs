//! Atomic CSV/JSON artifacts.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

/// Real number with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table whose first line is `# <config json>`.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new<C: Serialize>(config: &C, header: &[&str]) -> Result<Self, serde_json::Error> {
        let mut body = String::new();
        let _ = writeln!(body, "# {}", serde_json::to_string(config)?);
        let _ = writeln!(body, "{}", header.join(","));
        Ok(Csv { body })
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.body, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.body
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, renamed into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&serde_json::json!({"a": 1}), &["x", "y"]).unwrap();
        c.row(&["1".into(), real(0.5)]);
        assert_eq!(c.into_string(), "# {\"a\":1}\nx,y\n1,5.0000000000000000e-1\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
