//! Writing report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Output directory; files are created on demand.
pub struct Outputs {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

/// Floats are written in Rust's shortest round-trip form so repeated runs
/// produce identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

impl Outputs {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// `prefix1, …, prefixm`.
pub fn numbered(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|k| format!("{prefix}{k}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0, 1e-300, 123456.789, -2.5e17] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(&dir.path().join("nested")).unwrap();
        out.csv("a.csv", &header(&["t", "v"]), vec![vec![num(1.0), num(2.0)]])
            .unwrap();
        out.json("a.json", &vec![1, 2]).unwrap();
        let text = fs::read_to_string(dir.path().join("nested/a.csv")).unwrap();
        assert_eq!(text, "t,v\n1.0,2.0\n");
        assert_eq!(out.written.len(), 2);
    }
}
