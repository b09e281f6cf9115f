use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Shortest form that still round-trips: 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), float)
}

/// Text artifact with the run's metadata in `#` comment lines.
pub struct Artifact {
    path: PathBuf,
    body: String,
}

impl Artifact {
    pub fn new(dir: &Path, name: &str, header: &Header) -> Self {
        let mut body = String::new();
        header.write(&mut body, name);
        Self { path: dir.join(name), body }
    }

    pub fn line(&mut self, line: impl AsRef<str>) {
        self.body.push_str(line.as_ref());
        self.body.push('\n');
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.body.push(',');
            }
            first = false;
            self.body.push_str(c.as_ref());
        }
        self.body.push('\n');
    }

    pub fn save(self) -> io::Result<PathBuf> {
        fs::write(&self.path, self.body)?;
        Ok(self.path)
    }
}

#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    fn write(&self, out: &mut String, name: &str) {
        let _ = writeln!(out, "# disorder {} -> {name}", self.command);
        let _ = writeln!(out, "# config-hash: {}", self.config_hash);
        let _ = writeln!(out, "# seed: {}", self.seed);
    }
}
