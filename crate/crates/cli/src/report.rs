use std::path::{Path, PathBuf};

use crate::CliError;

/// Files produced by one verb. CSV files and the summary start with a
/// `#` line carrying the verb, config hash and seed.
#[derive(Debug)]
pub struct Report {
    header: String,
    files: Vec<(String, String)>,
    summary: Vec<String>,
}

impl Report {
    pub fn new(verb: &str, config_sha256: &str, seed: u64) -> Self {
        Self {
            header: format!("# twoway {verb} config_sha256={config_sha256} seed={seed}\n"),
            files: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn csv(&mut self, name: &str, body: &str) {
        self.files.push((name.into(), format!("{}{body}", self.header)));
    }

    /// A file written as is, such as JSON.
    pub fn raw(&mut self, name: &str, body: String) {
        self.files.push((name.into(), body));
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    /// Writes every file plus `summary.txt` into `dir` and returns the
    /// summary text.
    pub fn write(mut self, dir: &Path) -> Result<String, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut text = self.header.clone();
        for l in &self.summary {
            text.push_str(l);
            text.push('\n');
        }
        self.files.push(("summary.txt".into(), text.clone()));
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        let listing: Vec<PathBuf> = self.files.iter().map(|(n, _)| dir.join(n)).collect();
        for p in listing {
            text.push_str(&format!("wrote {}\n", p.display()));
        }
        Ok(text)
    }
}
