//! Plain-text dataset manifest.
//!
//! One `key = value` per line; `#` starts a comment line. Recognized keys:
//!
//! ```text
//! name     = snli-contiguous
//! corpus   = SNLI
//! scheme   = contiguous_pairs
//! model    = bert-base-cased
//! records  = part-000.pjr        # repeatable, relative to the manifest
//! param.top_k = 1024             # free-form extraction parameters
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::records::{read_record_file, read_records, DecodeReport, Validation};
use crate::types::{PairRecord, Scheme};

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub corpus: String,
    pub scheme: Scheme,
    pub model: String,
    /// As written, relative to `base_dir`.
    pub record_files: Vec<PathBuf>,
    pub params: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Manifest> {
        let err = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut name = None;
        let mut corpus = None;
        let mut scheme = None;
        let mut model = None;
        let mut record_files = Vec::new();
        let mut params = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected 'key = value', got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            match key {
                "name" => name = Some(value),
                "corpus" => corpus = Some(value),
                "model" => model = Some(value),
                "scheme" => {
                    scheme = Some(value.parse::<Scheme>().map_err(|e| err(line_no, e.to_string()))?)
                }
                "records" => record_files.push(PathBuf::from(value)),
                _ => match key.strip_prefix("param.") {
                    Some(p) if !p.is_empty() => {
                        params.insert(p.to_string(), value);
                    }
                    _ => return Err(err(line_no, format!("unknown key {key:?}"))),
                },
            }
        }
        let missing = |k: &str| err(0, format!("missing required key {k:?}"));
        Ok(Manifest {
            name: name.ok_or_else(|| missing("name"))?,
            corpus: corpus.ok_or_else(|| missing("corpus"))?,
            scheme: scheme.ok_or_else(|| missing("scheme"))?,
            model: model.ok_or_else(|| missing("model"))?,
            record_files,
            params,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text, path)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# pairjoint dataset manifest\n");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "corpus = {}", self.corpus);
        let _ = writeln!(s, "scheme = {}", self.scheme);
        let _ = writeln!(s, "model = {}", self.model);
        for f in &self.record_files {
            let _ = writeln!(s, "records = {}", f.display());
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn record_paths(&self) -> Vec<PathBuf> {
        self.record_files
            .iter()
            .map(|f| self.base_dir.join(f))
            .collect()
    }

    /// Checks that every referenced file exists and parses.
    pub fn validate(&self) -> Result<()> {
        for p in self.record_paths() {
            read_record_file(&p)?;
        }
        Ok(())
    }

    /// All records of all files, in manifest order.
    pub fn load_records(&self, validation: Validation) -> Result<(Vec<PairRecord>, DecodeReport)> {
        let mut all = Vec::new();
        let mut report = DecodeReport::default();
        for p in self.record_paths() {
            let (mut records, r) = read_records(&p, validation)?;
            all.append(&mut records);
            report.rows_renormalized += r.rows_renormalized;
            report.floored_entries += r.floored_entries;
        }
        Ok((all, report))
    }
}
