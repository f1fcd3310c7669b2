//! Input discovery and all-or-nothing output handling.

use std::fs;
use std::path::{Path, PathBuf};

use scenaug::ingest::{parse_scenario, parse_scenario_lines, LabeledDataset};
use scenaug::{Error, Result, Scenario};

/// One scenario document and where it came from (`file` or `file:line`).
pub struct Document {
    pub source: String,
    pub text: String,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Files making up a scenario input: the path itself, or the `.json` and
/// `.jsonl` files of a directory in name order.
fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json" || e == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits an input into raw documents without parsing them.
pub fn documents(path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for file in input_files(path)? {
        let text = read_text(&file)?;
        if is_jsonl(&file) {
            for (n, line) in text.lines().enumerate() {
                if !line.trim().is_empty() {
                    docs.push(Document {
                        source: format!("{}:{}", file.display(), n + 1),
                        text: line.to_string(),
                    });
                }
            }
        } else {
            docs.push(Document {
                source: file.display().to_string(),
                text,
            });
        }
    }
    Ok(docs)
}

/// Parses and validates every scenario of an input.
pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for file in input_files(path)? {
        let text = read_text(&file)?;
        if is_jsonl(&file) {
            out.extend(parse_scenario_lines(&text)?);
        } else {
            out.push(parse_scenario(text.as_bytes())?);
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::from_jsonl(&read_text(path)?)
}

/// Class ids in scenario order; every scenario must be labeled.
pub fn aligned_labels(scenarios: &[Scenario], labels: &LabeledDataset) -> Result<Vec<usize>> {
    let by_id: std::collections::HashMap<&str, usize> =
        labels.entries.iter().map(|e| (e.scenario_id.as_str(), e.class_id)).collect();
    scenarios
        .iter()
        .map(|s| {
            by_id
                .get(s.id.as_str())
                .copied()
                .ok_or_else(|| Error::Argument(format!("scenario `{}` has no label", s.id)))
        })
        .collect()
}

/// File-name-safe form of a scenario id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Outputs written so far. Each file is written to a temporary sibling and
/// renamed into place; [`Outputs::rollback`] removes everything a failed
/// command produced.
#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    kept: Vec<PathBuf>,
}

impl Outputs {
    /// Creates `dir` (and parents) if missing; created directories are
    /// removed on rollback.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.dir(parent)?;
        }
        let name = path
            .file_name()
            .ok_or_else(|| Error::Argument(format!("`{}` is not a file path", path.display())))?;
        let tmp = path.with_file_name(format!(".{}.partial", name.to_string_lossy()));
        let result = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path));
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(Error::io(path, e));
        }
        self.files.push(path.to_path_buf());
        Ok(())
    }

    /// Registers a file moved into place by the caller.
    pub fn adopt(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Marks a written file as surviving rollback (diagnostic reports).
    pub fn keep(&mut self, path: &Path) {
        self.kept.push(path.to_path_buf());
    }

    pub fn rollback(self) {
        for f in &self.files {
            if !self.kept.contains(f) {
                let _ = fs::remove_file(f);
            }
        }
        for d in self.dirs.iter().rev() {
            if !self.kept.iter().any(|k| k.starts_with(d)) {
                let _ = fs::remove_dir_all(d);
            }
        }
    }
}
