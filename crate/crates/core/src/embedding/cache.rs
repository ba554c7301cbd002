//! Embedding cache keyed by `(model_name, content_hash)`.
//!
//! The optional on-disk form is append-only JSON lines, one record per vector:
//!
//! ```text
//! {"hash":"<sha256 hex of the text>","model":"<model name>","vector":[f64, ...]}
//! ```
//!
//! A record that fails to parse (typically a torn trailing write) and
//! everything after it is truncated away when the file is opened.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::EmbeddingError;

#[derive(Serialize, Deserialize)]
struct Record {
    hash: String,
    model: String,
    vector: Vec<f64>,
}

type Key = (String, String);

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<Key, Arc<Vec<f64>>>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let io = |e: std::io::Error| EmbeddingError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let mut good_len: u64 = 0;
            let mut truncated = false;
            for line in reader.split(b'\n') {
                let line = line.map_err(io)?;
                match serde_json::from_slice::<Record>(&line) {
                    Ok(rec) => {
                        good_len += line.len() as u64 + 1;
                        entries.insert((rec.model, rec.hash), Arc::new(rec.vector));
                    }
                    Err(_) if line.iter().all(u8::is_ascii_whitespace) => {
                        good_len += line.len() as u64 + 1;
                    }
                    Err(_) => {
                        truncated = true;
                        break;
                    }
                }
            }
            let actual = std::fs::metadata(path).map_err(io)?.len();
            if truncated {
                tracing::warn!(
                    path = %path.display(),
                    keep = good_len,
                    "truncating corrupt embedding cache tail"
                );
                OpenOptions::new()
                    .write(true)
                    .open(path)
                    .and_then(|f| f.set_len(good_len))
                    .map_err(io)?;
            } else if good_len > actual {
                // last record is complete but lacks its newline
                OpenOptions::new()
                    .append(true)
                    .open(path)
                    .and_then(|mut f| f.write_all(b"\n"))
                    .map_err(io)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model: &str, hash: &str) -> Option<Arc<Vec<f64>>> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(model.to_string(), hash.to_string()))
            .cloned()
    }

    pub fn insert(&self, model: &str, hash: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        let key = (model.to_string(), hash.to_string());
        let mut entries = self.entries.write().expect("cache lock poisoned");
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let rec = Record {
                hash: hash.to_string(),
                model: model.to_string(),
                vector,
            };
            let mut line =
                serde_json::to_vec(&rec).map_err(|e| EmbeddingError::Cache(e.to_string()))?;
            line.push(b'\n');
            file.lock()
                .expect("cache file lock poisoned")
                .write_all(&line)
                .map_err(|e| EmbeddingError::Cache(e.to_string()))?;
            entries.insert(key, Arc::new(rec.vector));
        } else {
            entries.insert(key, Arc::new(vector));
        }
        Ok(())
    }
}
