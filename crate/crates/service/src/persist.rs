//! On-disk model state.
//!
//! A state is a JSON manifest at the configured path plus two binary
//! matrices in a sibling `<stem>.blobs/` directory, each named by the
//! SHA-256 of its bytes. Matrix files start with a 16-byte header:
//!
//! | bytes | field |
//! |---|---|
//! | 0..4 | magic, `TLF4` (f32 values) or `TLF8` (f64 values) |
//! | 4..8 | format version, u32 little endian |
//! | 8..12 | rows, u32 little endian |
//! | 12..16 | columns, u32 little endian |
//!
//! followed by the values, row-major, little endian. Every file is written to
//! a temporary name, synced, then renamed into place, matrices first and the
//! manifest last, so an interrupted save leaves the previous manifest and
//! everything it references intact.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use topiclens_core::corpus::{ingest_corpus, TokenizerConfig};
use topiclens_core::embedding::EmbeddingMatrix;
use topiclens_core::points::Points;
use topiclens_core::reduction::ReducerModel;
use topiclens_core::topicstore::{StateParts, TopicModelState};

pub const SCHEMA_VERSION: u32 = 1;
const MATRIX_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const MAGIC_F32: &[u8; 4] = b"TLF4";
const MAGIC_F64: &[u8; 4] = b"TLF8";
/// Bytes written per write call.
const CHUNK: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt state file {path} at byte {offset}: {reason}")]
    CorruptState {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("state schema version {found} cannot be read by a version {expected} reader")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("injected crash at save step {step}")]
    InjectedCrash { step: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, offset: u64, reason: impl Into<String>) -> PersistError {
    PersistError::CorruptState {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

/// Counts save steps and fails the chosen one, to simulate a crash.
#[derive(Debug, Clone, Default)]
pub struct CrashPlan {
    crash_at: Option<usize>,
    steps: usize,
}

impl CrashPlan {
    pub fn never() -> Self {
        Self::default()
    }

    pub fn at(step: usize) -> Self {
        Self {
            crash_at: Some(step),
            steps: 0,
        }
    }

    /// Steps reached so far; after an uninterrupted save, the total.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn step(&mut self) -> Result<(), PersistError> {
        let i = self.steps;
        self.steps += 1;
        if self.crash_at == Some(i) {
            Err(PersistError::InjectedCrash { step: i })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobRef {
    file: String,
    sha256: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusRecord {
    tokenizer: TokenizerConfig,
    texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    embedding_model: String,
    corpus: CorpusRecord,
    embeddings: BlobRef,
    reduced: BlobRef,
    reducer: ReducerModel,
    model: StateParts,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// A loaded state and the embedding model it was built with.
#[derive(Debug, Clone)]
pub struct LoadedState {
    pub state: TopicModelState,
    pub embedding_model: String,
}

pub fn blob_dir(state_path: &Path) -> PathBuf {
    state_path.with_extension("blobs")
}

fn matrix_bytes(
    magic: &[u8; 4],
    rows: usize,
    cols: usize,
    values: impl Iterator<Item = [u8; 8]>,
    width: usize,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * width);
    out.extend_from_slice(magic);
    out.extend_from_slice(&MATRIX_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v[..width]);
    }
    out
}

pub fn embeddings_bytes(m: &EmbeddingMatrix) -> Vec<u8> {
    let values = m.as_slice().iter().map(|x| {
        let mut b = [0u8; 8];
        b[..4].copy_from_slice(&x.to_le_bytes());
        b
    });
    matrix_bytes(MAGIC_F32, m.rows(), m.dim(), values, 4)
}

pub fn points_bytes(p: &Points) -> Vec<u8> {
    matrix_bytes(
        MAGIC_F64,
        p.rows(),
        p.dim(),
        p.as_slice().iter().map(|x| x.to_le_bytes()),
        8,
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Header fields after checking magic, version and length.
fn read_header(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 4],
    width: usize,
) -> Result<(usize, usize), PersistError> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(
            path,
            bytes.len() as u64,
            format!("header needs {HEADER_LEN} bytes"),
        ));
    }
    if &bytes[0..4] != magic {
        return Err(corrupt(
            path,
            0,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    if word(4) != MATRIX_FORMAT_VERSION as usize {
        return Err(corrupt(
            path,
            4,
            format!("unsupported matrix format {}", word(4)),
        ));
    }
    let (rows, cols) = (word(8), word(12));
    let expected = HEADER_LEN + rows * cols * width;
    if bytes.len() != expected {
        return Err(corrupt(
            path,
            bytes.len().min(expected) as u64,
            format!(
                "expected {expected} bytes for a {rows}x{cols} matrix, found {}",
                bytes.len()
            ),
        ));
    }
    Ok((rows, cols))
}

pub fn parse_embeddings(path: &Path, bytes: &[u8]) -> Result<EmbeddingMatrix, PersistError> {
    let (rows, cols) = read_header(path, bytes, MAGIC_F32, 4)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    EmbeddingMatrix::from_raw(rows, cols, data)
        .map_err(|e| corrupt(path, HEADER_LEN as u64, e.to_string()))
}

pub fn parse_points(path: &Path, bytes: &[u8]) -> Result<Points, PersistError> {
    let (rows, cols) = read_header(path, bytes, MAGIC_F64, 8)?;
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(corrupt(
            path,
            (HEADER_LEN + 8 * i) as u64,
            "non-finite value",
        ));
    }
    Ok(Points::new(rows, cols, data))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

/// Writes to a temporary sibling, syncs, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8], plan: &mut CrashPlan) -> Result<(), PersistError> {
    let tmp = temp_path(path);
    plan.step()?;
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    for chunk in bytes.chunks(CHUNK) {
        plan.step()?;
        f.write_all(chunk).map_err(io_err(&tmp))?;
    }
    plan.step()?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    plan.step()?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent() {
        sync_dir(dir);
    }
    Ok(())
}

struct Encoded {
    manifest: Vec<u8>,
    blobs: Vec<(String, Vec<u8>)>,
}

fn encode(state: &TopicModelState, embedding_model: &str) -> Encoded {
    let emb = embeddings_bytes(state.embeddings());
    let red = points_bytes(state.reduced());
    let blob = |bytes: &[u8], ext: &str, rows, cols| BlobRef {
        file: format!("{}.{ext}", sha256_hex(bytes)),
        sha256: sha256_hex(bytes),
        rows,
        cols,
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        embedding_model: embedding_model.to_string(),
        corpus: CorpusRecord {
            tokenizer: state.corpus().tokenizer().clone(),
            texts: state.corpus().texts().map(str::to_string).collect(),
        },
        embeddings: blob(
            &emb,
            "f32",
            state.embeddings().rows(),
            state.embeddings().dim(),
        ),
        reduced: blob(&red, "f64", state.reduced().rows(), state.reduced().dim()),
        reducer: state.reducer().as_ref().clone(),
        model: state.to_parts(),
    };
    let value = serde_json::to_value(&manifest).expect("manifest serializes");
    let mut json = serde_json::to_vec_pretty(&value).expect("manifest serializes");
    json.push(b'\n');
    Encoded {
        blobs: vec![
            (manifest.embeddings.file, emb),
            (manifest.reduced.file, red),
        ],
        manifest: json,
    }
}

/// The manifest bytes a save would write: keys sorted, pretty-printed.
pub fn canonical_json(state: &TopicModelState, embedding_model: &str) -> Vec<u8> {
    encode(state, embedding_model).manifest
}

pub fn save_state(
    state: &TopicModelState,
    embedding_model: &str,
    path: &Path,
) -> Result<(), PersistError> {
    save_state_with(state, embedding_model, path, &mut CrashPlan::never())
}

/// [`save_state`] with a crash plan; see [`CrashPlan`].
pub fn save_state_with(
    state: &TopicModelState,
    embedding_model: &str,
    path: &Path,
    plan: &mut CrashPlan,
) -> Result<(), PersistError> {
    let encoded = encode(state, embedding_model);
    let dir = blob_dir(path);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, bytes) in &encoded.blobs {
        let target = dir.join(name);
        if target.is_file() && fs::read(&target).is_ok_and(|b| &b == bytes) {
            continue;
        }
        write_atomic(&target, bytes, plan)?;
    }
    write_atomic(path, &encoded.manifest, plan)?;
    plan.step()?;
    let keep: Vec<&str> = encoded.blobs.iter().map(|(n, _)| n.as_str()).collect();
    if let Ok(entries) = fs::read_dir(&dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !keep.contains(&name.as_str()) {
                let _ = fs::remove_file(entry.path());
            }
        }
    }
    tracing::info!(path = %path.display(), version = state.version(), "state saved");
    Ok(())
}

/// Byte offset of a JSON error's line and column.
fn json_offset(bytes: &[u8], e: &serde_json::Error) -> u64 {
    if e.line() == 0 {
        return 0;
    }
    let mut line = 1;
    for (i, &b) in bytes.iter().enumerate() {
        if line == e.line() {
            return (i + e.column().saturating_sub(1)).min(bytes.len()) as u64;
        }
        if b == b'\n' {
            line += 1;
        }
    }
    bytes.len() as u64
}

pub fn load_state(path: &Path) -> Result<LoadedState, PersistError> {
    load_state_with_schema(path, SCHEMA_VERSION)
}

/// Loads a state as a reader of schema version `reader_version` would.
pub fn load_state_with_schema(
    path: &Path,
    reader_version: u32,
) -> Result<LoadedState, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let probe: VersionProbe = serde_json::from_slice(&bytes)
        .map_err(|e| corrupt(path, json_offset(&bytes, &e), e.to_string()))?;
    if probe.schema_version != reader_version {
        return Err(PersistError::SchemaVersionMismatch {
            found: probe.schema_version,
            expected: reader_version,
        });
    }
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| corrupt(path, json_offset(&bytes, &e), e.to_string()))?;

    let dir = blob_dir(path);
    let read_blob = |r: &BlobRef| -> Result<(PathBuf, Vec<u8>), PersistError> {
        if r.file.contains(['/', '\\']) || r.file.starts_with('.') {
            return Err(corrupt(path, 0, format!("invalid blob name {:?}", r.file)));
        }
        let p = dir.join(&r.file);
        let b = fs::read(&p).map_err(io_err(&p))?;
        Ok((p, b))
    };
    let (ep, eb) = read_blob(&m.embeddings)?;
    let embeddings = parse_embeddings(&ep, &eb)?;
    if sha256_hex(&eb) != m.embeddings.sha256 {
        return Err(corrupt(&ep, 0, "content hash does not match the manifest"));
    }
    let (rp, rb) = read_blob(&m.reduced)?;
    let reduced = parse_points(&rp, &rb)?;
    if sha256_hex(&rb) != m.reduced.sha256 {
        return Err(corrupt(&rp, 0, "content hash does not match the manifest"));
    }
    let shapes = [
        (embeddings.rows(), embeddings.dim(), &m.embeddings),
        (reduced.rows(), reduced.dim(), &m.reduced),
    ];
    for (rows, cols, r) in shapes {
        if (rows, cols) != (r.rows, r.cols) {
            return Err(corrupt(
                path,
                0,
                format!(
                    "{} has shape {rows}x{cols}, manifest says {}x{}",
                    r.file, r.rows, r.cols
                ),
            ));
        }
    }

    let corpus = ingest_corpus(&m.corpus.texts, m.corpus.tokenizer)
        .map_err(|e| corrupt(path, 0, format!("corpus: {e}")))?;
    let embeddings = Arc::new(embeddings);
    let mut reducer = m.reducer;
    reducer.bind_training_inputs(embeddings.clone());
    let state = TopicModelState::from_parts(
        Arc::new(corpus),
        embeddings,
        Arc::new(reduced),
        Arc::new(reducer),
        m.model,
    )
    .map_err(|e| corrupt(path, 0, e.to_string()))?;
    Ok(LoadedState {
        state,
        embedding_model: m.embedding_model,
    })
}
