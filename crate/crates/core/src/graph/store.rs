//! On-disk store: a directory holding a versioned header and three
//! line-delimited JSON files.
//!
//! ```text
//! <store>/header.json    {"format":"qedb-store","version":1,"files":[{"name","sha256","lines"}...]}
//! <store>/nodes.jsonl    span and entity nodes
//! <store>/edges.jsonl    one question edge per line, sorted by record id
//! <store>/mentions.jsonl entity-to-span mentions
//! ```
//!
//! Indexes are not stored; they are rebuilt on load.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EntityNode, Mention, QedbGraph, QuestionEdge, SpanNode};

pub const STORE_FORMAT: &str = "qedb-store";
pub const STORE_VERSION: u32 = 1;

const HEADER: &str = "header.json";
const NODES: &str = "nodes.jsonl";
const EDGES: &str = "edges.jsonl";
const MENTIONS: &str = "mentions.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: not a store ({reason})", path.display())]
    NotAStore { path: PathBuf, reason: String },
    #[error("store version {found} is newer than supported version {supported}")]
    NewerVersion { found: u32, supported: u32 },
    #[error("unsupported store version {found} (expected {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("{file}: checksum mismatch")]
    Checksum { file: String },
    #[error("{file}: line {line}: {message}")]
    Corrupt {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{}: refusing to replace a non-empty directory that is not a store", path.display())]
    Occupied { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    name: String,
    sha256: String,
    lines: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    files: Vec<FileEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum NodeLine {
    Span(SpanNode),
    Entity(EntityNode),
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> (Vec<u8>, usize) {
    let mut buf = Vec::new();
    let mut lines = 0;
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("graph parts serialize");
        buf.push(b'\n');
        lines += 1;
    }
    (buf, lines)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialized store files in canonical order, header last.
fn render(graph: &QedbGraph) -> Vec<(&'static str, Vec<u8>)> {
    let nodes = graph
        .spans
        .values()
        .cloned()
        .map(NodeLine::Span)
        .chain(graph.entities.values().cloned().map(NodeLine::Entity));
    let files = [
        (NODES, to_jsonl(nodes)),
        (EDGES, to_jsonl(&graph.edges)),
        (MENTIONS, to_jsonl(&graph.mentions)),
    ];
    let header = Header {
        format: STORE_FORMAT.into(),
        version: STORE_VERSION,
        files: files
            .iter()
            .map(|(name, (bytes, lines))| FileEntry {
                name: (*name).into(),
                sha256: sha256_hex(bytes),
                lines: *lines,
            })
            .collect(),
    };
    let mut header_bytes = serde_json::to_vec_pretty(&header).expect("header serializes");
    header_bytes.push(b'\n');
    let mut out: Vec<_> = files.into_iter().map(|(n, (b, _))| (n, b)).collect();
    out.push((HEADER, header_bytes));
    out
}

/// Writes `graph` to the directory `path`.
///
/// Files are written to a temporary sibling directory which is renamed into
/// place, so a failed save leaves no partial store. An existing store at
/// `path` is replaced.
pub fn save_store(graph: &QedbGraph, path: &Path) -> Result<(), StoreError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    if path.exists() {
        let is_store = path.join(HEADER).is_file();
        let is_empty = fs::read_dir(path)
            .map_err(io_err(path))?
            .next()
            .is_none();
        if !is_store && !is_empty {
            return Err(StoreError::Occupied {
                path: path.to_path_buf(),
            });
        }
    }
    let staging = tempfile::Builder::new()
        .prefix(".qedb-store-")
        .tempdir_in(&parent)
        .map_err(io_err(&parent))?;
    for (name, bytes) in render(graph) {
        let file = staging.path().join(name);
        fs::write(&file, bytes).map_err(io_err(&file))?;
    }
    if path.exists() {
        fs::remove_dir_all(path).map_err(io_err(path))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, path).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        io_err(path)(e)
    })
}

fn parse_lines<T: for<'de> Deserialize<'de>>(file: &str, bytes: &[u8]) -> Result<Vec<T>, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StoreError::Corrupt {
        file: file.into(),
        line: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                file: file.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads a store written by [`save_store`], verifying version and checksums.
pub fn load_store(path: &Path) -> Result<QedbGraph, StoreError> {
    let header_path = path.join(HEADER);
    if !header_path.is_file() {
        return Err(StoreError::NotAStore {
            path: path.to_path_buf(),
            reason: format!("missing {HEADER}"),
        });
    }
    let raw = fs::read(&header_path).map_err(io_err(&header_path))?;
    let header: Header = serde_json::from_slice(&raw).map_err(|e| StoreError::Corrupt {
        file: HEADER.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if header.format != STORE_FORMAT {
        return Err(StoreError::NotAStore {
            path: path.to_path_buf(),
            reason: format!("format {:?}", header.format),
        });
    }
    if header.version > STORE_VERSION {
        return Err(StoreError::NewerVersion {
            found: header.version,
            supported: STORE_VERSION,
        });
    }
    if header.version != STORE_VERSION {
        return Err(StoreError::UnsupportedVersion {
            found: header.version,
            supported: STORE_VERSION,
        });
    }

    let mut contents = BTreeMap::new();
    for name in [NODES, EDGES, MENTIONS] {
        let entry = header
            .files
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| StoreError::Corrupt {
                file: HEADER.into(),
                line: 0,
                message: format!("no entry for {name}"),
            })?;
        let file = path.join(name);
        let bytes = fs::read(&file).map_err(io_err(&file))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(StoreError::Checksum { file: name.into() });
        }
        contents.insert(name, bytes);
    }

    let mut spans = BTreeMap::new();
    let mut entities = BTreeMap::new();
    for node in parse_lines::<NodeLine>(NODES, &contents[NODES])? {
        match node {
            NodeLine::Span(n) => {
                spans.insert(n.key.clone(), n);
            }
            NodeLine::Entity(n) => {
                entities.insert(n.entity_id.clone(), n);
            }
        }
    }
    let edges: Vec<QuestionEdge> = parse_lines(EDGES, &contents[EDGES])?;
    let mentions: Vec<Mention> = parse_lines(MENTIONS, &contents[MENTIONS])?;

    for (i, edge) in edges.iter().enumerate() {
        if let Some(missing) = std::iter::once(&edge.target)
            .chain(edge.sources())
            .find(|k| !spans.contains_key(*k))
        {
            return Err(StoreError::Corrupt {
                file: EDGES.into(),
                line: i + 1,
                message: format!("edge endpoint {missing:?} is not a node"),
            });
        }
    }
    for (i, m) in mentions.iter().enumerate() {
        if !spans.contains_key(&m.span) || !entities.contains_key(&m.entity_id) {
            return Err(StoreError::Corrupt {
                file: MENTIONS.into(),
                line: i + 1,
                message: format!("mention of {} has a dangling endpoint", m.entity_id),
            });
        }
    }
    Ok(QedbGraph::from_parts(spans, entities, edges, mentions))
}
