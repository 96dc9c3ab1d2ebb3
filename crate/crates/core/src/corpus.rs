//! Corpus handling: file ingestion, labeled corpus loading (directory-layout
//! inference or explicit manifest), and seeded synthetic corpus generation
//! for desk-scale evaluation.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signatures::SignatureDb;

/// Bytes of file content retained in a sample's head. Covers every bundled
/// signature offset and all control-curve checkpoints, so the discrete tests
/// never need a second read.
pub const HEAD_SIZE: usize = 4096;

/// Extension chains longer than this keep only the last segments; real
/// multi-extension attacks append, never prepend.
pub const MAX_EXTENSION_SEGMENTS: usize = 4;

/// Ransomware strain directory names recognized during label inference
/// (lowercased). RANSOMEXX appears in the wild under both spellings.
pub const STRAIN_NAMES: &[&str] = &[
    "avoslocker",
    "badrabbit",
    "blackbasta",
    "blackcat",
    "blackmatter",
    "cerber",
    "chimera",
    "clop",
    "conti",
    "cryptolocker",
    "cuba",
    "darkside",
    "dharma",
    "gandcrab",
    "hellokitty",
    "jigsaw",
    "lockbit",
    "lorenz",
    "maze",
    "medusalocker",
    "netwalker",
    "notpetya",
    "phobos",
    "ragnar",
    "ransomex",
    "ransomexx",
    "ryuk",
    "sodinokibi",
    "suncrypt",
    "teslacrypt",
    "wannacry",
    "wastedlocker",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("not found: {0}")]
    NotFound(PathBuf),
    #[error("not a regular file: {0}")]
    NotAFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corpus at {0} contains no files")]
    EmptyCorpus(PathBuf),
    #[error("manifest line {line}: {detail}")]
    ManifestParse { line: usize, detail: String },
    #[error("cannot infer a label for {0} (strict mode)")]
    UnlabelablePath(PathBuf),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A file under test: identity, name decomposition, timestamps, and the
/// first [`HEAD_SIZE`] bytes of content. Immutable once ingested.
#[derive(Debug, Clone)]
pub struct FileSample {
    pub id: String,
    pub path: PathBuf,
    pub name: String,
    /// Dot-separated suffix segments after the name's first dot, lowercased,
    /// capped at the last [`MAX_EXTENSION_SEGMENTS`]. Empty for dotless names.
    pub extension_chain: Vec<String>,
    pub size_bytes: u64,
    pub created_at: SystemTime,
    pub modified_at: SystemTime,
    pub head: Vec<u8>,
}

impl FileSample {
    /// Last extension in the chain, if any.
    pub fn last_extension(&self) -> Option<&str> {
        self.extension_chain.last().map(|s| s.as_str())
    }

    /// Full content, read on demand.
    pub fn body(&self) -> Result<Vec<u8>, CorpusError> {
        std::fs::read(&self.path).map_err(|e| io_err(&self.path, e))
    }

    /// In-memory sample used by tests and the scan path for stdin-less
    /// pipelines; head/size/name fields behave as if ingested from disk.
    pub fn from_bytes(name: &str, content: &[u8]) -> FileSample {
        let now = SystemTime::now();
        FileSample {
            id: name.to_string(),
            path: PathBuf::from(name),
            name: name.to_string(),
            extension_chain: extension_chain(name),
            size_bytes: content.len() as u64,
            created_at: now,
            modified_at: now,
            head: content[..content.len().min(HEAD_SIZE)].to_vec(),
        }
    }
}

/// Decompose a file name into its extension chain: the dot-separated
/// segments after the first dot, lowercased, empty segments dropped,
/// truncated from the left to the last [`MAX_EXTENSION_SEGMENTS`].
pub fn extension_chain(name: &str) -> Vec<String> {
    let Some(dot) = name.find('.') else {
        return Vec::new();
    };
    let mut chain: Vec<String> = name[dot + 1..]
        .split('.')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect();
    if chain.len() > MAX_EXTENSION_SEGMENTS {
        chain.drain(..chain.len() - MAX_EXTENSION_SEGMENTS);
    }
    chain
}

/// Ingest one file from disk.
pub fn ingest_file(path: &Path) -> Result<FileSample, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::NotFound(path.to_path_buf()));
    }
    let meta = std::fs::metadata(path).map_err(|e| io_err(path, e))?;
    if !meta.is_file() {
        return Err(CorpusError::NotAFile(path.to_path_buf()));
    }
    let modified_at = meta.modified().map_err(|e| io_err(path, e))?;
    // creation time is unavailable on some filesystems
    let created_at = meta.created().unwrap_or(modified_at);
    let mut head = Vec::with_capacity(HEAD_SIZE.min(meta.len() as usize));
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    file.take(HEAD_SIZE as u64)
        .read_to_end(&mut head)
        .map_err(|e| io_err(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FileSample {
        id: path.display().to_string(),
        path: path.to_path_buf(),
        extension_chain: extension_chain(&name),
        name,
        size_bytes: meta.len(),
        created_at,
        modified_at,
        head,
    })
}

/// Ground-truth class of a labeled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Benign,
    Malicious,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLabel {
    pub sample_id: String,
    pub truth: Truth,
    /// Benign file type or ransomware strain; free-form for user manifests.
    pub family: Option<String>,
}

/// A loaded corpus: labeled samples plus the files that could not be read.
#[derive(Debug)]
pub struct LoadedCorpus {
    /// Samples in lexicographic path order.
    pub samples: Vec<(FileSample, CorpusLabel)>,
    /// Per-file ingest failures; these abort only their own sample.
    pub io_errors: Vec<String>,
}

/// Load a labeled corpus from a directory tree.
///
/// With a manifest (CSV `path,truth,family`, paths relative to root) the
/// manifest labels win; files it does not mention fall back to inference.
/// Without one, a file under a directory whose name matches a known strain
/// is Malicious with that family, everything else Benign with the immediate
/// parent directory as family. When `manifest` is `None` and `root`
/// contains `manifest.csv` (as written by the synthetic generator), that
/// manifest is used automatically.
///
/// In strict mode a file directly under root, or under several conflicting
/// strain directories, is an error instead of a guess.
pub fn load_corpus(
    root: &Path,
    manifest: Option<&Path>,
    strict: bool,
) -> Result<LoadedCorpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::NotFound(root.to_path_buf()));
    }
    let default_manifest = root.join("manifest.csv");
    let manifest = match manifest {
        Some(m) => Some(m.to_path_buf()),
        None if default_manifest.is_file() => Some(default_manifest),
        None => None,
    };
    let manifest_labels = match &manifest {
        Some(m) => Some(read_manifest(m)?),
        None => None,
    };

    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
        if entry.file_type().is_file() {
            if manifest.as_deref() == Some(entry.path()) {
                continue;
            }
            paths.push(entry.into_path());
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }

    let mut samples = Vec::with_capacity(paths.len());
    let mut io_errors = Vec::new();
    for path in paths {
        let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
        let sample = match ingest_file(&path) {
            Ok(s) => s,
            Err(e) => {
                io_errors.push(e.to_string());
                continue;
            }
        };
        let label = match manifest_labels
            .as_ref()
            .and_then(|m| m.get(&rel).cloned())
        {
            Some((truth, family)) => CorpusLabel {
                sample_id: sample.id.clone(),
                truth,
                family,
            },
            None => infer_label(&sample.id, &rel, strict)?,
        };
        samples.push((sample, label));
    }
    Ok(LoadedCorpus { samples, io_errors })
}

type ManifestMap = std::collections::HashMap<PathBuf, (Truth, Option<String>)>;

fn read_manifest(path: &Path) -> Result<ManifestMap, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CorpusError::ManifestParse {
            line: 0,
            detail: e.to_string(),
        })?;
    let mut map = ManifestMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| CorpusError::ManifestParse {
            line,
            detail: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(CorpusError::ManifestParse {
                line,
                detail: format!("expected path,truth,family; got {} fields", record.len()),
            });
        }
        let truth = match record[1].to_lowercase().as_str() {
            "benign" => Truth::Benign,
            "malicious" => Truth::Malicious,
            other => {
                return Err(CorpusError::ManifestParse {
                    line,
                    detail: format!("unknown truth {other:?}"),
                })
            }
        };
        let family = record
            .get(2)
            .filter(|f| !f.is_empty())
            .map(|f| f.to_lowercase());
        map.insert(PathBuf::from(&record[0]), (truth, family));
    }
    Ok(map)
}

fn infer_label(sample_id: &str, rel: &Path, strict: bool) -> Result<CorpusLabel, CorpusError> {
    let dirs: Vec<String> = rel
        .parent()
        .map(|p| {
            p.components()
                .map(|c| c.as_os_str().to_string_lossy().to_lowercase())
                .collect()
        })
        .unwrap_or_default();
    let strain_hits: Vec<&String> = dirs
        .iter()
        .filter(|d| STRAIN_NAMES.contains(&d.as_str()))
        .collect();
    if strict && strain_hits.len() > 1 && strain_hits.windows(2).any(|w| w[0] != w[1]) {
        return Err(CorpusError::UnlabelablePath(rel.to_path_buf()));
    }
    if let Some(strain) = strain_hits.last() {
        return Ok(CorpusLabel {
            sample_id: sample_id.to_string(),
            truth: Truth::Malicious,
            family: Some((*strain).clone()),
        });
    }
    let family = dirs.last().cloned();
    if strict && family.is_none() {
        return Err(CorpusError::UnlabelablePath(rel.to_path_buf()));
    }
    Ok(CorpusLabel {
        sample_id: sample_id.to_string(),
        truth: Truth::Benign,
        family,
    })
}

/// Per-class file counts for a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub plaintext_benign: u32,
    pub structured_benign: u32,
    pub compressed_like: u32,
    pub encrypted_like: u32,
    pub ransom_notes: u32,
    pub seed: u64,
    pub output_root: PathBuf,
}

impl SyntheticSpec {
    /// The corpus the evaluation defaults to: 1,700 files, seed 42.
    pub fn default_eval(output_root: PathBuf) -> SyntheticSpec {
        SyntheticSpec {
            plaintext_benign: 500,
            structured_benign: 500,
            compressed_like: 100,
            encrypted_like: 500,
            ransom_notes: 100,
            seed: 42,
            output_root,
        }
    }

    pub fn total(&self) -> u64 {
        self.plaintext_benign as u64
            + self.structured_benign as u64
            + self.compressed_like as u64
            + self.encrypted_like as u64
            + self.ransom_notes as u64
    }
}

const CLASS_NAMES: [&str; 5] = [
    "plaintext_benign",
    "structured_benign",
    "compressed_like",
    "encrypted_like",
    "ransom_notes",
];

/// Result of a generation run.
#[derive(Debug)]
pub struct GeneratedCorpus {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub files_written: u64,
}

/// Write a synthetic corpus plus its ground-truth manifest.
/// Identical (spec, seed) runs produce byte-identical trees.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<GeneratedCorpus, CorpusError> {
    if spec.output_root.as_os_str().is_empty() {
        return Err(CorpusError::InvalidSpec("empty output_root".into()));
    }
    let root = &spec.output_root;
    std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let db = SignatureDb::bundled();
    let words = word_list();

    let manifest_path = root.join("manifest.csv");
    let mut manifest = csv::WriterBuilder::new()
        .from_path(&manifest_path)
        .map_err(|e| CorpusError::ManifestParse {
            line: 0,
            detail: e.to_string(),
        })?;
    manifest
        .write_record(["path", "truth", "family"])
        .map_err(|e| io_err(&manifest_path, e.into()))?;

    let counts = [
        spec.plaintext_benign,
        spec.structured_benign,
        spec.compressed_like,
        spec.encrypted_like,
        spec.ransom_notes,
    ];
    let mut written = 0u64;
    for (class_idx, (&class, &count)) in CLASS_NAMES.iter().zip(counts.iter()).enumerate() {
        if count == 0 {
            continue;
        }
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for i in 0..count {
            let mut rng = file_rng(spec.seed, class_idx as u8, i);
            let (name, content, truth) = match class_idx {
                0 => plaintext_file(&mut rng, &words, i),
                1 => structured_file(&mut rng, &words, &db, i),
                2 => compressed_file(&mut rng, &words, i),
                3 => encrypted_file(&mut rng, &words, &db),
                _ => ransom_note_file(&mut rng, &words, i),
            };
            let path = dir.join(&name);
            std::fs::write(&path, &content).map_err(|e| io_err(&path, e))?;
            let truth_str = match truth {
                Truth::Benign => "Benign",
                Truth::Malicious => "Malicious",
            };
            manifest
                .write_record([format!("{class}/{name}").as_str(), truth_str, class])
                .map_err(|e| io_err(&manifest_path, e.into()))?;
            written += 1;
        }
    }
    manifest
        .flush()
        .map_err(|e| io_err(&manifest_path, e))?;
    Ok(GeneratedCorpus {
        root: root.clone(),
        manifest_path,
        files_written: written,
    })
}

/// Bundled 1,000-word vocabulary for English-like text. None of the words
/// contain a ransom keyword or filename trigger as a substring.
pub fn word_list() -> Vec<&'static str> {
    include_str!("../assets/words.txt")
        .lines()
        .filter(|l| !l.is_empty())
        .collect()
}

fn file_rng(seed: u64, class: u8, index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ ((class as u64) << 56) ^ ((index as u64) << 8),
    ))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// English-like word stream of exactly `target` bytes.
fn text_bytes(rng: &mut ChaCha8Rng, words: &[&str], target: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(target + 16);
    let mut line_len = 0usize;
    while out.len() < target {
        let w = words.choose(rng).unwrap().as_bytes();
        out.extend_from_slice(w);
        line_len += w.len() + 1;
        if line_len > 70 {
            out.push(b'\n');
            line_len = 0;
        } else {
            out.push(b' ');
        }
    }
    out.truncate(target);
    out
}

fn plaintext_file(rng: &mut ChaCha8Rng, words: &[&str], i: u32) -> (String, Vec<u8>, Truth) {
    let size = rng.gen_range(1024..=65536);
    (
        format!("notes_{i:04}.txt"),
        text_bytes(rng, words, size),
        Truth::Benign,
    )
}

/// Extensions the structured generator draws from: distinctive signatures,
/// no executables (those would drag age/key-scan tests into every run).
const STRUCTURED_EXTS: [&str; 12] = [
    "pdf", "png", "gif", "bmp", "jpg", "doc", "xls", "ppt", "mp3", "mkv", "tif", "dwg",
];

fn structured_file(
    rng: &mut ChaCha8Rng,
    words: &[&str],
    db: &SignatureDb,
    i: u32,
) -> (String, Vec<u8>, Truth) {
    let ext = STRUCTURED_EXTS[rng.gen_range(0..STRUCTURED_EXTS.len())];
    let entry = db.lookup_extension(ext).expect("structured ext in db");
    let pattern = &entry.patterns[0];
    let size = rng.gen_range(2048..=16384);
    let mut content = vec![0u8; pattern.offset];
    content.extend_from_slice(&pattern.bytes);
    // low-entropy body: word runs broken up by zero padding and tag bytes
    while content.len() < size {
        let w = words.choose(rng).unwrap().as_bytes();
        content.extend_from_slice(w);
        content.extend(std::iter::repeat_n(0u8, rng.gen_range(2..16)));
        content.push(rng.gen_range(1..8u8));
    }
    content.truncate(size);
    let stem = words.choose(rng).unwrap();
    (
        format!("{stem}_{i:04}.{ext}"),
        content,
        Truth::Benign,
    )
}

fn compressed_file(rng: &mut ChaCha8Rng, words: &[&str], i: u32) -> (String, Vec<u8>, Truth) {
    let source_len = rng.gen_range(8192..=32768);
    let source = text_bytes(rng, words, source_len);
    if i.is_multiple_of(2) {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        std::io::Write::write_all(&mut enc, &source).expect("gzip write");
        (
            format!("archive_{i:04}.gz"),
            enc.finish().expect("gzip finish"),
            Truth::Benign,
        )
    } else {
        let inner = format!("data_{i:04}.txt");
        (
            format!("bundle_{i:04}.zip"),
            zip_single_file(&inner, &source),
            Truth::Benign,
        )
    }
}

/// Minimal stored ZIP container: one deflate-compressed entry, fixed
/// timestamps, no extra fields.
fn zip_single_file(name: &str, data: &[u8]) -> Vec<u8> {
    use flate2::{write::DeflateEncoder, Compression};
    let mut crc = flate2::Crc::new();
    crc.update(data);
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    std::io::Write::write_all(&mut enc, data).expect("deflate write");
    let compressed = enc.finish().expect("deflate finish");

    let mut out = Vec::with_capacity(compressed.len() + name.len() * 2 + 128);
    let (time, date) = (0u16, 0x21u16); // 1980-01-01 00:00:00
    // local file header
    out.extend_from_slice(&[0x50, 0x4B, 0x03, 0x04]);
    out.extend_from_slice(&20u16.to_le_bytes()); // version needed
    out.extend_from_slice(&0u16.to_le_bytes()); // flags
    out.extend_from_slice(&8u16.to_le_bytes()); // method: deflate
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&date.to_le_bytes());
    out.extend_from_slice(&crc.sum().to_le_bytes());
    out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // extra len
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&compressed);
    // central directory
    let cd_offset = out.len() as u32;
    out.extend_from_slice(&[0x50, 0x4B, 0x01, 0x02]);
    out.extend_from_slice(&20u16.to_le_bytes()); // version made by
    out.extend_from_slice(&20u16.to_le_bytes()); // version needed
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&8u16.to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&date.to_le_bytes());
    out.extend_from_slice(&crc.sum().to_le_bytes());
    out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(&[0u8; 12]); // extra/comment len, disk, attrs
    out.extend_from_slice(&0u32.to_le_bytes()); // external attrs
    out.extend_from_slice(&0u32.to_le_bytes()); // local header offset
    out.extend_from_slice(name.as_bytes());
    let cd_size = out.len() as u32 - cd_offset;
    // end of central directory
    out.extend_from_slice(&[0x50, 0x4B, 0x05, 0x06]);
    out.extend_from_slice(&[0u8; 4]); // disk numbers
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&cd_size.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment len
    out
}

/// Extension pool for the pre-rename part of encrypted file names.
const VICTIM_EXTS: [&str; 10] = [
    "docx", "pdf", "xlsx", "jpg", "png", "pptx", "txt", "zip", "csv", "mp4",
];

const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn encrypted_file(
    rng: &mut ChaCha8Rng,
    words: &[&str],
    _db: &SignatureDb,
) -> (String, Vec<u8>, Truth) {
    let size = rng.gen_range(2048..=65536);
    let mut content = vec![0u8; size];
    rng.fill_bytes(&mut content);
    let stem = words.choose(rng).unwrap();
    let orig = VICTIM_EXTS[rng.gen_range(0..VICTIM_EXTS.len())];
    let tag_len = rng.gen_range(6..=20);
    let tag: String = (0..tag_len)
        .map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char)
        .collect();
    (format!("{stem}.{orig}.{tag}"), content, Truth::Malicious)
}

const NOTE_TRIGGERS: [&str; 4] = ["DECRYPT", "README", "RESTORE", "HELPME"];

fn ransom_note_file(rng: &mut ChaCha8Rng, words: &[&str], i: u32) -> (String, Vec<u8>, Truth) {
    let trigger = NOTE_TRIGGERS[rng.gen_range(0..NOTE_TRIGGERS.len())];
    let stem = words.choose(rng).unwrap().to_uppercase();
    let name = format!("{trigger}_{stem}_{i:04}");
    let wallet_tag: String = (0..24)
        .map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char)
        .collect();
    let mut body = format!(
        "ATTENTION!\n\n\
         All your documents and photos have been encrypted.\n\
         To recover your files send 0.5 bitcoin to wallet {wallet_tag}\n\
         then install the tor browser and visit our onion page for the ransom payment.\n\n"
    )
    .into_bytes();
    let target = rng.gen_range(400..=1000).max(body.len());
    if body.len() < target {
        body.extend(text_bytes(rng, words, target - body.len()));
    }
    body.truncate(1000);
    (name, body, Truth::Malicious)
}
