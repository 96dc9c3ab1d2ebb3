//! Static data assets and lookups: magic-number signatures, the known
//! extension list (the union of DB extensions), ransom-note keyword sets,
//! and the Windows API name dictionary.
//!
//! The signature DB is a JSON array of `{extension, patterns, plain_text}`
//! entries; each pattern is an `{offset, hex}` pair and an entry matches a
//! head if any one of its patterns does. Plain-text types carry no patterns.
//! The bundled DB covers common document, media, archive, and executable
//! formats; coverage beyond that is best-effort.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Every bundled pattern must fit inside the head a file sample retains.
pub const MAX_PATTERN_SPAN: usize = 4096;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate extension {0:?}")]
    DuplicateExtension(String),
    #[error("invalid entry {extension:?}: {reason}")]
    InvalidEntry { extension: String, reason: String },
    #[error("head too short for any pattern of {0:?}")]
    HeadTooShort(String),
}

/// One magic-byte pattern: `bytes` expected at `offset` from the file start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignaturePattern {
    pub offset: usize,
    pub bytes: Vec<u8>,
}

impl SignaturePattern {
    pub fn span(&self) -> usize {
        self.offset + self.bytes.len()
    }
}

/// Extension <-> magic-number <-> plain-text-class mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureEntry {
    pub extension: String,
    /// Any-of alternatives (e.g. GIF87a / GIF89a). Empty for plain-text
    /// types and for binary types with no reliable signature.
    pub patterns: Vec<SignaturePattern>,
    pub plain_text: bool,
}

#[derive(Deserialize, Serialize)]
struct RawPattern {
    offset: usize,
    hex: String,
}

#[derive(Deserialize, Serialize)]
struct RawEntry {
    extension: String,
    patterns: Vec<RawPattern>,
    plain_text: bool,
}

/// Validated, immutable signature database keyed by lowercase extension.
#[derive(Debug, Clone)]
pub struct SignatureDb {
    entries: BTreeMap<String, SignatureEntry>,
}

impl SignatureDb {
    /// The database shipped with the crate.
    pub fn bundled() -> SignatureDb {
        Self::from_json(include_str!("../assets/signatures.json"))
            .expect("bundled signature db is valid")
    }

    pub fn load(path: &Path) -> Result<SignatureDb, SignatureError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<SignatureDb, SignatureError> {
        let raw: Vec<RawEntry> =
            serde_json::from_str(json).map_err(|e| SignatureError::Parse(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (idx, r) in raw.into_iter().enumerate() {
            let entry = validate_entry(idx, r)?;
            if entries.contains_key(&entry.extension) {
                return Err(SignatureError::DuplicateExtension(entry.extension));
            }
            entries.insert(entry.extension.clone(), entry);
        }
        Ok(SignatureDb { entries })
    }

    /// Exact-match lookup by lowercase extension; `None` means unknown.
    pub fn lookup_extension(&self, ext: &str) -> Option<&SignatureEntry> {
        self.entries.get(ext)
    }

    /// The known-extension list is the union of DB extensions.
    pub fn extensions(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = &SignatureEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn validate_entry(idx: usize, raw: RawEntry) -> Result<SignatureEntry, SignatureError> {
    let invalid = |reason: String| SignatureError::InvalidEntry {
        extension: raw.extension.clone(),
        reason,
    };
    if raw.extension.is_empty() || raw.extension != raw.extension.to_lowercase() {
        return Err(SignatureError::Parse(format!(
            "entry {idx}: extension {:?} must be non-empty lowercase",
            raw.extension
        )));
    }
    if raw.plain_text && !raw.patterns.is_empty() {
        return Err(invalid("plain-text entries must have no patterns".into()));
    }
    let mut patterns = Vec::with_capacity(raw.patterns.len());
    for p in &raw.patterns {
        let bytes = hex::decode(&p.hex)
            .map_err(|e| invalid(format!("bad hex {:?}: {e}", p.hex)))?;
        if bytes.is_empty() {
            return Err(invalid("empty pattern".into()));
        }
        if p.offset + bytes.len() > MAX_PATTERN_SPAN {
            return Err(invalid(format!(
                "pattern span {} exceeds {MAX_PATTERN_SPAN}",
                p.offset + bytes.len()
            )));
        }
        patterns.push(SignaturePattern {
            offset: p.offset,
            bytes,
        });
    }
    Ok(SignatureEntry {
        extension: raw.extension,
        patterns,
        plain_text: raw.plain_text,
    })
}

/// True iff any of the entry's patterns equals `head[offset..offset+len)`.
///
/// Errors with `HeadTooShort` only when the head is too short for every
/// pattern; callers treat that as a non-match.
pub fn match_magic(head: &[u8], entry: &SignatureEntry) -> Result<bool, SignatureError> {
    if entry.patterns.is_empty() {
        return Ok(false);
    }
    let mut any_fit = false;
    for p in &entry.patterns {
        if p.span() <= head.len() {
            any_fit = true;
            if &head[p.offset..p.span()] == p.bytes.as_slice() {
                return Ok(true);
            }
        }
    }
    if any_fit {
        Ok(false)
    } else {
        Err(SignatureError::HeadTooShort(entry.extension.clone()))
    }
}

/// Ransom-note keyword sets: content keywords looked for inside files and
/// memory, filename triggers looked for in file names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub content_keywords: BTreeSet<String>,
    pub filename_triggers: BTreeSet<String>,
}

const REQUIRED_CONTENT: &[&str] = &[
    "encrypted", "ransom", "tor", "onion", "recover", "wallet", "bitcoin",
];
const REQUIRED_TRIGGERS: &[&str] = &["decrypt", "readme", "restore", "helpme"];

impl KeywordSet {
    pub fn bundled() -> KeywordSet {
        Self::from_json(include_str!("../assets/keywords.json"))
            .expect("bundled keyword set is valid")
    }

    pub fn load(path: &Path) -> Result<KeywordSet, SignatureError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<KeywordSet, SignatureError> {
        let set: KeywordSet =
            serde_json::from_str(json).map_err(|e| SignatureError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), SignatureError> {
        for (required, have, what) in [
            (REQUIRED_CONTENT, &self.content_keywords, "content keyword"),
            (REQUIRED_TRIGGERS, &self.filename_triggers, "filename trigger"),
        ] {
            for k in required {
                if !have.contains(*k) {
                    return Err(SignatureError::Parse(format!(
                        "missing required {what} {k:?}"
                    )));
                }
            }
            if let Some(bad) = have.iter().find(|k| k.as_str() != k.to_lowercase()) {
                return Err(SignatureError::Parse(format!(
                    "{what} {bad:?} must be lowercase"
                )));
            }
        }
        Ok(())
    }
}

/// Case-sensitive Windows API symbol names, one per line in the asset,
/// '#' comments allowed.
#[derive(Debug, Clone)]
pub struct ApiDictionary {
    names: BTreeSet<String>,
}

impl ApiDictionary {
    pub fn bundled() -> ApiDictionary {
        Self::from_text(include_str!("../assets/api_names.txt"))
            .expect("bundled api dictionary is valid")
    }

    pub fn load(path: &Path) -> Result<ApiDictionary, SignatureError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<ApiDictionary, SignatureError> {
        let mut names = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !line.is_ascii() || line.len() < 4 || line.chars().any(|c| c.is_whitespace()) {
                return Err(SignatureError::Parse(format!(
                    "line {}: invalid api name {line:?}",
                    n + 1
                )));
            }
            names.insert(line.to_string());
        }
        Ok(ApiDictionary { names })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
