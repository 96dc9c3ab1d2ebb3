//! Offline scanning of binary blobs (executables, memory dumps) for
//! cryptographic key material, ransom-note strings, and Windows API string
//! profiles. Pure byte-level analysis: the CLI feeds it raw dump files, no
//! live process access anywhere.

pub mod aes;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signatures::{ApiDictionary, KeywordSet};
use crate::votetests::{TestId, Vote};

/// Smallest blob an AES schedule (128-bit) can fit in.
pub const MIN_AES_BLOB: usize = 176;

/// Default minimum length for extracted printable strings.
pub const DEFAULT_MIN_STRING_LEN: usize = 5;

/// Default clustering window for ransom keyword proximity, in bytes.
pub const DEFAULT_KEYWORD_WINDOW: usize = 512;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("blob is empty")]
    Empty,
    #[error("blob too small: {len} bytes (minimum {min})")]
    BlobTooSmall { len: usize, min: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlobKind {
    Executable,
    MemoryDump,
    Unknown,
}

/// A chunk of raw bytes under examination.
#[derive(Debug, Clone)]
pub struct Blob {
    pub source: String,
    pub bytes: Vec<u8>,
    pub kind: BlobKind,
}

impl Blob {
    pub fn new(source: impl Into<String>, bytes: Vec<u8>, kind: BlobKind) -> Result<Blob, BlobError> {
        if bytes.is_empty() {
            return Err(BlobError::Empty);
        }
        Ok(Blob {
            source: source.into(),
            bytes,
            kind,
        })
    }

    pub fn from_file(path: &std::path::Path, kind: BlobKind) -> Result<Blob, BlobError> {
        let bytes = std::fs::read(path).map_err(|e| BlobError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let kind = match kind {
            BlobKind::Unknown
                if bytes.starts_with(b"MZ") || bytes.starts_with(b"\x7fELF") =>
            {
                BlobKind::Executable
            }
            k => k,
        };
        Blob::new(path.display().to_string(), bytes, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyAlgorithm {
    #[serde(rename = "AES128")]
    Aes128,
    #[serde(rename = "AES192")]
    Aes192,
    #[serde(rename = "AES256")]
    Aes256,
    Salsa20,
    #[serde(rename = "RSA")]
    Rsa,
}

impl KeyAlgorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeyAlgorithm::Aes128 => "AES128",
            KeyAlgorithm::Aes192 => "AES192",
            KeyAlgorithm::Aes256 => "AES256",
            KeyAlgorithm::Salsa20 => "Salsa20",
            KeyAlgorithm::Rsa => "RSA",
        }
    }

    fn from_key_len(len: usize) -> KeyAlgorithm {
        match len {
            16 => KeyAlgorithm::Aes128,
            24 => KeyAlgorithm::Aes192,
            32 => KeyAlgorithm::Aes256,
            other => panic!("no AES algorithm for key length {other}"),
        }
    }
}

/// A located cryptographic artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyHit {
    pub algorithm: KeyAlgorithm,
    pub offset: usize,
    /// Recovered key material; empty when only structure was identified
    /// (RSA DER, Salsa20 constant string).
    #[serde(with = "hex_bytes")]
    pub key_bytes: Vec<u8>,
    pub detail: String,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// Carve AES keys by testing, at every byte offset and key length, whether
/// the bytes that follow are exactly the key's expanded schedule.
pub fn find_aes_key_schedules(blob: &[u8]) -> Result<Vec<KeyHit>, BlobError> {
    if blob.len() < MIN_AES_BLOB {
        return Err(BlobError::BlobTooSmall {
            len: blob.len(),
            min: MIN_AES_BLOB,
        });
    }
    let mut hits = Vec::new();
    for offset in 0..=blob.len() - MIN_AES_BLOB {
        for key_len in aes::KEY_LENGTHS {
            if offset + aes::schedule_len(key_len) > blob.len() {
                continue;
            }
            if aes::schedule_matches_at(blob, offset, key_len) {
                hits.push(KeyHit {
                    algorithm: KeyAlgorithm::from_key_len(key_len),
                    offset,
                    key_bytes: blob[offset..offset + key_len].to_vec(),
                    detail: format!(
                        "{}-byte schedule",
                        aes::schedule_len(key_len)
                    ),
                });
            }
        }
    }
    Ok(hits)
}

/// Salsa20 sigma constant, both as the contiguous constant string found in
/// binaries and split across the state-matrix word positions 0/5/10/15.
const SIGMA: &[u8; 16] = b"expand 32-byte k";
const SIGMA_WORD_OFFSETS: [usize; 4] = [0, 20, 40, 60];

/// Find Salsa20 traces: the contiguous "expand 32-byte k" constant, or the
/// four sigma words laid out as an in-memory state matrix. State-layout
/// hits recover the 32-byte key from word positions 1-4 and 11-14.
pub fn find_salsa20_state(blob: &[u8]) -> Vec<KeyHit> {
    let mut hits = Vec::new();
    for offset in 0..blob.len() {
        let contiguous =
            offset + SIGMA.len() <= blob.len() && &blob[offset..offset + SIGMA.len()] == SIGMA;
        let state_layout = offset + 64 <= blob.len()
            && SIGMA_WORD_OFFSETS
                .iter()
                .enumerate()
                .all(|(w, &rel)| blob[offset + rel..offset + rel + 4] == SIGMA[w * 4..w * 4 + 4]);
        if !(contiguous || state_layout) {
            continue;
        }
        let (key_bytes, detail) = if state_layout {
            let mut key = blob[offset + 4..offset + 20].to_vec();
            key.extend_from_slice(&blob[offset + 44..offset + 60]);
            let which = if contiguous {
                "state layout (words 0/5/10/15) + contiguous constant"
            } else {
                "state layout (words 0/5/10/15)"
            };
            (key, which)
        } else {
            (Vec::new(), "contiguous constant string")
        };
        hits.push(KeyHit {
            algorithm: KeyAlgorithm::Salsa20,
            offset,
            key_bytes,
            detail: detail.to_string(),
        });
    }
    hits
}

/// Minimal DER TLV cursor for the RSA scan.
struct DerCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

struct DerElement<'a> {
    tag: u8,
    content: &'a [u8],
}

impl<'a> DerCursor<'a> {
    fn new(data: &'a [u8]) -> DerCursor<'a> {
        DerCursor { data, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn next(&mut self) -> Option<DerElement<'a>> {
        let (tag, content_start, content_len) = parse_tlv(self.data, self.pos)?;
        let end = content_start + content_len;
        self.pos = end;
        Some(DerElement {
            tag,
            content: &self.data[content_start..end],
        })
    }
}

/// Parse tag + definite length at `pos`; `None` for anything malformed or
/// overrunning the buffer.
fn parse_tlv(data: &[u8], pos: usize) -> Option<(u8, usize, usize)> {
    let tag = *data.get(pos)?;
    let first = *data.get(pos + 1)?;
    let (len, header) = if first < 0x80 {
        (first as usize, 2)
    } else {
        let n = (first & 0x7F) as usize;
        if n == 0 || n > 4 {
            return None; // indefinite or absurd
        }
        let mut len = 0usize;
        for i in 0..n {
            len = (len << 8) | *data.get(pos + 2 + i)? as usize;
        }
        (len, 2 + n)
    };
    let content_start = pos + header;
    if content_start + len > data.len() {
        return None;
    }
    Some((tag, content_start, len))
}

/// Bit length of a DER INTEGER's magnitude.
fn integer_bits(content: &[u8]) -> usize {
    let mut i = 0;
    while i < content.len() && content[i] == 0 {
        i += 1;
    }
    if i == content.len() {
        return 0;
    }
    (content.len() - i - 1) * 8 + (8 - content[i].leading_zeros() as usize)
}

const DER_SEQUENCE: u8 = 0x30;
const DER_INTEGER: u8 = 0x02;
/// Below this modulus size a bare two-integer sequence is more likely
/// coincidence than an RSA public key.
const MIN_PUBLIC_MODULUS_BITS: usize = 1024;

/// Scan for PKCS#1-shaped RSA keys: a DER SEQUENCE holding INTEGER 0 plus
/// at least eight further INTEGERs (private key), or exactly two INTEGERs
/// with a large modulus (public key). Malformed candidates are skipped.
pub fn find_rsa_der_keys(blob: &[u8]) -> Vec<KeyHit> {
    let mut hits = Vec::new();
    for offset in 0..blob.len() {
        if blob[offset] != DER_SEQUENCE {
            continue;
        }
        let Some((_, content_start, content_len)) = parse_tlv(blob, offset) else {
            continue;
        };
        if content_len < 8 {
            continue;
        }
        let content = &blob[content_start..content_start + content_len];
        if let Some(detail) = classify_rsa_sequence(content) {
            hits.push(KeyHit {
                algorithm: KeyAlgorithm::Rsa,
                offset,
                key_bytes: Vec::new(),
                detail,
            });
        }
    }
    hits
}

fn classify_rsa_sequence(content: &[u8]) -> Option<String> {
    let mut cursor = DerCursor::new(content);
    let mut integers: Vec<&[u8]> = Vec::new();
    while !cursor.done() {
        match cursor.next() {
            Some(el) if el.tag == DER_INTEGER => integers.push(el.content),
            // private keys may carry trailing non-integer elements
            // (multi-prime otherPrimeInfos); stop counting there
            Some(_) => break,
            None => return None, // malformed interior
        }
    }
    let version_is_zero = integers
        .first()
        .is_some_and(|v| integer_bits(v) == 0);
    if version_is_zero && integers.len() >= 9 {
        let bits = integer_bits(integers[1]);
        return Some(format!("{bits}-bit, private"));
    }
    if integers.len() == 2 && cursor.done() {
        let bits = integer_bits(integers[0]);
        if bits >= MIN_PUBLIC_MODULUS_BITS {
            return Some(format!("{bits}-bit, public"));
        }
    }
    None
}

/// Maximal runs of printable ASCII (32..=126) of at least `min_len` bytes,
/// in offset order.
pub fn extract_strings(blob: &[u8], min_len: usize) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &b) in blob.iter().enumerate() {
        let printable = (32..=126).contains(&b);
        match (printable, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push((s, String::from_utf8_lossy(&blob[s..i]).into_owned()));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if blob.len() - s >= min_len {
            out.push((s, String::from_utf8_lossy(&blob[s..]).into_owned()));
        }
    }
    out
}

/// API-call string profile of a blob: total count, size-normalized rate,
/// and per-name counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiProfile {
    pub total_hits: u64,
    pub blob_size_bytes: u64,
    pub hits_per_kb: f64,
    pub per_name_counts: BTreeMap<String, u64>,
}

/// Count extracted strings containing each dictionary name as a
/// case-sensitive substring. Substring matching deliberately catches
/// decorated and suffixed imports, at the cost of possible over-count.
pub fn count_api_strings(blob: &[u8], dict: &ApiDictionary) -> ApiProfile {
    let strings = extract_strings(blob, DEFAULT_MIN_STRING_LEN);
    let mut per_name_counts: BTreeMap<String, u64> = BTreeMap::new();
    for name in dict.names() {
        let count = strings.iter().filter(|(_, s)| s.contains(name)).count() as u64;
        if count > 0 {
            per_name_counts.insert(name.to_string(), count);
        }
    }
    let total_hits: u64 = per_name_counts.values().sum();
    let blob_size_bytes = blob.len() as u64;
    ApiProfile {
        total_hits,
        blob_size_bytes,
        hits_per_kb: total_hits as f64 / (blob_size_bytes as f64 / 1024.0),
        per_name_counts,
    }
}

/// A run of nearby ransom keywords in a blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCluster {
    pub start: usize,
    pub end: usize,
    pub keywords: BTreeSet<String>,
}

/// Find clusters of at least two distinct content keywords within `window`
/// bytes of each other, case-insensitively, over extracted strings.
/// Overlapping clusters merge.
pub fn scan_ransom_keywords(
    blob: &[u8],
    keywords: &KeywordSet,
    window: usize,
) -> Vec<KeywordCluster> {
    let mut occurrences: Vec<(usize, &str)> = Vec::new();
    for (base, s) in extract_strings(blob, DEFAULT_MIN_STRING_LEN) {
        let lower = s.to_lowercase();
        for kw in &keywords.content_keywords {
            for (idx, _) in lower.match_indices(kw.as_str()) {
                occurrences.push((base + idx, kw));
            }
        }
    }
    occurrences.sort();

    let mut clusters = Vec::new();
    let mut run: Vec<(usize, &str)> = Vec::new();
    for occ in occurrences {
        if let Some(&(last, _)) = run.last() {
            if occ.0 - last > window {
                push_cluster(&mut clusters, &run);
                run.clear();
            }
        }
        run.push(occ);
    }
    push_cluster(&mut clusters, &run);
    clusters
}

fn push_cluster(clusters: &mut Vec<KeywordCluster>, run: &[(usize, &str)]) {
    let distinct: BTreeSet<String> = run.iter().map(|(_, k)| k.to_string()).collect();
    if distinct.len() >= 2 {
        clusters.push(KeywordCluster {
            start: run.first().unwrap().0,
            end: run.last().unwrap().0,
            keywords: distinct,
        });
    }
}

/// Crypto-artifact vote for an executable or dump: any recovered key or key
/// structure is malicious.
pub fn test_crypto_artifacts(blob: &[u8]) -> Vote {
    let id = TestId::CryptoArtifacts;
    let aes_hits = match find_aes_key_schedules(blob) {
        Ok(h) => h,
        Err(BlobError::BlobTooSmall { .. }) => Vec::new(),
        Err(e) => return Vote::abstain(id, e.to_string()),
    };
    let salsa_hits = find_salsa20_state(blob);
    let rsa_hits = find_rsa_der_keys(blob);
    let mut found: Vec<String> = Vec::new();
    for (name, count) in [
        ("AES", aes_hits.len()),
        ("Salsa20", salsa_hits.len()),
        ("RSA", rsa_hits.len()),
    ] {
        if count > 0 {
            found.push(format!("{name} x{count}"));
        }
    }
    if found.is_empty() {
        Vote::benign(id, Some(0.0), "no cryptographic artifacts")
    } else {
        let total = (aes_hits.len() + salsa_hits.len() + rsa_hits.len()) as f64;
        Vote::malicious(id, Some(total), found.join(", "))
    }
}
