//! The discrete file, filename, and executable tests. Each test maps a
//! sample to a single [`Vote`]: benign, malicious, or abstain when the test
//! does not apply. Abstaining instead of defaulting to benign keeps
//! inapplicable tests from diluting the majority.
//!
//! Threshold semantics follow each rule as written: a measurement exactly
//! on a strict threshold falls on the non-passing side.

use std::collections::BTreeSet;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::corpus::FileSample;
use crate::signatures::{match_magic, KeywordSet, SignatureDb, SignatureError};
use crate::stats::{bitbyte_value, chi_square_p, shannon_entropy_string, ControlCurve};

/// Stable identifiers for the discrete tests, in canonical (alphabetical)
/// report order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    Bitbyte,
    CryptoArtifacts,
    ExtensionEntropy,
    FileAge,
    FileEntropy,
    FilenameEntropy,
    KnownExtension,
    MagicNumber,
    Printable,
    RansomNote,
}

impl TestId {
    pub const ALL: [TestId; 10] = [
        TestId::Bitbyte,
        TestId::CryptoArtifacts,
        TestId::ExtensionEntropy,
        TestId::FileAge,
        TestId::FileEntropy,
        TestId::FilenameEntropy,
        TestId::KnownExtension,
        TestId::MagicNumber,
        TestId::Printable,
        TestId::RansomNote,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TestId::Bitbyte => "bitbyte",
            TestId::CryptoArtifacts => "crypto_artifacts",
            TestId::ExtensionEntropy => "extension_entropy",
            TestId::FileAge => "file_age",
            TestId::FileEntropy => "file_entropy",
            TestId::FilenameEntropy => "filename_entropy",
            TestId::KnownExtension => "known_extension",
            TestId::MagicNumber => "magic_number",
            TestId::Printable => "printable",
            TestId::RansomNote => "ransom_note",
        }
    }
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One test's verdict on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Malicious,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub test_id: TestId,
    pub verdict: Verdict,
    /// Underlying metric for threshold tests.
    pub measured: Option<f64>,
    pub evidence: String,
}

impl Vote {
    pub fn benign(test_id: TestId, measured: Option<f64>, evidence: impl Into<String>) -> Vote {
        Vote {
            test_id,
            verdict: Verdict::Benign,
            measured,
            evidence: evidence.into(),
        }
    }

    pub fn malicious(test_id: TestId, measured: Option<f64>, evidence: impl Into<String>) -> Vote {
        Vote {
            test_id,
            verdict: Verdict::Malicious,
            measured,
            evidence: evidence.into(),
        }
    }

    pub fn abstain(test_id: TestId, reason: impl Into<String>) -> Vote {
        Vote {
            test_id,
            verdict: Verdict::Abstain,
            measured: None,
            evidence: reason.into(),
        }
    }
}

fn default_enabled() -> BTreeSet<TestId> {
    TestId::ALL.into_iter().collect()
}

/// Thresholds and assets for the discrete tests. Defaults carry the
/// published operating points: 98% printable content, chi-square p 0.01,
/// BitByte 56, six bits for both name entropies, 1 KiB ransom-note cap,
/// one day minimum executable age.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub printable_min: f64,
    pub chi_p_threshold: f64,
    pub bitbyte_threshold: f64,
    pub name_entropy_max_bits: f64,
    pub ext_entropy_max_bits: f64,
    pub ransom_note_max_bytes: u64,
    pub min_age_seconds: u64,
    pub chi_min_bytes: u64,
    /// Run the chi-square test over the whole file instead of the head.
    #[serde(default)]
    pub chi_whole_file: bool,
    pub keywords: KeywordSet,
    #[serde(default = "default_enabled")]
    pub enabled_tests: BTreeSet<TestId>,
}

impl Default for DetectionConfig {
    fn default() -> DetectionConfig {
        DetectionConfig {
            printable_min: 0.98,
            chi_p_threshold: 0.01,
            bitbyte_threshold: 56.0,
            name_entropy_max_bits: 6.0,
            ext_entropy_max_bits: 6.0,
            ransom_note_max_bytes: 1024,
            min_age_seconds: 86_400,
            chi_min_bytes: 1024,
            chi_whole_file: false,
            keywords: KeywordSet::bundled(),
            enabled_tests: default_enabled(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.printable_min > 0.0 && self.printable_min <= 1.0) {
            return Err(format!("printable_min {} outside (0, 1]", self.printable_min));
        }
        for (name, v) in [
            ("chi_p_threshold", self.chi_p_threshold),
            ("bitbyte_threshold", self.bitbyte_threshold),
            ("name_entropy_max_bits", self.name_entropy_max_bits),
            ("ext_entropy_max_bits", self.ext_entropy_max_bits),
        ] {
            if v <= 0.0 {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        for (name, v) in [
            ("ransom_note_max_bytes", self.ransom_note_max_bytes),
            ("min_age_seconds", self.min_age_seconds),
            ("chi_min_bytes", self.chi_min_bytes),
        ] {
            if v == 0 {
                return Err(format!("{name} must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Printable here means ASCII 32..=126 plus the format control characters
/// 9..=13 (tab through carriage return).
fn is_printable(b: u8) -> bool {
    (32..=126).contains(&b) || (9..=13).contains(&b)
}

fn printable_ratio(data: &[u8]) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let hits = data.iter().filter(|&&b| is_printable(b)).count();
    Some(hits as f64 / data.len() as f64)
}

fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Does the magic number match the extension it claims?
/// Passes (benign) on a signature match; abstains for extensionless names,
/// unknown extensions, and types with no signature to check (plain text
/// included, which the printable test covers instead).
pub fn test_magic_number(sample: &FileSample, db: &SignatureDb, _cfg: &DetectionConfig) -> Vote {
    let id = TestId::MagicNumber;
    let Some(ext) = sample.last_extension() else {
        return Vote::abstain(id, "no extension");
    };
    let Some(entry) = db.lookup_extension(ext) else {
        return Vote::abstain(id, format!("unknown extension {ext:?}"));
    };
    if entry.plain_text {
        return Vote::abstain(id, "plain text type");
    }
    if entry.patterns.is_empty() {
        return Vote::abstain(id, format!("no signature on record for {ext:?}"));
    }
    match match_magic(&sample.head, entry) {
        Ok(true) => Vote::benign(id, None, format!("signature matches .{ext}")),
        Ok(false) => Vote::malicious(id, None, format!("signature mismatch for .{ext}")),
        Err(SignatureError::HeadTooShort(_)) => {
            Vote::malicious(id, None, "head shorter than expected signature")
        }
        Err(e) => Vote::abstain(id, e.to_string()),
    }
}

/// Printable-character ratio test, the complement of the magic-number test:
/// only runs on types flagged plain-text in the signature DB.
pub fn test_printable(sample: &FileSample, db: &SignatureDb, cfg: &DetectionConfig) -> Vote {
    let id = TestId::Printable;
    let entry = sample.last_extension().and_then(|e| db.lookup_extension(e));
    match entry {
        Some(e) if e.plain_text => {}
        Some(_) => return Vote::abstain(id, "type has a magic number"),
        None => return Vote::abstain(id, "not a known plain text type"),
    }
    let Some(ratio) = printable_ratio(&sample.head) else {
        return Vote::abstain(id, "empty file");
    };
    if ratio >= cfg.printable_min {
        Vote::benign(id, Some(ratio), format!("printable ratio {ratio:.4}"))
    } else {
        Vote::malicious(id, Some(ratio), format!("printable ratio {ratio:.4}"))
    }
}

/// Chi-square file entropy test: structured content rejects byte-uniformity
/// (p below threshold) and passes; random-looking content fails.
pub fn test_file_entropy(sample: &FileSample, cfg: &DetectionConfig) -> Vote {
    let id = TestId::FileEntropy;
    if sample.size_bytes < cfg.chi_min_bytes {
        return Vote::abstain(
            id,
            format!("{} bytes below {}-byte floor", sample.size_bytes, cfg.chi_min_bytes),
        );
    }
    let body;
    let data: &[u8] = if cfg.chi_whole_file {
        match sample.body() {
            Ok(b) => {
                body = b;
                &body
            }
            Err(e) => return Vote::abstain(id, format!("unreadable: {e}")),
        }
    } else {
        &sample.head
    };
    match chi_square_p(data) {
        Ok(r) => {
            if r.p_value < cfg.chi_p_threshold {
                Vote::benign(id, Some(r.p_value), format!("p {:.3e}", r.p_value))
            } else {
                Vote::malicious(id, Some(r.p_value), format!("p {:.3e}", r.p_value))
            }
        }
        Err(e) => Vote::abstain(id, e.to_string()),
    }
}

/// BitByte head-profile test: values above the threshold mean the head's
/// prefix entropies sit well below the random control, i.e. not encrypted.
pub fn test_bitbyte(sample: &FileSample, curve: &ControlCurve, cfg: &DetectionConfig) -> Vote {
    let id = TestId::Bitbyte;
    if (sample.head.len()) < curve.min_checkpoint() {
        return Vote::abstain(
            id,
            format!("{} bytes below first checkpoint", sample.head.len()),
        );
    }
    match bitbyte_value(&sample.head, curve) {
        Ok(v) => {
            if v > cfg.bitbyte_threshold {
                Vote::benign(id, Some(v), format!("bitbyte {v:.1}"))
            } else {
                Vote::malicious(id, Some(v), format!("bitbyte {v:.1}"))
            }
        }
        Err(e) => Vote::abstain(id, e.to_string()),
    }
}

/// Ransom-note creation test: small, printable, and mentioning the usual
/// payment/recovery keywords (or carrying a trigger name) is malicious.
pub fn test_ransom_note(sample: &FileSample, cfg: &DetectionConfig) -> Vote {
    let id = TestId::RansomNote;
    if sample.size_bytes > cfg.ransom_note_max_bytes {
        return Vote::benign(id, None, "larger than a ransom note");
    }
    let printable = printable_ratio(&sample.head).unwrap_or(0.0);
    if printable < cfg.printable_min {
        return Vote::benign(id, None, "not plain text");
    }
    let head_lower = sample.head.to_ascii_lowercase();
    let content_hits: Vec<&str> = cfg
        .keywords
        .content_keywords
        .iter()
        .filter(|k| contains_subslice(&head_lower, k.as_bytes()))
        .map(|k| k.as_str())
        .collect();
    let name_lower = sample.name.to_lowercase();
    let trigger_hits: Vec<&str> = cfg
        .keywords
        .filename_triggers
        .iter()
        .filter(|t| name_lower.contains(t.as_str()))
        .map(|t| t.as_str())
        .collect();
    if !content_hits.is_empty() || !trigger_hits.is_empty() {
        Vote::malicious(
            id,
            None,
            format!("keywords {content_hits:?}, name triggers {trigger_hits:?}"),
        )
    } else {
        Vote::benign(id, None, "no ransom keywords")
    }
}

/// File name entropy test over the entire name, extensions included.
pub fn test_filename_entropy(sample: &FileSample, cfg: &DetectionConfig) -> Vote {
    let id = TestId::FilenameEntropy;
    match shannon_entropy_string(&sample.name) {
        Ok(h) => {
            if h < cfg.name_entropy_max_bits {
                Vote::benign(id, Some(h), format!("name entropy {h:.3} bits"))
            } else {
                Vote::malicious(id, Some(h), format!("name entropy {h:.3} bits"))
            }
        }
        Err(_) => Vote::abstain(id, "empty name"),
    }
}

/// Is the last extension a well-known one?
pub fn test_known_extension(sample: &FileSample, db: &SignatureDb, _cfg: &DetectionConfig) -> Vote {
    let id = TestId::KnownExtension;
    match sample.last_extension() {
        None => Vote::malicious(id, None, "no extension"),
        Some(ext) => {
            if db.lookup_extension(ext).is_some() {
                Vote::benign(id, None, format!(".{ext} is well-known"))
            } else {
                Vote::malicious(id, None, format!(".{ext} is not well-known"))
            }
        }
    }
}

/// Entropy of the concatenated extension chain (dots excluded).
pub fn test_extension_entropy(sample: &FileSample, cfg: &DetectionConfig) -> Vote {
    let id = TestId::ExtensionEntropy;
    if sample.extension_chain.is_empty() {
        return Vote::abstain(id, "no extension");
    }
    let joined = sample.extension_chain.concat();
    match shannon_entropy_string(&joined) {
        Ok(h) => {
            if h < cfg.ext_entropy_max_bits {
                Vote::benign(id, Some(h), format!("extension entropy {h:.3} bits"))
            } else {
                Vote::malicious(id, Some(h), format!("extension entropy {h:.3} bits"))
            }
        }
        Err(_) => Vote::abstain(id, "empty extension"),
    }
}

/// Executable gate shared by the age test and the key scanners: .exe/.dll
/// extension or an ELF/PE header.
pub fn is_executable(sample: &FileSample) -> bool {
    if matches!(sample.last_extension(), Some("exe") | Some("dll")) {
        return true;
    }
    sample.head.starts_with(b"MZ") || sample.head.starts_with(b"\x7fELF")
}

/// Creation/modification age test for executables: freshly planted
/// binaries are suspicious.
pub fn test_file_age(sample: &FileSample, now: SystemTime, cfg: &DetectionConfig) -> Vote {
    let id = TestId::FileAge;
    if !is_executable(sample) {
        return Vote::abstain(id, "not an executable");
    }
    let created = now.duration_since(sample.created_at);
    let modified = now.duration_since(sample.modified_at);
    let (created, modified) = match (created, modified) {
        (Ok(c), Ok(m)) => (c, m),
        // a timestamp in the future is its own red flag
        _ => return Vote::malicious(id, None, "timestamp in the future (clock skew)"),
    };
    let age = created.min(modified).as_secs();
    if age > cfg.min_age_seconds {
        Vote::benign(id, Some(age as f64), format!("age {age}s"))
    } else {
        Vote::malicious(id, Some(age as f64), format!("age {age}s"))
    }
}
