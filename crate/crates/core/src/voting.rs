//! Vote aggregation: collect per-test votes into a scorecard and classify
//! by (weighted) majority. Abstentions never count toward either side, and
//! a sample with too few effective votes fails safe to malicious rather
//! than being called clean on thin evidence.

use std::collections::BTreeMap;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FileSample;
use crate::signatures::SignatureDb;
use crate::stats::ControlCurve;
use crate::votetests::{self, DetectionConfig, TestId, Verdict, Vote};

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("no votes to aggregate")]
    NoVotes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Benign,
    Malicious,
}

/// How votes combine. Default: every test weighs 1.0, ties break to
/// malicious, and fewer than three effective votes is "insufficient
/// evidence" (also malicious).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VotePolicy {
    /// Per-test weight overrides; tests not listed weigh 1.0.
    #[serde(default)]
    pub weights: BTreeMap<TestId, f64>,
    pub tie_breaks_to: Classification,
    pub min_effective_votes: usize,
}

impl Default for VotePolicy {
    fn default() -> VotePolicy {
        VotePolicy {
            weights: BTreeMap::new(),
            tie_breaks_to: Classification::Malicious,
            min_effective_votes: 3,
        }
    }
}

impl VotePolicy {
    pub fn weight(&self, test: TestId) -> f64 {
        self.weights.get(&test).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (t, w) in &self.weights {
            if !w.is_finite() || *w <= 0.0 {
                return Err(format!("weight for {t} must be positive, got {w}"));
            }
        }
        Ok(())
    }
}

/// Per-sample tally and final classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreCard {
    pub sample_id: String,
    pub benign_count: usize,
    pub malicious_count: usize,
    pub abstain_count: usize,
    /// Weighted sums behind the decision; equal to the counts under the
    /// default all-ones weighting.
    pub benign_score: f64,
    pub malicious_score: f64,
    pub classification: Classification,
    /// Set when fewer than `min_effective_votes` tests produced a verdict;
    /// such samples classify malicious by policy, not by majority.
    pub insufficient_evidence: bool,
    pub votes: Vec<Vote>,
}

/// Collate votes into a scorecard under the given policy.
pub fn aggregate(
    sample_id: &str,
    votes: Vec<Vote>,
    policy: &VotePolicy,
) -> Result<ScoreCard, VoteError> {
    if votes.is_empty() {
        return Err(VoteError::NoVotes);
    }
    let mut benign_count = 0usize;
    let mut malicious_count = 0usize;
    let mut abstain_count = 0usize;
    let mut benign_score = 0.0f64;
    let mut malicious_score = 0.0f64;
    for v in &votes {
        match v.verdict {
            Verdict::Benign => {
                benign_count += 1;
                benign_score += policy.weight(v.test_id);
            }
            Verdict::Malicious => {
                malicious_count += 1;
                malicious_score += policy.weight(v.test_id);
            }
            Verdict::Abstain => abstain_count += 1,
        }
    }
    let effective = benign_count + malicious_count;
    let insufficient_evidence = effective < policy.min_effective_votes;
    let classification = if insufficient_evidence || malicious_score > benign_score {
        Classification::Malicious
    } else if benign_score > malicious_score {
        Classification::Benign
    } else {
        policy.tie_breaks_to
    };
    Ok(ScoreCard {
        sample_id: sample_id.to_string(),
        benign_count,
        malicious_count,
        abstain_count,
        benign_score,
        malicious_score,
        classification,
        insufficient_evidence,
        votes,
    })
}

/// Loaded detection assets shared across samples.
#[derive(Debug, Clone)]
pub struct Assets {
    pub signatures: SignatureDb,
    pub curve: ControlCurve,
}

impl Assets {
    pub fn bundled() -> Assets {
        Assets {
            signatures: SignatureDb::bundled(),
            curve: ControlCurve::bundled(),
        }
    }
}

/// Run every enabled test on a sample (key scanning only for executables)
/// and aggregate the votes. Votes land in canonical (alphabetical) test
/// order; the whole pipeline is deterministic for fixed inputs and `now`.
pub fn classify_sample_at(
    sample: &FileSample,
    assets: &Assets,
    cfg: &DetectionConfig,
    policy: &VotePolicy,
    now: SystemTime,
) -> ScoreCard {
    let mut votes = Vec::with_capacity(TestId::ALL.len());
    for test in TestId::ALL {
        if !cfg.enabled_tests.contains(&test) {
            continue;
        }
        let vote = match test {
            TestId::Bitbyte => votetests::test_bitbyte(sample, &assets.curve, cfg),
            TestId::CryptoArtifacts => crypto_vote(sample),
            TestId::ExtensionEntropy => votetests::test_extension_entropy(sample, cfg),
            TestId::FileAge => votetests::test_file_age(sample, now, cfg),
            TestId::FileEntropy => votetests::test_file_entropy(sample, cfg),
            TestId::FilenameEntropy => votetests::test_filename_entropy(sample, cfg),
            TestId::KnownExtension => votetests::test_known_extension(sample, &assets.signatures, cfg),
            TestId::MagicNumber => votetests::test_magic_number(sample, &assets.signatures, cfg),
            TestId::Printable => votetests::test_printable(sample, &assets.signatures, cfg),
            TestId::RansomNote => votetests::test_ransom_note(sample, cfg),
        };
        votes.push(vote);
    }
    aggregate(&sample.id, votes, policy).expect("at least one enabled test")
}

/// Same, stamped with the current time.
pub fn classify_sample(
    sample: &FileSample,
    assets: &Assets,
    cfg: &DetectionConfig,
    policy: &VotePolicy,
) -> ScoreCard {
    classify_sample_at(sample, assets, cfg, policy, SystemTime::now())
}

fn crypto_vote(sample: &FileSample) -> Vote {
    if !votetests::is_executable(sample) {
        return Vote::abstain(TestId::CryptoArtifacts, "not an executable");
    }
    match sample.body() {
        Ok(body) if !body.is_empty() => crate::cryptoscan::test_crypto_artifacts(&body),
        Ok(_) => Vote::abstain(TestId::CryptoArtifacts, "empty file"),
        Err(e) => Vote::abstain(TestId::CryptoArtifacts, format!("unreadable: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    fn vote(test: TestId, verdict: Verdict) -> Vote {
        Vote {
            test_id: test,
            verdict,
            measured: None,
            evidence: String::new(),
        }
    }

    fn votes_of(benign: usize, malicious: usize, abstain: usize) -> Vec<Vote> {
        let mut v = Vec::new();
        let ids = TestId::ALL;
        let mut i = 0;
        for _ in 0..benign {
            v.push(vote(ids[i % ids.len()], Verdict::Benign));
            i += 1;
        }
        for _ in 0..malicious {
            v.push(vote(ids[i % ids.len()], Verdict::Malicious));
            i += 1;
        }
        for _ in 0..abstain {
            v.push(vote(ids[i % ids.len()], Verdict::Abstain));
            i += 1;
        }
        v
    }

    #[test]
    fn majority_benign_wins() {
        let card = aggregate("s", votes_of(6, 2, 0), &VotePolicy::default()).unwrap();
        assert_eq!(card.classification, Classification::Benign);
        assert_eq!(card.benign_count, 6);
        assert_eq!(card.malicious_count, 2);
        assert!(!card.insufficient_evidence);
    }

    #[test]
    fn tie_breaks_to_malicious_by_default() {
        let card = aggregate("s", votes_of(3, 3, 0), &VotePolicy::default()).unwrap();
        assert_eq!(card.classification, Classification::Malicious);

        let benign_ties = VotePolicy {
            tie_breaks_to: Classification::Benign,
            ..VotePolicy::default()
        };
        let card = aggregate("s", votes_of(3, 3, 0), &benign_ties).unwrap();
        assert_eq!(card.classification, Classification::Benign);
    }

    #[test]
    fn all_abstain_is_insufficient_evidence() {
        let card = aggregate("s", votes_of(0, 0, 8), &VotePolicy::default()).unwrap();
        assert_eq!(card.classification, Classification::Malicious);
        assert!(card.insufficient_evidence);
        assert_eq!(card.abstain_count, 8);
    }

    #[test]
    fn no_votes_is_an_error() {
        assert!(matches!(
            aggregate("s", Vec::new(), &VotePolicy::default()),
            Err(VoteError::NoVotes)
        ));
    }

    #[test]
    fn weights_shift_the_majority() {
        let mut policy = VotePolicy::default();
        policy.weights.insert(TestId::Bitbyte, 5.0);
        // one heavy malicious vote against three benign
        let mut votes = vec![
            vote(TestId::FileEntropy, Verdict::Benign),
            vote(TestId::FilenameEntropy, Verdict::Benign),
            vote(TestId::KnownExtension, Verdict::Benign),
        ];
        votes.push(vote(TestId::Bitbyte, Verdict::Malicious));
        let card = aggregate("s", votes, &policy).unwrap();
        assert_eq!(card.classification, Classification::Malicious);
        assert_eq!(card.malicious_score, 5.0);
        assert_eq!(card.benign_score, 3.0);
    }

    #[test]
    fn policy_rejects_nonpositive_weights() {
        let mut policy = VotePolicy::default();
        policy.weights.insert(TestId::Bitbyte, 0.0);
        assert!(policy.validate().is_err());
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let policy = VotePolicy::default();
        for benign in 0..5usize {
            for malicious in 0..5usize {
                for abstain in 0..3usize {
                    if benign + malicious + abstain == 0 {
                        continue;
                    }
                    let mut votes = votes_of(benign, malicious, abstain);
                    let base = aggregate("s", votes.clone(), &policy).unwrap();
                    for _ in 0..5 {
                        // Fisher-Yates with the seeded rng
                        for i in (1..votes.len()).rev() {
                            let j = (rng.next_u32() as usize) % (i + 1);
                            votes.swap(i, j);
                        }
                        let shuffled = aggregate("s", votes.clone(), &policy).unwrap();
                        assert_eq!(shuffled.classification, base.classification);
                        assert_eq!(shuffled.benign_count, base.benign_count);
                    }
                }
            }
        }
    }

    #[test]
    fn abstains_never_change_the_outcome() {
        let policy = VotePolicy::default();
        for benign in 0..5usize {
            for malicious in 0..5usize {
                if benign + malicious == 0 {
                    continue;
                }
                let base = aggregate("s", votes_of(benign, malicious, 0), &policy).unwrap();
                for extra in 1..4usize {
                    let more = aggregate("s", votes_of(benign, malicious, extra), &policy).unwrap();
                    assert_eq!(more.classification, base.classification);
                }
            }
        }
    }

    #[test]
    fn flipping_benign_to_malicious_is_monotone() {
        let policy = VotePolicy::default();
        for benign in 1..6usize {
            for malicious in 0..6usize {
                let before = aggregate("s", votes_of(benign, malicious, 0), &policy).unwrap();
                let after =
                    aggregate("s", votes_of(benign - 1, malicious + 1, 0), &policy).unwrap();
                if before.classification == Classification::Malicious {
                    assert_eq!(after.classification, Classification::Malicious);
                }
            }
        }
    }

    fn sample_from(name: &str, content: &[u8]) -> FileSample {
        FileSample::from_bytes(name, content)
    }

    #[test]
    fn encrypted_looking_sample_classifies_malicious() {
        let assets = Assets::bundled();
        let cfg = DetectionConfig::default();
        let policy = VotePolicy::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let mut content = vec![0u8; 8192];
        rng.fill_bytes(&mut content);
        let sample = sample_from("window.docx.h8Jx0pQz", &content);
        let card = classify_sample(&sample, &assets, &cfg, &policy);
        assert_eq!(card.classification, Classification::Malicious);
        let malicious: Vec<TestId> = card
            .votes
            .iter()
            .filter(|v| v.verdict == Verdict::Malicious)
            .map(|v| v.test_id)
            .collect();
        assert!(malicious.contains(&TestId::FileEntropy), "{malicious:?}");
        assert!(malicious.contains(&TestId::Bitbyte));
        assert!(malicious.contains(&TestId::KnownExtension));
        // magic abstains on the unknown extension
        let magic = card
            .votes
            .iter()
            .find(|v| v.test_id == TestId::MagicNumber)
            .unwrap();
        assert_eq!(magic.verdict, Verdict::Abstain);
    }

    #[test]
    fn structured_docx_sample_classifies_benign() {
        let assets = Assets::bundled();
        let cfg = DetectionConfig::default();
        let policy = VotePolicy::default();
        let mut content = b"PK\x03\x04\x14\x00\x06\x00".to_vec();
        let words = crate::corpus::word_list();
        let mut i = 0;
        while content.len() < 4096 {
            content.extend_from_slice(words[i % words.len()].as_bytes());
            content.extend_from_slice(&[0, 0, 0]);
            i += 1;
        }
        let sample = sample_from("quarterly_report.docx", &content);
        let card = classify_sample(&sample, &assets, &cfg, &policy);
        assert_eq!(card.classification, Classification::Benign);
        assert!(card.benign_count >= 4, "only {} benign votes", card.benign_count);
    }

    // With a well-known .txt extension most name/extension tests stay
    // benign and outvote the note detector; the extensionless fixture
    // below is the shape the tie policy catches.
    #[test]
    fn ransom_note_fixtures_trace_through_the_rules() {
        let assets = Assets::bundled();
        let cfg = DetectionConfig::default();
        let policy = VotePolicy::default();
        // long enough for the full bitbyte checkpoint range
        let mut body =
            b"all files encrypted; send bitcoin to our wallet to recover them.\n".to_vec();
        let words = crate::corpus::word_list();
        let mut i = 0;
        while body.len() < 420 {
            body.extend_from_slice(words[(i * 13) % words.len()].as_bytes());
            body.push(b' ');
            i += 1;
        }

        let with_ext = sample_from("readme_decrypt.txt", &body);
        let card = classify_sample(&with_ext, &assets, &cfg, &policy);
        assert_eq!(card.classification, Classification::Benign);
        assert_eq!(card.malicious_count, 1); // ransom_note only

        let bare = sample_from("README_DECRYPT", &body);
        let card = classify_sample(&bare, &assets, &cfg, &policy);
        assert_eq!(card.classification, Classification::Malicious);
        assert_eq!(card.malicious_count, 2); // ransom_note + known_extension
        assert_eq!(card.benign_count, 2); // bitbyte + filename entropy
        assert!(!card.insufficient_evidence);
    }

    #[test]
    fn scorecards_serialize_with_stable_field_order() {
        let card = aggregate("s", votes_of(2, 1, 1), &VotePolicy::default()).unwrap();
        let a = serde_json::to_string(&card).unwrap();
        let b = serde_json::to_string(&card).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"sample_id\""));
    }
}
