//! Command-line front end: scan files, evaluate corpora, generate synthetic
//! corpora, and run the key/API scanners over raw blobs.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or corpus error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use malscore::corpus::{generate_synthetic_corpus, ingest_file, SyntheticSpec};
use malscore::cryptoscan::{
    count_api_strings, find_aes_key_schedules, find_rsa_der_keys, find_salsa20_state, Blob,
    BlobKind, KeyHit,
};
use malscore::harness::{emit_reports, evaluate_corpus_at, ReportFormat, COMBINED_COLUMN};
use malscore::signatures::{ApiDictionary, KeywordSet, SignatureDb};
use malscore::stats::ControlCurve;
use malscore::votetests::{DetectionConfig, TestId};
use malscore::voting::{classify_sample, Assets, Classification, VotePolicy};

#[derive(Parser)]
#[command(
    name = "malscore",
    version,
    about = "Majority-voting ransomware artifact detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the classification commands.
#[derive(Args)]
struct DetectorArgs {
    /// Detection config JSON (thresholds, keywords, enabled tests; may
    /// include a "policy" object).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one threshold, e.g. --set bitbyte_threshold=60.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Alternative signature database JSON.
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Alternative keyword set JSON.
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Alternative control curve JSON.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify files and print their scorecards.
    Scan {
        /// Files to classify.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write one scorecard JSON object per line to this file.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Classify a labeled corpus and write the full evaluation report.
    Evaluate {
        /// Corpus root directory.
        root: PathBuf,
        /// Ground-truth manifest CSV (path,truth,family). Defaults to
        /// <root>/manifest.csv when present.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory for scorecards.jsonl, summary.csv, grid.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corpus seed to record in the report.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Generate a seeded synthetic corpus with ground-truth manifest.
    GenCorpus {
        /// Per-class counts JSON; defaults to the 1,700-file evaluation mix.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Generator seed (default 42).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a raw blob for cryptographic key material; hits as JSONL.
    Keyscan {
        blob: PathBuf,
        /// Run only the AES schedule scanner.
        #[arg(long)]
        aes: bool,
        /// Run only the Salsa20 state scanner.
        #[arg(long)]
        salsa: bool,
        /// Run only the RSA DER scanner.
        #[arg(long)]
        rsa: bool,
    },
    /// Profile Windows API strings in a raw blob; CSV on stdout.
    Apiscan {
        blob: PathBuf,
        /// Alternative API name dictionary (one name per line).
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Also print per-name counts.
        #[arg(long)]
        per_name: bool,
    },
}

/// On-disk config: every detection field plus an optional voting policy.
#[derive(Deserialize)]
struct ConfigFile {
    #[serde(flatten)]
    detection: DetectionConfig,
    #[serde(default)]
    policy: Option<VotePolicy>,
}

enum AppError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for AppError {
    fn from(e: E) -> AppError {
        AppError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap also lands here for --help/--version
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Scan {
            paths,
            jsonl,
            detector,
        } => scan(paths, jsonl, detector),
        Command::Evaluate {
            root,
            manifest,
            out,
            seed,
            detector,
        } => evaluate(root, manifest, out, seed, detector),
        Command::GenCorpus { spec, seed, out } => gen_corpus(spec, seed, out),
        Command::Keyscan {
            blob,
            aes,
            salsa,
            rsa,
        } => keyscan(blob, aes, salsa, rsa),
        Command::Apiscan {
            blob,
            dict,
            per_name,
        } => apiscan(blob, dict, per_name),
    }
}

fn load_detector(args: &DetectorArgs) -> Result<(DetectionConfig, VotePolicy, Assets), AppError> {
    let (mut cfg, mut policy) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let file: ConfigFile = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            (file.detection, file.policy.unwrap_or_default())
        }
        None => (DetectionConfig::default(), VotePolicy::default()),
    };
    if let Some(path) = &args.keywords {
        cfg.keywords = KeywordSet::load(path)?;
    }
    for kv in &args.set {
        apply_set(&mut cfg, &mut policy, kv)?;
    }
    cfg.validate().map_err(usage)?;
    policy.validate().map_err(usage)?;
    let signatures = match &args.signatures {
        Some(path) => SignatureDb::load(path)?,
        None => SignatureDb::bundled(),
    };
    let curve = match &args.curve {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading curve {}", path.display()))?;
            ControlCurve::from_json(&text)?
        }
        None => ControlCurve::bundled(),
    };
    Ok((cfg, policy, Assets { signatures, curve }))
}

fn apply_set(
    cfg: &mut DetectionConfig,
    policy: &mut VotePolicy,
    kv: &str,
) -> Result<(), AppError> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
    macro_rules! parse {
        () => {
            value
                .parse()
                .map_err(|_| usage(format!("--set {key}: cannot parse value {value:?}")))?
        };
    }
    match key {
        "printable_min" => cfg.printable_min = parse!(),
        "chi_p_threshold" => cfg.chi_p_threshold = parse!(),
        "bitbyte_threshold" => cfg.bitbyte_threshold = parse!(),
        "name_entropy_max_bits" => cfg.name_entropy_max_bits = parse!(),
        "ext_entropy_max_bits" => cfg.ext_entropy_max_bits = parse!(),
        "ransom_note_max_bytes" => cfg.ransom_note_max_bytes = parse!(),
        "min_age_seconds" => cfg.min_age_seconds = parse!(),
        "chi_min_bytes" => cfg.chi_min_bytes = parse!(),
        "chi_whole_file" => cfg.chi_whole_file = parse!(),
        "min_effective_votes" => policy.min_effective_votes = parse!(),
        "tie_breaks_to" => {
            policy.tie_breaks_to = match value.to_lowercase().as_str() {
                "benign" => Classification::Benign,
                "malicious" => Classification::Malicious,
                _ => return Err(usage(format!("--set tie_breaks_to: {value:?}"))),
            }
        }
        _ => {
            if let Some(test_name) = key.strip_prefix("weight.") {
                let test = TestId::ALL
                    .into_iter()
                    .find(|t| t.as_str() == test_name)
                    .ok_or_else(|| usage(format!("--set: unknown test {test_name:?}")))?;
                policy.weights.insert(test, parse!());
            } else {
                return Err(usage(format!("--set: unknown key {key:?}")));
            }
        }
    }
    Ok(())
}

fn scan(
    paths: Vec<PathBuf>,
    jsonl: Option<PathBuf>,
    detector: DetectorArgs,
) -> Result<(), AppError> {
    let (cfg, policy, assets) = load_detector(&detector)?;
    let mut jsonl_out = match &jsonl {
        Some(p) => Some(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ),
        None => None,
    };
    let mut failures = 0usize;
    for path in &paths {
        let sample = match ingest_file(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("skip {}: {e}", path.display());
                failures += 1;
                continue;
            }
        };
        let card = classify_sample(&sample, &assets, &cfg, &policy);
        let tag = match card.classification {
            Classification::Benign => "BENIGN",
            Classification::Malicious => "MALICIOUS",
        };
        let flag = if card.insufficient_evidence {
            " (insufficient evidence)"
        } else {
            ""
        };
        println!(
            "{tag}{flag}  {}  benign={} malicious={} abstain={}",
            sample.id, card.benign_count, card.malicious_count, card.abstain_count
        );
        for vote in &card.votes {
            println!(
                "    {:<18} {:<9} {}",
                vote.test_id.as_str(),
                format!("{:?}", vote.verdict),
                vote.evidence
            );
        }
        if let Some(f) = jsonl_out.as_mut() {
            use std::io::Write;
            writeln!(f, "{}", serde_json::to_string(&card).expect("card serializes"))
                .context("writing jsonl")?;
        }
    }
    if failures > 0 {
        return Err(anyhow::anyhow!("{failures} file(s) could not be read").into());
    }
    Ok(())
}

fn evaluate(
    root: PathBuf,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    detector: DetectorArgs,
) -> Result<(), AppError> {
    let (cfg, policy, _assets) = load_detector(&detector)?;
    let report = evaluate_corpus_at(
        &root,
        manifest.as_deref(),
        &cfg,
        &policy,
        seed,
        std::time::SystemTime::now(),
    )?;
    println!("samples evaluated: {}", report.samples_evaluated);
    if !report.io_errors.is_empty() {
        println!("unreadable files skipped: {}", report.io_errors.len());
    }
    println!(
        "{:<20} {:>6} {:>6} {:>6} {:>6} {:>9} {:>7} {:>10} {:>7} {:>9}",
        "test", "tp", "tn", "fp", "fn", "accuracy", "recall", "precision", "f1", "abstains"
    );
    for (id, tr) in &report.per_test {
        print_metrics_row(id.as_str(), tr);
    }
    print_metrics_row(COMBINED_COLUMN, &report.combined);
    if let Some(out_dir) = out {
        let written = emit_reports(&report, &out_dir, &ReportFormat::ALL)?;
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn print_metrics_row(name: &str, tr: &malscore::harness::TestReport) {
    let m = &tr.metrics;
    println!(
        "{:<20} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>10.4} {:>7.4} {:>9}",
        name,
        tr.matrix.tp,
        tr.matrix.tn,
        tr.matrix.fp,
        tr.matrix.fn_,
        m.accuracy,
        m.recall,
        m.precision,
        m.f1,
        tr.abstentions
    );
}

#[derive(Deserialize)]
struct SpecFile {
    #[serde(default)]
    plaintext_benign: u32,
    #[serde(default)]
    structured_benign: u32,
    #[serde(default)]
    compressed_like: u32,
    #[serde(default)]
    encrypted_like: u32,
    #[serde(default)]
    ransom_notes: u32,
    #[serde(default)]
    seed: Option<u64>,
}

fn gen_corpus(
    spec_path: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<(), AppError> {
    let mut spec = match &spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading spec {}", p.display()))?;
            let f: SpecFile = serde_json::from_str(&text)
                .map_err(|e| usage(format!("spec {}: {e}", p.display())))?;
            SyntheticSpec {
                plaintext_benign: f.plaintext_benign,
                structured_benign: f.structured_benign,
                compressed_like: f.compressed_like,
                encrypted_like: f.encrypted_like,
                ransom_notes: f.ransom_notes,
                seed: f.seed.unwrap_or(42),
                output_root: out.clone(),
            }
        }
        None => SyntheticSpec::default_eval(out.clone()),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let generated = generate_synthetic_corpus(&spec)?;
    println!(
        "wrote {} files (seed {}) under {}",
        generated.files_written,
        spec.seed,
        generated.root.display()
    );
    println!("manifest: {}", generated.manifest_path.display());
    Ok(())
}

fn keyscan(path: PathBuf, aes: bool, salsa: bool, rsa: bool) -> Result<(), AppError> {
    let blob = Blob::from_file(&path, BlobKind::Unknown)?;
    // no selector flags means run everything
    let all = !(aes || salsa || rsa);
    let mut hits: Vec<KeyHit> = Vec::new();
    if aes || all {
        match find_aes_key_schedules(&blob.bytes) {
            Ok(h) => hits.extend(h),
            Err(e) => eprintln!("aes scan skipped: {e}"),
        }
    }
    if salsa || all {
        hits.extend(find_salsa20_state(&blob.bytes));
    }
    if rsa || all {
        hits.extend(find_rsa_der_keys(&blob.bytes));
    }
    hits.sort_by_key(|h| (h.offset, h.algorithm));
    for hit in &hits {
        println!("{}", serde_json::to_string(hit).expect("hit serializes"));
    }
    eprintln!("{} hit(s) in {}", hits.len(), blob.source);
    Ok(())
}

fn apiscan(path: PathBuf, dict: Option<PathBuf>, per_name: bool) -> Result<(), AppError> {
    let dict = match &dict {
        Some(p) => ApiDictionary::load(p)?,
        None => ApiDictionary::bundled(),
    };
    let blob = Blob::from_file(&path, BlobKind::Unknown)?;
    let profile = count_api_strings(&blob.bytes, &dict);
    println!("name,total,size,per_kb");
    println!(
        "{},{},{},{:.4}",
        csv_field(&blob.source),
        profile.total_hits,
        profile.blob_size_bytes,
        profile.hits_per_kb
    );
    if per_name {
        println!();
        println!("api_name,count");
        for (name, count) in &profile.per_name_counts {
            println!("{name},{count}");
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
