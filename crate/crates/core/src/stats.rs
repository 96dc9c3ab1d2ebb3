//! Numeric kernels: Shannon entropy, chi-square uniformity p-value, and the
//! BitByte head-entropy profile with its precomputed control curve.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degrees of freedom for the byte-histogram chi-square test. Fixed at 255
/// regardless of how many distinct byte values were observed, matching the
/// ENT-style test, so p-values stay comparable across inputs.
pub const CHI_SQUARE_DOF: u32 = 255;

/// Seed used to generate the bundled control curve asset.
pub const BUNDLED_CURVE_SEED: u64 = 0xBEEF;
/// Monte Carlo trials behind the bundled control curve asset.
pub const BUNDLED_CURVE_TRIALS: u32 = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("sample too small: {len} bytes (minimum {min})")]
    SampleTooSmall { len: usize, min: usize },
    #[error("head too short: {len} bytes (minimum {min})")]
    HeadTooShort { len: usize, min: usize },
    #[error("invalid control curve: {0}")]
    InvalidCurve(String),
}

/// Shannon entropy of a byte string in bits per byte, in [0, 8].
pub fn shannon_entropy_bytes(data: &[u8]) -> Result<f64, StatsError> {
    if data.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut counts = [0u64; 256];
    for &b in data {
        counts[b as usize] += 1;
    }
    Ok(entropy_from_counts(&counts, data.len() as f64))
}

/// Shannon entropy of a string in bits per character, computed over Unicode
/// scalar values. Bounded by log2(len).
pub fn shannon_entropy_string(s: &str) -> Result<f64, StatsError> {
    if s.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    // BTreeMap keeps the summation order canonical, so equal multisets of
    // characters produce bit-identical entropies
    let mut counts: std::collections::BTreeMap<char, u64> = std::collections::BTreeMap::new();
    let mut n = 0u64;
    for c in s.chars() {
        *counts.entry(c).or_insert(0) += 1;
        n += 1;
    }
    let n = n as f64;
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        h -= p * p.log2();
    }
    Ok(h.max(0.0))
}

fn entropy_from_counts(counts: &[u64; 256], n: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts.iter() {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h.max(0.0)
}

/// Outcome of the byte-uniformity chi-square test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: u32,
    /// Probability that uniform-random bytes would exceed the observed
    /// statistic. Low p means the content is structured, not random.
    pub p_value: f64,
}

/// Chi-square uniformity test over the 256 byte-value bins.
///
/// statistic = sum over bins of (observed - expected)^2 / expected with
/// expected = n/256; p = Q(dof/2, statistic/2). Callers wanting a detection
/// vote should enforce their own minimum-size floor and abstain below it.
pub fn chi_square_p(data: &[u8]) -> Result<ChiSquareResult, StatsError> {
    if data.is_empty() {
        return Err(StatsError::SampleTooSmall { len: 0, min: 1 });
    }
    let mut counts = [0u64; 256];
    for &b in data {
        counts[b as usize] += 1;
    }
    let expected = data.len() as f64 / 256.0;
    let mut statistic = 0.0;
    for &c in counts.iter() {
        let d = c as f64 - expected;
        statistic += d * d / expected;
    }
    let p_value = gamma_q(CHI_SQUARE_DOF as f64 / 2.0, statistic / 2.0);
    Ok(ChiSquareResult {
        statistic,
        dof: CHI_SQUARE_DOF,
        p_value,
    })
}

/// Regularized upper incomplete gamma Q(a, x).
///
/// Series expansion of P for x < a + 1, Lentz continued fraction for Q
/// otherwise. Underflow comes out as exact 0.0; Q(a, 0) is exact 1.0.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cont_frac(a, x)
    }
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_ITMAX: usize = 1000;
const GAMMA_FPMIN: f64 = 1e-300;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..GAMMA_ITMAX {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cont_frac(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / GAMMA_FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_ITMAX {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < GAMMA_FPMIN {
            d = GAMMA_FPMIN;
        }
        c = b + an / c;
        if c.abs() < GAMMA_FPMIN {
            c = GAMMA_FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Expected Shannon entropies of uniform-random prefixes, used as the
/// reference the BitByte value is measured against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlCurve {
    pub seed: u64,
    pub trials: u32,
    /// Prefix lengths in bytes, ascending. Default: 8, 16, ..., 256.
    pub checkpoints: Vec<usize>,
    /// Mean entropy (bits/byte) of a uniform-random prefix of each length.
    pub values: Vec<f64>,
}

impl ControlCurve {
    /// The curve shipped with the crate (seed 0xBEEF, 10,000 trials).
    pub fn bundled() -> ControlCurve {
        let curve: ControlCurve =
            serde_json::from_str(include_str!("../assets/control_curve.json"))
                .expect("bundled control curve parses");
        curve.validate().expect("bundled control curve is valid");
        curve
    }

    pub fn from_json(json: &str) -> Result<ControlCurve, StatsError> {
        let curve: ControlCurve = serde_json::from_str(json)
            .map_err(|e| StatsError::InvalidCurve(e.to_string()))?;
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if self.checkpoints.is_empty() || self.checkpoints.len() != self.values.len() {
            return Err(StatsError::InvalidCurve(format!(
                "{} checkpoints vs {} values",
                self.checkpoints.len(),
                self.values.len()
            )));
        }
        if !self.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(StatsError::InvalidCurve(
                "checkpoints not strictly increasing".into(),
            ));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(StatsError::InvalidCurve(
                "values not strictly increasing".into(),
            ));
        }
        let last = *self.values.last().unwrap();
        if !(last > 7.0 && last < 8.0) {
            return Err(StatsError::InvalidCurve(format!(
                "final value {last} outside (7, 8)"
            )));
        }
        Ok(())
    }

    pub fn min_checkpoint(&self) -> usize {
        self.checkpoints[0]
    }
}

/// Monte Carlo estimate of the control curve at checkpoints 8, 16, ..., 256.
/// Deterministic for a fixed seed.
pub fn compute_control_curve(seed: u64, trials: u32) -> ControlCurve {
    assert!(trials >= 1000, "need at least 1000 trials for a stable curve");
    let checkpoints: Vec<usize> = (1..=32).map(|j| 8 * j).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(checkpoints.len());
    let mut buf = vec![0u8; *checkpoints.last().unwrap()];
    for &k in &checkpoints {
        let mut total = 0.0;
        for _ in 0..trials {
            rng.fill_bytes(&mut buf[..k]);
            total += shannon_entropy_bytes(&buf[..k]).unwrap();
        }
        values.push(total / trials as f64);
    }
    ControlCurve {
        seed,
        trials,
        checkpoints,
        values,
    }
}

/// BitByte value of a file head: the clamped sum, over every control
/// checkpoint that fits in the head, of how far the head's prefix entropy
/// falls below the random-data control. 0 means the head looks at least as
/// random as the control everywhere; low values indicate encrypted-looking
/// content, high values structured content.
pub fn bitbyte_value(head: &[u8], curve: &ControlCurve) -> Result<f64, StatsError> {
    let min = curve.min_checkpoint();
    if head.len() < min {
        return Err(StatsError::HeadTooShort {
            len: head.len(),
            min,
        });
    }
    let mut counts = [0u64; 256];
    let mut consumed = 0usize;
    let mut value = 0.0;
    for (&k, &control) in curve.checkpoints.iter().zip(curve.values.iter()) {
        if k > head.len() {
            break;
        }
        for &b in &head[consumed..k] {
            counts[b as usize] += 1;
        }
        consumed = k;
        let h = entropy_from_counts(&counts, k as f64);
        value += (control - h).max(0.0);
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    #[test]
    fn entropy_single_symbol_is_zero() {
        let data = vec![0x41u8; 1024];
        assert!(shannon_entropy_bytes(&data).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_all_bytes_once_is_eight() {
        let data: Vec<u8> = (0..=255).collect();
        assert_close(shannon_entropy_bytes(&data).unwrap(), 8.0, 1e-12);
    }

    #[test]
    fn entropy_two_symbols_is_one() {
        assert_close(shannon_entropy_bytes(b"abab").unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn entropy_empty_is_error() {
        assert_eq!(shannon_entropy_bytes(&[]), Err(StatsError::EmptyInput));
        assert_eq!(shannon_entropy_string(""), Err(StatsError::EmptyInput));
    }

    #[test]
    fn string_entropy_examples() {
        assert!(shannon_entropy_string("aaaa").unwrap().abs() < 1e-12);
        assert_close(shannon_entropy_string("ab").unwrap(), 1.0, 1e-12);
        // counts {i:2, o:2, c:2, n,v,e,.,d,x: 1 each} over 12 chars
        assert_close(
            shannon_entropy_string("invoice.docx").unwrap(),
            3.084_962_500_721_156,
            1e-10,
        );
    }

    #[test]
    fn string_entropy_handles_multibyte_chars() {
        // 2 distinct scalar values, equiprobable
        assert_close(shannon_entropy_string("éé@@").unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn chi_square_uniform_256_is_p_one() {
        let data: Vec<u8> = (0..=255).collect();
        let r = chi_square_p(&data).unwrap();
        assert!(r.statistic.abs() < 1e-9);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.dof, 255);
    }

    #[test]
    fn chi_square_two_value_blowup_underflows_to_zero() {
        let mut data = vec![0x00u8; 128];
        data.extend(vec![0x01u8; 128]);
        let r = chi_square_p(&data).unwrap();
        // by hand: bins 0 and 1 get (128-1)^2/1 each, remaining 254 bins 1 each
        assert_close(r.statistic, 32512.0, 1e-9);
        assert_eq!(r.p_value, 0.0);
    }

    // Frozen from two independent oracles (scipy chi2.sf and mpmath gammainc),
    // which agree to 15 digits at dof 255.
    const CHI_ORACLE: &[(f64, f64)] = &[
        (0.0, 1.0),
        (50.0, 1.0),
        (100.0, 1.0),
        (200.0, 0.995_425_444_541_951_9),
        (255.0, 0.488_222_521_770_406_37),
        (300.0, 0.027_727_522_053_904_83),
        (400.0, 1.660_002_524_412_339_7e-8),
        (1000.0, 9.378_477_343_657_88e-89),
    ];

    #[test]
    fn gamma_q_matches_frozen_oracle() {
        for &(stat, expected) in CHI_ORACLE {
            let p = gamma_q(255.0 / 2.0, stat / 2.0);
            assert!(
                (p - expected).abs() <= 1e-6,
                "statistic {stat}: got {p}, oracle {expected}"
            );
            if expected > 1e-30 {
                assert!(
                    ((p - expected) / expected).abs() <= 1e-9,
                    "statistic {stat}: relative error too large ({p} vs {expected})"
                );
            }
        }
    }

    #[test]
    fn gamma_q_matches_statrs() {
        // independent implementation check at assorted (a, x)
        for &(a, x) in &[
            (127.5, 10.0),
            (127.5, 127.5),
            (127.5, 200.0),
            (0.5, 1.0),
            (3.0, 0.25),
            (20.0, 19.0),
        ] {
            let ours = gamma_q(a, x);
            let theirs = statrs::function::gamma::gamma_ur(a, x);
            assert!(
                (ours - theirs).abs() < 1e-10,
                "Q({a},{x}): {ours} vs statrs {theirs}"
            );
        }
    }

    #[test]
    fn chi_square_p_monotone_in_statistic() {
        let stats = [0.0, 50.0, 100.0, 200.0, 255.0, 300.0, 400.0, 1000.0];
        let ps: Vec<f64> = stats.iter().map(|&s| gamma_q(127.5, s / 2.0)).collect();
        for w in ps.windows(2) {
            assert!(w[0] >= w[1], "p must be non-increasing in statistic");
        }
    }

    #[test]
    fn control_curve_deterministic_and_sane() {
        let a = compute_control_curve(7, 1000);
        let b = compute_control_curve(7, 1000);
        assert_eq!(a.values, b.values);
        a.validate().unwrap();
        // 8 random bytes are almost surely distinct: H near log2(8) = 3
        assert!(a.values[0] > 2.7 && a.values[0] < 3.1, "k=8: {}", a.values[0]);
        assert!(
            a.values[31] > 7.1 && a.values[31] < 7.3,
            "k=256: {}",
            a.values[31]
        );
    }

    #[test]
    fn bundled_curve_loads_and_validates() {
        let curve = ControlCurve::bundled();
        assert_eq!(curve.seed, BUNDLED_CURVE_SEED);
        assert_eq!(curve.trials, BUNDLED_CURVE_TRIALS);
        assert_eq!(curve.checkpoints.len(), 32);
        assert_eq!(curve.checkpoints[0], 8);
        assert_eq!(curve.checkpoints[31], 256);
    }

    #[test]
    fn bitbyte_all_zero_head_equals_curve_sum() {
        let curve = ControlCurve::bundled();
        let value = bitbyte_value(&[0u8; 256], &curve).unwrap();
        let sum: f64 = curve.values.iter().sum();
        assert_close(value, sum, 1e-9);
        // Monte Carlo puts the 32-checkpoint sum just under 200 bits.
        assert!(sum > 190.0 && sum < 210.0, "curve sum {sum}");
    }

    #[test]
    fn bitbyte_short_head_is_error() {
        let curve = ControlCurve::bundled();
        assert!(matches!(
            bitbyte_value(&[0u8; 4], &curve),
            Err(StatsError::HeadTooShort { .. })
        ));
    }

    #[test]
    fn bitbyte_uses_only_checkpoints_that_fit() {
        let curve = ControlCurve::bundled();
        // 100-byte head: checkpoints 8..=96 participate
        let value = bitbyte_value(&[0u8; 100], &curve).unwrap();
        let expect: f64 = curve
            .checkpoints
            .iter()
            .zip(&curve.values)
            .filter(|(&k, _)| k <= 100)
            .map(|(_, &v)| v)
            .sum();
        assert_close(value, expect, 1e-9);
    }

    #[test]
    fn bitbyte_random_head_is_small() {
        use rand::RngCore;
        let curve = ControlCurve::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut buf = [0u8; 256];
        for _ in 0..50 {
            rng.fill_bytes(&mut buf);
            let v = bitbyte_value(&buf, &curve).unwrap();
            assert!(v < 15.0, "random head scored {v}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn byte_entropy_stays_in_bounds(data in proptest::collection::vec(any::<u8>(), 1..2048)) {
                let h = shannon_entropy_bytes(&data).unwrap();
                prop_assert!((0.0..=8.0).contains(&h));
                prop_assert!(h <= (data.len() as f64).log2() + 1e-9);
            }

            #[test]
            fn string_entropy_bounded_by_log_len(s in "[a-zA-Z0-9 ._-]{1,120}") {
                let h = shannon_entropy_string(&s).unwrap();
                let n = s.chars().count() as f64;
                prop_assert!(h >= 0.0);
                prop_assert!(h <= n.log2() + 1e-9);
            }

            #[test]
            fn bitbyte_matches_per_prefix_recomputation(
                data in proptest::collection::vec(any::<u8>(), 8..512),
            ) {
                // the incremental-count fast path must equal summing
                // freshly computed prefix entropies
                let curve = ControlCurve::bundled();
                let fast = bitbyte_value(&data, &curve).unwrap();
                let slow: f64 = curve
                    .checkpoints
                    .iter()
                    .zip(&curve.values)
                    .filter(|(&k, _)| k <= data.len())
                    .map(|(&k, &c)| (c - shannon_entropy_bytes(&data[..k]).unwrap()).max(0.0))
                    .sum();
                prop_assert!((fast - slow).abs() < 1e-9);
                prop_assert!(fast >= 0.0);
                prop_assert!(fast <= curve.values.iter().sum::<f64>() + 1e-9);
            }
        }
    }
}
