use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];
pub const DEFAULT_SAMPLES: usize = 10;

/// Unbiased pass@k estimate from `n` samples of which `c` passed:
/// `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("k={k} exceeds n={n}")));
    }
    if c > n {
        return Err(Error::InvalidInput(format!("c={c} exceeds n={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    Ok(exact_pass_at_k(n, c, k).unwrap_or_else(|| float_pass_at_k(n, c, k)))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n-c,k)/C(n,k) = prod (n-c-i)/(n-i)` kept as a reduced integer
/// fraction, so the final value needs a single rounding.
fn exact_pass_at_k(n: usize, c: usize, k: usize) -> Option<f64> {
    let (mut num, mut den) = (1u128, 1u128);
    for i in 0..k {
        let a = (n - c - i) as u128;
        let b = (n - i) as u128;
        num = num.checked_mul(a)?;
        den = den.checked_mul(b)?;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    let (fail, total) = (den - num, den);
    if total > (1u128 << 53) {
        return None;
    }
    Some(fail as f64 / total as f64)
}

fn float_pass_at_k(n: usize, c: usize, k: usize) -> f64 {
    let mut prod = 1.0;
    for i in (n - c + 1)..=n {
        prod *= 1.0 - k as f64 / i as f64;
    }
    1.0 - prod
}

/// Best fraction of `reference` covered by any of the first `k` programs.
pub fn recall_at_k(
    per_program: &[BTreeSet<String>],
    reference: &BTreeSet<String>,
    k: usize,
) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidSpec(
            "reference dependency set is empty".into(),
        ));
    }
    if k == 0 || k > per_program.len() {
        return Err(Error::InvalidInput(format!(
            "k={k} outside 1..={}",
            per_program.len()
        )));
    }
    let best = per_program[..k]
        .iter()
        .map(|p| p.intersection(reference).count())
        .max()
        .unwrap_or(0);
    Ok(best as f64 / reference.len() as f64)
}

/// Unweighted mean of a per-k metric over `ks`.
pub fn mean_over_ks(values: &BTreeMap<usize, f64>, ks: &[usize]) -> Result<f64> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("no k values".into()));
    }
    let mut sum = 0.0;
    for k in ks {
        sum += values
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("missing value for k={k}")))?;
    }
    Ok(sum / ks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TutoringOutcome {
    pub recall: f64,
    pub pass: f64,
}

pub fn tutoring_outcome(
    recall: &BTreeMap<usize, f64>,
    pass: &BTreeMap<usize, f64>,
    ks: &[usize],
) -> Result<TutoringOutcome> {
    Ok(TutoringOutcome {
        recall: mean_over_ks(recall, ks)?,
        pass: mean_over_ks(pass, ks)?,
    })
}

/// Relative change from `pre` to `post`, in percent.
pub fn tor(pre: f64, post: f64) -> Result<f64> {
    if pre == 0.0 {
        return Err(Error::UndefinedTor);
    }
    if pre < 0.0 || !pre.is_finite() || !post.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tor needs pre > 0 and finite values, got pre={pre} post={post}"
        )));
    }
    Ok((post - pre) / pre * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pass_spot_values() {
        assert_eq!(pass_at_k(10, 0, 3).unwrap(), 0.0);
        assert_eq!(pass_at_k(10, 10, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(5, 2, 2).unwrap(), 0.7);
        assert_eq!(pass_at_k(5, 2, 1).unwrap(), 2.0 / 5.0);
        assert!(pass_at_k(3, 1, 4).is_err());
    }

    #[test]
    fn pass_large_n_uses_float_path() {
        let v = pass_at_k(400, 3, 200).unwrap();
        let expected = 1.0 - (198.0 / 400.0) * (199.0 / 399.0) * (200.0 / 398.0);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn recall_examples() {
        let r = set(&["a", "b"]);
        assert_eq!(
            recall_at_k(&[set(&["a"]), set(&["a", "b"])], &r, 2).unwrap(),
            1.0
        );
        assert_eq!(
            recall_at_k(&[set(&["a"])], &set(&["a", "b", "c"]), 1).unwrap(),
            1.0 / 3.0
        );
        assert!(matches!(
            recall_at_k(&[set(&["a"])], &BTreeSet::new(), 1),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn outcome_mean() {
        let pass: BTreeMap<usize, f64> = [(1, 0.2), (3, 0.4), (5, 0.5), (10, 0.6)].into();
        assert!((mean_over_ks(&pass, &DEFAULT_KS).unwrap() - 0.425).abs() < 1e-15);
        let partial: BTreeMap<usize, f64> = [(1, 0.2)].into();
        assert!(mean_over_ks(&partial, &DEFAULT_KS).is_err());
    }

    #[test]
    fn tor_values() {
        assert!((tor(45.9, 64.2).unwrap() - 39.87).abs() < 0.01);
        assert_eq!(tor(20.0, 10.0).unwrap(), -50.0);
        assert_eq!(tor(3.0, 3.0).unwrap(), 0.0);
        assert!(matches!(tor(0.0, 1.0), Err(Error::UndefinedTor)));
    }
}
