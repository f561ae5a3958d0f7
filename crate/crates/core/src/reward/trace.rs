use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Turn-level reward values for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrace {
    pub turns: usize,
    pub outcomes: Vec<bool>,
    /// `values[t - 1]` is the reward after turn `t`; the implicit starting
    /// value is 0.
    pub values: Vec<f64>,
}

/// Evaluates the guiding-distance reward recurrence.
///
/// With `d = turns - t`, a successful turn moves the value a `1 / (d + 1)`
/// fraction of the way up to 1 and a failed turn moves it down by the same
/// amount, clamped at 0. Each step is computed as a single division,
/// `(d * v + 1) / (d + 1)` or `((d + 2) * v - 1) / (d + 1)`, so the last
/// turn lands exactly on `1` or `2v - 1`.
pub fn reward_trace(turns: usize, outcomes: &[bool]) -> Result<RewardTrace> {
    if turns == 0 {
        return Err(Error::InvalidInput(
            "reward trace needs at least one turn".into(),
        ));
    }
    if outcomes.len() != turns {
        return Err(Error::InvalidInput(format!(
            "expected {turns} outcomes, got {}",
            outcomes.len()
        )));
    }
    let mut values = Vec::with_capacity(turns);
    let mut prev = 0.0_f64;
    for (i, &success) in outcomes.iter().enumerate() {
        let distance = (turns - (i + 1)) as f64;
        let next = if success {
            (distance * prev + 1.0) / (distance + 1.0)
        } else {
            (((distance + 2.0) * prev - 1.0) / (distance + 1.0)).max(0.0)
        };
        let next = next.clamp(0.0, 1.0);
        values.push(next);
        prev = next;
    }
    Ok(RewardTrace {
        turns,
        outcomes: outcomes.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigInt, BigRational, One, ToPrimitive, Zero};
    use proptest::prelude::*;

    /// Literal step-by-step evaluation: weight first, then add and clamp.
    fn literal(turns: usize, outcomes: &[bool]) -> Vec<f64> {
        let mut v = 0.0_f64;
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let d = (turns - (i + 1)) as f64;
                let sign = if o { 1.0 } else { -1.0 };
                let w = (1.0 - v) / (d + 1.0) * sign;
                v = (v + w).max(0.0);
                v
            })
            .collect()
    }

    /// Same recurrence in exact rational arithmetic.
    fn exact(turns: usize, outcomes: &[bool]) -> Vec<BigRational> {
        let mut v = BigRational::zero();
        let one = BigRational::one();
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let d1 = BigRational::from_integer(BigInt::from(turns - i));
                let w = (&one - &v) / d1;
                v = if o { &v + w } else { &v - w };
                if v < BigRational::zero() {
                    v = BigRational::zero();
                }
                v.clone()
            })
            .collect()
    }

    #[test]
    fn all_success_t8() {
        let t = reward_trace(8, &[true; 8]).unwrap();
        let expected: Vec<f64> = (1..=8).map(|t| t as f64 / 8.0).collect();
        assert_eq!(t.values, expected);
    }

    #[test]
    fn all_failure_is_zero() {
        assert_eq!(
            reward_trace(3, &[false; 3]).unwrap().values,
            [0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn mixed_t3() {
        let t = reward_trace(3, &[true, false, true]).unwrap();
        assert_eq!(t.values, [1.0 / 3.0, 0.0, 1.0]);
        let lit = literal(3, &[true, false, true]);
        for (a, b) in t.values.iter().zip(lit) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            reward_trace(3, &[true]),
            Err(Error::InvalidInput(_))
        ));
        assert!(reward_trace(0, &[]).is_err());
    }

    fn outcomes() -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), 1..=32)
    }

    proptest! {
        #[test]
        fn matches_exact_rational(o in outcomes()) {
            let t = reward_trace(o.len(), &o).unwrap();
            for (got, want) in t.values.iter().zip(exact(o.len(), &o)) {
                prop_assert!((got - want.to_f64().unwrap()).abs() < 1e-12);
            }
            for (got, want) in t.values.iter().zip(literal(o.len(), &o)) {
                prop_assert!((got - want).abs() < 1e-12);
            }
        }

        #[test]
        fn bounded_and_monotone(o in outcomes()) {
            let t = reward_trace(o.len(), &o).unwrap();
            let mut prev = 0.0;
            for (&v, &ok) in t.values.iter().zip(&o) {
                prop_assert!((0.0..=1.0).contains(&v));
                if ok { prop_assert!(v >= prev); } else { prop_assert!(v <= prev); }
                prev = v;
            }
            let n = o.len();
            let before = if n > 1 { t.values[n - 2] } else { 0.0 };
            if o[n - 1] {
                prop_assert_eq!(t.values[n - 1], 1.0);
            } else {
                prop_assert_eq!(t.values[n - 1], (2.0 * before - 1.0).max(0.0));
            }
        }

        #[test]
        fn all_success_is_linear(n in 1usize..=32) {
            let t = reward_trace(n, &vec![true; n]).unwrap();
            for (i, v) in t.values.iter().enumerate() {
                prop_assert!((v - (i + 1) as f64 / n as f64).abs() < 1e-12);
            }
        }
    }
}
