use crate::error::{Error, Result};

/// Index of the highest score; ties go to the lowest index.
pub fn rank_candidates(scores: &[f64]) -> Result<usize> {
    let (first, rest) = scores
        .split_first()
        .ok_or_else(|| Error::InvalidInput("no candidate scores to rank".into()))?;
    let mut best = (0, *first);
    for (i, &s) in rest.iter().enumerate() {
        if s > best.1 || best.1.is_nan() {
            best = (i + 1, s);
        }
    }
    Ok(best.0)
}
