//! Numeric kernel shared by the bound, oracle and channel code.
//!
//! All logarithms are base 2 and every `0 · log 0` term is taken to be zero
//! through [`xlog2x`].

use crate::error::{Error, Result};

/// `x · log₂ x`, with the limit value 0 at `x = 0`.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Exact binomial coefficient. Returns 0 when `k > n`.
///
/// Every coefficient with `n ≤ 128` fits; larger `n` is computed exactly as
/// long as the result stays representable, otherwise [`Error::Overflow`].
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    // Pascal row up to column k, additive only so nothing overflows before
    // the result itself would.
    let mut row = vec![0u128; k as usize + 1];
    row[0] = 1;
    for i in 1..=n {
        let top = (i.min(k)) as usize;
        for j in (1..=top).rev() {
            row[j] = row[j]
                .checked_add(row[j - 1])
                .ok_or(Error::Overflow { n, k })?;
        }
    }
    Ok(row[k as usize])
}

/// Non-negative, unnormalized probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("weight vector must not be empty".into()));
        }
        if let Some(bad) = entries.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Domain(format!(
                "weight vector entries must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `ζ(w) = −Σ wᵢ log₂ wᵢ + (Σ wᵢ) log₂(Σ wᵢ)`.
///
/// This is the total weight times the Shannon entropy of the normalized
/// weights, so it is non-negative, concave and 1-homogeneous.
pub fn zeta_d(w: &WeightVector) -> f64 {
    zeta_unchecked(w.entries())
}

/// [`zeta_d`] on a raw slice; the caller guarantees non-negative entries.
pub(crate) fn zeta_unchecked(w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let value = xlog2x(total) - w.iter().map(|&x| xlog2x(x)).sum::<f64>();
    // rounding can leave a tiny negative residue for single-weight vectors
    value.max(0.0)
}

/// d-ary error entropy `−E log₂(E/(d−1)) − (1−E) log₂(1−E)`, valid on
/// `0 ≤ E ≤ (d−1)/d` where it rises monotonically from 0 to `log₂ d`.
pub fn shannon_d(e: f64, d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "dimension must be at least 2, got {d}"
        )));
    }
    let max_e = (d - 1) as f64 / d as f64;
    if !(0.0..=max_e).contains(&e) {
        return Err(Error::Domain(format!(
            "error rate {e} outside [0, {max_e}] for d = {d}"
        )));
    }
    Ok(shannon_d_unchecked(e, d))
}

pub(crate) fn shannon_d_unchecked(e: f64, d: u32) -> f64 {
    let d1 = (d - 1) as f64;
    let term_err = if e > 0.0 { -e * (e / d1).log2() } else { 0.0 };
    term_err - xlog2x(1.0 - e)
}

/// Sum in a fixed binary-tree order, so the result only depends on the
/// order of `values` and never on how work was split across threads.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (left, right) = values.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}
