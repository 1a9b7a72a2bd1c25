//! Gaussian likelihood-ratio contrast for a simultaneous change in mean and
//! variance, evaluated in O(1) per split from prefix sums.

use super::NotError;

/// Prefix sums of a series centred on its overall mean, so segment variances
/// do not lose precision when the series sits far from zero.
#[derive(Debug, Clone)]
pub struct PrefixSums {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl PrefixSums {
    pub fn new(series: &[f64]) -> Self {
        let center = if series.is_empty() {
            0.0
        } else {
            series.iter().sum::<f64>() / series.len() as f64
        };
        let mut s1 = Vec::with_capacity(series.len() + 1);
        let mut s2 = Vec::with_capacity(series.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &x in series {
            let c = x - center;
            a += c;
            b += c * c;
            s1.push(a);
            s2.push(b);
        }
        Self { s1, s2 }
    }

    pub fn len(&self) -> usize {
        self.s1.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Maximum-likelihood variance of `series[s..=e]`, floored at `floor`.
    pub fn ml_variance(&self, s: usize, e: usize, floor: f64) -> f64 {
        let n = (e - s + 1) as f64;
        let sum = self.s1[e + 1] - self.s1[s];
        let sq = self.s2[e + 1] - self.s2[s];
        ((sq - sum * sum / n) / n).max(floor)
    }

    /// `n * log(variance)` for one segment: its -2 log-likelihood up to constants.
    pub fn segment_cost(&self, s: usize, e: usize, floor: f64) -> f64 {
        (e - s + 1) as f64 * self.ml_variance(s, e, floor).ln()
    }
}

/// R(s, e, b) = n_se log var_se - n_sb log var_sb - n_be log var_be.
pub fn contrast(
    series: &[f64],
    s: usize,
    e: usize,
    b: usize,
    min_seg_len: usize,
    var_floor: f64,
) -> Result<f64, NotError> {
    if e >= series.len() || b < s || b >= e || b - s + 1 < min_seg_len || e - b < min_seg_len {
        return Err(NotError::SegmentTooShort {
            s,
            e,
            b,
            min_seg_len,
        });
    }
    let sums = PrefixSums::new(series);
    Ok(contrast_from_sums(&sums, s, e, b, var_floor))
}

pub(crate) fn contrast_from_sums(
    sums: &PrefixSums,
    s: usize,
    e: usize,
    b: usize,
    var_floor: f64,
) -> f64 {
    sums.segment_cost(s, e, var_floor)
        - sums.segment_cost(s, b, var_floor)
        - sums.segment_cost(b + 1, e, var_floor)
}

/// Best admissible split of `[s, e]` and its contrast. Ties go to the
/// smallest split index. `None` when no split leaves `min_seg_len` on both sides.
pub(crate) fn best_split(
    sums: &PrefixSums,
    s: usize,
    e: usize,
    min_seg_len: usize,
    var_floor: f64,
) -> Option<(usize, f64)> {
    let first = s + min_seg_len - 1;
    let last = e.checked_sub(min_seg_len)?;
    if first > last {
        return None;
    }
    let mut best_b = first;
    let mut best_cost = f64::INFINITY;
    for b in first..=last {
        let cost = sums.segment_cost(s, b, var_floor) + sums.segment_cost(b + 1, e, var_floor);
        if cost < best_cost {
            best_cost = cost;
            best_b = b;
        }
    }
    Some((best_b, sums.segment_cost(s, e, var_floor) - best_cost))
}
