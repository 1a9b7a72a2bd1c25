//! Turns detected change-points into a calibration mask.
//!
//! The segment after the last change-point is the reference: it is always
//! kept, and its empirical quantiles form a gate. Every earlier segment is
//! kept only when its median lies strictly inside that gate.

use std::io::Write;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changepoint::ChangePointSet;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("series has {series} observations but change-points were computed on {cps}")]
    LengthMismatch { series: usize, cps: usize },
    #[error("quantile orders must satisfy 0 <= low < high <= 1, got ({0}, {1})")]
    InvalidOrders(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileOrders {
    pub low: f64,
    pub high: f64,
}

impl Default for QuantileOrders {
    fn default() -> Self {
        Self {
            low: 0.025,
            high: 0.975,
        }
    }
}

/// Days retained from a calibration window. Offsets are relative to the
/// window start; `origin` is that start's absolute day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMask {
    pub origin: usize,
    pub window_len: usize,
    /// Sorted, disjoint, non-adjacent half-open offset ranges.
    pub intervals: Vec<Range<usize>>,
    pub n_selected: usize,
    pub q_low: Option<f64>,
    pub q_high: Option<f64>,
    pub segment_medians: Vec<f64>,
    /// The reference segment had fewer than three observations.
    pub short_reference: bool,
}

impl CalibrationMask {
    pub fn full(origin: usize, window_len: usize) -> Self {
        Self {
            origin,
            window_len,
            intervals: if window_len > 0 {
                vec![0..window_len]
            } else {
                Vec::new()
            },
            n_selected: window_len,
            q_low: None,
            q_high: None,
            segment_medians: Vec::new(),
            short_reference: false,
        }
    }

    pub fn with_origin(mut self, origin: usize) -> Self {
        self.origin = origin;
        self
    }

    pub fn is_full(&self) -> bool {
        self.n_selected == self.window_len
    }

    pub fn contains_offset(&self, offset: usize) -> bool {
        self.intervals.iter().any(|r| r.contains(&offset))
    }

    /// Absolute day indices of the retained days, ascending.
    pub fn days(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals
            .iter()
            .flat_map(move |r| r.clone().map(move |o| o + self.origin))
    }
}

pub fn select_calibration(
    series: &[f64],
    cps: &ChangePointSet,
    orders: QuantileOrders,
) -> Result<CalibrationMask, SelectError> {
    if !(0.0..=1.0).contains(&orders.low)
        || !(0.0..=1.0).contains(&orders.high)
        || orders.low >= orders.high
    {
        return Err(SelectError::InvalidOrders(orders.low, orders.high));
    }
    let n = series.len();
    if cps.n_obs != n {
        return Err(SelectError::LengthMismatch {
            series: n,
            cps: cps.n_obs,
        });
    }
    let Some(&last) = cps.points.last() else {
        return Ok(CalibrationMask::full(0, n));
    };

    let reference = &series[last + 1..];
    let q_low = stats::quantile(reference, orders.low);
    let q_high = stats::quantile(reference, orders.high);
    let short_reference = reference.len() < 3;
    if short_reference {
        log::warn!(
            "reference segment has only {} observations",
            reference.len()
        );
    }

    let mut keep: Vec<Range<usize>> = Vec::new();
    let mut medians = Vec::with_capacity(cps.points.len());
    let mut start = 0;
    for &c in &cps.points {
        let m = stats::median(&series[start..=c]);
        medians.push(m);
        if q_low < m && m < q_high {
            push_merged(&mut keep, start..c + 1);
        }
        start = c + 1;
    }
    push_merged(&mut keep, last + 1..n);
    let n_selected = keep.iter().map(|r| r.len()).sum();
    Ok(CalibrationMask {
        origin: 0,
        window_len: n,
        intervals: keep,
        n_selected,
        q_low: Some(q_low),
        q_high: Some(q_high),
        segment_medians: medians,
        short_reference,
    })
}

fn push_merged(ranges: &mut Vec<Range<usize>>, r: Range<usize>) {
    match ranges.last_mut() {
        Some(prev) if prev.end == r.start => prev.end = r.end,
        _ => ranges.push(r),
    }
}

/// A mask for one forecast target, as consumed by [`write_mask_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRecord {
    pub target_date: NaiveDate,
    /// 1..=24
    pub hour: usize,
    pub mask: CalibrationMask,
}

/// Long-format mask export: `target_date,hour,window_day_offset,selected`.
pub fn write_mask_report<W: Write>(records: &[MaskRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target_date", "hour", "window_day_offset", "selected"])?;
    for rec in records {
        let date = rec.target_date.format("%Y-%m-%d").to_string();
        let hour = rec.hour.to_string();
        for offset in 0..rec.mask.window_len {
            let sel = if rec.mask.contains_offset(offset) {
                "1"
            } else {
                "0"
            };
            w.write_record([date.as_str(), hour.as_str(), &offset.to_string(), sel])?;
        }
    }
    w.flush()?;
    Ok(())
}
