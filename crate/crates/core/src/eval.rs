//! Point-forecast accuracy and the multivariate Diebold-Mariano test.
//!
//! The multivariate test collapses each day's 24 errors into one norm, so the
//! loss differential is a single daily series:
//! `delta_d = ||e_b,d||_p - ||e_a,d||_p`, `t = sqrt(N) mean(delta) / sd(delta)`
//! and `p = 1 - Phi(t)`. A small p-value means model `a` is significantly
//! more accurate than model `b`.

use std::io::Write;

use libm::erfc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DayRow, HOURS};
use crate::stats;
use crate::strategy::ForecastMatrix;

/// p-values above this are shown as "not significant" in the heatmap export.
pub const SIGNIFICANCE_CUTOFF: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("error panel is empty")]
    EmptyPanel,
    #[error("shape mismatch: {0} vs {1} days")]
    ShapeMismatch(usize, usize),
    #[error("dates of `{0}` do not line up with the actual prices")]
    Misaligned(String),
    #[error("at least two error panels are needed")]
    TooFewPanels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPanel {
    pub strategy: String,
    /// actual - forecast, per day and hour.
    pub errors: Vec<DayRow>,
}

impl ErrorPanel {
    pub fn new(strategy: impl Into<String>, errors: Vec<DayRow>) -> Self {
        Self {
            strategy: strategy.into(),
            errors,
        }
    }

    pub fn from_forecasts(
        actual: &ForecastMatrix,
        forecast: &ForecastMatrix,
    ) -> Result<Self, EvalError> {
        if actual.n_days() != forecast.n_days() {
            return Err(EvalError::ShapeMismatch(actual.n_days(), forecast.n_days()));
        }
        if actual.dates != forecast.dates {
            return Err(EvalError::Misaligned(forecast.strategy.clone()));
        }
        let errors = actual
            .values
            .iter()
            .zip(&forecast.values)
            .map(|(a, f)| std::array::from_fn(|h| a[h] - f[h]))
            .collect();
        Ok(Self::new(forecast.strategy.clone(), errors))
    }

    pub fn n_days(&self) -> usize {
        self.errors.len()
    }

    fn cells(&self) -> impl Iterator<Item = f64> + '_ {
        self.errors.iter().flatten().copied()
    }
}

pub fn rmse(panel: &ErrorPanel) -> Result<f64, EvalError> {
    if panel.errors.is_empty() {
        return Err(EvalError::EmptyPanel);
    }
    let n = (panel.n_days() * HOURS) as f64;
    Ok((panel.cells().map(|e| e * e).sum::<f64>() / n).sqrt())
}

pub fn mae(panel: &ErrorPanel) -> Result<f64, EvalError> {
    if panel.errors.is_empty() {
        return Err(EvalError::EmptyPanel);
    }
    let n = (panel.n_days() * HOURS) as f64;
    Ok(panel.cells().map(f64::abs).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormOrder {
    L1,
    L2,
}

impl NormOrder {
    pub fn from_order(p: u8) -> Option<Self> {
        match p {
            1 => Some(Self::L1),
            2 => Some(Self::L2),
            _ => None,
        }
    }

    /// (sum_h |e_h|^p)^(1/p) of one day of errors.
    pub fn daily_norm(self, row: &DayRow) -> f64 {
        match self {
            Self::L1 => row.iter().map(|e| e.abs()).sum(),
            Self::L2 => row.iter().map(|e| e * e).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub p_value: f64,
    pub statistic: f64,
    pub norm_order: NormOrder,
    pub n_days: usize,
    /// The loss differential had zero spread.
    pub degenerate: bool,
}

/// Upper-tail standard normal probability, 1 - Phi(t).
fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Tests H0 "`a` is not more accurate than `b`".
pub fn dm_multivariate(
    a: &ErrorPanel,
    b: &ErrorPanel,
    norm_order: NormOrder,
) -> Result<DmResult, EvalError> {
    if a.n_days() != b.n_days() {
        return Err(EvalError::ShapeMismatch(a.n_days(), b.n_days()));
    }
    let n = a.n_days();
    if n == 0 {
        return Err(EvalError::EmptyPanel);
    }
    if n < 30 {
        log::warn!("DM test on only {n} days");
    }
    let delta: Vec<f64> = a
        .errors
        .iter()
        .zip(&b.errors)
        .map(|(ea, eb)| norm_order.daily_norm(eb) - norm_order.daily_norm(ea))
        .collect();
    let mean = stats::mean(&delta);
    let sd = stats::sample_std(&delta);
    if !(sd > 0.0) {
        // no spread: either identical losses or a constant gap
        let (statistic, p_value) = if mean == 0.0 {
            (0.0, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(DmResult {
            p_value,
            statistic,
            norm_order,
            n_days: n,
            degenerate: true,
        });
    }
    let statistic = (n as f64).sqrt() * mean / sd;
    Ok(DmResult {
        p_value: normal_sf(statistic),
        statistic,
        norm_order,
        n_days: n,
        degenerate: false,
    })
}

/// Pairwise p-values laid out like the heatmap: `cells[row][col]` is the
/// p-value that the column model beats the row model. Diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmMatrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<DmResult>>>,
}

impl DmMatrix {
    pub fn p_value(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col].map(|r| r.p_value)
    }

    /// Entries the heatmap paints black.
    pub fn not_significant(&self, row: usize, col: usize) -> bool {
        self.p_value(row, col)
            .is_some_and(|p| p > SIGNIFICANCE_CUTOFF)
    }

    /// Strategy names, then one row per strategy with p-values at 6 decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend((0..self.names.len()).map(|j| {
                self.p_value(i, j)
                    .map(|p| format!("{p:.6}"))
                    .unwrap_or_default()
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let n = self.names.len();
        let p: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| (0..n).map(|j| self.p_value(i, j)).collect())
            .collect();
        let flags: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| self.not_significant(i, j)).collect())
            .collect();
        let degenerate: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.cells[i][j].is_some_and(|r| r.degenerate))
                    .collect()
            })
            .collect();
        serde_json::json!({
            "layout": "p_value[row][col] tests H0: column model is not better than row model",
            "names": self.names,
            "p_value": p,
            "above_cutoff": flags,
            "cutoff": SIGNIFICANCE_CUTOFF,
            "degenerate": degenerate,
        })
    }
}

pub fn dm_matrix(panels: &[ErrorPanel], norm_order: NormOrder) -> Result<DmMatrix, EvalError> {
    if panels.len() < 2 {
        return Err(EvalError::TooFewPanels);
    }
    let n = panels.len();
    let mut cells = vec![vec![None; n]; n];
    for (row, worse) in panels.iter().enumerate() {
        for (col, better) in panels.iter().enumerate() {
            if row != col {
                cells[row][col] = Some(dm_multivariate(better, worse, norm_order)?);
            }
        }
    }
    Ok(DmMatrix {
        names: panels.iter().map(|p| p.strategy.clone()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub strategy: String,
    pub rmse: f64,
    pub mae: f64,
}

pub fn score(panel: &ErrorPanel) -> Result<Score, EvalError> {
    Ok(Score {
        strategy: panel.strategy.clone(),
        rmse: rmse(panel)?,
        mae: mae(panel)?,
    })
}

/// `strategy,rmse,mae`
pub fn write_scores_csv<W: Write>(scores: &[Score], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "rmse", "mae"])?;
    for s in scores {
        w.write_record([
            s.strategy.clone(),
            format!("{:.6}", s.rmse),
            format!("{:.6}", s.mae),
        ])?;
    }
    w.flush()?;
    Ok(())
}
