//! Narrowest-Over-Threshold change-point detection for a piecewise-constant
//! mean and variance.
//!
//! Random subintervals are scored with the Gaussian mean+variance likelihood
//! ratio. For a given threshold the detector takes, among intervals whose
//! contrast exceeds it, the narrowest one, places a change-point at that
//! interval's best split and recurses on both sides. Sweeping the threshold
//! downwards gives the solution path; the final set minimises the
//! strengthened Schwarz criterion among path entries that respect the cap on
//! the number of change-points.

mod contrast;
mod intervals;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contrast::{contrast, PrefixSums};
pub use intervals::draw_intervals;

use contrast::best_split;

#[derive(Debug, Error, PartialEq)]
pub enum NotError {
    #[error("split {b} of [{s}, {e}] leaves a segment shorter than {min_seg_len}")]
    SegmentTooShort {
        s: usize,
        e: usize,
        b: usize,
        min_seg_len: usize,
    },
    #[error("series of length {n_obs} is shorter than the required {needed}")]
    SeriesTooShort { n_obs: usize, needed: usize },
    #[error("series contains a non-finite value at index {0}")]
    NonFiniteInput(usize),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotConfig {
    /// Number of random intervals drawn.
    pub n_intervals: usize,
    pub max_changepoints: usize,
    /// Shortest admissible segment. Two-point segments make the mean+variance
    /// likelihood degenerate (near-zero variances), so the default is a week.
    pub min_seg_len: usize,
    /// Exponent on `log(n)` in the sSIC penalty.
    pub ssic_alpha: f64,
    /// Floor on segment variances inside the logarithm.
    pub var_floor: f64,
    /// Free parameters per change-point and for the no-change model; the
    /// mean+variance model has `3k + 2`.
    pub params_per_changepoint: usize,
    pub base_params: usize,
    /// Also score the whole series as one interval.
    pub include_full_interval: bool,
    pub seed: u64,
}

impl Default for NotConfig {
    fn default() -> Self {
        Self {
            n_intervals: 10_000,
            max_changepoints: 12,
            min_seg_len: 7,
            ssic_alpha: 1.0,
            var_floor: 1e-8,
            params_per_changepoint: 3,
            base_params: 2,
            include_full_interval: true,
            seed: 0,
        }
    }
}

impl NotConfig {
    pub fn validate(&self) -> Result<(), NotError> {
        let bad = |m: &str| Err(NotError::InvalidConfig(m.to_string()));
        if self.n_intervals == 0 {
            return bad("n_intervals must be at least 1");
        }
        if self.min_seg_len < 2 {
            return bad("min_seg_len must be at least 2");
        }
        if !(self.ssic_alpha >= 1.0) {
            return bad("ssic_alpha must be at least 1");
        }
        if !(self.var_floor > 0.0) {
            return bad("var_floor must be positive");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    fn penalty(&self, k: usize, n_obs: usize) -> f64 {
        let params = (self.params_per_changepoint * k + self.base_params) as f64;
        params * (n_obs as f64).ln().powf(self.ssic_alpha)
    }
}

/// One entry of the solution path: the change-points NOT returns when every
/// interval with contrast at least `threshold` is admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub threshold: f64,
    pub points: Vec<usize>,
}

/// Detected change-points. `points[i]` is the last index of the segment to
/// its left, 0-based within the analysed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointSet {
    pub points: Vec<usize>,
    pub solution_path: Vec<PathStep>,
    pub n_obs: usize,
}

impl ChangePointSet {
    pub fn empty(n_obs: usize) -> Self {
        Self {
            points: Vec::new(),
            solution_path: vec![PathStep {
                threshold: f64::INFINITY,
                points: Vec::new(),
            }],
            n_obs,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Best split and contrast of one drawn interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalContrast {
    pub s: usize,
    pub e: usize,
    pub split: usize,
    pub contrast: f64,
}

impl IntervalContrast {
    fn width(&self) -> usize {
        self.e - self.s
    }
}

/// Anything that can segment one hourly series. The seed is derived by the
/// caller so results do not depend on scheduling.
pub trait ChangePointDetector: Send + Sync {
    fn detect(&self, series: &[f64], seed: u64) -> Result<ChangePointSet, NotError>;
}

#[derive(Debug, Clone, Default)]
pub struct NotDetector {
    pub config: NotConfig,
}

impl NotDetector {
    pub fn new(config: NotConfig) -> Self {
        Self { config }
    }
}

impl ChangePointDetector for NotDetector {
    fn detect(&self, series: &[f64], seed: u64) -> Result<ChangePointSet, NotError> {
        detect(series, &self.config.with_seed(seed))
    }
}

/// Detector that never finds a change, reducing NOT-calibrated strategies to
/// plain rolling windows.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoChangeDetector;

impl ChangePointDetector for NoChangeDetector {
    fn detect(&self, series: &[f64], _seed: u64) -> Result<ChangePointSet, NotError> {
        Ok(ChangePointSet::empty(series.len()))
    }
}

/// Contrasts at or below this are treated as no evidence of change.
const CONTRAST_EPS: f64 = 1e-9;

/// Path construction stops once a threshold yields this many points beyond
/// the cap; lower thresholds only add more.
const PATH_SLACK: usize = 4;

pub fn detect(series: &[f64], config: &NotConfig) -> Result<ChangePointSet, NotError> {
    detect_with_diagnostics(series, config).map(|(set, _)| set)
}

/// As [`detect`], also returning the scored intervals.
pub fn detect_with_diagnostics(
    series: &[f64],
    config: &NotConfig,
) -> Result<(ChangePointSet, Vec<IntervalContrast>), NotError> {
    config.validate()?;
    let n = series.len();
    if n < 2 * config.min_seg_len {
        return Err(NotError::SeriesTooShort {
            n_obs: n,
            needed: 2 * config.min_seg_len,
        });
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(NotError::NonFiniteInput(i));
    }

    let mut drawn = draw_intervals(n, config)?;
    if config.include_full_interval {
        drawn.push((0, n - 1));
    }
    let sums = PrefixSums::new(series);
    let scored: Vec<IntervalContrast> = drawn
        .iter()
        .filter_map(|&(s, e)| {
            best_split(&sums, s, e, config.min_seg_len, config.var_floor).map(
                |(split, contrast)| IntervalContrast {
                    s,
                    e,
                    split,
                    contrast,
                },
            )
        })
        .collect();

    let solution_path = solution_path(&scored, n, config);
    let points = select_by_ssic(&sums, &solution_path, n, config);
    Ok((
        ChangePointSet {
            points,
            solution_path,
            n_obs: n,
        },
        scored,
    ))
}

/// Ordering used to pick "the narrowest": width, then start, then draw order.
fn narrow_key(c: &[IntervalContrast], i: usize) -> (usize, usize, usize) {
    (c[i].width(), c[i].s, i)
}

struct Node {
    s: usize,
    e: usize,
    chosen: Option<usize>,
}

fn contains(s: usize, e: usize, c: &IntervalContrast) -> bool {
    s <= c.s && c.e <= e
}

/// Runs the narrowest-over-threshold recursion over the admissible intervals
/// in `eligible` (sorted by `narrow_key`). Returns `None` if more than `limit`
/// points would be placed.
fn run_not(
    cands: &[IntervalContrast],
    eligible: &[usize],
    n: usize,
    min_len: usize,
    limit: usize,
    nodes: &mut Vec<Node>,
) -> Option<Vec<usize>> {
    nodes.clear();
    let mut points = Vec::new();
    let mut stack = vec![(0usize, n - 1)];
    while let Some((s, e)) = stack.pop() {
        if e - s + 1 < min_len {
            continue;
        }
        let chosen = eligible
            .iter()
            .copied()
            .find(|&i| contains(s, e, &cands[i]));
        nodes.push(Node { s, e, chosen });
        if let Some(i) = chosen {
            let b = cands[i].split;
            points.push(b);
            if points.len() > limit {
                return None;
            }
            stack.push((b + 1, e));
            stack.push((s, b));
        }
    }
    points.sort_unstable();
    Some(points)
}

fn solution_path(cands: &[IntervalContrast], n: usize, config: &NotConfig) -> Vec<PathStep> {
    let mut path = vec![PathStep {
        threshold: f64::INFINITY,
        points: Vec::new(),
    }];
    let mut order: Vec<usize> = (0..cands.len())
        .filter(|&i| cands[i].contrast > CONTRAST_EPS)
        .collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .contrast
            .total_cmp(&cands[a].contrast)
            .then_with(|| narrow_key(cands, a).cmp(&narrow_key(cands, b)))
    });

    let min_len = 2 * config.min_seg_len;
    let limit = config.max_changepoints + PATH_SLACK;
    let mut eligible: Vec<usize> = Vec::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut g = 0;
    while g < order.len() {
        let threshold = cands[order[g]].contrast;
        let mut end = g;
        while end < order.len() && cands[order[end]].contrast == threshold {
            end += 1;
        }
        let group = &order[g..end];
        g = end;

        // The recursion only changes if a new interval would be picked at a
        // node that contains it: that node had no pick, or a wider one.
        let changed = path.len() == 1
            || group.iter().any(|&i| {
                nodes.iter().any(|node| {
                    contains(node.s, node.e, &cands[i])
                        && node
                            .chosen
                            .is_none_or(|c| narrow_key(cands, i) < narrow_key(cands, c))
                })
            });
        for &i in group {
            let key = narrow_key(cands, i);
            let pos = eligible.partition_point(|&j| narrow_key(cands, j) < key);
            eligible.insert(pos, i);
        }
        if !changed {
            continue;
        }
        match run_not(cands, &eligible, n, min_len, limit, &mut nodes) {
            Some(points) => {
                if path.last().is_some_and(|p| p.points != points) {
                    path.push(PathStep { threshold, points });
                }
            }
            None => break,
        }
    }
    path
}

/// sSIC(k) = sum_j n_j log var_j + p_k log(n)^alpha.
pub fn ssic(sums: &PrefixSums, points: &[usize], config: &NotConfig) -> f64 {
    let n = sums.len();
    let mut start = 0;
    let mut fit = 0.0;
    for &p in points.iter().chain(std::iter::once(&(n - 1))) {
        fit += sums.segment_cost(start, p, config.var_floor);
        start = p + 1;
    }
    fit + config.penalty(points.len(), n)
}

fn select_by_ssic(
    sums: &PrefixSums,
    path: &[PathStep],
    n: usize,
    config: &NotConfig,
) -> Vec<usize> {
    debug_assert_eq!(sums.len(), n);
    let mut best: Option<(f64, &PathStep)> = None;
    for step in path
        .iter()
        .filter(|p| p.points.len() <= config.max_changepoints)
    {
        let score = ssic(sums, &step.points, config);
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, step));
        }
    }
    best.map(|(_, s)| s.points.clone()).unwrap_or_default()
}

/// Writes the solution path as `threshold,n_points,points` rows, points
/// separated by `;`.
pub fn write_solution_path_csv<W: Write>(set: &ChangePointSet, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "n_points", "points"])?;
    for step in &set.solution_path {
        let pts: Vec<String> = step.points.iter().map(|p| p.to_string()).collect();
        w.write_record([
            step.threshold.to_string(),
            step.points.len().to_string(),
            pts.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_contrasts_csv<W: Write>(scored: &[IntervalContrast], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "e", "split", "contrast"])?;
    for c in scored {
        w.write_record([
            c.s.to_string(),
            c.e.to_string(),
            c.split.to_string(),
            c.contrast.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
