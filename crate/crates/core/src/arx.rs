//! Per-hour ARX model: weekday dummies, same-hour price lags 1, 2 and 7,
//! yesterday's min/max/last price and the day-ahead load, wind and solar
//! forecasts. Estimated by least squares on the calibration days.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{HourlyPanel, Series, HOURS, MAX_LAG};
use crate::transform::{self, TransformKind, TransformOptions, TransformParams};
use crate::window::CalibrationMask;

pub const N_FEATURES: usize = 16;

/// Smallest regression sample accepted by [`fit_arx`] (twice the parameter count).
pub const MIN_OBSERVATIONS: usize = 2 * N_FEATURES;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "dummy_mon",
    "dummy_tue",
    "dummy_wed",
    "dummy_thu",
    "dummy_fri",
    "dummy_sat",
    "dummy_sun",
    "price_lag1",
    "price_lag2",
    "price_lag7",
    "price_min_prev",
    "price_max_prev",
    "price_last_prev",
    "load_fcst",
    "wind_fcst",
    "solar_fcst",
];

#[derive(Debug, Error, PartialEq)]
pub enum ArxError {
    #[error("day {day} needs {MAX_LAG} days of history")]
    InsufficientHistory { day: usize },
    #[error("only {n} regression rows, at least {MIN_OBSERVATIONS} required")]
    TooFewObservations { n: usize },
    #[error("non-finite design value for day {day}")]
    NonFiniteDesign { day: usize },
    #[error("hour {0} is outside 1..=24")]
    InvalidHour(usize),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
}

/// Price transform plus the standardisation of the three exogenous series,
/// all fitted on one calibration sample for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub price: TransformParams,
    pub load: TransformParams,
    pub wind: TransformParams,
    pub solar: TransformParams,
}

impl FeatureScaling {
    pub fn identity() -> Self {
        Self::uniform(TransformParams::IDENTITY)
    }

    fn uniform(p: TransformParams) -> Self {
        Self {
            price: p,
            load: p,
            wind: p,
            solar: p,
        }
    }

    /// Fits the scaling on hour `hour` of `days`: prices with `price_kind`,
    /// exogenous series with a z-score when `standardize_exog` is set.
    pub fn fit(
        panel: &HourlyPanel,
        days: &[usize],
        hour: usize,
        price_kind: TransformKind,
        standardize_exog: bool,
        options: &TransformOptions,
    ) -> Result<Self, ArxError> {
        check_hour(hour)?;
        let values = |s: Series| -> Vec<f64> {
            days.iter().map(|&d| panel.series(s)[d][hour - 1]).collect()
        };
        let exog = |s: Series| -> Result<TransformParams, ArxError> {
            if standardize_exog {
                Ok(transform::fit_with(
                    TransformKind::ZScore,
                    &values(s),
                    options,
                )?)
            } else {
                Ok(TransformParams::IDENTITY)
            }
        };
        Ok(Self {
            price: transform::fit_with(price_kind, &values(Series::Price), options)?,
            load: exog(Series::Load)?,
            wind: exog(Series::Wind)?,
            solar: exog(Series::Solar)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub features: [f64; N_FEATURES],
    /// Transformed price of the target day, when it is known.
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArxCoefficients {
    pub alpha: [f64; 7],
    pub beta: [f64; 3],
    pub theta: [f64; 6],
    /// 1..=24
    pub hour: usize,
    pub n_obs_used: usize,
    pub rank_deficient: bool,
}

impl ArxCoefficients {
    pub fn to_vector(&self) -> [f64; N_FEATURES] {
        let mut v = [0.0; N_FEATURES];
        v[..7].copy_from_slice(&self.alpha);
        v[7..10].copy_from_slice(&self.beta);
        v[10..].copy_from_slice(&self.theta);
        v
    }

    pub fn from_vector(
        v: &[f64; N_FEATURES],
        hour: usize,
        n_obs_used: usize,
        rank_deficient: bool,
    ) -> Self {
        Self {
            alpha: v[..7].try_into().unwrap(),
            beta: v[7..10].try_into().unwrap(),
            theta: v[10..].try_into().unwrap(),
            hour,
            n_obs_used,
            rank_deficient,
        }
    }

    pub fn predict(&self, row: &DesignRow) -> f64 {
        self.to_vector()
            .iter()
            .zip(&row.features)
            .map(|(c, x)| c * x)
            .sum()
    }
}

fn check_hour(hour: usize) -> Result<(), ArxError> {
    if (1..=HOURS).contains(&hour) {
        Ok(())
    } else {
        Err(ArxError::InvalidHour(hour))
    }
}

/// Regressors for day `d`, hour `hour` (1..=24). The target is filled when
/// the day's price is inside the panel.
pub fn build_design_row(
    panel: &HourlyPanel,
    scaling: &FeatureScaling,
    d: usize,
    hour: usize,
) -> Result<DesignRow, ArxError> {
    check_hour(hour)?;
    if d < MAX_LAG || d >= panel.n_days() {
        return Err(ArxError::InsufficientHistory { day: d });
    }
    let h = hour - 1;
    let p = panel.prices();
    let yesterday = &p[d - 1];
    let min = yesterday.iter().copied().fold(f64::INFINITY, f64::min);
    let max = yesterday.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tp = |x: f64| scaling.price.apply(x);

    let mut f = [0.0; N_FEATURES];
    f[usize::from(panel.weekday(d)) - 1] = 1.0;
    f[7] = tp(p[d - 1][h]);
    f[8] = tp(p[d - 2][h]);
    f[9] = tp(p[d - 7][h]);
    f[10] = tp(min);
    f[11] = tp(max);
    f[12] = tp(yesterday[HOURS - 1]);
    f[13] = scaling.load.apply(panel.series(Series::Load)[d][h]);
    f[14] = scaling.wind.apply(panel.series(Series::Wind)[d][h]);
    f[15] = scaling.solar.apply(panel.series(Series::Solar)[d][h]);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(ArxError::NonFiniteDesign { day: d });
    }
    Ok(DesignRow {
        features: f,
        target: Some(tp(p[d][h])),
    })
}

/// Least-squares fit of hour `hour` on the days retained by `mask`.
pub fn fit_arx(
    panel: &HourlyPanel,
    mask: &CalibrationMask,
    hour: usize,
    scaling: &FeatureScaling,
) -> Result<ArxCoefficients, ArxError> {
    let days: Vec<usize> = mask.days().collect();
    fit_arx_days(panel, &days, hour, scaling)
}

pub fn fit_arx_days(
    panel: &HourlyPanel,
    days: &[usize],
    hour: usize,
    scaling: &FeatureScaling,
) -> Result<ArxCoefficients, ArxError> {
    check_hour(hour)?;
    let n = days.len();
    if n < MIN_OBSERVATIONS {
        return Err(ArxError::TooFewObservations { n });
    }
    let mut x = DMatrix::<f64>::zeros(n, N_FEATURES);
    let mut y = DVector::<f64>::zeros(n);
    for (i, &d) in days.iter().enumerate() {
        let row = build_design_row(panel, scaling, d, hour)?;
        let target = row
            .target
            .filter(|t| t.is_finite())
            .ok_or(ArxError::NonFiniteDesign { day: d })?;
        for (j, v) in row.features.iter().enumerate() {
            x[(i, j)] = *v;
        }
        y[i] = target;
    }
    let (beta, rank_deficient) = least_squares(x, &y);
    if rank_deficient {
        log::debug!("hour {hour}: rank-deficient design on {n} rows, using minimum-norm solution");
    }
    let v: [f64; N_FEATURES] = std::array::from_fn(|j| beta[j]);
    if v.iter().any(|c| !c.is_finite()) {
        return Err(ArxError::NonFiniteDesign { day: days[0] });
    }
    Ok(ArxCoefficients::from_vector(&v, hour, n, rank_deficient))
}

/// Solves min ||X b - y|| by Householder QR. If R has a negligible pivot the
/// minimum-norm solution is taken from the SVD instead. Returns the solution
/// and whether the design was rank deficient.
pub fn least_squares(x: DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, bool) {
    let (n, p) = x.shape();
    let tol = f64::EPSILON * n.max(p) as f64;
    if n >= p {
        let qr = x.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let full_rank = diag_max > 0.0 && r.diagonal().iter().all(|v| v.abs() > tol * diag_max);
        if full_rank {
            let qty = qr.q().transpose() * y;
            if let Some(b) = r.solve_upper_triangular(&qty) {
                return (b, false);
            }
        }
    }
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let b = svd
        .solve(y, tol * smax)
        .expect("both factors were requested");
    (b, true)
}

/// One-day-ahead price forecast: the linear predictor mapped back through
/// the inverse price transform.
pub fn forecast_hour(coeffs: &ArxCoefficients, row: &DesignRow, scaling: &FeatureScaling) -> f64 {
    scaling.price.invert(coeffs.predict(row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn panel_from(prices: Vec<[f64; 24]>) -> HourlyPanel {
        let n = prices.len();
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(); // Monday
        let dates = start.iter_days().take(n).collect();
        let exo = |k: f64| {
            (0..n)
                .map(|d| std::array::from_fn(|h| k * (d * 24 + h) as f64))
                .collect()
        };
        HourlyPanel::new(dates, prices, exo(1.0), exo(2.0), exo(3.0)).unwrap()
    }

    #[test]
    fn monday_dummy_is_first() {
        let panel = panel_from(vec![[5.0; 24]; 10]);
        // 2024-01-08 is a Monday
        let row = build_design_row(&panel, &FeatureScaling::identity(), 7, 1).unwrap();
        assert_eq!(&row.features[..7], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let row = build_design_row(&panel, &FeatureScaling::identity(), 9, 1).unwrap();
        assert_eq!(row.features[2], 1.0);
    }

    #[test]
    fn constant_prices_propagate() {
        let panel = panel_from(vec![[5.0; 24]; 10]);
        let row = build_design_row(&panel, &FeatureScaling::identity(), 8, 12).unwrap();
        assert_eq!(&row.features[7..13], &[5.0; 6]);
        assert_eq!(row.target, Some(5.0));
    }

    #[test]
    fn eight_day_row_by_hand() {
        // price on day d, hour h (0-based) = 100 d + h
        let prices: Vec<[f64; 24]> = (0..8)
            .map(|d| std::array::from_fn(|h| (100 * d + h) as f64))
            .collect();
        let panel = panel_from(prices);
        let row = build_design_row(&panel, &FeatureScaling::identity(), 7, 5).unwrap();
        let expected = [
            1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, // Monday
            604.0, 504.0, 4.0, // lags 1, 2, 7 at hour 5
            600.0, 623.0, 623.0, // min, max, last of day 6
            172.0, 344.0, 516.0, // exogenous at index 7*24+4
        ];
        assert_eq!(row.features, expected);
        assert_eq!(row.target, Some(704.0));
    }

    #[test]
    fn history_is_required() {
        let panel = panel_from(vec![[1.0; 24]; 10]);
        assert_eq!(
            build_design_row(&panel, &FeatureScaling::identity(), 6, 1),
            Err(ArxError::InsufficientHistory { day: 6 })
        );
        assert_eq!(
            build_design_row(&panel, &FeatureScaling::identity(), 8, 25),
            Err(ArxError::InvalidHour(25))
        );
    }

    #[test]
    fn too_few_rows() {
        let panel = panel_from(vec![[1.0; 24]; 30]);
        let mask = CalibrationMask::full(7, 20);
        assert_eq!(
            fit_arx(&panel, &mask, 3, &FeatureScaling::identity()),
            Err(ArxError::TooFewObservations { n: 20 })
        );
    }

    #[test]
    fn duplicate_columns_give_minimum_norm() {
        let n = 40;
        let mut x = DMatrix::<f64>::zeros(n, 3);
        let mut y = DVector::<f64>::zeros(n);
        for i in 0..n {
            let t = i as f64;
            x[(i, 0)] = 1.0;
            x[(i, 1)] = (t * 0.37).sin();
            x[(i, 2)] = (t * 0.37).sin();
            y[i] = 2.0 + 4.0 * x[(i, 1)];
        }
        let (b, deficient) = least_squares(x, &y);
        assert!(deficient);
        assert!((b[0] - 2.0).abs() < 1e-9);
        // the minimum-norm split of 4 over two identical columns is 2 + 2
        assert!((b[1] - 2.0).abs() < 1e-9 && (b[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn forecast_examples() {
        let mut alpha = [0.0; 7];
        alpha[0] = 42.0;
        let coeffs = ArxCoefficients {
            alpha,
            beta: [0.0; 3],
            theta: [0.0; 6],
            hour: 1,
            n_obs_used: 32,
            rank_deficient: false,
        };
        let mut features = [0.0; N_FEATURES];
        features[0] = 1.0;
        features[7] = 99.0;
        let row = DesignRow {
            features,
            target: None,
        };
        assert_eq!(
            forecast_hour(&coeffs, &row, &FeatureScaling::identity()),
            42.0
        );

        let zero = ArxCoefficients {
            alpha: [0.0; 7],
            ..coeffs
        };
        let scaling = FeatureScaling {
            price: TransformParams {
                kind: TransformKind::Asinh,
                a: 3.0,
                b: 1.0,
                degenerate: false,
            },
            ..FeatureScaling::identity()
        };
        assert_eq!(forecast_hour(&zero, &row, &scaling), 3.0);
    }
}
