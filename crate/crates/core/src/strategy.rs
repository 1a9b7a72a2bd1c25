//! The forecasting strategies and the rolling backtest that runs them.
//!
//! Single-window strategies are "members": an ARX model refitted every test
//! day on the last `tau` days (`Win`, `Win_H`) or on the NOT-selected part of
//! them (`NOT_H`). Averaging strategies combine member forecasts in price
//! space. Member forecasts are cached per (member, target day) so averages,
//! sweeps and repeated strategies never refit.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arx::{self, ArxCoefficients, ArxError, FeatureScaling, MIN_OBSERVATIONS};
use crate::changepoint::{ChangePointDetector, ChangePointSet, NotConfig, NotDetector, NotError};
use crate::data::{BacktestCalendar, CalendarError, DayRow, HourlyPanel, Series, HOURS};
use crate::seed;
use crate::transform::{TransformKind, TransformOptions};
use crate::window::{self, CalibrationMask, MaskRecord, QuantileOrders, SelectError};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Arx(#[from] ArxError),
    #[error(transparent)]
    ChangePoint(#[from] NotError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error("no external forecasts registered under `{0}`")]
    UnknownExternal(String),
    #[error("external forecasts `{name}` have no row for {date}")]
    MissingExternalDate { name: String, date: NaiveDate },
    #[error("cannot parse strategy `{0}`")]
    Parse(String),
    #[error("forecast CSV: {0}")]
    Csv(String),
}

impl From<csv::Error> for StrategyError {
    fn from(e: csv::Error) -> Self {
        StrategyError::Csv(e.to_string())
    }
}

/// Window families that can be refitted day by day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// z-score normalised prices, full window
    Win,
    /// asinh-transformed prices, full window
    WinH,
    /// asinh-transformed prices, NOT-selected days of the window
    NotH,
}

impl Family {
    pub fn price_transform(self) -> TransformKind {
        match self {
            Family::Win => TransformKind::ZScore,
            Family::WinH | Family::NotH => TransformKind::Asinh,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Family::Win => "Win",
            Family::WinH => "Win_H",
            Family::NotH => "NOT_H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Member {
    pub family: Family,
    pub tau: usize,
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.family.label(), self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategySpec {
    Single(Member),
    AvWin,
    AvWinH,
    AvNotH,
    /// Forecasts produced elsewhere (e.g. ARHNN) and loaded from CSV.
    External(String),
}

impl StrategySpec {
    pub fn win(tau: usize) -> Self {
        Self::Single(Member {
            family: Family::Win,
            tau,
        })
    }
    pub fn win_h(tau: usize) -> Self {
        Self::Single(Member {
            family: Family::WinH,
            tau,
        })
    }
    pub fn not_h(tau: usize) -> Self {
        Self::Single(Member {
            family: Family::NotH,
            tau,
        })
    }

    /// The six strategies this crate computes, in the usual reporting order.
    pub fn standard_suite() -> Vec<Self> {
        vec![
            Self::win(728),
            Self::AvWin,
            Self::win_h(728),
            Self::not_h(728),
            Self::AvWinH,
            Self::AvNotH,
        ]
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// File-name friendly form, e.g. `not_h_728`, `av_win_h`.
    pub fn slug(&self) -> String {
        match self {
            Self::Single(m) => format!("{}_{}", m.family.label().to_lowercase(), m.tau),
            Self::AvWin => "av_win".into(),
            Self::AvWinH => "av_win_h".into(),
            Self::AvNotH => "av_not_h".into(),
            Self::External(name) => {
                let clean: String = name
                    .chars()
                    .map(|c| {
                        if c.is_ascii_alphanumeric() {
                            c.to_ascii_lowercase()
                        } else {
                            '_'
                        }
                    })
                    .collect();
                format!("ext_{clean}")
            }
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single(m) => m.fmt(f),
            Self::AvWin => f.write_str("Av(Win)"),
            Self::AvWinH => f.write_str("Av(Win_H)"),
            Self::AvNotH => f.write_str("Av(NOT_H)"),
            Self::External(name) => f.write_str(name),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = StrategyError;

    /// Accepts `Win(728)`, `Win_H(728)`, `NOT_H(728)`, `Av(Win)`, `Av(Win_H)`,
    /// `Av(NOT_H)` and `ext:NAME`; case and underscores are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.trim();
        if let Some(name) = raw.strip_prefix("ext:") {
            return Ok(Self::External(name.trim().to_string()));
        }
        let norm: String = raw
            .chars()
            .filter(|c| *c != '_' && !c.is_whitespace())
            .collect::<String>()
            .to_lowercase();
        let err = || StrategyError::Parse(raw.to_string());
        match norm.as_str() {
            "av(win)" | "avwin" => return Ok(Self::AvWin),
            "av(winh)" | "avwinh" => return Ok(Self::AvWinH),
            "av(noth)" | "avnoth" => return Ok(Self::AvNotH),
            _ => {}
        }
        let (head, rest) = norm.split_once('(').ok_or_else(err)?;
        let tau: usize = rest
            .strip_suffix(')')
            .ok_or_else(err)?
            .parse()
            .map_err(|_| err())?;
        if tau == 0 {
            return Err(err());
        }
        let family = match head {
            "win" => Family::Win,
            "winh" => Family::WinH,
            "noth" => Family::NotH,
            _ => return Err(err()),
        };
        Ok(Self::Single(Member { family, tau }))
    }
}

/// How the NOT-based average combines its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvNotMode {
    /// NOT_H replaces each long-window member: weight 3/6.
    Replace,
    /// Plain mean of the short windows and NOT_H.
    FourMember,
}

/// Sample the price transform is fitted on for NOT-calibrated members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformSample {
    /// The NOT-selected days.
    Selected,
    /// The whole initial window.
    Initial,
}

/// Series the change-point detector runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectOn {
    Transformed,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub quantiles: QuantileOrders,
    pub transform: TransformOptions,
    pub standardize_exog: bool,
    pub transform_sample: TransformSample,
    pub detect_on: DetectOn,
    pub short_windows: Vec<usize>,
    pub long_windows: Vec<usize>,
    /// Window of the NOT_H member inside Av(NOT_H).
    pub not_window: usize,
    pub av_not_mode: AvNotMode,
    /// Hours (1..=24) whose NOT masks are kept for reporting.
    pub record_mask_hours: Vec<usize>,
    pub record_coefficients: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            quantiles: QuantileOrders::default(),
            transform: TransformOptions::default(),
            standardize_exog: true,
            transform_sample: TransformSample::Selected,
            detect_on: DetectOn::Transformed,
            short_windows: vec![56, 84, 112],
            long_windows: vec![714, 721, 728],
            not_window: 728,
            av_not_mode: AvNotMode::Replace,
            record_mask_hours: Vec::new(),
            record_coefficients: false,
        }
    }
}

impl EngineConfig {
    /// Weighted members of a strategy. Weights sum to one.
    pub fn members(&self, spec: &StrategySpec) -> Vec<(Member, f64)> {
        let all = |family: Family, windows: &[usize]| -> Vec<Member> {
            windows.iter().map(|&tau| Member { family, tau }).collect()
        };
        let uniform = |ms: Vec<Member>| -> Vec<(Member, f64)> {
            let w = 1.0 / ms.len() as f64;
            ms.into_iter().map(|m| (m, w)).collect()
        };
        match spec {
            StrategySpec::Single(m) => vec![(*m, 1.0)],
            StrategySpec::AvWin => uniform(
                [
                    all(Family::Win, &self.short_windows),
                    all(Family::Win, &self.long_windows),
                ]
                .concat(),
            ),
            StrategySpec::AvWinH => uniform(
                [
                    all(Family::WinH, &self.short_windows),
                    all(Family::WinH, &self.long_windows),
                ]
                .concat(),
            ),
            StrategySpec::AvNotH => {
                let not = Member {
                    family: Family::NotH,
                    tau: self.not_window,
                };
                let mut ms = all(Family::WinH, &self.short_windows);
                match self.av_not_mode {
                    AvNotMode::Replace => {
                        ms.extend(std::iter::repeat_n(not, self.long_windows.len()));
                        uniform(ms)
                    }
                    AvNotMode::FourMember => {
                        ms.push(not);
                        uniform(ms)
                    }
                }
            }
            StrategySpec::External(_) => Vec::new(),
        }
    }

    /// Longest calibration window a strategy needs.
    pub fn max_window(&self, spec: &StrategySpec) -> usize {
        self.members(spec)
            .iter()
            .map(|(m, _)| m.tau)
            .max()
            .unwrap_or(0)
    }
}

/// Day x 24 price forecasts over a test period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMatrix {
    pub strategy: String,
    /// Panel index of the first row.
    pub first_day: usize,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<DayRow>,
}

impl ForecastMatrix {
    pub fn n_days(&self) -> usize {
        self.values.len()
    }
}

/// Prices of the test period, aligned with every [`ForecastMatrix`] of a run.
pub fn actuals(panel: &HourlyPanel, calendar: &BacktestCalendar) -> ForecastMatrix {
    let days = calendar.test_days();
    ForecastMatrix {
        strategy: "actual".into(),
        first_day: days.start,
        dates: panel.dates()[days.clone()].to_vec(),
        values: panel.prices()[days].to_vec(),
    }
}

/// Coefficients and price transform of one fitted hourly model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub coefficients: ArxCoefficients,
    pub scaling: FeatureScaling,
    /// The NOT mask left too few days and the full window was used.
    pub fell_back: bool,
}

#[derive(Debug, Clone)]
struct DayResult {
    forecast: DayRow,
    fits: Option<Vec<FitRecord>>,
    masks: Vec<(usize, CalibrationMask)>,
    fallbacks: usize,
}

type CacheKey = (Member, usize);

/// Runs strategies over one panel and calendar, sharing member forecasts.
pub struct Engine<'a> {
    panel: &'a HourlyPanel,
    calendar: BacktestCalendar,
    config: EngineConfig,
    detector: Arc<dyn ChangePointDetector>,
    cache: Mutex<HashMap<CacheKey, DayRow>>,
    fits: Mutex<BTreeMap<CacheKey, Vec<FitRecord>>>,
    masks: Mutex<BTreeMap<(usize, usize, usize), CalibrationMask>>,
    externals: HashMap<String, ForecastMatrix>,
    timings: Mutex<BTreeMap<String, Duration>>,
    member_days_computed: AtomicUsize,
    fallbacks: AtomicUsize,
}

impl<'a> Engine<'a> {
    pub fn new(
        panel: &'a HourlyPanel,
        calendar: BacktestCalendar,
        config: EngineConfig,
        not_config: NotConfig,
    ) -> Self {
        Self::with_detector(
            panel,
            calendar,
            config,
            Arc::new(NotDetector::new(not_config)),
        )
    }

    pub fn with_detector(
        panel: &'a HourlyPanel,
        calendar: BacktestCalendar,
        config: EngineConfig,
        detector: Arc<dyn ChangePointDetector>,
    ) -> Self {
        Self {
            panel,
            calendar,
            config,
            detector,
            cache: Mutex::default(),
            fits: Mutex::default(),
            masks: Mutex::default(),
            externals: HashMap::new(),
            timings: Mutex::default(),
            member_days_computed: AtomicUsize::new(0),
            fallbacks: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn calendar(&self) -> &BacktestCalendar {
        &self.calendar
    }

    /// Registers externally produced forecasts; rows are matched by date.
    pub fn add_external(&mut self, name: impl Into<String>, matrix: ForecastMatrix) {
        self.externals.insert(name.into(), matrix);
    }

    /// Number of (member, day) forecasts actually computed so far.
    pub fn member_days_computed(&self) -> usize {
        self.member_days_computed.load(Ordering::Relaxed)
    }

    /// Hourly fits that fell back from a NOT mask to the full window.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    pub fn timings(&self) -> BTreeMap<String, Duration> {
        self.timings.lock().unwrap().clone()
    }

    pub fn run_suite(
        &self,
        specs: &[StrategySpec],
    ) -> Result<Vec<(StrategySpec, ForecastMatrix)>, StrategyError> {
        specs
            .iter()
            .map(|s| self.run_strategy(s).map(|m| (s.clone(), m)))
            .collect()
    }

    pub fn run_strategy(&self, spec: &StrategySpec) -> Result<ForecastMatrix, StrategyError> {
        let started = Instant::now();
        let days = self.calendar.test_days();
        let dates = self.panel.dates()[days.clone()].to_vec();
        let values = match spec {
            StrategySpec::External(name) => self.external_rows(name, &dates)?,
            _ => {
                let members = self.config.members(spec);
                let mut acc = vec![[0.0; HOURS]; days.len()];
                for (member, weight) in members {
                    let rows = self.member_rows(member)?;
                    for (a, r) in acc.iter_mut().zip(&rows) {
                        for h in 0..HOURS {
                            a[h] += weight * r[h];
                        }
                    }
                }
                acc
            }
        };
        *self.timings.lock().unwrap().entry(spec.name()).or_default() += started.elapsed();
        Ok(ForecastMatrix {
            strategy: spec.name(),
            first_day: days.start,
            dates,
            values,
        })
    }

    fn external_rows(&self, name: &str, dates: &[NaiveDate]) -> Result<Vec<DayRow>, StrategyError> {
        let ext = self
            .externals
            .get(name)
            .ok_or_else(|| StrategyError::UnknownExternal(name.to_string()))?;
        let by_date: HashMap<&NaiveDate, &DayRow> = ext.dates.iter().zip(&ext.values).collect();
        dates
            .iter()
            .map(|d| {
                by_date
                    .get(d)
                    .map(|r| **r)
                    .ok_or_else(|| StrategyError::MissingExternalDate {
                        name: name.to_string(),
                        date: *d,
                    })
            })
            .collect()
    }

    /// Forecasts of one member over the test period, computing missing days.
    pub fn member_rows(&self, member: Member) -> Result<Vec<DayRow>, StrategyError> {
        self.calendar.rolling_windows(member.tau)?;
        let days: Vec<usize> = self.calendar.test_days().collect();
        let missing: Vec<usize> = {
            let cache = self.cache.lock().unwrap();
            days.iter()
                .copied()
                .filter(|d| !cache.contains_key(&(member, *d)))
                .collect()
        };
        let computed = self.compute_days(member, &missing)?;
        {
            let mut cache = self.cache.lock().unwrap();
            let mut fits = self.fits.lock().unwrap();
            let mut masks = self.masks.lock().unwrap();
            for (d, res) in missing.iter().zip(computed) {
                cache.insert((member, *d), res.forecast);
                if let Some(f) = res.fits {
                    fits.insert((member, *d), f);
                }
                for (hour, mask) in res.masks {
                    masks.insert((member.tau, *d, hour), mask);
                }
                self.fallbacks.fetch_add(res.fallbacks, Ordering::Relaxed);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(days.iter().map(|d| cache[&(member, *d)]).collect())
    }

    #[cfg(feature = "parallel")]
    fn compute_days(
        &self,
        member: Member,
        days: &[usize],
    ) -> Result<Vec<DayResult>, StrategyError> {
        use rayon::prelude::*;
        days.par_iter()
            .map(|&d| self.member_day(member, d))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn compute_days(
        &self,
        member: Member,
        days: &[usize],
    ) -> Result<Vec<DayResult>, StrategyError> {
        days.iter().map(|&d| self.member_day(member, d)).collect()
    }

    fn member_day(&self, member: Member, day: usize) -> Result<DayResult, StrategyError> {
        self.member_days_computed.fetch_add(1, Ordering::Relaxed);
        let mut forecast = [0.0; HOURS];
        let mut fits = self.config.record_coefficients.then(Vec::new);
        let mut masks = Vec::new();
        let mut fallbacks = 0;
        for hour in 1..=HOURS {
            let fit = self.fit_hour(member, day, hour)?;
            let row = arx::build_design_row(self.panel, &fit.record.scaling, day, hour)?;
            forecast[hour - 1] =
                arx::forecast_hour(&fit.record.coefficients, &row, &fit.record.scaling);
            if fit.record.fell_back {
                fallbacks += 1;
            }
            if let Some(mask) = fit.mask {
                if self.config.record_mask_hours.contains(&hour) {
                    masks.push((hour, mask));
                }
            }
            if let Some(f) = fits.as_mut() {
                f.push(fit.record);
            }
        }
        Ok(DayResult {
            forecast,
            fits,
            masks,
            fallbacks,
        })
    }

    /// NOT calibration mask for one target day and hour, in absolute days.
    pub fn not_mask(
        &self,
        tau: usize,
        day: usize,
        hour: usize,
    ) -> Result<CalibrationMask, StrategyError> {
        self.not_detection(tau, day, hour).map(|(_, mask)| mask)
    }

    /// Change-points (window-relative, with their solution path) and the
    /// resulting mask for one target day and hour.
    pub fn not_detection(
        &self,
        tau: usize,
        day: usize,
        hour: usize,
    ) -> Result<(ChangePointSet, CalibrationMask), StrategyError> {
        let start = day
            .checked_sub(tau)
            .ok_or(ArxError::InsufficientHistory { day })?;
        let window: Vec<usize> = (start..day).collect();
        let initial = self.scaling(&window, hour, Family::NotH)?;
        let raw = self.panel.hour_slice(Series::Price, start..day, hour);
        let series = match self.config.detect_on {
            DetectOn::Transformed => initial.price.apply_all(&raw),
            DetectOn::Raw => raw,
        };
        let seed = seed::derive(
            self.config.seed,
            &[seed::label("NOT_H"), tau as u64, day as u64, hour as u64],
        );
        let cps = self.detector.detect(&series, seed)?;
        let mask =
            window::select_calibration(&series, &cps, self.config.quantiles)?.with_origin(start);
        Ok((cps, mask))
    }

    fn scaling(
        &self,
        days: &[usize],
        hour: usize,
        family: Family,
    ) -> Result<FeatureScaling, ArxError> {
        FeatureScaling::fit(
            self.panel,
            days,
            hour,
            family.price_transform(),
            self.config.standardize_exog,
            &self.config.transform,
        )
    }

    fn fit_hour(&self, member: Member, day: usize, hour: usize) -> Result<HourFit, StrategyError> {
        let start = day - member.tau;
        let window: Vec<usize> = (start..day).collect();
        let (days, mask) = match member.family {
            Family::Win | Family::WinH => (window.clone(), None),
            Family::NotH => {
                let mask = self.not_mask(member.tau, day, hour)?;
                (mask.days().collect::<Vec<_>>(), Some(mask))
            }
        };
        let mut fell_back = false;
        let days = if days.len() < MIN_OBSERVATIONS {
            log::info!(
                "{member} day {day} hour {hour}: {} selected days, using the full window",
                days.len()
            );
            fell_back = true;
            window.clone()
        } else {
            days
        };
        let scaling = match (member.family, self.config.transform_sample) {
            (Family::NotH, TransformSample::Initial) => {
                self.scaling(&window, hour, member.family)?
            }
            _ => self.scaling(&days, hour, member.family)?,
        };
        let coefficients = arx::fit_arx_days(self.panel, &days, hour, &scaling)?;
        Ok(HourFit {
            record: FitRecord {
                coefficients,
                scaling,
                fell_back,
            },
            mask,
        })
    }

    /// Masks kept for `record_mask_hours`, ordered by target day then hour.
    pub fn mask_records(&self, tau: usize) -> Vec<MaskRecord> {
        self.masks
            .lock()
            .unwrap()
            .iter()
            .filter(|((t, _, _), _)| *t == tau)
            .map(|(&(_, day, hour), mask)| MaskRecord {
                target_date: self.panel.date(day),
                hour,
                mask: mask.clone(),
            })
            .collect()
    }

    /// Coefficient log rows recorded for a member (needs `record_coefficients`).
    pub fn fit_records(&self, member: Member) -> Vec<(NaiveDate, FitRecord)> {
        self.fits
            .lock()
            .unwrap()
            .iter()
            .filter(|((m, _), _)| *m == member)
            .flat_map(|(&(_, day), recs)| recs.iter().map(move |r| (self.panel.date(day), *r)))
            .collect()
    }
}

struct HourFit {
    record: FitRecord,
    mask: Option<CalibrationMask>,
}

/// One-shot convenience: runs a single strategy with default settings.
pub fn run_strategy(
    panel: &HourlyPanel,
    calendar: &BacktestCalendar,
    spec: &StrategySpec,
    not_config: &NotConfig,
) -> Result<ForecastMatrix, StrategyError> {
    let config = EngineConfig {
        seed: not_config.seed,
        ..EngineConfig::default()
    };
    Engine::new(panel, *calendar, config, not_config.clone()).run_strategy(spec)
}

/// Writes `date,h1..h24`. Values use the shortest round-trip representation.
pub fn write_forecast_csv<W: Write>(matrix: &ForecastMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend((1..=HOURS).map(|h| format!("h{h}")));
    w.write_record(&header)?;
    for (date, row) in matrix.dates.iter().zip(&matrix.values) {
        let mut rec = vec![date.format("%Y-%m-%d").to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_forecast_csv<R: Read>(name: &str, input: R) -> Result<ForecastMatrix, StrategyError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != HOURS + 1 {
            return Err(StrategyError::Csv(format!(
                "expected {} columns, found {}",
                HOURS + 1,
                rec.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| StrategyError::Csv(e.to_string()))?;
        let mut row = [0.0; HOURS];
        for h in 0..HOURS {
            row[h] = rec[h + 1]
                .parse()
                .map_err(|_| StrategyError::Csv(format!("bad value `{}`", &rec[h + 1])))?;
        }
        dates.push(date);
        values.push(row);
    }
    Ok(ForecastMatrix {
        strategy: name.to_string(),
        first_day: 0,
        dates,
        values,
    })
}

/// Coefficient log: `target_date,hour,<16 coefficients>,n_obs_used,price_a,price_b,fell_back`.
pub fn write_coefficients_csv<W: Write>(
    records: &[(NaiveDate, FitRecord)],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["target_date".to_string(), "hour".to_string()];
    header.extend(arx::FEATURE_NAMES.iter().map(|s| s.to_string()));
    header.extend(["n_obs_used", "price_a", "price_b", "fell_back"].map(String::from));
    w.write_record(&header)?;
    for (date, r) in records {
        let mut rec = vec![
            date.format("%Y-%m-%d").to_string(),
            r.coefficients.hour.to_string(),
        ];
        rec.extend(r.coefficients.to_vector().iter().map(|v| v.to_string()));
        rec.push(r.coefficients.n_obs_used.to_string());
        rec.push(r.scaling.price.a.to_string());
        rec.push(r.scaling.price.b.to_string());
        rec.push(u8::from(r.fell_back).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
