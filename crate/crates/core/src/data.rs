//! Hourly panel ingestion, gap repair and the rolling backtest calendar.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS: usize = 24;

/// One row of 24 hourly values.
pub type DayRow = [f64; HOURS];

/// Longest run of consecutive missing hours that is still interpolated.
pub const MAX_REPAIRABLE_GAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Price,
    Load,
    Wind,
    Solar,
}

impl Series {
    pub const ALL: [Series; 4] = [Series::Price, Series::Load, Series::Wind, Series::Solar];
    pub const EXOGENOUS: [Series; 3] = [Series::Load, Series::Wind, Series::Solar];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Series::Price => "price",
            Series::Load => "load_fcst",
            Series::Wind => "wind_fcst",
            Series::Solar => "solar_fcst",
        })
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate row for {date} hour {hour}")]
    DuplicateRow { date: NaiveDate, hour: usize },
    #[error("dates are not consecutive: {prev} is followed by {next}")]
    NonContiguousDates { prev: NaiveDate, next: NaiveDate },
    #[error(
        "{series}: {len} consecutive missing hours starting {date} hour {hour} cannot be repaired"
    )]
    UnrepairableGap {
        series: Series,
        date: NaiveDate,
        hour: usize,
        len: usize,
    },
    #[error("line {line}: {message}")]
    InvalidValue { line: u64, message: String },
    #[error("panel is empty")]
    Empty,
    #[error("{series}: non-finite value on {date} hour {hour}")]
    NonFinite {
        series: Series,
        date: NaiveDate,
        hour: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Aligned day x hour matrices of prices and the three day-ahead exogenous
/// forecasts. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPanel {
    dates: Vec<NaiveDate>,
    series: [Vec<DayRow>; 4],
    weekday: Vec<u8>,
}

impl HourlyPanel {
    /// Builds a panel from complete data. Dates must be consecutive and all
    /// values finite.
    pub fn new(
        dates: Vec<NaiveDate>,
        prices: Vec<DayRow>,
        load: Vec<DayRow>,
        wind: Vec<DayRow>,
        solar: Vec<DayRow>,
    ) -> Result<Self, IngestError> {
        if dates.is_empty() {
            return Err(IngestError::Empty);
        }
        let n = dates.len();
        for (name, m) in [
            ("price", &prices),
            ("load_fcst", &load),
            ("wind_fcst", &wind),
            ("solar_fcst", &solar),
        ] {
            if m.len() != n {
                return Err(IngestError::MissingColumn(format!(
                    "{name} has {} days, expected {n}",
                    m.len()
                )));
            }
        }
        for w in dates.windows(2) {
            if w[0].succ_opt() != Some(w[1]) {
                return Err(IngestError::NonContiguousDates {
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        let series = [prices, load, wind, solar];
        for s in Series::ALL {
            for (d, row) in series[s.index()].iter().enumerate() {
                if let Some(h) = row.iter().position(|v| !v.is_finite()) {
                    return Err(IngestError::NonFinite {
                        series: s,
                        date: dates[d],
                        hour: h + 1,
                    });
                }
            }
        }
        let weekday = dates
            .iter()
            .map(|d| d.weekday().number_from_monday() as u8)
            .collect();
        Ok(Self {
            dates,
            series,
            weekday,
        })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.dates[day]
    }

    pub fn prices(&self) -> &[DayRow] {
        &self.series[0]
    }

    pub fn series(&self, s: Series) -> &[DayRow] {
        &self.series[s.index()]
    }

    /// 1 = Monday ... 7 = Sunday.
    pub fn weekday(&self, day: usize) -> u8 {
        self.weekday[day]
    }

    /// Values of one hour (1..=24) over a range of days.
    pub fn hour_slice(&self, s: Series, days: Range<usize>, hour: usize) -> Vec<f64> {
        self.series(s)[days]
            .iter()
            .map(|row| row[hour - 1])
            .collect()
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let first = self.dates[0];
        let offset = (date - first).num_days();
        (offset >= 0 && (offset as usize) < self.n_days()).then_some(offset as usize)
    }
}

/// How the CSV columns map onto the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSchema {
    pub layout: Layout,
    pub date: String,
    /// Hour column (long layout only), values 1..=24.
    pub hour: String,
    pub price: String,
    pub load: String,
    pub wind: String,
    pub solar: String,
    /// Wide layout column pattern; `{series}` is replaced by the series
    /// column name above and `{hour}` by 1..=24.
    pub wide_pattern: String,
    /// chrono format string for the date column.
    pub date_format: String,
    /// Average repeated (date, hour) rows, as produced by the autumn clock
    /// change, instead of rejecting them.
    pub average_duplicate_hours: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Long,
    Wide,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            layout: Layout::Long,
            date: "date".into(),
            hour: "hour".into(),
            price: "price".into(),
            load: "load_fcst".into(),
            wind: "wind_fcst".into(),
            solar: "solar_fcst".into(),
            wide_pattern: "{series}_{hour}".into(),
            date_format: "%Y-%m-%d".into(),
            average_duplicate_hours: false,
        }
    }
}

impl PanelSchema {
    fn column(&self, s: Series) -> &str {
        match s {
            Series::Price => &self.price,
            Series::Load => &self.load,
            Series::Wind => &self.wind,
            Series::Solar => &self.solar,
        }
    }

    fn wide_column(&self, s: Series, hour: usize) -> String {
        self.wide_pattern
            .replace("{series}", self.column(s))
            .replace("{hour}", &hour.to_string())
    }
}

/// Summary of what ingestion repaired, emitted as JSON by `validate-data`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_days: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub interpolated_cells: usize,
    pub averaged_duplicates: usize,
    pub repaired_by_series: BTreeMap<Series, usize>,
}

pub fn load_panel(
    path: impl AsRef<Path>,
    schema: &PanelSchema,
) -> Result<(HourlyPanel, ValidationReport), IngestError> {
    let file = std::fs::File::open(path)?;
    load_panel_from_reader(file, schema)
}

type Cells = [Vec<Option<f64>>; 4];

#[derive(Default)]
struct DayCells {
    values: [[Option<f64>; HOURS]; 4],
    counts: [u8; HOURS],
}

pub fn load_panel_from_reader<R: Read>(
    reader: R,
    schema: &PanelSchema,
) -> Result<(HourlyPanel, ValidationReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let date_col = find(&schema.date)?;
    let mut report = ValidationReport::default();
    let mut days: BTreeMap<NaiveDate, DayCells> = BTreeMap::new();

    match schema.layout {
        Layout::Long => {
            let hour_col = find(&schema.hour)?;
            let cols: Vec<usize> = Series::ALL
                .iter()
                .map(|&s| find(schema.column(s)))
                .collect::<Result<_, _>>()?;
            for rec in rdr.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line());
                let date = parse_date(&rec[date_col], &schema.date_format, line)?;
                let hour: usize = rec[hour_col]
                    .parse()
                    .ok()
                    .filter(|h| (1..=HOURS).contains(h))
                    .ok_or_else(|| IngestError::InvalidValue {
                        line,
                        message: format!("hour `{}` is not in 1..=24", &rec[hour_col]),
                    })?;
                let cell = days.entry(date).or_default();
                let h = hour - 1;
                cell.counts[h] += 1;
                if cell.counts[h] > 1 && !schema.average_duplicate_hours {
                    return Err(IngestError::DuplicateRow { date, hour });
                }
                let k = f64::from(cell.counts[h]);
                for (si, &c) in cols.iter().enumerate() {
                    let v = parse_value(&rec[c], line)?;
                    let slot = &mut cell.values[si][h];
                    // running mean over duplicates; a missing duplicate keeps the other value
                    *slot = match (*slot, v) {
                        (Some(old), Some(new)) if k > 1.0 => Some(old + (new - old) / k),
                        (old, None) => old,
                        (_, new) => new,
                    };
                }
                if cell.counts[h] == 2 {
                    report.averaged_duplicates += 1;
                }
            }
        }
        Layout::Wide => {
            let mut cols = [[0usize; HOURS]; 4];
            for s in Series::ALL {
                for h in 0..HOURS {
                    cols[s.index()][h] = find(&schema.wide_column(s, h + 1))?;
                }
            }
            for rec in rdr.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line());
                let date = parse_date(&rec[date_col], &schema.date_format, line)?;
                if days.contains_key(&date) {
                    return Err(IngestError::DuplicateRow { date, hour: 0 });
                }
                let mut cell = DayCells::default();
                for s in Series::ALL {
                    for h in 0..HOURS {
                        cell.values[s.index()][h] = parse_value(&rec[cols[s.index()][h]], line)?;
                    }
                }
                cell.counts = [1; HOURS];
                days.insert(date, cell);
            }
        }
    }

    if days.is_empty() {
        return Err(IngestError::Empty);
    }
    let dates: Vec<NaiveDate> = days.keys().copied().collect();
    for w in dates.windows(2) {
        if w[0].succ_opt() != Some(w[1]) {
            return Err(IngestError::NonContiguousDates {
                prev: w[0],
                next: w[1],
            });
        }
    }
    let mut flat: Cells = Default::default();
    for cell in days.values() {
        for s in 0..4 {
            flat[s].extend_from_slice(&cell.values[s]);
        }
    }
    let mut rows: Vec<Vec<DayRow>> = Vec::with_capacity(4);
    for s in Series::ALL {
        let repaired = repair_gaps(&mut flat[s.index()]).map_err(|(start, len)| {
            IngestError::UnrepairableGap {
                series: s,
                date: dates[start / HOURS],
                hour: start % HOURS + 1,
                len,
            }
        })?;
        if repaired > 0 {
            report.repaired_by_series.insert(s, repaired);
        }
        report.interpolated_cells += repaired;
        rows.push(
            flat[s.index()]
                .chunks_exact(HOURS)
                .map(|c| std::array::from_fn(|h| c[h].expect("gaps repaired")))
                .collect(),
        );
    }
    report.n_days = dates.len();
    report.first_date = dates.first().copied();
    report.last_date = dates.last().copied();
    let solar = rows.pop().unwrap();
    let wind = rows.pop().unwrap();
    let load = rows.pop().unwrap();
    let prices = rows.pop().unwrap();
    let panel = HourlyPanel::new(dates, prices, load, wind, solar)?;
    Ok((panel, report))
}

fn parse_date(raw: &str, format: &str, line: u64) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(raw, format).map_err(|e| IngestError::InvalidValue {
        line,
        message: format!("date `{raw}`: {e}"),
    })
}

fn parse_value(raw: &str, line: u64) -> Result<Option<f64>, IngestError> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|e| IngestError::InvalidValue {
            line,
            message: format!("value `{raw}`: {e}"),
        })
}

/// Linearly interpolates runs of up to [`MAX_REPAIRABLE_GAP`] missing values
/// between two observed neighbours. Returns the number of filled cells, or
/// the (start, length) of the first run that cannot be filled.
fn repair_gaps(values: &mut [Option<f64>]) -> Result<usize, (usize, usize)> {
    let n = values.len();
    let mut filled = 0;
    let mut i = 0;
    while i < n {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && values[i].is_none() {
            i += 1;
        }
        let len = i - start;
        if len > MAX_REPAIRABLE_GAP || start == 0 || i == n {
            return Err((start, len));
        }
        let left = values[start - 1].unwrap();
        let right = values[i].unwrap();
        for k in 0..len {
            let w = (k + 1) as f64 / (len + 1) as f64;
            values[start + k] = Some(left + w * (right - left));
        }
        filled += len;
    }
    Ok(filled)
}

#[derive(Debug, Error, PartialEq)]
pub enum CalendarError {
    #[error("test period needs {needed} days of history before day {test_start}")]
    InsufficientHistory { test_start: usize, needed: usize },
    #[error("test period ends at day {end} but the panel has {n_days} days")]
    BeyondPanel { end: usize, n_days: usize },
    #[error("window of {tau} days exceeds the calendar maximum of {max_window}")]
    WindowTooLong { tau: usize, max_window: usize },
    #[error("window length must be positive")]
    EmptyWindow,
}

/// Test period layout for a rolling backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestCalendar {
    pub test_start: usize,
    pub n_test_days: usize,
    pub max_window: usize,
}

/// Lags reach back this many days before a window's first target day.
pub const MAX_LAG: usize = 7;

impl BacktestCalendar {
    pub fn new(
        n_days: usize,
        test_start: usize,
        n_test_days: usize,
        max_window: usize,
    ) -> Result<Self, CalendarError> {
        if max_window == 0 {
            return Err(CalendarError::EmptyWindow);
        }
        if test_start < max_window + MAX_LAG {
            return Err(CalendarError::InsufficientHistory {
                test_start,
                needed: max_window + MAX_LAG,
            });
        }
        if test_start + n_test_days > n_days {
            return Err(CalendarError::BeyondPanel {
                end: test_start + n_test_days,
                n_days,
            });
        }
        Ok(Self {
            test_start,
            n_test_days,
            max_window,
        })
    }

    /// Calendar whose test period is the last `n_test_days` of the panel.
    pub fn trailing(
        n_days: usize,
        n_test_days: usize,
        max_window: usize,
    ) -> Result<Self, CalendarError> {
        let test_start = n_days
            .checked_sub(n_test_days)
            .ok_or(CalendarError::BeyondPanel {
                end: n_test_days,
                n_days,
            })?;
        Self::new(n_days, test_start, n_test_days, max_window)
    }

    pub fn test_days(&self) -> Range<usize> {
        self.test_start..self.test_start + self.n_test_days
    }

    pub fn rolling_windows(&self, tau: usize) -> Result<Vec<RollingWindow>, CalendarError> {
        rolling_windows(self, tau)
    }
}

/// Calibration days `window` (half-open, so the inclusive range is
/// `[target_day - tau, target_day - 1]`) for forecasting `target_day`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollingWindow {
    pub window: Range<usize>,
    pub target_day: usize,
}

pub fn rolling_windows(
    calendar: &BacktestCalendar,
    tau: usize,
) -> Result<Vec<RollingWindow>, CalendarError> {
    if tau == 0 {
        return Err(CalendarError::EmptyWindow);
    }
    if tau > calendar.max_window {
        return Err(CalendarError::WindowTooLong {
            tau,
            max_window: calendar.max_window,
        });
    }
    Ok(calendar
        .test_days()
        .map(|d| RollingWindow {
            window: d - tau..d,
            target_day: d,
        })
        .collect())
}
