//! Seeded synthetic market data with regime shifts, for tests, benchmarks
//! and the browser demo.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DayRow, HourlyPanel, HOURS};

/// A price regime starting on `start_day`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub start_day: usize,
    pub level: f64,
    pub volatility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Sorted by `start_day`; the first should start at day 0.
    pub regimes: Vec<Regime>,
    /// Probability that an hour carries a price spike.
    pub spike_prob: f64,
}

impl SyntheticSpec {
    pub fn new(n_days: usize, seed: u64) -> Self {
        let third = n_days / 3;
        Self {
            n_days,
            start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            seed,
            regimes: vec![
                Regime {
                    start_day: 0,
                    level: 35.0,
                    volatility: 6.0,
                },
                Regime {
                    start_day: third,
                    level: 55.0,
                    volatility: 14.0,
                },
                Regime {
                    start_day: 2 * third,
                    level: 30.0,
                    volatility: 5.0,
                },
            ],
            spike_prob: 0.002,
        }
    }
}

fn daily_shape(h: usize) -> f64 {
    let x = h as f64;
    8.0 * (-((x - 8.0) / 2.5).powi(2)).exp() + 11.0 * (-((x - 18.5) / 2.5).powi(2)).exp()
        - 6.0 * (-((x - 3.0) / 3.0).powi(2)).exp()
}

fn solar_shape(h: usize) -> f64 {
    let x = h as f64;
    (-((x - 12.5) / 3.2).powi(2)).exp()
}

pub fn generate(spec: &SyntheticSpec) -> HourlyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let dates: Vec<NaiveDate> = spec.start.iter_days().take(spec.n_days).collect();
    let mut prices = Vec::with_capacity(spec.n_days);
    let mut load = Vec::with_capacity(spec.n_days);
    let mut wind = Vec::with_capacity(spec.n_days);
    let mut solar = Vec::with_capacity(spec.n_days);
    let mut level_noise = 0.0;
    let mut wind_state: f64 = 0.0;
    for (d, date) in dates.iter().enumerate() {
        let regime = spec
            .regimes
            .iter()
            .rev()
            .find(|r| r.start_day <= d)
            .copied()
            .unwrap_or(Regime {
                start_day: 0,
                level: 40.0,
                volatility: 8.0,
            });
        let weekend = matches!(chrono::Datelike::weekday(date).number_from_monday(), 6 | 7);
        let season = (2.0 * std::f64::consts::PI * d as f64 / 365.25).cos();
        level_noise = 0.7 * level_noise + 0.3 * regime.volatility * z.sample(&mut rng);
        wind_state = 0.8 * wind_state + 0.6 * z.sample(&mut rng);
        let cloud: f64 = rng.random_range(0.3..1.0);
        let mut p_row: DayRow = [0.0; HOURS];
        let mut l_row: DayRow = [0.0; HOURS];
        let mut w_row: DayRow = [0.0; HOURS];
        let mut s_row: DayRow = [0.0; HOURS];
        for h in 0..HOURS {
            let l = 55_000.0 + 9_000.0 * daily_shape(h) / 11.0 + 4_000.0 * season
                - if weekend { 8_000.0 } else { 0.0 }
                + 1_500.0 * z.sample(&mut rng);
            let w = 12_000.0 * (wind_state + 0.2 * z.sample(&mut rng)).exp().min(5.0);
            let s = 25_000.0 * solar_shape(h) * cloud * (1.0 - 0.5 * season);
            let mut p = regime.level + daily_shape(h) + level_noise + 0.0004 * (l - 55_000.0)
                - 0.0006 * (w - 12_000.0)
                - 0.0003 * s
                + 0.35 * regime.volatility * z.sample(&mut rng);
            if rng.random_bool(spec.spike_prob) {
                p += rng.random_range(60.0..250.0) * if rng.random_bool(0.3) { -1.0 } else { 1.0 };
            }
            p_row[h] = p;
            l_row[h] = l;
            w_row[h] = w;
            s_row[h] = s;
        }
        prices.push(p_row);
        load.push(l_row);
        wind.push(w_row);
        solar.push(s_row);
    }
    HourlyPanel::new(dates, prices, load, wind, solar).expect("synthetic panel is well formed")
}

/// Writes a panel in the long CSV layout (`date,hour,price,load_fcst,wind_fcst,solar_fcst`).
pub fn write_long_csv<W: std::io::Write>(panel: &HourlyPanel, out: W) -> csv::Result<()> {
    use crate::data::Series;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "date",
        "hour",
        "price",
        "load_fcst",
        "wind_fcst",
        "solar_fcst",
    ])?;
    for (d, date) in panel.dates().iter().enumerate() {
        let ds = date.format("%Y-%m-%d").to_string();
        for h in 0..HOURS {
            let mut rec = vec![ds.clone(), (h + 1).to_string()];
            rec.extend(
                Series::ALL
                    .iter()
                    .map(|&s| panel.series(s)[d][h].to_string()),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
