//! Browser bindings for the calibration-window demo page in `www/`.
//!
//! Every exported function returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use epfcal::changepoint::{self, NotConfig};
use epfcal::data::Series;
use epfcal::eval::{self, ErrorPanel, NormOrder};
use epfcal::synthetic::{self, SyntheticSpec};
use epfcal::transform::{self, TransformKind};
use epfcal::window::{self, QuantileOrders};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct MaskDemo {
    pub prices: Vec<f64>,
    pub transformed: Vec<f64>,
    pub change_points: Vec<usize>,
    pub segment_medians: Vec<f64>,
    pub q_low: Option<f64>,
    pub q_high: Option<f64>,
    pub selected: Vec<bool>,
    pub n_selected: usize,
}

/// Synthetic prices for one hour over `tau` days, NOT change-points on the
/// asinh-transformed series, and the resulting calibration mask.
pub fn mask_demo(
    seed: u64,
    tau: usize,
    hour: usize,
    q_low: f64,
    q_high: f64,
    n_intervals: usize,
) -> Result<MaskDemo, String> {
    if !(1..=24).contains(&hour) {
        return Err(format!("hour {hour} outside 1..=24"));
    }
    if !(20..=2000).contains(&tau) {
        return Err("window must be between 20 and 2000 days".into());
    }
    let panel = synthetic::generate(&SyntheticSpec::new(tau, seed));
    let prices = panel.hour_slice(Series::Price, 0..tau, hour);
    let params = transform::fit(TransformKind::Asinh, &prices).map_err(|e| e.to_string())?;
    let transformed = params.apply_all(&prices);
    let cfg = NotConfig {
        n_intervals: n_intervals.clamp(10, 20_000),
        seed,
        ..NotConfig::default()
    };
    let cps = changepoint::detect(&transformed, &cfg).map_err(|e| e.to_string())?;
    let mask = window::select_calibration(
        &transformed,
        &cps,
        QuantileOrders {
            low: q_low,
            high: q_high,
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(MaskDemo {
        selected: (0..tau).map(|o| mask.contains_offset(o)).collect(),
        n_selected: mask.n_selected,
        change_points: cps.points,
        segment_medians: mask.segment_medians,
        q_low: mask.q_low,
        q_high: mask.q_high,
        prices,
        transformed,
    })
}

#[derive(Debug, Serialize)]
pub struct TransformCurve {
    pub x: Vec<f64>,
    pub asinh: Vec<f64>,
    pub zscore: Vec<f64>,
}

/// Both price transforms, fitted on a synthetic sample with occasional
/// spikes, evaluated on a grid over [lo, hi].
pub fn transform_curve(
    seed: u64,
    spike_prob: f64,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<TransformCurve, String> {
    if !(lo < hi) || steps < 2 {
        return Err("need lo < hi and at least two steps".into());
    }
    let mut spec = SyntheticSpec::new(365, seed);
    spec.spike_prob = spike_prob.clamp(0.0, 0.5);
    let panel = synthetic::generate(&spec);
    let sample: Vec<f64> = panel.prices().iter().flatten().copied().collect();
    let a = transform::fit(TransformKind::Asinh, &sample).map_err(|e| e.to_string())?;
    let z = transform::fit(TransformKind::ZScore, &sample).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect();
    Ok(TransformCurve {
        asinh: a.apply_all(&x),
        zscore: z.apply_all(&x),
        x,
    })
}

#[derive(Debug, Serialize)]
pub struct DmDemo {
    pub differential: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

/// Two simulated 24-hour error panels, model A's errors shrunk by
/// `improvement`, and the multivariate DM test of "A beats B".
pub fn dm_demo(
    seed: u64,
    n_days: usize,
    improvement: f64,
    norm_order: u8,
) -> Result<DmDemo, String> {
    let norm = NormOrder::from_order(norm_order).ok_or("norm order must be 1 or 2")?;
    if !(2..=5000).contains(&n_days) {
        return Err("days must be between 2 and 5000".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut a = Vec::with_capacity(n_days);
    let mut b = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        let shared: [f64; 24] = std::array::from_fn(|_| noise.sample(&mut rng) * 5.0);
        let own_a: [f64; 24] = std::array::from_fn(|_| noise.sample(&mut rng));
        let own_b: [f64; 24] = std::array::from_fn(|_| noise.sample(&mut rng));
        a.push(std::array::from_fn(|h| {
            (1.0 - improvement) * shared[h] + own_a[h]
        }));
        b.push(std::array::from_fn(|h| shared[h] + own_b[h]));
    }
    let (pa, pb) = (ErrorPanel::new("A", a), ErrorPanel::new("B", b));
    let res = eval::dm_multivariate(&pa, &pb, norm).map_err(|e| e.to_string())?;
    let daily =
        |p: &ErrorPanel| -> Vec<f64> { p.errors.iter().map(|r| norm.daily_norm(r)).collect() };
    let differential = daily(&pb)
        .iter()
        .zip(daily(&pa))
        .map(|(x, y)| x - y)
        .collect();
    Ok(DmDemo {
        differential,
        statistic: res.statistic,
        p_value: res.p_value,
        degenerate: res.degenerate,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen(js_name = maskDemo)]
pub fn mask_demo_js(
    seed: u32,
    tau: u32,
    hour: u32,
    q_low: f64,
    q_high: f64,
    n_intervals: u32,
) -> String {
    to_json(mask_demo(
        seed.into(),
        tau as usize,
        hour as usize,
        q_low,
        q_high,
        n_intervals as usize,
    ))
}

#[wasm_bindgen(js_name = transformCurve)]
pub fn transform_curve_js(seed: u32, spike_prob: f64, lo: f64, hi: f64, steps: u32) -> String {
    to_json(transform_curve(
        seed.into(),
        spike_prob,
        lo,
        hi,
        steps as usize,
    ))
}

#[wasm_bindgen(js_name = dmDemo)]
pub fn dm_demo_js(seed: u32, n_days: u32, improvement: f64, norm_order: u8) -> String {
    to_json(dm_demo(
        seed.into(),
        n_days as usize,
        improvement,
        norm_order,
    ))
}
