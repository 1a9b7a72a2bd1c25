//! TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use chrono::NaiveDate;
use epfcal::arx::MIN_OBSERVATIONS;
use epfcal::changepoint::NotConfig;
use epfcal::data::{PanelSchema, HOURS};
use epfcal::eval::NormOrder;
use epfcal::strategy::{AvNotMode, DetectOn, EngineConfig, StrategySpec, TransformSample};
use epfcal::transform::TransformOptions;
use epfcal::window::QuantileOrders;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub calendar: CalendarConfig,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub not: NotConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub external: Vec<ExternalConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: PanelSchema,
}

/// Test period. With neither field set the last 736 days are forecast.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarConfig {
    pub test_start: Option<NaiveDate>,
    pub n_test_days: Option<usize>,
}

pub const DEFAULT_TEST_DAYS: usize = 736;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub quantiles: QuantileOrders,
    pub transform: TransformOptions,
    pub standardize_exog: bool,
    pub transform_sample: TransformSample,
    pub detect_on: DetectOn,
    pub short_windows: Vec<usize>,
    pub long_windows: Vec<usize>,
    pub not_window: usize,
    pub av_not_mode: AvNotMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            quantiles: e.quantiles,
            transform: e.transform,
            standardize_exog: e.standardize_exog,
            transform_sample: e.transform_sample,
            detect_on: e.detect_on,
            short_windows: e.short_windows,
            long_windows: e.long_windows,
            not_window: e.not_window,
            av_not_mode: e.av_not_mode,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Hours whose NOT masks go into the mask report.
    pub mask_hours: Vec<usize>,
    /// Window of `mask-report`; defaults to `model.not_window`.
    pub mask_tau: Option<usize>,
    pub coefficients: bool,
    /// 1 or 2.
    pub norm_order: u8,
    /// Write `timings.json`. Off by default since timings differ between runs.
    pub timings: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            mask_hours: vec![4, 18],
            mask_tau: None,
            coefficients: false,
            norm_order: 2,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub tau_min: usize,
    pub tau_max: usize,
    pub tau_step: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tau_min: 56,
            tau_max: 728,
            tau_step: 1,
        }
    }
}

impl SweepConfig {
    pub fn taus(&self) -> Vec<usize> {
        (self.tau_min..=self.tau_max)
            .step_by(self.tau_step.max(1))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub name: String,
    pub path: PathBuf,
}

fn default_strategies() -> Vec<String> {
    StrategySpec::standard_suite()
        .iter()
        .map(|s| s.name())
        .collect()
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.path = resolve(base, &cfg.data.path);
        cfg.output_dir = cfg.output_dir.map(|p| resolve(base, &p));
        for ext in &mut cfg.external {
            ext.path = resolve(base, &ext.path);
        }
        if cfg.not.seed != 0 {
            log::warn!("not.seed is ignored; detector seeds derive from the top-level seed");
            cfg.not.seed = 0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.not.validate().context("[not]")?;
        let q = self.model.quantiles;
        ensure!(
            0.0 <= q.low && q.low < q.high && q.high <= 1.0,
            "model.quantiles must satisfy 0 <= low < high <= 1"
        );
        ensure!(
            self.model.transform.mad_scale > 0.0,
            "model.transform.mad_scale must be positive"
        );
        ensure!(
            !self.model.short_windows.is_empty() && !self.model.long_windows.is_empty(),
            "model.short_windows and model.long_windows must not be empty"
        );
        ensure!(
            self.model
                .short_windows
                .iter()
                .chain(&self.model.long_windows)
                .all(|&t| t > 0)
                && self.model.not_window > 0,
            "calibration windows must be positive"
        );
        if let Some(&h) = self
            .report
            .mask_hours
            .iter()
            .find(|h| !(1..=HOURS).contains(h))
        {
            bail!("report.mask_hours: hour {h} outside 1..=24");
        }
        ensure!(
            NormOrder::from_order(self.report.norm_order).is_some(),
            "report.norm_order must be 1 or 2"
        );
        ensure!(
            self.sweep.tau_min > 0
                && self.sweep.tau_min <= self.sweep.tau_max
                && self.sweep.tau_step > 0,
            "sweep needs 0 < tau_min <= tau_max and tau_step > 0"
        );
        ensure!(
            self.calendar.n_test_days != Some(0),
            "calendar.n_test_days must be positive"
        );
        ensure!(
            self.sweep.tau_min >= MIN_OBSERVATIONS,
            "sweep.tau_min must be at least {MIN_OBSERVATIONS} (regression rows needed per fit)"
        );
        let engine = self.engine_config();
        for spec in self.strategy_specs()? {
            for (m, _) in engine.members(&spec) {
                ensure!(
                    m.tau >= MIN_OBSERVATIONS,
                    "{spec}: window {} is shorter than the {MIN_OBSERVATIONS} days one regression needs",
                    m.tau
                );
            }
        }
        Ok(())
    }

    pub fn strategy_specs(&self) -> anyhow::Result<Vec<StrategySpec>> {
        ensure!(!self.strategies.is_empty(), "no strategies configured");
        let mut specs = Vec::with_capacity(self.strategies.len());
        for s in &self.strategies {
            let spec: StrategySpec = s.parse().with_context(|| format!("strategies: `{s}`"))?;
            if let StrategySpec::External(name) = &spec {
                ensure!(
                    self.external.iter().any(|e| &e.name == name),
                    "strategy `{s}` needs an [[external]] entry named `{name}`"
                );
            }
            ensure!(!specs.contains(&spec), "strategy `{s}` listed twice");
            specs.push(spec);
        }
        Ok(specs)
    }

    pub fn engine_config(&self) -> EngineConfig {
        let m = self.model.clone();
        EngineConfig {
            seed: self.seed,
            quantiles: m.quantiles,
            transform: m.transform,
            standardize_exog: m.standardize_exog,
            transform_sample: m.transform_sample,
            detect_on: m.detect_on,
            short_windows: m.short_windows,
            long_windows: m.long_windows,
            not_window: m.not_window,
            av_not_mode: m.av_not_mode,
            record_mask_hours: self.report.mask_hours.clone(),
            record_coefficients: self.report.coefficients,
        }
    }

    pub fn norm_order(&self) -> NormOrder {
        NormOrder::from_order(self.report.norm_order).expect("validated")
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
