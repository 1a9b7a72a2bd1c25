use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use epfcal::changepoint::{write_solution_path_csv, NotConfig};
use epfcal::data::{self, BacktestCalendar, HourlyPanel, ValidationReport};
use epfcal::eval::{self, ErrorPanel, Score};
use epfcal::strategy::{self, actuals, Engine, Family, ForecastMatrix, Member, StrategySpec};
use epfcal::window::{write_mask_report, MaskRecord};
use serde_json::json;

use crate::config::{RunConfig, DEFAULT_TEST_DAYS};
use crate::output::{sha256_file, Staging};
use crate::Failure;

/// Options shared by all commands after command-line overrides.
pub struct RunContext {
    pub config: RunConfig,
    pub out: Option<PathBuf>,
    pub timings: bool,
}

struct Loaded {
    panel: HourlyPanel,
    data_sha256: String,
}

impl RunContext {
    fn out_dir(&self) -> Result<PathBuf, Failure> {
        self.out
            .clone()
            .or_else(|| self.config.output_dir.clone())
            .ok_or_else(|| {
                Failure::Config(anyhow!("no output directory: pass --out or set output_dir"))
            })
    }

    fn load(&self) -> Result<Loaded, Failure> {
        let path = &self.config.data.path;
        let (panel, report) = data::load_panel(path, &self.config.data.schema)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(Failure::Data)?;
        log_repairs(&report);
        let data_sha256 = sha256_file(path).map_err(Failure::Data)?;
        Ok(Loaded { panel, data_sha256 })
    }

    fn calendar(
        &self,
        panel: &HourlyPanel,
        max_window: usize,
    ) -> Result<BacktestCalendar, Failure> {
        let cal = &self.config.calendar;
        let res = match cal.test_start {
            Some(date) => {
                let start = panel.day_index(date).ok_or_else(|| {
                    Failure::Config(anyhow!("calendar.test_start {date} is not in the data"))
                })?;
                let n = cal.n_test_days.unwrap_or(panel.n_days() - start);
                BacktestCalendar::new(panel.n_days(), start, n, max_window)
            }
            None => BacktestCalendar::trailing(
                panel.n_days(),
                cal.n_test_days.unwrap_or(DEFAULT_TEST_DAYS),
                max_window,
            ),
        };
        res.context("calendar").map_err(Failure::Config)
    }

    fn engine<'a>(
        &self,
        panel: &'a HourlyPanel,
        calendar: BacktestCalendar,
    ) -> Result<Engine<'a>, Failure> {
        let mut engine = Engine::new(
            panel,
            calendar,
            self.config.engine_config(),
            self.not_config(),
        );
        for ext in &self.config.external {
            let f = File::open(&ext.path)
                .with_context(|| format!("external forecasts {}", ext.path.display()))
                .map_err(Failure::Data)?;
            let m = strategy::read_forecast_csv(&ext.name, BufReader::new(f))
                .with_context(|| format!("external forecasts {}", ext.path.display()))
                .map_err(Failure::Data)?;
            engine.add_external(ext.name.clone(), m);
        }
        Ok(engine)
    }

    fn not_config(&self) -> NotConfig {
        self.config.not.clone()
    }

    /// Config as echoed into the manifest; the output location is left out
    /// so that runs into different directories stay comparable.
    fn echo(&self) -> serde_json::Value {
        let mut c = self.config.clone();
        c.output_dir = None;
        serde_json::to_value(&c).expect("config serialises")
    }

    fn specs(&self) -> Result<Vec<StrategySpec>, Failure> {
        self.config.strategy_specs().map_err(Failure::Config)
    }
}

fn log_repairs(report: &ValidationReport) {
    if report.interpolated_cells > 0 || report.averaged_duplicates > 0 {
        log::warn!(
            "data repaired: {} interpolated cells, {} averaged duplicate hours",
            report.interpolated_cells,
            report.averaged_duplicates
        );
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn csv_body<F>(f: F) -> impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    move |b| Ok(f(b)?)
}

pub fn validate_data(ctx: &RunContext) -> Result<(), Failure> {
    let path = &ctx.config.data.path;
    let (_, report) = data::load_panel(path, &ctx.config.data.schema)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Data)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(runtime)?
    );
    Ok(())
}

fn max_window(ctx: &RunContext, specs: &[StrategySpec]) -> usize {
    let cfg = ctx.config.engine_config();
    specs
        .iter()
        .map(|s| cfg.max_window(s))
        .max()
        .unwrap_or(0)
        .max(1)
}

fn scores_and_panels(
    truth: &ForecastMatrix,
    results: &[(String, ForecastMatrix)],
) -> Result<(Vec<Score>, Vec<ErrorPanel>), Failure> {
    let mut scores = Vec::new();
    let mut panels = Vec::new();
    for (_, m) in results {
        let panel = ErrorPanel::from_forecasts(truth, m).map_err(runtime)?;
        scores.push(eval::score(&panel).map_err(runtime)?);
        panels.push(panel);
    }
    Ok((scores, panels))
}

fn write_evaluation(
    ctx: &RunContext,
    staging: &mut Staging,
    truth: &ForecastMatrix,
    results: &[(String, ForecastMatrix)],
) -> Result<(), Failure> {
    let (scores, panels) = scores_and_panels(truth, results)?;
    staging
        .write(
            "scores.csv",
            csv_body(|b| eval::write_scores_csv(&scores, b)),
        )
        .map_err(runtime)?;
    if panels.len() >= 2 {
        let dm = eval::dm_matrix(&panels, ctx.config.norm_order()).map_err(runtime)?;
        staging
            .write("dm_matrix.csv", csv_body(|b| dm.write_csv(b)))
            .map_err(runtime)?;
        staging
            .write("dm_matrix.json", |b| {
                Ok(serde_json::to_writer_pretty(b, &dm.to_json())?)
            })
            .map_err(runtime)?;
    }
    Ok(())
}

fn not_members(ctx: &RunContext, specs: &[StrategySpec]) -> BTreeSet<Member> {
    let cfg = ctx.config.engine_config();
    specs
        .iter()
        .flat_map(|s| cfg.members(s))
        .map(|(m, _)| m)
        .filter(|m| m.family == Family::NotH)
        .collect()
}

pub fn backtest(ctx: &RunContext) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let specs = ctx.specs()?;
    let loaded = ctx.load()?;
    let calendar = ctx.calendar(&loaded.panel, max_window(ctx, &specs))?;
    let engine = ctx.engine(&loaded.panel, calendar)?;

    let mut staging = Staging::new(&out).map_err(runtime)?;
    let mut results = Vec::new();
    for spec in &specs {
        log::info!("running {spec}");
        let m = engine
            .run_strategy(spec)
            .with_context(|| format!("strategy {spec}"))
            .map_err(runtime)?;
        staging
            .write(
                &format!("forecasts_{}.csv", spec.slug()),
                csv_body(|b| strategy::write_forecast_csv(&m, b)),
            )
            .map_err(runtime)?;
        results.push((spec.name(), m));
    }
    let truth = actuals(&loaded.panel, &calendar);
    write_evaluation(ctx, &mut staging, &truth, &results)?;

    if !ctx.config.report.mask_hours.is_empty() {
        for member in not_members(ctx, &specs) {
            let records = engine.mask_records(member.tau);
            staging
                .write(
                    &format!("mask_report_not_h_{}.csv", member.tau),
                    csv_body(|b| write_mask_report(&records, b)),
                )
                .map_err(runtime)?;
        }
    }
    if ctx.config.report.coefficients {
        let cfg = ctx.config.engine_config();
        let members: BTreeSet<Member> = specs
            .iter()
            .flat_map(|s| cfg.members(s))
            .map(|(m, _)| m)
            .collect();
        for member in members {
            let records = engine.fit_records(member);
            let slug = StrategySpec::Single(member).slug();
            staging
                .write(
                    &format!("coefficients_{slug}.csv"),
                    csv_body(|b| strategy::write_coefficients_csv(&records, b)),
                )
                .map_err(runtime)?;
        }
    }
    write_timings(ctx, &mut staging, &engine)?;
    log::info!(
        "{} member-days computed, {} hourly fits fell back to the full window",
        engine.member_days_computed(),
        engine.fallbacks()
    );
    finish(staging, "backtest", ctx, &loaded, &out)
}

fn write_timings(ctx: &RunContext, staging: &mut Staging, engine: &Engine) -> Result<(), Failure> {
    if !ctx.timings {
        return Ok(());
    }
    let n_days = engine.calendar().n_test_days.max(1) as f64;
    let t: serde_json::Map<String, serde_json::Value> = engine
        .timings()
        .into_iter()
        .map(|(k, d)| (k, json!({ "total_seconds": d.as_secs_f64(), "seconds_per_day": d.as_secs_f64() / n_days })))
        .collect();
    staging
        .write_unchecked("timings.json", |b| Ok(serde_json::to_writer_pretty(b, &t)?))
        .map_err(runtime)
}

fn finish(
    staging: Staging,
    command: &str,
    ctx: &RunContext,
    loaded: &Loaded,
    out: &Path,
) -> Result<(), Failure> {
    let files = staging
        .commit(command, &ctx.echo(), &loaded.data_sha256)
        .map_err(runtime)?;
    for f in files {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

pub fn sweep(ctx: &RunContext) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let specs = ctx.specs()?;
    let taus = ctx.config.sweep.taus();
    let references: Vec<StrategySpec> = specs
        .into_iter()
        .filter(|s| !matches!(s, StrategySpec::Single(m) if m.family != Family::NotH))
        .collect();
    let tau_max = *taus.last().expect("validated non-empty range");
    let loaded = ctx.load()?;
    let calendar = ctx.calendar(&loaded.panel, max_window(ctx, &references).max(tau_max))?;
    let engine = ctx.engine(&loaded.panel, calendar)?;
    let truth = actuals(&loaded.panel, &calendar);

    let rmse_of = |spec: &StrategySpec| -> Result<f64, Failure> {
        let m = engine
            .run_strategy(spec)
            .with_context(|| format!("strategy {spec}"))
            .map_err(runtime)?;
        let panel = ErrorPanel::from_forecasts(&truth, &m).map_err(runtime)?;
        eval::rmse(&panel).map_err(runtime)
    };

    let mut rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        log::info!("tau {tau}");
        rows.push((
            tau,
            rmse_of(&StrategySpec::win(tau))?,
            rmse_of(&StrategySpec::win_h(tau))?,
        ));
    }
    let mut refs = Vec::with_capacity(references.len());
    for spec in &references {
        refs.push((spec.name(), rmse_of(spec)?));
    }

    let mut staging = Staging::new(&out).map_err(runtime)?;
    staging
        .write(
            "sweep.csv",
            csv_body(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["tau", "rmse_win", "rmse_win_h"])?;
                for (tau, a, h) in &rows {
                    w.write_record([tau.to_string(), format!("{a:.6}"), format!("{h:.6}")])?;
                }
                w.flush()?;
                Ok(())
            }),
        )
        .map_err(runtime)?;
    staging
        .write(
            "sweep_reference.csv",
            csv_body(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["strategy", "rmse"])?;
                for (name, r) in &refs {
                    w.write_record([name.clone(), format!("{r:.6}")])?;
                }
                w.flush()?;
                Ok(())
            }),
        )
        .map_err(runtime)?;
    write_timings(ctx, &mut staging, &engine)?;
    finish(staging, "sweep", ctx, &loaded, &out)
}

/// Scores and DM matrix for forecasts already written by `backtest`.
pub fn dm_matrix(ctx: &RunContext, forecasts: Option<&Path>) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let source = forecasts
        .map(Path::to_path_buf)
        .or_else(|| ctx.config.output_dir.clone())
        .ok_or_else(|| {
            Failure::Config(anyhow!(
                "no forecast directory: pass --forecasts or set output_dir"
            ))
        })?;
    let specs = ctx.specs()?;
    let loaded = ctx.load()?;
    let mut results = Vec::new();
    for spec in &specs {
        let path = source.join(format!("forecasts_{}.csv", spec.slug()));
        let f = File::open(&path)
            .with_context(|| format!("cannot open {}", path.display()))
            .map_err(Failure::Data)?;
        let m = strategy::read_forecast_csv(&spec.name(), BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Data)?;
        results.push((spec.name(), m));
    }
    let first = results
        .first()
        .map(|(_, m)| m)
        .expect("at least one strategy");
    let start = first
        .dates
        .first()
        .and_then(|d| loaded.panel.day_index(*d))
        .ok_or_else(|| Failure::Data(anyhow!("forecast dates are not covered by the data")))?;
    let n = first.dates.len();
    if start + n > loaded.panel.n_days() {
        return Err(Failure::Data(anyhow!(
            "forecast dates run past the end of the data"
        )));
    }
    let truth = ForecastMatrix {
        strategy: "actual".into(),
        first_day: start,
        dates: loaded.panel.dates()[start..start + n].to_vec(),
        values: loaded.panel.prices()[start..start + n].to_vec(),
    };
    for (name, m) in &mut results {
        if m.dates != truth.dates {
            return Err(Failure::Data(anyhow!(
                "forecasts of {name} cover different dates"
            )));
        }
        m.first_day = start;
    }
    let mut staging = Staging::new(&out).map_err(runtime)?;
    write_evaluation(ctx, &mut staging, &truth, &results)?;
    finish(staging, "dm-matrix", ctx, &loaded, &out)
}

pub fn mask_report(ctx: &RunContext, tau: Option<usize>, dump_paths: bool) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let tau = tau
        .or(ctx.config.report.mask_tau)
        .unwrap_or(ctx.config.model.not_window);
    if tau == 0 {
        return Err(Failure::Config(anyhow!("mask window must be positive")));
    }
    let hours = &ctx.config.report.mask_hours;
    if hours.is_empty() {
        return Err(Failure::Config(anyhow!("report.mask_hours is empty")));
    }
    let loaded = ctx.load()?;
    let calendar = ctx.calendar(&loaded.panel, tau)?;
    let engine = ctx.engine(&loaded.panel, calendar)?;
    let jobs: Vec<(usize, usize)> = calendar
        .test_days()
        .flat_map(|d| hours.iter().map(move |&h| (d, h)))
        .collect();
    let detections = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(d, h)| engine.not_detection(tau, d, h).map(|r| (d, h, r)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?
    };
    let records: Vec<MaskRecord> = detections
        .iter()
        .map(|(d, h, (_, mask))| MaskRecord {
            target_date: loaded.panel.date(*d),
            hour: *h,
            mask: mask.clone(),
        })
        .collect();

    let mut staging = Staging::new(&out).map_err(runtime)?;
    staging
        .write(
            &format!("mask_report_not_h_{tau}.csv"),
            csv_body(|b| write_mask_report(&records, b)),
        )
        .map_err(runtime)?;
    if dump_paths {
        let panel = &loaded.panel;
        staging
            .write(
                &format!("solution_paths_not_h_{tau}.csv"),
                csv_body(|b| {
                    let mut w = csv::Writer::from_writer(b);
                    w.write_record([
                        "target_date",
                        "hour",
                        "threshold",
                        "n_points",
                        "points",
                        "selected",
                    ])?;
                    for (d, h, (cps, _)) in &detections {
                        let mut one = Vec::new();
                        write_solution_path_csv(cps, &mut one)?;
                        let date = panel.date(*d).format("%Y-%m-%d").to_string();
                        let chosen = cps
                            .points
                            .iter()
                            .map(|p| p.to_string())
                            .collect::<Vec<_>>()
                            .join(";");
                        let mut rdr = csv::Reader::from_reader(one.as_slice());
                        for rec in rdr.records() {
                            let rec = rec?;
                            let selected = if rec[2] == chosen { "1" } else { "0" };
                            w.write_record([
                                date.as_str(),
                                &h.to_string(),
                                &rec[0],
                                &rec[1],
                                &rec[2],
                                selected,
                            ])?;
                        }
                    }
                    w.flush()?;
                    Ok(())
                }),
            )
            .map_err(runtime)?;
    }
    finish(staging, "mask-report", ctx, &loaded, &out)
}
