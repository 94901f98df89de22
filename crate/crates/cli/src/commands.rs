//! Subcommand implementations. Every engine command writes its artifacts
//! under the output directory and prints a short summary; reruns with the
//! same seed produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use counsel::backtest::report::{
    forecast_csv, per_asset_csv, portfolio_daily_csv, records_csv, report_json,
};
use counsel::backtest::{
    run_baseline, run_portfolio, run_single_asset, AblationVariant, BaselineKind, DailyRecord,
    EngineParams, MetricsReport,
};
use counsel::error::{Error, Result};
use counsel::market::Date;

use crate::config::RunConfig;

pub struct Ctx {
    pub cfg: RunConfig,
    /// Directory the config file lives in; relative data paths resolve
    /// against it.
    pub base: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub backend_flag: Option<String>,
}

impl Ctx {
    fn seed(&self) -> Result<u64> {
        self.seed.or(self.cfg.seed).ok_or_else(|| {
            Error::Config("engine runs need a seed (config `seed` or --seed)".into())
        })
    }

    fn engine_params(&self, ablation: Option<AblationVariant>) -> Result<EngineParams> {
        let params = EngineParams {
            window: self.cfg.window,
            test_start: self.cfg.split.test_start.clone(),
            test_end: self.cfg.split.test_end.clone(),
            sizing: self.cfg.sizing.with_seed(self.seed()?),
            risk_beta: self.cfg.risk_beta,
            tau_sim: self.cfg.tau_sim,
            retry_limit: self.cfg.retry_limit,
            annualization: self.cfg.annualization,
            risk_free_daily: self.cfg.risk_free_daily,
            ablation,
        };
        params.validate()?;
        Ok(params)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn print_metrics(report: &MetricsReport) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "days {}  CR {:.4}  SR {}  MDD {:.4}  Calmar {}  ACC {}  MCC {}",
        report.n_days,
        report.cr,
        opt(report.sr),
        report.mdd,
        opt(report.calmar),
        opt(report.acc),
        opt(report.mcc),
    );
}

pub fn cmd_validate(ctx: &Ctx) -> Result<()> {
    // Loading already validated; echo the resolved configuration. The echo
    // is often piped into `head`/`jq`, so a closed pipe is not an error.
    let mut echoed = serde_json::to_value(&ctx.cfg).expect("config serializes");
    if let Some(seed) = ctx.seed.or(ctx.cfg.seed) {
        echoed["seed"] = serde_json::json!(seed);
    }
    let text = serde_json::to_string_pretty(&echoed).expect("echo serializes");
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

#[derive(Serialize)]
struct ForecastSummary {
    asset: String,
    n_days: usize,
    acc: Option<f64>,
    mcc: Option<f64>,
    seed: u64,
}

pub fn cmd_forecast(ctx: &Ctx, symbol: &str, from: Option<Date>, to: Option<Date>) -> Result<()> {
    let entry = ctx.cfg.asset(symbol)?;
    let series = ctx.cfg.load_series(&ctx.base, entry)?;
    let events = ctx.cfg.load_event_docs(&ctx.base)?;
    let mut store = ctx.cfg.load_store(&ctx.base)?;
    let mut backend = ctx
        .cfg
        .make_backend(&ctx.base, ctx.backend_flag.as_deref())?;
    let mut params = ctx.engine_params(None)?;
    if let Some(from) = from {
        params.test_start = from;
    }
    if let Some(to) = to {
        params.test_end = to;
    }
    params.validate()?;
    let (report, records) = run_single_asset(&series, &events, &mut store, &mut backend, &params)?;
    let csv_path = ctx.write(&format!("forecast_{symbol}.csv"), &forecast_csv(&records))?;
    let summary = ForecastSummary {
        asset: symbol.to_string(),
        n_days: report.n_days,
        acc: report.acc,
        mcc: report.mcc,
        seed: params.sizing.seed,
    };
    let mut summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary_json.push('\n');
    let summary_path = ctx.write(&format!("forecast_{symbol}_summary.json"), &summary_json)?;
    println!(
        "forecast {symbol}: {} days, ACC {}, MCC {}",
        report.n_days,
        report
            .acc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report
            .mcc
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    println!(
        "wrote {} and {}",
        csv_path.display(),
        summary_path.display()
    );
    Ok(())
}

fn write_run(ctx: &Ctx, stem: &str, report: &MetricsReport, records: &[DailyRecord]) -> Result<()> {
    let report_path = ctx.write(&format!("{stem}_report.json"), &report_json(report))?;
    let records_path = ctx.write(&format!("{stem}_records.csv"), &records_csv(records))?;
    print_metrics(report);
    println!(
        "wrote {} and {}",
        report_path.display(),
        records_path.display()
    );
    Ok(())
}

pub fn cmd_backtest(
    ctx: &Ctx,
    symbol: &str,
    baseline: Option<BaselineKind>,
    ablate: Option<AblationVariant>,
) -> Result<()> {
    if baseline.is_some() && ablate.is_some() {
        return Err(Error::Config(
            "--baseline and --ablate are mutually exclusive".into(),
        ));
    }
    if let Some(kind) = baseline {
        return cmd_baseline(ctx, kind, Some(symbol));
    }
    let entry = ctx.cfg.asset(symbol)?;
    let series = ctx.cfg.load_series(&ctx.base, entry)?;
    let events = ctx.cfg.load_event_docs(&ctx.base)?;
    let mut store = ctx.cfg.load_store(&ctx.base)?;
    let mut backend = ctx
        .cfg
        .make_backend(&ctx.base, ctx.backend_flag.as_deref())?;
    let params = ctx.engine_params(ablate)?;
    let (report, records) = run_single_asset(&series, &events, &mut store, &mut backend, &params)?;
    let stem = match ablate {
        Some(variant) => format!("ablate_{variant}_{symbol}"),
        None => format!("backtest_{symbol}"),
    };
    write_run(ctx, &stem, &report, &records)
}

pub fn cmd_portfolio(ctx: &Ctx, ablate: Option<AblationVariant>) -> Result<()> {
    let series_set = ctx.cfg.load_all_series(&ctx.base)?;
    let events = ctx.cfg.load_event_docs(&ctx.base)?;
    let mut store = ctx.cfg.load_store(&ctx.base)?;
    let mut backend = ctx
        .cfg
        .make_backend(&ctx.base, ctx.backend_flag.as_deref())?;
    let params = ctx.engine_params(ablate)?;
    let (report, records) = run_portfolio(&series_set, &events, &mut store, &mut backend, &params)?;
    let stem = match ablate {
        Some(variant) => format!("portfolio_ablate_{variant}"),
        None => "portfolio".to_string(),
    };
    let report_path = ctx.write(&format!("{stem}_report.json"), &report_json(&report))?;
    let daily_path = ctx.write(&format!("{stem}_daily.csv"), &portfolio_daily_csv(&records))?;
    let records_path = ctx.write(&format!("{stem}_records.csv"), &per_asset_csv(&records))?;
    print_metrics(&report);
    println!(
        "wrote {}, {} and {}",
        report_path.display(),
        daily_path.display(),
        records_path.display()
    );
    Ok(())
}

pub fn cmd_ablate(ctx: &Ctx, symbol: &str, variant: AblationVariant) -> Result<()> {
    cmd_backtest(ctx, symbol, None, Some(variant))
}

pub fn cmd_baseline(ctx: &Ctx, kind: BaselineKind, symbol: Option<&str>) -> Result<()> {
    let series_set = match (kind, symbol) {
        (BaselineKind::MarkowitzMeanVariance, _) => ctx.cfg.load_all_series(&ctx.base)?,
        (_, Some(symbol)) => {
            let entry = ctx.cfg.asset(symbol)?;
            vec![ctx.cfg.load_series(&ctx.base, entry)?]
        }
        (_, None) => {
            return Err(Error::Config(format!("baseline {kind} needs --asset")));
        }
    };
    let (report, records) = run_baseline(
        kind,
        &series_set,
        &ctx.cfg.split,
        ctx.cfg.baseline_lookback,
        ctx.cfg.annualization,
        ctx.cfg.risk_free_daily,
    )?;
    let stem = match symbol {
        Some(symbol) if kind != BaselineKind::MarkowitzMeanVariance => {
            format!("baseline_{kind}_{symbol}")
        }
        _ => format!("baseline_{kind}"),
    };
    let report_path = ctx.write(&format!("{stem}_report.json"), &report_json(&report))?;
    let records_path = if kind == BaselineKind::MarkowitzMeanVariance {
        ctx.write(&format!("{stem}_records.csv"), &per_asset_csv(&records))?
    } else {
        ctx.write(&format!("{stem}_records.csv"), &records_csv(&records))?
    };
    print_metrics(&report);
    println!(
        "wrote {} and {}",
        report_path.display(),
        records_path.display()
    );
    Ok(())
}

pub fn resolve_out_dir(cfg: &RunConfig, base: &Path, flag: Option<PathBuf>) -> PathBuf {
    match flag {
        Some(dir) => dir,
        None => {
            if cfg.out_dir.is_absolute() {
                cfg.out_dir.clone()
            } else {
                base.join(&cfg.out_dir)
            }
        }
    }
}
