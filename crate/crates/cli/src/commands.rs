use std::path::{Path, PathBuf};

use bpot::conditional::{conditional_predictive_cdf, conditional_quantile_draws, ConditionalDraws};
use bpot::excess::{extract_excesses, ExcessData};
use bpot::gpd::{fit_mle, pwm_estimate, MleFit};
use bpot::mcmc::{sample_gpd_posterior, McmcConfig, PosteriorDraws};
use bpot::posterior::{
    credible_interval, extreme_quantile_draws, predictive_from_draws, predictive_quantile, summarize,
    IntervalKind,
};
use bpot::priors::{PriorKind, PriorSpec};
use bpot::scedasis::{dp_posterior, ks_covariate_test, scedasis_posterior, BaseMeasure, DpPosterior};
use bpot::simlab::ExperimentSpec;
use serde_json::{json, Value};

use crate::config::{
    parse_list, resolve_seed, BallArgs, FitArgs, IoArgs, PosteriorArgs, PredictArgs, QuantileArgs, RunConfig,
    ScedasisArgs, ScedasisBlock, SimulateArgs, TestArgs, TestBlock,
};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, Dataset};

const LEVEL: f64 = 0.95;
/// Draws used for interval estimates of `c(x)`.
const C_DRAWS: usize = 4000;

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, v: &Value) -> CliResult<PathBuf> {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    write_text(dir, name, &s)
}

/// CSV with a leading `# provenance` comment line.
fn write_csv(dir: &Path, name: &str, rc: &RunConfig, header: &[String], rows: &[Vec<f64>]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
    let text = format!("# provenance {}\n{body}", serde_json::to_string(&rc.provenance()).unwrap());
    write_text(dir, name, &text)
}

fn summary_json(values: &[f64]) -> CliResult<Value> {
    let s = summarize(values)?;
    Ok(json!({
        "mean": s.mean,
        "sd": s.sd,
        "q025": s.quantile(0.025),
        "median": s.median(),
        "q975": s.quantile(0.975),
    }))
}

fn intervals_json(values: &[f64]) -> CliResult<Value> {
    let a = credible_interval(values, LEVEL, IntervalKind::Asymmetric)?;
    let s = credible_interval(values, LEVEL, IntervalKind::Symmetric)?;
    Ok(json!({
        "level": LEVEL,
        "asymmetric": [a.lower, a.upper],
        "symmetric": [s.lower, s.upper],
    }))
}

struct PosteriorRun {
    data: ExcessData,
    prior: PriorSpec,
    mcmc: McmcConfig,
    draws: PosteriorDraws,
    mle: Option<MleFit>,
}

fn run_posterior(io: &IoArgs, pa: &PosteriorArgs, ds: &Dataset, seed: u64) -> CliResult<PosteriorRun> {
    let data = extract_excesses(&ds.y, io.k, ds.x.as_deref())?;
    let mle = fit_mle(&data.excesses).ok();
    let mut prior = pa.prior()?;
    if prior.kind == PriorKind::DataDependent {
        let s = match mle {
            Some(f) => f.params.sigma,
            None => pwm_estimate(&data.excesses)?.sigma,
        };
        prior.sigma_hat = Some(s);
    }
    let mcmc = pa.mcmc(seed)?;
    let draws = sample_gpd_posterior(&data.excesses, &prior, &mcmc)?;
    Ok(PosteriorRun {
        data,
        prior,
        mcmc,
        draws,
        mle,
    })
}

fn base_config(command: &str, io: &IoArgs, seed: u64) -> RunConfig {
    let mut rc = RunConfig::new(command, io.output.clone(), seed);
    rc.input = Some(io.input.clone());
    rc.k = Some(io.k);
    rc
}

fn posterior_json(rc: &RunConfig, run: &PosteriorRun) -> CliResult<Value> {
    let g = run.draws.gammas();
    let s = run.draws.sigmas();
    Ok(json!({
        "provenance": rc.provenance(),
        "data": {
            "n": run.data.n,
            "k": run.data.k,
            "threshold": run.data.threshold,
        },
        "param_summary": { "gamma": summary_json(&g)?, "sigma": summary_json(&s)? },
        "intervals": { "gamma": intervals_json(&g)?, "sigma": intervals_json(&s)? },
        "diagnostics": {
            "draws": run.draws.len(),
            "acceptance_rate": run.draws.acceptance_rate,
            "ess": run.draws.ess,
        },
        "mle": run.mle.map(|f| f.params),
    }))
}

pub fn fit(a: &FitArgs) -> CliResult<Vec<PathBuf>> {
    let seed = resolve_seed(a.io.seed);
    let ds = ingest_csv(&a.io.input)?;
    let run = run_posterior(&a.io, &a.posterior, &ds, seed)?;
    let mut rc = base_config("fit", &a.io, seed);
    rc.prior = Some(run.prior);
    rc.mcmc = Some(run.mcmc);
    let rows: Vec<Vec<f64>> = run
        .draws
        .draws
        .iter()
        .zip(&run.draws.log_post_trace)
        .map(|(t, lp)| vec![t.gamma, t.sigma, *lp])
        .collect();
    Ok(vec![
        write_csv(&a.io.output, "draws.csv", &rc, &["gamma".into(), "sigma".into(), "log_post".into()], &rows)?,
        write_json(&a.io.output, "summary.json", &posterior_json(&rc, &run)?)?,
    ])
}

struct ScedasisContext {
    dp: DpPosterior,
    x_all: Vec<Vec<f64>>,
    block: ScedasisBlock,
}

fn scedasis_context(ball: &BallArgs, data: &ExcessData, ds: &Dataset) -> CliResult<ScedasisContext> {
    let x_all = ds.covariates()?.to_vec();
    let conc = data
        .concomitants
        .as_ref()
        .ok_or_else(|| CliError::config("input has no covariates"))?;
    let dp = dp_posterior(ball.tau_mass, BaseMeasure::Uniform, conc)?;
    let block = ScedasisBlock {
        method: ball.method(x_all.len()),
        tau_total: ball.tau_mass,
        x_grid: ball.grid(dp.d)?,
    };
    Ok(ScedasisContext { dp, x_all, block })
}

/// Per-x conditional results for the quantile and predict commands.
fn conditional_json(
    ctx: &ScedasisContext,
    run: &PosteriorRun,
    seed: u64,
    p: Option<f64>,
    p_star: &[f64],
) -> CliResult<Value> {
    let mut out = Vec::new();
    for (i, x) in ctx.block.x_grid.iter().enumerate() {
        let sp = scedasis_posterior(&ctx.dp, x, ctx.block.method, &ctx.x_all)?;
        let cs = sp.sample(run.draws.len(), seed.wrapping_add(i as u64 + 1));
        let cd = ConditionalDraws::new(
            &run.draws.draws,
            &cs,
            run.data.threshold,
            run.data.n,
            run.data.k,
            x.clone(),
        )?;
        let mut entry = json!({
            "x": x,
            "c_summary": summary_json(&cs)?,
            "c_interval": intervals_json(&cs)?,
        });
        if let Some(p) = p {
            let q = conditional_quantile_draws(&cd, p)?;
            entry["quantile"] = json!({
                "p": p,
                "draws_summary": summary_json(&q.values)?,
                "interval": intervals_json(&q.values)?,
                "dropped_fraction": q.dropped_fraction(),
            });
        }
        let pred = conditional_predictive_cdf(&cd)?;
        let lv = pred.level_quantiles(&[0.025, 0.975])?;
        entry["predictive_interval"] = json!({ "level": LEVEL, "bounds": lv });
        if !p_star.is_empty() {
            let qs = p_star
                .iter()
                .map(|&ps| Ok(json!({ "p_star": ps, "value": predictive_quantile(&pred, ps)? })))
                .collect::<CliResult<Vec<_>>>()?;
            entry["predictive_quantiles"] = Value::Array(qs);
        }
        out.push(entry);
    }
    Ok(Value::Array(out))
}

pub fn quantile(a: &QuantileArgs) -> CliResult<Vec<PathBuf>> {
    let seed = resolve_seed(a.io.seed);
    let ds = ingest_csv(&a.io.input)?;
    let run = run_posterior(&a.io, &a.posterior, &ds, seed)?;
    let q = extreme_quantile_draws(&run.draws.draws, &run.data, a.p)?;
    let mut rc = base_config("quantile", &a.io, seed);
    rc.p = Some(a.p);
    rc.prior = Some(run.prior);
    rc.mcmc = Some(run.mcmc);
    let ctx = match &a.ball.x_grid {
        Some(_) => Some(scedasis_context(&a.ball, &run.data, &ds)?),
        None => None,
    };
    rc.scedasis = ctx.as_ref().map(|c| c.block.clone());
    let mut v = posterior_json(&rc, &run)?;
    v["extreme_quantile"] = json!({
        "p": a.p,
        "draws_summary": summary_json(&q)?,
        "interval": intervals_json(&q)?,
    });
    if let Some(ctx) = &ctx {
        v["conditional"] = conditional_json(ctx, &run, seed, Some(a.p), &[])?;
    }
    Ok(vec![write_json(&a.io.output, "quantile.json", &v)?])
}

pub fn predict(a: &PredictArgs) -> CliResult<Vec<PathBuf>> {
    let seed = resolve_seed(a.io.seed);
    let p_star = parse_list(&a.p_star, "--p-star")?;
    let ds = ingest_csv(&a.io.input)?;
    let run = run_posterior(&a.io, &a.posterior, &ds, seed)?;
    let pred = predictive_from_draws(&run.draws.draws, run.data.threshold)?;
    let mut rc = base_config("predict", &a.io, seed);
    rc.p_star = Some(p_star.clone());
    rc.prior = Some(run.prior);
    rc.mcmc = Some(run.mcmc);
    let ctx = match &a.ball.x_grid {
        Some(_) => Some(scedasis_context(&a.ball, &run.data, &ds)?),
        None => None,
    };
    rc.scedasis = ctx.as_ref().map(|c| c.block.clone());
    let quantiles = p_star
        .iter()
        .map(|&ps| Ok(json!({ "p_star": ps, "value": predictive_quantile(&pred, ps)? })))
        .collect::<CliResult<Vec<_>>>()?;
    let bounds = pred.level_quantiles(&[0.025, 0.975])?;
    let mut v = posterior_json(&rc, &run)?;
    v["predictive"] = json!({
        "threshold": run.data.threshold,
        "quantiles": quantiles,
        "interval": { "level": LEVEL, "bounds": bounds },
    });
    if let Some(ctx) = &ctx {
        v["conditional"] = conditional_json(ctx, &run, seed, None, &p_star)?;
    }
    Ok(vec![write_json(&a.io.output, "predictive.json", &v)?])
}

pub fn scedasis(a: &ScedasisArgs) -> CliResult<Vec<PathBuf>> {
    let seed = resolve_seed(a.io.seed);
    let ds = ingest_csv(&a.io.input)?;
    let data = extract_excesses(&ds.y, a.io.k, ds.x.as_deref())?;
    let ctx = scedasis_context(&a.ball, &data, &ds)?;
    let mut rc = base_config("scedasis", &a.io, seed);
    rc.scedasis = Some(ctx.block.clone());

    let d = ctx.dp.d;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    for h in ["mean", "sd", "lower", "upper", "beta_a", "beta_b", "p_hat", "radius"] {
        header.push(h.into());
    }
    let mut rows = Vec::new();
    for (i, x) in ctx.block.x_grid.iter().enumerate() {
        let sp = scedasis_posterior(&ctx.dp, x, ctx.block.method, &ctx.x_all)?;
        let cs = sp.sample(C_DRAWS, seed.wrapping_add(i as u64 + 1));
        let ci = credible_interval(&cs, LEVEL, IntervalKind::Asymmetric)?;
        let mut row = x.clone();
        row.extend([sp.mean(), sp.sd(), ci.lower, ci.upper, sp.beta_a, sp.beta_b, sp.p_hat, sp.ball_radius]);
        rows.push(row);
    }
    Ok(vec![write_csv(&a.io.output, "scedasis.csv", &rc, &header, &rows)?])
}

pub fn test_covariate(a: &TestArgs) -> CliResult<Vec<PathBuf>> {
    let seed = resolve_seed(a.io.seed);
    let ds = ingest_csv(&a.io.input)?;
    let x_all = ds.covariates()?;
    let data = extract_excesses(&ds.y, a.io.k, Some(x_all))?;
    let report = ks_covariate_test(&data, x_all, a.tau_mass, BaseMeasure::Uniform, a.m, a.alpha, seed)?;
    let mut rc = base_config("test-covariate", &a.io, seed);
    rc.test = Some(TestBlock {
        tau_total: a.tau_mass,
        m: a.m,
        alpha: a.alpha,
    });
    let v = json!({ "provenance": rc.provenance(), "test": report });
    Ok(vec![write_json(&a.io.output, "test.json", &v)?])
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| CliError::io(&a.config, e))?;
    let table: toml::Value = toml::from_str(&text).map_err(|e| CliError::config(format!("invalid TOML: {e}")))?;
    let has_seed = table.get("seed").is_some();
    if a.seed.is_none() && !has_seed {
        return Err(CliError::new(
            "missing_seed",
            "simulate needs a seed: pass --seed or set `seed` in the config",
            json!({ "config": a.config.display().to_string() }),
        ));
    }
    let mut spec: ExperimentSpec = table
        .try_into()
        .map_err(|e| CliError::config(format!("invalid experiment config: {e}")))?;
    if let Some(s) = a.seed {
        spec.set_seed(s);
    }
    let mut rc = RunConfig::new("simulate", a.output.clone(), spec.seed());
    rc.input = Some(a.config.clone());
    rc.experiment = Some(serde_json::to_value(&spec).expect("spec serializes"));
    let report = spec.run()?;
    let csv_text = format!(
        "# provenance {}\n{}",
        serde_json::to_string(&rc.provenance()).unwrap(),
        report.to_csv()
    );
    let v = json!({ "provenance": rc.provenance(), "report": report });
    Ok(vec![
        write_text(&a.output, "report.csv", &csv_text)?,
        write_json(&a.output, "report.json", &v)?,
    ])
}
