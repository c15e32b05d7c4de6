//! The experiment commands. Each fans seeds out to a worker pool, then
//! assembles the report and writes files on the calling thread.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context as _;
use cdfbandit::baselines::{empirical_cdf_full_feedback, naive_grid_estimator};
use cdfbandit::estimate::{
    grid_sweep, learn_cdf_density, learn_cdf_grid, sup_error, LearnMode, SweepRow,
};
use cdfbandit::markets::{
    benchmark_resolution, brute_force_optimum, etc_regret, learn_pricing, RegretTrace,
};
use cdfbandit::{BitFeedbackOracle, Error, ExactOracle, GridSpec, MarketSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    CompareConfig, LearnCdfConfig, LearnCdfDensityConfig, MarketPricingConfig, MarketRegretConfig,
};
use crate::report::{fmt_f64, median, OutputDir, Report, Status, VERSION};

/// Where a command reads relative paths from and writes its outputs to.
pub struct Context {
    out: PathBuf,
    config_path: Option<PathBuf>,
    pool: rayon::ThreadPool,
}

impl Context {
    /// Worker count comes from `CDFBANDIT_THREADS`, defaulting to the number of CPUs.
    pub fn new(out: &Path, config_path: Option<&Path>) -> anyhow::Result<Self> {
        let threads = match std::env::var("CDFBANDIT_THREADS") {
            Ok(v) => v
                .parse::<usize>()
                .map_err(|e| crate::config::ConfigError(format!("CDFBANDIT_THREADS={v:?}: {e}")))?,
            Err(_) => 0,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?;
        Ok(Self {
            out: out.to_path_buf(),
            config_path: config_path.map(Path::to_path_buf),
            pool,
        })
    }

    pub fn config_path(&self) -> Option<&Path> {
        self.config_path.as_deref()
    }

    fn map_seeds<T: Send, I: Sync>(
        &self,
        items: &[I],
        f: impl Fn(&I) -> anyhow::Result<T> + Sync,
    ) -> anyhow::Result<Vec<T>> {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    BudgetExceeded,
}

fn capped(oracle: BitFeedbackOracle, cap: Option<u64>) -> BitFeedbackOracle {
    match cap {
        Some(c) => oracle.with_query_cap(c),
        None => oracle,
    }
}

fn sweep_csv(rows: &[SweepRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let n = rows.first().map_or(0, |r| r.point.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["estimate", "exact", "abs_error"].map(String::from));
    let body = rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.point.iter().map(|&v| fmt_f64(v)).collect();
            row.extend([r.estimate, r.exact, r.abs_error].map(fmt_f64));
            row
        })
        .collect();
    (header, body)
}

fn success_status(passed: bool, budget_exceeded: usize) -> Status {
    if budget_exceeded > 0 {
        Status::BudgetExceeded
    } else if passed {
        Status::Ok
    } else {
        Status::ThresholdFailed
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnRun {
    pub seed: u64,
    pub outcome: Outcome,
    pub queries: u64,
    pub table_keys: usize,
    pub samples_per_estimate: u64,
    pub rectangles: usize,
    pub resolution: u32,
    pub eps_prime: f64,
    pub sup_error: Option<f64>,
    /// Queries equal filled table keys times samples per estimate.
    pub queries_match_table: bool,
    pub success: bool,
    pub sweep_file: Option<String>,
    pub family_file: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnAggregate {
    pub median_sup_error: Option<f64>,
    pub max_sup_error: Option<f64>,
    pub median_queries: Option<f64>,
    pub threshold: Option<f64>,
    pub success_rate: f64,
    pub budget_exceeded: usize,
    pub passed: bool,
}

pub type LearnCdfReport = Report<LearnCdfConfig, LearnRun, LearnAggregate>;
pub type LearnCdfDensityReport = Report<LearnCdfDensityConfig, LearnRun, LearnAggregate>;

struct SeedOutput<R> {
    label: String,
    runs: Vec<R>,
    files: Vec<(String, Vec<u8>)>,
    seconds: f64,
}

fn learn_aggregate(runs: &[LearnRun], threshold: Option<f64>, min_rate: f64) -> LearnAggregate {
    let errors: Vec<f64> = runs.iter().filter_map(|r| r.sup_error).collect();
    let queries: Vec<f64> = runs
        .iter()
        .filter(|r| r.outcome == Outcome::Ok)
        .map(|r| r.queries as f64)
        .collect();
    let successes = runs.iter().filter(|r| r.success).count();
    let success_rate = successes as f64 / runs.len() as f64;
    LearnAggregate {
        median_sup_error: median(&errors),
        max_sup_error: errors.iter().copied().reduce(f64::max),
        median_queries: median(&queries),
        threshold,
        success_rate,
        budget_exceeded: runs
            .iter()
            .filter(|r| r.outcome == Outcome::BudgetExceeded)
            .count(),
        passed: success_rate >= min_rate,
    }
}

fn finish<C: Serialize, R: Serialize, A: Serialize>(
    ctx: &Context,
    command: &str,
    config: C,
    seeds: Vec<u64>,
    outputs: Vec<SeedOutput<R>>,
    aggregate: impl FnOnce(&[R]) -> (A, Status),
    extra_files: Vec<(String, Vec<u8>)>,
) -> anyhow::Result<Report<C, R, A>> {
    let mut out = OutputDir::create(&ctx.out)?;
    let mut timing = BTreeMap::new();
    let mut runs = Vec::with_capacity(outputs.len());
    for output in outputs {
        for (name, bytes) in &output.files {
            out.write(name, bytes)?;
        }
        timing.insert(output.label, output.seconds);
        runs.extend(output.runs);
    }
    for (name, bytes) in &extra_files {
        out.write(name, bytes)?;
    }
    let (aggregate, status) = aggregate(&runs);
    let mut report = Report {
        command: command.into(),
        version: VERSION.into(),
        config,
        seeds,
        runs,
        aggregate,
        status,
        files: Vec::new(),
    };
    out.finish(&mut report, &timing)?;
    Ok(report)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().context("flushing CSV")
}

/// Learns the CDF on a fixed grid for every seed and sweeps it against the exact CDF.
pub fn learn_cdf(ctx: &Context, cfg: LearnCdfConfig) -> anyhow::Result<LearnCdfReport> {
    let spec = cfg.resolve(ctx.config_path())?;
    let mode = cfg.learn_mode()?;
    let grid = GridSpec::new(spec.n, cfg.resolution)?;
    let eps_prime = cdfbandit::estimate::rhi_config(cfg.eps, cfg.delta, grid, mode)?.eps_prime;
    let exact = ExactOracle::new(spec.clone());

    let outputs = ctx.map_seeds(&cfg.seeds, |&seed| {
        let start = Instant::now();
        let oracle = capped(BitFeedbackOracle::new(spec.clone(), seed), cfg.query_cap);
        let mut run = LearnRun {
            seed,
            outcome: Outcome::Ok,
            queries: 0,
            table_keys: 0,
            samples_per_estimate: cdfbandit::partition::samples_per_estimate(eps_prime),
            rectangles: 0,
            resolution: grid.resolution(),
            eps_prime,
            sup_error: None,
            queries_match_table: false,
            success: false,
            sweep_file: None,
            family_file: None,
        };
        let mut files = Vec::new();
        match learn_cdf_grid(oracle, cfg.eps, cfg.delta, grid, mode) {
            Ok(est) => {
                let family = est.family();
                let rows = grid_sweep(&grid, &exact, |p| est.evaluate(p))?;
                let sup = sup_error(&rows);
                run.queries = est.queries();
                run.table_keys = family.estimates().len();
                run.rectangles = family.total_rectangles();
                run.queries_match_table =
                    run.queries == run.table_keys as u64 * run.samples_per_estimate;
                run.sup_error = Some(sup);
                run.success = cfg.threshold.is_none_or(|t| sup <= t);
                let (header, body) = sweep_csv(&rows);
                let sweep = format!("sweep_seed{seed}.csv");
                files.push((sweep.clone(), csv_bytes(&header, &body)?));
                run.sweep_file = Some(sweep);
                if cfg.dump_families {
                    let name = format!("family_seed{seed}.json");
                    files.push((name.clone(), family.to_json().into_bytes()));
                    run.family_file = Some(name);
                }
            }
            Err(Error::BudgetExceeded { cap }) => {
                run.outcome = Outcome::BudgetExceeded;
                run.queries = cap;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(SeedOutput {
            label: format!("seed {seed}"),
            runs: vec![run],
            files,
            seconds: start.elapsed().as_secs_f64(),
        })
    })?;

    let (threshold, min_rate) = (cfg.threshold, cfg.min_success_rate);
    let seeds = cfg.seeds.clone();
    finish(
        ctx,
        "learn-cdf",
        cfg,
        seeds,
        outputs,
        |runs| {
            let agg = learn_aggregate(runs, threshold, min_rate);
            let status = success_status(agg.passed, agg.budget_exceeded);
            (agg, status)
        },
        Vec::new(),
    )
}

/// Learns the CDF on all of `[0,1]^n` for a bounded density and sweeps a finer grid.
pub fn learn_cdf_density_cmd(
    ctx: &Context,
    cfg: LearnCdfDensityConfig,
) -> anyhow::Result<LearnCdfDensityReport> {
    let spec = cfg.resolve(ctx.config_path())?;
    let mode = cfg.learn_mode()?;
    let exact = ExactOracle::new(spec.clone());
    let sigma = cfg
        .sigma
        .or(spec.density_bound)
        .ok_or_else(|| crate::config::ConfigError("no density bound given or declared".into()))?;
    let grid = cdfbandit::estimate::density_grid(spec.n, cfg.eps, sigma)?;
    let eval_grid = GridSpec::new(spec.n, cfg.eval_resolution.unwrap_or(2 * grid.resolution()))?;
    let eps_prime =
        cdfbandit::estimate::rhi_config(cfg.eps / 2.0, cfg.delta, grid, mode)?.eps_prime;

    let outputs = ctx.map_seeds(&cfg.seeds, |&seed| {
        let start = Instant::now();
        let oracle = capped(BitFeedbackOracle::new(spec.clone(), seed), cfg.query_cap);
        let mut run = LearnRun {
            seed,
            outcome: Outcome::Ok,
            queries: 0,
            table_keys: 0,
            samples_per_estimate: cdfbandit::partition::samples_per_estimate(eps_prime),
            rectangles: 0,
            resolution: grid.resolution(),
            eps_prime,
            sup_error: None,
            queries_match_table: false,
            success: false,
            sweep_file: None,
            family_file: None,
        };
        let mut files = Vec::new();
        match learn_cdf_density(oracle, cfg.eps, cfg.delta, Some(sigma), mode) {
            Ok(est) => {
                let family = est.inner().family();
                let rows = grid_sweep(&eval_grid, &exact, |p| est.evaluate(&eval_grid.to_real(p)))?;
                let sup = sup_error(&rows);
                run.queries = est.queries();
                run.table_keys = family.estimates().len();
                run.rectangles = family.total_rectangles();
                run.queries_match_table =
                    run.queries == run.table_keys as u64 * run.samples_per_estimate;
                run.sup_error = Some(sup);
                run.success = cfg.threshold.is_none_or(|t| sup <= t);
                let (header, body) = sweep_csv(&rows);
                let sweep = format!("sweep_seed{seed}.csv");
                files.push((sweep.clone(), csv_bytes(&header, &body)?));
                run.sweep_file = Some(sweep);
            }
            Err(Error::BudgetExceeded { cap }) => {
                run.outcome = Outcome::BudgetExceeded;
                run.queries = cap;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(SeedOutput {
            label: format!("seed {seed}"),
            runs: vec![run],
            files,
            seconds: start.elapsed().as_secs_f64(),
        })
    })?;

    let (threshold, min_rate) = (cfg.threshold, cfg.min_success_rate);
    let seeds = cfg.seeds.clone();
    finish(
        ctx,
        "learn-cdf-density",
        cfg,
        seeds,
        outputs,
        |runs| {
            let agg = learn_aggregate(runs, threshold, min_rate);
            let status = success_status(agg.passed, agg.budget_exceeded);
            (agg, status)
        },
        Vec::new(),
    )
}

pub const METHOD_RHI: &str = "rhi";
pub const METHOD_NAIVE: &str = "naive_grid";
pub const METHOD_DKW: &str = "dkw_full_feedback";

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub resolution: u32,
    pub seed: u64,
    pub outcome: Outcome,
    /// One-bit queries, or full samples for the empirical CDF.
    pub queries: u64,
    pub sup_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub method: String,
    pub resolution: u32,
    pub median_queries: Option<f64>,
    pub median_sup_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareAggregate {
    pub dkw_samples: usize,
    pub naive_eps: f64,
    pub summary: Vec<CompareSummary>,
    /// Ratio of median queries between consecutive resolutions, per method.
    pub growth: BTreeMap<String, Vec<f64>>,
}

pub type CompareReport = Report<CompareConfig, CompareRow, CompareAggregate>;

/// Runs the representative-family learner and both baselines on the same distribution.
pub fn compare(ctx: &Context, cfg: CompareConfig) -> anyhow::Result<CompareReport> {
    let spec = cfg.resolve(ctx.config_path())?;
    let naive_eps = cfg.naive_eps.unwrap_or(cfg.eps_prime);
    let dkw_samples = cfg.dkw_samples.unwrap_or(
        ((2.0 / cfg.delta).ln().ceil() + (1.0 / (naive_eps * naive_eps)).ceil()) as usize,
    );
    let exact = ExactOracle::new(spec.clone());
    let mode = LearnMode::Practical {
        eps_prime: cfg.eps_prime,
    };
    let first_seed = cfg.seeds[0];
    let jobs: Vec<(u32, u64)> = cfg
        .resolutions
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let outputs = ctx.map_seeds(&jobs, |&(k, seed)| {
        let start = Instant::now();
        let grid = GridSpec::new(spec.n, k)?;
        let mut rows = Vec::new();
        let mut columns: Vec<Option<Vec<SweepRow>>> = Vec::new();

        let oracle = capped(BitFeedbackOracle::new(spec.clone(), seed), cfg.query_cap);
        match learn_cdf_grid(oracle, cfg.eps_prime, cfg.delta, grid, mode) {
            Ok(est) => {
                let sweep = grid_sweep(&grid, &exact, |p| est.evaluate(p))?;
                rows.push(compare_row(
                    METHOD_RHI,
                    k,
                    seed,
                    Outcome::Ok,
                    est.queries(),
                    Some(sup_error(&sweep)),
                ));
                columns.push(Some(sweep));
            }
            Err(Error::BudgetExceeded { cap }) => {
                rows.push(compare_row(
                    METHOD_RHI,
                    k,
                    seed,
                    Outcome::BudgetExceeded,
                    cap,
                    None,
                ));
                columns.push(None);
            }
            Err(e) => return Err(e.into()),
        }

        let mut oracle = capped(BitFeedbackOracle::new(spec.clone(), seed), cfg.query_cap);
        match naive_grid_estimator(&mut oracle, &grid, naive_eps, cfg.delta) {
            Ok(est) => {
                let sweep = grid_sweep(&grid, &exact, |p| est.evaluate(p))?;
                rows.push(compare_row(
                    METHOD_NAIVE,
                    k,
                    seed,
                    Outcome::Ok,
                    est.total_queries(),
                    Some(sup_error(&sweep)),
                ));
                columns.push(Some(sweep));
            }
            Err(Error::BudgetExceeded { cap }) => {
                rows.push(compare_row(
                    METHOD_NAIVE,
                    k,
                    seed,
                    Outcome::BudgetExceeded,
                    cap,
                    None,
                ));
                columns.push(None);
            }
            Err(e) => return Err(e.into()),
        }

        let emp = empirical_cdf_full_feedback(&spec, dkw_samples, seed)?;
        let sweep = grid_sweep(&grid, &exact, |p| Ok(emp.evaluate(&grid.to_real(p))))?;
        rows.push(compare_row(
            METHOD_DKW,
            k,
            seed,
            Outcome::Ok,
            dkw_samples as u64,
            Some(sup_error(&sweep)),
        ));
        columns.push(Some(sweep));

        let mut files = Vec::new();
        if seed == first_seed {
            files.push((
                format!("sweep_K{k}.csv"),
                comparison_sweep(&grid, &exact, &columns)?,
            ));
        }
        Ok(SeedOutput {
            label: format!("K {k} seed {seed}"),
            runs: rows,
            files,
            seconds: start.elapsed().as_secs_f64(),
        })
    })?;

    let header: Vec<String> = ["method", "resolution", "seed", "queries", "sup_error"]
        .map(String::from)
        .into();
    let body: Vec<Vec<String>> = outputs
        .iter()
        .flat_map(|o| &o.runs)
        .map(|r| {
            vec![
                r.method.clone(),
                r.resolution.to_string(),
                r.seed.to_string(),
                r.queries.to_string(),
                r.sup_error.map(fmt_f64).unwrap_or_default(),
            ]
        })
        .collect();
    let table = vec![("compare.csv".to_string(), csv_bytes(&header, &body)?)];

    let resolutions = cfg.resolutions.clone();
    let seeds = cfg.seeds.clone();
    finish(
        ctx,
        "compare",
        cfg,
        seeds,
        outputs,
        |rows: &[CompareRow]| {
            let mut summary = Vec::new();
            let mut growth = BTreeMap::new();
            for method in [METHOD_RHI, METHOD_NAIVE, METHOD_DKW] {
                let mut medians = Vec::new();
                for &k in &resolutions {
                    let pick = |f: fn(&CompareRow) -> Option<f64>| {
                        let v: Vec<f64> = rows
                            .iter()
                            .filter(|r| {
                                r.method == method && r.resolution == k && r.outcome == Outcome::Ok
                            })
                            .filter_map(f)
                            .collect();
                        median(&v)
                    };
                    let q = pick(|r| Some(r.queries as f64));
                    medians.push(q);
                    summary.push(CompareSummary {
                        method: method.into(),
                        resolution: k,
                        median_queries: q,
                        median_sup_error: pick(|r| r.sup_error),
                    });
                }
                let ratios = medians
                    .windows(2)
                    .filter_map(|w| Some(w[1]? / w[0]?))
                    .collect();
                growth.insert(method.to_string(), ratios);
            }
            let exceeded = rows
                .iter()
                .filter(|r| r.outcome == Outcome::BudgetExceeded)
                .count();
            (
                CompareAggregate {
                    dkw_samples,
                    naive_eps,
                    summary,
                    growth,
                },
                success_status(true, exceeded),
            )
        },
        table,
    )
}

fn compare_row(
    method: &str,
    k: u32,
    seed: u64,
    outcome: Outcome,
    queries: u64,
    sup: Option<f64>,
) -> CompareRow {
    CompareRow {
        method: method.into(),
        resolution: k,
        seed,
        outcome,
        queries,
        sup_error: sup,
    }
}

/// Grid point, exact CDF, then one estimate column per method (empty if the method failed).
fn comparison_sweep(
    grid: &GridSpec,
    exact: &ExactOracle,
    columns: &[Option<Vec<SweepRow>>],
) -> anyhow::Result<Vec<u8>> {
    let mut header: Vec<String> = (1..=grid.dim()).map(|i| format!("x{i}")).collect();
    header.push("exact".into());
    header.extend([METHOD_RHI, METHOD_NAIVE, METHOD_DKW].map(String::from));
    let body: Vec<Vec<String>> = grid
        .points()
        .enumerate()
        .map(|(i, p)| {
            let x = grid.to_real(&p);
            let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
            row.push(fmt_f64(exact.cdf(&x)));
            for col in columns {
                row.push(
                    col.as_ref()
                        .map(|c| fmt_f64(c[i].estimate))
                        .unwrap_or_default(),
                );
            }
            row
        })
        .collect();
    csv_bytes(&header, &body)
}

#[derive(Clone, Debug, Serialize)]
pub struct PricingRun {
    pub seed: u64,
    pub outcome: Outcome,
    pub prices: Option<Vec<f64>>,
    pub est_value: Option<f64>,
    pub exact_value: Option<f64>,
    pub brute_force_gap: Option<f64>,
    pub queries: u64,
    pub success: bool,
    pub result_file: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PricingAggregate {
    pub resolution: u32,
    pub benchmark_resolution: u32,
    pub optimum_prices: Vec<f64>,
    pub optimum_value: f64,
    pub threshold: f64,
    pub median_gap: Option<f64>,
    pub median_queries: Option<f64>,
    pub success_rate: f64,
    pub passed: bool,
}

pub type PricingReport = Report<MarketPricingConfig, PricingRun, PricingAggregate>;

/// Learns prices per seed and scores them against the exact brute-force optimum.
pub fn market_pricing(ctx: &Context, cfg: MarketPricingConfig) -> anyhow::Result<PricingReport> {
    let market = cfg.resolve(ctx.config_path())?;
    let mode = cfg.learn_mode()?;
    let grid = cdfbandit::markets::pricing_grid(&market, cfg.eps)?;
    let (optimum_prices, optimum_value) = brute_force_optimum(&market, cfg.benchmark_resolution)?;
    let threshold = cfg.threshold.unwrap_or(cfg.eps);

    let outputs = ctx.map_seeds(&cfg.seeds, |&seed| {
        let start = Instant::now();
        let oracle = capped(market.trade_oracle(seed), cfg.query_cap);
        let mut run = PricingRun {
            seed,
            outcome: Outcome::Ok,
            prices: None,
            est_value: None,
            exact_value: None,
            brute_force_gap: None,
            queries: 0,
            success: false,
            result_file: None,
        };
        let mut files = Vec::new();
        match learn_pricing(&market, oracle, cfg.eps, cfg.delta, mode) {
            Ok(mut result) => {
                let exact_value = result.exact_value(&market)?;
                let gap = optimum_value - exact_value;
                result.brute_force_gap = Some(gap);
                run.prices = Some(result.prices.clone());
                run.est_value = Some(result.est_value);
                run.exact_value = Some(exact_value);
                run.brute_force_gap = Some(gap);
                run.queries = result.queries_used;
                run.success = gap <= threshold;
                let name = format!("pricing_seed{seed}.json");
                files.push((
                    name.clone(),
                    serde_json::to_string_pretty(&result)?.into_bytes(),
                ));
                run.result_file = Some(name);
            }
            Err(Error::BudgetExceeded { cap }) => {
                run.outcome = Outcome::BudgetExceeded;
                run.queries = cap;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(SeedOutput {
            label: format!("seed {seed}"),
            runs: vec![run],
            files,
            seconds: start.elapsed().as_secs_f64(),
        })
    })?;

    let min_rate = cfg.min_success_rate;
    let benchmark_resolution = cfg.benchmark_resolution;
    let seeds = cfg.seeds.clone();
    finish(
        ctx,
        "market-pricing",
        cfg,
        seeds,
        outputs,
        |runs: &[PricingRun]| {
            let gaps: Vec<f64> = runs.iter().filter_map(|r| r.brute_force_gap).collect();
            let queries: Vec<f64> = runs
                .iter()
                .filter(|r| r.outcome == Outcome::Ok)
                .map(|r| r.queries as f64)
                .collect();
            let success_rate = runs.iter().filter(|r| r.success).count() as f64 / runs.len() as f64;
            let passed = success_rate >= min_rate;
            let exceeded = runs
                .iter()
                .filter(|r| r.outcome == Outcome::BudgetExceeded)
                .count();
            let agg = PricingAggregate {
                resolution: grid.resolution(),
                benchmark_resolution,
                optimum_prices,
                optimum_value,
                threshold,
                median_gap: median(&gaps),
                median_queries: median(&queries),
                success_rate,
                passed,
            };
            (agg, success_status(passed, exceeded))
        },
        Vec::new(),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct RegretRun {
    pub horizon: u64,
    pub seed: u64,
    pub eps: f64,
    pub eps_prime: f64,
    pub resolution: u32,
    pub exploration_rounds: u64,
    pub saturated: bool,
    pub p_star: Option<Vec<f64>>,
    pub regret: f64,
    pub regret_per_round: f64,
    pub trace_rows: usize,
    pub trace_file: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizonSummary {
    pub horizon: u64,
    pub median_regret_per_round: f64,
    pub saturated_runs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegretAggregate {
    pub benchmark_resolution: u32,
    pub benchmark_prices: Vec<f64>,
    pub benchmark_value: f64,
    pub horizons: Vec<HorizonSummary>,
    /// Median regret per round strictly decreases with the horizon.
    pub decreasing: bool,
}

pub type RegretReport = Report<MarketRegretConfig, RegretRun, RegretAggregate>;

/// Runs explore-then-commit for every horizon and seed.
pub fn market_regret(ctx: &Context, cfg: MarketRegretConfig) -> anyhow::Result<RegretReport> {
    let market = cfg.resolve(ctx.config_path())?;
    let mode = cfg.etc_mode();
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let jobs: Vec<(u64, u64)> = horizons
        .iter()
        .flat_map(|&t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let write_traces = cfg.write_traces;
    let benchmark_resolution = benchmark_resolution(&market);
    let (benchmark_prices, benchmark_value) = brute_force_optimum(&market, benchmark_resolution)?;

    let outputs = ctx.map_seeds(&jobs, |&(t, seed)| {
        let start = Instant::now();
        let trace = etc_regret(&market, t, mode, seed)?;
        let mut files = Vec::new();
        let trace_file = if write_traces {
            let name = format!("trace_T{t}_seed{seed}.csv");
            files.push((name.clone(), trace_csv(&trace, &market)?));
            Some(name)
        } else {
            None
        };
        let run = RegretRun {
            horizon: t,
            seed,
            eps: trace.eps,
            eps_prime: trace.eps_prime,
            resolution: trace.resolution,
            exploration_rounds: trace.exploration_rounds,
            saturated: trace.saturated,
            p_star: trace.p_star.clone(),
            regret: trace.regret(),
            regret_per_round: trace.regret_per_round(),
            trace_rows: trace.rows.len(),
            trace_file,
        };
        Ok(SeedOutput {
            label: format!("T {t} seed {seed}"),
            runs: vec![run],
            files,
            seconds: start.elapsed().as_secs_f64(),
        })
    })?;

    let seeds = cfg.seeds.clone();
    finish(
        ctx,
        "market-regret",
        cfg,
        seeds,
        outputs,
        |runs: &[RegretRun]| {
            let summaries: Vec<HorizonSummary> = horizons
                .iter()
                .map(|&t| {
                    let at_t: Vec<&RegretRun> = runs.iter().filter(|r| r.horizon == t).collect();
                    let per_round: Vec<f64> = at_t.iter().map(|r| r.regret_per_round).collect();
                    HorizonSummary {
                        horizon: t,
                        median_regret_per_round: median(&per_round)
                            .expect("every horizon has runs"),
                        saturated_runs: at_t.iter().filter(|r| r.saturated).count(),
                    }
                })
                .collect();
            let decreasing = summaries
                .windows(2)
                .all(|w| w[1].median_regret_per_round < w[0].median_regret_per_round);
            let status = if decreasing {
                Status::Ok
            } else {
                Status::ThresholdFailed
            };
            let agg = RegretAggregate {
                benchmark_resolution,
                benchmark_prices,
                benchmark_value,
                horizons: summaries,
                decreasing,
            };
            (agg, status)
        },
        Vec::new(),
    )
}

/// `round, p_1..p_n, exact_utility, trade, cum_regret`.
pub fn trace_csv(trace: &RegretTrace, market: &MarketSpec) -> anyhow::Result<Vec<u8>> {
    let mut header = vec!["round".to_string()];
    header.extend((1..=market.n()).map(|i| format!("p{i}")));
    header.extend(["exact_utility", "trade", "cum_regret"].map(String::from));
    let body: Vec<Vec<String>> = trace
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.round.to_string()];
            row.extend(r.prices.iter().map(|&p| fmt_f64(p)));
            row.push(fmt_f64(r.exact_utility));
            row.push(u8::from(r.trade).to_string());
            row.push(fmt_f64(r.cum_regret));
            row
        })
        .collect();
    csv_bytes(&header, &body)
}
