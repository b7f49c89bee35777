//! Configuration-driven runs: utility sweeps, standard and distributed
//! simulations, paired comparisons and automation evaluations. Each run
//! writes CSV files, optional SVG charts and a JSON manifest.

pub mod compare;
pub mod config;
pub mod defaults;
pub mod output;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use crate::automation::{AutomationEngine, DealOffer, Decision, MatchReason};
use crate::distributed::sim::{run_distributed_trials, simulate_trial, DistYearPoint, DistributedSimConfig};
use crate::distributed::{CompanyAttrs, DistributedFirm};
use crate::economics::{fee_incentive_threshold, utility_sweep, FundParams, Multiple, UtilityOptions};
use crate::error::{Error, Result};
use crate::kpi::IrrOutcome;
use crate::market::SeedSpec;
use crate::money::Money;
use crate::standard::{quantile, run_trials, FundRun, YearPoint};

pub use compare::{compare, CompareRow, ModelSummary, TrialSet};
pub use config::{RunConfig, Scenario, ScriptEvent};
pub use output::{fmt_f64, RunManifest};
use output::{line_chart, sha256_hex, OutputSink, Series, Table};

/// Process-level knobs that must not change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

const MANIFEST: &str = "manifest.json";
/// Stream id for generated deal flow, kept apart from company streams.
const DEAL_FLOW_STREAM: u64 = 0x00DE_A1F1;

/// Hash of the effective configuration, ignoring where outputs go.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output_dir = Default::default();
    Ok(sha256_hex(c.to_toml()?.as_bytes()))
}

/// Runs the configured scenario and writes its outputs and manifest.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate().map_err(|(path, msg)| Error::Config {
        line: None,
        message: format!("{path}: {msg}"),
    })?;
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;

    let mut sink = OutputSink::create(&cfg.output_dir)?;
    log::info!(
        "scenario {} with {} trials, seed {}",
        cfg.scenario.as_str(),
        cfg.trials,
        cfg.master_seed
    );
    pool.install(|| match cfg.scenario {
        Scenario::UtilitySweep => run_sweep(cfg, &mut sink),
        Scenario::StandardSim => run_standard(cfg, &mut sink),
        Scenario::DistributedSim => run_distributed(cfg, &mut sink),
        Scenario::Compare => run_compare(cfg, &mut sink),
        Scenario::MatchEval => run_match_eval(cfg, &mut sink),
    })?;

    let dir = sink.dir().to_path_buf();
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: cfg.scenario.as_str().to_string(),
        config_sha256: config_hash(cfg)?,
        master_seed: cfg.master_seed,
        trials: cfg.trials,
        started_at: started_at.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        outputs: sink.into_files(),
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::State(format!("manifest: {e}")))?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn money(m: Money) -> String {
    m.0.to_string()
}

fn write_svg(cfg: &RunConfig, sink: &mut OutputSink, name: &str, svg: impl FnOnce() -> String) -> Result<()> {
    if cfg.output.svg {
        sink.write(name, svg().as_bytes())?;
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let sw = &cfg.sweep;
    let f = &cfg.fund;
    let params = if sw.normalized {
        FundParams::new(1.0, f.lifespan_years(), f.mgmt_fee(), f.gp_commit(), f.carry())?
    } else {
        *f
    };
    let grid: Vec<Multiple> = sw.grid()?.into_iter().map(Multiple::new).collect::<Result<_>>()?;
    let rows = utility_sweep(
        &params,
        &sw.variants,
        &grid,
        sw.model,
        UtilityOptions {
            clamp_carry: sw.clamp_carry,
        },
    )?;

    let mut t = Table::new(&["variant_id", "m", "total", "fee_utility", "carry_utility", "commit_pnl", "model_tag"]);
    for r in &rows {
        t.push(vec![
            r.variant_id.clone(),
            fmt_f64(r.m),
            fmt_f64(r.total),
            fmt_f64(r.fee_utility),
            fmt_f64(r.carry_utility),
            fmt_f64(r.commit_pnl),
            r.model_tag.as_str().into(),
        ]);
    }
    sink.table("utility_sweep.csv", &t)?;

    let mut th = Table::new(&["variant_id", "mgmt_fee", "gp_commit", "carry", "fee_incentive_threshold"]);
    for v in &sw.variants {
        let p = params.with_overrides(&v.overrides)?;
        th.push(vec![
            v.id.clone(),
            fmt_f64(p.mgmt_fee()),
            fmt_f64(p.gp_commit()),
            fmt_f64(p.carry()),
            fee_incentive_threshold(&p).map(fmt_f64).unwrap_or_default(),
        ]);
    }
    sink.table("utility_thresholds.csv", &th)?;

    write_svg(cfg, sink, "utility_sweep.svg", || {
        let series: Vec<Series> = sw
            .variants
            .iter()
            .map(|v| Series {
                name: &v.id,
                points: rows
                    .iter()
                    .filter(|r| r.variant_id == v.id)
                    .map(|r| (r.m, r.total))
                    .collect(),
            })
            .collect();
        line_chart("GP utility by fund multiple", "gross multiple m", "GP utility", &series)
    })
}

/// Year-indexed multiples shared by both simulators' summaries.
struct Point {
    year: u32,
    dpi: f64,
    tvpi_fair: f64,
    tvpi_paper: f64,
}

impl From<&YearPoint> for Point {
    fn from(p: &YearPoint) -> Self {
        Point {
            year: p.year,
            dpi: p.dpi,
            tvpi_fair: p.tvpi_fair,
            tvpi_paper: p.tvpi_paper,
        }
    }
}

impl From<&DistYearPoint> for Point {
    fn from(p: &DistYearPoint) -> Self {
        Point {
            year: p.year,
            dpi: p.dpi,
            tvpi_fair: p.tvpi_fair,
            tvpi_paper: p.tvpi_paper,
        }
    }
}

const STATS: [(&str, Option<f64>); 4] = [("mean", None), ("p25", Some(0.25)), ("p50", Some(0.5)), ("p75", Some(0.75))];

fn stat(values: &mut [f64], q: Option<f64>) -> f64 {
    match q {
        Some(q) => quantile(values, q),
        None => values.iter().sum::<f64>() / values.len().max(1) as f64,
    }
}

/// Mean and quartiles of each multiple per year. Trials that ended earlier
/// carry their last point forward.
fn summary_table(timelines: &[Vec<Point>]) -> (Table, BTreeMap<(&'static str, u32), [f64; 3]>) {
    let last_year = timelines
        .iter()
        .filter_map(|t| t.last().map(|p| p.year))
        .max()
        .unwrap_or(0);
    let mut table = Table::new(&["statistic", "year", "dpi", "tvpi_fair", "tvpi_paper"]);
    let mut values = BTreeMap::new();
    for (name, q) in STATS {
        for year in 0..=last_year {
            let mut cols: [Vec<f64>; 3] = Default::default();
            for t in timelines {
                let p = t.iter().find(|p| p.year == year).or(t.last().filter(|p| p.year < year));
                if let Some(p) = p {
                    cols[0].push(p.dpi);
                    cols[1].push(p.tvpi_fair);
                    cols[2].push(p.tvpi_paper);
                }
            }
            let v = [stat(&mut cols[0], q), stat(&mut cols[1], q), stat(&mut cols[2], q)];
            table.push(vec![name.into(), year.to_string(), fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2])]);
            values.insert((name, year), v);
        }
    }
    (table, values)
}

fn median_series(values: &BTreeMap<(&'static str, u32), [f64; 3]>, col: usize) -> Vec<(f64, f64)> {
    values
        .iter()
        .filter(|((s, _), _)| *s == "p50")
        .map(|((_, y), v)| (*y as f64, v[col]))
        .collect()
}

fn irr_cells(irr: &Option<IrrOutcome>) -> [String; 2] {
    match irr {
        None => [String::new(), String::new()],
        Some(IrrOutcome::Undefined) => [String::new(), "undefined".into()],
        Some(IrrOutcome::Solved { rate, ambiguous }) => [
            fmt_f64(*rate),
            if *ambiguous { "ambiguous".into() } else { "solved".into() },
        ],
    }
}

fn standard_runs(cfg: &RunConfig, timeline_irr: bool) -> Result<Vec<FundRun>> {
    let mut sim = cfg.sim;
    sim.timeline_irr = timeline_irr;
    run_trials(&cfg.fund, &cfg.deployment, &cfg.outcome, cfg.master_seed, cfg.trials, sim)
}

fn run_standard(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let runs = standard_runs(cfg, cfg.sim.timeline_irr)?;

    let mut tl = Table::new(&[
        "trial", "year", "paid_in", "invested", "fees", "dry_powder", "nav_fair", "nav_paper",
        "distributed", "carry_paid", "dpi", "tvpi_fair", "tvpi_paper", "irr", "irr_status",
    ]);
    let mut trials = Table::new(&[
        "trial", "final_year", "dpi", "tvpi_fair", "irr", "irr_status", "fees", "carry_paid",
        "gp_fee_utility", "gp_carry_utility", "gp_commit_pnl", "gp_total",
    ]);
    for (i, r) in runs.iter().enumerate() {
        for p in &r.timeline {
            let [irr, status] = irr_cells(&p.irr);
            tl.push(vec![
                i.to_string(),
                p.year.to_string(),
                money(p.paid_in),
                money(p.invested),
                money(p.fees),
                money(p.dry_powder),
                money(p.nav_fair),
                money(p.nav_paper),
                money(p.distributed),
                money(p.carry_paid),
                fmt_f64(p.dpi),
                fmt_f64(p.tvpi_fair),
                fmt_f64(p.tvpi_paper),
                irr,
                status,
            ]);
        }
        let last = r.timeline.last().ok_or_else(|| Error::State("empty fund timeline".into()))?;
        let [irr, status] = irr_cells(&last.irr);
        let u = &r.realized;
        trials.push(vec![
            i.to_string(),
            last.year.to_string(),
            fmt_f64(last.dpi),
            fmt_f64(last.tvpi_fair),
            irr,
            status,
            money(r.final_state.fee_ledger),
            money(r.final_state.carry_paid),
            fmt_f64(u.fee_utility),
            fmt_f64(u.carry_utility),
            fmt_f64(u.commit_pnl),
            fmt_f64(u.total),
        ]);
    }
    sink.table("standard_timeline.csv", &tl)?;
    sink.table("standard_trials.csv", &trials)?;

    let timelines: Vec<Vec<Point>> = runs.iter().map(|r| r.timeline.iter().map(Point::from).collect()).collect();
    let (summary, values) = summary_table(&timelines);
    sink.table("standard_summary.csv", &summary)?;
    write_svg(cfg, sink, "standard_multiples.svg", || {
        line_chart(
            "Standard fund: median multiples",
            "year",
            "multiple",
            &[
                Series { name: "DPI", points: median_series(&values, 0) },
                Series { name: "TVPI (fair)", points: median_series(&values, 1) },
                Series { name: "TVPI (paper)", points: median_series(&values, 2) },
            ],
        )
    })
}

fn distributed_config(cfg: &RunConfig) -> DistributedSimConfig {
    let (rules, stakes) = if cfg.distributed.use_rules {
        (cfg.rules.clone(), cfg.stakes.clone())
    } else {
        (Vec::new(), BTreeMap::new())
    };
    DistributedSimConfig {
        fees: cfg.fees,
        splits: cfg.splits.clone(),
        admin_cost: cfg.spv.admin_cost,
        deal_allocation: cfg.deal_allocation(),
        template: cfg.distributed.template.clone(),
        rules,
        stakes,
        horizon_years: cfg.sim.horizon_years,
    }
}

fn run_distributed(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    if !cfg.distributed.events.is_empty() {
        return run_scripted(cfg, sink);
    }
    let dcfg = distributed_config(cfg);
    let runs = run_distributed_trials(&dcfg, &cfg.deployment, &cfg.outcome, cfg.master_seed, cfg.trials)?;

    let mut tl = Table::new(&[
        "trial", "year", "paid_in", "distributed", "nav_fair", "nav_paper", "dpi", "tvpi_fair", "tvpi_paper",
    ]);
    let mut trials = Table::new(&[
        "trial", "lp_paid_in", "lp_distributed", "lp_net_dpi", "performance_fees", "carry_paid",
        "admin_costs", "pod_take", "spvs_formed", "deals_rejected",
    ]);
    for r in &runs {
        for p in &r.timeline {
            tl.push(vec![
                r.trial.to_string(),
                p.year.to_string(),
                money(p.paid_in),
                money(p.distributed),
                money(p.nav_fair),
                money(p.nav_paper),
                fmt_f64(p.dpi),
                fmt_f64(p.tvpi_fair),
                fmt_f64(p.tvpi_paper),
            ]);
        }
        trials.push(vec![
            r.trial.to_string(),
            money(r.lp_paid_in),
            money(r.lp_distributed),
            fmt_f64(r.lp_net_dpi),
            money(r.performance_fees),
            money(r.carry_paid),
            money(r.admin_costs),
            money(r.pod_take),
            r.spvs_formed.to_string(),
            r.deals_rejected.to_string(),
        ]);
    }
    sink.table("distributed_timeline.csv", &tl)?;
    sink.table("distributed_trials.csv", &trials)?;

    let timelines: Vec<Vec<Point>> = runs.iter().map(|r| r.timeline.iter().map(Point::from).collect()).collect();
    let (summary, values) = summary_table(&timelines);
    sink.table("distributed_summary.csv", &summary)?;

    // Full ledger of the first trial for inspection.
    let detail = simulate_trial(&dcfg, &cfg.deployment, &cfg.outcome, cfg.master_seed, 0)?;
    let mut buf = Vec::new();
    detail.firm.write_ledger_csv(&mut buf)?;
    sink.write("distributed_ledger_trial0.csv", &buf)?;
    if let Some(engine) = &detail.engine {
        let mut buf = Vec::new();
        engine.write_traces_csv(&mut buf)?;
        sink.write("match_traces_trial0.csv", &buf)?;
    }

    write_svg(cfg, sink, "distributed_multiples.svg", || {
        line_chart(
            "Distributed firm: median LP multiples",
            "year",
            "multiple",
            &[
                Series { name: "DPI", points: median_series(&values, 0) },
                Series { name: "TVPI (fair)", points: median_series(&values, 1) },
                Series { name: "TVPI (paper)", points: median_series(&values, 2) },
            ],
        )
    })
}

/// Replays scripted events against a firm built from the configured members.
pub fn replay(cfg: &RunConfig) -> Result<DistributedFirm> {
    let mut firm = DistributedFirm::new(cfg.distributed.members.clone(), cfg.fees, &cfg.splits, cfg.spv.admin_cost)?;
    for (i, ev) in cfg.distributed.events.iter().enumerate() {
        let r = match ev {
            ScriptEvent::Source { deal, time, company, attribution } => {
                firm.source_deal(deal, company.clone(), *time, attribution)
            }
            ScriptEvent::Advance { deal, time, target, attribution } => {
                firm.advance(deal, *target, *time, attribution)
            }
            ScriptEvent::Fund { deal, time, commitments } => firm.fund(deal, commitments, *time).map(|_| ()),
            ScriptEvent::Exit { deal, time, proceeds } => firm.exit(deal, *proceeds, *time).map(|_| ()),
        };
        r.map_err(|e| Error::invalid(format!("event {i}: {e}")))?;
    }
    Ok(firm)
}

fn run_scripted(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let firm = replay(cfg)?;
    let mut buf = Vec::new();
    firm.write_ledger_csv(&mut buf)?;
    sink.write("ledger.csv", &buf)?;

    let mut members = Table::new(&["member", "pods", "capital_account"]);
    for m in firm.members().values() {
        let pods: Vec<&str> = m.pod_memberships.iter().map(|p| p.as_str()).collect();
        members.push(vec![m.id.0.clone(), pods.join(";"), money(m.capital_account)]);
    }
    sink.table("members.csv", &members)?;

    let mut deals = Table::new(&["deal_id", "state", "committed", "performance_fee", "admin_cost", "net_invested"]);
    for d in firm.deals().values() {
        let (c, f, a, n) = d.spv.as_ref().map_or(Default::default(), |s| {
            (money(s.committed()), money(s.performance_fee), money(s.admin_cost), money(s.net_invested))
        });
        deals.push(vec![d.id.clone(), d.state.as_str().into(), c, f, a, n]);
    }
    sink.table("deals.csv", &deals)
}

fn run_compare(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let std_runs = standard_runs(cfg, false)?;
    let dcfg = distributed_config(cfg);
    let dist_runs = run_distributed_trials(&dcfg, &cfg.deployment, &cfg.outcome, cfg.master_seed, cfg.trials)?;
    let std_timelines: Vec<Vec<Point>> =
        std_runs.iter().map(|r| r.timeline.iter().map(Point::from).collect()).collect();
    let dist_timelines: Vec<Vec<Point>> =
        dist_runs.iter().map(|r| r.timeline.iter().map(Point::from).collect()).collect();

    let (rows, summary) = compare(
        &TrialSet {
            master_seed: cfg.master_seed,
            model: cfg.outcome.clone(),
            runs: std_runs,
        },
        &TrialSet {
            master_seed: cfg.master_seed,
            model: cfg.outcome.clone(),
            runs: dist_runs,
        },
    )?;

    let mut t = Table::new(&[
        "trial", "standard_lp_dpi", "distributed_lp_dpi", "dpi_difference", "standard_fees",
        "distributed_fees", "standard_carry", "distributed_carry", "standard_admin",
        "distributed_admin", "standard_gp_take", "distributed_pod_take",
    ]);
    for r in &rows {
        t.push(vec![
            r.trial.to_string(),
            fmt_f64(r.standard_lp_dpi),
            fmt_f64(r.distributed_lp_dpi),
            fmt_f64(r.distributed_lp_dpi - r.standard_lp_dpi),
            money(r.standard_fees),
            money(r.distributed_fees),
            money(r.standard_carry),
            money(r.distributed_carry),
            money(r.standard_admin),
            money(r.distributed_admin),
            money(r.standard_take),
            money(r.distributed_take),
        ]);
    }
    sink.table("compare_trials.csv", &t)?;

    let mut s = Table::new(&[
        "model", "trials", "mean_lp_dpi", "median_lp_dpi", "mean_fees", "mean_carry", "mean_admin", "mean_take",
    ]);
    for m in &summary {
        s.push(vec![
            m.model.clone(),
            m.trials.to_string(),
            fmt_f64(m.mean_lp_dpi),
            fmt_f64(m.median_lp_dpi),
            fmt_f64(m.mean_fees),
            fmt_f64(m.mean_carry),
            fmt_f64(m.mean_admin),
            fmt_f64(m.mean_take),
        ]);
    }
    sink.table("compare_summary.csv", &s)?;

    write_svg(cfg, sink, "compare_dpi.svg", || {
        let (_, sv) = summary_table(&std_timelines);
        let (_, dv) = summary_table(&dist_timelines);
        line_chart(
            "Median LP DPI by firm model",
            "year",
            "DPI",
            &[
                Series { name: "standard", points: median_series(&sv, 0) },
                Series { name: "distributed", points: median_series(&dv, 0) },
            ],
        )
    })
}

/// Deal flow for one match-evaluation trial: scripted deals if configured,
/// otherwise evenly spaced deals with random attributes.
pub fn deal_flow(cfg: &RunConfig, trial: u64) -> Vec<DealOffer> {
    let me = &cfg.match_eval;
    if !me.deals.is_empty() {
        let mut deals = me.deals.clone();
        deals.sort_by(|a, b| a.time.total_cmp(&b.time));
        return deals;
    }
    let mut rng = SeedSpec::new(cfg.master_seed, trial).child(DEAL_FLOW_STREAM).rng();
    let n = me.deals_per_year * me.years;
    (0..n)
        .map(|k| {
            let sector = me.sectors[rng.random_range(0..me.sectors.len())].clone();
            let round = rng.random_range(me.round_size_range[0].0..=me.round_size_range[1].0);
            let cap = rng.random_range(me.valuation_cap_range[0].0..=me.valuation_cap_range[1].0);
            DealOffer {
                id: format!("t{trial}-d{k:04}"),
                company: CompanyAttrs {
                    sector,
                    round_size: Money(round),
                    valuation_cap: Money(cap),
                    stage: "seed".into(),
                },
                time: k as f64 / me.deals_per_year as f64,
            }
        })
        .collect()
}

/// Runs the automations over one trial's deal flow.
pub fn evaluate_matching(cfg: &RunConfig, trial: u64) -> Result<AutomationEngine> {
    let mut engine = AutomationEngine::new(cfg.rules.clone(), &cfg.stakes)?;
    for deal in deal_flow(cfg, trial) {
        engine.offer(&deal, cfg.match_eval.capacity)?;
    }
    engine.finish();
    Ok(engine)
}

const REASONS: [MatchReason; 7] = [
    MatchReason::Ok,
    MatchReason::Sector,
    MatchReason::RoundSize,
    MatchReason::ValuationCap,
    MatchReason::RateLimit,
    MatchReason::CheckFloor,
    MatchReason::Funds,
];

fn run_match_eval(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    use rayon::prelude::*;
    if cfg.rules.is_empty() {
        return Err(Error::invalid("match_eval needs at least one rule"));
    }
    let engines: Vec<AutomationEngine> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| evaluate_matching(cfg, i))
        .collect::<Result<_>>()?;

    let mut traces = Table::new(&["trial", "rule_id", "deal_id", "quarter", "decision", "reason", "check", "filled"]);
    let mut exposure = Table::new(&["trial", "rule_id", "deal_id", "funded_at", "amount", "followed_on", "holding_period_pref", "target_exit"]);
    #[derive(Default)]
    struct Tally {
        evaluations: u64,
        fills: u64,
        deployed: i128,
        reasons: [u64; 7],
        max_quarter: u32,
    }
    let mut tallies: BTreeMap<&str, Tally> = cfg.rules.iter().map(|r| (r.id.as_str(), Tally::default())).collect();

    for (i, e) in engines.iter().enumerate() {
        for t in e.traces() {
            traces.push(vec![
                i.to_string(),
                t.rule_id.clone(),
                t.deal_id.clone(),
                t.quarter.to_string(),
                match t.decision {
                    Decision::Match => "match".into(),
                    Decision::NoMatch => "no_match".into(),
                },
                t.reason.as_str().into(),
                t.check.map(money).unwrap_or_default(),
                money(t.filled),
            ]);
            let tally = tallies.get_mut(t.rule_id.as_str()).expect("known rule");
            tally.evaluations += 1;
            tally.reasons[REASONS.iter().position(|r| *r == t.reason).expect("reason")] += 1;
            if t.filled.is_positive() {
                tally.fills += 1;
            }
        }
        for h in e.holdings() {
            exposure.push(vec![
                i.to_string(),
                h.rule_id.clone(),
                h.deal_id.clone(),
                fmt_f64(h.funded_at),
                money(h.amount),
                money(h.followed_on),
                fmt_f64(h.holding_period_pref),
                fmt_f64(h.funded_at + h.holding_period_pref),
            ]);
        }
        for (id, acct) in e.accounts() {
            tallies.get_mut(id.as_str()).expect("known rule").deployed += acct.deployed.0 as i128;
        }
        for ((rule, _), &n) in e.ledger().iter() {
            let t = tallies.get_mut(rule.as_str()).expect("known rule");
            t.max_quarter = t.max_quarter.max(n);
        }
    }
    sink.table("match_traces.csv", &traces)?;
    sink.table("match_exposure.csv", &exposure)?;

    let mut header = vec!["rule_id", "evaluations", "fills", "mean_deployed", "max_per_quarter_seen"];
    header.extend(REASONS.iter().map(|r| r.as_str()));
    let mut summary = Table::new(&header);
    for (id, t) in &tallies {
        let mut row = vec![
            id.to_string(),
            t.evaluations.to_string(),
            t.fills.to_string(),
            fmt_f64(t.deployed as f64 / cfg.trials as f64),
            t.max_quarter.to_string(),
        ];
        row.extend(t.reasons.iter().map(|n| n.to_string()));
        summary.push(row);
    }
    sink.table("match_summary.csv", &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario, dir: &std::path::Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.scenario = scenario;
        cfg.trials = 3;
        cfg.output_dir = dir.to_path_buf();
        cfg.output.svg = true;
        cfg
    }

    #[test]
    fn every_scenario_writes_a_verifiable_manifest() {
        for s in [
            Scenario::UtilitySweep,
            Scenario::StandardSim,
            Scenario::DistributedSim,
            Scenario::Compare,
            Scenario::MatchEval,
        ] {
            let dir = tempfile::tempdir().unwrap();
            let m = run(&small(s, dir.path()), RunOptions::default()).unwrap();
            assert!(!m.outputs.is_empty(), "{s:?}");
            assert!(m.verify(dir.path()).unwrap());
            assert!(dir.path().join(MANIFEST).exists());
        }
    }

    #[test]
    fn sweep_variant_dominates_below_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(Scenario::UtilitySweep, dir.path());
        run(&cfg, RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("utility_sweep.csv")).unwrap();
        let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            by.entry(f[0].into()).or_default().push(f[2].parse().unwrap());
        }
        assert!(by["raise_fee"].iter().zip(&by["baseline"]).all(|(a, b)| a > b));
    }

    #[test]
    fn scripted_replay() {
        let text = r#"
scenario = "distributed_sim"
[[distributed.members]]
id = "core"
pods = ["core"]
[[distributed.members]]
id = "lp"
capital = 2000000
[[distributed.events]]
action = "source"
deal = "d1"
time = 0.0
company = { sector = "biotech", round_size = 6000000, valuation_cap = 20000000 }
[[distributed.events]]
action = "advance"
deal = "d1"
time = 0.5
target = "memo"
[[distributed.events]]
action = "fund"
deal = "d1"
time = 1.0
commitments = { lp = 1020408 }
[[distributed.events]]
action = "advance"
deal = "d1"
time = 1.5
target = "portfolio"
[[distributed.events]]
action = "exit"
deal = "d1"
time = 6.0
proceeds = 3000000
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let firm = replay(&cfg).unwrap();
        let spv = firm.deal("d1").unwrap().spv.clone().unwrap();
        assert_eq!(spv.performance_fee, Money(20_408));
        assert_eq!(spv.net_invested, Money(990_000));

        let mut bad = cfg.clone();
        bad.distributed.events.swap(1, 2);
        assert!(replay(&bad).unwrap_err().to_string().contains("event 1"));
    }

    #[test]
    fn compare_rejects_unpaired_sets() {
        let cfg = RunConfig {
            trials: 2,
            ..RunConfig::default()
        };
        let s = standard_runs(&cfg, false).unwrap();
        let d = run_distributed_trials(&distributed_config(&cfg), &cfg.deployment, &cfg.outcome, 43, 2).unwrap();
        let model = cfg.outcome.clone();
        let err = compare(
            &TrialSet { master_seed: 42, model: model.clone(), runs: s.clone() },
            &TrialSet { master_seed: 43, model: model.clone(), runs: d.clone() },
        );
        assert!(err.is_err());
        let mut other = model.clone();
        other.failure_hazard = 0.2;
        let err = compare(
            &TrialSet { master_seed: 42, model, runs: s },
            &TrialSet { master_seed: 42, model: other, runs: d },
        );
        assert!(err.is_err());
    }
}
