//! Acceptance suite. Each criterion prints one PASS/FAIL line with its runtime
//! and budget; the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dvc_core::automation::{
    match_deal, AutomationEngine, AutomationRule, Decision, DealOffer, FollowOnCriteria,
    MatchReason, QuarterLedger,
};
use dvc_core::distributed::{
    advance_deal, exit_waterfall, form_spv, AttributionDelta, CarrySplitTable, CompanyAttrs, Deal,
    DealState, FeeSchedule, MemberId, PayoutKind, Pod, PodKind, Pods,
};
use dvc_core::economics::{gp_utility_expanded, FundParams, Multiple};
use dvc_core::experiment::{defaults, run, RunConfig, RunOptions, Scenario};
use dvc_core::kpi::{irr, multiples, CashFlowEvent, CashFlowSeries, IrrOutcome};
use dvc_core::standard::{dpi_quantile, run_trials};
use dvc_core::{Error, Money};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{name}: got {got}, want {want} ± {tol:e}")
    })
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_0000 + tag)
}

// ---------------------------------------------------------------------------
// Utility oracle: exact integer evaluation, every rate in hundredths.
//
// U·1e8 = f·P·l·1e6 + f·(G·100 + C·(100 − G))·((100 − P·l)·M − 1e4)
// with p = P/100, g = G/100, c = C/100, m = M/100.

fn utility_oracle_e8(f: i128, p: i128, l: i128, g: i128, c: i128, m: i128) -> i128 {
    f * p * l * 1_000_000 + f * (g * 100 + c * (100 - g)) * ((100 - p * l) * m - 10_000)
}

fn utility(f: f64, p: f64, g: f64, c: f64, m: f64) -> f64 {
    let params = FundParams::new(f, 10, p, g, c).expect("valid params");
    gp_utility_expanded(&params, Multiple::new(m).expect("valid m")).total
}

fn criterion_1() -> Check {
    let cases = [
        ("baseline m=2", 2.0, 0.01, 200, 1, 0.3248),
        ("baseline m=0", 0.0, 0.01, 0, 1, -0.008),
        ("g=0 m=1", 1.0, 0.0, 100, 0, 0.16),
    ];
    for (name, m, g, m_hund, g_hund, want) in cases {
        let oracle = utility_oracle_e8(1, 2, 10, g_hund, 20, m_hund) as f64 / 1e8;
        close(&format!("{name} oracle"), oracle, want, 1e-12)?;
        close(name, utility(1.0, 0.02, g, 0.20, m), want, 1e-12)?;
    }
    Ok("0.3248 / -0.008 / 0.16".into())
}

fn criterion_2() -> Check {
    let cfg = defaults::sweep();
    let base = FundParams::new(1.0, defaults::LIFESPAN_YEARS, defaults::MGMT_FEE, defaults::GP_COMMIT, defaults::CARRY)
        .map_err(|e| e.to_string())?;
    let raise = cfg
        .variants
        .iter()
        .find(|v| v.id == "raise_fee")
        .ok_or("no raise_fee variant")?;
    let raised = base.with_overrides(&raise.overrides).map_err(|e| e.to_string())?;
    ensure(raised.mgmt_fee() > base.mgmt_fee(), || "raise_fee does not raise the fee".into())?;
    for m in cfg.grid().map_err(|e| e.to_string())? {
        let mm = Multiple::new(m).unwrap();
        let (b, r) = (gp_utility_expanded(&base, mm).total, gp_utility_expanded(&raised, mm).total);
        ensure(r > b, || format!("raise_fee {r} does not exceed baseline {b} at m={m}"))?;
    }

    // Locate the sign flip of the forward difference in p by bisection.
    let h = 1e-4;
    let slope = |m: f64| {
        let mm = Multiple::new(m).unwrap();
        let up = FundParams::new(1.0, 10, base.mgmt_fee() + h, base.gp_commit(), base.carry()).unwrap();
        (gp_utility_expanded(&up, mm).total - gp_utility_expanded(&base, mm).total) / h
    };
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    ensure(slope(lo) > 0.0 && slope(hi) < 0.0, || "no sign flip on [0, 10]".into())?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let found = 0.5 * (lo + hi);
    let g = base.gp_commit();
    let closed = 1.0 / (g + base.carry() * (1.0 - g));
    close("finite-difference m*", found, closed, 1e-6)?;
    ensure(format!("{closed:.4}") == "4.8077", || format!("m* = {closed} does not round to 4.8077"))?;
    Ok(format!("m* = {found:.7}"))
}

fn criterion_3() -> Check {
    let base = utility_oracle_e8(1, 2, 10, 1, 20, 200);
    let fee = utility_oracle_e8(1, 4, 10, 1, 20, 200) - base;
    let carry = utility_oracle_e8(1, 2, 10, 1, 25, 200) - base;
    close("oracle fee delta", fee as f64 / 1e8, 0.1168, 1e-9)?;
    close("oracle carry delta", carry as f64 / 1e8, 0.0297, 1e-9)?;

    let u = utility(1.0, 0.02, 0.01, 0.20, 2.0);
    close("doubling p", utility(1.0, 0.04, 0.01, 0.20, 2.0) - u, 0.1168, 1e-9)?;
    close("c + 0.05", utility(1.0, 0.02, 0.01, 0.25, 2.0) - u, 0.0297, 1e-9)?;
    Ok("0.1168 / 0.0297".into())
}

// ---------------------------------------------------------------------------

fn npv_oracle(flows: &[(f64, i64)], r: f64) -> f64 {
    flows.iter().map(|&(t, a)| a as f64 / (1.0 + r).powf(t)).sum()
}

fn series(flows: &[(f64, i64)]) -> CashFlowSeries {
    CashFlowSeries::new(
        flows
            .iter()
            .map(|&(t, a)| {
                if a < 0 {
                    CashFlowEvent::call(t, Money(-a))
                } else {
                    CashFlowEvent::distribution(t, Money(a))
                }
            })
            .collect(),
    )
    .expect("valid series")
}

fn solved_rate(flows: &[(f64, i64)]) -> Result<f64, String> {
    match irr(&series(flows), None).map_err(|e| e.to_string())? {
        IrrOutcome::Solved { rate, .. } => Ok(rate),
        IrrOutcome::Undefined => Err(format!("no IRR for {flows:?}")),
    }
}

fn criterion_4() -> Check {
    let examples: [(&[(f64, i64)], Option<f64>); 3] = [
        (&[(0.0, -100), (10.0, 200)], Some(2f64.powf(0.1) - 1.0)),
        (&[(0.0, -100), (1.0, 100)], Some(0.0)),
        (&[(0.0, -100), (1.0, 50), (2.0, 75)], None),
    ];
    for (flows, closed) in examples {
        let r = solved_rate(flows)?;
        let v = npv_oracle(flows, r);
        ensure(v.abs() <= 1e-9, || format!("|NPV| = {v:e} at r = {r} for {flows:?}"))?;
        if let Some(want) = closed {
            close("closed-form IRR", r, want, 1e-9)?;
        }
    }
    // Third example against the quadratic root: 100x² − 50x − 75 = 0, x = 1 + r.
    let x = (50.0 + (2500.0f64 + 30_000.0).sqrt()) / 200.0;
    close("two-distribution IRR", solved_rate(examples[2].0)?, x - 1.0, 1e-9)?;

    let mut rng = rng(4);
    let mut solved = 0;
    let mut attempts = 0;
    while solved < 1_000 {
        attempts += 1;
        ensure(attempts < 100_000, || "too few solvable series".into())?;
        let mut flows = Vec::new();
        let calls = rng.random_range(1..=4);
        for k in 0..calls {
            let t = if k == 0 { 0.0 } else { rng.random_range(0..16) as f64 * 0.25 };
            flows.push((t, -rng.random_range(1..1_000_000_000i64)));
        }
        for _ in 0..rng.random_range(1..=8) {
            flows.push((rng.random_range(4.0..15.0f64), rng.random_range(0..2_000_000_000i64)));
        }
        flows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let IrrOutcome::Solved { rate, .. } = irr(&series(&flows), None).map_err(|e| e.to_string())? {
            let gross: f64 = flows.iter().map(|f| f.1.unsigned_abs() as f64).sum();
            let v = npv_oracle(&flows, rate);
            ensure(v.abs() <= 1e-9 * gross, || {
                format!("residual {v:e} > 1e-9·{gross} at r = {rate} for {flows:?}")
            })?;
            solved += 1;
        }
    }
    Ok(format!("3 examples, {solved} random series ({attempts} drawn)"))
}

fn criterion_5() -> Check {
    let mut rng = rng(5);
    for _ in 0..10_000 {
        let mut flows = Vec::new();
        for k in 0..rng.random_range(1..=6) {
            let t = if k == 0 { 0.0 } else { rng.random_range(0..20) as f64 * 0.25 };
            flows.push((t, -rng.random_range(1..1_000_000_000i64)));
        }
        for _ in 0..rng.random_range(0..=10) {
            flows.push((5.0 + rng.random_range(0..40) as f64 * 0.25, rng.random_range(0..1_000_000_000i64)));
        }
        let s = series(&flows);
        let k = rng.random_range(2..1_000i64);
        let scaled = s.scaled(k);
        let mut prev_dpi = f64::NEG_INFINITY;
        for step in 0..=30 {
            let t = 5.0 + step as f64 * 0.5;
            let nav = Money(rng.random_range(0..2_000_000_000i64));
            let r = multiples(&s, Some(nav), t).map_err(|e| e.to_string())?;
            ensure(r.tvpi == r.dpi + r.rvpi, || format!("tvpi {} != dpi {} + rvpi {}", r.tvpi, r.dpi, r.rvpi))?;
            ensure(r.dpi >= prev_dpi, || format!("dpi fell from {prev_dpi} to {} at t={t}", r.dpi))?;
            prev_dpi = r.dpi;
            let q = multiples(&scaled, Some(Money(nav.0 * k)), t).map_err(|e| e.to_string())?;
            ensure(
                q.dpi.to_bits() == r.dpi.to_bits()
                    && q.rvpi.to_bits() == r.rvpi.to_bits()
                    && q.tvpi.to_bits() == r.tvpi.to_bits()
                    && q.tvpi_dpi_ratio.map(f64::to_bits) == r.tvpi_dpi_ratio.map(f64::to_bits),
                || format!("multiples changed under scaling by {k} at t={t}"),
            )?;
        }
    }
    Ok("10000 ledgers".into())
}

// ---------------------------------------------------------------------------

fn attrs() -> CompanyAttrs {
    CompanyAttrs {
        sector: "biotech".into(),
        round_size: Money(6_000_000),
        valuation_cap: Money(20_000_000),
        stage: "seed".into(),
    }
}

fn pod(kind: PodKind, ids: &[String]) -> Pod {
    Pod {
        kind,
        members: ids.iter().map(|s| MemberId::from(s.as_str())).collect(),
    }
}

fn worked_example() -> Result<(), String> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let pods = Pods::new(vec![
        pod(PodKind::Core, &s(&["core1", "core2"])),
        pod(PodKind::Diligence, &s(&["A", "B"])),
        pod(PodKind::Success, &s(&["x1"])),
    ])
    .map_err(|e| e.to_string())?;
    let fees = FeeSchedule {
        performance_fee: 0.0,
        carry: 0.20,
    };
    let splits = CarrySplitTable {
        perf_fee_shares: BTreeMap::new(),
        carry_shares: [(PodKind::Diligence, 0.25), (PodKind::Success, 0.30)].into(),
    }
    .resolve()
    .map_err(|e| e.to_string())?;
    let mut d = Deal::sourced("w", attrs(), 0.0);
    let deltas = [
        AttributionDelta::new(PodKind::Diligence, "A", 2),
        AttributionDelta::new(PodKind::Diligence, "B", 1),
        AttributionDelta::new(PodKind::Success, "x1", 1),
    ];
    advance_deal(&mut d, DealState::Memo, 1.0, &deltas).map_err(|e| e.to_string())?;
    let c = [(MemberId::from("lp"), Money(1_000_000))].into();
    form_spv(&mut d, &c, &fees, &splits, &pods, Money::ZERO, 2.0).map_err(|e| e.to_string())?;
    advance_deal(&mut d, DealState::Portfolio, 3.0, &[]).map_err(|e| e.to_string())?;
    let out = exit_waterfall(&mut d, Money(3_000_000), &fees, &splits, &pods, 9.0).map_err(|e| e.to_string())?;
    let pod_total = |k: PodKind| out.pod_ledger.iter().filter(|p| p.pod == k).map(|p| p.amount).sum::<Money>();
    let got = (
        out.carry,
        pod_total(PodKind::Diligence),
        pod_total(PodKind::Success),
        pod_total(PodKind::Core),
        out.investors[&MemberId::from("lp")],
    );
    let want = (Money(400_000), Money(100_000), Money(120_000), Money(180_000), Money(2_600_000));
    ensure(got == want, || format!("worked example: got {got:?}, want {want:?}"))
}

fn random_shares(rng: &mut ChaCha8Rng) -> BTreeMap<PodKind, f64> {
    let mut left = 1.0f64;
    let mut out = BTreeMap::new();
    for kind in &PodKind::ALL[1..] {
        if rng.random_bool(0.6) {
            let s = (rng.random_range(0.0..left) * 1e4).floor() / 1e4;
            left -= s;
            out.insert(*kind, s);
        }
    }
    out
}

fn criterion_6() -> Check {
    worked_example()?;
    let mut rng = rng(6);
    let mut underfunded = 0;
    for i in 0..10_000 {
        let mut names: BTreeMap<PodKind, Vec<String>> = BTreeMap::new();
        let mut pod_list = Vec::new();
        for kind in PodKind::ALL {
            let min = if kind == PodKind::Core { 1 } else { 0 };
            let ids: Vec<String> = (0..rng.random_range(min..=3)).map(|j| format!("{}{j}", kind.as_str())).collect();
            pod_list.push(pod(kind, &ids));
            names.insert(kind, ids);
        }
        let pods = Pods::new(pod_list).map_err(|e| e.to_string())?;
        let fees = FeeSchedule {
            performance_fee: rng.random_range(0.0..0.05),
            carry: rng.random_range(0.0..0.35),
        };
        let splits = CarrySplitTable {
            perf_fee_shares: random_shares(&mut rng),
            carry_shares: random_shares(&mut rng),
        }
        .resolve()
        .map_err(|e| e.to_string())?;
        let mut deltas = Vec::new();
        for (kind, ids) in &names {
            for id in ids {
                if rng.random_bool(0.5) {
                    deltas.push(AttributionDelta::new(*kind, id.as_str(), rng.random_range(1..10)));
                }
            }
        }
        let commitments: BTreeMap<MemberId, Money> = (0..rng.random_range(1..=5))
            .map(|j| (MemberId(format!("lp{j}")), Money(rng.random_range(1..5_000_000))))
            .collect();
        let admin = Money(rng.random_range(0..=20_000));
        let committed: Money = commitments.values().sum();

        let mut d = Deal::sourced(format!("d{i}"), attrs(), 0.0);
        advance_deal(&mut d, DealState::Memo, 1.0, &deltas).map_err(|e| e.to_string())?;
        let (spv, fee_payouts) = match form_spv(&mut d, &commitments, &fees, &splits, &pods, admin, 2.0) {
            Ok(x) => x,
            Err(Error::Underfunded { .. }) => {
                underfunded += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        advance_deal(&mut d, DealState::Portfolio, 3.0, &[]).map_err(|e| e.to_string())?;
        let proceeds = Money(rng.random_range(0..=committed.0 * 5));
        let out = exit_waterfall(&mut d, proceeds, &fees, &splits, &pods, 9.0).map_err(|e| e.to_string())?;

        let fee_paid: Money = fee_payouts.iter().map(|p| p.amount).sum();
        let carry_paid: Money = out.pod_ledger.iter().map(|p| p.amount).sum();
        let to_investors: Money = out.investors.values().sum();
        ensure(fee_paid == spv.performance_fee, || format!("deal {i}: fee payouts {fee_paid} != fee {}", spv.performance_fee))?;
        ensure(carry_paid == out.carry, || format!("deal {i}: carry payouts {carry_paid} != carry {}", out.carry))?;
        ensure(
            fee_payouts.iter().all(|p| p.kind == PayoutKind::PerformanceFee)
                && out.pod_ledger.iter().all(|p| p.kind == PayoutKind::Carry && p.amount.0 >= 0),
            || format!("deal {i}: payout kinds or signs wrong"),
        )?;
        let outflows = to_investors + carry_paid + fee_paid + spv.admin_cost;
        let inflows = committed + proceeds - spv.net_invested;
        ensure(outflows == inflows, || format!("deal {i}: outflows {outflows} != inflows {inflows}"))?;
    }
    Ok(format!("worked example exact; 10000 deals ({underfunded} underfunded)"))
}

// ---------------------------------------------------------------------------

const SECTORS: [&str; 4] = ["biotech", "fintech", "climate", "software"];

fn random_rule(rng: &mut ChaCha8Rng, id: usize) -> AutomationRule {
    let check_min = Money(rng.random_range(0..300_000));
    let check_max = Money(check_min.0 + rng.random_range(0..300_000));
    let sectors = SECTORS
        .iter()
        .filter(|_| rng.random_bool(0.5))
        .map(|s| s.to_string())
        .collect();
    AutomationRule {
        id: format!("r{id}"),
        owner: MemberId(format!("lp{id}")),
        sectors,
        min_round_size: Money(rng.random_range(0..10_000_000)),
        max_valuation_cap: Money(rng.random_range(1_000_000..40_000_000)),
        check_min,
        check_max,
        max_per_quarter: rng.random_range(1..=4),
        holding_period_pref: 7.0,
        followon_reserve_fraction: [0.0, 0.4][rng.random_range(0..2)],
        followon_criteria: FollowOnCriteria::default(),
        created_at: rng.random_range(0..5),
        fill_fraction: [1.0, 0.5, 0.25][rng.random_range(0..3)],
    }
}

fn random_deal(rng: &mut ChaCha8Rng, id: usize) -> DealOffer {
    DealOffer {
        id: format!("d{id}"),
        company: CompanyAttrs {
            sector: SECTORS[rng.random_range(0..4)].into(),
            round_size: Money(rng.random_range(0..12_000_000)),
            valuation_cap: Money(rng.random_range(1_000_000..45_000_000)),
            stage: "seed".into(),
        },
        time: rng.random_range(0.0..4.0),
    }
}

/// Round-half-even of `available · fill` for fills that are multiples of 1/4.
fn scaled_available(available: i64, fill: f64) -> i64 {
    let quarters = (fill * 4.0) as i64;
    let num = available * quarters;
    let (q, r) = (num / 4, num % 4);
    if r > 2 || (r == 2 && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

/// Every clause evaluated independently; the reason is the first failure.
fn clause_oracle(rule: &AutomationRule, deal: &DealOffer, count: u32, available: Money) -> (Decision, MatchReason, Option<Money>) {
    let c = &deal.company;
    let proposed = scaled_available(available.0, rule.fill_fraction)
        .max(rule.check_min.0)
        .min(rule.check_max.0);
    let clauses = [
        (MatchReason::Sector, rule.sectors.iter().any(|s| *s == c.sector)),
        (MatchReason::RoundSize, c.round_size.0 >= rule.min_round_size.0),
        (MatchReason::ValuationCap, c.valuation_cap.0 <= rule.max_valuation_cap.0),
        (MatchReason::RateLimit, count < rule.max_per_quarter),
        (MatchReason::CheckFloor, available.0 >= rule.check_min.0),
        (MatchReason::Funds, proposed > 0 && proposed <= available.0),
    ];
    match clauses.iter().find(|(_, ok)| !ok) {
        Some(&(reason, _)) => (Decision::NoMatch, reason, None),
        None => (Decision::Match, MatchReason::Ok, Some(Money(proposed))),
    }
}

fn criterion_7() -> Check {
    let mut rng = rng(7);
    let biotech = defaults::rules().remove(0);
    let mut matches = 0;
    for i in 0..10_000 {
        let rule = if i % 4 == 0 { biotech.clone() } else { random_rule(&mut rng, i) };
        let deal = random_deal(&mut rng, i);
        let quarter = (deal.time * 4.0).floor() as i64;
        let mut ledger = QuarterLedger::default();
        let prior = rng.random_range(0..=rule.max_per_quarter);
        for _ in 0..prior {
            ledger.record(&rule.id, quarter, rule.max_per_quarter).map_err(|e| e.to_string())?;
        }
        // Noise in other quarters and rules must not matter.
        ledger.record(&rule.id, quarter + 1, u32::MAX).map_err(|e| e.to_string())?;
        ledger.record("other", quarter, u32::MAX).map_err(|e| e.to_string())?;
        let available = Money(rng.random_range(0..600_000));
        let got = match_deal(&rule, &deal, &ledger, available);
        let want = clause_oracle(&rule, &deal, prior, available);
        ensure((got.decision, got.reason, got.proposed_check) == want, || {
            format!("triple {i}: engine {got:?}, oracle {want:?}\nrule {rule:?}\ndeal {deal:?}\navailable {available}")
        })?;
        matches += usize::from(got.decision == Decision::Match);
    }

    // Rate limit over random event sequences.
    let mut sequences = 0;
    for s in 0..200 {
        let rules: Vec<AutomationRule> = (0..rng.random_range(1..=4)).map(|j| random_rule(&mut rng, j)).collect();
        let stakes = rules
            .iter()
            .map(|r| (r.id.clone(), Money(rng.random_range(0..5_000_000))))
            .collect();
        let mut engine = AutomationEngine::new(rules.clone(), &stakes).map_err(|e| e.to_string())?;
        let mut deals: Vec<DealOffer> = (0..60).map(|j| random_deal(&mut rng, j)).collect();
        deals.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut offered = Vec::new();
        for d in &deals {
            engine.offer(d, Money(rng.random_range(0..800_000))).map_err(|e| e.to_string())?;
            offered.push(d.clone());
            if rng.random_bool(0.1) {
                let victim = offered.choose(&mut rng).expect("non-empty").clone();
                engine.cancel(&victim);
            }
        }
        let mut fills: BTreeMap<(String, i64), u32> = BTreeMap::new();
        for h in engine.holdings() {
            *fills.entry((h.rule_id.clone(), (h.funded_at * 4.0).floor() as i64)).or_default() += 1;
        }
        for r in &rules {
            for ((id, q), n) in fills.iter().filter(|((id, _), _)| *id == r.id) {
                ensure(*n <= r.max_per_quarter, || {
                    format!("sequence {s}: rule {id} filled {n} > {} in quarter {q}", r.max_per_quarter)
                })?;
                ensure(engine.ledger().count(id, *q) == *n, || format!("sequence {s}: ledger out of sync for {id} q{q}"))?;
            }
            let acct = engine.account(&r.id).ok_or("missing account")?;
            ensure(acct.is_balanced(), || format!("sequence {s}: account {} unbalanced", r.id))?;
        }
        sequences += 1;
    }
    Ok(format!("10000 triples ({matches} matches), {sequences} sequences"))
}

// ---------------------------------------------------------------------------

fn criterion_8() -> Check {
    let runs = run_trials(
        &defaults::fund(),
        &defaults::deployment(),
        &defaults::outcome(),
        defaults::master_seed(),
        10_000,
        defaults::sim(),
    )
    .map_err(|e| e.to_string())?;
    ensure(defaults::outcome().markup_inflation == 0.48, || "shipped markup is not 0.48".into())?;
    let p75 = dpi_quantile(&runs, 18, 0.75);
    ensure((1.5..=3.0).contains(&p75), || format!("year-18 top-quartile DPI {p75} outside [1.5, 3.0]"))?;
    let mut inflated_years = 0usize;
    for (i, r) in runs.iter().enumerate() {
        for p in &r.timeline {
            ensure(p.tvpi_fair >= p.dpi && p.tvpi_paper >= p.dpi, || {
                format!("trial {i} year {}: tvpi {} < dpi {}", p.year, p.tvpi_fair, p.dpi)
            })?;
            ensure(p.tvpi_paper >= p.tvpi_fair, || format!("trial {i} year {}: paper below fair", p.year))?;
            if p.inflated_positions > 0 {
                inflated_years += 1;
                ensure(p.tvpi_paper > p.tvpi_fair, || {
                    format!("trial {i} year {}: paper TVPI {} not above fair {}", p.year, p.tvpi_paper, p.tvpi_fair)
                })?;
            }
        }
    }
    ensure(inflated_years > 0, || "no trial-year carried an inflated mark".into())?;
    Ok(format!("p75 DPI@18 = {p75:.3}; {inflated_years} marked trial-years"))
}

fn criterion_9() -> Check {
    let mut compared = 0;
    for scenario in [Scenario::UtilitySweep, Scenario::Compare, Scenario::MatchEval] {
        let dirs = [tempfile::tempdir(), tempfile::tempdir()];
        let mut manifests = Vec::new();
        for (dir, threads) in dirs.iter().zip([1usize, 4]) {
            let dir = dir.as_ref().map_err(|e| e.to_string())?;
            let cfg = RunConfig {
                scenario,
                trials: 200,
                output_dir: dir.path().to_path_buf(),
                ..RunConfig::default()
            };
            let m = run(&cfg, RunOptions { threads: Some(threads) }).map_err(|e| e.to_string())?;
            ensure(m.verify(dir.path()).map_err(|e| e.to_string())?, || "manifest does not match files".into())?;
            manifests.push((dir.path().to_path_buf(), m));
        }
        let (a, b) = (&manifests[0], &manifests[1]);
        ensure(a.1.output_hashes() == b.1.output_hashes(), || format!("{scenario:?}: hashes differ across thread counts"))?;
        ensure(a.1.config_sha256 == b.1.config_sha256, || format!("{scenario:?}: config hash differs"))?;
        for f in &a.1.outputs {
            let x = std::fs::read(a.0.join(&f.path)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.0.join(&f.path)).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("{scenario:?}: {} differs", f.path))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} files identical at 1 and 4 threads"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Duration); 9] = [
        ("1 utility values", criterion_1, Duration::from_secs(1)),
        ("2 fee incentive", criterion_2, Duration::from_secs(1)),
        ("3 fee vs carry deltas", criterion_3, Duration::from_secs(1)),
        ("4 irr solver", criterion_4, Duration::from_secs(5)),
        ("5 kpi identities", criterion_5, Duration::from_secs(10)),
        ("6 waterfall conservation", criterion_6, Duration::from_secs(10)),
        ("7 matching oracle", criterion_7, Duration::from_secs(10)),
        ("8 lifecycle calibration", criterion_8, Duration::from_secs(60)),
        ("9 determinism", criterion_9, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; over budget")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS  {name:<26} {:>8.3}s / {:>3}s  {detail}", elapsed.as_secs_f64(), budget.as_secs()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {:>8.3}s / {:>3}s  {why}", elapsed.as_secs_f64(), budget.as_secs());
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
