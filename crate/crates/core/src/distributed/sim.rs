//! Trial runner for the distributed firm. Company outcomes and entry years
//! come from the same streams as the standard fund, so trial `i` of both
//! models backs the same companies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    AttributionDelta, CarrySplitTable, CompanyAttrs, DealState, DistributedFirm, FeeSchedule,
    MemberId, MemberSpec, PayoutKind, PodKind,
};
use crate::automation::{AutomationEngine, AutomationRule, DealOffer};
use crate::error::{Error, Result};
use crate::market::{CompanyOutcome, OutcomeModel};
use crate::money::Money;
use crate::standard::{company_outcomes, DeploymentSchedule};

/// Attributes stamped on simulated deals; sectors cycle over companies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealTemplate {
    pub sectors: Vec<String>,
    pub round_size: Money,
    pub valuation_cap: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedSimConfig {
    pub fees: FeeSchedule,
    pub splits: CarrySplitTable,
    pub admin_cost: Money,
    /// Capital offered to each deal.
    pub deal_allocation: Money,
    pub template: DealTemplate,
    /// With no rules, one investor (`lp`) takes every deal in full.
    pub rules: Vec<AutomationRule>,
    pub stakes: BTreeMap<String, Money>,
    pub horizon_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistYearPoint {
    pub year: u32,
    pub paid_in: Money,
    pub distributed: Money,
    pub nav_fair: Money,
    pub nav_paper: Money,
    pub dpi: f64,
    pub tvpi_fair: f64,
    pub tvpi_paper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedRun {
    pub trial: u64,
    pub master_seed: u64,
    pub timeline: Vec<DistYearPoint>,
    pub lp_paid_in: Money,
    pub lp_distributed: Money,
    pub lp_net_dpi: f64,
    pub performance_fees: Money,
    pub carry_paid: Money,
    pub admin_costs: Money,
    /// Everything paid to pod members: performance fees plus carry.
    pub pod_take: Money,
    pub spvs_formed: u32,
    pub deals_rejected: u32,
}

/// A finished trial together with its firm and engine state.
#[derive(Debug, Clone)]
pub struct TrialDetail {
    pub run: DistributedRun,
    pub firm: DistributedFirm,
    pub engine: Option<AutomationEngine>,
}

const DEFAULT_LP: &str = "lp";

fn pod_member(kind: PodKind) -> MemberId {
    MemberId(format!("{}_pod", kind.as_str()))
}

/// One open SPV position: cash in, entry price relative to the company's
/// own entry, and where it sits on the company's path.
struct Position {
    company: usize,
    deal_id: String,
    entry_year: u32,
    net_invested: Money,
    /// Company mark (paper) at which this SPV bought in.
    price: f64,
    followon: bool,
    exit_year: u32,
}

fn build_firm(cfg: &DistributedSimConfig, investors: &[(MemberId, Money)]) -> Result<DistributedFirm> {
    let mut members: Vec<MemberSpec> = PodKind::ALL
        .iter()
        .map(|&k| MemberSpec {
            id: pod_member(k),
            pods: [k].into(),
            capital: Money::ZERO,
        })
        .collect();
    for (id, capital) in investors {
        members.push(MemberSpec {
            id: id.clone(),
            pods: Default::default(),
            capital: *capital,
        });
    }
    DistributedFirm::new(members, cfg.fees, &cfg.splits, cfg.admin_cost)
}

fn attribution() -> Vec<AttributionDelta> {
    [PodKind::Sourcing, PodKind::Diligence, PodKind::Success]
        .iter()
        .map(|&k| AttributionDelta::new(k, pod_member(k), 1))
        .collect()
}

/// Runs trial `trial` of the distributed firm.
pub fn simulate_trial(
    cfg: &DistributedSimConfig,
    schedule: &DeploymentSchedule,
    model: &OutcomeModel,
    master_seed: u64,
    trial: u64,
) -> Result<TrialDetail> {
    model.validate()?;
    if cfg.template.sectors.is_empty() {
        return Err(Error::invalid("deal template needs at least one sector"));
    }
    let outcomes = company_outcomes(model, master_seed, trial, schedule.companies_per_fund);
    let entries = schedule.entry_years();

    let mut engine = if cfg.rules.is_empty() {
        None
    } else {
        Some(AutomationEngine::new(cfg.rules.clone(), &cfg.stakes)?)
    };
    let investors: Vec<(MemberId, Money)> = match &engine {
        None => vec![(
            MemberId::from(DEFAULT_LP),
            Money(cfg.deal_allocation.0 * outcomes.len() as i64),
        )],
        Some(e) => {
            let mut by_owner: BTreeMap<MemberId, Money> = BTreeMap::new();
            for r in e.rules() {
                *by_owner.entry(r.owner.clone()).or_default() += e.account(&r.id).expect("account").staked;
            }
            by_owner.into_iter().collect()
        }
    };
    let mut firm = build_firm(cfg, &investors)?;
    let owners: BTreeMap<String, MemberId> =
        cfg.rules.iter().map(|r| (r.id.clone(), r.owner.clone())).collect();

    let mut positions: Vec<Position> = Vec::new();
    let mut rejected = 0u32;

    // Entry-year deals spread evenly inside their year so they land in
    // different quarters.
    let mut per_year: BTreeMap<u32, usize> = BTreeMap::new();
    for &y in &entries {
        *per_year.entry(y).or_default() += 1;
    }
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();

    for (j, (outcome, &year)) in outcomes.iter().zip(&entries).enumerate() {
        let k = seen.entry(year).or_default();
        let t = year as f64 + *k as f64 / per_year[&year] as f64;
        *k += 1;
        let id = format!("c{j:04}");
        let company = CompanyAttrs {
            sector: cfg.template.sectors[j % cfg.template.sectors.len()].clone(),
            round_size: cfg.template.round_size,
            valuation_cap: cfg.template.valuation_cap,
            stage: "seed".into(),
        };
        firm.source_deal(&id, company.clone(), t, &attribution())?;
        firm.advance(&id, DealState::Memo, t + 0.01, &[])?;

        let offer = DealOffer {
            id: id.clone(),
            company,
            time: t,
        };
        let commitments = commitments_for(&mut engine, &owners, &offer, cfg.deal_allocation)?;
        match close(&mut firm, &id, &commitments, t + 0.02) {
            Some(net) => {
                firm.advance(&id, DealState::Portfolio, t + 0.03, &[])?;
                positions.push(Position {
                    company: j,
                    deal_id: id,
                    entry_year: year,
                    net_invested: net,
                    price: 1.0,
                    followon: false,
                    exit_year: year + outcome.liquidity_year,
                });
            }
            None => {
                if let Some(e) = engine.as_mut() {
                    e.cancel(&offer);
                }
                firm.advance(&id, DealState::Rejected, t + 0.02, &[])?;
                rejected += 1;
            }
        }
    }

    let last_exit = positions.iter().map(|p| p.exit_year).max().unwrap_or(0);
    let horizon = cfg.horizon_years.max(last_exit);
    let mut timeline = Vec::with_capacity(horizon as usize + 1);

    for year in 0..=horizon {
        // Follow-ons at mid-year on the previous year-end paper mark.
        if let Some(e) = engine.as_mut() {
            let mut new_positions = Vec::new();
            for p in positions.iter().filter(|p| !p.followon) {
                let age = year.saturating_sub(p.entry_year);
                let outcome = &outcomes[p.company];
                if age == 0 || year >= p.exit_year {
                    continue;
                }
                let (_, paper) = outcome.marks_at(age).expect("age before liquidity");
                if paper <= 0.0 {
                    continue;
                }
                let checks = e.follow_on(&p.deal_id, paper, year as f64);
                if checks.is_empty() {
                    continue;
                }
                let mut commitments: BTreeMap<MemberId, Money> = BTreeMap::new();
                for c in &checks {
                    *commitments.entry(owners[&c.rule_id].clone()).or_default() += c.amount;
                }
                let id = format!("{}-fo{year}", p.deal_id);
                let t = year as f64 + 0.5;
                let company = firm.deal(&p.deal_id).expect("deal").company.clone();
                firm.source_deal(&id, company, t, &attribution())?;
                firm.advance(&id, DealState::Memo, t + 0.01, &[])?;
                match close(&mut firm, &id, &commitments, t + 0.02) {
                    Some(net) => {
                        firm.advance(&id, DealState::Portfolio, t + 0.03, &[])?;
                        new_positions.push(Position {
                            company: p.company,
                            deal_id: id,
                            entry_year: p.entry_year,
                            net_invested: net,
                            price: paper,
                            followon: true,
                            exit_year: p.exit_year,
                        });
                    }
                    None => {
                        firm.advance(&id, DealState::Rejected, t + 0.02, &[])?;
                        rejected += 1;
                    }
                }
            }
            positions.extend(new_positions);
        }

        for p in positions.iter().filter(|p| p.exit_year == year) {
            let m = outcomes[p.company].terminal_multiple / p.price;
            let proceeds = Money::from_f64_rounded(p.net_invested.as_f64() * m);
            firm.exit(&p.deal_id, proceeds, year as f64)?;
        }
        timeline.push(year_point(&firm, &positions, &outcomes, year));
    }
    if let Some(e) = engine.as_mut() {
        e.finish();
    }

    let run = summarize(&firm, timeline, master_seed, trial, rejected);
    Ok(TrialDetail { run, firm, engine })
}

fn commitments_for(
    engine: &mut Option<AutomationEngine>,
    owners: &BTreeMap<String, MemberId>,
    offer: &DealOffer,
    capacity: Money,
) -> Result<BTreeMap<MemberId, Money>> {
    let mut out: BTreeMap<MemberId, Money> = BTreeMap::new();
    match engine {
        None => {
            out.insert(MemberId::from(DEFAULT_LP), capacity);
        }
        Some(e) => {
            for fill in e.offer(offer, capacity)? {
                *out.entry(owners[&fill.rule_id].clone()).or_default() += fill.amount;
            }
        }
    }
    out.retain(|_, a| a.is_positive());
    Ok(out)
}

/// Forms the SPV if the commitments cover its costs; returns net invested.
fn close(
    firm: &mut DistributedFirm,
    id: &str,
    commitments: &BTreeMap<MemberId, Money>,
    t: f64,
) -> Option<Money> {
    if commitments.is_empty() {
        return None;
    }
    match firm.fund(id, commitments, t) {
        Ok(spv) => Some(spv.net_invested),
        Err(Error::Underfunded { .. }) => None,
        Err(e) => panic!("unexpected funding failure on {id}: {e}"),
    }
}

fn year_point(
    firm: &DistributedFirm,
    positions: &[Position],
    outcomes: &[CompanyOutcome],
    year: u32,
) -> DistYearPoint {
    let horizon = year as f64 + 1.0;
    let mut paid_in = Money::ZERO;
    let mut distributed = Money::ZERO;
    for e in firm.ledger().iter().filter(|e| e.time < horizon && e.role == "investor") {
        match e.flow_type.as_str() {
            "commitment" => paid_in += e.amount,
            "distribution" => distributed += e.amount,
            _ => {}
        }
    }
    let mut nav_fair = Money::ZERO;
    let mut nav_paper = Money::ZERO;
    for p in positions {
        let funded_by = firm
            .deal(&p.deal_id)
            .and_then(|d| d.spv.as_ref())
            .is_some_and(|s| s.formed_at < horizon);
        if !funded_by || year >= p.exit_year {
            continue;
        }
        let age = year - p.entry_year;
        if let Some((fair, paper)) = outcomes[p.company].marks_at(age) {
            let (fair, paper) = if p.followon {
                (fair / p.price, paper / p.price)
            } else {
                (fair, paper)
            };
            nav_fair += Money::from_f64_rounded(p.net_invested.as_f64() * fair);
            nav_paper += Money::from_f64_rounded(p.net_invested.as_f64() * paper);
        }
    }
    let ratio = |x: Money| if paid_in.is_positive() { x.as_f64() / paid_in.as_f64() } else { 0.0 };
    DistYearPoint {
        year,
        paid_in,
        distributed,
        nav_fair,
        nav_paper,
        dpi: ratio(distributed),
        tvpi_fair: ratio(distributed + nav_fair),
        tvpi_paper: ratio(distributed + nav_paper),
    }
}

fn summarize(
    firm: &DistributedFirm,
    timeline: Vec<DistYearPoint>,
    master_seed: u64,
    trial: u64,
    rejected: u32,
) -> DistributedRun {
    let mut perf = Money::ZERO;
    let mut carry = Money::ZERO;
    let mut admin = Money::ZERO;
    let mut paid_in = Money::ZERO;
    let mut distributed = Money::ZERO;
    let mut spvs = 0;
    for e in firm.ledger() {
        match (e.role.as_str(), e.flow_type.as_str()) {
            ("investor", "commitment") => paid_in += e.amount,
            ("investor", "distribution") => distributed += e.amount,
            ("admin", _) => {
                admin += e.amount;
                spvs += 1;
            }
            (_, f) if f == PayoutKind::PerformanceFee.as_str() => perf += e.amount,
            (_, f) if f == PayoutKind::Carry.as_str() => carry += e.amount,
            _ => {}
        }
    }
    DistributedRun {
        trial,
        master_seed,
        timeline,
        lp_paid_in: paid_in,
        lp_distributed: distributed,
        lp_net_dpi: if paid_in.is_positive() { distributed.as_f64() / paid_in.as_f64() } else { 0.0 },
        performance_fees: perf,
        carry_paid: carry,
        admin_costs: admin,
        pod_take: perf + carry,
        spvs_formed: spvs,
        deals_rejected: rejected,
    }
}

/// Runs trials `0..trials` in parallel; results are in trial order.
pub fn run_distributed_trials(
    cfg: &DistributedSimConfig,
    schedule: &DeploymentSchedule,
    model: &OutcomeModel,
    master_seed: u64,
    trials: u64,
) -> Result<Vec<DistributedRun>> {
    (0..trials)
        .into_par_iter()
        .map(|i| simulate_trial(cfg, schedule, model, master_seed, i).map(|d| d.run))
        .collect()
}
