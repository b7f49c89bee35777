//! Shipped defaults. Amounts are whole US dollars. These are the only place
//! the reference fee, carry, markup and split constants appear; engines take
//! everything as parameters.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::config::{MatchEvalConfig, OutputFlags, Scenario, SpvConfig, SweepConfig};
use crate::automation::{AutomationRule, FollowOnCriteria};
use crate::distributed::sim::DealTemplate;
use crate::distributed::{CarrySplitTable, FeeSchedule, PodKind};
use crate::economics::{FundParams, ModelTag, ParamOverrides, SweepVariant};
use crate::market::OutcomeModel;
use crate::money::Money;
use crate::standard::{CheckPolicy, DeploymentSchedule, SimOptions};

pub const MGMT_FEE: f64 = 0.02;
pub const CARRY: f64 = 0.20;
pub const GP_COMMIT: f64 = 0.01;
pub const LIFESPAN_YEARS: u32 = 10;
pub const MARKUP_INFLATION: f64 = 0.48;
pub const PERFORMANCE_FEE: f64 = 0.02;
pub const SPV_ADMIN_COST: Money = Money(10_000);
pub const FOLLOWON_RESERVE: f64 = 0.40;

pub fn scenario() -> Scenario {
    Scenario::Compare
}

pub fn trials() -> u64 {
    1_000
}

pub fn master_seed() -> u64 {
    42
}

pub fn output_dir() -> PathBuf {
    PathBuf::from("out")
}

pub fn output() -> OutputFlags {
    OutputFlags { svg: false }
}

pub fn fund() -> FundParams {
    FundParams::new(100_000_000.0, LIFESPAN_YEARS, MGMT_FEE, GP_COMMIT, CARRY)
        .expect("default fund parameters are valid")
}

pub fn deployment() -> DeploymentSchedule {
    DeploymentSchedule {
        deployment_years: 4,
        initial_fraction: 0.6,
        companies_per_fund: 50,
        check_policy: CheckPolicy::EqualWeight,
    }
}

/// Calibrated so the top-quartile fund returns roughly 2x DPI by year 18.
pub fn outcome() -> OutcomeModel {
    OutcomeModel {
        failure_hazard: 0.10,
        pareto_alpha: 1.1,
        pareto_xmin: 1.5,
        stepup_mu: 0.1,
        stepup_sigma: 0.35,
        years_to_liquidity_min: 5,
        years_to_liquidity_max: 12,
        markup_inflation: MARKUP_INFLATION,
        fixed_multiple: None,
    }
}

pub fn sim() -> SimOptions {
    SimOptions {
        horizon_years: 18,
        timeline_irr: true,
    }
}

pub fn fees() -> FeeSchedule {
    FeeSchedule {
        performance_fee: PERFORMANCE_FEE,
        carry: CARRY,
    }
}

pub fn splits() -> CarrySplitTable {
    CarrySplitTable {
        perf_fee_shares: [(PodKind::Sourcing, 0.30)].into(),
        carry_shares: [(PodKind::Diligence, 0.25), (PodKind::Success, 0.30)].into(),
    }
}

pub fn spv() -> SpvConfig {
    SpvConfig {
        admin_cost: SPV_ADMIN_COST,
    }
}

pub fn template() -> DealTemplate {
    DealTemplate {
        sectors: vec!["biotech".into(), "fintech".into(), "climate".into(), "software".into()],
        round_size: Money(6_000_000),
        valuation_cap: Money(20_000_000),
    }
}

pub const BIOTECH_RULE: &str = "biotech-seed";

/// 100k–250k checks into biotech rounds of at least 5M at a cap of at most
/// 25M, three per quarter, with 40% of the stake held for follow-ons.
pub fn rules() -> Vec<AutomationRule> {
    vec![AutomationRule {
        id: BIOTECH_RULE.into(),
        owner: "lp1".into(),
        sectors: ["biotech".to_string()].into(),
        min_round_size: Money(5_000_000),
        max_valuation_cap: Money(25_000_000),
        check_min: Money(100_000),
        check_max: Money(250_000),
        max_per_quarter: 3,
        holding_period_pref: 7.0,
        followon_reserve_fraction: FOLLOWON_RESERVE,
        followon_criteria: FollowOnCriteria {
            min_paper_multiple: Some(2.0),
            ..Default::default()
        },
        created_at: 0,
        fill_fraction: 1.0,
    }]
}

pub fn stakes() -> BTreeMap<String, Money> {
    [(BIOTECH_RULE.to_string(), Money(1_000_000))].into()
}

pub fn sweep() -> SweepConfig {
    SweepConfig {
        normalized: true,
        m_min: 0.0,
        m_max: 4.0,
        m_step: 0.05,
        model: ModelTag::Expanded,
        clamp_carry: false,
        variants: vec![
            SweepVariant::baseline("baseline"),
            SweepVariant {
                id: "raise_fee".into(),
                overrides: ParamOverrides {
                    mgmt_fee: Some(2.0 * MGMT_FEE),
                    ..Default::default()
                },
            },
            SweepVariant {
                id: "raise_carry".into(),
                overrides: ParamOverrides {
                    carry: Some(CARRY + 0.05),
                    ..Default::default()
                },
            },
        ],
    }
}

pub fn match_eval() -> MatchEvalConfig {
    MatchEvalConfig {
        deals_per_year: 24,
        years: 4,
        sectors: template().sectors,
        round_size_range: [Money(1_000_000), Money(12_000_000)],
        valuation_cap_range: [Money(5_000_000), Money(40_000_000)],
        capacity: Money(500_000),
        deals: Vec::new(),
    }
}
