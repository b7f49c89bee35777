//! LP funding automations. A rule states which deals an LP backs and how
//! large a check it writes; the engine matches rules to incoming deals,
//! enforces per-quarter limits, splits oversubscribed rounds, and holds back
//! a follow-on reserve per rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::distributed::{CompanyAttrs, MemberId};
use crate::error::{Error, Result};
use crate::money::{largest_remainder, Money};

/// Conditions for releasing a rule's follow-on reserve into a company. All
/// present clauses must hold; an empty set of clauses always holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowOnCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_paper_multiple: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_years_held: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sectors: Option<BTreeSet<String>>,
}

/// What the follow-on criteria see about a portfolio company.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanySnapshot {
    pub sector: String,
    pub paper_multiple: f64,
    pub years_held: f64,
}

impl FollowOnCriteria {
    pub fn holds(&self, c: &CompanySnapshot) -> bool {
        self.min_paper_multiple.is_none_or(|m| c.paper_multiple >= m)
            && self.min_years_held.is_none_or(|y| c.years_held >= y)
            && self.sectors.as_ref().is_none_or(|s| s.contains(&c.sector))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomationRule {
    pub id: String,
    pub owner: MemberId,
    pub sectors: BTreeSet<String>,
    pub min_round_size: Money,
    pub max_valuation_cap: Money,
    pub check_min: Money,
    pub check_max: Money,
    pub max_per_quarter: u32,
    /// Desired holding period in years. Reported, never used for matching.
    #[serde(default)]
    pub holding_period_pref: f64,
    #[serde(default)]
    pub followon_reserve_fraction: f64,
    #[serde(default)]
    pub followon_criteria: FollowOnCriteria,
    pub created_at: u64,
    /// Share of available capital offered per deal before clamping.
    #[serde(default = "one")]
    pub fill_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl AutomationRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("rule {}: {m}", self.id)));
        if self.check_min.0 < 0 || self.check_min > self.check_max {
            return bad(format!("need 0 <= check_min {} <= check_max {}", self.check_min, self.check_max));
        }
        if self.max_per_quarter < 1 {
            return bad("max_per_quarter must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.followon_reserve_fraction) {
            return bad("followon_reserve_fraction must be in [0, 1]".into());
        }
        if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
            return bad("fill_fraction must be in (0, 1]".into());
        }
        if !(self.holding_period_pref.is_finite() && self.holding_period_pref >= 0.0) {
            return bad("holding_period_pref must be >= 0".into());
        }
        Ok(())
    }
}

/// A deal offered to the automations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealOffer {
    pub id: String,
    pub company: CompanyAttrs,
    /// Simulation time in years.
    pub time: f64,
}

/// Calendar quarter index of a time in years.
pub fn quarter_of(time: f64) -> i64 {
    (time * 4.0).floor() as i64
}

/// Executed matches per (rule, quarter).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuarterLedger {
    counts: BTreeMap<(String, i64), u32>,
}

impl QuarterLedger {
    pub fn count(&self, rule_id: &str, quarter: i64) -> u32 {
        self.counts
            .get(&(rule_id.to_string(), quarter))
            .copied()
            .unwrap_or(0)
    }

    /// Records one executed match; refuses to go past `limit`.
    pub fn record(&mut self, rule_id: &str, quarter: i64, limit: u32) -> Result<()> {
        let c = self.counts.entry((rule_id.to_string(), quarter)).or_insert(0);
        if *c >= limit {
            return Err(Error::State(format!(
                "rule {rule_id} already has {limit} matches in quarter {quarter}"
            )));
        }
        *c += 1;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, i64), &u32)> {
        self.counts.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Match,
    NoMatch,
}

/// Reason codes, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchReason {
    Ok,
    Sector,
    RoundSize,
    ValuationCap,
    RateLimit,
    CheckFloor,
    Funds,
}

impl MatchReason {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchReason::Ok => "ok",
            MatchReason::Sector => "sector",
            MatchReason::RoundSize => "round_size",
            MatchReason::ValuationCap => "valuation_cap",
            MatchReason::RateLimit => "rate_limit",
            MatchReason::CheckFloor => "check_floor",
            MatchReason::Funds => "funds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub decision: Decision,
    pub reason: MatchReason,
    pub proposed_check: Option<Money>,
}

impl MatchResult {
    fn no(reason: MatchReason) -> Self {
        MatchResult {
            decision: Decision::NoMatch,
            reason,
            proposed_check: None,
        }
    }
}

/// Check a rule would write from `available` capital, before the funds test.
pub fn proposed_check(rule: &AutomationRule, available: Money) -> Money {
    available
        .mul_rate(rule.fill_fraction)
        .max(rule.check_min)
        .min(rule.check_max)
}

/// Evaluates a rule against a deal. Clauses are tested in a fixed order and
/// the first failure is the reason.
pub fn match_deal(
    rule: &AutomationRule,
    deal: &DealOffer,
    ledger: &QuarterLedger,
    available: Money,
) -> MatchResult {
    let c = &deal.company;
    if !rule.sectors.contains(&c.sector) {
        return MatchResult::no(MatchReason::Sector);
    }
    if c.round_size < rule.min_round_size {
        return MatchResult::no(MatchReason::RoundSize);
    }
    if c.valuation_cap > rule.max_valuation_cap {
        return MatchResult::no(MatchReason::ValuationCap);
    }
    if ledger.count(&rule.id, quarter_of(deal.time)) >= rule.max_per_quarter {
        return MatchResult::no(MatchReason::RateLimit);
    }
    if available < rule.check_min {
        return MatchResult::no(MatchReason::CheckFloor);
    }
    let check = proposed_check(rule, available);
    if !check.is_positive() || check > available {
        return MatchResult::no(MatchReason::Funds);
    }
    MatchResult {
        decision: Decision::Match,
        reason: MatchReason::Ok,
        proposed_check: Some(check),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub rule_id: String,
    pub created_at: u64,
    pub check: Money,
    pub check_min: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub rule_id: String,
    pub amount: Money,
}

/// Fits matched checks into a round of size `capacity`.
///
/// If the checks fit they all fill. Otherwise each is scaled pro rata; while
/// some scaled check falls below its floor, the youngest such rule (highest
/// `created_at`, then highest id) is dropped and the rest re-scaled. The
/// floor test uses the exact ratio; amounts are then rounded by largest
/// remainder. Output is ordered by (`created_at`, `rule_id`) and does not
/// depend on input order.
pub fn allocate_round(capacity: Money, bids: &[Bid]) -> Vec<Fill> {
    let mut active: Vec<&Bid> = bids.iter().filter(|b| b.check.is_positive()).collect();
    active.sort_by(|a, b| (a.created_at, &a.rule_id).cmp(&(b.created_at, &b.rule_id)));
    if !capacity.is_positive() {
        return Vec::new();
    }
    loop {
        if active.is_empty() {
            return Vec::new();
        }
        let total: i128 = active.iter().map(|b| b.check.0 as i128).sum();
        if total <= capacity.0 as i128 {
            return active
                .iter()
                .map(|b| Fill {
                    rule_id: b.rule_id.clone(),
                    amount: b.check,
                })
                .collect();
        }
        // capacity·check/total < floor  <=>  capacity·check < floor·total
        let violator = active
            .iter()
            .rposition(|b| (capacity.0 as i128) * (b.check.0 as i128) < (b.check_min.0 as i128) * total);
        match violator {
            Some(i) => {
                active.remove(i);
            }
            None => {
                let w: Vec<u128> = active.iter().map(|b| b.check.0 as u128).collect();
                let amounts = largest_remainder(capacity, &w).expect("positive checks");
                return active
                    .iter()
                    .zip(amounts)
                    .map(|(b, amount)| Fill {
                        rule_id: b.rule_id.clone(),
                        amount,
                    })
                    .collect();
            }
        }
    }
}

/// Capital a rule holds back for follow-ons.
pub fn reserve_followon(rule: &AutomationRule, staked: Money) -> Money {
    staked.mul_rate(rule.followon_reserve_fraction)
}

/// Capital behind one rule. `reserved + available + deployed == staked`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAccount {
    pub staked: Money,
    pub reserved: Money,
    pub available: Money,
    pub deployed: Money,
}

impl RuleAccount {
    pub fn new(rule: &AutomationRule, staked: Money) -> Result<Self> {
        if staked.0 < 0 {
            return Err(Error::invalid(format!("rule {}: negative stake", rule.id)));
        }
        let reserved = reserve_followon(rule, staked);
        Ok(RuleAccount {
            staked,
            reserved,
            available: staked - reserved,
            deployed: Money::ZERO,
        })
    }

    pub fn is_balanced(&self) -> bool {
        self.reserved + self.available + self.deployed == self.staked
    }

    fn deploy(&mut self, amount: Money) -> Result<()> {
        if amount > self.available || amount.0 < 0 {
            return Err(Error::State(format!(
                "cannot deploy {amount} from {} available",
                self.available
            )));
        }
        self.available -= amount;
        self.deployed += amount;
        Ok(())
    }

    fn release_reserve(&mut self, amount: Money) {
        let amount = amount.min(self.reserved);
        self.reserved -= amount;
        self.deployed += amount;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTrace {
    pub rule_id: String,
    pub deal_id: String,
    pub quarter: i64,
    pub decision: Decision,
    pub reason: MatchReason,
    pub check: Option<Money>,
    /// Amount actually allocated after the round split.
    pub filled: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub rule_id: String,
    pub deal_id: String,
    pub sector: String,
    pub funded_at: f64,
    pub amount: Money,
    pub holding_period_pref: f64,
    pub followed_on: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowOnCheck {
    pub rule_id: String,
    pub deal_id: String,
    pub amount: Money,
}

/// Matching state across a scenario: rules in (`created_at`, id) order, one
/// capital account per rule, the quarter ledger, and a trace of every
/// evaluation.
#[derive(Debug, Clone)]
pub struct AutomationEngine {
    rules: Vec<AutomationRule>,
    accounts: BTreeMap<String, RuleAccount>,
    ledger: QuarterLedger,
    traces: Vec<MatchTrace>,
    holdings: Vec<Holding>,
}

impl AutomationEngine {
    /// `stakes` maps rule id to the capital its owner puts behind it.
    pub fn new(mut rules: Vec<AutomationRule>, stakes: &BTreeMap<String, Money>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut accounts = BTreeMap::new();
        for r in &rules {
            r.validate()?;
            if !ids.insert(r.id.clone()) {
                return Err(Error::invalid(format!("duplicate rule id {}", r.id)));
            }
            let stake = *stakes
                .get(&r.id)
                .ok_or_else(|| Error::invalid(format!("rule {} has no stake", r.id)))?;
            accounts.insert(r.id.clone(), RuleAccount::new(r, stake)?);
        }
        if let Some(extra) = stakes.keys().find(|k| !ids.contains(*k)) {
            return Err(Error::invalid(format!("stake for unknown rule {extra}")));
        }
        rules.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(AutomationEngine {
            rules,
            accounts,
            ledger: QuarterLedger::default(),
            traces: Vec::new(),
            holdings: Vec::new(),
        })
    }

    pub fn rules(&self) -> &[AutomationRule] {
        &self.rules
    }

    pub fn account(&self, rule_id: &str) -> Option<&RuleAccount> {
        self.accounts.get(rule_id)
    }

    pub fn accounts(&self) -> &BTreeMap<String, RuleAccount> {
        &self.accounts
    }

    pub fn ledger(&self) -> &QuarterLedger {
        &self.ledger
    }

    pub fn traces(&self) -> &[MatchTrace] {
        &self.traces
    }

    pub fn holdings(&self) -> &[Holding] {
        &self.holdings
    }

    /// Offers a deal with room for `capacity`; returns the fills.
    pub fn offer(&mut self, deal: &DealOffer, capacity: Money) -> Result<Vec<Fill>> {
        let quarter = quarter_of(deal.time);
        let first_trace = self.traces.len();
        let mut bids = Vec::new();
        for rule in &self.rules {
            let available = self.accounts[&rule.id].available;
            let r = match_deal(rule, deal, &self.ledger, available);
            if let Some(check) = r.proposed_check {
                bids.push(Bid {
                    rule_id: rule.id.clone(),
                    created_at: rule.created_at,
                    check,
                    check_min: rule.check_min,
                });
            }
            self.traces.push(MatchTrace {
                rule_id: rule.id.clone(),
                deal_id: deal.id.clone(),
                quarter,
                decision: r.decision,
                reason: r.reason,
                check: r.proposed_check,
                filled: Money::ZERO,
            });
        }
        let fills = allocate_round(capacity, &bids);
        for fill in &fills {
            let rule = self.rules.iter().find(|r| r.id == fill.rule_id).expect("bid rule");
            self.ledger.record(&rule.id, quarter, rule.max_per_quarter)?;
            self.accounts
                .get_mut(&rule.id)
                .expect("account")
                .deploy(fill.amount)?;
            if let Some(t) = self.traces[first_trace..]
                .iter_mut()
                .find(|t| t.rule_id == fill.rule_id)
            {
                t.filled = fill.amount;
            }
            self.holdings.push(Holding {
                rule_id: rule.id.clone(),
                deal_id: deal.id.clone(),
                sector: deal.company.sector.clone(),
                funded_at: deal.time,
                amount: fill.amount,
                holding_period_pref: rule.holding_period_pref,
                followed_on: Money::ZERO,
            });
        }
        Ok(fills)
    }

    /// Undoes the fills of a deal that did not close: capital goes back to
    /// the rules and the matches stop counting toward quarter limits.
    pub fn cancel(&mut self, deal: &DealOffer) {
        let quarter = quarter_of(deal.time);
        let (gone, kept): (Vec<Holding>, Vec<Holding>) = std::mem::take(&mut self.holdings)
            .into_iter()
            .partition(|h| h.deal_id == deal.id && h.funded_at == deal.time);
        self.holdings = kept;
        for h in gone {
            let acct = self.accounts.get_mut(&h.rule_id).expect("account");
            acct.deployed -= h.amount;
            acct.available += h.amount;
            if let Some(c) = self.ledger.counts.get_mut(&(h.rule_id.clone(), quarter)) {
                *c = c.saturating_sub(1);
            }
            if let Some(t) = self
                .traces
                .iter_mut()
                .rev()
                .find(|t| t.rule_id == h.rule_id && t.deal_id == deal.id)
            {
                t.filled = Money::ZERO;
            }
        }
    }

    /// Releases follow-on checks into `deal_id` for every rule that funded it,
    /// has not followed on yet, and whose criteria now hold. Each check is the
    /// smaller of the remaining reserve and the rule's `check_max`.
    pub fn follow_on(&mut self, deal_id: &str, paper_multiple: f64, time: f64) -> Vec<FollowOnCheck> {
        let mut out = Vec::new();
        for h in self.holdings.iter_mut().filter(|h| h.deal_id == deal_id) {
            if h.followed_on.is_positive() {
                continue;
            }
            let rule = self.rules.iter().find(|r| r.id == h.rule_id).expect("holding rule");
            let snap = CompanySnapshot {
                sector: h.sector.clone(),
                paper_multiple,
                years_held: time - h.funded_at,
            };
            if !rule.followon_criteria.holds(&snap) {
                continue;
            }
            let acct = self.accounts.get_mut(&rule.id).expect("account");
            let amount = acct.reserved.min(rule.check_max);
            if !amount.is_positive() {
                continue;
            }
            acct.release_reserve(amount);
            h.followed_on = amount;
            out.push(FollowOnCheck {
                rule_id: rule.id.clone(),
                deal_id: deal_id.to_string(),
                amount,
            });
        }
        out
    }

    /// Returns unused reserves to available capital at the end of a scenario.
    pub fn finish(&mut self) {
        for acct in self.accounts.values_mut() {
            acct.available += acct.reserved;
            acct.reserved = Money::ZERO;
        }
    }

    pub fn write_traces_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| Error::State(format!("trace csv: {e}"));
        w.write_record(["rule_id", "deal_id", "quarter", "decision", "reason", "check", "filled"])
            .map_err(e)?;
        for t in &self.traces {
            w.write_record([
                t.rule_id.clone(),
                t.deal_id.clone(),
                t.quarter.to_string(),
                match t.decision {
                    Decision::Match => "match".into(),
                    Decision::NoMatch => "no_match".into(),
                },
                t.reason.as_str().into(),
                t.check.map(|c| c.0.to_string()).unwrap_or_default(),
                t.filled.0.to_string(),
            ])
            .map_err(e)?;
        }
        w.flush().map_err(|e| Error::State(format!("trace csv: {e}")))?;
        Ok(())
    }
}
