//! The distributed firm: members grouped into pods, a per-deal pipeline, one
//! SPV per funded deal, and a per-deal fee and carry waterfall.
//!
//! Every amount here is integer minor units. Splits use the largest-remainder
//! method with ties going to the lower pod kind, then the lower member id.

mod firm;
pub mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{largest_remainder, rate_to_ppb, Money, PPB};

pub use firm::{DistributedFirm, LedgerEntry, MemberSpec};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(pub String);

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MemberId {
    fn from(s: &str) -> Self {
        MemberId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodKind {
    Core,
    Sourcing,
    Diligence,
    Funding,
    Success,
}

impl PodKind {
    pub const ALL: [PodKind; 5] = [
        PodKind::Core,
        PodKind::Sourcing,
        PodKind::Diligence,
        PodKind::Funding,
        PodKind::Success,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PodKind::Core => "core",
            PodKind::Sourcing => "sourcing",
            PodKind::Diligence => "diligence",
            PodKind::Funding => "funding",
            PodKind::Success => "success",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pod {
    pub kind: PodKind,
    pub members: BTreeSet<MemberId>,
}

/// Exactly one pod of each kind; the core pod is never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pods {
    pods: BTreeMap<PodKind, Pod>,
}

impl Pods {
    pub fn new(pods: Vec<Pod>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for pod in pods {
            if map.insert(pod.kind, pod.clone()).is_some() {
                return Err(Error::invalid(format!("duplicate {} pod", pod.kind.as_str())));
            }
        }
        for kind in PodKind::ALL {
            map.entry(kind).or_insert_with(|| Pod {
                kind,
                members: BTreeSet::new(),
            });
        }
        if map[&PodKind::Core].members.is_empty() {
            return Err(Error::invalid("the core pod needs at least one member"));
        }
        Ok(Pods { pods: map })
    }

    pub fn get(&self, kind: PodKind) -> &Pod {
        &self.pods[&kind]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pod> {
        self.pods.values()
    }

    pub fn contains(&self, kind: PodKind, member: &MemberId) -> bool {
        self.pods[&kind].members.contains(member)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealState {
    Sourced,
    Memo,
    Funded,
    Portfolio,
    Exited,
    Rejected,
}

impl DealState {
    pub fn as_str(self) -> &'static str {
        match self {
            DealState::Sourced => "sourced",
            DealState::Memo => "memo",
            DealState::Funded => "funded",
            DealState::Portfolio => "portfolio",
            DealState::Exited => "exited",
            DealState::Rejected => "rejected",
        }
    }

    pub fn can_advance_to(self, target: DealState) -> bool {
        use DealState::*;
        matches!(
            (self, target),
            (Sourced, Memo)
                | (Memo, Funded)
                | (Funded, Portfolio)
                | (Portfolio, Exited)
                | (Sourced, Rejected)
                | (Memo, Rejected)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanyAttrs {
    pub sector: String,
    pub round_size: Money,
    pub valuation_cap: Money,
    #[serde(default)]
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionDelta {
    pub pod: PodKind,
    pub member: MemberId,
    pub weight: u64,
}

impl AttributionDelta {
    pub fn new(pod: PodKind, member: impl Into<MemberId>, weight: u64) -> Self {
        AttributionDelta {
            pod,
            member: member.into(),
            weight,
        }
    }
}

impl From<String> for MemberId {
    fn from(s: String) -> Self {
        MemberId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deal {
    pub id: String,
    pub company: CompanyAttrs,
    pub state: DealState,
    pub attribution: BTreeMap<(PodKind, MemberId), u64>,
    /// One entry per state reached, with strictly increasing times.
    pub timestamps: Vec<(DealState, f64)>,
    pub spv: Option<Spv>,
}

impl Deal {
    pub fn sourced(id: impl Into<String>, company: CompanyAttrs, time: f64) -> Self {
        Deal {
            id: id.into(),
            company,
            state: DealState::Sourced,
            attribution: BTreeMap::new(),
            timestamps: vec![(DealState::Sourced, time)],
            spv: None,
        }
    }

    /// Positive attribution weights for one pod, in ascending member order.
    pub fn pod_weights(&self, pod: PodKind) -> Vec<(MemberId, u64)> {
        self.attribution
            .iter()
            .filter(|((p, _), &w)| *p == pod && w > 0)
            .map(|((_, m), &w)| (m.clone(), w))
            .collect()
    }

    fn transition(&mut self, target: DealState, time: f64) -> Result<()> {
        if !self.state.can_advance_to(target) {
            return Err(Error::IllegalTransition {
                deal: self.id.clone(),
                from: self.state.as_str(),
                to: target.as_str(),
            });
        }
        let last = self.timestamps.last().map_or(f64::NEG_INFINITY, |t| t.1);
        if !(time > last) {
            return Err(Error::State(format!(
                "deal {}: transition time {time} must be after {last}",
                self.id
            )));
        }
        self.state = target;
        self.timestamps.push((target, time));
        Ok(())
    }

    fn add_attribution(&mut self, delta: &[AttributionDelta]) {
        for d in delta {
            *self
                .attribution
                .entry((d.pod, d.member.clone()))
                .or_insert(0) += d.weight;
        }
    }
}

/// Moves a deal forward and accumulates attribution weights.
///
/// Funding and exit carry money and go through [`form_spv`] and
/// [`exit_waterfall`] instead.
pub fn advance_deal(
    deal: &mut Deal,
    target: DealState,
    time: f64,
    attribution_delta: &[AttributionDelta],
) -> Result<()> {
    if !deal.state.can_advance_to(target) {
        return Err(Error::IllegalTransition {
            deal: deal.id.clone(),
            from: deal.state.as_str(),
            to: target.as_str(),
        });
    }
    match target {
        DealState::Funded => {
            return Err(Error::State(format!("deal {}: funding requires form_spv", deal.id)))
        }
        DealState::Exited => {
            return Err(Error::State(format!("deal {}: exiting requires exit_waterfall", deal.id)))
        }
        _ => {}
    }
    deal.transition(target, time)?;
    deal.add_attribution(attribution_delta);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSchedule {
    /// One-time fee on committed capital, charged at close.
    pub performance_fee: f64,
    pub carry: f64,
}

impl FeeSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("performance_fee", self.performance_fee), ("carry", self.carry)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Pod shares of the performance fee and of carry. The core pod is never
/// listed: it receives whatever the other pods do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrySplitTable {
    pub perf_fee_shares: BTreeMap<PodKind, f64>,
    pub carry_shares: BTreeMap<PodKind, f64>,
}

/// Shares in parts per billion with the core remainder filled in; each list
/// sums to exactly [`PPB`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSplits {
    pub perf_fee: Vec<(PodKind, i64)>,
    pub carry: Vec<(PodKind, i64)>,
}

fn resolve_shares(name: &str, shares: &BTreeMap<PodKind, f64>) -> Result<Vec<(PodKind, i64)>> {
    if shares.contains_key(&PodKind::Core) {
        return Err(Error::invalid(format!(
            "{name}: the core pod takes the remainder and cannot be listed"
        )));
    }
    let mut out = Vec::new();
    let mut listed: i64 = 0;
    for (&pod, &share) in shares {
        if !(share.is_finite() && share >= 0.0) {
            return Err(Error::invalid(format!("{name}: share for {} must be >= 0", pod.as_str())));
        }
        let ppb = rate_to_ppb(share);
        listed += ppb;
        out.push((pod, ppb));
    }
    if listed > PPB as i64 {
        return Err(Error::invalid(format!("{name}: shares exceed 1")));
    }
    out.insert(0, (PodKind::Core, PPB as i64 - listed));
    Ok(out)
}

impl CarrySplitTable {
    pub fn resolve(&self) -> Result<ResolvedSplits> {
        Ok(ResolvedSplits {
            perf_fee: resolve_shares("perf_fee_shares", &self.perf_fee_shares)?,
            carry: resolve_shares("carry_shares", &self.carry_shares)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spv {
    pub deal_id: String,
    pub investor_allocations: BTreeMap<MemberId, Money>,
    pub admin_cost: Money,
    pub performance_fee: Money,
    pub net_invested: Money,
    pub formed_at: f64,
}

impl Spv {
    pub fn committed(&self) -> Money {
        self.investor_allocations.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoutKind {
    PerformanceFee,
    Carry,
}

impl PayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayoutKind::PerformanceFee => "performance_fee",
            PayoutKind::Carry => "carry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodPayout {
    pub pod: PodKind,
    pub member: MemberId,
    pub kind: PayoutKind,
    pub amount: Money,
}

/// Splits `total` across pods by `shares`, then inside each pod by the deal's
/// attribution weights. A pod with no positive weights passes its share to the
/// core pod; the core pod splits by its own weights, or evenly across its
/// members when it has none.
pub fn split_to_pods(
    total: Money,
    shares: &[(PodKind, i64)],
    deal: &Deal,
    pods: &Pods,
    kind: PayoutKind,
) -> Vec<PodPayout> {
    if total.0 <= 0 {
        return Vec::new();
    }
    let weights: Vec<u128> = shares.iter().map(|&(_, s)| s.max(0) as u128).collect();
    let pod_amounts = largest_remainder(total, &weights).unwrap_or_else(|| {
        // Every share zero: the whole amount is core's.
        shares
            .iter()
            .map(|&(p, _)| if p == PodKind::Core { total } else { Money::ZERO })
            .collect()
    });

    let mut core_amount = Money::ZERO;
    let mut payouts = Vec::new();
    for (&(pod, _), &amount) in shares.iter().zip(&pod_amounts) {
        if pod == PodKind::Core {
            core_amount += amount;
            continue;
        }
        let members = deal.pod_weights(pod);
        if members.is_empty() {
            core_amount += amount;
            continue;
        }
        push_member_split(&mut payouts, pod, kind, amount, &members);
    }
    if core_amount.is_positive() || shares.iter().any(|&(p, _)| p == PodKind::Core) {
        let mut members = deal.pod_weights(PodKind::Core);
        if members.is_empty() {
            members = pods
                .get(PodKind::Core)
                .members
                .iter()
                .map(|m| (m.clone(), 1))
                .collect();
        }
        push_member_split(&mut payouts, PodKind::Core, kind, core_amount, &members);
    }
    payouts.retain(|p| p.amount.0 != 0);
    payouts.sort_by(|a, b| (a.pod, &a.member).cmp(&(b.pod, &b.member)));
    payouts
}

fn push_member_split(
    out: &mut Vec<PodPayout>,
    pod: PodKind,
    kind: PayoutKind,
    amount: Money,
    members: &[(MemberId, u64)],
) {
    let w: Vec<u128> = members.iter().map(|(_, w)| *w as u128).collect();
    let shares = largest_remainder(amount, &w).expect("non-empty positive weights");
    for ((m, _), s) in members.iter().zip(shares) {
        out.push(PodPayout {
            pod,
            member: m.clone(),
            kind,
            amount: s,
        });
    }
}

/// Closes a deal in the memo state into an SPV. The one-time performance fee
/// is charged on total commitments and split across pods.
pub fn form_spv(
    deal: &mut Deal,
    commitments: &BTreeMap<MemberId, Money>,
    schedule: &FeeSchedule,
    splits: &ResolvedSplits,
    pods: &Pods,
    admin_cost: Money,
    time: f64,
) -> Result<(Spv, Vec<PodPayout>)> {
    if !deal.state.can_advance_to(DealState::Funded) {
        return Err(Error::IllegalTransition {
            deal: deal.id.clone(),
            from: deal.state.as_str(),
            to: DealState::Funded.as_str(),
        });
    }
    schedule.validate()?;
    if commitments.is_empty() {
        return Err(Error::invalid(format!("deal {}: no commitments", deal.id)));
    }
    if let Some((m, a)) = commitments.iter().find(|(_, a)| !a.is_positive()) {
        return Err(Error::invalid(format!("deal {}: allocation {a} for {m} must be > 0", deal.id)));
    }
    if admin_cost.0 < 0 {
        return Err(Error::invalid("admin cost must be >= 0"));
    }
    let committed: Money = commitments.values().sum();
    let fee = committed.mul_rate(schedule.performance_fee);
    if committed <= fee + admin_cost {
        return Err(Error::Underfunded {
            committed,
            fee,
            admin: admin_cost,
        });
    }
    let spv = Spv {
        deal_id: deal.id.clone(),
        investor_allocations: commitments.clone(),
        admin_cost,
        performance_fee: fee,
        net_invested: committed - fee - admin_cost,
        formed_at: time,
    };
    deal.transition(DealState::Funded, time)?;
    let payouts = split_to_pods(fee, &splits.perf_fee, deal, pods, PayoutKind::PerformanceFee);
    deal.spv = Some(spv.clone());
    Ok((spv, payouts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitDistribution {
    pub investors: BTreeMap<MemberId, Money>,
    pub pod_ledger: Vec<PodPayout>,
    pub carry: Money,
    pub gross_proceeds: Money,
}

/// Distributes exit proceeds of one deal. Investors are made whole on what
/// they paid in before carry applies; carry is `carry × (proceeds − paid-in)`
/// when positive and goes to pods. Investors share everything else pro rata.
pub fn exit_waterfall(
    deal: &mut Deal,
    gross_proceeds: Money,
    schedule: &FeeSchedule,
    splits: &ResolvedSplits,
    pods: &Pods,
    time: f64,
) -> Result<ExitDistribution> {
    if gross_proceeds.0 < 0 {
        return Err(Error::invalid(format!("deal {}: negative proceeds", deal.id)));
    }
    if deal.state != DealState::Portfolio {
        return Err(Error::IllegalTransition {
            deal: deal.id.clone(),
            from: deal.state.as_str(),
            to: DealState::Exited.as_str(),
        });
    }
    schedule.validate()?;
    let spv = deal
        .spv
        .clone()
        .ok_or_else(|| Error::State(format!("deal {} has no SPV", deal.id)))?;
    let paid_in = spv.committed();
    let profit = (gross_proceeds - paid_in).max(Money::ZERO);
    let carry = profit.mul_rate(schedule.carry);
    let to_investors = gross_proceeds - carry;

    let ids: Vec<&MemberId> = spv.investor_allocations.keys().collect();
    let w: Vec<u128> = spv.investor_allocations.values().map(|a| a.0 as u128).collect();
    let shares = largest_remainder(to_investors, &w).expect("positive allocations");
    let investors = ids.into_iter().cloned().zip(shares).collect();

    deal.transition(DealState::Exited, time)?;
    let pod_ledger = split_to_pods(carry, &splits.carry, deal, pods, PayoutKind::Carry);
    Ok(ExitDistribution {
        investors,
        pod_ledger,
        carry,
        gross_proceeds,
    })
}
