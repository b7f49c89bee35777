use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    advance_deal, exit_waterfall, form_spv, AttributionDelta, CarrySplitTable, CompanyAttrs, Deal,
    DealState, ExitDistribution, FeeSchedule, MemberId, Pod, PodKind, PodPayout, Pods,
    ResolvedSplits, Spv,
};
use crate::error::{Error, Result};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub id: MemberId,
    #[serde(default)]
    pub pods: BTreeSet<PodKind>,
    #[serde(default)]
    pub capital: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: MemberId,
    pub pod_memberships: BTreeSet<PodKind>,
    pub capital_account: Money,
    /// Accumulated weights per deal and pod.
    pub attribution_log: BTreeMap<String, BTreeMap<PodKind, u64>>,
}

/// One row of the firm ledger. Amounts are non-negative; `flow_type` gives
/// the direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub deal_id: String,
    pub state: DealState,
    pub member: String,
    pub role: String,
    pub flow_type: String,
    pub amount: Money,
    pub time: f64,
}

/// Members, pods and deals of one firm. Every operation touches a single
/// deal, so deals never net against each other.
#[derive(Debug, Clone)]
pub struct DistributedFirm {
    members: BTreeMap<MemberId, Member>,
    pods: Pods,
    fees: FeeSchedule,
    splits: ResolvedSplits,
    admin_cost: Money,
    deals: BTreeMap<String, Deal>,
    ledger: Vec<LedgerEntry>,
}

impl DistributedFirm {
    pub fn new(
        members: Vec<MemberSpec>,
        fees: FeeSchedule,
        splits: &CarrySplitTable,
        admin_cost: Money,
    ) -> Result<Self> {
        fees.validate()?;
        if admin_cost.0 < 0 {
            return Err(Error::invalid("admin cost must be >= 0"));
        }
        let mut by_id = BTreeMap::new();
        let mut pod_members: BTreeMap<PodKind, BTreeSet<MemberId>> = BTreeMap::new();
        for spec in members {
            if spec.capital.0 < 0 {
                return Err(Error::invalid(format!("member {}: negative capital", spec.id)));
            }
            for &p in &spec.pods {
                pod_members.entry(p).or_default().insert(spec.id.clone());
            }
            let m = Member {
                id: spec.id.clone(),
                pod_memberships: spec.pods,
                capital_account: spec.capital,
                attribution_log: BTreeMap::new(),
            };
            if by_id.insert(spec.id.clone(), m).is_some() {
                return Err(Error::invalid(format!("duplicate member id {}", spec.id)));
            }
        }
        let pods = Pods::new(
            pod_members
                .into_iter()
                .map(|(kind, members)| Pod { kind, members })
                .collect(),
        )?;
        Ok(DistributedFirm {
            members: by_id,
            pods,
            fees,
            splits: splits.resolve()?,
            admin_cost,
            deals: BTreeMap::new(),
            ledger: Vec::new(),
        })
    }

    pub fn members(&self) -> &BTreeMap<MemberId, Member> {
        &self.members
    }

    pub fn pods(&self) -> &Pods {
        &self.pods
    }

    pub fn deals(&self) -> &BTreeMap<String, Deal> {
        &self.deals
    }

    pub fn deal(&self, id: &str) -> Option<&Deal> {
        self.deals.get(id)
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn admin_cost(&self) -> Money {
        self.admin_cost
    }

    pub fn source_deal(
        &mut self,
        id: &str,
        company: CompanyAttrs,
        time: f64,
        attribution: &[AttributionDelta],
    ) -> Result<()> {
        if self.deals.contains_key(id) {
            return Err(Error::invalid(format!("deal {id} already exists")));
        }
        self.check_attribution(attribution)?;
        let mut deal = Deal::sourced(id, company, time);
        deal.add_attribution(attribution);
        self.log_attribution(id, attribution);
        self.deals.insert(id.to_string(), deal);
        Ok(())
    }

    pub fn advance(
        &mut self,
        id: &str,
        target: DealState,
        time: f64,
        attribution: &[AttributionDelta],
    ) -> Result<()> {
        self.check_attribution(attribution)?;
        let deal = self.deal_mut(id)?;
        advance_deal(deal, target, time, attribution)?;
        self.log_attribution(id, attribution);
        Ok(())
    }

    /// Forms the deal's SPV, debiting investors and paying the performance
    /// fee out to pod members.
    pub fn fund(
        &mut self,
        id: &str,
        commitments: &BTreeMap<MemberId, Money>,
        time: f64,
    ) -> Result<Spv> {
        for (m, &a) in commitments {
            let member = self
                .members
                .get(m)
                .ok_or_else(|| Error::invalid(format!("unknown member {m}")))?;
            if member.capital_account < a {
                return Err(Error::invalid(format!(
                    "member {m} has {} available, commits {a}",
                    member.capital_account
                )));
            }
        }
        let (fees, admin) = (self.fees, self.admin_cost);
        let deal = self
            .deals
            .get_mut(id)
            .ok_or_else(|| Error::invalid(format!("unknown deal {id}")))?;
        let (spv, payouts) = form_spv(deal, commitments, &fees, &self.splits, &self.pods, admin, time)?;

        for (m, &a) in commitments {
            self.members.get_mut(m).expect("checked").capital_account -= a;
            self.push(id, DealState::Funded, m.0.clone(), "investor", "commitment", a, time);
        }
        self.push(id, DealState::Funded, String::new(), "admin", "admin_cost", admin, time);
        self.pay_pods(id, DealState::Funded, &payouts, time);
        Ok(spv)
    }

    pub fn exit(&mut self, id: &str, gross_proceeds: Money, time: f64) -> Result<ExitDistribution> {
        let fees = self.fees;
        let deal = self
            .deals
            .get_mut(id)
            .ok_or_else(|| Error::invalid(format!("unknown deal {id}")))?;
        let out = exit_waterfall(deal, gross_proceeds, &fees, &self.splits, &self.pods, time)?;
        for (m, &a) in &out.investors {
            if let Some(member) = self.members.get_mut(m) {
                member.capital_account += a;
            }
            self.push(id, DealState::Exited, m.0.clone(), "investor", "distribution", a, time);
        }
        self.pay_pods(id, DealState::Exited, &out.pod_ledger, time);
        Ok(out)
    }

    /// Writes the ledger as CSV.
    pub fn write_ledger_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::State(format!("ledger csv: {e}"));
        w.write_record(["deal_id", "state", "member", "role", "flow_type", "amount", "time"])
            .map_err(io)?;
        for e in &self.ledger {
            w.write_record([
                e.deal_id.as_str(),
                e.state.as_str(),
                &e.member,
                &e.role,
                &e.flow_type,
                &e.amount.0.to_string(),
                &e.time.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::State(format!("ledger csv: {e}")))?;
        Ok(())
    }

    fn deal_mut(&mut self, id: &str) -> Result<&mut Deal> {
        self.deals
            .get_mut(id)
            .ok_or_else(|| Error::invalid(format!("unknown deal {id}")))
    }

    fn check_attribution(&self, delta: &[AttributionDelta]) -> Result<()> {
        for d in delta {
            if !self.pods.contains(d.pod, &d.member) {
                return Err(Error::invalid(format!(
                    "member {} is not in the {} pod",
                    d.member,
                    d.pod.as_str()
                )));
            }
        }
        Ok(())
    }

    fn log_attribution(&mut self, deal: &str, delta: &[AttributionDelta]) {
        for d in delta {
            if let Some(m) = self.members.get_mut(&d.member) {
                *m.attribution_log
                    .entry(deal.to_string())
                    .or_default()
                    .entry(d.pod)
                    .or_insert(0) += d.weight;
            }
        }
    }

    fn pay_pods(&mut self, deal: &str, state: DealState, payouts: &[PodPayout], time: f64) {
        for p in payouts {
            if let Some(m) = self.members.get_mut(&p.member) {
                m.capital_account += p.amount;
            }
            self.push(
                deal,
                state,
                p.member.0.clone(),
                p.pod.as_str(),
                p.kind.as_str(),
                p.amount,
                time,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        deal: &str,
        state: DealState,
        member: String,
        role: &str,
        flow: &str,
        amount: Money,
        time: f64,
    ) {
        self.ledger.push(LedgerEntry {
            deal_id: deal.to_string(),
            state,
            member,
            role: role.to_string(),
            flow_type: flow.to_string(),
            amount,
            time,
        });
    }
}
