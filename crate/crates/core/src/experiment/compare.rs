//! Paired comparison of the standard fund and the distributed firm. Trial `i`
//! of both models backs the same companies, so per-trial differences come from
//! structure rather than sampling noise.

use serde::{Deserialize, Serialize};

use crate::distributed::sim::DistributedRun;
use crate::error::{Error, Result};
use crate::market::{OutcomeModel, SeedSpec};
use crate::money::Money;
use crate::standard::{quantile, FundRun};

/// Results of one model over trials `0..runs.len()`.
#[derive(Debug, Clone)]
pub struct TrialSet<T> {
    pub master_seed: u64,
    pub model: OutcomeModel,
    pub runs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub trial: u64,
    pub standard_lp_dpi: f64,
    pub distributed_lp_dpi: f64,
    pub standard_fees: Money,
    pub distributed_fees: Money,
    pub standard_carry: Money,
    pub distributed_carry: Money,
    pub standard_admin: Money,
    pub distributed_admin: Money,
    /// GP take (fees plus carry) and pod take respectively.
    pub standard_take: Money,
    pub distributed_take: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub trials: u64,
    pub mean_lp_dpi: f64,
    pub median_lp_dpi: f64,
    pub mean_fees: f64,
    pub mean_carry: f64,
    pub mean_admin: f64,
    pub mean_take: f64,
}

pub fn compare(
    standard: &TrialSet<FundRun>,
    distributed: &TrialSet<DistributedRun>,
) -> Result<(Vec<CompareRow>, Vec<ModelSummary>)> {
    if standard.master_seed != distributed.master_seed {
        return Err(Error::invalid(format!(
            "seed mismatch: standard {} vs distributed {}",
            standard.master_seed, distributed.master_seed
        )));
    }
    if standard.model != distributed.model {
        return Err(Error::invalid("outcome model mismatch between the two result sets"));
    }
    if standard.runs.len() != distributed.runs.len() {
        return Err(Error::invalid(format!(
            "trial count mismatch: {} vs {}",
            standard.runs.len(),
            distributed.runs.len()
        )));
    }
    let mut rows = Vec::with_capacity(standard.runs.len());
    for (i, (s, d)) in standard.runs.iter().zip(&distributed.runs).enumerate() {
        let i = i as u64;
        if s.seed != SeedSpec::new(standard.master_seed, i)
            || d.trial != i
            || d.master_seed != distributed.master_seed
        {
            return Err(Error::invalid(format!("trial {i} is not paired across models")));
        }
        let st = &s.final_state;
        let dpi = s.timeline.last().map_or(0.0, |p| p.dpi);
        rows.push(CompareRow {
            trial: i,
            standard_lp_dpi: dpi,
            distributed_lp_dpi: d.lp_net_dpi,
            standard_fees: st.fee_ledger,
            distributed_fees: d.performance_fees,
            standard_carry: st.carry_paid,
            distributed_carry: d.carry_paid,
            standard_admin: Money::ZERO,
            distributed_admin: d.admin_costs,
            standard_take: st.fee_ledger + st.carry_paid,
            distributed_take: d.pod_take,
        });
    }
    let summary = vec![
        summarize("standard", &rows, |r| {
            (r.standard_lp_dpi, r.standard_fees, r.standard_carry, r.standard_admin, r.standard_take)
        }),
        summarize("distributed", &rows, |r| {
            (
                r.distributed_lp_dpi,
                r.distributed_fees,
                r.distributed_carry,
                r.distributed_admin,
                r.distributed_take,
            )
        }),
    ];
    Ok((rows, summary))
}

fn summarize(
    name: &str,
    rows: &[CompareRow],
    pick: impl Fn(&CompareRow) -> (f64, Money, Money, Money, Money),
) -> ModelSummary {
    let n = rows.len().max(1) as f64;
    let mut dpis = Vec::with_capacity(rows.len());
    let (mut dpi, mut fees, mut carry, mut admin, mut take) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let (a, b, c, d, e) = pick(r);
        dpis.push(a);
        dpi += a;
        fees += b.as_f64();
        carry += c.as_f64();
        admin += d.as_f64();
        take += e.as_f64();
    }
    ModelSummary {
        model: name.to_string(),
        trials: rows.len() as u64,
        mean_lp_dpi: dpi / n,
        median_lp_dpi: quantile(&mut dpis, 0.5),
        mean_fees: fees / n,
        mean_carry: carry / n,
        mean_admin: admin / n,
        mean_take: take / n,
    }
}
