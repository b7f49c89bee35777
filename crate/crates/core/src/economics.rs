//! GP utility model for a single "2-20" style fund.
//!
//! Two formulations are provided. The simple one measures carry against the
//! capital left after fees (`I = f·(1 − p·l)`); the expanded polynomial measures
//! profit against the full paid-in amount `f`. They disagree by `c·f·p·l` at
//! zero GP commit, and [`model_discrepancy`] reports that gap rather than
//! hiding it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one fund. Rates are fractions, not percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFundParams", into = "RawFundParams")]
pub struct FundParams {
    fund_size: f64,
    lifespan_years: u32,
    mgmt_fee: f64,
    gp_commit: f64,
    carry: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFundParams {
    fund_size: f64,
    lifespan_years: u32,
    mgmt_fee: f64,
    gp_commit: f64,
    carry: f64,
}

impl TryFrom<RawFundParams> for FundParams {
    type Error = Error;
    fn try_from(r: RawFundParams) -> Result<Self> {
        FundParams::new(r.fund_size, r.lifespan_years, r.mgmt_fee, r.gp_commit, r.carry)
    }
}

impl From<FundParams> for RawFundParams {
    fn from(p: FundParams) -> Self {
        RawFundParams {
            fund_size: p.fund_size,
            lifespan_years: p.lifespan_years,
            mgmt_fee: p.mgmt_fee,
            gp_commit: p.gp_commit,
            carry: p.carry,
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
    }
    Ok(())
}

impl FundParams {
    pub fn new(
        fund_size: f64,
        lifespan_years: u32,
        mgmt_fee: f64,
        gp_commit: f64,
        carry: f64,
    ) -> Result<Self> {
        if !(fund_size.is_finite() && fund_size > 0.0) {
            return Err(Error::invalid(format!("fund_size must be > 0, got {fund_size}")));
        }
        if lifespan_years == 0 {
            return Err(Error::invalid("lifespan_years must be > 0"));
        }
        check_rate("mgmt_fee", mgmt_fee)?;
        check_rate("gp_commit", gp_commit)?;
        check_rate("carry", carry)?;
        if mgmt_fee * lifespan_years as f64 > 1.0 {
            return Err(Error::invalid(format!(
                "fees exceed the fund: mgmt_fee·lifespan = {}",
                mgmt_fee * lifespan_years as f64
            )));
        }
        Ok(FundParams {
            fund_size,
            lifespan_years,
            mgmt_fee,
            gp_commit,
            carry,
        })
    }

    pub fn fund_size(&self) -> f64 {
        self.fund_size
    }
    pub fn lifespan_years(&self) -> u32 {
        self.lifespan_years
    }
    pub fn mgmt_fee(&self) -> f64 {
        self.mgmt_fee
    }
    pub fn gp_commit(&self) -> f64 {
        self.gp_commit
    }
    pub fn carry(&self) -> f64 {
        self.carry
    }

    /// Capital left for investment after all management fees, `f·(1 − p·l)`.
    pub fn net_invested(&self) -> f64 {
        self.fund_size * (1.0 - self.mgmt_fee * self.lifespan_years as f64)
    }

    /// Applies overrides, re-validating the result.
    pub fn with_overrides(&self, o: &ParamOverrides) -> Result<Self> {
        FundParams::new(
            o.fund_size.unwrap_or(self.fund_size),
            o.lifespan_years.unwrap_or(self.lifespan_years),
            o.mgmt_fee.unwrap_or(self.mgmt_fee),
            o.gp_commit.unwrap_or(self.gp_commit),
            o.carry.unwrap_or(self.carry),
        )
    }
}

/// Expected DPI multiple, `m ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Multiple(f64);

impl Multiple {
    pub fn new(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::invalid(format!("multiple must be finite and >= 0, got {m}")));
        }
        Ok(Multiple(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Multiple {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Multiple::new(v)
    }
}

impl From<Multiple> for f64 {
    fn from(m: Multiple) -> f64 {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Simple,
    Expanded,
    /// Taken from a simulated fund ledger rather than a closed form.
    Realized,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Simple => "simple",
            ModelTag::Expanded => "expanded",
            ModelTag::Realized => "realized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub fee_utility: f64,
    pub carry_utility: f64,
    pub commit_pnl: f64,
    pub total: f64,
    pub model_tag: ModelTag,
}

impl UtilityBreakdown {
    pub(crate) fn from_parts(fee: f64, carry: f64, commit: f64, model_tag: ModelTag) -> Self {
        UtilityBreakdown {
            fee_utility: fee,
            carry_utility: carry,
            commit_pnl: commit,
            total: fee + carry + commit,
            model_tag,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityOptions {
    /// Floor carry at zero. Off by default: the polynomial is evaluated as is.
    #[serde(default)]
    pub clamp_carry: bool,
}

/// Total management fees over the fund's life, `f·p·l`.
pub fn management_fee_utility(params: &FundParams) -> f64 {
    params.fund_size * params.mgmt_fee * params.lifespan_years as f64
}

/// Carry in the simple model: `((f − fees)·m − (f − fees))·c`.
pub fn carry_utility_simple(params: &FundParams, m: Multiple) -> f64 {
    let invested = params.fund_size - management_fee_utility(params);
    (invested * m.0 - invested) * params.carry
}

pub fn gp_utility_simple(params: &FundParams, m: Multiple) -> UtilityBreakdown {
    UtilityBreakdown::from_parts(
        management_fee_utility(params),
        carry_utility_simple(params, m),
        0.0,
        ModelTag::Simple,
    )
}

/// The expanded utility polynomial evaluated term by term, without grouping.
pub fn expanded_polynomial(params: &FundParams, m: Multiple) -> f64 {
    let FundParams {
        fund_size: f,
        mgmt_fee: p,
        gp_commit: g,
        carry: c,
        ..
    } = *params;
    let l = params.lifespan_years as f64;
    let m = m.0;
    f * (m * g - m * g * p * l + p * l - g + m * c - m * c * g - m * p * l * c
        + m * p * l * c * g
        - c
        + c * g)
}

pub fn gp_utility_expanded(params: &FundParams, m: Multiple) -> UtilityBreakdown {
    gp_utility_expanded_with(params, m, UtilityOptions::default())
}

/// Expanded model split into fee, GP-commit profit and carry:
/// `fee = f·p·l`, `commit = g·(I·m − f)`, `carry = c·(1 − g)·(I·m − f)`.
pub fn gp_utility_expanded_with(
    params: &FundParams,
    m: Multiple,
    opts: UtilityOptions,
) -> UtilityBreakdown {
    let fee = management_fee_utility(params);
    let profit = params.net_invested() * m.0 - params.fund_size;
    let commit = params.gp_commit * profit;
    let mut carry = params.carry * (1.0 - params.gp_commit) * profit;
    if opts.clamp_carry {
        carry = carry.max(0.0);
    }
    UtilityBreakdown::from_parts(fee, carry, commit, ModelTag::Expanded)
}

/// Simple-model total minus expanded-model total.
pub fn model_discrepancy(params: &FundParams, m: Multiple) -> f64 {
    gp_utility_simple(params, m).total - gp_utility_expanded(params, m).total
}

/// Multiple below which raising the management fee raises expanded utility:
/// `1 / (g + c·(1 − g))`. `None` when both commit and carry are zero.
pub fn fee_incentive_threshold(params: &FundParams) -> Option<f64> {
    let k = params.gp_commit + params.carry * (1.0 - params.gp_commit);
    (k > 0.0).then(|| 1.0 / k)
}

/// Partial overrides of [`FundParams`] defining one sweep variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fund_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifespan_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgmt_fee: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_commit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carry: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepVariant {
    pub id: String,
    #[serde(flatten)]
    pub overrides: ParamOverrides,
}

impl SweepVariant {
    pub fn baseline(id: impl Into<String>) -> Self {
        SweepVariant {
            id: id.into(),
            overrides: ParamOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant_id: String,
    pub m: f64,
    pub total: f64,
    pub fee_utility: f64,
    pub carry_utility: f64,
    pub commit_pnl: f64,
    pub model_tag: ModelTag,
}

/// Evaluates every variant at every grid multiple. Rows are ordered by variant
/// (input order) then by ascending `m`.
pub fn utility_sweep(
    params: &FundParams,
    variants: &[SweepVariant],
    m_grid: &[Multiple],
    model: ModelTag,
    opts: UtilityOptions,
) -> Result<Vec<SweepRow>> {
    if m_grid.is_empty() {
        return Err(Error::invalid("utility sweep needs a non-empty multiple grid"));
    }
    if variants.is_empty() {
        return Err(Error::invalid("utility sweep needs at least one variant"));
    }
    let mut grid = m_grid.to_vec();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::with_capacity(variants.len() * grid.len());
    for v in variants {
        let vp = params
            .with_overrides(&v.overrides)
            .map_err(|e| Error::invalid(format!("variant {}: {e}", v.id)))?;
        for &m in &grid {
            let b = match model {
                ModelTag::Simple => gp_utility_simple(&vp, m),
                ModelTag::Expanded => gp_utility_expanded_with(&vp, m, opts),
                ModelTag::Realized => {
                    return Err(Error::invalid("sweeps evaluate the simple or expanded model"))
                }
            };
            rows.push(SweepRow {
                variant_id: v.id.clone(),
                m: m.0,
                total: b.total,
                fee_utility: b.fee_utility,
                carry_utility: b.carry_utility,
                commit_pnl: b.commit_pnl,
                model_tag: b.model_tag,
            });
        }
    }
    Ok(rows)
}
