//! Run configuration: one TOML file, every section optional. A file is
//! merged key by key over the shipped defaults, so partial sections work.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::defaults as d;
use crate::automation::{AutomationRule, DealOffer};
use crate::distributed::sim::DealTemplate;
use crate::distributed::{
    AttributionDelta, CarrySplitTable, CompanyAttrs, DealState, FeeSchedule, MemberId, MemberSpec,
};
use crate::economics::{FundParams, ModelTag, SweepVariant};
use crate::error::{Error, Result};
use crate::market::OutcomeModel;
use crate::money::Money;
use crate::standard::{DeploymentSchedule, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    UtilitySweep,
    StandardSim,
    DistributedSim,
    Compare,
    MatchEval,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::UtilitySweep => "utility_sweep",
            Scenario::StandardSim => "standard_sim",
            Scenario::DistributedSim => "distributed_sim",
            Scenario::Compare => "compare",
            Scenario::MatchEval => "match_eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFlags {
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpvConfig {
    pub admin_cost: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Evaluate with `fund_size = 1` so utilities read as fractions of the fund.
    pub normalized: bool,
    pub m_min: f64,
    pub m_max: f64,
    pub m_step: f64,
    pub model: ModelTag,
    pub clamp_carry: bool,
    pub variants: Vec<SweepVariant>,
}

impl SweepConfig {
    /// Grid `m_min, m_min + step, …, m_max`, computed by index so the end
    /// point is hit exactly.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.m_step > 0.0 && self.m_min >= 0.0 && self.m_max >= self.m_min) {
            return Err(Error::invalid("sweep grid needs 0 <= m_min <= m_max and m_step > 0"));
        }
        let n = ((self.m_max - self.m_min) / self.m_step + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|i| self.m_min + i as f64 * self.m_step).collect();
        if let Some(last) = g.last_mut() {
            if (*last - self.m_max).abs() < 1e-9 {
                *last = self.m_max;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchEvalConfig {
    pub deals_per_year: u32,
    pub years: u32,
    pub sectors: Vec<String>,
    pub round_size_range: [Money; 2],
    pub valuation_cap_range: [Money; 2],
    /// Room in each round for the automations.
    pub capacity: Money,
    /// Scripted deal flow; replaces the generated flow when non-empty.
    #[serde(default)]
    pub deals: Vec<DealOffer>,
}

/// A scripted firm event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptEvent {
    Source {
        deal: String,
        time: f64,
        company: CompanyAttrs,
        #[serde(default)]
        attribution: Vec<AttributionDelta>,
    },
    Advance {
        deal: String,
        time: f64,
        target: DealState,
        #[serde(default)]
        attribution: Vec<AttributionDelta>,
    },
    Fund {
        deal: String,
        time: f64,
        commitments: BTreeMap<MemberId, Money>,
    },
    Exit {
        deal: String,
        time: f64,
        proceeds: Money,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributedConfig {
    /// Capital offered per deal; defaults to fund size / companies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal_allocation: Option<Money>,
    pub template: DealTemplate,
    /// Fund deals through the automation rules instead of a single pool.
    pub use_rules: bool,
    /// Scripted mode: members and events replace the trial simulation.
    #[serde(default)]
    pub members: Vec<MemberSpec>,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub trials: u64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub output: OutputFlags,
    pub fund: FundParams,
    pub deployment: DeploymentSchedule,
    pub outcome: OutcomeModel,
    pub sim: SimOptions,
    pub fees: FeeSchedule,
    pub splits: CarrySplitTable,
    pub spv: SpvConfig,
    pub distributed: DistributedConfig,
    pub rules: Vec<AutomationRule>,
    pub stakes: BTreeMap<String, Money>,
    pub sweep: SweepConfig,
    pub match_eval: MatchEvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: d::scenario(),
            trials: d::trials(),
            master_seed: d::master_seed(),
            output_dir: d::output_dir(),
            output: d::output(),
            fund: d::fund(),
            deployment: d::deployment(),
            outcome: d::outcome(),
            sim: d::sim(),
            fees: d::fees(),
            splits: d::splits(),
            spv: d::spv(),
            distributed: DistributedConfig {
                deal_allocation: None,
                template: d::template(),
                use_rules: false,
                members: Vec::new(),
                events: Vec::new(),
            },
            rules: d::rules(),
            stakes: d::stakes(),
            sweep: d::sweep(),
            match_eval: d::match_eval(),
        }
    }
}

/// Tables merged key by key; any other value (arrays included) replaces the
/// default wholesale.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file. Errors name the offending line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut merged = match toml::Value::try_from(RunConfig::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("defaults serialize to a table"),
        };
        merge(&mut merged, user);

        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(merged))
            .map_err(|e| {
                let path = e.path().to_string();
                Error::Config {
                    line: locate(text, &path),
                    message: format!("{path}: {}", e.inner().message()),
                }
            })?;
        cfg.validate().map_err(|(path, msg)| Error::Config {
            line: locate(text, path),
            message: format!("{path}: {msg}"),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot serialize config: {e}"),
        })
    }

    /// Cross-section checks, reported as (key path, message).
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.trials < 1 {
            return Err(("trials", "must be >= 1".into()));
        }
        self.deployment
            .validate(self.fund.lifespan_years())
            .map_err(|e| ("deployment", e.to_string()))?;
        self.outcome.validate().map_err(|e| ("outcome", e.to_string()))?;
        self.fees.validate().map_err(|e| ("fees", e.to_string()))?;
        self.splits.resolve().map_err(|e| ("splits", e.to_string()))?;
        if self.spv.admin_cost.0 < 0 {
            return Err(("spv.admin_cost", "must be >= 0".into()));
        }
        for r in &self.rules {
            r.validate().map_err(|e| ("rules", e.to_string()))?;
            if !self.stakes.contains_key(&r.id) {
                return Err(("stakes", format!("no stake for rule {}", r.id)));
            }
        }
        if let Some(k) = self.stakes.keys().find(|k| !self.rules.iter().any(|r| &r.id == *k)) {
            return Err(("stakes", format!("stake for unknown rule {k}")));
        }
        self.sweep.grid().map_err(|e| ("sweep", e.to_string()))?;
        if self.sweep.variants.is_empty() {
            return Err(("sweep.variants", "need at least one variant".into()));
        }
        if self.distributed.template.sectors.is_empty() {
            return Err(("distributed.template.sectors", "need at least one sector".into()));
        }
        if let Some(a) = self.distributed.deal_allocation {
            if !a.is_positive() {
                return Err(("distributed.deal_allocation", "must be > 0".into()));
            }
        }
        let me = &self.match_eval;
        if me.sectors.is_empty() {
            return Err(("match_eval.sectors", "need at least one sector".into()));
        }
        if me.round_size_range[0] > me.round_size_range[1]
            || me.valuation_cap_range[0] > me.valuation_cap_range[1]
        {
            return Err(("match_eval", "ranges must be [low, high]".into()));
        }
        Ok(())
    }

    /// Capital each simulated distributed deal is offered.
    pub fn deal_allocation(&self) -> Money {
        self.distributed.deal_allocation.unwrap_or_else(|| {
            Money::from_f64_rounded(
                self.fund.fund_size() / self.deployment.companies_per_fund as f64,
            )
        })
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Splits a path like `rules[1].check_min` into `["rules", "1", "check_min"]`.
fn segments(path: &str) -> Vec<String> {
    path.replace('[', ".")
        .replace(']', "")
        .split('.')
        .filter(|s| !s.is_empty() && *s != "?")
        .map(str::to_string)
        .collect()
}

fn key_segments(key: &str) -> Vec<String> {
    key.split('.')
        .map(|s| s.trim().trim_matches('"').to_string())
        .collect()
}

/// Line of the deepest key or table header in `text` on the way to `path`.
/// Understands `[a.b]`, `[[a]]` (indexed by occurrence) and dotted keys.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let target = segments(path);
    let mut header: Vec<String> = Vec::new();
    let mut array_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut best: Option<(usize, usize)> = None;

    let consider = |full: &[String], line: usize, best: &mut Option<(usize, usize)>| {
        let depth = full.iter().zip(&target).take_while(|(a, b)| a == b).count();
        if depth == full.len() && depth > 0 && best.is_none_or(|(d, _)| depth > d) {
            *best = Some((depth, line));
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with("[[") && line.ends_with("]]") {
            let name = line[2..line.len() - 2].trim().to_string();
            let n = array_counts.entry(name.clone()).or_insert(0);
            header = key_segments(&name);
            header.push(n.to_string());
            *n += 1;
            consider(&header, i + 1, &mut best);
        } else if line.starts_with('[') && line.ends_with(']') {
            header = key_segments(&line[1..line.len() - 1]);
            consider(&header, i + 1, &mut best);
        } else if let Some((key, _)) = line.split_once('=') {
            if line.starts_with('#') {
                continue;
            }
            let mut full = header.clone();
            full.extend(key_segments(key));
            consider(&full, i + 1, &mut best);
        }
    }
    best.map(|(_, l)| l)
}
