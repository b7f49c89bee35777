//! Fund performance metrics over dated cash flows and residual-value marks.
//!
//! Amounts are signed from the fund investor's side: capital calls are
//! negative, distributions positive. IRR uses annual compounding with
//! fractional-year exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// Lower (exclusive) and upper (inclusive) edge of the IRR search domain.
pub const IRR_LOWER: f64 = -0.9999;
pub const IRR_UPPER: f64 = 10.0;
/// Spacing of the grid scanned for multiple NPV sign changes.
pub const IRR_GRID_STEP: f64 = 1e-3;
/// Required `|NPV(irr)|` relative to the gross absolute flow.
pub const IRR_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    CapitalCall,
    Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CashFlowEvent {
    pub time: f64,
    pub amount: Money,
    pub kind: FlowKind,
}

impl CashFlowEvent {
    /// A capital call of `paid_in` (a positive magnitude; stored negated).
    pub fn call(time: f64, paid_in: Money) -> Self {
        CashFlowEvent {
            time,
            amount: -paid_in,
            kind: FlowKind::CapitalCall,
        }
    }

    pub fn distribution(time: f64, amount: Money) -> Self {
        CashFlowEvent {
            time,
            amount,
            kind: FlowKind::Distribution,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(Error::invalid(format!("flow time must be >= 0, got {}", self.time)));
        }
        let ok = match self.kind {
            FlowKind::CapitalCall => self.amount.0 <= 0,
            FlowKind::Distribution => self.amount.0 >= 0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{:?} with amount {} has the wrong sign",
                self.kind, self.amount
            )));
        }
        Ok(())
    }
}

/// Time-ordered cash flows. Equal times keep insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CashFlowSeries {
    events: Vec<CashFlowEvent>,
}

impl CashFlowSeries {
    pub fn new(mut events: Vec<CashFlowEvent>) -> Result<Self> {
        for e in &events {
            e.validate()?;
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut seen_call = false;
        for e in &events {
            match e.kind {
                FlowKind::CapitalCall => seen_call = true,
                FlowKind::Distribution if !seen_call => {
                    return Err(Error::invalid(
                        "a distribution precedes the first capital call",
                    ))
                }
                FlowKind::Distribution => {}
            }
        }
        Ok(CashFlowSeries { events })
    }

    /// Appends an event at or after the last event's time.
    pub fn push(&mut self, event: CashFlowEvent) -> Result<()> {
        event.validate()?;
        if let Some(last) = self.events.last() {
            if event.time < last.time {
                return Err(Error::invalid("events must be appended in time order"));
            }
        }
        if event.kind == FlowKind::Distribution
            && !self.events.iter().any(|e| e.kind == FlowKind::CapitalCall)
        {
            return Err(Error::invalid("a distribution precedes the first capital call"));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[CashFlowEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn paid_in_until(&self, as_of: f64) -> Money {
        self.events
            .iter()
            .filter(|e| e.time <= as_of && e.kind == FlowKind::CapitalCall)
            .map(|e| -e.amount)
            .sum()
    }

    pub fn distributed_until(&self, as_of: f64) -> Money {
        self.events
            .iter()
            .filter(|e| e.time <= as_of && e.kind == FlowKind::Distribution)
            .map(|e| e.amount)
            .sum()
    }

    /// Events with `time <= as_of`.
    pub fn truncated(&self, as_of: f64) -> CashFlowSeries {
        CashFlowSeries {
            events: self.events.iter().filter(|e| e.time <= as_of).copied().collect(),
        }
    }

    /// Every amount multiplied by `k`.
    pub fn scaled(&self, k: i64) -> CashFlowSeries {
        CashFlowSeries {
            events: self
                .events
                .iter()
                .map(|e| CashFlowEvent {
                    amount: Money(e.amount.0 * k),
                    ..*e
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavMark {
    pub time: f64,
    pub value: Money,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NavSeries {
    marks: Vec<NavMark>,
}

impl NavSeries {
    pub fn new(marks: Vec<NavMark>) -> Result<Self> {
        for w in marks.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::invalid("nav marks must be sorted by time"));
            }
        }
        if let Some(m) = marks.iter().find(|m| m.value.0 < 0 || !(m.time >= 0.0)) {
            return Err(Error::invalid(format!("invalid nav mark {m:?}")));
        }
        Ok(NavSeries { marks })
    }

    pub fn push(&mut self, mark: NavMark) -> Result<()> {
        if mark.value.0 < 0 {
            return Err(Error::invalid("nav must be >= 0"));
        }
        if self.marks.last().is_some_and(|l| mark.time < l.time) {
            return Err(Error::invalid("nav marks must be appended in time order"));
        }
        self.marks.push(mark);
        Ok(())
    }

    pub fn marks(&self) -> &[NavMark] {
        &self.marks
    }

    /// Latest mark at or before `as_of`.
    pub fn at(&self, as_of: f64) -> Option<NavMark> {
        self.marks.iter().rev().find(|m| m.time <= as_of).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IrrOutcome {
    /// `ambiguous` is set when NPV changes sign more than once on the scan
    /// grid; `rate` is then the smallest bracketed root.
    Solved { rate: f64, ambiguous: bool },
    /// NPV has no sign change in the search domain.
    Undefined,
}

impl IrrOutcome {
    pub fn rate(self) -> Option<f64> {
        match self {
            IrrOutcome::Solved { rate, .. } => Some(rate),
            IrrOutcome::Undefined => None,
        }
    }

    pub fn is_ambiguous(self) -> bool {
        matches!(self, IrrOutcome::Solved { ambiguous: true, .. })
    }
}

/// NPV of `Σ amount·(1+rate)^(−time)` over the series.
pub fn npv(series: &CashFlowSeries, rate: f64) -> f64 {
    series
        .events
        .iter()
        .map(|e| e.amount.as_f64() * (1.0 + rate).powf(-e.time))
        .sum()
}

/// Cash flows aggregated by time, ready for repeated NPV evaluation.
struct Npv {
    /// Dense coefficients by whole year when every time is an integer.
    yearly: Option<Vec<f64>>,
    flows: Vec<(f64, f64)>,
}

impl Npv {
    fn new(flows: Vec<(f64, f64)>) -> Self {
        let integral = flows
            .iter()
            .all(|&(t, _)| t.fract() == 0.0 && t <= 400.0);
        let yearly = integral.then(|| {
            let n = flows.last().map_or(0, |&(t, _)| t as usize);
            let mut c = vec![0.0; n + 1];
            for &(t, a) in &flows {
                c[t as usize] += a;
            }
            c
        });
        Npv { yearly, flows }
    }

    fn value(&self, rate: f64) -> f64 {
        let v = match &self.yearly {
            Some(c) => {
                let x = 1.0 / (1.0 + rate);
                c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
            }
            None => self
                .flows
                .iter()
                .map(|&(t, a)| a * (1.0 + rate).powf(-t))
                .sum(),
        };
        if v.is_finite() {
            v
        } else {
            // Overflow near r = −1: the latest flow dominates.
            self.flows.last().map_or(0.0, |&(_, a)| a.signum() * f64::MAX)
        }
    }

    /// Upper bound on `|dNPV/dr|` over `[rate, ∞)`.
    fn slope_bound(&self, rate: f64) -> f64 {
        let base = 1.0 + rate;
        self.flows
            .iter()
            .map(|&(t, a)| t * a.abs() * base.powf(-t - 1.0))
            .sum()
    }

    fn sign_changes(&self) -> usize {
        let signs: Vec<bool> = self
            .flows
            .iter()
            .filter(|&&(_, a)| a != 0.0)
            .map(|&(_, a)| a > 0.0)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

fn aggregate(series: &CashFlowSeries, terminal: Option<NavMark>) -> (Vec<(f64, f64)>, f64) {
    let mut flows: Vec<(f64, f64)> = Vec::new();
    let mut gross = 0.0;
    let extra = terminal
        .filter(|m| m.value.0 > 0)
        .map(|m| (m.time, m.value.as_f64()));
    let all = series
        .events
        .iter()
        .map(|e| (e.time, e.amount.as_f64()))
        .chain(extra);
    let mut sorted: Vec<(f64, f64)> = all.collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, a) in sorted {
        gross += a.abs();
        match flows.last_mut() {
            Some(last) if last.0 == t => last.1 += a,
            _ => flows.push((t, a)),
        }
    }
    (flows, gross)
}

fn bisect(f: &Npv, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f.value(lo);
    let f_hi = f.value(hi);
    let (mut best, mut best_abs) = if f_lo.abs() <= f_hi.abs() {
        (lo, f_lo.abs())
    } else {
        (hi, f_hi.abs())
    };
    for _ in 0..300 {
        if best_abs <= tol * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f.value(mid);
        if f_mid.abs() < best_abs {
            best = mid;
            best_abs = f_mid.abs();
        }
        if f_mid == 0.0 {
            break;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    best
}

fn grid_point(k: usize, n: usize) -> f64 {
    if k == n {
        IRR_UPPER
    } else {
        IRR_LOWER + k as f64 * IRR_GRID_STEP
    }
}

/// Internal rate of return of `series`, optionally closing it with a terminal
/// residual value paid as a distribution at the mark's time.
///
/// When the aggregated flows change sign at most once there is at most one
/// root and the domain ends bracket it. Otherwise a 1e-3 grid over the domain
/// is scanned; stretches where the slope bound rules out a sign change are
/// skipped, which gives the same brackets as a point-by-point scan.
pub fn irr(series: &CashFlowSeries, terminal_nav: Option<NavMark>) -> Result<IrrOutcome> {
    if series.is_empty() {
        return Err(Error::invalid("IRR of an empty cash-flow series"));
    }
    let (flows, gross) = aggregate(series, terminal_nav);
    let f = Npv::new(flows);
    let tol = IRR_RESIDUAL_TOL * gross;

    if f.sign_changes() <= 1 {
        let (v_lo, v_hi) = (f.value(IRR_LOWER), f.value(IRR_UPPER));
        if v_hi == 0.0 {
            return Ok(IrrOutcome::Solved {
                rate: IRR_UPPER,
                ambiguous: false,
            });
        }
        if v_lo == 0.0 || (v_lo > 0.0) == (v_hi > 0.0) {
            return Ok(IrrOutcome::Undefined);
        }
        return Ok(IrrOutcome::Solved {
            rate: bisect(&f, IRR_LOWER, IRR_UPPER, tol),
            ambiguous: false,
        });
    }

    let n = ((IRR_UPPER - IRR_LOWER) / IRR_GRID_STEP).floor() as usize + 1;
    let mut roots: Vec<(f64, f64)> = Vec::new();
    let mut k = 0usize;
    let mut prev = (grid_point(0, n), f.value(grid_point(0, n)));
    if prev.1 == 0.0 {
        roots.push((prev.0, prev.0));
    }
    while k < n && roots.len() < 2 {
        let r = prev.0;
        let v = prev.1;
        let bound = f.slope_bound(r);
        let skip = if bound > 0.0 && v != 0.0 {
            ((v.abs() / bound) / IRR_GRID_STEP).floor().clamp(1.0, (n - k) as f64) as usize
        } else {
            1
        };
        let mut next_k = k + skip;
        let mut next = (grid_point(next_k, n), f.value(grid_point(next_k, n)));
        if skip > 1 && next.1 != 0.0 && v != 0.0 && (next.1 > 0.0) != (v > 0.0) {
            // Rounding made the skip unsafe; fall back to one step.
            next_k = k + 1;
            next = (grid_point(next_k, n), f.value(grid_point(next_k, n)));
        }
        if next.1 == 0.0 {
            roots.push((next.0, next.0));
        } else if v != 0.0 && (next.1 > 0.0) != (v > 0.0) {
            roots.push((r, next.0));
        }
        k = next_k;
        prev = next;
    }

    match roots.first() {
        None => Ok(IrrOutcome::Undefined),
        Some(&(a, b)) => {
            let rate = if a == b { a } else { bisect(&f, a, b, tol) };
            Ok(IrrOutcome::Solved {
                rate,
                ambiguous: roots.len() > 1,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub as_of: f64,
    pub paid_in: Money,
    pub distributed: Money,
    pub nav: Money,
    /// `None` when the report was built without solving for IRR.
    pub irr: Option<IrrOutcome>,
    pub dpi: f64,
    pub rvpi: f64,
    pub tvpi: f64,
    /// Undefined while nothing has been distributed.
    pub tvpi_dpi_ratio: Option<f64>,
}

/// DPI, RVPI, TVPI and the TVPI/DPI ratio as of `as_of`.
pub fn multiples(series: &CashFlowSeries, nav: Option<Money>, as_of: f64) -> Result<KpiReport> {
    let paid_in = series.paid_in_until(as_of);
    if paid_in.0 <= 0 {
        return Err(Error::invalid(format!("no paid-in capital as of {as_of}")));
    }
    let nav = nav.unwrap_or(Money::ZERO);
    if nav.0 < 0 {
        return Err(Error::invalid("nav must be >= 0"));
    }
    let distributed = series.distributed_until(as_of);
    let dpi = distributed.as_f64() / paid_in.as_f64();
    let rvpi = nav.as_f64() / paid_in.as_f64();
    let tvpi = dpi + rvpi;
    Ok(KpiReport {
        as_of,
        paid_in,
        distributed,
        nav,
        irr: None,
        dpi,
        rvpi,
        tvpi,
        tvpi_dpi_ratio: (dpi > 0.0).then(|| tvpi / dpi),
    })
}

/// [`multiples`] plus IRR over the flows to `as_of` closed by `nav`.
pub fn kpi_report(series: &CashFlowSeries, nav: Option<Money>, as_of: f64) -> Result<KpiReport> {
    let mut report = multiples(series, nav, as_of)?;
    let terminal = nav.map(|value| NavMark { time: as_of, value });
    report.irr = Some(irr(&series.truncated(as_of), terminal)?);
    Ok(report)
}

/// Reports at each requested time, taking NAV from the latest mark.
pub fn kpi_timeline(
    series: &CashFlowSeries,
    nav: &NavSeries,
    times: &[f64],
    with_irr: bool,
) -> Result<Vec<KpiReport>> {
    times
        .iter()
        .map(|&t| {
            let v = nav.at(t).map(|m| m.value);
            if with_irr {
                kpi_report(series, v, t)
            } else {
                multiples(series, v, t)
            }
        })
        .collect()
}

/// Discounts a paper valuation to fair value: `paper / (1 + inflation_rate)`,
/// rounded half-to-even to minor units.
pub fn fair_value_adjust(paper_valuation: Money, inflation_rate: f64) -> Result<Money> {
    check_inflation(paper_valuation, inflation_rate)?;
    Ok(paper_valuation.div_one_plus(inflation_rate))
}

/// Inverse of [`fair_value_adjust`]: `fair × (1 + inflation_rate)`.
pub fn paper_value_from_fair(fair_value: Money, inflation_rate: f64) -> Result<Money> {
    check_inflation(fair_value, inflation_rate)?;
    Ok(fair_value.mul_one_plus(inflation_rate))
}

fn check_inflation(v: Money, rate: f64) -> Result<()> {
    if v.0 < 0 {
        return Err(Error::invalid("valuation must be >= 0"));
    }
    if !(rate.is_finite() && rate > -1.0) {
        return Err(Error::invalid(format!("inflation rate must be > -1, got {rate}")));
    }
    Ok(())
}
