use std::collections::BTreeMap;

use dvc_core::automation::{allocate_round, AutomationEngine, AutomationRule, Bid, DealOffer, FollowOnCriteria};
use dvc_core::distributed::{CompanyAttrs, MemberId};
use dvc_core::economics::{expanded_polynomial, gp_utility_expanded, FundParams, Multiple};
use dvc_core::kpi::{irr, multiples, npv, CashFlowEvent, CashFlowSeries, IrrOutcome};
use dvc_core::market::{sample_outcome, OutcomeModel, SeedSpec};
use dvc_core::Money;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = FundParams> {
    (1.0f64..1e9, 1u32..15, 0.0f64..0.06, 0.0f64..0.1, 0.0f64..0.4).prop_filter_map(
        "fees within fund",
        |(f, l, p, g, c)| FundParams::new(f, l, p, g, c).ok(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn polynomial_equals_grouping(p in params(), m in 0.0f64..10.0) {
        let m = Multiple::new(m).unwrap();
        let grouped = gp_utility_expanded(&p, m).total;
        let poly = expanded_polynomial(&p, m);
        // Both sides cancel to the same small value near roots; compare
        // against the scale of the largest term.
        let scale = p.fund_size() * (1.0 + m.value());
        prop_assert!((grouped - poly).abs() <= 1e-12 * scale, "{grouped} vs {poly}");
    }
}

proptest! {
    #[test]
    fn linear_in_fund_size(p in params(), k in 0.01f64..100.0, m in 0.0f64..10.0) {
        let m = Multiple::new(m).unwrap();
        let scaled = FundParams::new(p.fund_size() * k, p.lifespan_years(), p.mgmt_fee(), p.gp_commit(), p.carry()).unwrap();
        let a = gp_utility_expanded(&scaled, m).total;
        let b = k * gp_utility_expanded(&p, m).total;
        prop_assert!((a - b).abs() <= 1e-12 * p.fund_size() * k * (1.0 + m.value()));
    }

    #[test]
    fn non_decreasing_in_m(p in params(), m in 0.0f64..10.0, dm in 0.0f64..5.0) {
        let lo = gp_utility_expanded(&p, Multiple::new(m).unwrap()).total;
        let hi = gp_utility_expanded(&p, Multiple::new(m + dm).unwrap()).total;
        prop_assert!(hi >= lo);
    }

    #[test]
    fn irr_residual_and_scale(
        calls in prop::collection::vec((0u32..12, 1i64..1_000_000_000), 1..5),
        dists in prop::collection::vec((0.0f64..11.0, 0i64..2_000_000_000), 1..8),
        k in 2i64..1000,
    ) {
        let mut events: Vec<CashFlowEvent> = calls
            .iter()
            .enumerate()
            .map(|(i, &(q, a))| CashFlowEvent::call(if i == 0 { 0.0 } else { q as f64 * 0.25 }, Money(a)))
            .collect();
        events.extend(dists.iter().map(|&(t, a)| CashFlowEvent::distribution(4.0 + t, Money(a))));
        let s = CashFlowSeries::new(events).unwrap();
        let gross: f64 = s.events().iter().map(|e| e.amount.as_f64().abs()).sum();
        let a = irr(&s, None).unwrap();
        let b = irr(&s.scaled(k), None).unwrap();
        match (a, b) {
            (IrrOutcome::Solved { rate: ra, .. }, IrrOutcome::Solved { rate: rb, .. }) => {
                prop_assert!(npv(&s, ra).abs() <= 1e-9 * gross);
                prop_assert!((ra - rb).abs() <= 1e-12, "{ra} vs {rb}");
            }
            (IrrOutcome::Undefined, IrrOutcome::Undefined) => {}
            other => prop_assert!(false, "scaling changed solvability: {other:?}"),
        }
        let ma = multiples(&s, None, 20.0).unwrap();
        let mb = multiples(&s.scaled(k), None, 20.0).unwrap();
        prop_assert_eq!(ma.dpi.to_bits(), mb.dpi.to_bits());
        prop_assert_eq!(ma.tvpi.to_bits(), mb.tvpi.to_bits());
    }

    #[test]
    fn allocation_is_feasible_and_order_free(
        raw in prop::collection::vec((0u64..5, 0i64..300_000, 0i64..300_000), 1..8),
        capacity in 0i64..1_000_000,
        seed in any::<u64>(),
    ) {
        let bids: Vec<Bid> = raw
            .iter()
            .enumerate()
            .map(|(i, &(created_at, lo, extra))| Bid {
                rule_id: format!("r{i}"),
                created_at,
                check: Money(lo + extra),
                check_min: Money(lo),
            })
            .collect();
        let fills = allocate_round(Money(capacity), &bids);
        let total: Money = fills.iter().map(|f| f.amount).sum();
        prop_assert!(total.0 <= capacity.max(0));
        for f in &fills {
            let b = bids.iter().find(|b| b.rule_id == f.rule_id).unwrap();
            prop_assert!(f.amount >= b.check_min && f.amount <= b.check);
        }
        let mut shuffled = bids.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(allocate_round(Money(capacity), &shuffled), fills);
    }

    #[test]
    fn accounts_stay_balanced(
        stake in 0i64..3_000_000,
        offers in prop::collection::vec((0.0f64..4.0, 0i64..600_000, any::<bool>()), 1..40),
        marks in prop::collection::vec(0.0f64..5.0, 1..10),
    ) {
        let rule = AutomationRule {
            id: "r".into(),
            owner: MemberId::from("lp"),
            sectors: ["biotech".to_string()].into(),
            min_round_size: Money(0),
            max_valuation_cap: Money(i64::MAX),
            check_min: Money(50_000),
            check_max: Money(250_000),
            max_per_quarter: 2,
            holding_period_pref: 7.0,
            followon_reserve_fraction: 0.4,
            followon_criteria: FollowOnCriteria { min_paper_multiple: Some(2.0), ..Default::default() },
            created_at: 0,
            fill_fraction: 1.0,
        };
        let stakes: BTreeMap<String, Money> = [("r".to_string(), Money(stake))].into();
        let mut engine = AutomationEngine::new(vec![rule], &stakes).unwrap();
        let mut offers = offers;
        offers.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(t, cap, cancel)) in offers.iter().enumerate() {
            let deal = DealOffer {
                id: format!("d{i}"),
                company: CompanyAttrs {
                    sector: "biotech".into(),
                    round_size: Money(1),
                    valuation_cap: Money(1),
                    stage: "seed".into(),
                },
                time: t,
            };
            engine.offer(&deal, Money(cap)).unwrap();
            if cancel {
                engine.cancel(&deal);
            }
            prop_assert!(engine.account("r").unwrap().is_balanced());
        }
        for (i, &m) in marks.iter().enumerate() {
            engine.follow_on(&format!("d{i}"), m, 5.0);
            prop_assert!(engine.account("r").unwrap().is_balanced());
        }
        engine.finish();
        let a = engine.account("r").unwrap();
        prop_assert!(a.is_balanced() && a.reserved == Money::ZERO);
    }
}

fn pareto_draws(alpha: f64, n: u64) -> Vec<f64> {
    let model = OutcomeModel {
        failure_hazard: 0.0,
        pareto_alpha: alpha,
        pareto_xmin: 1.0,
        stepup_mu: 0.0,
        stepup_sigma: 0.0,
        years_to_liquidity_min: 1,
        years_to_liquidity_max: 1,
        markup_inflation: 0.0,
        fixed_multiple: None,
    };
    (0..n)
        .map(|i| sample_outcome(&model, SeedSpec::new(7, i)).unwrap().terminal_multiple)
        .collect()
}

#[test]
fn pareto_mean() {
    let v = pareto_draws(2.0, 100_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 2.0).abs() <= 0.05 * 2.0, "mean {mean}");
}

#[test]
fn pareto_tail_slope() {
    for alpha in [1.1, 1.5, 2.5] {
        let mut v = pareto_draws(alpha, 100_000);
        v.sort_by(|a, b| b.total_cmp(a));
        // Least-squares slope of log survival against log x over the top 10%.
        let n = v.len() as f64;
        let pts: Vec<(f64, f64)> = v[..10_000]
            .iter()
            .enumerate()
            .map(|(i, &x)| (x.ln(), ((i + 1) as f64 / n).ln()))
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + alpha).abs() <= 0.1 * alpha, "alpha {alpha}: slope {slope}");
    }
}
