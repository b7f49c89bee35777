//! Venture fund economics: the GP utility model, fund KPIs, a seeded outcome
//! generator, a standard "2-20" fund lifecycle simulator, and a distributed
//! firm model with per-deal SPVs, pod waterfalls and LP funding automations.

pub mod automation;
pub mod distributed;
pub mod economics;
pub mod error;
pub mod experiment;
pub mod kpi;
pub mod market;
pub mod money;
pub mod standard;

pub use error::{Error, Result};
pub use money::Money;
