//! Seeded generator of startup outcomes with a failure mass and a Pareto tail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the per-company outcome distribution.
///
/// Each year up to liquidity the company fails with `failure_hazard`.
/// Survivors exit at a multiple drawn from Pareto(`pareto_alpha`,
/// `pareto_xmin`); interim marks follow log-normal step-ups bridged to that
/// exit. Pre-liquidity marks are reported inflated by `markup_inflation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    pub failure_hazard: f64,
    pub pareto_alpha: f64,
    pub pareto_xmin: f64,
    pub stepup_mu: f64,
    pub stepup_sigma: f64,
    pub years_to_liquidity_min: u32,
    pub years_to_liquidity_max: u32,
    pub markup_inflation: f64,
    /// Replaces the Pareto draw with a constant exit multiple.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_multiple: Option<f64>,
}

impl OutcomeModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.failure_hazard) {
            return Err(Error::invalid("failure_hazard must be in [0, 1]"));
        }
        if !(self.pareto_alpha.is_finite() && self.pareto_alpha > 1.0) {
            return Err(Error::invalid("pareto_alpha must be > 1"));
        }
        if !(self.pareto_xmin.is_finite() && self.pareto_xmin > 0.0) {
            return Err(Error::invalid("pareto_xmin must be > 0"));
        }
        if !self.stepup_mu.is_finite() || !(self.stepup_sigma.is_finite() && self.stepup_sigma >= 0.0)
        {
            return Err(Error::invalid("stepup_mu must be finite and stepup_sigma >= 0"));
        }
        if self.years_to_liquidity_min == 0
            || self.years_to_liquidity_min > self.years_to_liquidity_max
        {
            return Err(Error::invalid(
                "need 1 <= years_to_liquidity_min <= years_to_liquidity_max",
            ));
        }
        if !(self.markup_inflation.is_finite() && self.markup_inflation > -1.0) {
            return Err(Error::invalid("markup_inflation must be > -1"));
        }
        if let Some(m) = self.fixed_multiple {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::invalid("fixed_multiple must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Where a company's random stream comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// A nested stream: the mixed seed becomes the child's master.
    pub fn child(self, stream_id: u64) -> SeedSpec {
        SeedSpec {
            master_seed: mix(self.master_seed, self.stream_id),
            stream_id,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        derive_stream(self.master_seed, self.stream_id)
    }
}

/// One step of the SplitMix64 generator.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed and a stream id into one 64-bit value.
pub fn mix(master_seed: u64, stream_id: u64) -> u64 {
    let mut s = master_seed;
    let a = splitmix64(&mut s);
    let mut t = a ^ stream_id.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut t)
}

/// Deterministic generator for `(master_seed, stream_id)`: a SplitMix64
/// expansion of the mixed pair seeds a ChaCha8 stream cipher.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut s = mix(master_seed, stream_id);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyOutcome {
    /// Exit multiple on the entry price at fair value; 0 iff the company failed.
    pub terminal_multiple: f64,
    /// Years from entry to exit or write-off.
    pub liquidity_year: u32,
    /// Fair-value multiples of the entry price for years `1..=liquidity_year`.
    pub fair_path: Vec<f64>,
    /// Reported (paper) multiples for the same years.
    pub paper_path: Vec<f64>,
}

impl CompanyOutcome {
    pub fn failed(&self) -> bool {
        self.terminal_multiple == 0.0
    }

    /// Fair and paper multiples `age` years after entry. Age 0 is the entry
    /// price; ages past liquidity return `None`.
    pub fn marks_at(&self, age: u32) -> Option<(f64, f64)> {
        if age == 0 {
            return Some((1.0, 1.0));
        }
        let i = age as usize - 1;
        Some((*self.fair_path.get(i)?, *self.paper_path.get(i)?))
    }
}

/// Draws one company outcome. The number of random draws does not depend on
/// the outcome, so streams stay aligned across parameter changes.
pub fn sample_outcome(model: &OutcomeModel, seed: SeedSpec) -> Result<CompanyOutcome> {
    model.validate()?;
    let mut rng = seed.rng();
    Ok(sample_with(model, &mut rng))
}

pub(crate) fn sample_with<R: Rng + ?Sized>(model: &OutcomeModel, rng: &mut R) -> CompanyOutcome {
    let horizon = rng.random_range(model.years_to_liquidity_min..=model.years_to_liquidity_max);

    let mut failure_year = None;
    for year in 1..=horizon {
        let u: f64 = rng.random();
        if failure_year.is_none() && u < model.failure_hazard {
            failure_year = Some(year);
        }
    }

    let pareto = Pareto::new(model.pareto_xmin, model.pareto_alpha)
        .expect("validated pareto parameters");
    let drawn = pareto.sample(rng);
    let exit_multiple = model.fixed_multiple.unwrap_or(drawn);

    let normal = Normal::new(model.stepup_mu, model.stepup_sigma).expect("validated step-ups");
    let mut walk = Vec::with_capacity(horizon as usize);
    let mut acc = 0.0;
    for _ in 0..horizon {
        acc += normal.sample(rng);
        walk.push(acc);
    }

    let (liquidity_year, terminal_multiple) = match failure_year {
        Some(y) => (y, 0.0),
        None => (horizon, exit_multiple),
    };

    let n = liquidity_year as usize;
    let mut fair_path = Vec::with_capacity(n);
    if terminal_multiple > 0.0 {
        // Log-space bridge from the entry price to the exit multiple.
        let drift_fix = (walk[n - 1] - terminal_multiple.ln()) / n as f64;
        for (k, s) in walk.iter().take(n - 1).enumerate() {
            fair_path.push((s - drift_fix * (k + 1) as f64).exp());
        }
    } else {
        for s in walk.iter().take(n - 1) {
            fair_path.push(s.exp());
        }
    }
    fair_path.push(terminal_multiple);

    let inflate = 1.0 + model.markup_inflation;
    let mut paper_path: Vec<f64> = fair_path.iter().map(|v| v * inflate).collect();
    paper_path[n - 1] = terminal_multiple;

    CompanyOutcome {
        terminal_multiple,
        liquidity_year,
        fair_path,
        paper_path,
    }
}
