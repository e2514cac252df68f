//! Retailer profits, the allocation of strategic demand, and the analytic
//! first-order conditions of each fixed price-ordering regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{
    branch_effective_prices, demands, effective_prices, DemandProfile, EffectivePrices,
    MarketParams, PriceVector, Regime, Scenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitPair {
    pub pi_r1: f64,
    pub pi_r2: f64,
    pub welfare: f64,
}

impl ProfitPair {
    pub fn new(pi_r1: f64, pi_r2: f64) -> Self {
        Self { pi_r1, pi_r2, welfare: pi_r1 + pi_r2 }
    }

    /// The same pair expressed in thousands of currency, as reported in tables.
    pub fn in_thousands(&self) -> Self {
        Self::new(self.pi_r1 / 1000.0, self.pi_r2 / 1000.0)
    }
}

/// Share of strategic demand served by retailer 1 at the given posted prices.
///
/// Equal effective prices split by `alpha`. Otherwise the strictly cheaper
/// retailer takes everything unless the rival matches it.
pub fn strategic_share(params: &MarketParams, scenario: &Scenario, prices: &PriceVector) -> f64 {
    let x1 = prices.r1_bundle_equivalent();
    let pb2 = prices.pb2;
    if x1 == pb2 {
        params.alpha
    } else {
        branch_share(params, scenario, Regime::of(x1, pb2))
    }
}

/// Retailer 1's strategic share in the interior of `regime`.
pub fn branch_share(params: &MarketParams, scenario: &Scenario, regime: Regime) -> f64 {
    match (scenario.bundling, regime) {
        (true, Regime::R1High) if scenario.pmg_r1 => params.alpha,
        (true, Regime::R1Low) if scenario.pmg_r2 => params.alpha,
        (_, Regime::R1High) => 0.0,
        (_, Regime::R1Low) => 1.0,
    }
}

fn assemble(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    eff: &EffectivePrices,
    d: &DemandProfile,
    share: f64,
) -> ProfitPair {
    let c = params.bundle_cost();
    let strategic = (eff.hat_pb - c) * d.d_s;
    let items = (prices.p1 - params.c1) * d.d_l_i1 + (prices.p2 - params.c2) * d.d_l_i2;
    let bundle = match prices.pb1.filter(|_| scenario.bundling) {
        Some(pb1) => (pb1 - c) * d.d_l_ib + (eff.tilde_pb1 - c) * d.d_q_ib,
        None => (prices.p1 + prices.p2 - c) * (d.d_l_ib + d.d_q_ib),
    };
    let pi_r1 = items + bundle + share * strategic;
    let pi_r2 =
        (prices.pb2 - c) * d.d_l_jb + (eff.tilde_pb2 - c) * d.d_q_jb + (1.0 - share) * strategic;
    ProfitPair::new(pi_r1, pi_r2)
}

/// Profits of both retailers at the posted prices.
pub fn profits(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
) -> Result<ProfitPair> {
    let eff = effective_prices(scenario, prices)?;
    let d = demands(params, scenario, prices, &eff);
    let share = strategic_share(params, scenario, prices);
    Ok(assemble(params, scenario, prices, &eff, &d, share))
}

/// Profits of the quadratic branch belonging to `regime`, evaluated at any
/// prices. Inside the regime this equals [`profits`]; at a tie it uses the
/// interior share of the branch rather than `alpha`.
pub fn regime_profits(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    regime: Regime,
) -> Result<ProfitPair> {
    prices.check_for(scenario)?;
    let eff = branch_effective_prices(scenario, prices, regime);
    let d = demands(params, scenario, prices, &eff);
    let share = branch_share(params, scenario, regime);
    Ok(assemble(params, scenario, prices, &eff, &d, share))
}

fn regime_or_kink(prices: &PriceVector) -> Result<Regime> {
    let x1 = prices.r1_bundle_equivalent();
    if x1 == prices.pb2 {
        return Err(Error::AmbiguousKink { r1_price: x1, r2_price: prices.pb2 });
    }
    Ok(Regime::of(x1, prices.pb2))
}

/// Gradient of retailer 1's profit in its own prices, `[p1, p2, pb1]` or
/// `[p1, p2]` without bundling. Errors exactly on a regime kink.
pub fn profit_gradient_r1(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
) -> Result<Vec<f64>> {
    let regime = regime_or_kink(prices)?;
    profit_gradient_r1_in(params, scenario, prices, regime)
}

/// Derivative of retailer 2's profit in `pb2`. Errors exactly on a regime kink.
pub fn profit_gradient_r2(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
) -> Result<f64> {
    let regime = regime_or_kink(prices)?;
    profit_gradient_r2_in(params, scenario, prices, regime)
}

/// First-order conditions of retailer 1 for the branch of `regime`.
pub fn profit_gradient_r1_in(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    regime: Regime,
) -> Result<Vec<f64>> {
    prices.check_for(scenario)?;
    let eff = branch_effective_prices(scenario, prices, regime);
    let d = demands(params, scenario, prices, &eff);
    let MarketParams { b_l: b, b_s, theta_l: th, lambda_l: lm, c1, c2, .. } = *params;
    let c = c1 + c2;
    let (m1, m2) = (prices.p1 - c1, prices.p2 - c2);
    let s = branch_share(params, scenario, regime);

    let Some(pb1) = prices.pb1 else {
        let sum_margin = prices.p1 + prices.p2 - c;
        let mut common = d.d_l_ib + d.d_q_ib - 2.0 * b * sum_margin;
        if regime == Regime::R1Low {
            common += d.d_s - b_s * sum_margin;
        }
        return Ok(vec![
            d.d_l_i1 - b * m1 - b * th * m2 + common,
            d.d_l_i2 - b * th * m1 - b * m2 + common,
        ]);
    };

    let mb = pb1 - c;
    let mq = eff.tilde_pb1 - c;
    let g1 = d.d_l_i1 - (b + lm) * m1 - (b * th + lm) * m2 + lm * mb + lm * mq;
    let g2 = d.d_l_i2 - (b * th + lm) * m1 - (b + lm) * m2 + lm * mb + lm * mq;
    let cross = lm * m1 + lm * m2;
    let gb = match regime {
        Regime::R1High if scenario.pmg_r1 => cross + d.d_l_ib - (b + lm) * mb,
        Regime::R1High => cross + d.d_l_ib + d.d_q_ib - 2.0 * (b + lm) * mb,
        Regime::R1Low => {
            cross + d.d_l_ib + d.d_q_ib + s * d.d_s - (2.0 * b + 2.0 * lm + s * b_s) * mb
        }
    };
    Ok(vec![g1, g2, gb])
}

/// First-order condition of retailer 2 for the branch of `regime`.
pub fn profit_gradient_r2_in(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    regime: Regime,
) -> Result<f64> {
    prices.check_for(scenario)?;
    let eff = branch_effective_prices(scenario, prices, regime);
    let d = demands(params, scenario, prices, &eff);
    let b = params.b_l;
    let m = prices.pb2 - params.bundle_cost();
    Ok(match regime {
        Regime::R1High => {
            let s2 = 1.0 - branch_share(params, scenario, regime);
            d.d_l_jb + d.d_q_jb + s2 * d.d_s - (2.0 * b + s2 * params.b_s) * m
        }
        Regime::R1Low if scenario.bundling && scenario.pmg_r2 => d.d_l_jb - b * m,
        Regime::R1Low => d.d_l_jb + d.d_q_jb - 2.0 * b * m,
    })
}
