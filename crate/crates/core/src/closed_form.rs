//! Closed-form equilibria of the six subgame/regime combinations.
//!
//! Each theorem assumes one price-ordering regime. Results are always
//! returned; whether the regime assumption and demand nonnegativity actually
//! hold is reported through [`EquilibriumResult::feasible`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conditions::{check_condition_set_with, ConditionOptions, ConditionReport, ConditionSetId};
use crate::error::{Error, Result};
use crate::market::{
    demands, effective_prices, DemandProfile, MarketParams, PriceVector, Regime, Scenario,
};
use crate::profit::{profit_gradient_r1_in, profit_gradient_r2_in, profits, ProfitPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoremId {
    T1,
    T2,
    T3,
    T4,
    T5a,
    T5b,
}

impl TheoremId {
    pub const ALL: [TheoremId; 6] = [Self::T1, Self::T2, Self::T3, Self::T4, Self::T5a, Self::T5b];

    /// Regime the formula presumes.
    pub fn regime(self) -> Regime {
        match self {
            Self::T1 | Self::T2 | Self::T5a => Regime::R1High,
            Self::T3 | Self::T4 | Self::T5b => Regime::R1Low,
        }
    }

    pub fn condition_set(self) -> ConditionSetId {
        match self {
            Self::T1 => ConditionSetId::A,
            Self::T2 => ConditionSetId::B,
            Self::T3 => ConditionSetId::C,
            Self::T4 => ConditionSetId::D,
            Self::T5a => ConditionSetId::E,
            Self::T5b => ConditionSetId::F,
        }
    }

    /// Whether the theorem describes an equilibrium candidate of `scenario`.
    pub fn applies_to(self, scenario: &Scenario) -> bool {
        match self {
            Self::T1 => scenario.bundling && scenario.pmg_r1,
            Self::T2 => scenario.bundling && !scenario.pmg_r1,
            Self::T3 => scenario.bundling && scenario.pmg_r2,
            Self::T4 => scenario.bundling && !scenario.pmg_r2,
            Self::T5a | Self::T5b => !scenario.bundling,
        }
    }

    /// Theorems that may solve `scenario`.
    pub fn candidates(scenario: &Scenario) -> Vec<TheoremId> {
        Self::ALL.into_iter().filter(|t| t.applies_to(scenario)).collect()
    }

    /// A representative scenario for the theorem.
    pub fn canonical_scenario(self) -> Scenario {
        match self {
            Self::T1 => Scenario::bundle(true, true),
            Self::T2 => Scenario::bundle(false, true),
            Self::T3 => Scenario::bundle(true, true),
            Self::T4 => Scenario::bundle(true, false),
            Self::T5a | Self::T5b => Scenario::no_bundle(),
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Tolerances used to judge a closed-form solution admissible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTol {
    /// Absolute tolerance on price ordering, nonnegativity, and demands.
    pub abs: f64,
    /// Largest accepted first-order-condition residual.
    pub foc: f64,
}

impl Default for FeasibilityTol {
    fn default() -> Self {
        Self { abs: 1e-9, foc: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub theorem: TheoremId,
    pub scenario: Scenario,
    pub prices: PriceVector,
    pub demands: DemandProfile,
    pub profits: ProfitPair,
    pub regime: Regime,
    pub condition_report: ConditionReport,
    pub foc_residual: f64,
    pub feasible: bool,
    /// Human-readable reasons when `feasible` is false.
    pub violations: Vec<String>,
}

fn degenerate(what: &str) -> Error {
    Error::DegenerateParams(what.to_string())
}

fn nonzero(x: f64, what: &str) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        Err(degenerate(what))
    } else {
        Ok(x)
    }
}

/// Raw closed-form prices of a theorem, without any feasibility assessment.
pub fn theorem_prices(theorem: TheoremId, params: &MarketParams) -> Result<PriceVector> {
    let MarketParams {
        a_l_i1: a1,
        a_l_i2: a2,
        a_l_ib: alib,
        a_q_ib: aqib,
        a_l_jb: aljb,
        a_q_jb: aqjb,
        a_s,
        b_l: b,
        b_s,
        theta_l: th,
        lambda_l: lm,
        c1,
        c2,
        alpha,
    } = *params;
    let c = c1 + c2;
    let spread = (a1 - a2) / nonzero(4.0 * b * (1.0 - th), "theta_l = 1 or b_l = 0")?;

    let prices = match theorem {
        TheoremId::T1 => {
            nonzero(lm, "lambda_l = 0")?;
            let d = nonzero((b + lm) * b * (1.0 + th) + 2.0 * b * lm, "T1 pb1 denominator")?;
            let r = (aljb + aqjb + (1.0 - alpha) * a_s)
                / nonzero(2.0 * b + (1.0 - alpha) * b_s, "T1 pb2 denominator")?;
            let pb2 = 0.5 * (r + c);
            let pb1 = 0.5
                * (((a1 + a2) * lm + (b * (1.0 + th) + 2.0 * lm) * alib) / d
                    + (r - c) * lm * lm / d
                    + c);
            let common = -alib / (4.0 * lm) + (2.0 * pb1 - c) / (4.0 * lm) * (b + lm);
            PriceVector::bundled(spread + common + c1 / 2.0, -spread + common + c2 / 2.0, pb1, pb2)
        }
        TheoremId::T2 | TheoremId::T3 | TheoremId::T4 => {
            nonzero(lm, "lambda_l = 0")?;
            let s = match theorem {
                TheoremId::T2 => 0.0,
                TheoremId::T3 => alpha,
                _ => 1.0,
            };
            let g = b * (1.0 + th) + 2.0 * lm;
            let d = nonzero(
                2.0 * (2.0 * b + s * b_s) * g + 4.0 * b * (1.0 + th) * lm - lm * lm,
                "pb1 denominator",
            )?;
            let bases = alib + aqib + s * a_s;
            let pb1 = 0.5
                * ((3.0 * (a1 + a2) * lm + 2.0 * g * bases) / d
                    + c * (1.0 + (b * (1.0 + th) * lm - lm * lm) / d));
            let common =
                -bases / (6.0 * lm) + (2.0 * pb1 - c) / (3.0 * lm) * (b + lm + s * b_s / 2.0);
            let p1 = spread + 5.0 * c1 / 12.0 - c2 / 12.0 + common;
            let p2 = -spread - c1 / 12.0 + 5.0 * c2 / 12.0 + common;
            let pb2 = match theorem {
                TheoremId::T2 => 0.5 * ((aljb + aqjb + a_s) / (2.0 * b + b_s) + c),
                TheoremId::T3 => 0.5 * (aljb / b + c),
                _ => 0.5 * ((aljb + aqjb) / (2.0 * b) + c),
            };
            PriceVector::bundled(p1, p2, pb1, pb2)
        }
        TheoremId::T5a => {
            let k = (a1 + a2 + 2.0 * (alib + aqib)) / (4.0 * b * (5.0 + th));
            let pb2 = (aljb + aqjb + a_s) / (2.0 * (2.0 * b + b_s)) + c / 2.0;
            PriceVector::unbundled(spread + c1 / 2.0 + k, -spread + c2 / 2.0 + k, pb2)
        }
        TheoremId::T5b => {
            let k = (a1 + a2 + 2.0 * a_s + 2.0 * (alib + aqib))
                / (4.0 * b * (5.0 + th) + 8.0 * b_s);
            let pb2 = (aljb + aqjb) / (4.0 * b) + c / 2.0;
            PriceVector::unbundled(spread + c1 / 2.0 + k, -spread + c2 / 2.0 + k, pb2)
        }
    };
    let all_finite = prices.r1_vars().iter().all(|v| v.is_finite()) && prices.pb2.is_finite();
    if !all_finite {
        return Err(degenerate("non-finite closed-form price"));
    }
    Ok(prices)
}

/// Largest absolute first-order-condition residual of both retailers on the
/// branch of `regime`.
pub fn foc_residual(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    regime: Regime,
) -> Result<f64> {
    let g1 = profit_gradient_r1_in(params, scenario, prices, regime)?;
    let g2 = profit_gradient_r2_in(params, scenario, prices, regime)?;
    Ok(g1.into_iter().fold(g2.abs(), |m, g| m.max(g.abs())))
}

/// Evaluates a theorem for a specific scenario it covers.
pub fn evaluate(
    theorem: TheoremId,
    params: &MarketParams,
    scenario: &Scenario,
    cond_opts: &ConditionOptions,
    tol: &FeasibilityTol,
) -> Result<EquilibriumResult> {
    let scenario = Scenario::new(scenario.bundling, scenario.pmg_r1, scenario.pmg_r2);
    if !theorem.applies_to(&scenario) {
        return Err(Error::DegenerateParams(format!(
            "{theorem} does not describe subgame {scenario}"
        )));
    }
    let prices = theorem_prices(theorem, params)?;
    let regime = theorem.regime();
    let eff = effective_prices(&scenario, &prices)?;
    let demands = demands(params, &scenario, &prices, &eff);
    let profits = profits(params, &scenario, &prices)?;
    let foc = foc_residual(params, &scenario, &prices, regime)?;
    let condition_report = check_condition_set_with(theorem.condition_set(), params, cond_opts);

    let mut violations = Vec::new();
    let x1 = prices.r1_bundle_equivalent();
    let ordering_gap = match regime {
        Regime::R1High => x1 - prices.pb2,
        Regime::R1Low => prices.pb2 - x1,
    };
    if ordering_gap < -tol.abs {
        violations.push(format!(
            "regime {regime} ordering fails: r1 bundle-equivalent {x1:.6} vs pb2 {:.6}",
            prices.pb2
        ));
    }
    if let Some(pb1) = prices.pb1 {
        if prices.p1 + prices.p2 < pb1 - tol.abs {
            violations.push(format!(
                "bundle discount fails: p1 + p2 = {:.6} < pb1 = {pb1:.6}",
                prices.p1 + prices.p2
            ));
        }
    }
    for (name, v) in [("p1", prices.p1), ("p2", prices.p2), ("pb2", prices.pb2)]
        .into_iter()
        .chain(prices.pb1.map(|v| ("pb1", v)))
    {
        if v < -tol.abs {
            violations.push(format!("negative price {name} = {v:.6}"));
        }
    }
    for (name, q) in DemandProfile::LABELS.iter().zip(demands.as_array()) {
        if q < -tol.abs {
            violations.push(format!("negative demand {name} = {q:.6}"));
        }
    }
    if !(foc <= tol.foc) {
        violations.push(format!("first-order residual {foc:.3e} exceeds {:.1e}", tol.foc));
    }

    Ok(EquilibriumResult {
        theorem,
        scenario,
        prices,
        demands,
        profits,
        regime,
        condition_report,
        foc_residual: foc,
        feasible: violations.is_empty(),
        violations,
    })
}

fn eq_default(theorem: TheoremId, params: &MarketParams) -> Result<EquilibriumResult> {
    evaluate(
        theorem,
        params,
        &theorem.canonical_scenario(),
        &ConditionOptions::default(),
        &FeasibilityTol::default(),
    )
}

/// (CM, CM) and (CM, ¬CM) with retailer 1 at or above retailer 2.
pub fn eq_t1(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T1, params)
}

/// (¬CM, CM) and (¬CM, ¬CM) with retailer 1 at or above retailer 2.
pub fn eq_t2(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T2, params)
}

/// (CM, CM) and (¬CM, CM) with retailer 1 strictly below retailer 2.
pub fn eq_t3(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T3, params)
}

/// (CM, ¬CM) and (¬CM, ¬CM) with retailer 1 strictly below retailer 2.
pub fn eq_t4(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T4, params)
}

/// No bundling, item prices summing to at least retailer 2's bundle price.
pub fn eq_t5a(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T5a, params)
}

/// No bundling, item prices summing to less than retailer 2's bundle price.
pub fn eq_t5b(params: &MarketParams) -> Result<EquilibriumResult> {
    eq_default(TheoremId::T5b, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn t1_baseline() {
        let r = eq_t1(&MarketParams::baseline()).unwrap();
        let p = r.prices;
        assert!(close(p.p1, 99.05, 0.005) && close(p.p2, 99.05, 0.005));
        assert!(close(p.pb1.unwrap(), 162.05, 0.005));
        assert!(close(p.pb2, 135.0, 1e-12));
        assert!(close(2.0 * p.pb1.unwrap(), 324.09, 0.005));
        assert!(r.feasible, "{:?}", r.violations);
        assert!(r.foc_residual <= 1e-8);
    }

    #[test]
    fn t2_baseline() {
        let r = eq_t2(&MarketParams::baseline()).unwrap();
        assert!(close(r.prices.p1, 94.08, 0.005));
        assert!(close(r.prices.pb1.unwrap(), 139.76, 0.005));
        assert!(close(2.0 * r.prices.pb1.unwrap(), 279.53, 0.005));
        assert!(close(r.prices.pb2, 135.0, 1e-12));
        assert!(r.feasible, "{:?}", r.violations);
    }

    #[test]
    fn t5a_baseline() {
        let r = eq_t5a(&MarketParams::baseline()).unwrap();
        assert!(close(r.prices.p1, 5.0 + 600.0 / 8.8, 1e-12));
        assert!(close(r.prices.pb2, 135.0, 1e-12));
        assert!(r.feasible, "{:?}", r.violations);
    }

    #[test]
    fn low_regime_pb2_at_baseline() {
        let p = MarketParams::baseline();
        for t in [TheoremId::T3, TheoremId::T4, TheoremId::T5b] {
            let r = evaluate(t, &p, &t.canonical_scenario(), &Default::default(), &Default::default())
                .unwrap();
            assert!(close(r.prices.pb2, 135.0, 1e-12), "{t}");
            // The closed form is stationary but retailer 1 is not below retailer 2.
            assert!(r.foc_residual <= 1e-8);
            assert!(!r.feasible);
        }
    }

    #[test]
    fn homogeneous_system_gives_zero_prices() {
        let mut p = MarketParams::baseline();
        for name in ["a_l_i1", "a_l_i2", "a_l_ib", "a_l_jb", "a_q_ib", "a_q_jb", "a_s", "c1", "c2"] {
            p.set(name, 0.0).unwrap();
        }
        let prices = theorem_prices(TheoremId::T1, &p).unwrap();
        for v in prices.r1_vars().into_iter().chain([prices.pb2]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn t3_at_zero_alpha_is_t2_for_retailer_1() {
        let p = MarketParams { alpha: 0.0, a_l_i1: 140.0, ..MarketParams::baseline() };
        let a = theorem_prices(TheoremId::T2, &p).unwrap();
        let b = theorem_prices(TheoremId::T3, &p).unwrap();
        assert_eq!(a.r1_vars(), b.r1_vars());
    }

    #[test]
    fn t4_is_t3_at_unit_alpha_for_retailer_1() {
        let p = MarketParams { alpha: 1.0, ..MarketParams::baseline() };
        let a = theorem_prices(TheoremId::T3, &p).unwrap();
        let b = theorem_prices(TheoremId::T4, &p).unwrap();
        assert_eq!(a.r1_vars(), b.r1_vars());
    }

    #[test]
    fn equal_item_bases_give_cost_spread() {
        let p = MarketParams { c1: 4.0, c2: 16.0, ..MarketParams::baseline() };
        let r = theorem_prices(TheoremId::T5a, &p).unwrap();
        assert!(close(r.p1 - r.p2, 0.5 * (4.0 - 16.0), 1e-12));
    }

    #[test]
    fn degenerate_theta_is_an_error() {
        let p = MarketParams { theta_l: 1.0, ..MarketParams::baseline() };
        assert!(matches!(eq_t1(&p), Err(Error::DegenerateParams(_))));
    }

    #[test]
    fn edge_lambda_equals_b_stays_finite() {
        let p = MarketParams { lambda_l: 0.4, theta_l: 1e-9, ..MarketParams::baseline() };
        let r = eq_t2(&p).unwrap();
        assert!(r.prices.r1_vars().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn theorem_does_not_apply_to_foreign_subgame() {
        let p = MarketParams::baseline();
        let err = evaluate(
            TheoremId::T1,
            &p,
            &Scenario::bundle(false, true),
            &Default::default(),
            &Default::default(),
        );
        assert!(err.is_err());
    }
}
