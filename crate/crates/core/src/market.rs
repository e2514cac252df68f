//! Market primitives: parameters, scenarios, posted prices, the price-matching
//! mapping to effective prices, and the seven segment demand functions.
//!
//! Demands are affine in prices and may go negative; admissibility of a price
//! vector is decided by the equilibrium layers, not here.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demand, sensitivity, complementarity, and cost parameters of the duopoly.
///
/// Field names follow the usual transliteration: `a_l_*` are loyal
/// price-unaware bases, `a_q_*` loyal price-aware bases, `a_s` the strategic
/// base; `i1`, `i2`, `ib` index retailer 1's items and bundle and `jb` retailer
/// 2's bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub a_l_i1: f64,
    pub a_l_i2: f64,
    pub a_l_ib: f64,
    pub a_l_jb: f64,
    pub a_q_ib: f64,
    pub a_q_jb: f64,
    pub a_s: f64,
    pub b_l: f64,
    pub b_s: f64,
    pub theta_l: f64,
    pub lambda_l: f64,
    pub c1: f64,
    pub c2: f64,
    /// Share of tied strategic demand served by retailer 1.
    pub alpha: f64,
}

/// Names accepted by [`MarketParams::get`] / [`MarketParams::set`], in
/// declaration order.
pub const PARAM_NAMES: [&str; 14] = [
    "a_l_i1", "a_l_i2", "a_l_ib", "a_l_jb", "a_q_ib", "a_q_jb", "a_s", "b_l", "b_s", "theta_l",
    "lambda_l", "c1", "c2", "alpha",
];

impl MarketParams {
    /// Symmetric baseline used by the numerical experiments: every base 100,
    /// `b_l = b_s = 0.4`, `theta_l = 0.5`, `lambda_l = 0.3`, unit costs 10 and
    /// an even split of tied strategic demand.
    pub fn baseline() -> Self {
        Self {
            a_l_i1: 100.0,
            a_l_i2: 100.0,
            a_l_ib: 100.0,
            a_l_jb: 100.0,
            a_q_ib: 100.0,
            a_q_jb: 100.0,
            a_s: 100.0,
            b_l: 0.4,
            b_s: 0.4,
            theta_l: 0.5,
            lambda_l: 0.3,
            c1: 10.0,
            c2: 10.0,
            alpha: 0.5,
        }
    }

    /// Combined unit cost of the two items.
    pub fn bundle_cost(&self) -> f64 {
        self.c1 + self.c2
    }

    /// Shorthand `b_l + lambda_l`.
    pub fn t1(&self) -> f64 {
        self.b_l + self.lambda_l
    }

    /// Shorthand `b_l * theta_l + lambda_l`.
    pub fn t2(&self) -> f64 {
        self.b_l * self.theta_l + self.lambda_l
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "a_l_i1" => self.a_l_i1,
            "a_l_i2" => self.a_l_i2,
            "a_l_ib" => self.a_l_ib,
            "a_l_jb" => self.a_l_jb,
            "a_q_ib" => self.a_q_ib,
            "a_q_jb" => self.a_q_jb,
            "a_s" => self.a_s,
            "b_l" => self.b_l,
            "b_s" => self.b_s,
            "theta_l" => self.theta_l,
            "lambda_l" => self.lambda_l,
            "c1" => self.c1,
            "c2" => self.c2,
            "alpha" => self.alpha,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "a_l_i1" => &mut self.a_l_i1,
            "a_l_i2" => &mut self.a_l_i2,
            "a_l_ib" => &mut self.a_l_ib,
            "a_l_jb" => &mut self.a_l_jb,
            "a_q_ib" => &mut self.a_q_ib,
            "a_q_jb" => &mut self.a_q_jb,
            "a_s" => &mut self.a_s,
            "b_l" => &mut self.b_l,
            "b_s" => &mut self.b_s,
            "theta_l" => &mut self.theta_l,
            "lambda_l" => &mut self.lambda_l,
            "c1" => &mut self.c1,
            "c2" => &mut self.c2,
            "alpha" => &mut self.alpha,
            other => return Err(Error::UnknownParameter(other.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Checks every standing assumption on the parameters.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in PARAM_NAMES.iter().zip(self.values()) {
            validate_field(name, value)?;
        }
        if self.b_l < self.lambda_l {
            return Err(Error::InvalidParams {
                field: "lambda_l",
                reason: format!(
                    "requires b_l >= lambda_l, got b_l = {} < {}",
                    self.b_l, self.lambda_l
                ),
            });
        }
        Ok(())
    }

    fn values(&self) -> [f64; 14] {
        [
            self.a_l_i1,
            self.a_l_i2,
            self.a_l_ib,
            self.a_l_jb,
            self.a_q_ib,
            self.a_q_jb,
            self.a_s,
            self.b_l,
            self.b_s,
            self.theta_l,
            self.lambda_l,
            self.c1,
            self.c2,
            self.alpha,
        ]
    }
}

/// Checks the single-field invariants of one named parameter. The cross-field
/// requirement `b_l >= lambda_l` is only checked by [`MarketParams::validate`].
pub fn validate_field(name: &str, value: f64) -> Result<()> {
    let field = PARAM_NAMES
        .iter()
        .copied()
        .find(|n| *n == name)
        .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
    let bad = |reason: String| Err(Error::InvalidParams { field, reason });
    if !value.is_finite() {
        return bad(format!("must be finite, got {value}"));
    }
    match field {
        "b_l" | "b_s" | "lambda_l" if value <= 0.0 => bad(format!("must be > 0, got {value}")),
        "theta_l" if !(value > 0.0 && value < 1.0) => {
            bad(format!("must lie strictly inside (0, 1), got {value}"))
        }
        "c1" | "c2" if value < 0.0 => bad(format!("unit cost must be >= 0, got {value}")),
        "alpha" if !(0.0..=1.0).contains(&value) => {
            bad(format!("must lie in [0, 1], got {value}"))
        }
        f if f.starts_with("a_") && value < 0.0 => {
            bad(format!("demand base must be >= 0, got {value}"))
        }
        _ => Ok(()),
    }
}

impl Default for MarketParams {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Bundling choice of retailer 1 plus both retailers' price-matching choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub bundling: bool,
    pub pmg_r1: bool,
    pub pmg_r2: bool,
}

impl Scenario {
    /// Mixed bundling with the given guarantees.
    pub fn bundle(pmg_r1: bool, pmg_r2: bool) -> Self {
        Self { bundling: true, pmg_r1, pmg_r2 }
    }

    /// Pure components. Price matching only exists at the bundle level, so both
    /// flags are cleared.
    pub fn no_bundle() -> Self {
        Self { bundling: false, pmg_r1: false, pmg_r2: false }
    }

    /// Builds a scenario and canonicalizes the guarantee flags when bundling is off.
    pub fn new(bundling: bool, pmg_r1: bool, pmg_r2: bool) -> Self {
        if bundling {
            Self::bundle(pmg_r1, pmg_r2)
        } else {
            Self::no_bundle()
        }
    }

    /// The four bundling subgames followed by the no-bundling benchmark.
    pub fn all() -> [Scenario; 5] {
        [
            Self::bundle(true, true),
            Self::bundle(true, false),
            Self::bundle(false, true),
            Self::bundle(false, false),
            Self::no_bundle(),
        ]
    }

    /// Short label such as `CM,CM`, `NCM,CM` or `NoBundle`.
    pub fn label(&self) -> String {
        if !self.bundling {
            return "NoBundle".to_string();
        }
        let flag = |f: bool| if f { "CM" } else { "NCM" };
        format!("{},{}", flag(self.pmg_r1), flag(self.pmg_r2))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Posted prices. `pb1` is present exactly when retailer 1 bundles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    pub p1: f64,
    pub p2: f64,
    pub pb1: Option<f64>,
    pub pb2: f64,
}

impl PriceVector {
    pub fn bundled(p1: f64, p2: f64, pb1: f64, pb2: f64) -> Self {
        Self { p1, p2, pb1: Some(pb1), pb2 }
    }

    pub fn unbundled(p1: f64, p2: f64, pb2: f64) -> Self {
        Self { p1, p2, pb1: None, pb2 }
    }

    /// Price at which retailer 1 sells both items: its bundle price, or the
    /// sum of the item prices without bundling.
    pub fn r1_bundle_equivalent(&self) -> f64 {
        self.pb1.unwrap_or(self.p1 + self.p2)
    }

    /// Retailer 1's own price variables: `[p1, p2, pb1]` or `[p1, p2]`.
    pub fn r1_vars(&self) -> Vec<f64> {
        match self.pb1 {
            Some(pb1) => vec![self.p1, self.p2, pb1],
            None => vec![self.p1, self.p2],
        }
    }

    /// Inverse of [`PriceVector::r1_vars`].
    pub fn from_r1_vars(vars: &[f64], pb2: f64) -> Self {
        match vars {
            [p1, p2, pb1] => Self::bundled(*p1, *p2, *pb1, pb2),
            [p1, p2] => Self::unbundled(*p1, *p2, pb2),
            _ => panic!("retailer 1 has two or three price variables, got {}", vars.len()),
        }
    }

    /// Sup-norm distance over all posted prices.
    pub fn sup_distance(&self, other: &PriceVector) -> f64 {
        let mut d = (self.p1 - other.p1)
            .abs()
            .max((self.p2 - other.p2).abs())
            .max((self.pb2 - other.pb2).abs());
        if let (Some(a), Some(b)) = (self.pb1, other.pb1) {
            d = d.max((a - b).abs());
        }
        d
    }

    /// Largest absolute posted price, used to scale relative comparisons.
    pub fn sup_norm(&self) -> f64 {
        let mut m = self.p1.abs().max(self.p2.abs()).max(self.pb2.abs());
        if let Some(pb1) = self.pb1 {
            m = m.max(pb1.abs());
        }
        m
    }

    /// Checks finiteness and that `pb1` is present exactly when bundling.
    pub fn check_for(&self, scenario: &Scenario) -> Result<()> {
        let finite = |field: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPrices { field, reason: format!("must be finite, got {v}") })
            }
        };
        finite("p1", self.p1)?;
        finite("p2", self.p2)?;
        finite("pb2", self.pb2)?;
        match (scenario.bundling, self.pb1) {
            (true, Some(pb1)) => finite("pb1", pb1),
            (true, None) => Err(Error::MissingBundlePrice),
            (false, Some(_)) => Err(Error::UnexpectedBundlePrice),
            (false, None) => Ok(()),
        }
    }
}

/// Price-ordering regime between retailer 1's bundle-equivalent price and
/// retailer 2's bundle price. A tie belongs to [`Regime::R1High`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// Retailer 1's bundle-equivalent price is at or above retailer 2's.
    R1High,
    /// Retailer 1's bundle-equivalent price is strictly below retailer 2's.
    R1Low,
}

impl Regime {
    pub fn of(r1_price: f64, r2_price: f64) -> Self {
        if r1_price >= r2_price {
            Regime::R1High
        } else {
            Regime::R1Low
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Regime::R1High => "R1_HIGH",
            Regime::R1Low => "R1_LOW",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivePrices {
    /// Bundle price paid by retailer 1's loyal price-aware customers.
    pub tilde_pb1: f64,
    /// Bundle price paid by retailer 2's loyal price-aware customers.
    pub tilde_pb2: f64,
    /// Lowest bundle-equivalent price seen by strategic customers.
    pub hat_pb: f64,
    pub regime: Regime,
}

/// Applies the price-matching case table to posted prices.
pub fn effective_prices(scenario: &Scenario, prices: &PriceVector) -> Result<EffectivePrices> {
    prices.check_for(scenario)?;
    let x1 = prices.r1_bundle_equivalent();
    let pb2 = prices.pb2;
    let regime = Regime::of(x1, pb2);
    let eff = if scenario.bundling {
        EffectivePrices {
            tilde_pb1: if scenario.pmg_r1 && x1 >= pb2 { pb2 } else { x1 },
            tilde_pb2: if scenario.pmg_r2 && pb2 > x1 { x1 } else { pb2 },
            hat_pb: x1.min(pb2),
            regime,
        }
    } else {
        // Guarantees only operate on bundles, so none apply without one.
        EffectivePrices { tilde_pb1: x1, tilde_pb2: pb2, hat_pb: x1.min(pb2), regime }
    };
    Ok(eff)
}

/// Effective prices of a fixed regime branch, evaluated even when the posted
/// prices lie outside that regime. Inside the regime this agrees with
/// [`effective_prices`].
pub fn branch_effective_prices(
    scenario: &Scenario,
    prices: &PriceVector,
    regime: Regime,
) -> EffectivePrices {
    let x1 = prices.r1_bundle_equivalent();
    let pb2 = prices.pb2;
    match (scenario.bundling, regime) {
        (true, Regime::R1High) => EffectivePrices {
            tilde_pb1: if scenario.pmg_r1 { pb2 } else { x1 },
            tilde_pb2: pb2,
            hat_pb: pb2,
            regime,
        },
        (true, Regime::R1Low) => EffectivePrices {
            tilde_pb1: x1,
            tilde_pb2: if scenario.pmg_r2 { x1 } else { pb2 },
            hat_pb: x1,
            regime,
        },
        (false, Regime::R1High) => {
            EffectivePrices { tilde_pb1: x1, tilde_pb2: pb2, hat_pb: pb2, regime }
        }
        (false, Regime::R1Low) => {
            EffectivePrices { tilde_pb1: x1, tilde_pb2: pb2, hat_pb: x1, regime }
        }
    }
}

/// Quantities demanded by each segment at one price vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub d_l_i1: f64,
    pub d_l_i2: f64,
    pub d_l_ib: f64,
    pub d_q_ib: f64,
    pub d_l_jb: f64,
    pub d_q_jb: f64,
    pub d_s: f64,
}

impl DemandProfile {
    pub const LABELS: [&'static str; 7] =
        ["d_l_i1", "d_l_i2", "d_l_ib", "d_q_ib", "d_l_jb", "d_q_jb", "d_s"];

    pub fn as_array(&self) -> [f64; 7] {
        [self.d_l_i1, self.d_l_i2, self.d_l_ib, self.d_q_ib, self.d_l_jb, self.d_q_jb, self.d_s]
    }

    pub fn min(&self) -> f64 {
        self.as_array().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates the seven linear segment demands. `eff` must come from the same
/// prices (either [`effective_prices`] or a [`branch_effective_prices`]
/// branch); no truncation at zero is applied.
pub fn demands(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    eff: &EffectivePrices,
) -> DemandProfile {
    let MarketParams { b_l, b_s, theta_l, lambda_l, .. } = *params;
    let (p1, p2) = (prices.p1, prices.p2);
    let d_l_jb = params.a_l_jb - b_l * prices.pb2;
    let d_q_jb = params.a_q_jb - b_l * eff.tilde_pb2;
    let d_s = params.a_s - b_s * eff.hat_pb;
    match prices.pb1.filter(|_| scenario.bundling) {
        Some(pb1) => {
            let discount = pb1 - p1 - p2;
            DemandProfile {
                d_l_i1: params.a_l_i1 - b_l * p1 - b_l * theta_l * p2 + lambda_l * discount,
                d_l_i2: params.a_l_i2 - b_l * theta_l * p1 - b_l * p2 + lambda_l * discount,
                d_l_ib: params.a_l_ib - b_l * pb1 - lambda_l * discount,
                d_q_ib: params.a_q_ib - b_l * eff.tilde_pb1
                    + lambda_l * (p1 + p2 - eff.tilde_pb1),
                d_l_jb,
                d_q_jb,
                d_s,
            }
        }
        None => {
            let sum = p1 + p2;
            DemandProfile {
                d_l_i1: params.a_l_i1 - b_l * p1 - b_l * theta_l * p2,
                d_l_i2: params.a_l_i2 - b_l * theta_l * p1 - b_l * p2,
                d_l_ib: params.a_l_ib - b_l * sum,
                d_q_ib: params.a_q_ib - b_l * sum,
                d_l_jb,
                d_q_jb,
                d_s,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matched_bundle_price_when_r1_is_dearer() {
        let prices = PriceVector::bundled(99.05, 99.05, 162.05, 135.0);
        let eff = effective_prices(&Scenario::bundle(true, true), &prices).unwrap();
        assert_eq!(eff.tilde_pb1, 135.0);
        assert_eq!(eff.tilde_pb2, 135.0);
        assert_eq!(eff.hat_pb, 135.0);
        assert_eq!(eff.regime, Regime::R1High);
    }

    #[test]
    fn no_guarantee_means_posted_prices() {
        let prices = PriceVector::bundled(80.0, 80.0, 100.0, 100.0);
        let eff = effective_prices(&Scenario::bundle(false, false), &prices).unwrap();
        assert_eq!((eff.tilde_pb1, eff.tilde_pb2, eff.hat_pb), (100.0, 100.0, 100.0));
    }

    #[test]
    fn unbundled_uses_component_sum() {
        let prices = PriceVector::unbundled(73.18, 73.18, 135.0);
        let eff = effective_prices(&Scenario::no_bundle(), &prices).unwrap();
        assert_eq!(eff.hat_pb, 135.0);
        assert_eq!(eff.regime, Regime::R1High);
        assert_eq!(eff.tilde_pb2, 135.0);
        // Flags are ignored without bundling.
        let eff2 = effective_prices(&Scenario::new(false, true, true), &prices).unwrap();
        assert_eq!(eff, eff2);
    }

    #[test]
    fn r2_guarantee_matches_strictly_lower_rival() {
        let prices = PriceVector::bundled(80.0, 80.0, 120.0, 130.0);
        let eff = effective_prices(&Scenario::bundle(false, true), &prices).unwrap();
        assert_eq!(eff.tilde_pb2, 120.0);
        assert_eq!(eff.tilde_pb1, 120.0);
        assert_eq!(eff.regime, Regime::R1Low);
    }

    #[test]
    fn tie_is_labelled_high() {
        let prices = PriceVector::bundled(80.0, 80.0, 130.0, 130.0);
        let eff = effective_prices(&Scenario::bundle(true, true), &prices).unwrap();
        assert_eq!(eff.regime, Regime::R1High);
    }

    #[test]
    fn rejects_malformed_prices() {
        let s = Scenario::bundle(true, true);
        let nan = PriceVector::bundled(f64::NAN, 1.0, 1.0, 1.0);
        assert!(matches!(effective_prices(&s, &nan), Err(Error::InvalidPrices { .. })));
        let missing = PriceVector::unbundled(1.0, 1.0, 1.0);
        assert_eq!(effective_prices(&s, &missing), Err(Error::MissingBundlePrice));
        let extra = PriceVector::bundled(1.0, 1.0, 1.0, 1.0);
        assert_eq!(
            effective_prices(&Scenario::no_bundle(), &extra),
            Err(Error::UnexpectedBundlePrice)
        );
    }

    #[test]
    fn symmetric_baseline_demands() {
        let params = MarketParams::baseline();
        let s = Scenario::bundle(true, true);
        let prices = PriceVector::bundled(99.05, 99.05, 162.05, 135.0);
        let eff = effective_prices(&s, &prices).unwrap();
        let d = demands(&params, &s, &prices, &eff);
        assert_close(d.d_l_i1, 29.75, 0.01);
        assert_close(d.d_l_ib, 46.0, 0.01);
        assert_close(d.d_q_ib, 64.93, 0.01);
        assert_close(d.d_s, 46.0, 1e-12);
    }

    #[test]
    fn zero_prices_return_bases() {
        let params = MarketParams::baseline();
        for s in Scenario::all() {
            let prices = if s.bundling {
                PriceVector::bundled(0.0, 0.0, 0.0, 0.0)
            } else {
                PriceVector::unbundled(0.0, 0.0, 0.0)
            };
            let eff = effective_prices(&s, &prices).unwrap();
            let d = demands(&params, &s, &prices, &eff);
            assert!(d.as_array().iter().all(|&q| q == 100.0), "{s}: {d:?}");
        }
    }

    #[test]
    fn no_bundle_coupling_without_lambda() {
        let params = MarketParams { lambda_l: 0.0, ..MarketParams::baseline() };
        let s = Scenario::bundle(false, false);
        let d_at = |pb1: f64| {
            let prices = PriceVector::bundled(50.0, 60.0, pb1, 90.0);
            let eff = effective_prices(&s, &prices).unwrap();
            demands(&params, &s, &prices, &eff).d_l_i1
        };
        assert_eq!(d_at(80.0), d_at(105.0));
    }

    #[test]
    fn item_demand_slope_is_own_plus_bundle_sensitivity() {
        let params = MarketParams::baseline();
        let s = Scenario::bundle(true, false);
        let d = |p1: f64| {
            let prices = PriceVector::bundled(p1, 70.0, 120.0, 110.0);
            let eff = effective_prices(&s, &prices).unwrap();
            demands(&params, &s, &prices, &eff).d_l_i1
        };
        let h = 1e-3;
        let slope = (d(60.0 + h) - d(60.0 - h)) / (2.0 * h);
        assert_close(slope, -(params.b_l + params.lambda_l), 1e-10);
    }

    #[test]
    fn validate_names_violated_invariant() {
        let p = MarketParams { theta_l: 1.0, ..MarketParams::baseline() };
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("theta_l"), "{err}");
        let p = MarketParams { lambda_l: 0.5, ..MarketParams::baseline() };
        assert!(p.validate().unwrap_err().to_string().contains("b_l >= lambda_l"));
        assert!(MarketParams::baseline().validate().is_ok());
    }

    #[test]
    fn get_set_round_trip() {
        let mut p = MarketParams::baseline();
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            p.set(name, i as f64 + 0.5).unwrap();
            assert_eq!(p.get(name).unwrap(), i as f64 + 0.5);
        }
        assert!(p.set("beta", 1.0).is_err());
    }
}
