//! Independent equilibrium oracle: exact best responses by regime-restricted
//! quadratic programming, and iterated best response to a fixed point.
//!
//! Nothing here uses the closed forms or the hand-written first-order
//! conditions. Each branch profit is a concave quadratic in the responder's
//! own prices; its coefficients are recovered from [`regime_profits`] by
//! central differences, which are exact for quadratics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, PriceVector, Regime, Scenario};
use crate::profit::{profits, regime_profits};

/// Which price-ordering regimes a best response may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeScope {
    /// The global best response over both regimes, compared on true profit.
    All,
    /// Restrict both retailers to the closure of one regime.
    Only(Regime),
}

impl RegimeScope {
    fn regimes(self) -> Vec<Regime> {
        match self {
            RegimeScope::All => vec![Regime::R1High, Regime::R1Low],
            RegimeScope::Only(r) => vec![r],
        }
    }
}

/// `f0 + g'x + x'Hx/2` over the responder's own prices.
#[derive(Debug, Clone)]
struct Quadratic {
    f0: f64,
    g: DVector<f64>,
    h: DMatrix<f64>,
}

impl Quadratic {
    fn from_fn(n: usize, f: impl Fn(&[f64]) -> Result<f64>) -> Result<Self> {
        const H: f64 = 1.0;
        let at = |pairs: &[(usize, f64)]| {
            let mut x = vec![0.0; n];
            for &(i, v) in pairs {
                x[i] += v;
            }
            f(&x)
        };
        let f0 = at(&[])?;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let (fp, fm) = (at(&[(i, H)])?, at(&[(i, -H)])?);
            g[i] = (fp - fm) / (2.0 * H);
            h[(i, i)] = (fp - 2.0 * f0 + fm) / (H * H);
            for j in 0..i {
                let v = (at(&[(i, H), (j, H)])? - at(&[(i, H), (j, -H)])?
                    - at(&[(i, -H), (j, H)])?
                    + at(&[(i, -H), (j, -H)])?)
                    / (4.0 * H * H);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(Self { f0, g, h })
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.f0 + self.g.dot(x) + 0.5 * x.dot(&(&self.h * x))
    }

    fn negative_definite(&self) -> bool {
        (-&self.h).cholesky().is_some()
    }

    /// Maximizes the quadratic subject to `a x <= b` by enumerating active
    /// sets. With a strictly concave objective the optimum is the best
    /// feasible KKT point among all subsets of at most `n` constraints.
    fn maximize(&self, a: &[Vec<f64>], b: &[f64]) -> Option<DVector<f64>> {
        let n = self.g.len();
        let m = a.len();
        let scale = 1.0 + b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let feasible = |x: &DVector<f64>| {
            a.iter().zip(b).all(|(row, &bi)| {
                row.iter().zip(x.iter()).map(|(r, v)| r * v).sum::<f64>() <= bi + 1e-9 * scale
            })
        };
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let k = active.len();
            if k > n {
                continue;
            }
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-&self.g));
            for (r, &ci) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = a[ci][j];
                    kkt[(j, n + r)] = -a[ci][j];
                }
                rhs[n + r] = b[ci];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let x = sol.rows(0, n).into_owned();
            if !feasible(&x) {
                continue;
            }
            let v = self.value(&x);
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, x));
            }
        }
        best.map(|(_, x)| x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R1Response {
    /// `[p1, p2, pb1]`, or `[p1, p2]` without bundling.
    pub vars: Vec<f64>,
    pub regime: Regime,
    pub profit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Response {
    pub pb2: f64,
    pub regime: Regime,
    pub profit: f64,
}

/// Retailer 1's best response to `pb2`, with prices kept nonnegative and the
/// bundle no dearer than its items.
pub fn best_response_r1(
    params: &MarketParams,
    scenario: &Scenario,
    pb2: f64,
    scope: RegimeScope,
) -> Result<R1Response> {
    best_response_r1_with(params, scenario, pb2, scope, true)
}

/// As [`best_response_r1`]; `price_bounds = false` drops every constraint
/// except the regime closure.
pub fn best_response_r1_with(
    params: &MarketParams,
    scenario: &Scenario,
    pb2: f64,
    scope: RegimeScope,
    price_bounds: bool,
) -> Result<R1Response> {
    if !pb2.is_finite() {
        return Err(Error::InvalidPrices { field: "pb2", reason: format!("must be finite, got {pb2}") });
    }
    let n = if scenario.bundling { 3 } else { 2 };
    let mut best: Option<R1Response> = None;
    for regime in scope.regimes() {
        let q = Quadratic::from_fn(n, |x| {
            let prices = PriceVector::from_r1_vars(x, pb2);
            Ok(regime_profits(params, scenario, &prices, regime)?.pi_r1)
        })?;
        if !q.negative_definite() {
            return Err(Error::SingularSystem { retailer: "r1", regime });
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        if scenario.bundling {
            match regime {
                Regime::R1High => a.push(vec![0.0, 0.0, -1.0]),
                Regime::R1Low => a.push(vec![0.0, 0.0, 1.0]),
            }
        } else {
            match regime {
                Regime::R1High => a.push(vec![-1.0, -1.0]),
                Regime::R1Low => a.push(vec![1.0, 1.0]),
            }
        }
        b.push(if regime == Regime::R1High { -pb2 } else { pb2 });
        if price_bounds {
            if scenario.bundling {
                a.push(vec![-1.0, -1.0, 1.0]);
                b.push(0.0);
            }
            for i in 0..n {
                let mut row = vec![0.0; n];
                row[i] = -1.0;
                a.push(row);
                b.push(0.0);
            }
        }
        let Some(x) = q.maximize(&a, &b) else { continue };
        let vars: Vec<f64> = x.iter().copied().collect();
        let profit = match scope {
            RegimeScope::Only(_) => q.value(&x),
            RegimeScope::All => {
                profits(params, scenario, &PriceVector::from_r1_vars(&vars, pb2))?.pi_r1
            }
        };
        if best.as_ref().map_or(true, |b| profit > b.profit) {
            best = Some(R1Response { vars, regime, profit });
        }
    }
    best.ok_or_else(|| {
        Error::DegenerateParams(format!("no admissible price for retailer 1 against pb2 = {pb2}"))
    })
}

/// Retailer 2's best response to retailer 1's prices (`r1.pb2` is ignored),
/// with `pb2` kept nonnegative.
pub fn best_response_r2(
    params: &MarketParams,
    scenario: &Scenario,
    r1: &PriceVector,
    scope: RegimeScope,
) -> Result<R2Response> {
    best_response_r2_with(params, scenario, r1, scope, true)
}

pub fn best_response_r2_with(
    params: &MarketParams,
    scenario: &Scenario,
    r1: &PriceVector,
    scope: RegimeScope,
    price_bounds: bool,
) -> Result<R2Response> {
    r1.check_for(scenario)?;
    let x1 = r1.r1_bundle_equivalent();
    let mut best: Option<R2Response> = None;
    for regime in scope.regimes() {
        let q = Quadratic::from_fn(1, |x| {
            let prices = PriceVector { pb2: x[0], ..*r1 };
            Ok(regime_profits(params, scenario, &prices, regime)?.pi_r2)
        })?;
        if !q.negative_definite() {
            return Err(Error::SingularSystem { retailer: "r2", regime });
        }
        let (mut a, mut b) = match regime {
            Regime::R1High => (vec![vec![1.0]], vec![x1]),
            Regime::R1Low => (vec![vec![-1.0]], vec![-x1]),
        };
        if price_bounds {
            a.push(vec![-1.0]);
            b.push(0.0);
        }
        let Some(x) = q.maximize(&a, &b) else { continue };
        let pb2 = x[0];
        let profit = match scope {
            RegimeScope::Only(_) => q.value(&x),
            RegimeScope::All => profits(params, scenario, &PriceVector { pb2, ..*r1 })?.pi_r2,
        };
        if best.as_ref().map_or(true, |b| profit > b.profit) {
            best = Some(R2Response { pb2, regime, profit });
        }
    }
    best.ok_or_else(|| {
        Error::DegenerateParams(format!("no admissible price for retailer 2 against {x1}"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_iters: usize,
    /// Sup-norm tolerance on prices.
    pub tol_fp: f64,
    /// Weight on the new best response, in (0, 1].
    pub damping: f64,
    /// Starting prices; `None` means each unit cost plus one.
    pub initial: Option<PriceVector>,
    pub scope: RegimeScope,
    /// Keep prices nonnegative and the bundle no dearer than its items.
    pub price_bounds: bool,
    pub record_trajectory: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_fp: 1e-8,
            damping: 1.0,
            initial: None,
            scope: RegimeScope::All,
            price_bounds: true,
            record_trajectory: false,
        }
    }
}

impl OracleConfig {
    pub fn pinned(regime: Regime) -> Self {
        Self { scope: RegimeScope::Only(regime), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_fp > 0.0) {
            return Err(Error::Config(format!("tol_fp must be > 0, got {}", self.tol_fp)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Default starting point: every posted price one unit above its cost.
pub fn cost_plus_one(params: &MarketParams, scenario: &Scenario) -> PriceVector {
    let c = params.bundle_cost();
    if scenario.bundling {
        PriceVector::bundled(params.c1 + 1.0, params.c2 + 1.0, c + 1.0, c + 1.0)
    } else {
        PriceVector::unbundled(params.c1 + 1.0, params.c2 + 1.0, c + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub converged: bool,
    pub prices: PriceVector,
    pub iterations: usize,
    pub trajectory: Vec<PriceVector>,
    pub regime: Regime,
    /// Terminal prices sit on the boundary between the two regimes.
    pub on_kink: bool,
    /// Sup-norm gap between the terminal prices and both best responses.
    pub residual: f64,
    /// Set when a best response could not be computed.
    pub error: Option<String>,
}

fn damp(old: f64, new: f64, delta: f64) -> f64 {
    if delta == 1.0 {
        new
    } else {
        (1.0 - delta) * old + delta * new
    }
}

/// Sup-norm gap between `prices` and the best responses to them.
pub fn best_response_residual(
    params: &MarketParams,
    scenario: &Scenario,
    prices: &PriceVector,
    cfg: &OracleConfig,
) -> Result<f64> {
    let br1 = best_response_r1_with(params, scenario, prices.pb2, cfg.scope, cfg.price_bounds)?;
    let br2 = best_response_r2_with(params, scenario, prices, cfg.scope, cfg.price_bounds)?;
    let own = prices.r1_vars();
    Ok(br1
        .vars
        .iter()
        .zip(&own)
        .map(|(a, b)| (a - b).abs())
        .fold((br2.pb2 - prices.pb2).abs(), f64::max))
}

/// Damped alternating best response. Non-convergence is reported in the
/// outcome rather than as an error.
pub fn find_fixed_point(
    params: &MarketParams,
    scenario: &Scenario,
    cfg: &OracleConfig,
) -> Result<OracleOutcome> {
    cfg.validate()?;
    let scenario = Scenario::new(scenario.bundling, scenario.pmg_r1, scenario.pmg_r2);
    let mut prices = cfg.initial.unwrap_or_else(|| cost_plus_one(params, &scenario));
    prices.check_for(&scenario)?;
    let mut trajectory = Vec::new();
    if cfg.record_trajectory {
        trajectory.push(prices);
    }
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut error = None;

    while iterations < cfg.max_iters {
        iterations += 1;
        let step = (|| -> Result<PriceVector> {
            let br1 =
                best_response_r1_with(params, &scenario, prices.pb2, cfg.scope, cfg.price_bounds)?;
            let own = prices.r1_vars();
            let mixed: Vec<f64> =
                own.iter().zip(&br1.vars).map(|(o, n)| damp(*o, *n, cfg.damping)).collect();
            let mut next = PriceVector::from_r1_vars(&mixed, prices.pb2);
            let br2 =
                best_response_r2_with(params, &scenario, &next, cfg.scope, cfg.price_bounds)?;
            next.pb2 = damp(prices.pb2, br2.pb2, cfg.damping);
            Ok(next)
        })();
        let next = match step {
            Ok(p) => p,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        let change = next.sup_distance(&prices);
        prices = next;
        if cfg.record_trajectory {
            trajectory.push(prices);
        }
        if change < cfg.tol_fp {
            match best_response_residual(params, &scenario, &prices, cfg) {
                Ok(r) => residual = r,
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
            if residual < cfg.tol_fp {
                break;
            }
        }
    }

    let x1 = prices.r1_bundle_equivalent();
    let on_kink = (x1 - prices.pb2).abs() <= 1e-7 * (1.0 + prices.pb2.abs());
    Ok(OracleOutcome {
        converged: error.is_none() && residual < cfg.tol_fp,
        prices,
        iterations,
        trajectory,
        regime: Regime::of(x1, prices.pb2),
        on_kink,
        residual,
        error,
    })
}

/// Runs [`find_fixed_point`] from the four corners of a price box and keeps
/// the distinct converged outcomes.
pub fn find_fixed_points(
    params: &MarketParams,
    scenario: &Scenario,
    cfg: &OracleConfig,
) -> Result<Vec<OracleOutcome>> {
    let scenario = Scenario::new(scenario.bundling, scenario.pmg_r1, scenario.pmg_r2);
    let low = cost_plus_one(params, &scenario);
    let top = [
        params.a_l_i1,
        params.a_l_i2,
        params.a_l_ib,
        params.a_l_jb,
        params.a_q_ib,
        params.a_q_jb,
        params.a_s,
    ]
    .into_iter()
    .fold(0.0_f64, f64::max)
        / params.b_l
        + params.bundle_cost();
    let high = if scenario.bundling {
        PriceVector::bundled(top, top, top, top)
    } else {
        PriceVector::unbundled(top / 2.0, top / 2.0, top)
    };
    let mut found: Vec<OracleOutcome> = Vec::new();
    for (r1_start, r2_start) in [(low, low), (low, high), (high, low), (high, high)] {
        let initial = PriceVector { pb2: r2_start.pb2, ..r1_start };
        let out = find_fixed_point(params, &scenario, &OracleConfig { initial: Some(initial), ..*cfg })?;
        if !out.converged {
            continue;
        }
        let tol = 1e-6 * (1.0 + out.prices.sup_norm());
        if found.iter().all(|f| f.prices.sup_distance(&out.prices) > tol) {
            found.push(out);
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{theorem_prices, TheoremId};

    #[test]
    fn r1_response_reproduces_t1() {
        let p = MarketParams::baseline();
        let s = Scenario::bundle(true, true);
        let t1 = theorem_prices(TheoremId::T1, &p).unwrap();
        let br = best_response_r1(&p, &s, t1.pb2, RegimeScope::All).unwrap();
        for (a, b) in br.vars.iter().zip(t1.r1_vars()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((br.vars[0] - br.vars[1]).abs() < 1e-9);
    }

    #[test]
    fn r2_response_to_table_row() {
        let p = MarketParams::baseline();
        let s = Scenario::bundle(true, true);
        let r1 = PriceVector::bundled(99.05, 99.05, 162.05, 0.0);
        let br = best_response_r2(&p, &s, &r1, RegimeScope::All).unwrap();
        assert!((br.pb2 - 135.0).abs() < 1e-9, "{br:?}");
    }

    #[test]
    fn r2_without_guarantee_below_rival() {
        let p = MarketParams { a_l_jb: 120.0, a_q_jb: 90.0, ..MarketParams::baseline() };
        let s = Scenario::bundle(true, false);
        let r1 = PriceVector::bundled(60.0, 60.0, 100.0, 0.0);
        let br = best_response_r2(&p, &s, &r1, RegimeScope::Only(Regime::R1Low)).unwrap();
        let expected = 0.5 * ((120.0 + 90.0) / (2.0 * 0.4) + 20.0);
        assert!((br.pb2 - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_bases_stationary_point_is_half_cost() {
        let mut p = MarketParams::baseline();
        for name in ["a_l_i1", "a_l_i2", "a_l_ib", "a_l_jb", "a_q_ib", "a_q_jb", "a_s"] {
            p.set(name, 0.0).unwrap();
        }
        let s = Scenario::bundle(false, false);
        let r1 = PriceVector::bundled(50.0, 50.0, 90.0, 0.0);
        let br = best_response_r2(&p, &s, &r1, RegimeScope::Only(Regime::R1High)).unwrap();
        assert!((br.pb2 - p.bundle_cost() / 2.0).abs() < 1e-9, "{br:?}");
        // With retailer 1 priced below that point the closure clamps pb2 to it.
        let r1 = PriceVector::bundled(2.0, 2.0, 4.0, 0.0);
        let br = best_response_r2(&p, &s, &r1, RegimeScope::Only(Regime::R1High)).unwrap();
        assert!((br.pb2 - 4.0).abs() < 1e-9);
        let r1 = PriceVector::bundled(0.0, 0.0, 0.0, 0.0);
        let br = best_response_r2(&p, &s, &r1, RegimeScope::Only(Regime::R1High)).unwrap();
        assert_eq!(br.pb2, 0.0);
    }

    #[test]
    fn baseline_cm_cm_fixed_point() {
        let p = MarketParams::baseline();
        let out = find_fixed_point(&p, &Scenario::bundle(true, true), &OracleConfig::default())
            .unwrap();
        assert!(out.converged, "{out:?}");
        let t1 = theorem_prices(TheoremId::T1, &p).unwrap();
        assert!(out.prices.sup_distance(&t1) < 1e-4);
    }

    #[test]
    fn no_bundle_fixed_point() {
        let p = MarketParams::baseline();
        let out = find_fixed_point(&p, &Scenario::no_bundle(), &OracleConfig::pinned(Regime::R1High))
            .unwrap();
        assert!(out.converged);
        assert!((out.prices.p1 - 73.1818).abs() < 1e-4);
        assert!((out.prices.pb2 - 135.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let p = MarketParams::baseline();
        let cfg = OracleConfig { damping: 0.0, ..Default::default() };
        assert!(find_fixed_point(&p, &Scenario::no_bundle(), &cfg).is_err());
    }

    #[test]
    fn corner_starts_agree_on_unique_equilibrium() {
        let p = MarketParams::baseline();
        let found =
            find_fixed_points(&p, &Scenario::bundle(true, true), &OracleConfig::default()).unwrap();
        assert_eq!(found.len(), 1);
    }
}
