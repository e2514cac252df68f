//! Equilibrium selection per subgame and the bundling / price-matching
//! strategy comparison for retailer 1.

use serde::{Deserialize, Serialize};

use crate::closed_form::{evaluate, EquilibriumResult, FeasibilityTol, TheoremId};
use crate::conditions::ConditionOptions;
use crate::error::Result;
use crate::market::{MarketParams, Scenario};
use crate::oracle::{find_fixed_point, OracleConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptions {
    pub tol: FeasibilityTol,
    pub conditions: ConditionOptions,
    /// Cross-check every feasible candidate against the oracle.
    pub oracle_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Warning {
    /// Admitted although its sufficient condition set does not hold.
    ConditionsNotVerified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm price gap relative to `max(1, |closed-form prices|)`.
    pub max_rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub theorem: TheoremId,
    pub result: Option<EquilibriumResult>,
    /// Set when the closed form could not be evaluated.
    pub error: Option<String>,
    pub warnings: Vec<Warning>,
    pub oracle: Option<OracleCheck>,
}

impl Candidate {
    pub fn feasible(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.feasible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgameSolution {
    pub scenario: Scenario,
    pub chosen: Option<EquilibriumResult>,
    pub candidates: Vec<Candidate>,
}

impl SubgameSolution {
    pub fn exists(&self) -> bool {
        self.chosen.is_some()
    }

    pub fn chosen_candidate(&self) -> Option<&Candidate> {
        let theorem = self.chosen.as_ref()?.theorem;
        self.candidates.iter().find(|c| c.theorem == theorem)
    }
}

fn oracle_check(params: &MarketParams, r: &EquilibriumResult) -> OracleCheck {
    let out = find_fixed_point(params, &r.scenario, &OracleConfig::pinned(r.regime));
    match out {
        Ok(out) => OracleCheck {
            converged: out.converged,
            iterations: out.iterations,
            max_rel_dev: out.prices.sup_distance(&r.prices) / r.prices.sup_norm().max(1.0),
        },
        Err(_) => OracleCheck { converged: false, iterations: 0, max_rel_dev: f64::INFINITY },
    }
}

/// Evaluates every theorem covering `scenario` and keeps the feasible one
/// with the highest profit for retailer 1.
pub fn solve_subgame(
    params: &MarketParams,
    scenario: &Scenario,
    opts: &PolicyOptions,
) -> SubgameSolution {
    let scenario = Scenario::new(scenario.bundling, scenario.pmg_r1, scenario.pmg_r2);
    let mut candidates: Vec<Candidate> = TheoremId::candidates(&scenario)
        .into_iter()
        .map(|theorem| match evaluate(theorem, params, &scenario, &opts.conditions, &opts.tol) {
            Ok(r) => {
                let mut warnings = Vec::new();
                if r.feasible && !r.condition_report.all_satisfied {
                    warnings.push(Warning::ConditionsNotVerified);
                }
                let oracle = (opts.oracle_check && r.feasible).then(|| oracle_check(params, &r));
                Candidate { theorem, result: Some(r), error: None, warnings, oracle }
            }
            Err(e) => Candidate {
                theorem,
                result: None,
                error: Some(e.to_string()),
                warnings: Vec::new(),
                oracle: None,
            },
        })
        .collect();
    candidates.sort_by_key(|c| c.theorem);
    let chosen = select(candidates.iter().filter_map(|c| c.result.as_ref()));
    SubgameSolution { scenario, chosen, candidates }
}

/// Highest retailer-1 profit among feasible results; ties go to the lower
/// theorem number so the outcome does not depend on iteration order.
fn select<'a>(results: impl Iterator<Item = &'a EquilibriumResult>) -> Option<EquilibriumResult> {
    results
        .filter(|r| r.feasible)
        .fold(None::<&EquilibriumResult>, |best, r| match best {
            Some(b)
                if b.profits.pi_r1 > r.profits.pi_r1
                    || (b.profits.pi_r1 == r.profits.pi_r1 && b.theorem <= r.theorem) =>
            {
                Some(b)
            }
            _ => Some(r),
        })
        .cloned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    /// The four bundling subgames followed by no bundling.
    pub subgames: Vec<SubgameSolution>,
    /// Best retailer-1 profit over the bundling subgames.
    pub pi_bundle: Option<f64>,
    pub pi_nobundle: Option<f64>,
    pub delta_pi_b: Option<f64>,
    /// Bundling subgame attaining `pi_bundle`.
    pub best_pmg: Option<Scenario>,
    /// More than one bundling subgame attained `pi_bundle`.
    pub tie_break_applied: bool,
}

impl PolicyComparison {
    pub fn subgame(&self, scenario: &Scenario) -> Option<&SubgameSolution> {
        self.subgames.iter().find(|s| s.scenario == *scenario)
    }

    pub fn exists(&self, scenario: &Scenario) -> bool {
        self.subgame(scenario).is_some_and(|s| s.exists())
    }

    /// Both a bundling and a no-bundling equilibrium exist.
    pub fn both_exist(&self) -> bool {
        self.delta_pi_b.is_some()
    }
}

/// Preference among equally profitable guarantee pairs: fewer commitments
/// first, then lexicographic with no guarantee before a guarantee.
pub const TIE_ORDER: [Scenario; 4] = [
    Scenario { bundling: true, pmg_r1: false, pmg_r2: false },
    Scenario { bundling: true, pmg_r1: false, pmg_r2: true },
    Scenario { bundling: true, pmg_r1: true, pmg_r2: false },
    Scenario { bundling: true, pmg_r1: true, pmg_r2: true },
];

const TIE_REL_TOL: f64 = 1e-12;

pub fn compare_policies(params: &MarketParams, opts: &PolicyOptions) -> Result<PolicyComparison> {
    params.validate()?;
    let subgames: Vec<SubgameSolution> =
        Scenario::all().iter().map(|s| solve_subgame(params, s, opts)).collect();

    let bundle_profits: Vec<(Scenario, f64)> = TIE_ORDER
        .iter()
        .filter_map(|s| {
            let sol = subgames.iter().find(|g| g.scenario == *s)?;
            Some((*s, sol.chosen.as_ref()?.profits.pi_r1))
        })
        .collect();
    let pi_bundle = bundle_profits.iter().map(|(_, p)| *p).reduce(f64::max);
    let (best_pmg, tie_break_applied) = match pi_bundle {
        Some(top) => {
            let tied: Vec<Scenario> = bundle_profits
                .iter()
                .filter(|(_, p)| (top - p).abs() <= TIE_REL_TOL * top.abs().max(1.0))
                .map(|(s, _)| *s)
                .collect();
            (tied.first().copied(), tied.len() > 1)
        }
        None => (None, false),
    };
    let pi_nobundle = subgames
        .iter()
        .find(|g| !g.scenario.bundling)
        .and_then(|g| g.chosen.as_ref())
        .map(|r| r.profits.pi_r1);
    let delta_pi_b = pi_bundle.zip(pi_nobundle).map(|(b, n)| b - n);

    Ok(PolicyComparison {
        subgames,
        pi_bundle,
        pi_nobundle,
        delta_pi_b,
        best_pmg,
        tie_break_applied,
    })
}
