//! Random parameter draws shared by the integration and acceptance tests.
#![allow(dead_code)]

use bundling_pmg::conditions::{check_condition_set, ConditionSetId};
use bundling_pmg::MarketParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Any valid market, not tied to a condition set.
pub fn any_params(rng: &mut TestRng) -> MarketParams {
    let b_l = rng.gen_range(0.05..1.0);
    MarketParams {
        a_l_i1: rng.gen_range(0.0..300.0),
        a_l_i2: rng.gen_range(0.0..300.0),
        a_l_ib: rng.gen_range(0.0..300.0),
        a_l_jb: rng.gen_range(0.0..300.0),
        a_q_ib: rng.gen_range(0.0..300.0),
        a_q_jb: rng.gen_range(0.0..300.0),
        a_s: rng.gen_range(0.0..300.0),
        b_l,
        b_s: rng.gen_range(0.05..1.0),
        theta_l: rng.gen_range(0.01..0.99),
        lambda_l: rng.gen_range(0.01..=1.0) * b_l,
        c1: rng.gen_range(0.0..40.0),
        c2: rng.gen_range(0.0..40.0),
        alpha: rng.gen_range(0.0..=1.0),
    }
}

/// Bases ordered so that retailer 1's segments dominate (sets A, B, E).
fn high_bases(rng: &mut TestRng, p: &mut MarketParams) {
    p.a_l_jb = rng.gen_range(20.0..100.0);
    p.a_q_jb = p.a_l_jb + rng.gen_range(0.0..60.0);
    let jb = p.a_l_jb + p.a_q_jb;
    p.a_q_ib = p.a_q_jb + rng.gen_range(0.0..80.0);
    p.a_l_ib = jb * rng.gen_range(0.5..1.5);
    p.a_l_i1 = 2.0 / 3.0 * jb * rng.gen_range(1.0..2.0);
    p.a_l_i2 = 2.0 / 3.0 * jb * rng.gen_range(1.0..2.0);
    p.a_s = rng.gen_range(20.0..200.0);
    p.c1 = rng.gen_range(0.0..30.0);
    p.c2 = rng.gen_range(0.0..30.0);
}

/// Bases ordered so that retailer 2's segments dominate and costs are high
/// relative to bases (sets C, D, F).
fn low_bases(rng: &mut TestRng, p: &mut MarketParams) {
    p.c1 = rng.gen_range(20.0..120.0);
    p.c2 = rng.gen_range(20.0..120.0);
    let c = p.c1 + p.c2;
    p.a_l_jb = c * p.b_l * rng.gen_range(0.3..1.0);
    p.a_q_jb = p.a_l_jb * rng.gen_range(0.5..1.0);
    p.a_l_ib = p.a_q_jb * rng.gen_range(0.1..1.0) * (1.0 + p.theta_l) / 2.0;
    p.a_q_ib = p.a_l_ib * rng.gen_range(0.1..1.0);
    p.a_l_i1 = p.a_l_jb * rng.gen_range(0.05..0.6);
    p.a_l_i2 = p.a_l_jb * rng.gen_range(0.05..0.6);
    p.a_s = rng.gen_range(1.0..100.0);
}

/// Draws a market satisfying every inequality of `set`. The ratio `b_l/b_s`
/// is chosen by scanning a log grid and picking a random admissible value.
pub fn params_for_set(rng: &mut TestRng, set: ConditionSetId) -> MarketParams {
    for _ in 0..100_000 {
        let mut p = MarketParams {
            b_l: rng.gen_range(0.1..1.0),
            theta_l: rng.gen_range(0.05..0.95),
            alpha: rng.gen_range(0.0..1.0),
            ..MarketParams::baseline()
        };
        p.lambda_l = p.b_l * rng.gen_range(0.05..1.0);
        match set {
            ConditionSetId::A | ConditionSetId::B | ConditionSetId::E => high_bases(rng, &mut p),
            _ => low_bases(rng, &mut p),
        }
        let admissible: Vec<f64> = (0..200)
            .map(|i| 10f64.powf(-1.5 + 3.0 * i as f64 / 199.0))
            .filter(|r| {
                let q = MarketParams { b_s: p.b_l / r, ..p };
                q.validate().is_ok() && check_condition_set(set, &q).all_satisfied
            })
            .collect();
        if admissible.is_empty() {
            continue;
        }
        let r = admissible[rng.gen_range(0..admissible.len())];
        p.b_s = p.b_l / r;
        return p;
    }
    panic!("no draw satisfies condition set {set}");
}
