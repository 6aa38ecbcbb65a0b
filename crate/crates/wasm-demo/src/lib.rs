//! Browser bindings for three small demos: a regret curve, a conditional
//! gradient path and noisy tree releases. Errors surface as JS exceptions.

use privbandit::bench_audit::{AdversarySpec, Experiment};
use privbandit::frank_wolfe::solve;
use privbandit::tree_agg::TreeAggregator;
use privbandit::{DecisionSet, DomainKind, FeasibilityMode, NoiseSpec, Privacy, RandomSource};
use wasm_bindgen::prelude::*;

fn js(e: privbandit::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn domain_2d(name: &str) -> Result<DecisionSet, JsError> {
    match name {
        "l2_ball" => DecisionSet::l2_ball(2, 1.0),
        "simplex" => DecisionSet::simplex(2),
        "hypercube" => DecisionSet::hypercube(2, 2.0),
        "l1_ball" => DecisionSet::new(2, DomainKind::L1Ball { radius: 1.0 }),
        other => return Err(JsError::new(&format!("unknown domain {other}"))),
    }
    .map_err(js)
}

/// Cumulative regret per step of the bandit on the unit disc against a fixed
/// linear loss. `epsilon <= 0` disables privacy. The horizon is rounded down
/// to a perfect square.
#[wasm_bindgen]
pub fn regret_curve(horizon: usize, epsilon: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let privacy = if epsilon > 0.0 { Privacy::Pure { epsilon } } else { Privacy::None };
    let exp = Experiment {
        domain: DecisionSet::l2_ball(2, 1.0).map_err(js)?,
        adversary: AdversarySpec::fixed_linear(vec![1.0, -0.5], 1.0),
        horizon: privbandit::private_bandit::round_down_to_square(horizon.max(1)),
        privacy,
        feasibility: FeasibilityMode::EnlargedDomain,
        diameter: None,
        comparator_iterations: 1,
    };
    let outcome = exp.run(&RandomSource::new(seed)).map_err(js)?;
    Ok(outcome.trace.regret_curve)
}

/// Iterates `x_1, ..., x_k` of conditional gradient towards the projection of
/// `(vx, vy)`, flattened as `[x, y, x, y, ...]`.
#[wasm_bindgen]
pub fn frank_wolfe_path(domain: &str, vx: f64, vy: f64, k: usize) -> Result<Vec<f64>, JsError> {
    let set = domain_2d(domain)?;
    let mut path = Vec::with_capacity(2 * k);
    for i in 1..=k {
        let p = solve(&set, &[vx, vy], i).map_err(js)?.point;
        path.extend_from_slice(&[p[0], p[1]]);
    }
    Ok(path)
}

/// Exact and privately released prefix sums of a scalar stream with Laplace
/// scale `lambda`, flattened as `[exact_1, noisy_1, exact_2, noisy_2, ...]`.
#[wasm_bindgen]
pub fn tree_releases(stream: &[f64], lambda: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let noise = if lambda > 0.0 { NoiseSpec::laplace(1, lambda) } else { Ok(NoiseSpec::zero(1)) }.map_err(js)?;
    let (mut tree, _) = TreeAggregator::init(stream.len(), 1, noise, RandomSource::new(seed)).map_err(js)?;
    let mut exact = 0.0;
    let mut out = Vec::with_capacity(2 * stream.len());
    for (i, &x) in stream.iter().enumerate() {
        exact += x;
        let s = tree.add_and_release(&[x], i + 1).map_err(js)?;
        out.extend_from_slice(&[exact, s[0]]);
    }
    Ok(out)
}
