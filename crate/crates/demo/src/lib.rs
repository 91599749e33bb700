//! Browser bindings: the Laplace transform `ψ` of a calibrated environment,
//! the height process of a forest walk, and the reduction of a small
//! visited forest to its leafed forest with edge lengths.
//!
//! Build with `wasm-pack build crates/demo --target web --out-dir www/pkg`
//! and serve `crates/demo/www`.

use serde_json::json;
use treewalk::reduce::{build_fr, optional_line, RangeForest, VertexType};
use treewalk::rng::{derive_seed, stream, Domain};
use treewalk::walk::{forest_heights, TreeArena, WalkMode};
use treewalk::calibrate_two_point;
use wasm_bindgen::prelude::*;

const FIGURE_FOREST: &str = include_str!("../../core/data/figure1_forest.csv");
const MAX_STEPS: usize = 2_000_000;

/// `ψ(t)` on `points` values of `t` in `[0, max(3, κ + 1)]` for the
/// two-point environment calibrated to `kappa`, as JSON
/// `{kappa, marks, prob_low, t, psi}`.
pub fn psi_curve_json(kappa: f64, points: usize) -> Result<String, String> {
    let model = calibrate_two_point(kappa, 2).map_err(|e| e.to_string())?;
    let points = points.clamp(2, 2000);
    let t_max = (kappa + 1.0).max(3.0);
    let t: Vec<f64> = (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect();
    let psi: Vec<f64> = t.iter().map(|&t| model.psi(t)).collect();
    Ok(json!({ "kappa": model.kappa().finite(), "model": model, "t": t, "psi": psi }).to_string())
}

/// Heights `|X_0|, .., |X_steps|` of a forest walk.
pub fn walk_heights_vec(kappa: f64, steps: usize, seed: u64) -> Result<Vec<u32>, String> {
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    let model = calibrate_two_point(kappa, 2).map_err(|e| e.to_string())?;
    let mut arena = TreeArena::new(model, derive_seed(seed, Domain::Environment, 0), WalkMode::Forest);
    let mut rng = stream(seed, Domain::Walk, 0);
    let mut h = Vec::with_capacity(steps + 1);
    forest_heights(&mut arena, steps, &mut rng, |_, _, g| h.push(g)).map_err(|e| e.to_string())?;
    Ok(h)
}

fn figure_forest() -> Result<RangeForest, String> {
    let mut parent = Vec::new();
    let mut beta = Vec::new();
    let mut label = Vec::new();
    for line in FIGURE_FOREST.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        label.push(c[0].parse::<u64>().map_err(|e| e.to_string())?);
        parent.push(c[1].parse::<usize>().ok());
        beta.push(c[2].parse::<u64>().map_err(|e| e.to_string())?);
    }
    RangeForest::from_parents(&parent, &beta, &label).map_err(|e| e.to_string())
}

/// The example forest with its local times, the leafed forest it reduces
/// to, and the optional line of the root, as JSON.
pub fn figure_reduction_json() -> Result<String, String> {
    let f = figure_forest()?;
    let fr = build_fr(&f);
    let hr = fr.weighted_depths();
    let visited: Vec<_> = (0..f.len())
        .map(|v| {
            json!({
                "label": f.label[v],
                "parent": f.parent[v].map(|p| f.label[p]),
                "beta": f.beta[v],
                "depth": f.depth[v],
            })
        })
        .collect();
    let reduced: Vec<_> = fr
        .lex_order()
        .iter()
        .map(|&v| {
            json!({
                "label": f.label[fr.source[v]],
                "parent": fr.parent[v].map(|p| f.label[fr.source[p]]),
                "type": if fr.kind[v] == VertexType::One { 1 } else { 0 },
                "ell": fr.ell[v],
                "height": hr[v],
            })
        })
        .collect();
    let line = optional_line(&f, 0);
    let labels = |v: &[usize]| v.iter().map(|&i| f.label[i]).collect::<Vec<_>>();
    Ok(json!({
        "visited": visited,
        "reduced": reduced,
        "root_block": labels(&line.block),
        "root_line": labels(&line.line),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn psi_curve(kappa: f64, points: usize) -> Result<String, JsError> {
    psi_curve_json(kappa, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn walk_heights(kappa: f64, steps: usize, seed: u64) -> Result<Vec<u32>, JsError> {
    walk_heights_vec(kappa, steps, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn figure_reduction() -> Result<String, JsError> {
    figure_reduction_json().map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn psi_is_one_at_one_and_kappa() {
        let v: Value = serde_json::from_str(&psi_curve_json(1.5, 301).unwrap()).unwrap();
        assert!((v["kappa"].as_f64().unwrap() - 1.5).abs() < 1e-9);
        let t = v["t"].as_array().unwrap();
        let psi = v["psi"].as_array().unwrap();
        assert_eq!(t.len(), 301);
        let at = |x: f64| {
            let i = t.iter().position(|s| (s.as_f64().unwrap() - x).abs() < 1e-12).unwrap();
            psi[i].as_f64().unwrap()
        };
        assert!((at(1.0) - 1.0).abs() < 1e-9);
        assert!((at(0.0) - 2.0).abs() < 1e-12);
        assert!(psi_curve_json(0.5, 10).is_err());
    }

    #[test]
    fn heights_are_a_nearest_neighbour_path() {
        let h = walk_heights_vec(1.5, 5000, 3).unwrap();
        assert_eq!(h.len(), 5001);
        assert_eq!(h[0], 0);
        assert!(h.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
        assert_eq!(h, walk_heights_vec(1.5, 5000, 3).unwrap());
        assert!(walk_heights_vec(1.5, MAX_STEPS + 1, 3).is_err());
    }

    #[test]
    fn figure_heights_survive_the_reduction() {
        let v: Value = serde_json::from_str(&figure_reduction_json().unwrap()).unwrap();
        let visited = v["visited"].as_array().unwrap();
        let reduced = v["reduced"].as_array().unwrap();
        assert_eq!(visited.len(), reduced.len());
        for (a, b) in visited.iter().zip(reduced) {
            assert_eq!(a["depth"], b["height"]);
        }
        assert_eq!(v["root_line"], json!([2, 12, 14]));
    }
}
