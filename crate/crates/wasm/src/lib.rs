//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every exported function returns a JSON string; the `*_json` twins hold the
//! logic and run natively in tests.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use cate_jma::baselines::{select_min, smoothed_weights, ScoreTable};
use cate_jma::jma::{cv_value, fit_candidates, per_model_estimates, solve_weights, SolverOptions};
use cate_jma::matching::{
    adaptive_match, default_side_length, fit_cube_transform, partition_and_match,
};
use cate_jma::sim::{default_candidates, Dgp, ErrorDesign, Example, TrueEffect};
use cate_jma::{JackknifeSystem, WeightVector};

const GRID: usize = 61;

fn dgp(rho: f64, design: u8, c: f64) -> Result<Dgp, String> {
    let design = ErrorDesign::try_from(design).map_err(|e| e.to_string())?;
    Dgp::new(rho, design, c).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    label: String,
    weights: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FitOutput {
    candidates: Vec<String>,
    pairs: usize,
    side_length: f64,
    cv: f64,
    /// Grid over u2 with u1 held at 0.
    grid: Vec<f64>,
    truth: Vec<f64>,
    curves: Vec<Curve>,
}

/// Simulates one sample and fits JMA and its competitors.
pub fn fit_json(
    example: u8,
    n: usize,
    c: f64,
    rho: f64,
    design: u8,
    seed: u64,
) -> Result<String, String> {
    let example = Example::try_from(example).map_err(|e| e.to_string())?;
    let specs = default_candidates(example);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = dgp(rho, design, c)?
        .sample(n, &mut rng)
        .map_err(|e| e.to_string())?;
    let fits = fit_candidates(&data, &specs).map_err(|e| e.to_string())?;

    let dims: Vec<usize> = (0..data.p()).collect();
    let scaled = fit_cube_transform(data.covariates(), &dims)
        .map_err(|e| e.to_string())?
        .apply(data.covariates());
    let h = default_side_length(n, dims.len());
    let pairs = adaptive_match(&scaled, data.treated(), h, specs.len(), &mut rng)
        .map_err(|e| e.to_string())?;
    let side_length = pairs.side_length;
    let sys = JackknifeSystem::from_fits(&data, &fits, &pairs).map_err(|e| e.to_string())?;
    let sol = solve_weights(&sys, &SolverOptions::default()).map_err(|e| e.to_string())?;

    let grid: Vec<f64> = (0..GRID)
        .map(|i| -2.5 + 5.0 * i as f64 / (GRID - 1) as f64)
        .collect();
    let points = DMatrix::from_fn(GRID, data.p(), |i, j| if j == 1 { grid[i] } else { 0.0 });
    let truth = TrueEffect { c }.eval_rows(&points);
    let per_model = per_model_estimates(&fits, &points).map_err(|e| e.to_string())?;

    let k = specs.len();
    let scores = ScoreTable::new(&fits, &sys);
    let mut methods = vec![
        ("JMA".to_string(), sol.weights.clone()),
        (
            "AIC".to_string(),
            WeightVector::vertex(select_min(&scores.aic), k),
        ),
        (
            "BIC".to_string(),
            WeightVector::vertex(select_min(&scores.bic), k),
        ),
        ("SAIC".to_string(), smoothed_weights(&scores.aic)),
        ("SBIC".to_string(), smoothed_weights(&scores.bic)),
        (
            "TECV".to_string(),
            WeightVector::vertex(select_min(&scores.tecv), k),
        ),
    ];
    methods.extend((0..k).map(|j| (format!("M{}", j + 1), WeightVector::vertex(j, k))));
    let curves = methods
        .into_iter()
        .map(|(label, w)| Curve {
            values: (per_model.clone() * nalgebra::DVector::from_column_slice(w.as_slice()))
                .iter()
                .copied()
                .collect(),
            weights: w.into_vec(),
            label,
        })
        .collect();

    let out = FitOutput {
        candidates: specs.iter().map(|s| s.to_string()).collect(),
        pairs: sys.n_pairs(),
        side_length,
        cv: sol.objective,
        grid,
        truth,
        curves,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MatchOutput {
    /// Scaled (u1, u2) per observation.
    points: Vec<[f64; 2]>,
    treated: Vec<bool>,
    pairs: Vec<[usize; 2]>,
    side_length: f64,
    occupied_cells: usize,
    skipped_cells: usize,
}

/// Partitions the unit square spanned by (u1, u2) into cells of side `h`
/// and draws one treated/control pair per cell. `h <= 0` picks the default.
pub fn match_json(n: usize, h: f64, rho: f64, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = dgp(rho, 1, 1.0)?
        .sample(n, &mut rng)
        .map_err(|e| e.to_string())?;
    let dims = [0, 1];
    let scaled = fit_cube_transform(data.covariates(), &dims)
        .map_err(|e| e.to_string())?
        .apply(data.covariates());
    let h = if h > 0.0 {
        h.min(1.0)
    } else {
        default_side_length(n, dims.len())
    };
    let set =
        partition_and_match(&scaled, data.treated(), h, &mut rng).map_err(|e| e.to_string())?;
    let out = MatchOutput {
        points: (0..n).map(|i| [scaled[(i, 0)], scaled[(i, 1)]]).collect(),
        treated: data.treated().to_vec(),
        pairs: set.pairs.iter().map(|p| [p.treated, p.control]).collect(),
        side_length: set.side_length,
        occupied_cells: set.occupied_cells,
        skipped_cells: set.skipped_cells,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SurfaceOutput {
    candidates: Vec<String>,
    resolution: usize,
    /// `(w1, w2, cv)` on the barycentric lattice with step `1 / resolution`.
    cells: Vec<[f64; 3]>,
    optimum: Vec<f64>,
    optimum_cv: f64,
}

/// `CV(w)` over the simplex of three candidates from the second example
/// set: the correct model and two misspecified ones.
pub fn surface_json(n: usize, c: f64, resolution: usize, seed: u64) -> Result<String, String> {
    if !(2..=200).contains(&resolution) {
        return Err(format!("resolution must be in 2..=200, got {resolution}"));
    }
    let specs: Vec<_> = default_candidates(Example::Two)
        .into_iter()
        .take(3)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = dgp(0.0, 1, c)?
        .sample(n, &mut rng)
        .map_err(|e| e.to_string())?;
    let fits = fit_candidates(&data, &specs).map_err(|e| e.to_string())?;
    let dims: Vec<usize> = (0..data.p()).collect();
    let scaled = fit_cube_transform(data.covariates(), &dims)
        .map_err(|e| e.to_string())?
        .apply(data.covariates());
    let h = default_side_length(n, dims.len());
    let pairs = adaptive_match(&scaled, data.treated(), h, specs.len(), &mut rng)
        .map_err(|e| e.to_string())?;
    let sys = JackknifeSystem::from_fits(&data, &fits, &pairs).map_err(|e| e.to_string())?;
    let sol = solve_weights(&sys, &SolverOptions::default()).map_err(|e| e.to_string())?;

    let r = resolution as f64;
    let mut cells = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for i in 0..=resolution {
        for j in 0..=resolution - i {
            let (w1, w2) = (i as f64 / r, j as f64 / r);
            let w3 = (1.0 - w1 - w2).max(0.0);
            let w = WeightVector::new(vec![w1, w2, w3]).map_err(|e| e.to_string())?;
            cells.push([w1, w2, cv_value(&w, &sys).map_err(|e| e.to_string())?]);
        }
    }
    let out = SurfaceOutput {
        candidates: specs.iter().map(|s| s.to_string()).collect(),
        resolution,
        cells,
        optimum: sol.weights.into_vec(),
        optimum_cv: sol.objective,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn fit(
    example: u8,
    n: u32,
    c: f64,
    rho: f64,
    design: u8,
    seed: u32,
) -> Result<String, JsError> {
    fit_json(example, n as usize, c, rho, design, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn match_preview(n: u32, h: f64, rho: f64, seed: u32) -> Result<String, JsError> {
    match_json(n as usize, h, rho, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cv_surface(n: u32, c: f64, resolution: u32, seed: u32) -> Result<String, JsError> {
    surface_json(n as usize, c, resolution as usize, seed as u64).map_err(|e| JsError::new(&e))
}
