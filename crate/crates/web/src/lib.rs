//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function is a thin wrapper over a plain Rust function that
//! returns `Result<Vec<f64>, String>`, so the logic is testable natively.

use dhg::measures::GaussianMeasure;
use dhg::oracle::{grid_from_fn, lq_solve, noise_on_grid, FdConfig, FdPath, FdScheme};
use dhg::rng::TAG_SAMPLE;
use dhg::spectral::{eigenvalue, TWO_PI};
use dhg::{HVec, MeasureId, NoiseId, NoiseModel};
use wasm_bindgen::prelude::*;

const MAX_MODES: usize = 2000;
const MAX_POINTS: usize = 2001;

fn noise_id(name: &str) -> Result<NoiseId, String> {
    name.parse::<NoiseId>().map_err(|e| e.to_string())
}

fn check_size(what: &str, value: usize, lo: usize, hi: usize) -> Result<(), String> {
    if value < lo || value > hi {
        return Err(format!("{what} must be in {lo}..={hi}, got {value}"));
    }
    Ok(())
}

/// `[λ_n…, M_n…, Q_n…, R_n…]`, each block of length `modes`, for a zero target.
pub fn oracle_table(gamma: f64, lambda: f64, noise: &str, modes: usize) -> Result<Vec<f64>, String> {
    check_size("modes", modes, 1, MAX_MODES)?;
    let sigma2 = NoiseModel::from_id(noise_id(noise)?, modes).mode_variances();
    let sol = lq_solve(gamma, lambda, &HVec::zeros(modes), &sigma2, modes).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = (1..=modes).map(eigenvalue).collect();
    out.extend_from_slice(&sol.m);
    out.extend_from_slice(&sol.q);
    out.extend_from_slice(&sol.r);
    Ok(out)
}

/// One draw from a Gaussian measure, evaluated on `points` nodes of `[0, 2π]`.
pub fn sample_field(measure: &str, modes: usize, seed: u64, points: usize) -> Result<Vec<f64>, String> {
    check_size("modes", modes, 1, MAX_MODES)?;
    check_size("points", points, 2, MAX_POINTS)?;
    let id = match measure {
        "tcc" => MeasureId::Tcc,
        "wn" => MeasureId::Wn,
        "burgers4" => MeasureId::Burgers4,
        other => return Err(format!("unknown measure `{other}`")),
    };
    let mu = GaussianMeasure::from_id(id, modes).map_err(|e| e.to_string())?;
    Ok(mu.draw_at(seed, TAG_SAMPLE, 0, 0).eval_grid(points))
}

/// Snapshots of one stochastic Burgers path from `amplitude · sin ξ/√π`.
///
/// Returns `snapshots` blocks of `points` values each, taken every
/// `steps / (snapshots − 1)` steps starting at `t = 0`, followed by the
/// discounted cost accumulated over the run.
pub fn burgers_snapshots(
    amplitude: f64,
    noise: &str,
    seed: u64,
    points: usize,
    steps: usize,
    snapshots: usize,
) -> Result<Vec<f64>, String> {
    check_size("points", points, 3, 401)?;
    check_size("snapshots", snapshots, 2, 64)?;
    check_size("steps", steps, 1, 200_000)?;
    let cfg = FdConfig {
        grid_points: points,
        dt: 1e-4,
        steps,
        mc_count: 1,
        seed,
        gamma: 1.0,
        nonlinear: true,
        scheme: FdScheme::SemiImplicit,
    };
    let noise = match noise_id(noise)? {
        NoiseId::None => Vec::new(),
        NoiseId::OneDimensional => vec![grid_from_fn(|_| 1.0 / TWO_PI.sqrt(), points)],
        NoiseId::TraceClass => noise_on_grid(&NoiseModel::trace_class(100), points),
    };
    let x0 = grid_from_fn(|xi| amplitude * xi.sin() / std::f64::consts::PI.sqrt(), points);
    let mut path = FdPath::new(&x0, &noise, &cfg, 0);
    let every = (steps / (snapshots - 1)).max(1);
    let mut out = Vec::with_capacity(snapshots * points + 1);
    out.extend_from_slice(path.state());
    let mut done = 0;
    for s in 1..snapshots {
        let target = if s == snapshots - 1 { steps } else { (s * every).min(steps) };
        while done < target {
            path.step().map_err(|e| e.to_string())?;
            done += 1;
        }
        out.extend_from_slice(path.state());
    }
    out.push(path.cost());
    Ok(out)
}

#[wasm_bindgen(js_name = oracleTable)]
pub fn oracle_table_js(gamma: f64, lambda: f64, noise: &str, modes: usize) -> Result<Vec<f64>, JsError> {
    oracle_table(gamma, lambda, noise, modes).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleField)]
pub fn sample_field_js(measure: &str, modes: usize, seed: u32, points: usize) -> Result<Vec<f64>, JsError> {
    sample_field(measure, modes, seed as u64, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = burgersSnapshots)]
pub fn burgers_snapshots_js(
    amplitude: f64,
    noise: &str,
    seed: u32,
    points: usize,
    steps: usize,
    snapshots: usize,
) -> Result<Vec<f64>, JsError> {
    burgers_snapshots(amplitude, noise, seed as u64, points, steps, snapshots).map_err(|e| JsError::new(&e))
}
