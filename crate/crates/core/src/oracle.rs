//! Ground truth for the benchmark problems.
//!
//! The heat problems decouple into one scalar linear–quadratic problem per
//! sine mode, so both the fixed-control cost `J(·; u)` and the optimal value
//! `V` are diagonal quadratics `Σ M_n x_n² + Q_n x_n + R_n`. The Burgers
//! problems have no closed form; [`fd_burgers_value`] estimates them by Monte
//! Carlo over a finite-difference discretization in physical space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgno::{Critic, CriticJet};
use crate::par;
use crate::residual::NoiseModel;
use crate::rng::{NormalStream, TAG_PATH};
use crate::spectral::{eigenvalue, HVec, TWO_PI};

fn check_gamma_lambda(gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn padded(values: &[f64], len: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.resize(len, 0.0);
    v
}

/// Per-mode coefficients of the optimal value `V(x) = Σ M_n x_n² + Q_n x_n + R_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqSolution {
    pub gamma: f64,
    pub lambda: f64,
    pub target: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

/// Solves the per-mode Riccati, linear and constant equations for `n = 1..=len`.
/// `target` and `sigma2` are zero-padded to `len`.
pub fn lq_solve(gamma: f64, lambda: f64, target: &HVec, sigma2: &[f64], len: usize) -> Result<LqSolution> {
    check_gamma_lambda(gamma, lambda)?;
    let target = padded(target.coeffs(), len);
    let sigma2 = padded(sigma2, len);
    let mut m = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    let mut r = Vec::with_capacity(len);
    for i in 0..len {
        let ln = eigenvalue(i + 1);
        let a = lambda * (2.0 * ln + gamma);
        // positive root of −M²/λ − (2λ_n + γ)M + 1 = 0, rationalized
        let mn = 2.0 * lambda / (a + (a * a + 4.0 * lambda).sqrt());
        let qn = -2.0 * target[i] / (ln + gamma + mn / lambda);
        let rn = (mn * sigma2[i] + target[i] * target[i] - qn * qn / (4.0 * lambda)) / gamma;
        m.push(mn);
        q.push(qn);
        r.push(rn);
    }
    Ok(LqSolution {
        gamma,
        lambda,
        target,
        sigma2,
        m,
        q,
        r,
    })
}

impl LqSolution {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Residuals of the three per-mode identities for 1-based mode `n`.
    pub fn identity_residuals(&self, n: usize) -> [f64; 3] {
        let i = n - 1;
        let (g, l, ln) = (self.gamma, self.lambda, eigenvalue(n));
        let (m, q, r) = (self.m[i], self.q[i], self.r[i]);
        let xb = self.target[i];
        [
            -m * m / l - (2.0 * ln + g) * m + 1.0,
            q * (ln + g + m / l) + 2.0 * xb,
            -g * r + m * self.sigma2[i] + xb * xb - q * q / (4.0 * l),
        ]
    }

    pub fn value(&self, x: &HVec) -> f64 {
        oracle_value(self, x)
    }

    pub fn control(&self, x: &HVec) -> HVec {
        oracle_control(self, x)
    }

    pub fn critic(&self) -> QuadraticCritic {
        QuadraticCritic {
            m: self.m.clone(),
            q: self.q.clone(),
            constant: self.r.iter().sum(),
        }
    }
}

/// `V(x) = Σ_{n≤N} M_n x_n² + Q_n x_n + R_n`.
pub fn oracle_value(sol: &LqSolution, x: &HVec) -> f64 {
    (0..sol.len())
        .map(|i| {
            let xn = x.coeff(i + 1);
            sol.m[i] * xn * xn + sol.q[i] * xn + sol.r[i]
        })
        .sum()
}

/// `u*_n = −(M_n/λ) x_n − Q_n/(2λ)`.
pub fn oracle_control(sol: &LqSolution, x: &HVec) -> HVec {
    HVec::from_coeffs(
        (0..sol.len())
            .map(|i| -sol.m[i] / sol.lambda * x.coeff(i + 1) - sol.q[i] / (2.0 * sol.lambda))
            .collect(),
    )
}

/// A diagonal quadratic `Σ M_n x_n² + Q_n x_n + c` used as a reference critic.
/// Its derivatives live on all `N` modes: `Dv = 2Mx + Q`, `D²v = diag(2M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCritic {
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    pub constant: f64,
}

impl QuadraticCritic {
    /// Cost `J(·; u)` of the constant-in-time control `u` for the heat problem,
    /// written as a quadratic in the initial condition.
    pub fn kolmogorov(
        control: &HVec,
        gamma: f64,
        lambda: f64,
        target: &HVec,
        sigma2: &[f64],
        len: usize,
    ) -> Result<Self> {
        check_gamma_lambda(gamma, lambda)?;
        let (u, xb, s2) = (
            padded(control.coeffs(), len),
            padded(target.coeffs(), len),
            padded(sigma2, len),
        );
        let mut m = Vec::with_capacity(len);
        let mut q = Vec::with_capacity(len);
        let mut constant = 0.0;
        for i in 0..len {
            let ln = eigenvalue(i + 1);
            let a = u[i] / ln;
            let slow = gamma + 2.0 * ln;
            let fast = gamma + ln;
            m.push(1.0 / slow);
            q.push(-2.0 * a / slow + 2.0 * (a - xb[i]) / fast);
            constant += a * a / slow - 2.0 * a * (a - xb[i]) / fast
                + ((a - xb[i]).powi(2) + lambda * u[i] * u[i]) / gamma
                + s2[i] / (gamma * slow);
        }
        Ok(Self { m, q, constant })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn eval(&self, x: &HVec) -> f64 {
        self.constant
            + self
                .m
                .iter()
                .zip(&self.q)
                .enumerate()
                .map(|(i, (m, q))| {
                    let xn = x.coeff(i + 1);
                    m * xn * xn + q * xn
                })
                .sum::<f64>()
    }

    pub fn gradient(&self, x: &HVec) -> Vec<f64> {
        self.m
            .iter()
            .zip(&self.q)
            .enumerate()
            .map(|(i, (m, q))| 2.0 * m * x.coeff(i + 1) + q)
            .collect()
    }

    /// Diagonal of `D²v`.
    pub fn hessian_diagonal(&self) -> Vec<f64> {
        self.m.iter().map(|m| 2.0 * m).collect()
    }
}

impl Critic for QuadraticCritic {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn value(&self, x: &HVec) -> Result<f64> {
        Ok(self.eval(x))
    }

    fn jet(&self, x: &HVec) -> Result<CriticJet> {
        let d = self.m.len();
        let mut hess = vec![0.0; d * d];
        for (i, m) in self.m.iter().enumerate() {
            hess[i * d + i] = 2.0 * m;
        }
        Ok(CriticJet {
            value: self.eval(x),
            grad: self.gradient(x),
            hess,
        })
    }
}

/// `J(x0; u)` for a control held constant in time, summed mode by mode from
/// the Itô-isometry closed form.
pub fn kolmogorov_value(
    x0: &HVec,
    control: &HVec,
    gamma: f64,
    lambda: f64,
    target: &HVec,
    sigma2: &[f64],
    len: usize,
) -> Result<f64> {
    check_gamma_lambda(gamma, lambda)?;
    Ok((1..=len)
        .map(|n| {
            let ln = eigenvalue(n);
            let f = x0.coeff(n);
            let u = control.coeff(n);
            let xb = target.coeff(n);
            let s2 = sigma2.get(n - 1).copied().unwrap_or(0.0);
            let a = u / ln;
            (f - a).powi(2) / (gamma + 2.0 * ln)
                + 2.0 * (f - a) * (a - xb) / (gamma + ln)
                + ((a - xb).powi(2) + lambda * u * u) / gamma
                + s2 / (gamma * (gamma + 2.0 * ln))
        })
        .sum())
}

/// `E ∫ e^{−γt} |x_t′|² dt` for the uncontrolled heat equation, i.e. the
/// Burgers cost with the nonlinearity switched off.
pub fn heat_energy_value(x0: &HVec, gamma: f64, sigma2: &[f64], len: usize) -> f64 {
    (1..=len)
        .map(|n| {
            let ln = eigenvalue(n);
            let f = x0.coeff(n);
            let s2 = sigma2.get(n - 1).copied().unwrap_or(0.0);
            ln * (f * f / (gamma + 2.0 * ln) + s2 / (gamma * (gamma + 2.0 * ln)))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    /// Explicit Euler–Maruyama.
    #[default]
    Explicit,
    /// Implicit diffusion, explicit nonlinearity and noise.
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub grid_points: usize,
    pub dt: f64,
    pub steps: usize,
    pub mc_count: usize,
    pub seed: u64,
    pub gamma: f64,
    /// Include `x x′`; off gives the heat equation with the same cost.
    pub nonlinear: bool,
    pub scheme: FdScheme,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            grid_points: 251,
            dt: 1e-4,
            steps: 100_000,
            mc_count: 1,
            seed: 0,
            gamma: 1.0,
            nonlinear: true,
            scheme: FdScheme::Explicit,
        }
    }
}

impl FdConfig {
    pub fn spacing(&self) -> f64 {
        TWO_PI / (self.grid_points - 1) as f64
    }

    /// `Δt · 2/h²`; the explicit scheme needs this at most 1.
    pub fn cfl_number(&self) -> f64 {
        let h = self.spacing();
        self.dt * 2.0 / (h * h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    pub cfl_number: f64,
    pub cfl_warning: bool,
    /// `e^{−γT}` at the horizon `T = steps · Δt`; multiply by a cost scale to bound the neglected tail.
    pub tail_factor: f64,
}

/// `f` sampled on the grid with both endpoints pinned to 0.
pub fn grid_from_fn<F: Fn(f64) -> f64>(f: F, points: usize) -> Vec<f64> {
    let h = TWO_PI / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|j| f(j as f64 * h)).collect();
    g[0] = 0.0;
    g[points - 1] = 0.0;
    g
}

/// Noise columns `s_i(ξ_j)` synthesized from their sine coefficients.
pub fn noise_on_grid(noise: &NoiseModel, points: usize) -> Vec<Vec<f64>> {
    noise
        .columns()
        .iter()
        .filter(|c| c.norm_sq() > 0.0)
        .map(|c| {
            let mut g = c.eval_grid(points);
            g[0] = 0.0;
            g[points - 1] = 0.0;
            g
        })
        .collect()
}

/// Discounted `∫ |x′|²` cost of the stochastic Burgers (or heat) equation from
/// `x0`, averaged over `mc_count` paths.
///
/// Space: `points` nodes on `[0, 2π]`, Dirichlet ends, centered differences for
/// `x″` and `x x′`. Time: `steps` steps of `Δt`, left-endpoint quadrature of
/// `e^{−γt} Σ_cells ((x_{j+1} − x_j)/h)² h`. Noise increments are
/// `√Δt Σ_i s_i ζ_i` with `s_i` given on the grid.
pub fn fd_burgers_value(x0: &[f64], noise: &[Vec<f64>], cfg: &FdConfig) -> Result<FdEstimate> {
    let g = cfg.grid_points;
    if g < 3 {
        return Err(Error::config("grid_points", "need at least 3 points"));
    }
    if x0.len() != g {
        return Err(Error::Shape(format!("initial condition has {} nodes, grid has {g}", x0.len())));
    }
    if let Some(c) = noise.iter().find(|c| c.len() != g) {
        return Err(Error::Shape(format!("noise column has {} nodes, grid has {g}", c.len())));
    }
    if cfg.mc_count == 0 {
        return Err(Error::config("mc_count", "must be positive"));
    }
    if !(cfg.dt > 0.0) || !(cfg.gamma > 0.0) {
        return Err(Error::Domain("dt and gamma must be positive".into()));
    }
    let paths = if noise.is_empty() { 1 } else { cfg.mc_count };
    let cfl = cfg.cfl_number();
    let results = par::map_indexed(paths, |path| simulate_path(x0, noise, cfg, path));
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / paths as f64;
    let std_error = if paths > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
        (var / paths as f64).sqrt()
    } else {
        0.0
    };
    Ok(FdEstimate {
        estimate: mean,
        std_error,
        paths,
        cfl_number: cfl,
        cfl_warning: cfg.scheme == FdScheme::Explicit && cfl > 1.0,
        tail_factor: (-cfg.gamma * cfg.dt * cfg.steps as f64).exp(),
    })
}

fn energy(x: &[f64], h: f64) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h
}

/// One sample path of the finite-difference scheme, advanced a step at a time.
pub struct FdPath<'a> {
    cfg: &'a FdConfig,
    noise: &'a [Vec<f64>],
    stream: NormalStream,
    x: Vec<f64>,
    next: Vec<f64>,
    z: Vec<f64>,
    c_prime: Vec<f64>,
    d_prime: Vec<f64>,
    step: usize,
    discount: f64,
    cost: f64,
    path: usize,
}

impl<'a> FdPath<'a> {
    /// `x0` and every noise column must have `cfg.grid_points` nodes.
    pub fn new(x0: &[f64], noise: &'a [Vec<f64>], cfg: &'a FdConfig, path: usize) -> Self {
        let g = cfg.grid_points;
        let mut x = x0.to_vec();
        x[0] = 0.0;
        x[g - 1] = 0.0;
        Self {
            cfg,
            noise,
            stream: NormalStream::new(cfg.seed, TAG_PATH, 1, path as u64),
            x,
            next: vec![0.0; g],
            z: vec![0.0; noise.len()],
            c_prime: vec![0.0; g],
            d_prime: vec![0.0; g],
            step: 0,
            discount: 1.0,
            cost: 0.0,
            path,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    /// Discounted cost accumulated so far.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn step(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let g = cfg.grid_points;
        let h = cfg.spacing();
        let dt = cfg.dt;
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let sqrt_dt = dt.sqrt();
        let (x, next) = (&self.x, &mut self.next);

        self.cost += self.discount * energy(x, h) * dt;
        self.discount *= (-cfg.gamma * dt).exp();

        self.stream.fill_normal(&mut self.z);
        for j in 1..g - 1 {
            let mut rhs = 0.0;
            if cfg.scheme == FdScheme::Explicit {
                rhs += (x[j + 1] - 2.0 * x[j] + x[j - 1]) * inv_h2;
            }
            if cfg.nonlinear {
                rhs += x[j] * (x[j + 1] - x[j - 1]) * inv_2h;
            }
            let mut dw = 0.0;
            for (col, zi) in self.noise.iter().zip(&self.z) {
                dw += col[j] * zi;
            }
            next[j] = x[j] + dt * rhs + sqrt_dt * dw;
        }
        next[0] = 0.0;
        next[g - 1] = 0.0;

        if cfg.scheme == FdScheme::SemiImplicit {
            // Thomas algorithm for (I − Δt ∂²) y = next with y_0 = y_{g-1} = 0
            let (diag, off) = (1.0 + 2.0 * dt * inv_h2, -dt * inv_h2);
            let (c_prime, d_prime) = (&mut self.c_prime, &mut self.d_prime);
            c_prime[1] = off / diag;
            d_prime[1] = next[1] / diag;
            for j in 2..g - 1 {
                let denom = diag - off * c_prime[j - 1];
                c_prime[j] = off / denom;
                d_prime[j] = (next[j] - off * d_prime[j - 1]) / denom;
            }
            next[g - 2] = d_prime[g - 2];
            for j in (1..g - 2).rev() {
                next[j] = d_prime[j] - c_prime[j] * next[j + 1];
            }
        }

        std::mem::swap(&mut self.x, &mut self.next);
        let step = self.step;
        self.step += 1;
        let max = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(max <= 1e6) {
            return Err(Error::SimulationDiverged {
                step,
                dt,
                detail: format!("path {} reached max |x| = {max:e}", self.path),
            });
        }
        Ok(())
    }
}

fn simulate_path(x0: &[f64], noise: &[Vec<f64>], cfg: &FdConfig, path: usize) -> Result<f64> {
    let mut p = FdPath::new(x0, noise, cfg, path);
    for _ in 0..cfg.steps {
        p.step()?;
    }
    Ok(p.cost())
}
