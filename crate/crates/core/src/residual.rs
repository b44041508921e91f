//! PDE residuals `F v(x)` for the heat and Burgers problems.
//!
//! All residuals share the form
//!
//! ```text
//! F v(x) = −γ v(x) + ⟨Dv(x), drift(x) + u⟩ + cost(x) + λ|u|² + ½ Tr[Q D²v(x)]
//! ```
//!
//! with `drift(x) = Ax` (heat) or `Ax + B(x)` (Burgers), `cost = |x − x̄|²`
//! (heat) or `|(−A)^{1/2}x|²` (Burgers). The derivative terms only see the
//! first `d` modes, where `Dv` lives; `⟨A Dv, x⟩ = Σ_{n≤d} −λ_n (Dv)_n x_n`
//! exactly because `A` is diagonal in the basis. Cost and Burgers terms read
//! every sampled mode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgno::{ActorNet, Critic, CriticJet};
use crate::par;
use crate::rng::NormalStream;
use crate::spectral::{burgers_b_modes, dirichlet_energy, eigenvalue, HVec};

/// Noise `W^Q` described by the columns `s_i = Q^{1/2} ξ_i`, truncated at `len` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    len: usize,
    columns: Vec<HVec>,
    /// `σ_i` when column `i` is `σ_i e_i` for every `i`.
    diagonal: Option<Vec<f64>>,
    /// `Σ_i s_i s_iᵀ`, `len × len`, row-major.
    covariance: Vec<f64>,
}

/// Named noise structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseId {
    /// `Q = 0`.
    #[serde(rename = "none")]
    None,
    /// `Q = diag(1/n²)`.
    #[serde(rename = "tcc")]
    TraceClass,
    /// Rank one: `Q^{1/2} e_1 = 1/√(2π) = Σ_{n odd} 2√2/(nπ) e_n`.
    #[serde(rename = "1d")]
    OneDimensional,
}

impl std::str::FromStr for NoiseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "det" => Ok(NoiseId::None),
            "tcc" => Ok(NoiseId::TraceClass),
            "1d" => Ok(NoiseId::OneDimensional),
            other => Err(Error::config("noise", format!("unknown noise `{other}`"))),
        }
    }
}

impl NoiseModel {
    pub fn none(len: usize) -> Self {
        Self::diagonal(vec![0.0; len]).with_columns_dropped()
    }

    fn with_columns_dropped(mut self) -> Self {
        self.columns.clear();
        self.diagonal = Some(Vec::new());
        self
    }

    /// Column `i` is `sigmas[i] e_{i+1}`.
    pub fn diagonal(sigmas: Vec<f64>) -> Self {
        let len = sigmas.len();
        let mut covariance = vec![0.0; len * len];
        let columns = sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| {
                covariance[i * len + i] = s * s;
                let mut c = HVec::zeros(len);
                c.coeffs_mut()[i] = *s;
                c
            })
            .collect();
        Self {
            len,
            columns,
            diagonal: Some(sigmas),
            covariance,
        }
    }

    /// `Q = diag(1/n²)`, i.e. `σ_n = 1/n`.
    pub fn trace_class(len: usize) -> Self {
        Self::diagonal((1..=len).map(|n| 1.0 / n as f64).collect())
    }

    /// Rank-one noise along the constant function `1/√(2π)`.
    pub fn one_dimensional(len: usize) -> Self {
        let column = HVec::from_coeffs(
            (1..=len)
                .map(|n| {
                    if n % 2 == 1 {
                        2.0 * 2f64.sqrt() / (n as f64 * PI)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        Self::from_columns(len, vec![column]).expect("column fits the truncation")
    }

    pub fn from_id(id: NoiseId, len: usize) -> Self {
        match id {
            NoiseId::None => Self::none(len),
            NoiseId::TraceClass => Self::trace_class(len),
            NoiseId::OneDimensional => Self::one_dimensional(len),
        }
    }

    pub fn from_columns(len: usize, columns: Vec<HVec>) -> Result<Self> {
        if let Some(c) = columns.iter().find(|c| c.len() > len) {
            return Err(Error::Shape(format!(
                "noise column with {} modes exceeds truncation {len}",
                c.len()
            )));
        }
        let columns: Vec<HVec> = columns.into_iter().map(|c| c.resized(len)).collect();
        let mut covariance = vec![0.0; len * len];
        for c in &columns {
            let c = c.coeffs();
            for i in 0..len {
                if c[i] == 0.0 {
                    continue;
                }
                for j in 0..len {
                    covariance[i * len + j] += c[i] * c[j];
                }
            }
        }
        Ok(Self {
            len,
            columns,
            diagonal: None,
            covariance,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// True when `Q = 0`.
    pub fn is_empty(&self) -> bool {
        self.columns.iter().all(|c| c.norm_sq() == 0.0)
    }

    pub fn columns(&self) -> &[HVec] {
        &self.columns
    }

    /// `Σ_i |s_i|²`.
    pub fn trace(&self) -> f64 {
        self.columns.iter().map(HVec::norm_sq).sum()
    }

    /// `(QQ)_{nm} = Σ_i ⟨s_i, e_n⟩⟨s_i, e_m⟩` for 1-based modes; zero outside the truncation.
    pub fn covariance(&self, n: usize, m: usize) -> f64 {
        if n == 0 || m == 0 || n > self.len || m > self.len {
            return 0.0;
        }
        self.covariance[(n - 1) * self.len + (m - 1)]
    }

    /// `σ_n² = Σ_i ⟨s_i, e_n⟩²` for `n = 1..=len`.
    pub fn mode_variances(&self) -> Vec<f64> {
        (1..=self.len).map(|n| self.covariance(n, n)).collect()
    }

    /// Top-left `d × d` block of the covariance, row-major.
    pub fn covariance_block(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.covariance(i + 1, j + 1);
            }
        }
        out
    }

    /// Fills `out` with `Σ_i s_i √dt ζ_i`.
    pub fn increment(&self, stream: &mut NormalStream, sqrt_dt: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.diagonal {
            Some(sigmas) => {
                for (o, s) in out.iter_mut().zip(sigmas) {
                    *o = s * sqrt_dt * stream.normal();
                }
            }
            None => {
                for c in &self.columns {
                    let z = sqrt_dt * stream.normal();
                    out.iter_mut().zip(c.coeffs()).for_each(|(o, s)| *o += s * z);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    HeatKolmogorov,
    HeatHjb,
    BurgersKolmogorov,
    BurgersHjb,
}

impl ProblemKind {
    pub fn is_burgers(self) -> bool {
        matches!(self, ProblemKind::BurgersKolmogorov | ProblemKind::BurgersHjb)
    }

    pub fn is_hjb(self) -> bool {
        matches!(self, ProblemKind::HeatHjb | ProblemKind::BurgersHjb)
    }
}

/// The five problem instances used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "heat-tcc")]
    HeatTcc,
    #[serde(rename = "heat-1d")]
    Heat1d,
    #[serde(rename = "heat-det")]
    HeatDet,
    #[serde(rename = "burgers-1d")]
    Burgers1d,
    #[serde(rename = "burgers-det")]
    BurgersDet,
}

impl Preset {
    pub fn noise(self) -> NoiseId {
        match self {
            Preset::HeatTcc => NoiseId::TraceClass,
            Preset::Heat1d | Preset::Burgers1d => NoiseId::OneDimensional,
            Preset::HeatDet | Preset::BurgersDet => NoiseId::None,
        }
    }

    pub fn is_burgers(self) -> bool {
        matches!(self, Preset::Burgers1d | Preset::BurgersDet)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::HeatTcc => "heat-tcc",
            Preset::Heat1d => "heat-1d",
            Preset::HeatDet => "heat-det",
            Preset::Burgers1d => "burgers-1d",
            Preset::BurgersDet => "burgers-det",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("problem", format!("unknown preset `{s}`")))
    }
}

/// One concrete residual definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    kind: ProblemKind,
    gamma: f64,
    lambda: f64,
    target: HVec,
    noise: NoiseModel,
    fixed_control: HVec,
}

impl ProblemSpec {
    /// Validates `γ > 0`, `λ > 0` and that `x̄` and `u` fit the truncation `noise.len()`.
    pub fn new(
        kind: ProblemKind,
        gamma: f64,
        lambda: f64,
        target: HVec,
        noise: NoiseModel,
        fixed_control: HVec,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("gamma", format!("discount must be positive, got {gamma}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("control weight must be positive, got {lambda}")));
        }
        let n = noise.len();
        if target.len() > n {
            return Err(Error::Shape(format!("target has {} modes, truncation is {n}", target.len())));
        }
        if fixed_control.len() > n {
            return Err(Error::Shape(format!(
                "fixed control has {} modes, truncation is {n}",
                fixed_control.len()
            )));
        }
        Ok(Self {
            kind,
            gamma,
            lambda,
            target: target.resized(n),
            noise,
            fixed_control: fixed_control.resized(n),
        })
    }

    /// `γ = λ = 1`, `x̄ = 0`, `u = 0`, Kolmogorov form.
    pub fn preset(preset: Preset, n: usize) -> Self {
        let kind = if preset.is_burgers() {
            ProblemKind::BurgersKolmogorov
        } else {
            ProblemKind::HeatKolmogorov
        };
        Self::new(
            kind,
            1.0,
            1.0,
            HVec::zeros(n),
            NoiseModel::from_id(preset.noise(), n),
            HVec::zeros(n),
        )
        .expect("preset parameters are valid")
    }

    /// Same dynamics and cost with the infimum over controls.
    pub fn into_hjb(mut self) -> Self {
        self.kind = if self.kind.is_burgers() {
            ProblemKind::BurgersHjb
        } else {
            ProblemKind::HeatHjb
        };
        self
    }

    pub fn with_gamma_lambda(self, gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(self.kind, gamma, lambda, self.target, self.noise, self.fixed_control)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn target(&self) -> &HVec {
        &self.target
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn fixed_control(&self) -> &HVec {
        &self.fixed_control
    }

    /// Sample truncation `N`.
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.len() == 0
    }

    /// Running cost without the control part.
    pub fn state_cost(&self, x: &HVec) -> f64 {
        if self.kind.is_burgers() {
            dirichlet_energy(x)
        } else {
            let len = x.len().max(self.target.len());
            (1..=len).map(|n| (x.coeff(n) - self.target.coeff(n)).powi(2)).sum()
        }
    }

    /// First `d` coefficients of the uncontrolled drift `Ax (+ B(x))`.
    pub fn drift_head(&self, x: &HVec, d: usize) -> Vec<f64> {
        let mut drift: Vec<f64> = (1..=d).map(|n| -eigenvalue(n) * x.coeff(n)).collect();
        if self.kind.is_burgers() {
            let b = burgers_b_modes(x, d);
            drift.iter_mut().zip(b.coeffs()).for_each(|(a, b)| *a += b);
        }
        drift
    }
}

/// How the control enters the residual.
#[derive(Debug, Clone, Copy)]
pub enum ControlInput<'a> {
    /// The spec's fixed control (Kolmogorov problems).
    Fixed,
    /// A control value at this point, e.g. from an actor.
    Given(&'a HVec),
    /// `inf_u {⟨Dv, u⟩ + λ|u|²} = −|Dv|²/(4λ)`.
    Optimal,
}

/// `½ Σ_i ⟨D²v s_i, s_i⟩`, computed as `½ ⟨D²v, Σ_i P_d s_i (P_d s_i)ᵀ⟩_F`.
pub fn trace_term(jet: &CriticJet, noise: &NoiseModel) -> f64 {
    let d = jet.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = noise.covariance(i + 1, j + 1);
            if c != 0.0 {
                acc += jet.hess[i * d + j] * c;
            }
        }
    }
    0.5 * acc
}

/// Control contribution `⟨Dv, u⟩ + λ|u|²` with `u` supported on its own length.
fn control_terms(grad: &[f64], u: &HVec, lambda: f64) -> f64 {
    let pairing: f64 = grad.iter().zip(u.coeffs()).map(|(g, u)| g * u).sum();
    pairing + lambda * u.norm_sq()
}

/// The residual for any problem kind and control mode.
pub fn residual(jet: &CriticJet, x: &HVec, spec: &ProblemSpec, control: ControlInput<'_>) -> Result<f64> {
    let d = jet.dim();
    if x.len() < d {
        return Err(Error::Shape(format!(
            "point has {} modes but the critic reads {d}",
            x.len()
        )));
    }
    let drift = spec.drift_head(x, d);
    let transport: f64 = jet.grad.iter().zip(&drift).map(|(g, a)| g * a).sum();
    let control_part = match control {
        ControlInput::Fixed => control_terms(&jet.grad, spec.fixed_control(), spec.lambda),
        ControlInput::Given(u) => control_terms(&jet.grad, u, spec.lambda),
        ControlInput::Optimal => {
            -jet.grad.iter().map(|g| g * g).sum::<f64>() / (4.0 * spec.lambda)
        }
    };
    Ok(-spec.gamma * jet.value
        + transport
        + control_part
        + spec.state_cost(x)
        + trace_term(jet, spec.noise()))
}

fn expect_kind(spec: &ProblemSpec, kinds: &[ProblemKind]) -> Result<()> {
    if kinds.contains(&spec.kind) {
        Ok(())
    } else {
        Err(Error::config(
            "problem",
            format!("residual does not apply to {:?}", spec.kind),
        ))
    }
}

/// `−γv + ⟨A Dv, x⟩ + ⟨Dv, u⟩ + |x − x̄|² + λ|u|² + ½Tr[Q D²v]` with the spec's fixed `u`.
pub fn residual_heat_kolmogorov(jet: &CriticJet, x: &HVec, spec: &ProblemSpec) -> Result<f64> {
    expect_kind(spec, &[ProblemKind::HeatKolmogorov])?;
    residual(jet, x, spec, ControlInput::Fixed)
}

/// The HJB Hamiltonian `F^{cv}(v, u)(x)` at a given control value.
pub fn residual_heat_hjb(jet: &CriticJet, u: &HVec, x: &HVec, spec: &ProblemSpec) -> Result<f64> {
    expect_kind(spec, &[ProblemKind::HeatHjb])?;
    residual(jet, x, spec, ControlInput::Given(u))
}

/// The HJB residual with the infimum over controls taken in closed form.
pub fn residual_heat_hjb_closed(jet: &CriticJet, x: &HVec, spec: &ProblemSpec) -> Result<f64> {
    expect_kind(spec, &[ProblemKind::HeatHjb])?;
    residual(jet, x, spec, ControlInput::Optimal)
}

/// `−γv + ⟨Dv, Ax + B(x)⟩ + |(−A)^{1/2}x|² + ½Tr[Q D²v]` (plus the fixed-control terms).
pub fn residual_burgers_kolmogorov(jet: &CriticJet, x: &HVec, spec: &ProblemSpec) -> Result<f64> {
    expect_kind(spec, &[ProblemKind::BurgersKolmogorov])?;
    residual(jet, x, spec, ControlInput::Fixed)
}

/// Per-sample residuals. HJB problems use the actor when one is given and the
/// closed-form infimum otherwise.
pub fn residual_batch<C: Critic + ?Sized>(
    critic: &C,
    actor: Option<&ActorNet>,
    spec: &ProblemSpec,
    samples: &[HVec],
) -> Result<Vec<f64>> {
    let results = par::map_slice(samples, |x| {
        let jet = critic.jet(x)?;
        if spec.kind().is_hjb() {
            match actor {
                Some(a) => {
                    let u = a.eval(x)?;
                    residual(&jet, x, spec, ControlInput::Given(&u))
                }
                None => residual(&jet, x, spec, ControlInput::Optimal),
            }
        } else {
            residual(&jet, x, spec, ControlInput::Fixed)
        }
    });
    results.into_iter().collect()
}
