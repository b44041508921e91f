//! Residual-minimizing training: the DHGM and QHPDE critic gradients, the
//! actor gradient, an Adam optimizer and the training loops.
//!
//! Every gradient routine accumulates, per sample, the parameter derivative of
//! the loss it minimizes (`F·∂F` for DHGM, `F·∂(−v)` for QHPDE, `∂F^{cv}` for
//! the actor) and hands the sum to [`training_direction`], which is the only
//! place a sign is applied. The returned direction is *added* to the
//! parameters after optimizer scaling.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgno::{ActorNet, CriticNet, HessianPairing, Hidden, ParamVector};
use crate::measures::{GaussianMeasure, MeasureId};
use crate::par;
use crate::residual::{residual_batch, Preset, ProblemKind, ProblemSpec};
use crate::rng::{TAG_ACTOR, TAG_CRITIC, TAG_EVAL};
use crate::spectral::HVec;

/// Samples per partial sum; partial sums are added in index order, so the
/// result does not depend on the thread count.
const CHUNK: usize = 16;

/// Residual magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientKind {
    Dhgm,
    Qhpde,
}

impl std::str::FromStr for GradientKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dhgm" => Ok(Self::Dhgm),
            "qhpde" => Ok(Self::Qhpde),
            other => Err(Error::config("gradient_kind", format!("unknown gradient kind `{other}`"))),
        }
    }
}

/// Learning rate `scale / (20 + t^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub scale: f64,
    pub exponent: f64,
}

impl Schedule {
    pub const DHGM_CRITIC: Self = Self { scale: 5.0, exponent: 0.5 };
    pub const DHGM_ACTOR: Self = Self { scale: 5.0, exponent: 0.75 };
    pub const QHPDE_CRITIC: Self = Self { scale: 0.05, exponent: 0.5 };
    pub const QHPDE_ACTOR: Self = Self { scale: 0.05, exponent: 0.75 };

    pub fn critic_default(kind: GradientKind) -> Self {
        match kind {
            GradientKind::Dhgm => Self::DHGM_CRITIC,
            GradientKind::Qhpde => Self::QHPDE_CRITIC,
        }
    }

    pub fn actor_default(kind: GradientKind) -> Self {
        match kind {
            GradientKind::Dhgm => Self::DHGM_ACTOR,
            GradientKind::Qhpde => Self::QHPDE_ACTOR,
        }
    }

    pub fn rate(&self, t: u64) -> f64 {
        lr(t, self)
    }

    fn validate(&self, key: &str) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(key, "scale must be positive"));
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(Error::config(key, "exponent must be non-negative"));
        }
        Ok(())
    }
}

pub fn lr(t: u64, schedule: &Schedule) -> f64 {
    schedule.scale / (20.0 + (t as f64).powf(schedule.exponent))
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.first.len() as u64).to_le_bytes());
        for v in self.first.iter().chain(&self.second) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read(bytes: &mut &[u8]) -> Result<Self> {
        let step = take_u64(bytes)?;
        let len = take_u64(bytes)? as usize;
        if bytes.len() < 16 * len {
            return Err(Error::Format("optimizer state truncated".into()));
        }
        let mut values = (0..2 * len).map(|_| take_u64(bytes).map(f64::from_bits));
        let first = values.by_ref().take(len).collect::<Result<Vec<_>>>()?;
        let second = values.collect::<Result<Vec<_>>>()?;
        Ok(Self {
            first,
            second,
            step,
            ..Self::new(0)
        })
    }
}

fn take_u64(bytes: &mut &[u8]) -> Result<u64> {
    if bytes.len() < 8 {
        return Err(Error::Format("optimizer state truncated".into()));
    }
    let (head, rest) = bytes.split_at(8);
    *bytes = rest;
    Ok(u64::from_le_bytes(head.try_into().expect("8 bytes")))
}

/// Bias-corrected Adam step `θ += rate · m̂ / (√v̂ + ε)` along `direction`.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    direction: &ParamVector,
    rate: f64,
    iteration: u64,
) -> Result<()> {
    if state.len() != params.len() || direction.len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer holds {}, parameters {}, direction {}",
            state.len(),
            params.len(),
            direction.len()
        )));
    }
    if let Some(i) = direction.0.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            iteration,
            detail: format!("non-finite gradient entry {i}"),
        });
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&direction.0)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p += rate * (*m / c1) / ((*v / c2).sqrt() + state.epsilon);
    }
    Ok(())
}

/// `G = −(1/M) Σ_m g_m`, the vector added to the parameters.
fn training_direction(sum: Vec<f64>, count: usize) -> ParamVector {
    let c = -1.0 / count as f64;
    ParamVector(sum.into_iter().map(|s| c * s).collect())
}

fn sum_over_batch<F>(len: usize, batch: &[HVec], per_sample: F) -> Result<(Vec<f64>, BatchStats)>
where
    F: Fn(&HVec, &mut [f64]) -> Result<f64> + Sync + Send,
{
    let chunks = batch.len().div_ceil(CHUNK);
    let partials = par::map_indexed(chunks, |c| -> Result<(Vec<f64>, BatchStats)> {
        let mut acc = vec![0.0; len];
        let mut stats = BatchStats::default();
        for x in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
            stats.push(per_sample(x, &mut acc)?);
        }
        Ok((acc, stats))
    });
    let mut total = vec![0.0; len];
    let mut stats = BatchStats::default();
    for part in partials {
        let (acc, s) = part?;
        total.iter_mut().zip(&acc).for_each(|(t, a)| *t += a);
        stats.merge(&s);
    }
    Ok((total, stats))
}

/// Residual statistics gathered while assembling a gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub count: usize,
    pub sum_sq: f64,
    pub max_abs: f64,
}

impl BatchStats {
    fn push(&mut self, f: f64) {
        self.count += 1;
        self.sum_sq += f * f;
        // NaN must survive the max
        self.max_abs = if f.is_nan() { f64::NAN } else { self.max_abs.max(f.abs()) };
    }

    fn merge(&mut self, other: &BatchStats) {
        self.count += other.count;
        self.sum_sq += other.sum_sq;
        self.max_abs = if other.max_abs.is_nan() {
            f64::NAN
        } else {
            self.max_abs.max(other.max_abs)
        };
    }

    pub fn rms(&self) -> f64 {
        (self.sum_sq / self.count.max(1) as f64).sqrt()
    }
}

/// What the critic sees as the control in its residual.
#[derive(Clone, Copy)]
enum CriticControl<'a> {
    Fixed,
    Actor(&'a ActorNet),
    Optimal,
}

impl<'a> CriticControl<'a> {
    fn for_spec(spec: &ProblemSpec, actor: Option<&'a ActorNet>) -> Self {
        match (spec.kind().is_hjb(), actor) {
            (false, _) => Self::Fixed,
            (true, Some(a)) => Self::Actor(a),
            (true, None) => Self::Optimal,
        }
    }
}

/// Per-iteration constants of the fused residual pass.
struct CriticPass<'a> {
    net: &'a CriticNet,
    spec: &'a ProblemSpec,
    control: CriticControl<'a>,
    pairing: HessianPairing,
}

impl<'a> CriticPass<'a> {
    fn new(net: &'a CriticNet, spec: &'a ProblemSpec, control: CriticControl<'a>) -> Result<Self> {
        let d = net.d();
        if d > spec.len() {
            return Err(Error::Shape(format!(
                "critic reads {d} modes but the problem is truncated at {}",
                spec.len()
            )));
        }
        if let CriticControl::Actor(a) = control {
            if a.d() > spec.len() || a.p() > spec.len() {
                return Err(Error::Shape("actor dimensions exceed the problem truncation".into()));
            }
        }
        // ½ ⟨D²v, C_d⟩ with C = Σ s_i s_iᵀ
        let s: Vec<f64> = spec
            .noise()
            .covariance_block(d)
            .into_iter()
            .map(|c| 0.5 * c)
            .collect();
        Ok(Self {
            pairing: net.hessian_pairing(&s)?,
            net,
            spec,
            control,
        })
    }

    /// `F v(x)` and the frozen vector `a` with `∂F = −γ∂v + ∂⟨a, Dv⟩ + ∂⟨S, D²v⟩`.
    fn residual(&self, h: &Hidden, x: &HVec) -> Result<(f64, Vec<f64>)> {
        let spec = self.spec;
        let d = self.net.d();
        let v = self.net.value_from(h);
        let grad = self.net.grad_from(h);
        let mut a = spec.drift_head(x, d);
        let transport: f64 = grad.iter().zip(&a).map(|(g, a)| g * a).sum();
        let lambda = spec.lambda();
        let control_part = match self.control {
            CriticControl::Fixed => add_control(&mut a, &grad, spec.fixed_control(), lambda),
            CriticControl::Actor(actor) => add_control(&mut a, &grad, &actor.eval(x)?, lambda),
            CriticControl::Optimal => {
                a.iter_mut().zip(&grad).for_each(|(a, g)| *a -= g / (2.0 * lambda));
                -grad.iter().map(|g| g * g).sum::<f64>() / (4.0 * lambda)
            }
        };
        let trace = self.net.hessian_pairing_value(h, &self.pairing);
        let f = -spec.gamma() * v + transport + control_part + spec.state_cost(x) + trace;
        Ok((f, a))
    }
}

fn add_control(a: &mut [f64], grad: &[f64], u: &HVec, lambda: f64) -> f64 {
    a.iter_mut().zip(u.coeffs()).for_each(|(a, u)| *a += u);
    grad.iter().zip(u.coeffs()).map(|(g, u)| g * u).sum::<f64>() + lambda * u.norm_sq()
}

fn check_batch(batch: &[HVec]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::config("batch", "batch must be nonempty"))
    } else {
        Ok(())
    }
}

fn dhgm_sum(net: &CriticNet, actor: Option<&ActorNet>, spec: &ProblemSpec, batch: &[HVec]) -> Result<(Vec<f64>, BatchStats)> {
    check_batch(batch)?;
    let pass = CriticPass::new(net, spec, CriticControl::for_spec(spec, actor))?;
    let gamma = spec.gamma();
    sum_over_batch(net.params().len(), batch, |x, out| {
        let jpg = net.param_grad_jet(x)?;
        let (f, a) = pass.residual(jpg.hidden(), x)?;
        // F·∂F
        net.accumulate_value_grad(jpg.hidden(), &x.coeffs()[..net.d()], -gamma * f, out);
        jpg.accumulate_grad_pairing(&a, f, out);
        jpg.accumulate_hess_pairing(&pass.pairing, f, out);
        Ok(f)
    })
}

fn qhpde_sum(net: &CriticNet, actor: Option<&ActorNet>, spec: &ProblemSpec, batch: &[HVec]) -> Result<(Vec<f64>, BatchStats)> {
    check_batch(batch)?;
    let pass = CriticPass::new(net, spec, CriticControl::for_spec(spec, actor))?;
    sum_over_batch(net.params().len(), batch, |x, out| {
        let h = net.hidden(x)?;
        let (f, _) = pass.residual(&h, x)?;
        // F·∂(−v): first-order parameter derivatives only
        net.accumulate_value_grad(&h, &x.coeffs()[..net.d()], -f, out);
        Ok(f)
    })
}

fn actor_sum(critic: &CriticNet, actor: &ActorNet, spec: &ProblemSpec, batch: &[HVec]) -> Result<(Vec<f64>, BatchStats)> {
    check_batch(batch)?;
    if !spec.kind().is_hjb() {
        return Err(Error::config(
            "problem",
            format!("the actor step needs an HJB problem, got {:?}", spec.kind()),
        ));
    }
    if actor.d() > spec.len() || actor.p() > spec.len() || critic.d() > spec.len() {
        return Err(Error::Shape("network dimensions exceed the problem truncation".into()));
    }
    let lambda = spec.lambda();
    sum_over_batch(actor.params().len(), batch, |x, out| {
        let grad = critic.grad_from(&critic.hidden(x)?);
        let u = actor.eval(x)?;
        // ∂_φ F^{cv} = ∂_φ ⟨P_p Dv + 2λu, u⟩ with the bracket frozen
        let w: Vec<f64> = u
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, uj)| grad.get(j).copied().unwrap_or(0.0) + 2.0 * lambda * uj)
            .collect();
        actor.accumulate_param_grad(x, &w, 1.0, out)?;
        let hamiltonian: f64 = grad.iter().zip(u.coeffs()).map(|(g, u)| g * u).sum::<f64>() + lambda * u.norm_sq();
        Ok(hamiltonian)
    })
}

/// `−(1/M) Σ F v(x_m) ∇_θ F v(x_m)`. HJB problems use `actor` for the control
/// when given and the closed-form infimum otherwise.
pub fn grad_dhgm(net: &CriticNet, actor: Option<&ActorNet>, spec: &ProblemSpec, batch: &[HVec]) -> Result<ParamVector> {
    let (sum, _) = dhgm_sum(net, actor, spec, batch)?;
    Ok(training_direction(sum, batch.len()))
}

/// `−(1/M) Σ F v(x_m) ∇_θ(−v(x_m))`.
pub fn grad_qhpde(net: &CriticNet, actor: Option<&ActorNet>, spec: &ProblemSpec, batch: &[HVec]) -> Result<ParamVector> {
    let (sum, _) = qhpde_sum(net, actor, spec, batch)?;
    Ok(training_direction(sum, batch.len()))
}

/// `−(1/M) Σ ∇_φ F^{cv}(v, u_φ)(x_m)`.
pub fn grad_actor(critic: &CriticNet, actor: &ActorNet, spec: &ProblemSpec, batch: &[HVec]) -> Result<ParamVector> {
    let (sum, _) = actor_sum(critic, actor, spec, batch)?;
    Ok(training_direction(sum, batch.len()))
}

fn default_log_every() -> u64 {
    1000
}

fn default_eval_batch() -> usize {
    1024
}

fn default_one() -> f64 {
    1.0
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub problem: Preset,
    /// Train against the HJB residual rather than the fixed-control one.
    #[serde(default)]
    pub hjb: bool,
    pub gradient_kind: GradientKind,
    /// `T`.
    pub iterations: u64,
    /// `M`.
    pub batch: usize,
    /// `N`, the truncation of samples and operators.
    pub modes: usize,
    /// Encoder dimension `d`.
    pub d: usize,
    /// Hidden width `W`.
    pub width: usize,
    /// Actor output modes `p`.
    #[serde(default)]
    pub actor_modes: usize,
    #[serde(default)]
    pub actor_width: usize,
    pub critic_schedule: Schedule,
    pub actor_schedule: Schedule,
    pub seed: u64,
    pub measure: MeasureId,
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_one")]
    pub lambda: f64,
    /// Write a checkpoint every this many iterations; 0 disables.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
    /// Keep the actor at its initial value (the critic still sees it).
    #[serde(default)]
    pub freeze_actor: bool,
}

impl TrainConfig {
    /// The QHPDE/DHGM defaults for `preset` at the given sizes.
    pub fn new(problem: Preset, gradient_kind: GradientKind, d: usize, width: usize, modes: usize) -> Self {
        Self {
            problem,
            hjb: false,
            gradient_kind,
            iterations: 1000,
            batch: 256,
            modes,
            d,
            width,
            actor_modes: d,
            actor_width: width,
            critic_schedule: Schedule::critic_default(gradient_kind),
            actor_schedule: Schedule::actor_default(gradient_kind),
            seed: 0,
            measure: default_measure(problem),
            gamma: 1.0,
            lambda: 1.0,
            checkpoint_every: 0,
            log_every: default_log_every(),
            eval_batch: default_eval_batch(),
            freeze_actor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch", "must be positive"));
        }
        if self.modes == 0 {
            return Err(Error::config("modes", "must be positive"));
        }
        if self.d == 0 || self.d > self.modes {
            return Err(Error::config("d", format!("must lie in 1..={}", self.modes)));
        }
        if self.width == 0 {
            return Err(Error::config("width", "must be positive"));
        }
        if self.hjb && (self.actor_modes > self.modes) {
            return Err(Error::config("actor_modes", format!("must be at most {}", self.modes)));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be positive"));
        }
        if self.eval_batch == 0 {
            return Err(Error::config("eval_batch", "must be positive"));
        }
        self.critic_schedule.validate("critic_schedule")?;
        self.actor_schedule.validate("actor_schedule")?;
        if self.measure == MeasureId::Custom {
            return Err(Error::config("measure", "custom measures need a variance table"));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let spec = ProblemSpec::preset(self.problem, self.modes).with_gamma_lambda(self.gamma, self.lambda)?;
        Ok(if self.hjb { spec.into_hjb() } else { spec })
    }

    pub fn measure(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::from_id(self.measure, self.modes)
    }

    /// The fixed evaluation batch used for logging.
    pub fn eval_samples(&self) -> Result<Vec<HVec>> {
        let mu = self.measure()?;
        Ok((0..self.eval_batch)
            .map(|k| mu.draw_at(self.seed, TAG_EVAL, 0, k as u64))
            .collect())
    }
}

/// The sampling measure used for each preset's experiments.
pub fn default_measure(problem: Preset) -> MeasureId {
    match problem {
        Preset::HeatTcc | Preset::HeatDet => MeasureId::Tcc,
        Preset::Heat1d => MeasureId::Wn,
        Preset::Burgers1d | Preset::BurgersDet => MeasureId::Burgers4,
    }
}

/// Networks, optimizer moments and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub iteration: u64,
    pub critic: CriticNet,
    pub critic_opt: OptimizerState,
    pub actor: Option<ActorNet>,
    pub actor_opt: Option<OptimizerState>,
}

const OPT_MAGIC: &[u8; 4] = b"HGOP";

impl TrainState {
    pub fn initial(config: &TrainConfig, with_actor: bool) -> Self {
        let critic = CriticNet::init(config.d, config.width, config.seed);
        let critic_opt = OptimizerState::new(critic.params().len());
        let actor = with_actor.then(|| {
            ActorNet::init(
                config.d,
                config.actor_modes,
                config.actor_width.max(1),
                config.seed,
            )
        });
        let actor_opt = actor.as_ref().map(|a| OptimizerState::new(a.params().len()));
        Self {
            iteration: 0,
            critic,
            critic_opt,
            actor,
            actor_opt,
        }
    }

    /// Optimizer sidecar: magic, iteration, then the critic and (optional) actor moments.
    pub fn optimizer_bytes(&self) -> Vec<u8> {
        let mut out = OPT_MAGIC.to_vec();
        out.extend_from_slice(&self.iteration.to_le_bytes());
        self.critic_opt.write(&mut out);
        out.push(self.actor_opt.is_some() as u8);
        if let Some(opt) = &self.actor_opt {
            opt.write(&mut out);
        }
        out
    }

    /// Writes `<stem>.hgno`, `<stem>.actor.hgno` (when present) and `<stem>.opt`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.hgno")), self.critic.to_bytes())?;
        if let Some(actor) = &self.actor {
            fs::write(dir.join(format!("{stem}.actor.hgno")), actor.to_bytes())?;
        }
        fs::write(dir.join(format!("{stem}.opt")), self.optimizer_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let critic = CriticNet::from_bytes(&fs::read(dir.join(format!("{stem}.hgno")))?)?;
        let bytes = fs::read(dir.join(format!("{stem}.opt")))?;
        if bytes.len() < 4 || &bytes[..4] != OPT_MAGIC {
            return Err(Error::Format("not an optimizer sidecar".into()));
        }
        let mut rest = &bytes[4..];
        let iteration = take_u64(&mut rest)?;
        let critic_opt = OptimizerState::read(&mut rest)?;
        let has_actor = match rest.split_first() {
            Some((flag, tail)) => {
                rest = tail;
                *flag != 0
            }
            None => return Err(Error::Format("optimizer state truncated".into())),
        };
        let (actor, actor_opt) = if has_actor {
            let actor = ActorNet::from_bytes(&fs::read(dir.join(format!("{stem}.actor.hgno")))?)?;
            (Some(actor), Some(OptimizerState::read(&mut rest)?))
        } else {
            (None, None)
        };
        if critic_opt.len() != critic.params().len()
            || actor.as_ref().map(|a| a.params().len()) != actor_opt.as_ref().map(OptimizerState::len)
        {
            return Err(Error::Format("optimizer state does not match the networks".into()));
        }
        Ok(Self {
            iteration,
            critic,
            critic_opt,
            actor,
            actor_opt,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub wallclock_s: f64,
    pub lr: f64,
    pub residual_l2_estimate: f64,
    pub grad_norm: f64,
    pub probe_values: Vec<f64>,
    /// Mean `|u − u*|` on the evaluation batch, for actor-critic runs on the heat problem.
    pub actor_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub probe_names: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,wallclock_s,lr,residual_l2_estimate,grad_norm");
        let with_actor = self.rows.iter().any(|r| r.actor_error.is_some());
        if with_actor {
            out.push_str(",actor_error");
        }
        for name in &self.probe_names {
            out.push_str(&format!(",value_{name}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.3},{:e},{:e},{:e}",
                r.iteration, r.wallclock_s, r.lr, r.residual_l2_estimate, r.grad_norm
            ));
            if with_actor {
                out.push_str(&format!(",{:e}", r.actor_error.unwrap_or(f64::NAN)));
            }
            for v in &r.probe_values {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs Algorithm-1 (critic only) or Algorithm-2 (actor-critic) iterations.
pub struct Trainer {
    config: TrainConfig,
    spec: ProblemSpec,
    measure: GaussianMeasure,
    eval_samples: Vec<HVec>,
    probes: Vec<(String, HVec)>,
    state: TrainState,
    log: TrainLog,
    last_grad_norm: f64,
    started: Instant,
}

impl Trainer {
    pub fn critic(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = TrainState::initial(&config, false);
        Self::with_state(config, state)
    }

    pub fn actor_critic(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if !config.hjb || config.problem.is_burgers() {
            return Err(Error::config("problem", "actor-critic training needs a heat HJB problem"));
        }
        if config.actor_modes == 0 || config.actor_width == 0 {
            return Err(Error::config("actor_modes", "actor dimensions must be positive"));
        }
        let state = TrainState::initial(&config, true);
        Self::with_state(config, state)
    }

    /// Continues from a saved state; batches are keyed by iteration, so this
    /// reproduces an uninterrupted run.
    pub fn with_state(config: TrainConfig, state: TrainState) -> Result<Self> {
        config.validate()?;
        if state.critic.d() != config.d || state.critic.width() != config.width {
            return Err(Error::Shape("checkpoint critic does not match the configuration".into()));
        }
        if state.actor_opt.is_some() != state.actor.is_some() {
            return Err(Error::Shape("actor and optimizer state must come together".into()));
        }
        Ok(Self {
            spec: config.spec()?,
            measure: config.measure()?,
            eval_samples: config.eval_samples()?,
            probes: Vec::new(),
            log: TrainLog::default(),
            last_grad_norm: 0.0,
            started: Instant::now(),
            config,
            state,
        })
    }

    /// Critic values at these points are logged alongside the residual.
    pub fn set_probes(&mut self, probes: Vec<(String, HVec)>) {
        self.log.probe_names = probes.iter().map(|(n, _)| n.clone()).collect();
        self.probes = probes;
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn into_parts(self) -> (TrainState, TrainLog) {
        (self.state, self.log)
    }

    fn batch(&self, tag: u64, iteration: u64) -> Vec<HVec> {
        let mu = &self.measure;
        let seed = self.config.seed;
        par::map_indexed(self.config.batch, |m| mu.draw_at(seed, tag, iteration, m as u64))
    }

    fn check_stats(&self, stats: &BatchStats, iteration: u64) -> Result<()> {
        if !(stats.max_abs <= DIVERGENCE_LIMIT) {
            return Err(Error::TrainingDiverged {
                iteration,
                detail: format!("residual magnitude {:e}", stats.max_abs),
            });
        }
        Ok(())
    }

    /// One iteration: critic step, then (actor-critic) actor step on a fresh batch.
    pub fn step(&mut self) -> Result<()> {
        let t = self.state.iteration;
        let batch = self.batch(TAG_CRITIC, t);
        let actor = self.state.actor.as_ref();
        let (sum, stats) = match self.config.gradient_kind {
            GradientKind::Dhgm => dhgm_sum(&self.state.critic, actor, &self.spec, &batch)?,
            GradientKind::Qhpde => qhpde_sum(&self.state.critic, actor, &self.spec, &batch)?,
        };
        self.check_stats(&stats, t)?;
        let direction = training_direction(sum, batch.len());
        self.last_grad_norm = direction.norm();
        optimizer_step(
            &mut self.state.critic_opt,
            self.state.critic.params_mut(),
            &direction,
            lr(t, &self.config.critic_schedule),
            t,
        )?;
        check_params(self.state.critic.params(), t, "critic")?;

        if let (Some(actor), Some(opt)) = (self.state.actor.as_mut(), self.state.actor_opt.as_mut()) {
            if !self.config.freeze_actor {
                let batch = {
                    let mu = &self.measure;
                    let seed = self.config.seed;
                    par::map_indexed(self.config.batch, |m| mu.draw_at(seed, TAG_ACTOR, t, m as u64))
                };
                let (sum, _) = actor_sum(&self.state.critic, actor, &self.spec, &batch)?;
                let direction = training_direction(sum, batch.len());
                optimizer_step(opt, actor.params_mut(), &direction, lr(t, &self.config.actor_schedule), t)?;
                check_params(actor.params(), t, "actor")?;
            }
        }
        self.state.iteration += 1;
        Ok(())
    }

    /// Residual RMS on the evaluation batch plus probe values.
    pub fn log_now(&mut self) -> Result<()> {
        let t = self.state.iteration;
        let residuals = residual_batch(
            &self.state.critic,
            self.state.actor.as_ref(),
            &self.spec,
            &self.eval_samples,
        )?;
        let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
        let probe_values = self
            .probes
            .iter()
            .map(|(_, x)| self.state.critic.eval(&x.resized(self.config.modes)))
            .collect::<Result<Vec<f64>>>()?;
        let actor_error = match (&self.state.actor, self.spec.kind()) {
            (Some(actor), ProblemKind::HeatHjb) => Some(actor_error(actor, &self.spec, &self.eval_samples)?),
            _ => None,
        };
        self.log.rows.push(LogRow {
            iteration: t,
            wallclock_s: self.started.elapsed().as_secs_f64(),
            lr: lr(t, &self.config.critic_schedule),
            residual_l2_estimate: rms,
            grad_norm: self.last_grad_norm,
            probe_values,
            actor_error,
        });
        Ok(())
    }

    /// Iterates up to `config.iterations`, logging every `log_every` iterations
    /// and at the end, and handing checkpoints to `on_checkpoint`.
    pub fn run<F>(&mut self, mut on_checkpoint: F) -> Result<()>
    where
        F: FnMut(&TrainState) -> Result<()>,
    {
        let total = self.config.iterations;
        while self.state.iteration < total {
            if self.state.iteration % self.config.log_every == 0 {
                self.log_now()?;
            }
            self.step()?;
            let t = self.state.iteration;
            if self.config.checkpoint_every > 0 && t % self.config.checkpoint_every == 0 && t < total {
                on_checkpoint(&self.state)?;
            }
        }
        if self.log.rows.last().map(|r| r.iteration) != Some(self.state.iteration) {
            self.log_now()?;
        }
        Ok(())
    }
}

fn check_params(params: &[f64], iteration: u64, which: &str) -> Result<()> {
    match params.iter().position(|p| !p.is_finite()) {
        Some(i) => Err(Error::TrainingDiverged {
            iteration,
            detail: format!("{which} parameter {i} is not finite"),
        }),
        None => Ok(()),
    }
}

/// Mean `|u(x) − u*(x)|` over `samples` against the closed-form feedback.
fn actor_error(actor: &ActorNet, spec: &ProblemSpec, samples: &[HVec]) -> Result<f64> {
    let sol = crate::oracle::lq_solve(
        spec.gamma(),
        spec.lambda(),
        spec.target(),
        &spec.noise().mode_variances(),
        spec.len(),
    )?;
    let errs = par::map_slice(samples, |x| -> Result<f64> {
        let u = actor.eval(x)?.resized(spec.len());
        Ok(u.sub(&sol.control(x)).norm())
    });
    let errs = errs.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Algorithm 1: `T` iterations of sample → gradient → update.
pub fn train_critic(config: &TrainConfig) -> Result<(CriticNet, TrainLog)> {
    let mut trainer = Trainer::critic(config.clone())?;
    trainer.run(|_| Ok(()))?;
    let (state, log) = trainer.into_parts();
    Ok((state.critic, log))
}

/// Algorithm 2: alternating critic and actor steps.
pub fn train_actor_critic(config: &TrainConfig) -> Result<(CriticNet, ActorNet, TrainLog)> {
    let mut trainer = Trainer::actor_critic(config.clone())?;
    trainer.run(|_| Ok(()))?;
    let (state, log) = trainer.into_parts();
    let actor = state.actor.expect("actor-critic state has an actor");
    Ok((state.critic, actor, log))
}
